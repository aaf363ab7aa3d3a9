//! Seeded, deterministic initial data.

use crate::error::CliError;
use chve_core::field::Field;
use chve_core::mesh::{Mesh, SpaceKind};
use chve_core::rng::SplitMix64;
use chve_core::tensor::Mat2;

/// Random nodal phase field. With `centered` the nodal values are
/// mean + amplitude*(2u - 1) with u uniform on [0,1] (range mean +/-
/// amplitude, expected value mean); without it they are mean + amplitude*u.
/// Deterministic per seed; node order is the mesh vertex order.
pub fn random_phase_initial(
    mesh: &Mesh,
    mean: f64,
    amplitude: f64,
    seed: u64,
    centered: bool,
) -> Field {
    let mut rng = SplitMix64::new(seed);
    let mut phi = Field::zeros(SpaceKind::P1Scalar, mesh);
    for v in phi.values.iter_mut() {
        let u = rng.next_f64();
        *v = if centered {
            mean + amplitude * (2.0 * u - 1.0)
        } else {
            mean + amplitude * u
        };
    }
    phi
}

pub fn validate_circles(centers: &[[f64; 2]], radius: f64) -> Result<(), CliError> {
    if radius < 0.0 {
        return Err(CliError::Config(format!("radius must be >= 0, got {radius}")));
    }
    for (i, c) in centers.iter().enumerate() {
        if c[0] - radius < 0.0 || c[0] + radius > 1.0 || c[1] - radius < 0.0 || c[1] + radius > 1.0
        {
            return Err(CliError::Config(format!(
                "circle {i} at ({}, {}) with radius {radius} leaves the unit square",
                c[0], c[1]
            )));
        }
        for (j, d) in centers.iter().enumerate().skip(i + 1) {
            let dist = ((c[0] - d[0]).powi(2) + (c[1] - d[1]).powi(2)).sqrt();
            if dist < 2.0 * radius {
                return Err(CliError::Config(format!(
                    "circles {i} and {j} overlap (distance {dist:.4} < 2r)"
                )));
            }
        }
    }
    Ok(())
}

/// Nodal indicator of a union of disjoint circles.
pub fn circles_initial(mesh: &Mesh, centers: &[[f64; 2]], radius: f64) -> Result<Field, CliError> {
    validate_circles(centers, radius)?;
    let mut phi = Field::zeros(SpaceKind::P1Scalar, mesh);
    for (v, p) in phi.values.iter_mut().zip(&mesh.vertices) {
        let inside = radius > 0.0
            && centers.iter().any(|c| {
                let dx = p[0] - c[0];
                let dy = p[1] - c[1];
                dx * dx + dy * dy <= radius * radius
            });
        *v = if inside { 1.0 } else { 0.0 };
    }
    Ok(phi)
}

/// Nodal deformation gradient F = [[1, a*phi], [0, 1]].
pub fn sheared_deformation(mesh: &Mesh, a_shear: f64, phi: &Field) -> Field {
    let mut f = Field::constant_tensor(mesh, Mat2::identity());
    for (v, &p) in f.values.chunks_exact_mut(4).zip(&phi.values) {
        v[1] = a_shear * p;
    }
    f
}
