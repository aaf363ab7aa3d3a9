//! Energy functionals, conserved quantities, and per-step reporting.
//!
//! Every integrand here is a polynomial on each triangle (P1 data, quartic
//! nonlinearities), so the degree-4 quadrature below evaluates the integrals
//! exactly; the energies reported are the exact discrete functionals, not
//! approximations of them.

use crate::assembly::{self, tensor_grads, tensor_value};
use crate::energy::EnergyModel;
use crate::error::Result;
use crate::field::Field;
use crate::math;
use crate::mesh::{Mesh, SpaceKind};
use crate::quad::quadrature_rule;
use crate::sparse::Csr;
use alloc::vec;
use alloc::vec::Vec;

/// Precomputed matrices for the energy and mass functionals.
pub struct DiagnosticsCtx {
    /// Scalar P1 stiffness (∇N_a, ∇N_b).
    pub k_scalar: Csr,
    /// Tensor P1 stiffness (∇Θ_a, ∇Θ_b).
    pub k_tensor: Csr,
    /// Exact ∫N_a for P1, so ∫φ_h = weightsᵀφ.
    pub node_weights: Vec<f64>,
}

impl DiagnosticsCtx {
    pub fn new(mesh: &Mesh) -> Result<DiagnosticsCtx> {
        let k_scalar = assembly::assemble_stiffness(mesh, SpaceKind::P1Scalar, None)?;
        let k_tensor = assembly::assemble_stiffness(mesh, SpaceKind::P1Tensor2x2, None)?;
        let mut node_weights = vec![0.0; mesh.num_vertices()];
        for t in 0..mesh.num_triangles() {
            let third = mesh.tri_area(t) / 3.0;
            for v in mesh.triangles[t] {
                node_weights[v] += third;
            }
        }
        Ok(DiagnosticsCtx {
            k_scalar,
            k_tensor,
            node_weights,
        })
    }

    /// Total mass ∫φ (exact).
    pub fn mass(&self, phi: &Field) -> f64 {
        math::dot(&self.node_weights, &phi.values)
    }

    /// Cahn–Hilliard energy E_CH = ∫ψ(φ) + (ε/2)‖∇φ‖².
    pub fn e_ch(&self, mesh: &Mesh, model: &EnergyModel, phi: &Field) -> f64 {
        let bulk = integrate_psi(mesh, model, &phi.values);
        bulk + 0.5 * model.epsilon() * self.k_scalar.bilinear(&phi.values, &phi.values)
    }

    /// Elastic energy E_EL = ∫w(φ, F) + (λ/2)‖∇F‖².
    pub fn e_el(&self, mesh: &Mesh, model: &EnergyModel, lambda: f64, phi: &Field, f: &Field) -> f64 {
        let bulk = integrate_w(mesh, model, &phi.values, &f.values);
        bulk + 0.5 * lambda * self.k_tensor.bilinear(&f.values, &f.values)
    }

    /// Lyapunov functional of the convex-splitting scheme: E_CH + E_EL.
    pub fn lyapunov_cs(&self, mesh: &Mesh, model: &EnergyModel, lambda: f64, phi: &Field, f: &Field) -> f64 {
        self.e_ch(mesh, model, phi) + self.e_el(mesh, model, lambda, phi, f)
    }

    /// Lyapunov functional of the SAV scheme, β² + gradient terms. With
    /// `include_k` the raw β² is used; without it the constant shift k is
    /// subtracted so the value is comparable to `lyapunov_cs`.
    pub fn lyapunov_dsav(
        &self,
        model: &EnergyModel,
        lambda: f64,
        beta: f64,
        phi: &Field,
        f: &Field,
        include_k: bool,
    ) -> f64 {
        let shift = if include_k { 0.0 } else { model.sav_k };
        beta * beta - shift
            + 0.5 * model.epsilon() * self.k_scalar.bilinear(&phi.values, &phi.values)
            + 0.5 * lambda * self.k_tensor.bilinear(&f.values, &f.values)
    }

    /// ∫ j(φ, F) = ∫ψ + w, the quantity under the SAV square root.
    pub fn integral_j(&self, mesh: &Mesh, model: &EnergyModel, phi: &Field, f: &Field) -> f64 {
        integrate_psi(mesh, model, &phi.values) + integrate_w(mesh, model, &phi.values, &f.values)
    }
}

/// ∫ψ(φ_h), exact (quartic integrand).
pub fn integrate_psi(mesh: &Mesh, model: &EnergyModel, phi: &[f64]) -> f64 {
    let rule = quadrature_rule(4).expect("degree 4 rule");
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area2 = 2.0 * mesh.tri_area(t);
        for (pt, wq) in rule.points.iter().zip(&rule.weights) {
            let p = assembly::p1_value(phi, tri, [pt[0], pt[1], pt[2]]);
            total += wq * area2 * model.psi(p);
        }
    }
    total
}

/// ∫w(φ_h, F_h); exact for the shape-memory and Mooney–Rivlin densities.
pub fn integrate_w(mesh: &Mesh, model: &EnergyModel, phi: &[f64], f: &[f64]) -> f64 {
    let rule = quadrature_rule(4).expect("degree 4 rule");
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area2 = 2.0 * mesh.tri_area(t);
        for (pt, wq) in rule.points.iter().zip(&rule.weights) {
            let bary = [pt[0], pt[1], pt[2]];
            let p = assembly::p1_value(phi, tri, bary);
            let fm = tensor_value(f, tri, bary);
            total += wq * area2 * model.w(p, fm);
        }
    }
    total
}

/// (λ/2)‖∇F_h‖² via direct element loop (used to cross-check the stiffness
/// bilinear form in tests and by the independent energy re-assembly).
pub fn grad_tensor_energy(mesh: &Mesh, lambda: f64, f: &[f64]) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let (area, grads) = mesh.tri_geometry(t);
        let g = tensor_grads(f, tri, &grads);
        total += 0.5 * lambda * area * (g[0].ddot(g[0]) + g[1].ddot(g[1]));
    }
    total
}

/// (ε/2)‖∇φ_h‖² via direct element loop.
pub fn grad_scalar_energy(mesh: &Mesh, eps: f64, phi: &[f64]) -> f64 {
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let (area, grads) = mesh.tri_geometry(t);
        let g = assembly::p1_grad(phi, tri, &grads);
        total += 0.5 * eps * area * (g[0] * g[0] + g[1] * g[1]);
    }
    total
}

/// det F_h per element, evaluated at the centroid.
pub fn det_f_field(mesh: &Mesh, f: &Field) -> Vec<f64> {
    let c = [1.0 / 3.0; 3];
    (0..mesh.num_triangles())
        .map(|t| tensor_value(&f.values, mesh.triangles[t], c).det())
        .collect()
}

/// Median of |det F − 1| over elements.
pub fn median_abs_det_minus_one(mesh: &Mesh, f: &Field) -> f64 {
    let mut dev: Vec<f64> = det_f_field(mesh, f)
        .into_iter()
        .map(|d| math::abs(d - 1.0))
        .collect();
    dev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = dev.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        dev[n / 2]
    } else {
        0.5 * (dev[n / 2 - 1] + dev[n / 2])
    }
}

/// Fraction of vertices with |φ − 1/2| > `threshold` (phase-separation gauge).
pub fn separated_fraction(phi: &Field, threshold: f64) -> f64 {
    let n = phi.values.len();
    if n == 0 {
        return 0.0;
    }
    let count = phi
        .values
        .iter()
        .filter(|&&p| math::abs(p - 0.5) > threshold)
        .count();
    count as f64 / n as f64
}

/// One row of the run log.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub step: usize,
    pub t: f64,
    pub lyapunov: f64,
    pub e_ch: f64,
    pub e_el: f64,
    pub mass: f64,
    pub phi_min: f64,
    pub phi_max: f64,
    pub max_f: f64,
    pub med_abs_det_minus_1: f64,
    /// SAV variable; `None` for the convex-splitting scheme.
    pub beta: Option<f64>,
    pub fp_iters: usize,
    pub newton_iters_total: usize,
}

pub fn field_min_max(f: &Field) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in &f.values {
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    (lo, hi)
}

/// max over vertices of the Frobenius norm of a P1 tensor field.
pub fn max_tensor_norm(f: &Field) -> f64 {
    let mut worst: f64 = 0.0;
    for v in 0..f.values.len() / 4 {
        worst = worst.max(f.tensor_at_vertex(v).norm());
    }
    worst
}
