//! Shape functions, element loops, and assembly of every bilinear/linear
//! form used by the two schemes.
//!
//! Quadrature degrees: 2 for P1 mass (3 with a P1 coefficient), 1 for P1
//! stiffness (2 weighted), 4 for the Taylor–Hood and transport blocks, 5 for
//! nonlinear energy-derivative functionals. Each choice is at least the
//! polynomial degree of its integrand, so the forms are integrated exactly.

use crate::error::{Error, Result};
use crate::mesh::{Mesh, SpaceKind};
use crate::quad::{quadrature_rule, QuadratureRule};
use crate::solve::BandLu;
use crate::sparse::{CooBuilder, Csr};
use crate::tensor::Mat2;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// ---------------------------------------------------------------------------
// Pointwise evaluation helpers
// ---------------------------------------------------------------------------

/// Value of a P1 scalar field (vertex-indexed coefficients) at a barycentric
/// point of triangle `tri`.
pub fn p1_value(nodal: &[f64], tri: [usize; 3], bary: [f64; 3]) -> f64 {
    bary[0] * nodal[tri[0]] + bary[1] * nodal[tri[1]] + bary[2] * nodal[tri[2]]
}

/// Constant gradient of a P1 scalar field on a triangle.
pub fn p1_grad(nodal: &[f64], tri: [usize; 3], grads: &[[f64; 2]; 3]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for k in 0..3 {
        for d in 0..2 {
            g[d] += nodal[tri[k]] * grads[k][d];
        }
    }
    g
}

/// Value of a P1 2x2-tensor field at a barycentric point.
pub fn tensor_value(vals: &[f64], tri: [usize; 3], bary: [f64; 3]) -> Mat2 {
    let mut m = [0.0; 4];
    for k in 0..3 {
        for c in 0..4 {
            m[c] += bary[k] * vals[4 * tri[k] + c];
        }
    }
    Mat2(m)
}

/// Spatial derivatives [∂x F, ∂y F] of a P1 tensor field on a triangle.
pub fn tensor_grads(vals: &[f64], tri: [usize; 3], grads: &[[f64; 2]; 3]) -> [Mat2; 2] {
    let mut out = [Mat2::ZERO; 2];
    for k in 0..3 {
        for c in 0..4 {
            let v = vals[4 * tri[k] + c];
            out[0].0[c] += v * grads[k][0];
            out[1].0[c] += v * grads[k][1];
        }
    }
    out
}

/// Quadratic Lagrange shape values at a barycentric point; local node order
/// is the three vertices followed by the midpoints of edges (01), (12), (20).
pub fn p2_shapes(bary: [f64; 3]) -> [f64; 6] {
    let [l0, l1, l2] = bary;
    [
        l0 * (2.0 * l0 - 1.0),
        l1 * (2.0 * l1 - 1.0),
        l2 * (2.0 * l2 - 1.0),
        4.0 * l0 * l1,
        4.0 * l1 * l2,
        4.0 * l2 * l0,
    ]
}

/// Gradients of the six quadratic shape functions.
pub fn p2_shape_grads(bary: [f64; 3], lg: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let [l0, l1, l2] = bary;
    let mut out = [[0.0; 2]; 6];
    for d in 0..2 {
        out[0][d] = (4.0 * l0 - 1.0) * lg[0][d];
        out[1][d] = (4.0 * l1 - 1.0) * lg[1][d];
        out[2][d] = (4.0 * l2 - 1.0) * lg[2][d];
        out[3][d] = 4.0 * (l1 * lg[0][d] + l0 * lg[1][d]);
        out[4][d] = 4.0 * (l2 * lg[1][d] + l1 * lg[2][d]);
        out[5][d] = 4.0 * (l0 * lg[2][d] + l2 * lg[0][d]);
    }
    out
}

/// Scalar P2 node indices of triangle `t` (vertices then edge midpoints, the
/// same ordering the dof map uses).
pub fn p2_nodes(mesh: &Mesh, t: usize) -> [usize; 6] {
    let tri = mesh.triangles[t];
    let nv = mesh.num_vertices();
    let e = mesh.tri_edges[t];
    [tri[0], tri[1], tri[2], nv + e[0], nv + e[1], nv + e[2]]
}

/// Velocity value of a P2 vector field at a barycentric point.
pub fn velocity_value(vals: &[f64], mesh: &Mesh, t: usize, bary: [f64; 3]) -> [f64; 2] {
    let shapes = p2_shapes(bary);
    let nodes = p2_nodes(mesh, t);
    let mut v = [0.0; 2];
    for k in 0..6 {
        for c in 0..2 {
            v[c] += shapes[k] * vals[2 * nodes[k] + c];
        }
    }
    v
}

/// Velocity gradient (∇v)_{ij} = ∂_j v_i at a barycentric point.
pub fn velocity_grad(
    vals: &[f64],
    mesh: &Mesh,
    t: usize,
    bary: [f64; 3],
    lg: &[[f64; 2]; 3],
) -> Mat2 {
    let grads = p2_shape_grads(bary, lg);
    let nodes = p2_nodes(mesh, t);
    let mut g = Mat2::ZERO;
    for k in 0..6 {
        for i in 0..2 {
            let coeff = vals[2 * nodes[k] + i];
            for j in 0..2 {
                g[(i, j)] += coeff * grads[k][j];
            }
        }
    }
    g
}

fn check_coeff(mesh: &Mesh, coeff: Option<&[f64]>) -> Result<()> {
    if let Some(c) = coeff {
        if c.len() != mesh.num_vertices() {
            return Err(Error::InvalidArgument(format!(
                "coefficient field has {} entries, expected one per vertex ({})",
                c.len(),
                mesh.num_vertices()
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Mass and stiffness
// ---------------------------------------------------------------------------

/// Mass matrix of the given space, optionally weighted by a P1 scalar
/// coefficient (interpolated at quadrature points).
pub fn assemble_mass(mesh: &Mesh, space: SpaceKind, coeff: Option<&[f64]>) -> Result<Csr> {
    check_coeff(mesh, coeff)?;
    match space {
        SpaceKind::P1Scalar | SpaceKind::P1ScalarZeroMean => {
            assemble_mass_p1_block(mesh, 1, coeff)
        }
        SpaceKind::P1Tensor2x2 => assemble_mass_p1_block(mesh, 4, coeff),
        SpaceKind::P2Vector2 => assemble_mass_p2_vector(mesh, coeff),
    }
}

fn assemble_mass_p1_block(mesh: &Mesh, comps: usize, coeff: Option<&[f64]>) -> Result<Csr> {
    let rule = quadrature_rule(if coeff.is_some() { 3 } else { 2 })?;
    let n = comps * mesh.num_vertices();
    let mut builder = CooBuilder::new(n, n);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area = mesh.tri_area(t);
        let mut local = [[0.0; 3]; 3];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let weight = 2.0 * area * w * coeff.map_or(1.0, |c| p1_value(c, tri, *p));
            for a in 0..3 {
                for b in 0..3 {
                    local[a][b] += weight * p[a] * p[b];
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..comps {
                    builder.push(comps * tri[a] + c, comps * tri[b] + c, local[a][b]);
                }
            }
        }
    }
    Ok(builder.into_csr())
}

fn assemble_mass_p2_vector(mesh: &Mesh, coeff: Option<&[f64]>) -> Result<Csr> {
    let rule = quadrature_rule(if coeff.is_some() { 5 } else { 4 })?;
    let n = 2 * (mesh.num_vertices() + mesh.num_edges());
    let mut builder = CooBuilder::new(n, n);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area = mesh.tri_area(t);
        let nodes = p2_nodes(mesh, t);
        let mut local = [[0.0; 6]; 6];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let shapes = p2_shapes(*p);
            let weight = 2.0 * area * w * coeff.map_or(1.0, |c| p1_value(c, tri, *p));
            for a in 0..6 {
                for b in 0..6 {
                    local[a][b] += weight * shapes[a] * shapes[b];
                }
            }
        }
        for a in 0..6 {
            for b in 0..6 {
                for c in 0..2 {
                    builder.push(2 * nodes[a] + c, 2 * nodes[b] + c, local[a][b]);
                }
            }
        }
    }
    Ok(builder.into_csr())
}

/// Stiffness matrix ∫ c ∇u·∇w for P1 scalar or (block-diagonal) P1 tensor
/// spaces, optionally weighted by a P1 scalar coefficient.
pub fn assemble_stiffness(mesh: &Mesh, space: SpaceKind, coeff: Option<&[f64]>) -> Result<Csr> {
    check_coeff(mesh, coeff)?;
    let comps = match space {
        SpaceKind::P1Scalar | SpaceKind::P1ScalarZeroMean => 1,
        SpaceKind::P1Tensor2x2 => 4,
        SpaceKind::P2Vector2 => {
            return Err(Error::InvalidArgument(
                "P2 stiffness is assembled by assemble_stokes".into(),
            ))
        }
    };
    let rule = quadrature_rule(if coeff.is_some() { 2 } else { 1 })?;
    let n = comps * mesh.num_vertices();
    let mut builder = CooBuilder::new(n, n);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let (area, grads) = mesh.tri_geometry(t);
        let mut local = [[0.0; 3]; 3];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let weight = 2.0 * area * w * coeff.map_or(1.0, |c| p1_value(c, tri, *p));
            for a in 0..3 {
                for b in 0..3 {
                    local[a][b] +=
                        weight * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..comps {
                    builder.push(comps * tri[a] + c, comps * tri[b] + c, local[a][b]);
                }
            }
        }
    }
    Ok(builder.into_csr())
}

// ---------------------------------------------------------------------------
// Stokes blocks
// ---------------------------------------------------------------------------

/// Assembled Stokes operator: `a` is the ν-weighted P2 vector Laplacian with
/// velocity Dirichlet rows/columns eliminated, `b` the (negative) pressure–
/// divergence coupling B[q, u] = −∫ q div u, `p_weights` the P1 lumped
/// masses used for the zero-mean constraint.
pub struct StokesSystem {
    pub a: Csr,
    pub b: Csr,
    pub dirichlet: Vec<usize>,
    pub p_weights: Vec<f64>,
}

/// Velocity block ν∫∇u:∇w without boundary conditions (useful for tests).
pub fn assemble_velocity_laplacian(mesh: &Mesh, nu: f64) -> Result<Csr> {
    let rule = quadrature_rule(4)?;
    let n = 2 * (mesh.num_vertices() + mesh.num_edges());
    let mut builder = CooBuilder::new(n, n);
    for t in 0..mesh.num_triangles() {
        let (area, lg) = mesh.tri_geometry(t);
        let nodes = p2_nodes(mesh, t);
        let mut local = [[0.0; 6]; 6];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let grads = p2_shape_grads(*p, &lg);
            let weight = 2.0 * area * w * nu;
            for a in 0..6 {
                for b in 0..6 {
                    local[a][b] +=
                        weight * (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]);
                }
            }
        }
        for a in 0..6 {
            for b in 0..6 {
                for c in 0..2 {
                    builder.push(2 * nodes[a] + c, 2 * nodes[b] + c, local[a][b]);
                }
            }
        }
    }
    Ok(builder.into_csr())
}

pub fn assemble_stokes(mesh: &Mesh, nu: f64) -> Result<StokesSystem> {
    if nu <= 0.0 {
        return Err(Error::InvalidArgument(format!("viscosity must be positive, got {nu}")));
    }
    let raw = assemble_velocity_laplacian(mesh, nu)?;
    let dirichlet = crate::mesh::build_dof_map(mesh, SpaceKind::P2Vector2).boundary_dofs;
    let a = eliminate_dirichlet(&raw, &dirichlet);

    let rule = quadrature_rule(4)?;
    let n_v = raw.n_rows;
    let n_p = mesh.num_vertices();
    let mut builder = CooBuilder::new(n_p, n_v);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let (area, lg) = mesh.tri_geometry(t);
        let nodes = p2_nodes(mesh, t);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let grads = p2_shape_grads(*p, &lg);
            let weight = 2.0 * area * w;
            for j in 0..3 {
                let q = weight * p[j];
                for a in 0..6 {
                    for c in 0..2 {
                        // −∫ q ∂_c u_c for the c-component basis at node a.
                        builder.push(tri[j], 2 * nodes[a] + c, -q * grads[a][c]);
                    }
                }
            }
        }
    }
    let b = builder.into_csr();

    let rule2 = quadrature_rule(2)?;
    let mut p_weights = vec![0.0; n_p];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area = mesh.tri_area(t);
        for (p, w) in rule2.points.iter().zip(&rule2.weights) {
            for j in 0..3 {
                p_weights[tri[j]] += 2.0 * area * w * p[j];
            }
        }
    }

    Ok(StokesSystem {
        a,
        b,
        dirichlet,
        p_weights,
    })
}

/// Symmetric elimination of Dirichlet dofs: zero the rows and columns and
/// put a unit diagonal (homogeneous data, so no RHS correction is needed).
pub fn eliminate_dirichlet(a: &Csr, dirichlet: &[usize]) -> Csr {
    let mut mask = vec![false; a.n_rows];
    for &d in dirichlet {
        mask[d] = true;
    }
    let mut builder = CooBuilder::new(a.n_rows, a.n_cols);
    for i in 0..a.n_rows {
        if mask[i] {
            builder.push(i, i, 1.0);
            continue;
        }
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            if !mask[j] {
                builder.push(i, j, v);
            }
        }
    }
    builder.into_csr()
}

// ---------------------------------------------------------------------------
// Transport couplings and the Cauchy-stress RHS
// ---------------------------------------------------------------------------

/// The two trilinear transport couplings of the F-equation, with the
/// velocity and the transported tensor frozen:
/// `adv[a] = ∫ (v·∇)F : Θ_a`, `grad[a] = ∫ (∇v)F : Θ_a`.
pub struct TransportTerms {
    pub adv: Vec<f64>,
    pub grad: Vec<f64>,
}

pub fn assemble_transport_terms(mesh: &Mesh, v: &[f64], f_vals: &[f64]) -> Result<TransportTerms> {
    let rule = quadrature_rule(4)?;
    let n = 4 * mesh.num_vertices();
    let mut adv = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let (area, lg) = mesh.tri_geometry(t);
        let fg = tensor_grads(f_vals, tri, &lg);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let weight = 2.0 * area * w;
            let vv = velocity_value(v, mesh, t, *p);
            let vgrad = velocity_grad(v, mesh, t, *p, &lg);
            let fval = tensor_value(f_vals, tri, *p);
            // (v·∇)F and (∇v)F at the quadrature point.
            let conv = fg[0] * vv[0] + fg[1] * vv[1];
            let rot = vgrad * fval;
            for k in 0..3 {
                let basis = weight * p[k];
                for c in 0..4 {
                    adv[4 * tri[k] + c] += basis * conv.0[c];
                    grad[4 * tri[k] + c] += basis * rot.0[c];
                }
            }
        }
    }
    Ok(TransportTerms { adv, grad })
}

/// φ-transport functional `out[a] = ∫ (v·∇φ) ξ_a` on P1 scalars.
pub fn assemble_phi_transport(mesh: &Mesh, v: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
    let rule = quadrature_rule(4)?;
    let mut out = vec![0.0; mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let (area, lg) = mesh.tri_geometry(t);
        let pg = p1_grad(phi, tri, &lg);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let weight = 2.0 * area * w;
            let vv = velocity_value(v, mesh, t, *p);
            let conv = vv[0] * pg[0] + vv[1] * pg[1];
            for k in 0..3 {
                out[tri[k]] += weight * p[k] * conv;
            }
        }
    }
    Ok(out)
}

/// The three parts of the momentum right-hand side
/// (capillary + elastic Cauchy stress), kept separate because the SAV scalar
/// equation needs them individually:
/// `mu_grad_phi[a] = ∫ μ ∇φ · u_a`,
/// `m_ft[a] = ∫ (M Fᵀ) : ∇u_a`,
/// `grad_f_m[a] = ∫ (∇F ⊙ M) · u_a` with (∇F ⊙ M)_k = Σ_ij ∂_k F_ij M_ij.
pub struct CauchyRhs {
    pub mu_grad_phi: Vec<f64>,
    pub m_ft: Vec<f64>,
    pub grad_f_m: Vec<f64>,
}

impl CauchyRhs {
    /// Combined right-hand side of the momentum equation:
    /// ∫ μ∇φ·u − ∫ (MFᵀ):∇u + ∫ (∇F⊙M)·u.
    pub fn combined(&self) -> Vec<f64> {
        self.mu_grad_phi
            .iter()
            .zip(&self.m_ft)
            .zip(&self.grad_f_m)
            .map(|((a, b), c)| a - b + c)
            .collect()
    }
}

pub fn assemble_cauchy_rhs(
    mesh: &Mesh,
    m_vals: &[f64],
    f_vals: &[f64],
    mu: &[f64],
    phi: &[f64],
) -> Result<CauchyRhs> {
    let rule = quadrature_rule(4)?;
    let n = 2 * (mesh.num_vertices() + mesh.num_edges());
    let mut out = CauchyRhs {
        mu_grad_phi: vec![0.0; n],
        m_ft: vec![0.0; n],
        grad_f_m: vec![0.0; n],
    };
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let (area, lg) = mesh.tri_geometry(t);
        let nodes = p2_nodes(mesh, t);
        let pg = p1_grad(phi, tri, &lg);
        let fg = tensor_grads(f_vals, tri, &lg);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let weight = 2.0 * area * w;
            let shapes = p2_shapes(*p);
            let sgrads = p2_shape_grads(*p, &lg);
            let mu_val = p1_value(mu, tri, *p);
            let mval = tensor_value(m_vals, tri, *p);
            let fval = tensor_value(f_vals, tri, *p);
            let stress = mval * fval.transpose();
            // (∇F ⊙ M)_k = Σ_ij ∂_k F_ij M_ij
            let odot = [fg[0].ddot(mval), fg[1].ddot(mval)];
            for a in 0..6 {
                for c in 0..2 {
                    let dof = 2 * nodes[a] + c;
                    out.mu_grad_phi[dof] += weight * mu_val * pg[c] * shapes[a];
                    // (MFᵀ) : ∇u for the c-component basis: row c of MFᵀ
                    // dotted with the shape gradient.
                    out.m_ft[dof] += weight
                        * (stress[(c, 0)] * sgrads[a][0] + stress[(c, 1)] * sgrads[a][1]);
                    out.grad_f_m[dof] += weight * odot[c] * shapes[a];
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// L² projection
// ---------------------------------------------------------------------------

/// L² projection of a pointwise scalar function onto P1.
pub fn project_l2_scalar<G>(mesh: &Mesh, g: G) -> Result<Vec<f64>>
where
    G: Fn([f64; 2]) -> f64,
{
    let rule = quadrature_rule(5)?;
    let mass = assemble_mass(mesh, SpaceKind::P1Scalar, None)?;
    let mut rhs = vec![0.0; mesh.num_vertices()];
    accumulate_p1_rhs(mesh, &rule, &mut rhs, |x, tri, bary, out| {
        let v = g(x);
        for k in 0..3 {
            out(tri[k], bary[k] * v);
        }
    });
    crate::solve::solve_spd(&mass, &rhs, 1e-13)
}

/// L² projection of a pointwise 2x2-tensor function onto the P1 tensor space.
pub fn project_l2_tensor<G>(mesh: &Mesh, g: G) -> Result<Vec<f64>>
where
    G: Fn([f64; 2]) -> Mat2,
{
    let rule = quadrature_rule(5)?;
    let mass = assemble_mass(mesh, SpaceKind::P1Scalar, None)?;
    let lu = BandLu::factor(&mass)?;
    let nv = mesh.num_vertices();
    let mut rhs = vec![vec![0.0; nv]; 4];
    accumulate_p1_rhs(mesh, &rule, &mut rhs, |x, tri, bary, out| {
        let v = g(x);
        for k in 0..3 {
            for c in 0..4 {
                out((c, tri[k]), bary[k] * v.0[c]);
            }
        }
    });
    let mut vals = vec![0.0; 4 * nv];
    for c in 0..4 {
        let sol = lu.solve(&rhs[c]);
        for v in 0..nv {
            vals[4 * v + c] = sol[v];
        }
    }
    Ok(vals)
}

/// L² projection of a pointwise vector function onto the P2 vector space.
pub fn project_l2_velocity<G>(mesh: &Mesh, g: G) -> Result<Vec<f64>>
where
    G: Fn([f64; 2]) -> [f64; 2],
{
    let rule = quadrature_rule(5)?;
    let mass = assemble_mass(mesh, SpaceKind::P2Vector2, None)?;
    let n = 2 * (mesh.num_vertices() + mesh.num_edges());
    let mut rhs = vec![0.0; n];
    for t in 0..mesh.num_triangles() {
        let area = mesh.tri_area(t);
        let nodes = p2_nodes(mesh, t);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let weight = 2.0 * area * w;
            let x = mesh.point(t, *p);
            let v = g(x);
            let shapes = p2_shapes(*p);
            for a in 0..6 {
                for c in 0..2 {
                    rhs[2 * nodes[a] + c] += weight * shapes[a] * v[c];
                }
            }
        }
    }
    crate::solve::solve_spd(&mass, &rhs, 1e-13)
}

// Generic helper for P1 right-hand sides; the closure receives the physical
// point and pushes weighted contributions through `out`.
fn accumulate_p1_rhs<T, K, F>(mesh: &Mesh, rule: &QuadratureRule, target: &mut T, f: F)
where
    F: Fn([f64; 2], [usize; 3], [f64; 3], &mut dyn FnMut(K, f64)),
    T: RhsTarget<K>,
{
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area = mesh.tri_area(t);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let weight = 2.0 * area * w;
            let x = mesh.point(t, *p);
            f(x, tri, *p, &mut |key, v| target.add(key, weight * v));
        }
    }
}

trait RhsTarget<K> {
    fn add(&mut self, key: K, v: f64);
}

impl RhsTarget<usize> for Vec<f64> {
    fn add(&mut self, key: usize, v: f64) {
        self[key] += v;
    }
}

impl RhsTarget<(usize, usize)> for Vec<Vec<f64>> {
    fn add(&mut self, (c, i): (usize, usize), v: f64) {
        self[c][i] += v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_uniform_mesh;
    use crate::rng::SplitMix64;

    #[test]
    fn mass_total_is_domain_area() {
        let mesh = build_uniform_mesh(4, 3).unwrap();
        let m = assemble_mass(&mesh, SpaceKind::P1Scalar, None).unwrap();
        let total: f64 = m.vals.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        let ones = vec![1.0; m.n_rows];
        assert!((m.bilinear(&ones, &ones) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mass_constant_energy() {
        let mesh = build_uniform_mesh(5, 5).unwrap();
        let m = assemble_mass(&mesh, SpaceKind::P1Scalar, None).unwrap();
        let c = vec![0.7; m.n_rows];
        assert!((m.bilinear(&c, &c) - 0.49).abs() < 1e-12);
    }

    #[test]
    fn unit_coefficient_matches_unweighted() {
        let mesh = build_uniform_mesh(3, 4).unwrap();
        let ones = vec![1.0; mesh.num_vertices()];
        let m0 = assemble_mass(&mesh, SpaceKind::P1Scalar, None).unwrap();
        let m1 = assemble_mass(&mesh, SpaceKind::P1Scalar, Some(&ones)).unwrap();
        for i in 0..m0.n_rows {
            let (c0, v0) = m0.row(i);
            let (c1, v1) = m1.row(i);
            assert_eq!(c0, c1);
            for (a, b) in v0.iter().zip(v1) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn stiffness_kernel_and_energy() {
        let mesh = build_uniform_mesh(6, 6).unwrap();
        let k = assemble_stiffness(&mesh, SpaceKind::P1Scalar, None).unwrap();
        let c = vec![2.5; k.n_rows];
        for v in k.matvec(&c) {
            assert!(v.abs() < 1e-12);
        }
        let x: Vec<f64> = mesh.vertices.iter().map(|p| p[0]).collect();
        assert!((k.bilinear(&x, &x) - 1.0).abs() < 1e-12);
        assert!(k.asymmetry() < 1e-13 * k.max_abs().max(1.0));
    }

    #[test]
    fn weighted_stiffness_scales() {
        let mesh = build_uniform_mesh(4, 4).unwrap();
        let k0 = assemble_stiffness(&mesh, SpaceKind::P1Scalar, None).unwrap();
        let b0 = vec![3.0; mesh.num_vertices()];
        let kb = assemble_stiffness(&mesh, SpaceKind::P1Scalar, Some(&b0)).unwrap();
        for i in 0..k0.n_rows {
            let (c0, v0) = k0.row(i);
            let (cb, vb) = kb.row(i);
            assert_eq!(c0, cb);
            for (a, b) in v0.iter().zip(vb) {
                assert!((3.0 * a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn velocity_laplacian_kills_constants() {
        let mesh = build_uniform_mesh(3, 3).unwrap();
        let a = assemble_velocity_laplacian(&mesh, 1.7).unwrap();
        let c = vec![1.0; a.n_rows];
        for v in a.matvec(&c) {
            assert!(v.abs() < 1e-11);
        }
    }

    #[test]
    fn divergence_of_rigid_rotation_vanishes() {
        let mesh = build_uniform_mesh(4, 4).unwrap();
        let stokes = assemble_stokes(&mesh, 1.0).unwrap();
        // Nodal interpolation of the linear field (−y, x) is exact in P2.
        let mut v = vec![0.0; stokes.b.n_cols];
        let nv = mesh.num_vertices();
        for (i, p) in mesh.vertices.iter().enumerate() {
            v[2 * i] = -p[1];
            v[2 * i + 1] = p[0];
        }
        for (e, edge) in mesh.edges.iter().enumerate() {
            let (a, b) = (mesh.vertices[edge.v[0]], mesh.vertices[edge.v[1]]);
            v[2 * (nv + e)] = -(a[1] + b[1]) * 0.5;
            v[2 * (nv + e) + 1] = (a[0] + b[0]) * 0.5;
        }
        for r in stokes.b.matvec(&v) {
            assert!(r.abs() < 1e-12);
        }
    }

    #[test]
    fn pressure_weights_sum_to_area() {
        let mesh = build_uniform_mesh(5, 2).unwrap();
        let stokes = assemble_stokes(&mesh, 1.0).unwrap();
        let total: f64 = stokes.p_weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn transport_zero_velocity() {
        let mesh = build_uniform_mesh(3, 3).unwrap();
        let v = vec![0.0; 2 * (mesh.num_vertices() + mesh.num_edges())];
        let mut rng = SplitMix64::new(3);
        let f: Vec<f64> = (0..4 * mesh.num_vertices())
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect();
        let terms = assemble_transport_terms(&mesh, &v, &f).unwrap();
        assert!(terms.adv.iter().all(|x| x.abs() < 1e-14));
        assert!(terms.grad.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn constant_tensor_has_no_advection() {
        let mesh = build_uniform_mesh(3, 3).unwrap();
        let mut rng = SplitMix64::new(5);
        let v: Vec<f64> = (0..2 * (mesh.num_vertices() + mesh.num_edges()))
            .map(|_| rng.uniform(-1.0, 1.0))
            .collect();
        let mut f = vec![0.0; 4 * mesh.num_vertices()];
        for vtx in 0..mesh.num_vertices() {
            f[4 * vtx] = 1.0;
            f[4 * vtx + 3] = 1.0;
        }
        let terms = assemble_transport_terms(&mesh, &v, &f).unwrap();
        assert!(terms.adv.iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn advection_of_linear_tensor_hand_check() {
        // v = (1,0), F = x·I: (v·∇)F = I, so adv[a] = ∫ N_a for the diagonal
        // components and 0 off-diagonal.
        let mesh = build_uniform_mesh(2, 2).unwrap();
        let nv = mesh.num_vertices();
        let mut v = vec![0.0; 2 * (nv + mesh.num_edges())];
        for i in 0..(nv + mesh.num_edges()) {
            v[2 * i] = 1.0;
        }
        let mut f = vec![0.0; 4 * nv];
        for (i, p) in mesh.vertices.iter().enumerate() {
            f[4 * i] = p[0];
            f[4 * i + 3] = p[0];
        }
        let terms = assemble_transport_terms(&mesh, &v, &f).unwrap();
        // ∫ N_a = (support area)/3 for P1 hat functions.
        let mut hat_integrals = vec![0.0; nv];
        for t in 0..mesh.num_triangles() {
            for k in mesh.triangles[t] {
                hat_integrals[k] += mesh.tri_area(t) / 3.0;
            }
        }
        for vtx in 0..nv {
            assert!((terms.adv[4 * vtx] - hat_integrals[vtx]).abs() < 1e-13);
            assert!(terms.adv[4 * vtx + 1].abs() < 1e-13);
            assert!(terms.adv[4 * vtx + 2].abs() < 1e-13);
            assert!((terms.adv[4 * vtx + 3] - hat_integrals[vtx]).abs() < 1e-13);
        }
    }

    #[test]
    fn cauchy_rhs_zero_cases() {
        let mesh = build_uniform_mesh(3, 3).unwrap();
        let nv = mesh.num_vertices();
        let m = vec![0.0; 4 * nv];
        let mut f = vec![0.0; 4 * nv];
        for vtx in 0..nv {
            f[4 * vtx] = 1.0;
            f[4 * vtx + 3] = 1.0;
        }
        let mu = vec![1.0; nv];
        let phi = vec![0.4; nv];
        let rhs = assemble_cauchy_rhs(&mesh, &m, &f, &mu, &phi).unwrap();
        assert!(rhs.combined().iter().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn capillary_force_of_linear_phase() {
        // μ ≡ 1, φ = x: ∫ μ ∇φ·u = ∫ u_x. P2 vertex shapes integrate to 0,
        // edge shapes to (element area)/3.
        let mesh = build_uniform_mesh(2, 2).unwrap();
        let nv = mesh.num_vertices();
        let m = vec![0.0; 4 * nv];
        let f = vec![0.0; 4 * nv];
        let mu = vec![1.0; nv];
        let phi: Vec<f64> = mesh.vertices.iter().map(|p| p[0]).collect();
        let rhs = assemble_cauchy_rhs(&mesh, &m, &f, &mu, &phi).unwrap();
        let mut expected = vec![0.0; 2 * (nv + mesh.num_edges())];
        for t in 0..mesh.num_triangles() {
            let area = mesh.tri_area(t);
            for e in mesh.tri_edges[t] {
                expected[2 * (nv + e)] += area / 3.0;
            }
        }
        for (got, want) in rhs.mu_grad_phi.iter().zip(&expected) {
            assert!((got - want).abs() < 1e-13);
        }
    }

    #[test]
    fn projection_of_constant() {
        let mesh = build_uniform_mesh(4, 4).unwrap();
        let vals = project_l2_scalar(&mesh, |_| 0.3).unwrap();
        for v in vals {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_idempotent_on_p1() {
        let mesh = build_uniform_mesh(4, 4).unwrap();
        let vals = project_l2_scalar(&mesh, |p| p[0]).unwrap();
        for (v, p) in vals.iter().zip(&mesh.vertices) {
            assert!((v - p[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_converges_quadratically() {
        let pi = core::f64::consts::PI;
        let err = |n: usize| {
            let mesh = build_uniform_mesh(n, n).unwrap();
            let vals = project_l2_scalar(&mesh, |p| (pi * p[0]).sin()).unwrap();
            let rule = quadrature_rule(5).unwrap();
            let mut e2 = 0.0;
            for t in 0..mesh.num_triangles() {
                let tri = mesh.triangles[t];
                let area = mesh.tri_area(t);
                for (p, w) in rule.points.iter().zip(&rule.weights) {
                    let x = mesh.point(t, *p);
                    let d = p1_value(&vals, tri, *p) - (pi * x[0]).sin();
                    e2 += 2.0 * area * w * d * d;
                }
            }
            e2.sqrt()
        };
        let (e8, e16) = (err(8), err(16));
        let ratio = e8 / e16;
        assert!(ratio > 3.0 && ratio < 5.0, "O(h²) rate broken: ratio {ratio}");
    }

    #[test]
    fn tensor_projection_constant() {
        let mesh = build_uniform_mesh(3, 3).unwrap();
        let target = Mat2::new(1.0, 0.5, -0.25, 2.0);
        let vals = project_l2_tensor(&mesh, |_| target).unwrap();
        for v in 0..mesh.num_vertices() {
            for c in 0..4 {
                assert!((vals[4 * v + c] - target.0[c]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn velocity_projection_linear() {
        let mesh = build_uniform_mesh(3, 3).unwrap();
        let vals = project_l2_velocity(&mesh, |p| [p[1], -p[0]]).unwrap();
        let probe = velocity_value(&vals, &mesh, 0, [0.3, 0.3, 0.4]);
        let x = mesh.point(0, [0.3, 0.3, 0.4]);
        assert!((probe[0] - x[1]).abs() < 1e-10);
        assert!((probe[1] + x[0]).abs() < 1e-10);
    }

    #[test]
    fn quadrature_degree_margin() {
        // Raising the rule degree must not change exactly integrated forms.
        let mesh = build_uniform_mesh(3, 2).unwrap();
        let m2 = assemble_mass(&mesh, SpaceKind::P1Scalar, None).unwrap();
        let rule = quadrature_rule(3).unwrap();
        let mut builder = CooBuilder::new(m2.n_rows, m2.n_cols);
        for t in 0..mesh.num_triangles() {
            let tri = mesh.triangles[t];
            let area = mesh.tri_area(t);
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                for a in 0..3 {
                    for b in 0..3 {
                        builder.push(tri[a], tri[b], 2.0 * area * w * p[a] * p[b]);
                    }
                }
            }
        }
        let m3 = builder.into_csr();
        for i in 0..m2.n_rows {
            let (c2, v2) = m2.row(i);
            for (&j, &v) in c2.iter().zip(v2) {
                assert!((v - m3.get(i, j)).abs() < 1e-13);
            }
        }
    }
}
