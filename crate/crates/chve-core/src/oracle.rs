//! Independent dense reference path for tiny meshes.
//!
//! Everything here is written from scratch against the scheme definitions:
//! its own quadrature constants, its own shape-function evaluation, dense
//! matrices, a dense LU, and an explicit Lagrange-multiplier formulation of
//! the Stokes saddle problem. It deliberately shares no assembly or solver
//! code with the main path; only mesh topology, field layouts, and the
//! constitutive functions (which are plain pointwise formulas) are common.

use crate::energy::{EnergyModel, SplitLedger};
use crate::error::{Error, Result};
use crate::field::{Field, SavState, State};
use crate::math;
use crate::mesh::{Mesh, SpaceKind};
use crate::scheme_cs::CsConfig;
use crate::scheme_dsav::DsavConfig;
use crate::tensor::Mat2;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

// ---------------------------------------------------------------------------
// Dense linear algebra
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Dense {
    pub n_rows: usize,
    pub n_cols: usize,
    pub a: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Dense {
        Dense {
            n_rows,
            n_cols,
            a: vec![0.0; n_rows * n_cols],
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n_cols + j]
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n_cols + j] += v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        for i in 0..self.n_rows {
            let row = &self.a[i * self.n_cols..(i + 1) * self.n_cols];
            y[i] = math::dot(row, x);
        }
        y
    }

    /// Solve with a fresh partially pivoted LU (Doolittle, row swaps).
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_rows;
        if n != self.n_cols || b.len() != n {
            return Err(Error::InvalidArgument("dense solve shape mismatch".into()));
        }
        let mut a = self.a.clone();
        let mut x = b.to_vec();
        for k in 0..n {
            let mut piv = k;
            let mut best = math::abs(a[k * n + k]);
            for i in (k + 1)..n {
                let v = math::abs(a[i * n + k]);
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best == 0.0 {
                return Err(Error::SolverFailure {
                    context: "dense LU (singular)",
                    residual: 0.0,
                    tolerance: 0.0,
                });
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                x.swap(k, piv);
            }
            let d = a[k * n + k];
            for i in (k + 1)..n {
                let l = a[i * n + k] / d;
                a[i * n + k] = l;
                if l != 0.0 {
                    for j in (k + 1)..n {
                        a[i * n + j] -= l * a[k * n + j];
                    }
                    x[i] -= l * x[k];
                }
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= a[i * n + j] * x[j];
            }
            x[i] = s / a[i * n + i];
        }
        Ok(x)
    }
}

// ---------------------------------------------------------------------------
// Quadrature and shapes (independent constants)
// ---------------------------------------------------------------------------

/// Degree-4 Dunavant rule: two orbits of three points each, weights on the
/// reference triangle of area 1/2.
fn oq_rule() -> ([[f64; 3]; 6], [f64; 6]) {
    let a = 0.445948490915965;
    let b = 0.091576213509771;
    let wa = 0.223381589678011 * 0.5;
    let wb = 0.109951743655322 * 0.5;
    (
        [
            [1.0 - 2.0 * a, a, a],
            [a, 1.0 - 2.0 * a, a],
            [a, a, 1.0 - 2.0 * a],
            [1.0 - 2.0 * b, b, b],
            [b, 1.0 - 2.0 * b, b],
            [b, b, 1.0 - 2.0 * b],
        ],
        [wa, wa, wa, wb, wb, wb],
    )
}

struct TriGeom {
    area: f64,
    /// Barycentric gradients.
    lg: [[f64; 2]; 3],
}

fn tri_geom(mesh: &Mesh, t: usize) -> TriGeom {
    let [i0, i1, i2] = mesh.triangles[t];
    let p0 = mesh.vertices[i0];
    let p1 = mesh.vertices[i1];
    let p2 = mesh.vertices[i2];
    let det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    let area = 0.5 * det;
    let inv = 1.0 / det;
    TriGeom {
        area,
        lg: [
            [(p1[1] - p2[1]) * inv, (p2[0] - p1[0]) * inv],
            [(p2[1] - p0[1]) * inv, (p0[0] - p2[0]) * inv],
            [(p0[1] - p1[1]) * inv, (p1[0] - p0[0]) * inv],
        ],
    }
}

fn p2_nodes_of(mesh: &Mesh, t: usize) -> [usize; 6] {
    let tri = mesh.triangles[t];
    let nv = mesh.num_vertices();
    [
        tri[0],
        tri[1],
        tri[2],
        nv + mesh.tri_edges[t][0],
        nv + mesh.tri_edges[t][1],
        nv + mesh.tri_edges[t][2],
    ]
}

fn p2_vals(l: [f64; 3]) -> [f64; 6] {
    [
        l[0] * (2.0 * l[0] - 1.0),
        l[1] * (2.0 * l[1] - 1.0),
        l[2] * (2.0 * l[2] - 1.0),
        4.0 * l[0] * l[1],
        4.0 * l[1] * l[2],
        4.0 * l[2] * l[0],
    ]
}

fn p2_grads(l: [f64; 3], lg: &[[f64; 2]; 3]) -> [[f64; 2]; 6] {
    let mut g = [[0.0; 2]; 6];
    for c in 0..2 {
        g[0][c] = (4.0 * l[0] - 1.0) * lg[0][c];
        g[1][c] = (4.0 * l[1] - 1.0) * lg[1][c];
        g[2][c] = (4.0 * l[2] - 1.0) * lg[2][c];
        g[3][c] = 4.0 * (l[0] * lg[1][c] + l[1] * lg[0][c]);
        g[4][c] = 4.0 * (l[1] * lg[2][c] + l[2] * lg[1][c]);
        g[5][c] = 4.0 * (l[2] * lg[0][c] + l[0] * lg[2][c]);
    }
    g
}

fn scalar_at(vals: &[f64], tri: [usize; 3], l: [f64; 3]) -> f64 {
    l[0] * vals[tri[0]] + l[1] * vals[tri[1]] + l[2] * vals[tri[2]]
}

fn scalar_grad(vals: &[f64], tri: [usize; 3], lg: &[[f64; 2]; 3]) -> [f64; 2] {
    let mut g = [0.0; 2];
    for k in 0..3 {
        for c in 0..2 {
            g[c] += vals[tri[k]] * lg[k][c];
        }
    }
    g
}

fn tensor_at(vals: &[f64], tri: [usize; 3], l: [f64; 3]) -> Mat2 {
    let mut m = [0.0; 4];
    for k in 0..3 {
        for c in 0..4 {
            m[c] += l[k] * vals[4 * tri[k] + c];
        }
    }
    Mat2(m)
}

fn tensor_grad(vals: &[f64], tri: [usize; 3], lg: &[[f64; 2]; 3]) -> [Mat2; 2] {
    let mut out = [Mat2::ZERO; 2];
    for k in 0..3 {
        for c in 0..4 {
            for d in 0..2 {
                out[d].0[c] += vals[4 * tri[k] + c] * lg[k][d];
            }
        }
    }
    out
}

fn velocity_at(vals: &[f64], nodes: &[usize; 6], sh: &[f64; 6]) -> [f64; 2] {
    let mut v = [0.0; 2];
    for a in 0..6 {
        for c in 0..2 {
            v[c] += sh[a] * vals[2 * nodes[a] + c];
        }
    }
    v
}

fn velocity_grad_at(vals: &[f64], nodes: &[usize; 6], sg: &[[f64; 2]; 6]) -> Mat2 {
    let mut g = Mat2::ZERO;
    for a in 0..6 {
        for c in 0..2 {
            let coeff = vals[2 * nodes[a] + c];
            g.0[2 * c] += coeff * sg[a][0];
            g.0[2 * c + 1] += coeff * sg[a][1];
        }
    }
    g
}

// ---------------------------------------------------------------------------
// Dense operators
// ---------------------------------------------------------------------------

/// Dense P1 scalar mass matrix.
pub fn dense_scalar_mass(mesh: &Mesh) -> Dense {
    let (pts, wts) = oq_rule();
    let n = mesh.num_vertices();
    let mut m = Dense::zeros(n, n);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let g = tri_geom(mesh, t);
        for (l, w) in pts.iter().zip(&wts) {
            let weight = 2.0 * g.area * w;
            for a in 0..3 {
                for b in 0..3 {
                    m.add(tri[a], tri[b], weight * l[a] * l[b]);
                }
            }
        }
    }
    m
}

pub fn dense_scalar_stiffness(mesh: &Mesh, coeff: Option<&[f64]>) -> Dense {
    let (pts, wts) = oq_rule();
    let n = mesh.num_vertices();
    let mut m = Dense::zeros(n, n);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let g = tri_geom(mesh, t);
        for (l, w) in pts.iter().zip(&wts) {
            let c = coeff.map_or(1.0, |cv| scalar_at(cv, tri, *l));
            let weight = 2.0 * g.area * w * c;
            for a in 0..3 {
                for b in 0..3 {
                    m.add(
                        tri[a],
                        tri[b],
                        weight * (g.lg[a][0] * g.lg[b][0] + g.lg[a][1] * g.lg[b][1]),
                    );
                }
            }
        }
    }
    m
}

/// Expand a scalar (n×n) operator to the interleaved 4-component tensor
/// space (4n×4n block-diagonal structure).
fn expand_tensor(scalar: &Dense) -> Dense {
    let n = scalar.n_rows;
    let mut m = Dense::zeros(4 * n, 4 * n);
    for i in 0..n {
        for j in 0..n {
            let v = scalar.at(i, j);
            if v != 0.0 {
                for c in 0..4 {
                    m.add(4 * i + c, 4 * j + c, v);
                }
            }
        }
    }
    m
}

struct DenseStokes {
    a: Dense,
    b: Dense,
    p_weights: Vec<f64>,
    dirichlet: Vec<bool>,
    n_v: usize,
    n_p: usize,
}

fn dense_stokes(mesh: &Mesh, nu: f64) -> DenseStokes {
    let (pts, wts) = oq_rule();
    let nv_nodes = mesh.num_vertices() + mesh.num_edges();
    let n_v = 2 * nv_nodes;
    let n_p = mesh.num_vertices();
    let mut a = Dense::zeros(n_v, n_v);
    let mut b = Dense::zeros(n_p, n_v);
    let mut p_weights = vec![0.0; n_p];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let g = tri_geom(mesh, t);
        let nodes = p2_nodes_of(mesh, t);
        for (l, w) in pts.iter().zip(&wts) {
            let weight = 2.0 * g.area * w;
            let sg = p2_grads(*l, &g.lg);
            for i in 0..6 {
                for j in 0..6 {
                    let lap = weight * nu * (sg[i][0] * sg[j][0] + sg[i][1] * sg[j][1]);
                    for c in 0..2 {
                        a.add(2 * nodes[i] + c, 2 * nodes[j] + c, lap);
                    }
                }
            }
            for q in 0..3 {
                for i in 0..6 {
                    for c in 0..2 {
                        b.add(tri[q], 2 * nodes[i] + c, -weight * l[q] * sg[i][c]);
                    }
                }
            }
            for q in 0..3 {
                p_weights[tri[q]] += weight * l[q];
            }
        }
    }
    let mut dirichlet = vec![false; n_v];
    for v in 0..mesh.num_vertices() {
        if mesh.boundary_vertex_flags[v] {
            dirichlet[2 * v] = true;
            dirichlet[2 * v + 1] = true;
        }
    }
    for e in 0..mesh.num_edges() {
        if mesh.boundary_edge_flags[e] {
            let node = mesh.num_vertices() + e;
            dirichlet[2 * node] = true;
            dirichlet[2 * node + 1] = true;
        }
    }
    DenseStokes {
        a,
        b,
        p_weights,
        dirichlet,
        n_v,
        n_p,
    }
}

impl DenseStokes {
    /// Saddle solve with an explicit Lagrange multiplier enforcing the
    /// weighted zero pressure mean.
    fn solve(&self, rhs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.n_v + self.n_p + 1;
        let mut k = Dense::zeros(n, n);
        let mut b = vec![0.0; n];
        for i in 0..self.n_v {
            if self.dirichlet[i] {
                k.add(i, i, 1.0);
                continue;
            }
            b[i] = rhs[i];
            for j in 0..self.n_v {
                if !self.dirichlet[j] {
                    k.add(i, j, self.a.at(i, j));
                }
            }
            for q in 0..self.n_p {
                k.add(i, self.n_v + q, self.b.at(q, i));
            }
        }
        for q in 0..self.n_p {
            for j in 0..self.n_v {
                if !self.dirichlet[j] {
                    k.add(self.n_v + q, j, self.b.at(q, j));
                }
            }
            k.add(self.n_v + q, n - 1, self.p_weights[q]);
            k.add(n - 1, self.n_v + q, self.p_weights[q]);
        }
        let sol = k.solve(&b)?;
        Ok((sol[..self.n_v].to_vec(), sol[self.n_v..n - 1].to_vec()))
    }
}

// Load vectors ---------------------------------------------------------------

fn dense_cauchy(
    mesh: &Mesh,
    m_vals: &[f64],
    f_vals: &[f64],
    mu: &[f64],
    phi: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (pts, wts) = oq_rule();
    let n_v = 2 * (mesh.num_vertices() + mesh.num_edges());
    let mut mu_grad_phi = vec![0.0; n_v];
    let mut m_ft = vec![0.0; n_v];
    let mut grad_f_m = vec![0.0; n_v];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let g = tri_geom(mesh, t);
        let nodes = p2_nodes_of(mesh, t);
        let pg = scalar_grad(phi, tri, &g.lg);
        let fg = tensor_grad(f_vals, tri, &g.lg);
        for (l, w) in pts.iter().zip(&wts) {
            let weight = 2.0 * g.area * w;
            let sh = p2_vals(*l);
            let sg = p2_grads(*l, &g.lg);
            let mu_val = scalar_at(mu, tri, *l);
            let mval = tensor_at(m_vals, tri, *l);
            let fval = tensor_at(f_vals, tri, *l);
            let stress = mval * fval.transpose();
            let odot = [fg[0].ddot(mval), fg[1].ddot(mval)];
            for a in 0..6 {
                for c in 0..2 {
                    let dof = 2 * nodes[a] + c;
                    mu_grad_phi[dof] += weight * mu_val * pg[c] * sh[a];
                    m_ft[dof] +=
                        weight * (stress.0[2 * c] * sg[a][0] + stress.0[2 * c + 1] * sg[a][1]);
                    grad_f_m[dof] += weight * odot[c] * sh[a];
                }
            }
        }
    }
    (mu_grad_phi, m_ft, grad_f_m)
}

/// (adv, grad) transport load vectors on the tensor space.
fn dense_transport(mesh: &Mesh, v: &[f64], f_vals: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let (pts, wts) = oq_rule();
    let n = 4 * mesh.num_vertices();
    let mut adv = vec![0.0; n];
    let mut grad = vec![0.0; n];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let g = tri_geom(mesh, t);
        let nodes = p2_nodes_of(mesh, t);
        let fg = tensor_grad(f_vals, tri, &g.lg);
        for (l, w) in pts.iter().zip(&wts) {
            let weight = 2.0 * g.area * w;
            let sh = p2_vals(*l);
            let sg = p2_grads(*l, &g.lg);
            let vv = velocity_at(v, &nodes, &sh);
            let vg = velocity_grad_at(v, &nodes, &sg);
            let fval = tensor_at(f_vals, tri, *l);
            let conv = fg[0] * vv[0] + fg[1] * vv[1];
            let rot = vg * fval;
            for k in 0..3 {
                let basis = weight * l[k];
                for c in 0..4 {
                    adv[4 * tri[k] + c] += basis * conv.0[c];
                    grad[4 * tri[k] + c] += basis * rot.0[c];
                }
            }
        }
    }
    (adv, grad)
}

fn dense_phi_transport(mesh: &Mesh, v: &[f64], phi: &[f64]) -> Vec<f64> {
    let (pts, wts) = oq_rule();
    let mut out = vec![0.0; mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let g = tri_geom(mesh, t);
        let nodes = p2_nodes_of(mesh, t);
        let pg = scalar_grad(phi, tri, &g.lg);
        for (l, w) in pts.iter().zip(&wts) {
            let weight = 2.0 * g.area * w;
            let sh = p2_vals(*l);
            let vv = velocity_at(v, &nodes, &sh);
            let conv = vv[0] * pg[0] + vv[1] * pg[1];
            for k in 0..3 {
                out[tri[k]] += weight * l[k] * conv;
            }
        }
    }
    out
}

fn dense_mu_load(
    mesh: &Mesh,
    ledger: &SplitLedger,
    phi_new: &[f64],
    phi_old: &[f64],
    f_new: &[f64],
) -> Vec<f64> {
    let (pts, wts) = oq_rule();
    let mut out = vec![0.0; mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let g = tri_geom(mesh, t);
        for (l, w) in pts.iter().zip(&wts) {
            let val = ledger.mu_nonlinear(
                scalar_at(phi_new, tri, *l),
                scalar_at(phi_old, tri, *l),
                tensor_at(f_new, tri, *l),
            );
            for k in 0..3 {
                out[tri[k]] += 2.0 * g.area * w * l[k] * val;
            }
        }
    }
    out
}

fn dense_mu_jacobian(
    mesh: &Mesh,
    ledger: &SplitLedger,
    phi_new: &[f64],
    phi_old: &[f64],
    f_new: &[f64],
) -> Dense {
    let (pts, wts) = oq_rule();
    let n = mesh.num_vertices();
    let mut m = Dense::zeros(n, n);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let g = tri_geom(mesh, t);
        for (l, w) in pts.iter().zip(&wts) {
            let d = ledger.mu_nonlinear_dphi(
                scalar_at(phi_new, tri, *l),
                scalar_at(phi_old, tri, *l),
                tensor_at(f_new, tri, *l),
            );
            for a in 0..3 {
                for b in 0..3 {
                    m.add(tri[a], tri[b], 2.0 * g.area * w * l[a] * l[b] * d);
                }
            }
        }
    }
    m
}

fn dense_m_load(
    mesh: &Mesh,
    ledger: &SplitLedger,
    phi_old: &[f64],
    f_new: &[f64],
    f_old: &[f64],
) -> Vec<f64> {
    let (pts, wts) = oq_rule();
    let mut out = vec![0.0; 4 * mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let g = tri_geom(mesh, t);
        for (l, w) in pts.iter().zip(&wts) {
            let m = ledger.m_nonlinear(
                scalar_at(phi_old, tri, *l),
                tensor_at(f_new, tri, *l),
                tensor_at(f_old, tri, *l),
            );
            for k in 0..3 {
                let basis = 2.0 * g.area * w * l[k];
                for c in 0..4 {
                    out[4 * tri[k] + c] += basis * m.0[c];
                }
            }
        }
    }
    out
}

fn dense_m_jacobian(mesh: &Mesh, ledger: &SplitLedger, phi_old: &[f64], f_new: &[f64]) -> Dense {
    let (pts, wts) = oq_rule();
    let n = mesh.num_vertices();
    let mut m = Dense::zeros(4 * n, 4 * n);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let g = tri_geom(mesh, t);
        for (l, w) in pts.iter().zip(&wts) {
            let hess =
                ledger.m_nonlinear_df(scalar_at(phi_old, tri, *l), tensor_at(f_new, tri, *l));
            for a in 0..3 {
                for b in 0..3 {
                    let basis = 2.0 * g.area * w * l[a] * l[b];
                    for r in 0..4 {
                        for c in 0..4 {
                            if hess[r][c] != 0.0 {
                                m.add(4 * tri[a] + r, 4 * tri[b] + c, basis * hess[r][c]);
                            }
                        }
                    }
                }
            }
        }
    }
    m
}

fn dense_j_derivative(mesh: &Mesh, model: &EnergyModel, phi: &[f64], f: &[f64]) -> Vec<f64> {
    let (pts, wts) = oq_rule();
    let mut out = vec![0.0; mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let g = tri_geom(mesh, t);
        for (l, w) in pts.iter().zip(&wts) {
            let pv = scalar_at(phi, tri, *l);
            let fv = tensor_at(f, tri, *l);
            let val = model.psi_prime(pv) + model.dw_dphi(pv, fv);
            for k in 0..3 {
                out[tri[k]] += 2.0 * g.area * w * l[k] * val;
            }
        }
    }
    out
}

fn dense_w_derivative(
    mesh: &Mesh,
    model: &EnergyModel,
    phi: &[f64],
    f: &[f64],
) -> Result<Vec<f64>> {
    let (pts, wts) = oq_rule();
    let mut out = vec![0.0; 4 * mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let g = tri_geom(mesh, t);
        for (l, w) in pts.iter().zip(&wts) {
            let pv = scalar_at(phi, tri, *l);
            let fv = tensor_at(f, tri, *l);
            let dw = model.dw_df(pv, fv)?;
            for k in 0..3 {
                let basis = 2.0 * g.area * w * l[k];
                for c in 0..4 {
                    out[4 * tri[k] + c] += basis * dw.0[c];
                }
            }
        }
    }
    Ok(out)
}

fn dense_integrate_j(mesh: &Mesh, model: &EnergyModel, phi: &[f64], f: &[f64]) -> f64 {
    let (pts, wts) = oq_rule();
    let mut total = 0.0;
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let g = tri_geom(mesh, t);
        for (l, w) in pts.iter().zip(&wts) {
            let pv = scalar_at(phi, tri, *l);
            let fv = tensor_at(f, tri, *l);
            total += 2.0 * g.area * w * (model.psi(pv) + model.w(pv, fv));
        }
    }
    total
}

// ---------------------------------------------------------------------------
// Reference time steps
// ---------------------------------------------------------------------------

/// One convex-splitting step computed entirely with the dense machinery
/// above: the same fixed-point sweep and Newton structure, independent
/// assembly and solves.
pub fn oracle_cs_step(
    mesh: &Mesh,
    config: &CsConfig,
    model: &EnergyModel,
    ledger: &SplitLedger,
    state_n: &State,
) -> Result<State> {
    let n = mesh.num_vertices();
    let mass_s = dense_scalar_mass(mesh);
    let k_s = dense_scalar_stiffness(mesh, None);
    let mass_t = expand_tensor(&mass_s);
    let k_t = expand_tensor(&k_s);
    let stokes = dense_stokes(mesh, config.nu);
    let eps = model.epsilon();
    let phi_n = &state_n.phi.values;
    let f_n = &state_n.f.values;

    let elasticity = |v: &[f64], f_init: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        let (adv, grad) = dense_transport(mesh, v, f_n);
        let residual = |f: &[f64]| -> Vec<f64> {
            let nl = dense_m_load(mesh, ledger, phi_n, f, f_n);
            let df: Vec<f64> = f.iter().zip(f_n).map(|(a, b)| a - b).collect();
            let mut r = mass_t.matvec(&df);
            let kf = k_t.matvec(f);
            for i in 0..r.len() {
                r[i] += config.dt * (adv[i] - grad[i])
                    + config.dt * config.gamma * (config.lambda * kf[i] + nl[i]);
            }
            r
        };
        let mut f = f_init.to_vec();
        let mut res = residual(&f);
        let mut rn = math::norm_inf(&res);
        let mut iters = 0;
        while rn > config.newton_tol {
            if iters >= config.newton_max {
                return Err(Error::StepFailure {
                    context: "oracle elasticity Newton",
                    detail: format!("residual {rn:e}"),
                });
            }
            let hess = dense_m_jacobian(mesh, ledger, phi_n, &f);
            let mut jac = mass_t.clone();
            for i in 0..jac.a.len() {
                jac.a[i] += config.dt * config.gamma * (config.lambda * k_t.a[i] + hess.a[i]);
            }
            let neg: Vec<f64> = res.iter().map(|r| -r).collect();
            let delta = jac.solve(&neg)?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..10 {
                let trial: Vec<f64> = f.iter().zip(&delta).map(|(x, d)| x + alpha * d).collect();
                let tres = residual(&trial);
                let tn = math::norm_inf(&tres);
                if tn < rn || tn <= config.newton_tol {
                    f = trial;
                    res = tres;
                    rn = tn;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::StepFailure {
                    context: "oracle elasticity line search",
                    detail: format!("stall at {rn:e}"),
                });
            }
            iters += 1;
        }
        let nl = dense_m_load(mesh, ledger, phi_n, &f, f_n);
        let mut m_rhs = k_t.matvec(&f);
        for (r, l) in m_rhs.iter_mut().zip(&nl) {
            *r = config.lambda * *r + l;
        }
        let m = mass_t.solve(&m_rhs)?;
        Ok((f, m))
    };

    let cahn_hilliard = |v: &[f64],
                         f_new: &[f64],
                         phi_init: &[f64],
                         mu_init: &[f64]|
     -> Result<(Vec<f64>, Vec<f64>)> {
        let cvec = dense_phi_transport(mesh, v, phi_n);
        let b_nodal: Vec<f64> = phi_n.iter().map(|&p| model.mobility(p)).collect();
        let k_b = dense_scalar_stiffness(mesh, Some(&b_nodal));
        let residual = |phi: &[f64], mu: &[f64]| -> Vec<f64> {
            let mut r = vec![0.0; 2 * n];
            let dphi: Vec<f64> = phi.iter().zip(phi_n).map(|(a, b)| a - b).collect();
            let m_dphi = mass_s.matvec(&dphi);
            let kb_mu = k_b.matvec(mu);
            let m_mu = mass_s.matvec(mu);
            let k_phi = k_s.matvec(phi);
            let psi_vec = dense_mu_load(mesh, ledger, phi, phi_n, f_new);
            for i in 0..n {
                r[i] = m_dphi[i] + config.dt * (cvec[i] + kb_mu[i]);
                r[n + i] = m_mu[i] - eps * k_phi[i] - psi_vec[i];
            }
            r
        };
        let mut phi = phi_init.to_vec();
        let mut mu = mu_init.to_vec();
        let mut res = residual(&phi, &mu);
        let mut rn = math::norm_inf(&res);
        let mut iters = 0;
        while rn > config.newton_tol {
            if iters >= config.newton_max {
                return Err(Error::StepFailure {
                    context: "oracle CH Newton",
                    detail: format!("residual {rn:e}"),
                });
            }
            let d = dense_mu_jacobian(mesh, ledger, &phi, phi_n, f_new);
            let mut jac = Dense::zeros(2 * n, 2 * n);
            for i in 0..n {
                for j in 0..n {
                    jac.add(i, j, mass_s.at(i, j));
                    jac.add(n + i, n + j, mass_s.at(i, j));
                    jac.add(i, n + j, config.dt * k_b.at(i, j));
                    jac.add(n + i, j, -eps * k_s.at(i, j) - d.at(i, j));
                }
            }
            let neg: Vec<f64> = res.iter().map(|r| -r).collect();
            let delta = jac.solve(&neg)?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..10 {
                let tphi: Vec<f64> = phi
                    .iter()
                    .zip(&delta[..n])
                    .map(|(x, d)| x + alpha * d)
                    .collect();
                let tmu: Vec<f64> = mu
                    .iter()
                    .zip(&delta[n..])
                    .map(|(x, d)| x + alpha * d)
                    .collect();
                let tres = residual(&tphi, &tmu);
                let tn = math::norm_inf(&tres);
                if tn < rn || tn <= config.newton_tol {
                    phi = tphi;
                    mu = tmu;
                    res = tres;
                    rn = tn;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::StepFailure {
                    context: "oracle CH line search",
                    detail: format!("stall at {rn:e}"),
                });
            }
            iters += 1;
        }
        Ok((phi, mu))
    };

    let mut phi_k = phi_n.clone();
    let mut mu_k = state_n.mu.values.clone();
    let mut f_k = f_n.clone();
    let mut m_k = state_n.m.values.clone();
    let mut v_k = state_n.v.values.clone();
    let mut s_k = state_n.s.values.clone();
    for _sweep in 0..config.fp_max {
        let (mug, mft, gfm) = dense_cauchy(mesh, &m_k, f_n, &mu_k, phi_n);
        let rhs: Vec<f64> = mug
            .iter()
            .zip(&mft)
            .zip(&gfm)
            .map(|((a, b), c)| a - b + c)
            .collect();
        let (v, s) = stokes.solve(&rhs)?;
        let (f, m) = elasticity(&v, &f_k)?;
        let (phi, mu) = cahn_hilliard(&v, &f, &phi_k, &mu_k)?;
        let diff = math::diff_inf(&v, &v_k)
            .max(math::diff_inf(&s, &s_k))
            .max(math::diff_inf(&f, &f_k))
            .max(math::diff_inf(&m, &m_k))
            .max(math::diff_inf(&phi, &phi_k))
            .max(math::diff_inf(&mu, &mu_k));
        v_k = v;
        s_k = s;
        f_k = f;
        m_k = m;
        phi_k = phi;
        mu_k = mu;
        if diff <= config.fp_tol {
            return Ok(State {
                v: Field {
                    space: SpaceKind::P2Vector2,
                    values: v_k,
                },
                s: Field {
                    space: SpaceKind::P1ScalarZeroMean,
                    values: s_k,
                },
                f: Field {
                    space: SpaceKind::P1Tensor2x2,
                    values: f_k,
                },
                m: Field {
                    space: SpaceKind::P1Tensor2x2,
                    values: m_k,
                },
                phi: Field {
                    space: SpaceKind::P1Scalar,
                    values: phi_k,
                },
                mu: Field {
                    space: SpaceKind::P1Scalar,
                    values: mu_k,
                },
                t: state_n.t + config.dt,
            });
        }
    }
    Err(Error::StepFailure {
        context: "oracle fixed point",
        detail: "no convergence".into(),
    })
}

/// One SAV step computed densely.
pub fn oracle_dsav_step(
    mesh: &Mesh,
    config: &DsavConfig,
    model: &EnergyModel,
    state_n: &SavState,
) -> Result<SavState> {
    let n = mesh.num_vertices();
    let dt = config.dt;
    let mass_s = dense_scalar_mass(mesh);
    let k_s = dense_scalar_stiffness(mesh, None);
    let mass_t = expand_tensor(&mass_s);
    let k_t = expand_tensor(&k_s);
    let stokes = dense_stokes(mesh, config.nu);
    let eps = model.epsilon();
    let old = &state_n.state;
    let phi_n = &old.phi.values;
    let f_n = &old.f.values;

    let jvec = dense_j_derivative(mesh, model, phi_n, f_n);
    let wvec = dense_w_derivative(mesh, model, phi_n, f_n)?;
    let s_val = math::sqrt(dense_integrate_j(mesh, model, phi_n, f_n) + model.sav_k);

    let (mug, mft, gfm) = dense_cauchy(mesh, &old.m.values, f_n, &old.mu.values, phi_n);
    let rhs_v: Vec<f64> = mug
        .iter()
        .zip(&mft)
        .zip(&gfm)
        .map(|((a, b), c)| a - b + c)
        .collect();
    let (v1, s1) = stokes.solve(&rhs_v)?;

    // Elasticity: (mass + Δtγλ K) f = rhs on the tensor space.
    let mut helm = mass_t.clone();
    for i in 0..helm.a.len() {
        helm.a[i] += dt * config.gamma * config.lambda * k_t.a[i];
    }
    let f0 = helm.solve(&mass_t.matvec(f_n))?;
    let m0: Vec<f64> = mass_t
        .solve(&k_t.matvec(&f0))?
        .iter()
        .map(|x| config.lambda * x)
        .collect();
    let (adv, grad) = dense_transport(mesh, &v1, f_n);
    let mut rhs1 = vec![0.0; 4 * n];
    for i in 0..4 * n {
        rhs1[i] = -dt * (adv[i] - grad[i]) - dt * config.gamma * wvec[i];
    }
    let f1 = helm.solve(&rhs1)?;
    let mut m1_rhs = k_t.matvec(&f1);
    for (r, w) in m1_rhs.iter_mut().zip(&wvec) {
        *r = config.lambda * *r + w;
    }
    let m1 = mass_t.solve(&m1_rhs)?;

    // Cahn–Hilliard block.
    let b_nodal: Vec<f64> = phi_n.iter().map(|&p| model.mobility(p)).collect();
    let k_b = dense_scalar_stiffness(mesh, Some(&b_nodal));
    let mut ch = Dense::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            ch.add(i, j, mass_s.at(i, j));
            ch.add(n + i, n + j, mass_s.at(i, j));
            ch.add(i, n + j, dt * k_b.at(i, j));
            ch.add(n + i, j, -eps * k_s.at(i, j));
        }
    }
    let mut rhs0 = vec![0.0; 2 * n];
    rhs0[..n].copy_from_slice(&mass_s.matvec(phi_n));
    let sol0 = ch.solve(&rhs0)?;
    let (phi0, mu0) = (sol0[..n].to_vec(), sol0[n..].to_vec());
    let cvec = dense_phi_transport(mesh, &v1, phi_n);
    let mut rhs_1 = vec![0.0; 2 * n];
    for i in 0..n {
        rhs_1[i] = -dt * cvec[i];
        rhs_1[n + i] = jvec[i];
    }
    let sol1 = ch.solve(&rhs_1)?;
    let (phi1, mu1) = (sol1[..n].to_vec(), sol1[n..].to_vec());

    // Scalar equation.
    let dphi0: Vec<f64> = phi0.iter().zip(phi_n).map(|(a, b)| a - b).collect();
    let df0: Vec<f64> = f0.iter().zip(f_n).map(|(a, b)| a - b).collect();
    let q0 = math::dot(&jvec, &dphi0) / dt
        + math::dot(&wvec, &df0) / dt
        + math::dot(&adv, &m0)
        - math::dot(&grad, &m0)
        + math::dot(&cvec, &mu0);
    let q1 = math::dot(&jvec, &phi1) / dt
        + math::dot(&wvec, &f1) / dt
        + math::dot(&adv, &m1)
        - math::dot(&grad, &m1)
        + math::dot(&cvec, &mu1)
        - math::dot(&mug, &v1)
        + math::dot(&mft, &v1)
        - math::dot(&gfm, &v1);
    let bracket = s_val / dt - q1 / (2.0 * s_val);
    if bracket <= 0.0 {
        return Err(Error::StepFailure {
            context: "oracle SAV scalar equation",
            detail: format!("bracket {bracket:e}"),
        });
    }
    let a = (state_n.beta / dt + q0 / (2.0 * s_val)) / bracket;

    let comb = |x0: &[f64], x1: &[f64]| -> Vec<f64> {
        x0.iter().zip(x1).map(|(z, o)| z + a * o).collect()
    };
    Ok(SavState {
        state: State {
            v: Field {
                space: SpaceKind::P2Vector2,
                values: v1.iter().map(|x| a * x).collect(),
            },
            s: Field {
                space: SpaceKind::P1ScalarZeroMean,
                values: s1.iter().map(|x| a * x).collect(),
            },
            f: Field {
                space: SpaceKind::P1Tensor2x2,
                values: comb(&f0, &f1),
            },
            m: Field {
                space: SpaceKind::P1Tensor2x2,
                values: comb(&m0, &m1),
            },
            phi: Field {
                space: SpaceKind::P1Scalar,
                values: comb(&phi0, &phi1),
            },
            mu: Field {
                space: SpaceKind::P1Scalar,
                values: comb(&mu0, &mu1),
            },
            t: old.t + dt,
        },
        beta: a * s_val,
    })
}

/// Field-wise max deviation between two states.
pub fn compare_states(a: &State, b: &State) -> (f64, &'static str) {
    let pairs: [(&'static str, &[f64], &[f64]); 6] = [
        ("v", &a.v.values, &b.v.values),
        ("s", &a.s.values, &b.s.values),
        ("F", &a.f.values, &b.f.values),
        ("M", &a.m.values, &b.m.values),
        ("phi", &a.phi.values, &b.phi.values),
        ("mu", &a.mu.values, &b.mu.values),
    ];
    let mut worst = (0.0, "none");
    for (name, x, y) in pairs {
        let d = math::diff_inf(x, y);
        if d > worst.0 {
            worst = (d, name);
        }
    }
    worst
}
