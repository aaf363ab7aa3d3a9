//! Manufactured-solution checks shared by the test suites.

use crate::assembly::{self, p2_nodes, p2_shapes};
use crate::error::Result;
use crate::math;
use crate::mesh::{build_uniform_mesh, Mesh};
use crate::solve::SaddleSolver;
use alloc::vec;
use alloc::vec::Vec;

/// Degree-8 Dunavant rule on the reference triangle. Weights are halved to
/// match the crate convention (integral = 2 * area * sum of w_q f_q). High
/// enough to integrate the polynomial manufactured solution below
/// essentially exactly.
fn deg8_rule() -> (Vec<[f64; 3]>, Vec<f64>) {
    let mut pts = Vec::new();
    let mut wts = Vec::new();
    pts.push([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]);
    wts.push(0.5 * 0.1443156076777871);
    for (a, w) in [
        (0.0814148234145538, 0.0950916342672846),
        (0.6588613844964797, 0.1032173705347182),
        (0.8989055433659380, 0.0324584976231980),
    ] {
        let b = 0.5 * (1.0 - a);
        for k in 0..3 {
            let mut bary = [b; 3];
            bary[k] = a;
            pts.push(bary);
            wts.push(0.5 * w);
        }
    }
    let (a, b, c) = (0.0083947774099580, 0.2631128296346381, 0.7284923929554040);
    let w = 0.5 * 0.0272303141744349;
    for perm in [
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ] {
        pts.push(perm);
        wts.push(w);
    }
    (pts, wts)
}

fn g(x: f64) -> f64 {
    x * x * (1.0 - x) * (1.0 - x)
}

fn g1(x: f64) -> f64 {
    2.0 * x - 6.0 * x * x + 4.0 * x * x * x
}

fn g2(x: f64) -> f64 {
    2.0 - 12.0 * x + 12.0 * x * x
}

fn g3(x: f64) -> f64 {
    -12.0 + 24.0 * x
}

/// Stream-function solution: v = curl(g(x) g(y)), p = x^3 - 1/4.
fn exact_velocity(x: f64, y: f64) -> [f64; 2] {
    [g(x) * g1(y), -g1(x) * g(y)]
}

fn exact_pressure(x: f64, _y: f64) -> f64 {
    x * x * x - 0.25
}

/// Forcing -nu * lap(v) + grad p for the manufactured pair above.
fn forcing(x: f64, y: f64, nu: f64) -> [f64; 2] {
    let lap_v1 = g2(x) * g1(y) + g(x) * g3(y);
    let lap_v2 = -(g3(x) * g(y) + g1(x) * g2(y));
    [-nu * lap_v1 + 3.0 * x * x, -nu * lap_v2]
}

/// Solve the Stokes problem with the manufactured forcing on an n-by-n
/// uniform mesh and return the L2 errors of velocity and pressure.
pub fn stokes_manufactured_errors(n: usize, nu: f64) -> Result<(f64, f64)> {
    let mesh = build_uniform_mesh(n, n)?;
    let sys = assembly::assemble_stokes(&mesh, nu)?;
    let n_v = 2 * (mesh.num_vertices() + mesh.num_edges());
    let (pts, wts) = deg8_rule();

    let mut rhs = vec![0.0; n_v];
    for t in 0..mesh.num_triangles() {
        let (area, _) = mesh.tri_geometry(t);
        let nodes = p2_nodes(&mesh, t);
        for (bary, w) in pts.iter().zip(&wts) {
            let p = mesh.point(t, *bary);
            let f = forcing(p[0], p[1], nu);
            let sh = p2_shapes(*bary);
            let weight = 2.0 * area * w;
            for a in 0..6 {
                for c in 0..2 {
                    rhs[2 * nodes[a] + c] += weight * f[c] * sh[a];
                }
            }
        }
    }
    let solver = SaddleSolver::new(sys.a, sys.b, &sys.dirichlet, sys.p_weights, 1e-13)?;
    let (v, s) = solver.solve(&rhs)?;

    let mut err_v = 0.0;
    let mut err_p = 0.0;
    for t in 0..mesh.num_triangles() {
        let (area, _) = mesh.tri_geometry(t);
        let nodes = p2_nodes(&mesh, t);
        let tri = mesh.triangles[t];
        for (bary, w) in pts.iter().zip(&wts) {
            let p = mesh.point(t, *bary);
            let sh = p2_shapes(*bary);
            let mut vh = [0.0; 2];
            for a in 0..6 {
                for c in 0..2 {
                    vh[c] += sh[a] * v[2 * nodes[a] + c];
                }
            }
            let ve = exact_velocity(p[0], p[1]);
            let sh_p = bary[0] * s[tri[0]] + bary[1] * s[tri[1]] + bary[2] * s[tri[2]];
            let pe = exact_pressure(p[0], p[1]);
            let weight = 2.0 * area * w;
            err_v += weight
                * ((vh[0] - ve[0]) * (vh[0] - ve[0]) + (vh[1] - ve[1]) * (vh[1] - ve[1]));
            err_p += weight * (sh_p - pe) * (sh_p - pe);
        }
    }
    Ok((math::sqrt(err_v), math::sqrt(err_p)))
}

/// Observed convergence orders across successive mesh halvings.
pub fn stokes_convergence_rates(levels: &[usize], nu: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut errs = Vec::new();
    for &n in levels {
        errs.push(stokes_manufactured_errors(n, nu)?);
    }
    let mut rv = Vec::new();
    let mut rp = Vec::new();
    for k in 1..errs.len() {
        let hr = levels[k] as f64 / levels[k - 1] as f64;
        let log_h = libm::log(hr);
        rv.push(libm::log(errs[k - 1].0 / errs[k].0) / log_h);
        rp.push(libm::log(errs[k - 1].1 / errs[k].1) / log_h);
    }
    Ok((rv, rp))
}

/// Evaluate the full P2 velocity gradient operator: used by symmetry tests
/// that need node coordinates for the mid-edge unknowns.
pub fn p2_node_coords(mesh: &Mesh) -> Vec<[f64; 2]> {
    let mut coords = mesh.vertices.clone();
    for e in &mesh.edges {
        let a = mesh.vertices[e.v[0]];
        let b = mesh.vertices[e.v[1]];
        coords.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
    }
    coords
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deg8_rule_integrates_high_order_monomials() {
        let (pts, wts) = deg8_rule();
        fn fact(n: usize) -> f64 {
            (1..=n).map(|k| k as f64).product()
        }
        // int over the reference triangle of l0^i l1^j l2^k = i!j!k!/(i+j+k+2)!
        // and the rule evaluates it as 2 * area * sum w f = sum w f here.
        for exps in [[0usize, 0, 0], [4, 4, 0], [8, 0, 0], [3, 3, 2]] {
            let mut total = 0.0;
            for (p, w) in pts.iter().zip(&wts) {
                let mut v = *w;
                for (c, &e) in exps.iter().enumerate() {
                    for _ in 0..e {
                        v *= p[c];
                    }
                }
                total += v;
            }
            let target =
                fact(exps[0]) * fact(exps[1]) * fact(exps[2]) / fact(exps.iter().sum::<usize>() + 2);
            assert!(
                (total - target).abs() <= 1e-12 * (1.0 + target.abs()),
                "monomial {exps:?}: got {total:e}, want {target:e}"
            );
        }
    }

    #[test]
    fn manufactured_solution_is_divergence_free() {
        // div v = d/dx (g h') + d/dy (-g' h) = g' h' - g' h' = 0; spot check.
        for (x, y) in [(0.3, 0.7), (0.12, 0.55), (0.9, 0.2)] {
            let hstep = 1e-6;
            let dvx = (exact_velocity(x + hstep, y)[0] - exact_velocity(x - hstep, y)[0])
                / (2.0 * hstep);
            let dvy = (exact_velocity(x, y + hstep)[1] - exact_velocity(x, y - hstep)[1])
                / (2.0 * hstep);
            assert!((dvx + dvy).abs() < 1e-9);
        }
    }

    #[test]
    fn errors_shrink_with_refinement() {
        let (ev8, ep8) = stokes_manufactured_errors(8, 1.0).unwrap();
        let (ev16, ep16) = stokes_manufactured_errors(16, 1.0).unwrap();
        assert!(ev16 < ev8 && ep16 < ep8);
    }
}
