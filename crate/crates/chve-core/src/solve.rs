//! Sparse linear solvers: banded LU with partial pivoting behind a
//! reverse-Cuthill–McKee reordering (the direct workhorse), preconditioned
//! conjugate gradients for SPD systems, and a monolithic saddle-point solver
//! for the Taylor–Hood Stokes blocks.

use crate::error::{Error, Result};
use crate::math;
use crate::sparse::{CooBuilder, Csr};
use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Reverse Cuthill–McKee ordering of the symmetrized sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn rcm_ordering(a: &Csr) -> Vec<usize> {
    let n = a.n_rows;
    let at = a.transpose();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        let (cols, _) = a.row(i);
        for &j in cols {
            if i != j {
                adj[i].push(j);
            }
        }
        let (cols, _) = at.row(i);
        for &j in cols {
            if i != j {
                adj[i].push(j);
            }
        }
    }
    for nbrs in &mut adj {
        nbrs.sort_unstable();
        nbrs.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(|v| v.len()).collect();

    let mut order = Vec::with_capacity(n);
    let mut visited = vec![false; n];
    loop {
        // Lowest-degree unvisited vertex seeds the next component.
        let mut start = None;
        for v in 0..n {
            if !visited[v] && start.map_or(true, |s: usize| degree[v] < degree[s]) {
                start = Some(v);
            }
        }
        let Some(start) = start else { break };
        visited[start] = true;
        let mut queue = VecDeque::new();
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            for u in nbrs {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// LU factorization with partial pivoting of a banded matrix, stored in
/// LAPACK `dgbtrf` layout (kl extra superdiagonals absorb pivoting fill).
pub struct BandLu {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
    ipiv: Vec<usize>,
    /// `perm[new] = old` ordering applied before factorization.
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
}

impl BandLu {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.ab[j * self.ldab + (self.kl + self.ku + i - j)]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.ab[j * self.ldab + (self.kl + self.ku + i - j)]
    }

    /// Factor `a` after RCM reordering.
    pub fn factor(a: &Csr) -> Result<BandLu> {
        let perm = rcm_ordering(a);
        BandLu::factor_with_ordering(a, perm)
    }

    pub fn factor_with_ordering(a: &Csr, perm: Vec<usize>) -> Result<BandLu> {
        let n = a.n_rows;
        if a.n_cols != n {
            return Err(Error::InvalidArgument(format!(
                "band factorization needs a square matrix, got {}x{}",
                a.n_rows, a.n_cols
            )));
        }
        let mut inv_perm = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv_perm[old] = new;
        }
        let (mut kl, mut ku) = (0usize, 0usize);
        for i_old in 0..n {
            let i = inv_perm[i_old];
            let (cols, _) = a.row(i_old);
            for &j_old in cols {
                let j = inv_perm[j_old];
                if i > j {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        let ldab = 2 * kl + ku + 1;
        let mut lu = BandLu {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; n * ldab],
            ipiv: vec![0; n],
            perm,
            inv_perm,
        };
        for i_old in 0..n {
            let i = lu.inv_perm[i_old];
            let (cols, vals) = a.row(i_old);
            for (&j_old, &v) in cols.iter().zip(vals) {
                *lu.at_mut(i, lu.inv_perm[j_old]) = v;
            }
        }

        // Unblocked banded Gaussian elimination with partial pivoting.
        let width = lu.kl + lu.ku;
        for j in 0..n {
            let km = lu.kl.min(n - 1 - j);
            let mut piv = j;
            let mut piv_val = math::abs(lu.at(j, j));
            for i in (j + 1)..=(j + km) {
                let v = math::abs(lu.at(i, j));
                if v > piv_val {
                    piv = i;
                    piv_val = v;
                }
            }
            if piv_val == 0.0 {
                return Err(Error::SolverFailure {
                    context: "banded LU",
                    residual: f64::INFINITY,
                    tolerance: 0.0,
                });
            }
            lu.ipiv[j] = piv;
            let jmax = n.min(j + width + 1);
            if piv != j {
                for c in j..jmax {
                    let tmp = lu.at(j, c);
                    *lu.at_mut(j, c) = lu.at(piv, c);
                    *lu.at_mut(piv, c) = tmp;
                }
            }
            // Column-at-a-time elimination: band columns are contiguous in
            // the LAPACK layout, so both the multiplier column and each
            // updated column are walked with unit stride.
            let off = lu.kl + lu.ku;
            let diag = lu.at(j, j);
            {
                let jcol = &mut lu.ab[j * lu.ldab..(j + 1) * lu.ldab];
                for i in (j + 1)..=(j + km) {
                    jcol[off + i - j] /= diag;
                }
            }
            if km > 0 {
                for c in (j + 1)..jmax {
                    let u = lu.at(j, c);
                    if u != 0.0 {
                        let (head, tail) = lu.ab.split_at_mut(c * lu.ldab);
                        let jcol = &head[j * lu.ldab..(j + 1) * lu.ldab];
                        let ccol = &mut tail[..lu.ldab];
                        for i in (j + 1)..=(j + km) {
                            ccol[off + i - c] -= jcol[off + i - j] * u;
                        }
                    }
                }
            }
        }
        Ok(lu)
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = b[self.perm[i]];
        }
        for j in 0..n {
            let piv = self.ipiv[j];
            if piv != j {
                y.swap(j, piv);
            }
            let km = self.kl.min(n - 1 - j);
            let yj = y[j];
            if yj != 0.0 {
                for i in (j + 1)..=(j + km) {
                    y[i] -= self.at(i, j) * yj;
                }
            }
        }
        // Column-oriented back substitution: once x_j is known, its column of
        // U is subtracted from the pending entries with unit stride.
        let width = self.kl + self.ku;
        let off = self.kl + self.ku;
        for j in (0..n).rev() {
            let xj = y[j] / self.at(j, j);
            y[j] = xj;
            if xj != 0.0 {
                let imin = j.saturating_sub(width);
                let jcol = &self.ab[j * self.ldab..(j + 1) * self.ldab];
                for i in imin..j {
                    y[i] -= jcol[off + i - j] * xj;
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in 0..n {
            x[self.perm[i]] = y[i];
        }
        x
    }
}

fn residual_norm(a: &Csr, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let mut r = 0.0;
    for i in 0..b.len() {
        let d = ax[i] - b[i];
        r += d * d;
    }
    math::sqrt(r)
}

/// Direct solve for symmetric positive definite systems.
///
/// The residual contract ‖Ax − b‖ ≤ rel_tol·‖b‖ is verified before
/// returning.
pub fn solve_spd(a: &Csr, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    solve_general(a, b, rel_tol)
}

/// Jacobi-preconditioned conjugate gradients for SPD systems.
pub fn solve_spd_cg(a: &Csr, b: &[f64], rel_tol: f64, x0: Option<&[f64]>) -> Result<Vec<f64>> {
    let n = a.n_rows;
    let mut diag = vec![0.0; n];
    for i in 0..n {
        let d = a.get(i, i);
        if d <= 0.0 {
            return Err(Error::SolverFailure {
                context: "CG (non-positive diagonal)",
                residual: d,
                tolerance: 0.0,
            });
        }
        diag[i] = 1.0 / d;
    }
    let norm_b = math::norm2(b);
    let target = rel_tol * norm_b;
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut r = b.to_vec();
    let ax = a.matvec(&x);
    for i in 0..n {
        r[i] -= ax[i];
    }
    if math::norm2(&r) <= target || norm_b == 0.0 {
        return Ok(x);
    }
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = math::dot(&r, &z);
    let max_iter = 20 * n + 100;
    for _ in 0..max_iter {
        let ap = a.matvec(&p);
        let pap = math::dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::SolverFailure {
                context: "CG (matrix not SPD)",
                residual: pap,
                tolerance: 0.0,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if math::norm2(&r) <= target {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * diag[i];
        }
        let rz_new = math::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::SolverFailure {
        context: "CG (iteration cap)",
        residual: math::norm2(&r),
        tolerance: target,
    })
}

/// Direct solve for general nonsingular systems (RCM + banded LU with
/// partial pivoting), with a residual contract check.
pub fn solve_general(a: &Csr, b: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    let lu = BandLu::factor(a)?;
    let x = lu.solve(b);
    let res = residual_norm(a, &x, b);
    let target = rel_tol * math::norm2(b).max(f64::MIN_POSITIVE);
    if res > target && res > rel_tol {
        return Err(Error::SolverFailure {
            context: "direct solve",
            residual: res,
            tolerance: target,
        });
    }
    Ok(x)
}

/// Monolithic solver for the Stokes saddle-point system
/// `[[A, Bᵀ], [B, 0]] (v, p) = (f, 0)` with velocity Dirichlet rows already
/// eliminated in `A` and pressure fixed to zero mean.
///
/// Implementation: one pressure dof is pinned to zero (the dropped
/// continuity row is a linear combination of the others because the P1
/// pressure basis is a partition of unity and the velocity space is H¹₀),
/// the resulting nonsingular system is factored once, and the pressure is
/// shifted to zero weighted mean afterwards — equivalent to appending a
/// scalar mean-value Lagrange multiplier, but it keeps the matrix banded.
pub struct SaddleSolver {
    pub a: Csr,
    pub b: Csr,
    pub p_weights: Vec<f64>,
    dirichlet_mask: Vec<bool>,
    lu: BandLu,
    rel_tol: f64,
    n_v: usize,
    n_p: usize,
}

impl SaddleSolver {
    pub fn new(
        a: Csr,
        b: Csr,
        dirichlet: &[usize],
        p_weights: Vec<f64>,
        rel_tol: f64,
    ) -> Result<SaddleSolver> {
        let n_v = a.n_rows;
        let n_p = b.n_rows;
        if b.n_cols != n_v || p_weights.len() != n_p {
            return Err(Error::InvalidArgument(format!(
                "saddle block shapes inconsistent: A {}x{}, B {}x{}, {} weights",
                a.n_rows, a.n_cols, b.n_rows, b.n_cols, p_weights.len()
            )));
        }
        let mut dirichlet_mask = vec![false; n_v];
        for &d in dirichlet {
            dirichlet_mask[d] = true;
        }
        let n = n_v + n_p;
        let mut k = CooBuilder::new(n, n);
        for i in 0..n_v {
            let (cols, vals) = a.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                k.push(i, j, v);
            }
        }
        let bt = b.transpose();
        for i in 0..n_v {
            if dirichlet_mask[i] {
                continue;
            }
            let (cols, vals) = bt.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                k.push(i, n_v + j, v);
            }
        }
        // Pressure dof 0 is pinned; remaining continuity rows kept.
        for j in 1..n_p {
            let (cols, vals) = b.row(j);
            for (&i, &v) in cols.iter().zip(vals) {
                if !dirichlet_mask[i] {
                    k.push(n_v + j, i, v);
                }
            }
        }
        k.push(n_v, n_v, 1.0);
        let lu = BandLu::factor(&k.into_csr())?;
        Ok(SaddleSolver {
            a,
            b,
            p_weights,
            dirichlet_mask,
            lu,
            rel_tol,
            n_v,
            n_p,
        })
    }

    pub fn solve(&self, f: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if f.len() != self.n_v {
            return Err(Error::InvalidArgument(format!(
                "rhs length {} does not match velocity dof count {}",
                f.len(),
                self.n_v
            )));
        }
        let mut rhs = vec![0.0; self.n_v + self.n_p];
        for i in 0..self.n_v {
            rhs[i] = if self.dirichlet_mask[i] { 0.0 } else { f[i] };
        }
        let sol = self.lu.solve(&rhs);
        let mut v = sol[..self.n_v].to_vec();
        let mut p = sol[self.n_v..].to_vec();
        for (i, vi) in v.iter_mut().enumerate() {
            if self.dirichlet_mask[i] {
                *vi = 0.0;
            }
        }
        // Shift to zero weighted mean; Bᵀ·1 = 0 keeps the momentum residual.
        let total_w: f64 = self.p_weights.iter().sum();
        let mean = math::dot(&self.p_weights, &p) / total_w;
        for pi in &mut p {
            *pi -= mean;
        }

        // Residual contract on both blocks.
        let norm_f = math::norm2(f).max(1e-300);
        let mut r1 = self.a.matvec(&v);
        let btp = self.b.transpose().matvec(&p);
        for i in 0..self.n_v {
            if self.dirichlet_mask[i] {
                r1[i] = v[i];
            } else {
                r1[i] += btp[i] - f[i];
            }
        }
        let r2 = self.b.matvec(&v);
        let res = math::sqrt(math::dot(&r1, &r1) + math::dot(&r2, &r2));
        let target = (self.rel_tol * norm_f).max(self.rel_tol);
        if res > target {
            return Err(Error::SolverFailure {
                context: "saddle-point solve",
                residual: res,
                tolerance: target,
            });
        }
        Ok((v, p))
    }
}

/// One-shot saddle solve; see [`SaddleSolver`].
pub fn solve_saddle(
    a: &Csr,
    b: &Csr,
    f: &[f64],
    dirichlet: &[usize],
    p_weights: &[f64],
    rel_tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let solver = SaddleSolver::new(a.clone(), b.clone(), dirichlet, p_weights.to_vec(), rel_tol)?;
    solver.solve(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn csr_from_dense(d: &[&[f64]]) -> Csr {
        let mut b = CooBuilder::new(d.len(), d[0].len());
        for (i, row) in d.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                b.push(i, j, v);
            }
        }
        b.into_csr()
    }

    #[test]
    fn identity_solves() {
        let a = Csr::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 0.0];
        let x = solve_spd(&a, &b, 1e-12).unwrap();
        assert_eq!(x, b.to_vec());
    }

    #[test]
    fn hand_solved_2x2() {
        let a = csr_from_dense(&[&[2.0, 1.0], &[1.0, 2.0]]);
        let x = solve_spd(&a, &[3.0, 3.0], 1e-12).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn permutation_matrix() {
        let a = csr_from_dense(&[&[0.0, 1.0], &[1.0, 0.0]]);
        let x = solve_general(&a, &[1.0, 2.0], 1e-12).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-14);
        assert!((x[1] - 1.0).abs() < 1e-14);
    }

    /// Dense partial-pivot elimination used only as a test oracle.
    fn dense_solve(a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        let mut m = a;
        for j in 0..n {
            let piv = (j..n).max_by(|&x, &y| m[x][j].abs().total_cmp(&m[y][j].abs())).unwrap();
            m.swap(j, piv);
            b.swap(j, piv);
            for i in (j + 1)..n {
                let l = m[i][j] / m[j][j];
                for c in j..n {
                    m[i][c] -= l * m[j][c];
                }
                b[i] -= l * b[j];
            }
        }
        for j in (0..n).rev() {
            for c in (j + 1)..n {
                b[j] -= m[j][c] * b[c];
            }
            b[j] /= m[j][j];
        }
        b
    }

    #[test]
    fn random_sparse_matches_dense_oracle() {
        let n = 50;
        let mut rng = SplitMix64::new(7);
        let mut dense = vec![vec![0.0; n]; n];
        let mut builder = CooBuilder::new(n, n);
        for i in 0..n {
            // Diagonally dominant, mildly sparse.
            for _ in 0..5 {
                let j = (rng.next_u64() as usize) % n;
                let v = rng.uniform(-1.0, 1.0);
                dense[i][j] += v;
                builder.push(i, j, v);
            }
            dense[i][i] += 10.0;
            builder.push(i, i, 10.0);
        }
        let a = builder.into_csr();
        let b: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let x = solve_general(&a, &b, 1e-12).unwrap();
        let x_ref = dense_solve(dense, b);
        for i in 0..n {
            assert!((x[i] - x_ref[i]).abs() <= 1e-9, "entry {i}");
        }
    }

    #[test]
    fn cg_agrees_with_direct() {
        let n = 120;
        let mut builder = CooBuilder::new(n, n);
        for i in 0..n {
            builder.push(i, i, 2.5);
            if i + 1 < n {
                builder.push(i, i + 1, -1.0);
                builder.push(i + 1, i, -1.0);
            }
        }
        let a = builder.into_csr();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x_direct = solve_spd(&a, &b, 1e-13).unwrap();
        let x_cg = solve_spd_cg(&a, &b, 1e-13, None).unwrap();
        for i in 0..n {
            assert!((x_direct[i] - x_cg[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn singular_matrix_reported() {
        let a = csr_from_dense(&[&[1.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(
            solve_general(&a, &[1.0, 0.0], 1e-12),
            Err(Error::SolverFailure { .. })
        ));
    }

    #[test]
    fn saddle_zero_rhs() {
        // Tiny hand-built saddle problem: A = I (2 velocity dofs), one
        // pressure dof pinned plus another constrained through B.
        let a = Csr::identity(2);
        let b = csr_from_dense(&[&[1.0, -1.0], &[-1.0, 1.0]]);
        let (v, p) = solve_saddle(&a, &b, &[0.0, 0.0], &[], &[0.5, 0.5], 1e-12).unwrap();
        assert!(v.iter().all(|&x| x.abs() < 1e-14));
        assert!(p.iter().all(|&x| x.abs() < 1e-14));
    }
}
