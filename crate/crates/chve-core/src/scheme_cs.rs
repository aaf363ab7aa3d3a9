//! Convex-splitting time stepper for the coupled Cahn–Hilliard /
//! viscoelasticity system, solved by the decoupled fixed-point sweep
//! Stokes → elasticity → Cahn–Hilliard with Newton subsolvers.

use crate::assembly::{
    self, assemble_cauchy_rhs, assemble_phi_transport, assemble_transport_terms, p1_value,
    tensor_value,
};
use crate::diagnostics::{integrate_psi, integrate_w};
use crate::energy::{EnergyModel, SplitLedger};
use crate::error::{Error, Result};
use crate::field::{Field, State};
use crate::math;
use crate::mesh::{Mesh, SpaceKind};
use crate::quad::quadrature_rule;
use crate::solve::{rcm_ordering, solve_spd_cg, BandLu, SaddleSolver};
use crate::sparse::{CooBuilder, Csr};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub struct CsConfig {
    pub dt: f64,
    pub nu: f64,
    pub gamma: f64,
    pub lambda: f64,
    /// Fixed-point tolerance, L∞ across all six fields.
    pub fp_tol: f64,
    pub fp_max: usize,
    /// Newton absolute residual tolerance and iteration cap.
    pub newton_tol: f64,
    pub newton_max: usize,
}

impl CsConfig {
    pub fn new(dt: f64, nu: f64, gamma: f64, lambda: f64) -> CsConfig {
        CsConfig {
            dt,
            nu,
            gamma,
            lambda,
            fp_tol: 1e-8,
            fp_max: 100,
            newton_tol: 1e-11,
            newton_max: 25,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("nu", self.nu),
            ("lambda", self.lambda),
            ("fp_tol", self.fp_tol),
            ("newton_tol", self.newton_tol),
        ] {
            if v <= 0.0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidArgument("gamma must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct CsStats {
    pub fp_iters: usize,
    pub newton_iters_total: usize,
}

/// Assembled operators that stay fixed over a run; the saddle factorization
/// is reused by every sweep of every step.
pub struct CsStepper<'m> {
    pub mesh: &'m Mesh,
    pub config: CsConfig,
    pub model: EnergyModel,
    pub ledger: SplitLedger,
    saddle: SaddleSolver,
    b_t: Csr,
    velocity_dirichlet: Vec<bool>,
    mass_scalar: Csr,
    mass_scalar_lu: BandLu,
    mass_tensor: Csr,
    k_scalar: Csr,
    k_tensor: Csr,
    node_weights: Vec<f64>,
    ch_ordering: Vec<usize>,
}

impl<'m> CsStepper<'m> {
    pub fn new(
        mesh: &'m Mesh,
        config: CsConfig,
        model: EnergyModel,
        ledger: SplitLedger,
    ) -> Result<CsStepper<'m>> {
        config.validate()?;
        model.validate()?;
        let stokes = assembly::assemble_stokes(mesh, config.nu)?;
        let b_t = stokes.b.transpose();
        let mut velocity_dirichlet = vec![false; stokes.a.n_rows];
        for &d in &stokes.dirichlet {
            velocity_dirichlet[d] = true;
        }
        let saddle = SaddleSolver::new(
            stokes.a,
            stokes.b,
            &stokes.dirichlet,
            stokes.p_weights,
            1e-12,
        )?;
        let mass_scalar = assembly::assemble_mass(mesh, SpaceKind::P1Scalar, None)?;
        let mass_scalar_lu = BandLu::factor(&mass_scalar)?;
        let mass_tensor = assembly::assemble_mass(mesh, SpaceKind::P1Tensor2x2, None)?;
        let k_scalar = assembly::assemble_stiffness(mesh, SpaceKind::P1Scalar, None)?;
        let k_tensor = assembly::assemble_stiffness(mesh, SpaceKind::P1Tensor2x2, None)?;

        let n = mesh.num_vertices();
        let mut node_weights = vec![0.0; n];
        for t in 0..mesh.num_triangles() {
            let third = mesh.tri_area(t) / 3.0;
            for v in mesh.triangles[t] {
                node_weights[v] += third;
            }
        }

        // The Cahn–Hilliard Newton matrix has a fixed sparsity pattern
        // (mass + stiffness blocks); compute its fill-reducing ordering once.
        let mut pattern = CooBuilder::new(2 * n, 2 * n);
        for i in 0..n {
            let (cols, _) = mass_scalar.row(i);
            for &j in cols {
                pattern.push(i, j, 1.0);
                pattern.push(n + i, n + j, 1.0);
            }
            let (cols, _) = k_scalar.row(i);
            for &j in cols {
                pattern.push(i, n + j, 1.0);
                pattern.push(n + i, j, 1.0);
            }
        }
        let ch_ordering = rcm_ordering(&pattern.into_csr());

        Ok(CsStepper {
            mesh,
            config,
            model,
            ledger,
            saddle,
            b_t,
            velocity_dirichlet,
            mass_scalar,
            mass_scalar_lu,
            mass_tensor,
            k_scalar,
            k_tensor,
            node_weights,
            ch_ordering,
        })
    }

    /// Initial state from (φ⁰, F⁰): velocity and pressure zero, the dual
    /// fields μ⁰ and M⁰ recovered from their defining equations evaluated at
    /// the initial data.
    pub fn init_state(&self, phi: Field, f: Field) -> Result<State> {
        let mut state = State::zeros(self.mesh);
        let mu_load = assemble_mu_load(self.mesh, &self.ledger, &phi.values, &phi.values, &f.values)?;
        let mut mu_rhs = self.k_scalar.matvec(&phi.values);
        for (r, l) in mu_rhs.iter_mut().zip(&mu_load) {
            *r = self.model.epsilon() * *r + l;
        }
        state.mu.values = self.mass_scalar_lu.solve(&mu_rhs);

        let m_load = assemble_m_load(self.mesh, &self.ledger, &phi.values, &f.values, &f.values)?;
        let mut m_rhs = self.k_tensor.matvec(&f.values);
        for (r, l) in m_rhs.iter_mut().zip(&m_load) {
            *r = self.config.lambda * *r + l;
        }
        state.m.values = self.tensor_mass_solve(&m_rhs);
        state.phi = phi;
        state.f = f;
        Ok(state)
    }

    /// Apply the inverse tensor mass matrix (block-diagonal per component).
    fn tensor_mass_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = self.mesh.num_vertices();
        let mut out = vec![0.0; 4 * n];
        let mut comp = vec![0.0; n];
        for c in 0..4 {
            for i in 0..n {
                comp[i] = rhs[4 * i + c];
            }
            let sol = self.mass_scalar_lu.solve(&comp);
            for i in 0..n {
                out[4 * i + c] = sol[i];
            }
        }
        out
    }

    /// Step 1: Stokes with the frozen capillary/elastic forcing.
    pub fn stokes_substep(
        &self,
        mu_k: &[f64],
        m_k: &[f64],
        phi_n: &[f64],
        f_n: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let rhs = assemble_cauchy_rhs(self.mesh, m_k, f_n, mu_k, phi_n)?.combined();
        self.saddle.solve(&rhs)
    }

    /// Step 2: the (F, M) block with M eliminated; Newton on F with the SPD
    /// Jacobian mass + Δt·γ·(λ·stiffness + convex Hessians).
    pub fn elasticity_substep(
        &self,
        v: &[f64],
        phi_n: &[f64],
        f_n: &[f64],
        f_init: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let cfg = &self.config;
        let transport = assemble_transport_terms(self.mesh, v, f_n)?;
        let t_vec: Vec<f64> = transport
            .adv
            .iter()
            .zip(&transport.grad)
            .map(|(a, g)| a - g)
            .collect();

        let residual = |f: &[f64]| -> Result<Vec<f64>> {
            let nl = assemble_m_load(self.mesh, &self.ledger, phi_n, f, f_n)?;
            let mut r = vec![0.0; f.len()];
            let df: Vec<f64> = f.iter().zip(f_n).map(|(a, b)| a - b).collect();
            self.mass_tensor.matvec_add(&df, 1.0, &mut r);
            for (ri, ti) in r.iter_mut().zip(&t_vec) {
                *ri += cfg.dt * ti;
            }
            self.k_tensor
                .matvec_add(f, cfg.dt * cfg.gamma * cfg.lambda, &mut r);
            for (ri, ni) in r.iter_mut().zip(&nl) {
                *ri += cfg.dt * cfg.gamma * ni;
            }
            Ok(r)
        };

        let mut f = f_init.to_vec();
        let mut res = residual(&f)?;
        let mut rn = math::norm_inf(&res);
        let mut iters = 0;
        while rn > cfg.newton_tol {
            if iters >= cfg.newton_max {
                return Err(Error::StepFailure {
                    context: "elasticity Newton",
                    detail: format!("residual {rn:e} after {iters} iterations"),
                });
            }
            let hess = assemble_m_jacobian(self.mesh, &self.ledger, phi_n, &f)?;
            let jac = self
                .mass_tensor
                .add_scaled(&self.k_tensor, cfg.dt * cfg.gamma * cfg.lambda)?
                .add_scaled(&hess, cfg.dt * cfg.gamma)?;
            let neg: Vec<f64> = res.iter().map(|r| -r).collect();
            let delta = solve_spd_cg(&jac, &neg, 1e-13, None)?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..10 {
                let trial: Vec<f64> = f
                    .iter()
                    .zip(&delta)
                    .map(|(fi, di)| fi + alpha * di)
                    .collect();
                let tres = residual(&trial)?;
                let tn = math::norm_inf(&tres);
                if tn < rn || tn <= cfg.newton_tol {
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
                    context: "elasticity Newton line search",
                    detail: format!("no descent from residual {rn:e}"),
                });
            }
            iters += 1;
        }

        // Recover M from its defining equation (mass solve), which the
        // eliminated system satisfies up to the Newton residual.
        let nl = assemble_m_load(self.mesh, &self.ledger, phi_n, &f, f_n)?;
        let mut m_rhs = self.k_tensor.matvec(&f);
        for (r, l) in m_rhs.iter_mut().zip(&nl) {
            *r = cfg.lambda * *r + l;
        }
        let m = self.tensor_mass_solve(&m_rhs);
        Ok((f, m, iters))
    }

    /// Step 3: the (φ, μ) block, Newton on the 2n coupled system.
    pub fn cahn_hilliard_substep(
        &self,
        v: &[f64],
        f_new: &[f64],
        phi_n: &[f64],
        phi_init: &[f64],
        mu_init: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, usize)> {
        let cfg = &self.config;
        let n = self.mesh.num_vertices();
        let cvec = assemble_phi_transport(self.mesh, v, phi_n)?;
        let b_nodal: Vec<f64> = phi_n.iter().map(|&p| self.model.mobility(p)).collect();
        let k_b = assembly::assemble_stiffness(self.mesh, SpaceKind::P1Scalar, Some(&b_nodal))?;
        let eps = self.model.epsilon();

        let residual = |phi: &[f64], mu: &[f64]| -> Result<Vec<f64>> {
            let mut r = vec![0.0; 2 * n];
            let dphi: Vec<f64> = phi.iter().zip(phi_n).map(|(a, b)| a - b).collect();
            let m_dphi = self.mass_scalar.matvec(&dphi);
            let kb_mu = k_b.matvec(mu);
            for i in 0..n {
                r[i] = m_dphi[i] + cfg.dt * cvec[i] + cfg.dt * kb_mu[i];
            }
            let m_mu = self.mass_scalar.matvec(mu);
            let k_phi = self.k_scalar.matvec(phi);
            let psi_vec = assemble_mu_load(self.mesh, &self.ledger, phi, phi_n, f_new)?;
            for i in 0..n {
                r[n + i] = m_mu[i] - eps * k_phi[i] - psi_vec[i];
            }
            Ok(r)
        };

        let mut phi = phi_init.to_vec();
        let mut mu = mu_init.to_vec();
        let mut res = residual(&phi, &mu)?;
        let mut rn = math::norm_inf(&res);
        let mut iters = 0;
        while rn > cfg.newton_tol {
            if iters >= cfg.newton_max {
                return Err(Error::StepFailure {
                    context: "Cahn-Hilliard Newton",
                    detail: format!("residual {rn:e} after {iters} iterations"),
                });
            }
            let d = assemble_mu_jacobian(self.mesh, &self.ledger, &phi, phi_n, f_new)?;
            let mut builder = CooBuilder::new(2 * n, 2 * n);
            for i in 0..n {
                let (cols, vals) = self.mass_scalar.row(i);
                for (&j, &val) in cols.iter().zip(vals) {
                    builder.push(i, j, val);
                    builder.push(n + i, n + j, val);
                }
                let (cols, vals) = k_b.row(i);
                for (&j, &val) in cols.iter().zip(vals) {
                    builder.push(i, n + j, cfg.dt * val);
                }
                let (cols, vals) = self.k_scalar.row(i);
                for (&j, &val) in cols.iter().zip(vals) {
                    builder.push(n + i, j, -eps * val);
                }
                let (cols, vals) = d.row(i);
                for (&j, &val) in cols.iter().zip(vals) {
                    builder.push(n + i, j, -val);
                }
            }
            let jac = builder.into_csr();
            let lu = BandLu::factor_with_ordering(&jac, self.ch_ordering.clone())?;
            let neg: Vec<f64> = res.iter().map(|r| -r).collect();
            let delta = lu.solve(&neg);
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
                let tres = residual(&tphi, &tmu)?;
                let tn = math::norm_inf(&tres);
                if tn < rn || tn <= cfg.newton_tol {
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
                    context: "Cahn-Hilliard Newton line search",
                    detail: format!("no descent from residual {rn:e}"),
                });
            }
            iters += 1;
        }
        Ok((phi, mu, iters))
    }

    /// One full time step: fixed-point sweeps until the L∞ change across all
    /// six fields drops below the tolerance, then the coupled-system
    /// residual, mass-conservation, and energy-decrease checks.
    pub fn step(&self, state_n: &State) -> Result<(State, CsStats)> {
        let cfg = &self.config;
        let phi_n = &state_n.phi.values;
        let f_n = &state_n.f.values;

        let mut phi_k = phi_n.clone();
        let mut mu_k = state_n.mu.values.clone();
        let mut f_k = f_n.clone();
        let mut m_k = state_n.m.values.clone();
        let mut v_k = state_n.v.values.clone();
        let mut s_k = state_n.s.values.clone();

        let mut stats = CsStats::default();
        let mut converged = false;
        let mut last_diff = f64::INFINITY;
        while stats.fp_iters < cfg.fp_max {
            let (v, s) = self.stokes_substep(&mu_k, &m_k, phi_n, f_n)?;
            let (f, m, it_el) = self.elasticity_substep(&v, phi_n, f_n, &f_k)?;
            let (phi, mu, it_ch) = self.cahn_hilliard_substep(&v, &f, phi_n, &phi_k, &mu_k)?;
            stats.newton_iters_total += it_el + it_ch;
            stats.fp_iters += 1;

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
            last_diff = diff;
            if diff <= cfg.fp_tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::StepFailure {
                context: "fixed-point iteration",
                detail: format!(
                    "no convergence after {} sweeps; last L∞ change {last_diff:e}",
                    stats.fp_iters
                ),
            });
        }

        let mut state = State {
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
            t: state_n.t + cfg.dt,
        };
        if !state.is_finite() {
            return Err(Error::StepFailure {
                context: "fixed-point iteration",
                detail: "non-finite values in accepted iterate".into(),
            });
        }

        self.check_coupled_residual(state_n, &state)?;

        // Mass conservation.
        let mass_new = math::dot(&self.node_weights, &state.phi.values);
        let mass_old = math::dot(&self.node_weights, phi_n);
        if math::abs(mass_new - mass_old) > 1e-10 {
            return Err(Error::StepFailure {
                context: "mass conservation",
                detail: format!("∫φ drifted by {:e}", mass_new - mass_old),
            });
        }

        // Energy decrease of the Lyapunov functional.
        let l_old = self.lyapunov(state_n);
        let l_new = self.lyapunov(&state);
        if l_new > l_old + 1e-10 * (1.0 + math::abs(l_old)) {
            return Err(Error::StepFailure {
                context: "energy decrease",
                detail: format!("Lyapunov increased: {l_old} -> {l_new}"),
            });
        }

        // The semiconvexity shift is only valid while |F| stays inside the
        // configured ball.
        let max_f = crate::diagnostics::max_tensor_norm(&state.f);
        if max_f > self.ledger.f_max {
            return Err(Error::StepFailure {
                context: "deformation bound",
                detail: format!("max|F| = {max_f} exceeds the splitting bound {}", self.ledger.f_max),
            });
        }

        state.t = state_n.t + cfg.dt;
        Ok((state, stats))
    }

    /// Lyapunov functional of the scheme (potential terms plus gradient
    /// energies).
    pub fn lyapunov(&self, state: &State) -> f64 {
        let bulk = integrate_psi(self.mesh, &self.model, &state.phi.values)
            + integrate_w(self.mesh, &self.model, &state.phi.values, &state.f.values);
        bulk + 0.5 * self.model.epsilon()
            * self.k_scalar.bilinear(&state.phi.values, &state.phi.values)
            + 0.5 * self.config.lambda * self.k_tensor.bilinear(&state.f.values, &state.f.values)
    }

    /// Per-step dissipation Δt(ν‖∇v‖² + γ‖M‖² + ∫b(φⁿ)|∇μ|²) of the discrete
    /// energy law; `phi_n` is the previous phase field (mobility freeze).
    pub fn dissipation(&self, state_new: &State, phi_n: &[f64]) -> Result<f64> {
        let cfg = &self.config;
        let visc = self.saddle.a.bilinear(&state_new.v.values, &state_new.v.values);
        let relax = self
            .mass_tensor
            .bilinear(&state_new.m.values, &state_new.m.values);
        let b_nodal: Vec<f64> = phi_n.iter().map(|&p| self.model.mobility(p)).collect();
        let k_b = assembly::assemble_stiffness(self.mesh, SpaceKind::P1Scalar, Some(&b_nodal))?;
        let mob = k_b.bilinear(&state_new.mu.values, &state_new.mu.values);
        Ok(cfg.dt * (visc + cfg.gamma * relax + mob))
    }

    fn check_coupled_residual(&self, state_n: &State, state: &State) -> Result<()> {
        let cfg = &self.config;
        let tol = 10.0 * cfg.fp_tol;
        let n = self.mesh.num_vertices();
        let phi_n = &state_n.phi.values;
        let f_n = &state_n.f.values;

        let mut worst: (&'static str, f64) = ("", 0.0);
        let mut record = |name: &'static str, r: f64| {
            if r > worst.1 {
                worst = (name, r);
            }
        };

        // Momentum: A v + Bᵀ s − forcing, away from the boundary.
        let forcing =
            assemble_cauchy_rhs(self.mesh, &state.m.values, f_n, &state.mu.values, phi_n)?
                .combined();
        let mut r_v = self.saddle.a.matvec(&state.v.values);
        self.b_t.matvec_add(&state.s.values, 1.0, &mut r_v);
        let mut mom: f64 = 0.0;
        for i in 0..r_v.len() {
            if !self.velocity_dirichlet[i] {
                mom = mom.max(math::abs(r_v[i] - forcing[i]));
            }
        }
        record("momentum", mom);
        record("continuity", math::norm_inf(&self.saddle.b.matvec(&state.v.values)));

        // F-equation.
        let transport = assemble_transport_terms(self.mesh, &state.v.values, f_n)?;
        let df: Vec<f64> = state
            .f
            .values
            .iter()
            .zip(f_n)
            .map(|(a, b)| a - b)
            .collect();
        let mut r_f = self.mass_tensor.matvec(&df);
        self.mass_tensor
            .matvec_add(&state.m.values, cfg.dt * cfg.gamma, &mut r_f);
        for i in 0..r_f.len() {
            r_f[i] += cfg.dt * (transport.adv[i] - transport.grad[i]);
        }
        record("deformation transport", math::norm_inf(&r_f));

        // M-equation.
        let nl = assemble_m_load(self.mesh, &self.ledger, phi_n, &state.f.values, f_n)?;
        let mut r_m = self.mass_tensor.matvec(&state.m.values);
        self.k_tensor
            .matvec_add(&state.f.values, -cfg.lambda, &mut r_m);
        for (r, l) in r_m.iter_mut().zip(&nl) {
            *r -= l;
        }
        record("dual variable", math::norm_inf(&r_m));

        // φ-equation.
        let cvec = assemble_phi_transport(self.mesh, &state.v.values, phi_n)?;
        let b_nodal: Vec<f64> = phi_n.iter().map(|&p| self.model.mobility(p)).collect();
        let k_b = assembly::assemble_stiffness(self.mesh, SpaceKind::P1Scalar, Some(&b_nodal))?;
        let dphi: Vec<f64> = state
            .phi
            .values
            .iter()
            .zip(phi_n)
            .map(|(a, b)| a - b)
            .collect();
        let mut r_phi = self.mass_scalar.matvec(&dphi);
        k_b.matvec_add(&state.mu.values, cfg.dt, &mut r_phi);
        for i in 0..n {
            r_phi[i] += cfg.dt * cvec[i];
        }
        record("phase transport", math::norm_inf(&r_phi));

        // μ-equation.
        let psi_vec =
            assemble_mu_load(self.mesh, &self.ledger, &state.phi.values, phi_n, &state.f.values)?;
        let mut r_mu = self.mass_scalar.matvec(&state.mu.values);
        self.k_scalar
            .matvec_add(&state.phi.values, -self.model.epsilon(), &mut r_mu);
        for (r, p) in r_mu.iter_mut().zip(&psi_vec) {
            *r -= p;
        }
        record("chemical potential", math::norm_inf(&r_mu));

        if worst.1 > tol {
            return Err(Error::SolverFailure {
                context: "coupled residual after fixed point",
                residual: worst.1,
                tolerance: tol,
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Discrete nonlinear forms of the split scheme
// ---------------------------------------------------------------------------

/// `out[a] = ∫ μ_split(φ(x), φⁿ(x), F(x)) N_a`, the sign-resolved nonlinear
/// part of the μ-equation. Sign branches are taken per quadrature point.
pub fn assemble_mu_load(
    mesh: &Mesh,
    ledger: &SplitLedger,
    phi_new: &[f64],
    phi_old: &[f64],
    f_new: &[f64],
) -> Result<Vec<f64>> {
    let rule = quadrature_rule(4)?;
    let mut out = vec![0.0; mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area2 = 2.0 * mesh.tri_area(t);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let pn = p1_value(phi_new, tri, *p);
            let po = p1_value(phi_old, tri, *p);
            let fv = tensor_value(f_new, tri, *p);
            let val = ledger.mu_nonlinear(pn, po, fv);
            for k in 0..3 {
                out[tri[k]] += area2 * w * p[k] * val;
            }
        }
    }
    Ok(out)
}

/// Jacobian of `assemble_mu_load` with respect to the new phase field.
pub fn assemble_mu_jacobian(
    mesh: &Mesh,
    ledger: &SplitLedger,
    phi_new: &[f64],
    phi_old: &[f64],
    f_new: &[f64],
) -> Result<Csr> {
    let rule = quadrature_rule(4)?;
    let n = mesh.num_vertices();
    let mut builder = CooBuilder::new(n, n);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area2 = 2.0 * mesh.tri_area(t);
        let mut local = [[0.0; 3]; 3];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let pn = p1_value(phi_new, tri, *p);
            let po = p1_value(phi_old, tri, *p);
            let fv = tensor_value(f_new, tri, *p);
            let d = area2 * w * ledger.mu_nonlinear_dphi(pn, po, fv);
            for a in 0..3 {
                for b in 0..3 {
                    local[a][b] += d * p[a] * p[b];
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                builder.push(tri[a], tri[b], local[a][b]);
            }
        }
    }
    Ok(builder.into_csr())
}

/// `out[4a+c] = ∫ M_split(φⁿ(x), F(x), Fⁿ(x)) : Θ_{a,c}`, the sign-resolved
/// nonlinear part of the M-equation.
pub fn assemble_m_load(
    mesh: &Mesh,
    ledger: &SplitLedger,
    phi_old: &[f64],
    f_new: &[f64],
    f_old: &[f64],
) -> Result<Vec<f64>> {
    let rule = quadrature_rule(4)?;
    let mut out = vec![0.0; 4 * mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area2 = 2.0 * mesh.tri_area(t);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let po = p1_value(phi_old, tri, *p);
            let fv = tensor_value(f_new, tri, *p);
            let fo = tensor_value(f_old, tri, *p);
            let m = ledger.m_nonlinear(po, fv, fo);
            for k in 0..3 {
                let basis = area2 * w * p[k];
                for c in 0..4 {
                    out[4 * tri[k] + c] += basis * m.0[c];
                }
            }
        }
    }
    Ok(out)
}

/// Jacobian of `assemble_m_load` with respect to the new deformation field.
pub fn assemble_m_jacobian(
    mesh: &Mesh,
    ledger: &SplitLedger,
    phi_old: &[f64],
    f_new: &[f64],
) -> Result<Csr> {
    let rule = quadrature_rule(4)?;
    let n = mesh.num_vertices();
    let mut builder = CooBuilder::new(4 * n, 4 * n);
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area2 = 2.0 * mesh.tri_area(t);
        // Accumulate the 12x12 element block over quadrature points before
        // pushing, so the triplet list stays one entry per element pair.
        let mut local = [[[[0.0; 4]; 4]; 3]; 3];
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let po = p1_value(phi_old, tri, *p);
            let fv = tensor_value(f_new, tri, *p);
            let hess = ledger.m_nonlinear_df(po, fv);
            for a in 0..3 {
                for b in 0..3 {
                    let basis = area2 * w * p[a] * p[b];
                    let block = &mut local[a][b];
                    for r in 0..4 {
                        for c in 0..4 {
                            block[r][c] += basis * hess[r][c];
                        }
                    }
                }
            }
        }
        for a in 0..3 {
            for b in 0..3 {
                for r in 0..4 {
                    for c in 0..4 {
                        builder.push(4 * tri[a] + r, 4 * tri[b] + c, local[a][b][r][c]);
                    }
                }
            }
        }
    }
    Ok(builder.into_csr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::build_split_ledger;
    use crate::mesh::build_uniform_mesh;
    use crate::rng::SplitMix64;
    use crate::tensor::Mat2;

    fn tc1_setup(gamma: f64) -> (EnergyModel, SplitLedger, CsConfig) {
        let model = EnergyModel::shape_memory(0.1, 0.002, 10.0, 0.5);
        let ledger = build_split_ledger(&model).unwrap();
        let config = CsConfig::new(2e-7, 1.0, gamma, 0.001);
        (model, ledger, config)
    }

    fn random_phi(mesh: &Mesh, mean: f64, amp: f64, seed: u64) -> Field {
        let mut rng = SplitMix64::new(seed);
        let mut phi = Field::zeros(SpaceKind::P1Scalar, mesh);
        for v in phi.values.iter_mut() {
            *v = mean + amp * (2.0 * rng.next_f64() - 1.0);
        }
        phi
    }

    #[test]
    fn stationary_pure_phase_is_fixed() {
        let mesh = build_uniform_mesh(4, 4).unwrap();
        let (model, ledger, config) = tc1_setup(1.0);
        let stepper = CsStepper::new(&mesh, config, model, ledger).unwrap();
        let phi = Field::constant(SpaceKind::P1Scalar, &mesh, 0.0);
        let f = Field::constant_tensor(&mesh, Mat2::identity());
        let state = stepper.init_state(phi, f).unwrap();
        assert!(math::norm_inf(&state.mu.values) < 1e-12);
        assert!(math::norm_inf(&state.m.values) < 1e-12);
        let (next, stats) = stepper.step(&state).unwrap();
        assert_eq!(stats.fp_iters, 1);
        assert!(math::diff_inf(&next.phi.values, &state.phi.values) < 1e-12);
        assert!(math::diff_inf(&next.f.values, &state.f.values) < 1e-12);
        assert!(math::norm_inf(&next.v.values) < 1e-12);
        assert!(math::norm_inf(&next.mu.values) < 1e-12);
        assert!(math::norm_inf(&next.m.values) < 1e-12);
    }

    #[test]
    fn stationary_sheared_phase_is_fixed() {
        let mesh = build_uniform_mesh(4, 4).unwrap();
        let (model, ledger, config) = tc1_setup(1.0);
        let stepper = CsStepper::new(&mesh, config, model.clone(), ledger).unwrap();
        let phi = Field::constant(SpaceKind::P1Scalar, &mesh, 1.0);
        let f = Field::constant_tensor(&mesh, model.f_tilde(1.0));
        let state = stepper.init_state(phi, f).unwrap();
        assert!(math::norm_inf(&state.mu.values) < 1e-11);
        assert!(math::norm_inf(&state.m.values) < 1e-11);
        let (next, _) = stepper.step(&state).unwrap();
        assert!(math::diff_inf(&next.phi.values, &state.phi.values) < 1e-12);
        assert!(math::diff_inf(&next.f.values, &state.f.values) < 1e-12);
        assert!(math::norm_inf(&next.v.values) < 1e-12);
    }

    #[test]
    fn gamma_zero_keeps_deformation_without_flow() {
        let mesh = build_uniform_mesh(4, 4).unwrap();
        let (model, ledger, _) = tc1_setup(1.0);
        let config = CsConfig::new(2e-7, 1.0, 0.0, 0.001);
        let stepper = CsStepper::new(&mesh, config, model, ledger).unwrap();
        let mut rng = SplitMix64::new(5);
        let mut f = Field::constant_tensor(&mesh, Mat2::identity());
        for v in f.values.iter_mut() {
            *v += 0.01 * (2.0 * rng.next_f64() - 1.0);
        }
        // Zero velocity and γ = 0: the F-update is the identity.
        let (f_new, _, _) = stepper
            .elasticity_substep(
                &vec![0.0; 2 * (mesh.num_vertices() + mesh.num_edges())],
                &vec![0.3; mesh.num_vertices()],
                &f.values,
                &f.values,
            )
            .unwrap();
        assert!(math::diff_inf(&f_new, &f.values) < 1e-12);
    }

    #[test]
    fn newton_quadratic_convergence_on_perturbed_identity() {
        // Track the elasticity Newton residuals by hand on a small problem.
        let mesh = build_uniform_mesh(4, 4).unwrap();
        let (model, ledger, config) = tc1_setup(1.0);
        let _ = (model, ledger);
        let mut rng = SplitMix64::new(7);
        let n = mesh.num_vertices();
        let phi_n = vec![0.4; n];
        let mut f_n = Field::constant_tensor(&mesh, Mat2::identity()).values;
        for v in f_n.iter_mut() {
            *v += 0.05 * (2.0 * rng.next_f64() - 1.0);
        }
        // Use a large relaxation so the nonlinearity actually matters.
        let mut cfg = config;
        cfg.dt = 1e-2;
        cfg.gamma = 1.0;
        let big = CsStepper::new(
            &mesh,
            cfg.clone(),
            EnergyModel::shape_memory(0.1, 0.002, 10.0, 0.5),
            build_split_ledger(&EnergyModel::shape_memory(0.1, 0.002, 10.0, 0.5)).unwrap(),
        )
        .unwrap();
        let zero_v = vec![0.0; 2 * (mesh.num_vertices() + mesh.num_edges())];

        // Manual Newton loop mirroring the solver, recording residuals.
        let transport = assemble_transport_terms(&mesh, &zero_v, &f_n).unwrap();
        let t_vec: Vec<f64> = transport.adv.iter().zip(&transport.grad).map(|(a, g)| a - g).collect();
        let residual = |f: &[f64]| -> Vec<f64> {
            let nl = assemble_m_load(&mesh, &big.ledger, &phi_n, f, &f_n).unwrap();
            let mut r = vec![0.0; f.len()];
            let df: Vec<f64> = f.iter().zip(&f_n).map(|(a, b)| a - b).collect();
            big.mass_tensor.matvec_add(&df, 1.0, &mut r);
            for (ri, ti) in r.iter_mut().zip(&t_vec) {
                *ri += cfg.dt * ti;
            }
            big.k_tensor.matvec_add(f, cfg.dt * cfg.gamma * cfg.lambda, &mut r);
            for (ri, ni) in r.iter_mut().zip(&nl) {
                *ri += cfg.dt * cfg.gamma * ni;
            }
            r
        };
        let mut f = f_n.clone();
        let mut norms = alloc::vec![];
        for _ in 0..8 {
            let res = residual(&f);
            let rn = math::norm_inf(&res);
            norms.push(rn);
            if rn < 1e-14 {
                break;
            }
            let hess = assemble_m_jacobian(&mesh, &big.ledger, &phi_n, &f).unwrap();
            let jac = big
                .mass_tensor
                .add_scaled(&big.k_tensor, cfg.dt * cfg.gamma * cfg.lambda)
                .unwrap()
                .add_scaled(&hess, cfg.dt * cfg.gamma)
                .unwrap();
            let neg: Vec<f64> = res.iter().map(|r| -r).collect();
            let delta = solve_spd_cg(&jac, &neg, 1e-14, None).unwrap();
            for (fi, di) in f.iter_mut().zip(&delta) {
                *fi += di;
            }
        }
        // Quadratic convergence: log-residual slope ≥ 1.8 over the last
        // meaningful pair of iterations.
        let mut slopes = alloc::vec![];
        for w in norms.windows(3) {
            if w[2] > 1e-15 && w[1] < w[0] {
                let s = (w[2].ln() - w[1].ln()) / (w[1].ln() - w[0].ln());
                slopes.push(s);
            }
        }
        assert!(
            slopes.iter().any(|&s| s >= 1.8),
            "no quadratic phase observed: norms {norms:?}"
        );
    }

    #[test]
    fn pure_cahn_hilliard_limit_decreases_energy() {
        // ζ → 0 decouples elasticity; a single step from a smooth perturbation
        // must decrease E_CH.
        let mesh = build_uniform_mesh(8, 8).unwrap();
        let model = EnergyModel::shape_memory(0.1, 0.002, 1e-12, 0.5);
        let ledger = build_split_ledger(&model).unwrap();
        let config = CsConfig::new(1e-6, 1.0, 1.0, 0.001);
        let stepper = CsStepper::new(&mesh, config, model.clone(), ledger).unwrap();
        let mut phi = Field::zeros(SpaceKind::P1Scalar, &mesh);
        for v in 0..mesh.num_vertices() {
            let [x, _] = mesh.vertices[v];
            phi.values[v] = 0.5 + 0.01 * math::cos(2.0 * core::f64::consts::PI * x);
        }
        let f = Field::constant_tensor(&mesh, Mat2::identity());
        let state = stepper.init_state(phi, f).unwrap();
        let ctx = crate::diagnostics::DiagnosticsCtx::new(&mesh).unwrap();
        let e0 = ctx.e_ch(&mesh, &model, &state.phi);
        let (next, _) = stepper.step(&state).unwrap();
        let e1 = ctx.e_ch(&mesh, &model, &next.phi);
        assert!(e1 < e0, "E_CH did not decrease: {e0} -> {e1}");
    }

    #[test]
    fn tc1_first_step_decreases_energy_and_conserves_mass() {
        let mesh = build_uniform_mesh(8, 8).unwrap();
        let (model, ledger, config) = tc1_setup(1.0);
        let stepper = CsStepper::new(&mesh, config, model, ledger).unwrap();
        let phi = random_phi(&mesh, 0.3, 0.5, 42);
        let f = Field::constant_tensor(&mesh, Mat2::identity());
        let state = stepper.init_state(phi, f).unwrap();
        let l0 = stepper.lyapunov(&state);
        let mass0 = math::dot(&stepper.node_weights, &state.phi.values);
        let (next, stats) = stepper.step(&state).unwrap();
        let l1 = stepper.lyapunov(&next);
        assert!(l1 < l0, "Lyapunov did not decrease: {l0} -> {l1}");
        let mass1 = math::dot(&stepper.node_weights, &next.phi.values);
        assert!(math::abs(mass1 - mass0) < 1e-10);
        assert!(stats.fp_iters >= 1);

        // The decrease dominates the physical dissipation (the discrete
        // energy law has additional nonnegative numerical dissipation).
        let d = stepper.dissipation(&next, &state.phi.values).unwrap();
        assert!(d >= 0.0);
        assert!(l0 - l1 + 1e-12 >= d, "decrease {} < dissipation {d}", l0 - l1);
    }

    #[test]
    fn stokes_substep_zero_forcing() {
        let mesh = build_uniform_mesh(4, 4).unwrap();
        let (model, ledger, config) = tc1_setup(1.0);
        let stepper = CsStepper::new(&mesh, config, model, ledger).unwrap();
        let n = mesh.num_vertices();
        let (v, s) = stepper
            .stokes_substep(
                &vec![0.0; n],
                &vec![0.0; 4 * n],
                &vec![0.7; n],
                &Field::constant_tensor(&mesh, Mat2::identity()).values,
            )
            .unwrap();
        assert!(math::norm_inf(&v) < 1e-13);
        assert!(math::norm_inf(&s) < 1e-13);
    }
}
