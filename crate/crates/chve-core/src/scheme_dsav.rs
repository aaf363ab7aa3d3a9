//! Decoupled scalar-auxiliary-variable (SAV) time stepper. Each step splits
//! into zero- and first-order linear subsystems via the ansatz
//! X = X₀ + A·X₁, followed by a scalar equation for A; the scheme is linear,
//! needs no convex splitting, and satisfies a discrete energy identity
//! exactly (up to solver tolerance).

use crate::assembly::{
    self, assemble_cauchy_rhs, assemble_phi_transport, assemble_transport_terms, p1_value,
    tensor_value, CauchyRhs, TransportTerms,
};
use crate::diagnostics::{integrate_psi, integrate_w};
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::field::{Field, SavState, State};
use crate::math;
use crate::mesh::{Mesh, SpaceKind};
use crate::quad::quadrature_rule;
use crate::solve::{rcm_ordering, BandLu, SaddleSolver};
use crate::sparse::{CooBuilder, Csr};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone)]
pub struct DsavConfig {
    pub dt: f64,
    pub nu: f64,
    pub gamma: f64,
    pub lambda: f64,
}

impl DsavConfig {
    pub fn new(dt: f64, nu: f64, gamma: f64, lambda: f64) -> DsavConfig {
        DsavConfig {
            dt,
            nu,
            gamma,
            lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dt <= 0.0 || self.nu <= 0.0 || self.lambda <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "dt, nu, lambda must be positive (got {}, {}, {})",
                self.dt, self.nu, self.lambda
            )));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidArgument("gamma must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Per-step scalars worth logging.
#[derive(Debug, Clone)]
pub struct DsavStats {
    /// Left bracket of the scalar equation; must stay strictly positive.
    pub bracket: f64,
    pub a_coeff: f64,
    /// |β² − (∫j + k)| after the step (reported, not asserted).
    pub beta_drift: f64,
}

/// Zero- and first-order partial solutions plus the frozen-coefficient
/// vectors entering the scalar equation.
pub struct DsavPartials {
    pub v1: Vec<f64>,
    pub s1: Vec<f64>,
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
    pub m0: Vec<f64>,
    pub m1: Vec<f64>,
    pub phi0: Vec<f64>,
    pub phi1: Vec<f64>,
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    /// ∫ ∂_φ j(φⁿ,Fⁿ) N_a.
    pub jvec: Vec<f64>,
    /// ∫ ∂_F w(φⁿ,Fⁿ) : Θ_a.
    pub wvec: Vec<f64>,
    /// φ-transport with v₁ and φⁿ.
    pub cvec: Vec<f64>,
    /// Tensor transport with v₁ and Fⁿ.
    pub transport: TransportTerms,
    /// Momentum forcing pieces frozen at (μⁿ, Mⁿ, φⁿ, Fⁿ).
    pub cauchy: CauchyRhs,
    /// S = sqrt(∫ j(φⁿ,Fⁿ) + k).
    pub s_val: f64,
}

pub struct DsavStepper<'m> {
    pub mesh: &'m Mesh,
    pub config: DsavConfig,
    pub model: EnergyModel,
    saddle: SaddleSolver,
    b_t: Csr,
    velocity_dirichlet: Vec<bool>,
    mass_scalar: Csr,
    mass_scalar_lu: BandLu,
    mass_tensor: Csr,
    k_scalar: Csr,
    k_tensor: Csr,
    /// Factorization of (mass + Δt·γ·λ·stiffness) on scalars; the tensor
    /// elasticity operator is this block applied per component.
    helm_lu: BandLu,
    node_weights: Vec<f64>,
    ch_ordering: Vec<usize>,
    /// With a constant mobility the coupled phase/potential matrix does not
    /// change between steps, so its factorization is reused.
    ch_lu_const: Option<BandLu>,
}

/// Assemble the coupled 2n×2n phase/potential matrix
/// [[M, Δt·K_b], [−ε·K, M]].
fn ch_system(
    n: usize,
    mass: &Csr,
    k_b: &Csr,
    k_scalar: &Csr,
    dt: f64,
    eps: f64,
) -> Csr {
    let mut builder = CooBuilder::new(2 * n, 2 * n);
    for i in 0..n {
        let (cols, vals) = mass.row(i);
        for (&j, &val) in cols.iter().zip(vals) {
            builder.push(i, j, val);
            builder.push(n + i, n + j, val);
        }
        let (cols, vals) = k_b.row(i);
        for (&j, &val) in cols.iter().zip(vals) {
            builder.push(i, n + j, dt * val);
        }
        let (cols, vals) = k_scalar.row(i);
        for (&j, &val) in cols.iter().zip(vals) {
            builder.push(n + i, j, -eps * val);
        }
    }
    builder.into_csr()
}

impl<'m> DsavStepper<'m> {
    pub fn new(mesh: &'m Mesh, config: DsavConfig, model: EnergyModel) -> Result<DsavStepper<'m>> {
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
        let helm = mass_scalar.add_scaled(&k_scalar, config.dt * config.gamma * config.lambda)?;
        let helm_lu = BandLu::factor(&helm)?;

        let n = mesh.num_vertices();
        let mut node_weights = vec![0.0; n];
        for t in 0..mesh.num_triangles() {
            let third = mesh.tri_area(t) / 3.0;
            for v in mesh.triangles[t] {
                node_weights[v] += third;
            }
        }

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

        let ch_lu_const = if model.b0 == model.b1 {
            let b_nodal = vec![model.b0; n];
            let k_b = assembly::assemble_stiffness(mesh, SpaceKind::P1Scalar, Some(&b_nodal))?;
            let sys = ch_system(n, &mass_scalar, &k_b, &k_scalar, config.dt, model.epsilon());
            Some(BandLu::factor_with_ordering(&sys, ch_ordering.clone())?)
        } else {
            None
        };

        Ok(DsavStepper {
            mesh,
            config,
            model,
            saddle,
            b_t,
            velocity_dirichlet,
            mass_scalar,
            mass_scalar_lu,
            mass_tensor,
            k_scalar,
            k_tensor,
            helm_lu,
            node_weights,
            ch_ordering,
            ch_lu_const,
        })
    }

    /// Startup state: v = 0, μ = 0, M = 0 and β = sqrt(∫j(φ⁰,F⁰) + k).
    pub fn init_state(&self, phi: Field, f: Field) -> Result<SavState> {
        let mut state = State::zeros(self.mesh);
        let j = integrate_psi(self.mesh, &self.model, &phi.values)
            + integrate_w(self.mesh, &self.model, &phi.values, &f.values);
        state.phi = phi;
        state.f = f;
        Ok(SavState {
            state,
            beta: math::sqrt(j + self.model.sav_k),
        })
    }

    fn tensor_solve(&self, lu: &BandLu, rhs: &[f64]) -> Vec<f64> {
        let n = self.mesh.num_vertices();
        let mut out = vec![0.0; 4 * n];
        let mut comp = vec![0.0; n];
        for c in 0..4 {
            for i in 0..n {
                comp[i] = rhs[4 * i + c];
            }
            let sol = lu.solve(&comp);
            for i in 0..n {
                out[4 * i + c] = sol[i];
            }
        }
        out
    }

    fn mobility_stiffness(&self, phi_n: &[f64]) -> Result<Csr> {
        let b_nodal: Vec<f64> = phi_n.iter().map(|&p| self.model.mobility(p)).collect();
        assembly::assemble_stiffness(self.mesh, SpaceKind::P1Scalar, Some(&b_nodal))
    }

    pub fn solve_subsystems(&self, state_n: &SavState) -> Result<DsavPartials> {
        let cfg = &self.config;
        let n = self.mesh.num_vertices();
        let old = &state_n.state;
        let phi_n = &old.phi.values;
        let f_n = &old.f.values;

        let jvec = assemble_j_derivative(self.mesh, &self.model, phi_n, f_n)?;
        let wvec = assemble_w_derivative(self.mesh, &self.model, phi_n, f_n)?;
        let j_int = integrate_psi(self.mesh, &self.model, phi_n)
            + integrate_w(self.mesh, &self.model, phi_n, f_n);
        let s_arg = j_int + self.model.sav_k;
        if s_arg <= 0.0 {
            return Err(Error::StepFailure {
                context: "SAV normalization",
                detail: format!("∫j + k = {s_arg} not positive"),
            });
        }
        let s_val = math::sqrt(s_arg);

        // Stokes subsystem: the zero-order solution is identically zero; the
        // first-order one carries all frozen forcing.
        let cauchy = assemble_cauchy_rhs(self.mesh, &old.m.values, f_n, &old.mu.values, phi_n)?;
        let (v1, s1) = self.saddle.solve(&cauchy.combined())?;

        // Elasticity subsystem.
        let mass_fn = self.tensor_matvec_mass(f_n);
        let f0 = self.tensor_solve(&self.helm_lu, &mass_fn);
        // Recover M₀ from its defining equation (mass solve of λ·K·F₀) rather
        // than from the time difference, which would amplify solver roundoff
        // by 1/(Δt·γ).
        let kf = self.k_tensor.matvec(&f0);
        let m0: Vec<f64> = self
            .tensor_solve(&self.mass_scalar_lu, &kf)
            .iter()
            .map(|x| cfg.lambda * x)
            .collect();

        let transport = assemble_transport_terms(self.mesh, &v1, f_n)?;
        let mut rhs1 = vec![0.0; 4 * n];
        for i in 0..4 * n {
            rhs1[i] = -cfg.dt * (transport.adv[i] - transport.grad[i])
                - cfg.dt * cfg.gamma * wvec[i];
        }
        let f1 = self.tensor_solve(&self.helm_lu, &rhs1);
        let mut m1_rhs = self.k_tensor.matvec(&f1);
        for (r, w) in m1_rhs.iter_mut().zip(&wvec) {
            *r = cfg.lambda * *r + w;
        }
        let m1 = self.tensor_solve(&self.mass_scalar_lu, &m1_rhs);

        // Cahn–Hilliard subsystem: reuse the cached factorization for a
        // constant mobility, otherwise factor once per step.
        let ch_lu_step;
        let ch_lu = match &self.ch_lu_const {
            Some(lu) => lu,
            None => {
                let k_b = self.mobility_stiffness(phi_n)?;
                let sys = ch_system(
                    n,
                    &self.mass_scalar,
                    &k_b,
                    &self.k_scalar,
                    cfg.dt,
                    self.model.epsilon(),
                );
                ch_lu_step = BandLu::factor_with_ordering(&sys, self.ch_ordering.clone())?;
                &ch_lu_step
            }
        };

        let mass_phin = self.mass_scalar.matvec(phi_n);
        let mut rhs0 = vec![0.0; 2 * n];
        rhs0[..n].copy_from_slice(&mass_phin);
        let sol0 = ch_lu.solve(&rhs0);
        let (phi0, mu0) = (sol0[..n].to_vec(), sol0[n..].to_vec());

        let cvec = assemble_phi_transport(self.mesh, &v1, phi_n)?;
        let mut rhs_1 = vec![0.0; 2 * n];
        for i in 0..n {
            rhs_1[i] = -cfg.dt * cvec[i];
            rhs_1[n + i] = jvec[i];
        }
        let sol1 = ch_lu.solve(&rhs_1);
        let (phi1, mu1) = (sol1[..n].to_vec(), sol1[n..].to_vec());

        Ok(DsavPartials {
            v1,
            s1,
            f0,
            f1,
            m0,
            m1,
            phi0,
            phi1,
            mu0,
            mu1,
            jvec,
            wvec,
            cvec,
            transport,
            cauchy,
            s_val,
        })
    }

    fn tensor_matvec_mass(&self, f: &[f64]) -> Vec<f64> {
        self.mass_tensor.matvec(f)
    }

    /// Scalar equation for A: the ansatz substituted into the discrete
    /// β-update gives `bracket · A = βⁿ/Δt + Q₀/(2S)` with
    /// `bracket = S/Δt − Q₁/(2S)`; positivity of the bracket is part of the
    /// scheme's well-posedness.
    pub fn compute_sav_coefficient(
        &self,
        partials: &DsavPartials,
        state_n: &SavState,
    ) -> Result<(f64, f64, f64)> {
        let cfg = &self.config;
        let p = partials;
        let old = &state_n.state;
        let dt = cfg.dt;

        let q0 = {
            let dphi: Vec<f64> = p
                .phi0
                .iter()
                .zip(&old.phi.values)
                .map(|(a, b)| a - b)
                .collect();
            let df: Vec<f64> = p
                .f0
                .iter()
                .zip(&old.f.values)
                .map(|(a, b)| a - b)
                .collect();
            math::dot(&p.jvec, &dphi) / dt
                + math::dot(&p.wvec, &df) / dt
                + math::dot(&p.transport.adv, &p.m0)
                - math::dot(&p.transport.grad, &p.m0)
                + math::dot(&p.cvec, &p.mu0)
        };
        let q1 = math::dot(&p.jvec, &p.phi1) / dt
            + math::dot(&p.wvec, &p.f1) / dt
            + math::dot(&p.transport.adv, &p.m1)
            - math::dot(&p.transport.grad, &p.m1)
            + math::dot(&p.cvec, &p.mu1)
            - math::dot(&p.cauchy.mu_grad_phi, &p.v1)
            + math::dot(&p.cauchy.m_ft, &p.v1)
            - math::dot(&p.cauchy.grad_f_m, &p.v1);

        let bracket = p.s_val / dt - q1 / (2.0 * p.s_val);
        if bracket <= 0.0 {
            return Err(Error::StepFailure {
                context: "SAV scalar equation",
                detail: format!("non-positive bracket {bracket:e}"),
            });
        }
        let rhs = state_n.beta / dt + q0 / (2.0 * p.s_val);
        let a = rhs / bracket;
        Ok((a, a * p.s_val, bracket))
    }

    /// Assemble the new state from the ansatz X = X₀ + A·X₁.
    pub fn reconstruct(&self, partials: &DsavPartials, a: f64, beta_next: f64, t_new: f64) -> SavState {
        let p = partials;
        let comb = |x0: &[f64], x1: &[f64]| -> Vec<f64> {
            x0.iter().zip(x1).map(|(z, o)| z + a * o).collect()
        };
        let zeros_v = vec![0.0; p.v1.len()];
        let zeros_s = vec![0.0; p.s1.len()];
        SavState {
            state: State {
                v: Field {
                    space: SpaceKind::P2Vector2,
                    values: comb(&zeros_v, &p.v1),
                },
                s: Field {
                    space: SpaceKind::P1ScalarZeroMean,
                    values: comb(&zeros_s, &p.s1),
                },
                f: Field {
                    space: SpaceKind::P1Tensor2x2,
                    values: comb(&p.f0, &p.f1),
                },
                m: Field {
                    space: SpaceKind::P1Tensor2x2,
                    values: comb(&p.m0, &p.m1),
                },
                phi: Field {
                    space: SpaceKind::P1Scalar,
                    values: comb(&p.phi0, &p.phi1),
                },
                mu: Field {
                    space: SpaceKind::P1Scalar,
                    values: comb(&p.mu0, &p.mu1),
                },
                t: t_new,
            },
            beta: beta_next,
        }
    }

    pub fn step(&self, state_n: &SavState) -> Result<(SavState, DsavStats)> {
        let cfg = &self.config;
        let partials = self.solve_subsystems(state_n)?;
        let (a, beta_next, bracket) = self.compute_sav_coefficient(&partials, state_n)?;
        let state = self.reconstruct(&partials, a, beta_next, state_n.state.t + cfg.dt);
        if !state.state.is_finite() || !beta_next.is_finite() {
            return Err(Error::StepFailure {
                context: "SAV reconstruction",
                detail: "non-finite values".into(),
            });
        }

        self.check_coupled_residual(state_n, &state, &partials, a)?;

        // Mass conservation.
        let mass_new = math::dot(&self.node_weights, &state.state.phi.values);
        let mass_old = math::dot(&self.node_weights, &state_n.state.phi.values);
        if math::abs(mass_new - mass_old) > 1e-10 {
            return Err(Error::StepFailure {
                context: "mass conservation",
                detail: format!("∫φ drifted by {:e}", mass_new - mass_old),
            });
        }

        // Exact discrete energy identity: the Lyapunov decrement equals the
        // physical plus numerical dissipation, re-assembled independently.
        let identity = self.energy_identity_residual(state_n, &state)?;
        if math::abs(identity) > 1e-9 {
            return Err(Error::StepFailure {
                context: "energy identity",
                detail: format!("identity residual {identity:e}"),
            });
        }

        // Lyapunov non-increase (implied by the identity; asserted anyway).
        let l_old = self.lyapunov(state_n);
        let l_new = self.lyapunov(&state);
        if l_new > l_old + 1e-10 * (1.0 + math::abs(l_old)) {
            return Err(Error::StepFailure {
                context: "energy decrease",
                detail: format!("Lyapunov increased: {l_old} -> {l_new}"),
            });
        }

        let j_new = integrate_psi(self.mesh, &self.model, &state.state.phi.values)
            + integrate_w(
                self.mesh,
                &self.model,
                &state.state.phi.values,
                &state.state.f.values,
            );
        let drift = math::abs(beta_next * beta_next - (j_new + self.model.sav_k));

        Ok((
            state,
            DsavStats {
                bracket,
                a_coeff: a,
                beta_drift: drift,
            },
        ))
    }

    /// β² + (ε/2)‖∇φ‖² + (λ/2)‖∇F‖² (k retained).
    pub fn lyapunov(&self, state: &SavState) -> f64 {
        state.beta * state.beta
            + 0.5
                * self.model.epsilon()
                * self
                    .k_scalar
                    .bilinear(&state.state.phi.values, &state.state.phi.values)
            + 0.5
                * self.config.lambda
                * self
                    .k_tensor
                    .bilinear(&state.state.f.values, &state.state.f.values)
    }

    /// Left-hand side of the per-step energy identity; zero up to solver
    /// tolerance for every accepted step.
    pub fn energy_identity_residual(&self, old: &SavState, new: &SavState) -> Result<f64> {
        let cfg = &self.config;
        let eps = self.model.epsilon();
        let phi_o = &old.state.phi.values;
        let phi_n = &new.state.phi.values;
        let f_o = &old.state.f.values;
        let f_n = &new.state.f.values;
        let dphi: Vec<f64> = phi_n.iter().zip(phi_o).map(|(a, b)| a - b).collect();
        let df: Vec<f64> = f_n.iter().zip(f_o).map(|(a, b)| a - b).collect();
        let db = new.beta - old.beta;
        let k_b = self.mobility_stiffness(phi_o)?;
        let lhs = (new.beta * new.beta - old.beta * old.beta)
            + db * db
            + 0.5
                * eps
                * (self.k_scalar.bilinear(phi_n, phi_n) - self.k_scalar.bilinear(phi_o, phi_o)
                    + self.k_scalar.bilinear(&dphi, &dphi))
            + 0.5
                * cfg.lambda
                * (self.k_tensor.bilinear(f_n, f_n) - self.k_tensor.bilinear(f_o, f_o)
                    + self.k_tensor.bilinear(&df, &df))
            + cfg.dt * self.saddle.a.bilinear(&new.state.v.values, &new.state.v.values)
            + cfg.dt
                * cfg.gamma
                * self.mass_tensor.bilinear(&new.state.m.values, &new.state.m.values)
            + cfg.dt * k_b.bilinear(&new.state.mu.values, &new.state.mu.values);
        Ok(lhs)
    }

    fn check_coupled_residual(
        &self,
        state_n: &SavState,
        state: &SavState,
        partials: &DsavPartials,
        a: f64,
    ) -> Result<()> {
        let cfg = &self.config;
        let tol = 1e-10;
        let n = self.mesh.num_vertices();
        let old = &state_n.state;
        let new = &state.state;
        let phi_n = &old.phi.values;
        let f_n = &old.f.values;

        let mut worst: (&'static str, f64) = ("", 0.0);
        let mut record = |name: &'static str, r: f64| {
            if r > worst.1 {
                worst = (name, r);
            }
        };

        // Momentum with the ansatz-scaled frozen forcing.
        let forcing = partials.cauchy.combined();
        let mut r_v = self.saddle.a.matvec(&new.v.values);
        self.b_t.matvec_add(&new.s.values, 1.0, &mut r_v);
        let mut mom: f64 = 0.0;
        for i in 0..r_v.len() {
            if !self.velocity_dirichlet[i] {
                mom = mom.max(math::abs(r_v[i] - a * forcing[i]));
            }
        }
        record("momentum", mom);
        record("continuity", math::norm_inf(&self.saddle.b.matvec(&new.v.values)));

        // F-equation with the reconstructed velocity.
        let transport = assemble_transport_terms(self.mesh, &new.v.values, f_n)?;
        let df: Vec<f64> = new.f.values.iter().zip(f_n).map(|(x, y)| x - y).collect();
        let mut r_f = self.mass_tensor.matvec(&df);
        self.mass_tensor
            .matvec_add(&new.m.values, cfg.dt * cfg.gamma, &mut r_f);
        for i in 0..r_f.len() {
            r_f[i] += cfg.dt * (transport.adv[i] - transport.grad[i]);
        }
        record("deformation transport", math::norm_inf(&r_f));

        // M-equation.
        let mut r_m = self.mass_tensor.matvec(&new.m.values);
        self.k_tensor
            .matvec_add(&new.f.values, -cfg.lambda, &mut r_m);
        for (r, w) in r_m.iter_mut().zip(&partials.wvec) {
            *r -= a * w;
        }
        record("dual variable", math::norm_inf(&r_m));

        // φ-equation.
        let cvec = assemble_phi_transport(self.mesh, &new.v.values, phi_n)?;
        let k_b = self.mobility_stiffness(phi_n)?;
        let dphi: Vec<f64> = new.phi.values.iter().zip(phi_n).map(|(x, y)| x - y).collect();
        let mut r_phi = self.mass_scalar.matvec(&dphi);
        k_b.matvec_add(&new.mu.values, cfg.dt, &mut r_phi);
        for i in 0..n {
            r_phi[i] += cfg.dt * cvec[i];
        }
        record("phase transport", math::norm_inf(&r_phi));

        // μ-equation.
        let mut r_mu = self.mass_scalar.matvec(&new.mu.values);
        self.k_scalar
            .matvec_add(&new.phi.values, -self.model.epsilon(), &mut r_mu);
        for (r, j) in r_mu.iter_mut().zip(&partials.jvec) {
            *r -= a * j;
        }
        record("chemical potential", math::norm_inf(&r_mu));

        if worst.1 > tol {
            return Err(Error::SolverFailure {
                context: "coupled SAV residual",
                residual: worst.1,
                tolerance: tol,
            });
        }
        Ok(())
    }
}

/// `out[a] = ∫ (ψ′(φⁿ) + ∂_φ w(φⁿ,Fⁿ)) N_a`.
pub fn assemble_j_derivative(
    mesh: &Mesh,
    model: &EnergyModel,
    phi: &[f64],
    f: &[f64],
) -> Result<Vec<f64>> {
    let rule = quadrature_rule(4)?;
    let mut out = vec![0.0; mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area2 = 2.0 * mesh.tri_area(t);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let pv = p1_value(phi, tri, *p);
            let fv = tensor_value(f, tri, *p);
            let val = model.psi_prime(pv) + model.dw_dphi(pv, fv);
            for k in 0..3 {
                out[tri[k]] += area2 * w * p[k] * val;
            }
        }
    }
    Ok(out)
}

/// `out[4a+c] = ∫ ∂_F w(φⁿ,Fⁿ) : Θ_{a,c}`.
pub fn assemble_w_derivative(
    mesh: &Mesh,
    model: &EnergyModel,
    phi: &[f64],
    f: &[f64],
) -> Result<Vec<f64>> {
    let rule = quadrature_rule(4)?;
    let mut out = vec![0.0; 4 * mesh.num_vertices()];
    for t in 0..mesh.num_triangles() {
        let tri = mesh.triangles[t];
        let area2 = 2.0 * mesh.tri_area(t);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let pv = p1_value(phi, tri, *p);
            let fv = tensor_value(f, tri, *p);
            let dw = model.dw_df(pv, fv)?;
            for k in 0..3 {
                let basis = area2 * w * p[k];
                for c in 0..4 {
                    out[4 * tri[k] + c] += basis * dw.0[c];
                }
            }
        }
    }
    Ok(out)
}
