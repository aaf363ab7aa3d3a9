//! Constitutive functions: the double-well potential ψ, the elastic energy
//! densities (shape-memory, Mooney–Rivlin, Ogden), the mobility, analytic
//! derivatives, the convex/concave splitting used by the convex-splitting
//! scheme, and the smooth truncation utilities.

use crate::error::{Error, Result};
use crate::math;
use crate::rng::SplitMix64;
use crate::tensor::Mat2;
use alloc::format;
use alloc::vec::Vec;

/// Which elastic energy density the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    ShapeMemory,
    MooneyRivlin,
    Ogden,
}

/// Phase-dependent coefficient f(φ) = c0 + c1·φ.
#[derive(Debug, Clone, Copy)]
pub struct PhaseCoeff {
    pub c0: f64,
    pub c1: f64,
}

impl PhaseCoeff {
    pub fn constant(c: f64) -> PhaseCoeff {
        PhaseCoeff { c0: c, c1: 0.0 }
    }

    pub fn eval(&self, phi: f64) -> f64 {
        self.c0 + self.c1 * phi
    }

    pub fn deriv(&self) -> f64 {
        self.c1
    }
}

/// One Ogden term f(φ)·(λ₁^p + λ₂^p − 2), with the 2D-adjusted reference
/// constant so the term vanishes at F = I.
#[derive(Debug, Clone, Copy)]
pub struct OgdenTerm {
    pub coeff: PhaseCoeff,
    pub p: f64,
}

/// All model parameters. ε = β·α is derived, never stored.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    pub kind: ModelKind,
    /// Surface tension scale β of ψ = (β/4α)·φ²(1−φ)².
    pub beta_surf: f64,
    /// Interface thickness α.
    pub alpha_int: f64,
    /// Elastic modulus ζ.
    pub zeta: f64,
    /// Shear eigenstrain a of the shape-memory target metric H(φ).
    pub a_shear: f64,
    /// Mobility bounds; b(φ) is the constant b0 when b0 == b1, otherwise a
    /// clamped linear interpolation between b0 (φ ≤ 0) and b1 (φ ≥ 1).
    pub b0: f64,
    pub b1: f64,
    /// SAV shift k in β = sqrt(∫ j + k).
    pub sav_k: f64,
    /// Mooney–Rivlin coefficients (used when kind = MooneyRivlin).
    pub mr_f1: PhaseCoeff,
    pub mr_f2: PhaseCoeff,
    /// Ogden terms (used when kind = Ogden); exponents must lie in (0, 6).
    pub ogden: Vec<OgdenTerm>,
}

impl EnergyModel {
    /// Shape-memory model with the paper's double-well normalization;
    /// mobility ≡ 1, SAV shift k = 1.
    pub fn shape_memory(beta_surf: f64, alpha_int: f64, zeta: f64, a_shear: f64) -> EnergyModel {
        EnergyModel {
            kind: ModelKind::ShapeMemory,
            beta_surf,
            alpha_int,
            zeta,
            a_shear,
            b0: 1.0,
            b1: 1.0,
            sav_k: 1.0,
            mr_f1: PhaseCoeff::constant(1.0),
            mr_f2: PhaseCoeff::constant(0.0),
            ogden: Vec::new(),
        }
    }

    pub fn mooney_rivlin(
        beta_surf: f64,
        alpha_int: f64,
        f1: PhaseCoeff,
        f2: PhaseCoeff,
    ) -> EnergyModel {
        EnergyModel {
            kind: ModelKind::MooneyRivlin,
            zeta: 1.0,
            a_shear: 0.0,
            mr_f1: f1,
            mr_f2: f2,
            ..EnergyModel::shape_memory(beta_surf, alpha_int, 1.0, 0.0)
        }
    }

    pub fn ogden(beta_surf: f64, alpha_int: f64, terms: Vec<OgdenTerm>) -> EnergyModel {
        EnergyModel {
            kind: ModelKind::Ogden,
            ogden: terms,
            ..EnergyModel::shape_memory(beta_surf, alpha_int, 1.0, 0.0)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_surf <= 0.0 || self.alpha_int <= 0.0 || self.zeta <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "β, α, ζ must be positive (got {}, {}, {})",
                self.beta_surf, self.alpha_int, self.zeta
            )));
        }
        if self.a_shear < 0.0 {
            return Err(Error::InvalidArgument("shear eigenstrain a must be ≥ 0".into()));
        }
        if !(0.0 < self.b0 && self.b0 <= self.b1) {
            return Err(Error::InvalidArgument(format!(
                "mobility bounds need 0 < b0 ≤ b1, got ({}, {})",
                self.b0, self.b1
            )));
        }
        if self.sav_k <= 0.0 {
            return Err(Error::InvalidArgument("SAV shift k must be positive".into()));
        }
        for term in &self.ogden {
            if !(0.0 < term.p && term.p < 6.0) {
                return Err(Error::InvalidArgument(format!(
                    "Ogden exponent {} outside (0, 6)",
                    term.p
                )));
            }
        }
        Ok(())
    }

    /// Interface energy coefficient ε = β·α.
    pub fn epsilon(&self) -> f64 {
        self.beta_surf * self.alpha_int
    }

    /// Mobility b(φ) ∈ [b0, b1].
    pub fn mobility(&self, phi: f64) -> f64 {
        if self.b0 == self.b1 {
            self.b0
        } else {
            self.b0 + (self.b1 - self.b0) * phi.clamp(0.0, 1.0)
        }
    }

    // -- double well ------------------------------------------------------

    fn psi_scale(&self) -> f64 {
        self.beta_surf / (4.0 * self.alpha_int)
    }

    /// ψ(φ) = (β/4α) φ²(1−φ)².
    pub fn psi(&self, phi: f64) -> f64 {
        let q = phi * (1.0 - phi);
        self.psi_scale() * q * q
    }

    pub fn psi_prime(&self, phi: f64) -> f64 {
        self.psi_scale() * (4.0 * phi * phi * phi - 6.0 * phi * phi + 2.0 * phi)
    }

    /// Convex part ψ₊ = (β/4α)(φ⁴ − 2φ³ + 1.5φ²), the canonical split with
    /// the minimal convexifying quadratic.
    pub fn psi_plus_prime(&self, phi: f64) -> f64 {
        self.psi_scale() * (4.0 * phi * phi * phi - 6.0 * phi * phi + 3.0 * phi)
    }

    pub fn psi_minus_prime(&self, phi: f64) -> f64 {
        -self.psi_scale() * phi
    }

    pub fn psi_plus_second(&self, phi: f64) -> f64 {
        self.psi_scale() * (12.0 * phi * phi - 12.0 * phi + 3.0)
    }

    // -- shape-memory elasticity ------------------------------------------

    /// Stress-free shear F̃(φ) = [[1, aφ], [0, 1]].
    pub fn f_tilde(&self, phi: f64) -> Mat2 {
        Mat2::new(1.0, self.a_shear * phi, 0.0, 1.0)
    }

    /// Target metric H(φ) = F̃(φ)ᵀ F̃(φ).
    pub fn h_metric(&self, phi: f64) -> Mat2 {
        let ap = self.a_shear * phi;
        Mat2::new(1.0, ap, ap, 1.0 + ap * ap)
    }

    fn h_metric_dphi(&self, phi: f64) -> Mat2 {
        let a = self.a_shear;
        Mat2::new(0.0, a, a, 2.0 * a * a * phi)
    }

    // -- elastic energy dispatch ------------------------------------------

    /// Elastic energy density w(φ, F).
    pub fn w(&self, phi: f64, f: Mat2) -> f64 {
        match self.kind {
            ModelKind::ShapeMemory => {
                let d = f.gram() - self.h_metric(phi);
                0.5 * self.zeta * d.ddot(d)
            }
            ModelKind::MooneyRivlin => {
                let i1 = f.ddot(f);
                let c = f.gram();
                self.mr_f1.eval(phi) * 0.5 * (i1 - 2.0)
                    + self.mr_f2.eval(phi) * 0.5 * (i1 * i1 - c.ddot(c) - 2.0)
            }
            ModelKind::Ogden => {
                let (l1, l2) = f.singular_values();
                self.ogden
                    .iter()
                    .map(|t| {
                        t.coeff.eval(phi) * (math::powf(l1, t.p) + math::powf(l2, t.p) - 2.0)
                    })
                    .sum()
            }
        }
    }

    /// ∂w/∂F.
    pub fn dw_df(&self, phi: f64, f: Mat2) -> Result<Mat2> {
        match self.kind {
            ModelKind::ShapeMemory => {
                let d = f.gram() - self.h_metric(phi);
                Ok(f * d * (2.0 * self.zeta))
            }
            ModelKind::MooneyRivlin => {
                let i1 = f.ddot(f);
                let c = f.gram();
                let fc = f * c;
                Ok(f * self.mr_f1.eval(phi)
                    + (f * (2.0 * i1) - fc * 2.0) * self.mr_f2.eval(phi))
            }
            ModelKind::Ogden => self.ogden_df(phi, f),
        }
    }

    fn ogden_df(&self, phi: f64, f: Mat2) -> Result<Mat2> {
        // λ₁ + λ₂ = sqrt(I₁ + 2|J|), λ₁ − λ₂ = sqrt(I₁ − 2|J|) with
        // I₁ = F:F, J = det F; ∂I₁/∂F = 2F, ∂J/∂F = cof F.
        let i1 = f.ddot(f);
        let j = f.det();
        let cof = Mat2::new(f.0[3], -f.0[2], -f.0[1], f.0[0]);
        let sgn = if j >= 0.0 { 1.0 } else { -1.0 };
        let s2 = i1 + 2.0 * math::abs(j);
        let d2 = i1 - 2.0 * math::abs(j);
        if s2 <= 0.0 {
            return Err(Error::DomainError("Ogden derivative at F = 0".into()));
        }
        if d2 < -1e-9 * s2 {
            return Err(Error::DomainError(format!(
                "negative eigenvalue estimate of FᵀF: {d2:e}"
            )));
        }
        let s = math::sqrt(s2);
        let d = math::sqrt(d2.max(0.0));
        let l1 = 0.5 * (s + d);
        let l2 = 0.5 * (s - d);
        let ds = (f + cof * sgn) * (1.0 / s);
        let mut out = Mat2::ZERO;
        for term in &self.ogden {
            let c = term.coeff.eval(phi);
            let p = term.p;
            if l2 <= 0.0 && p < 1.0 {
                return Err(Error::DomainError(
                    "Ogden derivative singular: zero singular value with p < 1".into(),
                ));
            }
            let g1 = p * math::powf(l1, p - 1.0);
            let g2 = if l2 > 0.0 { p * math::powf(l2, p - 1.0) } else { 0.0 };
            out = out + ds * (c * 0.5 * (g1 + g2));
            if d > 1e-8 * s {
                let dd = (f - cof * sgn) * (1.0 / d);
                out = out + dd * (c * 0.5 * (g1 - g2));
            } else {
                // Degenerate singular values: (g'(λ₁) − g'(λ₂))/(λ₁ − λ₂)
                // tends to g''(λ), keeping the derivative finite.
                let gpp = p * (p - 1.0) * math::powf(l1.max(1e-300), p - 2.0);
                out = out + (f - cof * sgn) * (c * 0.5 * gpp);
            }
        }
        Ok(out)
    }

    /// ∂w/∂φ.
    pub fn dw_dphi(&self, phi: f64, f: Mat2) -> f64 {
        match self.kind {
            ModelKind::ShapeMemory => {
                let d = f.gram() - self.h_metric(phi);
                -self.zeta * self.h_metric_dphi(phi).ddot(d)
            }
            ModelKind::MooneyRivlin => {
                let i1 = f.ddot(f);
                let c = f.gram();
                self.mr_f1.deriv() * 0.5 * (i1 - 2.0)
                    + self.mr_f2.deriv() * 0.5 * (i1 * i1 - c.ddot(c) - 2.0)
            }
            ModelKind::Ogden => {
                let (l1, l2) = f.singular_values();
                self.ogden
                    .iter()
                    .map(|t| {
                        t.coeff.deriv() * (math::powf(l1, t.p) + math::powf(l2, t.p) - 2.0)
                    })
                    .sum()
            }
        }
    }

    /// SAV integrand j(φ, F) = ψ(φ) + w(φ, F).
    pub fn j(&self, phi: f64, f: Mat2) -> f64 {
        self.psi(phi) + self.w(phi, f)
    }
}

// ---------------------------------------------------------------------------
// Convex splitting ledger (shape-memory model)
// ---------------------------------------------------------------------------

/// The shape-memory energy written as w = h(F) + Σᵢ fᵢ(φ)gᵢ(F) + m(φ):
///
/// * h(F) = (ζ/2)|FᵀF|², semiconvex, convexified as h₊ = h + (c₀/2)|F|²;
/// * −ζH(φ):FᵀF expanded in components gives the (fᵢ, gᵢ) product terms;
/// * m(φ) = (ζ/2)|H(φ)|², convex in φ.
///
/// Each factor carries its convex/concave split; the scheme combines them
/// with the [·]₊ sign mechanism so that every product term contributes a
/// telescoping, energy-decreasing difference.
#[derive(Debug, Clone)]
pub struct SplitLedger {
    pub zeta: f64,
    pub a_shear: f64,
    /// Convexifying shift of h; default 6·ζ·F_max².
    pub c0_shift: f64,
    /// The |F| bound the shift is valid for; runs assert max|F| ≤ f_max.
    pub f_max: f64,
    psi_scale: f64,
    beta_surf: f64,
    alpha_int: f64,
}

pub const LEDGER_TERMS: usize = 3;

impl SplitLedger {
    // -- product terms ----------------------------------------------------

    /// fᵢ(φ): (−ζ, −2aζφ, −a²ζφ²) for i = 0, 1, 2.
    pub fn f_val(&self, i: usize, phi: f64) -> f64 {
        let (z, a) = (self.zeta, self.a_shear);
        match i {
            0 => -z,
            1 => -2.0 * a * z * phi,
            _ => -a * a * z * phi * phi,
        }
    }

    /// Derivative of the convex part of fᵢ (constants and linear terms are
    /// assigned to the convex side; the concave quadratic f₂ to the other).
    pub fn f_plus_prime(&self, i: usize, _phi: f64) -> f64 {
        match i {
            1 => -2.0 * self.a_shear * self.zeta,
            _ => 0.0,
        }
    }

    pub fn f_minus_prime(&self, i: usize, phi: f64) -> f64 {
        match i {
            2 => -2.0 * self.a_shear * self.a_shear * self.zeta * phi,
            _ => 0.0,
        }
    }

    pub fn f_plus_second(&self, _i: usize, _phi: f64) -> f64 {
        0.0
    }

    pub fn f_minus_second(&self, i: usize, _phi: f64) -> f64 {
        match i {
            2 => -2.0 * self.a_shear * self.a_shear * self.zeta,
            _ => 0.0,
        }
    }

    /// gᵢ(F): (|F|², (FᵀF)₁₂, (FᵀF)₂₂).
    pub fn g_val(&self, i: usize, f: Mat2) -> f64 {
        let [f11, f12, f21, f22] = f.0;
        match i {
            0 => f.ddot(f),
            1 => f11 * f12 + f21 * f22,
            _ => f12 * f12 + f22 * f22,
        }
    }

    /// Gradient of the convex part of gᵢ. The sign-indefinite g₁ is split by
    /// the polarization identity ¼|F¹+F²|² − ¼|F¹−F²|² over the columns.
    pub fn g_plus_prime(&self, i: usize, f: Mat2) -> Mat2 {
        let [f11, f12, f21, f22] = f.0;
        match i {
            0 => f * 2.0,
            1 => {
                let (u, v) = (f11 + f12, f21 + f22);
                Mat2::new(0.5 * u, 0.5 * u, 0.5 * v, 0.5 * v)
            }
            _ => Mat2::new(0.0, 2.0 * f12, 0.0, 2.0 * f22),
        }
    }

    pub fn g_minus_prime(&self, i: usize, f: Mat2) -> Mat2 {
        let [f11, f12, f21, f22] = f.0;
        match i {
            1 => {
                let (p, q) = (f11 - f12, f21 - f22);
                Mat2::new(-0.5 * p, 0.5 * p, -0.5 * q, 0.5 * q)
            }
            _ => Mat2::ZERO,
        }
    }

    /// Hessian (4x4, components row-major) of the convex part of gᵢ.
    pub fn g_plus_hess(&self, i: usize, _f: Mat2) -> [[f64; 4]; 4] {
        let mut h = [[0.0; 4]; 4];
        match i {
            0 => {
                for k in 0..4 {
                    h[k][k] = 2.0;
                }
            }
            1 => {
                for (a, b) in [(0, 1), (2, 3)] {
                    h[a][a] = 0.5;
                    h[a][b] = 0.5;
                    h[b][a] = 0.5;
                    h[b][b] = 0.5;
                }
            }
            _ => {
                h[1][1] = 2.0;
                h[3][3] = 2.0;
            }
        }
        h
    }

    pub fn g_minus_hess(&self, i: usize, _f: Mat2) -> [[f64; 4]; 4] {
        let mut h = [[0.0; 4]; 4];
        if i == 1 {
            for (a, b) in [(0, 1), (2, 3)] {
                h[a][a] = -0.5;
                h[a][b] = 0.5;
                h[b][a] = 0.5;
                h[b][b] = -0.5;
            }
        }
        h
    }

    // -- quartic part h ---------------------------------------------------

    pub fn h_val(&self, f: Mat2) -> f64 {
        let c = f.gram();
        0.5 * self.zeta * c.ddot(c)
    }

    fn h_prime(&self, f: Mat2) -> Mat2 {
        f * f.gram() * (2.0 * self.zeta)
    }

    pub fn h_plus_prime(&self, f: Mat2) -> Mat2 {
        self.h_prime(f) + f * self.c0_shift
    }

    pub fn h_minus_prime(&self, f: Mat2) -> Mat2 {
        f * (-self.c0_shift)
    }

    /// Hessian of h₊ at F (directional derivative of h′ along each basis
    /// tensor, plus the c₀ shift).
    pub fn h_plus_hess(&self, f: Mat2) -> [[f64; 4]; 4] {
        let c = f.gram();
        let ft = f.transpose();
        let mut hess = [[0.0; 4]; 4];
        for k in 0..4 {
            let mut g = Mat2::ZERO;
            g.0[k] = 1.0;
            let dc = g.transpose() * f + ft * g;
            let dh = (g * c + f * dc) * (2.0 * self.zeta);
            for r in 0..4 {
                hess[r][k] = dh.0[r];
            }
            hess[k][k] += self.c0_shift;
        }
        hess
    }

    // -- pure phase parts -------------------------------------------------

    /// m(φ) = (ζ/2)|H(φ)|² = ζ(1 + 2a²φ² + a⁴φ⁴/2), convex.
    pub fn m_val(&self, phi: f64) -> f64 {
        let a2 = self.a_shear * self.a_shear;
        self.zeta * (1.0 + 2.0 * a2 * phi * phi + 0.5 * a2 * a2 * phi * phi * phi * phi)
    }

    pub fn m_prime(&self, phi: f64) -> f64 {
        let a2 = self.a_shear * self.a_shear;
        self.zeta * (4.0 * a2 * phi + 2.0 * a2 * a2 * phi * phi * phi)
    }

    pub fn m_second(&self, phi: f64) -> f64 {
        let a2 = self.a_shear * self.a_shear;
        self.zeta * (4.0 * a2 + 6.0 * a2 * a2 * phi * phi)
    }

    /// Reconstruction Σfᵢgᵢ + h + m; must equal w(φ,F) of the model.
    pub fn reconstruct_w(&self, phi: f64, f: Mat2) -> f64 {
        let mut total = self.h_val(f) + self.m_val(phi);
        for i in 0..LEDGER_TERMS {
            total += self.f_val(i, phi) * self.g_val(i, f);
        }
        total
    }

    // -- scheme-facing combinations ---------------------------------------

    /// Nonlinear part of the μ-equation at a quadrature point:
    /// ψ₊′(φⁿ⁺¹) + ψ₋′(φⁿ) + m′(φⁿ⁺¹) plus, per product term, the
    /// sign-resolved combination
    /// [gᵢ]₊·(fᵢ₊′(φⁿ⁺¹) + fᵢ₋′(φⁿ)) + (gᵢ − [gᵢ]₊)·(fᵢ₊′(φⁿ) + fᵢ₋′(φⁿ⁺¹))
    /// with gᵢ evaluated at Fⁿ⁺¹.
    pub fn mu_nonlinear(&self, phi_new: f64, phi_old: f64, f_new: Mat2) -> f64 {
        let psi_scale = self.psi_scale;
        let psi_part = psi_plus_prime_raw(psi_scale, phi_new) + psi_minus_prime_raw(psi_scale, phi_old);
        let mut total = psi_part + self.m_prime(phi_new);
        for i in 0..LEDGER_TERMS {
            let g = self.g_val(i, f_new);
            let gp = g.max(0.0);
            total += gp * (self.f_plus_prime(i, phi_new) + self.f_minus_prime(i, phi_old))
                + (g - gp) * (self.f_plus_prime(i, phi_old) + self.f_minus_prime(i, phi_new));
        }
        total
    }

    /// ∂/∂φⁿ⁺¹ of `mu_nonlinear` (Newton linearization).
    pub fn mu_nonlinear_dphi(&self, phi_new: f64, _phi_old: f64, f_new: Mat2) -> f64 {
        let mut total = psi_plus_second_raw(self.psi_scale, phi_new) + self.m_second(phi_new);
        for i in 0..LEDGER_TERMS {
            let g = self.g_val(i, f_new);
            let gp = g.max(0.0);
            total += gp * self.f_plus_second(i, phi_new)
                + (g - gp) * self.f_minus_second(i, phi_new);
        }
        total
    }

    /// Nonlinear part of the M-equation at a quadrature point:
    /// h₊′(Fⁿ⁺¹) + h₋′(Fⁿ) plus, per product term,
    /// [fᵢ(φⁿ)]₊·(gᵢ₊′(Fⁿ⁺¹) + gᵢ₋′(Fⁿ)) + (fᵢ − [fᵢ]₊)·(gᵢ₊′(Fⁿ) + gᵢ₋′(Fⁿ⁺¹)).
    pub fn m_nonlinear(&self, phi_old: f64, f_new: Mat2, f_old: Mat2) -> Mat2 {
        let mut total = self.h_plus_prime(f_new) + self.h_minus_prime(f_old);
        for i in 0..LEDGER_TERMS {
            let fv = self.f_val(i, phi_old);
            let fp = fv.max(0.0);
            total = total
                + (self.g_plus_prime(i, f_new) + self.g_minus_prime(i, f_old)) * fp
                + (self.g_plus_prime(i, f_old) + self.g_minus_prime(i, f_new)) * (fv - fp);
        }
        total
    }

    /// ∂/∂Fⁿ⁺¹ of `m_nonlinear` (4x4 Hessian block for Newton).
    pub fn m_nonlinear_df(&self, phi_old: f64, f_new: Mat2) -> [[f64; 4]; 4] {
        let mut hess = self.h_plus_hess(f_new);
        for i in 0..LEDGER_TERMS {
            let fv = self.f_val(i, phi_old);
            let fp = fv.max(0.0);
            let hp = self.g_plus_hess(i, f_new);
            let hm = self.g_minus_hess(i, f_new);
            for r in 0..4 {
                for c in 0..4 {
                    hess[r][c] += fp * hp[r][c] + (fv - fp) * hm[r][c];
                }
            }
        }
        hess
    }

    /// ψ₊ + ψ₋ evaluation helpers used by the energy identity checks.
    pub fn psi(&self, phi: f64) -> f64 {
        let q = phi * (1.0 - phi);
        self.psi_scale * q * q
    }

    pub fn model(&self) -> EnergyModel {
        EnergyModel::shape_memory(self.beta_surf, self.alpha_int, self.zeta, self.a_shear)
    }
}

fn psi_plus_prime_raw(scale: f64, phi: f64) -> f64 {
    scale * (4.0 * phi * phi * phi - 6.0 * phi * phi + 3.0 * phi)
}

fn psi_minus_prime_raw(scale: f64, phi: f64) -> f64 {
    -scale * phi
}

fn psi_plus_second_raw(scale: f64, phi: f64) -> f64 {
    scale * (12.0 * phi * phi - 12.0 * phi + 3.0)
}

/// Smallest eigenvalue of a symmetric 4x4 matrix (cyclic Jacobi sweeps).
pub fn sym4_min_eig(h: &[[f64; 4]; 4]) -> f64 {
    let mut a = *h;
    // Symmetrize first to absorb roundoff.
    for i in 0..4 {
        for j in (i + 1)..4 {
            let s = 0.5 * (a[i][j] + a[j][i]);
            a[i][j] = s;
            a[j][i] = s;
        }
    }
    for _sweep in 0..30 {
        let mut off = 0.0;
        for i in 0..4 {
            for j in (i + 1)..4 {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-28 {
            break;
        }
        for p in 0..4 {
            for q in (p + 1)..4 {
                if math::abs(a[p][q]) < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = {
                    let s = if theta >= 0.0 { 1.0 } else { -1.0 };
                    s / (math::abs(theta) + math::sqrt(theta * theta + 1.0))
                };
                let c = 1.0 / math::sqrt(t * t + 1.0);
                let s = t * c;
                for k in 0..4 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut min = a[0][0];
    for k in 1..4 {
        if a[k][k] < min {
            min = a[k][k];
        }
    }
    min
}

/// Build and validate the splitting for a shape-memory model: the
/// reconstruction identity and sampled convexity/concavity of every declared
/// part over |F| ≤ F_max, φ ∈ [−1, 2].
pub fn build_split_ledger(model: &EnergyModel) -> Result<SplitLedger> {
    if model.kind != ModelKind::ShapeMemory {
        return Err(Error::InvalidArgument(
            "the convex-splitting ledger is defined for the shape-memory energy only".into(),
        ));
    }
    model.validate()?;
    let f_max = 5.0;
    let ledger = SplitLedger {
        zeta: model.zeta,
        a_shear: model.a_shear,
        c0_shift: 6.0 * model.zeta * f_max * f_max,
        f_max,
        psi_scale: model.beta_surf / (4.0 * model.alpha_int),
        beta_surf: model.beta_surf,
        alpha_int: model.alpha_int,
    };

    let mut rng = SplitMix64::new(0x5EED_1ED6E5);
    for sample in 0..1000 {
        let phi = rng.uniform(-1.0, 2.0);
        let mut f = Mat2::ZERO;
        for k in 0..4 {
            f.0[k] = rng.uniform(-1.0, 1.0);
        }
        // Scale into the ball |F| ≤ F_max.
        let scale = rng.uniform(0.0, f_max) / f.norm().max(1e-9);
        f = f * scale;

        let w = model.w(phi, f);
        let rec = ledger.reconstruct_w(phi, f);
        if math::abs(rec - w) > 1e-12 * (1.0 + math::abs(w)) {
            return Err(Error::Internal(format!(
                "splitting reconstruction failed at sample {sample}: {rec} vs {w}"
            )));
        }

        let scale_h = ledger.c0_shift;
        let min_eig = sym4_min_eig(&ledger.h_plus_hess(f));
        if min_eig < -1e-9 * scale_h {
            return Err(Error::Internal(format!(
                "h₊ not convex at sample {sample} (min eigenvalue {min_eig:e}, F = {:?})",
                f.0
            )));
        }
        for i in 0..LEDGER_TERMS {
            if sym4_min_eig(&ledger.g_plus_hess(i, f)) < -1e-12 {
                return Err(Error::Internal(format!("g{i}₊ not convex at sample {sample}")));
            }
            let mut neg = ledger.g_minus_hess(i, f);
            for r in 0..4 {
                for c in 0..4 {
                    neg[r][c] = -neg[r][c];
                }
            }
            if sym4_min_eig(&neg) < -1e-12 {
                return Err(Error::Internal(format!("g{i}₋ not concave at sample {sample}")));
            }
        }
        if psi_plus_second_raw(ledger.psi_scale, phi) < 0.0 {
            return Err(Error::Internal(format!("ψ₊ not convex at φ = {phi}")));
        }
        if ledger.m_second(phi) < 0.0 {
            return Err(Error::Internal(format!("m not convex at φ = {phi}")));
        }
    }
    Ok(ledger)
}

// ---------------------------------------------------------------------------
// Truncation utilities
// ---------------------------------------------------------------------------

/// C¹ cubic smooth step: 1 for r ≤ 1, 0 for r ≥ 2, monotone in between.
pub fn smooth_step(r: f64) -> f64 {
    if r <= 1.0 {
        1.0
    } else if r >= 2.0 {
        0.0
    } else {
        let t = r - 1.0;
        1.0 - t * t * (3.0 - 2.0 * t)
    }
}

/// Truncation factor g_R(r) = g(r/R) + (1 − g(r/R))·r^min(0, 4−p).
pub fn truncation_gr(r: f64, big_r: f64, p: f64) -> Result<f64> {
    if big_r <= 1.0 {
        return Err(Error::InvalidArgument(format!("truncation radius must exceed 1, got {big_r}")));
    }
    if !(0.0..6.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("growth exponent p must lie in [0, 6), got {p}")));
    }
    let e = (4.0 - p).min(0.0);
    let gs = smooth_step(r / big_r);
    if e == 0.0 || gs >= 1.0 {
        return Ok(1.0);
    }
    Ok(gs + (1.0 - gs) * math::powf(r, e))
}

/// Truncated energy density w_R(φ, F) = g_R(|F|)·w(φ, F).
pub fn truncated_w(model: &EnergyModel, phi: f64, f: Mat2, big_r: f64, p: f64) -> Result<f64> {
    Ok(truncation_gr(f.norm(), big_r, p)? * model.w(phi, f))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tc1_model() -> EnergyModel {
        EnergyModel::shape_memory(0.1, 0.002, 10.0, 0.5)
    }

    fn rand_mat(rng: &mut SplitMix64, scale: f64) -> Mat2 {
        let mut f = Mat2::ZERO;
        for k in 0..4 {
            f.0[k] = rng.uniform(-scale, scale);
        }
        f
    }

    #[test]
    fn double_well_values() {
        let m = tc1_model();
        assert_eq!(m.psi(0.0), 0.0);
        assert_eq!(m.psi(1.0), 0.0);
        assert!(m.psi_prime(0.5).abs() < 1e-15);
        assert!((m.psi(0.5) - 0.78125).abs() < 1e-12);
        // Split consistency and curvature signs.
        for phi in [-0.7, 0.0, 0.3, 0.5, 1.0, 1.6] {
            let sum = m.psi_plus_prime(phi) + m.psi_minus_prime(phi);
            assert!((sum - m.psi_prime(phi)).abs() < 1e-11);
            assert!(m.psi_plus_second(phi) >= -1e-15);
        }
        // Minimal convexifying coefficient: ψ₊'' touches zero at φ = 1/2.
        assert!(m.psi_plus_second(0.5).abs() < 1e-12);
    }

    #[test]
    fn shape_memory_reference_values() {
        let m = tc1_model();
        assert_eq!(m.w(0.0, Mat2::identity()), 0.0);
        assert_eq!(m.dw_df(0.0, Mat2::identity()).unwrap(), Mat2::ZERO);
        assert_eq!(m.dw_dphi(0.0, Mat2::identity()), 0.0);
        let ft1 = m.f_tilde(1.0);
        assert!((m.w(1.0, ft1)).abs() < 1e-14);
        let h = m.h_metric(0.5);
        assert_eq!(h.0, [1.0, 0.25, 0.25, 1.0625]);
        assert!((m.w(0.5, Mat2::identity()) - 10.0 * 0.064453125).abs() < 1e-12);
    }

    #[test]
    fn frame_indifference() {
        let m = tc1_model();
        let mut rng = SplitMix64::new(11);
        for _ in 0..20 {
            let f = rand_mat(&mut rng, 2.0);
            let phi = rng.uniform(-0.5, 1.5);
            let r = Mat2::rotation(rng.uniform(0.0, 6.28));
            let w0 = m.w(phi, f);
            let w1 = m.w(phi, r * f);
            assert!((w0 - w1).abs() < 1e-12 * (1.0 + w0.abs()));
        }
    }

    #[test]
    fn minimizing_manifold_is_zero() {
        let m = tc1_model();
        let mut rng = SplitMix64::new(13);
        for _ in 0..50 {
            let phi = if rng.next_f64() < 0.5 { 0.0 } else { 1.0 };
            let r = Mat2::rotation(rng.uniform(0.0, 6.28));
            let f = r * m.f_tilde(phi);
            assert!(m.w(phi, f).abs() < 1e-12);
            assert!(m.psi(phi) + m.w(phi, f) >= -1e-15);
        }
        // ψ + w ≥ 0 in general for this model.
        for _ in 0..200 {
            let phi = rng.uniform(-1.0, 2.0);
            let f = rand_mat(&mut rng, 3.0);
            assert!(m.psi(phi) + m.w(phi, f) >= -1e-12);
        }
    }

    fn fd_check(model: &EnergyModel, samples: usize, seed: u64) {
        let mut rng = SplitMix64::new(seed);
        let h = 1e-6;
        let mut checked = 0;
        while checked < samples {
            let phi = rng.uniform(-0.5, 1.5);
            let f = rand_mat(&mut rng, 1.5) + Mat2::identity();
            if model.kind == ModelKind::Ogden {
                // Keep clear of the degenerate singular-value manifold where
                // finite differences themselves lose accuracy.
                let (l1, l2) = f.singular_values();
                if l2 < 0.2 || (l1 - l2) < 0.05 {
                    continue;
                }
            }
            let grad = model.dw_df(phi, f).unwrap();
            for k in 0..4 {
                let mut fp = f;
                let mut fm = f;
                fp.0[k] += h;
                fm.0[k] -= h;
                let fd = (model.w(phi, fp) - model.w(phi, fm)) / (2.0 * h);
                let scale = grad.0[k].abs().max(1.0);
                assert!(
                    (grad.0[k] - fd).abs() <= 1e-6 * scale,
                    "dw/dF[{k}] mismatch: {} vs {fd}",
                    grad.0[k]
                );
            }
            let dphi = model.dw_dphi(phi, f);
            let fd = (model.w(phi + h, f) - model.w(phi - h, f)) / (2.0 * h);
            assert!((dphi - fd).abs() <= 1e-6 * dphi.abs().max(1.0));
            checked += 1;
        }
    }

    #[test]
    fn shape_memory_derivatives_vs_fd() {
        fd_check(&tc1_model(), 120, 17);
    }

    #[test]
    fn mooney_rivlin_derivatives_vs_fd() {
        let m = EnergyModel::mooney_rivlin(
            0.1,
            0.002,
            PhaseCoeff { c0: 1.0, c1: 0.5 },
            PhaseCoeff { c0: 0.3, c1: -0.2 },
        );
        fd_check(&m, 120, 19);
    }

    #[test]
    fn ogden_derivatives_vs_fd() {
        let m = EnergyModel::ogden(
            0.1,
            0.002,
            alloc::vec![
                OgdenTerm { coeff: PhaseCoeff { c0: 1.0, c1: 0.4 }, p: 3.0 },
                OgdenTerm { coeff: PhaseCoeff { c0: 0.5, c1: 0.0 }, p: 1.5 },
            ],
        );
        fd_check(&m, 120, 23);
    }

    #[test]
    fn mooney_rivlin_reference_state() {
        let m = EnergyModel::mooney_rivlin(
            0.1,
            0.002,
            PhaseCoeff::constant(1.0),
            PhaseCoeff::constant(0.0),
        );
        assert!(m.w(0.3, Mat2::identity()).abs() < 1e-15);
    }

    #[test]
    fn ogden_p2_matches_mooney_rivlin_term() {
        // λ₁² + λ₂² − 2 = F:F − 2, the f₂ ≡ 0 Mooney–Rivlin energy.
        let og = EnergyModel::ogden(
            0.1,
            0.002,
            alloc::vec![OgdenTerm { coeff: PhaseCoeff::constant(0.5), p: 2.0 }],
        );
        let mr = EnergyModel::mooney_rivlin(
            0.1,
            0.002,
            PhaseCoeff::constant(1.0),
            PhaseCoeff::constant(0.0),
        );
        let mut rng = SplitMix64::new(29);
        for _ in 0..50 {
            let f = rand_mat(&mut rng, 2.0);
            let phi = rng.next_f64();
            assert!((og.w(phi, f) - mr.w(phi, f)).abs() < 1e-12 * (1.0 + og.w(phi, f).abs()));
        }
    }

    #[test]
    fn ledger_reconstruction_and_convexity() {
        let ledger = build_split_ledger(&tc1_model()).unwrap();
        let mut rng = SplitMix64::new(31);
        let model = tc1_model();
        for _ in 0..100 {
            let phi = rng.uniform(-1.0, 2.0);
            let f = rand_mat(&mut rng, 2.5);
            let w = model.w(phi, f);
            assert!((ledger.reconstruct_w(phi, f) - w).abs() < 1e-12 * (1.0 + w.abs()));
        }
    }

    #[test]
    fn polarization_split_of_g1() {
        let ledger = build_split_ledger(&tc1_model()).unwrap();
        let mut rng = SplitMix64::new(37);
        for _ in 0..100 {
            let f = rand_mat(&mut rng, 3.0);
            let [f11, f12, f21, f22] = f.0;
            let plus = 0.25 * ((f11 + f12) * (f11 + f12) + (f21 + f22) * (f21 + f22));
            let minus = -0.25 * ((f11 - f12) * (f11 - f12) + (f21 - f22) * (f21 - f22));
            assert!((plus + minus - ledger.g_val(1, f)).abs() < 1e-14 * (1.0 + plus.abs()));
            // Gradients of the split parts sum to the gradient of g₁.
            let total = ledger.g_plus_prime(1, f) + ledger.g_minus_prime(1, f);
            let expect = Mat2::new(f12, f11, f22, f21);
            for k in 0..4 {
                assert!((total.0[k] - expect.0[k]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn ledger_combinations_vanish_at_stationary_states() {
        let model = tc1_model();
        let ledger = build_split_ledger(&model).unwrap();
        let id = Mat2::identity();
        assert!(ledger.mu_nonlinear(0.0, 0.0, id).abs() < 1e-12);
        assert!(ledger.m_nonlinear(0.0, id, id).norm() < 1e-12);
        let ft1 = model.f_tilde(1.0);
        assert!(ledger.mu_nonlinear(1.0, 1.0, ft1).abs() < 1e-11);
        assert!(ledger.m_nonlinear(1.0, ft1, ft1).norm() < 1e-11);
    }

    #[test]
    fn ledger_combinations_reduce_to_derivatives_when_stationary_in_time() {
        // With φⁿ⁺¹ = φⁿ and Fⁿ⁺¹ = Fⁿ the split combinations collapse to
        // the plain variational derivatives ψ′ + ∂_φ w and ∂_F w.
        let model = tc1_model();
        let ledger = build_split_ledger(&model).unwrap();
        let mut rng = SplitMix64::new(41);
        for _ in 0..100 {
            let phi = rng.uniform(-0.5, 1.5);
            let f = rand_mat(&mut rng, 2.0);
            let mu = ledger.mu_nonlinear(phi, phi, f);
            let expect = model.psi_prime(phi) + model.dw_dphi(phi, f);
            assert!((mu - expect).abs() < 1e-9 * (1.0 + expect.abs()));
            let m = ledger.m_nonlinear(phi, f, f);
            let dw = model.dw_df(phi, f).unwrap();
            assert!((m - dw).norm() < 1e-9 * (1.0 + dw.norm()));
        }
    }

    #[test]
    fn hessians_match_finite_differences() {
        let model = tc1_model();
        let ledger = build_split_ledger(&model).unwrap();
        let mut rng = SplitMix64::new(43);
        let h = 1e-6;
        for _ in 0..25 {
            let phi_old = rng.uniform(-0.5, 1.5);
            let f_old = rand_mat(&mut rng, 2.0);
            let f = rand_mat(&mut rng, 2.0);
            let hess = ledger.m_nonlinear_df(phi_old, f);
            for k in 0..4 {
                let mut fp = f;
                let mut fm = f;
                fp.0[k] += h;
                fm.0[k] -= h;
                let col =
                    (ledger.m_nonlinear(phi_old, fp, f_old) - ledger.m_nonlinear(phi_old, fm, f_old))
                        * (0.5 / h);
                for r in 0..4 {
                    assert!(
                        (hess[r][k] - col.0[r]).abs() <= 2e-4 * (1.0 + hess[r][k].abs()),
                        "hessian[{r}][{k}]"
                    );
                }
            }
            let phi = rng.uniform(-0.5, 1.5);
            let d = ledger.mu_nonlinear_dphi(phi, phi_old, f);
            let fd = (ledger.mu_nonlinear(phi + h, phi_old, f)
                - ledger.mu_nonlinear(phi - h, phi_old, f))
                / (2.0 * h);
            assert!((d - fd).abs() <= 1e-4 * (1.0 + d.abs()));
        }
    }

    #[test]
    fn ledger_rejects_other_models() {
        let m = EnergyModel::mooney_rivlin(
            0.1,
            0.002,
            PhaseCoeff::constant(1.0),
            PhaseCoeff::constant(0.0),
        );
        assert!(build_split_ledger(&m).is_err());
    }

    #[test]
    fn truncation_bounds() {
        // p ≤ 4: truncation inactive.
        for p in [0.0, 2.0, 4.0] {
            for r in [0.0, 0.5, 3.0, 100.0] {
                assert_eq!(truncation_gr(r, 2.0, p).unwrap(), 1.0);
            }
        }
        // r ≤ R: exactly 1.
        assert_eq!(truncation_gr(1.9, 2.0, 5.0).unwrap(), 1.0);
        // Far field: pure power decay; p = 5, r = 4R.
        let big_r = 3.0;
        let got = truncation_gr(4.0 * big_r, big_r, 5.0).unwrap();
        assert!((got - 1.0 / (4.0 * big_r)).abs() < 1e-14);
        // Range and monotone bound between.
        for i in 0..200 {
            let r = 0.1 * i as f64;
            let g = truncation_gr(r, big_r, 5.5).unwrap();
            assert!((0.0..=1.0).contains(&g));
            let e = (4.0f64 - 5.5).min(0.0);
            if r > 0.0 {
                assert!(g >= math::powf(r, e).min(1.0) - 1e-14);
            }
        }
    }

    #[test]
    fn truncation_c1_across_knots() {
        let big_r = 2.5;
        let p = 5.0;
        let h = 1e-7;
        for r0 in [big_r, 2.0 * big_r] {
            let left = (truncation_gr(r0 - h, big_r, p).unwrap()
                - truncation_gr(r0 - 3.0 * h, big_r, p).unwrap())
                / (2.0 * h);
            let right = (truncation_gr(r0 + 3.0 * h, big_r, p).unwrap()
                - truncation_gr(r0 + h, big_r, p).unwrap())
                / (2.0 * h);
            assert!((left - right).abs() < 1e-5, "kink at r = {r0}");
        }
    }

    #[test]
    fn truncated_w_bounds() {
        let model = tc1_model();
        let mut rng = SplitMix64::new(47);
        for _ in 0..200 {
            let phi = rng.uniform(-1.0, 2.0);
            let f = rand_mat(&mut rng, 4.0);
            let w = model.w(phi, f);
            let wr = truncated_w(&model, phi, f, 2.0, 5.0).unwrap();
            assert!(wr >= -1e-12);
            assert!(wr <= w + 1e-12);
        }
    }

    #[test]
    fn mobility_bounds() {
        let mut m = tc1_model();
        assert_eq!(m.mobility(-3.0), 1.0);
        m.b0 = 0.5;
        m.b1 = 2.0;
        assert_eq!(m.mobility(-1.0), 0.5);
        assert_eq!(m.mobility(2.0), 2.0);
        assert!((m.mobility(0.5) - 1.25).abs() < 1e-15);
        m.b0 = 0.0;
        assert!(m.validate().is_err());
    }
}
