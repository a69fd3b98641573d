//! Closed-form quantities of the purified-reservoir unravellings.
//!
//! Everything here is a pure function of the bath parameters `(N, γ)`:
//! the outcome statistics of the two bath quadratures, the decorrelated
//! noise channels acting on the system, the drift/noise coefficients of the
//! `X = c + c†` quadrature, and the steady-state figures of merit.

use serde::{Deserialize, Serialize};

use crate::error::{check_domain, Result};

/// Physical knobs of the two-mode reservoir.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BathParams {
    /// Mean thermal photon number of the mode coupled to the system.
    pub n: f64,
    /// Purification parameter: 0 for uncorrelated thermal modes, 1 for a
    /// pure two-mode squeezed vacuum.
    pub gamma: f64,
}

impl BathParams {
    pub fn new(n: f64, gamma: f64) -> Result<Self> {
        check_n(n)?;
        check_gamma(gamma)?;
        Ok(Self { n, gamma })
    }

    pub fn validate(&self) -> Result<()> {
        check_n(self.n)?;
        check_gamma(self.gamma)
    }

    /// Variance of a thermal state in vacuum units, `2N + 1`.
    pub fn thermal_variance(&self) -> f64 {
        2.0 * self.n + 1.0
    }
}

fn check_n(n: f64) -> Result<()> {
    check_domain("N", n, n >= 0.0, "N >= 0")
}

fn check_gamma(gamma: f64) -> Result<()> {
    check_domain(
        "gamma",
        gamma,
        (0.0..=1.0).contains(&gamma),
        "0 <= gamma <= 1",
    )
}

/// Weights of `c` and `c†` in a noise channel operator `α c + β c†`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl ChannelWeights {
    /// Noise coefficient multiplying `V_x` in `Tr[H[O]ϱX]`.
    pub fn slope(&self) -> f64 {
        self.alpha + self.beta
    }

    /// Constant term of `Tr[H[O]ϱX] = (α+β)V_x + (β−α)`.
    pub fn offset(&self) -> f64 {
        self.beta - self.alpha
    }
}

/// Every derived scalar of the unravelling at fixed `(N, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnravellingCoefficients {
    pub params: BathParams,
    /// `√det σ_γ = 1 + 4N(N+1)(1−γ²)`.
    pub f: f64,
    pub h1: f64,
    pub h2: f64,
    pub m_plus: f64,
    pub m_minus: f64,
    /// Covariance of the scaled outcomes `(√dt q_A, √dt q_B)` per unit time.
    pub outcome_cov: [[f64; 2]; 2],
    /// Symmetric square root of `outcome_cov`.
    pub mixing: [[f64; 2]; 2],
    /// Channel driven by the decorrelated increment `dw̃_A`.
    pub channel_a: ChannelWeights,
    /// Channel driven by `dw̃_B`.
    pub channel_b: ChannelWeights,
    pub a1: f64,
    /// Equals `−m₊`, as `b2` equals `−m₋`. The positive sign fails the
    /// Fock closure check.
    pub a2: f64,
    pub b1: f64,
    pub b2: f64,
}

/// Evaluates all coefficients of the γ-unravelling.
///
/// `m₋` is evaluated as `γ√(2N(N+1)/(1+2N+√f))`, which equals the textbook
/// `√((1+2N−√f)/2)` but stays exact as `γ → 0`.
pub fn compute_coefficients(p: BathParams) -> Result<UnravellingCoefficients> {
    p.validate()?;
    let n = p.n;
    let g = p.gamma;
    let nn1 = n * (n + 1.0);
    let s = nn1.sqrt();
    let u = 2.0 * n + 1.0;
    let g2 = g * g;

    let f = 1.0 + 4.0 * nn1 * (1.0 - g2);
    let sqrt_f = f.sqrt();
    let h1 = 1.0 + 2.0 * n * (1.0 - g2);
    let h2 = 2.0 * g2 - 1.0 + 2.0 * n * (g2 - 1.0);
    let m_plus = ((u + sqrt_f) / 2.0).sqrt();
    let m_minus = g * (2.0 * nn1 / (u + sqrt_f)).sqrt();

    let corr = 2.0 * g * s;
    let outcome_cov = [[u, corr], [corr, u]];
    let mixing = [[m_plus, m_minus], [m_minus, m_plus]];

    // dϱ = Σ_j H[O_j]ϱ dw̃_j with O_j read off the decorrelated SME.
    let k_a = (h1 * (n + 1.0), h2 * n);
    let k_b = g * s;
    let channel_a = ChannelWeights {
        alpha: (m_plus * k_a.0 - m_minus * k_b) / f,
        beta: (m_plus * k_a.1 - m_minus * k_b) / f,
    };
    let channel_b = ChannelWeights {
        alpha: (m_minus * k_a.0 - m_plus * k_b) / f,
        beta: (m_minus * k_a.1 - m_plus * k_b) / f,
    };

    Ok(UnravellingCoefficients {
        params: p,
        f,
        h1,
        h2,
        m_plus,
        m_minus,
        outcome_cov,
        mixing,
        channel_a,
        channel_b,
        a1: channel_a.slope(),
        a2: channel_a.offset(),
        b1: channel_b.slope(),
        b2: channel_b.offset(),
    })
}

impl UnravellingCoefficients {
    /// Coefficients with the additive noise terms carrying the opposite sign
    /// (`A₂ = +m₊`, `B₂ = +m₋`). The channel operators are left untouched,
    /// so the Gaussian moments and the Fock oracle disagree; used only to
    /// demonstrate that the closure check detects a sign error.
    pub fn with_flipped_noise_sign(mut self) -> Self {
        self.a2 = -self.a2;
        self.b2 = -self.b2;
        self
    }

    /// `M⁻¹ (dw_A, dw_B)`: correlated outcome noise to decorrelated increments.
    pub fn decorrelate(&self, dw: [f64; 2]) -> [f64; 2] {
        // det M = m₊² − m₋² = √f ≥ 1
        let det = self.f.sqrt();
        [
            (self.m_plus * dw[0] - self.m_minus * dw[1]) / det,
            (self.m_plus * dw[1] - self.m_minus * dw[0]) / det,
        ]
    }

    /// `M (dw̃_A, dw̃_B)`.
    pub fn correlate(&self, dw_tilde: [f64; 2]) -> [f64; 2] {
        let m = &self.mixing;
        [
            m[0][0] * dw_tilde[0] + m[0][1] * dw_tilde[1],
            m[1][0] * dw_tilde[0] + m[1][1] * dw_tilde[1],
        ]
    }

    /// Noise coefficients of `d⟨X⟩` on `(dw̃_A, dw̃_B)` at conditional variance `var_x`.
    pub fn x_noise(&self, var_x: f64) -> [f64; 2] {
        [self.a1 * var_x + self.a2, self.b1 * var_x + self.b2]
    }

    /// Noise coefficients of `d⟨P⟩`; `Tr[H[c]ϱP] = Tr[H[c†]ϱP] = C_xp`.
    pub fn p_noise(&self, cov_xp: f64) -> [f64; 2] {
        [self.a1 * cov_xp, self.b1 * cov_xp]
    }
}

/// Conditional steady-state variance of `X`, `2N+1 − γ²·4N(N+1)/(2N+1)`.
pub fn steady_state_variance(p: BathParams) -> Result<f64> {
    p.validate()?;
    let u = p.thermal_variance();
    let g2 = p.gamma * p.gamma;
    // u(1−γ²) + γ²/u is the same expression without the N(N+1) subtraction.
    Ok(u * (1.0 - g2) + g2 / u)
}

/// Lower bound `1/(2N+1)` on the steady-state variance of any unravelling.
pub fn squeezing_bound(n: f64) -> Result<f64> {
    check_n(n)?;
    Ok(1.0 / (2.0 * n + 1.0))
}

/// Smallest γ giving quadrature squeezing (`V_x^(ss) < 1`) at occupation `N`.
pub fn gamma_threshold(n: f64) -> Result<f64> {
    check_n(n)?;
    Ok(((2.0 * n + 1.0) / (2.0 * (n + 1.0))).sqrt())
}

/// Optimum of the steady-state variance over the thermal occupation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceOptimum {
    pub v_min: f64,
    /// `f64::INFINITY` at γ = 1, where the optimum recedes to infinite N.
    pub n_opt: f64,
}

/// Minimises `steady_state_variance(N, γ)` over `N ≥ 0` at fixed γ.
///
/// Writing `u = 2N+1`, the variance is `u(1−γ²) + γ²/u`, minimised at
/// `u = γ/√(1−γ²)`. That point lies in `u ≥ 1` only for `γ ≥ 1/√2`; below it
/// the optimum is the vacuum bath, `(1, 0)`.
pub fn min_variance_over_n(gamma: f64) -> Result<VarianceOptimum> {
    check_gamma(gamma)?;
    let g2 = gamma * gamma;
    if g2 >= 1.0 {
        return Ok(VarianceOptimum {
            v_min: 0.0,
            n_opt: f64::INFINITY,
        });
    }
    let u_opt = gamma / (1.0 - g2).sqrt();
    // γ = 1/√2 rounds to u_opt = 1 + ε
    if u_opt <= 1.0 + 4.0 * f64::EPSILON {
        return Ok(VarianceOptimum {
            v_min: 1.0,
            n_opt: 0.0,
        });
    }
    Ok(VarianceOptimum {
        v_min: 2.0 * gamma * (1.0 - g2).sqrt(),
        n_opt: (u_opt - 1.0) / 2.0,
    })
}

/// Purity `1/√f` of the conditional steady state.
pub fn steady_state_purity(p: BathParams) -> Result<f64> {
    p.validate()?;
    let f = 1.0 + 4.0 * p.n * (p.n + 1.0) * (1.0 - p.gamma * p.gamma);
    Ok(1.0 / f.sqrt())
}

/// Steady-state `(V_x, V_p, C_xp)` of the conditional Gaussian state.
pub fn steady_state_covariance(p: BathParams) -> Result<(f64, f64, f64)> {
    Ok((steady_state_variance(p)?, p.thermal_variance(), 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn coeffs(n: f64, g: f64) -> UnravellingCoefficients {
        compute_coefficients(BathParams::new(n, g).unwrap()).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn vacuum_bath_has_no_correlations() {
        let c = coeffs(0.0, 0.5);
        assert_eq!(c.f, 1.0);
        assert_eq!(c.h1, 1.0);
        assert_eq!(c.h2, -0.5);
        assert_eq!(c.m_plus, 1.0);
        assert_eq!(c.m_minus, 0.0);
        assert_eq!(c.outcome_cov, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!((c.a1, c.a2, c.b1, c.b2), (1.0, -1.0, 0.0, 0.0));
    }

    #[test]
    fn pure_two_mode_squeezed_bath() {
        let c = coeffs(1.0, 1.0);
        let tol = 1e-14;
        assert!(close(c.f, 1.0, tol));
        assert!(close(c.h1, 1.0, tol) && close(c.h2, 1.0, tol));
        assert!(close(c.m_plus, SQRT2, tol) && close(c.m_minus, 1.0, tol));
        assert!(close(c.outcome_cov[0][0], 3.0, tol));
        assert!(close(c.outcome_cov[0][1], 2.0 * SQRT2, tol));
        assert!(close(c.a1, SQRT2, tol) && close(c.a2, -SQRT2, tol));
        assert!(close(c.b1, -1.0, tol) && close(c.b2, -1.0, tol));
    }

    #[test]
    fn uncorrelated_thermal_bath() {
        let c = coeffs(1.0, 0.0);
        let tol = 1e-14;
        assert!(close(c.f, 9.0, tol));
        assert!(close(c.h1, 3.0, tol) && close(c.h2, -3.0, tol));
        assert!(close(c.m_plus, 3f64.sqrt(), tol));
        assert_eq!(c.m_minus, 0.0);
        assert!(close(c.a1, 1.0 / 3f64.sqrt(), tol));
        assert!(close(c.a2, -(3f64.sqrt()), tol));
        assert_eq!((c.b1, c.b2), (0.0, 0.0));
        // homodyne on the thermal mode: O_A = ((N+1)c − N c†)/√(2N+1)
        assert!(close(c.channel_a.alpha, 2.0 / 3f64.sqrt(), tol));
        assert!(close(c.channel_a.beta, -1.0 / 3f64.sqrt(), tol));
    }

    #[test]
    fn steady_variance_examples() {
        let v = |n, g| steady_state_variance(BathParams::new(n, g).unwrap()).unwrap();
        assert!(close(v(1.0, 1.0), 1.0 / 3.0, 1e-15));
        assert!(close(v(1.0, 0.0), 3.0, 1e-15));
        // 3 − 0.64·8/3
        assert!(close(v(1.0, 0.8), 3.0 - 0.64 * 8.0 / 3.0, 1e-14));
        assert!(close(v(1.0, 0.8), 1.293333333333333, 1e-12));
    }

    #[test]
    fn bound_and_threshold_examples() {
        assert_eq!(squeezing_bound(0.0).unwrap(), 1.0);
        assert!(close(squeezing_bound(1.0).unwrap(), 1.0 / 3.0, 1e-15));
        assert!(close(squeezing_bound(2.5).unwrap(), 1.0 / 6.0, 1e-15));
        assert!(close(gamma_threshold(0.0).unwrap(), 1.0 / SQRT2, 1e-15));
        assert!(close(gamma_threshold(1.0).unwrap(), 0.75f64.sqrt(), 1e-15));
        assert!(close(gamma_threshold(0.25).unwrap(), 0.6f64.sqrt(), 1e-15));
        let far = gamma_threshold(1e6).unwrap();
        assert!(far < 1.0 && 1.0 - far < 1e-6);
    }

    #[test]
    fn min_variance_examples() {
        let edge = min_variance_over_n(1.0 / SQRT2).unwrap();
        assert!(close(edge.v_min, 1.0, 1e-10) && close(edge.n_opt, 0.0, 1e-7));
        let top = min_variance_over_n(1.0).unwrap();
        assert_eq!(top.v_min, 0.0);
        assert!(top.n_opt.is_infinite());
        let low = min_variance_over_n(0.3).unwrap();
        assert_eq!((low.v_min, low.n_opt), (1.0, 0.0));
        let mid = min_variance_over_n(0.9).unwrap();
        assert!(close(mid.v_min, 0.78460, 5e-6));
        assert!(close(mid.n_opt, 0.53237, 5e-6));
    }

    #[test]
    fn purity_examples() {
        let mu = |n, g| steady_state_purity(BathParams::new(n, g).unwrap()).unwrap();
        assert_eq!(mu(0.0, 0.3), 1.0);
        assert!(close(mu(1.0, 1.0), 1.0, 1e-15));
        assert!(close(mu(1.0, 0.8), 1.0 / 3.88f64.sqrt(), 1e-14));
    }

    #[test]
    fn domain_errors() {
        assert!(BathParams::new(-0.1, 0.5).is_err());
        assert!(BathParams::new(1.0, 1.0001).is_err());
        assert!(BathParams::new(f64::NAN, 0.5).is_err());
        assert!(compute_coefficients(BathParams {
            n: 1.0,
            gamma: -0.2
        })
        .is_err());
        assert!(squeezing_bound(-1.0).is_err());
        assert!(gamma_threshold(-1e-3).is_err());
        assert!(min_variance_over_n(1.5).is_err());
    }

    #[test]
    fn mixing_round_trip() {
        let c = coeffs(0.7, 0.6);
        let dw = [0.3, -1.1];
        let back = c.correlate(c.decorrelate(dw));
        assert!(close(back[0], dw[0], 1e-14) && close(back[1], dw[1], 1e-14));
    }

    #[test]
    fn flipped_sign_only_touches_offsets() {
        let c = coeffs(1.0, 0.8);
        let flipped = c.with_flipped_noise_sign();
        assert_eq!(flipped.a1, c.a1);
        assert_eq!(flipped.a2, -c.a2);
        assert_eq!(flipped.channel_a, c.channel_a);
    }
}
