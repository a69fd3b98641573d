//! Conditional Gaussian dynamics of the monitored mode.
//!
//! The covariance obeys a deterministic Riccati equation; only the first
//! moments are driven by the decorrelated increments `(dw̃_A, dw̃_B)`.
//! Quadratures are `X = c + c†`, `P = −i(c − c†)`, so the vacuum has unit
//! variances.

use serde::{Deserialize, Serialize};

use crate::analytics::{compute_coefficients, BathParams, UnravellingCoefficients};
use crate::error::{Error, Result};
use crate::noise::NoiseStream;

/// Residual `|dV/dt|` below which the covariance counts as stationary.
pub const STEADY_RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMoments {
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
}

impl GaussianMoments {
    pub const VACUUM: Self = Self {
        mean_x: 0.0,
        mean_p: 0.0,
        var_x: 1.0,
        var_p: 1.0,
        cov_xp: 0.0,
    };

    pub fn thermal(n: f64) -> Self {
        let v = 2.0 * n + 1.0;
        Self {
            var_x: v,
            var_p: v,
            ..Self::VACUUM
        }
    }

    pub fn covariance(&self) -> Covariance {
        Covariance {
            var_x: self.var_x,
            var_p: self.var_p,
            cov_xp: self.cov_xp,
        }
    }

    pub fn with_covariance(self, c: Covariance) -> Self {
        Self {
            var_x: c.var_x,
            var_p: c.var_p,
            cov_xp: c.cov_xp,
            ..self
        }
    }

    /// `V_x V_p − C_xp²`, at least 1 for a physical state.
    pub fn uncertainty_product(&self) -> f64 {
        self.covariance().determinant()
    }

    /// Purity `1/√det σ` of the Gaussian state.
    pub fn purity(&self) -> f64 {
        1.0 / self.uncertainty_product().sqrt()
    }

    /// Rejects non-positive variances and states violating the uncertainty
    /// relation by more than `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let finite = [
            self.mean_x,
            self.mean_p,
            self.var_x,
            self.var_p,
            self.cov_xp,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.var_x <= 0.0 || self.var_p <= 0.0 {
            return Err(Error::Config(format!("non-physical moments {self:?}")));
        }
        if self.uncertainty_product() < 1.0 - tol {
            return Err(Error::Config(format!(
                "moments violate V_x V_p - C_xp^2 >= 1: {}",
                self.uncertainty_product()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Covariance {
    pub var_x: f64,
    pub var_p: f64,
    pub cov_xp: f64,
}

impl Covariance {
    pub fn determinant(&self) -> f64 {
        self.var_x * self.var_p - self.cov_xp * self.cov_xp
    }

    fn axpy(self, h: f64, d: Covariance) -> Covariance {
        Covariance {
            var_x: self.var_x + h * d.var_x,
            var_p: self.var_p + h * d.var_p,
            cov_xp: self.cov_xp + h * d.cov_xp,
        }
    }

    fn max_abs(&self) -> f64 {
        self.var_x
            .abs()
            .max(self.var_p.abs())
            .max(self.cov_xp.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DeterministicScheme {
    Euler,
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    /// Integrator for the covariance; the means always use Euler–Maruyama.
    pub scheme: DeterministicScheme,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_final: 30.0,
            seed: 0,
            scheme: DeterministicScheme::Rk4,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= self.dt && self.t_final.is_finite()) {
            return Err(Error::Config(format!(
                "t_final ({}) must be at least dt ({})",
                self.t_final, self.dt
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// One Euler step of the unmonitored thermal dynamics.
pub fn unconditional_moment_step(m: GaussianMoments, n: f64, dt: f64) -> GaussianMoments {
    let v_th = 2.0 * n + 1.0;
    GaussianMoments {
        mean_x: m.mean_x - 0.5 * m.mean_x * dt,
        mean_p: m.mean_p - 0.5 * m.mean_p * dt,
        var_x: m.var_x + (v_th - m.var_x) * dt,
        var_p: m.var_p + (v_th - m.var_p) * dt,
        cov_xp: m.cov_xp - m.cov_xp * dt,
    }
}

/// Right-hand side of the conditional Riccati equation.
///
/// Each monitored channel removes the square of its noise coefficient from
/// the unconditional drift `(2N+1 − V, 2N+1 − V_p, −C_xp)`.
pub fn variance_drift(v: Covariance, coeffs: &UnravellingCoefficients, n: f64) -> Covariance {
    let v_th = 2.0 * n + 1.0;
    let kx = coeffs.x_noise(v.var_x);
    let kp = coeffs.p_noise(v.cov_xp);
    Covariance {
        var_x: v_th - v.var_x - kx[0] * kx[0] - kx[1] * kx[1],
        var_p: v_th - v.var_p - kp[0] * kp[0] - kp[1] * kp[1],
        cov_xp: -v.cov_xp - kx[0] * kp[0] - kx[1] * kp[1],
    }
}

/// Advances the covariance by one step of the chosen deterministic scheme.
pub fn covariance_step(
    v: Covariance,
    coeffs: &UnravellingCoefficients,
    dt: f64,
    scheme: DeterministicScheme,
) -> Covariance {
    let n = coeffs.params.n;
    let rhs = |c: Covariance| variance_drift(c, coeffs, n);
    match scheme {
        DeterministicScheme::Euler => v.axpy(dt, rhs(v)),
        DeterministicScheme::Rk4 => {
            let k1 = rhs(v);
            let k2 = rhs(v.axpy(0.5 * dt, k1));
            let k3 = rhs(v.axpy(0.5 * dt, k2));
            let k4 = rhs(v.axpy(dt, k3));
            Covariance {
                var_x: v.var_x + dt / 6.0 * (k1.var_x + 2.0 * k2.var_x + 2.0 * k3.var_x + k4.var_x),
                var_p: v.var_p + dt / 6.0 * (k1.var_p + 2.0 * k2.var_p + 2.0 * k3.var_p + k4.var_p),
                cov_xp: v.cov_xp
                    + dt / 6.0 * (k1.cov_xp + 2.0 * k2.cov_xp + 2.0 * k3.cov_xp + k4.cov_xp),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceSample {
    pub time: f64,
    pub cov: Covariance,
}

/// Integrated covariance path, `n_steps + 1` samples starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSolution {
    pub samples: Vec<CovarianceSample>,
    /// `max |dV/dt|` over the three components at `t_final`.
    pub final_residual: f64,
}

impl CovarianceSolution {
    pub fn last(&self) -> CovarianceSample {
        *self
            .samples
            .last()
            .expect("solution holds at least the initial sample")
    }

    pub fn converged(&self) -> bool {
        self.final_residual <= STEADY_RESIDUAL_TOL
    }

    /// Final covariance, or a non-convergence error when still drifting.
    pub fn steady_state(&self) -> Result<Covariance> {
        if self.converged() {
            Ok(self.last().cov)
        } else {
            Err(Error::NonConvergence {
                t_final: self.last().time,
                residual: self.final_residual,
                tolerance: STEADY_RESIDUAL_TOL,
            })
        }
    }
}

pub fn integrate_covariance(
    p: BathParams,
    init: GaussianMoments,
    cfg: &SimConfig,
) -> Result<CovarianceSolution> {
    let coeffs = compute_coefficients(p)?;
    integrate_covariance_with(&coeffs, init, cfg)
}

/// As [`integrate_covariance`] with caller-supplied coefficients.
pub fn integrate_covariance_with(
    coeffs: &UnravellingCoefficients,
    init: GaussianMoments,
    cfg: &SimConfig,
) -> Result<CovarianceSolution> {
    cfg.validate()?;
    init.validate(1e-9)?;
    let steps = cfg.n_steps();
    let mut samples = Vec::with_capacity(steps + 1);
    let mut v = init.covariance();
    samples.push(CovarianceSample { time: 0.0, cov: v });
    for k in 1..=steps {
        v = covariance_step(v, coeffs, cfg.dt, cfg.scheme);
        let time = k as f64 * cfg.dt;
        if !(v.var_x > 0.0) {
            return Err(Error::StepRejected {
                time,
                var_x: v.var_x,
            });
        }
        samples.push(CovarianceSample { time, cov: v });
    }
    let final_residual = variance_drift(v, coeffs, coeffs.params.n).max_abs();
    Ok(CovarianceSolution {
        samples,
        final_residual,
    })
}

/// Time series of one conditional trajectory.
///
/// Row `k` holds the moments at `times[k] = (k+1)·dt` together with the
/// increments and scaled records of the interval ending there.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub initial: Option<GaussianMoments>,
    pub times: Vec<f64>,
    pub moments: Vec<GaussianMoments>,
    /// `√dt·q_A = ⟨X⟩dt + dw_A`.
    pub record_qa: Vec<f64>,
    /// `√dt·q_B = dw_B`.
    pub record_qb: Vec<f64>,
    pub noise_wa: Vec<f64>,
    pub noise_wb: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            initial: None,
            times: Vec::with_capacity(n),
            moments: Vec::with_capacity(n),
            record_qa: Vec::with_capacity(n),
            record_qb: Vec::with_capacity(n),
            noise_wa: Vec::with_capacity(n),
            noise_wb: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_moments(&self) -> Option<GaussianMoments> {
        self.moments.last().copied().or(self.initial)
    }

    pub(crate) fn push(
        &mut self,
        time: f64,
        m: GaussianMoments,
        record: [f64; 2],
        noise: [f64; 2],
    ) {
        self.times.push(time);
        self.moments.push(m);
        self.record_qa.push(record[0]);
        self.record_qb.push(record[1]);
        self.noise_wa.push(noise[0]);
        self.noise_wb.push(noise[1]);
    }
}

/// Scaled homodyne records of one interval from the decorrelated increments.
pub fn synthesize_record(
    coeffs: &UnravellingCoefficients,
    mean_x: f64,
    dt: f64,
    dw_tilde: [f64; 2],
) -> [f64; 2] {
    let dw = coeffs.correlate(dw_tilde);
    [mean_x * dt + dw[0], dw[1]]
}

/// One Euler–Maruyama step of the means, using the covariance at the start
/// of the step.
pub fn mean_step(
    m: GaussianMoments,
    coeffs: &UnravellingCoefficients,
    dt: f64,
    dw_tilde: [f64; 2],
) -> (f64, f64) {
    let kx = coeffs.x_noise(m.var_x);
    let kp = coeffs.p_noise(m.cov_xp);
    let x = m.mean_x - 0.5 * m.mean_x * dt + kx[0] * dw_tilde[0] + kx[1] * dw_tilde[1];
    let p = m.mean_p - 0.5 * m.mean_p * dt + kp[0] * dw_tilde[0] + kp[1] * dw_tilde[1];
    (x, p)
}

/// Simulates one conditional trajectory with the noise stream of
/// trajectory 0 under `cfg.seed`.
pub fn simulate_trajectory(
    p: BathParams,
    init: GaussianMoments,
    cfg: &SimConfig,
) -> Result<TrajectoryRecord> {
    let coeffs = compute_coefficients(p)?;
    let mut noise = NoiseStream::new(cfg.seed, 0);
    simulate_trajectory_with(&coeffs, init, cfg, &mut noise)
}

/// Trajectory driven by an explicit noise stream.
pub fn simulate_trajectory_with(
    coeffs: &UnravellingCoefficients,
    init: GaussianMoments,
    cfg: &SimConfig,
    noise: &mut NoiseStream,
) -> Result<TrajectoryRecord> {
    let covariance = integrate_covariance_with(coeffs, init, cfg)?;
    Ok(trajectory_on_covariance(
        coeffs,
        init,
        cfg.dt,
        &covariance,
        noise,
    ))
}

/// Drives the means along a precomputed covariance path. The covariance
/// does not depend on the noise, so ensembles integrate it once.
pub(crate) fn trajectory_on_covariance(
    coeffs: &UnravellingCoefficients,
    init: GaussianMoments,
    dt: f64,
    covariance: &CovarianceSolution,
    noise: &mut NoiseStream,
) -> TrajectoryRecord {
    let steps = covariance.samples.len() - 1;
    let mut rec = TrajectoryRecord::with_capacity(steps);
    rec.initial = Some(init);
    let mut m = init.with_covariance(covariance.samples[0].cov);
    for sample in &covariance.samples[1..] {
        let dw = noise.next_pair(dt);
        let record = synthesize_record(coeffs, m.mean_x, dt, dw);
        let (x, p) = mean_step(m, coeffs, dt, dw);
        m = GaussianMoments {
            mean_x: x,
            mean_p: p,
            ..m.with_covariance(sample.cov)
        };
        rec.push(sample.time, m, record, dw);
    }
    rec
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::steady_state_variance;

    fn params(n: f64, g: f64) -> BathParams {
        BathParams::new(n, g).unwrap()
    }

    #[test]
    fn unconditional_euler_step() {
        let m = GaussianMoments {
            var_x: 5.0,
            ..GaussianMoments::VACUUM
        };
        let next = unconditional_moment_step(m, 1.0, 0.01);
        assert!((next.var_x - 4.98).abs() < 1e-15);
        let th = GaussianMoments::thermal(1.0);
        assert_eq!(unconditional_moment_step(th, 1.0, 0.01), th);
    }

    #[test]
    fn unconditional_steps_follow_exponential_relaxation() {
        let mut m = GaussianMoments {
            mean_x: 1.0,
            ..GaussianMoments::VACUUM
        };
        let dt = 1e-5;
        for _ in 0..100_000 {
            m = unconditional_moment_step(m, 1.0, dt);
        }
        // t = 1
        assert!((m.mean_x - (-0.5f64).exp()).abs() < 1e-5);
        assert!((m.var_x - (3.0 - 2.0 * (-1.0f64).exp())).abs() < 1e-5);
    }

    #[test]
    fn drift_vanishes_at_steady_state() {
        for &(n, g) in &[(1.0, 0.8), (0.3, 0.0), (4.0, 1.0), (2.0, 0.5)] {
            let p = params(n, g);
            let c = compute_coefficients(p).unwrap();
            let v = Covariance {
                var_x: steady_state_variance(p).unwrap(),
                var_p: 2.0 * n + 1.0,
                cov_xp: 0.0,
            };
            let d = variance_drift(v, &c, n);
            assert!(d.max_abs() < 1e-12, "({n},{g}) drift {d:?}");
        }
    }

    #[test]
    fn drift_examples() {
        let c = compute_coefficients(params(1.0, 1.0)).unwrap();
        let v = Covariance {
            var_x: 1.0,
            var_p: 1.0,
            cov_xp: 0.0,
        };
        assert!((variance_drift(v, &c, 1.0).var_x + 2.0).abs() < 1e-14);
        for g in [0.0, 0.4, 1.0] {
            let c = compute_coefficients(params(0.0, g)).unwrap();
            assert_eq!(variance_drift(v, &c, 0.0).var_x, 0.0);
        }
    }

    #[test]
    fn covariance_converges_to_closed_form() {
        let cfg = SimConfig::default();
        let cases = [
            (1.0, 1.0, GaussianMoments::thermal(1.0), 1.0 / 3.0, 1e-6),
            (
                1.0,
                0.0,
                GaussianMoments {
                    var_x: 0.5,
                    var_p: 2.0,
                    ..GaussianMoments::VACUUM
                },
                3.0,
                1e-6,
            ),
            (1.0, 0.8, GaussianMoments::VACUUM, 1.293333333333333, 1e-5),
        ];
        for (n, g, init, expected, tol) in cases {
            let sol = integrate_covariance(params(n, g), init, &cfg).unwrap();
            let last = sol.steady_state().unwrap();
            assert!(
                (last.var_x - expected).abs() < tol,
                "({n},{g}): {}",
                last.var_x
            );
            assert!((last.var_p - (2.0 * n + 1.0)).abs() < 1e-6);
            assert!(last.cov_xp.abs() < 1e-9);
        }
    }

    #[test]
    fn short_runs_report_nonconvergence() {
        let cfg = SimConfig {
            t_final: 1.0,
            ..SimConfig::default()
        };
        let sol =
            integrate_covariance(params(1.0, 1.0), GaussianMoments::thermal(1.0), &cfg).unwrap();
        assert!(matches!(
            sol.steady_state(),
            Err(Error::NonConvergence { .. })
        ));
    }

    #[test]
    fn oversized_step_is_rejected() {
        let cfg = SimConfig {
            dt: 2.0,
            t_final: 20.0,
            scheme: DeterministicScheme::Euler,
            ..SimConfig::default()
        };
        let init = GaussianMoments {
            var_x: 30.0,
            var_p: 30.0,
            ..GaussianMoments::VACUUM
        };
        let err = integrate_covariance(params(1.0, 1.0), init, &cfg).unwrap_err();
        assert!(matches!(err, Error::StepRejected { .. }), "{err}");
    }

    #[test]
    fn degenerate_initial_state_rejected() {
        let init = GaussianMoments {
            var_x: 0.0,
            ..GaussianMoments::VACUUM
        };
        assert!(integrate_covariance(params(1.0, 0.5), init, &SimConfig::default()).is_err());
    }

    #[test]
    fn vacuum_bath_means_decay_deterministically() {
        let init = GaussianMoments {
            mean_x: 1.0,
            mean_p: -0.5,
            ..GaussianMoments::VACUUM
        };
        let cfg = SimConfig {
            t_final: 2.0,
            ..SimConfig::default()
        };
        let rec = simulate_trajectory(params(0.0, 0.6), init, &cfg).unwrap();
        let last = rec.final_moments().unwrap();
        assert_eq!(last.var_x, 1.0);
        assert_eq!(last.var_p, 1.0);
        let decay = (1.0 - 0.5 * cfg.dt).powi(cfg.n_steps() as i32);
        assert!((last.mean_x - decay).abs() < 1e-12);
        assert!((last.mean_p + 0.5 * decay).abs() < 1e-12);
    }

    #[test]
    fn record_lengths_agree() {
        let cfg = SimConfig {
            t_final: 0.5,
            ..SimConfig::default()
        };
        let rec = simulate_trajectory(params(1.0, 0.5), GaussianMoments::VACUUM, &cfg).unwrap();
        let n = cfg.n_steps();
        assert_eq!(rec.len(), n);
        for len in [
            rec.moments.len(),
            rec.record_qa.len(),
            rec.record_qb.len(),
            rec.noise_wa.len(),
            rec.noise_wb.len(),
        ] {
            assert_eq!(len, n);
        }
        assert!((rec.times[n - 1] - 0.5).abs() < 1e-12);
    }
}
