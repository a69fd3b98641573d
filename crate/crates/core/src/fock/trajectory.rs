use serde::{Deserialize, Serialize};

use super::step::KrausWorkspace;
use super::{
    gaussian_kraus_step, moments_from_rho, sme_step_uncorrelated, FockDensityMatrix,
    SuperoperatorTerms, TruncationHealth, DEFAULT_TAIL_TOL,
};
use crate::analytics::{compute_coefficients, BathParams, UnravellingCoefficients};
use crate::error::{Error, Result};
use crate::gaussian::{synthesize_record, GaussianMoments};
use crate::noise::{bridge_split, NoiseStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FockScheme {
    /// Normalised Euler–Maruyama on the decorrelated SME.
    Euler,
    /// Kraus-form step of the monitored channels; keeps pure states pure.
    #[default]
    GaussianKraus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FockSimConfig {
    pub dim: usize,
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    pub scheme: FockScheme,
    /// Eigenvalues down to `−positivity_tol` are accepted.
    pub positivity_tol: f64,
    pub tail_tol: f64,
}

impl Default for FockSimConfig {
    fn default() -> Self {
        Self {
            dim: 30,
            dt: 1e-3,
            t_final: 3.0,
            seed: 0,
            scheme: FockScheme::GaussianKraus,
            positivity_tol: 1e-8,
            tail_tol: DEFAULT_TAIL_TOL,
        }
    }
}

/// Halvings allowed for a rejected step, giving a floor of `dt/64`.
pub const MAX_HALVINGS: u32 = 6;

impl FockSimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 2 {
            return Err(Error::Config(format!(
                "Fock dimension must be >= 2, got {}",
                self.dim
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!(
                "t_final must be non-negative, got {}",
                self.t_final
            )));
        }
        if !(self.positivity_tol >= 0.0 && self.tail_tol >= 0.0) {
            return Err(Error::Config("tolerances must be non-negative".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Time series of one conditional density-operator trajectory. Row `k`
/// belongs to `times[k] = (k+1)·dt`, as in the Gaussian record.
#[derive(Debug, Clone)]
pub struct FockTrajectory {
    pub times: Vec<f64>,
    pub moments: Vec<GaussianMoments>,
    pub purity: Vec<f64>,
    pub record_qa: Vec<f64>,
    pub record_qb: Vec<f64>,
    pub noise_wa: Vec<f64>,
    pub noise_wb: Vec<f64>,
    pub final_state: FockDensityMatrix,
    /// Steps that had to be subdivided.
    pub rejections: usize,
    /// Worst truncation gauge seen along the run. A tail above tolerance
    /// is a warning; the run itself continues.
    pub health: TruncationHealth,
}

/// Conditional trajectory on the noise stream of trajectory 0.
pub fn simulate_fock_trajectory(
    p: BathParams,
    init: &FockDensityMatrix,
    cfg: &FockSimConfig,
) -> Result<FockTrajectory> {
    let coeffs = compute_coefficients(p)?;
    let terms = SuperoperatorTerms::new(&coeffs, cfg.dim);
    let mut noise = NoiseStream::new(cfg.seed, 0);
    simulate_fock_trajectory_with(&coeffs, &terms, init, cfg, &mut noise)
}

/// Conditional trajectory driven by an explicit noise stream. The same
/// stream fed to the Gaussian integrator gives the same decorrelated
/// increments, step for step.
pub fn simulate_fock_trajectory_with(
    coeffs: &UnravellingCoefficients,
    terms: &SuperoperatorTerms,
    init: &FockDensityMatrix,
    cfg: &FockSimConfig,
    noise: &mut NoiseStream,
) -> Result<FockTrajectory> {
    cfg.validate()?;
    if init.dim() != cfg.dim || terms.dim != cfg.dim {
        return Err(Error::Config(format!(
            "state dimension {} and operator dimension {} must equal dim = {}",
            init.dim(),
            terms.dim,
            cfg.dim
        )));
    }
    let steps = cfg.n_steps();
    let mut stepper = Stepper {
        terms,
        cfg,
        bridge: NoiseStream::new(cfg.seed ^ BRIDGE_KEY, noise.trajectory()),
        work: KrausWorkspace::default(),
        scratch: Vec::new(),
        rejections: 0,
    };
    let mut rho = init.clone();
    rho.normalize();
    let mut health = rho.truncation_health(cfg.tail_tol);

    let mut out = FockTrajectory {
        times: Vec::with_capacity(steps),
        moments: Vec::with_capacity(steps),
        purity: Vec::with_capacity(steps),
        record_qa: Vec::with_capacity(steps),
        record_qb: Vec::with_capacity(steps),
        noise_wa: Vec::with_capacity(steps),
        noise_wb: Vec::with_capacity(steps),
        final_state: rho.clone(),
        rejections: 0,
        health,
    };
    let mut moments = moments_from_rho(&rho);
    for k in 0..steps {
        let t0 = k as f64 * cfg.dt;
        let dw = noise.next_pair(cfg.dt);
        let record = synthesize_record(coeffs, moments.mean_x, cfg.dt, dw);
        rho = stepper.advance(&rho, dw, cfg.dt, t0, 0)?;

        let h = rho.truncation_health(cfg.tail_tol);
        if h.tail_population > health.tail_population {
            health = h;
        }
        moments = moments_from_rho(&rho);
        out.times.push((k + 1) as f64 * cfg.dt);
        out.moments.push(moments);
        out.purity.push(rho.purity());
        out.record_qa.push(record[0]);
        out.record_qb.push(record[1]);
        out.noise_wa.push(dw[0]);
        out.noise_wb.push(dw[1]);
    }
    out.final_state = rho;
    out.rejections = stepper.rejections;
    out.health = health;
    Ok(out)
}

/// Separates the bridge normals from the increments of the main stream.
const BRIDGE_KEY: u64 = 0x6a09_e667_f3bc_c908;

struct Stepper<'a> {
    terms: &'a SuperoperatorTerms,
    cfg: &'a FockSimConfig,
    bridge: NoiseStream,
    work: KrausWorkspace,
    scratch: Vec<num_complex::Complex64>,
    rejections: usize,
}

impl Stepper<'_> {
    fn advance(
        &mut self,
        rho: &FockDensityMatrix,
        dw: [f64; 2],
        h: f64,
        t0: f64,
        depth: u32,
    ) -> Result<FockDensityMatrix> {
        let next = match self.cfg.scheme {
            FockScheme::Euler => sme_step_uncorrelated(rho, self.terms, dw[0], dw[1], h),
            FockScheme::GaussianKraus => {
                gaussian_kraus_step(rho, self.terms, dw, h, &mut self.work).0
            }
        };
        if next.is_positive_within(self.cfg.positivity_tol, &mut self.scratch) {
            return Ok(next);
        }
        if depth == MAX_HALVINGS {
            return Err(Error::PositivityViolation {
                time: t0,
                dt: h,
                tolerance: self.cfg.positivity_tol,
            });
        }
        if depth == 0 {
            self.rejections += 1;
        }
        let z = self.bridge.standard_pair();
        let (a0, a1) = bridge_split(dw[0], h, z[0]);
        let (b0, b1) = bridge_split(dw[1], h, z[1]);
        let half = 0.5 * h;
        let mid = self.advance(rho, [a0, b0], half, t0, depth + 1)?;
        self.advance(&mid, [a1, b1], half, t0 + half, depth + 1)
    }
}
