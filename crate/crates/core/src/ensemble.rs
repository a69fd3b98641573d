//! Monte Carlo ensembles of conditional trajectories.
//!
//! Trajectory `i` always draws from noise stream `(seed, i)`. The index
//! range is cut into chunks that depend only on `n_traj`, each chunk is
//! accumulated sequentially and the chunk partials are merged in index
//! order, so the floating-point result does not depend on how many workers
//! ran the chunks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{compute_coefficients, BathParams, UnravellingCoefficients};
use crate::error::{Error, Result};
use crate::fock::{
    simulate_fock_trajectory_with, thermal_state, FockDensityMatrix, FockScheme, FockSimConfig,
    SuperoperatorTerms,
};
use crate::gaussian::{
    integrate_covariance_with, trajectory_on_covariance, GaussianMoments, SimConfig,
};
use crate::noise::NoiseStream;

/// Worker-count override read by [`run_ensemble`].
pub const WORKERS_ENV: &str = "THERMAL_FILTER_WORKERS";

/// Upper bound on the number of chunks an ensemble is split into.
pub const MAX_CHUNKS: usize = 32;

/// Fraction of trajectories allowed to fail before the run is aborted.
pub const FAILURE_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    #[default]
    Gaussian,
    Fock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Vacuum,
    /// Thermal state of the bath occupation `N`.
    Thermal,
}

impl InitialState {
    pub fn moments(self, n: f64) -> GaussianMoments {
        match self {
            Self::Vacuum => GaussianMoments::VACUUM,
            Self::Thermal => GaussianMoments::thermal(n),
        }
    }

    pub fn density_matrix(self, n: f64, dim: usize) -> Result<FockDensityMatrix> {
        match self {
            Self::Vacuum => FockDensityMatrix::vacuum(dim),
            Self::Thermal => thermal_state(n, dim),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub sim: SimConfig,
    pub n_traj: usize,
    pub representation: Representation,
    pub init: InitialState,
    /// Fock truncation, ignored by the Gaussian representation.
    pub dim: usize,
    pub fock_scheme: FockScheme,
    /// Keep every `record_every`-th step; the final step is always kept.
    pub record_every: usize,
    /// Thread count; `None` reads [`WORKERS_ENV`] and falls back to the
    /// available parallelism.
    pub workers: Option<usize>,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            n_traj: 100,
            representation: Representation::Gaussian,
            init: InitialState::Vacuum,
            dim: 30,
            fock_scheme: FockScheme::default(),
            record_every: 1,
            workers: None,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        self.sim.validate()?;
        if self.n_traj == 0 {
            return Err(Error::Config("n_traj must be at least 1".into()));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("worker count must be at least 1".into()));
        }
        Ok(())
    }

    fn fock(&self) -> FockSimConfig {
        FockSimConfig {
            dim: self.dim,
            dt: self.sim.dt,
            t_final: self.sim.t_final,
            seed: self.sim.seed,
            scheme: self.fock_scheme,
            ..FockSimConfig::default()
        }
    }

    /// Step indices (rows of a trajectory record) that enter the statistics.
    fn kept_rows(&self) -> Vec<usize> {
        let steps = self.sim.n_steps();
        (0..steps)
            .filter(|k| (k + 1) % self.record_every == 0 || k + 1 == steps)
            .collect()
    }
}

/// Worker count from the environment, if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&w| w > 0)
}

/// Single-pass mean and centred second moment.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Accumulator {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Accumulator {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Pairwise combination of two disjoint samples.
    pub fn merge(&mut self, other: &Self) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let d = other.mean - self.mean;
        self.mean += d * nb / n;
        self.m2 += other.m2 + d * d * na * nb / n;
        self.count += other.count;
    }

    /// Population variance, zero for a single sample.
    pub fn variance(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.m2 / self.count as f64).max(0.0)
        }
    }

    /// Standard error of the mean from the unbiased variance; zero below
    /// two samples.
    pub fn std_error(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            let n = self.count as f64;
            (self.m2.max(0.0) / (n - 1.0) / n).sqrt()
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct RowAcc {
    mean_x: Accumulator,
    mean_p: Accumulator,
    var_x: Accumulator,
    var_p: Accumulator,
    cov_xp: Accumulator,
    /// `⟨X⟩² + V_x`, whose mean is the unconditional variance when the
    /// unconditional mean vanishes.
    total_x: Accumulator,
    purity: Accumulator,
}

impl RowAcc {
    fn push(&mut self, m: &GaussianMoments, purity: f64) {
        self.mean_x.push(m.mean_x);
        self.mean_p.push(m.mean_p);
        self.var_x.push(m.var_x);
        self.var_p.push(m.var_p);
        self.cov_xp.push(m.cov_xp);
        self.total_x.push(m.mean_x * m.mean_x + m.var_x);
        self.purity.push(purity);
    }

    fn merge(&mut self, o: &Self) {
        self.mean_x.merge(&o.mean_x);
        self.mean_p.merge(&o.mean_p);
        self.var_x.merge(&o.var_x);
        self.var_p.merge(&o.var_p);
        self.cov_xp.merge(&o.cov_xp);
        self.total_x.merge(&o.total_x);
        self.purity.merge(&o.purity);
    }
}

/// Ensemble statistics at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRow {
    pub t: f64,
    pub mean_x: f64,
    pub mean_x_se: f64,
    pub mean_p: f64,
    pub mean_p_se: f64,
    /// Spread of the conditional means across trajectories.
    pub var_of_mean_x: f64,
    pub var_of_mean_p: f64,
    /// Averages of the conditional second moments.
    pub cond_var_x: f64,
    pub cond_var_p: f64,
    pub cond_cov_xp: f64,
    /// `E[⟨X⟩²] + E[V_x]`.
    pub total_var_x: f64,
    pub total_var_x_se: f64,
    pub purity: f64,
}

impl EnsembleRow {
    fn from_acc(t: f64, a: &RowAcc) -> Self {
        Self {
            t,
            mean_x: a.mean_x.mean,
            mean_x_se: a.mean_x.std_error(),
            mean_p: a.mean_p.mean,
            mean_p_se: a.mean_p.std_error(),
            var_of_mean_x: a.mean_x.variance(),
            var_of_mean_p: a.mean_p.variance(),
            cond_var_x: a.var_x.mean,
            cond_var_p: a.var_p.mean,
            cond_cov_xp: a.cov_xp.mean,
            total_var_x: a.total_x.mean,
            total_var_x_se: a.total_x.std_error(),
            purity: a.purity.mean,
        }
    }
}

/// Averaged final Fock state against the unconditional evolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FockAverage {
    pub mean_state: FockDensityMatrix,
    /// Lindblad evolution of the initial state with the same step.
    pub lindblad: FockDensityMatrix,
    pub trace_distance: f64,
    /// Monte Carlo error of the averaged state in trace distance, from the
    /// spread of the chunk averages.
    pub trace_distance_se: f64,
    pub n_batches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFailure {
    pub index: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub n_traj: usize,
    pub representation: Representation,
    pub rows: Vec<EnsembleRow>,
    pub fock: Option<FockAverage>,
    /// Trajectories dropped from the statistics.
    pub failures: Vec<TrajectoryFailure>,
    /// Fock trajectories whose truncation tail exceeded its tolerance.
    pub truncation_warnings: usize,
    /// Fock steps that were subdivided for positivity, over all trajectories.
    pub rejections: usize,
}

impl EnsembleStats {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn last(&self) -> Option<&EnsembleRow> {
        self.rows.last()
    }
}

struct Chunk {
    rows: Vec<RowAcc>,
    state_sum: Option<FockDensityMatrix>,
    succeeded: usize,
    failures: Vec<(u64, Error)>,
    truncation_warnings: usize,
    rejections: usize,
}

/// Chunk boundaries for `n` trajectories.
pub fn chunk_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    let len = n.div_ceil(MAX_CHUNKS).max(1);
    (0..n).step_by(len).map(|s| s..(s + len).min(n)).collect()
}

pub fn run_ensemble(p: BathParams, cfg: &EnsembleConfig) -> Result<EnsembleStats> {
    cfg.validate()?;
    let coeffs = compute_coefficients(p)?;
    let kept = cfg.kept_rows();
    let times: Vec<f64> = kept.iter().map(|&k| (k + 1) as f64 * cfg.sim.dt).collect();
    let ranges = chunk_ranges(cfg.n_traj);

    let workers = cfg
        .workers
        .or_else(workers_from_env)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;

    let chunks: Vec<Chunk> = match cfg.representation {
        Representation::Gaussian => {
            let init = cfg.init.moments(p.n);
            let covariance = integrate_covariance_with(&coeffs, init, &cfg.sim)?;
            pool.install(|| {
                ranges
                    .par_iter()
                    .map(|r| {
                        let mut rows = vec![RowAcc::default(); kept.len()];
                        for i in r.clone() {
                            let mut noise = NoiseStream::new(cfg.sim.seed, i as u64);
                            let rec = trajectory_on_covariance(
                                &coeffs,
                                init,
                                cfg.sim.dt,
                                &covariance,
                                &mut noise,
                            );
                            for (acc, &k) in rows.iter_mut().zip(&kept) {
                                let m = &rec.moments[k];
                                acc.push(m, m.purity());
                            }
                        }
                        Chunk {
                            rows,
                            state_sum: None,
                            succeeded: r.len(),
                            failures: Vec::new(),
                            truncation_warnings: 0,
                            rejections: 0,
                        }
                    })
                    .collect()
            })
        }
        Representation::Fock => {
            let fcfg = cfg.fock();
            fcfg.validate()?;
            let init = cfg.init.density_matrix(p.n, cfg.dim)?;
            let terms = SuperoperatorTerms::new(&coeffs, cfg.dim);
            pool.install(|| {
                ranges
                    .par_iter()
                    .map(|r| fock_chunk(&coeffs, &terms, &init, &fcfg, &kept, r.clone()))
                    .collect()
            })
        }
    };
    merge_chunks(p, cfg, times, chunks)
}

fn fock_chunk(
    coeffs: &UnravellingCoefficients,
    terms: &SuperoperatorTerms,
    init: &FockDensityMatrix,
    fcfg: &FockSimConfig,
    kept: &[usize],
    range: std::ops::Range<usize>,
) -> Chunk {
    let mut rows = vec![RowAcc::default(); kept.len()];
    let mut sum = FockDensityMatrix::zeros(init.dim());
    let mut succeeded = 0;
    let mut failures = Vec::new();
    let mut truncation_warnings = 0;
    let mut rejections = 0;
    for i in range {
        let mut noise = NoiseStream::new(fcfg.seed, i as u64);
        match simulate_fock_trajectory_with(coeffs, terms, init, fcfg, &mut noise) {
            Ok(tr) => {
                for (acc, &k) in rows.iter_mut().zip(kept) {
                    acc.push(&tr.moments[k], tr.purity[k]);
                }
                sum.add_scaled(1.0, &tr.final_state);
                succeeded += 1;
                truncation_warnings += usize::from(!tr.health.healthy());
                rejections += tr.rejections;
            }
            Err(e) => failures.push((i as u64, e)),
        }
    }
    Chunk {
        rows,
        state_sum: Some(sum),
        succeeded,
        failures,
        truncation_warnings,
        rejections,
    }
}

fn merge_chunks(
    p: BathParams,
    cfg: &EnsembleConfig,
    times: Vec<f64>,
    chunks: Vec<Chunk>,
) -> Result<EnsembleStats> {
    let mut total = vec![RowAcc::default(); times.len()];
    let mut failures = Vec::new();
    for c in &chunks {
        for (t, a) in total.iter_mut().zip(&c.rows) {
            t.merge(a);
        }
    }
    for c in chunks.iter() {
        for (index, e) in &c.failures {
            failures.push((*index, e.to_string()));
        }
    }
    let failed = failures.len();
    if failed as f64 > FAILURE_TOLERANCE * cfg.n_traj as f64 {
        let mut chunks = chunks;
        let (index, first) = chunks
            .iter_mut()
            .find_map(|c| (!c.failures.is_empty()).then(|| c.failures.remove(0)))
            .expect("at least one failure");
        return Err(Error::EnsembleAborted {
            failed,
            total: cfg.n_traj,
            first: Box::new(Error::Trajectory {
                index,
                source: Box::new(first),
            }),
        });
    }

    let fock = match cfg.representation {
        Representation::Gaussian => None,
        Representation::Fock => Some(average_state(p, cfg, &chunks)?),
    };
    Ok(EnsembleStats {
        n_traj: cfg.n_traj,
        representation: cfg.representation,
        rows: times
            .iter()
            .zip(&total)
            .map(|(&t, a)| EnsembleRow::from_acc(t, a))
            .collect(),
        fock,
        failures: failures
            .into_iter()
            .map(|(index, message)| TrajectoryFailure { index, message })
            .collect(),
        truncation_warnings: chunks.iter().map(|c| c.truncation_warnings).sum(),
        rejections: chunks.iter().map(|c| c.rejections).sum(),
    })
}

/// Trace distance of the averaged state to the Lindblad solution, with the
/// batch-means error `σ² = B/(B−1) Σ_b (n_b/n)² D(ρ̄_b, ρ̄)²`.
fn average_state(p: BathParams, cfg: &EnsembleConfig, chunks: &[Chunk]) -> Result<FockAverage> {
    let n_ok: usize = chunks.iter().map(|c| c.succeeded).sum();
    let mut mean = FockDensityMatrix::zeros(cfg.dim);
    for c in chunks {
        if let Some(s) = &c.state_sum {
            mean.add_scaled(1.0 / n_ok as f64, s);
        }
    }
    let batches: Vec<(f64, FockDensityMatrix)> = chunks
        .iter()
        .filter(|c| c.succeeded > 0)
        .filter_map(|c| {
            let mut b = c.state_sum.clone()?;
            let w = c.succeeded as f64;
            b.as_mut_slice().iter_mut().for_each(|v| *v /= w);
            Some((w / n_ok as f64, b))
        })
        .collect();
    let n_batches = batches.len();
    let trace_distance_se = if n_batches < 2 {
        0.0
    } else {
        let s: f64 = batches
            .iter()
            .map(|(w, b)| (w * b.trace_distance(&mean)).powi(2))
            .sum();
        (s * n_batches as f64 / (n_batches - 1) as f64).sqrt()
    };

    let lindblad = lindblad_solution(p.n, cfg.init, cfg.dim, cfg.sim.dt, cfg.sim.n_steps())?;
    Ok(FockAverage {
        trace_distance: mean.trace_distance(&lindblad),
        mean_state: mean,
        lindblad,
        trace_distance_se,
        n_batches,
    })
}

/// Unconditional evolution over `steps` Euler steps of size `dt`.
pub fn lindblad_solution(
    n: f64,
    init: InitialState,
    dim: usize,
    dt: f64,
    steps: usize,
) -> Result<FockDensityMatrix> {
    let terms = SuperoperatorTerms::thermal(n, dim)?;
    let mut rho = init.density_matrix(n, dim)?;
    for _ in 0..steps {
        rho = terms.lindblad_step(&rho, dt);
    }
    Ok(rho)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_cfg(n_traj: usize, t_final: f64, seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            sim: SimConfig {
                t_final,
                seed,
                ..SimConfig::default()
            },
            n_traj,
            workers: Some(1),
            ..EnsembleConfig::default()
        }
    }

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let xs: Vec<f64> = (0..101)
            .map(|k| (k as f64 * 0.77).sin() * 3.0 + 1.0)
            .collect();
        let mut all = Accumulator::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Accumulator::default();
        let mut b = Accumulator::default();
        xs[..37].iter().for_each(|&x| a.push(x));
        xs[37..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert_eq!(a.count, all.count);
        assert!((a.mean - all.mean).abs() < 1e-14);
        assert!((a.m2 - all.m2).abs() < 1e-11);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
        assert!((all.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn chunks_cover_the_range_in_order() {
        for n in [1, 5, 31, 32, 33, 2000, 10_000] {
            let r = chunk_ranges(n);
            assert!(r.len() <= MAX_CHUNKS);
            assert_eq!(r[0].start, 0);
            assert_eq!(r.last().unwrap().end, n);
            assert!(r.windows(2).all(|w| w[0].end == w[1].start));
        }
    }

    #[test]
    fn single_trajectory_has_no_spread() {
        let p = BathParams::new(1.0, 0.8).unwrap();
        let s = run_ensemble(p, &gaussian_cfg(1, 0.5, 3)).unwrap();
        let rec = crate::gaussian::simulate_trajectory(
            p,
            GaussianMoments::VACUUM,
            &SimConfig {
                t_final: 0.5,
                seed: 3,
                ..SimConfig::default()
            },
        )
        .unwrap();
        assert_eq!(s.rows.len(), rec.len());
        for (row, m) in s.rows.iter().zip(&rec.moments) {
            assert_eq!(row.mean_x, m.mean_x);
            assert_eq!(row.cond_var_x, m.var_x);
            assert_eq!(row.var_of_mean_x, 0.0);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let p = BathParams::new(0.5, 0.9).unwrap();
        let mut cfg = gaussian_cfg(200, 1.0, 11);
        cfg.record_every = 50;
        let one = run_ensemble(p, &cfg).unwrap();
        for w in [2, 4, 8] {
            cfg.workers = Some(w);
            assert_eq!(run_ensemble(p, &cfg).unwrap(), one);
        }
    }

    #[test]
    fn record_stride_keeps_the_final_step() {
        let mut cfg = gaussian_cfg(3, 1.0, 0);
        cfg.record_every = 300;
        assert_eq!(cfg.kept_rows(), vec![299, 599, 899, 999]);
    }

    #[test]
    fn conditional_variances_are_shared() {
        let p = BathParams::new(1.0, 0.6).unwrap();
        let mut cfg = gaussian_cfg(50, 2.0, 5);
        cfg.record_every = 100;
        let s = run_ensemble(p, &cfg).unwrap();
        let cov = integrate_covariance_with(
            &compute_coefficients(p).unwrap(),
            GaussianMoments::VACUUM,
            &cfg.sim,
        )
        .unwrap();
        for r in &s.rows {
            let k = (r.t / cfg.sim.dt).round() as usize;
            assert!((r.cond_var_x - cov.samples[k].cov.var_x).abs() < 1e-12);
        }
    }

    fn failing_chunk(indices: &[u64], ok: usize) -> Chunk {
        Chunk {
            rows: Vec::new(),
            state_sum: None,
            succeeded: ok,
            failures: indices
                .iter()
                .map(|&i| {
                    let e = Error::PositivityViolation {
                        time: 0.0,
                        dt: 1e-3,
                        tolerance: 1e-8,
                    };
                    (i, e)
                })
                .collect(),
            truncation_warnings: 0,
            rejections: 0,
        }
    }

    #[test]
    fn failures_beyond_one_percent_abort() {
        let p = BathParams::new(1.0, 1.0).unwrap();
        let cfg = gaussian_cfg(200, 0.01, 0);
        let kept = || failing_chunk(&[], 100);
        let s = merge_chunks(
            p,
            &cfg,
            Vec::new(),
            vec![kept(), failing_chunk(&[150, 170], 98)],
        )
        .unwrap();
        assert_eq!(s.failures.len(), 2);
        assert_eq!(s.failures[0].index, 150);
        match merge_chunks(
            p,
            &cfg,
            Vec::new(),
            vec![kept(), failing_chunk(&[120, 150, 170], 97)],
        ) {
            Err(Error::EnsembleAborted {
                failed,
                total,
                first,
            }) => {
                assert_eq!((failed, total), (3, 200));
                assert!(matches!(*first, Error::Trajectory { index: 120, .. }));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn small_truncation_is_flagged_per_trajectory() {
        let p = BathParams::new(1.0, 1.0).unwrap();
        let cfg = EnsembleConfig {
            representation: Representation::Fock,
            dim: 4,
            init: InitialState::Thermal,
            ..gaussian_cfg(3, 0.01, 0)
        };
        let s = run_ensemble(p, &cfg).unwrap();
        assert_eq!(s.truncation_warnings, 3);
        assert!(s.failures.is_empty());
    }
}
