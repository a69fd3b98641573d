//! One function per subcommand. Each returns the table to emit together
//! with an overall verdict and free-form notes for the terminal.

use super::config::RunConfig;
use super::{Cell, Table};
use crate::analytics::{
    compute_coefficients, gamma_threshold, min_variance_over_n, squeezing_bound,
    steady_state_purity, steady_state_variance, BathParams,
};
use crate::ensemble::{run_ensemble, EnsembleConfig, Representation};
use crate::error::Result;
use crate::fock::{
    default_dim, simulate_fock_trajectory_with, sme_step_correlated, sme_step_uncorrelated,
    FockDensityMatrix, FockSimConfig, SuperoperatorTerms, DEFAULT_TAIL_TOL,
};
use crate::gaussian::{
    integrate_covariance, simulate_trajectory_with, DeterministicScheme, GaussianMoments,
    SimConfig, TrajectoryRecord,
};
use crate::noise::NoiseStream;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub table: Table,
    pub passed: bool,
    pub notes: Vec<String>,
}

impl Report {
    fn ok(table: Table) -> Self {
        Self {
            table,
            passed: true,
            notes: Vec::new(),
        }
    }
}

/// Agreement required between the analytic and integrated steady variance.
pub const SWEEP_TOL: f64 = 1e-5;
pub const CLOSURE_TOL: f64 = 1e-2;
pub const SME_EQUIVALENCE_TOL: f64 = 1e-12;
pub const SME_EQUIVALENCE_STEPS: usize = 1000;

pub const DEFAULT_N_GRID: [f64; 5] = [0.1, 0.5, 1.0, 2.0, 5.0];
pub const DEFAULT_GAMMA_GRID: &str = "0:1:0.05";

/// `{0} ∪ {10^(k/10) : k = −30..30}`.
pub fn default_threshold_grid() -> Vec<f64> {
    std::iter::once(0.0)
        .chain((-30..=30).map(|k| 10f64.powf(k as f64 / 10.0)))
        .collect()
}

fn sim_config(cfg: &RunConfig, t_default: f64) -> SimConfig {
    SimConfig {
        dt: cfg.dt(),
        t_final: cfg.t_final.unwrap_or(t_default),
        seed: cfg.seed(),
        scheme: cfg.scheme.unwrap_or(DeterministicScheme::Rk4),
    }
}

fn t_default(rep: Representation) -> f64 {
    match rep {
        Representation::Gaussian => 30.0,
        Representation::Fock => 3.0,
    }
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Report> {
    let ns = cfg.n_values(&DEFAULT_N_GRID)?;
    let gammas = cfg.gamma_values(DEFAULT_GAMMA_GRID)?;
    let sim = sim_config(cfg, 30.0);
    let init = cfg.init.unwrap_or_default();
    let mut table = Table::new(
        "sweep",
        &[
            "N",
            "gamma",
            "Vx_ss_analytic",
            "Vx_ss_integrated",
            "Vp_ss",
            "purity",
            "bound",
        ],
    );
    let mut notes = Vec::new();
    let mut worst: f64 = 0.0;
    for &n in &ns {
        for &g in &gammas {
            let p = BathParams::new(n, g)?;
            let analytic = steady_state_variance(p)?;
            let sol = integrate_covariance(p, init.moments(n), &sim)?;
            if !sol.converged() {
                notes.push(format!(
                    "N={n} gamma={g}: still drifting at t={} (residual {:e})",
                    sim.t_final, sol.final_residual
                ));
            }
            let last = sol.last().cov;
            worst = worst.max((last.var_x - analytic).abs());
            table.push(vec![
                n.into(),
                g.into(),
                analytic.into(),
                last.var_x.into(),
                last.var_p.into(),
                steady_state_purity(p)?.into(),
                squeezing_bound(n)?.into(),
            ]);
        }
    }
    let passed = worst < SWEEP_TOL;
    if !passed {
        notes.push(format!(
            "integrated and analytic variances differ by up to {worst:e} (> {SWEEP_TOL:e})"
        ));
    }
    Ok(Report {
        table,
        passed,
        notes,
    })
}

pub fn cmd_threshold(cfg: &RunConfig) -> Result<Report> {
    let ns = cfg.n_values(&default_threshold_grid())?;
    let mut table = Table::new("threshold", &["N", "gamma_th"]);
    for n in ns {
        table.push(vec![n.into(), gamma_threshold(n)?.into()]);
    }
    Ok(Report::ok(table))
}

pub fn cmd_vmin(cfg: &RunConfig) -> Result<Report> {
    let gammas = cfg.gamma_values("0:1:0.01")?;
    let mut table = Table::new("vmin", &["gamma", "Vx_min", "N_opt"]);
    for g in gammas {
        let o = min_variance_over_n(g)?;
        table.push(vec![g.into(), o.v_min.into(), o.n_opt.into()]);
    }
    Ok(Report::ok(table))
}

pub const TRAJECTORY_COLUMNS: [&str; 10] = [
    "t",
    "mean_x",
    "mean_p",
    "var_x",
    "var_p",
    "cov_xp",
    "qA_scaled",
    "qB_scaled",
    "dwA_tilde",
    "dwB_tilde",
];

fn trajectory_table(
    times: &[f64],
    moments: &[GaussianMoments],
    qa: &[f64],
    qb: &[f64],
    wa: &[f64],
    wb: &[f64],
) -> Table {
    let mut table = Table::new("trajectory", &TRAJECTORY_COLUMNS);
    for k in 0..times.len() {
        let m = &moments[k];
        table.push(vec![
            times[k].into(),
            m.mean_x.into(),
            m.mean_p.into(),
            m.var_x.into(),
            m.var_p.into(),
            m.cov_xp.into(),
            qa[k].into(),
            qb[k].into(),
            wa[k].into(),
            wb[k].into(),
        ]);
    }
    table
}

fn fock_config(cfg: &RunConfig, p: BathParams) -> FockSimConfig {
    FockSimConfig {
        dim: cfg.dim.unwrap_or_else(|| default_dim(p.n)),
        dt: cfg.dt(),
        t_final: cfg.t_final.unwrap_or(t_default(Representation::Fock)),
        seed: cfg.seed(),
        scheme: cfg.fock_scheme.unwrap_or_default(),
        ..FockSimConfig::default()
    }
}

pub fn cmd_trajectory(cfg: &RunConfig) -> Result<Report> {
    let p = cfg.params()?;
    let coeffs = compute_coefficients(p)?;
    let init = cfg.init.unwrap_or_default();
    let mut noise = NoiseStream::new(cfg.seed(), 0);
    match cfg.representation() {
        Representation::Gaussian => {
            let sim = sim_config(cfg, t_default(Representation::Gaussian));
            let r: TrajectoryRecord =
                simulate_trajectory_with(&coeffs, init.moments(p.n), &sim, &mut noise)?;
            Ok(Report::ok(trajectory_table(
                &r.times,
                &r.moments,
                &r.record_qa,
                &r.record_qb,
                &r.noise_wa,
                &r.noise_wb,
            )))
        }
        Representation::Fock => {
            let fcfg = fock_config(cfg, p);
            let terms = SuperoperatorTerms::new(&coeffs, fcfg.dim);
            let rho0 = init.density_matrix(p.n, fcfg.dim)?;
            let tr = simulate_fock_trajectory_with(&coeffs, &terms, &rho0, &fcfg, &mut noise)?;
            let mut report = Report::ok(trajectory_table(
                &tr.times,
                &tr.moments,
                &tr.record_qa,
                &tr.record_qb,
                &tr.noise_wa,
                &tr.noise_wb,
            ));
            if let Err(e) = tr.health.into_result() {
                report.notes.push(e.to_string());
            }
            if tr.rejections > 0 {
                report
                    .notes
                    .push(format!("{} steps subdivided for positivity", tr.rejections));
            }
            Ok(report)
        }
    }
}

pub const ENSEMBLE_COLUMNS: [&str; 13] = [
    "t",
    "mean_x",
    "mean_x_se",
    "mean_p",
    "mean_p_se",
    "var_of_mean_x",
    "var_of_mean_p",
    "cond_var_x",
    "cond_var_p",
    "cond_cov_xp",
    "total_var_x",
    "total_var_x_se",
    "purity",
];

fn ensemble_config(cfg: &RunConfig, p: BathParams, n_traj: usize, t: f64) -> EnsembleConfig {
    let rep = cfg.representation();
    let sim = sim_config(cfg, t);
    let steps = sim.n_steps();
    EnsembleConfig {
        sim,
        n_traj: cfg.n_traj.unwrap_or(n_traj),
        representation: rep,
        init: cfg.init.unwrap_or_default(),
        dim: cfg.dim.unwrap_or_else(|| default_dim(p.n)),
        fock_scheme: cfg.fock_scheme.unwrap_or_default(),
        // about a thousand rows unless asked otherwise
        record_every: cfg
            .record_every
            .unwrap_or_else(|| steps.div_ceil(1000).max(1)),
        workers: cfg.workers,
    }
}

pub fn cmd_ensemble(cfg: &RunConfig) -> Result<Report> {
    let p = cfg.params()?;
    let ecfg = ensemble_config(cfg, p, 100, t_default(cfg.representation()));
    let stats = run_ensemble(p, &ecfg)?;
    let mut table = Table::new("ensemble", &ENSEMBLE_COLUMNS);
    for r in &stats.rows {
        table.push(
            [
                r.t,
                r.mean_x,
                r.mean_x_se,
                r.mean_p,
                r.mean_p_se,
                r.var_of_mean_x,
                r.var_of_mean_p,
                r.cond_var_x,
                r.cond_var_p,
                r.cond_cov_xp,
                r.total_var_x,
                r.total_var_x_se,
                r.purity,
            ]
            .into_iter()
            .map(Cell::from)
            .collect(),
        );
    }
    let mut notes = Vec::new();
    if let Some(f) = &stats.fock {
        notes.push(format!(
            "averaged state vs Lindblad: trace distance {:e}, Monte Carlo error {:e}",
            f.trace_distance, f.trace_distance_se
        ));
    }
    for f in &stats.failures {
        notes.push(format!("trajectory {} dropped: {}", f.index, f.message));
    }
    if stats.truncation_warnings > 0 {
        notes.push(format!(
            "{} trajectories exceeded the truncation tail tolerance",
            stats.truncation_warnings
        ));
    }
    Ok(Report {
        table,
        passed: true,
        notes,
    })
}

/// Outcome of one oracle cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    fn below(name: &'static str, measured: f64, tolerance: f64) -> Self {
        Self {
            name,
            passed: measured < tolerance,
            measured,
            tolerance,
        }
    }
}

/// Largest deviation of the state from unit trace, hermiticity and
/// positivity.
fn state_defect(rho: &FockDensityMatrix) -> f64 {
    let trace = (rho.trace().re - 1.0).abs() + rho.trace().im.abs();
    trace
        .max(rho.hermiticity_error())
        .max((-rho.min_eigenvalue()).max(0.0))
}

pub fn oracle_checks(cfg: &RunConfig) -> Result<Vec<Check>> {
    let p = cfg.params()?;
    let coeffs = compute_coefficients(p)?;
    let gaussian_coeffs = if cfg.flip_a2_sign.unwrap_or(false) {
        coeffs.with_flipped_noise_sign()
    } else {
        coeffs
    };
    let dim = cfg.dim.unwrap_or(30);
    let t_final = cfg.t_final.unwrap_or(2.0);
    let init = cfg.init.unwrap_or_default();
    let terms = SuperoperatorTerms::new(&coeffs, dim);
    let mut checks = Vec::new();

    // per-trajectory closure against the Gaussian moments on the same noise
    let fcfg = FockSimConfig {
        dim,
        dt: cfg.dt(),
        t_final,
        seed: cfg.seed(),
        scheme: cfg.fock_scheme.unwrap_or_default(),
        ..FockSimConfig::default()
    };
    let rho0 = init.density_matrix(p.n, dim)?;
    let fock = simulate_fock_trajectory_with(
        &coeffs,
        &terms,
        &rho0,
        &fcfg,
        &mut NoiseStream::new(fcfg.seed, 0),
    )?;
    let sim = SimConfig {
        dt: fcfg.dt,
        t_final,
        seed: fcfg.seed,
        scheme: DeterministicScheme::Rk4,
    };
    let gauss = simulate_trajectory_with(
        &gaussian_coeffs,
        init.moments(p.n),
        &sim,
        &mut NoiseStream::new(fcfg.seed, 0),
    )?;
    let closure = fock
        .moments
        .iter()
        .zip(&gauss.moments)
        .map(|(a, b)| {
            (a.var_x - b.var_x)
                .abs()
                .max((a.var_p - b.var_p).abs())
                .max((a.cov_xp - b.cov_xp).abs())
        })
        .fold(0.0, f64::max);
    checks.push(Check::below("gaussian_closure", closure, CLOSURE_TOL));

    // both SME forms on the same states, increments related by M
    let mut noise = NoiseStream::new(cfg.seed() ^ 0x5eed, 0);
    let mut rho = rho0.clone();
    let mut sme_gap: f64 = 0.0;
    for _ in 0..SME_EQUIVALENCE_STEPS {
        let w = noise.next_pair(fcfg.dt);
        let dw = coeffs.correlate(w);
        let a = sme_step_uncorrelated(&rho, &terms, w[0], w[1], fcfg.dt);
        let b = sme_step_correlated(&rho, &terms, dw[0], dw[1], fcfg.dt);
        sme_gap = sme_gap.max(a.max_abs_diff(&b));
        rho = a;
    }
    checks.push(Check::below(
        "sme_equivalence",
        sme_gap,
        SME_EQUIVALENCE_TOL,
    ));

    // unravelling average
    let ecfg = EnsembleConfig {
        representation: Representation::Fock,
        dim,
        ..ensemble_config(cfg, p, 100, t_final)
    };
    let ecfg = EnsembleConfig {
        sim: SimConfig {
            t_final,
            ..ecfg.sim
        },
        record_every: ecfg.sim.n_steps().max(1),
        ..ecfg
    };
    let stats = run_ensemble(p, &ecfg)?;
    let avg = stats
        .fock
        .as_ref()
        .expect("Fock ensemble carries its average");
    checks.push(Check::below(
        "unravelling_average",
        avg.trace_distance,
        3.0 * avg.trace_distance_se,
    ));

    let defect = state_defect(&fock.final_state).max(state_defect(&avg.mean_state));
    checks.push(Check::below("state_invariants", defect, 1e-8));

    let tail = [
        rho0.truncation_health(DEFAULT_TAIL_TOL).tail_population,
        fock.health.tail_population,
        avg.lindblad
            .truncation_health(DEFAULT_TAIL_TOL)
            .tail_population,
    ]
    .into_iter()
    .fold(0.0, f64::max);
    checks.push(Check {
        name: "truncation_gauge",
        passed: tail <= DEFAULT_TAIL_TOL && stats.truncation_warnings == 0,
        measured: tail,
        tolerance: DEFAULT_TAIL_TOL,
    });
    Ok(checks)
}

pub fn cmd_oracle_check(cfg: &RunConfig) -> Result<Report> {
    let checks = oracle_checks(cfg)?;
    let mut table = Table::new(
        "oracle_check",
        &["check", "passed", "measured", "tolerance"],
    );
    let mut notes = Vec::new();
    for c in &checks {
        table.push(vec![
            c.name.into(),
            c.passed.into(),
            c.measured.into(),
            c.tolerance.into(),
        ]);
        notes.push(format!(
            "{} {}: {:e} (tolerance {:e})",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.measured,
            c.tolerance
        ));
    }
    Ok(Report {
        table,
        passed: checks.iter().all(|c| c.passed),
        notes,
    })
}
