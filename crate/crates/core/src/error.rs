use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter `{name}` = {value} outside its domain ({domain})")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("covariance step produced var_x = {var_x} at t = {time}; decrease dt")]
    StepRejected { time: f64, var_x: f64 },

    #[error("no steady state at t = {t_final}: residual drift {residual:e} exceeds {tolerance:e}")]
    NonConvergence {
        t_final: f64,
        residual: f64,
        tolerance: f64,
    },

    #[error("density matrix lost positivity at t = {time} (min eigenvalue below -{tolerance:e}) even at dt = {dt:e}")]
    PositivityViolation { time: f64, dt: f64, tolerance: f64 },

    #[error("truncation gauge: tail population {tail:e} in top levels of dim {dim} exceeds {tolerance:e}")]
    Truncation {
        dim: usize,
        tail: f64,
        tolerance: f64,
    },

    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("ensemble aborted: {failed} of {total} trajectories failed (first: {first})")]
    EnsembleAborted {
        failed: usize,
        total: usize,
        first: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub(crate) fn check_domain(
    name: &'static str,
    value: f64,
    ok: bool,
    domain: &'static str,
) -> Result<()> {
    if ok && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain,
        })
    }
}
