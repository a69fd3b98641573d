//! Brute-force density-operator oracle on a truncated Fock space.
//!
//! The Gaussian picture is exact only for Gaussian states and relies on the
//! moment equations being right; this module steps the full operator-valued
//! master equations instead, so the two can be compared trajectory by
//! trajectory.

mod banded;
mod step;
mod trajectory;

use nalgebra::DMatrix;
use num_complex::Complex64;

pub use banded::Banded;
pub use step::{
    gaussian_kraus_step, lindblad_step, sme_step_correlated, sme_step_uncorrelated, KrausWorkspace,
    SuperoperatorTerms,
};
pub use trajectory::{
    simulate_fock_trajectory, simulate_fock_trajectory_with, FockScheme, FockSimConfig,
    FockTrajectory, MAX_HALVINGS,
};

use crate::error::{Error, Result};
use crate::gaussian::GaussianMoments;

/// Default fraction of levels that form the truncation tail.
pub const TAIL_FRACTION: f64 = 0.1;
pub const DEFAULT_TAIL_TOL: f64 = 1e-6;

/// `ceil(10 + 20N + 10√N)`.
pub fn default_dim(n: f64) -> usize {
    (10.0 + 20.0 * n + 10.0 * n.sqrt()).ceil() as usize
}

/// Row-major `dim × dim` density operator.
#[derive(Debug, Clone, PartialEq)]
pub struct FockDensityMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationHealth {
    pub dim: usize,
    pub tail_levels: usize,
    pub tail_population: f64,
    pub tolerance: f64,
}

impl TruncationHealth {
    pub fn healthy(&self) -> bool {
        self.tail_population <= self.tolerance
    }

    pub fn into_result(self) -> Result<()> {
        if self.healthy() {
            Ok(())
        } else {
            Err(Error::Truncation {
                dim: self.dim,
                tail: self.tail_population,
                tolerance: self.tolerance,
            })
        }
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim < 2 {
        return Err(Error::Config(format!(
            "Fock dimension must be >= 2, got {dim}"
        )));
    }
    Ok(())
}

impl FockDensityMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![Complex64::new(0.0, 0.0); dim * dim],
        }
    }

    pub fn from_raw(dim: usize, data: Vec<Complex64>) -> Result<Self> {
        check_dim(dim)?;
        if data.len() != dim * dim {
            return Err(Error::Config(format!(
                "density matrix data has {} entries, expected {}",
                data.len(),
                dim * dim
            )));
        }
        Ok(Self { dim, data })
    }

    /// Fock state `|k⟩⟨k|`.
    pub fn number_state(dim: usize, k: usize) -> Result<Self> {
        check_dim(dim)?;
        if k >= dim {
            return Err(Error::Config(format!("level {k} outside dimension {dim}")));
        }
        let mut rho = Self::zeros(dim);
        rho.data[k * dim + k] = Complex64::new(1.0, 0.0);
        Ok(rho)
    }

    pub fn vacuum(dim: usize) -> Result<Self> {
        Self::number_state(dim, 0)
    }

    /// `|ψ⟩⟨ψ|` for a normalised copy of `psi`.
    pub fn from_pure(psi: &[Complex64]) -> Result<Self> {
        let dim = psi.len();
        check_dim(dim)?;
        let norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Config("zero state vector".into()));
        }
        let mut rho = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                rho.data[i * dim + j] = psi[i] * psi[j].conj() / (norm * norm);
            }
        }
        Ok(rho)
    }

    /// Coherent state `|a⟩`, renormalised on the truncated space.
    pub fn coherent(dim: usize, amplitude: Complex64) -> Result<Self> {
        check_dim(dim)?;
        let mut psi = Vec::with_capacity(dim);
        let mut term = Complex64::new(1.0, 0.0);
        for n in 0..dim {
            if n > 0 {
                term *= amplitude / (n as f64).sqrt();
            }
            psi.push(term);
        }
        Self::from_pure(&psi)
    }

    /// Squeezed vacuum with `Var(X) = var_x` and `Var(P) = 1/var_x`.
    pub fn squeezed_vacuum(dim: usize, var_x: f64) -> Result<Self> {
        check_dim(dim)?;
        if !(var_x > 0.0) {
            return Err(Error::Config(format!(
                "squeezed variance must be positive, got {var_x}"
            )));
        }
        // S(r)|0⟩ with V_x = e^{−2r}: amplitudes on even levels
        // ψ_{2m} ∝ (−tanh r)^m √((2m)!)/(2^m m!).
        let r = -0.5 * var_x.ln();
        let t = -r.tanh();
        let mut psi = vec![Complex64::new(0.0, 0.0); dim];
        let mut amp = 1.0;
        let mut m = 0usize;
        while 2 * m < dim {
            psi[2 * m] = Complex64::new(amp, 0.0);
            amp *= t * (((2 * m + 1) * (2 * m + 2)) as f64).sqrt() / (2.0 * (m + 1) as f64);
            m += 1;
        }
        Self::from_pure(&psi)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.dim + j]
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    pub fn purity(&self) -> f64 {
        // Tr ρ² = Σ_ij ρ_ij ρ_ji = Σ_ij |ρ_ij|² for Hermitian ρ
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.data[i * self.dim + i].re)
            .collect()
    }

    pub fn mean_photon_number(&self) -> f64 {
        self.populations()
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .sum()
    }

    /// `max |ρ − ρ†|`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        worst
    }

    /// `ρ ← (ρ + ρ†)/2`.
    pub fn symmetrize(&mut self) {
        let n = self.dim;
        for i in 0..n {
            self.data[i * n + i].im = 0.0;
            for j in i + 1..n {
                let avg = 0.5 * (self.data[i * n + j] + self.data[j * n + i].conj());
                self.data[i * n + j] = avg;
                self.data[j * n + i] = avg.conj();
            }
        }
    }

    /// Rescales to unit trace; returns the trace found.
    pub fn normalize(&mut self) -> f64 {
        let tr = self.trace().re;
        let inv = 1.0 / tr;
        self.data.iter_mut().for_each(|z| *z *= inv);
        tr
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut m = self.to_matrix();
        // enforce exact Hermiticity for the symmetric solver
        m = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Cholesky test of `ρ + tol·1 ⪰ 0`; cheaper than a full eigensolve.
    pub fn is_positive_within(&self, tol: f64, scratch: &mut Vec<Complex64>) -> bool {
        let n = self.dim;
        scratch.clear();
        scratch.extend_from_slice(&self.data);
        for i in 0..n {
            scratch[i * n + i] += tol;
        }
        // lower-triangular L with ρ = L L†, stored in place row by row
        for j in 0..n {
            let row_j = &mut scratch[j * n..(j + 1) * n];
            let d = row_j[j].re - dot_conj(&row_j[..j], &row_j[..j]).re;
            if !(d > 0.0) {
                return false;
            }
            let ljj = d.sqrt();
            row_j[j] = Complex64::new(ljj, 0.0);
            let inv = 1.0 / ljj;
            let (upper, lower) = scratch.split_at_mut((j + 1) * n);
            let row_j = &upper[j * n..j * n + j];
            for row_i in lower.chunks_exact_mut(n) {
                let s = row_i[j] - dot_conj(&row_i[..j], row_j);
                row_i[j] = s * inv;
            }
        }
        true
    }

    /// Population of the top `ceil(dim · fraction)` levels.
    pub fn truncation_health(&self, tolerance: f64) -> TruncationHealth {
        let tail_levels = ((self.dim as f64 * TAIL_FRACTION).ceil() as usize).max(1);
        let pops = self.populations();
        let tail_population = pops[self.dim - tail_levels..].iter().sum();
        TruncationHealth {
            dim: self.dim,
            tail_levels,
            tail_population,
            tolerance,
        }
    }

    pub fn trace_distance(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim);
        let diff = Self {
            dim: self.dim,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| a - b)
                .collect(),
        };
        0.5 * diff.eigenvalues().iter().map(|v| v.abs()).sum::<f64>()
    }

    /// `self += s · other`.
    pub fn add_scaled(&mut self, s: f64, other: &Self) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }
}

/// `Σ_k x_k conj(y_k)` with four independent partial sums.
fn dot_conj(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    let mut re = [0.0; 4];
    let mut im = [0.0; 4];
    let mut xs = x.chunks_exact(4);
    let mut ys = y.chunks_exact(4);
    for (a, b) in (&mut xs).zip(&mut ys) {
        for l in 0..4 {
            re[l] += a[l].re * b[l].re + a[l].im * b[l].im;
            im[l] += a[l].im * b[l].re - a[l].re * b[l].im;
        }
    }
    for (a, b) in xs.remainder().iter().zip(ys.remainder()) {
        re[0] += a.re * b.re + a.im * b.im;
        im[0] += a.im * b.re - a.re * b.im;
    }
    Complex64::new(re[0] + re[1] + re[2] + re[3], im[0] + im[1] + im[2] + im[3])
}

/// Thermal state with Boltzmann weights `Nⁿ/(N+1)ⁿ⁺¹`, renormalised on the
/// truncated space. Check [`FockDensityMatrix::truncation_health`] before
/// trusting it when `dim` is small compared to `N`.
pub fn thermal_state(n: f64, dim: usize) -> Result<FockDensityMatrix> {
    crate::error::check_domain("N", n, n >= 0.0, "N >= 0")?;
    check_dim(dim)?;
    let mut rho = FockDensityMatrix::zeros(dim);
    let ratio = n / (n + 1.0);
    let mut w = 1.0 / (n + 1.0);
    for k in 0..dim {
        rho.data[k * dim + k] = Complex64::new(w, 0.0);
        w *= ratio;
    }
    rho.normalize();
    Ok(rho)
}

/// Quadrature moments of `X = c + c†`, `P = −i(c − c†)`.
pub fn moments_from_rho(rho: &FockDensityMatrix) -> GaussianMoments {
    let n = rho.dim;
    let d = &rho.data;
    // ⟨c⟩, ⟨c²⟩, ⟨c†c⟩ and the truncated ⟨cc†⟩
    let mut a = Complex64::new(0.0, 0.0);
    let mut a2 = Complex64::new(0.0, 0.0);
    let mut num = 0.0;
    let mut anti = 0.0;
    for i in 0..n {
        let p = d[i * n + i].re;
        num += i as f64 * p;
        if i + 1 < n {
            anti += (i + 1) as f64 * p;
            a += d[(i + 1) * n + i] * ((i + 1) as f64).sqrt();
        }
        if i + 2 < n {
            a2 += d[(i + 2) * n + i] * (((i + 1) * (i + 2)) as f64).sqrt();
        }
    }
    let mean_x = 2.0 * a.re;
    let mean_p = 2.0 * a.im;
    GaussianMoments {
        mean_x,
        mean_p,
        var_x: 2.0 * a2.re + num + anti - mean_x * mean_x,
        var_p: -2.0 * a2.re + num + anti - mean_p * mean_p,
        cov_xp: 2.0 * a2.im - mean_x * mean_p,
    }
}

/// `(Tr[H[c]ϱX], Tr[H[c†]ϱX])`, evaluated by explicit operator products.
pub fn trace_formula_check(rho: &FockDensityMatrix) -> (f64, f64) {
    let n = rho.dim;
    let c = Banded::annihilation(n);
    let cd = Banded::creation(n);
    let x = c.add_scaled(1.0, &cd);
    let h_trace = |op: &Banded| {
        // H[A]ϱ = Aϱ + ϱA† − Tr[(A+A†)ϱ]ϱ, then Tr[·X]
        let mut h = vec![Complex64::new(0.0, 0.0); n * n];
        op.left_mul_acc(1.0, &rho.data, &mut h);
        op.right_mul_adj_acc(1.0, &rho.data, &mut h);
        let shift = op
            .add_scaled(1.0, &op.transpose())
            .expectation(&rho.data)
            .re;
        for (v, r) in h.iter_mut().zip(&rho.data) {
            *v -= r * shift;
        }
        x.expectation(&h).re
    };
    (h_trace(&c), h_trace(&cd))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_thermal_and_coherent_moments() {
        let m = moments_from_rho(&FockDensityMatrix::vacuum(8).unwrap());
        assert_eq!(
            (m.mean_x, m.mean_p, m.var_x, m.var_p, m.cov_xp),
            (0.0, 0.0, 1.0, 1.0, 0.0)
        );

        let th = thermal_state(1.0, 60).unwrap();
        let m = moments_from_rho(&th);
        assert!((m.var_x - 3.0).abs() < 1e-12 && (m.var_p - 3.0).abs() < 1e-12);
        assert!(m.mean_x.abs() < 1e-15 && m.cov_xp.abs() < 1e-15);

        let coh = FockDensityMatrix::coherent(40, Complex64::new(0.8, 0.0)).unwrap();
        let m = moments_from_rho(&coh);
        assert!((m.mean_x - 1.6).abs() < 1e-12);
        assert!(m.mean_p.abs() < 1e-12);
        assert!((m.var_x - 1.0).abs() < 1e-10 && (m.var_p - 1.0).abs() < 1e-10);
    }

    #[test]
    fn thermal_state_examples() {
        let vac = thermal_state(0.0, 8).unwrap();
        assert_eq!(vac, FockDensityMatrix::vacuum(8).unwrap());

        // geometric series: ⟨n⟩ on dim levels is exact up to the tail
        let th = thermal_state(1.0, 40).unwrap();
        let q: f64 = 0.5;
        let p: Vec<f64> = (0..40).map(|k| q.powi(k)).collect();
        let z: f64 = p.iter().sum();
        let oracle: f64 = p.iter().enumerate().map(|(k, w)| k as f64 * w).sum::<f64>() / z;
        assert!((th.mean_photon_number() - oracle).abs() < 1e-12);
        assert!((th.mean_photon_number() - 1.0).abs() < 1e-6);
        assert!(th.truncation_health(DEFAULT_TAIL_TOL).healthy());

        let small = thermal_state(1.0, 4).unwrap();
        let health = small.truncation_health(DEFAULT_TAIL_TOL);
        assert!(!health.healthy());
        assert!(health.tail_population > 0.0625);
        assert!(matches!(
            health.into_result(),
            Err(Error::Truncation { .. })
        ));
        assert!(thermal_state(1.0, 1).is_err());
    }

    #[test]
    fn trace_formula_examples() {
        let (a, b) = trace_formula_check(&FockDensityMatrix::vacuum(10).unwrap());
        assert!(a.abs() < 1e-14 && (b - 2.0).abs() < 1e-14);

        let (a, b) = trace_formula_check(&thermal_state(1.0, 60).unwrap());
        assert!((a - 2.0).abs() < 1e-10 && (b - 4.0).abs() < 1e-10);

        let sq = FockDensityMatrix::squeezed_vacuum(60, 0.5).unwrap();
        let m = moments_from_rho(&sq);
        assert!((m.var_x - 0.5).abs() < 1e-10, "var_x {}", m.var_x);
        assert!((m.var_p - 2.0).abs() < 1e-10);
        let (a, b) = trace_formula_check(&sq);
        assert!((a + 0.5).abs() < 1e-10 && (b - 1.5).abs() < 1e-10);
    }

    #[test]
    fn positivity_and_trace_distance() {
        let mut scratch = Vec::new();
        let th = thermal_state(0.5, 12).unwrap();
        assert!(th.is_positive_within(1e-12, &mut scratch));
        let mut bad = th.clone();
        bad.as_mut_slice()[0] -= Complex64::new(0.8, 0.0);
        assert!(!bad.is_positive_within(1e-8, &mut scratch));
        assert!(bad.min_eigenvalue() < 0.0);

        let vac = FockDensityMatrix::vacuum(6).unwrap();
        let one = FockDensityMatrix::number_state(6, 1).unwrap();
        assert!((vac.trace_distance(&one) - 1.0).abs() < 1e-12);
        assert!(vac.trace_distance(&vac) < 1e-15);
    }

    #[test]
    fn default_dimension_rule() {
        assert_eq!(default_dim(0.0), 10);
        assert_eq!(default_dim(1.0), 40);
        assert_eq!(default_dim(0.25), 20);
    }
}
