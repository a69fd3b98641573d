use num_complex::Complex64;

use super::banded::Banded;
use super::FockDensityMatrix;
use crate::analytics::{ChannelWeights, UnravellingCoefficients};

/// Operators of the thermal Lindbladian and of the monitored channels on a
/// fixed truncation.
#[derive(Debug, Clone)]
pub struct SuperoperatorTerms {
    pub dim: usize,
    pub n: f64,
    pub c: Banded,
    pub c_dag: Banded,
    /// `c†c`
    pub number: Banded,
    /// `cc†` with the truncated top level
    pub anti_number: Banded,
    /// `O_A = α_A c + β_A c†`, driven by `dw̃_A`.
    pub channel_a: Banded,
    /// `O_B = α_B c + β_B c†`, driven by `dw̃_B`.
    pub channel_b: Banded,
    /// `[h₁(N+1)c + h₂N c†]/f`, driven by `dw_A`.
    pub correlated_a: Banded,
    /// `−γ√(N(N+1))(c + c†)/f`, driven by `dw_B`.
    pub correlated_b: Banded,
    /// Unmonitored remainder `L_th − Σ_j D[O_j] = Σ_k D[R_k]`.
    pub residual: Vec<Banded>,
    /// Eigenvalues of the 2×2 Kossakowski matrix of the remainder in the
    /// `(c, c†)` basis. Both are non-negative for a valid unravelling.
    pub residual_rates: [f64; 2],
    /// `Σ_k R_k†R_k`
    residual_gram: Banded,
    /// `(N+1)c†c + N cc†`
    lindblad_gram: Banded,
    /// `−½ Σ_j (O_j² + O_j†O_j)`
    kraus_quadratic: Banded,
}

impl SuperoperatorTerms {
    pub fn new(coeffs: &UnravellingCoefficients, dim: usize) -> Self {
        let p = coeffs.params;
        let c = Banded::annihilation(dim);
        let c_dag = Banded::creation(dim);
        let number = c_dag.matmul(&c);
        let anti_number = c.matmul(&c_dag);
        let channel = |w: ChannelWeights| c.scale(w.alpha).add_scaled(w.beta, &c_dag);
        let channel_a = channel(coeffs.channel_a);
        let channel_b = channel(coeffs.channel_b);

        let s = (p.n * (p.n + 1.0)).sqrt();
        let correlated_a = c
            .scale(coeffs.h1 * (p.n + 1.0) / coeffs.f)
            .add_scaled(coeffs.h2 * p.n / coeffs.f, &c_dag);
        let correlated_b = c.add_scaled(1.0, &c_dag).scale(-p.gamma * s / coeffs.f);

        // D[αc + βc†] = α²D[c] + β²D[c†] + αβ·(cross term); subtract the
        // monitored channels from (N+1)D[c] + N D[c†].
        let (wa, wb) = (coeffs.channel_a, coeffs.channel_b);
        let k_cc = p.n + 1.0 - wa.alpha * wa.alpha - wb.alpha * wb.alpha;
        let k_dd = p.n - wa.beta * wa.beta - wb.beta * wb.beta;
        let k_cd = -(wa.alpha * wa.beta + wb.alpha * wb.beta);
        let mean = 0.5 * (k_cc + k_dd);
        let radius = (0.25 * (k_cc - k_dd).powi(2) + k_cd * k_cd).sqrt();
        let rates = [mean - radius, mean + radius];
        let scale = (p.n + 1.0).max(1.0);
        let mut residual = Vec::new();
        for &lambda in &rates {
            if lambda <= 1e-13 * scale {
                continue;
            }
            // eigenvector of [[k_cc, k_cd], [k_cd, k_dd]]
            let (u0, u1) = if k_cd.abs() > 1e-300 {
                (k_cd, lambda - k_cc)
            } else if (lambda - k_cc).abs() <= (lambda - k_dd).abs() {
                (1.0, 0.0)
            } else {
                (0.0, 1.0)
            };
            let norm = (u0 * u0 + u1 * u1).sqrt();
            let r = c
                .scale(u0 / norm)
                .add_scaled(u1 / norm, &c_dag)
                .scale(lambda.sqrt());
            residual.push(r);
        }
        let residual_gram = residual.iter().fold(Banded::zero(dim), |acc, r| {
            acc.add_scaled(1.0, &r.transpose().matmul(r))
        });

        let mut kraus_quadratic = Banded::zero(dim);
        for o in [&channel_a, &channel_b] {
            kraus_quadratic = kraus_quadratic
                .add_scaled(-0.5, &o.matmul(o))
                .add_scaled(-0.5, &o.transpose().matmul(o));
        }

        let lindblad_gram = number.scale(p.n + 1.0).add_scaled(p.n, &anti_number);

        Self {
            dim,
            n: p.n,
            c,
            c_dag,
            number,
            anti_number,
            channel_a,
            channel_b,
            correlated_a,
            correlated_b,
            residual,
            residual_rates: rates,
            residual_gram,
            lindblad_gram,
            kraus_quadratic,
        }
    }

    /// Lindbladian only; the channel operators are those of `γ = 0`.
    pub fn thermal(n: f64, dim: usize) -> crate::Result<Self> {
        let p = crate::analytics::BathParams::new(n, 0.0)?;
        Ok(Self::new(&crate::analytics::compute_coefficients(p)?, dim))
    }

    /// `out += dt · L_th ρ`.
    pub(crate) fn add_lindblad(
        &self,
        rho: &[Complex64],
        dt: f64,
        out: &mut [Complex64],
        scratch: &mut Scratch,
    ) {
        scratch.resize(rho.len());
        add_sandwich(&self.c, (self.n + 1.0) * dt, rho, out, scratch);
        if self.n != 0.0 {
            add_sandwich(&self.c_dag, self.n * dt, rho, out, scratch);
        }
        self.lindblad_gram.left_mul(rho, &mut scratch.a);
        add_hermitian(-0.5 * dt, &scratch.a, out);
    }

    fn add_residual(
        &self,
        rho: &[Complex64],
        dt: f64,
        out: &mut [Complex64],
        scratch: &mut Scratch,
    ) {
        if self.residual.is_empty() {
            return;
        }
        scratch.resize(rho.len());
        for r in &self.residual {
            add_sandwich(r, dt, rho, out, scratch);
        }
        self.residual_gram.left_mul(rho, &mut scratch.a);
        add_hermitian(-0.5 * dt, &scratch.a, out);
    }

    /// One explicit Euler step of the unconditional master equation.
    pub fn lindblad_step(&self, rho: &FockDensityMatrix, dt: f64) -> FockDensityMatrix {
        let mut out = rho.clone();
        self.add_lindblad(
            rho.as_slice(),
            dt,
            out.as_mut_slice(),
            &mut Scratch::default(),
        );
        out.symmetrize();
        out
    }

    /// Euler step of `dϱ = L_th ϱ dt + H[op_a]ϱ dw_a + H[op_b]ϱ dw_b`.
    fn euler_sme(
        &self,
        rho: &FockDensityMatrix,
        ops: [&Banded; 2],
        dw: [f64; 2],
        dt: f64,
    ) -> FockDensityMatrix {
        let r = rho.as_slice();
        let mut out = rho.clone();
        let mut scratch = Scratch::default();
        self.add_lindblad(r, dt, out.as_mut_slice(), &mut scratch);
        for (op, w) in ops.into_iter().zip(dw) {
            add_conditioning(op, w, r, out.as_mut_slice(), &mut scratch);
        }
        out.symmetrize();
        out.normalize();
        out
    }

    /// Measured outputs `dy_j = Tr[(O_j + O_j†)ϱ]dt + dw̃_j` of the
    /// decorrelated channels.
    pub fn channel_outputs(
        &self,
        rho: &FockDensityMatrix,
        dw_tilde: [f64; 2],
        dt: f64,
    ) -> [f64; 2] {
        let r = rho.as_slice();
        [
            2.0 * self.channel_a.expectation(r).re * dt + dw_tilde[0],
            2.0 * self.channel_b.expectation(r).re * dt + dw_tilde[1],
        ]
    }
}

/// Buffers for the kernels below. Products from the right are formed as
/// adjoints of products from the left, which is valid because every state
/// they act on is Hermitian.
#[derive(Debug, Default, Clone)]
pub(crate) struct Scratch {
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

impl Scratch {
    fn resize(&mut self, len: usize) {
        self.a.resize(len, Complex64::new(0.0, 0.0));
        self.b.resize(len, Complex64::new(0.0, 0.0));
    }
}

fn dim_of(x: &[Complex64]) -> usize {
    (x.len() as f64).sqrt().round() as usize
}

/// `out = x†`.
fn adjoint_into(x: &[Complex64], out: &mut [Complex64]) {
    let n = dim_of(x);
    for i in 0..n {
        for j in 0..n {
            out[j * n + i] = x[i * n + j].conj();
        }
    }
}

/// `out += s · (y + y†)`.
fn add_hermitian(s: f64, y: &[Complex64], out: &mut [Complex64]) {
    let n = dim_of(y);
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] += (y[i * n + j] + y[j * n + i].conj()) * s;
        }
    }
}

/// `out += w · AρA†` as `A (Aρ)†`.
fn add_sandwich(
    a: &Banded,
    w: f64,
    rho: &[Complex64],
    out: &mut [Complex64],
    scratch: &mut Scratch,
) {
    a.left_mul(rho, &mut scratch.a);
    adjoint_into(&scratch.a, &mut scratch.b);
    a.left_mul_acc(w, &scratch.b, out);
}

/// `out += w · D[A]ρ`.
#[cfg(test)]
fn add_dissipator(
    a: &Banded,
    w: f64,
    rho: &[Complex64],
    out: &mut [Complex64],
    scratch: &mut Scratch,
) {
    scratch.resize(rho.len());
    add_sandwich(a, w, rho, out, scratch);
    a.transpose().matmul(a).left_mul(rho, &mut scratch.a);
    add_hermitian(-0.5 * w, &scratch.a, out);
}

/// `out += dw · H[A]ρ`.
fn add_conditioning(
    a: &Banded,
    dw: f64,
    rho: &[Complex64],
    out: &mut [Complex64],
    scratch: &mut Scratch,
) {
    if dw == 0.0 {
        return;
    }
    scratch.resize(rho.len());
    let shift = 2.0 * a.expectation(rho).re;
    a.left_mul(rho, &mut scratch.a);
    add_hermitian(dw, &scratch.a, out);
    for (o, r) in out.iter_mut().zip(rho) {
        *o -= r * (shift * dw);
    }
}

/// Explicit Euler step of the thermal master equation at occupation `n`.
pub fn lindblad_step(rho: &FockDensityMatrix, n: f64, dt: f64) -> crate::Result<FockDensityMatrix> {
    Ok(SuperoperatorTerms::thermal(n, rho.dim())?.lindblad_step(rho, dt))
}

/// Normalised Euler step of the SME in decorrelated form,
/// `dϱ = L_th ϱ dt + H[O_A]ϱ dw̃_A + H[O_B]ϱ dw̃_B`.
pub fn sme_step_uncorrelated(
    rho: &FockDensityMatrix,
    terms: &SuperoperatorTerms,
    dw_a_tilde: f64,
    dw_b_tilde: f64,
    dt: f64,
) -> FockDensityMatrix {
    terms.euler_sme(
        rho,
        [&terms.channel_a, &terms.channel_b],
        [dw_a_tilde, dw_b_tilde],
        dt,
    )
}

/// Normalised Euler step of the SME driven by the correlated outcome noise
/// `(dw_A, dw_B)` with covariance `C dt`.
pub fn sme_step_correlated(
    rho: &FockDensityMatrix,
    terms: &SuperoperatorTerms,
    dw_a: f64,
    dw_b: f64,
    dt: f64,
) -> FockDensityMatrix {
    terms.euler_sme(
        rho,
        [&terms.correlated_a, &terms.correlated_b],
        [dw_a, dw_b],
        dt,
    )
}

/// Completely positive step of the SME.
///
/// The monitored channels act through
/// `M = exp(Σ_j O_j dy_j − ½Σ_j (O_j² + O_j†O_j) dt)`, which reproduces the
/// linear filter `dψ = Σ_j O_j ψ dy_j` to the order of the step. `MρMᵀ` is
/// formed as `M (Mρ)†` with each factor summed as a Taylor series of the
/// banded generator, and is positive whatever the truncation order. The
/// unmonitored remainder `Σ_k D[R_k]` follows as an Euler step, and the
/// state is renormalised at the end.
/// Returns the new state and the channel outputs `dy`.
pub fn gaussian_kraus_step(
    rho: &FockDensityMatrix,
    terms: &SuperoperatorTerms,
    dw_tilde: [f64; 2],
    dt: f64,
    work: &mut KrausWorkspace,
) -> (FockDensityMatrix, [f64; 2]) {
    let dy = terms.channel_outputs(rho, dw_tilde, dt);
    let generator = terms
        .kraus_quadratic
        .scale(dt)
        .add_scaled(dy[0], &terms.channel_a)
        .add_scaled(dy[1], &terms.channel_b);

    let n = rho.dim();
    work.resize(n);
    taylor_exp(
        &generator,
        rho.as_slice(),
        &mut work.half,
        &mut work.term,
        &mut work.next,
    );
    adjoint_into(&work.half, &mut work.adj);
    let mut out = FockDensityMatrix::zeros(n);
    taylor_exp(
        &generator,
        &work.adj,
        out.as_mut_slice(),
        &mut work.term,
        &mut work.next,
    );
    out.symmetrize();

    if !terms.residual.is_empty() {
        work.adj.copy_from_slice(out.as_slice());
        terms.add_residual(&work.adj, dt, out.as_mut_slice(), &mut work.scratch);
        out.symmetrize();
    }
    out.normalize();
    (out, dy)
}

#[derive(Debug, Default, Clone)]
pub struct KrausWorkspace {
    half: Vec<Complex64>,
    adj: Vec<Complex64>,
    term: Vec<Complex64>,
    next: Vec<Complex64>,
    scratch: Scratch,
}

impl KrausWorkspace {
    fn resize(&mut self, n: usize) {
        for v in [
            &mut self.half,
            &mut self.adj,
            &mut self.term,
            &mut self.next,
        ] {
            v.resize(n * n, Complex64::new(0.0, 0.0));
        }
    }
}

const MAX_TAYLOR_TERMS: usize = 40;
/// Relative size of the last Taylor term kept.
const TAYLOR_TOL: f64 = 1e-7;

/// `out = exp(G)·x`.
fn taylor_exp(
    g: &Banded,
    x: &[Complex64],
    out: &mut [Complex64],
    term: &mut Vec<Complex64>,
    next: &mut Vec<Complex64>,
) {
    out.copy_from_slice(x);
    term.copy_from_slice(x);
    let stop = TAYLOR_TOL * TAYLOR_TOL * frobenius_sq(x);
    for k in 1..=MAX_TAYLOR_TERMS {
        g.left_mul_scaled(1.0 / k as f64, term, next);
        for (o, t) in out.iter_mut().zip(next.iter()) {
            *o += *t;
        }
        std::mem::swap(term, next);
        if frobenius_sq(term) <= stop {
            break;
        }
    }
}

/// `Σ |x_i|²`, split over independent lanes so it vectorises.
fn frobenius_sq(x: &[Complex64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    let chunks = x.chunks_exact(4);
    let rest: f64 = chunks.remainder().iter().map(|z| z.norm_sqr()).sum();
    for c in chunks {
        for (l, z) in lanes.iter_mut().zip(c) {
            *l += z.re * z.re + z.im * z.im;
        }
    }
    lanes.iter().sum::<f64>() + rest
}
