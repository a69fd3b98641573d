//! Real banded operators on the truncated Fock space.
//!
//! Every operator the oracle needs is a real polynomial of low degree in
//! `c` and `c†`, hence banded with a handful of diagonals. Products with a
//! dense density matrix then cost `O(bandwidth · dim²)`.

use num_complex::Complex64;

/// `A[i][i + offset] = diags[k][i]` for each `(offset, diag)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Banded {
    dim: usize,
    diags: Vec<(isize, Vec<f64>)>,
}

impl Banded {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            diags: Vec::new(),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(vec![1.0; dim])
    }

    pub fn diagonal(values: Vec<f64>) -> Self {
        let dim = values.len();
        Self {
            dim,
            diags: vec![(0, values)],
        }
    }

    /// Annihilation operator, `c[n−1][n] = √n`.
    pub fn annihilation(dim: usize) -> Self {
        let mut d = vec![0.0; dim];
        for (i, v) in d.iter_mut().enumerate().take(dim.saturating_sub(1)) {
            *v = ((i + 1) as f64).sqrt();
        }
        Self {
            dim,
            diags: vec![(1, d)],
        }
    }

    pub fn creation(dim: usize) -> Self {
        Self::annihilation(dim).transpose()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let off = j as isize - i as isize;
        self.diags
            .iter()
            .find(|(o, _)| *o == off)
            .map_or(0.0, |(_, d)| d[i])
    }

    fn diag_mut(&mut self, offset: isize) -> &mut Vec<f64> {
        let pos = match self.diags.iter().position(|(o, _)| *o == offset) {
            Some(p) => p,
            None => {
                self.diags.push((offset, vec![0.0; self.dim]));
                self.diags.sort_by_key(|(o, _)| *o);
                self.diags.iter().position(|(o, _)| *o == offset).unwrap()
            }
        };
        &mut self.diags[pos].1
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zero(self.dim);
        for (off, d) in &self.diags {
            let t = out.diag_mut(-off);
            for i in 0..self.dim {
                let j = i as isize + off;
                if (0..self.dim as isize).contains(&j) {
                    t[j as usize] = d[i];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            diags: self
                .diags
                .iter()
                .map(|(o, d)| (*o, d.iter().map(|v| v * s).collect()))
                .collect(),
        }
    }

    /// `self + s·other`.
    pub fn add_scaled(&self, s: f64, other: &Banded) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut out = self.clone();
        for (off, d) in &other.diags {
            let t = out.diag_mut(*off);
            for (a, b) in t.iter_mut().zip(d) {
                *a += s * b;
            }
        }
        out
    }

    pub fn matmul(&self, other: &Banded) -> Self {
        assert_eq!(self.dim, other.dim);
        let n = self.dim as isize;
        let mut out = Self::zero(self.dim);
        for (oa, da) in &self.diags {
            for (ob, db) in &other.diags {
                let t = out.diag_mut(oa + ob);
                for i in 0..n {
                    let k = i + oa;
                    let j = k + ob;
                    if (0..n).contains(&k) && (0..n).contains(&j) {
                        t[i as usize] += da[i as usize] * db[k as usize];
                    }
                }
            }
        }
        out.prune();
        out
    }

    fn prune(&mut self) {
        self.diags.retain(|(_, d)| d.iter().any(|v| *v != 0.0));
    }

    /// Drops diagonals whose entries are all at most `tol` in magnitude.
    pub fn prune_below(&mut self, tol: f64) {
        self.diags.retain(|(_, d)| d.iter().any(|v| v.abs() > tol));
    }

    pub fn n_diagonals(&self) -> usize {
        self.diags.len()
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.diags
            .iter()
            .flat_map(|(_, d)| d.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `out = self · rho` for row-major `rho`.
    pub fn left_mul(&self, rho: &[Complex64], out: &mut [Complex64]) {
        self.rows(1.0, rho, out, true);
    }

    /// `out += s · self · rho`.
    pub fn left_mul_acc(&self, s: f64, rho: &[Complex64], out: &mut [Complex64]) {
        self.rows(s, rho, out, false);
    }

    /// Row `i` of the product combines the rows `i + offset` of `rho`; up
    /// to three are folded into each sweep over the output row.
    fn rows(&self, s: f64, rho: &[Complex64], out: &mut [Complex64], overwrite: bool) {
        let n = self.dim;
        for (i, dst) in out.chunks_exact_mut(n).enumerate() {
            let mut fresh = overwrite;
            let mut group: [(f64, &[Complex64]); 3] = [(0.0, &[]); 3];
            let mut m = 0;
            for (off, d) in &self.diags {
                let k = i as isize + off;
                if k < 0 || k >= n as isize || d[i] == 0.0 {
                    continue;
                }
                group[m] = (s * d[i], &rho[k as usize * n..(k as usize + 1) * n]);
                m += 1;
                if m == 3 {
                    axpy3(dst, group[0], group[1], group[2], fresh);
                    fresh = false;
                    m = 0;
                }
            }
            match m {
                1 => axpy1(dst, group[0], fresh),
                2 => axpy2(dst, group[0], group[1], fresh),
                _ if fresh => dst.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0)),
                _ => {}
            }
        }
    }

    /// `out = s · self · rho`.
    pub fn left_mul_scaled(&self, s: f64, rho: &[Complex64], out: &mut [Complex64]) {
        self.rows(s, rho, out, true);
    }

    /// `out += s · rho · selfᵀ` (the operator is real, so `ᵀ = †`).
    pub fn right_mul_adj_acc(&self, s: f64, rho: &[Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        // (ρ Aᵀ)[i][j] = Σ_k ρ[i][k] A[j][k], k = j + off, over j in [j0, j1)
        let spans: Vec<(usize, usize, usize, Vec<f64>)> = self
            .diags
            .iter()
            .filter_map(|(off, d)| {
                let j0 = (-off).max(0) as usize;
                let j1 = (n as isize - off).min(n as isize).max(0) as usize;
                (j0 < j1).then(|| {
                    let k0 = (j0 as isize + off) as usize;
                    (j0, j1, k0, d[j0..j1].iter().map(|v| s * v).collect())
                })
            })
            .collect();
        for (src, dst) in rho.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            for (j0, j1, k0, scaled) in &spans {
                let row = &src[*k0..*k0 + (j1 - j0)];
                for ((o, r), a) in dst[*j0..*j1].iter_mut().zip(row).zip(scaled) {
                    *o += r * a;
                }
            }
        }
    }

    /// `Tr[self · rho]`.
    pub fn expectation(&self, rho: &[Complex64]) -> Complex64 {
        let n = self.dim;
        let mut acc = Complex64::new(0.0, 0.0);
        for (off, d) in &self.diags {
            for i in 0..n {
                let k = i as isize + off;
                if k >= 0 && k < n as isize {
                    acc += rho[k as usize * n + i] * d[i];
                }
            }
        }
        acc
    }

    /// Largest absolute row sum, an upper bound on the operator norm.
    pub fn norm_inf(&self) -> f64 {
        (0..self.dim)
            .map(|i| self.diags.iter().map(|(_, d)| d[i].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[inline]
fn axpy1(dst: &mut [Complex64], (a, x): (f64, &[Complex64]), overwrite: bool) {
    if overwrite {
        for (o, u) in dst.iter_mut().zip(x) {
            *o = u * a;
        }
    } else {
        for (o, u) in dst.iter_mut().zip(x) {
            *o += u * a;
        }
    }
}

#[inline]
fn axpy2(
    dst: &mut [Complex64],
    (a, x): (f64, &[Complex64]),
    (b, y): (f64, &[Complex64]),
    overwrite: bool,
) {
    if overwrite {
        for ((o, u), v) in dst.iter_mut().zip(x).zip(y) {
            *o = u * a + v * b;
        }
    } else {
        for ((o, u), v) in dst.iter_mut().zip(x).zip(y) {
            *o += u * a + v * b;
        }
    }
}

#[inline]
fn axpy3(
    dst: &mut [Complex64],
    (a, x): (f64, &[Complex64]),
    (b, y): (f64, &[Complex64]),
    (c, z): (f64, &[Complex64]),
    overwrite: bool,
) {
    if overwrite {
        for (((o, u), v), w) in dst.iter_mut().zip(x).zip(y).zip(z) {
            *o = u * a + v * b + w * c;
        }
    } else {
        for (((o, u), v), w) in dst.iter_mut().zip(x).zip(y).zip(z) {
            *o += u * a + v * b + w * c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense(b: &Banded) -> Vec<f64> {
        let n = b.dim();
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                m[i * n + j] = b.get(i, j);
            }
        }
        m
    }

    fn random_rho(n: usize) -> Vec<Complex64> {
        (0..n * n)
            .map(|k| Complex64::new((k as f64 * 0.37).sin(), (k as f64 * 0.91).cos()))
            .collect()
    }

    #[test]
    fn ladder_structure() {
        let c = Banded::annihilation(5);
        assert_eq!(c.get(0, 1), 1.0);
        assert_eq!(c.get(3, 4), 2.0);
        assert_eq!(c.get(1, 0), 0.0);
        let cd = Banded::creation(5);
        assert_eq!(cd.get(4, 3), 2.0);
        // truncated number operator
        let num = cd.matmul(&c);
        for i in 0..5 {
            assert!((num.get(i, i) - i as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn products_match_dense() {
        let n = 6;
        let c = Banded::annihilation(n);
        let a = c.scale(0.7).add_scaled(-1.3, &c.transpose());
        let b = a.matmul(&a).add_scaled(0.5, &Banded::identity(n));
        let rho = random_rho(n);
        let bd = dense(&b);

        let mut out = vec![Complex64::new(0.0, 0.0); n * n];
        b.left_mul(&rho, &mut out);
        let mut right = vec![Complex64::new(0.0, 0.0); n * n];
        b.right_mul_adj_acc(1.0, &rho, &mut right);
        for i in 0..n {
            for j in 0..n {
                let l: Complex64 = (0..n).map(|k| rho[k * n + j] * bd[i * n + k]).sum();
                let r: Complex64 = (0..n).map(|k| rho[i * n + k] * bd[j * n + k]).sum();
                assert!((out[i * n + j] - l).norm() < 1e-12);
                assert!((right[i * n + j] - r).norm() < 1e-12);
            }
        }
        let tr: Complex64 = (0..n).map(|i| out[i * n + i]).sum();
        assert!((b.expectation(&rho) - tr).norm() < 1e-12);
    }
}
