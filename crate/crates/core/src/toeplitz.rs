//! Stationary Gaussian covariance machinery for fractional Gaussian noise:
//! the autocovariance sequence, the Durbin-Levinson factorization of its
//! Toeplitz matrix, circulant-embedding products and path simulation.
//!
//! Indexing is 0-based throughout. Increment `n` of a path at step `dt` is
//! `B((n+1) dt) - B(n dt)`; `gamma[k]` is the covariance at lag `k`; ladder
//! row `j` holds the coefficients `b[j][0..=j]` that map the first `j + 1`
//! increments to the `j`-th innovation.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{check_len, Error, Result};

/// Autocovariance of fractional Gaussian noise at a fixed step.
#[derive(Debug, Clone, PartialEq)]
pub struct FgnCovariance {
    hurst: f64,
    dt: f64,
    gamma: Vec<f64>,
}

impl FgnCovariance {
    /// Covariance sequence for lags `0..len`.
    pub fn new(hurst: f64, dt: f64, len: usize) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::Domain(format!("Hurst index {hurst} outside (0, 1)")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("time step {dt} must be positive")));
        }
        let two_h = 2.0 * hurst;
        let scale = dt.powf(two_h);
        let mut gamma = Vec::with_capacity(len);
        for k in 0..len {
            let g = match k {
                0 => 1.0,
                _ if hurst == 0.5 => 0.0,
                1 => 0.5 * (2f64.powf(two_h) - 2.0),
                _ => {
                    // k^{2H} [(1 + 1/k)^{2H} + (1 - 1/k)^{2H} - 2] / 2, written
                    // with expm1/ln_1p so the second difference keeps its digits
                    let kf = k as f64;
                    let x = 1.0 / kf;
                    let up = (two_h * x.ln_1p()).exp_m1();
                    let down = (two_h * (-x).ln_1p()).exp_m1();
                    0.5 * kf.powf(two_h) * (up + down)
                }
            };
            gamma.push(scale * g);
        }
        Ok(Self { hurst, dt, gamma })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// Dense symmetric Toeplitz matrix of the first `n` lags.
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        toeplitz_dense(&self.gamma[..n])
    }
}

/// Autocovariance of fGN increments at step `dt` for lags `0..=max_lag`.
pub fn fgn_autocovariance(hurst: f64, dt: f64, max_lag: usize) -> Result<FgnCovariance> {
    FgnCovariance::new(hurst, dt, max_lag + 1)
}

/// Dense symmetric Toeplitz matrix with first row `acf`.
pub fn toeplitz_dense(acf: &[f64]) -> DMatrix<f64> {
    let n = acf.len();
    DMatrix::from_fn(n, n, |i, j| acf[i.abs_diff(j)])
}

/// Innovations form of the Cholesky factorization of a stationary
/// covariance: `B V B' = diag(v)` with `B` unit lower-triangular.
///
/// The full coefficient table is stored row-packed (`M (M + 1) / 2` values)
/// because the potential gradients need arbitrary `b[j][n]`.
#[derive(Debug, Clone)]
pub struct CholeskyLadder {
    coeffs: Vec<f64>,
    variances: Vec<f64>,
}

#[inline]
fn row_start(j: usize) -> usize {
    j * (j + 1) / 2
}

impl CholeskyLadder {
    /// Runs the Durbin-Levinson recursion on an autocovariance sequence.
    pub fn from_autocovariance(acf: &[f64]) -> Result<Self> {
        let m = acf.len();
        let mut coeffs = vec![0.0; m * (m + 1) / 2];
        let mut variances = Vec::with_capacity(m);
        if m == 0 {
            return Ok(Self { coeffs, variances });
        }
        if !(acf[0] > 0.0) {
            return Err(Error::NotPositiveDefinite { index: 0, value: acf[0] });
        }
        variances.push(acf[0]);
        coeffs[0] = 1.0;
        // phi[i - 1] is the one-step prediction coefficient on lag i
        let mut phi: Vec<f64> = Vec::with_capacity(m);
        let mut prev: Vec<f64> = Vec::with_capacity(m);
        for j in 1..m {
            let v_prev = variances[j - 1];
            let mut num = acf[j];
            for (i, p) in phi.iter().enumerate() {
                num -= p * acf[j - 1 - i];
            }
            let kappa = num / v_prev;
            prev.clear();
            prev.extend_from_slice(&phi);
            for i in 0..prev.len() {
                phi[i] = prev[i] - kappa * prev[prev.len() - 1 - i];
            }
            phi.push(kappa);
            let v = v_prev * (1.0 - kappa * kappa);
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::NotPositiveDefinite { index: j, value: v });
            }
            variances.push(v);
            // b[j][n] = -phi[j - n - 1] for n < j
            let row = &mut coeffs[row_start(j)..row_start(j) + j + 1];
            for (n, b) in row[..j].iter_mut().enumerate() {
                *b = -phi[j - n - 1];
            }
            row[j] = 1.0;
        }
        Ok(Self { coeffs, variances })
    }

    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }

    /// Coefficients `b[j][0..=j]`.
    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.coeffs[row_start(j)..row_start(j) + j + 1]
    }

    /// `b[j][n]`, zero above the diagonal.
    pub fn coeff(&self, j: usize, n: usize) -> f64 {
        if n > j {
            0.0
        } else {
            self.coeffs[row_start(j) + n]
        }
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// `log |V| = Σ log v_j`.
    pub fn log_det(&self) -> f64 {
        self.variances.iter().map(|v| v.ln()).sum()
    }

    /// Dense coefficient matrix `B`.
    pub fn coefficient_matrix(&self) -> DMatrix<f64> {
        let m = self.len();
        DMatrix::from_fn(m, m, |j, n| self.coeff(j, n))
    }

    /// Innovations `r = B z`.
    pub fn residuals(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), z.len())?;
        Ok((0..self.len())
            .map(|j| self.row(j).iter().zip(z).map(|(b, x)| b * x).sum())
            .collect())
    }

    /// `B' u`, the adjoint of [`residuals`](Self::residuals).
    pub fn transpose_apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), u.len())?;
        let mut out = vec![0.0; self.len()];
        for (j, &uj) in u.iter().enumerate() {
            if uj == 0.0 {
                continue;
            }
            for (o, b) in out.iter_mut().zip(self.row(j)) {
                *o += b * uj;
            }
        }
        Ok(out)
    }

    /// `V^{-1} z = B' diag(v)^{-1} B z`.
    pub fn solve(&self, z: &[f64]) -> Result<Vec<f64>> {
        let r = self.residuals(z)?;
        let u: Vec<f64> = r.iter().zip(&self.variances).map(|(r, v)| r / v).collect();
        self.transpose_apply(&u)
    }

    /// `diag(v)^{-1/2} B z`: maps an `N(0, V)` vector to iid standard normals.
    pub fn whiten(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut r = self.residuals(z)?;
        for (r, v) in r.iter_mut().zip(&self.variances) {
            *r /= v.sqrt();
        }
        Ok(r)
    }

    /// One draw from `N(0, V)` by inverting the innovations map.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let m = self.len();
        let mut x = Vec::with_capacity(m);
        for j in 0..m {
            let eps: f64 = rng.sample(StandardNormal);
            let row = self.row(j);
            let pred: f64 = row[..j].iter().zip(&x).map(|(b, x)| b * x).sum();
            x.push(self.variances[j].sqrt() * eps - pred);
        }
        x
    }
}

/// Durbin-Levinson factorization of the fGN Toeplitz covariance.
pub fn durbin_levinson(cov: &FgnCovariance) -> Result<CholeskyLadder> {
    CholeskyLadder::from_autocovariance(cov.gamma())
}

/// Zero-mean Gaussian log-density evaluated through a ladder, together with
/// the pieces the gradient formulas reuse.
#[derive(Debug, Clone)]
pub struct GaussianLoglik {
    pub loglik: f64,
    pub residuals: Vec<f64>,
    pub variances: Vec<f64>,
}

/// `log N(z; 0, V) = -½ Σ_j (r_j² / v_j + log v_j) - (M/2) log 2π`.
pub fn gaussian_loglik(ladder: &CholeskyLadder, z: &[f64]) -> Result<GaussianLoglik> {
    let residuals = ladder.residuals(z)?;
    let loglik = ladder_loglik_from_residuals(&residuals, ladder.variances());
    Ok(GaussianLoglik {
        loglik,
        residuals,
        variances: ladder.variances().to_vec(),
    })
}

pub(crate) fn ladder_loglik_from_residuals(r: &[f64], v: &[f64]) -> f64 {
    let quad: f64 = r.iter().zip(v).map(|(r, v)| r * r / v + v.ln()).sum();
    -0.5 * quad - 0.5 * r.len() as f64 * (2.0 * PI).ln()
}

/// Eigenvalues of the minimal circulant embedding of a symmetric Toeplitz
/// matrix: the DFT of `(g_0, …, g_{M-1}, g_{M-2}, …, g_1)`.
#[derive(Debug, Clone)]
pub struct CirculantSpectrum {
    eigenvalues: Vec<Complex64>,
}

impl CirculantSpectrum {
    pub fn from_autocovariance(acf: &[f64]) -> Self {
        let row = circulant_row(acf);
        let mut buf: Vec<Complex64> = row.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        if buf.len() > 1 {
            FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        }
        Self { eigenvalues: buf }
    }

    pub fn eigenvalues(&self) -> &[Complex64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// `max |Im λ| / max |Re λ|`; zero up to roundoff for symmetric input.
    pub fn imaginary_ratio(&self) -> f64 {
        let re = self.eigenvalues.iter().map(|c| c.re.abs()).fold(0.0, f64::max);
        let im = self.eigenvalues.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
        if re > 0.0 {
            im / re
        } else {
            im
        }
    }
}

fn circulant_row(acf: &[f64]) -> Vec<f64> {
    let m = acf.len();
    if m <= 2 {
        return acf.to_vec();
    }
    let mut row = Vec::with_capacity(2 * m - 2);
    row.extend_from_slice(acf);
    row.extend(acf[1..m - 1].iter().rev());
    row
}

/// `A V A'` for a `p × M` matrix `A` and the Toeplitz `V` of the first `M`
/// lags of `cov`.
///
/// Each row of `A` is zero-padded to the circulant length `2M - 2` and
/// multiplied by the embedding through the FFT, so the Toeplitz products
/// cost `O(p M log M)`; the final contraction with `A` is a dense product.
pub fn toeplitz_quadratic_form(a: &DMatrix<f64>, cov: &FgnCovariance) -> Result<DMatrix<f64>> {
    let m = a.ncols();
    if cov.len() < m {
        return Err(Error::Dimension { expected: m, got: cov.len() });
    }
    Ok(quadratic_form_acf(a, &cov.gamma()[..m]))
}

pub(crate) fn quadratic_form_acf(a: &DMatrix<f64>, acf: &[f64]) -> DMatrix<f64> {
    let m = acf.len();
    let p = a.nrows();
    debug_assert_eq!(a.ncols(), m);
    if m <= 2 {
        let v = toeplitz_dense(acf);
        return a * v * a.transpose();
    }
    let len = 2 * m - 2;
    let spectrum = CirculantSpectrum::from_autocovariance(acf);
    let lambda: Vec<f64> = spectrum.eigenvalues.iter().map(|c| c.re / len as f64).collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    // row i of `w` holds (V a_i)[0..m]
    let mut w = DMatrix::<f64>::zeros(p, m);
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for i in 0..p {
        for (n, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(if n < m { a[(i, n)] } else { 0.0 }, 0.0);
        }
        fwd.process(&mut buf);
        for (b, l) in buf.iter_mut().zip(&lambda) {
            *b *= *l;
        }
        inv.process(&mut buf);
        for n in 0..m {
            w[(i, n)] = buf[n].re;
        }
    }
    let mut out = a * w.transpose();
    // symmetrize away roundoff
    for i in 0..p {
        for j in 0..i {
            let s = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = s;
            out[(j, i)] = s;
        }
    }
    out
}

/// One simulated block of fGN increments.
#[derive(Debug, Clone)]
pub struct FgnSample {
    pub increments: Vec<f64>,
    /// Set when the circulant embedding had a materially negative eigenvalue
    /// and the ladder sampler was used instead.
    pub used_fallback: bool,
}

enum SamplerKind {
    Spectral { sqrt_eigen: Vec<f64>, fft: Arc<dyn rustfft::Fft<f64>> },
    Ladder(CholeskyLadder),
}

/// Reusable fGN sampler for a fixed `(H, dt, M)`.
///
/// Uses circulant embedding; eigenvalues below zero by at most
/// `1e-10 · max λ` are clamped, anything worse switches to exact ladder
/// sampling.
pub struct FgnSimulator {
    m: usize,
    kind: SamplerKind,
}

impl FgnSimulator {
    pub fn new(hurst: f64, dt: f64, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("fGN path length must be at least 1".into()));
        }
        let cov = FgnCovariance::new(hurst, dt, m)?;
        if m <= 2 {
            return Ok(Self { m, kind: SamplerKind::Ladder(durbin_levinson(&cov)?) });
        }
        let spectrum = CirculantSpectrum::from_autocovariance(cov.gamma());
        let len = spectrum.len();
        let max = spectrum.eigenvalues.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
        let min = spectrum.eigenvalues.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        if min < -1e-10 * max {
            log::warn!("circulant embedding has eigenvalue {min:e}; falling back to ladder sampling");
            return Ok(Self { m, kind: SamplerKind::Ladder(durbin_levinson(&cov)?) });
        }
        let sqrt_eigen = spectrum
            .eigenvalues
            .iter()
            .map(|c| (c.re.max(0.0) / len as f64).sqrt())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(len);
        Ok(Self { m, kind: SamplerKind::Spectral { sqrt_eigen, fft } })
    }

    pub fn used_fallback(&self) -> bool {
        matches!(self.kind, SamplerKind::Ladder(_)) && self.m > 2
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match &self.kind {
            SamplerKind::Ladder(ladder) => ladder.sample(rng),
            SamplerKind::Spectral { sqrt_eigen, fft } => {
                // Re(F (√(λ/L) ⊙ ξ)) with ξ complex standard normal has the
                // covariance of the circulant; its first M entries are fGN.
                let mut buf: Vec<Complex64> = sqrt_eigen
                    .iter()
                    .map(|s| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex64::new(s * re, s * im)
                    })
                    .collect();
                fft.process(&mut buf);
                buf[..self.m].iter().map(|c| c.re).collect()
            }
        }
    }
}

/// One draw of `m` fGN increments at step `dt`.
pub fn fgn_simulate<R: Rng + ?Sized>(hurst: f64, dt: f64, m: usize, rng: &mut R) -> Result<FgnSample> {
    let sim = FgnSimulator::new(hurst, dt, m)?;
    Ok(FgnSample {
        increments: sim.sample(rng),
        used_fallback: sim.used_fallback(),
    })
}
