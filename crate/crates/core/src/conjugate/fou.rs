//! Exact Euler-implied laws of fOU observations at augmentation level `k`,
//! with the latent path integrated out analytically.
//!
//! At level `k` the Euler recursion is `X_{m+1} = ρ X_m + η dt_k + σ dB_m`
//! with `ρ = 1 - γ dt_k` and `η = γμ`, so
//! `X_m = ρ^m X_0 + η dt_k Σ_{j<m} ρ^j + σ Σ_{j<m} ρ^{m-1-j} dB_j`.
//!
//! Two routes evaluate the observed-data law:
//!
//! * [`fou_observed_law`] builds the mean and `σ² A V A'` directly, with the
//!   Toeplitz products done by FFT.
//! * [`fou_block_loglik`] and [`fou_exact_grid`] use the one-interval
//!   recursion `y_i = X_{t_{i+1}} - ρ^R X_{t_i} = η c + σ ε_i` (`R = 2^k`),
//!   whose errors `ε_i = Σ_a ρ^{R-1-a} dB_{iR+a}` are stationary, so each
//!   grid node costs one Durbin-Levinson pass of size `N`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::grid::GridPosterior;
use super::{marginal_theta_logdensity, ConjugatePrior, RegressionStats};
use crate::error::{Error, Result};
use crate::models::FouParams;
use crate::toeplitz::{fgn_autocovariance, gaussian_loglik, quadratic_form_acf, CholeskyLadder};

/// `n` points spaced evenly on a log scale from `lo` to `hi`.
pub fn log_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// `n` evenly spaced points from `lo` to `hi`.
pub fn linear_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Upper end `2 / dT` of the `γ` support used by the fOU grids and the
/// default samplers. At level `k ≥ 1` the integrated density is singular at
/// `γ = 2 / dt_k`, where the drift coefficient of the observed-data
/// regression vanishes; every such point lies above this bound.
pub fn fou_gamma_bound(dt_obs: f64) -> f64 {
    2.0 / dt_obs
}

/// 64 log-spaced values of `γ` over `[0.05, 2] / dT`.
pub fn default_gamma_axis(dt_obs: f64) -> Vec<f64> {
    log_axis(0.05 / dt_obs, fou_gamma_bound(dt_obs), 64)
}

/// 128 evenly spaced values of `H` over `[0.01, 0.99]`.
pub fn default_hurst_axis() -> Vec<f64> {
    linear_axis(0.01, 0.99, 128)
}

fn check_obs(x_obs: &[f64], dt: f64) -> Result<()> {
    if x_obs.len() < 3 {
        return Err(Error::Domain(format!("need at least three observations, got {}", x_obs.len())));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("observation spacing {dt} must be positive")));
    }
    if x_obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("observations must be finite".into()));
    }
    Ok(())
}

fn check_axes(gamma_axis: &[f64], hurst_axis: &[f64]) -> Result<()> {
    if gamma_axis.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::Domain("γ grid must be positive".into()));
    }
    if hurst_axis.iter().any(|h| !(*h > 0.0 && *h < 1.0)) {
        return Err(Error::Domain("H grid must lie in (0, 1)".into()));
    }
    Ok(())
}

fn names() -> Vec<String> {
    vec!["gamma".into(), "hurst".into()]
}

/// Fills a `[γ][H]` table column by column.
fn tabulate<F>(gamma_axis: &[f64], hurst_axis: &[f64], column: F) -> Result<GridPosterior>
where
    F: Fn(f64) -> Result<Vec<f64>> + Sync,
{
    check_axes(gamma_axis, hurst_axis)?;
    let columns: Vec<Vec<f64>> = hurst_axis.par_iter().map(|&h| column(h)).collect::<Result<_>>()?;
    let nh = hurst_axis.len();
    let mut log_density = vec![0.0; gamma_axis.len() * nh];
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            log_density[i * nh + j] = *v;
        }
    }
    GridPosterior::new(names(), vec![gamma_axis.to_vec(), hurst_axis.to_vec()], log_density)
}

/// Level-0 posterior of `(γ, H)` with `(η, σ)` integrated out under
/// `π(γ, η, σ, H) ∝ 1/σ`.
///
/// The response `y_i = X_{i+1} + (γ dT - 1) X_i` is affine in `γ`, so each
/// `H` needs one ladder and three whitened vectors; every `γ` node then
/// costs `O(1)`.
pub fn fou_k0_grid(x_obs: &[f64], dt: f64, gamma_axis: &[f64], hurst_axis: &[f64]) -> Result<GridPosterior> {
    check_obs(x_obs, dt)?;
    let n = x_obs.len() - 1;
    let a: Vec<f64> = x_obs.windows(2).map(|w| w[1] - w[0]).collect();
    let b: Vec<f64> = x_obs[..n].iter().map(|x| dt * x).collect();
    let c = vec![dt; n];
    tabulate(gamma_axis, hurst_axis, |h| {
        let cov = fgn_autocovariance(h, dt, n - 1)?;
        let ladder = CholeskyLadder::from_autocovariance(cov.gamma())?;
        let (wa, wb, wc) = (ladder.whiten(&a)?, ladder.whiten(&b)?, ladder.whiten(&c)?);
        let dot = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>();
        let (aa, ab, bb) = (dot(&wa, &wa), dot(&wa, &wb), dot(&wb, &wb));
        let (ca, cb, cc) = (dot(&wc, &wa), dot(&wc, &wb), dot(&wc, &wc));
        let log_det = ladder.log_det();
        gamma_axis
            .iter()
            .map(|&g| {
                let s = aa + 2.0 * g * ab + g * g * bb;
                let st = RegressionStats::from_products(
                    n,
                    s,
                    DVector::from_element(1, ca + g * cb),
                    DMatrix::from_element(1, 1, cc),
                    log_det,
                )?;
                marginal_theta_logdensity(&st, &ConjugatePrior::Noninformative)
            })
            .collect()
    })
}

/// Autocovariance of `ε_i = Σ_a ρ^{R-1-a} dB_{iR+a}` at lags `0..n`, from
/// the fGN autocovariance `g` of the fine increments.
fn block_acf(g: &[f64], rho: f64, r: usize, n: usize) -> Vec<f64> {
    let p: Vec<f64> = (0..r).map(|a| rho.powi((r - 1 - a) as i32)).collect();
    // q[δ + R - 1] = Σ_{b - a = δ} p_a p_b
    let mut q = vec![0.0; 2 * r - 1];
    for a in 0..r {
        for b in 0..r {
            q[b + r - 1 - a] += p[a] * p[b];
        }
    }
    (0..n)
        .map(|l| {
            q.iter()
                .enumerate()
                .map(|(k, qk)| {
                    let lag = (l * r + k) as i64 - (r as i64 - 1);
                    qk * g[lag.unsigned_abs() as usize]
                })
                .sum()
        })
        .collect()
}

/// Response `y_i = X_{t_{i+1}} - ρ^R X_{t_i}` and the drift coefficient
/// `c = dt_k Σ_{j<R} ρ^j`.
fn block_response(x_obs: &[f64], gamma: f64, dt_k: f64, r: usize) -> (Vec<f64>, f64) {
    let rho = 1.0 - gamma * dt_k;
    let rho_r = rho.powi(r as i32);
    let c = dt_k * (0..r).map(|j| rho.powi(j as i32)).sum::<f64>();
    (x_obs.windows(2).map(|w| w[1] - rho_r * w[0]).collect(), c)
}

fn level_spacing(dt: f64, level: u32) -> (usize, f64) {
    let r = 1usize << level;
    (r, dt / r as f64)
}

/// Level-`k` posterior of `(γ, H)` with the latent path, `η` and `σ`
/// integrated out exactly under `π(γ, η, σ, H) ∝ 1/σ`.
pub fn fou_exact_grid(
    x_obs: &[f64],
    dt: f64,
    level: u32,
    gamma_axis: &[f64],
    hurst_axis: &[f64],
) -> Result<GridPosterior> {
    check_obs(x_obs, dt)?;
    let n = x_obs.len() - 1;
    let (r, dt_k) = level_spacing(dt, level);
    if level > 0 && gamma_axis.iter().any(|g| *g >= 2.0 / dt_k) {
        log::warn!("γ grid reaches 2/dt_k = {}, where the level-{level} density is singular", 2.0 / dt_k);
    }
    tabulate(gamma_axis, hurst_axis, |h| {
        let g = fgn_autocovariance(h, dt_k, n * r + r)?;
        gamma_axis
            .iter()
            .map(|&gamma| {
                let rho = 1.0 - gamma * dt_k;
                let ladder = CholeskyLadder::from_autocovariance(&block_acf(g.gamma(), rho, r, n))?;
                let (y, c) = block_response(x_obs, gamma, dt_k, r);
                let design = DMatrix::from_element(n, 1, c);
                let st = super::regression_stats_with(&y, &design, &ladder)?;
                marginal_theta_logdensity(&st, &ConjugatePrior::Noninformative)
            })
            .collect()
    })
}

/// `log p(X_1, …, X_N | X_0, θ, σ, H)` under the level-`k` Euler model,
/// evaluated through the one-interval recursion.
pub fn fou_block_loglik(x_obs: &[f64], params: &FouParams, dt: f64, level: u32) -> Result<f64> {
    check_obs(x_obs, dt)?;
    params.validate()?;
    let n = x_obs.len() - 1;
    let (r, dt_k) = level_spacing(dt, level);
    let g = fgn_autocovariance(params.hurst, dt_k, n * r + r)?;
    let rho = 1.0 - params.gamma * dt_k;
    let s2 = params.sigma * params.sigma;
    let acf: Vec<f64> = block_acf(g.gamma(), rho, r, n).into_iter().map(|v| v * s2).collect();
    let ladder = CholeskyLadder::from_autocovariance(&acf)?;
    let (y, c) = block_response(x_obs, params.gamma, dt_k, r);
    let eta = params.gamma * params.mu;
    let z: Vec<f64> = y.iter().map(|v| v - eta * c).collect();
    Ok(gaussian_loglik(&ladder, &z)?.loglik)
}

/// Mean and covariance of `(X_{t_1}, …, X_{t_n})` given `X_0 = x0` under the
/// level-`k` Euler model: mean from the `ρ` recursion, covariance
/// `σ² A V A'` with `A[i][j] = ρ^{(i+1)R-1-j}` for `j < (i+1)R`.
pub fn fou_observed_law(x0: f64, params: &FouParams, dt: f64, level: u32, n: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    params.validate()?;
    let (r, dt_k) = level_spacing(dt, level);
    let m = n * r;
    let rho = 1.0 - params.gamma * dt_k;
    let eta = params.gamma * params.mu;
    let pow: Vec<f64> = (0..=m).map(|j| rho.powi(j as i32)).collect();
    let mut mean = DVector::zeros(n);
    let mut acc = 0.0;
    let mut next = 0;
    for (step, p) in pow.iter().enumerate().take(m) {
        acc += p;
        if step + 1 == (next + 1) * r {
            mean[next] = pow[step + 1] * x0 + eta * dt_k * acc;
            next += 1;
        }
    }
    let a = DMatrix::from_fn(n, m, |i, j| {
        let end = (i + 1) * r;
        if j < end {
            pow[end - 1 - j]
        } else {
            0.0
        }
    });
    let g = fgn_autocovariance(params.hurst, dt_k, m - 1)?;
    let cov = quadratic_form_acf(&a, g.gamma()) * (params.sigma * params.sigma);
    Ok((mean, cov))
}

/// Observed-data log density at level `k` with the latent path integrated
/// out, via [`fou_observed_law`]. A covariance that fails to factor is
/// retried once with jitter `1e-10 · trace / n` on the diagonal.
pub fn fou_exact_marginal(x_obs: &[f64], params: &FouParams, dt: f64, level: u32) -> Result<f64> {
    check_obs(x_obs, dt)?;
    let n = x_obs.len() - 1;
    let (mean, cov) = fou_observed_law(x_obs[0], params, dt, level, n)?;
    let chol = match cov.clone().cholesky() {
        Some(c) => c,
        None => {
            let jitter = 1e-10 * cov.trace() / n as f64;
            log::warn!("observed covariance not positive definite; retrying with jitter {jitter:e}");
            let mut j = cov;
            for i in 0..n {
                j[(i, i)] += jitter;
            }
            j.cholesky().ok_or(Error::NotPositiveDefinite { index: 0, value: jitter })?
        }
    };
    let z = DVector::from_column_slice(&x_obs[1..]) - mean;
    let mut w = z.clone();
    chol.l().solve_lower_triangular_mut(&mut w);
    let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(-0.5 * (w.norm_squared() + log_det + n as f64 * (2.0 * std::f64::consts::PI).ln()))
}
