//! Exact Gaussian computations: conjugate regression posteriors with
//! structured (fGN) error covariance, exact fOU grid posteriors and the
//! `k = 0` regression samplers.
//!
//! The regression form is `Y | β, σ, θ ~ N_n(Xβ, σ² V(θ))`. Everything is
//! expressed through the blocks of `R = [Y X]' V^{-1} [Y X]`:
//! `s = Y'V^{-1}Y`, `U = X'V^{-1}Y`, `T = X'V^{-1}X`.

mod fou;
mod grid;
mod k0;

pub use fou::{
    default_gamma_axis, default_hurst_axis, fou_block_loglik, fou_gamma_bound, fou_exact_grid, fou_exact_marginal, fou_k0_grid,
    fou_observed_law, linear_axis, log_axis,
};
pub use grid::{GridPosterior, Marginal};
pub use k0::{fcir_k0_posterior, fou_k0_posterior, k0_point_estimate, regression_k0_posterior, K0Options, K0Posterior};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::toeplitz::{CholeskyLadder, FgnCovariance};

/// A factorization `V = L L'` that can apply `L^{-1}`.
pub trait Whitener {
    fn dim(&self) -> usize;

    /// `L^{-1} z`, so that `|L^{-1} z|² = z' V^{-1} z`.
    fn whiten(&self, z: &[f64]) -> Result<Vec<f64>>;

    fn log_det(&self) -> f64;
}

impl Whitener for CholeskyLadder {
    fn dim(&self) -> usize {
        self.len()
    }

    fn whiten(&self, z: &[f64]) -> Result<Vec<f64>> {
        CholeskyLadder::whiten(self, z)
    }

    fn log_det(&self) -> f64 {
        CholeskyLadder::log_det(self)
    }
}

/// Dense Cholesky whitener for covariances without Toeplitz structure.
#[derive(Debug, Clone)]
pub struct DenseWhitener {
    chol: Cholesky<f64, Dyn>,
}

impl DenseWhitener {
    pub fn new(v: DMatrix<f64>) -> Result<Self> {
        let n = v.nrows();
        let diag_min = (0..n).map(|i| v[(i, i)]).fold(f64::INFINITY, f64::min);
        Cholesky::new(v)
            .map(|chol| Self { chol })
            .ok_or(Error::NotPositiveDefinite { index: 0, value: diag_min })
    }
}

impl Whitener for DenseWhitener {
    fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    fn whiten(&self, z: &[f64]) -> Result<Vec<f64>> {
        crate::error::check_len(self.dim(), z.len())?;
        let mut b = DVector::from_column_slice(z);
        self.chol.l().solve_lower_triangular_mut(&mut b);
        Ok(b.as_slice().to_vec())
    }

    fn log_det(&self) -> f64 {
        2.0 * self.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }
}

/// Sufficient statistics of the regression form.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionStats {
    pub n: usize,
    pub d: usize,
    /// `Y' V^{-1} Y`
    pub s: f64,
    /// `X' V^{-1} Y`
    pub u: DVector<f64>,
    /// `X' V^{-1} X`
    pub t: DMatrix<f64>,
    /// `T^{-1} U`
    pub beta_hat: DVector<f64>,
    /// Generalized residual sum of squares `S = s - U' β̂`.
    pub rss: f64,
    pub log_det_v: f64,
    pub log_det_t: f64,
}

impl RegressionStats {
    /// Assembles the statistics from the cross products.
    pub fn from_products(n: usize, s: f64, u: DVector<f64>, t: DMatrix<f64>, log_det_v: f64) -> Result<Self> {
        let d = u.len();
        if t.nrows() != d || t.ncols() != d {
            return Err(Error::Dimension { expected: d, got: t.nrows() });
        }
        let chol = Cholesky::new(t.clone()).ok_or(Error::RankDeficient)?;
        let l = chol.l_dirty();
        if (0..d).any(|i| l[(i, i)] * l[(i, i)] <= 1e-12 * t[(i, i)]) {
            return Err(Error::RankDeficient);
        }
        let beta_hat = chol.solve(&u);
        let log_det_t = 2.0 * (0..d).map(|i| l[(i, i)].ln()).sum::<f64>();
        let rss = (s - u.dot(&beta_hat)).max(0.0);
        Ok(Self { n, d, s, u, t, beta_hat, rss, log_det_v, log_det_t })
    }

    /// `γ̂ = S / 2` for the noninformative prior.
    pub fn gamma_hat(&self) -> f64 {
        0.5 * self.rss
    }
}

/// Regression statistics with `V` the fGN covariance truncated to `n`
/// lags, via the Durbin-Levinson ladder.
pub fn regression_stats(y: &[f64], design: &DMatrix<f64>, cov: &FgnCovariance) -> Result<RegressionStats> {
    let n = y.len();
    if cov.len() < n {
        return Err(Error::Dimension { expected: n, got: cov.len() });
    }
    let ladder = CholeskyLadder::from_autocovariance(&cov.gamma()[..n])?;
    regression_stats_with(y, design, &ladder)
}

/// Regression statistics for any whitened covariance.
pub fn regression_stats_with<W: Whitener + ?Sized>(y: &[f64], design: &DMatrix<f64>, w: &W) -> Result<RegressionStats> {
    let n = y.len();
    if design.nrows() != n {
        return Err(Error::Dimension { expected: n, got: design.nrows() });
    }
    let d = design.ncols();
    if d >= n {
        return Err(Error::RankDeficient);
    }
    let wy = DVector::from_vec(w.whiten(y)?);
    let mut wx = DMatrix::<f64>::zeros(n, d);
    for j in 0..d {
        let col: Vec<f64> = design.column(j).iter().copied().collect();
        wx.set_column(j, &DVector::from_vec(w.whiten(&col)?));
    }
    RegressionStats::from_products(n, wy.norm_squared(), wx.transpose() * &wy, wx.transpose() * &wx, w.log_det())
}

/// Prior on `(β, σ²)` given the structural parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ConjugatePrior {
    /// `π(β, σ) ∝ 1/σ`.
    Noninformative,
    /// `σ² ~ IG(α, rate)`, `β | σ² ~ N(λ, σ² Ω^{-1})`.
    Conjugate {
        alpha: f64,
        rate: f64,
        lambda: DVector<f64>,
        omega: DMatrix<f64>,
    },
}

/// Posterior of `(β, σ²)` at fixed structural parameters.
struct Conditional {
    shape: f64,
    rate: f64,
    mean: DVector<f64>,
    precision: Cholesky<f64, Dyn>,
}

fn conditional(stats: &RegressionStats, prior: &ConjugatePrior) -> Result<(Conditional, f64)> {
    match prior {
        ConjugatePrior::Noninformative => {
            if stats.n <= stats.d || !(stats.rss > 0.0) {
                return Err(Error::DegenerateFit(stats.rss));
            }
            let precision = Cholesky::new(stats.t.clone()).ok_or(Error::RankDeficient)?;
            let c = Conditional {
                shape: 0.5 * (stats.n - stats.d) as f64,
                rate: stats.gamma_hat(),
                mean: stats.beta_hat.clone(),
                precision,
            };
            let log_m = -0.5 * ((stats.n - stats.d) as f64 * c.rate.ln() + stats.log_det_t + stats.log_det_v);
            Ok((c, log_m))
        }
        ConjugatePrior::Conjugate { alpha, rate, lambda, omega } => {
            if lambda.len() != stats.d || omega.nrows() != stats.d {
                return Err(Error::Dimension { expected: stats.d, got: lambda.len() });
            }
            let omega_chol = Cholesky::new(omega.clone()).ok_or(Error::NotPositiveDefinite { index: 0, value: 0.0 })?;
            let tw = &stats.t + omega;
            let precision = Cholesky::new(tw.clone()).ok_or(Error::RankDeficient)?;
            let lam_hat = precision.solve(&(&stats.u + omega * lambda));
            let g_hat = 0.5 * (stats.s + lambda.dot(&(omega * lambda)) - lam_hat.dot(&(&tw * &lam_hat)));
            let post_rate = rate + g_hat.max(0.0);
            let shape = alpha + 0.5 * stats.n as f64;
            if !(post_rate > 0.0 && shape > 0.0) {
                return Err(Error::DegenerateFit(post_rate));
            }
            let log_det = |c: &Cholesky<f64, Dyn>| 2.0 * c.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
            let log_m = 0.5 * log_det(&omega_chol) - 0.5 * log_det(&precision) - 0.5 * stats.log_det_v
                - shape * post_rate.ln();
            Ok((Conditional { shape, rate: post_rate, mean: lam_hat, precision }, log_m))
        }
    }
}

/// Log marginal density of the structural parameters with `(β, σ²)`
/// integrated out, up to a constant and excluding `log π(θ)`.
///
/// Noninformative: `-½[(n - d) log γ̂ + log|T| + log|V|]` with `γ̂ = S/2`.
/// Conjugate: `½ log|Ω| - ½ log|T + Ω| - ½ log|V| - (α + n/2) log(rate + γ̂)`
/// with `γ̂ = ½(s + λ'Ωλ - λ̂'(T + Ω)λ̂)` and `λ̂ = (T + Ω)^{-1}(U + Ωλ)`.
pub fn marginal_theta_logdensity(stats: &RegressionStats, prior: &ConjugatePrior) -> Result<f64> {
    conditional(stats, prior).map(|(_, m)| m)
}

/// `σ²` with density `∝ (σ²)^{-shape-1} exp(-rate/σ²)`.
pub fn inverse_gamma_sample<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    let g = Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Domain(format!("inverse gamma({shape}, {rate}): {e}")))?;
    Ok(1.0 / g.sample(rng))
}

/// One draw of `(σ², β)` from the conditional posterior given `θ`.
pub fn conditional_sample<R: Rng + ?Sized>(
    stats: &RegressionStats,
    prior: &ConjugatePrior,
    rng: &mut R,
) -> Result<(f64, DVector<f64>)> {
    let (c, _) = conditional(stats, prior)?;
    let sigma2 = inverse_gamma_sample(c.shape, c.rate, rng)?;
    // β = mean + σ L'^{-1} z with precision L L'
    let z = DVector::from_fn(stats.d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut dev = z;
    c.precision.l().tr_solve_lower_triangular_mut(&mut dev);
    Ok((sigma2, c.mean + dev * sigma2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toeplitz::fgn_autocovariance;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn identity(n: usize) -> DenseWhitener {
        DenseWhitener::new(DMatrix::identity(n, n)).unwrap()
    }

    #[test]
    fn ordinary_least_squares() {
        let y = [1.0, 3.0, 2.0, 6.0];
        let ones = DMatrix::from_element(4, 1, 1.0);
        let st = regression_stats_with(&y, &ones, &identity(4)).unwrap();
        assert!((st.beta_hat[0] - 3.0).abs() < 1e-14);
        assert!((st.rss - (4.0 + 0.0 + 1.0 + 9.0)).abs() < 1e-12);

        let x = DMatrix::from_column_slice(4, 1, &[1.0, 2.0, -1.0, 0.5]);
        let st = regression_stats_with(&y, &x, &identity(4)).unwrap();
        let sxy: f64 = 1.0 + 6.0 - 2.0 + 3.0;
        let sxx: f64 = 1.0 + 4.0 + 1.0 + 0.25;
        assert!((st.beta_hat[0] - sxy / sxx).abs() < 1e-14);
    }

    #[test]
    fn rank_deficient_design() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let r = regression_stats_with(&[1.0, 0.0, 2.0], &x, &identity(3));
        assert!(matches!(r, Err(Error::RankDeficient)));
    }

    #[test]
    fn ladder_stats_match_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 64;
        let cov = fgn_autocovariance(0.7, 1.0, n - 1).unwrap();
        let y: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { (i as f64 * 0.3).sin() });
        let st = regression_stats(&y, &x, &cov).unwrap();
        let v = cov.to_dense(n);
        let vinv_y = v.clone().cholesky().unwrap().solve(&DVector::from_column_slice(&y));
        let vinv_x = v.clone().cholesky().unwrap().solve(&x);
        let yv = DVector::from_column_slice(&y);
        let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-8 * b.abs().max(1.0), "{a} vs {b}");
        close(st.s, yv.dot(&vinv_y));
        let u = x.transpose() * &vinv_y;
        let t = x.transpose() * &vinv_x;
        for i in 0..2 {
            close(st.u[i], u[i]);
            for j in 0..2 {
                close(st.t[(i, j)], t[(i, j)]);
            }
        }
        close(st.log_det_v, v.cholesky().unwrap().l().diagonal().iter().map(|d| 2.0 * d.ln()).sum());
    }

    #[test]
    fn identical_stats_identical_density() {
        let x = DMatrix::from_element(5, 1, 1.0);
        let st = regression_stats_with(&[0.3, 1.0, -0.2, 0.8, 0.1], &x, &identity(5)).unwrap();
        let a = marginal_theta_logdensity(&st, &ConjugatePrior::Noninformative).unwrap();
        let b = marginal_theta_logdensity(&st.clone(), &ConjugatePrior::Noninformative).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn perfect_fit_is_degenerate() {
        let x = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let st = regression_stats_with(&[2.0, 4.0, 6.0], &x, &identity(3)).unwrap();
        assert!(matches!(marginal_theta_logdensity(&st, &ConjugatePrior::Noninformative), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn conjugate_mean_tends_to_least_squares() {
        let x = DMatrix::from_fn(6, 2, |i, j| if j == 0 { 1.0 } else { i as f64 });
        let st = regression_stats_with(&[0.1, 0.9, 2.2, 2.8, 4.1, 5.0], &x, &identity(6)).unwrap();
        let prior = ConjugatePrior::Conjugate {
            alpha: 1.0,
            rate: 1.0,
            lambda: DVector::from_vec(vec![5.0, -3.0]),
            omega: DMatrix::identity(2, 2) * 1e-10,
        };
        let (c, _) = conditional(&st, &prior).unwrap();
        assert!((c.mean - &st.beta_hat).norm() < 1e-8);
    }

    #[test]
    fn inverse_gamma_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let m = (0..n).map(|_| inverse_gamma_sample(5.0, 8.0, &mut rng).unwrap()).sum::<f64>() / n as f64;
        assert!((m / 2.0 - 1.0).abs() < 0.02, "{m}");
    }

    #[test]
    fn conditional_beta_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(8, 2, |i, j| if j == 0 { 1.0 } else { (i as f64).sqrt() });
        let st = regression_stats_with(&[0.5, 1.1, 1.3, 2.0, 1.7, 2.4, 2.2, 2.9], &x, &identity(8)).unwrap();
        let n = 100_000;
        let mut mean = DVector::<f64>::zeros(2);
        let mut cov = DMatrix::<f64>::zeros(2, 2);
        let mut scaled = Vec::with_capacity(n);
        for _ in 0..n {
            let (s2, b) = conditional_sample(&st, &ConjugatePrior::Noninformative, &mut rng).unwrap();
            // (β - β̂)/σ ~ N(0, T^{-1})
            let z = (&b - &st.beta_hat) / s2.sqrt();
            mean += &b;
            scaled.push(z);
        }
        mean /= n as f64;
        for z in &scaled {
            cov += z * z.transpose();
        }
        cov /= n as f64;
        let tinv = st.t.clone().try_inverse().unwrap();
        for i in 0..2 {
            let se = (tinv[(i, i)] * st.rss / ((st.n - st.d) as f64 - 2.0) / n as f64).sqrt();
            assert!((mean[i] - st.beta_hat[i]).abs() < 5.0 * se);
            for j in 0..2 {
                assert!((cov[(i, j)] - tinv[(i, j)]).abs() < 0.05 * tinv[(i, i)].max(tinv[(j, j)]));
            }
        }
    }
}
