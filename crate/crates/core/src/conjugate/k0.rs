//! Level-0 posteriors for models whose Euler increments are linear in the
//! drift parameters: `y_i = X_{i+1} - X_i = dT · x_i'β + σ ε_i`, with `ε` the
//! fGN of spacing `dT`. `H` is drawn from its grid marginal, `(σ², β)` from
//! the conjugate conditionals, and draws violating the model restrictions
//! are rejected.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;

use super::grid::{sample_index, Marginal};
use super::{conditional_sample, marginal_theta_logdensity, regression_stats, ConjugatePrior, RegressionStats};
use crate::augment::{ParamState, HURST_MARGIN};
use crate::error::{Error, Result};
use crate::models::SdeModel;
use crate::toeplitz::fgn_autocovariance;

#[derive(Debug, Clone, PartialEq)]
pub struct K0Options {
    /// Initial `H` nodes.
    pub hurst_axis: Vec<f64>,
    /// Extra nodes placed where the log marginal is within
    /// `refine_window` of its maximum; `0` disables refinement.
    pub refine_points: usize,
    pub refine_window: f64,
    pub enforce_restrictions: bool,
    pub min_accept: f64,
}

impl Default for K0Options {
    fn default() -> Self {
        Self {
            hurst_axis: super::linear_axis(0.01, 0.99, 128),
            refine_points: 128,
            refine_window: 30.0,
            enforce_restrictions: true,
            min_accept: 0.01,
        }
    }
}

/// Draws from a level-0 regression posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct K0Posterior {
    /// Grid marginal of `H`; draws of `H` are its nodes.
    pub hurst: Marginal,
    pub draws: Vec<ParamState>,
    pub rejection_rate: f64,
}

impl K0Posterior {
    pub fn hurst_draws(&self) -> Vec<f64> {
        self.draws.iter().map(|s| s.hurst).collect()
    }
}

struct HurstGrid {
    axis: Vec<f64>,
    log_m: Vec<f64>,
    stats: Vec<RegressionStats>,
}

fn hurst_grid(y: &[f64], design: &DMatrix<f64>, dt: f64, prior: &ConjugatePrior, opts: &K0Options) -> Result<HurstGrid> {
    let n = y.len();
    let node = |h: f64| -> Result<(RegressionStats, f64)> {
        let st = regression_stats(y, design, &fgn_autocovariance(h, dt, n - 1)?)?;
        let lm = marginal_theta_logdensity(&st, prior)?;
        Ok((st, lm))
    };
    let eval = |axis: &[f64]| -> Result<Vec<(RegressionStats, f64)>> { axis.par_iter().map(|&h| node(h)).collect() };
    let mut axis = opts.hurst_axis.clone();
    if axis.len() < 2 || axis.iter().any(|h| !(*h > HURST_MARGIN && *h < 1.0 - HURST_MARGIN)) {
        return Err(Error::Config("H grid needs at least two nodes inside (0, 1)".into()));
    }
    let mut nodes = eval(&axis)?;
    if opts.refine_points > 0 {
        let top = nodes.iter().map(|n| n.1).fold(f64::NEG_INFINITY, f64::max);
        let inside: Vec<usize> = (0..axis.len()).filter(|&i| nodes[i].1 > top - opts.refine_window).collect();
        let lo = axis[inside[0].saturating_sub(1)];
        let hi = axis[(inside[inside.len() - 1] + 1).min(axis.len() - 1)];
        let extra: Vec<f64> = super::linear_axis(lo, hi, opts.refine_points + 2)[1..=opts.refine_points]
            .iter()
            .copied()
            .filter(|h| !axis.iter().any(|a| (a - h).abs() < 1e-12))
            .collect();
        let more = eval(&extra)?;
        let mut merged: Vec<(f64, (RegressionStats, f64))> = axis.into_iter().zip(nodes).chain(extra.into_iter().zip(more)).collect();
        merged.sort_by(|a, b| a.0.total_cmp(&b.0));
        axis = merged.iter().map(|m| m.0).collect();
        nodes = merged.into_iter().map(|m| m.1).collect();
    }
    let (stats, log_m) = nodes.into_iter().unzip();
    Ok(HurstGrid { axis, log_m, stats })
}

/// Posterior draws for `y = dT · Xβ + σε` with `H` on a grid.
///
/// `restriction(β, σ²)` decides admissibility; it is ignored when
/// `opts.enforce_restrictions` is false. Returned states carry `β` in
/// `theta` and `σ = sqrt(σ²)`.
pub fn regression_k0_posterior<R, F>(
    y: &[f64],
    design: &DMatrix<f64>,
    dt: f64,
    prior: &ConjugatePrior,
    restriction: F,
    n_draws: usize,
    opts: &K0Options,
    rng: &mut R,
) -> Result<K0Posterior>
where
    R: Rng + ?Sized,
    F: Fn(&DVector<f64>, f64) -> bool,
{
    if design.ncols() != 2 {
        return Err(Error::Dimension { expected: 2, got: design.ncols() });
    }
    let grid = hurst_grid(y, design, dt, prior, opts)?;
    let hurst = Marginal::from_log(grid.axis.clone(), &grid.log_m)?;
    let probs = hurst.node_probabilities();
    let mut draws = Vec::with_capacity(n_draws);
    let mut attempts = 0usize;
    while draws.len() < n_draws {
        attempts += 1;
        let j = sample_index(&probs, rng);
        let (sigma2, beta) = conditional_sample(&grid.stats[j], prior, rng)?;
        if !opts.enforce_restrictions || restriction(&beta, sigma2) {
            draws.push(ParamState::new([beta[0], beta[1]], sigma2.sqrt(), grid.axis[j]));
        }
        if attempts >= 1000 && (draws.len() as f64) < opts.min_accept * attempts as f64 {
            return Err(Error::LowAcceptance {
                rate: draws.len() as f64 / attempts as f64,
                threshold: opts.min_accept,
                iteration: attempts,
            });
        }
    }
    let rejection_rate = if attempts == 0 { 0.0 } else { 1.0 - n_draws as f64 / attempts as f64 };
    Ok(K0Posterior { hurst, draws, rejection_rate })
}

/// fCIR at level 0 on the unit-diffusion scale `Y = 2√X`:
/// `y_i = -½ γ Y_i dT + β dT / Y_i + σ ε_i`, restricted to `γ > 0` and
/// `β + ½σ² > 0`. Draws carry `theta = (γ, β)`.
pub fn fcir_k0_posterior<R: Rng + ?Sized>(
    x_obs: &[f64],
    dt: f64,
    prior: &ConjugatePrior,
    n_draws: usize,
    opts: &K0Options,
    rng: &mut R,
) -> Result<K0Posterior> {
    if let Some(bad) = x_obs.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::Domain(format!("fCIR observations must be positive, got {bad}")));
    }
    let y: Vec<f64> = x_obs.iter().map(|x| SdeModel::Fcir.to_unit_diffusion(*x)).collect();
    let (resp, design) = increments_and_design(SdeModel::Fcir, &y, dt)?;
    regression_k0_posterior(&resp, &design, dt, prior, |b, s2| b[0] > 0.0 && b[1] + 0.5 * s2 > 0.0, n_draws, opts, rng)
}

/// fOU at level 0 with `β = (γ, η)`, restricted to `γ > 0`. Draws carry
/// `theta = (γ, μ = η/γ)`.
pub fn fou_k0_posterior<R: Rng + ?Sized>(
    x_obs: &[f64],
    dt: f64,
    prior: &ConjugatePrior,
    n_draws: usize,
    opts: &K0Options,
    rng: &mut R,
) -> Result<K0Posterior> {
    let (resp, design) = increments_and_design(SdeModel::Fou, x_obs, dt)?;
    let mut post = regression_k0_posterior(&resp, &design, dt, prior, |b, _| b[0] > 0.0, n_draws, opts, rng)?;
    for s in &mut post.draws {
        s.theta[1] /= s.theta[0];
    }
    Ok(post)
}

/// Increments and the linear design on the unit-diffusion scale.
fn increments_and_design(model: SdeModel, y: &[f64], dt: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    if y.len() < 4 {
        return Err(Error::Domain(format!("need at least four observations, got {}", y.len())));
    }
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("observation spacing {dt} must be positive")));
    }
    let n = y.len() - 1;
    let resp: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let design = DMatrix::from_fn(n, 2, |i, j| match (model, j) {
        (SdeModel::Fou, 0) => -y[i] * dt,
        (SdeModel::Fou, _) => dt,
        (SdeModel::Fcir, 0) => -0.5 * y[i] * dt,
        (SdeModel::Fcir, _) => dt / y[i],
    });
    Ok((resp, design))
}

/// Quick parameter estimate for initializing samplers: the posterior mode
/// of `H` on a coarse grid, the generalized least-squares `β̂` and
/// `σ² = S / (n - d)` there, projected into the admissible set with
/// `γ` inside `[0.05, 1] / dT`.
/// `obs` is on the unit-diffusion scale.
pub fn k0_point_estimate(model: SdeModel, obs: &[f64], dt: f64) -> Result<ParamState> {
    let (resp, design) = increments_and_design(model, obs, dt)?;
    let opts = K0Options { hurst_axis: super::linear_axis(0.02, 0.98, 49), refine_points: 0, ..Default::default() };
    let grid = hurst_grid(&resp, &design, dt, &ConjugatePrior::Noninformative, &opts)?;
    let best = (0..grid.axis.len()).fold(0, |b, i| if grid.log_m[i] > grid.log_m[b] { i } else { b });
    let st = &grid.stats[best];
    let sigma2 = st.rss / (st.n - st.d) as f64;
    let sigma = sigma2.sqrt();
    let gamma = st.beta_hat[0].clamp(0.05 / dt, 0.5 * super::fou_gamma_bound(dt));
    let theta = match model {
        SdeModel::Fou => [gamma, st.beta_hat[1] / gamma],
        SdeModel::Fcir => [gamma, st.beta_hat[1].max(-0.4 * sigma2)],
    };
    let state = ParamState::new(theta, sigma, grid.axis[best]);
    if !state.is_valid(model) {
        return Err(Error::Domain(format!("point estimate {state:?} is not admissible")));
    }
    Ok(state)
}
