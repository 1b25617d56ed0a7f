//! Level-`k` data augmentation: the complete-data path, the Euler
//! complete-data potential `Ω` (negative log posterior kernel) and its
//! gradient.
//!
//! For observations `X_0, …, X_N` spaced `dT` apart, level `k` inserts
//! `2^k - 1` latent points between neighbours: the complete path has
//! `M_k + 1 = N 2^k + 1` values at step `dt_k = dT / 2^k`, and value `i` is
//! observed iff `i` is a multiple of `2^k`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{SdeModel, Theta, THETA_DIM};
use crate::toeplitz::{ladder_loglik_from_residuals, CholeskyLadder, FgnCovariance};

/// Distance kept between the Hurst index and the ends of `(0, 1)`.
pub const HURST_MARGIN: f64 = 1e-4;

/// Step of the central difference used for `∂Ω/∂H`.
pub const HURST_FD_STEP: f64 = 1e-5;

/// Complete-data path at a given augmentation level.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteData {
    level: u32,
    dt_obs: f64,
    n_intervals: usize,
    values: Vec<f64>,
}

impl CompleteData {
    /// Level-0 data from observations spaced `dt_obs` apart.
    pub fn from_observations(obs: &[f64], dt_obs: f64) -> Result<Self> {
        if obs.len() < 2 {
            return Err(Error::Domain(format!("need at least two observations, got {}", obs.len())));
        }
        if !(dt_obs > 0.0 && dt_obs.is_finite()) {
            return Err(Error::Domain(format!("observation spacing {dt_obs} must be positive")));
        }
        if let Some(bad) = obs.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite observation {bad}")));
        }
        Ok(Self {
            level: 0,
            dt_obs,
            n_intervals: obs.len() - 1,
            values: obs.to_vec(),
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// `2^k`: complete-data steps per observation interval.
    pub fn stride(&self) -> usize {
        1 << self.level
    }

    /// `dt_k`.
    pub fn dt(&self) -> f64 {
        self.dt_obs / self.stride() as f64
    }

    pub fn dt_obs(&self) -> f64 {
        self.dt_obs
    }

    /// Number of observation intervals `N`.
    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    /// `M_k`, the number of complete-data increments.
    pub fn n_increments(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_observed(&self, index: usize) -> bool {
        index % self.stride() == 0
    }

    pub fn observed(&self) -> Vec<f64> {
        self.values.iter().step_by(self.stride()).copied().collect()
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| !self.is_observed(i)).collect()
    }

    pub fn n_missing(&self) -> usize {
        self.n_intervals * (self.stride() - 1)
    }

    pub fn missing_values(&self) -> Vec<f64> {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.is_observed(*i))
            .map(|(_, v)| *v)
            .collect()
    }

    /// Overwrites the latent values; observed entries are untouched.
    pub fn set_missing(&mut self, missing: &[f64]) -> Result<()> {
        if missing.len() != self.n_missing() {
            return Err(Error::Dimension { expected: self.n_missing(), got: missing.len() });
        }
        let stride = self.stride();
        fill_missing(&mut self.values, stride, missing);
        Ok(())
    }
}

pub(crate) fn fill_missing(values: &mut [f64], stride: usize, missing: &[f64]) {
    let mut it = missing.iter();
    for (i, v) in values.iter_mut().enumerate() {
        if i % stride != 0 {
            *v = *it.next().expect("missing vector too short");
        }
    }
}

/// Refines `data` to `to_level`, placing new latent points on the straight
/// line between their filled neighbours.
pub fn refine(data: &CompleteData, to_level: u32) -> Result<CompleteData> {
    if to_level < data.level {
        return Err(Error::Domain(format!(
            "cannot refine level {} down to level {to_level}",
            data.level
        )));
    }
    let ratio = 1usize << (to_level - data.level);
    let mut values = Vec::with_capacity(data.n_increments() * ratio + 1);
    for w in data.values.windows(2) {
        for s in 0..ratio {
            values.push(w[0] + (w[1] - w[0]) * s as f64 / ratio as f64);
        }
    }
    values.push(*data.values.last().expect("non-empty path"));
    Ok(CompleteData {
        level: to_level,
        dt_obs: data.dt_obs,
        n_intervals: data.n_intervals,
        values,
    })
}

/// Model parameters `(θ, σ, H)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamState {
    pub theta: Theta,
    pub sigma: f64,
    pub hurst: f64,
}

impl ParamState {
    pub fn new(theta: Theta, sigma: f64, hurst: f64) -> Self {
        Self { theta, sigma, hurst }
    }

    /// `σ > 0`, `H ∈ (ε, 1 - ε)` and the model restrictions.
    pub fn is_valid(&self, model: SdeModel) -> bool {
        self.sigma > 0.0
            && self.sigma.is_finite()
            && self.hurst > HURST_MARGIN
            && self.hurst < 1.0 - HURST_MARGIN
            && model.admissible(&self.theta, self.sigma)
    }
}

/// Gradient with respect to `(θ, σ, H)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ParamGradient {
    pub theta: Theta,
    pub sigma: f64,
    pub hurst: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    /// `π(γ, μ, σ, H) ∝ γ / σ`.
    FouNoninformative,
    /// `π(γ, β, σ, H) ∝ 1 / σ`.
    FcirNoninformative,
    /// `π ∝ 1` on the admissible set.
    Flat,
}

/// Prior on `(θ, σ, H)`, up to an additive log constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub log_offset: f64,
    /// Upper end of the support of `θ_0 = γ`.
    pub gamma_max: Option<f64>,
}

impl PriorSpec {
    pub fn new(kind: PriorKind) -> Self {
        Self { kind, log_offset: 0.0, gamma_max: None }
    }

    pub fn fou_noninformative() -> Self {
        Self::new(PriorKind::FouNoninformative)
    }

    pub fn fcir_noninformative() -> Self {
        Self::new(PriorKind::FcirNoninformative)
    }

    pub fn flat() -> Self {
        Self::new(PriorKind::Flat)
    }

    /// The noninformative prior used for `model`.
    pub fn default_for(model: SdeModel) -> Self {
        match model {
            SdeModel::Fou => Self::fou_noninformative(),
            SdeModel::Fcir => Self::fcir_noninformative(),
        }
    }

    pub fn with_log_offset(mut self, c: f64) -> Self {
        self.log_offset = c;
        self
    }

    /// Restricts the prior to `γ < gamma_max`.
    pub fn with_gamma_max(mut self, gamma_max: f64) -> Self {
        self.gamma_max = Some(gamma_max);
        self
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            PriorKind::FouNoninformative => "fou-noninformative",
            PriorKind::FcirNoninformative => "fcir-noninformative",
            PriorKind::Flat => "flat",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "fou-noninformative" => Ok(Self::fou_noninformative()),
            "fcir-noninformative" => Ok(Self::fcir_noninformative()),
            "flat" => Ok(Self::flat()),
            other => Err(Error::Config(format!("unknown prior '{other}'"))),
        }
    }

    /// `log π(state)`; `-inf` outside the prior support.
    pub fn log_density(&self, state: &ParamState) -> f64 {
        if !(state.sigma > 0.0) || self.gamma_max.is_some_and(|g| !(state.theta[0] < g)) {
            return f64::NEG_INFINITY;
        }
        let base = match self.kind {
            PriorKind::FouNoninformative => {
                if state.theta[0] > 0.0 {
                    state.theta[0].ln() - state.sigma.ln()
                } else {
                    f64::NEG_INFINITY
                }
            }
            PriorKind::FcirNoninformative => -state.sigma.ln(),
            PriorKind::Flat => 0.0,
        };
        base + self.log_offset
    }

    /// `∇ log π(state)`.
    pub fn gradient(&self, state: &ParamState) -> ParamGradient {
        let mut g = ParamGradient::default();
        match self.kind {
            PriorKind::FouNoninformative => {
                g.theta[0] = 1.0 / state.theta[0];
                g.sigma = -1.0 / state.sigma;
            }
            PriorKind::FcirNoninformative => g.sigma = -1.0 / state.sigma,
            PriorKind::Flat => {}
        }
        g
    }
}

/// `∂Ω` with respect to the latent values and the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialGradient {
    /// One entry per latent value, in path order.
    pub x_miss: Vec<f64>,
    pub theta: Theta,
    pub sigma: f64,
    pub hurst: f64,
}

/// Noise increments `dG_n = (X_{n+1} - X_n - μ(X_n, θ) dt) / σ`.
pub fn increments_of(model: SdeModel, values: &[f64], theta: &Theta, sigma: f64, dt: f64) -> Result<Vec<f64>> {
    if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !model.in_domain(**v)) {
        return Err(Error::Domain(format!("value {v} at index {i} outside the {} domain", model.name())));
    }
    Ok(values
        .windows(2)
        .map(|w| (w[1] - w[0] - model.drift(w[0], theta) * dt) / sigma)
        .collect())
}

/// Noise increments of the complete data under `state`.
pub fn noise_increments(data: &CompleteData, model: SdeModel, state: &ParamState) -> Result<Vec<f64>> {
    increments_of(model, data.values(), &state.theta, state.sigma, data.dt())
}

const LADDER_CACHE: usize = 4;

/// Evaluates `Ω` and `∇Ω` for one complete-data layout, caching the most
/// recent Durbin-Levinson ladders by Hurst index.
///
/// The path itself is passed on every call so samplers can move the
/// latent values without rebuilding the evaluator. Not shared between
/// threads; each chain owns one.
#[derive(Debug, Clone)]
pub struct PotentialEvaluator {
    model: SdeModel,
    prior: PriorSpec,
    dt: f64,
    stride: usize,
    n_increments: usize,
    ladders: Vec<(u64, Arc<CholeskyLadder>)>,
}

impl PotentialEvaluator {
    pub fn new(data: &CompleteData, model: SdeModel, prior: PriorSpec) -> Self {
        Self {
            model,
            prior,
            dt: data.dt(),
            stride: data.stride(),
            n_increments: data.n_increments(),
            ladders: Vec::with_capacity(LADDER_CACHE),
        }
    }

    pub fn model(&self) -> SdeModel {
        self.model
    }

    pub fn prior(&self) -> PriorSpec {
        self.prior
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Durbin-Levinson ladder of the fGN covariance at `hurst` for this
    /// layout.
    pub fn ladder(&mut self, hurst: f64) -> Result<Arc<CholeskyLadder>> {
        let key = hurst.to_bits();
        if let Some((_, l)) = self.ladders.iter().find(|(k, _)| *k == key) {
            return Ok(Arc::clone(l));
        }
        let cov = FgnCovariance::new(hurst, self.dt, self.n_increments)?;
        let ladder = Arc::new(CholeskyLadder::from_autocovariance(cov.gamma())?);
        if self.ladders.len() == LADDER_CACHE {
            self.ladders.remove(0);
        }
        self.ladders.push((key, Arc::clone(&ladder)));
        Ok(ladder)
    }

    fn check(&self, values: &[f64], state: &ParamState) -> Option<f64> {
        if values.len() != self.n_increments + 1 || !state.is_valid(self.model) {
            return None;
        }
        let log_prior = self.prior.log_density(state);
        log_prior.is_finite().then_some(log_prior)
    }

    /// `Ω(X, θ, σ, H)`, or `+inf` outside the support.
    pub fn potential(&mut self, values: &[f64], state: &ParamState) -> f64 {
        let Some(log_prior) = self.check(values, state) else {
            return f64::INFINITY;
        };
        let Ok(dg) = increments_of(self.model, values, &state.theta, state.sigma, self.dt) else {
            return f64::INFINITY;
        };
        let Ok(ladder) = self.ladder(state.hurst) else {
            return f64::INFINITY;
        };
        let r = ladder.residuals(&dg).expect("layout checked");
        let loglik = ladder_loglik_from_residuals(&r, ladder.variances());
        let omega = -loglik + self.n_increments as f64 * state.sigma.ln() - log_prior;
        if omega.is_nan() {
            f64::INFINITY
        } else {
            omega
        }
    }

    /// The `H`-dependent part of `Ω` for fixed increments.
    fn hurst_part(&mut self, dg: &[f64], state: &ParamState, hurst: f64) -> Result<f64> {
        let ladder = self.ladder(hurst)?;
        let r = ladder.residuals(dg)?;
        let log_prior = self.prior.log_density(&ParamState { hurst, ..*state });
        Ok(-ladder_loglik_from_residuals(&r, ladder.variances()) - log_prior)
    }

    /// `Ω` and `∇Ω`, or `None` outside the support.
    ///
    /// Derivatives in `X`, `θ` and `σ` are analytic through the ladder
    /// residuals; `∂Ω/∂H` is a central difference with step
    /// [`HURST_FD_STEP`], shortened near the ends of the admissible range.
    /// `with_hurst = false` skips the two extra ladder builds and leaves
    /// `hurst` at zero.
    pub fn gradient(&mut self, values: &[f64], state: &ParamState, with_hurst: bool) -> Option<(f64, PotentialGradient)> {
        let log_prior = self.check(values, state)?;
        let dt = self.dt;
        let sigma = state.sigma;
        let m = self.n_increments;
        let dg = increments_of(self.model, values, &state.theta, sigma, dt).ok()?;
        let ladder = self.ladder(state.hurst).ok()?;
        let r = ladder.residuals(&dg).expect("layout checked");
        let loglik = ladder_loglik_from_residuals(&r, ladder.variances());
        let omega = -loglik + m as f64 * sigma.ln() - log_prior;
        if !omega.is_finite() {
            return None;
        }
        // w = V^{-1} dG = B' diag(v)^{-1} r, so ∂(-log f)/∂dG_n = w_n
        let u: Vec<f64> = r.iter().zip(ladder.variances()).map(|(r, v)| r / v).collect();
        let w = ladder.transpose_apply(&u).expect("layout checked");

        let prior_grad = self.prior.gradient(state);
        let mut x_miss = Vec::with_capacity(m + 1 - m / self.stride - 1);
        for i in 1..m {
            if i % self.stride == 0 {
                continue;
            }
            // X_i enters dG_{i-1} with +1/σ and dG_i with -(1 + μ_x dt)/σ
            let mx = self.model.drift_dx(values[i], &state.theta);
            x_miss.push((w[i - 1] - w[i] * (1.0 + mx * dt)) / sigma);
        }
        let mut theta = [0.0; THETA_DIM];
        let mut wdg = 0.0;
        for (n, (&wn, &dgn)) in w.iter().zip(&dg).enumerate() {
            let dmu = self.model.drift_dtheta(values[n], &state.theta);
            for (t, d) in theta.iter_mut().zip(dmu) {
                *t += wn * d;
            }
            wdg += wn * dgn;
        }
        for (t, pg) in theta.iter_mut().zip(prior_grad.theta) {
            *t = -*t * dt / sigma - pg;
        }
        let sigma_grad = -wdg / sigma + m as f64 / sigma - prior_grad.sigma;

        let hurst = if with_hurst {
            let h = state.hurst;
            let up = HURST_FD_STEP.min(1.0 - HURST_MARGIN - h);
            let down = HURST_FD_STEP.min(h - HURST_MARGIN);
            let fu = self.hurst_part(&dg, state, h + up).ok()?;
            let fd = self.hurst_part(&dg, state, h - down).ok()?;
            (fu - fd) / (up + down)
        } else {
            0.0
        };
        Some((
            omega,
            PotentialGradient { x_miss, theta, sigma: sigma_grad, hurst },
        ))
    }
}

/// `Ω(X_(k), θ, σ, H) = -log f(dG | H) + M_k log σ - log π(θ, σ, H)`,
/// including the `2π` constant; `+inf` outside the support.
pub fn potential(data: &CompleteData, model: SdeModel, state: &ParamState, prior: &PriorSpec) -> f64 {
    PotentialEvaluator::new(data, model, *prior).potential(data.values(), state)
}

/// `∇Ω` at the current complete data; `None` where `Ω = +inf`.
pub fn grad_potential(
    data: &CompleteData,
    model: SdeModel,
    state: &ParamState,
    prior: &PriorSpec,
) -> Option<PotentialGradient> {
    PotentialEvaluator::new(data, model, *prior)
        .gradient(data.values(), state, true)
        .map(|(_, g)| g)
}
