use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::diagnostics::{chain_diagnostics, ChainDiagnostics};
use super::{hmc_step, DualAveraging, HmcConfig, PhasePoint, Target};
use crate::augment::{CompleteData, ParamState, PotentialEvaluator, PriorSpec, HURST_MARGIN};
use crate::error::{Error, Result};
use crate::models::{SdeModel, THETA_DIM};

/// Number of unconstrained parameter coordinates: `(log γ, θ_1, log σ, u_H)`.
pub const PARAM_DIM: usize = THETA_DIM + 2;

const H_SPAN: f64 = 1.0 - 2.0 * HURST_MARGIN;

fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Maps `(γ, θ_1, σ, H)` to `(log γ, θ_1, log σ, logit((H - ε)/(1 - 2ε)))`.
pub fn to_unconstrained(state: &ParamState) -> [f64; PARAM_DIM] {
    let s = (state.hurst - HURST_MARGIN) / H_SPAN;
    [state.theta[0].ln(), state.theta[1], state.sigma.ln(), (s / (1.0 - s)).ln()]
}

pub fn from_unconstrained(u: &[f64]) -> ParamState {
    transform(u).state
}

struct Transformed {
    state: ParamState,
    log_jac: f64,
    /// d(natural)/du per coordinate
    dnat: [f64; PARAM_DIM],
    /// d(log_jac)/du per coordinate
    dlog_jac: [f64; PARAM_DIM],
}

fn transform(u: &[f64]) -> Transformed {
    let gamma = u[0].exp();
    let sigma = u[2].exp();
    let s = logistic(u[3]);
    let dh = H_SPAN * s * (1.0 - s);
    Transformed {
        state: ParamState::new([gamma, u[1]], sigma, HURST_MARGIN + H_SPAN * s),
        log_jac: u[0] + u[2] + dh.ln(),
        dnat: [gamma, 1.0, sigma, dh],
        dlog_jac: [1.0, 0.0, 1.0, 1.0 - 2.0 * s],
    }
}

/// Which blocks a sampler moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinateSelector {
    pub x_miss: bool,
    pub theta: bool,
    pub sigma: bool,
    pub hurst: bool,
}

impl CoordinateSelector {
    pub fn all() -> Self {
        Self { x_miss: true, theta: true, sigma: true, hurst: true }
    }

    pub fn x_miss_only() -> Self {
        Self { x_miss: true, theta: false, sigma: false, hurst: false }
    }

    pub fn params_only() -> Self {
        Self { x_miss: false, theta: true, sigma: true, hurst: true }
    }

    fn param_indices(&self) -> Vec<usize> {
        let mut idx = Vec::new();
        if self.theta {
            idx.extend(0..THETA_DIM);
        }
        if self.sigma {
            idx.push(THETA_DIM);
        }
        if self.hurst {
            idx.push(THETA_DIM + 1);
        }
        idx
    }
}

/// The augmented posterior as an HMC [`Target`] on transformed coordinates.
///
/// Positions hold the selected latent values followed by the selected
/// unconstrained parameters; unselected blocks stay at their stored values.
/// The potential is `Ω(X, θ, σ, H) - log|J|`, so `exp(-U)` is the posterior
/// density in the transformed coordinates.
#[derive(Debug, Clone)]
pub struct AugmentedTarget {
    eval: PotentialEvaluator,
    values: Vec<f64>,
    miss: Vec<usize>,
    selector: CoordinateSelector,
    param_idx: Vec<usize>,
    params: [f64; PARAM_DIM],
}

impl AugmentedTarget {
    pub fn new(
        data: &CompleteData,
        model: SdeModel,
        prior: PriorSpec,
        selector: CoordinateSelector,
        state: &ParamState,
    ) -> Self {
        Self {
            eval: PotentialEvaluator::new(data, model, prior),
            values: data.values().to_vec(),
            miss: data.missing_indices(),
            selector,
            param_idx: selector.param_indices(),
            params: to_unconstrained(state),
        }
    }

    pub fn n_missing(&self) -> usize {
        self.miss.len()
    }

    fn n_x(&self) -> usize {
        if self.selector.x_miss {
            self.miss.len()
        } else {
            0
        }
    }

    /// Position vector for the stored state.
    pub fn encode(&self) -> Vec<f64> {
        let mut q = Vec::with_capacity(self.dim());
        if self.selector.x_miss {
            q.extend(self.miss.iter().map(|&i| self.values[i]));
        }
        q.extend(self.param_idx.iter().map(|&i| self.params[i]));
        q
    }

    /// Stores the position `q`.
    pub fn load(&mut self, q: &[f64]) {
        let nx = self.n_x();
        for (&i, &v) in self.miss.iter().zip(&q[..nx]) {
            self.values[i] = v;
        }
        for (&i, &v) in self.param_idx.iter().zip(&q[nx..]) {
            self.params[i] = v;
        }
    }

    pub fn state(&self) -> ParamState {
        from_unconstrained(&self.params)
    }

    pub fn params(&self) -> [f64; PARAM_DIM] {
        self.params
    }

    pub fn set_params(&mut self, u: [f64; PARAM_DIM]) {
        self.params = u;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing(&self) -> Vec<f64> {
        self.miss.iter().map(|&i| self.values[i]).collect()
    }

    /// Transformed potential at the stored path and parameters `u`.
    pub fn param_potential(&mut self, u: &[f64; PARAM_DIM]) -> f64 {
        let t = transform(u);
        let omega = self.eval.potential(&self.values, &t.state);
        let v = omega - t.log_jac;
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

impl Target for AugmentedTarget {
    fn dim(&self) -> usize {
        self.n_x() + self.param_idx.len()
    }

    fn potential(&mut self, q: &[f64]) -> f64 {
        self.load(q);
        let u = self.params;
        self.param_potential(&u)
    }

    fn potential_and_gradient(&mut self, q: &[f64], grad: &mut [f64]) -> f64 {
        self.load(q);
        let t = transform(&self.params);
        let Some((omega, g)) = self.eval.gradient(&self.values, &t.state, self.selector.hurst) else {
            return f64::INFINITY;
        };
        let nx = self.n_x();
        if self.selector.x_miss {
            grad[..nx].copy_from_slice(&g.x_miss);
        }
        let natural = [g.theta[0], g.theta[1], g.sigma, g.hurst];
        for (slot, &i) in grad[nx..].iter_mut().zip(&self.param_idx) {
            *slot = natural[i] * t.dnat[i] - t.dlog_jac[i];
        }
        let v = omega - t.log_jac;
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Run-level sampler settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    /// Initial (or, without adaptation, fixed) leapfrog step.
    pub step_eps: f64,
    pub n_leapfrog: usize,
    /// Fixed mass vector on the sampled coordinates; identity when absent.
    pub mass: Option<Vec<f64>>,
    pub eps_jitter: f64,
    /// Adaptation iterations run before recording.
    pub warmup: usize,
    pub adapt_step: bool,
    /// Replace the mass by the inverse pilot variance three quarters of the
    /// way through warm-up.
    pub adapt_mass: bool,
    pub target_accept: f64,
    pub thin: usize,
    /// Latent-path snapshot cadence in iterations; `0` disables snapshots.
    pub snapshot_every: usize,
    /// Random-walk scales for `(log γ, θ_1, log σ, u_H)` in the Gibbs
    /// sampler, tuned towards 0.44 acceptance during warm-up.
    pub gibbs_scales: [f64; PARAM_DIM],
    pub min_accept: f64,
    pub accept_window: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            step_eps: 0.05,
            n_leapfrog: 10,
            mass: None,
            eps_jitter: 0.1,
            warmup: 1000,
            adapt_step: true,
            adapt_mass: true,
            target_accept: 0.7,
            thin: 1,
            snapshot_every: 100,
            gibbs_scales: [0.2; PARAM_DIM],
            min_accept: 0.01,
            accept_window: 500,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        HmcConfig {
            mass: self.mass.clone().unwrap_or_else(|| vec![1.0]),
            step_eps: self.step_eps,
            n_leapfrog: self.n_leapfrog,
            eps_jitter: self.eps_jitter,
        }
        .validate()?;
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Config(format!("target acceptance {} outside (0, 1)", self.target_accept)));
        }
        if self.thin == 0 {
            return Err(Error::Config("thinning interval must be at least 1".into()));
        }
        if self.gibbs_scales.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("Gibbs proposal scales must be positive".into()));
        }
        Ok(())
    }

    fn hmc(&self, dim: usize) -> Result<HmcConfig> {
        let mass = match &self.mass {
            Some(m) if m.len() != dim => return Err(Error::Dimension { expected: dim, got: m.len() }),
            Some(m) => m.clone(),
            None => vec![1.0; dim],
        };
        let cfg = HmcConfig { mass, step_eps: self.step_eps, n_leapfrog: self.n_leapfrog, eps_jitter: self.eps_jitter };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Step-size and mass adaptation during warm-up.
struct Adapter {
    warmup: usize,
    adapt_step: bool,
    adapt_mass: bool,
    target: f64,
    da: DualAveraging,
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Adapter {
    fn new(config: &ChainConfig, hmc: &HmcConfig) -> Self {
        let d = hmc.mass.len();
        Self {
            warmup: config.warmup,
            adapt_step: config.adapt_step,
            adapt_mass: config.adapt_mass && config.mass.is_none(),
            target: config.target_accept,
            da: DualAveraging::new(hmc.step_eps, config.target_accept),
            n: 0,
            mean: vec![0.0; d],
            m2: vec![0.0; d],
        }
    }

    fn after_step(&mut self, iter: usize, q: &[f64], accept_prob: f64, hmc: &mut HmcConfig) {
        if iter >= self.warmup {
            return;
        }
        if self.adapt_step {
            self.da.update(accept_prob);
            hmc.step_eps = self.da.current();
        }
        let (start, stop) = (self.warmup / 4, 3 * self.warmup / 4);
        if self.adapt_mass && (start..stop).contains(&iter) {
            self.n += 1;
            for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(q) {
                let d = x - *m;
                *m += d / self.n as f64;
                *s += d * (x - *m);
            }
            if iter + 1 == stop && self.n >= 10 {
                let n = self.n as f64;
                hmc.mass = self
                    .m2
                    .iter()
                    .map(|s| {
                        let var = s / (n - 1.0);
                        1.0 / (n / (n + 5.0) * var + 1e-3 * 5.0 / (n + 5.0))
                    })
                    .collect();
                self.da = DualAveraging::new(hmc.step_eps, self.target);
            }
        }
        if iter + 1 == self.warmup && self.adapt_step {
            hmc.step_eps = self.da.final_eps();
        }
    }
}

/// Rolling acceptance check that aborts badly tuned runs.
struct AcceptanceGuard {
    window: usize,
    min: f64,
    count: usize,
    sum: f64,
}

impl AcceptanceGuard {
    fn new(config: &ChainConfig) -> Self {
        Self { window: config.accept_window, min: config.min_accept, count: 0, sum: 0.0 }
    }

    fn push(&mut self, accepted: f64, iteration: usize) -> Result<()> {
        if self.window == 0 {
            return Ok(());
        }
        self.count += 1;
        self.sum += accepted;
        if self.count == self.window {
            let rate = self.sum / self.window as f64;
            if rate < self.min {
                return Err(Error::LowAcceptance { rate, threshold: self.min, iteration });
            }
            self.count = 0;
            self.sum = 0.0;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XMissSnapshot {
    pub iteration: usize,
    pub values: Vec<f64>,
}

/// Recorded draws of one chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainOutput {
    pub model: SdeModel,
    pub draws: Vec<ParamState>,
    pub x_miss_snapshots: Vec<XMissSnapshot>,
    /// HMC acceptance rate, or the mean random-walk acceptance when no
    /// HMC block ran.
    pub acceptance_rate: f64,
    /// Per-coordinate random-walk acceptance of the Gibbs sampler.
    pub param_acceptance: Option<[f64; PARAM_DIM]>,
    pub step_eps: f64,
    pub n_leapfrog: usize,
    pub mass: Vec<f64>,
}

impl ChainOutput {
    fn empty(model: SdeModel, config: &ChainConfig) -> Self {
        Self {
            model,
            draws: Vec::new(),
            x_miss_snapshots: Vec::new(),
            acceptance_rate: 0.0,
            param_acceptance: None,
            step_eps: config.step_eps,
            n_leapfrog: config.n_leapfrog,
            mass: Vec::new(),
        }
    }

    pub fn names(&self) -> [&'static str; PARAM_DIM] {
        let [a, b] = self.model.theta_names();
        [a, b, "sigma", "hurst"]
    }

    /// Trace of coordinate `i` in `(θ_0, θ_1, σ, H)` order.
    pub fn trace(&self, i: usize) -> Vec<f64> {
        self.draws
            .iter()
            .map(|s| match i {
                0 | 1 => s.theta[i],
                2 => s.sigma,
                _ => s.hurst,
            })
            .collect()
    }

    pub fn traces(&self) -> Vec<Vec<f64>> {
        (0..PARAM_DIM).map(|i| self.trace(i)).collect()
    }

    pub fn diagnostics(&self, max_lag: usize) -> ChainDiagnostics {
        chain_diagnostics(&self.names(), &self.traces(), max_lag)
    }
}

fn initial_point(target: &mut AugmentedTarget) -> Result<PhasePoint> {
    let q = target.encode();
    PhasePoint::new(target, q).ok_or_else(|| Error::Domain("initial state has infinite potential".into()))
}

/// Full HMC: every iteration moves the latent path and all parameters
/// jointly. Warm-up iterations adapt the step and mass and are discarded.
pub fn run_hmc_full<R: Rng + ?Sized>(
    data: &CompleteData,
    model: SdeModel,
    prior: &PriorSpec,
    init: &ParamState,
    config: &ChainConfig,
    n_iter: usize,
    rng: &mut R,
) -> Result<ChainOutput> {
    config.validate()?;
    if n_iter == 0 {
        return Ok(ChainOutput::empty(model, config));
    }
    let mut target = AugmentedTarget::new(data, model, *prior, CoordinateSelector::all(), init);
    let mut cur = initial_point(&mut target)?;
    let mut hmc = config.hmc(target.dim())?;
    let mut adapter = Adapter::new(config, &hmc);
    let mut guard = AcceptanceGuard::new(config);
    let mut out = ChainOutput::empty(model, config);
    let mut accepted = 0usize;
    let nx = target.n_missing();
    for iter in 0..config.warmup + n_iter {
        let (next, info) = hmc_step(&mut target, &cur, &hmc, rng);
        cur = next;
        adapter.after_step(iter, &cur.q, info.accept_prob, &mut hmc);
        let Some(i) = iter.checked_sub(config.warmup) else { continue };
        accepted += info.accepted as usize;
        guard.push(info.accepted as u8 as f64, i)?;
        if i % config.thin == 0 {
            out.draws.push(from_unconstrained(&cur.q[nx..]));
        }
        if config.snapshot_every > 0 && nx > 0 && i % config.snapshot_every == 0 {
            out.x_miss_snapshots.push(XMissSnapshot { iteration: i, values: cur.q[..nx].to_vec() });
        }
    }
    out.acceptance_rate = accepted as f64 / n_iter as f64;
    out.step_eps = hmc.step_eps;
    out.mass = hmc.mass;
    Ok(out)
}

/// Metropolis-within-Gibbs: one random-walk update per unconstrained
/// parameter, then one HMC update of the latent path with parameters held
/// fixed. With no latent values only the random-walk updates run.
pub fn run_gibbs<R: Rng + ?Sized>(
    data: &CompleteData,
    model: SdeModel,
    prior: &PriorSpec,
    init: &ParamState,
    config: &ChainConfig,
    n_iter: usize,
    rng: &mut R,
) -> Result<ChainOutput> {
    config.validate()?;
    if n_iter == 0 {
        return Ok(ChainOutput::empty(model, config));
    }
    let mut target = AugmentedTarget::new(data, model, *prior, CoordinateSelector::x_miss_only(), init);
    let nx = target.n_missing();
    let mut u = target.params();
    let mut u_pot = target.param_potential(&u);
    if !u_pot.is_finite() {
        return Err(Error::Domain("initial state has infinite potential".into()));
    }
    let mut cur = if nx > 0 { Some(initial_point(&mut target)?) } else { None };
    let mut hmc = config.hmc(nx.max(1))?;
    let mut adapter = Adapter::new(config, &hmc);
    let mut guard = AcceptanceGuard::new(config);
    let mut log_scale = config.gibbs_scales.map(f64::ln);
    let mut param_acc = [0usize; PARAM_DIM];
    let mut hmc_acc = 0usize;
    let mut out = ChainOutput::empty(model, config);
    for iter in 0..config.warmup + n_iter {
        let warm = iter < config.warmup;
        let mut n_acc = 0usize;
        for j in 0..PARAM_DIM {
            let mut prop = u;
            prop[j] += log_scale[j].exp() * rng.sample::<f64, _>(StandardNormal);
            let pot = target.param_potential(&prop);
            let log_ratio = u_pot - pot;
            let ok = pot.is_finite() && rng.random::<f64>().ln() < log_ratio;
            if ok {
                u = prop;
                u_pot = pot;
                n_acc += 1;
            }
            if warm {
                let a = if pot.is_finite() { log_ratio.min(0.0).exp() } else { 0.0 };
                log_scale[j] += (a - 0.44) / ((iter + 1) as f64).powf(0.6);
            } else {
                param_acc[j] += ok as usize;
            }
        }
        target.set_params(u);
        let mut hmc_ok = None;
        if let Some(point) = cur.as_mut() {
            // parameters moved: refresh the cached potential and gradient
            *point = PhasePoint::new(&mut target, point.q.clone())
                .ok_or_else(|| Error::Domain("latent path left the support".into()))?;
            let (next, info) = hmc_step(&mut target, point, &hmc, rng);
            *point = next;
            target.load(&point.q);
            u_pot = point.potential;
            adapter.after_step(iter, &point.q, info.accept_prob, &mut hmc);
            hmc_ok = Some(info.accepted);
        }
        let Some(i) = iter.checked_sub(config.warmup) else { continue };
        let rate = match hmc_ok {
            Some(a) => {
                hmc_acc += a as usize;
                a as u8 as f64
            }
            None => n_acc as f64 / PARAM_DIM as f64,
        };
        guard.push(rate, i)?;
        if i % config.thin == 0 {
            out.draws.push(from_unconstrained(&u));
        }
        if config.snapshot_every > 0 && nx > 0 && i % config.snapshot_every == 0 {
            out.x_miss_snapshots.push(XMissSnapshot { iteration: i, values: target.missing() });
        }
    }
    let param_rates = param_acc.map(|a| a as f64 / n_iter as f64);
    out.acceptance_rate = if nx > 0 {
        hmc_acc as f64 / n_iter as f64
    } else {
        param_rates.iter().sum::<f64>() / PARAM_DIM as f64
    };
    out.param_acceptance = Some(param_rates);
    log::debug!("adapted Gibbs scales {:?}", log_scale.map(f64::exp));
    out.step_eps = hmc.step_eps;
    out.mass = if nx > 0 { hmc.mass } else { Vec::new() };
    Ok(out)
}
