//! Hybrid Monte Carlo and Metropolis-within-Gibbs samplers for the
//! augmented posterior, and chain diagnostics.

mod chains;
mod diagnostics;

pub use chains::{
    from_unconstrained, run_gibbs, run_hmc_full, to_unconstrained, AugmentedTarget, ChainConfig, ChainOutput,
    CoordinateSelector, XMissSnapshot, PARAM_DIM,
};
pub use diagnostics::{
    autocorrelation, chain_diagnostics, effective_sample_size, integrated_autocorrelation_time, quantile, ChainDiagnostics,
    CoordinateDiagnostics,
};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A differentiable potential `U(q)` (negative log density up to a
/// constant). `+inf` marks forbidden states.
pub trait Target {
    fn dim(&self) -> usize;

    fn potential(&mut self, q: &[f64]) -> f64;

    /// Returns `U(q)` and writes `∇U(q)` into `grad`. When the potential is
    /// infinite the contents of `grad` are unspecified.
    fn potential_and_gradient(&mut self, q: &[f64], grad: &mut [f64]) -> f64;
}

/// [`Target`] from a closure computing the potential and its gradient.
pub struct FnTarget<F> {
    dim: usize,
    f: F,
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> FnTarget<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: FnMut(&[f64], &mut [f64]) -> f64> Target for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn potential(&mut self, q: &[f64]) -> f64 {
        let mut g = vec![0.0; self.dim];
        (self.f)(q, &mut g)
    }

    fn potential_and_gradient(&mut self, q: &[f64], grad: &mut [f64]) -> f64 {
        (self.f)(q, grad)
    }
}

/// A position with its cached potential and gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub q: Vec<f64>,
    pub potential: f64,
    pub grad: Vec<f64>,
}

impl PhasePoint {
    /// `None` if the potential at `q` is not finite.
    pub fn new<T: Target + ?Sized>(target: &mut T, q: Vec<f64>) -> Option<Self> {
        let mut grad = vec![0.0; q.len()];
        let potential = target.potential_and_gradient(&q, &mut grad);
        (potential.is_finite() && grad.iter().all(|g| g.is_finite())).then_some(Self { q, potential, grad })
    }
}

/// `L` leapfrog steps from `(start, p0)`:
///
/// ```text
/// p½ = p - ε ∇U(q) / 2
/// q' = q + ε p½ / m
/// p' = p½ - ε ∇U(q') / 2
/// ```
///
/// Returns `None` as soon as the trajectory meets an infinite potential.
pub fn leapfrog<T: Target + ?Sized>(
    target: &mut T,
    start: &PhasePoint,
    p0: &[f64],
    mass: &[f64],
    eps: f64,
    n_steps: usize,
) -> Option<(PhasePoint, Vec<f64>)> {
    let mut q = start.q.clone();
    let mut p = p0.to_vec();
    let mut grad = start.grad.clone();
    let mut potential = start.potential;
    for _ in 0..n_steps {
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi -= 0.5 * eps * gi;
        }
        for ((qi, pi), mi) in q.iter_mut().zip(&p).zip(mass) {
            *qi += eps * pi / mi;
        }
        potential = target.potential_and_gradient(&q, &mut grad);
        if !potential.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return None;
        }
        for (pi, gi) in p.iter_mut().zip(&grad) {
            *pi -= 0.5 * eps * gi;
        }
    }
    Some((PhasePoint { q, potential, grad }, p))
}

/// Mass, step size and trajectory length of one HMC transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HmcConfig {
    pub mass: Vec<f64>,
    pub step_eps: f64,
    pub n_leapfrog: usize,
    /// Each transition draws its step uniformly from
    /// `step_eps · [1 - jitter, 1 + jitter]`.
    pub eps_jitter: f64,
}

impl HmcConfig {
    pub fn new(dim: usize, step_eps: f64, n_leapfrog: usize) -> Self {
        Self { mass: vec![1.0; dim], step_eps, n_leapfrog, eps_jitter: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(m) = self.mass.iter().find(|m| !(**m > 0.0 && m.is_finite())) {
            return Err(Error::Config(format!("mass entries must be positive, got {m}")));
        }
        if !(self.step_eps > 0.0 && self.step_eps.is_finite()) {
            return Err(Error::Config(format!("step size must be positive, got {}", self.step_eps)));
        }
        if self.n_leapfrog == 0 {
            return Err(Error::Config("leapfrog step count must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.eps_jitter) {
            return Err(Error::Config(format!("step jitter must lie in [0, 1), got {}", self.eps_jitter)));
        }
        Ok(())
    }
}

/// Outcome of one HMC transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub accepted: bool,
    pub accept_prob: f64,
    /// `H(q', p') - H(q, p)`; `+inf` for aborted trajectories.
    pub energy_error: f64,
}

fn kinetic(p: &[f64], mass: &[f64]) -> f64 {
    0.5 * p.iter().zip(mass).map(|(p, m)| p * p / m).sum::<f64>()
}

/// One HMC transition with momentum `p ~ N(0, diag(m))`.
pub fn hmc_step<T: Target + ?Sized, R: Rng + ?Sized>(
    target: &mut T,
    current: &PhasePoint,
    config: &HmcConfig,
    rng: &mut R,
) -> (PhasePoint, StepInfo) {
    let p0: Vec<f64> = config
        .mass
        .iter()
        .map(|m| m.sqrt() * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let eps = if config.eps_jitter > 0.0 {
        config.step_eps * (1.0 + config.eps_jitter * (2.0 * rng.random::<f64>() - 1.0))
    } else {
        config.step_eps
    };
    let h0 = current.potential + kinetic(&p0, &config.mass);
    let proposal = leapfrog(target, current, &p0, &config.mass, eps, config.n_leapfrog);
    let u: f64 = rng.random();
    match proposal {
        Some((next, p)) => {
            let energy_error = next.potential + kinetic(&p, &config.mass) - h0;
            let accept_prob = if energy_error.is_nan() { 0.0 } else { (-energy_error).exp().min(1.0) };
            let info = StepInfo { accepted: u < accept_prob, accept_prob, energy_error };
            if info.accepted {
                (next, info)
            } else {
                (current.clone(), info)
            }
        }
        None => (
            current.clone(),
            StepInfo { accepted: false, accept_prob: 0.0, energy_error: f64::INFINITY },
        ),
    }
}

/// Nesterov dual averaging of `log ε` towards a target acceptance rate.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    mu: f64,
    log_eps: f64,
    log_eps_bar: f64,
    h_bar: f64,
    t: f64,
}

impl DualAveraging {
    const GAMMA: f64 = 0.05;
    const T0: f64 = 10.0;
    const KAPPA: f64 = 0.75;

    pub fn new(eps0: f64, target: f64) -> Self {
        Self {
            target,
            mu: (10.0 * eps0).ln(),
            log_eps: eps0.ln(),
            log_eps_bar: eps0.ln(),
            h_bar: 0.0,
            t: 0.0,
        }
    }

    pub fn update(&mut self, accept_prob: f64) {
        self.t += 1.0;
        let w = 1.0 / (self.t + Self::T0);
        self.h_bar = (1.0 - w) * self.h_bar + w * (self.target - accept_prob);
        self.log_eps = self.mu - self.t.sqrt() / Self::GAMMA * self.h_bar;
        let eta = self.t.powf(-Self::KAPPA);
        self.log_eps_bar = eta * self.log_eps + (1.0 - eta) * self.log_eps_bar;
    }

    /// Step size to use on the next iteration.
    pub fn current(&self) -> f64 {
        self.log_eps.exp()
    }

    /// Averaged step size, used once adaptation ends.
    pub fn final_eps(&self) -> f64 {
        self.log_eps_bar.exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gaussian() -> FnTarget<impl FnMut(&[f64], &mut [f64]) -> f64> {
        FnTarget::new(1, |q: &[f64], g: &mut [f64]| {
            g[0] = q[0];
            0.5 * q[0] * q[0]
        })
    }

    #[test]
    fn leapfrog_hand_step() {
        let mut t = gaussian();
        let start = PhasePoint::new(&mut t, vec![1.0]).unwrap();
        let (end, p) = leapfrog(&mut t, &start, &[0.0], &[1.0], 0.1, 1).unwrap();
        assert!((end.q[0] - 0.995).abs() < 1e-15);
        assert!((p[0] + 0.09975).abs() < 1e-15);
    }

    #[test]
    fn leapfrog_is_reversible() {
        let mut t = FnTarget::new(3, |q: &[f64], g: &mut [f64]| {
            // anisotropic quartic bowl
            let mut u = 0.0;
            for (i, (qi, gi)) in q.iter().zip(g.iter_mut()).enumerate() {
                let a = 1.0 + i as f64;
                u += a * qi.powi(4) / 4.0 + 0.5 * qi * qi;
                *gi = a * qi.powi(3) + qi;
            }
            u
        });
        let start = PhasePoint::new(&mut t, vec![0.3, -1.1, 0.7]).unwrap();
        let p0 = [0.5, 0.2, -0.9];
        let mass = [1.0, 2.0, 0.5];
        let (mid, p) = leapfrog(&mut t, &start, &p0, &mass, 0.05, 40).unwrap();
        let neg: Vec<f64> = p.iter().map(|v| -v).collect();
        let (back, pb) = leapfrog(&mut t, &mid, &neg, &mass, 0.05, 40).unwrap();
        for i in 0..3 {
            assert!((back.q[i] - start.q[i]).abs() < 1e-10);
            assert!((pb[i] + p0[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_gradient_moves_in_straight_line() {
        let mut t = FnTarget::new(2, |_: &[f64], g: &mut [f64]| {
            g.fill(0.0);
            0.0
        });
        let start = PhasePoint::new(&mut t, vec![1.0, -2.0]).unwrap();
        let (end, p) = leapfrog(&mut t, &start, &[0.4, 1.0], &[2.0, 0.5], 0.1, 7).unwrap();
        assert!((end.q[0] - (1.0 + 0.2 * 0.7)).abs() < 1e-14);
        assert!((end.q[1] - (-2.0 + 2.0 * 0.7)).abs() < 1e-14);
        assert_eq!(p, vec![0.4, 1.0]);
    }

    #[test]
    fn tiny_step_accepts_almost_always() {
        let mut t = gaussian();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = HmcConfig::new(1, 1e-4, 10);
        let mut cur = PhasePoint::new(&mut t, vec![0.5]).unwrap();
        let mut acc = 0;
        for _ in 0..2000 {
            let (next, info) = hmc_step(&mut t, &cur, &cfg, &mut rng);
            acc += info.accepted as usize;
            cur = next;
        }
        assert!(acc as f64 / 2000.0 > 0.99);
    }

    #[test]
    fn gaussian_moments() {
        let mut t = gaussian();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut cfg = HmcConfig::new(1, 0.3, 5);
        cfg.eps_jitter = 0.2;
        let mut cur = PhasePoint::new(&mut t, vec![0.0]).unwrap();
        let n = 100_000;
        let (mut s1, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            cur = hmc_step(&mut t, &cur, &cfg, &mut rng).0;
            s1 += cur.q[0];
            s2 += cur.q[0] * cur.q[0];
        }
        let mean = s1 / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 0.02, "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn forbidden_region_never_visited() {
        let mut t = FnTarget::new(1, |q: &[f64], g: &mut [f64]| {
            if q[0] < 0.2 {
                return f64::INFINITY;
            }
            g[0] = q[0];
            0.5 * q[0] * q[0]
        });
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = HmcConfig::new(1, 0.4, 4);
        let mut cur = PhasePoint::new(&mut t, vec![1.0]).unwrap();
        for _ in 0..5000 {
            cur = hmc_step(&mut t, &cur, &cfg, &mut rng).0;
            assert!(cur.q[0] >= 0.2);
        }
    }

    #[test]
    fn dual_averaging_hits_target() {
        let mut t = FnTarget::new(10, |q: &[f64], g: &mut [f64]| {
            g.copy_from_slice(q);
            0.5 * q.iter().map(|v| v * v).sum::<f64>()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut cfg = HmcConfig::new(10, 2.0, 5);
        let mut da = DualAveraging::new(cfg.step_eps, 0.7);
        let mut cur = PhasePoint::new(&mut t, vec![0.1; 10]).unwrap();
        for _ in 0..2000 {
            let (next, info) = hmc_step(&mut t, &cur, &cfg, &mut rng);
            cur = next;
            da.update(info.accept_prob);
            cfg.step_eps = da.current();
        }
        cfg.step_eps = da.final_eps();
        let mut acc = 0.0;
        for _ in 0..4000 {
            let (next, info) = hmc_step(&mut t, &cur, &cfg, &mut rng);
            cur = next;
            acc += info.accept_prob;
        }
        let rate = acc / 4000.0;
        assert!((rate - 0.7).abs() < 0.1, "{rate}");
    }

    #[test]
    fn config_validation() {
        assert!(HmcConfig::new(2, 0.1, 10).validate().is_ok());
        assert!(HmcConfig::new(2, 0.0, 10).validate().is_err());
        assert!(HmcConfig::new(2, 0.1, 0).validate().is_err());
        let mut c = HmcConfig::new(2, 0.1, 1);
        c.mass[1] = -1.0;
        assert!(c.validate().is_err());
    }
}
