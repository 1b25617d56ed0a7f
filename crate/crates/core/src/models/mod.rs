//! SDE models driven by fBM: the fractional Ornstein-Uhlenbeck and
//! Cox-Ingersoll-Ross processes, Euler simulation on the unit-diffusion
//! scale, and the exact stationary law of the fOU process.

mod acf;

pub use acf::{fou_acf, fou_acf_sequence, fou_acf_with, AcfMethod};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::toeplitz::{CholeskyLadder, FgnSimulator};

/// Number of drift parameters for every supported model.
pub const THETA_DIM: usize = 2;

/// Drift parameters `θ`: `(γ, μ)` for fOU, `(γ, β)` for fCIR on the
/// transformed scale.
pub type Theta = [f64; THETA_DIM];

/// A constant-diffusion SDE `dY = μ(Y, θ) dt + σ dB^H`, possibly reached
/// from the natural scale through a change of variables `Y = h(X)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SdeModel {
    /// `dX = -γ (X - μ) dt + σ dB^H`, identity transform.
    Fou,
    /// `dX = -γ (X - μ) dt + σ √X dB^H`, sampled as
    /// `dY = (β / Y - γ Y / 2) dt + σ dB^H` with `Y = 2 √X`.
    Fcir,
}

pub fn fou_model() -> SdeModel {
    SdeModel::Fou
}

pub fn fcir_model() -> SdeModel {
    SdeModel::Fcir
}

impl SdeModel {
    pub fn name(&self) -> &'static str {
        match self {
            SdeModel::Fou => "fou",
            SdeModel::Fcir => "fcir",
        }
    }

    pub fn theta_names(&self) -> [&'static str; THETA_DIM] {
        match self {
            SdeModel::Fou => ["gamma", "mu"],
            SdeModel::Fcir => ["gamma", "beta"],
        }
    }

    /// Whether `y` lies in the open domain of the unit-diffusion process.
    #[inline]
    pub fn in_domain(&self, y: f64) -> bool {
        match self {
            SdeModel::Fou => y.is_finite(),
            SdeModel::Fcir => y > 0.0 && y.is_finite(),
        }
    }

    /// Drift on the unit-diffusion scale. No domain check.
    #[inline]
    pub fn drift(&self, y: f64, theta: &Theta) -> f64 {
        match self {
            SdeModel::Fou => -theta[0] * (y - theta[1]),
            SdeModel::Fcir => theta[1] / y - 0.5 * theta[0] * y,
        }
    }

    /// Drift with a domain check.
    pub fn checked_drift(&self, y: f64, theta: &Theta) -> Result<f64> {
        if self.in_domain(y) {
            Ok(self.drift(y, theta))
        } else {
            Err(Error::Domain(format!("{} drift evaluated at {y}", self.name())))
        }
    }

    /// `∂μ/∂y`.
    #[inline]
    pub fn drift_dx(&self, y: f64, theta: &Theta) -> f64 {
        match self {
            SdeModel::Fou => -theta[0],
            SdeModel::Fcir => -theta[1] / (y * y) - 0.5 * theta[0],
        }
    }

    /// `∂μ/∂θ_i`.
    #[inline]
    pub fn drift_dtheta(&self, y: f64, theta: &Theta) -> Theta {
        match self {
            SdeModel::Fou => [-(y - theta[1]), theta[0]],
            SdeModel::Fcir => [-0.5 * y, 1.0 / y],
        }
    }

    /// `h`: natural scale to unit-diffusion scale.
    pub fn to_unit_diffusion(&self, x: f64) -> f64 {
        match self {
            SdeModel::Fou => x,
            SdeModel::Fcir => 2.0 * x.sqrt(),
        }
    }

    /// `h⁻¹`.
    pub fn from_unit_diffusion(&self, y: f64) -> f64 {
        match self {
            SdeModel::Fou => y,
            SdeModel::Fcir => 0.25 * y * y,
        }
    }

    /// Parameter restrictions beyond `σ > 0`: `γ > 0` for both models and
    /// additionally `β + σ²/2 > 0` for fCIR.
    pub fn admissible(&self, theta: &Theta, sigma: f64) -> bool {
        match self {
            SdeModel::Fou => theta[0] > 0.0 && theta[1].is_finite(),
            SdeModel::Fcir => theta[0] > 0.0 && theta[1] + 0.5 * sigma * sigma > 0.0,
        }
    }
}

fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("Hurst index {hurst} outside (0, 1)")))
    }
}

/// Natural parameters of the fOU process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FouParams {
    pub gamma: f64,
    pub mu: f64,
    pub sigma: f64,
    pub hurst: f64,
}

impl FouParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Domain(format!("fOU mean reversion {} must be positive", self.gamma)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Domain(format!("fOU diffusion {} must be positive", self.sigma)));
        }
        if !self.mu.is_finite() {
            return Err(Error::Domain("fOU mean must be finite".into()));
        }
        check_hurst(self.hurst)
    }

    pub fn theta(&self) -> Theta {
        [self.gamma, self.mu]
    }
}

/// Natural parameters of the fCIR process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcirParams {
    pub gamma: f64,
    pub mu: f64,
    pub sigma: f64,
    pub hurst: f64,
}

impl FcirParams {
    /// `β = 2γμ - σ²/2`, the `1/Y` coefficient after the transform.
    pub fn beta(&self) -> f64 {
        2.0 * self.gamma * self.mu - 0.5 * self.sigma * self.sigma
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) {
            return Err(Error::Domain(format!("fCIR mean reversion {} must be positive", self.gamma)));
        }
        if !(self.mu > 0.0) {
            return Err(Error::Domain(format!("fCIR long-run mean {} must be positive", self.mu)));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Domain(format!("fCIR diffusion {} must be positive", self.sigma)));
        }
        check_hurst(self.hurst)
    }

    /// Drift parameters on the unit-diffusion scale.
    pub fn theta(&self) -> Theta {
        [self.gamma, self.beta()]
    }
}

/// Euler scheme on the unit-diffusion scale:
/// `y[n+1] = y[n] + μ(y[n], θ) dt + σ noise[n]`.
///
/// Fails with [`Error::DomainExit`] at the first step that leaves the model
/// domain; the path is not reflected.
pub fn euler_simulate(
    model: SdeModel,
    theta: &Theta,
    sigma: f64,
    x0: f64,
    dt: f64,
    n_steps: usize,
    noise: &[f64],
) -> Result<Vec<f64>> {
    if noise.len() < n_steps {
        return Err(Error::Dimension { expected: n_steps, got: noise.len() });
    }
    if !model.in_domain(x0) {
        return Err(Error::DomainExit { step: 0, value: x0 });
    }
    let mut path = Vec::with_capacity(n_steps + 1);
    path.push(x0);
    let mut x = x0;
    for (n, dz) in noise[..n_steps].iter().enumerate() {
        x += model.drift(x, theta) * dt + sigma * dz;
        if !model.in_domain(x) {
            return Err(Error::DomainExit { step: n + 1, value: x });
        }
        path.push(x);
    }
    Ok(path)
}

/// Simulates `n_obs + 1` fCIR observations (natural scale) spaced `dt`
/// apart by running the Euler scheme on `Y = 2√X` at step `dt / refine`
/// and keeping every `refine`-th point.
pub fn fcir_simulate<R: Rng + ?Sized>(
    params: &FcirParams,
    x0: f64,
    n_obs: usize,
    dt: f64,
    refine: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    params.validate()?;
    if refine == 0 {
        return Err(Error::Domain("refinement factor must be at least 1".into()));
    }
    let model = SdeModel::Fcir;
    let fine_dt = dt / refine as f64;
    let steps = n_obs * refine;
    let noise = FgnSimulator::new(params.hurst, fine_dt, steps.max(1))?.sample(rng);
    let y = euler_simulate(model, &params.theta(), params.sigma, model.to_unit_diffusion(x0), fine_dt, steps, &noise)?;
    Ok(y.iter().step_by(refine).map(|&y| model.from_unit_diffusion(y)).collect())
}

/// Terminal values of the Euler scheme and the exact solution for
/// `dX = X dB^H`, `X_0 = 1`, on `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub struct EulerFailure {
    /// `∏ (1 + dB_k)`.
    pub euler: f64,
    /// `exp(B_1)` from the same noise.
    pub exact: f64,
}

/// Euler product and exact solution for a given increment path.
pub fn geometric_euler_terminal(noise: &[f64]) -> EulerFailure {
    let euler = noise.iter().fold(1.0, |acc, dz| acc * (1.0 + dz));
    let exact = noise.iter().sum::<f64>().exp();
    EulerFailure { euler, exact }
}

/// Simulates fGN on `[0, 1]` with `n_steps` increments and returns the
/// Euler and exact terminal values of `dX = X dB^H`.
pub fn geometric_euler_failure_demo<R: Rng + ?Sized>(hurst: f64, n_steps: usize, rng: &mut R) -> Result<EulerFailure> {
    let sim = FgnSimulator::new(hurst, 1.0 / n_steps as f64, n_steps)?;
    Ok(geometric_euler_terminal(&sim.sample(rng)))
}

/// Draws a stationary fOU path of `n_points` values spaced `dt` apart from
/// its exact Gaussian law.
pub fn fou_exact_simulate<R: Rng + ?Sized>(params: &FouParams, n_points: usize, dt: f64, rng: &mut R) -> Result<Vec<f64>> {
    params.validate()?;
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("time step {dt} must be positive")));
    }
    let acf = fou_acf_sequence(params.gamma, params.sigma, params.hurst, dt, n_points)?;
    // the ladder is the innovations form of the Cholesky factor of the ACF matrix
    let ladder = CholeskyLadder::from_autocovariance(&acf).map_err(|e| {
        log::error!("fOU autocovariance matrix is not positive definite: {e}");
        e
    })?;
    Ok(ladder.sample(rng).into_iter().map(|x| x + params.mu).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn fou_drift_values() {
        let m = fou_model();
        assert_eq!(m.drift(0.0, &[1.0, 0.0]), 0.0);
        assert_eq!(m.drift(2.0, &[1.0, 0.0]), -2.0);
        assert_eq!(m.drift_dtheta(2.0, &[1.0, 0.0]), [-2.0, 1.0]);
        assert_eq!(m.drift_dx(5.0, &[3.0, 0.0]), -3.0);
    }

    #[test]
    fn fcir_transform_and_drift() {
        let m = fcir_model();
        assert_eq!(m.to_unit_diffusion(1.0), 2.0);
        assert_eq!(m.from_unit_diffusion(2.0), 1.0);
        assert!((m.drift(2.0, &[1.0, 1.0]) + 0.5).abs() < 1e-15);
        assert!(m.checked_drift(0.0, &[1.0, 1.0]).is_err());
        assert!(m.checked_drift(-1.0, &[1.0, 1.0]).is_err());
        let p = FcirParams { gamma: 2.0, mu: 0.05, sigma: 0.1, hurst: 0.6 };
        assert!((p.beta() - 0.195).abs() < 1e-15);
        assert!(FcirParams { mu: 0.0, ..p }.validate().is_err());
        assert!(FcirParams { gamma: -1.0, ..p }.validate().is_err());
    }

    #[test]
    fn euler_hand_steps() {
        let m = fou_model();
        let p = euler_simulate(m, &[1.0, 0.0], 1.0, 1.0, 0.5, 1, &[0.2]).unwrap();
        assert!((p[1] - 0.7).abs() < 1e-15);

        let p = euler_simulate(m, &[0.0, 0.0], 1.0, 3.0, 0.1, 4, &[0.0; 4]).unwrap();
        assert_eq!(p, vec![3.0; 5]);

        assert!(matches!(
            euler_simulate(m, &[1.0, 0.0], 1.0, 1.0, 0.5, 3, &[0.0; 2]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn fcir_euler_reports_domain_exit() {
        let err = euler_simulate(fcir_model(), &[1.0, 0.1], 1.0, 1.0, 0.01, 3, &[0.0, -5.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::DomainExit { step: 2, .. }));
    }

    #[test]
    fn euler_strong_convergence_white_noise() {
        // fOU with H = 1/2: RMS terminal difference between step dt and the
        // same Brownian path at dt/2 should roughly halve when dt is quartered.
        let m = fou_model();
        let theta = [1.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rms = |n_coarse: usize, rng: &mut ChaCha8Rng| {
            let mut acc = 0.0;
            for _ in 0..1000 {
                let fine_dt = 1.0 / (2 * n_coarse) as f64;
                let fine: Vec<f64> = (0..2 * n_coarse)
                    .map(|_| fine_dt.sqrt() * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let coarse: Vec<f64> = fine.chunks(2).map(|c| c[0] + c[1]).collect();
                let a = euler_simulate(m, &theta, 1.0, 1.0, 2.0 * fine_dt, n_coarse, &coarse).unwrap();
                let b = euler_simulate(m, &theta, 1.0, 1.0, fine_dt, 2 * n_coarse, &fine).unwrap();
                acc += (a[n_coarse] - b[2 * n_coarse]).powi(2);
            }
            (acc / 1000.0).sqrt()
        };
        let e1 = rms(16, &mut rng);
        let e2 = rms(64, &mut rng);
        // additive noise: the scheme is strong order one, so quartering dt
        // should cut the error by at least the order-½ factor of 2
        assert!(e1 / e2 > 2.0, "e1={e1} e2={e2}");
    }

    #[test]
    fn euler_reproduces_ar1_moments() {
        // H = 1/2, small dt: stationary variance of the Euler chain is
        // σ²/(γ(2 - γ dt)) ≈ σ²/(2γ).
        let m = fou_model();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dt: f64 = 0.01;
        let n = 400_000;
        let noise: Vec<f64> = (0..n).map(|_| dt.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
        let p = euler_simulate(m, &[2.0, 1.0], 1.0, 1.0, dt, n, &noise).unwrap();
        let tail = &p[1000..];
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        let var = tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / tail.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
        assert!((var - 1.0 / (2.0 * (2.0 - 0.02))).abs() < 0.02, "{var}");
    }

    #[test]
    fn geometric_demo_edge_cases() {
        let r = geometric_euler_terminal(&[0.0; 8]);
        assert_eq!(r.euler, 1.0);
        let r = geometric_euler_terminal(&[0.37]);
        assert_eq!(r.euler, 1.37);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = geometric_euler_failure_demo(0.7, 1, &mut rng).unwrap();
        assert!((r.euler - (1.0 + r.exact.ln())).abs() < 1e-12);
    }

    #[test]
    fn geometric_demo_white_noise_limit() {
        // log X̂_1 ≈ B_1 - 1/2 for H = 1/2
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1 << 12;
        let sim = FgnSimulator::new(0.5, 1.0 / n as f64, n).unwrap();
        let mut acc = 0.0;
        for _ in 0..1000 {
            let noise = sim.sample(&mut rng);
            let r = geometric_euler_terminal(&noise);
            acc += r.euler.ln() - r.exact.ln() + 0.5;
        }
        assert!((acc / 1000.0).abs() < 0.1);
    }

    #[test]
    fn fou_exact_simulation_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let p = FouParams { gamma: 1.0, mu: 0.0, sigma: 1.0, hurst: 0.5 };
        let mut s2 = 0.0;
        let paths = 300;
        for _ in 0..paths {
            let x = fou_exact_simulate(&p, 101, 1.0, &mut rng).unwrap();
            s2 += x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        }
        assert!((s2 / paths as f64 - 0.5).abs() < 0.03);
        assert!(fou_exact_simulate(&FouParams { sigma: 0.0, ..p }, 10, 1.0, &mut rng).is_err());
    }

    #[test]
    fn fou_exact_simulation_lag_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let p = FouParams { gamma: 1.0, mu: 0.0, sigma: 1.0, hurst: 0.75 };
        let (mut c0, mut c1, mut sum) = (0.0, 0.0, 0.0);
        let paths = 1000;
        for _ in 0..paths {
            let x = fou_exact_simulate(&p, 301, 1.0, &mut rng).unwrap();
            sum += x.iter().sum::<f64>() / x.len() as f64;
            c0 += x.iter().map(|v| v * v).sum::<f64>();
            c1 += x.windows(2).map(|w| w[0] * w[1]).sum::<f64>();
        }
        let target = fou_acf(1.0, 1.0, 1.0, 0.75).unwrap() / fou_acf(0.0, 1.0, 1.0, 0.75).unwrap();
        assert!((c1 / c0 - target).abs() < 0.01, "{} vs {target}", c1 / c0);
        // path means have sd ≈ 0.2 at this memory level
        assert!((sum / paths as f64).abs() < 3.0 * 0.2 / (paths as f64).sqrt() * 1.5);
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    proptest! {
        #[test]
        fn derivatives_match_finite_differences(
            y in 0.2f64..5.0, g in 0.1f64..3.0, t1 in -2.0f64..2.0, fcir in any::<bool>()
        ) {
            let m = if fcir { fcir_model() } else { fou_model() };
            let theta = [g, t1];
            let h = 1e-6 * y.abs().max(1.0);
            let fd_x = (m.drift(y + h, &theta) - m.drift(y - h, &theta)) / (2.0 * h);
            prop_assert!(rel_err(fd_x, m.drift_dx(y, &theta)) < 1e-6);
            let d = m.drift_dtheta(y, &theta);
            for i in 0..THETA_DIM {
                let hs = 1e-6 * theta[i].abs().max(1.0);
                let mut up = theta;
                let mut dn = theta;
                up[i] += hs;
                dn[i] -= hs;
                let fd = (m.drift(y, &up) - m.drift(y, &dn)) / (2.0 * hs);
                prop_assert!((fd - d[i]).abs() <= 1e-6 * d[i].abs().max(1.0));
            }
        }

        #[test]
        fn fcir_transform_round_trip(lx in -13.8f64..6.9) {
            let x = lx.exp();
            let m = fcir_model();
            prop_assert!(rel_err(m.from_unit_diffusion(m.to_unit_diffusion(x)), x) < 1e-12);
            let y = m.to_unit_diffusion(x);
            prop_assert!(rel_err(m.to_unit_diffusion(m.from_unit_diffusion(y)), y) < 1e-12);
        }
    }
}
