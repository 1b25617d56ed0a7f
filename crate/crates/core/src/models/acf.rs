//! Stationary autocovariance of the fOU process.
//!
//! Two evaluation routes:
//!
//! * `ClosedForm` (H > ½): convolution of `e^{-γ|t|}/(2γ)` with the fGN
//!   kernel `H(2H-1)|u|^{2H-2}`, split at `0` and `t` into two incomplete
//!   gamma terms and one finite integral.
//! * `TimeDomain` (all H): writing `X_t = σγ ∫_0^∞ e^{-γu}(B_t - B_{t-u}) du`
//!   gives `C(t) = (σ²/2) [ (γ/2)(P + Q) - t^{2H} ]` with
//!   `P = ∫_0^∞ e^{-γu}(t+u)^{2H} du` and `Q = ∫_0^∞ e^{-γu}|t-u|^{2H} du`.
//!   Both integrands are smooth and non-oscillatory, so this avoids
//!   numerical Fourier inversion for H ≤ ½.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::numeric::{integrate, scaled_upper_gamma};

/// Hurst index above which [`fou_acf`] uses the closed form.
pub const CLOSED_FORM_MIN_HURST: f64 = 0.55;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcfMethod {
    ClosedForm,
    TimeDomain,
}

fn validate(gamma_rev: f64, sigma: f64, hurst: f64) -> Result<()> {
    if !(gamma_rev > 0.0 && sigma > 0.0) {
        return Err(Error::Domain(format!(
            "fOU autocovariance needs γ > 0 and σ > 0 (got γ={gamma_rev}, σ={sigma})"
        )));
    }
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::Domain(format!("Hurst index {hurst} outside (0, 1)")));
    }
    Ok(())
}

/// `cov(X_s, X_{s+t})` for the stationary fOU process.
pub fn fou_acf(t: f64, gamma_rev: f64, sigma: f64, hurst: f64) -> Result<f64> {
    let method = if hurst > CLOSED_FORM_MIN_HURST {
        AcfMethod::ClosedForm
    } else {
        AcfMethod::TimeDomain
    };
    fou_acf_with(method, t, gamma_rev, sigma, hurst)
}

/// [`fou_acf`] with an explicit evaluation route.
pub fn fou_acf_with(method: AcfMethod, t: f64, gamma_rev: f64, sigma: f64, hurst: f64) -> Result<f64> {
    validate(gamma_rev, sigma, hurst)?;
    let t = t.abs();
    match method {
        AcfMethod::ClosedForm => {
            if hurst <= 0.5 {
                return Err(Error::Domain(format!("closed-form fOU autocovariance needs H > 1/2 (got {hurst})")));
            }
            Ok(closed_form(t, gamma_rev, sigma, hurst))
        }
        AcfMethod::TimeDomain => Ok(time_domain(t, gamma_rev, sigma, hurst)),
    }
}

/// Autocovariances at lags `0, dt, …, (n-1) dt`.
pub fn fou_acf_sequence(gamma_rev: f64, sigma: f64, hurst: f64, dt: f64, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|k| fou_acf(k as f64 * dt, gamma_rev, sigma, hurst)).collect()
}

fn closed_form(t: f64, g: f64, sigma: f64, h: f64) -> f64 {
    let a = 2.0 * h - 1.0;
    let x = g * t;
    // e^{-γt} Γ(a) + e^{γt} Γ(a, γt), both over γ^a
    let tails = ((-x).exp() * gamma(a) + scaled_upper_gamma(a, x)) / g.powf(a);
    // ∫_0^t e^{-γ(t-u)} u^{a-1} du with u = w^{1/a}, which removes the
    // endpoint singularity: u^{a-1} du = dw / a
    let inner = if t > 0.0 {
        let p = 1.0 / a;
        integrate(|w: f64| (-g * (t - w.powf(p))).exp(), 0.0, t.powf(a), 0.0, 1e-14) / a
    } else {
        0.0
    };
    sigma * sigma * h * a / (2.0 * g) * (tails + inner)
}

fn time_domain(t: f64, g: f64, sigma: f64, h: f64) -> f64 {
    let b = 2.0 * h + 1.0;
    let gb = g.powf(b);
    let p = scaled_upper_gamma(b, g * t) / gb;
    // Q = e^{-γt} Γ(2H+1)/γ^{2H+1} + ∫_0^t (t-v)^{2H} e^{-γv} dv
    let head = if t > 0.0 {
        integrate(|v: f64| (t - v).max(0.0).powf(2.0 * h) * (-g * v).exp(), 0.0, t, 0.0, 1e-15)
    } else {
        0.0
    };
    let q = (-g * t).exp() * gamma(b) / gb + head;
    0.5 * sigma * sigma * (0.5 * g * (p + q) - t.powf(2.0 * h))
}
