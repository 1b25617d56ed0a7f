//! Reference computations shared by the integration and acceptance tests.
//! Everything here goes through dense linear algebra or brute-force
//! quadrature.

#![allow(dead_code)]

use fsde_core::augment::{grad_potential, potential, CompleteData, ParamState, PriorSpec};
use fsde_core::models::{SdeModel, THETA_DIM};
use nalgebra::{DMatrix, DVector};

/// `log N(z; 0, cov)` by dense Cholesky.
pub fn dense_mvn_loglik(z: &[f64], cov: &DMatrix<f64>) -> f64 {
    let n = z.len();
    let chol = cov.clone().cholesky().expect("covariance not positive definite");
    let mut w = DVector::from_column_slice(z);
    chol.l().solve_lower_triangular_mut(&mut w);
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * (w.norm_squared() + log_det + n as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// fGN autocovariance written out directly.
pub fn fgn_acf(h: f64, dt: f64, k: usize) -> f64 {
    let k = k as f64;
    let p = 2.0 * h;
    0.5 * dt.powf(p) * ((k + 1.0).powf(p) + (k - 1.0).abs().powf(p) - 2.0 * k.powf(p))
}

pub fn fgn_dense(h: f64, dt: f64, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| fgn_acf(h, dt, i.abs_diff(j)))
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Prior on `(β, σ²)` for a single regression coefficient.
#[derive(Debug, Clone, Copy)]
pub enum ScalarPrior {
    /// `π(β, σ) ∝ 1/σ`.
    Flat,
    /// `σ² ~ IG(alpha, rate)`, `β | σ² ~ N(lambda, σ² / omega)`.
    Conjugate { alpha: f64, rate: f64, lambda: f64, omega: f64 },
}

/// `log ∫∫ N(y; xβ, σ²V) π(β, σ²) dβ dσ²` up to a constant that depends
/// only on the prior and `n`, by trapezoid sums over `β` and `log σ²`.
///
/// Both integrands are analytic and decay at least exponentially, so the
/// trapezoid rule converges geometrically in the step.
pub fn brute_force_log_marginal(y: &[f64], x: &[f64], v: &DMatrix<f64>, prior: ScalarPrior) -> f64 {
    let n = y.len();
    let vinv = v.clone().try_inverse().expect("singular V");
    let log_det_v = v.determinant().ln();
    let yv = DVector::from_column_slice(y);
    let xv = DVector::from_column_slice(x);
    let syy = yv.dot(&(&vinv * &yv));
    let sxy = xv.dot(&(&vinv * &yv));
    let sxx = xv.dot(&(&vinv * &xv));
    let (prec0, mean0) = match prior {
        ScalarPrior::Flat => (0.0, 0.0),
        ScalarPrior::Conjugate { lambda, omega, .. } => (omega, lambda),
    };
    // location and precision of β given σ² (the same for every σ²)
    let b_mean = (sxy + prec0 * mean0) / (sxx + prec0);
    let b_prec = sxx + prec0;
    let rss = syy - sxy * sxy / sxx;
    let t_center = (rss / n as f64).ln();

    let quad = |b: f64| syy - 2.0 * b * sxy + b * b * sxx;
    let ht = 0.01;
    let mut outer = Vec::new();
    let mut t = t_center - 20.0;
    while t <= t_center + 45.0 {
        let s2 = t.exp();
        let sd = (s2 / b_prec).sqrt();
        let hb = 0.2 * sd;
        let mut inner = Vec::with_capacity(121);
        for i in -60..=60 {
            let b = b_mean + i as f64 * hb;
            let mut l = -0.5 * n as f64 * (2.0 * std::f64::consts::PI * s2).ln() - 0.5 * log_det_v - quad(b) / (2.0 * s2);
            // dσ² = σ² dt
            l += match prior {
                // 1/σ in σ is 1/σ² in σ² (dropping the factor ½)
                ScalarPrior::Flat => 0.0,
                ScalarPrior::Conjugate { alpha, rate, lambda, omega } => {
                    let pb = 0.5 * (omega / (2.0 * std::f64::consts::PI * s2)).ln() - omega * (b - lambda).powi(2) / (2.0 * s2);
                    pb - alpha * s2.ln() - rate / s2
                }
            };
            inner.push(l);
        }
        outer.push(log_sum_exp(&inner) + hb.ln());
        t += ht;
    }
    log_sum_exp(&outer) + ht.ln()
}

/// Stationary fOU autocovariance from its spectral representation,
/// `σ² Γ(2H+1) sin(πH)/π ∫_0^∞ cos(ωt) ω^{1-2H} / (γ² + ω²) dω`, with the
/// substitution `ω = s^p`, `p = 1/(2 - 2H)`, and composite Simpson on
/// `[0, s_max]`.
pub fn fou_acf_spectral(t: f64, gamma: f64, sigma: f64, h: f64, gamma_fn_2h1: f64) -> f64 {
    let p = 1.0 / (2.0 - 2.0 * h);
    let s_max: f64 = 300.0;
    let step: f64 = 5e-5;
    let n = (s_max / step).ceil() as usize & !1;
    let f = |s: f64| p * (t * s.powf(p)).cos() / (gamma * gamma + s.powf(2.0 * p));
    let mut acc = f(0.0) + f(n as f64 * step);
    for i in 1..n {
        acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * step);
    }
    let integral = acc * step / 3.0;
    sigma * sigma * gamma_fn_2h1 * (std::f64::consts::PI * h).sin() / std::f64::consts::PI * integral
}

/// Largest relative deviation `|a - b| / max(|a|, |b|, 1)` between the
/// analytic potential gradient and central differences of the potential.
pub fn gradient_gate_error(model: SdeModel, data: &CompleteData, state: &ParamState, prior: &PriorSpec) -> f64 {
    let g = grad_potential(data, model, state, prior).expect("state outside the support");
    let pot = |vals: &[f64], s: &ParamState| {
        let mut d = data.clone();
        let miss: Vec<f64> = data.missing_indices().iter().map(|&i| vals[i]).collect();
        d.set_missing(&miss).unwrap();
        potential(&d, model, s, prior)
    };
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
    let mut worst: f64 = 0.0;
    for (slot, idx) in data.missing_indices().into_iter().enumerate() {
        let h = 1e-6 * data.values()[idx].abs().max(1.0);
        let mut up = data.values().to_vec();
        let mut dn = up.clone();
        up[idx] += h;
        dn[idx] -= h;
        worst = worst.max(rel(g.x_miss[slot], (pot(&up, state) - pot(&dn, state)) / (2.0 * h)));
    }
    let vals = data.values();
    for i in 0..THETA_DIM {
        let h = 1e-6 * state.theta[i].abs().max(1.0);
        let (mut up, mut dn) = (*state, *state);
        up.theta[i] += h;
        dn.theta[i] -= h;
        worst = worst.max(rel(g.theta[i], (pot(vals, &up) - pot(vals, &dn)) / (2.0 * h)));
    }
    let h = 1e-6 * state.sigma;
    let (mut up, mut dn) = (*state, *state);
    up.sigma += h;
    dn.sigma -= h;
    worst = worst.max(rel(g.sigma, (pot(vals, &up) - pot(vals, &dn)) / (2.0 * h)));
    let h = 1e-4;
    let (mut up, mut dn) = (*state, *state);
    up.hurst += h;
    dn.hurst -= h;
    worst.max(rel(g.hurst, (pot(vals, &up) - pot(vals, &dn)) / (2.0 * h)))
}
