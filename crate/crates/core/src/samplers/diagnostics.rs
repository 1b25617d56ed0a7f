use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

/// Sample autocorrelation at lags `0..=max_lag` (truncated to the chain
/// length), computed by FFT. A constant chain gives `[1, 0, 0, …]`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let lags = max_lag.min(n - 1) + 1;
    let mean = x.iter().sum::<f64>() / n as f64;
    let len = (2 * n).next_power_of_two();
    let mut buf: Vec<Complex64> = x.iter().map(|v| Complex64::new(v - mean, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    for c in buf.iter_mut() {
        *c = Complex64::new(c.norm_sqr(), 0.0);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let c0 = buf[0].re;
    if !(c0 > 0.0) {
        let mut acf = vec![0.0; lags];
        acf[0] = 1.0;
        return acf;
    }
    buf[..lags].iter().map(|c| c.re / c0).collect()
}

/// Integrated autocorrelation time `1 + 2 Σ ρ_t`, truncated by Geyer's
/// initial monotone positive sequence. `None` for constant or tiny chains.
pub fn integrated_autocorrelation_time(x: &[f64]) -> Option<f64> {
    let n = x.len();
    if n < 4 {
        return None;
    }
    let rho = autocorrelation(x, n - 1);
    let var = {
        let m = x.iter().sum::<f64>() / n as f64;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>()
    };
    if !(var > 0.0) {
        return None;
    }
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    for pair in rho.chunks_exact(2) {
        let g = (pair[0] + pair[1]).min(prev);
        if g <= 0.0 {
            break;
        }
        sum += g;
        prev = g;
    }
    Some((2.0 * sum - 1.0).max(1.0 / n as f64))
}

/// `n / IACT`; `None` for a degenerate chain.
pub fn effective_sample_size(x: &[f64]) -> Option<f64> {
    integrated_autocorrelation_time(x).map(|t| x.len() as f64 / t)
}

/// Empirical quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoordinateDiagnostics {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q50: f64,
    pub q975: f64,
    pub acf: Vec<f64>,
    pub iact: f64,
    pub ess: f64,
    /// Constant or too-short trace; `iact` and `ess` are then meaningless.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainDiagnostics {
    pub n_draws: usize,
    pub coordinates: Vec<CoordinateDiagnostics>,
}

impl ChainDiagnostics {
    pub fn get(&self, name: &str) -> Option<&CoordinateDiagnostics> {
        self.coordinates.iter().find(|c| c.name == name)
    }
}

/// Summary statistics, ACF up to `max_lag`, IACT and ESS per trace.
pub fn chain_diagnostics<S: AsRef<str>>(names: &[S], traces: &[Vec<f64>], max_lag: usize) -> ChainDiagnostics {
    let coordinates = names
        .iter()
        .zip(traces)
        .map(|(name, x)| {
            let n = x.len();
            let mean = if n > 0 { x.iter().sum::<f64>() / n as f64 } else { f64::NAN };
            let sd = if n > 1 {
                (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                f64::NAN
            };
            let mut sorted = x.clone();
            sorted.sort_by(f64::total_cmp);
            let iact = if n >= 10 { integrated_autocorrelation_time(x) } else { None };
            if iact.is_none() {
                log::warn!("trace '{}' is degenerate (length {n}); ESS not available", name.as_ref());
            }
            CoordinateDiagnostics {
                name: name.as_ref().to_string(),
                mean,
                sd,
                q025: quantile(&sorted, 0.025),
                q50: quantile(&sorted, 0.5),
                q975: quantile(&sorted, 0.975),
                acf: autocorrelation(x, max_lag),
                iact: iact.unwrap_or(f64::NAN),
                ess: iact.map_or(0.0, |t| n as f64 / t),
                degenerate: iact.is_none(),
            }
        })
        .collect();
    ChainDiagnostics { n_draws: traces.first().map_or(0, Vec::len), coordinates }
}
