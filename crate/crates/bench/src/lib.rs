//! Shared inputs for the benchmarks.

use fsde_core::models::fou_exact_simulate;
use fsde_core::FouParams;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stationary fOU path with `γ = 1, μ = 0, σ = 1` and the given `H`.
pub fn fou_path(hurst: f64, n_points: usize, seed: u64) -> Vec<f64> {
    let params = FouParams { gamma: 1.0, mu: 0.0, sigma: 1.0, hurst };
    fou_exact_simulate(&params, n_points, 1.0, &mut ChaCha8Rng::seed_from_u64(seed)).expect("valid parameters")
}
