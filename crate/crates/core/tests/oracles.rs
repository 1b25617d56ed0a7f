//! Library routes checked against independent references: numeric
//! integration, finite differences and the exact level-0 grid.

mod common;

use common::{brute_force_log_marginal, fgn_dense, gradient_gate_error, ScalarPrior};
use fsde_core::augment::{refine, CompleteData, ParamState, PriorSpec};
use fsde_core::conjugate::{
    fou_k0_grid, k0_point_estimate, linear_axis, log_axis, marginal_theta_logdensity, regression_stats_with, ConjugatePrior,
    DenseWhitener, GridPosterior,
};
use fsde_core::models::fou_exact_simulate;
use fsde_core::samplers::{run_gibbs, run_hmc_full, ChainConfig, ChainOutput};
use fsde_core::{FouParams, SdeModel};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

#[test]
fn regression_marginal_matches_double_integral() {
    let y = [1.2, 0.1, -0.6, 0.8, 0.3];
    let x = [0.5, 1.0, 1.5, 2.0, 2.5];
    let cases = [(0.5, 1.0), (0.25, 1.0), (0.65, 0.5), (0.9, 2.0)];
    for (scalar, spec) in [
        (ScalarPrior::Flat, ConjugatePrior::Noninformative),
        (
            ScalarPrior::Conjugate { alpha: 1.5, rate: 0.7, lambda: -0.2, omega: 2.0 },
            ConjugatePrior::Conjugate {
                alpha: 1.5,
                rate: 0.7,
                lambda: nalgebra::DVector::from_element(1, -0.2),
                omega: DMatrix::from_element(1, 1, 2.0),
            },
        ),
    ] {
        // (H, dt) enters only through V
        let analytic = |h: f64, dt: f64| {
            let w = DenseWhitener::new(fgn_dense(h, dt, 5)).unwrap();
            let st = regression_stats_with(&y, &DMatrix::from_column_slice(5, 1, &x), &w).unwrap();
            marginal_theta_logdensity(&st, &spec).unwrap()
        };
        let brute = |h: f64, dt: f64| brute_force_log_marginal(&y, &x, &fgn_dense(h, dt, 5), scalar);
        let (a0, b0) = (analytic(cases[0].0, cases[0].1), brute(cases[0].0, cases[0].1));
        for &(h, dt) in &cases[1..] {
            let d = (analytic(h, dt) - a0) - (brute(h, dt) - b0);
            assert!(d.abs() < 1e-6, "{scalar:?} H={h} dt={dt}: {d:e}");
        }
    }
}

#[test]
fn gradient_matches_differences_at_level_three() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for (model, hurst) in [(SdeModel::Fou, 0.35), (SdeModel::Fou, 0.8), (SdeModel::Fcir, 0.4), (SdeModel::Fcir, 0.65)] {
        let (obs, state, prior, dt): (Vec<f64>, _, _, f64) = match model {
            SdeModel::Fou => (
                (0..6).map(|_| rng.random_range(-1.0..1.0)).collect(),
                ParamState::new([1.3, 0.2], 0.9, hurst),
                PriorSpec::fou_noninformative(),
                1.0,
            ),
            SdeModel::Fcir => (
                (0..6).map(|_| rng.random_range(1.0..1.5)).collect(),
                ParamState::new([0.8, 0.5], 0.4, hurst),
                PriorSpec::fcir_noninformative(),
                0.25,
            ),
        };
        let mut data = refine(&CompleteData::from_observations(&obs, dt).unwrap(), 3).unwrap();
        let jitter = if model == SdeModel::Fou { 0.2 } else { 0.03 };
        let miss: Vec<f64> =
            data.missing_values().iter().map(|v| v + jitter * rng.sample::<f64, _>(StandardNormal)).collect();
        data.set_missing(&miss).unwrap();
        let err = gradient_gate_error(model, &data, &state, &prior);
        assert!(err < 1e-5, "{model:?} H={hurst}: {err:e}");
    }
}

fn level_zero_case() -> (Vec<f64>, GridPosterior) {
    let params = FouParams { gamma: 1.0, mu: 0.0, sigma: 1.0, hurst: 0.75 };
    let x = fou_exact_simulate(&params, 51, 1.0, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
    let grid = fou_k0_grid(&x, 1.0, &log_axis(1e-3, 2.0, 400), &linear_axis(0.005, 0.995, 397)).unwrap();
    (x, grid)
}

fn assert_matches_grid(chain: &ChainOutput, grid: &GridPosterior, what: &str) {
    let ks_g = grid.marginal(0).ks_distance(&chain.trace(0));
    let ks_h = grid.marginal(1).ks_distance(&chain.trace(3));
    assert!(ks_g < 0.05 && ks_h < 0.05, "{what}: KS γ {ks_g:.4}, H {ks_h:.4}");
}

/// Without latent points the HMC target is the level-0 posterior, whose
/// `(γ, H)` marginal the grid computes exactly.
#[test]
fn hmc_at_level_zero_matches_grid() {
    let (x, grid) = level_zero_case();
    let data = CompleteData::from_observations(&x, 1.0).unwrap();
    let init = k0_point_estimate(SdeModel::Fou, &x, 1.0).unwrap();
    let prior = PriorSpec::fou_noninformative().with_gamma_max(2.0);
    let cfg = ChainConfig { warmup: 2000, snapshot_every: 0, ..Default::default() };
    let chain = run_hmc_full(&data, SdeModel::Fou, &prior, &init, &cfg, 30_000, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_matches_grid(&chain, &grid, "HMC");
}

#[test]
fn gibbs_at_level_zero_matches_grid() {
    let (x, grid) = level_zero_case();
    let data = CompleteData::from_observations(&x, 1.0).unwrap();
    let init = k0_point_estimate(SdeModel::Fou, &x, 1.0).unwrap();
    let prior = PriorSpec::fou_noninformative().with_gamma_max(2.0);
    let cfg = ChainConfig { warmup: 2000, snapshot_every: 0, ..Default::default() };
    let chain = run_gibbs(&data, SdeModel::Fou, &prior, &init, &cfg, 120_000, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    assert_matches_grid(&chain, &grid, "Gibbs");
}
