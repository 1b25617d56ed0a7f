//! The subcommands. Each validates its configuration, writes its outputs
//! and returns the paths it wrote.

use std::path::{Path, PathBuf};

use fsde_core::augment::refine;
use fsde_core::conjugate::{
    fcir_k0_posterior, fou_exact_grid, fou_k0_grid, fou_k0_posterior, k0_point_estimate, ConjugatePrior, GridPosterior,
    K0Options, K0Posterior, Marginal,
};
use fsde_core::models::{fcir_simulate, fou_exact_simulate, geometric_euler_failure_demo};
use fsde_core::samplers::{chain_diagnostics, quantile, run_gibbs, run_hmc_full, ChainDiagnostics};
use fsde_core::{CompleteData, ParamState, SdeModel};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CommandKind, RunConfig, SamplerKind};
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, fmt, sidecar, write_csv, write_json, Manifest, WithManifest};
use crate::series::{read_series, Series};

const DEFAULT_OUT_DIR: &str = "fsde-out";

pub fn run(cmd: CommandKind, cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    cfg.validate(cmd)?;
    match cmd {
        CommandKind::Simulate => simulate(cfg),
        CommandKind::Infer => infer(cfg),
        CommandKind::Rolling => rolling(cfg),
        CommandKind::DemoFailure => demo_failure(cfg),
        CommandKind::Diagnostics => diagnostics(cfg),
    }
}

fn out_dir(cfg: &RunConfig) -> CliResult<PathBuf> {
    let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    ensure_dir(&dir)?;
    Ok(dir)
}

fn input_series(cfg: &RunConfig) -> CliResult<Series> {
    read_series(cfg.input.as_deref().expect("validated input"))
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Serialize)]
struct SimulationRecord {
    model: SdeModel,
    gamma: f64,
    mu: f64,
    sigma: f64,
    hurst: f64,
    dt: f64,
    n_points: usize,
    x0: Option<f64>,
}

fn simulate(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let path = cfg.output.clone().unwrap_or_else(|| PathBuf::from("simulated.csv"));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let mut rng = seeded(cfg.seed, 0);
    let s = &cfg.simulate;
    let (values, x0) = match cfg.model {
        SdeModel::Fou => (fou_exact_simulate(&cfg.fou_params(), s.n + 1, cfg.dt, &mut rng)?, None),
        SdeModel::Fcir => {
            let x0 = cfg.fcir_x0();
            (fcir_simulate(&cfg.fcir_params(), x0, s.n, cfg.dt, s.refine, &mut rng)?, Some(x0))
        }
    };
    write_csv(
        &path,
        &["time", "value"],
        values.iter().enumerate().map(|(i, v)| [fmt(i as f64 * cfg.dt), fmt(*v)]),
    )?;
    let manifest = Manifest::new(CommandKind::Simulate, cfg);
    let record = SimulationRecord {
        model: cfg.model,
        gamma: s.gamma,
        mu: s.mu,
        sigma: s.sigma,
        hurst: s.hurst,
        dt: cfg.dt,
        n_points: values.len(),
        x0,
    };
    let side = sidecar(&path);
    write_json(&side, &WithManifest { manifest: &manifest, body: record })?;
    Ok(vec![path, side])
}

/// Observations on the unit-diffusion scale.
fn unit_scale(model: SdeModel, values: &[f64]) -> CliResult<Vec<f64>> {
    if model == SdeModel::Fcir {
        if let Some(bad) = values.iter().find(|v| !(**v > 0.0)) {
            return Err(CliError::Data(format!("fCIR observations must be positive, got {bad}")));
        }
    }
    Ok(values.iter().map(|v| model.to_unit_diffusion(*v)).collect())
}

#[derive(Serialize)]
struct CoordinateSummary {
    name: String,
    mean: f64,
    sd: f64,
    q025: f64,
    q50: f64,
    q975: f64,
    ess: f64,
    iact: f64,
}

fn coordinate_summaries(diag: &ChainDiagnostics) -> Vec<CoordinateSummary> {
    diag.coordinates
        .iter()
        .map(|c| CoordinateSummary {
            name: c.name.clone(),
            mean: c.mean,
            sd: c.sd,
            q025: c.q025,
            q50: c.q50,
            q975: c.q975,
            ess: c.ess,
            iact: c.iact,
        })
        .collect()
}

fn draws_table(names: &[&str], states: &[ParamState]) -> (Vec<String>, Vec<Vec<f64>>) {
    let header = std::iter::once("iteration").chain(names.iter().copied()).map(String::from).collect();
    let traces = vec![
        states.iter().map(|s| s.theta[0]).collect(),
        states.iter().map(|s| s.theta[1]).collect(),
        states.iter().map(|s| s.sigma).collect(),
        states.iter().map(|s| s.hurst).collect(),
    ];
    (header, traces)
}

fn write_draws(path: &Path, header: &[String], traces: &[Vec<f64>]) -> CliResult<()> {
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let n = traces.first().map_or(0, Vec::len);
    write_csv(
        path,
        &header,
        (0..n).map(|i| std::iter::once(i.to_string()).chain(traces.iter().map(move |t| fmt(t[i])))),
    )
}

/// Long-format ACF table: `coordinate,lag,acf`.
fn write_acf(path: &Path, diag: &ChainDiagnostics) -> CliResult<()> {
    write_csv(
        path,
        &["coordinate", "lag", "acf"],
        diag.coordinates
            .iter()
            .flat_map(|c| c.acf.iter().enumerate().map(move |(lag, r)| [c.name.clone(), lag.to_string(), fmt(*r)])),
    )
}

fn write_marginal(path: &Path, name: &str, m: &Marginal) -> CliResult<()> {
    write_csv(path, &[name, "density"], m.axis.iter().zip(&m.density).map(|(x, d)| [fmt(*x), fmt(*d)]))
}

#[derive(Serialize)]
struct ChainSummary {
    sampler: SamplerKind,
    model: SdeModel,
    level: u32,
    iterations: usize,
    acceptance_rate: f64,
    param_acceptance: Option<[f64; 4]>,
    step_eps: f64,
    n_leapfrog: usize,
    init: ParamState,
    coordinates: Vec<CoordinateSummary>,
}

fn infer(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let series = input_series(cfg)?;
    let dir = out_dir(cfg)?;
    let manifest = Manifest::new(CommandKind::Infer, cfg);
    match cfg.sampler {
        SamplerKind::Hmc | SamplerKind::Gibbs => infer_chain(cfg, &series, &dir, &manifest),
        SamplerKind::Grid => infer_grid(cfg, &series, &dir, &manifest),
        SamplerKind::K0Rejection => infer_k0(cfg, &series, &dir, &manifest),
    }
}

fn infer_chain(cfg: &RunConfig, series: &Series, dir: &Path, manifest: &Manifest) -> CliResult<Vec<PathBuf>> {
    let y = unit_scale(cfg.model, &series.values)?;
    let data = refine(&CompleteData::from_observations(&y, cfg.dt)?, cfg.level)?;
    let init = k0_point_estimate(cfg.model, &y, cfg.dt)?;
    let prior = cfg.prior_spec()?;
    let chain = cfg.chain_config();
    let mut rng = seeded(cfg.seed, 0);
    log::info!("starting {:?} at level {} from {init:?}", cfg.sampler, cfg.level);
    let out = if cfg.sampler == SamplerKind::Hmc {
        run_hmc_full(&data, cfg.model, &prior, &init, &chain, cfg.iterations, &mut rng)?
    } else {
        run_gibbs(&data, cfg.model, &prior, &init, &chain, cfg.iterations, &mut rng)?
    };
    let names = out.names();
    let (header, traces) = draws_table(&names, &out.draws);
    let diag = chain_diagnostics(&names, &traces, cfg.diagnostics.max_lag);
    let files = [dir.join("draws.csv"), dir.join("diagnostics.csv"), dir.join("summary.json")];
    write_draws(&files[0], &header, &traces)?;
    write_acf(&files[1], &diag)?;
    let summary = ChainSummary {
        sampler: cfg.sampler,
        model: cfg.model,
        level: cfg.level,
        iterations: cfg.iterations,
        acceptance_rate: out.acceptance_rate,
        param_acceptance: out.param_acceptance,
        step_eps: out.step_eps,
        n_leapfrog: out.n_leapfrog,
        init,
        coordinates: coordinate_summaries(&diag),
    };
    write_json(&files[2], &WithManifest { manifest, body: summary })?;
    Ok(files.to_vec())
}

#[derive(Serialize)]
struct AxisSummary {
    name: String,
    mean: f64,
    mode: f64,
    q025: f64,
    q50: f64,
    q975: f64,
}

impl AxisSummary {
    fn new(name: &str, m: &Marginal) -> Self {
        Self {
            name: name.to_string(),
            mean: m.mean(),
            mode: m.mode(),
            q025: m.quantile(0.025),
            q50: m.quantile(0.5),
            q975: m.quantile(0.975),
        }
    }
}

#[derive(Serialize)]
struct GridSummary {
    model: SdeModel,
    level: u32,
    joint_mode: Vec<f64>,
    log_norm: f64,
    marginals: Vec<AxisSummary>,
}

fn infer_grid(cfg: &RunConfig, series: &Series, dir: &Path, manifest: &Manifest) -> CliResult<Vec<PathBuf>> {
    let (ga, ha) = (cfg.gamma_axis()?, cfg.hurst_axis()?);
    let post: GridPosterior = if cfg.level == 0 {
        fou_k0_grid(&series.values, cfg.dt, &ga, &ha)?
    } else {
        fou_exact_grid(&series.values, cfg.dt, cfg.level, &ga, &ha)?
    };
    let density = post.density();
    let nh = ha.len();
    let mut files = vec![dir.join("grid.csv")];
    write_csv(
        &files[0],
        &["gamma", "hurst", "density"],
        density.iter().enumerate().map(|(k, d)| [fmt(ga[k / nh]), fmt(ha[k % nh]), fmt(*d)]),
    )?;
    let mut marginals = Vec::new();
    for (axis, name) in post.names.iter().enumerate() {
        let m = post.marginal(axis);
        let path = dir.join(format!("marginal_{name}.csv"));
        write_marginal(&path, name, &m)?;
        files.push(path);
        marginals.push(AxisSummary::new(name, &m));
    }
    let summary = GridSummary { model: cfg.model, level: cfg.level, joint_mode: post.mode(), log_norm: post.log_norm, marginals };
    let path = dir.join("summary.json");
    write_json(&path, &WithManifest { manifest, body: summary })?;
    files.push(path);
    Ok(files)
}

fn k0_options(cfg: &RunConfig) -> CliResult<K0Options> {
    let mut opts = K0Options::default();
    if cfg.grid.hurst.is_some() {
        opts.hurst_axis = cfg.hurst_axis()?;
    }
    Ok(opts)
}

#[derive(Serialize)]
struct K0Summary {
    model: SdeModel,
    draws: usize,
    rejection_rate: f64,
    hurst_marginal: AxisSummary,
    coordinates: Vec<CoordinateSummary>,
}

fn infer_k0(cfg: &RunConfig, series: &Series, dir: &Path, manifest: &Manifest) -> CliResult<Vec<PathBuf>> {
    let opts = k0_options(cfg)?;
    let mut rng = seeded(cfg.seed, 0);
    let x = &series.values;
    let post = match cfg.model {
        SdeModel::Fou => fou_k0_posterior(x, cfg.dt, &ConjugatePrior::Noninformative, cfg.iterations, &opts, &mut rng)?,
        SdeModel::Fcir => {
            unit_scale(SdeModel::Fcir, x)?;
            fcir_k0_posterior(x, cfg.dt, &ConjugatePrior::Noninformative, cfg.iterations, &opts, &mut rng)?
        }
    };
    let [a, b] = cfg.model.theta_names();
    let names = [a, b, "sigma", "hurst"];
    let (header, traces) = draws_table(&names, &post.draws);
    let diag = chain_diagnostics(&names, &traces, cfg.diagnostics.max_lag);
    let files = [
        dir.join("draws.csv"),
        dir.join("marginal_hurst.csv"),
        dir.join("diagnostics.csv"),
        dir.join("summary.json"),
    ];
    write_draws(&files[0], &header, &traces)?;
    write_marginal(&files[1], "hurst", &post.hurst)?;
    write_acf(&files[2], &diag)?;
    let summary = K0Summary {
        model: cfg.model,
        draws: post.draws.len(),
        rejection_rate: post.rejection_rate,
        hurst_marginal: AxisSummary::new("hurst", &post.hurst),
        coordinates: coordinate_summaries(&diag),
    };
    write_json(&files[3], &WithManifest { manifest, body: summary })?;
    Ok(files.to_vec())
}

/// Window start indices. With a stride the windows are `0, s, 2s, …`;
/// otherwise `count` starts spread evenly from the first to the last
/// possible position (every position if there are fewer than `count`).
pub fn window_starts(n: usize, window: usize, stride: Option<usize>, count: usize) -> Vec<usize> {
    assert!(window <= n && window > 0);
    let span = n - window;
    match stride {
        Some(s) => (0..=span).step_by(s.max(1)).collect(),
        None if count > span => (0..=span).collect(),
        None if count == 1 => vec![0],
        None => (0..count).map(|i| (i * span + (count - 1) / 2) / (count - 1)).collect(),
    }
}

#[derive(Debug, Clone)]
struct WindowRow {
    index: usize,
    start: usize,
    end_time: String,
    mean: f64,
    q025: f64,
    q975: f64,
    rejection_rate: f64,
}

#[derive(Serialize)]
struct RollingSummary {
    model: SdeModel,
    series_length: usize,
    window: usize,
    windows: usize,
    skipped: usize,
    mean_stride: f64,
}

fn window_posterior(cfg: &RunConfig, x: &[f64], opts: &K0Options, rng: &mut ChaCha8Rng) -> CliResult<Option<K0Posterior>> {
    if let Some(bad) = x.iter().find(|v| !(**v > 0.0)) {
        let scale = if cfg.model == SdeModel::Fcir { "fCIR" } else { "log-scale fOU" };
        log::warn!("skipping window: {scale} needs positive values, found {bad}");
        return Ok(None);
    }
    let prior = ConjugatePrior::Noninformative;
    let draws = cfg.rolling.draws;
    Ok(Some(match cfg.model {
        SdeModel::Fcir => fcir_k0_posterior(x, cfg.dt, &prior, draws, opts, rng)?,
        SdeModel::Fou => {
            let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
            fou_k0_posterior(&lx, cfg.dt, &prior, draws, opts, rng)?
        }
    }))
}

fn rolling(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let series = input_series(cfg)?;
    let w = cfg.rolling.window;
    if w > series.len() {
        return Err(CliError::Config(format!("window {w} is longer than the series ({} points)", series.len())));
    }
    let dir = out_dir(cfg)?;
    let opts = k0_options(cfg)?;
    let starts = window_starts(series.len(), w, cfg.rolling.stride, cfg.rolling.windows);
    log::info!("{} windows of {w} points", starts.len());
    let rows: Vec<Option<WindowRow>> = starts
        .par_iter()
        .enumerate()
        .map(|(index, &start)| {
            let mut rng = seeded(cfg.seed, index as u64);
            let end = start + w;
            let Some(post) = window_posterior(cfg, &series.values[start..end], &opts, &mut rng)? else {
                log::warn!("window {index} ending {} skipped", series.times[end - 1]);
                return Ok(None);
            };
            let mut h = post.hurst_draws();
            h.sort_by(f64::total_cmp);
            Ok(Some(WindowRow {
                index,
                start,
                end_time: series.times[end - 1].clone(),
                mean: h.iter().sum::<f64>() / h.len() as f64,
                q025: quantile(&h, 0.025),
                q975: quantile(&h, 0.975),
                rejection_rate: post.rejection_rate,
            }))
        })
        .collect::<CliResult<_>>()?;
    let kept: Vec<WindowRow> = rows.iter().flatten().cloned().collect();
    let csv = dir.join("rolling.csv");
    write_csv(
        &csv,
        &["window", "start", "end_time", "hurst_mean", "hurst_q025", "hurst_q975", "rejection_rate"],
        kept.iter().map(|r| {
            [
                r.index.to_string(),
                r.start.to_string(),
                r.end_time.clone(),
                fmt(r.mean),
                fmt(r.q025),
                fmt(r.q975),
                fmt(r.rejection_rate),
            ]
        }),
    )?;
    let mean_stride = match starts.len() {
        0 | 1 => 0.0,
        k => (starts[k - 1] - starts[0]) as f64 / (k - 1) as f64,
    };
    let summary = RollingSummary {
        model: cfg.model,
        series_length: series.len(),
        window: w,
        windows: starts.len(),
        skipped: starts.len() - kept.len(),
        mean_stride,
    };
    let json = dir.join("rolling.json");
    let manifest = Manifest::new(CommandKind::Rolling, cfg);
    write_json(&json, &WithManifest { manifest: &manifest, body: summary })?;
    Ok(vec![csv, json])
}

#[derive(Serialize)]
struct DemoCell {
    hurst: f64,
    n_steps: usize,
    runs: usize,
    /// Runs with Euler terminal value below `1e-6`.
    collapsed: usize,
    /// Runs with Euler terminal value within a factor 2 of `exp(B_1)`.
    within_factor_2: usize,
}

#[derive(Serialize)]
struct DemoSummary {
    cells: Vec<DemoCell>,
}

fn demo_failure(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let dir = out_dir(cfg)?;
    let d = &cfg.demo;
    let mut jobs = Vec::new();
    for &h in &d.hurst {
        for &n in &d.n_steps {
            for run in 0..d.runs {
                jobs.push((h, n, run, jobs.len() / d.runs.max(1)));
            }
        }
    }
    let results: Vec<(f64, usize, usize, f64, f64)> = jobs
        .par_iter()
        .map(|&(h, n, run, cell)| {
            let mut rng = seeded(cfg.seed.wrapping_add(run as u64), cell as u64);
            let f = geometric_euler_failure_demo(h, n, &mut rng)?;
            Ok((h, n, run, f.euler, f.exact))
        })
        .collect::<CliResult<_>>()?;
    let csv = dir.join("demo_failure.csv");
    write_csv(
        &csv,
        &["hurst", "n_steps", "run", "euler", "exact"],
        results.iter().map(|(h, n, r, e, x)| [fmt(*h), n.to_string(), r.to_string(), fmt(*e), fmt(*x)]),
    )?;
    let cells = results
        .chunks(d.runs.max(1))
        .filter(|c| !c.is_empty())
        .map(|c| DemoCell {
            hurst: c[0].0,
            n_steps: c[0].1,
            runs: c.len(),
            collapsed: c.iter().filter(|r| r.3 < 1e-6).count(),
            within_factor_2: c.iter().filter(|r| (0.5..=2.0).contains(&(r.3 / r.4))).count(),
        })
        .collect();
    let json = dir.join("demo_failure.json");
    let manifest = Manifest::new(CommandKind::DemoFailure, cfg);
    write_json(&json, &WithManifest { manifest: &manifest, body: DemoSummary { cells } })?;
    Ok(vec![csv, json])
}

/// Reads every column but `iteration` of a draws CSV.
fn read_draws(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<f64>>)> {
    let data_err = |e: &dyn std::fmt::Display| CliError::Data(format!("{}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| data_err(&e))?;
    let headers = rdr.headers().map_err(|e| data_err(&e))?.clone();
    let cols: Vec<usize> = (0..headers.len()).filter(|&i| &headers[i] != "iteration").collect();
    if cols.is_empty() {
        return Err(data_err(&"no parameter columns"));
    }
    let names = cols.iter().map(|&i| headers[i].to_string()).collect();
    let mut traces = vec![Vec::new(); cols.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| data_err(&e))?;
        for (t, &i) in traces.iter_mut().zip(&cols) {
            let raw = rec.get(i).unwrap_or("");
            let v = raw
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| data_err(&format!("line {}: bad value '{raw}'", row + 2)))?;
            t.push(v);
        }
    }
    Ok((names, traces))
}

#[derive(Serialize)]
struct DiagnosticsSummary {
    n_draws: usize,
    coordinates: Vec<CoordinateSummary>,
}

fn diagnostics(cfg: &RunConfig) -> CliResult<Vec<PathBuf>> {
    let (names, traces) = read_draws(cfg.input.as_deref().expect("validated input"))?;
    let dir = out_dir(cfg)?;
    let diag = chain_diagnostics(&names, &traces, cfg.diagnostics.max_lag);
    let files = [dir.join("diagnostics.csv"), dir.join("diagnostics.json")];
    write_acf(&files[0], &diag)?;
    let manifest = Manifest::new(CommandKind::Diagnostics, cfg);
    let summary = DiagnosticsSummary { n_draws: diag.n_draws, coordinates: coordinate_summaries(&diag) };
    write_json(&files[1], &WithManifest { manifest: &manifest, body: summary })?;
    Ok(files.to_vec())
}
