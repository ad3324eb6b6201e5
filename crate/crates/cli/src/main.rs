use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gasbary::cost::{
    build_cost_with_budget, kernel_from_cost_with_budget, CostMatrix, CostSpec, KernelMatrix,
    MemoryBudget,
};
use gasbary::grid::{centroid_of, GridImage};
use gasbary::ingest::{
    coverage_map, mean_wind, parse_grid, read_wind_csv, windrose_with, write_grid, TimeWindow,
    WindroseConfig, DEFAULT_CALM_THRESHOLD,
};
use gasbary::ot::{barycenter, BarycenterResult, SolverConfig};
use gasbary::render::{render_grid, render_windrose};
use gasbary::synthetic::{arithmetic_mean, generate, ScenarioSpec};
use gasbary::Error;

const EXIT_INVALID: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;
const EXIT_CAPACITY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "gasbary",
    version,
    about = "Optimal-transport averaging of gridded gas concentrations"
)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic plume sequence.
    Synth(SynthArgs),
    /// Pixelwise arithmetic mean of grids.
    Mean(MeanArgs),
    /// Unbalanced Wasserstein barycenter of grids.
    Barycenter(BarycenterArgs),
    /// Windrose histogram of hourly wind records.
    Windrose(WindroseArgs),
    /// Per-pixel count of valid observations.
    Coverage(CoverageArgs),
    /// Render a grid file as a PPM image.
    Render(RenderArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Rotate,
    Drift,
}

#[derive(Args)]
struct SynthArgs {
    scenario: Scenario,
    #[arg(long, default_value_t = 32)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    /// Rotation radius in pixels.
    #[arg(long, default_value_t = 5.0)]
    radius: f64,
    /// Drift per frame in pixels.
    #[arg(long, default_value_t = 1.0)]
    step: f64,
    /// Drift direction: east, west, north, south or "x,y".
    #[arg(long = "dir", default_value = "east")]
    direction: String,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 1.0)]
    amplitude: f64,
    /// Additive noise std relative to the frame peak.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Constant wind "east,north" in m/s stored with every frame.
    #[arg(long, value_parser = parse_pair)]
    wind: Option<[f64; 2]>,
    #[arg(long, short, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value = "frame")]
    prefix: String,
}

#[derive(Args)]
struct MeanArgs {
    /// Grid files or glob patterns.
    #[arg(required = true)]
    inputs: Vec<String>,
    /// Output prefix; writes <out>.grid and <out>.ppm.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    scale: usize,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum CostKind {
    L2,
    Wfr,
    L2w,
}

#[derive(Args)]
struct BarycenterArgs {
    /// Grid files or glob patterns.
    #[arg(required = true)]
    inputs: Vec<String>,
    #[arg(long, value_enum, default_value = "l2")]
    cost: CostKind,
    /// Entropic regularization (default: 1e-2 times the median nonzero cost).
    #[arg(long)]
    lambda: Option<f64>,
    /// Marginal relaxation; "inf" gives balanced transport.
    #[arg(long = "lambda-u", default_value_t = 1.0)]
    lambda_u: f64,
    /// WFR length scale in pixels (default: n/8).
    #[arg(long)]
    delta: Option<f64>,
    /// Wind bias strength for l2w.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Pixels per (m/s) when converting wind to grid units.
    #[arg(long = "wind-scale", default_value_t = 1.0)]
    wind_scale: f64,
    /// Constant wind "east,north" in m/s for every image, overriding metadata.
    #[arg(long, value_parser = parse_pair)]
    wind: Option<[f64; 2]>,
    /// Hourly wind CSV; each image uses the mean over its date.
    #[arg(long = "wind-csv")]
    wind_csv: Option<PathBuf>,
    #[arg(long, default_value_t = 5000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Record the objective every this many iterations (0 disables).
    #[arg(long = "objective-every", default_value_t = 10)]
    objective_every: usize,
    /// Memory budget for dense matrices in GiB.
    #[arg(long = "budget-gib", default_value_t = 8.0)]
    budget_gib: f64,
    /// Output prefix; writes <out>.grid, <out>.ppm and <out>.json.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    scale: usize,
}

#[derive(Args)]
struct WindroseArgs {
    /// CSV with columns timestamp,u,v.
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_CALM_THRESHOLD)]
    calm: f64,
    /// Lower edges of the speed bins, comma separated.
    #[arg(long = "speed-edges", value_delimiter = ',', default_values_t = [0.0, 2.0, 4.0, 6.0, 8.0])]
    speed_edges: Vec<f64>,
    /// Output prefix; writes <out>.csv and <out>.ppm.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 256)]
    size: usize,
}

#[derive(Args)]
struct CoverageArgs {
    #[arg(required = true)]
    inputs: Vec<String>,
    /// Clip counts at this value.
    #[arg(long)]
    clip: Option<u32>,
    /// Output prefix; writes <out>.csv and <out>.ppm.
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    scale: usize,
}

#[derive(Args)]
struct RenderArgs {
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 8)]
    scale: usize,
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [a, b] => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad number '{a}'"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad number '{b}'"))?;
            Ok([a, b])
        }
        _ => Err(format!("expected two comma-separated numbers, got '{s}'")),
    }
}

fn parse_direction(s: &str) -> anyhow::Result<[f64; 2]> {
    let d = match s.to_ascii_lowercase().as_str() {
        "east" | "e" => [1.0, 0.0],
        "west" | "w" => [-1.0, 0.0],
        "north" | "n" => [0.0, 1.0],
        "south" | "s" => [0.0, -1.0],
        other => parse_pair(other).map_err(|e| anyhow!(Error::Config(e)))?,
    };
    let norm = d[0].hypot(d[1]);
    if !(norm > 0.0 && norm.is_finite()) {
        bail!(Error::Config(format!("direction '{s}' has no length")));
    }
    Ok([d[0] / norm, d[1] / norm])
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

/// Expands glob patterns; literal paths pass through. Matches are sorted.
fn expand_inputs(patterns: &[String]) -> anyhow::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in patterns {
        let mut matches: Vec<PathBuf> = glob::glob(p)
            .with_context(|| format!("bad glob pattern '{p}'"))?
            .filter_map(Result::ok)
            .collect();
        if matches.is_empty() {
            bail!(Error::Precondition(format!("no input matches '{p}'")));
        }
        matches.sort();
        out.extend(matches);
    }
    Ok(out)
}

fn load_grids(paths: &[PathBuf]) -> anyhow::Result<Vec<GridImage>> {
    paths
        .iter()
        .map(|p| parse_grid(p).with_context(|| format!("reading {}", p.display())))
        .collect()
}

fn cmd_synth(a: SynthArgs) -> anyhow::Result<u8> {
    let mut spec = match a.scenario {
        Scenario::Rotate => ScenarioSpec::rotate(a.n, a.frames, a.radius),
        Scenario::Drift => {
            ScenarioSpec::drift(a.n, a.frames, a.step, parse_direction(&a.direction)?)
        }
    };
    spec.sigma = a.sigma;
    spec.amplitude = a.amplitude;
    spec.noise = a.noise;
    spec.seed = a.seed;
    spec.wind = a.wind;
    let frames = generate(&spec)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let width = frames.len().saturating_sub(1).to_string().len();
    for (k, g) in frames.iter().enumerate() {
        let path = a.out.join(format!("{}_{k:0width$}.grid", a.prefix));
        write_grid(g, &path).with_context(|| format!("writing {}", path.display()))?;
    }
    println!("wrote {} frames to {}", frames.len(), a.out.display());
    Ok(0)
}

fn cmd_mean(a: MeanArgs) -> anyhow::Result<u8> {
    let images = load_grids(&expand_inputs(&a.inputs)?)?;
    let mean = arithmetic_mean(&images)?;
    ensure_parent(&a.out)?;
    write_grid(&mean, with_ext(&a.out, "grid"))?;
    render_grid(&mean, a.scale)?.write_ppm(with_ext(&a.out, "ppm"))?;
    println!(
        "mean of {} images written to {}.grid",
        images.len(),
        a.out.display()
    );
    Ok(0)
}

#[derive(Serialize)]
struct ImageReport {
    path: String,
    mass: f64,
    value: f64,
    marginal_gap: (f64, f64),
    wind_px: Option<[f64; 2]>,
}

#[derive(Serialize)]
struct Report {
    cost: CostKind,
    n: usize,
    lambda: f64,
    #[serde(serialize_with = "serialize_relaxation")]
    lambda_u: f64,
    delta: Option<f64>,
    t: Option<f64>,
    tol: f64,
    max_iters: usize,
    iterations: usize,
    converged: bool,
    elapsed_seconds: f64,
    dense_matrix_bytes: u64,
    total_mass: f64,
    centroid: Option<(f64, f64)>,
    objective_trace: Vec<(usize, f64)>,
    images: Vec<ImageReport>,
}

fn serialize_relaxation<S: serde::Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn image_winds(
    a: &BarycenterArgs,
    images: &[GridImage],
    paths: &[PathBuf],
) -> anyhow::Result<Vec<[f64; 2]>> {
    let records = a.wind_csv.as_ref().map(read_wind_csv).transpose()?;
    images
        .iter()
        .zip(paths)
        .map(|(g, p)| {
            let mps = if let Some(w) = a.wind {
                w
            } else if let Some(records) = &records {
                let date = g.meta.date.as_deref().ok_or_else(|| {
                    anyhow!(Error::Precondition(format!(
                        "{} has no date to match wind records",
                        p.display()
                    )))
                })?;
                let day = chrono_day(date)?;
                mean_wind(records, day).with_context(|| format!("wind for {}", p.display()))?
            } else {
                g.meta.wind.ok_or_else(|| {
                    anyhow!(Error::Precondition(format!(
                        "{} has no wind metadata; pass --wind or --wind-csv",
                        p.display()
                    )))
                })?
            };
            Ok([mps[0] * a.wind_scale, mps[1] * a.wind_scale])
        })
        .collect()
}

fn chrono_day(date: &str) -> anyhow::Result<TimeWindow> {
    let t = gasbary::ingest::parse_timestamp(date)?;
    Ok(TimeWindow::day(t.date_naive()))
}

fn cmd_barycenter(a: BarycenterArgs) -> anyhow::Result<u8> {
    let paths = expand_inputs(&a.inputs)?;
    if paths.len() < 2 {
        bail!(Error::Precondition(
            "a barycenter needs at least two inputs".into()
        ));
    }
    let images = load_grids(&paths)?;
    let n = images[0].n();
    if let Some(g) = images.iter().find(|g| g.n() != n) {
        bail!(Error::Shape(format!("inputs have sides {n} and {}", g.n())));
    }
    if !(a.wind_scale.is_finite() && a.wind_scale > 0.0) {
        bail!(Error::Config("--wind-scale must be positive".into()));
    }
    let budget = MemoryBudget::from_gib(a.budget_gib);
    let started = Instant::now();

    let delta = a.delta.unwrap_or(n as f64 / 8.0);
    let winds = match a.cost {
        CostKind::L2w => Some(image_winds(&a, &images, &paths)?),
        _ => None,
    };
    let specs: Vec<CostSpec> = match &winds {
        Some(ws) => ws
            .iter()
            .map(|&wind| CostSpec::WindBiased { wind, t: a.t })
            .collect(),
        None => {
            let spec = match a.cost {
                CostKind::Wfr => CostSpec::Wfr { delta },
                _ => CostSpec::Euclidean,
            };
            vec![spec; images.len()]
        }
    };
    for s in &specs {
        s.validate()?;
    }
    if let Some(l) = a.lambda {
        SolverConfig::new(l, a.lambda_u).validate()?;
    }

    // one cost per distinct spec
    let mut costs: Vec<(CostSpec, Arc<CostMatrix>)> = Vec::new();
    for s in &specs {
        if !costs.iter().any(|(t, _)| t == s) {
            costs.push((*s, Arc::new(build_cost_with_budget(*s, n, budget)?)));
        }
    }
    let lambda = match a.lambda {
        Some(l) => l,
        None => 1e-2 * costs[0].1.median_nonzero().unwrap_or(1.0),
    };
    let cfg = SolverConfig {
        lambda,
        lambda_u: a.lambda_u,
        max_iters: a.iters,
        tol: a.tol,
        objective_every: a.objective_every,
        ..SolverConfig::new(lambda, a.lambda_u)
    };
    cfg.validate()?;
    let mut kernels_by_spec: Vec<(CostSpec, Arc<KernelMatrix>)> = Vec::new();
    for (s, c) in &costs {
        kernels_by_spec.push((
            *s,
            Arc::new(kernel_from_cost_with_budget(c.clone(), lambda, budget)?),
        ));
    }
    let kernels: Vec<Arc<KernelMatrix>> = specs
        .iter()
        .map(|s| {
            kernels_by_spec
                .iter()
                .find(|(t, _)| t == s)
                .expect("kernel built")
                .1
                .clone()
        })
        .collect();
    let dense_bytes = kernels_by_spec
        .iter()
        .map(|(s, k)| {
            let one = MemoryBudget::dense_bytes(n);
            if s.is_separable() || k.is_streaming() {
                one
            } else {
                2 * one
            }
        })
        .sum();

    let weights = gasbary::ot::uniform_weights(images.len());
    let result = barycenter(&images, &kernels, &weights, &cfg)?;
    let elapsed = started.elapsed().as_secs_f64();

    let g = GridImage::from_values(n, result.g_bar.clone())?;
    ensure_parent(&a.out)?;
    write_grid(&g, with_ext(&a.out, "grid"))?;
    render_grid(&g, a.scale)?.write_ppm(with_ext(&a.out, "ppm"))?;
    let report = build_report(
        &a,
        &paths,
        &images,
        winds.as_deref(),
        &result,
        n,
        lambda,
        delta,
        elapsed,
        dense_bytes,
    );
    fs::write(
        with_ext(&a.out, "json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;

    println!(
        "barycenter of {} images: {} iterations, converged={}, mass={:.6}, {:.2}s",
        images.len(),
        result.iterations,
        result.converged,
        report.total_mass,
        elapsed
    );
    if result.converged {
        Ok(0)
    } else {
        eprintln!(
            "warning: barycenter did not converge within {} iterations",
            a.iters
        );
        Ok(EXIT_NOT_CONVERGED)
    }
}

#[allow(clippy::too_many_arguments)]
fn build_report(
    a: &BarycenterArgs,
    paths: &[PathBuf],
    images: &[GridImage],
    winds: Option<&[[f64; 2]]>,
    r: &BarycenterResult,
    n: usize,
    lambda: f64,
    delta: f64,
    elapsed: f64,
    dense_bytes: u64,
) -> Report {
    let total_mass = r.g_bar.iter().sum();
    Report {
        cost: a.cost,
        n,
        lambda,
        lambda_u: a.lambda_u,
        delta: matches!(a.cost, CostKind::Wfr).then_some(delta),
        t: matches!(a.cost, CostKind::L2w).then_some(a.t),
        tol: a.tol,
        max_iters: a.iters,
        iterations: r.iterations,
        converged: r.converged,
        elapsed_seconds: elapsed,
        dense_matrix_bytes: dense_bytes,
        total_mass,
        centroid: centroid_of(&r.g_bar, n).ok(),
        objective_trace: r.objective_trace.clone(),
        images: paths
            .iter()
            .zip(images)
            .zip(&r.per_image)
            .enumerate()
            .map(|(k, ((p, g), d))| ImageReport {
                path: p.display().to_string(),
                mass: g.total_mass(),
                value: d.value,
                marginal_gap: d.marginal_gap,
                wind_px: winds.map(|w| w[k]),
            })
            .collect(),
    }
}

fn cmd_windrose(a: WindroseArgs) -> anyhow::Result<u8> {
    let records =
        read_wind_csv(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    if a.speed_edges.is_empty() || a.speed_edges.windows(2).any(|w| w[1] <= w[0]) {
        bail!(Error::Config(
            "--speed-edges must be strictly increasing".into()
        ));
    }
    let cfg = WindroseConfig {
        speed_edges: a.speed_edges,
        calm_threshold: a.calm,
    };
    let h = windrose_with(&records, &cfg);
    ensure_parent(&a.out)?;
    fs::write(with_ext(&a.out, "csv"), h.to_csv())?;
    render_windrose(&h, a.size)?.write_ppm(with_ext(&a.out, "ppm"))?;
    println!("{} records, {} calm", h.total, h.calm);
    Ok(0)
}

fn cmd_coverage(a: CoverageArgs) -> anyhow::Result<u8> {
    let images = load_grids(&expand_inputs(&a.inputs)?)?;
    let map = coverage_map(&images, a.clip)?;
    ensure_parent(&a.out)?;
    fs::write(with_ext(&a.out, "csv"), map.to_csv())?;
    let g = GridImage::from_values(map.n, map.as_f64())?;
    render_grid(&g, a.scale)?.write_ppm(with_ext(&a.out, "ppm"))?;
    println!(
        "coverage over {} images, max count {}",
        images.len(),
        map.counts.iter().max().unwrap_or(&0)
    );
    Ok(0)
}

fn cmd_render(a: RenderArgs) -> anyhow::Result<u8> {
    let g = parse_grid(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    ensure_parent(&a.out)?;
    render_grid(&g, a.scale)?
        .write_ppm(&a.out)
        .with_context(|| format!("writing {}", a.out.display()))?;
    Ok(0)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Capacity { .. }) => EXIT_CAPACITY,
        Some(Error::Io(_)) => 1,
        Some(_) => EXIT_INVALID,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    }
    let outcome = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Mean(a) => cmd_mean(a),
        Command::Barycenter(a) => cmd_barycenter(a),
        Command::Windrose(a) => cmd_windrose(a),
        Command::Coverage(a) => cmd_coverage(a),
        Command::Render(a) => cmd_render(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
