//! `qng`: boundaries, thresholds, simulation, estimation and fitting from the
//! command line. Reports are JSON; plot data is CSV.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use qng_core::estimation::ml::{em_estimate, Binning, EmOptions, HistogramPOVM};
use qng_core::estimation::{estimate_pn_antisqueezed, scan_witness_with, PhotonStats};
use qng_core::fit::{fit_with, FitPoint, FitSpec};
use qng_core::fock::{antisqueeze_trajectory, loss_trajectory, threshold_curve};
use qng_core::gaussian::{model_trajectory, parse_flat_config, ConditionalState, ModelParams};
use qng_core::homodyne::{generate_dataset, read_dataset, write_dataset, QuadratureDataset};
use qng_core::witness::{classical_bound, coherent_boundary, gaussian_bound, gaussian_boundary, SlopeSearch};
use qng_core::Execution;

use output::{CliError, Csv};

#[derive(Parser, Debug)]
#[command(name = "qng", version, about = "Quantum non-Gaussianity witnesses from homodyne data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Gaussian or coherent-state boundary curve, or the witness bounds.
    Boundary(BoundaryArgs),
    /// Threshold transmittances with and without anti-squeezing.
    Thresholds(ThresholdArgs),
    /// Loss, anti-squeezing or model trajectories in the (p0, p1) plane.
    Trajectory(TrajectoryArgs),
    /// Simulate a phase-binned homodyne dataset.
    Simulate(SimulateArgs),
    /// Pattern-function estimates of p0(s), p1(s).
    Estimate(EstimateArgs),
    /// Optimal witness over slopes and anti-squeezing values.
    Witness(WitnessArgs),
    /// Maximum-likelihood photon-number distribution.
    Ml(MlArgs),
    /// Fit the preparation model to estimated trajectories.
    Fit(FitArgs),
}

#[derive(Args, Debug, Serialize)]
struct OutputArgs {
    /// Primary output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON report file for commands whose primary output is CSV.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum BoundaryKind {
    Gaussian,
    Coherent,
    /// `W_G(a)` and `W_cl(a)` over a slope range.
    Bounds,
}

#[derive(Args, Debug, Serialize)]
struct BoundaryArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    kind: BoundaryKind,
    /// Largest squeezing (or mean photon number for the coherent curve).
    #[arg(long, default_value_t = 3.0)]
    r_max: f64,
    #[arg(long, default_value_t = 300)]
    points: usize,
    /// Slope range `lo:hi` for `--kind bounds`.
    #[arg(long, default_value = "-5:0.999", allow_hyphen_values = true)]
    a_range: String,
    #[command(flatten)]
    #[serde(skip)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct ThresholdArgs {
    /// Squeezing grid `start:step:stop`.
    #[arg(long, default_value = "0.05:0.05:2", allow_hyphen_values = true)]
    r_grid: String,
    #[command(flatten)]
    #[serde(skip)]
    output: OutputArgs,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum TrajectoryKind {
    /// Lossy squeezed single photon over a transmittance grid.
    Loss,
    /// Lossy squeezed single photon over an anti-squeezing grid.
    Antisqueeze,
    /// Covariance-matrix model over an anti-squeezing grid.
    Model,
}

#[derive(Args, Debug, Serialize)]
struct TrajectoryArgs {
    #[arg(long, value_enum, default_value = "loss")]
    kind: TrajectoryKind,
    #[arg(long, default_value_t = 0.5)]
    r: f64,
    /// Transmittance for `--kind antisqueeze`.
    #[arg(long, default_value_t = 0.4)]
    eta: f64,
    #[arg(long, default_value = "0:0.01:1", allow_hyphen_values = true)]
    eta_grid: String,
    #[arg(long, default_value = "0:0.01:1", allow_hyphen_values = true)]
    s_grid: String,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    #[serde(skip)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct ModelArgs {
    /// Flat `key = value` parameter file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Parameter override `key=value`, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Number of phase bins.
    #[arg(long = "K", default_value_t = 40)]
    #[serde(rename = "K")]
    k: usize,
    /// Samples per bin.
    #[arg(long = "M", default_value_t = 200)]
    #[serde(rename = "M")]
    m: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dataset CSV to write.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct EstimateArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "0:0.05:0.4", allow_hyphen_values = true)]
    s_grid: String,
    /// Single anti-squeezing value, replacing the grid.
    #[arg(long, allow_hyphen_values = true)]
    s: Option<f64>,
    /// CSV of the estimates per s.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct WitnessArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "0:0.05:0.4", allow_hyphen_values = true)]
    s_grid: String,
    #[arg(long, default_value = "-5:0.999", allow_hyphen_values = true)]
    a_range: String,
    /// CSV of `s, a_opt, W, deltaW, WG, WR`.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct MlArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    s: f64,
    #[arg(long, default_value_t = 20)]
    n_max: usize,
    /// Histogram `dx:min:max`.
    #[arg(long, default_value = "0.1:-6:6", allow_hyphen_values = true)]
    bins: String,
    #[arg(long, default_value_t = 200_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-13)]
    tol: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Fit configuration: model keys, bounds, restarts.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "0:0.05:0.4", allow_hyphen_values = true)]
    s_grid: String,
    /// Restart seed, overriding the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV of estimates and fitted trajectory.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_floats(text: &str, what: &str, count: usize) -> Result<Vec<f64>, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != count {
        return Err(CliError::validation(format!("{what} `{text}` needs {count} colon-separated numbers")));
    }
    parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| CliError::validation(format!("{what} `{text}`: `{p}` is not a number"))))
        .collect()
}

/// Inclusive grid `start:step:stop`.
fn parse_grid(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    let v = parse_floats(text, what, 3)?;
    let (start, step, stop) = (v[0], v[1], v[2]);
    if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
        return Err(CliError::validation(format!("{what} `{text}` needs step > 0 and stop >= start")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if n > 1_000_000 {
        return Err(CliError::validation(format!("{what} `{text}` has too many points")));
    }
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

fn parse_range(text: &str, what: &str) -> Result<(f64, f64), CliError> {
    let v = parse_floats(text, what, 2)?;
    if !(v[0] < v[1]) {
        return Err(CliError::validation(format!("{what} `{text}` needs lo < hi")));
    }
    Ok((v[0], v[1]))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(format!("{}: {e}", path.display())))
}

/// Configuration file merged with `--set` overrides, as flat config text.
fn config_text(config: Option<&Path>, overrides: &[String]) -> Result<String, CliError> {
    let mut table = match config {
        Some(p) => parse_flat_config(&read_text(p)?)?,
        None => Vec::new(),
    };
    for o in overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| CliError::validation(format!("override `{o}` must be key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        let v: f64 = v.parse().map_err(|_| CliError::validation(format!("override `{o}`: `{v}` is not a number")))?;
        let replaced: &[&str] = if k == "T" || k == "R" { &["T", "R"] } else { &[k] };
        table.retain(|(key, _)| !replaced.contains(&key.as_str()));
        table.push((k.to_string(), v));
    }
    Ok(table.iter().map(|(k, v)| format!("{k} = {v:?}\n")).collect())
}

fn model_params(args: &ModelArgs) -> Result<ModelParams, CliError> {
    Ok(ModelParams::from_config_str(&config_text(args.config.as_deref(), &args.overrides)?, &[])?)
}

fn load_dataset(path: &Path) -> Result<QuadratureDataset, CliError> {
    read_dataset(path).map_err(|e| CliError::from(e).context(&path.display().to_string()))
}

fn report(command: &str, config: impl Serialize, results: impl Serialize) -> serde_json::Value {
    json!({
        "spec_version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "results": results,
    })
}

/// CSV to `--out` (or stdout); the JSON report to `--report`, or to stdout
/// when the CSV went to a file.
fn emit_csv_command(output: &OutputArgs, csv: &Csv, rep: &serde_json::Value) -> Result<(), CliError> {
    output::write_or_print(output.out.as_deref(), &csv.render())?;
    match (&output.report, &output.out) {
        (Some(path), _) => output::write_json(Some(path), rep),
        (None, Some(_)) => output::write_json(None, rep),
        (None, None) => Ok(()),
    }
}

fn boundary(args: &BoundaryArgs) -> Result<(), CliError> {
    if args.points < 2 {
        return Err(CliError::validation("--points must be at least 2"));
    }
    let mut csv;
    match args.kind {
        BoundaryKind::Gaussian | BoundaryKind::Coherent => {
            if !(args.r_max > 0.0) {
                return Err(CliError::validation("--r-max must be positive"));
            }
            csv = Csv::new(&["r", "p0", "p1"]);
            for i in 0..args.points {
                let r = args.r_max * i as f64 / (args.points - 1) as f64;
                let b = match args.kind {
                    BoundaryKind::Gaussian => gaussian_boundary(r)?,
                    _ => coherent_boundary(r)?,
                };
                csv.row(&[b.r, b.p0, b.p1]);
            }
        }
        BoundaryKind::Bounds => {
            let (lo, hi) = parse_range(&args.a_range, "--a-range")?;
            csv = Csv::new(&["a", "WG", "r0", "Wcl"]);
            for i in 0..args.points {
                let a = lo + (hi - lo) * i as f64 / (args.points - 1) as f64;
                let (wg, r0) = gaussian_bound(a)?;
                csv.row(&[a, wg, r0, classical_bound(a)?]);
            }
        }
    }
    emit_csv_command(&args.output, &csv, &report("boundary", args, json!({ "rows": csv.len() })))
}

fn thresholds(args: &ThresholdArgs) -> Result<(), CliError> {
    let grid = parse_grid(&args.r_grid, "--r-grid")?;
    let curve = threshold_curve(&grid, Execution::default())?;
    let mut csv = Csv::new(&["r", "eta_th", "eta_th_s"]);
    for p in &curve {
        csv.row(&[p.r, p.eta_th, p.eta_th_s]);
    }
    emit_csv_command(&args.output, &csv, &report("thresholds", args, &curve))
}

fn trajectory(args: &TrajectoryArgs) -> Result<(), CliError> {
    let (csv, resolved) = match args.kind {
        TrajectoryKind::Loss => {
            let grid = parse_grid(&args.eta_grid, "--eta-grid")?;
            let mut csv = Csv::new(&["eta", "p0", "p1"]);
            for p in loss_trajectory(args.r, &grid)? {
                csv.row(&[p.eta, p.p0, p.p1]);
            }
            (csv, None)
        }
        TrajectoryKind::Antisqueeze => {
            let grid = parse_grid(&args.s_grid, "--s-grid")?;
            let mut csv = Csv::new(&["s", "p0", "p1"]);
            for (s, p0, p1) in antisqueeze_trajectory(args.r, args.eta, &grid)? {
                csv.row(&[s, p0, p1]);
            }
            (csv, None)
        }
        TrajectoryKind::Model => {
            let params = model_params(&args.model)?;
            let grid = parse_grid(&args.s_grid, "--s-grid")?;
            let mut csv = Csv::new(&["s", "p0", "p1"]);
            for p in model_trajectory(&params, &grid)? {
                csv.row(&[p.s, p.p0, p.p1]);
            }
            (csv, Some(params))
        }
    };
    let config = json!({ "args": args, "model": resolved });
    emit_csv_command(&args.output, &csv, &report("trajectory", config, json!({ "rows": csv.len() })))
}

fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    if args.k == 0 || args.m == 0 {
        return Err(CliError::validation("--K and --M must be positive"));
    }
    let params = model_params(&args.model)?;
    let state = ConditionalState::from_params(&params)?;
    let ds = generate_dataset(&state, args.k, args.m, args.seed)?;
    write_dataset(&ds, &args.out).map_err(|e| CliError::from(e).context(&args.out.display().to_string()))?;
    let rep = report(
        "simulate",
        json!({ "args": args, "model": params }),
        json!({ "N": ds.len(), "K": ds.k(), "p0prime": state.p0prime, "gamma_I": state.gamma_i, "gamma_0": state.gamma_0 }),
    );
    output::write_json(args.report.as_deref(), &rep)
}

fn estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let grid = match args.s {
        Some(s) => vec![s],
        None => parse_grid(&args.s_grid, "--s-grid")?,
    };
    let ds = load_dataset(&args.data)?;
    let stats = grid.iter().map(|&s| estimate_pn_antisqueezed(&ds, s)).collect::<Result<Vec<PhotonStats>, _>>()?;
    if let Some(path) = &args.csv {
        let mut csv = Csv::new(&["s", "p0", "p1", "sd_p0", "sd_p1", "cov01"]);
        for st in &stats {
            csv.row(&[st.s, st.p0, st.p1, st.std_p0(), st.std_p1(), st.cov01]);
        }
        output::write_or_print(Some(path), &csv.render())?;
    }
    output::write_json(args.out.as_deref(), &report("estimate", args, &stats))
}

fn witness(args: &WitnessArgs) -> Result<(), CliError> {
    let grid = parse_grid(&args.s_grid, "--s-grid")?;
    let (a_min, a_max) = parse_range(&args.a_range, "--a-range")?;
    let search = SlopeSearch { a_min, a_max, ..SlopeSearch::default() };
    search.validate()?;
    let ds = load_dataset(&args.data)?;
    let scan = scan_witness_with(&ds, &grid, &search, Execution::default())?;
    if let Some(path) = &args.csv {
        let mut csv = Csv::new(&["s", "a_opt", "W", "deltaW", "WG", "WR"]);
        for r in &scan.reports {
            csv.row(&[r.params.s, r.params.a, r.w, r.delta_w, r.wg, r.wr]);
        }
        output::write_or_print(Some(path), &csv.render())?;
    }
    let best = scan.best_report();
    let results = json!({
        "best": best,
        "s_opt": best.params.s,
        "a_opt": best.params.a,
        "WR": best.wr,
        "scan": scan.reports,
    });
    output::write_json(args.out.as_deref(), &report("witness", args, results))
}

fn ml(args: &MlArgs) -> Result<(), CliError> {
    let b = parse_floats(&args.bins, "--bins", 3)?;
    let binning = Binning { dx: b[0], x_min: b[1], x_max: b[2] };
    let ds = load_dataset(&args.data)?;
    let h = HistogramPOVM::new(&ds, args.s, binning, args.n_max)?;
    let opts = EmOptions { max_iter: args.max_iter, tol: args.tol, ..EmOptions::default() };
    let result = em_estimate(&h.counters, &h.povm, args.n_max, &opts)?;
    let results = json!({ "ml": result, "monotone": result.monotone() });
    output::write_json(args.out.as_deref(), &report("ml", args, results))
}

fn fit(args: &FitArgs) -> Result<(), CliError> {
    let grid = parse_grid(&args.s_grid, "--s-grid")?;
    let ds = load_dataset(&args.data)?;
    let stats = grid.iter().map(|&s| estimate_pn_antisqueezed(&ds, s)).collect::<Result<Vec<PhotonStats>, _>>()?;
    let points: Vec<FitPoint> = stats.iter().map(FitPoint::from).collect();
    let text = match &args.config {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    let mut spec = FitSpec::from_config_str(&text, points)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let result = fit_with(&spec, Execution::default())?;
    if let Some(path) = &args.csv {
        let model = model_trajectory(&result.params, &grid)?;
        let mut csv = Csv::new(&["s", "p0", "p1", "sd_p0", "sd_p1", "p0_fit", "p1_fit"]);
        for (st, m) in stats.iter().zip(&model) {
            csv.row(&[st.s, st.p0, st.p1, st.std_p0(), st.std_p1(), m.p0, m.p1]);
        }
        output::write_or_print(Some(path), &csv.render())?;
    }
    let config = json!({
        "args": args,
        "fixed": spec.base,
        "free": spec.free,
        "restarts": spec.restarts,
        "seed": spec.seed,
        "max_iter": spec.max_iter,
    });
    output::write_json(args.out.as_deref(), &report("fit", config, json!({ "fit": result, "data": spec.data })))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Boundary(a) => boundary(a),
        Command::Thresholds(a) => thresholds(a),
        Command::Trajectory(a) => trajectory(a),
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Witness(a) => witness(a),
        Command::Ml(a) => ml(a),
        Command::Fit(a) => fit(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let informational = matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion);
            let _ = e.print();
            return if informational { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_and_ranges() {
        assert_eq!(parse_grid("0:0.05:0.4", "g").unwrap().len(), 9);
        assert_eq!(parse_grid("0.15:1:0.15", "g").unwrap(), vec![0.15]);
        assert!(parse_grid("0:0:1", "g").is_err());
        assert!(parse_grid("1:0.1:0", "g").is_err());
        assert!(parse_grid("0:x:1", "g").is_err());
        assert_eq!(parse_range("-5:0.999", "a").unwrap(), (-5.0, 0.999));
        assert!(parse_range("1:0", "a").is_err());
    }

    #[test]
    fn overrides_replace_config_keys() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.toml");
        std::fs::write(&path, "Vx = 0.364\nR = 0.077\n").unwrap();
        let text = config_text(Some(&path), &["T=0.9".into(), "Vx=0.4".into()]).unwrap();
        let p = ModelParams::from_config_str(&text, &[]).unwrap();
        assert_eq!((p.vx, p.t), (0.4, 0.9));
        assert!(config_text(None, &["Vx".into()]).is_err());
    }
}
