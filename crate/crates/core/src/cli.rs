//! Command-line front end: `sample → propagate → fit → eval/boxprob`, the two
//! Lorenz reproductions, and manifest replay.
//!
//! Every subcommand that writes files also writes a [`RunManifest`] next to its
//! output. `snp replay <manifest>` re-runs the recorded command; relative paths are
//! resolved against the current directory, as they were originally.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::density::SnpDensity;
use crate::ensemble::{
    propagate_ensemble, sample_gaussian, GaussianInitial, LorenzParams, SampleEnsemble,
};
use crate::error::{Result, SnpError};
use crate::experiments::{
    derive_seed, mc_trials, mc_whitened_box, separated_modes, LorenzFixture, TrialStats,
    WhitenedBox,
};
use crate::fit::{fit_snp_weighted, BranchPolicy, FitConfig, FitReport};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "snp",
    version,
    about = "Seminonparametric densities for Monte Carlo ensembles"
)]
pub struct Cli {
    /// Print a JSON record instead of human-readable text.
    #[arg(long, global = true)]
    pub json: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Draw a Gaussian ensemble.
    Sample(SampleArgs),
    /// Propagate an ensemble through a dynamical system.
    Propagate(PropagateArgs),
    /// Fit an SNP density to an ensemble.
    Fit(FitArgs),
    /// Evaluate a density on a grid.
    Eval(EvalArgs),
    /// Box probability from a density (analytic) or an ensemble (counting).
    Boxprob(BoxprobArgs),
    /// Run one of the Lorenz reference experiments end to end.
    Reproduce(ReproduceArgs),
    /// Re-run the command recorded in a manifest.
    #[serde(skip)]
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(group(clap::ArgGroup::new("covariance").required(true).args(["cov_diag", "cov_file"])))]
pub struct SampleArgs {
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        required = true
    )]
    pub mean: Vec<f64>,
    /// Diagonal of the covariance.
    #[arg(long, value_delimiter = ',')]
    pub cov_diag: Option<Vec<f64>>,
    /// Full covariance matrix, one row per line, comma or whitespace separated.
    #[arg(long)]
    pub cov_file: Option<PathBuf>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Lorenz,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct PropagateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "lorenz")]
    pub system: System,
    #[arg(long, default_value_t = 10.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 28.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 8.0 / 3.0)]
    pub beta: f64,
    #[arg(long)]
    pub tfinal: f64,
    #[arg(long, default_value_t = crate::ensemble::DEFAULT_STEP)]
    pub step: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchArg {
    Both,
    PositiveOnly,
}

impl From<BranchArg> for BranchPolicy {
    fn from(b: BranchArg) -> Self {
        match b {
            BranchArg::Both => BranchPolicy::Both,
            BranchArg::PositiveOnly => BranchPolicy::PositiveOnly,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct FitArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, short = 'K')]
    pub order: usize,
    #[arg(long, value_enum, default_value = "both")]
    pub branch_policy: BranchArg,
    #[arg(long, default_value_t = 500)]
    pub max_iterations: usize,
    #[arg(long)]
    pub out_density: PathBuf,
    #[arg(long)]
    pub out_report: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Pdf,
    Cdf,
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub density: PathBuf,
    #[arg(long, value_enum)]
    pub mode: EvalMode,
    /// Coordinates kept by `marginal` (and by `cdf`, for a marginal CDF).
    #[arg(long, value_delimiter = ',')]
    pub keep: Option<Vec<usize>>,
    /// Per-axis `min:max:count`, axes separated by commas.
    #[arg(long, allow_hyphen_values = true)]
    pub grid: String,
    /// Evaluate the pdf in raw (unwhitened) coordinates.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Whitened coordinates; an ensemble is whitened with its own moments.
    Whitened,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["density", "ensemble"])))]
pub struct BoxprobArgs {
    #[arg(long)]
    pub density: Option<PathBuf>,
    #[arg(long)]
    pub ensemble: Option<PathBuf>,
    /// Per-axis `lower:upper`, axes separated by commas.
    #[arg(long = "box", allow_hyphen_values = true)]
    pub bounds: String,
    /// Coordinates the box constrains; defaults to the first `m`.
    #[arg(long, value_delimiter = ',')]
    pub coords: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value = "whitened")]
    pub frame: Frame,
    /// Also write the result as JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    #[value(name = "density_va", alias = "density-va")]
    DensityVa,
    #[value(name = "quantile_vb", alias = "quantile-vb")]
    QuantileVb,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
pub struct ReproduceArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Record of one run: the fully resolved command plus derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    /// Values derived while running (dimensions, sample counts, ...). Informational.
    #[serde(default)]
    pub resolved: Value,
}

impl RunManifest {
    pub fn new(command: Command, resolved: Value) -> Self {
        Self {
            tool: "snp".into(),
            version: TOOL_VERSION.into(),
            command,
            resolved,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// What a subcommand produced: a line for humans and a record for `--json`.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub text: String,
    pub record: Value,
}

/// `<path>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// 0 success, 2 usage, 3 numeric failure, 4 I/O or malformed files.
pub fn exit_code(err: &SnpError) -> i32 {
    use SnpError::*;
    match err {
        DegenerateEnsemble(_)
        | SingularGradient { .. }
        | NonFiniteObjective { .. }
        | InfeasibleBranch { .. }
        | Divergence { .. }
        | EnsembleDivergence { .. } => 3,
        Io(_) | Json(_) | Parse { .. } | NormalizationMismatch { .. } => 4,
        _ => 2,
    }
}

/// Parses arguments, runs, prints, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli.command) {
        Ok(outcome) => {
            if cli.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&outcome.record).unwrap_or_default()
                );
            } else {
                println!("{}", outcome.text);
            }
            0
        }
        Err(e) => {
            if cli.json {
                println!(
                    "{}",
                    json!({"error": e.to_string(), "exit_code": exit_code(&e)})
                );
            }
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: &Command) -> Result<Outcome> {
    match command {
        Command::Sample(a) => cmd_sample(a),
        Command::Propagate(a) => cmd_propagate(a),
        Command::Fit(a) => cmd_fit(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Boxprob(a) => cmd_boxprob(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Replay(a) => cmd_replay(a),
    }
}

fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn finish(
    command: Command,
    manifest_at: Option<&Path>,
    resolved: Value,
    text: String,
    mut record: Value,
) -> Result<Outcome> {
    let manifest = RunManifest::new(command, resolved);
    if let Some(path) = manifest_at {
        manifest.save(path)?;
    }
    record["manifest"] = serde_json::to_value(&manifest)?;
    Ok(Outcome { text, record })
}

fn read_covariance(path: &Path, d: usize) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| SnpError::Parse {
                    line: i + 1,
                    message: format!("invalid number '{t}'"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != d {
            return Err(SnpError::Parse {
                line: i + 1,
                message: format!("expected {d} entries, found {}", row.len()),
            });
        }
        rows.push(row);
    }
    if rows.len() != d {
        return Err(SnpError::InvalidCovariance(format!(
            "expected {d} rows, found {}",
            rows.len()
        )));
    }
    Ok(DMatrix::from_row_iterator(d, d, rows.into_iter().flatten()))
}

pub fn cmd_sample(a: &SampleArgs) -> Result<Outcome> {
    let d = a.mean.len();
    let init = match (&a.cov_diag, &a.cov_file) {
        (Some(diag), None) => {
            if diag.len() != d {
                return Err(SnpError::DimensionMismatch {
                    expected: d,
                    got: diag.len(),
                });
            }
            GaussianInitial::diagonal(a.mean.clone(), diag)?
        }
        (None, Some(path)) => GaussianInitial::new(a.mean.clone(), read_covariance(path, d)?)?,
        _ => {
            return Err(SnpError::Usage(
                "give exactly one of --cov-diag and --cov-file".into(),
            ))
        }
    };
    let ens = sample_gaussian(&init, a.n, a.seed)?;
    ens.save(&a.out)?;
    let resolved = json!({"dimension": d, "samples": a.n});
    let text = format!("wrote {} samples (d={d}) to {}", a.n, a.out.display());
    let record = json!({"out": a.out, "samples": a.n, "dimension": d});
    finish(
        Command::Sample(a.clone()),
        Some(&manifest_path(&a.out)),
        resolved,
        text,
        record,
    )
}

pub fn cmd_propagate(a: &PropagateArgs) -> Result<Outcome> {
    let ens = SampleEnsemble::load(&a.input)?;
    let prop = match a.system {
        System::Lorenz => {
            if ens.dimension() != 3 {
                return Err(SnpError::DimensionMismatch {
                    expected: 3,
                    got: ens.dimension(),
                });
            }
            let params = LorenzParams {
                s: a.sigma,
                rho: a.rho,
                beta: a.beta,
            };
            propagate_ensemble(&ens, &params.field(), a.tfinal, a.step)?
        }
    };
    prop.save(&a.out)?;
    let resolved = json!({"dimension": ens.dimension(), "samples": ens.len(), "time": prop.time});
    let text = format!(
        "propagated {} points to t={:?}, wrote {}",
        ens.len(),
        prop.time,
        a.out.display()
    );
    let record = json!({"out": a.out, "samples": ens.len(), "time": prop.time});
    finish(
        Command::Propagate(a.clone()),
        Some(&manifest_path(&a.out)),
        resolved,
        text,
        record,
    )
}

pub fn cmd_fit(a: &FitArgs) -> Result<Outcome> {
    let ens = SampleEnsemble::load(&a.input)?;
    let config = FitConfig {
        branch_policy: a.branch_policy.into(),
        max_iterations: a.max_iterations,
        ..FitConfig::with_order(a.order)
    };
    let (density, report) = fit_snp_weighted(&ens.points, &ens.weights, &config)?;
    density.save(&a.out_density)?;
    write_json(&a.out_report, &report)?;
    let resolved = json!({
        "dimension": ens.dimension(),
        "samples": ens.len(),
        "coefficients": density.theta().len(),
        "config": config,
    });
    let text = format!(
        "K={} branch={} objective={:?}, wrote {} and {}",
        a.order,
        report.chosen_branch.name(),
        chosen_objective(&report),
        a.out_density.display(),
        a.out_report.display()
    );
    let record = json!({
        "out_density": a.out_density,
        "out_report": a.out_report,
        "report": report,
    });
    finish(
        Command::Fit(a.clone()),
        Some(&manifest_path(&a.out_density)),
        resolved,
        text,
        record,
    )
}

fn chosen_objective(report: &FitReport) -> f64 {
    match report.chosen_branch {
        crate::fit::Branch::Positive => report.nonlinear_objective_pos,
        crate::fit::Branch::Negative => report.nonlinear_objective_neg.unwrap_or(f64::NAN),
    }
}

/// One axis of a grid spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl Axis {
    pub fn points(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.min];
        }
        let h = (self.max - self.min) / (self.count - 1) as f64;
        (0..self.count).map(|i| self.min + h * i as f64).collect()
    }
}

/// `min:max:count[,min:max:count...]`
pub fn parse_grid(spec: &str) -> Result<Vec<Axis>> {
    let bad = |m: String| SnpError::Usage(format!("invalid grid '{spec}': {m}"));
    spec.split(',')
        .map(|axis| {
            let parts: Vec<&str> = axis.split(':').collect();
            if parts.len() != 3 {
                return Err(bad(format!("axis '{axis}' is not min:max:count")));
            }
            let min: f64 = parts[0]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad min '{}'", parts[0])))?;
            let max: f64 = parts[1]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad max '{}'", parts[1])))?;
            let count: usize = parts[2]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad count '{}'", parts[2])))?;
            if count == 0 || !min.is_finite() || !max.is_finite() || max < min {
                return Err(bad(format!(
                    "axis '{axis}' needs finite min <= max and count >= 1"
                )));
            }
            Ok(Axis { min, max, count })
        })
        .collect()
}

/// `lower:upper[,lower:upper...]`
pub fn parse_box(spec: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let bad = |m: String| SnpError::Usage(format!("invalid box '{spec}': {m}"));
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for axis in spec.split(',') {
        let parts: Vec<&str> = axis.split(':').collect();
        if parts.len() != 2 {
            return Err(bad(format!("axis '{axis}' is not lower:upper")));
        }
        let bound = |t: &str| -> Result<f64> {
            match t.trim() {
                "-inf" => Ok(f64::NEG_INFINITY),
                "inf" | "+inf" => Ok(f64::INFINITY),
                s => s.parse().map_err(|_| bad(format!("bad bound '{s}'"))),
            }
        };
        lower.push(bound(parts[0])?);
        upper.push(bound(parts[1])?);
    }
    Ok((lower, upper))
}

/// Row-major grid values: the last axis varies fastest.
pub fn grid_points(axes: &[Axis]) -> Vec<Vec<f64>> {
    let coords: Vec<Vec<f64>> = axes.iter().map(Axis::points).collect();
    let total: usize = axes.iter().map(|a| a.count).product();
    (0..total)
        .map(|mut flat| {
            let mut p = vec![0.0; axes.len()];
            for k in (0..axes.len()).rev() {
                p[k] = coords[k][flat % axes[k].count];
                flat /= axes[k].count;
            }
            p
        })
        .collect()
}

pub fn grid_csv(names: &[String], value_name: &str, points: &[Vec<f64>], values: &[f64]) -> String {
    let mut out = names.join(",");
    out.push(',');
    out.push_str(value_name);
    out.push('\n');
    for (p, v) in points.iter().zip(values) {
        for x in p {
            out.push_str(&format!("{x:?},"));
        }
        out.push_str(&format!("{v:?}\n"));
    }
    out
}

/// Evaluates `f` on every grid point; order is preserved.
pub fn evaluate_grid<F>(axes: &[Axis], f: F) -> Result<(Vec<Vec<f64>>, Vec<f64>)>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let points = grid_points(axes);
    let values = points
        .par_iter()
        .map(|p| f(p))
        .collect::<Result<Vec<f64>>>()?;
    Ok((points, values))
}

pub fn cmd_eval(a: &EvalArgs) -> Result<Outcome> {
    let density = SnpDensity::load(&a.density)?;
    let axes = parse_grid(&a.grid)?;
    let d = density.dimension();
    let prefix = if a.raw { "x" } else { "z" };
    let check_axes = |n: usize| {
        if axes.len() == n {
            Ok(())
        } else {
            Err(SnpError::Usage(format!(
                "grid has {} axes, expected {n}",
                axes.len()
            )))
        }
    };
    if a.raw && a.mode != EvalMode::Pdf {
        return Err(SnpError::Usage("--raw applies to --mode pdf only".into()));
    }
    let (names, value_name, points, values): (Vec<String>, &str, Vec<Vec<f64>>, Vec<f64>) =
        match (a.mode, &a.keep) {
            (EvalMode::Marginal, None) => {
                return Err(SnpError::Usage("--mode marginal needs --keep".into()))
            }
            (EvalMode::Pdf, Some(_)) => {
                return Err(SnpError::Usage(
                    "--keep needs --mode marginal or cdf".into(),
                ))
            }
            (EvalMode::Pdf, None) => {
                check_axes(d)?;
                let (p, v) = if a.raw {
                    evaluate_grid(&axes, |x| density.pdf(x))?
                } else {
                    evaluate_grid(&axes, |z| density.pdf_whitened(z))?
                };
                let names = (0..d).map(|k| format!("{prefix}{k}")).collect();
                (names, "pdf", p, v)
            }
            (EvalMode::Cdf, None) => {
                check_axes(d)?;
                let (p, v) = evaluate_grid(&axes, |z| density.cdf_whitened(z))?;
                ((0..d).map(|k| format!("z{k}")).collect(), "cdf", p, v)
            }
            (mode, Some(keep)) => {
                let m = density.marginal(keep)?;
                check_axes(keep.len())?;
                let (p, v, name) = if mode == EvalMode::Cdf {
                    let (p, v) = evaluate_grid(&axes, |z| m.cdf(z))?;
                    (p, v, "cdf")
                } else {
                    let (p, v) = evaluate_grid(&axes, |z| m.pdf(z))?;
                    (p, v, "pdf")
                };
                (keep.iter().map(|k| format!("z{k}")).collect(), name, p, v)
            }
        };
    fs::write(&a.out, grid_csv(&names, value_name, &points, &values))?;
    let resolved = json!({
        "dimension": d,
        "order": density.order(),
        "grid": axes.iter().map(|x| json!({"min": x.min, "max": x.max, "count": x.count})).collect::<Vec<_>>(),
    });
    let text = format!("wrote {} grid values to {}", values.len(), a.out.display());
    let record = json!({"out": a.out, "points": values.len()});
    finish(
        Command::Eval(a.clone()),
        Some(&manifest_path(&a.out)),
        resolved,
        text,
        record,
    )
}

pub fn cmd_boxprob(a: &BoxprobArgs) -> Result<Outcome> {
    let (lower, upper) = parse_box(&a.bounds)?;
    let coords = a
        .coords
        .clone()
        .unwrap_or_else(|| (0..lower.len()).collect());
    let (method, probability, dimension) = match (&a.density, &a.ensemble) {
        (Some(path), None) => {
            let density = SnpDensity::load(path)?;
            let p = match a.frame {
                Frame::Whitened => density.box_probability(&lower, &upper, &coords)?,
                Frame::Raw => density.box_probability_raw(&lower, &upper, &coords)?,
            };
            ("analytic_cdf", p, density.dimension())
        }
        (None, Some(path)) => {
            let ens = SampleEnsemble::load(path)?;
            let bx = WhitenedBox {
                lower: lower.clone(),
                upper: upper.clone(),
                coords: coords.clone(),
            };
            let p = match a.frame {
                Frame::Whitened => mc_whitened_box(&ens, &bx)?,
                Frame::Raw => crate::ensemble::mc_box_probability(&ens, &lower, &upper, &coords)?,
            };
            ("mc_count", p, ens.dimension())
        }
        _ => {
            return Err(SnpError::Usage(
                "give exactly one of --density and --ensemble".into(),
            ))
        }
    };
    let mut record = json!({
        "method": method,
        "frame": a.frame,
        "probability": probability,
        "lower": lower,
        "upper": upper,
        "coords": coords,
    });
    if let Some(out) = &a.out {
        write_json(out, &record)?;
    }
    let text = format!("method={method} probability={probability:?}");
    let resolved = json!({"dimension": dimension});
    let manifest = a.out.as_deref().map(manifest_path);
    record["dimension"] = json!(dimension);
    finish(
        Command::Boxprob(a.clone()),
        manifest.as_deref(),
        resolved,
        text,
        record,
    )
}

pub fn cmd_replay(a: &ReplayArgs) -> Result<Outcome> {
    let manifest = RunManifest::load(&a.manifest)?;
    if manifest.version != TOOL_VERSION {
        log::warn!(
            "manifest was written by version {}, replaying with {}",
            manifest.version,
            TOOL_VERSION
        );
    }
    run(&manifest.command)
}

pub fn cmd_reproduce(a: &ReproduceArgs) -> Result<Outcome> {
    fs::create_dir_all(&a.out_dir)?;
    let summary = match a.experiment {
        Experiment::DensityVa => reproduce_density_va(a.seed, &a.out_dir)?,
        Experiment::QuantileVb => reproduce_quantile_vb(a.seed, &a.out_dir)?,
    };
    write_json(a.out_dir.join("summary.json"), &summary)?;
    let text = format!(
        "wrote artifacts and summary.json to {}",
        a.out_dir.display()
    );
    let record = json!({"out_dir": a.out_dir, "summary": summary});
    let manifest = a.out_dir.join("manifest.json");
    finish(
        Command::Reproduce(a.clone()),
        Some(&manifest),
        json!({}),
        text,
        record,
    )
}

/// Orders fitted on the 100-sample density fixture.
pub const VA_ORDERS: [usize; 4] = [4, 6, 8, 10];
pub const VA_SMALL: usize = 100;
pub const VA_LARGE: usize = 1000;
pub const VA_LARGE_ORDER: usize = 10;
/// 400 points on `[-4, 4]` for the whitened x-marginal.
pub const VA_MARGINAL_GRID: Axis = Axis {
    min: -4.0,
    max: 4.0,
    count: 400,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveRow {
    pub order: usize,
    pub samples: usize,
    pub convex_pos: f64,
    pub start_pos: f64,
    pub nonlinear_pos: f64,
    pub convex_neg: Option<f64>,
    pub start_neg: Option<f64>,
    pub nonlinear_neg: Option<f64>,
    pub chosen_branch: crate::fit::Branch,
}

impl ObjectiveRow {
    fn new(order: usize, samples: usize, r: &FitReport) -> Self {
        Self {
            order,
            samples,
            convex_pos: r.convex_objective_pos,
            start_pos: r.start_objective_pos,
            nonlinear_pos: r.nonlinear_objective_pos,
            convex_neg: r.convex_objective_neg,
            start_neg: r.start_objective_neg,
            nonlinear_neg: r.nonlinear_objective_neg,
            chosen_branch: r.chosen_branch,
        }
    }
}

fn save_fit(dir: &Path, stem: &str, density: &SnpDensity, report: &FitReport) -> Result<()> {
    density.save(dir.join(format!("{stem}.density.json")))?;
    write_json(dir.join(format!("{stem}.report.json")), report)
}

fn write_marginal(
    dir: &Path,
    name: &str,
    density: &SnpDensity,
    keep: &[usize],
    axes: &[Axis],
) -> Result<Vec<f64>> {
    let m = density.marginal(keep)?;
    let (points, values) = evaluate_grid(axes, |z| m.pdf(z))?;
    let names: Vec<String> = keep.iter().map(|k| format!("z{k}")).collect();
    fs::write(dir.join(name), grid_csv(&names, "pdf", &points, &values))?;
    Ok(values)
}

fn reproduce_density_va(seed: u64, dir: &Path) -> Result<Value> {
    let fixture = LorenzFixture::density();
    let (init_small, prop_small) = fixture.ensemble(VA_SMALL, seed)?;
    init_small.save(dir.join(format!("n{VA_SMALL}_initial.csv")))?;
    prop_small.save(dir.join(format!("n{VA_SMALL}_propagated.csv")))?;
    let (init_large, prop_large) = fixture.ensemble(VA_LARGE, seed)?;
    init_large.save(dir.join(format!("n{VA_LARGE}_initial.csv")))?;
    prop_large.save(dir.join(format!("n{VA_LARGE}_propagated.csv")))?;

    let jobs: Vec<(usize, &SampleEnsemble)> = VA_ORDERS
        .iter()
        .map(|&k| (k, &prop_small))
        .chain(std::iter::once((VA_LARGE_ORDER, &prop_large)))
        .collect();
    let fits = jobs
        .par_iter()
        .map(|&(k, ens)| fit_snp_weighted(&ens.points, &ens.weights, &FitConfig::with_order(k)))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for (&(k, ens), (density, report)) in jobs.iter().zip(&fits) {
        save_fit(dir, &format!("n{}_k{k}", ens.len()), density, report)?;
        rows.push(ObjectiveRow::new(k, ens.len(), report));
    }

    let (large, _) = fits.last().expect("large fit present");
    let stem = format!("n{VA_LARGE}_k{VA_LARGE_ORDER}");
    let xs = VA_MARGINAL_GRID.points();
    let marginal_x = write_marginal(
        dir,
        &format!("{stem}_marginal_x.csv"),
        large,
        &[0],
        &[VA_MARGINAL_GRID],
    )?;
    let plane = Axis {
        min: -3.5,
        max: 3.5,
        count: 101,
    };
    write_marginal(
        dir,
        &format!("{stem}_marginal_xy.csv"),
        large,
        &[0, 1],
        &[plane, plane],
    )?;
    write_marginal(
        dir,
        &format!("{stem}_marginal_xz.csv"),
        large,
        &[0, 2],
        &[plane, plane],
    )?;
    let modes: Vec<Value> = separated_modes(&marginal_x, 0.2)
        .into_iter()
        .map(|i| json!({"z": xs[i], "pdf": marginal_x[i]}))
        .collect();
    let positive_x = (0..prop_large.len())
        .filter(|&i| prop_large.points[(i, 0)] > 0.0)
        .count();

    Ok(json!({
        "experiment": "density_va",
        "seed": seed,
        "fixture": fixture,
        "mean": crate::experiments::LORENZ_MEAN,
        "objectives": rows,
        "x_marginal": {
            "samples": VA_LARGE,
            "order": VA_LARGE_ORDER,
            "grid": {"min": VA_MARGINAL_GRID.min, "max": VA_MARGINAL_GRID.max, "count": VA_MARGINAL_GRID.count},
            "separated_modes": modes,
        },
        "propagated_x_sign_counts": {"positive": positive_x, "nonpositive": prop_large.len() - positive_x},
    }))
}

pub const VB_ORDERS: [usize; 2] = [6, 8];
pub const VB_SNP_SAMPLES: [usize; 2] = [100, 1000];
pub const VB_MC_SAMPLES: [usize; 3] = [100, 10_000, 1_000_000];
pub const VB_REFERENCE_SAMPLES: usize = 1_000_000;
pub const VB_TRIALS: usize = 10;

/// Seed of trial `t` of size `n` in the box-probability experiment.
pub fn vb_trial_seed(seed: u64, n: usize, t: usize) -> u64 {
    derive_seed(seed, ((n as u64) << 8) | t as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub method: String,
    pub order: Option<usize>,
    pub samples: usize,
    pub stats: TrialStats,
    pub mean_abs_error: f64,
}

fn reproduce_quantile_vb(seed: u64, dir: &Path) -> Result<Value> {
    let fixture = LorenzFixture::quantile();
    let bx = WhitenedBox::default();
    let ens_dir = dir.join("ensembles");
    let fit_dir = dir.join("fits");
    fs::create_dir_all(&ens_dir)?;
    fs::create_dir_all(&fit_dir)?;

    // SNP trials and the matching raw-MC counts share ensembles; the 10⁶ MC
    // baseline is the reference sweep itself.
    let mut ensembles = Vec::new();
    for &n in &VB_SNP_SAMPLES {
        for t in 0..VB_TRIALS {
            let (init, prop) = fixture.ensemble(n, vb_trial_seed(seed, n, t))?;
            init.save(ens_dir.join(format!("n{n}_trial{t}_initial.csv")))?;
            prop.save(ens_dir.join(format!("n{n}_trial{t}_propagated.csv")))?;
            ensembles.push((n, t, prop));
        }
    }
    let jobs: Vec<(usize, usize, usize, &SampleEnsemble)> = VB_ORDERS
        .iter()
        .flat_map(|&k| ensembles.iter().map(move |(n, t, e)| (k, *n, *t, e)))
        .collect();
    let fits = jobs
        .par_iter()
        .map(|&(k, _, _, e)| {
            let (density, report) =
                fit_snp_weighted(&e.points, &e.weights, &FitConfig::with_order(k))?;
            let p = density.box_probability(&bx.lower, &bx.upper, &bx.coords)?;
            Ok((p, density, report))
        })
        .collect::<Result<Vec<_>>>()?;
    for (&(k, n, t, _), (_, density, report)) in jobs.iter().zip(&fits) {
        save_fit(&fit_dir, &format!("k{k}_n{n}_trial{t}"), density, report)?;
    }

    let reference_trials = mc_trials(
        &fixture,
        VB_REFERENCE_SAMPLES,
        VB_TRIALS,
        derive_seed(seed, u64::MAX),
        &bx,
    )?;
    let reference = TrialStats::new(reference_trials);
    let r = reference.mean;

    let mut entries = Vec::new();
    for &k in &VB_ORDERS {
        for &n in &VB_SNP_SAMPLES {
            let values: Vec<f64> = jobs
                .iter()
                .zip(&fits)
                .filter(|((jk, jn, _, _), _)| *jk == k && *jn == n)
                .map(|(_, (p, _, _))| *p)
                .collect();
            let stats = TrialStats::new(values);
            entries.push(SweepEntry {
                method: "snp".into(),
                order: Some(k),
                samples: n,
                mean_abs_error: stats.mean_abs_error(r),
                stats,
            });
        }
    }
    let mut mc_sizes: Vec<usize> = VB_SNP_SAMPLES
        .iter()
        .chain(&VB_MC_SAMPLES)
        .copied()
        .collect();
    mc_sizes.sort_unstable();
    mc_sizes.dedup();
    for n in mc_sizes {
        let values = if n == VB_REFERENCE_SAMPLES {
            reference.values.clone()
        } else if VB_SNP_SAMPLES.contains(&n) {
            ensembles
                .iter()
                .filter(|(en, _, _)| *en == n)
                .map(|(_, _, e)| mc_whitened_box(e, &bx))
                .collect::<Result<Vec<f64>>>()?
        } else {
            mc_trials(&fixture, n, VB_TRIALS, derive_seed(seed, n as u64), &bx)?
        };
        let stats = TrialStats::new(values);
        entries.push(SweepEntry {
            method: "mc".into(),
            order: None,
            samples: n,
            mean_abs_error: stats.mean_abs_error(r),
            stats,
        });
    }

    // Contour data from the first K=8, 1000-sample trial.
    let first = jobs
        .iter()
        .position(|&(k, n, t, _)| k == 8 && n == 1000 && t == 0)
        .expect("trial present");
    let plane = Axis {
        min: -3.0,
        max: 3.0,
        count: 101,
    };
    write_marginal(
        dir,
        "k8_n1000_trial0_marginal_xy.csv",
        &fits[first].1,
        &[0, 1],
        &[plane, plane],
    )?;

    Ok(json!({
        "experiment": "quantile_vb",
        "seed": seed,
        "fixture": fixture,
        "mean": crate::experiments::LORENZ_MEAN,
        "box": bx,
        "trials": VB_TRIALS,
        "reference": {"samples": VB_REFERENCE_SAMPLES, "stats": reference},
        "entries": entries,
    }))
}
