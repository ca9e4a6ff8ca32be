//! Command-line front end: configuration loading and the six subcommands.
//!
//! Each `cmd_*` function validates the whole [`RunConfig`], writes its
//! artifacts under `output.dir` and returns a JSON summary, which the binary
//! prints to stdout.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::estimator::{ClipBound, GramEigen};
use crate::experiments::{
    event_check, rate_experiment, ExperimentConfig, ExperimentRecord, Family, Scenario, ScenarioConfig,
};
use crate::kernels::{j_constant_bound, Kernel, Points};
use crate::selection::fixed::{select_from_eigen, tau_min_fixed, GlConfig};
use crate::selection::gauss::{select_width_radius, tau_min_gauss, GaussGlConfig};
use crate::theory;

#[derive(Debug, Parser)]
#[command(name = "ivanov-lepski", version, about = "Norm-constrained kernel least squares with adaptive radius selection")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `scenario.master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for replicate-level parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Treat tau below the theoretical minimum as an error.
    #[arg(long, global = true)]
    pub theory_mode: bool,
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    /// Overrides `data.path` for `fit`, `select` and `select-gauss`.
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit one radius-constrained estimator to a data file.
    Fit,
    /// Adaptive radius selection for a fixed Gaussian kernel.
    Select,
    /// Adaptive width and radius selection over the Gaussian family.
    SelectGauss,
    /// Holdout error against sample size on simulated data.
    Rates,
    /// Frequencies of the majorant and deviation events on simulated data.
    Majorant,
    /// Tabulate the closed-form bounds.
    Bounds,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub experiment: ExperimentConfig,
    pub data: DataConfig,
    pub rates: RatesConfig,
    pub bounds: BoundsConfig,
    pub output: OutputConfig,
    pub theory_mode: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV with header `x_1, …, x_d, y`.
    pub path: Option<PathBuf>,
    /// Noise scale used for the default tau; falls back to the scenario's.
    pub sigma: Option<f64>,
    pub clip: Option<f64>,
    /// Radius for `fit`.
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesConfig {
    pub n_list: Vec<usize>,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self { n_list: vec![50, 100, 200, 400, 800] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub k_diag: f64,
    pub clip: f64,
    pub sigma: f64,
    pub n: usize,
    pub t: f64,
    /// Radii `0, r_step, …` up to `r_max`.
    pub r_max: f64,
    pub r_step: f64,
    /// `I_∞` (and `‖h_r - g‖²_∞`) used in every row.
    pub i_inf: f64,
    /// Chaining constant; defaults to the bound for a single width.
    pub j: Option<f64>,
    pub approx: Option<ApproxConfig>,
    pub envelope: Option<EnvelopeConfig>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            k_diag: 1.0,
            clip: 1.0,
            sigma: 0.1,
            n: 200,
            t: 1.0,
            r_max: 4.0,
            r_step: 0.5,
            i_inf: 0.0,
            j: None,
            approx: None,
            envelope: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxConfig {
    pub b: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub d1: f64,
    pub d2: f64,
    pub tau: f64,
    pub beta: f64,
    pub n_list: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

impl RunConfig {
    /// Parses TOML, or JSON when the extension is `.json` or the text starts with `{`.
    pub fn parse(text: &str, path: Option<&Path>) -> Result<Self> {
        let is_json = path.and_then(|p| p.extension()).is_some_and(|e| e == "json")
            || text.trim_start().starts_with('{');
        if is_json {
            serde_json::from_str(text).map_err(|e| Error::input(format!("config: {e}")))
        } else {
            toml::from_str(text).map_err(|e| Error::input(format!("config: {e}")))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, Some(path))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::input(format!("config: {e}")))
    }

    fn experiment(&self) -> ExperimentConfig {
        let mut exp = self.experiment.clone();
        exp.theory_mode = self.theory_mode;
        exp
    }

    fn scenario(&self) -> Result<Scenario> {
        Scenario::new(self.scenario.clone())
    }

    fn data_sigma(&self) -> f64 {
        self.data.sigma.unwrap_or_else(|| self.scenario.noise.sigma())
    }
}

/// Loads the configuration and applies command-line overrides.
pub fn effective_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.scenario.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if let Some(data) = &cli.data {
        cfg.data.path = Some(data.clone());
    }
    cfg.theory_mode |= cli.theory_mode;
    Ok(cfg)
}

/// Runs the parsed command line; the JSON summary goes to stdout.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = effective_config(cli)?;
    if cli.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::input("--threads must be >= 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::input(e.to_string()))?;
    }
    let summary = run_command(cli.command, &cfg)?;
    println!("{}", to_json(&summary)?);
    Ok(())
}

pub fn run_command(command: Command, cfg: &RunConfig) -> Result<Value> {
    match command {
        Command::Fit => cmd_fit(cfg),
        Command::Select => cmd_select(cfg),
        Command::SelectGauss => cmd_select_gauss(cfg),
        Command::Rates => cmd_rates(cfg),
        Command::Majorant => cmd_majorant(cfg),
        Command::Bounds => cmd_bounds(cfg),
    }
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::input(e.to_string()))
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::Io(e),
        other => Error::input(format!("csv: {other:?}")),
    }
}

fn output_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.output.dir.as_path();
    fs::create_dir_all(dir)?;
    Ok(dir)
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut text = to_json(value)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn write_csv<T: Serialize>(dir: &Path, name: &str, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join(name)).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV with header `x_1, …, x_d, y`: `y` is the column named `y`,
/// every other column is a coordinate.
pub fn read_data(path: &Path) -> Result<(Points, Vec<f64>)> {
    let name = path.display().to_string();
    let data_err = |line: u64, msg: String| Error::Data { path: name.clone(), line, msg };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::input(format!("cannot open {name}: {e}")))?;
    let header = reader.headers().map_err(|e| data_err(1, e.to_string()))?.clone();
    let y_col = header
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| data_err(1, "missing y column".into()))?;
    let d = header.len() - 1;
    if d == 0 {
        return Err(data_err(1, "no x columns".into()));
    }
    let mut coords = Vec::new();
    let mut y = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            data_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(data_err(line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| data_err(line, format!("cannot parse {field:?} as a number")))?;
            if !v.is_finite() {
                return Err(data_err(line, format!("non-finite value {field:?}")));
            }
            if j == y_col {
                y.push(v);
            } else {
                coords.push(v);
            }
        }
    }
    if y.is_empty() {
        return Err(data_err(2, "no data rows".into()));
    }
    Ok((Points::new(d, coords)?, y))
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| Error::input("no data file (set data.path or pass --data)"))?;
    let (x, y) = read_data(path)?;
    let mut data = Dataset::new(x, y)?;
    if let Some(c) = cfg.data.clip {
        data = data.with_clip(ClipBound::new(c)?);
    }
    Ok(data)
}

fn fixed_width(cfg: &RunConfig) -> Result<f64> {
    match cfg.experiment.family {
        Family::Fixed { width } => Ok(width),
        Family::Gauss { .. } => Err(Error::input("this command needs experiment.family.kind = \"fixed\"")),
    }
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<Value> {
    let data = load_dataset(cfg)?;
    let r = cfg.data.radius.ok_or_else(|| Error::input("fit needs data.radius"))?;
    let kernel = Kernel::gaussian(fixed_width(cfg)?, data.dim())?;
    let dir = output_dir(cfg)?;
    let fit = GramEigen::new(&kernel.gram(&data.x)?, &data.y)?.fit(r)?;
    let summary = json!({
        "n": data.n(),
        "d": data.dim(),
        "width": kernel.width(),
        "r": fit.r,
        "mu": fit.mu,
        "h_norm": fit.h_norm,
        "training_loss": fit.training_loss(&data.y)?,
        "coef": fit.coef,
    });
    write_json(dir, "fit.json", &summary)?;
    Ok(summary)
}

pub fn cmd_select(cfg: &RunConfig) -> Result<Value> {
    let data = load_dataset(cfg)?;
    let kernel = Kernel::gaussian(fixed_width(cfg)?, data.dim())?;
    let sigma = cfg.data_sigma();
    let tau = match cfg.experiment.tau {
        Some(t) => t,
        None => tau_min_fixed(kernel.diag_sup(), sigma)?,
    };
    let gl = GlConfig {
        tau,
        nu: cfg.experiment.nu,
        sigma,
        k_diag: kernel.diag_sup(),
        theory_mode: cfg.theory_mode,
    };
    gl.validate()?;
    let grid = cfg.experiment.grid.build(data.n())?;
    let dir = output_dir(cfg)?;
    let eigen = GramEigen::new(&kernel.gram(&data.x)?, &data.y)?;
    let sel = select_from_eigen(&eigen, &grid, &gl, data.clip.is_some())?;
    let summary = json!({
        "n": data.n(),
        "width": kernel.width(),
        "tau": tau,
        "nu": gl.nu,
        "sigma": sigma,
        "t": (tau / tau_min_fixed(kernel.diag_sup(), sigma)?).powi(2),
        "radii": grid.values(),
        "r_hat": sel.r_hat,
        "index": sel.index,
        "clipped": sel.clipped,
        "fit": {
            "mu": sel.fit_hat.mu,
            "h_norm": sel.fit_hat.h_norm,
            "training_loss": sel.fit_hat.training_loss(&data.y)?,
            "coef": sel.fit_hat.coef,
        },
    });
    write_json(dir, "selection.json", &summary)?;
    write_csv(dir, "criterion.csv", &sel.criterion)?;
    Ok(summary)
}

fn gauss_config(cfg: &RunConfig, n: usize, d: usize, sigma: f64) -> Result<GaussGlConfig> {
    let widths = cfg
        .experiment
        .family
        .width_grid()?
        .ok_or_else(|| Error::input("select-gauss needs experiment.family.kind = \"gauss\""))?;
    let j = match cfg.experiment.j {
        Some(j) => j,
        None => j_constant_bound(widths.values()[0], *widths.values().last().unwrap())?,
    };
    let tau = match cfg.experiment.tau {
        Some(t) => t,
        None => tau_min_gauss(j, sigma)?,
    };
    Ok(GaussGlConfig {
        tau,
        nu: cfg.experiment.nu,
        sigma,
        j,
        dim: d,
        widths,
        radii: cfg.experiment.grid.build(n)?,
        theory_mode: cfg.theory_mode,
    })
}

pub fn cmd_select_gauss(cfg: &RunConfig) -> Result<Value> {
    let data = load_dataset(cfg)?;
    let gl = gauss_config(cfg, data.n(), data.dim(), cfg.data_sigma())?;
    gl.validate()?;
    let dir = output_dir(cfg)?;
    let sel = select_width_radius(&data, &gl)?;
    let summary = json!({
        "n": data.n(),
        "tau": gl.tau,
        "nu": gl.nu,
        "sigma": gl.sigma,
        "j": gl.j,
        "t": (gl.tau / tau_min_gauss(gl.j, gl.sigma)?).powi(2),
        "widths": gl.widths.values(),
        "radii": gl.radii.values(),
        "gamma_hat": sel.gamma_hat,
        "r_hat": sel.r_hat,
        "width_index": sel.width_index,
        "radius_index": sel.radius_index,
        "clipped": sel.clipped,
        "fit": {
            "mu": sel.fit_hat.mu,
            "h_norm": sel.fit_hat.h_norm,
            "training_loss": sel.fit_hat.training_loss(&data.y)?,
            "coef": sel.fit_hat.coef,
        },
    });
    write_json(dir, "selection.json", &summary)?;
    write_csv(dir, "criterion.csv", &sel.criterion)?;
    Ok(summary)
}

/// CSV layout of [`ExperimentRecord`]: events as 0/1, missing values empty.
#[derive(Serialize)]
struct RecordRow {
    replicate: usize,
    n: usize,
    gamma_hat: f64,
    r_hat: f64,
    err_adaptive: Option<f64>,
    err_oracle_grid: Option<f64>,
    event_bias: Option<u8>,
    event_majorant: Option<u8>,
    seed: u64,
}

impl From<&ExperimentRecord> for RecordRow {
    fn from(r: &ExperimentRecord) -> Self {
        Self {
            replicate: r.replicate,
            n: r.n,
            gamma_hat: r.gamma_hat,
            r_hat: r.r_hat,
            err_adaptive: r.err_adaptive,
            err_oracle_grid: r.err_oracle_grid,
            event_bias: r.event_bias.map(u8::from),
            event_majorant: r.event_majorant.map(u8::from),
            seed: r.seed,
        }
    }
}

fn write_records(dir: &Path, name: &str, records: &[ExperimentRecord]) -> Result<()> {
    let rows: Vec<RecordRow> = records.iter().map(RecordRow::from).collect();
    write_csv(dir, name, &rows)
}

pub fn cmd_rates(cfg: &RunConfig) -> Result<Value> {
    let scenario = cfg.scenario()?;
    let exp = cfg.experiment();
    let dir = output_dir(cfg)?;
    let report = rate_experiment(&scenario, &cfg.rates.n_list, &exp)?;
    write_records(dir, "rates.csv", &report.records)?;
    let summary = json!({
        "config": { "scenario": cfg.scenario, "experiment": cfg.experiment, "n_list": cfg.rates.n_list },
        "rows": report.rows,
        "slope": report.slope,
        "degenerate": report.degenerate,
    });
    write_json(dir, "rates.json", &summary)?;
    Ok(summary)
}

pub fn cmd_majorant(cfg: &RunConfig) -> Result<Value> {
    let scenario = cfg.scenario()?;
    let mut exp = cfg.experiment();
    exp.holdout = false;
    let dir = output_dir(cfg)?;
    let check = event_check(&scenario, &exp)?;
    write_records(dir, "majorant.csv", &check.records)?;
    let summary = json!({
        "config": { "scenario": cfg.scenario, "experiment": cfg.experiment },
        "t": exp.t,
        "floor": check.majorant.floor,
        "majorant": check.majorant,
        "bias": check.bias,
        "pass": check.majorant.pass && check.bias.pass,
    });
    write_json(dir, "majorant.json", &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRow {
    pub r: f64,
    pub bias_event: f64,
    /// Majorant at `s = r`.
    pub majorant: f64,
    pub t_bound: f64,
    pub t_vary_bound: f64,
}

pub fn bound_rows(b: &BoundsConfig) -> Result<Vec<BoundRow>> {
    if !(b.r_step > 0.0 && b.r_max >= 0.0 && b.r_max.is_finite()) {
        return Err(Error::input("bounds need r_step > 0 and r_max >= 0"));
    }
    let j = match b.j {
        Some(j) => j,
        None => j_constant_bound(1.0, 1.0)?,
    };
    let steps = crate::kernels::ceil_tolerant(b.r_max / b.r_step);
    (0..=steps)
        .map(|i| (i as f64 * b.r_step).min(b.r_max))
        .map(|r| {
            Ok(BoundRow {
                r,
                bias_event: theory::bias_event_bound(b.k_diag, b.sigma, r, b.t, b.n, b.i_inf),
                majorant: theory::majorant_fixed(b.k_diag, b.sigma, r, r, b.t, b.n, b.i_inf),
                t_bound: theory::bound_t_bound(b.k_diag, b.clip, b.sigma, r, b.t, b.n, b.i_inf)?,
                t_vary_bound: theory::bound_t_vary_bound(j, b.k_diag, b.clip, b.sigma, r, b.t, b.n, b.i_inf)?,
            })
        })
        .collect()
}

pub fn cmd_bounds(cfg: &RunConfig) -> Result<Value> {
    let b = &cfg.bounds;
    let rows = bound_rows(b)?;
    let approx = match &b.approx {
        Some(a) => {
            let params = theory::InterpolationParams::new(a.b, a.beta)?;
            let rows = rows
                .iter()
                .filter(|row| row.r > 0.0)
                .map(|row| Ok(json!({ "r": row.r, "approx_bound": params.approx_bound(row.r)? })))
                .collect::<Result<Vec<_>>>()?;
            Some(rows)
        }
        None => None,
    };
    let envelope = match &b.envelope {
        Some(e) => Some(
            e.n_list
                .iter()
                .map(|&n| Ok(json!({ "n": n, "envelope": theory::rate_envelope_fixed(e.d1, e.d2, e.tau, n, e.beta)? })))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let dir = output_dir(cfg)?;
    write_csv(dir, "bounds.csv", &rows)?;
    let summary = json!({ "config": b, "rows": rows, "approx": approx, "envelope": envelope });
    write_json(dir, "bounds.json", &summary)?;
    Ok(summary)
}
