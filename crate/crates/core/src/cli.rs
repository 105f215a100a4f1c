//! Command-line front end.
//!
//! Model parameters travel in a JSON config file; flags only override the
//! seed, the output path and how chatty the run is. Exit status is 0 on
//! success, 1 for configuration problems and 2 when a computation fails.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::boundary::analyze;
use crate::error::Error;
use crate::experiments::{hellinger_trend, phase_sweep, ExperimentConfig};
use crate::extended::format_ext;
use crate::hc::{hc_classical, hc_star};
use crate::models::{sample_alternative, sample_null, tail_condition_estimate, Model, ModelSpec, TailVerdict};
use crate::numeric::norm_sf;
use crate::rate::{analytic_rate, GridConfig};

#[derive(Debug, Parser)]
#[command(name = "sparsemix", version, about = "Detection boundaries and Higher Criticism for sparse mixtures")]
pub struct Cli {
    /// Override the seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Only print results and errors.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Do not print the timestamp line.
    #[arg(long, global = true)]
    pub no_timestamp: bool,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the rate function over a grid as CSV.
    Rate { config: PathBuf },
    /// Print the boundary report as JSON.
    Boundary { config: PathBuf },
    /// Compute HC* or classical HC on a CSV of observations.
    Hc { config: PathBuf },
    /// Write a sample batch as CSV.
    Simulate { config: PathBuf },
    /// Run the Hellinger trend check.
    Hellinger { config: PathBuf },
    /// Run a phase sweep and write its CSV and JSON summary.
    Sweep { config: PathBuf },
    /// Estimate the tail-condition moments.
    Tailcheck { config: PathBuf },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RateConfig {
    spec: ModelSpec,
    #[serde(default)]
    grid: Option<GridConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecConfig {
    spec: ModelSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
enum HcVariant {
    Star,
    Classical,
}

fn default_variant() -> HcVariant {
    HcVariant::Star
}

fn default_delta() -> f64 {
    0.1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HcConfig {
    spec: ModelSpec,
    /// CSV of observations, relative to the config file.
    data: PathBuf,
    #[serde(default = "default_variant")]
    variant: HcVariant,
    #[serde(default = "default_delta")]
    delta: f64,
    #[serde(default)]
    clamp: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    spec: ModelSpec,
    n: usize,
    /// Absent for a null batch.
    #[serde(default)]
    beta: Option<f64>,
    #[serde(default)]
    seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct HellingerConfig {
    spec: ModelSpec,
    beta: f64,
    n_list: Vec<f64>,
}

fn default_tail_n() -> Vec<f64> {
    vec![1e2, 1e4, 1e6, 1e8]
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TailConfig {
    spec: ModelSpec,
    gamma: f64,
    #[serde(default = "default_tail_n")]
    n_list: Vec<f64>,
}

/// A failure with its exit status and a one-line message.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure { code: 1, message: message.into() }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter { .. } | Error::Config(_) => 1,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("config: cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let field = if field == "." { "config".to_string() } else { field };
        config_error(format!("{field}: {}", one_line(&e.inner().to_string())))
    })
}

struct Output<'a> {
    stdout: &'a mut dyn Write,
    out: Option<PathBuf>,
}

impl Output<'_> {
    fn emit(&mut self, bytes: &[u8]) -> Result<(), Failure> {
        let io = |e: std::io::Error| Failure { code: 2, message: format!("output: {e}") };
        match &self.out {
            Some(p) => std::fs::write(p, bytes).map_err(io),
            None => self.stdout.write_all(bytes).map_err(io),
        }
    }

    fn emit_json<T: Serialize>(&mut self, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure { code: 2, message: e.to_string() })?;
        text.push('\n');
        self.emit(text.as_bytes())
    }
}

fn rate_table(cfg: RateConfig) -> Result<Vec<u8>, Failure> {
    let rate = analytic_rate(&cfg.spec)?;
    let grid = match cfg.grid {
        Some(g) => {
            g.validate()?;
            g
        }
        None => rate.default_grid(),
    };
    let mut out = String::from("t,rate\n");
    for t in grid.points() {
        out.push_str(&format!("{},{}\n", format_ext(t), format_ext(rate.eval(t))));
    }
    Ok(out.into_bytes())
}

/// Reads observation columns named after the model's columns.
fn read_observations(path: &Path, model: &Model) -> Result<Vec<Vec<f64>>, Failure> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| config_error(format!("data: {}", one_line(&e.to_string()))))?;
    let headers = reader.headers().map_err(|e| config_error(format!("data: {e}")))?.clone();
    let want = model.columns();
    let idx: Vec<usize> = want
        .iter()
        .map(|c| headers.iter().position(|h| h.trim() == c).ok_or_else(|| config_error(format!("data: missing column `{c}`"))))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| config_error(format!("data: {}", one_line(&e.to_string()))))?;
        let row = idx
            .iter()
            .map(|&i| {
                record[i].trim().parse::<f64>().map_err(|_| {
                    config_error(format!("data: row {}: `{}` is not a number", line + 1, &record[i]))
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(config_error("data: no observations"));
    }
    Ok(rows)
}

fn run_hc(cfg: HcConfig, base: &Path) -> Result<serde_json::Value, Failure> {
    let data = if cfg.data.is_absolute() { cfg.data.clone() } else { base.join(&cfg.data) };
    let probe = Model::new(&cfg.spec, 3.0)?;
    let rows = read_observations(&data, &probe)?;
    let n = rows.len();
    let model = Model::new(&cfg.spec, (n as f64).max(3.0))?;
    let outcome = match cfg.variant {
        HcVariant::Star => {
            let llr = rows.iter().map(|r| model.log_lr(r)).collect::<crate::Result<Vec<f64>>>()?;
            hc_star(&llr, |v| model.null_log_tail(v).value, cfg.clamp)?
        }
        HcVariant::Classical => {
            let p = rows
                .iter()
                .map(|r| model.gaussian_score(r).map(norm_sf))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| config_error(format!("variant: classical HC needs a Gaussian score; {} has none", cfg.spec.family())))?;
            hc_classical(&p, cfg.clamp)?
        }
    };
    let outcome = if n >= 16 { outcome.tested(n, cfg.delta)? } else { outcome };
    Ok(serde_json::json!({ "family": cfg.spec.family(), "n": n, "outcome": outcome }))
}

struct Context<'a> {
    cli: &'a Cli,
    stderr: &'a mut dyn Write,
}

impl Context<'_> {
    fn note(&mut self, line: &str) {
        if !self.cli.quiet {
            let _ = writeln!(self.stderr, "{line}");
        }
    }

    fn warn(&mut self, line: &str) {
        let _ = writeln!(self.stderr, "warning: {line}");
    }
}

fn dispatch(ctx: &mut Context, out: &mut Output) -> Result<(), Failure> {
    let cli = ctx.cli;
    match &cli.command {
        Command::Rate { config } => {
            let bytes = rate_table(read_config(config)?)?;
            out.emit(&bytes)
        }
        Command::Boundary { config } => {
            let cfg: SpecConfig = read_config(config)?;
            let rate = analytic_rate(&cfg.spec)?;
            let report = analyze(&rate, Some(&cfg.spec));
            for w in &report.warnings {
                ctx.warn(w);
            }
            out.emit_json(&report)
        }
        Command::Hc { config } => {
            let cfg: HcConfig = read_config(config)?;
            if !(cfg.delta > 0.0 && cfg.delta.is_finite()) {
                return Err(config_error(format!("delta: must be positive, got {}", cfg.delta)));
            }
            let base = config.parent().unwrap_or(Path::new("."));
            out.emit_json(&run_hc(cfg, base)?)
        }
        Command::Simulate { config } => {
            let cfg: SimulateConfig = read_config(config)?;
            let seed = cli.seed.unwrap_or(cfg.seed);
            let batch = match cfg.beta {
                None => sample_null(&cfg.spec, cfg.n, seed)?,
                Some(beta) => sample_alternative(&cfg.spec, cfg.n, beta, seed)?,
            };
            let mut bytes = Vec::new();
            batch.write_csv(&mut bytes)?;
            ctx.note(&format!("simulated {} rows of {} with seed {seed}", batch.n, batch.family));
            out.emit(&bytes)
        }
        Command::Hellinger { config } => {
            let cfg: HellingerConfig = read_config(config)?;
            let trend = hellinger_trend(&cfg.spec, cfg.beta, &cfg.n_list)?;
            out.emit_json(&trend)
        }
        Command::Sweep { config } => {
            let mut cfg: ExperimentConfig = read_config(config)?;
            cfg.validate()?;
            if let Some(seed) = cli.seed {
                cfg.master_seed = seed;
            }
            if let Some(path) = &cli.out {
                cfg.output_path = Some(path.clone());
            }
            if ctx.cli.verbose > 0 {
                ctx.note(&format!("sweep over {} cells", cfg.n_values.len() * cfg.beta_grid.len()));
            }
            let result = phase_sweep(&cfg)?;
            for c in result.cells.iter().filter(|c| c.error.is_some()) {
                ctx.warn(&format!("cell n={} beta={}: {}", c.n, c.beta, c.error.as_deref().unwrap_or("")));
            }
            match &cfg.output_path {
                Some(path) => {
                    let json = result.write(path)?;
                    ctx.note(&format!("wrote {} and {}", path.display(), json.display()));
                    Ok(())
                }
                None => out.emit(&result.to_csv()?),
            }
        }
        Command::Tailcheck { config } => {
            let cfg: TailConfig = read_config(config)?;
            let report = tail_condition_estimate(&cfg.spec, cfg.gamma, &cfg.n_list)?;
            if report.verdict == TailVerdict::Diverging {
                ctx.warn(&format!("tail condition fails for {} at gamma = {}", report.family, report.gamma));
            }
            out.emit_json(&report)
        }
    }
}

fn timestamp() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

/// Parses `args` and runs the subcommand; returns the exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{e}");
                    0
                }
                _ => {
                    let msg = e.to_string();
                    let _ = writeln!(stderr, "error: {}", one_line(msg.lines().next().unwrap_or("").trim_start_matches("error: ")));
                    1
                }
            };
        }
    };
    let out_path = match &cli.command {
        Command::Sweep { .. } => None,
        _ => cli.out.clone(),
    };
    let mut ctx = Context { cli: &cli, stderr };
    let mut out = Output { stdout, out: out_path };
    match dispatch(&mut ctx, &mut out) {
        Ok(()) => {
            if !cli.quiet && !cli.no_timestamp {
                let _ = writeln!(ctx.stderr, "# finished at unix time {}", timestamp());
            }
            0
        }
        Err(f) => {
            let _ = writeln!(ctx.stderr, "error: {}", one_line(&f.message));
            f.code
        }
    }
}
