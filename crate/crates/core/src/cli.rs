//! Command-line front end: config parsing, argument handling and dispatch.

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiments::{self, CustomRun, FigureId, Settings};
use crate::svg::{self, ChartKind};

pub use crate::svg::emit_svg;

/// Environment variable that overrides the output directory unless `--out`
/// is given.
pub const OUT_DIR_ENV: &str = "LOGISTIC_FISHER_OUT";
pub const DEFAULT_OUT_DIR: &str = "out";

/// A parsed configuration document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioConfig {
    pub preset: Option<FigureId>,
    pub out: Option<String>,
    pub svg: bool,
    /// Explicit `key = value` settings, in document order.
    pub overrides: Vec<(String, String)>,
    /// Preset (or generic) defaults with the overrides applied.
    pub settings: Settings,
}

impl ScenarioConfig {
    /// Preset defaults, or the generic defaults without a preset.
    pub fn base(&self) -> Settings {
        self.preset.map(|p| p.defaults()).unwrap_or_default()
    }

    /// Applies the overrides on top of `base`. Any forcing key replaces the
    /// base forcing list rather than editing it.
    pub fn resolve(&self, base: Settings) -> Result<Settings> {
        let mut s = base;
        if self.overrides.iter().any(|(k, _)| k.starts_with("forcing")) {
            s.forcing.clear();
        }
        for (k, v) in &self.overrides {
            s.apply(k, v)?;
        }
        s.validate()?;
        Ok(s)
    }

    pub fn add_override(&mut self, key: &str, value: &str) -> Result<()> {
        self.overrides.push((key.trim().to_string(), value.trim().to_string()));
        match self.resolve(self.base()) {
            Ok(s) => {
                self.settings = s;
                Ok(())
            }
            Err(e) => {
                self.overrides.pop();
                Err(e)
            }
        }
    }
}

fn parse_bool(key: &str, raw: &str) -> Result<bool> {
    match raw.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(Error::invalid(key, format!("expected true or false, got '{other}'"))),
    }
}

/// Parses a flat `key = value` document. Blank lines and `#` comments are
/// ignored; list values are comma separated; forcing entries use
/// `forcing.<i>.B1` and `forcing.<i>.omega1`.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::default();
    let mut pairs = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    // Keys are checked as they arrive so errors carry the line number.
    let mut scratch = Settings::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
            line: line_no,
            message: format!("expected key = value, got '{line}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(Error::Config {
                line: line_no,
                message: format!("duplicate key '{key}'"),
            });
        }
        let wrap = |e: Error| Error::Config {
            line: line_no,
            message: e.to_string(),
        };
        match key {
            "preset" => cfg.preset = Some(value.parse().map_err(wrap)?),
            "out" => cfg.out = Some(value.to_string()),
            "svg" => cfg.svg = parse_bool(key, value).map_err(wrap)?,
            _ => {
                scratch.apply(key, value).map_err(wrap)?;
                pairs.push((key.to_string(), value.to_string()));
            }
        }
    }
    cfg.overrides = pairs;
    cfg.settings = cfg.resolve(cfg.base())?;
    Ok(cfg)
}

/// Inverse of [`parse_config`]: `parse_config(&serialize(c)) == c`.
pub fn serialize(cfg: &ScenarioConfig) -> String {
    let mut out = String::new();
    if let Some(p) = cfg.preset {
        out.push_str(&format!("preset = {p}\n"));
    }
    if let Some(o) = &cfg.out {
        out.push_str(&format!("out = {o}\n"));
    }
    if cfg.svg {
        out.push_str("svg = true\n");
    }
    for (k, v) in &cfg.overrides {
        out.push_str(&format!("{k} = {v}\n"));
    }
    out
}

/// Every resolved setting as a config document.
pub fn serialize_resolved(settings: &Settings) -> String {
    settings
        .to_pairs()
        .into_iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
}

/// Machine-readable error record printed on failure.
pub fn error_record(err: &Error) -> Value {
    let mut rec = json!({
        "error": err.kind(),
        "message": err.to_string(),
        "exit_code": err.exit_code(),
    });
    match err {
        Error::Invalid { field, .. } => rec["field"] = json!(field),
        Error::Config { line, .. } => rec["line"] = json!(line),
        Error::Diverged { time } => rec["time"] = json!(time),
        _ => {}
    }
    rec
}

#[derive(Debug, Parser)]
#[command(name = "logistic-fisher", version, about = "Periodically modulated logistic growth: trajectories, densities and Fisher information")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Config file with `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Output directory (overrides the config and the environment).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Also render an SVG next to every CSV.
    #[arg(long, global = true)]
    pub svg: bool,

    /// Extra `key=value` setting; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,

    #[arg(long, global = true)]
    pub dt: Option<f64>,

    #[arg(long, global = true)]
    pub bins: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Trajectory, density and FI series for each scenario.
    Simulate,
    /// Time-occupancy density for each scenario.
    Density,
    /// FI time series for each scenario.
    Fisher,
    /// Asymptotic FI across the omega list.
    Sweep,
    /// Mean-value change under additive forcing.
    Resilience,
    /// Regenerate a figure or table preset.
    Figure { preset: String },
    /// Render an existing CSV as SVG.
    Svg {
        csv: PathBuf,
        #[arg(long, default_value = "line")]
        kind: String,
        #[arg(long)]
        title: Option<String>,
        /// Output path; defaults to the CSV path with an .svg extension.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn load_config(common: &CommonArgs) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => parse_config(&read(path)?)?,
        None => ScenarioConfig::default(),
    };
    for item in &common.set {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::invalid("set", format!("expected KEY=VALUE, got '{item}'")))?;
        match k.trim() {
            "preset" => {
                cfg.preset = Some(v.parse()?);
                cfg.settings = cfg.resolve(cfg.base())?;
            }
            "out" => cfg.out = Some(v.trim().to_string()),
            "svg" => cfg.svg = parse_bool("svg", v)?,
            key => cfg.add_override(key, v)?,
        }
    }
    if let Some(dt) = common.dt {
        cfg.add_override("dt", &dt.to_string())?;
    }
    if let Some(bins) = common.bins {
        cfg.add_override("bins", &bins.to_string())?;
    }
    Ok(cfg)
}

/// `--out`, then the environment variable, then the config, then `out`.
pub fn output_dir(common: &CommonArgs, cfg: &ScenarioConfig) -> PathBuf {
    if let Some(p) = &common.out {
        return p.clone();
    }
    if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    cfg.out
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Executes one command and returns the files written. All validation
/// happens before anything touches the disk.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    if let Command::Svg {
        csv,
        kind,
        title,
        output,
    } = &cli.command
    {
        let kind: ChartKind = kind.parse()?;
        let text = read(csv)?;
        let title = title.clone().unwrap_or_else(|| {
            csv.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default()
        });
        let doc = svg::emit_svg(&text, kind, &title)?;
        let path = output.clone().unwrap_or_else(|| csv.with_extension("svg"));
        std::fs::write(&path, doc).map_err(|e| Error::io(&path, e))?;
        return Ok(vec![path]);
    }

    let cfg = load_config(&cli.common)?;
    let set = match &cli.command {
        Command::Figure { preset } => {
            let preset: FigureId = preset.parse()?;
            let settings = cfg.resolve(preset.defaults())?;
            experiments::run_figure(preset, &settings)?
        }
        other => {
            let kind = match other {
                Command::Simulate => CustomRun::Simulate,
                Command::Density => CustomRun::Density,
                Command::Fisher => CustomRun::Fisher,
                Command::Sweep => CustomRun::Sweep,
                Command::Resilience => CustomRun::Resilience,
                Command::Figure { .. } | Command::Svg { .. } => unreachable!(),
            };
            let settings = cfg.resolve(cfg.base())?;
            experiments::run_custom(kind, &settings)?
        }
    };
    let outdir = output_dir(&cli.common, &cfg);
    experiments::write_artifact_set(&set, &outdir, cli.common.svg || cfg.svg)
}

/// Entry point used by the binary: returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            e.exit_code()
        }
    }
}
