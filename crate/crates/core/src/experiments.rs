//! Scenario runners producing CSV/JSON artifacts for each figure and table
//! preset, plus the additive-forcing resilience study.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::density::{self, DensityEstimate};
use crate::error::{Error, Result};
use crate::fisher::{self, Estimator, FisherOptions};
use crate::integrate::{self, IntegrationOptions, Trajectory, TrajectorySource};
use crate::model::{self, ModelSpec, Variant};
use crate::svg;

pub const DEFAULT_HORIZON: f64 = 1000.0;
pub const DEFAULT_TRACE_STRIDE: usize = 10;
pub const STANDARD_OMEGAS: [f64; 6] = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0];

/// Arithmetic mean of `x` over all grid samples.
pub fn mean_value(traj: &Trajectory) -> Result<f64> {
    traj.ensure_bounded()?;
    if traj.is_empty() {
        return Err(Error::invalid("trajectory", "no samples"));
    }
    Ok(traj.x.iter().sum::<f64>() / traj.len() as f64)
}

/// `|baseline - perturbed| / |baseline| * 100`.
pub fn percent_change(baseline: f64, perturbed: f64) -> Result<f64> {
    if baseline == 0.0 || !baseline.is_finite() {
        return Err(Error::invalid(
            "baseline",
            format!("must be finite and non-zero, got {baseline}"),
        ));
    }
    Ok((baseline - perturbed).abs() / baseline.abs() * 100.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Forcing {
    pub b1: f64,
    pub omega1: f64,
}

impl Forcing {
    pub fn new(b1: f64, omega1: f64) -> Self {
        Forcing { b1, omega1 }
    }
}

/// The forcing grid used for the resilience table.
pub fn table_forcings() -> Vec<Forcing> {
    let r2 = std::f64::consts::SQRT_2;
    vec![
        Forcing::new(1.0, 1.0),
        Forcing::new(1.0, r2),
        Forcing::new(10.0, 1.0),
        Forcing::new(10.0, r2),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Optimal,
    NonOptimal,
}

impl Label {
    /// `omega = 1` is the optimal case and `omega = 10` the non-optimal one.
    pub fn for_omega(omega: f64) -> Option<Label> {
        if omega == 1.0 {
            Some(Label::Optimal)
        } else if omega == 10.0 {
            Some(Label::NonOptimal)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResilienceEntry {
    pub b1: f64,
    pub omega1: f64,
    /// `None` when the forced run diverged.
    pub perturbed_mean: Option<f64>,
    pub percent_change: Option<f64>,
    pub diverged_at: Option<f64>,
    pub crossed_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResilienceReport {
    pub omega: f64,
    pub label: Option<Label>,
    pub baseline_mean: f64,
    pub entries: Vec<ResilienceEntry>,
    pub horizon: f64,
    pub dt: f64,
}

/// Baseline and forced runs on one shared grid; the step resolves the
/// fastest frequency across every forcing entry.
pub fn resilience_study(
    spec: &ModelSpec,
    x0: f64,
    forcing_grid: &[Forcing],
    horizon: f64,
    dt: Option<f64>,
) -> Result<ResilienceReport> {
    if forcing_grid.is_empty() {
        return Err(Error::invalid("forcing", "grid must not be empty"));
    }
    let base = spec.unforced();
    let forced: Vec<ModelSpec> = forcing_grid
        .iter()
        .map(|f| base.with_forcing(f.b1, f.omega1))
        .collect();
    for s in &forced {
        s.validate()?;
    }
    let dt = dt.unwrap_or_else(|| {
        forced
            .iter()
            .map(integrate::default_dt)
            .fold(integrate::default_dt(&base), f64::min)
    });
    let baseline_opts = IntegrationOptions {
        dt,
        ..IntegrationOptions::for_spec(&base)
    };
    let baseline = integrate::integrate_with(&base, x0, horizon, &baseline_opts)?;
    let baseline_mean = mean_value(&baseline)?;

    let entries = forced
        .par_iter()
        .zip(forcing_grid.par_iter())
        .map(|(s, f)| {
            let tr = integrate::integrate_with(s, x0, horizon, &IntegrationOptions::rk4(dt))?;
            let perturbed_mean = if tr.is_diverged() {
                None
            } else {
                Some(mean_value(&tr)?)
            };
            let percent_change = match perturbed_mean {
                Some(m) => Some(percent_change(baseline_mean, m)?),
                None => None,
            };
            Ok(ResilienceEntry {
                b1: f.b1,
                omega1: f.omega1,
                perturbed_mean,
                percent_change,
                diverged_at: tr.diverged,
                crossed_zero: tr.crossed_zero,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ResilienceReport {
        omega: spec.omega,
        label: Label::for_omega(spec.omega),
        baseline_mean,
        entries,
        horizon,
        dt,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxXPoint {
    pub omega: f64,
    pub max_x: f64,
    /// Largest value found by sampling one period of the closed form.
    pub sampled_max: f64,
}

/// Period maximum of the closed form over one period, by dense sampling.
pub fn sampled_period_max(spec: &ModelSpec, x0: f64, samples: usize) -> Result<f64> {
    let period = 2.0 * std::f64::consts::PI / spec.omega;
    (0..=samples).try_fold(f64::MIN, |m, i| {
        let t = period * i as f64 / samples as f64;
        Ok(m.max(model::exact_correlated(spec, x0, t)?))
    })
}

pub fn max_x_sweep(spec: &ModelSpec, x0: f64, omegas: &[f64]) -> Result<Vec<MaxXPoint>> {
    omegas
        .iter()
        .map(|&omega| {
            let s = spec.with_omega(omega);
            s.validate()?;
            Ok(MaxXPoint {
                omega,
                max_x: model::max_x_closed_form(&s, x0)?,
                sampled_max: sampled_period_max(&s, x0, 20_000)?,
            })
        })
        .collect()
}

/// Trajectory source selection in run settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceChoice {
    Auto,
    Rk4,
    ClosedForm,
}

impl SourceChoice {
    pub fn as_str(&self) -> &'static str {
        match self {
            SourceChoice::Auto => "auto",
            SourceChoice::Rk4 => "rk4",
            SourceChoice::ClosedForm => "closed_form",
        }
    }

    pub fn resolve(&self, spec: &ModelSpec) -> TrajectorySource {
        match self {
            SourceChoice::Auto => TrajectorySource::preferred(spec),
            SourceChoice::Rk4 => TrajectorySource::Rk4,
            SourceChoice::ClosedForm => TrajectorySource::ClosedForm,
        }
    }
}

impl FromStr for SourceChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(SourceChoice::Auto),
            "rk4" => Ok(SourceChoice::Rk4),
            "closed_form" | "closed-form" => Ok(SourceChoice::ClosedForm),
            other => Err(Error::invalid("source", format!("unknown source '{other}'"))),
        }
    }
}

/// Every tunable that affects the numbers of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub variant: Variant,
    pub b: f64,
    pub n0: Vec<f64>,
    pub omega: Vec<f64>,
    pub k: f64,
    pub c: f64,
    pub x0: Vec<f64>,
    /// Horizon `T` for traces, densities and means.
    pub horizon: f64,
    /// Step; `None` uses the per-spec default.
    pub dt: Option<f64>,
    pub bins: usize,
    /// Time-domain FI floor relative to `max |u|`.
    pub eps_u: f64,
    pub n_points: usize,
    pub t_step: f64,
    pub prominence: f64,
    pub forcing: Vec<Forcing>,
    pub source: SourceChoice,
    /// Row stride for trajectory CSVs.
    pub trace_stride: usize,
    pub divergence_bound: f64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            variant: Variant::Correlated,
            b: 0.0,
            n0: vec![5.0],
            omega: vec![1.0],
            k: 10.0,
            c: 1.0,
            x0: vec![0.1],
            horizon: DEFAULT_HORIZON,
            dt: None,
            bins: density::DEFAULT_BINS,
            eps_u: fisher::DEFAULT_EPS_REL,
            n_points: fisher::DEFAULT_N_POINTS,
            t_step: fisher::DEFAULT_T_STEP,
            prominence: density::DEFAULT_PROMINENCE,
            forcing: Vec::new(),
            source: SourceChoice::Auto,
            trace_stride: DEFAULT_TRACE_STRIDE,
            divergence_bound: integrate::DEFAULT_DIVERGENCE_BOUND,
        }
    }
}

/// Scalar keys accepted by [`Settings::apply`], in serialization order.
pub const SETTING_KEYS: [&str; 17] = [
    "variant",
    "B",
    "N0",
    "omega",
    "K",
    "C",
    "x0",
    "T",
    "dt",
    "bins",
    "eps_u",
    "n_points",
    "T_step",
    "prominence",
    "source",
    "trace_stride",
    "divergence_bound",
];

fn parse_f64(key: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| Error::invalid(key, format!("expected a number, got '{raw}'")))
}

fn parse_usize(key: &str, raw: &str) -> Result<usize> {
    raw.trim()
        .parse::<usize>()
        .map_err(|_| Error::invalid(key, format!("expected a non-negative integer, got '{raw}'")))
}

fn parse_list(key: &str, raw: &str) -> Result<Vec<f64>> {
    let list = raw
        .split(',')
        .map(|v| parse_f64(key, v))
        .collect::<Result<Vec<_>>>()?;
    if list.is_empty() {
        return Err(Error::invalid(key, "list must not be empty"));
    }
    Ok(list)
}

fn join(values: &[f64]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl Settings {
    /// Applies one `key = value` override. Forcing entries use dotted keys
    /// `forcing.<index>.B1` and `forcing.<index>.omega1`.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        if let Some(rest) = key.strip_prefix("forcing.") {
            return self.apply_forcing(key, rest, value);
        }
        match key {
            "variant" => self.variant = value.parse()?,
            "B" => self.b = parse_f64(key, value)?,
            "N0" => self.n0 = parse_list(key, value)?,
            "omega" => self.omega = parse_list(key, value)?,
            "K" => self.k = parse_f64(key, value)?,
            "C" => self.c = parse_f64(key, value)?,
            "x0" => self.x0 = parse_list(key, value)?,
            "T" => self.horizon = parse_f64(key, value)?,
            "dt" => {
                self.dt = match value.trim() {
                    "auto" => None,
                    v => Some(parse_f64(key, v)?),
                }
            }
            "bins" => self.bins = parse_usize(key, value)?,
            "eps_u" => self.eps_u = parse_f64(key, value)?,
            "n_points" => self.n_points = parse_usize(key, value)?,
            "T_step" => self.t_step = parse_f64(key, value)?,
            "prominence" => self.prominence = parse_f64(key, value)?,
            "source" => self.source = value.parse()?,
            "trace_stride" => self.trace_stride = parse_usize(key, value)?,
            "divergence_bound" => self.divergence_bound = parse_f64(key, value)?,
            "forcing" => {
                if value.trim() != "none" {
                    return Err(Error::invalid(
                        "forcing",
                        "use forcing.<i>.B1 / forcing.<i>.omega1, or 'none' to clear",
                    ));
                }
                self.forcing.clear();
            }
            other => return Err(Error::invalid(other, "unknown key")),
        }
        Ok(())
    }

    fn apply_forcing(&mut self, key: &str, rest: &str, value: &str) -> Result<()> {
        let (index, field) = rest
            .split_once('.')
            .ok_or_else(|| Error::invalid(key, "expected forcing.<index>.<B1|omega1>"))?;
        let index: usize = index
            .parse()
            .map_err(|_| Error::invalid(key, format!("bad forcing index '{index}'")))?;
        if index > self.forcing.len() {
            return Err(Error::invalid(
                key,
                format!("forcing indices must be contiguous from 0; next is {}", self.forcing.len()),
            ));
        }
        if index == self.forcing.len() {
            self.forcing.push(Forcing::new(0.0, 1.0));
        }
        let v = parse_f64(key, value)?;
        match field {
            "B1" => self.forcing[index].b1 = v,
            "omega1" => self.forcing[index].omega1 = v,
            _ => return Err(Error::invalid(key, "unknown forcing field")),
        }
        Ok(())
    }

    /// `key = value` pairs that reproduce these settings through
    /// [`Settings::apply`].
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = vec![
            ("variant".into(), self.variant.to_string()),
            ("B".into(), self.b.to_string()),
            ("N0".into(), join(&self.n0)),
            ("omega".into(), join(&self.omega)),
            ("K".into(), self.k.to_string()),
            ("C".into(), self.c.to_string()),
            ("x0".into(), join(&self.x0)),
            ("T".into(), self.horizon.to_string()),
            (
                "dt".into(),
                self.dt.map_or_else(|| "auto".to_string(), |v| v.to_string()),
            ),
            ("bins".into(), self.bins.to_string()),
            ("eps_u".into(), self.eps_u.to_string()),
            ("n_points".into(), self.n_points.to_string()),
            ("T_step".into(), self.t_step.to_string()),
            ("prominence".into(), self.prominence.to_string()),
            ("source".into(), self.source.as_str().to_string()),
            ("trace_stride".into(), self.trace_stride.to_string()),
            ("divergence_bound".into(), self.divergence_bound.to_string()),
        ];
        if self.forcing.is_empty() {
            out.push(("forcing".into(), "none".into()));
        }
        for (i, f) in self.forcing.iter().enumerate() {
            out.push((format!("forcing.{i}.B1"), f.b1.to_string()));
            out.push((format!("forcing.{i}.omega1"), f.omega1.to_string()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for (name, list) in [("N0", &self.n0), ("omega", &self.omega), ("x0", &self.x0)] {
            if list.is_empty() {
                return Err(Error::invalid(name, "list must not be empty"));
            }
        }
        if let Some(x) = self.x0.iter().find(|x| !x.is_finite()) {
            return Err(Error::invalid("x0", format!("must be finite, got {x}")));
        }
        for s in self.specs() {
            s.validate()?;
        }
        for (i, f) in self.forcing.iter().enumerate() {
            if !(f.b1 >= 0.0) || !f.b1.is_finite() {
                return Err(Error::invalid(
                    format!("forcing.{i}.B1"),
                    format!("must be >= 0, got {}", f.b1),
                ));
            }
            if !(f.omega1 > 0.0) || !f.omega1.is_finite() {
                return Err(Error::invalid(
                    format!("forcing.{i}.omega1"),
                    format!("must be > 0, got {}", f.omega1),
                ));
            }
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::invalid("T", format!("must be > 0, got {}", self.horizon)));
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
            }
            if dt > self.horizon {
                return Err(Error::invalid(
                    "dt",
                    format!("must not exceed T ({dt} > {})", self.horizon),
                ));
            }
        }
        if self.bins < 2 {
            return Err(Error::invalid("bins", format!("must be >= 2, got {}", self.bins)));
        }
        if !(self.eps_u > 0.0) || !self.eps_u.is_finite() {
            return Err(Error::invalid("eps_u", format!("must be > 0, got {}", self.eps_u)));
        }
        if self.n_points < 1 {
            return Err(Error::invalid("n_points", "must be >= 1"));
        }
        if !(self.t_step > 0.0) || !self.t_step.is_finite() {
            return Err(Error::invalid("T_step", format!("must be > 0, got {}", self.t_step)));
        }
        if !(self.prominence > 0.0 && self.prominence < 1.0) {
            return Err(Error::invalid(
                "prominence",
                format!("must lie in (0, 1), got {}", self.prominence),
            ));
        }
        if self.trace_stride < 1 {
            return Err(Error::invalid("trace_stride", "must be >= 1"));
        }
        if !(self.divergence_bound > 0.0) {
            return Err(Error::invalid("divergence_bound", "must be > 0"));
        }
        if self.source == SourceChoice::ClosedForm {
            if let Some(s) = self.specs().into_iter().find(|s| !s.has_closed_form()) {
                return Err(Error::invalid(
                    "source",
                    format!("closed_form needs the correlated unforced model, got {}", s.variant),
                ));
            }
        }
        Ok(())
    }

    pub fn spec_for(&self, n0: f64, omega: f64) -> ModelSpec {
        ModelSpec {
            variant: self.variant,
            b: self.b,
            n0,
            omega,
            k: self.k,
            c: self.c,
            b1: 0.0,
            omega1: 1.0,
        }
    }

    fn specs(&self) -> Vec<ModelSpec> {
        self.n0
            .iter()
            .flat_map(|&n0| self.omega.iter().map(move |&w| (n0, w)))
            .map(|(n0, w)| self.spec_for(n0, w))
            .collect()
    }

    /// Cartesian expansion `N0 x omega x x0`, in that nesting order.
    pub fn expand(&self) -> Vec<ScenarioPoint> {
        let mut out = Vec::new();
        for &n0 in &self.n0 {
            for &omega in &self.omega {
                for &x0 in &self.x0 {
                    out.push(ScenarioPoint {
                        spec: self.spec_for(n0, omega),
                        x0,
                    });
                }
            }
        }
        out
    }

    pub fn dt_for(&self, spec: &ModelSpec) -> f64 {
        self.dt.unwrap_or_else(|| integrate::default_dt(spec))
    }

    pub fn integration_options(&self, spec: &ModelSpec) -> IntegrationOptions {
        IntegrationOptions {
            dt: self.dt_for(spec),
            divergence_bound: self.divergence_bound,
            source: self.source.resolve(spec),
        }
    }

    pub fn trajectory(&self, spec: &ModelSpec, x0: f64, horizon: f64) -> Result<Trajectory> {
        integrate::integrate_with(spec, x0, horizon, &self.integration_options(spec))
    }

    pub fn fisher_options(&self) -> FisherOptions {
        FisherOptions {
            estimator: Estimator::TimeDomain,
            eps_rel: self.eps_u,
            dt: self.dt,
            source: match self.source {
                SourceChoice::Auto => None,
                SourceChoice::Rk4 => Some(TrajectorySource::Rk4),
                SourceChoice::ClosedForm => Some(TrajectorySource::ClosedForm),
            },
            bins: self.bins,
            divergence_bound: self.divergence_bound,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioPoint {
    pub spec: ModelSpec,
    pub x0: f64,
}

impl ScenarioPoint {
    /// File-safe scenario name.
    pub fn name(&self, kind: &str) -> String {
        let mut name = format!(
            "{kind}_{}_n0-{}_omega-{}_x0-{}",
            self.spec.variant, self.spec.n0, self.spec.omega, self.x0
        );
        if self.spec.is_forced() {
            name.push_str(&format!("_b1-{}_omega1-{:.4}", self.spec.b1, self.spec.omega1));
        }
        name
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureId {
    Fig1,
    Fig2,
    Fig3,
    Fig4,
    Fig6,
    Fig7,
    Fig8,
    Fig9,
    Fig10,
    Fig11,
    Fig12,
    Fig13,
    Table1,
    Table2,
}

impl FigureId {
    pub const ALL: [FigureId; 14] = [
        FigureId::Fig1,
        FigureId::Fig2,
        FigureId::Fig3,
        FigureId::Fig4,
        FigureId::Fig6,
        FigureId::Fig7,
        FigureId::Fig8,
        FigureId::Fig9,
        FigureId::Fig10,
        FigureId::Fig11,
        FigureId::Fig12,
        FigureId::Fig13,
        FigureId::Table1,
        FigureId::Table2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FigureId::Fig1 => "fig1",
            FigureId::Fig2 => "fig2",
            FigureId::Fig3 => "fig3",
            FigureId::Fig4 => "fig4",
            FigureId::Fig6 => "fig6",
            FigureId::Fig7 => "fig7",
            FigureId::Fig8 => "fig8",
            FigureId::Fig9 => "fig9",
            FigureId::Fig10 => "fig10",
            FigureId::Fig11 => "fig11",
            FigureId::Fig12 => "fig12",
            FigureId::Fig13 => "fig13",
            FigureId::Table1 => "table1",
            FigureId::Table2 => "table2",
        }
    }

    /// Preset parameters; individual keys may be overridden afterwards.
    pub fn defaults(&self) -> Settings {
        let base = Settings::default();
        let standard_omegas = STANDARD_OMEGAS.to_vec();
        match self {
            FigureId::Fig1 => Settings {
                omega: vec![1.0, 10.0],
                x0: vec![0.1, 5.0],
                horizon: 50.0,
                trace_stride: 1,
                ..base
            },
            FigureId::Fig2 => Settings {
                omega: (0..=40).map(|i| 10f64.powf(-1.0 + i as f64 / 20.0)).collect(),
                x0: vec![0.1, 5.0],
                ..base
            },
            FigureId::Fig3 | FigureId::Fig6 | FigureId::Fig7 => Settings {
                omega: standard_omegas,
                x0: vec![0.1],
                ..base
            },
            FigureId::Fig4 | FigureId::Fig8 | FigureId::Fig9 => Settings {
                omega: standard_omegas,
                x0: vec![5.0],
                ..base
            },
            FigureId::Fig10 => Settings {
                omega: vec![1.0, 10.0],
                forcing: table_forcings(),
                ..base
            },
            FigureId::Fig11 => Settings {
                variant: Variant::PositiveOnly,
                b: 0.0,
                c: 1.0,
                n0: vec![1.0, 5.0],
                omega: vec![0.1, 1.0, 10.0],
                ..base
            },
            FigureId::Fig12 => Settings {
                variant: Variant::NegativeOnly,
                b: 1.0,
                c: 1.0,
                n0: vec![0.5, 1.0],
                omega: vec![0.1, 1.0, 10.0],
                ..base
            },
            FigureId::Fig13 => Settings {
                variant: Variant::NegativeOnly,
                b: 1.0,
                c: 1.0,
                n0: vec![1.0, 10.0],
                omega: vec![0.1, 10.0],
                horizon: 100.0,
                trace_stride: 1,
                ..base
            },
            FigureId::Table1 => Settings {
                omega: vec![1.0, 10.0],
                ..base
            },
            FigureId::Table2 => Settings {
                omega: vec![1.0, 10.0],
                forcing: table_forcings(),
                ..base
            },
        }
    }

    /// Presets whose outputs are undefined for divergent runs.
    pub fn requires_bounded(&self) -> bool {
        !matches!(
            self,
            FigureId::Fig1 | FigureId::Fig10 | FigureId::Fig13 | FigureId::Table2
        )
    }
}

impl fmt::Display for FigureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FigureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FigureId::ALL
            .iter()
            .find(|id| id.as_str() == s.trim())
            .copied()
            .ok_or_else(|| Error::invalid("preset", format!("unknown preset '{s}'")))
    }
}

/// One output file held in memory until the whole run has succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl Artifact {
    fn csv(name: String, text: String) -> Self {
        Artifact {
            name: format!("{name}.csv"),
            bytes: text.into_bytes(),
        }
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(&self.bytes))
    }
}

#[derive(Debug, Clone)]
pub struct ArtifactSet {
    /// Preset id, or the custom command name.
    pub name: String,
    pub settings: Settings,
    pub files: Vec<Artifact>,
    /// Per-scenario numbers reported alongside the files.
    pub results: Value,
}

impl ArtifactSet {
    pub fn file(&self, name: &str) -> Option<&Artifact> {
        self.files.iter().find(|a| a.name == name)
    }

    /// The manifest: resolved settings, fixed numerical constants, file
    /// checksums and results.
    pub fn manifest(&self) -> Value {
        let files: Vec<Value> = self
            .files
            .iter()
            .map(|a| json!({"name": a.name, "bytes": a.bytes.len(), "sha256": a.sha256()}))
            .collect();
        let settings: BTreeMap<String, String> = self.settings.to_pairs().into_iter().collect();
        json!({
            "name": self.name,
            "settings": settings,
            "constants": {
                "default_dt_rule": "min(1e-3, 1/(200*max(omega, omega1)))",
                "density_floor_rel": fisher::DENSITY_FLOOR_REL,
                "asymptote_tail_fraction": fisher::ASYMPTOTE_TAIL,
                "degenerate_support_half_width_rel": 1e-9,
                "mode_smoothing_bins": 3,
            },
            "files": files,
            "results": self.results,
        })
    }
}

fn trace_csv(traj: &Trajectory, stride: usize) -> String {
    let mut out = String::from("t,x,u,udot\n");
    for i in (0..traj.len()).step_by(stride.max(1)) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            traj.t[i], traj.x[i], traj.u[i], traj.udot[i]
        ));
    }
    out
}

fn spec_json(p: &ScenarioPoint) -> Value {
    json!({
        "variant": p.spec.variant,
        "B": p.spec.b,
        "N0": p.spec.n0,
        "omega": p.spec.omega,
        "K": p.spec.k,
        "C": p.spec.c,
        "B1": p.spec.b1,
        "omega1": p.spec.omega1,
        "x0": p.x0,
    })
}

fn density_summary(d: &DensityEstimate, prominence: f64) -> Result<Value> {
    let modes = density::mode_locations(d, prominence)?;
    Ok(json!({
        "mode_count": modes.len(),
        "mode_bins": modes,
        "bins": d.bins(),
        "support": [d.support.0, d.support.1],
        "support_width": d.support_width(),
        "fisher_density": fisher::fisher_from_density(d),
    }))
}

struct Outcome {
    files: Vec<Artifact>,
    result: Value,
}

fn run_points<F>(points: &[ScenarioPoint], f: F) -> Result<(Vec<Artifact>, Vec<Value>)>
where
    F: Fn(&ScenarioPoint) -> Result<Outcome> + Sync,
{
    let outcomes = points.par_iter().map(&f).collect::<Result<Vec<_>>>()?;
    let mut files = Vec::new();
    let mut results = Vec::new();
    for o in outcomes {
        files.extend(o.files);
        results.push(o.result);
    }
    Ok((files, results))
}

fn traces(settings: &Settings, points: &[ScenarioPoint]) -> Result<(Vec<Artifact>, Vec<Value>)> {
    run_points(points, |p| {
        let tr = settings.trajectory(&p.spec, p.x0, settings.horizon)?;
        let name = p.name("trace");
        let max_x = tr.x.iter().cloned().fold(f64::MIN, f64::max);
        Ok(Outcome {
            files: vec![Artifact::csv(name.clone(), trace_csv(&tr, settings.trace_stride))],
            result: json!({
                "scenario": name,
                "params": spec_json(p),
                "dt": tr.dt(),
                "source": tr.meta.source,
                "samples": tr.len(),
                "diverged_at": tr.diverged,
                "crossed_zero": tr.crossed_zero,
                "max_x": max_x,
            }),
        })
    })
}

fn densities(
    settings: &Settings,
    points: &[ScenarioPoint],
    fatal_divergence: bool,
) -> Result<(Vec<Artifact>, Vec<Value>)> {
    run_points(points, |p| {
        let tr = settings.trajectory(&p.spec, p.x0, settings.horizon)?;
        let name = p.name("density");
        if let Some(time) = tr.diverged {
            if fatal_divergence {
                return Err(Error::Diverged { time });
            }
            return Ok(Outcome {
                files: Vec::new(),
                result: json!({
                    "scenario": name,
                    "params": spec_json(p),
                    "dt": tr.dt(),
                    "diverged_at": time,
                }),
            });
        }
        let d = density::estimate_density(&tr, settings.bins)?;
        let mut result = density_summary(&d, settings.prominence)?;
        result["scenario"] = json!(name);
        result["params"] = spec_json(p);
        result["dt"] = json!(tr.dt());
        result["source"] = json!(tr.meta.source);
        result["mean"] = json!(mean_value(&tr)?);
        result["crossed_zero"] = json!(tr.crossed_zero);
        Ok(Outcome {
            files: vec![Artifact::csv(name, d.to_csv_string())],
            result,
        })
    })
}

fn fi_series(settings: &Settings, points: &[ScenarioPoint]) -> Result<(Vec<Artifact>, Vec<Value>)> {
    let opts = settings.fisher_options();
    run_points(points, |p| {
        let series = fisher::fisher_series(&p.spec, p.x0, settings.n_points, settings.t_step, &opts)?;
        let name = p.name("fisher");
        Ok(Outcome {
            files: vec![Artifact::csv(name.clone(), series.to_csv_string())],
            result: json!({
                "scenario": name,
                "params": spec_json(p),
                "dt": opts.resolved_dt(&p.spec),
                "eps_u_abs": series.eps_u,
                "asymptote": series.asymptote,
                "trailing_spread": series.trailing_spread(),
            }),
        })
    })
}

fn fi_sweeps(settings: &Settings) -> Result<(Vec<Artifact>, Vec<Value>)> {
    let opts = settings.fisher_options();
    let mut files = Vec::new();
    let mut results = Vec::new();
    for &n0 in &settings.n0 {
        for &x0 in &settings.x0 {
            let template = settings.spec_for(n0, settings.omega[0]);
            let pts = fisher::omega_sweep(
                &template,
                x0,
                &settings.omega,
                settings.n_points,
                settings.t_step,
                &opts,
            )?;
            let name = format!("sweep_{}_n0-{n0}_x0-{x0}", settings.variant);
            let mut buf = Vec::new();
            fisher::write_sweep_csv(&pts, &mut buf).map_err(|e| Error::io(&name, e))?;
            let argmax = pts
                .iter()
                .filter_map(|p| p.asymptote.map(|a| (p.omega, a)))
                .fold(None, |best: Option<(f64, f64)>, (w, a)| match best {
                    Some((_, b)) if b >= a => best,
                    _ => Some((w, a)),
                })
                .map(|(w, _)| w);
            results.push(json!({
                "scenario": name,
                "N0": n0,
                "x0": x0,
                "points": pts,
                "argmax_omega": argmax,
            }));
            files.push(Artifact {
                name: format!("{name}.csv"),
                bytes: buf,
            });
        }
    }
    Ok((files, results))
}

fn max_x_sweeps(settings: &Settings) -> Result<(Vec<Artifact>, Vec<Value>)> {
    let mut files = Vec::new();
    let mut results = Vec::new();
    for &n0 in &settings.n0 {
        for &x0 in &settings.x0 {
            let template = settings.spec_for(n0, settings.omega[0]);
            let pts = max_x_sweep(&template, x0, &settings.omega)?;
            let name = format!("max_x_n0-{n0}_x0-{x0}");
            let mut csv = String::from("omega,max_x,sampled_max\n");
            for p in &pts {
                csv.push_str(&format!("{},{},{}\n", p.omega, p.max_x, p.sampled_max));
            }
            results.push(json!({"scenario": name, "N0": n0, "x0": x0, "points": pts}));
            files.push(Artifact::csv(name, csv));
        }
    }
    Ok((files, results))
}

fn means(settings: &Settings, points: &[ScenarioPoint]) -> Result<Vec<Value>> {
    points
        .par_iter()
        .map(|p| {
            let tr = settings.trajectory(&p.spec, p.x0, settings.horizon)?;
            Ok(json!({
                "params": spec_json(p),
                "label": Label::for_omega(p.spec.omega),
                "dt": tr.dt(),
                "source": tr.meta.source,
                "mean": mean_value(&tr)?,
            }))
        })
        .collect()
}

fn resilience(settings: &Settings, points: &[ScenarioPoint]) -> Result<Vec<ResilienceReport>> {
    let forcing = if settings.forcing.is_empty() {
        table_forcings()
    } else {
        settings.forcing.clone()
    };
    points
        .iter()
        .map(|p| resilience_study(&p.spec, p.x0, &forcing, settings.horizon, settings.dt))
        .collect()
}

fn forced_points(settings: &Settings) -> Vec<ScenarioPoint> {
    settings
        .expand()
        .into_iter()
        .flat_map(|p| {
            settings.forcing.iter().map(move |f| ScenarioPoint {
                spec: p.spec.with_forcing(f.b1, f.omega1),
                x0: p.x0,
            })
        })
        .collect()
}

fn json_artifact(name: &str, value: &Value) -> Result<Artifact> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(Artifact {
        name: format!("{name}.json"),
        bytes,
    })
}

/// Runs a preset with the given settings, producing its artifacts in
/// memory. Nothing is written to disk here.
pub fn run_figure(preset: FigureId, settings: &Settings) -> Result<ArtifactSet> {
    settings.validate()?;
    let points = settings.expand();
    let fatal = preset.requires_bounded();
    let (files, results) = match preset {
        FigureId::Fig1 | FigureId::Fig13 => {
            let (files, results) = traces(settings, &points)?;
            (files, json!(results))
        }
        FigureId::Fig2 => {
            let (files, results) = max_x_sweeps(settings)?;
            (files, json!(results))
        }
        FigureId::Fig3 | FigureId::Fig4 | FigureId::Fig11 | FigureId::Fig12 => {
            let (files, results) = densities(settings, &points, fatal)?;
            (files, json!(results))
        }
        FigureId::Fig10 => {
            let mut all = points.clone();
            all.extend(forced_points(settings));
            let (files, results) = densities(settings, &all, fatal)?;
            (files, json!(results))
        }
        FigureId::Fig6 | FigureId::Fig8 => {
            let (files, results) = fi_series(settings, &points)?;
            (files, json!(results))
        }
        FigureId::Fig7 | FigureId::Fig9 => {
            let (files, results) = fi_sweeps(settings)?;
            (files, json!(results))
        }
        FigureId::Table1 => {
            let results = json!(means(settings, &points)?);
            (vec![json_artifact("table1", &results)?], results)
        }
        FigureId::Table2 => {
            let results = json!(resilience(settings, &points)?);
            (vec![json_artifact("table2", &results)?], results)
        }
    };
    Ok(ArtifactSet {
        name: preset.as_str().to_string(),
        settings: settings.clone(),
        files,
        results,
    })
}

/// Custom (non-preset) runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CustomRun {
    /// Trajectory, density and FI series per scenario.
    Simulate,
    Density,
    Fisher,
    /// Asymptotic FI against omega.
    Sweep,
    Resilience,
}

impl CustomRun {
    pub fn as_str(&self) -> &'static str {
        match self {
            CustomRun::Simulate => "simulate",
            CustomRun::Density => "density",
            CustomRun::Fisher => "fisher",
            CustomRun::Sweep => "sweep",
            CustomRun::Resilience => "resilience",
        }
    }
}

pub fn run_custom(kind: CustomRun, settings: &Settings) -> Result<ArtifactSet> {
    settings.validate()?;
    let points = settings.expand();
    let (files, results) = match kind {
        CustomRun::Simulate => {
            let (mut files, trace_results) = traces(settings, &points)?;
            if let Some(time) = trace_results
                .iter()
                .find_map(|r| r["diverged_at"].as_f64())
            {
                return Err(Error::Diverged { time });
            }
            let (dfiles, dres) = densities(settings, &points, true)?;
            let (ffiles, fres) = fi_series(settings, &points)?;
            files.extend(dfiles);
            files.extend(ffiles);
            (
                files,
                json!({"traces": trace_results, "densities": dres, "fisher": fres}),
            )
        }
        CustomRun::Density => {
            let (files, results) = densities(settings, &points, true)?;
            (files, json!(results))
        }
        CustomRun::Fisher => {
            let (files, results) = fi_series(settings, &points)?;
            (files, json!(results))
        }
        CustomRun::Sweep => {
            let (files, results) = fi_sweeps(settings)?;
            (files, json!(results))
        }
        CustomRun::Resilience => {
            let results = json!(resilience(settings, &points)?);
            (vec![json_artifact("resilience", &results)?], results)
        }
    };
    Ok(ArtifactSet {
        name: kind.as_str().to_string(),
        settings: settings.clone(),
        files,
        results,
    })
}

/// Writes `<outdir>/<name>/<file>` for every artifact, optional SVG charts
/// next to each CSV, and `manifest.json`. Returns the written paths.
pub fn write_artifact_set(set: &ArtifactSet, outdir: &Path, emit_svg: bool) -> Result<Vec<PathBuf>> {
    let dir = outdir.join(&set.name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = set.files.clone();
    if emit_svg {
        for a in &set.files {
            if let Some(stem) = a.name.strip_suffix(".csv") {
                let text = String::from_utf8_lossy(&a.bytes);
                let kind = if text.starts_with("bin_left,bin_right,density") {
                    svg::ChartKind::Histogram
                } else {
                    svg::ChartKind::Line
                };
                let doc = svg::emit_svg(&text, kind, stem)?;
                files.push(Artifact {
                    name: format!("{stem}.svg"),
                    bytes: doc.into_bytes(),
                });
            }
        }
    }
    let full = ArtifactSet {
        files,
        ..set.clone()
    };
    let mut written = Vec::new();
    for a in &full.files {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    let manifest = json_artifact("manifest", &full.manifest())?;
    let path = dir.join(&manifest.name);
    fs::write(&path, &manifest.bytes).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_change_examples() {
        assert_eq!(percent_change(5.0, 5.0).unwrap(), 0.0);
        let v = percent_change(5.5433, 6.3927).unwrap();
        assert!((v - 15.3).abs() < 0.05, "{v}");
        let v = percent_change(0.1733, 1.3103).unwrap();
        assert!((v - 656.1).abs() < 0.1, "{v}");
        assert!(percent_change(0.0, 1.0).is_err());
    }

    #[test]
    fn mean_of_constant_trajectory() {
        let tr = integrate::integrate(&ModelSpec::default(), 10.0, 5.0, 1e-2).unwrap();
        assert_eq!(mean_value(&tr).unwrap(), 10.0);
    }

    #[test]
    fn resilience_with_zero_forcing_is_unchanged() {
        let s = ModelSpec::correlated(0.0, 5.0, 10.0, 10.0);
        let r = resilience_study(&s, 0.1, &[Forcing::new(0.0, 1.0)], 50.0, Some(1e-3)).unwrap();
        assert_eq!(r.label, Some(Label::NonOptimal));
        assert!(r.entries[0].percent_change.unwrap() < 1e-9);
        assert!(resilience_study(&s, 0.1, &[], 50.0, None).is_err());
    }

    #[test]
    fn max_x_sweep_examples() {
        let s = ModelSpec::correlated(0.0, 5.0, 1.0, 10.0);
        let pts = max_x_sweep(&s, 0.1, &[0.1, 10.0]).unwrap();
        assert!((pts[0].max_x - 10.0).abs() / 10.0 < 1e-6);
        assert!((pts[1].max_x - 0.2672).abs() < 1e-4);
        for p in &pts {
            assert!((p.max_x - p.sampled_max).abs() <= 1e-9 * p.max_x);
        }
        let pts = max_x_sweep(&s, 5.0, &STANDARD_OMEGAS).unwrap();
        assert!(pts.iter().all(|p| p.max_x >= 5.0));
    }

    #[test]
    fn settings_round_trip_through_pairs() {
        let mut s = FigureId::Table2.defaults();
        s.dt = Some(5e-4);
        s.omega = vec![0.1, 0.5, 1.0 / 3.0];
        let mut back = Settings::default();
        for (k, v) in s.to_pairs() {
            back.apply(&k, &v).unwrap();
        }
        assert_eq!(back, s);
    }

    #[test]
    fn unknown_and_invalid_keys() {
        let mut s = Settings::default();
        assert!(s.apply("colour", "red").is_err());
        assert!(s.apply("forcing.1.B1", "1").is_err());
        assert!(s.apply("forcing.0.phase", "1").is_err());
        s.apply("omega", "-1").unwrap();
        let err = s.validate().unwrap_err().to_string();
        assert!(err.contains("omega"), "{err}");
    }

    #[test]
    fn expansion_is_cartesian() {
        let s = FigureId::Fig3.defaults();
        assert_eq!(s.expand().len(), 6);
        let s = FigureId::Fig12.defaults();
        assert_eq!(s.expand().len(), 6);
        assert_eq!(forced_points(&FigureId::Fig10.defaults()).len(), 8);
    }

    #[test]
    fn preset_names_parse() {
        for id in FigureId::ALL {
            assert_eq!(id.as_str().parse::<FigureId>().unwrap(), id);
        }
        assert!("fig5".parse::<FigureId>().is_err());
    }

    #[test]
    fn table1_preset_reports_two_means() {
        let mut s = FigureId::Table1.defaults();
        s.horizon = 100.0;
        let set = run_figure(FigureId::Table1, &s).unwrap();
        assert_eq!(set.files.len(), 1);
        assert_eq!(set.results.as_array().unwrap().len(), 2);
        let manifest = set.manifest();
        assert_eq!(manifest["settings"]["T"], "100");
        assert_eq!(manifest["files"][0]["name"], "table1.json");
    }
}
