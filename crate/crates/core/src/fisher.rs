//! Fisher Information of time-occupancy densities.
//!
//! Two estimators are provided:
//!
//! * [`fisher_from_density`] discretizes `I = ∫ (dp/dx)^2 / p dx` on a
//!   binned density.
//! * [`fisher_time_average`] evaluates the same quantity along the
//!   trajectory, `I = (1/T) ∫ (du/dt)^2 / u^4 dt`, where `u = dx/dt`.
//!
//! The time-domain integrand diverges like `(t - t*)^-4` at every turning
//! point `u(t*) = 0`, so its value is only defined relative to a floor
//! `eps_u` on `|u|`. Each turning point then contributes roughly
//! `(8/3) |du/dt| / eps_u^3`; the reported numbers are meaningful only for
//! a fixed, recorded floor.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::density::{self, DensityEstimate};
use crate::error::{Error, Result};
use crate::integrate::{self, StateStream, Trajectory, TrajectorySource};
use crate::model::{self, ModelSpec};

/// Default floor on `|u|`, relative to `max |u|` over the trajectory.
pub const DEFAULT_EPS_REL: f64 = 1e-3;
/// Bins with density below this fraction of the peak are left out.
pub const DENSITY_FLOOR_REL: f64 = 1e-12;
pub const DEFAULT_N_POINTS: usize = 1000;
pub const DEFAULT_T_STEP: f64 = 10.0;
/// Fraction of the series averaged into the asymptote.
pub const ASYMPTOTE_TAIL: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    TimeDomain,
    DensityDomain,
}

/// Binned estimate: central differences on bin centres (one-sided at the
/// ends), summing `(dp/dx)^2 / p * width` over bins above the floor.
pub fn fisher_from_density(d: &DensityEstimate) -> f64 {
    let m = d.p.len();
    if m < 2 {
        return 0.0;
    }
    let centers = d.centers();
    let widths = d.widths();
    let peak = d.p.iter().cloned().fold(0.0, f64::max);
    let floor = DENSITY_FLOOR_REL * peak;
    let mut total = 0.0;
    for i in 0..m {
        let p = d.p[i];
        if !(p > floor) {
            continue;
        }
        let (lo, hi) = match i {
            0 => (0, 1),
            _ if i == m - 1 => (m - 2, m - 1),
            _ => (i - 1, i + 1),
        };
        let slope = (d.p[hi] - d.p[lo]) / (centers[hi] - centers[lo]);
        total += slope * slope / p * widths[i];
    }
    total
}

/// `1e-3 * max |u|`, or the smallest positive float for a resting orbit.
pub fn default_eps(traj: &Trajectory) -> f64 {
    eps_from_max(traj.u.iter().fold(0.0_f64, |m, &u| m.max(u.abs())), DEFAULT_EPS_REL)
}

fn eps_from_max(max_u: f64, rel: f64) -> f64 {
    let eps = rel * max_u;
    if eps > 0.0 {
        eps
    } else {
        f64::MIN_POSITIVE
    }
}

#[inline]
fn integrand(u: f64, udot: f64, eps: f64) -> f64 {
    if udot == 0.0 {
        return 0.0;
    }
    let m = u.abs().max(eps);
    let q = udot / (m * m);
    q * q
}

fn check_time_average_inputs(traj: &Trajectory, eps_u: f64) -> Result<()> {
    traj.ensure_bounded()?;
    if !(eps_u > 0.0) {
        return Err(Error::invalid("eps_u", format!("must be > 0, got {eps_u}")));
    }
    if traj.len() < 2 {
        return Err(Error::invalid("trajectory", "need at least two samples"));
    }
    Ok(())
}

/// Trapezoidal `(1/T) ∫ (du/dt)^2 / max(|u|, eps_u)^4 dt` over the grid.
pub fn fisher_time_average(traj: &Trajectory, eps_u: f64) -> Result<f64> {
    check_time_average_inputs(traj, eps_u)?;
    let f: Vec<f64> = traj
        .u
        .iter()
        .zip(&traj.udot)
        .map(|(&u, &ud)| integrand(u, ud, eps_u))
        .collect();
    Ok(trapezoid(&f, traj.dt()) / traj.duration())
}

/// The same average written through the occupancy density along the orbit:
/// `p = A / |u|`, `dp/dt = -A (du/dt) / u^2`, `I = ∫ (dp/dt)^2 / A dt`
/// with `A = 1/T`, using the same floor on `|u|`.
pub fn fisher_time_average_density_rate(traj: &Trajectory, eps_u: f64) -> Result<f64> {
    check_time_average_inputs(traj, eps_u)?;
    let a = 1.0 / traj.duration();
    let f: Vec<f64> = traj
        .u
        .iter()
        .zip(&traj.udot)
        .map(|(&u, &ud)| {
            let m = u.abs().max(eps_u);
            let dp_dt = -a * ud / (m * m);
            dp_dt * dp_dt / a
        })
        .collect();
    Ok(trapezoid(&f, traj.dt()))
}

fn trapezoid(f: &[f64], dt: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = f[1..n - 1].iter().sum();
    dt * (inner + 0.5 * (f[0] + f[n - 1]))
}

/// Time-domain estimate for a range of floors, `factors` scaling the default.
pub fn eps_sensitivity(traj: &Trajectory, factors: &[f64]) -> Result<Vec<(f64, f64)>> {
    let base = default_eps(traj);
    factors
        .iter()
        .map(|&f| {
            let eps = base * f;
            Ok((eps, fisher_time_average(traj, eps)?))
        })
        .collect()
}

/// Settings shared by FI series and sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherOptions {
    pub estimator: Estimator,
    /// Floor on `|u|` relative to `max |u|` over the whole horizon.
    pub eps_rel: f64,
    /// Step; `None` selects [`integrate::default_dt`] per spec.
    pub dt: Option<f64>,
    /// Trajectory source; `None` selects the closed form where available.
    pub source: Option<TrajectorySource>,
    /// Bins for the density-domain estimator.
    pub bins: usize,
    pub divergence_bound: f64,
}

impl Default for FisherOptions {
    fn default() -> Self {
        FisherOptions {
            estimator: Estimator::TimeDomain,
            eps_rel: DEFAULT_EPS_REL,
            dt: None,
            source: None,
            bins: density::DEFAULT_BINS,
            divergence_bound: integrate::DEFAULT_DIVERGENCE_BOUND,
        }
    }
}

impl FisherOptions {
    pub fn resolved_dt(&self, spec: &ModelSpec) -> f64 {
        self.dt.unwrap_or_else(|| integrate::default_dt(spec))
    }

    pub fn resolved_source(&self, spec: &ModelSpec) -> TrajectorySource {
        self.source.unwrap_or_else(|| TrajectorySource::preferred(spec))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherSeries {
    pub t_values: Vec<f64>,
    pub i_values: Vec<f64>,
    pub asymptote: f64,
    pub estimator: Estimator,
    /// Absolute floor used by the time-domain estimator.
    pub eps_u: Option<f64>,
}

impl FisherSeries {
    fn new(t_values: Vec<f64>, i_values: Vec<f64>, estimator: Estimator, eps_u: Option<f64>) -> Self {
        let asymptote = tail_mean(&i_values);
        FisherSeries {
            t_values,
            i_values,
            asymptote,
            estimator,
            eps_u,
        }
    }

    fn tail(&self) -> &[f64] {
        let n = self.i_values.len();
        let k = tail_len(n);
        &self.i_values[n - k..]
    }

    /// `(max - min) / mean` over the trailing window used for the asymptote.
    pub fn trailing_spread(&self) -> f64 {
        let tail = self.tail();
        let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = tail.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi == lo {
            0.0
        } else {
            (hi - lo) / self.asymptote.abs()
        }
    }

    /// Writes `T,I` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "T,I")?;
        for (t, i) in self.t_values.iter().zip(&self.i_values) {
            writeln!(w, "{t},{i}")?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

fn tail_len(n: usize) -> usize {
    ((n as f64 * ASYMPTOTE_TAIL).ceil() as usize).clamp(1, n.max(1))
}

fn tail_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let k = tail_len(values.len());
    values[values.len() - k..].iter().sum::<f64>() / k as f64
}

/// FI for `T = T_step, 2 T_step, ..., n_points T_step`, each computed on the
/// prefix `[0, T]` of a single trajectory.
///
/// The time-domain floor is fixed once from `max |u|` over the full
/// horizon, so every entry equals [`fisher_time_average`] of its prefix
/// with that floor. The trajectory is streamed twice rather than stored.
pub fn fisher_series(
    spec: &ModelSpec,
    x0: f64,
    n_points: usize,
    t_step: f64,
    opts: &FisherOptions,
) -> Result<FisherSeries> {
    if n_points < 1 {
        return Err(Error::invalid("n_points", "must be >= 1"));
    }
    if !(t_step > 0.0) {
        return Err(Error::invalid("T_step", format!("must be > 0, got {t_step}")));
    }
    let dt = opts.resolved_dt(spec);
    let source = opts.resolved_source(spec);
    let horizon = n_points as f64 * t_step;
    let t_values: Vec<f64> = (1..=n_points).map(|j| j as f64 * t_step).collect();
    let checkpoints: Vec<usize> = t_values
        .iter()
        .map(|&t| integrate::step_count(t, dt))
        .collect();
    if checkpoints[0] == 0 {
        return Err(Error::invalid(
            "T_step",
            format!("must be at least one step ({t_step} < dt = {dt})"),
        ));
    }
    let stream = || StateStream::new(spec, x0, horizon, dt, source);

    match opts.estimator {
        Estimator::TimeDomain => {
            let mut max_u: f64 = 0.0;
            for (t, x) in stream()? {
                if !x.is_finite() || x.abs() > opts.divergence_bound {
                    return Err(Error::Diverged { time: t });
                }
                max_u = max_u.max(model::drift(spec, x, t).abs());
            }
            let eps = eps_from_max(max_u, opts.eps_rel);

            let mut i_values = Vec::with_capacity(n_points);
            let mut next = 0;
            let mut sum = 0.0;
            let mut prev = 0.0;
            for (i, (t, x)) in stream()?.enumerate() {
                let f = integrand(
                    model::drift(spec, x, t),
                    model::drift_time_derivative(spec, x, t),
                    eps,
                );
                if i > 0 {
                    sum += 0.5 * (prev + f);
                }
                prev = f;
                while next < checkpoints.len() && checkpoints[next] == i {
                    i_values.push(sum / i as f64);
                    next += 1;
                }
                if next == checkpoints.len() {
                    break;
                }
            }
            Ok(FisherSeries::new(t_values, i_values, Estimator::TimeDomain, Some(eps)))
        }
        Estimator::DensityDomain => {
            let mut xs = Vec::with_capacity(checkpoints[n_points - 1] + 1);
            let mut i_values = Vec::with_capacity(n_points);
            let mut next = 0;
            let mut hist = PrefixHistogram::new(opts.bins);
            for (i, (t, x)) in stream()?.enumerate() {
                if !x.is_finite() || x.abs() > opts.divergence_bound {
                    return Err(Error::Diverged { time: t });
                }
                xs.push(x);
                while next < checkpoints.len() && checkpoints[next] == i {
                    let d = hist.update(&xs, i as f64 * dt);
                    i_values.push(fisher_from_density(&d));
                    next += 1;
                }
                if next == checkpoints.len() {
                    break;
                }
            }
            Ok(FisherSeries::new(t_values, i_values, Estimator::DensityDomain, None))
        }
    }
}

/// Histogram over a growing prefix; counts are extended incrementally while
/// the observed support is unchanged and rebuilt when it moves.
struct PrefixHistogram {
    bins: usize,
    counted: usize,
    support: (f64, f64),
    counts: Vec<u64>,
}

impl PrefixHistogram {
    fn new(bins: usize) -> Self {
        PrefixHistogram {
            bins,
            counted: 0,
            support: (f64::NAN, f64::NAN),
            counts: Vec::new(),
        }
    }

    fn update(&mut self, xs: &[f64], duration: f64) -> DensityEstimate {
        let mut lo = self.support.0;
        let mut hi = self.support.1;
        if self.counted == 0 {
            lo = f64::INFINITY;
            hi = f64::NEG_INFINITY;
        }
        for &x in &xs[self.counted..] {
            lo = lo.min(x);
            hi = hi.max(x);
        }
        let width = (hi - lo) / (self.bins - 1) as f64;
        let start = lo - 0.5 * width;
        let degenerate = !(width > 0.0) || start + width == start;
        let rebuild = (lo, hi) != self.support || self.counted == 0;
        if rebuild {
            self.counts = vec![0; self.bins];
            self.counted = 0;
            self.support = (lo, hi);
        }
        if !degenerate {
            for &x in &xs[self.counted..] {
                let idx = ((x - start) / width).floor();
                let idx = if idx < 0.0 { 0 } else { (idx as usize).min(self.bins - 1) };
                self.counts[idx] += 1;
            }
        }
        self.counted = xs.len();
        let a = if duration > 0.0 { 1.0 / duration } else { 0.0 };
        if degenerate {
            let half = 1e-9 * lo.abs().max(1.0);
            let edges = vec![lo - half, hi + half];
            return DensityEstimate {
                p: vec![1.0 / (edges[1] - edges[0])],
                edges,
                a,
                support: (lo, hi),
            };
        }
        let n = xs.len() as f64;
        let edges: Vec<f64> = (0..=self.bins).map(|i| start + i as f64 * width).collect();
        let p = self
            .counts
            .iter()
            .enumerate()
            .map(|(i, &c)| c as f64 / (n * (edges[i + 1] - edges[i])))
            .collect();
        DensityEstimate {
            edges,
            p,
            a,
            support: (lo, hi),
        }
    }
}

/// One row of an omega sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub omega: f64,
    /// `None` when the run diverged.
    pub asymptote: Option<f64>,
    pub diverged_at: Option<f64>,
}

/// Asymptotic FI per modulation frequency, in input order. Divergent runs
/// are recorded rather than aborting the sweep.
pub fn omega_sweep(
    template: &ModelSpec,
    x0: f64,
    omegas: &[f64],
    n_points: usize,
    t_step: f64,
    opts: &FisherOptions,
) -> Result<Vec<SweepPoint>> {
    if omegas.is_empty() {
        return Err(Error::invalid("omegas", "must not be empty"));
    }
    if let Some(&w) = omegas.iter().find(|&&w| !(w > 0.0)) {
        return Err(Error::invalid("omega", format!("must be > 0, got {w}")));
    }
    omegas
        .par_iter()
        .map(|&omega| {
            let spec = template.with_omega(omega);
            match fisher_series(&spec, x0, n_points, t_step, opts) {
                Ok(series) => Ok(SweepPoint {
                    omega,
                    asymptote: Some(series.asymptote),
                    diverged_at: None,
                }),
                Err(Error::Diverged { time }) => Ok(SweepPoint {
                    omega,
                    asymptote: None,
                    diverged_at: Some(time),
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Writes `omega,I_asymptote` rows; diverged runs are written as `nan`.
pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "omega,I_asymptote")?;
    for p in points {
        match p.asymptote {
            Some(a) => writeln!(w, "{},{}", p.omega, a)?,
            None => writeln!(w, "{},nan", p.omega)?,
        }
    }
    Ok(())
}
