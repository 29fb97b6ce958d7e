//! Fixed-step trajectories on a uniform time grid.
//!
//! Trajectories come either from classical fourth-order Runge-Kutta or, for
//! the correlated unforced model, from sampling the closed form on the same
//! grid. Both sources fill `u` and `udot` from the model functions, never by
//! differencing samples.

use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{self, ModelSpec};

/// States with `|x|` above this are treated as a blow-up.
pub const DEFAULT_DIVERGENCE_BOUND: f64 = 1e12;

/// Default step: `min(1e-3, 1 / (200 * fastest frequency))`.
///
/// The second term keeps more than 1000 steps per period while staying
/// incommensurate with the period, so occupancy histograms of periodic
/// orbits do not alias onto a fixed set of phases.
pub fn default_dt(spec: &ModelSpec) -> f64 {
    1e-3_f64.min(1.0 / (200.0 * spec.max_frequency()))
}

/// Number of steps on `[0, horizon]`, i.e. `floor(horizon / dt)`, tolerant
/// of ratios that land a rounding error below an integer.
pub fn step_count(horizon: f64, dt: f64) -> usize {
    let r = horizon / dt;
    let nearest = r.round();
    if (r - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        r.floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectorySource {
    Rk4,
    ClosedForm,
}

impl TrajectorySource {
    /// Closed form where it exists, Runge-Kutta otherwise.
    pub fn preferred(spec: &ModelSpec) -> Self {
        if spec.has_closed_form() {
            TrajectorySource::ClosedForm
        } else {
            TrajectorySource::Rk4
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub spec: ModelSpec,
    pub x0: f64,
    pub dt: f64,
    /// Requested horizon `T`.
    pub horizon: f64,
    pub source: TrajectorySource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub udot: Vec<f64>,
    pub meta: TrajectoryMeta,
    /// Time at which `|x|` first exceeded the divergence bound.
    pub diverged: Option<f64>,
    /// Set when any sample has `x < 0`.
    pub crossed_zero: bool,
}

impl Trajectory {
    /// Builds a trajectory from states on the grid `t_i = i dt`, filling
    /// `u` and `udot` from the model.
    pub fn from_states(meta: TrajectoryMeta, x: Vec<f64>) -> Self {
        let spec = meta.spec;
        let t: Vec<f64> = (0..x.len()).map(|i| i as f64 * meta.dt).collect();
        let u = t
            .iter()
            .zip(&x)
            .map(|(&t, &x)| model::drift(&spec, x, t))
            .collect();
        let udot = t
            .iter()
            .zip(&x)
            .map(|(&t, &x)| model::drift_time_derivative(&spec, x, t))
            .collect();
        let crossed_zero = x.iter().any(|&v| v < 0.0);
        Trajectory {
            t,
            x,
            u,
            udot,
            meta,
            diverged: None,
            crossed_zero,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.meta.dt
    }

    /// Covered time span, `t_last - t_first`.
    pub fn duration(&self) -> f64 {
        match (self.t.first(), self.t.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn is_diverged(&self) -> bool {
        self.diverged.is_some()
    }

    pub fn ensure_bounded(&self) -> Result<()> {
        match self.diverged {
            Some(time) => Err(Error::Diverged { time }),
            None => Ok(()),
        }
    }

    /// Writes `t,x,u,udot` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,u,udot")?;
        for i in 0..self.len() {
            writeln!(w, "{},{},{},{}", self.t[i], self.x[i], self.u[i], self.udot[i])?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Increment of one classical Runge-Kutta step of size `dt` from `(t, x)`.
pub fn rk4_increment(spec: &ModelSpec, t: f64, x: f64, dt: f64) -> f64 {
    let half = 0.5 * dt;
    let k1 = model::drift(spec, x, t);
    let k2 = model::drift(spec, x + half * k1, t + half);
    let k3 = model::drift(spec, x + half * k2, t + half);
    let k4 = model::drift(spec, x + dt * k3, t + dt);
    dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

pub fn rk4_step(spec: &ModelSpec, t: f64, x: f64, dt: f64) -> f64 {
    x + rk4_increment(spec, t, x, dt)
}

/// Streams `(t_i, x_i)` for `i = 0..=steps` without storing them.
#[derive(Debug, Clone)]
pub struct StateStream {
    spec: ModelSpec,
    x0: f64,
    dt: f64,
    steps: usize,
    source: TrajectorySource,
    next: usize,
    x: f64,
    // Low-order bits lost when adding increments to `x`. Near `x = K` the
    // increments are ~1e-9 of the state, and without compensation the
    // accumulated rounding is amplified when the orbit swings back down.
    carry: f64,
}

impl StateStream {
    pub fn new(
        spec: &ModelSpec,
        x0: f64,
        horizon: f64,
        dt: f64,
        source: TrajectorySource,
    ) -> Result<Self> {
        check_grid(spec, x0, horizon, dt)?;
        if source == TrajectorySource::ClosedForm && !spec.has_closed_form() {
            return Err(Error::NoClosedForm(
                "closed-form sampling needs the correlated, unforced model".into(),
            ));
        }
        Ok(StateStream {
            spec: *spec,
            x0,
            dt,
            steps: step_count(horizon, dt),
            source,
            next: 0,
            x: x0,
            carry: 0.0,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }
}

impl Iterator for StateStream {
    type Item = (f64, f64);

    fn next(&mut self) -> Option<(f64, f64)> {
        if self.next > self.steps {
            return None;
        }
        let i = self.next;
        let t = i as f64 * self.dt;
        let x = match self.source {
            TrajectorySource::Rk4 => {
                let x = self.x;
                if i < self.steps {
                    let y = rk4_increment(&self.spec, t, x, self.dt) - self.carry;
                    let next = x + y;
                    self.carry = (next - x) - y;
                    self.x = next;
                }
                x
            }
            TrajectorySource::ClosedForm => model::correlated_closed_form(&self.spec, self.x0, t),
        };
        self.next += 1;
        Some((t, x))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.steps + 1).saturating_sub(self.next);
        (left, Some(left))
    }
}

fn check_grid(spec: &ModelSpec, x0: f64, horizon: f64, dt: f64) -> Result<()> {
    spec.validate()?;
    if !x0.is_finite() {
        return Err(Error::invalid("x0", format!("must be finite, got {x0}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::invalid("T", format!("must be > 0, got {horizon}")));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("dt", format!("must be > 0, got {dt}")));
    }
    if dt > horizon {
        return Err(Error::invalid(
            "dt",
            format!("must not exceed T ({dt} > {horizon})"),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationOptions {
    pub dt: f64,
    pub divergence_bound: f64,
    pub source: TrajectorySource,
}

impl IntegrationOptions {
    pub fn rk4(dt: f64) -> Self {
        IntegrationOptions {
            dt,
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
            source: TrajectorySource::Rk4,
        }
    }

    /// Default step and preferred source for `spec`.
    pub fn for_spec(spec: &ModelSpec) -> Self {
        IntegrationOptions {
            dt: default_dt(spec),
            divergence_bound: DEFAULT_DIVERGENCE_BOUND,
            source: TrajectorySource::preferred(spec),
        }
    }
}

/// Runge-Kutta trajectory on `[0, horizon]` with step `dt`.
pub fn integrate(spec: &ModelSpec, x0: f64, horizon: f64, dt: f64) -> Result<Trajectory> {
    integrate_with(spec, x0, horizon, &IntegrationOptions::rk4(dt))
}

/// Trajectory with explicit options. Stops at the first sample whose
/// magnitude exceeds the divergence bound (or is not finite) and records
/// its time.
pub fn integrate_with(
    spec: &ModelSpec,
    x0: f64,
    horizon: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    if !(opts.divergence_bound > 0.0) {
        return Err(Error::invalid(
            "divergence_bound",
            format!("must be > 0, got {}", opts.divergence_bound),
        ));
    }
    let stream = StateStream::new(spec, x0, horizon, opts.dt, opts.source)?;
    let mut states = Vec::with_capacity(stream.steps() + 1);
    let mut diverged = None;
    for (t, x) in stream {
        if !x.is_finite() || x.abs() > opts.divergence_bound {
            diverged = Some(t);
            if x.is_finite() {
                states.push(x);
            }
            break;
        }
        states.push(x);
    }
    let meta = TrajectoryMeta {
        spec: *spec,
        x0,
        dt: opts.dt,
        horizon,
        source: opts.source,
    };
    let mut traj = Trajectory::from_states(meta, states);
    traj.diverged = diverged;
    Ok(traj)
}

/// Closed-form samples of the correlated, unforced model on the RK4 grid.
pub fn sample_closed_form(spec: &ModelSpec, x0: f64, horizon: f64, dt: f64) -> Result<Trajectory> {
    let opts = IntegrationOptions {
        dt,
        divergence_bound: DEFAULT_DIVERGENCE_BOUND,
        source: TrajectorySource::ClosedForm,
    };
    integrate_with(spec, x0, horizon, &opts)
}

/// Sup-norm differences between successive step refinements, measured on
/// the coarse grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RichardsonReport {
    /// `max |x_dt - x_dt/2|`
    pub coarse_error: f64,
    /// `max |x_dt/2 - x_dt/4|`
    pub fine_error: f64,
}

impl RichardsonReport {
    /// `log2(coarse_error / fine_error)`; NaN when both errors vanish.
    pub fn order(&self) -> f64 {
        (self.coarse_error / self.fine_error).log2()
    }
}

pub fn richardson(spec: &ModelSpec, x0: f64, horizon: f64, dt: f64) -> Result<RichardsonReport> {
    let runs = [dt, dt / 2.0, dt / 4.0]
        .iter()
        .map(|&h| integrate(spec, x0, horizon, h))
        .collect::<Result<Vec<_>>>()?;
    for r in &runs {
        r.ensure_bounded()?;
    }
    let n = runs[0].len().min((runs[1].len() - 1) / 2 + 1).min((runs[2].len() - 1) / 4 + 1);
    let mut coarse_error: f64 = 0.0;
    let mut fine_error: f64 = 0.0;
    for i in 0..n {
        let a = runs[0].x[i];
        let b = runs[1].x[2 * i];
        let c = runs[2].x[4 * i];
        coarse_error = coarse_error.max((a - b).abs());
        fine_error = fine_error.max((b - c).abs());
    }
    Ok(RichardsonReport {
        coarse_error,
        fine_error,
    })
}

/// Observed convergence order from the `dt, dt/2, dt/4` triplet.
pub fn convergence_check(spec: &ModelSpec, x0: f64, horizon: f64, dt: f64) -> Result<f64> {
    Ok(richardson(spec, x0, horizon, dt)?.order())
}
