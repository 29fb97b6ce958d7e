//! Time-occupancy densities.
//!
//! On a uniform time grid every sample carries the same weight `dt / T`, so
//! a plain histogram of the state samples is the discrete form of
//! `p(x) dx = p(t) dt` with `p(t) = 1/T`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

use crate::error::{Error, Result};
use crate::integrate::Trajectory;
use crate::model::{self, ModelSpec};

pub const DEFAULT_BINS: usize = 100;
pub const DEFAULT_PROMINENCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityEstimate {
    /// Strictly increasing bin edges, one more than `p`.
    pub edges: Vec<f64>,
    /// Density per bin.
    pub p: Vec<f64>,
    /// Uniform time density `1 / T`.
    pub a: f64,
    /// Observed `(min x, max x)`.
    pub support: (f64, f64),
}

impl DensityEstimate {
    /// Builds an estimate from edges and densities, checking shapes.
    pub fn new(edges: Vec<f64>, p: Vec<f64>, a: f64) -> Result<Self> {
        if edges.len() != p.len() + 1 || p.is_empty() {
            return Err(Error::invalid(
                "edges",
                format!("need len(p) + 1 edges, got {} edges for {} bins", edges.len(), p.len()),
            ));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("edges", "must be strictly increasing"));
        }
        if p.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::invalid("p", "densities must be >= 0"));
        }
        let support = (edges[0], edges[edges.len() - 1]);
        Ok(DensityEstimate { edges, p, a, support })
    }

    pub fn bins(&self) -> usize {
        self.p.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Integral of the density over all bins.
    pub fn total_mass(&self) -> f64 {
        self.mass_in_bins(0, self.bins())
    }

    /// Integral over bins `first..last`.
    pub fn mass_in_bins(&self, first: usize, last: usize) -> f64 {
        (first..last)
            .map(|i| self.p[i] * (self.edges[i + 1] - self.edges[i]))
            .sum()
    }

    pub fn support_width(&self) -> f64 {
        self.support.1 - self.support.0
    }

    /// Index of the bin holding the largest density.
    pub fn argmax(&self) -> usize {
        self.p
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
            .0
    }

    /// Writes `bin_left,bin_right,density` rows with a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bin_left,bin_right,density")?;
        for (i, p) in self.p.iter().enumerate() {
            writeln!(w, "{},{},{}", self.edges[i], self.edges[i + 1], p)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

/// Histogram of a trajectory's states, normalized to unit integral.
///
/// `bins` bins are laid over the observed support with half a bin of
/// padding on each side, so the extreme states sit at the centers of the
/// first and last bins. A constant trajectory yields a single narrow bin.
pub fn estimate_density(traj: &Trajectory, bins: usize) -> Result<DensityEstimate> {
    if bins < 2 {
        return Err(Error::invalid("bins", format!("must be >= 2, got {bins}")));
    }
    traj.ensure_bounded()?;
    if traj.is_empty() {
        return Err(Error::invalid("trajectory", "no samples"));
    }
    let duration = traj.duration();
    let a = if duration > 0.0 { 1.0 / duration } else { 0.0 };
    let (lo, hi) = traj
        .x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let n = traj.len() as f64;

    let width = (hi - lo) / (bins - 1) as f64;
    let start = lo - 0.5 * width;
    if !(width > 0.0) || start + width == start {
        let half = 1e-9 * lo.abs().max(1.0);
        let edges = vec![lo - half, hi + half];
        let p = vec![1.0 / (edges[1] - edges[0])];
        return Ok(DensityEstimate {
            edges,
            p,
            a,
            support: (lo, hi),
        });
    }

    let edges: Vec<f64> = (0..=bins).map(|i| start + i as f64 * width).collect();
    let mut counts = vec![0u64; bins];
    for &x in &traj.x {
        let idx = ((x - start) / width).floor();
        let idx = if idx < 0.0 { 0 } else { (idx as usize).min(bins - 1) };
        counts[idx] += 1;
    }
    let p = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| c as f64 / (n * (edges[i + 1] - edges[i])))
        .collect();
    Ok(DensityEstimate {
        edges,
        p,
        a,
        support: (lo, hi),
    })
}

/// Occupancy density `p(x) = (2/P) / |u|` of the periodic correlated orbit
/// (`B = 0`, unforced), evaluated pointwise.
///
/// Over one period `P` the orbit rises from `x0` to its maximum and falls
/// back along a mirror-image branch; both branches contribute equally.
/// States outside `[x0, max]` get zero, and the two turning points
/// themselves get `+inf`.
pub fn analytic_branch_density(spec: &ModelSpec, x0: f64, xgrid: &[f64]) -> Result<Vec<f64>> {
    let x_max = model::max_x_closed_form(spec, x0)?;
    let k = spec.k;
    let period = 2.0 * PI / spec.omega;
    Ok(xgrid
        .iter()
        .map(|&x| {
            if x < x0 || x > x_max {
                return 0.0;
            }
            if x == x0 || x == x_max {
                return f64::INFINITY;
            }
            let phi = (x * (k - x0) / (x0 * (k - x))).ln();
            let cos_wt = (1.0 - spec.omega * phi / spec.n0).clamp(-1.0, 1.0);
            let sin_wt = (1.0 - cos_wt * cos_wt).sqrt();
            let speed = spec.n0 * sin_wt * x * (1.0 - x / k);
            if speed > 0.0 {
                2.0 / (period * speed)
            } else {
                f64::INFINITY
            }
        })
        .collect())
}

/// Indices of local maxima after a 3-bin moving average whose height
/// exceeds `prominence * max`. Plateaus count once, at their first bin;
/// the end bins compare against their single neighbour.
pub fn mode_locations(d: &DensityEstimate, prominence: f64) -> Result<Vec<usize>> {
    if !(prominence > 0.0 && prominence < 1.0) {
        return Err(Error::invalid(
            "prominence",
            format!("must lie in (0, 1), got {prominence}"),
        ));
    }
    let m = d.p.len();
    let smooth: Vec<f64> = (0..m)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(m - 1);
            d.p[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let peak = smooth.iter().cloned().fold(0.0, f64::max);
    let threshold = prominence * peak;
    let mut modes = Vec::new();
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j + 1 < m && smooth[j + 1] == smooth[i] {
            j += 1;
        }
        let left_lower = i == 0 || smooth[i - 1] < smooth[i];
        let right_lower = j + 1 == m || smooth[j + 1] < smooth[i];
        if left_lower && right_lower && smooth[i] > threshold {
            modes.push(i);
        }
        i = j + 1;
    }
    Ok(modes)
}

pub fn count_modes(d: &DensityEstimate, prominence: f64) -> Result<usize> {
    Ok(mode_locations(d, prominence)?.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::{integrate, sample_closed_form, TrajectoryMeta, TrajectorySource};

    fn ramp(n: usize) -> Trajectory {
        let dt = 1.0 / n as f64;
        let meta = TrajectoryMeta {
            spec: ModelSpec::default(),
            x0: 0.0,
            dt,
            horizon: 1.0,
            source: TrajectorySource::Rk4,
        };
        let x = (0..=n).map(|i| i as f64 * dt).collect();
        Trajectory::from_states(meta, x)
    }

    #[test]
    fn ramp_gives_uniform_density() {
        let d = estimate_density(&ramp(99_000), 100).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        for &p in &d.p[1..99] {
            assert!((p - 1.0).abs() < 0.02, "interior bin {p}");
        }
        assert!(d.edges[0] < 0.0 && d.edges[100] > 1.0);
        assert!((d.a - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normalization_and_occupancy() {
        let tr = sample_closed_form(&ModelSpec::correlated(0.0, 5.0, 1.0, 10.0), 0.1, 100.0, 1e-3)
            .unwrap();
        let d = estimate_density(&tr, 100).unwrap();
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        let (a, b) = (d.edges[20], d.edges[45]);
        let frac = tr.x.iter().filter(|&&x| x >= a && x < b).count() as f64 / tr.len() as f64;
        assert!((d.mass_in_bins(20, 45) - frac).abs() < 1e-12);
    }

    #[test]
    fn constant_trajectory_gives_narrow_single_bin() {
        let tr = integrate(&ModelSpec::default(), 10.0, 1.0, 1e-2).unwrap();
        let d = estimate_density(&tr, 100).unwrap();
        assert_eq!(d.bins(), 1);
        assert!((d.total_mass() - 1.0).abs() < 1e-12);
        assert!(d.edges[0] < 10.0 && d.edges[1] > 10.0);
    }

    #[test]
    fn rejects_diverged_and_too_few_bins() {
        let s = ModelSpec::negative_only(1.0, 10.0, 0.1, 10.0, 1.0);
        let tr = integrate(&s, 0.1, 200.0, 1e-3).unwrap();
        assert!(matches!(estimate_density(&tr, 100), Err(Error::Diverged { .. })));
        assert!(estimate_density(&ramp(10), 1).is_err());
    }

    #[test]
    fn uniform_density_has_one_mode() {
        let edges: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
        let d = DensityEstimate::new(edges, vec![1.0; 50], 1.0).unwrap();
        assert_eq!(count_modes(&d, 0.05).unwrap(), 1);
    }

    #[test]
    fn two_separated_bumps_are_two_modes() {
        let edges: Vec<f64> = (0..=60).map(|i| i as f64).collect();
        let p: Vec<f64> = (0..60)
            .map(|i| {
                let x = i as f64;
                (-(x - 15.0).powi(2) / 8.0).exp() + 0.5 * (-(x - 45.0).powi(2) / 8.0).exp()
            })
            .collect();
        let d = DensityEstimate::new(edges, p, 1.0).unwrap();
        assert_eq!(mode_locations(&d, 0.05).unwrap(), vec![15, 45]);
        assert_eq!(count_modes(&d, 0.6).unwrap(), 1);
        assert!(count_modes(&d, 0.0).is_err());
        assert!(count_modes(&d, 1.0).is_err());
    }

    #[test]
    fn analytic_density_outside_reach_is_zero() {
        let s = ModelSpec::correlated(0.0, 5.0, 1.0, 10.0);
        let v = analytic_branch_density(&s, 0.1, &[0.05, 9.96, 12.0]).unwrap();
        assert_eq!(v, vec![0.0, 0.0, 0.0]);
        let v = analytic_branch_density(&s, 0.1, &[0.1]).unwrap();
        assert!(v[0].is_infinite());
    }

    #[test]
    fn analytic_density_integrates_to_one() {
        // Substitute x = x(t) on the rising branch: the integral is exact in t.
        let s = ModelSpec::correlated(0.0, 5.0, 2.0, 10.0);
        let half = PI / s.omega;
        let n = 20_000;
        let mut mass = 0.0;
        for i in 0..n {
            let t0 = half * i as f64 / n as f64;
            let t1 = half * (i + 1) as f64 / n as f64;
            let x0 = model::exact_correlated(&s, 0.1, t0).unwrap();
            let x1 = model::exact_correlated(&s, 0.1, t1).unwrap();
            let xm = 0.5 * (x0 + x1);
            mass += analytic_branch_density(&s, 0.1, &[xm]).unwrap()[0] * (x1 - x0);
        }
        assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
    }

    #[test]
    fn analytic_density_matches_histogram_mid_range() {
        let s = ModelSpec::correlated(0.0, 5.0, 1.0, 10.0);
        let tr = sample_closed_form(&s, 0.1, 1000.0, 1e-3).unwrap();
        let d = estimate_density(&tr, 200).unwrap();
        let mid = 0.5 * (d.support.0 + d.support.1);
        let bin = d.edges.partition_point(|&e| e <= mid) - 1;
        let analytic = analytic_branch_density(&s, 0.1, &[d.centers()[bin]]).unwrap()[0];
        let rel = (d.p[bin] - analytic).abs() / analytic;
        assert!(rel < 0.05, "hist {} analytic {analytic}", d.p[bin]);
    }

    #[test]
    fn analytic_density_peaks_where_histogram_peaks() {
        let s = ModelSpec::correlated(0.0, 5.0, 1.0, 10.0);
        let tr = sample_closed_form(&s, 0.1, 1000.0, 1e-3).unwrap();
        let d = estimate_density(&tr, 100).unwrap();
        let centers = d.centers();
        let analytic = analytic_branch_density(&s, 0.1, &centers[1..99]).unwrap();
        let lower = &analytic[..49];
        let upper = &analytic[49..];
        // the analytic curve is U-shaped: largest next to the two turning points
        assert!(lower.windows(2).take(10).all(|w| w[0] > w[1]));
        assert!(upper.windows(2).rev().take(10).all(|w| w[1] > w[0]));
        let modes = mode_locations(&d, DEFAULT_PROMINENCE).unwrap();
        assert_eq!(modes, vec![0, 99]);
    }
}
