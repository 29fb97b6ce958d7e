//! Logistic growth with sinusoidally modulated feedback.
//!
//! Three variants are supported, differing in which feedback term carries
//! the modulated rate `N(t) = B + N0 sin(omega t)`:
//!
//! * [`Variant::Correlated`]: `dx/dt = N(t) x (1 - x/K)`
//! * [`Variant::PositiveOnly`]: `dx/dt = N(t) x - C x^2 / K`
//! * [`Variant::NegativeOnly`]: `dx/dt = C x - N(t) x^2 / K`
//!
//! Every variant optionally carries an additive forcing `B1 sin(omega1 t)`.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which feedback term carries the sinusoidal modulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Correlated,
    PositiveOnly,
    NegativeOnly,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Correlated => "correlated",
            Variant::PositiveOnly => "positive_only",
            Variant::NegativeOnly => "negative_only",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "correlated" => Ok(Variant::Correlated),
            "positive_only" | "positive" => Ok(Variant::PositiveOnly),
            "negative_only" | "negative" => Ok(Variant::NegativeOnly),
            other => Err(Error::invalid("variant", format!("unknown variant '{other}'"))),
        }
    }
}

/// Full parameter set of one model instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub variant: Variant,
    /// Baseline rate constant of the modulated feedback.
    pub b: f64,
    /// Modulation amplitude.
    pub n0: f64,
    /// Modulation angular frequency.
    pub omega: f64,
    /// Carrying capacity.
    pub k: f64,
    /// Constant coefficient of the unmodulated feedback (positive-only and negative-only variants).
    pub c: f64,
    /// Additive forcing amplitude; zero means unforced.
    pub b1: f64,
    /// Additive forcing angular frequency.
    pub omega1: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            variant: Variant::Correlated,
            b: 0.0,
            n0: 5.0,
            omega: 1.0,
            k: 10.0,
            c: 1.0,
            b1: 0.0,
            omega1: 1.0,
        }
    }
}

impl ModelSpec {
    pub fn correlated(b: f64, n0: f64, omega: f64, k: f64) -> Self {
        ModelSpec {
            variant: Variant::Correlated,
            b,
            n0,
            omega,
            k,
            ..Default::default()
        }
    }

    pub fn positive_only(b: f64, n0: f64, omega: f64, k: f64, c: f64) -> Self {
        ModelSpec {
            variant: Variant::PositiveOnly,
            b,
            n0,
            omega,
            k,
            c,
            ..Default::default()
        }
    }

    pub fn negative_only(b: f64, n0: f64, omega: f64, k: f64, c: f64) -> Self {
        ModelSpec {
            variant: Variant::NegativeOnly,
            b,
            n0,
            omega,
            k,
            c,
            ..Default::default()
        }
    }

    /// Returns a copy with additive forcing `b1 sin(omega1 t)`.
    pub fn with_forcing(mut self, b1: f64, omega1: f64) -> Self {
        self.b1 = b1;
        self.omega1 = omega1;
        self
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn unforced(mut self) -> Self {
        self.b1 = 0.0;
        self
    }

    pub fn is_forced(&self) -> bool {
        self.b1 != 0.0
    }

    /// True when the logistic closed form applies (correlated, unforced).
    pub fn has_closed_form(&self) -> bool {
        self.variant == Variant::Correlated && !self.is_forced()
    }

    /// Checks parameter invariants, naming the first offending field.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("B", self.b),
            ("N0", self.n0),
            ("omega", self.omega),
            ("K", self.k),
            ("C", self.c),
            ("B1", self.b1),
            ("omega1", self.omega1),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.k <= 0.0 {
            return Err(Error::invalid("K", format!("must be > 0, got {}", self.k)));
        }
        if self.omega <= 0.0 {
            return Err(Error::invalid(
                "omega",
                format!("must be > 0, got {}", self.omega),
            ));
        }
        if self.n0 < 0.0 {
            return Err(Error::invalid("N0", format!("must be >= 0, got {}", self.n0)));
        }
        if self.b1 < 0.0 {
            return Err(Error::invalid("B1", format!("must be >= 0, got {}", self.b1)));
        }
        if self.is_forced() && self.omega1 <= 0.0 {
            return Err(Error::invalid(
                "omega1",
                format!("must be > 0 when B1 > 0, got {}", self.omega1),
            ));
        }
        Ok(())
    }

    /// Fastest angular frequency present in the right-hand side.
    pub fn max_frequency(&self) -> f64 {
        if self.is_forced() {
            self.omega.max(self.omega1)
        } else {
            self.omega
        }
    }

    fn forcing(&self, t: f64) -> f64 {
        if self.is_forced() {
            self.b1 * (self.omega1 * t).sin()
        } else {
            0.0
        }
    }

    fn forcing_rate(&self, t: f64) -> f64 {
        if self.is_forced() {
            self.b1 * self.omega1 * (self.omega1 * t).cos()
        } else {
            0.0
        }
    }
}

/// Modulated rate `B + N0 sin(omega t)`.
pub fn growth_rate(spec: &ModelSpec, t: f64) -> f64 {
    spec.b + spec.n0 * (spec.omega * t).sin()
}

fn growth_rate_derivative(spec: &ModelSpec, t: f64) -> f64 {
    spec.n0 * spec.omega * (spec.omega * t).cos()
}

/// Right-hand side `u = dx/dt` of the selected variant.
pub fn drift(spec: &ModelSpec, x: f64, t: f64) -> f64 {
    let n = growth_rate(spec, t);
    let k = spec.k;
    let core = match spec.variant {
        Variant::Correlated => n * x * (1.0 - x / k),
        Variant::PositiveOnly => n * x - spec.c * x * x / k,
        Variant::NegativeOnly => spec.c * x - n * x * x / k,
    };
    core + spec.forcing(t)
}

/// Total time derivative of the drift along a solution,
/// `du/dt = df/dt + f df/dx`, evaluated analytically.
pub fn drift_time_derivative(spec: &ModelSpec, x: f64, t: f64) -> f64 {
    let n = growth_rate(spec, t);
    let dn = growth_rate_derivative(spec, t);
    let k = spec.k;
    let (partial_t, partial_x) = match spec.variant {
        Variant::Correlated => (dn * x * (1.0 - x / k), n * (1.0 - 2.0 * x / k)),
        Variant::PositiveOnly => (dn * x, n - 2.0 * spec.c * x / k),
        Variant::NegativeOnly => (-dn * x * x / k, spec.c - 2.0 * n * x / k),
    };
    let f = drift(spec, x, t);
    partial_t + spec.forcing_rate(t) + f * partial_x
}

fn require_closed_form(spec: &ModelSpec, variant: Variant) -> Result<()> {
    if spec.variant != variant {
        return Err(Error::NoClosedForm(format!(
            "closed form requires variant {variant}, got {}",
            spec.variant
        )));
    }
    if spec.is_forced() {
        return Err(Error::NoClosedForm(
            "closed form does not apply with additive forcing (B1 != 0)".into(),
        ));
    }
    Ok(())
}

/// Integrated rate `B t + (N0/omega)(1 - cos omega t)`.
pub fn integrated_rate(spec: &ModelSpec, t: f64) -> f64 {
    spec.b * t + spec.n0 / spec.omega * (1.0 - (spec.omega * t).cos())
}

/// Exact solution of the correlated, unforced model.
///
/// Evaluated as `K x0 / (x0 + (K - x0) e^{-phi})`, which is algebraically
/// identical to the textbook form but does not overflow for large `phi`.
pub fn exact_correlated(spec: &ModelSpec, x0: f64, t: f64) -> Result<f64> {
    require_closed_form(spec, Variant::Correlated)?;
    if x0 == 0.0 {
        return Err(Error::invalid("x0", "closed form undefined for x0 = 0"));
    }
    Ok(correlated_closed_form(spec, x0, t))
}

pub(crate) fn correlated_closed_form(spec: &ModelSpec, x0: f64, t: f64) -> f64 {
    let phi = integrated_rate(spec, t);
    spec.k * x0 / (x0 + (spec.k - x0) * (-phi).exp())
}

/// Value of the negative-feedback closed form at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NegativeSolution {
    Finite { x: f64 },
    /// The denominator changed sign at `blowup_time`; the solution left to
    /// infinity before the requested time.
    Diverged { blowup_time: f64 },
}

impl NegativeSolution {
    pub fn value(&self) -> Option<f64> {
        match *self {
            NegativeSolution::Finite { x } => Some(x),
            NegativeSolution::Diverged { .. } => None,
        }
    }
}

/// Negative-feedback closed form prepared for repeated evaluation.
///
/// The denominator is carried divided by `e^{Ct}` so that it stays
/// bounded for `C > 0`.
#[derive(Debug, Clone, Copy)]
pub struct NegativeClosedForm {
    spec: ModelSpec,
    x0: f64,
    a: f64,
}

impl NegativeClosedForm {
    pub fn new(spec: &ModelSpec, x0: f64) -> Result<Self> {
        require_closed_form(spec, Variant::NegativeOnly)?;
        if !(x0 > 0.0) {
            return Err(Error::invalid("x0", format!("must be > 0, got {x0}")));
        }
        let a = spec.c * spec.c + spec.omega * spec.omega;
        Ok(NegativeClosedForm { spec: *spec, x0, a })
    }

    /// Denominator scaled by `e^{-Ct}`; positive at `t = 0`.
    pub fn scaled_denominator(&self, t: f64) -> f64 {
        let s = &self.spec;
        let inv_b = (-s.c * t).exp();
        let c_term = s.c * (s.omega * t).sin() - s.omega * (s.omega * t).cos();
        s.k * s.c * self.a * inv_b
            + s.n0 * s.c * self.x0 * (c_term + s.omega * inv_b)
            + s.b * self.x0 * self.a * (1.0 - inv_b)
    }

    /// Closed-form value, ignoring whether a blow-up happened earlier.
    pub fn eval_unchecked(&self, t: f64) -> f64 {
        let s = &self.spec;
        s.k * self.a * s.c * self.x0 / self.scaled_denominator(t)
    }

    /// First time in `[0, horizon]` where the denominator reaches zero.
    pub fn blowup_time(&self, horizon: f64) -> Option<f64> {
        let s = &self.spec;
        let mut scale = 2.0 * std::f64::consts::PI / s.omega;
        if s.c != 0.0 {
            scale = scale.min(1.0 / s.c.abs());
        }
        let step = scale / 64.0;
        if self.scaled_denominator(0.0) <= 0.0 {
            return Some(0.0);
        }
        let mut lo = 0.0;
        while lo < horizon {
            let hi = (lo + step).min(horizon);
            if self.scaled_denominator(hi) <= 0.0 {
                return Some(self.bisect(lo, hi));
            }
            lo = hi;
        }
        None
    }

    fn bisect(&self, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.scaled_denominator(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }

    pub fn eval(&self, t: f64) -> NegativeSolution {
        match self.blowup_time(t) {
            Some(blowup_time) => NegativeSolution::Diverged { blowup_time },
            None => NegativeSolution::Finite {
                x: self.eval_unchecked(t),
            },
        }
    }
}

/// Exact solution of the negative-feedback modulation model.
pub fn exact_negative(spec: &ModelSpec, x0: f64, t: f64) -> Result<NegativeSolution> {
    Ok(NegativeClosedForm::new(spec, x0)?.eval(t))
}

/// Largest value reached by the correlated, unforced, `B = 0` solution;
/// attained where `cos(omega t) = -1`.
pub fn max_x_closed_form(spec: &ModelSpec, x0: f64) -> Result<f64> {
    require_closed_form(spec, Variant::Correlated)?;
    if spec.b != 0.0 {
        return Err(Error::NoClosedForm(
            "period maximum requires B = 0".into(),
        ));
    }
    if !(x0 > 0.0 && x0 < spec.k) {
        return Err(Error::invalid(
            "x0",
            format!("must lie in (0, K) = (0, {}), got {x0}", spec.k),
        ));
    }
    let inv_e = (-2.0 * spec.n0 / spec.omega).exp();
    Ok(spec.k * x0 / (x0 + (spec.k - x0) * inv_e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn base_spec(omega: f64) -> ModelSpec {
        ModelSpec::correlated(0.0, 5.0, omega, 10.0)
    }

    #[test]
    fn growth_rate_examples() {
        let s = base_spec(1.0);
        assert_eq!(growth_rate(&s, 0.0), 0.0);
        assert!((growth_rate(&s, PI / 2.0) - 5.0).abs() < 1e-15);
        let s = ModelSpec::correlated(2.0, 5.0, 2.0, 10.0);
        assert!((growth_rate(&s, PI / 4.0) - 7.0).abs() < 1e-14);
    }

    #[test]
    fn drift_examples() {
        let s = base_spec(1.0);
        assert_eq!(drift(&s, 3.7, 0.0), 0.0);
        for t in [0.0, 0.3, 1.7, 12.0] {
            assert_eq!(drift(&s, 10.0, t), 0.0);
            assert_eq!(drift(&s, 0.0, t), 0.0);
        }
        let s = ModelSpec::negative_only(1.0, 0.0, 1.0, 10.0, 1.0);
        for t in [0.0, 2.0, 5.5] {
            assert_eq!(drift(&s, 10.0, t), 0.0);
        }
    }

    #[test]
    fn forcing_enters_every_variant() {
        for base in [
            base_spec(1.0),
            ModelSpec::positive_only(0.0, 5.0, 1.0, 10.0, 1.0),
            ModelSpec::negative_only(1.0, 1.0, 1.0, 10.0, 1.0),
        ] {
            let forced = base.with_forcing(2.0, 3.0);
            let t = 0.4;
            let diff = drift(&forced, 1.3, t) - drift(&base, 1.3, t);
            assert!((diff - 2.0 * (3.0 * t).sin()).abs() < 1e-14);
        }
    }

    #[test]
    fn drift_time_derivative_examples() {
        let s = base_spec(1.0);
        for t in [0.0, 0.9, 3.3] {
            assert_eq!(drift_time_derivative(&s, 10.0, t), 0.0);
        }
        assert!((drift_time_derivative(&s, 5.0, 0.0) - 12.5).abs() < 1e-12);
    }

    #[test]
    fn exact_correlated_examples() {
        let s = base_spec(1.0);
        assert_eq!(exact_correlated(&s, 0.1, 0.0).unwrap(), 0.1);
        // phi(pi) = 10: 10 * 0.1 e^10 / (9.9 + 0.1 e^10)
        let e10 = 10f64.exp();
        let expected = 10.0 * 0.1 * e10 / (9.9 + 0.1 * e10);
        let got = exact_correlated(&s, 0.1, PI).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 9.9553).abs() < 1e-4);
        for omega in [0.3, 1.0, 7.0] {
            let s = base_spec(omega);
            let x = exact_correlated(&s, 0.1, 2.0 * PI / omega).unwrap();
            assert!((x - 0.1).abs() < 1e-14, "omega={omega} x={x}");
        }
    }

    #[test]
    fn exact_correlated_matches_textbook_form() {
        let s = ModelSpec::correlated(0.3, 2.0, 1.5, 10.0);
        let x0 = 2.5;
        for t in [0.0, 0.5, 1.0, 4.0] {
            let phi: f64 = s.b * t + s.n0 / s.omega * (1.0 - (s.omega * t).cos());
            let textbook = -s.k * x0 * phi.exp() / ((x0 - s.k) - x0 * phi.exp());
            let got = exact_correlated(&s, x0, t).unwrap();
            assert!((got - textbook).abs() < 1e-12 * textbook.abs().max(1.0));
        }
    }

    #[test]
    fn exact_correlated_rejects_forcing_and_other_variants() {
        let s = base_spec(1.0).with_forcing(1.0, 1.0);
        assert!(matches!(
            exact_correlated(&s, 0.1, 1.0),
            Err(Error::NoClosedForm(_))
        ));
        let s = ModelSpec::positive_only(0.0, 5.0, 1.0, 10.0, 1.0);
        assert!(exact_correlated(&s, 0.1, 1.0).is_err());
        assert!(exact_correlated(&base_spec(1.0), 0.0, 1.0).is_err());
    }

    #[test]
    fn exact_negative_examples() {
        let s = ModelSpec::negative_only(1.0, 1.0, 10.0, 10.0, 1.0);
        let x = exact_negative(&s, 0.1, 0.0).unwrap().value().unwrap();
        assert!((x - 0.1).abs() < 1e-15);

        let s = ModelSpec::negative_only(1.0, 0.0, 1.0, 10.0, 1.0);
        let x = exact_negative(&s, 0.1, 60.0).unwrap().value().unwrap();
        assert!((x - 10.0).abs() < 1e-9);
    }

    #[test]
    fn exact_negative_reports_blowup() {
        let s = ModelSpec::negative_only(1.0, 10.0, 0.1, 10.0, 1.0);
        match exact_negative(&s, 0.1, 100.0).unwrap() {
            NegativeSolution::Diverged { blowup_time } => {
                assert!(blowup_time > 0.0 && blowup_time < 100.0);
                let cf = NegativeClosedForm::new(&s, 0.1).unwrap();
                assert!(cf.scaled_denominator(blowup_time).abs() < 1e-9);
                let before = cf.eval_unchecked(blowup_time * (1.0 - 1e-6));
                assert!(before > 1e3, "x just before blow-up = {before}");
            }
            other => panic!("expected divergence, got {other:?}"),
        }
        assert!(matches!(
            exact_negative(&s, 0.1, 1.0).unwrap(),
            NegativeSolution::Finite { .. }
        ));
    }

    #[test]
    fn exact_negative_rejects_bad_inputs() {
        let s = ModelSpec::negative_only(1.0, 1.0, 1.0, 10.0, 1.0);
        assert!(exact_negative(&s, 0.0, 1.0).is_err());
        assert!(exact_negative(&s.with_forcing(1.0, 1.0), 0.1, 1.0).is_err());
        assert!(exact_negative(&base_spec(1.0), 0.1, 1.0).is_err());
    }

    #[test]
    fn max_x_examples() {
        let m = max_x_closed_form(&base_spec(10.0), 0.1).unwrap();
        let e = 1f64.exp();
        assert!((m - 10.0 * 0.1 * e / (9.9 + 0.1 * e)).abs() < 1e-14);
        assert!((m - 0.2672).abs() < 1e-4);
        let m = max_x_closed_form(&base_spec(1.0), 0.1).unwrap();
        assert!((m - 9.9553).abs() < 1e-4);
        let m = max_x_closed_form(&base_spec(1.0), 10.0);
        assert!(m.is_err());
        let m = max_x_closed_form(&base_spec(1.0), 9.999999).unwrap();
        assert!((m - 10.0).abs() < 1e-6);
    }

    #[test]
    fn max_x_matches_dense_sampling() {
        for omega in [0.5, 1.0, 2.0, 10.0] {
            let s = base_spec(omega);
            let period = 2.0 * PI / omega;
            let sampled = (0..=100_000)
                .map(|i| exact_correlated(&s, 0.1, period * i as f64 / 100_000.0).unwrap())
                .fold(f64::MIN, f64::max);
            let closed = max_x_closed_form(&s, 0.1).unwrap();
            assert!((sampled - closed).abs() <= 1e-9 * closed, "omega={omega}");
        }
    }

    #[test]
    fn validation_names_fields() {
        let mut s = base_spec(1.0);
        s.omega = 0.0;
        assert!(s.validate().unwrap_err().to_string().contains("omega"));
        let mut s = base_spec(1.0);
        s.k = -1.0;
        assert!(s.validate().unwrap_err().to_string().contains('K'));
        let s = base_spec(1.0).with_forcing(1.0, 0.0);
        assert!(s.validate().unwrap_err().to_string().contains("omega1"));
        assert!(base_spec(1.0).with_forcing(0.0, 0.0).validate().is_ok());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("correlated".parse::<Variant>().unwrap(), Variant::Correlated);
        assert_eq!("positive-only".parse::<Variant>().unwrap(), Variant::PositiveOnly);
        assert_eq!("NEGATIVE_ONLY".parse::<Variant>().unwrap(), Variant::NegativeOnly);
        assert!("sideways".parse::<Variant>().is_err());
    }
}
