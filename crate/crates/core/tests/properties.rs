use std::f64::consts::PI;

use proptest::prelude::*;

use logistic_fisher::cli::{parse_config, serialize, ScenarioConfig};
use logistic_fisher::density;
use logistic_fisher::experiments::{self, FigureId, Forcing, Settings};
use logistic_fisher::integrate::{self, IntegrationOptions};
use logistic_fisher::model::{self, ModelSpec, Variant};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn unforced_correlated_orbit_stays_in_open_interval(
        n0 in 0.1f64..5.0,
        omega in 0.5f64..10.0,
        x0 in 0.05f64..9.95,
    ) {
        let s = ModelSpec::correlated(0.0, n0, omega, 10.0);
        let tr = integrate::integrate_with(&s, x0, 30.0, &IntegrationOptions::rk4(1e-3)).unwrap();
        prop_assert!(!tr.is_diverged());
        prop_assert!(!tr.crossed_zero);
        for &x in &tr.x {
            prop_assert!(x > 0.0 && x <= 10.0, "x = {}", x);
        }
    }

    #[test]
    fn closed_form_is_periodic_without_net_growth(
        n0 in 0.1f64..5.0,
        omega in 0.2f64..10.0,
        x0 in 0.05f64..9.95,
        t in 0.0f64..20.0,
        n in 1u32..5,
    ) {
        let s = ModelSpec::correlated(0.0, n0, omega, 10.0);
        let a = model::exact_correlated(&s, x0, t).unwrap();
        let b = model::exact_correlated(&s, x0, t + 2.0 * PI * n as f64 / omega).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{} vs {}", a, b);
    }

    #[test]
    fn period_maximum_does_not_increase_with_omega(
        n0 in 0.1f64..5.0,
        w1 in 0.1f64..20.0,
        ratio in 1.0f64..10.0,
        x0 in 0.05f64..9.95,
    ) {
        let s = ModelSpec::correlated(0.0, n0, w1, 10.0);
        let a = model::max_x_closed_form(&s, x0).unwrap();
        let b = model::max_x_closed_form(&s.with_omega(w1 * ratio), x0).unwrap();
        prop_assert!(b <= a);
        prop_assert!(b >= x0 && a <= 10.0);
    }

    #[test]
    fn negative_only_matches_rk4_while_bounded(
        n0 in 0.1f64..1.0,
        omega in 0.5f64..10.0,
        x0 in 0.05f64..5.0,
    ) {
        let s = ModelSpec::negative_only(1.0, n0, omega, 10.0, 1.0);
        let tr = integrate::integrate(&s, x0, 10.0, 1e-3).unwrap();
        let last = *tr.x.last().unwrap();
        let exact = model::exact_negative(&s, x0, tr.duration()).unwrap().value().unwrap();
        prop_assert!((last - exact).abs() <= 1e-8 * exact.abs().max(1.0));
    }

    #[test]
    fn density_has_unit_mass(
        n0 in 0.5f64..5.0,
        omega in 0.5f64..10.0,
        x0 in 0.1f64..9.0,
        bins in 2usize..200,
    ) {
        let s = ModelSpec::correlated(0.0, n0, omega, 10.0);
        let tr = integrate::integrate(&s, x0, 20.0, 1e-3).unwrap();
        let d = density::estimate_density(&tr, bins).unwrap();
        prop_assert!((d.total_mass() - 1.0).abs() < 1e-9);
        prop_assert!(d.p.iter().all(|p| *p >= 0.0));
        prop_assert_eq!(d.bins(), bins);
    }

    #[test]
    fn percent_change_is_scale_free(base in 0.01f64..100.0, pert in 0.0f64..100.0, k in 0.1f64..10.0) {
        let a = experiments::percent_change(base, pert).unwrap();
        let b = experiments::percent_change(base * k, pert * k).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn config_round_trips(
        preset in proptest::option::of(0usize..FigureId::ALL.len()),
        variant in 0usize..3,
        n0 in proptest::collection::vec(0.1f64..10.0, 1..4),
        omega in proptest::collection::vec(0.01f64..50.0, 1..7),
        x0 in proptest::collection::vec(0.01f64..9.0, 1..3),
        k in 1.0f64..100.0,
        b in 0.0f64..2.0,
        horizon in 1.0f64..2000.0,
        dt in proptest::option::of(1e-5f64..1e-2),
        bins in 2usize..500,
        forcing in proptest::collection::vec((0.0f64..20.0, 0.1f64..5.0), 0..4),
        svg in any::<bool>(),
    ) {
        let variant = [Variant::Correlated, Variant::PositiveOnly, Variant::NegativeOnly][variant];
        let mut cfg = ScenarioConfig {
            preset: preset.map(|i| FigureId::ALL[i]),
            out: Some("results/run".into()),
            svg,
            ..ScenarioConfig::default()
        };
        cfg.settings = cfg.base();
        let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let mut pairs = vec![
            ("variant".to_string(), variant.to_string()),
            ("N0".into(), join(&n0)),
            ("omega".into(), join(&omega)),
            ("x0".into(), join(&x0)),
            ("K".into(), k.to_string()),
            ("B".into(), b.to_string()),
            ("T".into(), horizon.to_string()),
            ("bins".into(), bins.to_string()),
        ];
        if let Some(dt) = dt.filter(|d| *d <= horizon) {
            pairs.push(("dt".into(), dt.to_string()));
        }
        for (i, (b1, w1)) in forcing.iter().enumerate() {
            pairs.push((format!("forcing.{i}.B1"), b1.to_string()));
            pairs.push((format!("forcing.{i}.omega1"), w1.to_string()));
        }
        for (k, v) in &pairs {
            cfg.add_override(k, v).unwrap();
        }
        cfg.settings.validate().unwrap();

        let text = serialize(&cfg);
        let parsed = parse_config(&text).unwrap();
        prop_assert_eq!(&parsed, &cfg);
        prop_assert_eq!(serialize(&parsed), text);
        let expected: Vec<Forcing> = if forcing.is_empty() {
            cfg.base().forcing
        } else {
            forcing.iter().map(|&(b1, w1)| Forcing::new(b1, w1)).collect()
        };
        prop_assert_eq!(&parsed.settings.forcing, &expected);
    }

    #[test]
    fn resolved_settings_round_trip(omega in proptest::collection::vec(0.01f64..50.0, 1..7), bins in 2usize..500) {
        let mut s = Settings { omega, bins, ..Settings::default() };
        s.dt = Some(1e-3);
        let mut back = Settings::default();
        for (k, v) in s.to_pairs() {
            back.apply(&k, &v).unwrap();
        }
        prop_assert_eq!(back, s);
    }
}
