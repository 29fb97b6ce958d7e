use logistic_fisher::experiments::{run_figure, FigureId, Label, ResilienceReport};

#[test]
fn fig13_marks_the_fast_growing_case_diverged() {
    let set = run_figure(FigureId::Fig13, &FigureId::Fig13.defaults()).unwrap();
    let results = set.results.as_array().unwrap();
    assert_eq!(results.len(), 4);
    for r in results {
        let n0 = r["params"]["N0"].as_f64().unwrap();
        let omega = r["params"]["omega"].as_f64().unwrap();
        let diverged = !r["diverged_at"].is_null();
        assert_eq!(diverged, n0 == 10.0 && omega == 0.1, "{r}");
    }
    // Diverged traces are still written, truncated at the divergence time.
    assert_eq!(set.files.len(), 4);
}

#[test]
fn table2_json_structure() {
    let mut settings = FigureId::Table2.defaults();
    settings.horizon = 50.0;
    let set = run_figure(FigureId::Table2, &settings).unwrap();
    let file = set.file("table2.json").unwrap();
    let reports: Vec<ResilienceReport> = serde_json::from_slice(&file.bytes).unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0].label, Some(Label::Optimal));
    assert_eq!(reports[1].label, Some(Label::NonOptimal));
    for r in &reports {
        assert_eq!(r.entries.len(), 4);
        assert!(r.baseline_mean > 0.0);
        for e in &r.entries {
            assert_eq!(e.perturbed_mean.is_some(), e.diverged_at.is_none());
            assert_eq!(e.percent_change.is_some(), e.perturbed_mean.is_some());
        }
    }
    let raw: serde_json::Value = serde_json::from_slice(&file.bytes).unwrap();
    assert_eq!(raw[0]["label"], "optimal");
    assert!(raw[0]["entries"][1]["diverged_at"].is_number());
    assert!(raw[0]["entries"][1]["percent_change"].is_null());
}

#[test]
fn fig10_skips_density_for_diverged_runs() {
    let mut settings = FigureId::Fig10.defaults();
    settings.horizon = 50.0;
    let set = run_figure(FigureId::Fig10, &settings).unwrap();
    let results = set.results.as_array().unwrap();
    assert_eq!(results.len(), 10);
    let diverged = results.iter().filter(|r| !r["diverged_at"].is_null()).count();
    assert_eq!(diverged, 2);
    assert_eq!(set.files.len(), 8);
}

#[test]
fn fig2_writes_sweep_per_initial_condition() {
    let set = run_figure(FigureId::Fig2, &FigureId::Fig2.defaults()).unwrap();
    assert_eq!(set.files.len(), 2);
    let text = String::from_utf8(set.files[0].bytes.clone()).unwrap();
    assert!(text.starts_with("omega,max_x,sampled_max\n"));
    assert_eq!(text.lines().count(), 42);
}

#[test]
fn bounded_presets_fail_on_divergence() {
    let mut settings = FigureId::Fig12.defaults();
    settings.n0 = vec![10.0];
    settings.omega = vec![0.1];
    let err = run_figure(FigureId::Fig12, &settings).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn manifest_lists_every_file_with_checksum() {
    let mut settings = FigureId::Fig3.defaults();
    settings.horizon = 20.0;
    let set = run_figure(FigureId::Fig3, &settings).unwrap();
    let m = set.manifest();
    let files = m["files"].as_array().unwrap();
    assert_eq!(files.len(), 6);
    for (f, a) in files.iter().zip(&set.files) {
        assert_eq!(f["name"], a.name.as_str());
        assert_eq!(f["sha256"].as_str().unwrap().len(), 64);
    }
    assert_eq!(m["settings"]["omega"], "0.1, 0.5, 1, 2, 5, 10");
    assert_eq!(m["results"][0]["mode_count"], 2);
}
