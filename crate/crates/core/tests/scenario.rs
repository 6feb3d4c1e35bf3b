use fedmd_core::dataio::{generate_synthetic, save_csv, AttackKind, SyntheticConfig};
use fedmd_core::neural::ModelKind;
use fedmd_core::scenario::{cmd_run, prepare, train_and_detect, DataSource, ScenarioConfig};

fn small(seed: u64) -> ScenarioConfig {
    let mut data = SyntheticConfig::new(3, 80, 0.2, 4, 0);
    data.attack_kinds = vec![AttackKind::ConstantOffset, AttackKind::RandomOffset];
    let mut cfg = ScenarioConfig {
        data: DataSource::Synthetic(data),
        gmm_grid: vec![2, 3, 4],
        seed,
        deterministic: true,
        ..ScenarioConfig::default()
    };
    cfg.federation.rounds = 4;
    cfg
}

#[test]
fn single_precision_pipeline_runs() {
    let prep = prepare::<f32>(&small(1)).unwrap();
    let out = train_and_detect(&prep, ModelKind::Vae, &prep.config.federation).unwrap();
    assert_eq!(out.evaluations.len(), 3);
    for e in &out.evaluations {
        assert!(e.total.accuracy.is_finite() && e.threshold.th.is_finite());
    }
    let double = prepare::<f64>(&small(1)).unwrap();
    for (a, b) in prep.clients.iter().zip(&double.clients) {
        assert_eq!(a.id(), b.id());
        assert_eq!(a.dataset.benign_test, b.dataset.benign_test);
    }
}

#[test]
fn csv_directory_matches_the_synthetic_source() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(2).resolved();
    let DataSource::Synthetic(synth) = &cfg.data else { unreachable!() };
    for ds in generate_synthetic::<f64>(synth).unwrap() {
        save_csv(&ds, dir.path().join(format!("{}.csv", ds.client_id))).unwrap();
    }
    let from_synth = cmd_run(&small(2)).unwrap();
    let csv_cfg = ScenarioConfig {
        data: DataSource::Csv {
            dir: dir.path().to_path_buf(),
            label_column: "label".into(),
        },
        ..small(2)
    };
    let from_csv = cmd_run(&csv_cfg).unwrap();
    assert_eq!(
        serde_json::to_string(&from_synth.without_timings().groups).unwrap(),
        serde_json::to_string(&from_csv.without_timings().groups).unwrap()
    );
}

#[test]
fn report_echoes_the_resolved_config() {
    let cfg = small(5);
    let report = cmd_run(&cfg).unwrap();
    assert_eq!(report.config, cfg.clone().resolved());
    let timed: Vec<_> = report.timings.stages.iter().map(|s| s.stage.as_str()).collect();
    assert_eq!(
        timed,
        ["balance", "normalize", "split", "gmm", "histograms", "rbm", "federation", "threshold", "detect"]
    );
}

#[test]
fn missing_csv_directory_is_an_error() {
    let cfg = ScenarioConfig {
        data: DataSource::Csv {
            dir: "/nonexistent/fedmd".into(),
            label_column: "label".into(),
        },
        ..ScenarioConfig::default()
    };
    assert!(cmd_run(&cfg).is_err());
}
