use omm_core::config::RunConfig;
use omm_core::draws::ForecastDraws;
use omm_core::markov::{FittedModelSet, MarkovState};
use omm_core::metrics::ScoreMeans;
use omm_core::panel::{read_panel, synth_panel, write_panel_to, SplitSpec, SynthConfig};
use omm_core::pipeline::{backtest, forecast, train, OMM_MODEL_NAME};
use omm_core::ErrorKind;

fn config() -> RunConfig {
    let mut cfg = RunConfig {
        seed: 17,
        ..RunConfig::default()
    };
    cfg.classifier.n_trees = 25;
    cfg.regressor.n_trees = 25;
    cfg.simulation.n_draws = 100;
    cfg.split = Some(SplitSpec {
        train_end_month: 60,
        forecast_start_month: 61,
        horizon: 6,
    });
    cfg
}

fn synth() -> SynthConfig {
    SynthConfig {
        n_units: 8,
        n_months: 72,
        ..SynthConfig::default()
    }
}

#[test]
fn panel_csv_round_trip() {
    let panel = synth_panel(&SynthConfig { missing_rate: 0.1, ..synth() }, 1).unwrap();
    let mut buf = Vec::new();
    write_panel_to(&panel, &mut buf).unwrap();
    let back = read_panel(buf.as_slice(), Some(panel.schema())).unwrap();
    assert_eq!(back, panel);
}

#[test]
fn archive_round_trip_predicts_identically() {
    let panel = synth_panel(&synth(), 2).unwrap();
    let cfg = config();
    let models = train(&panel, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    models.save(&path).unwrap();
    let loaded = FittedModelSet::load(&path).unwrap();
    assert_eq!(loaded, models);
    let x = vec![0.3; models.features.n_features()];
    for s in MarkovState::ALL {
        assert_eq!(
            loaded.transitions.transition_prob(s, &x).unwrap(),
            models.transitions.transition_prob(s, &x).unwrap()
        );
    }
    assert_eq!(forecast(&loaded, &panel, &cfg).unwrap(), forecast(&models, &panel, &cfg).unwrap());
}

#[test]
fn archive_with_other_version_is_rejected() {
    let panel = synth_panel(&synth(), 2).unwrap();
    let mut models = train(&panel, &config()).unwrap();
    models.format_version += 1;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    models.save(&path).unwrap();
    assert!(FittedModelSet::load(&path).unwrap_err().to_string().contains("version"));
}

#[test]
fn draws_csv_round_trip() {
    let panel = synth_panel(&synth(), 3).unwrap();
    let cfg = config();
    let fd = forecast(&train(&panel, &cfg).unwrap(), &panel, &cfg).unwrap();
    assert_eq!(fd.cells.len(), 8 * 6);
    let text = fd.to_csv_string();
    assert_eq!(text.lines().count(), 1 + 8 * 6 * 100);
    assert_eq!(ForecastDraws::read_from(text.as_bytes()).unwrap(), fd);
}

#[test]
fn all_zero_training_panel_is_unfittable() {
    let panel = synth_panel(
        &SynthConfig {
            rates: omm_core::panel::TransitionRates {
                peaceful_escalation: 0.0,
                ..synth().rates
            },
            burn_in: 0,
            ..synth()
        },
        4,
    )
    .unwrap();
    assert!(panel.units().values().all(|u| u.fatalities.iter().all(|&f| f == 0)));
    let err = train(&panel, &config()).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Model);
}

#[test]
fn backtest_pools_by_cell_count() {
    let panel = synth_panel(&synth(), 5).unwrap();
    let mut cfg = config();
    cfg.backtest.origins = vec![54, 60];
    let bt = backtest(&panel, &cfg).unwrap();
    assert_eq!(bt.origins.len(), 2);
    for row in &bt.pooled {
        let parts: Vec<ScoreMeans> = bt
            .origins
            .iter()
            .map(|o| o.reports.iter().find(|r| r.model == row.model).unwrap().overall)
            .collect();
        let n: usize = parts.iter().map(|p| p.n_cells).sum();
        let crps = parts.iter().map(|p| p.crps * p.n_cells as f64).sum::<f64>() / n as f64;
        assert_eq!(row.scores.n_cells, n);
        assert!((row.scores.crps - crps).abs() < 1e-12);
    }
    assert!(bt.pooled_for(OMM_MODEL_NAME).is_some());
    assert_eq!(bt.to_csv().lines().count(), 1 + 2 * 5 + 5);
}

#[test]
fn backtest_ignores_rows_after_each_window() {
    let panel = synth_panel(&synth(), 6).unwrap();
    let mut cfg = config();
    cfg.backtest.origins = vec![54, 60];
    let full = backtest(&panel, &cfg).unwrap();
    let cut = backtest(&panel.through(66), &cfg).unwrap();
    assert_eq!(full.to_csv(), cut.to_csv());
}

#[test]
fn backtest_needs_actuals_for_every_window() {
    let panel = synth_panel(&synth(), 6).unwrap();
    let mut cfg = config();
    cfg.backtest.origins = vec![60, 70];
    assert!(backtest(&panel, &cfg).is_err());
}
