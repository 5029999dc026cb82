//! End-to-end workflows shared by the command-line tool and the tests:
//! train, forecast, score, and rolling-origin backtests.

use std::path::Path;

use crate::benchmarks::{run_benchmark, BenchmarkKind, BenchmarkSpec};
use crate::config::RunConfig;
use crate::draws::ForecastDraws;
use crate::error::{Error, Result};
use crate::features::{schema_from_groups, FeatureGroupSpec};
use crate::markov::FittedModelSet;
use crate::metrics::{evaluate, rank_by_crps, MetricReport, ReportRow, ScoreMeans};
use crate::panel::{load_panel, PanelDataset, SplitSpec};
use crate::rng;
use crate::simulate::{simulate_paths, ForecastWindow, SimulationConfig};

pub const OMM_MODEL_NAME: &str = "omm";

/// Loads the panel named in the config (or `path`), matched against the
/// configured feature groups when there are any.
pub fn load_configured_panel(cfg: &RunConfig, path: &Path) -> Result<PanelDataset> {
    if cfg.features.groups.is_empty() {
        load_panel(path, None)
    } else {
        load_panel(path, Some(&schema_from_groups(&cfg.features.groups)))
    }
}

/// Feature groups from the config, or the panel's own group tags.
pub fn feature_groups(cfg: &RunConfig, panel: &PanelDataset) -> Vec<FeatureGroupSpec> {
    if cfg.features.groups.is_empty() {
        FeatureGroupSpec::from_schema(panel.schema())
    } else {
        cfg.features.groups.clone()
    }
}

/// Fits a model set on all rows through `cutoff`.
pub fn train_through(panel: &PanelDataset, cfg: &RunConfig, cutoff: i64, seed: u64) -> Result<FittedModelSet> {
    let train = panel.through(cutoff);
    if train.is_empty() {
        return Err(Error::Split(format!("no rows at or before month {cutoff}")));
    }
    let settings = cfg.train_settings(feature_groups(cfg, panel), seed);
    FittedModelSet::fit(&train, &settings, &cfg.hash())
}

/// Fits on the configured training window.
pub fn train(panel: &PanelDataset, cfg: &RunConfig) -> Result<FittedModelSet> {
    let split = cfg.split()?;
    train_through(panel, cfg, split.train_end_month, cfg.seed)
}

pub fn window_of(split: &SplitSpec) -> ForecastWindow {
    ForecastWindow {
        start_month: split.forecast_start_month,
        horizon: split.horizon,
    }
}

/// Simulates the configured forecast window from history through the training cutoff.
pub fn forecast(models: &FittedModelSet, panel: &PanelDataset, cfg: &RunConfig) -> Result<ForecastDraws> {
    let split = cfg.split()?;
    split.validate()?;
    let history = panel.through(split.train_end_month);
    let sim = SimulationConfig {
        n_draws: cfg.simulation.n_draws,
        seed: cfg.seed,
    };
    simulate_paths(models, &history, &window_of(&split), &sim)
}

/// Scores several named draw sets on the same actuals, ranked by CRPS.
pub fn compare(
    forecasts: &[(String, ForecastDraws)],
    actuals: &PanelDataset,
    cfg: &RunConfig,
) -> Result<Vec<MetricReport>> {
    let reports = forecasts
        .iter()
        .map(|(name, fd)| {
            evaluate(name, fd, actuals, &cfg.metrics.binning, cfg.metrics.alpha)
        })
        .collect::<Result<Vec<_>>>()?;
    // every model must cover the same cells
    if let Some(first) = reports.first() {
        for r in &reports[1..] {
            if r.overall.n_cells != first.overall.n_cells {
                return Err(Error::Data(format!(
                    "`{}` scores {} cells but `{}` scores {}",
                    r.model, r.overall.n_cells, first.model, first.overall.n_cells
                )));
            }
        }
    }
    let means: Vec<ScoreMeans> = reports.iter().map(|r| r.overall).collect();
    let order = rank_by_crps(&means);
    let mut slots: Vec<Option<MetricReport>> = reports.into_iter().map(Some).collect();
    Ok(order.into_iter().map(|i| slots[i].take().expect("each index once")).collect())
}

pub fn report_rows(reports: &[MetricReport]) -> Vec<ReportRow> {
    reports
        .iter()
        .map(|r| ReportRow {
            model: r.model.clone(),
            scores: r.overall,
        })
        .collect()
}

/// Results for one rolling origin.
#[derive(Debug, Clone)]
pub struct OriginResult {
    pub cutoff: i64,
    pub window: ForecastWindow,
    /// Ranked by CRPS.
    pub reports: Vec<MetricReport>,
    pub omm_draws: ForecastDraws,
    pub models: FittedModelSet,
}

#[derive(Debug, Clone)]
pub struct BacktestReport {
    pub origins: Vec<OriginResult>,
    /// Cell-weighted pool across origins, ranked by CRPS.
    pub pooled: Vec<ReportRow>,
}

impl BacktestReport {
    /// `origin,model,n_cells,crps,ign,mis,coverage`; pooled rows use origin `pooled`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("origin,model,n_cells,crps,ign,mis,coverage\n");
        let mut push = |origin: String, model: &str, m: &ScoreMeans| {
            s.push_str(&format!(
                "{origin},{model},{},{},{},{},{}\n",
                m.n_cells, m.crps, m.ign, m.mis, m.coverage
            ));
        };
        for o in &self.origins {
            for r in &o.reports {
                push(o.cutoff.to_string(), &r.model, &r.overall);
            }
        }
        for r in &self.pooled {
            push("pooled".into(), &r.model, &r.scores);
        }
        s
    }

    pub fn pooled_for(&self, model: &str) -> Option<&ScoreMeans> {
        self.pooled.iter().find(|r| r.model == model).map(|r| &r.scores)
    }
}

/// Seed used for the model and simulation at one origin.
pub fn origin_seed(master: u64, cutoff: i64) -> u64 {
    rng::derive_seed(master, &[cutoff as u64])
}

/// Trains, forecasts and scores the OMM together with the four benchmarks at
/// one cutoff. Reads nothing after `cutoff` except the evaluation actuals.
pub fn run_origin(panel: &PanelDataset, cfg: &RunConfig, cutoff: i64, horizon: usize) -> Result<OriginResult> {
    let window = ForecastWindow {
        start_month: cutoff + 1,
        horizon,
    };
    let (_, last) = panel
        .month_range()
        .ok_or_else(|| Error::Split("panel is empty".into()))?;
    if window.end_month() > last {
        return Err(Error::Split(format!(
            "origin {cutoff} needs actuals through month {}, panel ends at {last}",
            window.end_month()
        )));
    }
    let seed = origin_seed(cfg.seed, cutoff);
    let models = train_through(panel, cfg, cutoff, seed)?;
    let history = panel.through(cutoff);
    let sim = SimulationConfig {
        n_draws: cfg.simulation.n_draws,
        seed,
    };
    let omm_draws = simulate_paths(&models, &history, &window, &sim)?;
    let mut forecasts = vec![(OMM_MODEL_NAME.to_string(), omm_draws.clone())];
    for kind in BenchmarkKind::ALL {
        let spec = BenchmarkSpec {
            kind,
            n_draws: cfg.simulation.n_draws,
            seed,
        };
        forecasts.push((kind.name().to_string(), run_benchmark(&spec, &history, &window)?));
    }
    let actuals = panel.filter_months(|m| m >= window.start_month && m <= window.end_month());
    let reports = compare(&forecasts, &actuals, cfg)?;
    Ok(OriginResult {
        cutoff,
        window,
        reports,
        omm_draws,
        models,
    })
}

/// Rolling-origin evaluation over `cfg.backtest.origins`.
pub fn backtest(panel: &PanelDataset, cfg: &RunConfig) -> Result<BacktestReport> {
    let origins = &cfg.backtest.origins;
    if origins.len() < 2 {
        return Err(Error::Config("backtest needs at least two origins".into()));
    }
    let horizon = cfg.split.map_or(12, |s| s.horizon);
    let results = origins
        .iter()
        .map(|&c| run_origin(panel, cfg, c, horizon))
        .collect::<Result<Vec<_>>>()?;
    let mut names: Vec<String> = vec![OMM_MODEL_NAME.to_string()];
    names.extend(BenchmarkKind::ALL.iter().map(|k| k.name().to_string()));
    let pooled_means: Vec<ScoreMeans> = names
        .iter()
        .map(|n| {
            let parts: Vec<ScoreMeans> = results
                .iter()
                .filter_map(|o| o.reports.iter().find(|r| &r.model == n).map(|r| r.overall))
                .collect();
            ScoreMeans::pooled(&parts)
        })
        .collect();
    let pooled = rank_by_crps(&pooled_means)
        .into_iter()
        .map(|i| ReportRow {
            model: names[i].clone(),
            scores: pooled_means[i],
        })
        .collect();
    Ok(BacktestReport {
        origins: results,
        pooled,
    })
}
