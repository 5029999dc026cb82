//! The observed Markov layer: four fatality-defined states, their legal
//! transitions, and the per-state transition classifiers and outcome forests.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureGroupSpec, FeatureMatrix, FeaturePipeline};
use crate::forest::{fit_classifier, fit_qrf, ForestHyperparams, Matrix, ProbClassifier, QuantileForest};
use crate::panel::PanelDataset;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MarkovState {
    /// No fatalities in the previous or current month.
    Peaceful,
    /// None in the previous month, some in the current month.
    Escalation,
    /// Fatalities in both months.
    War,
    /// Some in the previous month, none in the current month.
    DeEscalation,
}

impl MarkovState {
    pub const ALL: [MarkovState; 4] = [
        MarkovState::Peaceful,
        MarkovState::Escalation,
        MarkovState::War,
        MarkovState::DeEscalation,
    ];

    pub fn from_pair(prev: u64, cur: u64) -> Self {
        match (prev > 0, cur > 0) {
            (false, false) => MarkovState::Peaceful,
            (false, true) => MarkovState::Escalation,
            (true, true) => MarkovState::War,
            (true, false) => MarkovState::DeEscalation,
        }
    }

    /// Whether the current month has fatalities in this state.
    pub fn is_nonzero(self) -> bool {
        matches!(self, MarkovState::Escalation | MarkovState::War)
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// The two reachable next states; the zero-fatality successor comes first.
    pub fn successors(self) -> [MarkovState; 2] {
        use MarkovState::*;
        match self {
            Peaceful | DeEscalation => [Peaceful, Escalation],
            Escalation | War => [DeEscalation, War],
        }
    }

    pub fn can_reach(self, next: MarkovState) -> bool {
        self.successors().contains(&next)
    }
}

impl fmt::Display for MarkovState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            MarkovState::Peaceful => "peaceful",
            MarkovState::Escalation => "escalation",
            MarkovState::War => "war",
            MarkovState::DeEscalation => "deescalation",
        };
        f.write_str(s)
    }
}

pub fn allowed_successors(s: MarkovState) -> [MarkovState; 2] {
    s.successors()
}

/// States for months `1..n` of a fatality series; month 0 has no state.
pub fn encode_states(fatalities: &[u64]) -> Result<Vec<MarkovState>> {
    if fatalities.len() < 2 {
        return Err(Error::Data(format!(
            "state encoding needs at least 2 months, got {}",
            fatalities.len()
        )));
    }
    Ok(fatalities
        .windows(2)
        .map(|w| MarkovState::from_pair(w[0], w[1]))
        .collect())
}

/// One observed transition: origin month features, origin state, next month outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRow {
    pub unit_id: String,
    pub month_id: i64,
    pub origin: MarkovState,
    pub next: MarkovState,
    pub next_fatalities: u64,
    pub features: Vec<f64>,
}

/// All consecutive-month transitions in `panel` whose origin month has a state.
///
/// Origin month `t` needs observed months `t - 1`, `t` and `t + 1`.
pub fn transition_rows(panel: &PanelDataset, features: &FeatureMatrix) -> Result<Vec<TransitionRow>> {
    let mut out = Vec::new();
    for (unit, s) in panel.units() {
        for i in 1..s.len().saturating_sub(1) {
            let (m0, m1, m2) = (s.months[i - 1], s.months[i], s.months[i + 1]);
            if m1 != m0 + 1 || m2 != m1 + 1 {
                continue;
            }
            let row = features.find(unit, m1).ok_or_else(|| {
                Error::Data(format!("no feature row for unit `{unit}` month {m1}"))
            })?;
            let (f0, f1, f2) = (s.fatalities[i - 1], s.fatalities[i], s.fatalities[i + 1]);
            out.push(TransitionRow {
                unit_id: unit.clone(),
                month_id: m1,
                origin: MarkovState::from_pair(f0, f1),
                next: MarkovState::from_pair(f1, f2),
                next_fatalities: f2,
                features: features.row(row).to_vec(),
            });
        }
    }
    Ok(out)
}

/// Transition model for one origin state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OriginModel {
    Forest(ProbClassifier),
    /// Constant probability of the nonzero successor, `(k + 1) / (n + 2)`.
    Fallback {
        rate: f64,
        n: usize,
        k: usize,
        /// Origin never observed; `n`/`k` are pooled over all origins.
        unobserved: bool,
    },
}

impl OriginModel {
    fn nonzero_prob(&self, x: &[f64]) -> Result<f64> {
        match self {
            OriginModel::Forest(c) => Ok(c.predict_proba(x)?[1]),
            OriginModel::Fallback { rate, .. } => Ok(*rate),
        }
    }
}

/// One binary model per origin state, indexed by [`MarkovState::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionModelSet {
    pub n_features: usize,
    pub models: Vec<OriginModel>,
    pub training_rows: [usize; 4],
}

impl TransitionModelSet {
    pub fn model(&self, origin: MarkovState) -> &OriginModel {
        &self.models[origin.index()]
    }

    /// Probabilities aligned with `origin.successors()`.
    pub fn transition_prob(&self, origin: MarkovState, x: &[f64]) -> Result<[f64; 2]> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let p = self.model(origin).nonzero_prob(x)?;
        Ok([1.0 - p, p])
    }
}

pub fn transition_prob(models: &TransitionModelSet, s: MarkovState, x: &[f64]) -> Result<[f64; 2]> {
    models.transition_prob(s, x)
}

/// Fits one classifier per origin state on `rows`, labelling each row by
/// whether the next state is the nonzero successor. Single-class origins get
/// a Laplace-smoothed constant rate.
pub fn fit_transition_models(
    rows: &[TransitionRow],
    n_features: usize,
    hyper: &ForestHyperparams,
) -> Result<TransitionModelSet> {
    let total = rows.len();
    let total_k = rows.iter().filter(|r| r.next.is_nonzero()).count();
    let mut models = Vec::with_capacity(4);
    let mut training_rows = [0usize; 4];
    for origin in MarkovState::ALL {
        let subset: Vec<&TransitionRow> = rows.iter().filter(|r| r.origin == origin).collect();
        training_rows[origin.index()] = subset.len();
        let n = subset.len();
        let k = subset.iter().filter(|r| r.next.is_nonzero()).count();
        let model = if n == 0 {
            OriginModel::Fallback {
                rate: (total_k as f64 + 1.0) / (total as f64 + 2.0),
                n: total,
                k: total_k,
                unobserved: true,
            }
        } else if k == 0 || k == n {
            OriginModel::Fallback {
                rate: (k as f64 + 1.0) / (n as f64 + 2.0),
                n,
                k,
                unobserved: false,
            }
        } else {
            let mut x = Matrix::new(n_features);
            for r in &subset {
                if r.features.len() != n_features {
                    return Err(Error::DimensionMismatch {
                        expected: n_features,
                        got: r.features.len(),
                    });
                }
                x.push_row(&r.features);
            }
            let y: Vec<bool> = subset.iter().map(|r| r.next.is_nonzero()).collect();
            let h = hyper.with_seed(rng::derive_seed(hyper.seed, &[1, origin.index() as u64]));
            OriginModel::Forest(fit_classifier(&x, &y, &h)?)
        };
        models.push(model);
    }
    Ok(TransitionModelSet {
        n_features,
        models,
        training_rows,
    })
}

/// Fatality distribution model for one nonzero state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModel {
    pub forest: QuantileForest,
    /// Fit on Escalation and War rows together because this state had too few rows.
    pub pooled: bool,
    pub n_rows: usize,
}

/// Outcome forests for Escalation and War. Peaceful and DeEscalation are
/// always zero and have no model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeModelSet {
    pub escalation: OutcomeModel,
    pub war: OutcomeModel,
}

impl OutcomeModelSet {
    pub fn for_state(&self, s: MarkovState) -> Option<&OutcomeModel> {
        match s {
            MarkovState::Escalation => Some(&self.escalation),
            MarkovState::War => Some(&self.war),
            _ => None,
        }
    }
}

/// Fits the Escalation and War forests on rows whose next state is that
/// state, with the next month's fatalities as target.
pub fn fit_outcome_models(
    rows: &[TransitionRow],
    n_features: usize,
    hyper: &ForestHyperparams,
    log_target: bool,
) -> Result<OutcomeModelSet> {
    let nonzero: Vec<&TransitionRow> = rows.iter().filter(|r| r.next.is_nonzero()).collect();
    if nonzero.is_empty() {
        return Err(Error::Unfittable(
            "no Escalation or War months in the training window".into(),
        ));
    }
    let fit = |state: MarkovState| -> Result<OutcomeModel> {
        let own: Vec<&&TransitionRow> = nonzero.iter().filter(|r| r.next == state).collect();
        let pooled = own.len() < hyper.min_leaf_size;
        let chosen: Vec<&TransitionRow> = if pooled {
            nonzero.clone()
        } else {
            own.into_iter().copied().collect()
        };
        let mut x = Matrix::new(n_features);
        for r in &chosen {
            x.push_row(&r.features);
        }
        let y: Vec<f64> = chosen.iter().map(|r| r.next_fatalities as f64).collect();
        let h = hyper.with_seed(rng::derive_seed(hyper.seed, &[2, state.index() as u64]));
        Ok(OutcomeModel {
            forest: fit_qrf(&x, &y, &h, log_target)?,
            pooled,
            n_rows: chosen.len(),
        })
    };
    Ok(OutcomeModelSet {
        escalation: fit(MarkovState::Escalation)?,
        war: fit(MarkovState::War)?,
    })
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Training settings for a full model set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub groups: Vec<FeatureGroupSpec>,
    pub half_life: f64,
    pub classifier: ForestHyperparams,
    pub regressor: ForestHyperparams,
    pub log_target: bool,
    pub seed: u64,
}

/// Run details stored alongside fitted models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub first_month: i64,
    pub train_end_month: i64,
    pub seed: u64,
    pub config_hash: String,
    pub code_version: String,
    pub transition_rows: [usize; 4],
    pub outcome_rows: [usize; 2],
    pub flags: Vec<String>,
}

/// Feature pipeline, transition models and outcome models fit on one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModelSet {
    pub format_version: u32,
    pub features: FeaturePipeline,
    pub transitions: TransitionModelSet,
    pub outcomes: OutcomeModelSet,
    pub metadata: TrainingMetadata,
}

impl FittedModelSet {
    /// Fits every component on `train`.
    pub fn fit(train: &PanelDataset, settings: &TrainSettings, config_hash: &str) -> Result<Self> {
        let (first_month, train_end_month) = train
            .month_range()
            .ok_or_else(|| Error::Data("training panel is empty".into()))?;
        let features = FeaturePipeline::fit(train, &settings.groups, settings.half_life)?;
        let fm = features.transform(train)?;
        let rows = transition_rows(train, &fm)?;
        let d = features.n_features();
        let clf = settings.classifier.with_seed(settings.seed);
        let reg = settings.regressor.with_seed(settings.seed);
        let transitions = fit_transition_models(&rows, d, &clf)?;
        let outcomes = fit_outcome_models(&rows, d, &reg, settings.log_target)?;

        let mut flags = Vec::new();
        for s in MarkovState::ALL {
            if let OriginModel::Fallback { rate, unobserved, .. } = transitions.model(s) {
                let why = if *unobserved { "never observed" } else { "single-class" };
                flags.push(format!("transition model for {s} is a constant {rate:.6} ({why})"));
            }
        }
        for (s, m) in [("escalation", &outcomes.escalation), ("war", &outcomes.war)] {
            if m.pooled {
                flags.push(format!("outcome model for {s} pooled over nonzero states"));
            }
        }
        let metadata = TrainingMetadata {
            first_month,
            train_end_month,
            seed: settings.seed,
            config_hash: config_hash.to_string(),
            code_version: crate::CODE_VERSION.to_string(),
            transition_rows: transitions.training_rows,
            outcome_rows: [outcomes.escalation.n_rows, outcomes.war.n_rows],
            flags,
        };
        Ok(Self {
            format_version: MODEL_FORMAT_VERSION,
            features,
            transitions,
            outcomes,
            metadata,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(f), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        let m: FittedModelSet = serde_json::from_reader(BufReader::new(f))?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "model archive format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                m.format_version
            )));
        }
        Ok(m)
    }
}
