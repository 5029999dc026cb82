//! Synthetic panels drawn from a known observed-Markov data generating process.
//!
//! Each unit runs the four-state chain month by month. The probability of
//! escalating out of a zero-fatality state is shifted on the log-odds scale
//! by a latent "signal" factor that is also emitted (with noise) through
//! the covariates of one thematic group, so fitted models have something to
//! learn. Fatalities in the nonzero states are rounded log-normal draws
//! floored at 1.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CovariateSchema, CovariateSpec, ObservationRow, PanelDataset};
use crate::error::{Error, Result};
use crate::markov::MarkovState;
use crate::rng;

/// Probability of moving to the nonzero successor from each origin state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransitionRates {
    /// Peaceful -> Escalation, at a neutral signal.
    pub peaceful_escalation: f64,
    /// Escalation -> War.
    pub escalation_war: f64,
    /// War -> War.
    pub war_persistence: f64,
    /// DeEscalation -> Escalation, at a neutral signal.
    pub deescalation_reescalation: f64,
}

impl Default for TransitionRates {
    fn default() -> Self {
        Self {
            peaceful_escalation: 0.05,
            escalation_war: 0.6,
            war_persistence: 0.85,
            deescalation_reescalation: 0.3,
        }
    }
}

impl TransitionRates {
    pub fn nonzero_rate(&self, origin: MarkovState) -> f64 {
        match origin {
            MarkovState::Peaceful => self.peaceful_escalation,
            MarkovState::Escalation => self.escalation_war,
            MarkovState::War => self.war_persistence,
            MarkovState::DeEscalation => self.deescalation_reescalation,
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("rates.peaceful_escalation", self.peaceful_escalation),
            ("rates.escalation_war", self.escalation_war),
            ("rates.war_persistence", self.war_persistence),
            ("rates.deescalation_reescalation", self.deescalation_reescalation),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(name, format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Log-normal fatality distribution, rounded and floored at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FatalityDist {
    pub log_mean: f64,
    pub log_sd: f64,
}

impl FatalityDist {
    fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let z: f64 = StandardNormal.sample(rng);
        let v = (self.log_mean + self.log_sd * z).exp().round();
        if v.is_finite() {
            (v as u64).max(1)
        } else {
            1
        }
    }
}

/// One thematic block of generated covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthGroup {
    pub name: String,
    pub n_columns: usize,
    /// Number of latent factors driving the block.
    pub n_factors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_units: usize,
    pub n_months: usize,
    pub first_month: i64,
    /// Months simulated and discarded before the first emitted month.
    pub burn_in: usize,
    pub rates: TransitionRates,
    /// Log-odds shift of escalation per unit of the signal factor.
    pub signal_strength: f64,
    pub escalation: FatalityDist,
    pub war: FatalityDist,
    pub groups: Vec<SynthGroup>,
    /// Group whose first latent factor drives escalation.
    pub signal_group: String,
    /// SD of the persistent per-unit factor mean.
    pub unit_sd: f64,
    /// AR(1) coefficient of factor deviations.
    pub factor_ar: f64,
    /// Stationary SD of factor deviations around the unit mean.
    pub factor_sd: f64,
    /// Idiosyncratic noise SD added to every covariate.
    pub column_noise: f64,
    /// Probability that any covariate cell is blanked.
    pub missing_rate: f64,
    /// Also emit the escalation driver itself as covariate `signal` (group `signal`).
    pub signal_column: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let g = |name: &str, n_columns, n_factors| SynthGroup {
            name: name.to_string(),
            n_columns,
            n_factors,
        };
        Self {
            n_units: 50,
            n_months: 180,
            first_month: 1,
            burn_in: 36,
            rates: TransitionRates::default(),
            signal_strength: 1.0,
            escalation: FatalityDist {
                log_mean: 5f64.ln(),
                log_sd: 0.8,
            },
            war: FatalityDist {
                log_mean: 40f64.ln(),
                log_sd: 1.0,
            },
            groups: vec![
                g("vdem", 5, 2),
                g("violence_history", 4, 2),
                g("wdi", 5, 2),
                g("military_expenditure", 2, 1),
                g("demographics", 3, 1),
                g("environment", 3, 1),
                g("neighborhood", 4, 2),
            ],
            signal_group: "neighborhood".to_string(),
            unit_sd: 0.8,
            factor_ar: 0.9,
            factor_sd: 0.6,
            column_noise: 0.3,
            missing_rate: 0.0,
            signal_column: false,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return Err(Error::invalid(
                "missing_rate",
                format!("probability {} outside [0, 1]", self.missing_rate),
            ));
        }
        if self.n_units == 0 {
            return Err(Error::invalid("n_units", "must be at least 1"));
        }
        if self.n_months < 2 {
            return Err(Error::invalid("n_months", "must be at least 2"));
        }
        if !(0.0..1.0).contains(&self.factor_ar.abs()) {
            return Err(Error::invalid("factor_ar", "must lie in (-1, 1)"));
        }
        for (name, v) in [
            ("unit_sd", self.unit_sd),
            ("factor_sd", self.factor_sd),
            ("column_noise", self.column_noise),
            ("escalation.log_sd", self.escalation.log_sd),
            ("war.log_sd", self.war.log_sd),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be finite and non-negative"));
            }
        }
        for g in &self.groups {
            if g.n_factors == 0 || g.n_columns == 0 {
                return Err(Error::invalid(
                    format!("groups.{}", g.name),
                    "needs at least one column and one factor",
                ));
            }
        }
        if !self.groups.iter().any(|g| g.name == self.signal_group) {
            return Err(Error::invalid(
                "signal_group",
                format!("no group named `{}`", self.signal_group),
            ));
        }
        Ok(())
    }

    /// Covariate schema of generated panels: `<group>_<k>` columns in group order.
    pub fn schema(&self) -> CovariateSchema {
        let mut columns: Vec<CovariateSpec> = self
            .groups
            .iter()
            .flat_map(|g| {
                (1..=g.n_columns).map(move |k| CovariateSpec {
                    name: format!("{}_{k}", g.name),
                    group: g.name.clone(),
                })
            })
            .collect();
        if self.signal_column {
            columns.push(CovariateSpec {
                name: "signal".into(),
                group: "signal".into(),
            });
        }
        CovariateSchema::new(columns)
    }

    pub fn unit_name(i: usize) -> String {
        format!("u{i:03}")
    }

    /// Generator probability of the nonzero successor given the signal value.
    pub fn nonzero_prob(&self, origin: MarkovState, signal: f64) -> f64 {
        let p = self.rates.nonzero_rate(origin);
        let shifted = matches!(origin, MarkovState::Peaceful | MarkovState::DeEscalation);
        if !shifted || p <= 0.0 || p >= 1.0 || self.signal_strength == 0.0 {
            return p;
        }
        let logit = (p / (1.0 - p)).ln() + self.signal_strength * signal;
        1.0 / (1.0 + (-logit).exp())
    }
}

struct ColumnMap {
    factor_offset: usize,
    loadings: Vec<f64>,
    offset: f64,
    scale: f64,
}

/// Draws a panel from the generating process in `config`. Deterministic in `seed`.
pub fn synth_panel(config: &SynthConfig, seed: u64) -> Result<PanelDataset> {
    config.validate()?;
    let n_factors: usize = config.groups.iter().map(|g| g.n_factors).sum();
    let signal_factor = {
        let mut off = 0;
        for g in &config.groups {
            if g.name == config.signal_group {
                break;
            }
            off += g.n_factors;
        }
        off
    };

    // Fixed column loadings shared by all units.
    let mut lrng = rng::stream(seed, &[u64::MAX]);
    let mut columns = Vec::new();
    let mut factor_offset = 0;
    for g in &config.groups {
        for j in 0..g.n_columns {
            let loadings = (0..g.n_factors)
                .map(|k| {
                    if k == j % g.n_factors {
                        1.0
                    } else {
                        let z: f64 = StandardNormal.sample(&mut lrng);
                        0.25 * z
                    }
                })
                .collect();
            let offset = lrng.random_range(-5.0..5.0);
            let scale = 10f64.powf(lrng.random_range(-1.0..2.0));
            columns.push(ColumnMap {
                factor_offset,
                loadings,
                offset,
                scale,
            });
        }
        factor_offset += g.n_factors;
    }

    let innov_sd = config.factor_sd * (1.0 - config.factor_ar * config.factor_ar).sqrt();
    let mut rows = Vec::with_capacity(config.n_units * config.n_months);
    for u in 0..config.n_units {
        let unit = SynthConfig::unit_name(u);
        let mut r = rng::stream(seed, &[u as u64]);
        let means: Vec<f64> = (0..n_factors)
            .map(|_| { let z: f64 = StandardNormal.sample(&mut r); config.unit_sd * z })
            .collect();
        let mut dev: Vec<f64> = (0..n_factors)
            .map(|_| { let z: f64 = StandardNormal.sample(&mut r); config.factor_sd * z })
            .collect();
        let (mut prev, mut cur) = (0u64, 0u64);
        for t in 0..config.burn_in + config.n_months {
            let factors: Vec<f64> = means.iter().zip(&dev).map(|(m, d)| m + d).collect();
            let mut covariates: Vec<Option<f64>> = columns
                .iter()
                .map(|c| {
                    let f = &factors[c.factor_offset..c.factor_offset + c.loadings.len()];
                    let z: f64 = StandardNormal.sample(&mut r);
                    let latent: f64 = f.iter().zip(&c.loadings).map(|(a, b)| a * b).sum::<f64>()
                        + config.column_noise * z;
                    let missing = r.random::<f64>() < config.missing_rate;
                    (!missing).then_some(c.offset + c.scale * latent)
                })
                .collect();
            if config.signal_column {
                covariates.push(Some(factors[signal_factor]));
            }
            if t >= config.burn_in {
                rows.push(ObservationRow {
                    unit_id: unit.clone(),
                    month_id: config.first_month + (t - config.burn_in) as i64,
                    fatalities: cur,
                    covariates,
                });
            }
            let state = MarkovState::from_pair(prev, cur);
            let p = config.nonzero_prob(state, factors[signal_factor]);
            let nonzero = r.random::<f64>() < p;
            let next = if !nonzero {
                0
            } else if state.is_nonzero() {
                config.war.sample(&mut r)
            } else {
                config.escalation.sample(&mut r)
            };
            prev = cur;
            cur = next;
            for d in dev.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut r);
                *d = config.factor_ar * *d + innov_sd * z;
            }
        }
    }
    PanelDataset::from_rows(config.schema(), rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::encode_states;
    use crate::panel::validate_panel;

    fn small() -> SynthConfig {
        SynthConfig {
            n_units: 10,
            n_months: 60,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let a = synth_panel(&small(), 11).unwrap();
        let b = synth_panel(&small(), 11).unwrap();
        let c = synth_panel(&small(), 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn absorbing_peace_gives_zero_panel() {
        let mut cfg = small();
        cfg.rates.peaceful_escalation = 0.0;
        let p = synth_panel(&cfg, 3).unwrap();
        assert!(p.units().values().all(|s| s.fatalities.iter().all(|&f| f == 0)));
    }

    #[test]
    fn invalid_probability_names_field() {
        let mut cfg = small();
        cfg.rates.war_persistence = 1.5;
        let err = synth_panel(&cfg, 0).unwrap_err();
        assert!(err.to_string().contains("rates.war_persistence"));
    }

    #[test]
    fn output_validates_clean() {
        let p = synth_panel(&small(), 5).unwrap();
        assert!(validate_panel(&p).issues().is_empty(), "{:?}", validate_panel(&p).issues());
    }

    #[test]
    fn empirical_escalation_frequency() {
        let cfg = SynthConfig {
            n_units: 50,
            n_months: 120,
            signal_strength: 0.0,
            ..SynthConfig::default()
        };
        let p = synth_panel(&cfg, 2024).unwrap();
        let (mut n, mut k) = (0usize, 0usize);
        for s in p.units().values() {
            let states = encode_states(&s.fatalities).unwrap();
            for w in states.windows(2) {
                if w[0] == MarkovState::Peaceful {
                    n += 1;
                    k += usize::from(w[1] == MarkovState::Escalation);
                }
            }
        }
        let freq = k as f64 / n as f64;
        assert!((freq - 0.05).abs() <= 0.02, "escalation frequency {freq}");
    }

    #[test]
    fn nonzero_states_have_positive_counts() {
        let p = synth_panel(&small(), 9).unwrap();
        for s in p.units().values() {
            let states = encode_states(&s.fatalities).unwrap();
            for (st, f) in states.iter().zip(&s.fatalities[1..]) {
                assert_eq!(st.is_nonzero(), *f > 0);
            }
        }
    }
}
