//! Dynamic Monte Carlo forecasting: roll state paths forward with the
//! transition models, draw fatalities from the state-conditional quantile
//! forests, and update the decay feature with each simulated month.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::draws::{ForecastCell, ForecastDraws};
use crate::error::{Error, Result};
use crate::features::decay_factor;
use crate::markov::{FittedModelSet, MarkovState};
use crate::panel::PanelDataset;
use crate::rng::{self, StreamRng};

pub const DEFAULT_DRAWS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub n_draws: usize,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            n_draws: DEFAULT_DRAWS,
            seed: 0,
        }
    }
}

/// Months to emit draws for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForecastWindow {
    pub start_month: i64,
    pub horizon: usize,
}

impl ForecastWindow {
    pub fn end_month(&self) -> i64 {
        self.start_month + self.horizon as i64 - 1
    }

    pub fn months(&self) -> impl Iterator<Item = i64> {
        self.start_month..=self.end_month()
    }
}

/// Mutable part of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathState {
    pub state: MarkovState,
    pub decay: f64,
    pub last_fatalities: u64,
}

/// Starting point shared by every path of one unit.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitStart {
    pub unit_id: String,
    pub last_month: i64,
    /// Group components at the last observed month, held fixed.
    pub exogenous: Vec<f64>,
    pub initial: PathState,
    pub paths: Vec<PathState>,
}

/// Initial path states for every unit: its last observed state, decay value
/// and component scores, replicated `n_draws` times.
pub fn init_paths(
    models: &FittedModelSet,
    history: &PanelDataset,
    cfg: &SimulationConfig,
) -> Result<Vec<UnitStart>> {
    if cfg.n_draws == 0 {
        return Err(Error::invalid("simulation.n_draws", "must be at least 1"));
    }
    let fm = models.features.transform(history)?;
    let d = models.features.decay_index();
    history
        .units()
        .iter()
        .map(|(unit, s)| {
            let n = s.len();
            if n < 2 || s.months[n - 1] != s.months[n - 2] + 1 {
                return Err(Error::Data(format!(
                    "unit `{unit}` needs its last two months observed to start a path"
                )));
            }
            let row = fm.row(fm.find(unit, s.months[n - 1]).expect("transform covers every row"));
            let initial = PathState {
                state: MarkovState::from_pair(s.fatalities[n - 2], s.fatalities[n - 1]),
                decay: row[d],
                last_fatalities: s.fatalities[n - 1],
            };
            Ok(UnitStart {
                unit_id: unit.clone(),
                last_month: s.months[n - 1],
                exogenous: row[..d].to_vec(),
                initial,
                paths: vec![initial; cfg.n_draws],
            })
        })
        .collect()
}

/// Scratch space reused across steps of one path.
#[derive(Debug, Default)]
pub struct StepBuffers {
    features: Vec<f64>,
    weights: Vec<(f64, f64)>,
}

/// Advances one path by a month.
///
/// Builds the feature row (frozen components plus current decay), draws the
/// next state from the origin's transition probabilities, draws fatalities
/// from the next state's forest (zero in zero states, at least 1 otherwise),
/// then decays and increments the accumulator.
pub fn step_path<R: Rng>(
    models: &FittedModelSet,
    exogenous: &[f64],
    path: &PathState,
    rng: &mut R,
    buf: &mut StepBuffers,
) -> Result<(PathState, u64)> {
    buf.features.clear();
    buf.features.extend_from_slice(exogenous);
    buf.features.push(path.decay);
    let [_, p_nonzero] = models.transitions.transition_prob(path.state, &buf.features)?;
    let [zero_next, nonzero_next] = path.state.successors();
    let u: f64 = rng.random();
    let next = if u < p_nonzero { nonzero_next } else { zero_next };
    let fatalities = match models.outcomes.for_state(next) {
        None => 0,
        Some(m) => {
            let v = m.forest.sample(&buf.features, rng, &mut buf.weights)?;
            (v.round().max(1.0)) as u64
        }
    };
    let decay = path.decay * decay_factor(models.features.half_life) + fatalities as f64;
    Ok((
        PathState {
            state: next,
            decay,
            last_fatalities: fatalities,
        },
        fatalities,
    ))
}

/// Full record of one simulated path, one entry per step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<MarkovState>,
    pub fatalities: Vec<u64>,
    pub decay: Vec<f64>,
}

/// Random stream for path `draw` of `unit`.
pub fn path_rng(seed: u64, unit: &str, draw: usize) -> StreamRng {
    rng::stream(seed, &[rng::fnv1a(unit.as_bytes()), draw as u64])
}

fn run_path(
    models: &FittedModelSet,
    start: &UnitStart,
    draw: usize,
    n_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    let mut rng = path_rng(seed, &start.unit_id, draw);
    let mut buf = StepBuffers::default();
    let mut path = start.paths[draw];
    let mut t = Trajectory {
        states: Vec::with_capacity(n_steps),
        fatalities: Vec::with_capacity(n_steps),
        decay: Vec::with_capacity(n_steps),
    };
    for _ in 0..n_steps {
        let (next, f) = step_path(models, &start.exogenous, &path, &mut rng, &mut buf)?;
        path = next;
        t.states.push(path.state);
        t.fatalities.push(f);
        t.decay.push(path.decay);
    }
    Ok(t)
}

fn steps_to_window(start: &UnitStart, window: &ForecastWindow) -> Result<usize> {
    if start.last_month >= window.start_month {
        return Err(Error::Split(format!(
            "unit `{}` is observed through month {}, inside the forecast window starting {}",
            start.unit_id, start.last_month, window.start_month
        )));
    }
    Ok((window.end_month() - start.last_month) as usize)
}

/// Simulates every path of every unit through the end of `window`.
///
/// Returns, per unit, one trajectory per draw covering all months after the
/// unit's last observation (including any months before the window opens).
pub fn simulate_trajectories(
    models: &FittedModelSet,
    history: &PanelDataset,
    window: &ForecastWindow,
    cfg: &SimulationConfig,
) -> Result<Vec<(UnitStart, Vec<Trajectory>)>> {
    if window.horizon == 0 {
        return Err(Error::invalid("horizon", "must be at least 1"));
    }
    let starts = init_paths(models, history, cfg)?;
    let steps: Vec<usize> = starts
        .iter()
        .map(|s| steps_to_window(s, window))
        .collect::<Result<_>>()?;
    let n = cfg.n_draws;
    let flat = crate::par::map_range(starts.len() * n, |k| {
        let u = k / n;
        run_path(models, &starts[u], k % n, steps[u], cfg.seed)
    });
    let mut flat = flat.into_iter();
    starts
        .into_iter()
        .map(|s| {
            let paths = flat.by_ref().take(n).collect::<Result<Vec<_>>>()?;
            Ok((s, paths))
        })
        .collect()
}

/// Predictive draws for each (unit, month) in `window`. Draw `j` of a cell
/// is path `j`'s simulated fatalities in that month.
pub fn simulate_paths(
    models: &FittedModelSet,
    history: &PanelDataset,
    window: &ForecastWindow,
    cfg: &SimulationConfig,
) -> Result<ForecastDraws> {
    let sims = simulate_trajectories(models, history, window, cfg)?;
    let mut cells = Vec::with_capacity(sims.len() * window.horizon);
    for (start, paths) in sims {
        let offset = (window.start_month - start.last_month - 1) as usize;
        for (h, month) in window.months().enumerate() {
            cells.push(ForecastCell {
                unit_id: start.unit_id.clone(),
                month_id: month,
                draws: paths.iter().map(|p| p.fatalities[offset + h]).collect(),
            });
        }
    }
    ForecastDraws::new(cfg.n_draws, cells)
}
