//! Reference forecasters: exactly zero, last month with Poisson noise, and
//! trailing-window bootstrap ("conflictology") over 12 or 240 months.
//!
//! Each holds one distribution per unit fixed across the whole window.

use rand::seq::IndexedRandom;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::draws::{ForecastCell, ForecastDraws};
use crate::error::{Error, Result};
use crate::panel::{PanelDataset, UnitSeries};
use crate::rng;
use crate::simulate::ForecastWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchmarkKind {
    ExactlyZero,
    LastPoisson,
    Conflictology12m,
    Boot240,
}

impl BenchmarkKind {
    pub const ALL: [BenchmarkKind; 4] = [
        BenchmarkKind::ExactlyZero,
        BenchmarkKind::LastPoisson,
        BenchmarkKind::Conflictology12m,
        BenchmarkKind::Boot240,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkKind::ExactlyZero => "benchmark_exactly_zero",
            BenchmarkKind::LastPoisson => "benchmark_last_with_poisson",
            BenchmarkKind::Conflictology12m => "benchmark_conflictology_12m",
            BenchmarkKind::Boot240 => "benchmark_boot_240",
        }
    }

    fn stream_id(&self) -> u64 {
        *self as u64 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub kind: BenchmarkKind,
    pub n_draws: usize,
    pub seed: u64,
}

pub fn run_benchmark(
    spec: &BenchmarkSpec,
    history: &PanelDataset,
    window: &ForecastWindow,
) -> Result<ForecastDraws> {
    match spec.kind {
        BenchmarkKind::ExactlyZero => bench_exactly_zero(history, window, spec.n_draws),
        BenchmarkKind::LastPoisson => bench_last_poisson(history, window, spec.n_draws, spec.seed),
        BenchmarkKind::Conflictology12m => {
            bench_conflictology(history, window, spec.n_draws, 12, spec.seed)
        }
        BenchmarkKind::Boot240 => bench_conflictology(history, window, spec.n_draws, 240, spec.seed),
    }
}

fn check_draws(n_draws: usize) -> Result<()> {
    if n_draws == 0 {
        return Err(Error::invalid("n_draws", "must be at least 1"));
    }
    Ok(())
}

/// Observations strictly before the window.
fn history_before<'a>(unit: &str, s: &'a UnitSeries, window: &ForecastWindow) -> Result<&'a [u64]> {
    let n = s.months.partition_point(|&m| m < window.start_month);
    if n == 0 {
        return Err(Error::Data(format!(
            "unit `{unit}` has no observation before month {}",
            window.start_month
        )));
    }
    Ok(&s.fatalities[..n])
}

/// Builds cells by drawing one vector per unit and repeating it per month.
fn per_unit_cells<F>(history: &PanelDataset, window: &ForecastWindow, draw: F) -> Result<Vec<ForecastCell>>
where
    F: Fn(&str, &UnitSeries) -> Result<Vec<Vec<u64>>> + Sync + Send,
{
    let units: Vec<(&String, &UnitSeries)> = history.units().iter().collect();
    let per_unit = crate::par::map_slice(&units, |(u, s)| draw(u, s))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut cells = Vec::with_capacity(units.len() * window.horizon);
    for ((unit, _), draws) in units.iter().zip(per_unit) {
        for (month, d) in window.months().zip(draws) {
            cells.push(ForecastCell {
                unit_id: (*unit).clone(),
                month_id: month,
                draws: d,
            });
        }
    }
    Ok(cells)
}

pub fn bench_exactly_zero(
    history: &PanelDataset,
    window: &ForecastWindow,
    n_draws: usize,
) -> Result<ForecastDraws> {
    check_draws(n_draws)?;
    let cells = history
        .units()
        .keys()
        .flat_map(|u| {
            window.months().map(move |m| ForecastCell {
                unit_id: u.clone(),
                month_id: m,
                draws: vec![0; n_draws],
            })
        })
        .collect();
    ForecastDraws::new(n_draws, cells)
}

/// Poisson draws with mean equal to the unit's last observed fatalities.
pub fn bench_last_poisson(
    history: &PanelDataset,
    window: &ForecastWindow,
    n_draws: usize,
    seed: u64,
) -> Result<ForecastDraws> {
    check_draws(n_draws)?;
    let kind = BenchmarkKind::LastPoisson.stream_id();
    let cells = per_unit_cells(history, window, |unit, s| {
        let lambda = *history_before(unit, s, window)?.last().expect("non-empty") as f64;
        let uid = rng::fnv1a(unit.as_bytes());
        window
            .months()
            .map(|m| {
                if lambda == 0.0 {
                    return Ok(vec![0; n_draws]);
                }
                let mut r = rng::stream(seed, &[kind, uid, m as u64]);
                let dist = Poisson::new(lambda)
                    .map_err(|e| Error::Model(format!("Poisson({lambda}): {e}")))?;
                Ok((0..n_draws).map(|_| dist.sample(&mut r) as u64).collect())
            })
            .collect()
    })?;
    ForecastDraws::new(n_draws, cells)
}

/// Bootstrap from the unit's trailing `lookback` observed months (all
/// available months when the history is shorter).
pub fn bench_conflictology(
    history: &PanelDataset,
    window: &ForecastWindow,
    n_draws: usize,
    lookback: usize,
    seed: u64,
) -> Result<ForecastDraws> {
    check_draws(n_draws)?;
    if lookback == 0 {
        return Err(Error::invalid("lookback", "must be at least 1"));
    }
    let kind = if lookback == 12 {
        BenchmarkKind::Conflictology12m
    } else {
        BenchmarkKind::Boot240
    }
    .stream_id();
    let cells = per_unit_cells(history, window, |unit, s| {
        let n = s.months.partition_point(|&m| m < window.start_month);
        if n == 0 {
            return Err(Error::Data(format!("unit `{unit}` has an empty lookback window")));
        }
        let last = s.months[n - 1];
        let lo = s.months[..n].partition_point(|&m| m <= last - lookback as i64);
        let pool = &s.fatalities[lo..n];
        let uid = rng::fnv1a(unit.as_bytes());
        Ok(window
            .months()
            .map(|m| {
                let mut r = rng::stream(seed, &[kind, uid, lookback as u64, m as u64]);
                (0..n_draws)
                    .map(|_| *pool.choose(&mut r).expect("non-empty pool"))
                    .collect()
            })
            .collect())
    })?;
    ForecastDraws::new(n_draws, cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{CovariateSchema, ObservationRow};

    fn panel(series: &[(&str, &[u64])]) -> PanelDataset {
        let rows = series
            .iter()
            .flat_map(|(u, fs)| {
                fs.iter().enumerate().map(move |(i, &f)| ObservationRow {
                    unit_id: u.to_string(),
                    month_id: i as i64 + 1,
                    fatalities: f,
                    covariates: vec![],
                })
            })
            .collect();
        PanelDataset::from_rows(CovariateSchema::default(), rows).unwrap()
    }

    fn window(start: i64) -> ForecastWindow {
        ForecastWindow {
            start_month: start,
            horizon: 12,
        }
    }

    #[test]
    fn zero_benchmark_shape() {
        let p = panel(&[("A", &[1, 2, 3]), ("B", &[0, 0, 9])]);
        let fd = bench_exactly_zero(&p, &window(4), 7).unwrap();
        assert_eq!(fd.cells.len(), 24);
        assert!(fd.cells.iter().all(|c| c.draws == vec![0; 7]));
    }

    #[test]
    fn poisson_of_zero_is_zero() {
        let p = panel(&[("A", &[5, 0])]);
        let fd = bench_last_poisson(&p, &window(3), 50, 1).unwrap();
        assert!(fd.cells.iter().all(|c| c.draws.iter().all(|&v| v == 0)));
    }

    #[test]
    fn poisson_mean_near_lambda() {
        let p = panel(&[("A", &[3, 100])]);
        let w = ForecastWindow { start_month: 3, horizon: 1 };
        let fd = bench_last_poisson(&p, &w, 100_000, 7).unwrap();
        let mean = fd.cells[0].draws.iter().sum::<u64>() as f64 / 1e5;
        // 3 sigma of the sample mean: 3 * sqrt(100 / 1e5)
        assert!((mean - 100.0).abs() <= 3.0 * (100.0f64 / 1e5).sqrt(), "{mean}");
        let again = bench_last_poisson(&p, &w, 100_000, 7).unwrap();
        assert_eq!(fd, again);
    }

    #[test]
    fn conflictology_resamples_trailing_values() {
        let mut hist = vec![500u64; 20];
        hist.extend([0, 0, 0, 10, 0, 0, 0, 10, 0, 0, 0, 10]);
        let p = panel(&[("A", &hist)]);
        let fd = bench_conflictology(&p, &window(hist.len() as i64 + 1), 10_000, 12, 3).unwrap();
        for c in &fd.cells {
            assert!(c.draws.iter().all(|v| *v == 0 || *v == 10));
        }
        let nz = fd.cells[0].draws.iter().filter(|&&v| v > 0).count() as f64 / 10_000.0;
        assert!((nz - 0.25).abs() <= 0.03, "{nz}");
    }

    #[test]
    fn conflictology_constant_zero() {
        let mut hist = vec![80u64; 5];
        hist.extend([0; 12]);
        let p = panel(&[("A", &hist)]);
        let fd = bench_conflictology(&p, &window(18), 100, 12, 3).unwrap();
        assert!(fd.cells.iter().all(|c| c.draws.iter().all(|&v| v == 0)));
    }

    #[test]
    fn short_history_uses_all_months() {
        let p = panel(&[("A", &[4, 9])]);
        let fd = bench_conflictology(&p, &window(3), 500, 240, 3).unwrap();
        assert!(fd.cells[0].draws.iter().all(|v| *v == 4 || *v == 9));
    }

    #[test]
    fn unit_without_history_errors() {
        let p = panel(&[("A", &[4, 9])]);
        assert!(bench_last_poisson(&p, &window(1), 5, 0).is_err());
    }
}
