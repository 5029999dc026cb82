//! Scoring rules for draw-based density forecasts.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::draws::ForecastDraws;
use crate::error::{Error, Result};
use crate::panel::PanelDataset;
use crate::stats;

/// Sample CRPS, `mean|x_i - y| - (1 / 2m^2) sum_ij |x_i - x_j|`.
///
/// The pairwise term is evaluated in `O(m log m)` from the sorted sample.
pub fn crps_sample(draws: &[f64], y: f64) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Data("CRPS needs at least one draw".into()));
    }
    let m = draws.len() as f64;
    let abs_err = draws.iter().map(|x| (x - y).abs()).sum::<f64>() / m;
    let sorted = stats::sorted_copy(draws);
    // sum_ij |x_i - x_j| = 2 * sum_i (2i - m - 1) x_(i), 1-based i
    let spread: f64 = sorted
        .iter()
        .enumerate()
        .map(|(i, x)| (2.0 * (i as f64 + 1.0) - m - 1.0) * x)
        .sum();
    Ok((abs_err - spread / (m * m)).max(0.0))
}

/// Bins over non-negative counts, given by their lower edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IgnBinning {
    /// Strictly increasing, starting at 0; bin `k` is `[edges[k], edges[k+1])`.
    pub lower_edges: Vec<f64>,
    pub floor: f64,
}

impl Default for IgnBinning {
    fn default() -> Self {
        Self {
            lower_edges: vec![0.0, 1.0, 3.0, 6.0, 11.0, 26.0, 51.0, 101.0, 251.0, 501.0, 1001.0],
            floor: 0.001,
        }
    }
}

impl IgnBinning {
    pub fn validate(&self) -> Result<()> {
        if self.lower_edges.first() != Some(&0.0) {
            return Err(Error::invalid("metrics.bins", "first lower edge must be 0"));
        }
        if self.lower_edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("metrics.bins", "edges must be strictly increasing"));
        }
        if !(self.floor > 0.0 && self.floor <= 1.0) {
            return Err(Error::invalid("metrics.floor", "must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn bin(&self, v: f64) -> usize {
        self.lower_edges.partition_point(|&e| e <= v).saturating_sub(1)
    }
}

/// Binned ignorance score, `-log2(max(share of draws in y's bin, floor))`.
pub fn ign_binned(draws: &[f64], y: f64, binning: &IgnBinning) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::Data("IGN needs at least one draw".into()));
    }
    let target = binning.bin(y);
    let hits = draws.iter().filter(|&&x| binning.bin(x) == target).count();
    let p = (hits as f64 / draws.len() as f64).max(binning.floor);
    Ok(-p.log2())
}

/// Interval `(alpha/2, 1 - alpha/2)` by interpolated empirical quantiles.
pub fn central_interval(draws: &[f64], alpha: f64) -> Result<(f64, f64)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", format!("{alpha} outside (0, 1)")));
    }
    if draws.is_empty() {
        return Err(Error::Data("interval needs at least one draw".into()));
    }
    let sorted = stats::sorted_copy(draws);
    Ok((
        stats::quantile_sorted(&sorted, alpha / 2.0),
        stats::quantile_sorted(&sorted, 1.0 - alpha / 2.0),
    ))
}

/// Interval score for given bounds.
pub fn interval_score(lower: f64, upper: f64, y: f64, alpha: f64) -> f64 {
    let mut s = upper - lower;
    if y < lower {
        s += 2.0 / alpha * (lower - y);
    }
    if y > upper {
        s += 2.0 / alpha * (y - upper);
    }
    s
}

/// Interval score of the central `(1 - alpha)` draw interval.
pub fn mis(draws: &[f64], y: f64, alpha: f64) -> Result<f64> {
    let (l, u) = central_interval(draws, alpha)?;
    Ok(interval_score(l, u, y, alpha))
}

/// Scores of one forecast cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    pub crps: f64,
    pub ign: f64,
    pub mis: f64,
    pub covered: bool,
}

/// Mean scores over a set of cells.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreMeans {
    pub n_cells: usize,
    pub crps: f64,
    pub ign: f64,
    pub mis: f64,
    /// Share of cells whose actual lies inside the central interval.
    pub coverage: f64,
}

impl ScoreMeans {
    fn from_cells<'a>(cells: impl IntoIterator<Item = &'a CellScore>) -> Self {
        let mut m = ScoreMeans::default();
        for c in cells {
            m.n_cells += 1;
            m.crps += c.crps;
            m.ign += c.ign;
            m.mis += c.mis;
            m.coverage += f64::from(u8::from(c.covered));
        }
        if m.n_cells > 0 {
            let n = m.n_cells as f64;
            m.crps /= n;
            m.ign /= n;
            m.mis /= n;
            m.coverage /= n;
        }
        m
    }

    /// Cell-count-weighted pool of several means.
    pub fn pooled(parts: &[ScoreMeans]) -> ScoreMeans {
        let n: usize = parts.iter().map(|p| p.n_cells).sum();
        if n == 0 {
            return ScoreMeans::default();
        }
        let w = |f: fn(&ScoreMeans) -> f64| {
            parts.iter().map(|p| f(p) * p.n_cells as f64).sum::<f64>() / n as f64
        };
        ScoreMeans {
            n_cells: n,
            crps: w(|p| p.crps),
            ign: w(|p| p.ign),
            mis: w(|p| p.mis),
            coverage: w(|p| p.coverage),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    pub binning: IgnBinning,
    pub alpha: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            binning: IgnBinning::default(),
            alpha: 0.1,
        }
    }
}

/// Scores of one model over a forecast window.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub model: String,
    pub overall: ScoreMeans,
    pub per_unit: BTreeMap<String, ScoreMeans>,
    pub per_month: BTreeMap<i64, ScoreMeans>,
    pub cells: Vec<(String, i64, CellScore)>,
}

pub fn score_cell(draws: &[f64], y: f64, binning: &IgnBinning, alpha: f64) -> Result<CellScore> {
    let (l, u) = central_interval(draws, alpha)?;
    Ok(CellScore {
        crps: crps_sample(draws, y)?,
        ign: ign_binned(draws, y, binning)?,
        mis: interval_score(l, u, y, alpha),
        covered: l <= y && y <= u,
    })
}

/// Scores every forecast cell against `actuals` and averages.
pub fn evaluate(
    model: &str,
    fd: &ForecastDraws,
    actuals: &PanelDataset,
    binning: &IgnBinning,
    alpha: f64,
) -> Result<MetricReport> {
    binning.validate()?;
    let scored = crate::par::map_slice(&fd.cells, |c| {
        let s = actuals.unit(&c.unit_id).ok_or_else(|| {
            Error::Data(format!("no actuals for unit `{}`", c.unit_id))
        })?;
        let i = s.months.binary_search(&c.month_id).map_err(|_| {
            Error::Data(format!(
                "no actual for unit `{}` month {}",
                c.unit_id, c.month_id
            ))
        })?;
        let draws: Vec<f64> = c.draws.iter().map(|&v| v as f64).collect();
        let score = score_cell(&draws, s.fatalities[i] as f64, binning, alpha)?;
        Ok((c.unit_id.clone(), c.month_id, score))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut by_unit: BTreeMap<String, Vec<CellScore>> = BTreeMap::new();
    let mut by_month: BTreeMap<i64, Vec<CellScore>> = BTreeMap::new();
    for (u, m, s) in &scored {
        by_unit.entry(u.clone()).or_default().push(*s);
        by_month.entry(*m).or_default().push(*s);
    }
    Ok(MetricReport {
        model: model.to_string(),
        overall: ScoreMeans::from_cells(scored.iter().map(|(_, _, s)| s)),
        per_unit: by_unit
            .into_iter()
            .map(|(k, v)| (k, ScoreMeans::from_cells(&v)))
            .collect(),
        per_month: by_month
            .into_iter()
            .map(|(k, v)| (k, ScoreMeans::from_cells(&v)))
            .collect(),
        cells: scored,
    })
}

/// Indices of `reports` ordered by mean CRPS; equal CRPS keeps input order.
pub fn rank_by_crps(means: &[ScoreMeans]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..means.len()).collect();
    idx.sort_by(|&a, &b| means[a].crps.total_cmp(&means[b].crps));
    idx
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub scores: ScoreMeans,
}

/// CSV with columns `model,crps,ign,mis`, in the given row order.
pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut s = String::from("model,crps,ign,mis\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{}", r.model, r.scores.crps, r.scores.ign, r.scores.mis);
    }
    s
}

/// Fixed-width table: model, CRPS, IGN, MIS.
pub fn report_table(rows: &[ReportRow]) -> String {
    let width = rows.iter().map(|r| r.model.len()).max().unwrap_or(5).max(5);
    let mut s = format!("{:<width$}  {:>10}  {:>6}  {:>10}\n", "Model", "CRPS", "IGN", "MIS");
    for r in rows {
        let _ = writeln!(
            s,
            "{:<width$}  {:>10.2}  {:>6.2}  {:>10.2}",
            r.model, r.scores.crps, r.scores.ign, r.scores.mis
        );
    }
    s
}

pub fn write_report(rows: &[ReportRow], dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    let csv = dir.join(format!("{stem}.csv"));
    fs::write(&csv, report_csv(rows)).map_err(|e| Error::io(&csv, e))?;
    let txt = dir.join(format!("{stem}.txt"));
    fs::write(&txt, report_table(rows)).map_err(|e| Error::io(&txt, e))?;
    Ok(())
}
