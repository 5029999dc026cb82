//! Unit-month panel of fatality counts and raw covariates.

mod io;
mod synth;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_panel, read_panel, write_panel, write_panel_to};
pub use synth::{synth_panel, FatalityDist, SynthConfig, SynthGroup, TransitionRates};

/// Minimum number of observed months before a unit is flagged as short.
pub const SHORT_UNIT_MONTHS: usize = 24;

/// One covariate column and the thematic group it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub group: String,
}

/// Ordered covariate columns with their group tags.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub columns: Vec<CovariateSpec>,
}

impl CovariateSchema {
    pub fn new(columns: Vec<CovariateSpec>) -> Self {
        Self { columns }
    }

    /// Schema with every column in a single `ungrouped` group.
    pub fn ungrouped<S: AsRef<str>>(names: &[S]) -> Self {
        Self::new(
            names
                .iter()
                .map(|n| CovariateSpec {
                    name: n.as_ref().to_string(),
                    group: "ungrouped".to_string(),
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }
}

/// A single (unit, month) observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRow {
    pub unit_id: String,
    pub month_id: i64,
    pub fatalities: u64,
    pub covariates: Vec<Option<f64>>,
}

/// All observations of one unit, sorted by month.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UnitSeries {
    pub months: Vec<i64>,
    pub fatalities: Vec<u64>,
    /// Row-major: `covariates[i]` belongs to `months[i]`.
    pub covariates: Vec<Vec<Option<f64>>>,
}

impl UnitSeries {
    pub fn len(&self) -> usize {
        self.months.len()
    }

    pub fn is_empty(&self) -> bool {
        self.months.is_empty()
    }

    pub fn last_month(&self) -> Option<i64> {
        self.months.last().copied()
    }

    /// Index of the last row with `month <= cutoff`.
    pub fn last_index_through(&self, cutoff: i64) -> Option<usize> {
        let n = self.months.partition_point(|&m| m <= cutoff);
        n.checked_sub(1)
    }

    fn retain_months(&self, keep: impl Fn(i64) -> bool) -> UnitSeries {
        let mut out = UnitSeries::default();
        for i in 0..self.months.len() {
            if keep(self.months[i]) {
                out.months.push(self.months[i]);
                out.fatalities.push(self.fatalities[i]);
                out.covariates.push(self.covariates[i].clone());
            }
        }
        out
    }
}

/// Long-format panel grouped by unit. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    schema: CovariateSchema,
    units: BTreeMap<String, UnitSeries>,
}

impl PanelDataset {
    /// Groups `rows` by unit and sorts each unit by month.
    ///
    /// Fails on a duplicated (unit, month) key or a covariate vector whose
    /// width disagrees with `schema`.
    pub fn from_rows(schema: CovariateSchema, rows: Vec<ObservationRow>) -> Result<Self> {
        let mut grouped: BTreeMap<String, Vec<ObservationRow>> = BTreeMap::new();
        for row in rows {
            if row.covariates.len() != schema.len() {
                return Err(Error::Data(format!(
                    "unit `{}` month {}: expected {} covariates, got {}",
                    row.unit_id,
                    row.month_id,
                    schema.len(),
                    row.covariates.len()
                )));
            }
            grouped.entry(row.unit_id.clone()).or_default().push(row);
        }
        let mut units = BTreeMap::new();
        for (unit, mut rows) in grouped {
            rows.sort_by_key(|r| r.month_id);
            let mut series = UnitSeries::default();
            for r in rows {
                if series.months.last() == Some(&r.month_id) {
                    return Err(Error::DuplicateKey {
                        unit,
                        month: r.month_id,
                    });
                }
                series.months.push(r.month_id);
                series.fatalities.push(r.fatalities);
                series.covariates.push(r.covariates);
            }
            units.insert(unit, series);
        }
        Ok(Self { schema, units })
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    pub fn units(&self) -> &BTreeMap<String, UnitSeries> {
        &self.units
    }

    pub fn unit(&self, id: &str) -> Option<&UnitSeries> {
        self.units.get(id)
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_rows(&self) -> usize {
        self.units.values().map(UnitSeries::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    /// Smallest and largest month over all units.
    pub fn month_range(&self) -> Option<(i64, i64)> {
        let first = self.units.values().filter_map(|u| u.months.first()).min()?;
        let last = self.units.values().filter_map(|u| u.months.last()).max()?;
        Some((*first, *last))
    }

    /// Iterates rows in (unit, month) order.
    pub fn rows(&self) -> impl Iterator<Item = ObservationRow> + '_ {
        self.units.iter().flat_map(|(unit, s)| {
            (0..s.len()).map(move |i| ObservationRow {
                unit_id: unit.clone(),
                month_id: s.months[i],
                fatalities: s.fatalities[i],
                covariates: s.covariates[i].clone(),
            })
        })
    }

    /// Sub-panel with only the months satisfying `keep`. Units left empty are dropped.
    pub fn filter_months(&self, keep: impl Fn(i64) -> bool + Copy) -> PanelDataset {
        let units = self
            .units
            .iter()
            .map(|(u, s)| (u.clone(), s.retain_months(keep)))
            .filter(|(_, s)| !s.is_empty())
            .collect();
        PanelDataset {
            schema: self.schema.clone(),
            units,
        }
    }

    /// Rows with `month <= cutoff`.
    pub fn through(&self, cutoff: i64) -> PanelDataset {
        self.filter_months(|m| m <= cutoff)
    }
}

/// Month gaps found inside one unit's span.
#[derive(Debug, Clone, PartialEq)]
pub struct MonthGap {
    pub unit_id: String,
    pub missing_months: Vec<i64>,
}

/// Findings of [`validate_panel`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub gaps: Vec<MonthGap>,
    /// Fraction of missing cells per covariate, in schema order.
    pub missing_fraction: Vec<(String, f64)>,
    pub constant_columns: Vec<String>,
    /// Units with fewer than [`SHORT_UNIT_MONTHS`] observed months.
    pub short_units: Vec<String>,
}

impl ValidationReport {
    /// Human-readable issue list; empty for a clean panel.
    pub fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        for g in &self.gaps {
            out.push(format!(
                "unit `{}` has gaps at months {:?}",
                g.unit_id, g.missing_months
            ));
        }
        for (name, frac) in &self.missing_fraction {
            if *frac > 0.0 {
                out.push(format!("covariate `{name}` is {:.2}% missing", frac * 100.0));
            }
        }
        for c in &self.constant_columns {
            out.push(format!("covariate `{c}` is constant"));
        }
        for u in &self.short_units {
            out.push(format!(
                "unit `{u}` has fewer than {SHORT_UNIT_MONTHS} observed months"
            ));
        }
        out
    }

    pub fn is_clean(&self) -> bool {
        self.issues().is_empty()
    }
}

/// Reports gaps, missingness, constant columns and short units. Never fails.
pub fn validate_panel(panel: &PanelDataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    for (unit, s) in panel.units() {
        let mut missing = Vec::new();
        for w in s.months.windows(2) {
            missing.extend(w[0] + 1..w[1]);
        }
        if !missing.is_empty() {
            report.gaps.push(MonthGap {
                unit_id: unit.clone(),
                missing_months: missing,
            });
        }
        if s.len() < SHORT_UNIT_MONTHS {
            report.short_units.push(unit.clone());
        }
    }
    let n = panel.n_rows();
    for (j, spec) in panel.schema().columns.iter().enumerate() {
        let mut n_missing = 0usize;
        let mut first: Option<f64> = None;
        let mut constant = true;
        for s in panel.units().values() {
            for row in &s.covariates {
                match row[j] {
                    None => n_missing += 1,
                    Some(v) => match first {
                        None => first = Some(v),
                        Some(f) if f != v => constant = false,
                        _ => {}
                    },
                }
            }
        }
        let frac = if n == 0 { 0.0 } else { n_missing as f64 / n as f64 };
        report.missing_fraction.push((spec.name.clone(), frac));
        if constant && n > 0 {
            report.constant_columns.push(spec.name.clone());
        }
    }
    report
}

/// Training cutoff plus forecast window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_end_month: i64,
    pub forecast_start_month: i64,
    pub horizon: usize,
}

impl SplitSpec {
    pub fn forecast_end_month(&self) -> i64 {
        self.forecast_start_month + self.horizon as i64 - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", "must be at least 1"));
        }
        if self.train_end_month >= self.forecast_start_month {
            return Err(Error::Split(format!(
                "training window (through {}) overlaps forecast start {}",
                self.train_end_month, self.forecast_start_month
            )));
        }
        Ok(())
    }
}

/// Splits into a training panel (`month <= train_end`) and an evaluation
/// panel covering the forecast window.
pub fn split_train_eval(
    panel: &PanelDataset,
    spec: &SplitSpec,
) -> Result<(PanelDataset, PanelDataset)> {
    spec.validate()?;
    let (first, last) = panel
        .month_range()
        .ok_or_else(|| Error::Split("panel is empty".into()))?;
    let end = spec.forecast_end_month();
    if end > last {
        return Err(Error::Split(format!(
            "forecast window ends at month {end} but panel ends at month {last}"
        )));
    }
    if spec.train_end_month < first {
        return Err(Error::Split(format!(
            "train end {} precedes the first panel month {first}",
            spec.train_end_month
        )));
    }
    let train = panel.through(spec.train_end_month);
    let start = spec.forecast_start_month;
    let eval = panel.filter_months(|m| m >= start && m <= end);
    if train.is_empty() {
        return Err(Error::Split("empty training window".into()));
    }
    if eval.is_empty() {
        return Err(Error::Split("empty evaluation window".into()));
    }
    Ok((train, eval))
}
