//! Draw-based predictive densities and their CSV form
//! (`unit_id,month_id,draw_idx,outcome`).

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::stats;

/// Simulated outcomes for one unit-month.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForecastCell {
    pub unit_id: String,
    pub month_id: i64,
    pub draws: Vec<u64>,
}

/// Predictive densities for every cell of a forecast window, sorted by (unit, month).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForecastDraws {
    pub n_draws: usize,
    pub cells: Vec<ForecastCell>,
}

impl ForecastDraws {
    /// Sorts cells and checks that each has exactly `n_draws` values and
    /// that no (unit, month) repeats.
    pub fn new(n_draws: usize, mut cells: Vec<ForecastCell>) -> Result<Self> {
        if n_draws == 0 {
            return Err(Error::invalid("n_draws", "must be at least 1"));
        }
        cells.sort_by(|a, b| (&a.unit_id, a.month_id).cmp(&(&b.unit_id, b.month_id)));
        for w in cells.windows(2) {
            if w[0].unit_id == w[1].unit_id && w[0].month_id == w[1].month_id {
                return Err(Error::DuplicateKey {
                    unit: w[0].unit_id.clone(),
                    month: w[0].month_id,
                });
            }
        }
        if let Some(c) = cells.iter().find(|c| c.draws.len() != n_draws) {
            return Err(Error::Data(format!(
                "cell ({}, {}) has {} draws, expected {n_draws}",
                c.unit_id,
                c.month_id,
                c.draws.len()
            )));
        }
        Ok(Self { n_draws, cells })
    }

    pub fn get(&self, unit: &str, month: i64) -> Option<&ForecastCell> {
        self.cells
            .binary_search_by(|c| (c.unit_id.as_str(), c.month_id).cmp(&(unit, month)))
            .ok()
            .map(|i| &self.cells[i])
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "unit_id,month_id,draw_idx,outcome")?;
        for c in &self.cells {
            for (j, v) in c.draws.iter().enumerate() {
                writeln!(w, "{},{},{},{}", c.unit_id, c.month_id, j, v)?;
            }
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(f)
    }

    /// Parses a draw file. Every cell must list draw indices `0..n` exactly
    /// once, with the same `n` across cells.
    pub fn read_from<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (cu, cm, cd, co) = (col("unit_id")?, col("month_id")?, col("draw_idx")?, col("outcome")?);
        let mut cells: BTreeMap<(String, i64), Vec<Option<u64>>> = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let get = |c: usize| rec.get(c).unwrap_or("").trim();
            let parse_err = |what: &str, v: &str| Error::Parse {
                line,
                reason: format!("{what} `{v}` is not a non-negative integer"),
            };
            let month: i64 = get(cm).parse().map_err(|_| parse_err("month_id", get(cm)))?;
            let draw: usize = get(cd).parse().map_err(|_| parse_err("draw_idx", get(cd)))?;
            let outcome: u64 = get(co).parse().map_err(|_| parse_err("outcome", get(co)))?;
            let slot = cells.entry((get(cu).to_string(), month)).or_default();
            if slot.len() <= draw {
                slot.resize(draw + 1, None);
            }
            if slot[draw].replace(outcome).is_some() {
                return Err(Error::Parse {
                    line,
                    reason: format!("draw {draw} repeated for ({}, {month})", get(cu)),
                });
            }
        }
        let n_draws = cells.values().next().map_or(0, Vec::len);
        let cells = cells
            .into_iter()
            .map(|((unit_id, month_id), draws)| {
                let draws = draws.into_iter().collect::<Option<Vec<u64>>>().ok_or_else(|| {
                    Error::Data(format!("cell ({unit_id}, {month_id}) has missing draw indices"))
                })?;
                Ok(ForecastCell {
                    unit_id,
                    month_id,
                    draws,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(n_draws, cells)
    }
}

/// Per-cell summary of a draw vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawSummary {
    pub unit_id: String,
    pub month_id: i64,
    pub mean: f64,
    pub frac_zero: f64,
    /// Interpolated empirical quantiles, aligned with the requested levels.
    pub quantiles: Vec<f64>,
}

pub fn draws_summary(fd: &ForecastDraws, levels: &[f64]) -> Result<Vec<DrawSummary>> {
    if let Some(q) = levels.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::invalid("quantiles", format!("level {q} outside [0, 1]")));
    }
    Ok(fd
        .cells
        .iter()
        .map(|c| {
            let xs: Vec<f64> = c.draws.iter().map(|&v| v as f64).collect();
            let sorted = stats::sorted_copy(&xs);
            DrawSummary {
                unit_id: c.unit_id.clone(),
                month_id: c.month_id,
                mean: stats::mean(&xs),
                frac_zero: c.draws.iter().filter(|&&v| v == 0).count() as f64 / xs.len() as f64,
                quantiles: levels.iter().map(|&q| stats::quantile_sorted(&sorted, q)).collect(),
            }
        })
        .collect())
}

pub fn write_summary_csv(rows: &[DrawSummary], levels: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    let io = |e| Error::io(path, e);
    write!(w, "unit_id,month_id,mean,frac_zero").map_err(io)?;
    for q in levels {
        write!(w, ",q{q}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for r in rows {
        write!(w, "{},{},{},{}", r.unit_id, r.month_id, r.mean, r.frac_zero).map_err(io)?;
        for v in &r.quantiles {
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}
