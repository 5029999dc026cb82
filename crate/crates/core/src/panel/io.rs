use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{CovariateSchema, ObservationRow, PanelDataset};
use crate::error::{Error, Result};

const UNIT: &str = "unit_id";
const MONTH: &str = "month_id";
const FATALITIES: &str = "fatalities";

/// Loads a panel CSV (`unit_id,month_id,fatalities,<covariate...>`).
///
/// With a `schema`, every schema column must be present in the header and
/// no other covariate columns are allowed; the panel keeps the schema's
/// column order. Without one, all remaining columns are taken in header
/// order as ungrouped covariates.
pub fn load_panel(path: impl AsRef<Path>, schema: Option<&CovariateSchema>) -> Result<PanelDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_panel(file, schema)
}

pub fn read_panel<R: Read>(reader: R, schema: Option<&CovariateSchema>) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let unit_col = find(UNIT)?;
    let month_col = find(MONTH)?;
    let fat_col = find(FATALITIES)?;
    let extra: Vec<(usize, &String)> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| ![unit_col, month_col, fat_col].contains(i))
        .collect();

    let (schema, cov_cols) = match schema {
        Some(schema) => {
            if let Some((_, name)) = extra.iter().find(|(_, n)| schema.position(n).is_none()) {
                return Err(Error::UnknownCovariate((*name).clone()));
            }
            let cols = schema
                .names()
                .map(find)
                .collect::<Result<Vec<usize>>>()?;
            (schema.clone(), cols)
        }
        None => {
            let names: Vec<&String> = extra.iter().map(|(_, n)| *n).collect();
            (
                CovariateSchema::ungrouped(&names),
                extra.iter().map(|(i, _)| *i).collect(),
            )
        }
    };

    let mut rows = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        // header is line 1
        let line = idx + 2;
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let unit_id = field(unit_col).to_string();
        if unit_id.is_empty() {
            return Err(Error::Parse {
                line,
                reason: "empty unit_id".into(),
            });
        }
        let month_id: i64 = field(month_col).parse().map_err(|_| Error::Parse {
            line,
            reason: format!("month_id `{}` is not an integer", field(month_col)),
        })?;
        let raw = field(fat_col);
        let fatalities: u64 = match raw.parse::<i64>() {
            Ok(v) if v < 0 => {
                return Err(Error::Parse {
                    line,
                    reason: format!("fatalities must be non-negative, got {v}"),
                })
            }
            Ok(v) => v as u64,
            Err(_) => {
                return Err(Error::Parse {
                    line,
                    reason: format!("fatalities `{raw}` is not an integer"),
                })
            }
        };
        let covariates = cov_cols
            .iter()
            .map(|&c| {
                let s = field(c);
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                        line,
                        reason: format!("covariate `{}` value `{s}` is not a number", header[c]),
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(ObservationRow {
            unit_id,
            month_id,
            fatalities,
            covariates,
        });
    }
    PanelDataset::from_rows(schema, rows)
}

/// Writes the panel in the same CSV layout that [`load_panel`] reads.
/// Floats use shortest round-trip formatting, so reloading is lossless.
pub fn write_panel(panel: &PanelDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_panel_to(panel, file)
}

pub fn write_panel_to<W: Write>(panel: &PanelDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![UNIT.to_string(), MONTH.to_string(), FATALITIES.to_string()];
    header.extend(panel.schema().names().map(str::to_string));
    w.write_record(&header)?;
    let mut buf: Vec<String> = Vec::with_capacity(header.len());
    for row in panel.rows() {
        buf.clear();
        buf.push(row.unit_id);
        buf.push(row.month_id.to_string());
        buf.push(row.fatalities.to_string());
        buf.extend(
            row.covariates
                .iter()
                .map(|c| c.map(|v| v.to_string()).unwrap_or_default()),
        );
        w.write_record(&buf)?;
    }
    w.flush().map_err(|e| Error::io("<panel writer>", e))?;
    Ok(())
}
