//! Model inputs: standardized thematic principal components plus a
//! decayed fatality-history column.

use std::collections::BTreeMap;
use std::ops::Range;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{CovariateSchema, PanelDataset};
use crate::stats;

pub const DEFAULT_HALF_LIFE: f64 = 12.0;
pub const DECAY_COLUMN: &str = "decay";

/// A thematic covariate group and how many components to keep from it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureGroupSpec {
    pub name: String,
    pub columns: Vec<String>,
    pub n_components: usize,
}

impl FeatureGroupSpec {
    /// Default component count for the standard thematic groups.
    pub fn default_components(group: &str) -> usize {
        match group {
            "vdem" | "violence_history" | "wdi" | "neighborhood" => 2,
            _ => 1,
        }
    }

    /// One spec per group tag in `schema`, in order of first appearance.
    pub fn from_schema(schema: &CovariateSchema) -> Vec<FeatureGroupSpec> {
        let mut out: Vec<FeatureGroupSpec> = Vec::new();
        for c in &schema.columns {
            match out.iter_mut().find(|g| g.name == c.group) {
                Some(g) => g.columns.push(c.name.clone()),
                None => out.push(FeatureGroupSpec {
                    name: c.group.clone(),
                    columns: vec![c.name.clone()],
                    n_components: Self::default_components(&c.group),
                }),
            }
        }
        for g in &mut out {
            g.n_components = g.n_components.min(g.columns.len());
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.n_components == 0 || self.n_components > self.columns.len() {
            return Err(Error::invalid(
                format!("features.groups.{}.n_components", self.name),
                format!(
                    "must lie in 1..={} (group size), got {}",
                    self.columns.len(),
                    self.n_components
                ),
            ));
        }
        Ok(())
    }
}

/// Schema implied by a list of group specs.
pub fn schema_from_groups(groups: &[FeatureGroupSpec]) -> CovariateSchema {
    CovariateSchema::new(
        groups
            .iter()
            .flat_map(|g| {
                g.columns.iter().map(|c| crate::panel::CovariateSpec {
                    name: c.clone(),
                    group: g.name.clone(),
                })
            })
            .collect(),
    )
}

/// Per-column imputation and z-scoring parameters, fit on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizerParams {
    pub columns: Vec<String>,
    /// Training median of observed values.
    pub impute: Vec<f64>,
    /// Mean after median imputation.
    pub mean: Vec<f64>,
    /// Sample SD after imputation; 1 for constant columns.
    pub sd: Vec<f64>,
    pub constant: Vec<bool>,
}

impl StandardizerParams {
    pub fn standardize(&self, j: usize, value: Option<f64>) -> f64 {
        (value.unwrap_or(self.impute[j]) - self.mean[j]) / self.sd[j]
    }

    /// Maps panel covariate positions onto fitted columns.
    fn column_map(&self, schema: &CovariateSchema) -> Result<Vec<usize>> {
        if let Some(extra) = schema.names().find(|n| !self.columns.iter().any(|c| c == n)) {
            return Err(Error::UnknownCovariate(extra.to_string()));
        }
        self.columns
            .iter()
            .map(|c| {
                schema
                    .position(c)
                    .ok_or_else(|| Error::MissingColumn(c.clone()))
            })
            .collect()
    }
}

pub fn fit_standardizer(train: &PanelDataset) -> Result<StandardizerParams> {
    if train.is_empty() {
        return Err(Error::Data("cannot fit a standardizer on an empty panel".into()));
    }
    let schema = train.schema();
    let mut params = StandardizerParams {
        columns: schema.names().map(str::to_string).collect(),
        impute: Vec::new(),
        mean: Vec::new(),
        sd: Vec::new(),
        constant: Vec::new(),
    };
    for j in 0..schema.len() {
        let values: Vec<Option<f64>> = train
            .units()
            .values()
            .flat_map(|s| s.covariates.iter().map(move |r| r[j]))
            .collect();
        let observed: Vec<f64> = values.iter().flatten().copied().collect();
        if observed.is_empty() {
            return Err(Error::Data(format!(
                "covariate `{}` is missing in every training row",
                params.columns[j]
            )));
        }
        let impute = stats::median(&observed);
        let filled: Vec<f64> = values.iter().map(|v| v.unwrap_or(impute)).collect();
        let mean = stats::mean(&filled);
        let n = filled.len();
        let var = if n > 1 {
            filled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let sd = var.sqrt();
        let constant = !(sd > 1e-12 * mean.abs().max(1.0));
        params.impute.push(impute);
        params.mean.push(mean);
        params.sd.push(if constant { 1.0 } else { sd });
        params.constant.push(constant);
    }
    Ok(params)
}

/// Principal components of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPca {
    pub name: String,
    /// Positions of member columns in the standardizer column order.
    pub members: Vec<usize>,
    /// Row-major `members x components` loading matrix.
    pub loadings: Vec<f64>,
    pub n_components: usize,
    pub eigenvalues: Vec<f64>,
    pub explained_share: Vec<f64>,
}

impl GroupPca {
    pub fn loading(&self, member: usize, component: usize) -> f64 {
        self.loadings[member * self.n_components + component]
    }

    fn project(&self, z: &[f64], out: &mut Vec<f64>) {
        for k in 0..self.n_components {
            out.push(
                self.members
                    .iter()
                    .enumerate()
                    .map(|(i, &m)| z[m] * self.loading(i, k))
                    .sum(),
            );
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub groups: Vec<GroupPca>,
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.groups.iter().map(|g| g.n_components).sum()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.groups
            .iter()
            .flat_map(|g| (1..=g.n_components).map(move |k| format!("{}_pc{k}", g.name)))
            .collect()
    }
}

/// Fits one PCA per group on standardized training rows.
///
/// `columns` names the columns of `rows`. Eigenvectors are signed so that
/// their largest-magnitude entry is positive (first such entry on ties).
pub fn pca_fit(rows: &[Vec<f64>], columns: &[String], specs: &[FeatureGroupSpec]) -> Result<PcaModel> {
    if rows.len() < 2 {
        return Err(Error::Data("PCA needs at least two training rows".into()));
    }
    let mut groups = Vec::with_capacity(specs.len());
    for spec in specs {
        spec.validate()?;
        let members = spec
            .columns
            .iter()
            .map(|c| {
                columns
                    .iter()
                    .position(|n| n == c)
                    .ok_or_else(|| Error::UnknownCovariate(c.clone()))
            })
            .collect::<Result<Vec<usize>>>()?;
        let p = members.len();
        let n = rows.len();
        let means: Vec<f64> = members
            .iter()
            .map(|&m| rows.iter().map(|r| r[m]).sum::<f64>() / n as f64)
            .collect();
        let mut cov = DMatrix::<f64>::zeros(p, p);
        for r in rows {
            for a in 0..p {
                let da = r[members[a]] - means[a];
                for b in a..p {
                    cov[(a, b)] += da * (r[members[b]] - means[b]);
                }
            }
        }
        for a in 0..p {
            for b in a..p {
                let v = cov[(a, b)] / (n - 1) as f64;
                cov[(a, b)] = v;
                cov[(b, a)] = v;
            }
        }
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let total: f64 = values.iter().sum();
        let top = values.first().copied().unwrap_or(0.0);
        let rank = values.iter().filter(|&&v| v > 1e-10 * top.max(f64::MIN_POSITIVE)).count();
        if spec.n_components > rank {
            return Err(Error::Model(format!(
                "group `{}` has rank {rank} but {} components were requested",
                spec.name, spec.n_components
            )));
        }
        let k = spec.n_components;
        let mut loadings = vec![0.0; p * k];
        for (c, &i) in order.iter().take(k).enumerate() {
            let v = eig.eigenvectors.column(i);
            let mut pivot = 0;
            for j in 1..p {
                if v[j].abs() > v[pivot].abs() {
                    pivot = j;
                }
            }
            let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..p {
                loadings[j * k + c] = sign * v[j];
            }
        }
        groups.push(GroupPca {
            name: spec.name.clone(),
            members,
            loadings,
            n_components: k,
            eigenvalues: values[..k].to_vec(),
            explained_share: values[..k].iter().map(|v| v / total).collect(),
        });
    }
    Ok(PcaModel { groups })
}

/// Dense feature rows keyed by (unit, month).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub columns: Vec<String>,
    pub keys: Vec<(String, i64)>,
    values: Vec<f64>,
    unit_rows: BTreeMap<String, Range<usize>>,
}

impl FeatureMatrix {
    fn new(columns: Vec<String>) -> Self {
        Self {
            columns,
            keys: Vec::new(),
            values: Vec::new(),
            unit_rows: BTreeMap::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.keys.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.row(i)[j]).collect()
    }

    /// Row range of one unit; rows are in month order.
    pub fn unit_rows(&self, unit: &str) -> Option<Range<usize>> {
        self.unit_rows.get(unit).cloned()
    }

    pub fn find(&self, unit: &str, month: i64) -> Option<usize> {
        let r = self.unit_rows.get(unit)?;
        let keys = &self.keys[r.clone()];
        keys.binary_search_by_key(&month, |k| k.1).ok().map(|i| r.start + i)
    }

    fn push_row(&mut self, unit: &str, month: i64, row: &[f64]) {
        debug_assert_eq!(row.len(), self.n_cols());
        let i = self.keys.len();
        self.keys.push((unit.to_string(), month));
        self.values.extend_from_slice(row);
        self.unit_rows
            .entry(unit.to_string())
            .and_modify(|r| r.end = i + 1)
            .or_insert(i..i + 1);
    }
}

/// Imputes, standardizes and projects every panel row onto the fitted components.
pub fn pca_transform(
    params: &StandardizerParams,
    model: &PcaModel,
    panel: &PanelDataset,
) -> Result<FeatureMatrix> {
    let map = params.column_map(panel.schema())?;
    let mut fm = FeatureMatrix::new(model.column_names());
    let mut z = vec![0.0; params.columns.len()];
    let mut out = Vec::with_capacity(fm.n_cols());
    for (unit, s) in panel.units() {
        for (i, cov) in s.covariates.iter().enumerate() {
            for (j, &src) in map.iter().enumerate() {
                z[j] = params.standardize(j, cov[src]);
            }
            out.clear();
            for g in &model.groups {
                g.project(&z, &mut out);
            }
            fm.push_row(unit, s.months[i], &out);
        }
    }
    Ok(fm)
}

/// Per-month multiplier for a given half-life.
pub fn decay_factor(half_life: f64) -> f64 {
    2f64.powf(-1.0 / half_life)
}

/// Exponentially decayed cumulative history, `d(t) = d(t-1) * 2^(-1/h) + f(t)`.
pub fn decay_feature(fatalities: &[u64], half_life: f64) -> Vec<f64> {
    let rho = decay_factor(half_life);
    let mut acc = 0.0;
    fatalities
        .iter()
        .map(|&f| {
            acc = acc * rho + f as f64;
            acc
        })
        .collect()
}

/// As [`decay_feature`], but decaying across month gaps by the elapsed months.
pub fn decay_series(months: &[i64], fatalities: &[u64], half_life: f64) -> Vec<f64> {
    let rho = decay_factor(half_life);
    let mut acc = 0.0;
    let mut prev: Option<i64> = None;
    months
        .iter()
        .zip(fatalities)
        .map(|(&m, &f)| {
            if let Some(p) = prev {
                let gap = m - p;
                acc *= if gap == 1 { rho } else { 2f64.powf(-(gap as f64) / half_life) };
            }
            prev = Some(m);
            acc += f as f64;
            acc
        })
        .collect()
}

/// Everything needed to turn panel rows into model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub groups: Vec<FeatureGroupSpec>,
    pub standardizer: StandardizerParams,
    pub pca: PcaModel,
    pub half_life: f64,
}

impl FeaturePipeline {
    pub fn fit(train: &PanelDataset, groups: &[FeatureGroupSpec], half_life: f64) -> Result<Self> {
        if !(half_life > 0.0) {
            return Err(Error::invalid("features.half_life", "must be positive"));
        }
        let standardizer = fit_standardizer(train)?;
        let rows: Vec<Vec<f64>> = train
            .units()
            .values()
            .flat_map(|s| s.covariates.iter())
            .map(|cov| {
                cov.iter()
                    .enumerate()
                    .map(|(j, v)| standardizer.standardize(j, *v))
                    .collect()
            })
            .collect();
        let pca = pca_fit(&rows, &standardizer.columns, groups)?;
        Ok(Self {
            groups: groups.to_vec(),
            standardizer,
            pca,
            half_life,
        })
    }

    pub fn n_features(&self) -> usize {
        self.pca.n_components() + 1
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut c = self.pca.column_names();
        c.push(DECAY_COLUMN.to_string());
        c
    }

    /// Position of the decay column, always last.
    pub fn decay_index(&self) -> usize {
        self.pca.n_components()
    }

    pub fn transform(&self, panel: &PanelDataset) -> Result<FeatureMatrix> {
        build_feature_matrix(panel, &self.standardizer, &self.pca, self.half_life)
    }
}

/// Group components (in group order) followed by the decay column.
pub fn build_feature_matrix(
    panel: &PanelDataset,
    params: &StandardizerParams,
    pca: &PcaModel,
    half_life: f64,
) -> Result<FeatureMatrix> {
    let pcs = pca_transform(params, pca, panel)?;
    let mut columns = pcs.columns.clone();
    columns.push(DECAY_COLUMN.to_string());
    let mut fm = FeatureMatrix::new(columns);
    let mut row = Vec::with_capacity(fm.n_cols());
    let mut i = 0;
    for (unit, s) in panel.units() {
        let decay = decay_series(&s.months, &s.fatalities, half_life);
        for (t, d) in decay.iter().enumerate() {
            row.clear();
            row.extend_from_slice(pcs.row(i));
            row.push(*d);
            fm.push_row(unit, s.months[t], &row);
            i += 1;
        }
    }
    Ok(fm)
}
