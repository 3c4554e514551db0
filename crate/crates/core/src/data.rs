//! The survival tuple `(X, T, Δ)` plus an optional sensitive attribute.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Right-censored survival data.
///
/// Rows carry a stable identifier assigned at construction time; it follows
/// the row through every split, partition and recombination.
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    features: Array2<f64>,
    feature_names: Vec<String>,
    time: Vec<f64>,
    status: Vec<bool>,
    group: Option<Vec<String>>,
    ids: Vec<u64>,
}

impl SurvivalDataset {
    /// Builds a dataset, assigning row ids `0..n`.
    pub fn new(
        features: Array2<f64>,
        feature_names: Vec<String>,
        time: Vec<f64>,
        status: Vec<bool>,
        group: Option<Vec<String>>,
    ) -> Result<Self> {
        let ids = (0..time.len() as u64).collect();
        Self::with_ids(features, feature_names, time, status, group, ids)
    }

    pub fn with_ids(
        features: Array2<f64>,
        feature_names: Vec<String>,
        time: Vec<f64>,
        status: Vec<bool>,
        group: Option<Vec<String>>,
        ids: Vec<u64>,
    ) -> Result<Self> {
        let n = time.len();
        if n == 0 {
            return Err(Error::invalid("dataset must have at least one row"));
        }
        if features.nrows() != n || status.len() != n || ids.len() != n {
            return Err(Error::invalid(format!(
                "length mismatch: time {n}, status {}, features {}, ids {}",
                status.len(),
                features.nrows(),
                ids.len()
            )));
        }
        if let Some(g) = &group {
            if g.len() != n {
                return Err(Error::invalid(format!("group has {} rows, expected {n}", g.len())));
            }
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::invalid(format!(
                "{} feature names for {} feature columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if let Some((i, t)) = time.iter().enumerate().find(|(_, t)| !(t.is_finite() && **t > 0.0)) {
            return Err(Error::invalid(format!("time[{i}] = {t} is not a positive finite number")));
        }
        if let Some(((i, j), v)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("feature ({i}, {j}) = {v} is not finite")));
        }
        Ok(Self { features, feature_names, time, status, group, ids })
    }

    /// A zero-row dataset with the same columns. This is the only way to
    /// obtain `n == 0`; undersampling uses it for the deleted subset.
    pub fn empty_like(&self) -> Self {
        self.select(&[])
    }

    pub fn n(&self) -> usize {
        self.time.len()
    }

    pub fn p(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn feature_row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn time(&self) -> &[f64] {
        &self.time
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    pub fn group(&self) -> Option<&[String]> {
        self.group.as_deref()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn event_count(&self) -> usize {
        self.status.iter().filter(|&&d| d).count()
    }

    /// Sorted distinct group labels (empty when there is no group column).
    pub fn group_labels(&self) -> Vec<String> {
        self.group
            .iter()
            .flatten()
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Rows at `rows`, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            features: self.features.select(Axis(0), rows),
            feature_names: self.feature_names.clone(),
            time: rows.iter().map(|&i| self.time[i]).collect(),
            status: rows.iter().map(|&i| self.status[i]).collect(),
            group: self.group.as_ref().map(|g| rows.iter().map(|&i| g[i].clone()).collect()),
            ids: rows.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    /// Same rows with the covariate matrix replaced.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Self> {
        if features.dim() != self.features.dim() {
            return Err(Error::invalid(format!(
                "replacement features have shape {:?}, expected {:?}",
                features.dim(),
                self.features.dim()
            )));
        }
        Ok(Self { features, ..self.clone() })
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.p() != other.p() {
            return Err(Error::invalid("cannot concatenate datasets of different width"));
        }
        if self.group.is_some() != other.group.is_some() {
            return Err(Error::invalid("cannot concatenate datasets with and without groups"));
        }
        let features = ndarray::concatenate(Axis(0), &[self.features.view(), other.features.view()])
            .map_err(|e| Error::invalid(e.to_string()))?;
        let join = |a: &[f64], b: &[f64]| a.iter().chain(b).copied().collect::<Vec<_>>();
        Ok(Self {
            features,
            feature_names: self.feature_names.clone(),
            time: join(&self.time, &other.time),
            status: self.status.iter().chain(&other.status).copied().collect(),
            group: match (&self.group, &other.group) {
                (Some(a), Some(b)) => Some(a.iter().chain(b).cloned().collect()),
                _ => None,
            },
            ids: self.ids.iter().chain(&other.ids).copied().collect(),
        })
    }

    /// Bit-exact identity of a row's covariates and outcome (group and id
    /// excluded). Used to keep duplicate rows on the same side of a split.
    fn row_key(&self, i: usize) -> Vec<u64> {
        let mut key: Vec<u64> = self.features.row(i).iter().map(|v| v.to_bits()).collect();
        key.push(self.time[i].to_bits());
        key.push(self.status[i] as u64);
        key
    }
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Column names for the outcome and the sensitive attribute; every other
/// column is read as a numeric feature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub time_col: String,
    pub status_col: String,
    /// Read when present in the header; a missing group column yields a
    /// dataset without groups.
    pub group_col: Option<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time_col: "time".into(),
            status_col: "status".into(),
            group_col: Some("group".into()),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<SurvivalDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let mut seen = HashMap::new();
    for (j, h) in header.iter().enumerate() {
        if seen.insert(h.as_str(), j).is_some() {
            return Err(Error::Schema(format!("duplicate column `{h}`")));
        }
    }
    let find = |name: &str| seen.get(name).copied();
    let time_idx = find(&schema.time_col)
        .ok_or_else(|| Error::Schema(format!("missing time column `{}`", schema.time_col)))?;
    let status_idx = find(&schema.status_col)
        .ok_or_else(|| Error::Schema(format!("missing status column `{}`", schema.status_col)))?;
    if time_idx == status_idx {
        return Err(Error::Schema("time and status must be different columns".into()));
    }
    let group_idx = schema.group_col.as_deref().and_then(find);
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|&j| j != time_idx && j != status_idx && Some(j) != group_idx)
        .collect();
    let feature_names: Vec<String> = feature_idx.iter().map(|&j| header[j].clone()).collect();

    let mut time = Vec::new();
    let mut status = Vec::new();
    let mut group = group_idx.map(|_| Vec::new());
    let mut values = Vec::new();

    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |j: usize| record.get(j).unwrap_or("").trim();
        let number = |j: usize| -> Result<f64> {
            cell(j).parse::<f64>().map_err(|_| Error::Cell {
                row,
                column: header[j].clone(),
                message: format!("`{}` is not a number", cell(j)),
            })
        };

        let t = number(time_idx)?;
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Cell {
                row,
                column: header[time_idx].clone(),
                message: format!("time must be positive and finite, got {t}"),
            });
        }
        let s = number(status_idx)?;
        let d = if s == 1.0 {
            true
        } else if s == 0.0 {
            false
        } else {
            return Err(Error::Cell {
                row,
                column: header[status_idx].clone(),
                message: format!("status must be 0 or 1, got {}", cell(status_idx)),
            });
        };
        for &j in &feature_idx {
            let v = number(j)?;
            if !v.is_finite() {
                return Err(Error::Cell {
                    row,
                    column: header[j].clone(),
                    message: format!("feature value {v} is not finite"),
                });
            }
            values.push(v);
        }
        time.push(t);
        status.push(d);
        if let (Some(g), Some(j)) = (group.as_mut(), group_idx) {
            g.push(cell(j).to_string());
        }
    }

    if time.is_empty() {
        return Err(Error::invalid("csv has a header but no data rows"));
    }
    let features = Array2::from_shape_vec((time.len(), feature_idx.len()), values)
        .map_err(|e| Error::invalid(e.to_string()))?;
    SurvivalDataset::new(features, feature_names, time, status, group)
}

/// Writes `time,status[,group],features...` with shortest round-trip float
/// formatting, so `read_csv` reproduces the dataset exactly.
pub fn write_csv<W: Write>(ds: &SurvivalDataset, writer: W, schema: &CsvSchema) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let group_col = schema.group_col.as_deref().filter(|_| ds.group.is_some());
    let mut header = vec![schema.time_col.as_str(), schema.status_col.as_str()];
    header.extend(group_col);
    header.extend(ds.feature_names.iter().map(String::as_str));
    w.write_record(&header)?;

    for i in 0..ds.n() {
        let mut rec = vec![ds.time[i].to_string(), (ds.status[i] as u8).to_string()];
        if group_col.is_some() {
            rec.push(ds.group.as_ref().map(|g| g[i].clone()).unwrap_or_default());
        }
        rec.extend(ds.features.row(i).iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| Error::Io { path: "<csv writer>".into(), source })?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

/// Weibull proportional-scale generator settings.
///
/// Event times follow `Y = scale_i · E^{1/shape}` with `E ~ Exp(1)` and
/// `scale_i = baseline_scale · exp(x_i · effect_weights)`; features are
/// independent standard normals. Censoring times are exponential with a
/// rate chosen so that the realised censoring fraction matches
/// `target_censoring`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub p: usize,
    pub effect_weights: Vec<f64>,
    pub baseline_shape: f64,
    pub baseline_scale: f64,
    pub target_censoring: f64,
    pub group_count: usize,
}

impl SynthConfig {
    /// `n × p` data where every feature carries signal, decaying with the
    /// column index and alternating in sign.
    pub fn strong_signal(n: usize, p: usize) -> Self {
        let effect_weights = (0..p)
            .map(|j| {
                let mag = (1.0 - 0.2 * j as f64).max(0.2);
                if j % 2 == 0 { mag } else { -mag }
            })
            .collect();
        Self {
            n,
            p,
            effect_weights,
            baseline_shape: 1.5,
            baseline_scale: 10.0,
            target_censoring: 0.3,
            group_count: 2,
        }
    }

    /// Parses a flat `key = value` file. Keys not given fall back to
    /// [`SynthConfig::strong_signal`] for the given `n`/`p`.
    pub fn from_kv_str(s: &str) -> Result<Self> {
        let table: toml::Table = s.parse().map_err(|e: toml::de::Error| Error::invalid(e.to_string()))?;
        let get_usize = |k: &str| -> Result<Option<usize>> {
            table
                .get(k)
                .map(|v| {
                    v.as_integer()
                        .and_then(|i| usize::try_from(i).ok())
                        .ok_or_else(|| Error::invalid(format!("`{k}` must be a non-negative integer")))
                })
                .transpose()
        };
        let n = get_usize("n")?.unwrap_or(1000);
        let p = get_usize("p")?.unwrap_or(5);
        let mut merged = toml::Table::try_from(Self::strong_signal(n, p))
            .map_err(|e| Error::Serde(e.to_string()))?;
        for (k, v) in table {
            merged.insert(k, v);
        }
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| Error::invalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        if self.effect_weights.len() != self.p {
            return Err(Error::invalid(format!(
                "effect_weights has {} entries, expected p = {}",
                self.effect_weights.len(),
                self.p
            )));
        }
        if self.effect_weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("effect_weights must be finite"));
        }
        if !(self.baseline_shape > 0.0 && self.baseline_shape.is_finite()) {
            return Err(Error::invalid("baseline_shape must be positive"));
        }
        if !(self.baseline_scale > 0.0 && self.baseline_scale.is_finite()) {
            return Err(Error::invalid("baseline_scale must be positive"));
        }
        if !(0.0..1.0).contains(&self.target_censoring) {
            return Err(Error::invalid(format!(
                "target_censoring must lie in [0, 1), got {}",
                self.target_censoring
            )));
        }
        if self.group_count == 0 {
            return Err(Error::invalid("group_count must be at least 1"));
        }
        Ok(())
    }

    /// True risk score `-x · w` (higher means earlier events).
    pub fn true_risk(&self, features: ArrayView2<'_, f64>) -> Vec<f64> {
        features
            .rows()
            .into_iter()
            .map(|x| -x.iter().zip(&self.effect_weights).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}

pub fn generate_synthetic(config: &SynthConfig, seed: u64) -> Result<SurvivalDataset> {
    config.validate()?;
    let (n, p) = (config.n, config.p);
    let mut rng = seed::rng(seed);

    let values: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(&mut rng)).collect();
    let features = Array2::from_shape_vec((n, p), values).map_err(|e| Error::invalid(e.to_string()))?;

    let mut event = Vec::with_capacity(n);
    let mut unit_censor = Vec::with_capacity(n);
    let mut group = Vec::with_capacity(n);
    for i in 0..n {
        let lp: f64 = features.row(i).iter().zip(&config.effect_weights).map(|(x, w)| x * w).sum();
        let scale = config.baseline_scale * lp.exp();
        let u: f64 = Open01.sample(&mut rng);
        let v: f64 = Open01.sample(&mut rng);
        event.push(scale * (-u.ln()).powf(1.0 / config.baseline_shape));
        unit_censor.push(-v.ln());
        group.push(format!("g{}", rng.random_range(0..config.group_count)));
    }

    // C_i = E_i / rate, so observation i is censored iff E_i / Y_i < rate.
    // Place the rate between the m-th and (m+1)-th smallest ratio.
    let m = (config.target_censoring * n as f64).round() as usize;
    let rate = if m == 0 {
        0.0
    } else {
        let mut ratio: Vec<f64> = unit_censor.iter().zip(&event).map(|(e, y)| e / y).collect();
        ratio.sort_by(f64::total_cmp);
        if m >= n {
            ratio[n - 1] * 2.0
        } else {
            0.5 * (ratio[m - 1] + ratio[m])
        }
    };

    let mut time = Vec::with_capacity(n);
    let mut status = Vec::with_capacity(n);
    for i in 0..n {
        let c = if rate > 0.0 { unit_censor[i] / rate } else { f64::INFINITY };
        let d = event[i] <= c;
        time.push(if d { event[i] } else { c });
        status.push(d);
    }

    let names = (1..=p).map(|j| format!("x{j}")).collect();
    SurvivalDataset::new(features, names, time, status, Some(group))
}

// ---------------------------------------------------------------------------
// Splits and folds
// ---------------------------------------------------------------------------

pub(crate) fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed));
    idx
}

/// Chooses `count` of `n` rows uniformly without replacement. Both returned
/// index lists are in ascending order. For fixed `(n, seed)` the chosen sets
/// are nested in `count`.
pub(crate) fn random_subset(n: usize, count: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let perm = shuffled_indices(n, seed);
    let count = count.min(n);
    let mut first = perm[..count].to_vec();
    let mut rest = perm[count..].to_vec();
    first.sort_unstable();
    rest.sort_unstable();
    (first, rest)
}

/// Splits into a part of `round(fraction · n)` uniformly chosen rows and the
/// remainder. Row order within each part follows the input.
pub fn split_random(
    ds: &SurvivalDataset,
    fraction: f64,
    seed: u64,
) -> Result<(SurvivalDataset, SurvivalDataset)> {
    let n = ds.n();
    if n < 2 {
        return Err(Error::TooSmall(format!("cannot split {n} row(s)")));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let count = (fraction * n as f64).round() as usize;
    if count == 0 || count == n {
        return Err(Error::TooSmall(format!(
            "fraction {fraction} of {n} rows leaves an empty part"
        )));
    }
    let (a, b) = random_subset(n, count, seed);
    Ok((ds.select(&a), ds.select(&b)))
}

/// Fold label for every row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    k: usize,
    fold_index: Vec<usize>,
}

impl FoldAssignment {
    pub fn new(k: usize, fold_index: Vec<usize>) -> Result<Self> {
        let a = Self { k, fold_index };
        if a.sizes().contains(&0) {
            return Err(Error::invalid("every fold must contain at least one row"));
        }
        Ok(a)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn fold_index(&self) -> &[usize] {
        &self.fold_index
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_index {
            s[f] += 1;
        }
        s
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_index.len()).filter(|&i| self.fold_index[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_index.len()).filter(|&i| self.fold_index[i] != fold).collect()
    }
}

/// Balanced random fold assignment; fold sizes differ by at most one.
pub fn kfold_partition(ds: &SurvivalDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    check_folds(ds.n(), k)?;
    let mut fold_index = vec![0; ds.n()];
    for (pos, i) in shuffled_indices(ds.n(), seed).into_iter().enumerate() {
        fold_index[i] = pos % k;
    }
    FoldAssignment::new(k, fold_index)
}

/// Like [`kfold_partition`], but rows with bit-identical covariates and
/// outcome always share a fold, so no duplicate leaks across train/test.
/// Blocks of duplicates are dealt to the currently smallest fold.
pub fn kfold_partition_dedup(ds: &SurvivalDataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    check_folds(ds.n(), k)?;
    let mut blocks: Vec<Vec<usize>> = Vec::new();
    let mut by_key: HashMap<Vec<u64>, usize> = HashMap::new();
    for i in 0..ds.n() {
        let b = *by_key.entry(ds.row_key(i)).or_insert_with(|| {
            blocks.push(Vec::new());
            blocks.len() - 1
        });
        blocks[b].push(i);
    }
    if blocks.len() < k {
        return Err(Error::TooSmall(format!(
            "{} distinct rows cannot fill {k} folds",
            blocks.len()
        )));
    }
    let mut sizes = vec![0usize; k];
    let mut fold_index = vec![0; ds.n()];
    for b in shuffled_indices(blocks.len(), seed) {
        let f = (0..k).min_by_key(|&f| (sizes[f], f)).unwrap_or(0);
        for &i in &blocks[b] {
            fold_index[i] = f;
        }
        sizes[f] += blocks[b].len();
    }
    FoldAssignment::new(k, fold_index)
}

fn check_folds(n: usize, k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if n < k {
        return Err(Error::TooSmall(format!("{n} rows cannot fill {k} folds")));
    }
    Ok(())
}

pub fn subset_by_group(ds: &SurvivalDataset, label: &str) -> Result<SurvivalDataset> {
    let group = ds.group().ok_or(Error::MissingGroup)?;
    let rows: Vec<usize> = (0..ds.n()).filter(|&i| group[i] == label).collect();
    if rows.is_empty() {
        return Err(Error::UnknownGroup(label.to_string()));
    }
    Ok(ds.select(&rows))
}
