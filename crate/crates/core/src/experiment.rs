//! σ sweeps over datasets, and the statistics that decide whether a measure
//! tracks the injected bias.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::biasing::{BiasMethod, BiasRunner};
use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::metrics::Measure;
use crate::rsf::RsfParams;
use crate::{par, seed};

/// Significance level after Holm correction.
pub const ALPHA: f64 = 0.05;
/// A significant slope below this is flagged as too small to matter.
pub const MEANINGFUL_SLOPE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub dataset: String,
    pub method: BiasMethod,
    pub measure: Measure,
    pub sigma: f64,
    pub fl_mean: f64,
    pub fl_sd: f64,
    pub repetitions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub grid: Vec<f64>,
    pub measures: Vec<Measure>,
    pub learner: RsfParams,
    pub repetitions: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            grid: default_grid(),
            measures: Measure::ALL.to_vec(),
            learner: RsfParams::default(),
            repetitions: 10,
            folds: 3,
            seed: 0,
        }
    }
}

/// `{0.0, 0.1, ..., 0.9}`.
pub fn default_grid() -> Vec<f64> {
    (0..10).map(|i| i as f64 / 10.0).collect()
}

fn round_sigma(x: f64) -> f64 {
    (x * 1e10).round() / 1e10
}

/// Parses `lo:hi:step` (inclusive of `hi` up to rounding).
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::invalid(format!("grid must look like lo:hi:step, got `{text}`"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let v: Vec<f64> = parts.iter().map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
    let (lo, hi, step) = (v[0], v[1], v[2]);
    if !(step > 0.0) || hi < lo || lo < 0.0 || hi >= 1.0 {
        return Err(Error::invalid(format!("grid `{text}` must satisfy 0 <= lo <= hi < 1 and step > 0")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| round_sigma(lo + i as f64 * step)).collect())
}

/// A dataset that could not be swept.
#[derive(Debug)]
pub struct SweepFailure {
    pub dataset: String,
    pub method: BiasMethod,
    pub error: Error,
}

/// Sweeps every dataset and keeps going past failures.
pub fn sigma_sweep_partial(
    datasets: &[(String, SurvivalDataset)],
    methods: &[BiasMethod],
    config: &SweepConfig,
) -> Result<(SweepResult, Vec<SweepFailure>)> {
    if config.grid.is_empty() {
        return Err(Error::invalid("sigma grid is empty"));
    }
    if let Some(s) = config.grid.iter().find(|s| !(0.0..1.0).contains(*s)) {
        return Err(Error::invalid(format!("sigma {s} is outside [0, 1)")));
    }
    let cells: Vec<(usize, BiasMethod)> = (0..datasets.len())
        .flat_map(|d| methods.iter().map(move |&m| (d, m)))
        .collect();
    let outcomes = par::map_collect(cells, |(d, method)| {
        let (name, data) = &datasets[d];
        let run = || -> Result<Vec<SweepRow>> {
            let runner = BiasRunner::new(
                data,
                &config.measures,
                &config.learner,
                method,
                config.repetitions,
                config.folds,
                seed::derive(config.seed, &[d as u64]),
            )?;
            let mut rows = Vec::new();
            for &sigma in &config.grid {
                for (measure, g) in runner.run(sigma)? {
                    rows.push(SweepRow {
                        dataset: name.clone(),
                        method,
                        measure,
                        sigma,
                        fl_mean: g.mean,
                        fl_sd: g.sd,
                        repetitions: g.repetitions,
                    });
                }
            }
            Ok(rows)
        };
        run().map_err(|error| SweepFailure { dataset: name.clone(), method, error })
    });

    let mut result = SweepResult::default();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(rows) => result.rows.extend(rows),
            Err(f) => failures.push(f),
        }
    }
    Ok((result, failures))
}

/// Sweeps every dataset; the first failure aborts with the dataset named.
pub fn sigma_sweep(
    datasets: &[(String, SurvivalDataset)],
    method: BiasMethod,
    config: &SweepConfig,
) -> Result<SweepResult> {
    let (result, failures) = sigma_sweep_partial(datasets, &[method], config)?;
    match failures.into_iter().next() {
        None => Ok(result),
        Some(f) => Err(Error::invalid(format!("dataset `{}`: {}", f.dataset, f.error))),
    }
}

const SWEEP_HEADER: [&str; 7] = ["dataset", "method", "measure", "sigma", "fl_mean", "fl_sd", "repetitions"];

pub fn write_sweep_csv<W: Write>(sweep: &SweepResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_HEADER)?;
    for r in &sweep.rows {
        w.write_record([
            r.dataset.clone(),
            r.method.name().to_string(),
            r.measure.name().to_string(),
            r.sigma.to_string(),
            r.fl_mean.to_string(),
            r.fl_sd.to_string(),
            r.repetitions.to_string(),
        ])?;
    }
    w.flush().map_err(|source| Error::Io { path: "<csv writer>".into(), source })?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(reader: R) -> Result<SweepResult> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SWEEP_HEADER {
        return Err(Error::Schema(format!("line 1: expected header {}", SWEEP_HEADER.join(","))));
    }
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| Error::invalid(format!("line {line}: {e}")))?;
        if rec.len() != SWEEP_HEADER.len() {
            return Err(Error::invalid(format!(
                "line {line}: expected {} fields, found {}",
                SWEEP_HEADER.len(),
                rec.len()
            )));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::invalid(format!("line {line}: `{}` is not a valid {}", &rec[j], SWEEP_HEADER[j])))
        };
        let wrap = |e: Error| Error::invalid(format!("line {line}: {e}"));
        rows.push(SweepRow {
            dataset: rec[0].to_string(),
            method: rec[1].parse().map_err(wrap)?,
            measure: rec[2].parse().map_err(wrap)?,
            sigma: num(3)?,
            fl_mean: num(4)?,
            fl_sd: num(5)?,
            repetitions: rec[6]
                .parse()
                .map_err(|_| Error::invalid(format!("line {line}: bad repetitions `{}`", &rec[6])))?,
        });
    }
    Ok(SweepResult { rows })
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

fn two_sided_t(t: f64, df: f64) -> f64 {
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Mid-ranks (1-based), ties sharing their average rank.
fn mid_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    (sxx > 0.0 && syy > 0.0).then(|| (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rank correlation with a two-sided t-approximation p-value.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() {
        return Err(Error::invalid("spearman: sequences differ in length"));
    }
    if x.len() < 3 {
        return Err(Error::TooSmall(format!("spearman needs at least 3 points, got {}", x.len())));
    }
    let rho = pearson(&mid_ranks(x), &mid_ranks(y))
        .ok_or_else(|| Error::invalid("spearman: a sequence has zero variance"))?;
    let df = (x.len() - 2) as f64;
    let p = if 1.0 - rho.abs() < 1e-12 {
        0.0
    } else {
        two_sided_t(rho * (df / (1.0 - rho * rho)).sqrt(), df)
    };
    Ok((rho, p))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub alpha: f64,
    pub beta: f64,
    /// Two-sided p-value for `beta = 0`.
    pub p: f64,
}

/// Least squares `y = alpha + beta x` with a t-test on the slope.
pub fn ols_slope_test(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    if x.len() != y.len() {
        return Err(Error::invalid("regression: sequences differ in length"));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::TooSmall(format!("regression needs at least 3 points, got {n}")));
    }
    if x.iter().all(|&v| v == x[0]) {
        return Err(Error::invalid("regression: x is constant"));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Ok(OlsFit { alpha: y[0], beta: 0.0, p: 1.0 });
    }
    let nf = n as f64;
    let (mx, my) = (x.iter().sum::<f64>() / nf, y.iter().sum::<f64>() / nf);
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let beta = sxy / sxx;
    let alpha = my - beta * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - alpha - beta * a).powi(2)).sum();
    let se = (ssr / (nf - 2.0) / sxx).sqrt();
    let p = if se > 0.0 {
        two_sided_t(beta / se, nf - 2.0)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(OlsFit { alpha, beta, p })
}

/// Holm step-down adjusted p-values, in the input order.
pub fn holm_correct(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::invalid(format!("p-value {p} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (j, &i) in order.iter().enumerate() {
        running = running.max(((m - j) as f64 * p_values[i]).min(1.0));
        adjusted[i] = running;
    }
    Ok(adjusted)
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub measure: Measure,
    pub method: BiasMethod,
    pub alpha: f64,
    pub beta: f64,
    /// Spearman correlation of the per-σ grand means with σ; `None` when
    /// undefined (constant means).
    pub rho: Option<f64>,
    pub p_beta: f64,
    pub p_rho: Option<f64>,
    pub p_beta_holm: f64,
    pub p_rho_holm: Option<f64>,
    pub significant_beta: bool,
    pub significant_rho: bool,
    /// Significant slope below [`MEANINGFUL_SLOPE`].
    pub slope_too_small: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub method: BiasMethod,
    pub measure: Measure,
    pub sigma: f64,
    /// Mean over datasets of the per-dataset mean `F_L`.
    pub mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub stats: Vec<StatsRow>,
    pub means: Vec<MeanRow>,
}

fn sigma_key(s: f64) -> i64 {
    (s * 1e9).round() as i64
}

/// Per (method, measure): OLS of `F_L` on σ over all per-dataset rows and
/// Spearman ρ over the per-σ grand means. Holm correction runs separately
/// for slopes and correlations within each method.
pub fn build_report(sweep: &SweepResult) -> Result<Report> {
    let sigmas: BTreeSet<i64> = sweep.rows.iter().map(|r| sigma_key(r.sigma)).collect();
    if sigmas.len() < 3 {
        return Err(Error::TooSmall(format!(
            "insufficient sigma levels: need at least 3 distinct values, found {}",
            sigmas.len()
        )));
    }

    type Cell<'a> = BTreeMap<(String, i64), &'a SweepRow>;
    let mut cells: BTreeMap<(BiasMethod, Measure), Cell<'_>> = BTreeMap::new();
    for r in &sweep.rows {
        cells.entry((r.method, r.measure)).or_default().insert((r.dataset.clone(), sigma_key(r.sigma)), r);
    }

    struct Partial {
        method: BiasMethod,
        measure: Measure,
        fit: Option<OlsFit>,
        spear: Option<(f64, f64)>,
    }
    let mut partial = Vec::new();
    let mut means = Vec::new();
    for (&(method, measure), rows) in &cells {
        let (x, y): (Vec<f64>, Vec<f64>) = rows.values().map(|r| (r.sigma, r.fl_mean)).unzip();
        let mut by_sigma: BTreeMap<i64, (f64, Vec<f64>)> = BTreeMap::new();
        for r in rows.values() {
            by_sigma.entry(sigma_key(r.sigma)).or_insert((r.sigma, Vec::new())).1.push(r.fl_mean);
        }
        let (gx, gy): (Vec<f64>, Vec<f64>) = by_sigma
            .values()
            .map(|(s, v)| (*s, v.iter().sum::<f64>() / v.len() as f64))
            .unzip();
        for (s, m) in gx.iter().zip(&gy) {
            means.push(MeanRow { method, measure, sigma: *s, mean: *m });
        }
        partial.push(Partial {
            method,
            measure,
            fit: ols_slope_test(&x, &y).ok(),
            spear: spearman_rho(&gx, &gy).ok(),
        });
    }

    let mut stats = Vec::new();
    let methods: BTreeSet<BiasMethod> = partial.iter().map(|p| p.method).collect();
    for method in methods {
        let fam: Vec<&Partial> = partial.iter().filter(|p| p.method == method).collect();
        let holm_of = |ps: Vec<Option<f64>>| -> Result<Vec<Option<f64>>> {
            let defined: Vec<f64> = ps.iter().flatten().copied().collect();
            let mut adj = holm_correct(&defined)?.into_iter();
            Ok(ps.into_iter().map(|p| p.and_then(|_| adj.next())).collect())
        };
        let beta_adj = holm_of(fam.iter().map(|p| p.fit.map(|f| f.p)).collect())?;
        let rho_adj = holm_of(fam.iter().map(|p| p.spear.map(|s| s.1)).collect())?;
        for (k, p) in fam.iter().enumerate() {
            let fit = p.fit.unwrap_or(OlsFit { alpha: f64::NAN, beta: f64::NAN, p: 1.0 });
            let p_beta_holm = beta_adj[k].unwrap_or(1.0);
            let significant_beta = p.fit.is_some() && p_beta_holm < ALPHA;
            stats.push(StatsRow {
                measure: p.measure,
                method,
                alpha: fit.alpha,
                beta: fit.beta,
                rho: p.spear.map(|s| s.0),
                p_beta: fit.p,
                p_rho: p.spear.map(|s| s.1),
                p_beta_holm,
                p_rho_holm: rho_adj[k],
                significant_beta,
                significant_rho: rho_adj[k].is_some_and(|q| q < ALPHA),
                slope_too_small: significant_beta && fit.beta < MEANINGFUL_SLOPE,
            });
        }
    }
    Ok(Report { stats, means })
}

impl Report {
    pub fn row(&self, method: BiasMethod, measure: Measure) -> Option<&StatsRow> {
        self.stats.iter().find(|r| r.method == method && r.measure == measure)
    }

    /// Per-σ grand means of one (method, measure), ordered by σ.
    pub fn means_of(&self, method: BiasMethod, measure: Measure) -> Vec<(f64, f64)> {
        self.means
            .iter()
            .filter(|r| r.method == method && r.measure == measure)
            .map(|r| (r.sigma, r.mean))
            .collect()
    }

    /// Regression/correlation table followed by per-σ mean tables.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let star = |b: bool| if b { "*" } else { " " };
        let _ = writeln!(out, "F_L = alpha + beta * sigma; rho = Spearman(sigma, mean F_L)");
        let _ = writeln!(out, "* Holm-adjusted p < {ALPHA}; ! significant slope below {MEANINGFUL_SLOPE}");
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<14} {:<9} {:>9} {:>10} {:>8}", "method", "measure", "alpha", "beta", "rho");
        for r in &self.stats {
            let rho = match r.rho {
                Some(v) => format!("{v:.3}{}", star(r.significant_rho)),
                None => "NA ".to_string(),
            };
            let _ = writeln!(
                out,
                "{:<14} {:<9} {:>9.3} {:>9.3}{}{} {:>8}",
                r.method.name(),
                r.measure.name(),
                r.alpha,
                r.beta,
                star(r.significant_beta),
                if r.slope_too_small { "!" } else { " " },
                rho
            );
        }

        let methods: BTreeSet<BiasMethod> = self.means.iter().map(|r| r.method).collect();
        for method in methods {
            let sigmas: BTreeSet<i64> =
                self.means.iter().filter(|r| r.method == method).map(|r| sigma_key(r.sigma)).collect();
            let _ = writeln!(out);
            let _ = writeln!(out, "Mean F_L over datasets, {method} (columns: sigma)");
            let _ = write!(out, "{:<9}", "measure");
            for s in &sigmas {
                let _ = write!(out, " {:>7}", format!("{}", *s as f64 / 1e9));
            }
            let _ = writeln!(out);
            let measures: BTreeSet<Measure> =
                self.means.iter().filter(|r| r.method == method).map(|r| r.measure).collect();
            for m in measures {
                let _ = write!(out, "{:<9}", m.name());
                let row: BTreeMap<i64, f64> = self
                    .means
                    .iter()
                    .filter(|r| r.method == method && r.measure == m)
                    .map(|r| (sigma_key(r.sigma), r.mean))
                    .collect();
                for s in &sigmas {
                    match row.get(s) {
                        Some(v) => {
                            let _ = write!(out, " {v:>7.3}");
                        }
                        None => {
                            let _ = write!(out, " {:>7}", "NA");
                        }
                    }
                }
                let _ = writeln!(out);
            }
        }
        out
    }

    /// One JSON object per statistics row.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.stats {
            out.push_str(&serde_json::to_string(r).map_err(|e| Error::Serde(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }
}
