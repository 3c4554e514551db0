//! Group fairness: the same loss evaluated on two groups, and their gap.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{kfold_partition_dedup, split_random, SurvivalDataset};
use crate::error::{Error, Result};
use crate::km::fit_km;
use crate::metrics::{CensoringWeights, Evaluation, Measure};
use crate::rsf::{fit_rsf, predict, DistributionPrediction, RiskPrediction, RsfModel, RsfParams};
use crate::seed;

/// `F_L = |L_A - L_D|`.
pub fn fairness_gap(loss_a: f64, loss_b: f64) -> Result<f64> {
    if !loss_a.is_finite() || !loss_b.is_finite() {
        return Err(Error::invalid(format!("fairness gap of non-finite losses ({loss_a}, {loss_b})")));
    }
    Ok((loss_a - loss_b).abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessResult {
    pub measure: Measure,
    pub advantaged: String,
    pub disadvantaged: String,
    pub loss_advantaged: f64,
    pub loss_disadvantaged: f64,
    pub gap: f64,
    pub n_advantaged: usize,
    pub n_disadvantaged: usize,
}

/// Outcome of one requested measure; a failing measure does not stop the
/// others.
pub type MeasureAudit = (Measure, Result<FairnessResult>);

/// Evaluates each measure separately on the two groups of `test`.
///
/// Scoring rules are ERV-standardised per group against `baseline`
/// restricted to that group's rows. Labels are taken in sorted order; the
/// first is reported as advantaged (the gap is symmetric).
pub fn audit_groups(
    dist: &DistributionPrediction,
    risk: &RiskPrediction,
    test: &SurvivalDataset,
    measures: &[Measure],
    weights: &CensoringWeights,
    baseline: &DistributionPrediction,
) -> Result<Vec<MeasureAudit>> {
    if measures.is_empty() {
        return Err(Error::invalid("no measures requested"));
    }
    let group = test.group().ok_or(Error::MissingGroup)?;
    let labels = test.group_labels();
    if labels.len() != 2 {
        return Err(Error::GroupCount { column: "group".into(), found: labels.len() });
    }
    let n = test.n();
    if dist.n_rows() != n || risk.len() != n || baseline.n_rows() != n {
        return Err(Error::invalid("predictions and test set have different row counts"));
    }

    struct Part {
        label: String,
        dist: DistributionPrediction,
        risk: RiskPrediction,
        baseline: DistributionPrediction,
        time: Vec<f64>,
        status: Vec<bool>,
    }
    let parts: Vec<Part> = labels
        .iter()
        .map(|label| {
            let rows: Vec<usize> = (0..n).filter(|&i| &group[i] == label).collect();
            Part {
                label: label.clone(),
                dist: dist.select_rows(&rows),
                risk: risk.select_rows(&rows),
                baseline: baseline.select_rows(&rows),
                time: rows.iter().map(|&i| test.time()[i]).collect(),
                status: rows.iter().map(|&i| test.status()[i]).collect(),
            }
        })
        .collect();
    let eval = |p: &Part, m: Measure| {
        Evaluation {
            dist: &p.dist,
            risk: &p.risk,
            time: &p.time,
            status: &p.status,
            weights,
            baseline: &p.baseline,
        }
        .standardized(m)
    };

    Ok(measures
        .iter()
        .map(|&m| {
            let result = (|| {
                let (a, d) = (&parts[0], &parts[1]);
                let la = eval(a, m)?;
                let ld = eval(d, m)?;
                Ok(FairnessResult {
                    measure: m,
                    advantaged: a.label.clone(),
                    disadvantaged: d.label.clone(),
                    loss_advantaged: la,
                    loss_disadvantaged: ld,
                    gap: fairness_gap(la, ld)?,
                    n_advantaged: a.time.len(),
                    n_disadvantaged: d.time.len(),
                })
            })();
            (m, result)
        })
        .collect())
}

/// Averages per-fold audits: group losses are averaged over the folds where
/// the measure succeeded, the gap is recomputed from the averages, and group
/// sizes are summed.
pub fn pool_folds(folds: &[Vec<MeasureAudit>]) -> Vec<MeasureAudit> {
    let Some(first) = folds.first() else { return Vec::new() };
    first
        .iter()
        .enumerate()
        .map(|(k, (m, _))| {
            let ok: Vec<&FairnessResult> = folds.iter().filter_map(|f| f[k].1.as_ref().ok()).collect();
            let result = match ok.first() {
                None => Err(folds
                    .iter()
                    .find_map(|f| f[k].1.as_ref().err())
                    .map(|e| Error::invalid(e.to_string()))
                    .unwrap_or_else(|| Error::invalid("measure failed in every fold"))),
                Some(head) => {
                    let c = ok.len() as f64;
                    let la = ok.iter().map(|r| r.loss_advantaged).sum::<f64>() / c;
                    let ld = ok.iter().map(|r| r.loss_disadvantaged).sum::<f64>() / c;
                    fairness_gap(la, ld).map(|gap| FairnessResult {
                        measure: *m,
                        advantaged: head.advantaged.clone(),
                        disadvantaged: head.disadvantaged.clone(),
                        loss_advantaged: la,
                        loss_disadvantaged: ld,
                        gap,
                        n_advantaged: ok.iter().map(|r| r.n_advantaged).sum(),
                        n_disadvantaged: ok.iter().map(|r| r.n_disadvantaged).sum(),
                    })
                }
            };
            (*m, result)
        })
        .collect()
}

/// How a dataset is split into training and evaluation rows for an audit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuditProtocol {
    /// One random split; `test_fraction` of the rows are held out.
    Holdout { test_fraction: f64 },
    /// `k`-fold cross-validation; exact duplicate rows share a fold.
    KFold { k: usize },
}

/// Fits a forest on training rows and audits held-out rows. The censoring
/// weights and the Kaplan–Meier baseline are fit on the training rows too.
pub fn audit_split(
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    measures: &[Measure],
    learner: &RsfParams,
) -> Result<(RsfModel, Vec<MeasureAudit>)> {
    let model = fit_rsf(train, learner)?;
    let (dist, risk) = predict(&model, test.features())?;
    let weights = CensoringWeights::fit(train.time(), train.status())?;
    let baseline = DistributionPrediction::from_curve(&fit_km(train.time(), train.status())?, test.n());
    let audits = audit_groups(&dist, &risk, test, measures, &weights, &baseline)?;
    Ok((model, audits))
}

/// Audits a whole dataset under `protocol`. Returns the forest of the
/// holdout split (none for k-fold) and one result per measure.
pub fn audit_dataset(
    data: &SurvivalDataset,
    measures: &[Measure],
    learner: &RsfParams,
    protocol: AuditProtocol,
    seed: u64,
) -> Result<(Option<RsfModel>, Vec<MeasureAudit>)> {
    let labels = data.group_labels();
    if data.group().is_none() {
        return Err(Error::MissingGroup);
    }
    if labels.len() != 2 {
        return Err(Error::GroupCount { column: "group".into(), found: labels.len() });
    }
    match protocol {
        AuditProtocol::Holdout { test_fraction } => {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(Error::invalid(format!("test fraction must lie in (0, 1), got {test_fraction}")));
            }
            let (train, test) = split_random(data, 1.0 - test_fraction, seed::derive(seed, &[1]))?;
            let (model, audits) = audit_split(&train, &test, measures, &learner.with_seed(seed::derive(seed, &[2])))?;
            Ok((Some(model), audits))
        }
        AuditProtocol::KFold { k } => {
            let folds = kfold_partition_dedup(data, k, seed::derive(seed, &[1]))?;
            let per_fold = (0..k)
                .map(|f| {
                    let train = data.select(&folds.train_rows(f));
                    let test = data.select(&folds.test_rows(f));
                    let learner = learner.with_seed(seed::derive(seed, &[2, f as u64]));
                    audit_split(&train, &test, measures, &learner).map(|(_, a)| a)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((None, pool_folds(&per_fold)))
        }
    }
}

/// CSV rows `measure,L_A,L_D,F_L,n_A,n_D`; failed measures are written
/// with `NA` values.
pub fn write_fairness_csv<W: Write>(rows: &[MeasureAudit], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["measure", "L_A", "L_D", "F_L", "n_A", "n_D"])?;
    for (m, r) in rows {
        match r {
            Ok(r) => w.write_record([
                m.name().to_string(),
                r.loss_advantaged.to_string(),
                r.loss_disadvantaged.to_string(),
                r.gap.to_string(),
                r.n_advantaged.to_string(),
                r.n_disadvantaged.to_string(),
            ])?,
            Err(_) => w.write_record([m.name(), "NA", "NA", "NA", "NA", "NA"])?,
        }
    }
    w.flush().map_err(|source| Error::Io { path: "<csv writer>".into(), source })?;
    Ok(())
}
