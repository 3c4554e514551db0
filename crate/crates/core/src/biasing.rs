//! Bias injection and the repeated split / cross-validation procedure that
//! turns a bias proportion `σ` into a fairness gap.
//!
//! One repetition:
//! 1. split `D` into halves `D_B` (to be biased, `⌊n/2⌋` rows) and `D_U`;
//! 2. pick `round(σ·|D_B|)` rows of `D_B` as `D_BD`;
//! 3. bias `D_BD` (permute its covariates, or delete it);
//! 4. cross-validate a fresh forest per fold on `D_B` and on `D_U`;
//! 5. `F_L = |L_B - L_U|` per measure.
//!
//! `F_L` is averaged over repetitions. A repetition whose folds are
//! degenerate (no events, no comparable pairs, ...) is redrawn with a new
//! derived seed, at most [`MAX_REDRAWS`] times.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data::{kfold_partition, random_subset, shuffled_indices, SurvivalDataset};
use crate::error::{Error, Result};
use crate::km::fit_km;
use crate::metrics::{CensoringWeights, Evaluation, Measure};
use crate::rsf::{fit_rsf, predict, DistributionPrediction, RsfParams};
use crate::{par, seed};

pub const MAX_REDRAWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasMethod {
    /// Shuffle covariate rows among the biased observations, keeping their
    /// outcomes in place.
    Permutation,
    /// Delete the biased observations.
    Undersampling,
}

impl BiasMethod {
    pub fn name(self) -> &'static str {
        match self {
            BiasMethod::Permutation => "permutation",
            BiasMethod::Undersampling => "undersampling",
        }
    }
}

impl fmt::Display for BiasMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BiasMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "permutation" => Ok(BiasMethod::Permutation),
            "undersampling" => Ok(BiasMethod::Undersampling),
            other => Err(Error::invalid(format!("unknown bias method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRunConfig {
    /// Proportion of the biased half to bias, in `[0, 1)`.
    pub sigma: f64,
    pub repetitions: usize,
    pub folds: usize,
    pub seed: u64,
}

impl Default for BiasRunConfig {
    fn default() -> Self {
        Self { sigma: 0.0, repetitions: 10, folds: 3, seed: 0 }
    }
}

impl BiasRunConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.sigma) {
            return Err(Error::invalid(format!("sigma must lie in [0, 1), got {}", self.sigma)));
        }
        if self.repetitions == 0 {
            return Err(Error::invalid("repetitions must be at least 1"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("folds must be at least 2"));
        }
        Ok(())
    }
}

/// Covariate rows shuffled by a uniform random permutation; outcomes stay.
pub fn apply_permutation(ds: &SurvivalDataset, seed: u64) -> Result<SurvivalDataset> {
    if ds.n() < 2 {
        return Err(Error::TooSmall(format!("cannot permute {} row(s)", ds.n())));
    }
    let perm = shuffled_indices(ds.n(), seed);
    ds.with_features(ds.features().select(ndarray::Axis(0), &perm))
}

/// Deletes every row.
pub fn apply_undersampling(ds: &SurvivalDataset) -> SurvivalDataset {
    ds.empty_like()
}

/// Mean and spread of `F_L` over repetitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub mean: f64,
    /// Sample standard deviation (0 for a single repetition).
    pub sd: f64,
    pub repetitions: usize,
}

impl GapSummary {
    fn from_values(v: &[f64]) -> Self {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, repetitions: v.len() }
    }
}

// Seed path tags.
const TAG_SPLIT: u64 = 1;
const TAG_SUBSET: u64 = 2;
const TAG_PERMUTE: u64 = 3;
const TAG_BIASED: u64 = 4;
const TAG_UNTOUCHED: u64 = 5;
const TAG_FOLDS: u64 = 6;
const TAG_FIT: u64 = 7;

/// Untouched-half losses per measure, or the reason they failed.
type CachedLosses = std::result::Result<Vec<f64>, String>;

/// Runs the bias procedure on one dataset for any number of `σ` values.
///
/// Seeds depend on `(seed, repetition, attempt)` but not on `σ`, so every
/// `σ` sees the same halves, nested biased subsets and forest seeds. The
/// untouched half is therefore shared across `σ` and its losses are cached.
pub struct BiasRunner<'a> {
    data: &'a SurvivalDataset,
    measures: Vec<Measure>,
    learner: RsfParams,
    method: BiasMethod,
    repetitions: usize,
    folds: usize,
    seed: u64,
    untouched: Mutex<HashMap<(usize, usize), CachedLosses>>,
}

impl<'a> BiasRunner<'a> {
    pub fn new(
        data: &'a SurvivalDataset,
        measures: &[Measure],
        learner: &RsfParams,
        method: BiasMethod,
        repetitions: usize,
        folds: usize,
        seed: u64,
    ) -> Result<Self> {
        BiasRunConfig { sigma: 0.0, repetitions, folds, seed }.validate()?;
        if measures.is_empty() {
            return Err(Error::invalid("no measures requested"));
        }
        if data.n() < 4 * folds {
            return Err(Error::TooSmall(format!(
                "{} rows; the bias procedure needs at least {} for {folds}-fold CV on both halves",
                data.n(),
                4 * folds
            )));
        }
        Ok(Self {
            data,
            measures: measures.to_vec(),
            learner: learner.clone(),
            method,
            repetitions,
            folds,
            seed,
            untouched: Mutex::new(HashMap::new()),
        })
    }

    pub fn measures(&self) -> &[Measure] {
        &self.measures
    }

    /// `F_L` summary per measure at proportion `sigma`.
    pub fn run(&self, sigma: f64) -> Result<BTreeMap<Measure, GapSummary>> {
        if !(0.0..1.0).contains(&sigma) {
            return Err(Error::invalid(format!("sigma must lie in [0, 1), got {sigma}")));
        }
        let per_rep = par::map_collect((0..self.repetitions).collect(), |rep| self.repetition(rep, sigma));
        let per_rep: Vec<Vec<f64>> = per_rep.into_iter().collect::<Result<_>>()?;
        Ok(self
            .measures
            .iter()
            .enumerate()
            .map(|(k, &m)| {
                let v: Vec<f64> = per_rep.iter().map(|r| r[k]).collect();
                (m, GapSummary::from_values(&v))
            })
            .collect())
    }

    fn repetition(&self, rep: usize, sigma: f64) -> Result<Vec<f64>> {
        let mut last = None;
        for attempt in 0..=MAX_REDRAWS {
            match self.attempt(rep, attempt, sigma) {
                Ok(v) => return Ok(v),
                Err(e) => last = Some(e),
            }
        }
        Err(Error::Degenerate {
            attempts: MAX_REDRAWS + 1,
            last: Box::new(last.expect("at least one attempt ran")),
        })
    }

    fn attempt(&self, rep: usize, attempt: usize, sigma: f64) -> Result<Vec<f64>> {
        let s = seed::derive(self.seed, &[rep as u64, attempt as u64]);
        let n = self.data.n();
        let (b_rows, u_rows) = random_subset(n, n / 2, seed::derive(s, &[TAG_SPLIT]));
        let untouched = self.data.select(&u_rows);
        let biased = self.biased_half(&self.data.select(&b_rows), sigma, s)?;

        let lb = self.cv_losses(&biased, seed::derive(s, &[TAG_BIASED]))?;
        let lu = self.untouched_losses(&untouched, rep, attempt, seed::derive(s, &[TAG_UNTOUCHED]))?;
        Ok(lb.iter().zip(&lu).map(|(b, u)| (b - u).abs()).collect())
    }

    /// `D_B` after biasing `round(σ·|D_B|)` of its rows, in original row order.
    fn biased_half(&self, half: &SurvivalDataset, sigma: f64, s: u64) -> Result<SurvivalDataset> {
        let count = (sigma * half.n() as f64).round() as usize;
        let (bd, ba) = random_subset(half.n(), count, seed::derive(s, &[TAG_SUBSET]));
        match self.method {
            BiasMethod::Undersampling => Ok(half.select(&ba)),
            BiasMethod::Permutation if bd.len() < 2 => Ok(half.clone()),
            BiasMethod::Permutation => {
                let shuffled = apply_permutation(&half.select(&bd), seed::derive(s, &[TAG_PERMUTE]))?;
                let mut x = half.features().to_owned();
                for (k, &row) in bd.iter().enumerate() {
                    x.row_mut(row).assign(&shuffled.feature_row(k));
                }
                half.with_features(x)
            }
        }
    }

    fn untouched_losses(&self, half: &SurvivalDataset, rep: usize, attempt: usize, s: u64) -> Result<Vec<f64>> {
        let key = (rep, attempt);
        if let Some(hit) = self.untouched.lock().expect("cache lock").get(&key) {
            return hit.clone().map_err(Error::InvalidInput);
        }
        let res = self.cv_losses(half, s);
        let stored = res.as_ref().map(Clone::clone).map_err(|e| e.to_string());
        self.untouched.lock().expect("cache lock").insert(key, stored);
        res
    }

    /// Mean over folds of each measure, ERV-standardised for scoring rules.
    fn cv_losses(&self, ds: &SurvivalDataset, s: u64) -> Result<Vec<f64>> {
        if ds.n() < self.folds {
            return Err(Error::TooSmall(format!("{} rows for {}-fold CV", ds.n(), self.folds)));
        }
        let folds = kfold_partition(ds, self.folds, seed::derive(s, &[TAG_FOLDS]))?;
        let mut sums = vec![0.0; self.measures.len()];
        for f in 0..self.folds {
            let train = ds.select(&folds.train_rows(f));
            let test = ds.select(&folds.test_rows(f));
            let losses = evaluate_fold(
                &train,
                &test,
                &self.measures,
                &self.learner.with_seed(seed::derive(s, &[TAG_FIT, f as u64])),
            )?;
            for (acc, l) in sums.iter_mut().zip(losses) {
                *acc += l;
            }
        }
        Ok(sums.into_iter().map(|v| v / self.folds as f64).collect())
    }
}

/// Fits a forest on `train` and evaluates `measures` on `test`, with IPCW
/// weights and the Kaplan–Meier baseline both estimated on `train`.
pub fn evaluate_fold(
    train: &SurvivalDataset,
    test: &SurvivalDataset,
    measures: &[Measure],
    learner: &RsfParams,
) -> Result<Vec<f64>> {
    if train.event_count() == 0 {
        return Err(Error::NoEvents("training fold"));
    }
    if test.event_count() == 0 {
        return Err(Error::NoEvents("test fold"));
    }
    let model = fit_rsf(train, learner)?;
    let (dist, risk) = predict(&model, test.features())?;
    let weights = CensoringWeights::fit(train.time(), train.status())?;
    let baseline = DistributionPrediction::from_curve(&fit_km(train.time(), train.status())?, test.n());
    let eval = Evaluation {
        dist: &dist,
        risk: &risk,
        time: test.time(),
        status: test.status(),
        weights: &weights,
        baseline: &baseline,
    };
    measures
        .iter()
        .map(|&m| {
            let v = eval.standardized(m)?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::invalid(format!("{m} is not finite on this fold")))
            }
        })
        .collect()
}

/// One `σ` on one dataset.
pub fn run_bias_algorithm(
    data: &SurvivalDataset,
    measures: &[Measure],
    learner: &RsfParams,
    method: BiasMethod,
    config: &BiasRunConfig,
) -> Result<BTreeMap<Measure, GapSummary>> {
    config.validate()?;
    BiasRunner::new(data, measures, learner, method, config.repetitions, config.folds, config.seed)?.run(config.sigma)
}
