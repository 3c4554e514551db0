//! Survival evaluation measures.
//!
//! Scoring rules (`rsbs`, `risl`, `snl`, `rcll`) are losses, lower is
//! better, and are usually reported ERV-standardised against a Kaplan–Meier
//! baseline via [`erv`]. Concordance (`charrell`, `cuno`) and calibration
//! (`cala`, `cald`) are reported raw.
//!
//! Conventions:
//! * IPCW weights use `Ĝ(T-)`, the censoring survival just before `T`,
//!   floored at [`IPCW_FLOOR`] before inversion.
//! * Probabilities inside logarithms are floored at [`PROB_FLOOR`].
//! * Time integrals use the midpoint rule on an [`IntegrationGrid`], by
//!   default `{0} ∪ {distinct observed times}`, up to the largest time.
//! * Densities of step curves follow [`crate::km::SurvivalCurve::density_at`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::km::{fit_censoring_km, SurvivalCurve};
use crate::rsf::{DistributionPrediction, RiskPrediction};

pub const PROB_FLOOR: f64 = 1e-15;
pub const IPCW_FLOOR: f64 = 1e-3;
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Rsbs,
    Risl,
    Snl,
    Rcll,
    #[serde(rename = "charrell")]
    CHarrell,
    #[serde(rename = "cuno")]
    CUno,
    #[serde(rename = "cala")]
    CalA,
    #[serde(rename = "cald")]
    CalD,
}

impl Measure {
    pub const ALL: [Measure; 8] = [
        Measure::Rsbs,
        Measure::Risl,
        Measure::Snl,
        Measure::Rcll,
        Measure::CHarrell,
        Measure::CUno,
        Measure::CalA,
        Measure::CalD,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Rsbs => "rsbs",
            Measure::Risl => "risl",
            Measure::Snl => "snl",
            Measure::Rcll => "rcll",
            Measure::CHarrell => "charrell",
            Measure::CUno => "cuno",
            Measure::CalA => "cala",
            Measure::CalD => "cald",
        }
    }

    /// Scoring rules are ERV-standardised before entering a fairness gap.
    pub fn is_scoring_rule(self) -> bool {
        matches!(self, Measure::Rsbs | Measure::Risl | Measure::Snl | Measure::Rcll)
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == lower)
            .ok_or_else(|| Error::UnknownMeasure(s.trim().to_string()))
    }
}

/// Parses measure names (case-insensitive), rejecting unknown names and
/// dropping duplicates while keeping the first-seen order.
pub fn parse_measures<S: AsRef<str>>(names: &[S]) -> Result<Vec<Measure>> {
    let mut out: Vec<Measure> = Vec::new();
    for n in names {
        let m: Measure = n.as_ref().parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no measures requested"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub measure: Measure,
    pub value: f64,
    /// Observations contributing to the value (events for IPCW scoring
    /// rules, comparable pairs for concordance).
    pub n_effective: usize,
}

/// Kaplan–Meier estimate of the censoring distribution, used for IPCW.
#[derive(Debug, Clone, PartialEq)]
pub struct CensoringWeights {
    curve: SurvivalCurve,
    floor: f64,
}

impl CensoringWeights {
    pub fn new(curve: SurvivalCurve, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor < 1.0) {
            return Err(Error::invalid(format!("IPCW floor must lie in (0, 1), got {floor}")));
        }
        Ok(Self { curve, floor })
    }

    pub fn fit(time: &[f64], status: &[bool]) -> Result<Self> {
        Self::new(fit_censoring_km(time, status)?, IPCW_FLOOR)
    }

    /// `Ĝ ≡ 1`: no reweighting.
    pub fn uniform() -> Self {
        Self {
            curve: SurvivalCurve::new(Vec::new(), Vec::new(), Vec::new()).expect("empty curve is valid"),
            floor: IPCW_FLOOR,
        }
    }

    pub fn curve(&self) -> &SurvivalCurve {
        &self.curve
    }

    /// Floored `Ĝ(t-)`.
    pub fn g_before(&self, t: f64) -> f64 {
        self.curve.survival_before(t).max(self.floor)
    }

    pub fn weight(&self, t: f64) -> f64 {
        1.0 / self.g_before(t)
    }
}

/// Points for midpoint-rule integration over `[points[0], points[last]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationGrid {
    points: Vec<f64>,
}

impl IntegrationGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("integration grid needs at least two points"));
        }
        if points.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("integration grid must be non-negative and strictly increasing"));
        }
        Ok(Self { points })
    }

    /// `{0} ∪ distinct times`, ending at the largest observed time.
    pub fn from_times(time: &[f64]) -> Result<Self> {
        let mut pts: Vec<f64> = std::iter::once(0.0).chain(time.iter().copied()).collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        Self::new(pts)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// `(midpoint, width)` for every interval.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.points.windows(2).map(|w| (0.5 * (w[0] + w[1]), w[1] - w[0]))
    }
}

fn check_dist(pred: &DistributionPrediction, time: &[f64], status: &[bool]) -> Result<()> {
    if time.is_empty() {
        return Err(Error::invalid("no observations to evaluate"));
    }
    if time.len() != status.len() || time.len() != pred.n_rows() {
        return Err(Error::invalid(format!(
            "length mismatch: {} predictions, {} times, {} statuses",
            pred.n_rows(),
            time.len(),
            status.len()
        )));
    }
    Ok(())
}

fn check_ipcw(pred: &DistributionPrediction, time: &[f64], status: &[bool]) -> Result<usize> {
    check_dist(pred, time, status)?;
    if pred.time_grid().is_empty() {
        return Err(Error::invalid("prediction has an empty time grid"));
    }
    let events = status.iter().filter(|&&d| d).count();
    if events == 0 {
        return Err(Error::NoEvents("IPCW scoring rules average over uncensored observations"));
    }
    Ok(events)
}

fn mean_over_events(
    measure: Measure,
    time: &[f64],
    status: &[bool],
    events: usize,
    mut per_event: impl FnMut(usize) -> f64,
) -> MetricValue {
    let total: f64 = (0..time.len()).filter(|&i| status[i]).map(&mut per_event).sum();
    MetricValue { measure, value: total / time.len() as f64, n_effective: events }
}

/// Reweighted survival Brier score (IPCW integrated squared error).
pub fn rsbs(
    pred: &DistributionPrediction,
    time: &[f64],
    status: &[bool],
    weights: &CensoringWeights,
    grid: &IntegrationGrid,
) -> Result<MetricValue> {
    let events = check_ipcw(pred, time, status)?;
    Ok(mean_over_events(Measure::Rsbs, time, status, events, |i| {
        let t = time[i];
        let integral: f64 = grid
            .cells()
            .map(|(mid, w)| {
                let observed = if t <= mid { 1.0 } else { 0.0 };
                let f = 1.0 - pred.survival_at(i, mid);
                w * (observed - f).powi(2)
            })
            .sum();
        integral * weights.weight(t)
    }))
}

/// Reweighted integrated survival log loss.
pub fn risl(
    pred: &DistributionPrediction,
    time: &[f64],
    status: &[bool],
    weights: &CensoringWeights,
    grid: &IntegrationGrid,
) -> Result<MetricValue> {
    let events = check_ipcw(pred, time, status)?;
    Ok(mean_over_events(Measure::Risl, time, status, events, |i| {
        let t = time[i];
        let integral: f64 = grid
            .cells()
            .map(|(mid, w)| {
                let s = pred.survival_at(i, mid);
                let p = if t <= mid { 1.0 - s } else { s };
                -w * p.max(PROB_FLOOR).ln()
            })
            .sum();
        integral * weights.weight(t)
    }))
}

/// IPCW survival negative log-likelihood.
pub fn snl(
    pred: &DistributionPrediction,
    time: &[f64],
    status: &[bool],
    weights: &CensoringWeights,
) -> Result<MetricValue> {
    let events = check_ipcw(pred, time, status)?;
    Ok(mean_over_events(Measure::Snl, time, status, events, |i| {
        -pred.density_at(i, time[i]).max(PROB_FLOOR).ln() * weights.weight(time[i])
    }))
}

/// Right-censored log-likelihood: density for events, survival for
/// censored observations. Averaged over all observations.
pub fn rcll(pred: &DistributionPrediction, time: &[f64], status: &[bool]) -> Result<MetricValue> {
    check_dist(pred, time, status)?;
    let total: f64 = (0..time.len())
        .map(|i| {
            let lik = if status[i] { pred.density_at(i, time[i]) } else { pred.survival_at(i, time[i]) };
            -lik.max(PROB_FLOOR).ln()
        })
        .sum();
    Ok(MetricValue { measure: Measure::Rcll, value: total / time.len() as f64, n_effective: time.len() })
}

fn check_risk(risk: &RiskPrediction, time: &[f64], status: &[bool]) -> Result<()> {
    if time.len() != status.len() || time.len() != risk.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} risks, {} times, {} statuses",
            risk.len(),
            time.len(),
            status.len()
        )));
    }
    Ok(())
}

/// Weighted concordance over pairs `T_i < T_j`, `Δ_i = 1`, `T_i < tau`;
/// tied risks score one half.
fn concordance(
    measure: Measure,
    risk: &[f64],
    time: &[f64],
    status: &[bool],
    tau: f64,
    weight: impl Fn(usize) -> f64,
) -> Result<MetricValue> {
    let (mut num, mut den) = (0.0, 0.0);
    let mut pairs = 0usize;
    for i in 0..time.len() {
        if !status[i] || time[i] >= tau {
            continue;
        }
        let w = weight(i);
        for j in 0..time.len() {
            if time[i] < time[j] {
                pairs += 1;
                den += w;
                if risk[i] > risk[j] {
                    num += w;
                } else if risk[i] == risk[j] {
                    num += 0.5 * w;
                }
            }
        }
    }
    if pairs == 0 || den <= 0.0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(MetricValue { measure, value: num / den, n_effective: pairs })
}

/// Harrell's C.
pub fn harrell_c(risk: &RiskPrediction, time: &[f64], status: &[bool]) -> Result<MetricValue> {
    check_risk(risk, time, status)?;
    concordance(Measure::CHarrell, risk.risk(), time, status, f64::INFINITY, |_| 1.0)
}

/// Uno's C with weights `Ĝ(T_i-)^-2` and cutoff `tau`.
pub fn uno_c(
    risk: &RiskPrediction,
    time: &[f64],
    status: &[bool],
    weights: &CensoringWeights,
    tau: f64,
) -> Result<MetricValue> {
    check_risk(risk, time, status)?;
    if !(tau > 0.0) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    concordance(Measure::CUno, risk.risk(), time, status, tau, |i| weights.weight(time[i]).powi(2))
}

/// Largest event time, the default cutoff for [`uno_c`].
pub fn default_tau(time: &[f64], status: &[bool]) -> Option<f64> {
    time.iter().zip(status).filter(|x| *x.1).map(|x| *x.0).reduce(f64::max)
}

/// van Houwelingen's alpha: observed over expected event count.
pub fn cal_alpha(pred: &DistributionPrediction, time: &[f64], status: &[bool]) -> Result<MetricValue> {
    check_dist(pred, time, status)?;
    let events = status.iter().filter(|&&d| d).count() as f64;
    let expected: f64 = (0..time.len())
        .map(|i| -pred.survival_at(i, time[i]).max(PROB_FLOOR).ln())
        .sum();
    if expected <= 0.0 {
        return Err(Error::ZeroDenominator("calibration alpha (no predicted hazard at observed times)"));
    }
    Ok(MetricValue { measure: Measure::CalA, value: events / expected, n_effective: time.len() })
}

/// Bin masses for D-calibration. An event adds 1 to the bin holding `s`;
/// a censored observation spreads 1 uniformly over `[0, s]`.
pub(crate) fn dcal_counts(s: &[f64], status: &[bool], bins: usize) -> Vec<f64> {
    let b = bins as f64;
    let mut counts = vec![0.0; bins];
    for (&si, &d) in s.iter().zip(status) {
        let si = si.clamp(0.0, 1.0);
        if d || si == 0.0 {
            counts[((si * b) as usize).min(bins - 1)] += 1.0;
        } else {
            for (k, c) in counts.iter_mut().enumerate() {
                let (lo, hi) = (k as f64 / b, (k + 1) as f64 / b);
                let overlap = (si.min(hi) - lo).max(0.0);
                *c += overlap / si;
            }
        }
    }
    counts
}

/// D-calibration chi-square statistic of `S_i(T_i)` against uniformity.
pub fn cal_d(pred: &DistributionPrediction, time: &[f64], status: &[bool], bins: usize) -> Result<MetricValue> {
    check_dist(pred, time, status)?;
    if bins < 2 {
        return Err(Error::invalid("D-calibration needs at least 2 bins"));
    }
    let n = time.len();
    if n < bins {
        return Err(Error::TooSmall(format!("D-calibration with {bins} bins needs at least {bins} observations, got {n}")));
    }
    let s: Vec<f64> = (0..n).map(|i| pred.survival_at(i, time[i])).collect();
    Ok(MetricValue { measure: Measure::CalD, value: dcal_statistic(&s, status, bins), n_effective: n })
}

pub(crate) fn dcal_statistic(s: &[f64], status: &[bool], bins: usize) -> f64 {
    let expected = s.len() as f64 / bins as f64;
    dcal_counts(s, status, bins).iter().map(|o| (o - expected).powi(2) / expected).sum()
}

/// Explained residual variation `1 - model / baseline`.
pub fn erv(model_loss: f64, baseline_loss: f64) -> Result<f64> {
    if baseline_loss == 0.0 || !baseline_loss.is_finite() {
        return Err(Error::ZeroDenominator("ERV (baseline loss is zero)"));
    }
    Ok(1.0 - model_loss / baseline_loss)
}

/// Everything needed to evaluate any measure on one evaluation set.
#[derive(Debug, Clone, Copy)]
pub struct Evaluation<'a> {
    pub dist: &'a DistributionPrediction,
    pub risk: &'a RiskPrediction,
    pub time: &'a [f64],
    pub status: &'a [bool],
    pub weights: &'a CensoringWeights,
    /// Kaplan–Meier baseline prediction for the same rows.
    pub baseline: &'a DistributionPrediction,
}

impl Evaluation<'_> {
    fn scoring_rule(&self, m: Measure, pred: &DistributionPrediction) -> Result<f64> {
        Ok(match m {
            Measure::Rsbs => rsbs(pred, self.time, self.status, self.weights, &IntegrationGrid::from_times(self.time)?)?,
            Measure::Risl => risl(pred, self.time, self.status, self.weights, &IntegrationGrid::from_times(self.time)?)?,
            Measure::Snl => snl(pred, self.time, self.status, self.weights)?,
            Measure::Rcll => rcll(pred, self.time, self.status)?,
            _ => unreachable!("not a scoring rule"),
        }
        .value)
    }

    /// Raw measure value with default settings.
    pub fn raw(&self, m: Measure) -> Result<f64> {
        match m {
            _ if m.is_scoring_rule() => self.scoring_rule(m, self.dist),
            Measure::CHarrell => Ok(harrell_c(self.risk, self.time, self.status)?.value),
            Measure::CUno => {
                let tau = default_tau(self.time, self.status).ok_or(Error::NoComparablePairs)?;
                Ok(uno_c(self.risk, self.time, self.status, self.weights, tau)?.value)
            }
            Measure::CalA => Ok(cal_alpha(self.dist, self.time, self.status)?.value),
            Measure::CalD => Ok(cal_d(self.dist, self.time, self.status, DEFAULT_BINS)?.value),
            _ => unreachable!(),
        }
    }

    /// ERV against the baseline for scoring rules, raw value otherwise.
    pub fn standardized(&self, m: Measure) -> Result<f64> {
        if m.is_scoring_rule() {
            let model = self.scoring_rule(m, self.dist)?;
            let base = self.scoring_rule(m, self.baseline)?;
            erv(model, base)
        } else {
            self.raw(m)
        }
    }
}
