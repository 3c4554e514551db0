//! Kaplan–Meier and Nelson–Aalen step curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which one-sided limit to take when evaluating a step function at a jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Value just before `t`.
    Left,
    /// Value at `t` (right-continuous).
    Right,
}

// Step-function helpers shared with the prediction matrices. `times` are
// strictly increasing jump locations and `values[j]` holds on
// [times[j], times[j+1]); before the first jump the function equals `init`.

pub(crate) fn step_at(times: &[f64], values: &[f64], t: f64, init: f64) -> f64 {
    match times.partition_point(|&x| x <= t) {
        0 => init,
        j => values[j - 1],
    }
}

pub(crate) fn step_before(times: &[f64], values: &[f64], t: f64, init: f64) -> f64 {
    match times.partition_point(|&x| x < t) {
        0 => init,
        j => values[j - 1],
    }
}

/// Interval density of a step survival curve: the drop at `times[j]` is
/// spread uniformly over `(times[j-1], times[j]]` (with `times[-1] = 0` and
/// `S = 1` there). Zero beyond the last jump.
pub(crate) fn step_density(times: &[f64], survival: &[f64], t: f64) -> f64 {
    let j = times.partition_point(|&x| x < t);
    if j == times.len() {
        return 0.0;
    }
    let (prev_t, prev_s) = if j == 0 { (0.0, 1.0) } else { (times[j - 1], survival[j - 1]) };
    let width = times[j] - prev_t;
    if width <= 0.0 {
        return 0.0;
    }
    ((prev_s - survival[j]) / width).max(0.0)
}

/// Right-continuous survival step function with its cumulative hazard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    times: Vec<f64>,
    survival: Vec<f64>,
    cumhaz: Vec<f64>,
}

impl SurvivalCurve {
    pub fn new(times: Vec<f64>, survival: Vec<f64>, cumhaz: Vec<f64>) -> Result<Self> {
        if times.len() != survival.len() || times.len() != cumhaz.len() {
            return Err(Error::invalid("curve arrays must have equal length"));
        }
        if times.iter().any(|t| !(t.is_finite() && *t > 0.0)) || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("curve times must be positive and strictly increasing"));
        }
        let mut prev = 1.0;
        for &s in &survival {
            if !(0.0..=prev).contains(&s) {
                return Err(Error::invalid("survival must be non-increasing within [0, 1]"));
            }
            prev = s;
        }
        let mut prev = 0.0;
        for &h in &cumhaz {
            if !(h >= prev) {
                return Err(Error::invalid("cumulative hazard must be non-decreasing and non-negative"));
            }
            prev = h;
        }
        Ok(Self { times, survival, cumhaz })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn survival(&self) -> &[f64] {
        &self.survival
    }

    pub fn cumhaz(&self) -> &[f64] {
        &self.cumhaz
    }

    pub fn survival_at(&self, t: f64) -> f64 {
        step_at(&self.times, &self.survival, t, 1.0)
    }

    pub fn survival_before(&self, t: f64) -> f64 {
        step_before(&self.times, &self.survival, t, 1.0)
    }

    pub fn cumhaz_at(&self, t: f64) -> f64 {
        step_at(&self.times, &self.cumhaz, t, 0.0)
    }

    pub fn failure_at(&self, t: f64) -> f64 {
        1.0 - self.survival_at(t)
    }

    pub fn density_at(&self, t: f64) -> f64 {
        step_density(&self.times, &self.survival, t)
    }
}

/// Evaluates the survival curve at `t ≥ 0` from the requested side.
pub fn curve_eval(curve: &SurvivalCurve, t: f64, side: Side) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::invalid(format!("cannot evaluate a curve at t = {t}")));
    }
    Ok(match side {
        Side::Left => curve.survival_before(t),
        Side::Right => curve.survival_at(t),
    })
}

/// Product-limit estimate of the event-time survival function, with the
/// Nelson–Aalen cumulative hazard at the same jumps.
pub fn fit_km(time: &[f64], status: &[bool]) -> Result<SurvivalCurve> {
    product_limit(time, status, true)
}

/// Kaplan–Meier estimate `Ĝ` of the censoring distribution, i.e. the
/// product-limit estimator on `(T, 1 - Δ)`.
pub fn fit_censoring_km(time: &[f64], status: &[bool]) -> Result<SurvivalCurve> {
    product_limit(time, status, false)
}

fn product_limit(time: &[f64], status: &[bool], target: bool) -> Result<SurvivalCurve> {
    if time.is_empty() {
        return Err(Error::invalid("cannot fit a Kaplan-Meier curve to zero observations"));
    }
    if time.len() != status.len() {
        return Err(Error::invalid("time and status lengths differ"));
    }
    if let Some(t) = time.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(Error::invalid(format!("time {t} is not positive and finite")));
    }
    let mut order: Vec<usize> = (0..time.len()).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));

    let (mut times, mut survival, mut cumhaz) = (Vec::new(), Vec::new(), Vec::new());
    let (mut s, mut h) = (1.0, 0.0);
    let mut at_risk = time.len();
    let mut i = 0;
    while i < order.len() {
        let t = time[order[i]];
        let (mut hits, mut others) = (0usize, 0usize);
        while i < order.len() && time[order[i]] == t {
            if status[order[i]] == target {
                hits += 1;
            } else {
                others += 1;
            }
            i += 1;
        }
        if hits > 0 {
            let q = hits as f64 / at_risk as f64;
            s *= 1.0 - q;
            h += q;
            times.push(t);
            survival.push(s);
            cumhaz.push(h);
        }
        at_risk -= hits + others;
    }
    Ok(SurvivalCurve { times, survival, cumhaz })
}
