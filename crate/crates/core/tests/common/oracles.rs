//! Brute-force reference implementations used as test oracles. They share no
//! code with the library: every step function is evaluated by a linear scan
//! and every sum is an explicit loop.
#![allow(dead_code)]

/// Kaplan–Meier survival at `t` by direct product over distinct event times.
pub fn km_at(time: &[f64], status: &[bool], t: f64) -> f64 {
    let mut events: Vec<f64> = time.iter().zip(status).filter(|(_, &d)| d).map(|(&x, _)| x).collect();
    events.sort_by(|a, b| a.partial_cmp(b).unwrap());
    events.dedup();
    let mut s = 1.0;
    for &u in events.iter().filter(|&&u| u <= t) {
        let at_risk = time.iter().filter(|&&x| x >= u).count() as f64;
        let d = time.iter().zip(status).filter(|(&x, &e)| e && x == u).count() as f64;
        s *= 1.0 - d / at_risk;
    }
    s
}

/// Harrell's C over unordered pairs.
pub fn harrell_brute(risk: &[f64], time: &[f64], status: &[bool]) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for a in 0..time.len() {
        for b in a + 1..time.len() {
            let (i, j) = if time[a] < time[b] {
                (a, b)
            } else if time[b] < time[a] {
                (b, a)
            } else {
                continue;
            };
            if !status[i] {
                continue;
            }
            den += 1.0;
            if risk[i] > risk[j] {
                num += 1.0;
            } else if risk[i] == risk[j] {
                num += 0.5;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Uno's C with `g_before(t)` giving the left limit of the censoring
/// survival curve, floored at `floor`.
pub fn uno_brute(
    risk: &[f64],
    time: &[f64],
    status: &[bool],
    tau: f64,
    floor: f64,
    g_before: impl Fn(f64) -> f64,
) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..time.len() {
        for j in 0..time.len() {
            if i == j || !status[i] || !(time[i] < time[j]) || !(time[i] < tau) {
                continue;
            }
            let w = 1.0 / g_before(time[i]).max(floor).powi(2);
            den += w;
            if risk[i] > risk[j] {
                num += w;
            } else if risk[i] == risk[j] {
                num += 0.5 * w;
            }
        }
    }
    (den > 0.0).then(|| num / den)
}

/// Left limit of the Kaplan–Meier curve of the censoring times.
pub fn censoring_km_before(time: &[f64], status: &[bool], t: f64) -> f64 {
    let mut cens: Vec<f64> = time.iter().zip(status).filter(|(_, &d)| !d).map(|(&x, _)| x).collect();
    cens.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cens.dedup();
    let mut g = 1.0;
    for &u in cens.iter().filter(|&&u| u < t) {
        let at_risk = time.iter().filter(|&&x| x >= u).count() as f64;
        let c = time.iter().zip(status).filter(|(&x, &d)| !d && x == u).count() as f64;
        g *= 1.0 - c / at_risk;
    }
    g
}

/// Right-continuous step value: the last `values[j]` with `grid[j] <= t`.
pub fn step(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let mut v = 1.0;
    for (g, s) in grid.iter().zip(values) {
        if *g <= t {
            v = *s;
        }
    }
    v
}

/// Interval density: the drop at a jump spread over the preceding interval.
pub fn density(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let (mut prev_t, mut prev_s) = (0.0, 1.0);
    for (g, s) in grid.iter().zip(values) {
        if t <= *g {
            return ((prev_s - s) / (g - prev_t)).max(0.0);
        }
        prev_t = *g;
        prev_s = *s;
    }
    0.0
}

/// Integration points: 0 and every distinct observed time, ascending.
pub fn integration_points(time: &[f64]) -> Vec<f64> {
    let mut pts = vec![0.0];
    for &t in time {
        if !pts.contains(&t) {
            pts.push(t);
        }
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts
}

/// Integrated score with unit censoring weights: for each event, the sum
/// over grid cells of `width * loss(observed, S(mid))`, then the mean over
/// all observations.
fn integrated(
    grid: &[f64],
    surv: &[Vec<f64>],
    time: &[f64],
    status: &[bool],
    loss: impl Fn(bool, f64) -> f64,
) -> f64 {
    let pts = integration_points(time);
    let mut total = 0.0;
    for i in 0..time.len() {
        if !status[i] {
            continue;
        }
        for k in 1..pts.len() {
            let mid = 0.5 * (pts[k - 1] + pts[k]);
            let width = pts[k] - pts[k - 1];
            total += width * loss(time[i] <= mid, step(grid, &surv[i], mid));
        }
    }
    total / time.len() as f64
}

pub fn rsbs_unweighted(grid: &[f64], surv: &[Vec<f64>], time: &[f64], status: &[bool]) -> f64 {
    integrated(grid, surv, time, status, |dead, s| {
        let f = 1.0 - s;
        let y = if dead { 1.0 } else { 0.0 };
        (y - f) * (y - f)
    })
}

pub fn risl_unweighted(grid: &[f64], surv: &[Vec<f64>], time: &[f64], status: &[bool]) -> f64 {
    integrated(grid, surv, time, status, |dead, s| {
        let p = if dead { 1.0 - s } else { s };
        -(p.max(1e-15)).ln()
    })
}

pub fn snl_unweighted(grid: &[f64], surv: &[Vec<f64>], time: &[f64], status: &[bool]) -> f64 {
    let mut total = 0.0;
    for i in 0..time.len() {
        if status[i] {
            total += -(density(grid, &surv[i], time[i]).max(1e-15)).ln();
        }
    }
    total / time.len() as f64
}

pub fn rcll_brute(grid: &[f64], surv: &[Vec<f64>], time: &[f64], status: &[bool]) -> f64 {
    let mut total = 0.0;
    for i in 0..time.len() {
        let lik = if status[i] { density(grid, &surv[i], time[i]) } else { step(grid, &surv[i], time[i]) };
        total += -(lik.max(1e-15)).ln();
    }
    total / time.len() as f64
}
