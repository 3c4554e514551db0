//! Random survival forest with log-rank splitting.
//!
//! Trees grow on bootstrap samples; every node tries `mtry` randomly chosen
//! features and all midpoints between consecutive distinct values, keeping
//! the split with the largest log-rank chi-square. Leaves hold the
//! Nelson–Aalen cumulative hazard of their in-bag members on the grid of
//! distinct training event times. The ensemble hazard is the mean over trees.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::SurvivalDataset;
use crate::error::{Error, Result};
use crate::km::{step_at, step_before, step_density, SurvivalCurve};
use crate::{par, seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsfParams {
    pub tree_count: usize,
    /// Features tried per node; `None` means `ceil(sqrt(p))`.
    pub mtry: Option<usize>,
    pub min_node_size: usize,
    pub max_depth: Option<usize>,
    /// Grow each tree on a bootstrap sample. When false every tree sees the
    /// full training set once.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for RsfParams {
    fn default() -> Self {
        Self {
            tree_count: 100,
            mtry: None,
            min_node_size: 3,
            max_depth: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl RsfParams {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    fn resolved_mtry(&self, p: usize) -> Result<usize> {
        let m = self.mtry.unwrap_or_else(|| (p as f64).sqrt().ceil() as usize);
        if m == 0 || m > p {
            return Err(Error::invalid(format!("mtry must lie in [1, {p}], got {m}")));
        }
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        if self.tree_count == 0 {
            return Err(Error::invalid("tree_count must be at least 1"));
        }
        if self.min_node_size == 0 {
            return Err(Error::invalid("min_node_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Split { feature: usize, threshold: f64, left: u32, right: u32 },
    Leaf { hazard: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTree {
    nodes: Vec<Node>,
    leaf_cumhaz: Vec<Vec<f64>>,
    /// How many times each training row was drawn into this tree's sample.
    inbag: Vec<u32>,
}

impl SurvivalTree {
    pub fn inbag(&self) -> &[u32] {
        &self.inbag
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_cumhaz.len()
    }

    pub fn leaf_cumhaz(&self) -> &[Vec<f64>] {
        &self.leaf_cumhaz
    }

    /// Feature index of the root split, `None` for a single-leaf tree.
    pub fn root_feature(&self) -> Option<usize> {
        match self.nodes.first() {
            Some(Node::Split { feature, .. }) => Some(*feature),
            _ => None,
        }
    }

    /// Node-by-node split features (`None` for leaves), in storage order.
    pub fn topology(&self) -> Vec<Option<usize>> {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    fn leaf_for(&self, x: ArrayView1<'_, f64>) -> &[f64] {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if x[*feature] <= *threshold { *left as usize } else { *right as usize };
                }
                Node::Leaf { hazard } => return &self.leaf_cumhaz[*hazard as usize],
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsfModel {
    p: usize,
    time_grid: Vec<f64>,
    trees: Vec<SurvivalTree>,
}

impl RsfModel {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn trees(&self) -> &[SurvivalTree] {
        &self.trees
    }

    /// Self-describing JSON dump; floats round-trip exactly.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Serde(e.to_string()))
    }

    fn ensemble_cumhaz(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.p {
            return Err(Error::WidthMismatch { expected: self.p, got: features.ncols() });
        }
        let g = self.time_grid.len();
        let mut out = Array2::zeros((features.nrows(), g));
        let scale = 1.0 / self.trees.len() as f64;
        for (x, mut row) in features.rows().into_iter().zip(out.rows_mut()) {
            for tree in &self.trees {
                for (acc, h) in row.iter_mut().zip(tree.leaf_for(x)) {
                    *acc += h;
                }
            }
            row.mapv_inplace(|h| h * scale);
        }
        Ok(out)
    }
}

/// Per-observation survival curves on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionPrediction {
    time_grid: Vec<f64>,
    survival: Array2<f64>,
}

impl DistributionPrediction {
    pub fn new(time_grid: Vec<f64>, survival: Array2<f64>) -> Result<Self> {
        if survival.ncols() != time_grid.len() {
            return Err(Error::invalid(format!(
                "survival matrix has {} columns for a grid of {}",
                survival.ncols(),
                time_grid.len()
            )));
        }
        if time_grid.iter().any(|t| !(t.is_finite() && *t > 0.0)) || time_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("time grid must be positive and strictly increasing"));
        }
        for row in survival.rows() {
            let mut prev = 1.0;
            for &s in row {
                if !(0.0..=prev).contains(&s) {
                    return Err(Error::invalid("each survival row must be non-increasing within [0, 1]"));
                }
                prev = s;
            }
        }
        Ok(Self { time_grid, survival })
    }

    /// The same curve for each of `n` observations.
    pub fn from_curve(curve: &SurvivalCurve, n: usize) -> Self {
        let g = curve.times().len();
        let survival = Array2::from_shape_fn((n, g), |(_, j)| curve.survival()[j]);
        Self { time_grid: curve.times().to_vec(), survival }
    }

    pub fn n_rows(&self) -> usize {
        self.survival.nrows()
    }

    pub fn time_grid(&self) -> &[f64] {
        &self.time_grid
    }

    pub fn survival_matrix(&self) -> ArrayView2<'_, f64> {
        self.survival.view()
    }

    fn row(&self, i: usize) -> &[f64] {
        self.survival
            .row(i)
            .to_slice()
            .expect("survival matrix is stored in standard layout")
    }

    pub fn survival_at(&self, i: usize, t: f64) -> f64 {
        step_at(&self.time_grid, self.row(i), t, 1.0)
    }

    pub fn survival_before(&self, i: usize, t: f64) -> f64 {
        step_before(&self.time_grid, self.row(i), t, 1.0)
    }

    pub fn density_at(&self, i: usize, t: f64) -> f64 {
        step_density(&self.time_grid, self.row(i), t)
    }

    pub fn row_curve(&self, i: usize) -> SurvivalCurve {
        let s = self.row(i).to_vec();
        let h = s.iter().map(|v| -v.max(f64::MIN_POSITIVE).ln()).collect();
        SurvivalCurve::new(self.time_grid.clone(), s, h).expect("rows satisfy curve invariants")
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            time_grid: self.time_grid.clone(),
            survival: self.survival.select(ndarray::Axis(0), rows),
        }
    }
}

/// Scalar risks, higher meaning earlier expected events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskPrediction {
    risk: Vec<f64>,
}

impl RiskPrediction {
    pub fn new(risk: Vec<f64>) -> Result<Self> {
        if risk.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("risk predictions must be finite"));
        }
        Ok(Self { risk })
    }

    pub fn risk(&self) -> &[f64] {
        &self.risk
    }

    pub fn len(&self) -> usize {
        self.risk.len()
    }

    pub fn is_empty(&self) -> bool {
        self.risk.is_empty()
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self { risk: rows.iter().map(|&i| self.risk[i]).collect() }
    }
}

pub fn predict_distribution(model: &RsfModel, features: ArrayView2<'_, f64>) -> Result<DistributionPrediction> {
    Ok(predict(model, features)?.0)
}

/// Ensemble mortality: the cumulative hazard summed over the time grid.
pub fn predict_risk(model: &RsfModel, features: ArrayView2<'_, f64>) -> Result<RiskPrediction> {
    Ok(predict(model, features)?.1)
}

/// Both prediction types from a single pass over the trees.
pub fn predict(
    model: &RsfModel,
    features: ArrayView2<'_, f64>,
) -> Result<(DistributionPrediction, RiskPrediction)> {
    let cumhaz = model.ensemble_cumhaz(features)?;
    let risk = cumhaz.rows().into_iter().map(|r| r.sum()).collect();
    let survival = cumhaz.mapv(|h| (-h).exp());
    Ok((
        DistributionPrediction { time_grid: model.time_grid.clone(), survival },
        RiskPrediction { risk },
    ))
}

pub fn fit_rsf(train: &SurvivalDataset, params: &RsfParams) -> Result<RsfModel> {
    params.validate()?;
    let p = train.p();
    if p == 0 {
        return Err(Error::invalid("random survival forest needs at least one feature"));
    }
    let mtry = params.resolved_mtry(p)?;
    if train.event_count() == 0 {
        return Err(Error::NoEvents("log-rank splitting needs at least one event"));
    }

    let mut time_grid: Vec<f64> = train
        .time()
        .iter()
        .zip(train.status())
        .filter(|(_, &d)| d)
        .map(|(&t, _)| t)
        .collect();
    time_grid.sort_by(f64::total_cmp);
    time_grid.dedup();

    // rank[i] = number of grid times <= T_i; row i is at risk at grid index k < rank[i].
    let rank: Vec<usize> = train.time().iter().map(|&t| time_grid.partition_point(|&g| g <= t)).collect();
    let ctx = GrowContext {
        x: train.features(),
        status: train.status(),
        rank: &rank,
        grid_len: time_grid.len(),
        mtry,
        params,
    };

    let trees = par::map_collect((0..params.tree_count).collect(), |t| {
        ctx.grow(seed::derive(params.seed, &[t as u64]))
    });
    Ok(RsfModel { p, time_grid, trees })
}

struct GrowContext<'a> {
    x: ArrayView2<'a, f64>,
    status: &'a [bool],
    rank: &'a [usize],
    grid_len: usize,
    mtry: usize,
    params: &'a RsfParams,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    stat: f64,
}

impl GrowContext<'_> {
    fn grow(&self, tree_seed: u64) -> SurvivalTree {
        let n = self.x.nrows();
        let mut rng = seed::rng(tree_seed);
        let members: Vec<usize> = if self.params.bootstrap {
            (0..n).map(|_| rng.random_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        let mut inbag = vec![0u32; n];
        for &i in &members {
            inbag[i] += 1;
        }
        let mut tree = SurvivalTree { nodes: Vec::new(), leaf_cumhaz: Vec::new(), inbag };
        self.grow_node(&mut tree, members, 0, &mut rng);
        tree
    }

    fn grow_node(&self, tree: &mut SurvivalTree, members: Vec<usize>, depth: usize, rng: &mut impl Rng) -> u32 {
        let id = tree.nodes.len() as u32;
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        let split = if depth_ok && members.len() >= 2 * self.params.min_node_size {
            self.best_split(&members, rng)
        } else {
            None
        };
        match split {
            None => {
                tree.nodes.push(Node::Leaf { hazard: tree.leaf_cumhaz.len() as u32 });
                tree.leaf_cumhaz.push(self.nelson_aalen(&members));
            }
            Some(c) => {
                tree.nodes.push(Node::Leaf { hazard: u32::MAX });
                let (l, r): (Vec<usize>, Vec<usize>) =
                    members.into_iter().partition(|&i| self.x[[i, c.feature]] <= c.threshold);
                let left = self.grow_node(tree, l, depth + 1, rng);
                let right = self.grow_node(tree, r, depth + 1, rng);
                tree.nodes[id as usize] = Node::Split { feature: c.feature, threshold: c.threshold, left, right };
            }
        }
        id
    }

    fn nelson_aalen(&self, members: &[usize]) -> Vec<f64> {
        let g = self.grid_len;
        let mut by_rank = vec![0usize; g + 1];
        let mut deaths = vec![0usize; g];
        for &i in members {
            by_rank[self.rank[i]] += 1;
            if self.status[i] {
                deaths[self.rank[i] - 1] += 1;
            }
        }
        let mut out = vec![0.0; g];
        let mut at_risk = 0usize;
        let mut h = 0.0;
        for k in (0..g).rev() {
            at_risk += by_rank[k + 1];
            // fill backwards first; accumulate forwards below
            out[k] = if at_risk > 0 { deaths[k] as f64 / at_risk as f64 } else { 0.0 };
        }
        for v in out.iter_mut() {
            h += *v;
            *v = h;
        }
        out
    }

    fn best_split(&self, members: &[usize], rng: &mut impl Rng) -> Option<Candidate> {
        // Node-local event times, as indices into the global grid.
        let mut local: Vec<usize> = members.iter().filter(|&&i| self.status[i]).map(|&i| self.rank[i] - 1).collect();
        local.sort_unstable();
        local.dedup();
        let k = local.len();
        if k < 2 {
            return None;
        }
        // Local rank: number of node event times <= T_i.
        let lrank: Vec<usize> = members.iter().map(|&i| local.partition_point(|&e| e < self.rank[i])).collect();
        let mut y = vec![0.0; k];
        let mut d = vec![0.0; k];
        {
            let mut hist = vec![0usize; k + 1];
            for (m, &i) in members.iter().enumerate() {
                hist[lrank[m]] += 1;
                if self.status[i] {
                    d[lrank[m] - 1] += 1.0;
                }
            }
            let mut acc = 0usize;
            for j in (0..k).rev() {
                acc += hist[j + 1];
                y[j] = acc as f64;
            }
        }
        let c: Vec<f64> = (0..k)
            .map(|j| if y[j] > 1.0 { d[j] * (y[j] - d[j]) / (y[j] - 1.0) } else { 0.0 })
            .collect();

        let mut features = index::sample(rng, self.x.ncols(), self.mtry).into_vec();
        features.sort_unstable();

        let min = self.params.min_node_size;
        let m = members.len();
        let mut best: Option<Candidate> = None;
        let mut order: Vec<usize> = (0..m).collect();
        let mut hl = vec![0usize; k + 1];
        let mut dl = vec![0.0; k];
        for f in features {
            let val = |pos: usize| self.x[[members[pos], f]];
            order.sort_by(|&a, &b| val(a).total_cmp(&val(b)));
            hl.iter_mut().for_each(|v| *v = 0);
            dl.iter_mut().for_each(|v| *v = 0.0);
            for (left_n, w) in order.windows(2).enumerate() {
                let (cur, next) = (w[0], w[1]);
                hl[lrank[cur]] += 1;
                if self.status[members[cur]] {
                    dl[lrank[cur] - 1] += 1.0;
                }
                let left_n = left_n + 1;
                let (a, b) = (val(cur), val(next));
                if a == b || left_n < min || m - left_n < min {
                    continue;
                }
                let Some(stat) = log_rank(&hl, &dl, &y, &d, &c) else { continue };
                if best.as_ref().is_none_or(|bst| stat > bst.stat) {
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Candidate { feature: f, threshold, stat });
                }
            }
        }
        best
    }
}

/// Log-rank chi-square for a left child described by its at-risk histogram
/// `hl` (by local rank) and event counts `dl`.
fn log_rank(hl: &[usize], dl: &[f64], y: &[f64], d: &[f64], c: &[f64]) -> Option<f64> {
    let k = y.len();
    let mut yl = 0usize;
    let (mut num, mut var) = (0.0, 0.0);
    for j in (0..k).rev() {
        yl += hl[j + 1];
        let frac = yl as f64 / y[j];
        num += dl[j] - frac * d[j];
        var += frac * (1.0 - frac) * c[j];
    }
    (var > 1e-12).then(|| num * num / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SynthConfig};

    fn small() -> SurvivalDataset {
        let mut cfg = SynthConfig::strong_signal(120, 3);
        cfg.target_censoring = 0.25;
        generate_synthetic(&cfg, 5).unwrap()
    }

    /// Straightforward log-rank statistic from group membership.
    fn log_rank_oracle(time: &[f64], status: &[bool], left: &[bool]) -> f64 {
        let mut events: Vec<f64> = time.iter().zip(status).filter(|x| *x.1).map(|x| *x.0).collect();
        events.sort_by(f64::total_cmp);
        events.dedup();
        let (mut num, mut var) = (0.0, 0.0);
        for &t in &events {
            let at = |l: Option<bool>| {
                (0..time.len())
                    .filter(|&i| time[i] >= t && l.is_none_or(|l| left[i] == l))
                    .count() as f64
            };
            let dead = |l: Option<bool>| {
                (0..time.len())
                    .filter(|&i| time[i] == t && status[i] && l.is_none_or(|l| left[i] == l))
                    .count() as f64
            };
            let (y, dd, yl, dl) = (at(None), dead(None), at(Some(true)), dead(Some(true)));
            num += dl - yl * dd / y;
            if y > 1.0 {
                var += yl / y * (1.0 - yl / y) * (y - dd) / (y - 1.0) * dd;
            }
        }
        num * num / var
    }

    #[test]
    fn incremental_log_rank_matches_oracle() {
        let time = [1.0, 2.0, 2.0, 3.0, 5.0, 8.0, 9.0];
        let status = [true, true, false, true, false, true, true];
        let left = [true, false, true, true, false, false, true];
        // Build node-local structures the way best_split does.
        let local = [1.0, 2.0, 3.0, 8.0, 9.0];
        let lrank: Vec<usize> = time.iter().map(|t| local.partition_point(|e| e <= t)).collect();
        let k = local.len();
        let mut y = vec![0.0; k];
        let mut d = vec![0.0; k];
        let mut hl = vec![0usize; k + 1];
        let mut dl = vec![0.0; k];
        for i in 0..time.len() {
            for j in 0..lrank[i] {
                y[j] += 1.0;
            }
            if status[i] {
                d[lrank[i] - 1] += 1.0;
            }
            if left[i] {
                hl[lrank[i]] += 1;
                if status[i] {
                    dl[lrank[i] - 1] += 1.0;
                }
            }
        }
        let c: Vec<f64> = (0..k).map(|j| if y[j] > 1.0 { d[j] * (y[j] - d[j]) / (y[j] - 1.0) } else { 0.0 }).collect();
        let fast = log_rank(&hl, &dl, &y, &d, &c).unwrap();
        let slow = log_rank_oracle(&time, &status, &left);
        assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
    }

    #[test]
    fn degenerate_single_leaf_equals_training_nelson_aalen() {
        let ds = small();
        let params = RsfParams {
            tree_count: 1,
            mtry: Some(ds.p()),
            min_node_size: ds.n(),
            bootstrap: false,
            ..RsfParams::default()
        };
        let model = fit_rsf(&ds, &params).unwrap();
        assert_eq!(model.trees()[0].leaf_count(), 1);
        let na = crate::km::fit_km(ds.time(), ds.status()).unwrap();
        let (dist, risk) = predict(&model, ds.features()).unwrap();
        assert_eq!(dist.time_grid(), na.times());
        for (j, h) in na.cumhaz().iter().enumerate() {
            assert!((model.trees()[0].leaf_cumhaz()[0][j] - h).abs() < 1e-12);
            assert!((dist.survival_matrix()[[3, j]] - (-h).exp()).abs() < 1e-12);
        }
        assert!(risk.risk().windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn deterministic_and_well_formed() {
        let ds = small();
        let params = RsfParams { tree_count: 10, seed: 3, ..RsfParams::default() };
        let a = fit_rsf(&ds, &params).unwrap();
        assert_eq!(a, fit_rsf(&ds, &params).unwrap());
        for tree in a.trees() {
            assert!(tree.topology().iter().flatten().all(|&f| f < ds.p()));
            for leaf in tree.leaf_cumhaz() {
                assert!(leaf.windows(2).all(|w| w[0] <= w[1]));
            }
        }
        let dist = predict_distribution(&a, ds.features()).unwrap();
        for row in dist.survival_matrix().rows() {
            assert!(row.iter().all(|s| (0.0..=1.0).contains(s)));
            assert!(row.windows(2).into_iter().all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn identical_rows_identical_predictions() {
        let ds = small();
        let model = fit_rsf(&ds, &RsfParams { tree_count: 5, ..RsfParams::default() }).unwrap();
        let x = ds.features().select(ndarray::Axis(0), &[7, 7]);
        let dist = predict_distribution(&model, x.view()).unwrap();
        assert_eq!(dist.survival_matrix().row(0), dist.survival_matrix().row(1));
    }

    #[test]
    fn width_mismatch_and_no_events() {
        let ds = small();
        let model = fit_rsf(&ds, &RsfParams { tree_count: 2, ..RsfParams::default() }).unwrap();
        let narrow = Array2::<f64>::zeros((2, 1));
        assert!(matches!(predict_risk(&model, narrow.view()), Err(Error::WidthMismatch { .. })));

        let censored = SurvivalDataset::new(
            ds.features().to_owned(),
            ds.feature_names().to_vec(),
            ds.time().to_vec(),
            vec![false; ds.n()],
            None,
        )
        .unwrap();
        assert!(matches!(fit_rsf(&censored, &RsfParams::default()), Err(Error::NoEvents(_))));
        assert!(fit_rsf(&ds, &RsfParams { mtry: Some(9), ..RsfParams::default() }).is_err());
    }

    #[test]
    fn max_depth_one_gives_stumps() {
        let ds = small();
        let model = fit_rsf(&ds, &RsfParams { tree_count: 3, max_depth: Some(1), ..RsfParams::default() }).unwrap();
        assert!(model.trees().iter().all(|t| t.leaf_count() <= 2));
    }

    #[test]
    fn json_dump_round_trips() {
        let ds = small();
        let model = fit_rsf(&ds, &RsfParams { tree_count: 3, ..RsfParams::default() }).unwrap();
        assert_eq!(RsfModel::from_json(&model.to_json().unwrap()).unwrap(), model);
    }

    #[test]
    fn scaling_leaf_hazards_preserves_risk_order() {
        let ds = small();
        let model = fit_rsf(&ds, &RsfParams { tree_count: 5, ..RsfParams::default() }).unwrap();
        let mut scaled = model.clone();
        for tree in &mut scaled.trees {
            for leaf in &mut tree.leaf_cumhaz {
                leaf.iter_mut().for_each(|h| *h *= 3.7);
            }
        }
        let a = predict_risk(&model, ds.features()).unwrap();
        let b = predict_risk(&scaled, ds.features()).unwrap();
        // Same order up to floating-point ties.
        for i in 0..a.len() {
            for j in 0..a.len() {
                let (ai, aj) = (a.risk()[i], a.risk()[j]);
                if ai < aj - 1e-9 * aj.abs() {
                    assert!(b.risk()[i] < b.risk()[j], "pair ({i}, {j}) reordered");
                }
            }
        }
    }
}
