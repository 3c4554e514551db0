use ndarray::Array2;
use rand_distr::{Distribution, Weibull};
use serde::Serialize;

use survfair::biasing::{BiasMethod, BiasRunner};
use survfair::data::{generate_synthetic, read_csv, subset_by_group, write_csv, CsvSchema, SurvivalDataset, SynthConfig};
use survfair::km::fit_km;
use survfair::metrics::{rcll, rsbs, CensoringWeights, IntegrationGrid, Measure};
use survfair::rsf::{DistributionPrediction, RsfParams};
use survfair::seed;

/// Scale multipliers tried by [`properness_curve`].
pub const MULTIPLIERS: [f64; 13] = [0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.15, 1.3, 1.5, 1.75, 2.0, 2.5];

/// σ values used by [`bias_sweep`].
pub const SWEEP_GRID: [f64; 4] = [0.0, 0.3, 0.6, 0.9];

const WEIBULL_SHAPE: f64 = 1.5;
const WEIBULL_SCALE: f64 = 10.0;

#[derive(Debug, Serialize)]
pub struct GroupCurve {
    pub label: String,
    pub n: usize,
    pub events: usize,
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct ProperCurve {
    pub multipliers: Vec<f64>,
    pub rcll: Vec<f64>,
    pub rsbs: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct SweepPoint {
    pub sigma: f64,
    pub mean: f64,
    pub sd: f64,
}

fn err(e: impl ToString) -> String {
    e.to_string()
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(err)
}

fn parse(csv: &str) -> Result<SurvivalDataset, String> {
    read_csv(csv.as_bytes(), &CsvSchema::default()).map_err(err)
}

pub fn synth_csv(n: usize, p: usize, censoring: f64, seed: u64) -> Result<String, String> {
    let config = SynthConfig { target_censoring: censoring, ..SynthConfig::strong_signal(n, p) };
    let ds = generate_synthetic(&config, seed).map_err(err)?;
    let mut buf = Vec::new();
    write_csv(&ds, &mut buf, &CsvSchema::default()).map_err(err)?;
    String::from_utf8(buf).map_err(err)
}

pub fn km_curves(csv: &str) -> Result<String, String> {
    let ds = parse(csv)?;
    let labels = ds.group_labels();
    if labels.is_empty() {
        return Err("the data has no `group` column".into());
    }
    let curves = labels
        .into_iter()
        .map(|label| {
            let sub = subset_by_group(&ds, &label).map_err(err)?;
            let km = fit_km(sub.time(), sub.status()).map_err(err)?;
            Ok(GroupCurve {
                n: sub.n(),
                events: sub.event_count(),
                times: km.times().to_vec(),
                survival: km.survival().to_vec(),
                label,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    json(&curves)
}

/// Scores for one constant Weibull prediction, tabulated on `grid`.
fn score_scale(grid: &[f64], scale: f64, time: &[f64], status: &[bool]) -> Result<(f64, f64), String> {
    let row: Vec<f64> = grid.iter().map(|t| (-(t / scale).powf(WEIBULL_SHAPE)).exp()).collect();
    let pred = DistributionPrediction::new(grid.to_vec(), Array2::from_shape_fn((time.len(), grid.len()), |(_, j)| row[j]))
        .map_err(err)?;
    let ig = IntegrationGrid::from_times(time).map_err(err)?;
    let r = rcll(&pred, time, status).map_err(err)?.value;
    let b = rsbs(&pred, time, status, &CensoringWeights::uniform(), &ig).map_err(err)?.value;
    Ok((r, b))
}

pub fn properness_curve(n: usize, seed: u64) -> Result<String, String> {
    if !(10..=5000).contains(&n) {
        return Err(format!("n must lie in 10..=5000, got {n}"));
    }
    let dist = Weibull::new(WEIBULL_SCALE, WEIBULL_SHAPE).map_err(err)?;
    let mut rng = seed::rng(seed);
    let time: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
    let status = vec![true; n];
    let hi = time.iter().copied().fold(0.0, f64::max) * 1.01;
    let grid: Vec<f64> = (1..=500).map(|j| hi * j as f64 / 500.0).collect();
    let mut out = ProperCurve { multipliers: MULTIPLIERS.to_vec(), rcll: Vec::new(), rsbs: Vec::new() };
    for m in MULTIPLIERS {
        let (r, b) = score_scale(&grid, m * WEIBULL_SCALE, &time, &status)?;
        out.rcll.push(r);
        out.rsbs.push(b);
    }
    json(&out)
}

pub fn bias_sweep(csv: &str, method: &str, measure: &str, trees: usize, reps: usize, seed: u64) -> Result<String, String> {
    let ds = parse(csv)?;
    let method: BiasMethod = method.parse().map_err(err)?;
    let measure: Measure = measure.parse().map_err(err)?;
    if !(1..=100).contains(&trees) || !(1..=20).contains(&reps) {
        return Err("trees must lie in 1..=100 and repetitions in 1..=20".into());
    }
    let learner = RsfParams { tree_count: trees, ..RsfParams::default() };
    let runner = BiasRunner::new(&ds, &[measure], &learner, method, reps, 3, seed).map_err(err)?;
    let points = SWEEP_GRID
        .iter()
        .map(|&sigma| {
            let gap = runner.run(sigma).map_err(err)?[&measure];
            Ok(SweepPoint { sigma, mean: gap.mean, sd: gap.sd })
        })
        .collect::<Result<Vec<_>, String>>()?;
    json(&points)
}
