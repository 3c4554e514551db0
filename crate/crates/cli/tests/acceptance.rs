//! Acceptance suite: one check per criterion, each printed as a PASS/FAIL
//! line with its measured runtime. Exits nonzero if any check fails.

#[path = "../../core/tests/common/oracles.rs"]
mod oracles;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng;

use survfair::biasing::BiasMethod;
use survfair::experiment::{build_report, holm_correct, ols_slope_test, read_sweep_csv, spearman_rho, Report};
use survfair::km::fit_km;
use survfair::metrics::*;
use survfair::rsf::{DistributionPrediction, RiskPrediction};
use survfair::seed;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn km_oracle() -> Check {
    let cases: [(&[f64], &[bool], &[(f64, f64)]); 5] = [
        (&[1.0, 2.0, 3.0], &[true, true, false], &[(1.0, 2.0 / 3.0), (2.0, 1.0 / 3.0), (3.0, 1.0 / 3.0)]),
        (&[5.0], &[true], &[(5.0, 0.0)]),
        (&[1.0, 2.0, 3.0], &[false, false, false], &[(1.0, 1.0), (2.0, 1.0), (3.0, 1.0)]),
        (&[1.0, 1.0, 2.0, 4.0], &[true, true, false, true], &[(1.0, 0.5), (2.0, 0.5), (4.0, 0.0)]),
        (&[2.0, 3.0, 3.0, 5.0, 6.0], &[true, true, false, true, false], &[(2.0, 0.8), (3.0, 0.6), (5.0, 0.3)]),
    ];
    let mut worst = 0.0f64;
    for (time, status, expect) in cases {
        let c = fit_km(time, status).map_err(|e| e.to_string())?;
        for &(t, s) in expect {
            worst = worst.max((c.survival_at(t) - s).abs());
        }
    }
    ensure(worst <= 1e-12, format!("max error {worst:e}"))?;
    Ok(format!("5 cases, max error {worst:e}"))
}

fn concordance_oracle() -> Check {
    for k in 0..100 {
        let mut rng = seed::rng(seed::derive(101, &[k]));
        let n = rng.random_range(2..=30);
        let time: Vec<f64> = (0..n).map(|_| rng.random_range(1..10) as f64).collect();
        let status: Vec<bool> = (0..n).map(|_| rng.random_bool(0.6)).collect();
        let risk: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let pred = RiskPrediction::new(risk.clone()).unwrap();
        match (harrell_c(&pred, &time, &status), oracles::harrell_brute(&risk, &time, &status)) {
            (Ok(got), Some(want)) => ensure(got.value == want, format!("instance {k}: {} vs {want}", got.value))?,
            (Err(_), None) => {}
            _ => return Err(format!("instance {k}: comparable-pair disagreement")),
        }

        let all = vec![true; n];
        let tau = time.iter().copied().fold(0.0, f64::max) + rng.random_range(0.0..3.0);
        let w = CensoringWeights::fit(&time, &all).unwrap();
        if let Ok(h) = harrell_c(&pred, &time, &all) {
            let u = uno_c(&pred, &time, &all, &w, tau).map_err(|e| e.to_string())?;
            ensure(u.value == h.value, format!("instance {k}: uno {} != harrell {}", u.value, h.value))?;
        }
    }
    Ok("100 instances exact; uno == harrell without censoring".into())
}

fn scoring_rule_oracles() -> Check {
    let w = CensoringWeights::uniform();
    let mut worst = 0.0f64;
    for k in 0..50 {
        let mut rng = seed::rng(seed::derive(102, &[k]));
        let g = rng.random_range(1..10);
        let mut grid: Vec<f64> = (0..g).map(|_| rng.random_range(0.1..8.0)).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        let n = rng.random_range(1..20);
        let surv: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut s = 1.0;
                grid.iter().map(|_| { s *= rng.random_range(0.2..1.0); s }).collect()
            })
            .collect();
        let time: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.3) { grid[rng.random_range(0..grid.len())] } else { rng.random_range(0.05..10.0) })
            .collect();
        let mut status: Vec<bool> = (0..n).map(|_| rng.random_bool(0.7)).collect();
        status[0] = true;
        let pred = DistributionPrediction::new(
            grid.clone(),
            Array2::from_shape_fn((n, grid.len()), |(i, j)| surv[i][j]),
        )
        .unwrap();
        let ig = IntegrationGrid::from_times(&time).unwrap();
        let pairs = [
            (rsbs(&pred, &time, &status, &w, &ig), oracles::rsbs_unweighted(&grid, &surv, &time, &status)),
            (risl(&pred, &time, &status, &w, &ig), oracles::risl_unweighted(&grid, &surv, &time, &status)),
            (snl(&pred, &time, &status, &w), oracles::snl_unweighted(&grid, &surv, &time, &status)),
        ];
        for (got, want) in pairs {
            let got = got.map_err(|e| format!("instance {k}: {e}"))?.value;
            worst = worst.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    ensure(worst <= 1e-12, format!("max deviation {worst:e}"))?;

    let uniform = DistributionPrediction::new(vec![4.0], Array2::from_elem((1, 1), 0.0)).unwrap();
    let event = rcll(&uniform, &[2.0], &[true]).unwrap().value;
    let half = DistributionPrediction::new(vec![1.0], Array2::from_elem((1, 1), 0.5)).unwrap();
    let censored = rcll(&half, &[2.0], &[false]).unwrap().value;
    ensure((event - 4f64.ln()).abs() <= 1e-6, format!("rcll f=0.25 gave {event}"))?;
    ensure((censored - 2f64.ln()).abs() <= 1e-6, format!("rcll S=0.5 gave {censored}"))?;
    Ok(format!("50 instances, max deviation {worst:e}; rcll {event:.4}, {censored:.4}"))
}

fn properness() -> Check {
    let (shape, scale, n) = (1.5, 10.0, 10_000);
    let chunk = 1000;
    let rcll_of = |grid: &[f64], scale: f64, time: &[f64]| -> f64 {
        let row: Vec<f64> = grid.iter().map(|t| (-(t / scale).powf(shape)).exp()).collect();
        let pred = DistributionPrediction::new(
            grid.to_vec(),
            Array2::from_shape_fn((chunk, grid.len()), |(_, j)| row[j]),
        )
        .unwrap();
        let v: Vec<f64> = time.chunks(chunk).map(|c| rcll(&pred, c, &vec![true; chunk]).unwrap().value).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let mut wins = 0;
    for k in 0..20 {
        let mut rng = seed::rng(seed::derive(103, &[k]));
        let time: Vec<f64> = (0..n)
            .map(|_| scale * (-(1.0 - rng.random::<f64>()).ln()).powf(1.0 / shape))
            .collect();
        let hi = time.iter().copied().fold(0.0, f64::max) * 1.01;
        let grid: Vec<f64> = (1..=2000).map(|j| hi * j as f64 / 2000.0).collect();
        if rcll_of(&grid, scale, &time) <= rcll_of(&grid, 1.5 * scale, &time) {
            wins += 1;
        }
    }
    ensure(wins >= 19, format!("{wins}/20 seeds"))?;
    Ok(format!("{wins}/20 seeds prefer the true distribution"))
}

fn d_calibration() -> Check {
    let (n, bins) = (500, 10);
    let mut below = 0;
    for k in 0..100 {
        let mut rng = seed::rng(seed::derive(104, &[k]));
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let pred = DistributionPrediction::new(vec![1.0], Array2::from_shape_vec((n, 1), s).unwrap()).unwrap();
        let stat = cal_d(&pred, &vec![1.0; n], &vec![true; n], bins).unwrap().value;
        if stat < 16.92 {
            below += 1;
        }
    }
    ensure(below >= 90, format!("{below}/100 below 16.92"))?;
    Ok(format!("{below}/100 trials below 16.92"))
}

const REPLICATION_ARGS: &[&str] = &[
    "--synth", "10", "--n", "600", "--p", "5", "--censoring", "0.3", "--grid", "0:0.9:0.1", "--reps", "5", "--trees",
    "50", "--seed", "2024",
];

const PERMUTATION_MEASURES: [Measure; 4] = [Measure::CHarrell, Measure::CUno, Measure::Rsbs, Measure::Risl];
const UNDERSAMPLING_MEASURES: [Measure; 2] = [Measure::Snl, Measure::Rcll];

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let mut argv = vec!["survfair", "experiment"];
    argv.extend_from_slice(args);
    argv.extend_from_slice(&["--out", out.to_str().unwrap()]);
    match survfair_cli::run(argv) {
        0 => Ok(()),
        code => Err(format!("experiment exited with {code}")),
    }
}

fn replication_report(out: &Path) -> Result<Report, String> {
    run_cli(REPLICATION_ARGS, out)?;
    let sweep = read_sweep_csv(fs::File::open(out.join("sweep.csv")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    build_report(&sweep).map_err(|e| e.to_string())
}

fn qualitative_replication(report: &Report) -> Check {
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let mut check = |method: BiasMethod, m: Measure, need_holm: bool| {
        let row = report.row(method, m).expect("row present");
        let rho = row.rho.unwrap_or(f64::NAN);
        let holm = row.p_rho_holm.unwrap_or(1.0);
        lines.push(format!("{method}/{m} rho={rho:.3} p_holm={holm:.2e}"));
        if !(rho >= 0.8) || (need_holm && !(holm < 0.05)) {
            failures.push(format!("{method}/{m} rho={rho:.3} p_holm={holm:.2e}"));
        }
    };
    for m in PERMUTATION_MEASURES {
        check(BiasMethod::Permutation, m, true);
    }
    for m in UNDERSAMPLING_MEASURES {
        check(BiasMethod::Undersampling, m, false);
    }
    ensure(failures.is_empty(), failures.join("; "))?;
    Ok(lines.join(", "))
}

fn null_direction(report: &Report) -> Check {
    let mut lines = Vec::new();
    let mut failures = Vec::new();
    let pairs = PERMUTATION_MEASURES
        .iter()
        .map(|&m| (BiasMethod::Permutation, m))
        .chain(UNDERSAMPLING_MEASURES.iter().map(|&m| (BiasMethod::Undersampling, m)));
    for (method, m) in pairs {
        let means = report.means_of(method, m);
        let at = |s: f64| means.iter().find(|(x, _)| (x - s).abs() < 1e-9).map(|p| p.1).unwrap_or(f64::NAN);
        let (lo, hi) = (at(0.0), at(0.9));
        lines.push(format!("{method}/{m} {lo:.3}<{hi:.3}"));
        if !(lo < hi) {
            failures.push(format!("{method}/{m}: sigma=0 mean {lo:.4} vs sigma=0.9 mean {hi:.4}"));
        }
    }
    ensure(failures.is_empty(), failures.join("; "))?;
    Ok(lines.join(", "))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = [
        "--synth", "3", "--n", "400", "--p", "4", "--grid", "0:0.8:0.4", "--reps", "3", "--trees", "8", "--seed", "5",
    ];
    let mut outputs = Vec::new();
    for (k, jobs) in ["1", "1", "2", "4"].iter().enumerate() {
        let out = dir.path().join(format!("run{k}"));
        let mut a = args.to_vec();
        a.extend_from_slice(&["--jobs", jobs]);
        run_cli(&a, &out)?;
        let files: Vec<Vec<u8>> = ["sweep.csv", "report.txt", "report.jsonl"]
            .iter()
            .map(|f| fs::read(out.join(f)).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        outputs.push(files);
    }
    ensure(outputs.windows(2).all(|w| w[0] == w[1]), "outputs differ between runs")?;
    Ok("4 runs (--jobs 1, 1, 2, 4) byte-identical".into())
}

fn statistics_oracles() -> Check {
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-10;
    let e = |r: survfair::Result<(f64, f64)>| r.map_err(|e| e.to_string());
    let (rho, p) = e(spearman_rho(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]))?;
    ensure(close(rho, 1.0) && p == 0.0, format!("monotone case gave ({rho}, {p})"))?;
    let (rho, _) = e(spearman_rho(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]))?;
    ensure(close(rho, -1.0), format!("reversed case gave {rho}"))?;
    let (rho, _) = e(spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]))?;
    ensure(close(rho, 0.6), format!("swapped pairs gave {rho}"))?;
    ensure(spearman_rho(&[1.0, 2.0], &[1.0, 2.0]).is_err(), "two points accepted")?;

    let fit = ols_slope_test(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]).map_err(|e| e.to_string())?;
    ensure(close(fit.alpha, 1.0) && close(fit.beta, 2.0) && fit.p < 1e-10, format!("{fit:?}"))?;
    let flat = ols_slope_test(&[0.0, 1.0, 2.0], &[0.3, 0.3, 0.3]).map_err(|e| e.to_string())?;
    ensure(flat.beta == 0.0 && flat.p == 1.0, format!("{flat:?}"))?;
    let fit = ols_slope_test(&[0.0, 1.0, 2.0], &[0.0, 1.0, 1.0]).map_err(|e| e.to_string())?;
    ensure(close(fit.beta, 0.5) && close(fit.alpha, 1.0 / 6.0), format!("{fit:?}"))?;

    let holm = holm_correct(&[0.01, 0.04]).map_err(|e| e.to_string())?;
    ensure(holm == vec![0.02, 0.04], format!("holm gave {holm:?}"))?;
    let holm = holm_correct(&[0.04, 0.01, 0.03]).map_err(|e| e.to_string())?;
    ensure(holm == vec![0.06, 0.03, 0.06], format!("holm gave {holm:?}"))?;
    Ok("spearman, ols and holm hand cases match".into())
}

struct Outcome {
    passed: bool,
}

fn report(name: &str, limit: Duration, f: impl FnOnce() -> Check) -> Outcome {
    let start = Instant::now();
    let result = f();
    let took = start.elapsed();
    let in_time = took <= limit;
    let (passed, detail) = match result {
        Ok(d) if in_time => (true, d),
        Ok(d) => (false, format!("{d}; too slow")),
        Err(d) => (false, d),
    };
    println!(
        "{} {name}: {detail} [{:.2}s, limit {}s]",
        if passed { "PASS" } else { "FAIL" },
        took.as_secs_f64(),
        limit.as_secs()
    );
    Outcome { passed }
}

fn main() {
    let secs = Duration::from_secs;
    let mut outcomes = vec![
        report("km oracle", secs(1), km_oracle),
        report("concordance oracle", secs(5), concordance_oracle),
        report("scoring-rule oracles", secs(5), scoring_rule_oracles),
        report("rcll properness", secs(60), properness),
        report("d-calibration uniformity", secs(30), d_calibration),
        report("statistics oracles", secs(1), statistics_oracles),
    ];

    let dir = tempfile::tempdir().expect("temp dir");
    let mut replication = Err("replication sweep did not run".to_string());
    outcomes.push(report("qualitative replication", secs(15 * 60), || {
        replication = replication_report(dir.path());
        qualitative_replication(replication.as_ref().map_err(Clone::clone)?)
    }));
    outcomes.push(report("null-case direction", secs(1), || {
        null_direction(replication.as_ref().map_err(Clone::clone)?)
    }));
    outcomes.push(report("determinism across --jobs", secs(120), determinism));

    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("acceptance: {} passed, {failed} failed", outcomes.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
