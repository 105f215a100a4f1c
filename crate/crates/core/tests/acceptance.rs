//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints one PASS or FAIL line; exits non-zero if any fails.

use std::time::Instant;

use sparsemix::boundary::{check_hc_optimality, closed_form_beta, compute_t0_t1, solve_beta_hc, solve_beta_star};
use sparsemix::experiments::{hellinger_trend, phase_sweep, ExperimentConfig, TestKind};
use sparsemix::hc::{hc_classical, hc_star};
use sparsemix::models::{
    batch_log_lr, closed_form_grid, sample_alternative, sample_null, tail_condition_estimate, Model, ModelSpec,
    TailVerdict,
};
use sparsemix::numeric::norm_sf;
use sparsemix::rate::{analytic_rate, convexity_range, legendre_transform, midpoint_violations, GridConfig, LimitCgf};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn catalog_equivalence() -> Outcome {
    let start = Instant::now();
    let grid = closed_form_grid();
    let mut worst = 0.0f64;
    let mut worst_spec = String::new();
    for spec in &grid {
        let rate = analytic_rate(spec).map_err(|e| format!("{spec:?}: {e}"))?;
        let got = solve_beta_star(&rate).beta_star;
        let want = closed_form_beta(spec).map_err(|e| format!("{spec:?}: {e}"))?;
        let err = got.map_or(f64::INFINITY, |g| (g - want).abs());
        if err > worst {
            worst = err;
            worst_spec = format!("{spec:?}");
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        grid.len() >= 60 && worst <= 1e-6,
        format!("{} cells, max error {worst:.2e} ({worst_spec}), {secs:.2} s", grid.len()),
    )
}

fn legendre_round_trip() -> Outcome {
    let grid = GridConfig::new(-5.0, 5.0, 400).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for r in [0.1, 0.25, 1.0, 2.0] {
        let rate = legendre_transform(&LimitCgf::gaussian(r), &grid).map_err(|e| e.to_string())?;
        for t in grid.points() {
            let want = (t + r).powi(2) / (4.0 * r);
            worst = worst.max((rate.eval(t) - want).abs());
        }
    }
    check(worst <= 1e-6, format!("max error {worst:.2e} over 4 x 400 points"))
}

fn hc_optimality_equality() -> Outcome {
    let mut specs = closed_form_grid();
    specs.push(ModelSpec::CurieWeiss { theta: 0.5, mu: 0.5 });
    let mut checked = 0;
    let mut worst = 0.0f64;
    for spec in &specs {
        let rate = analytic_rate(spec).map_err(|e| e.to_string())?;
        if !check_hc_optimality(&rate).hc_optimal {
            continue;
        }
        let star = solve_beta_star(&rate).beta_star.ok_or(format!("{spec:?}: no beta*"))?;
        worst = worst.max((solve_beta_hc(&rate) - star).abs());
        checked += 1;
    }
    let sbm = check_hc_optimality(&analytic_rate(&ModelSpec::SbmPair { r: 0.5 }).unwrap()).convex;
    let cw = check_hc_optimality(&analytic_rate(&ModelSpec::CurieWeiss { theta: 1.5, mu: 0.5 }).unwrap()).convex;
    check(
        checked > 0 && worst <= 1e-6 && !sbm && !cw,
        format!("{checked} optimal families, max gap {worst:.2e}; convex flags sbm={sbm} curie_weiss(1.5)={cw}"),
    )
}

fn t0_t1_oracle() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for r in [0.1, 0.25, 0.5] {
        let (t0, t1) = compute_t0_t1(&analytic_rate(&ModelSpec::Idj { r }).unwrap()).map_err(|e| e.to_string())?;
        ok &= t0 == 0.0 && (t1 - r).abs() <= 1e-6;
        parts.push(format!("r={r}: t0={t0}, t1={t1:.9}"));
    }
    check(ok, parts.join("; "))
}

fn hc_reduces_to_classical() -> Outcome {
    let spec = ModelSpec::Idj { r: 0.25 };
    let mut worst = 0.0f64;
    let mut runs = 0;
    for n in [100usize, 1000] {
        let model = Model::new(&spec, n as f64).unwrap();
        for seed in 0..50 {
            for batch in [sample_null(&spec, n, seed).unwrap(), sample_alternative(&spec, n, 0.5, seed).unwrap()] {
                let llr = batch_log_lr(&spec, &batch).unwrap();
                let star = hc_star(&llr, |v| model.null_log_tail(v).value, None).unwrap().statistic;
                let p: Vec<f64> = batch.values.iter().map(|&x| norm_sf(x)).collect();
                let classical = hc_classical(&p, None).unwrap().statistic;
                worst = worst.max((star - classical).abs() / star.max(1.0));
                runs += 1;
            }
        }
    }
    check(worst <= 1e-12, format!("{runs} samples, max relative gap {worst:.2e}"))
}

fn phase_transition_direction() -> Outcome {
    let start = Instant::now();
    let config = ExperimentConfig {
        spec: ModelSpec::Idj { r: 0.6 },
        n_values: vec![100_000],
        beta_grid: vec![0.55, 0.95],
        test_kind: TestKind::NpOracle,
        delta: 0.1,
        replications: 200,
        master_seed: 20240611,
        output_path: None,
        workers: None,
        null_control: false,
    };
    let sweep = phase_sweep(&config).map_err(|e| e.to_string())?;
    let risk = |i: usize| sweep.cells[i].estimate.map(|e| e.risk).ok_or(format!("cell {i} failed"));
    let (low, high) = (risk(0)?, risk(1)?);
    let secs = start.elapsed().as_secs_f64();
    check(
        low + 0.3 < high,
        format!("risk(0.55) = {low:.3}, risk(0.95) = {high:.3}, beta* = {:.4}, {secs:.1} s", sweep.beta_star.unwrap_or(f64::NAN)),
    )
}

fn hellinger_slopes() -> Outcome {
    let start = Instant::now();
    let spec = ModelSpec::Idj { r: 0.25 };
    let ns = [1e3, 1e4, 1e5, 1e6];
    let below = hellinger_trend(&spec, 0.5, &ns).map_err(|e| e.to_string())?.slope;
    let above = hellinger_trend(&spec, 0.9, &ns).map_err(|e| e.to_string())?.slope;
    let secs = start.elapsed().as_secs_f64();
    check(
        below > 0.05 && above < -0.05,
        format!("slope {below:.4} at beta 0.5, {above:.4} at beta 0.9, {secs:.2} s"),
    )
}

fn sbm_reduction() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for r in [0.3, 1.0, 2.0] {
        let pair = analytic_rate(&ModelSpec::SbmPair { r }).unwrap();
        let reduced = analytic_rate(&ModelSpec::SbmReduced { r }).unwrap();
        ok &= pair.eval(-r) == reduced.eval(-r) && pair.eval(r) == reduced.eval(r);
        let want = 0.5 * (1.0 + r.min(1.0));
        let a = solve_beta_star(&pair).beta_star.unwrap_or(f64::NAN);
        let b = solve_beta_star(&reduced).beta_star.unwrap_or(f64::NAN);
        ok &= (a - want).abs() <= 1e-6 && (b - want).abs() <= 1e-6;
        parts.push(format!("r={r}: {a:.9} / {b:.9} vs {want}"));
    }
    check(ok, parts.join("; "))
}

fn tail_condition_negative_control() -> Outcome {
    let spec = ModelSpec::SparseExponential { r: 0.3 };
    let ns = [1e2, 1e4, 1e6, 1e8];
    let mut verdicts = Vec::new();
    for gamma in [1.2, 1.5, 2.0] {
        verdicts.push(tail_condition_estimate(&spec, gamma, &ns).map_err(|e| e.to_string())?.verdict);
    }
    let diverging = verdicts.iter().all(|v| *v == TailVerdict::Diverging);
    let naive = solve_beta_star(&analytic_rate(&spec).unwrap()).beta_upper_sharp;
    let cited = closed_form_beta(&spec).map_err(|e| e.to_string())?;
    check(
        diverging && (naive - 0.7).abs() <= 1e-6 && (naive - cited).abs() >= 0.04,
        format!("verdicts {verdicts:?}; naive boundary {naive:.6}, cited {cited}"),
    )
}

fn curie_weiss_convexity() -> Outcome {
    let count = |theta: f64| {
        let rate = analytic_rate(&ModelSpec::CurieWeiss { theta, mu: 0.5 }).unwrap();
        let (lo, hi) = convexity_range(&rate);
        midpoint_violations(&rate, lo, hi, 401)
    };
    let (high_temp, low_temp) = (count(0.5), count(1.5));
    check(high_temp == 0 && low_temp >= 1, format!("violations {high_temp} at theta 0.5, {low_temp} at theta 1.5"))
}

fn sweep_determinism() -> Outcome {
    let mut config = ExperimentConfig {
        spec: ModelSpec::Heteroscedastic { r: 0.3, sigma2: 2.0 },
        n_values: vec![200, 1000],
        beta_grid: vec![0.4, 0.6, 0.8],
        test_kind: TestKind::HcStar,
        delta: 0.1,
        replications: 20,
        master_seed: 7,
        output_path: None,
        workers: Some(1),
        null_control: false,
    };
    let run = |c: &ExperimentConfig| phase_sweep(c).and_then(|s| s.to_csv()).map_err(|e| e.to_string());
    let first = run(&config)?;
    let again = run(&config)?;
    config.workers = Some(3);
    let threaded = run(&config)?;
    check(
        first == again && first == threaded,
        format!("{} bytes, identical across reruns and 1 vs 3 workers: {}", first.len(), first == again && first == threaded),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("boundary catalog equivalence", catalog_equivalence),
        ("Legendre round trip", legendre_round_trip),
        ("HC optimality equality", hc_optimality_equality),
        ("t0/t1 oracle", t0_t1_oracle),
        ("HC* equals classical HC", hc_reduces_to_classical),
        ("phase-transition direction", phase_transition_direction),
        ("Hellinger trend", hellinger_slopes),
        ("SBM reduction fidelity", sbm_reduction),
        ("tail-condition negative control", tail_condition_negative_control),
        ("Curie-Weiss convexity transition", curie_weiss_convexity),
        ("sweep determinism", sweep_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
