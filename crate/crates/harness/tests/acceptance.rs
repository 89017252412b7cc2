//! Acceptance criteria 1 to 12. Runs as a plain binary (`harness = false`)
//! and prints one line per criterion:
//!
//! ```text
//! criterion  4  FAIL  riemann convergence  (...)
//! ```
//!
//! The process exits nonzero if any criterion fails, except those listed in
//! [`KNOWN_UNATTAINABLE`], whose statement contradicts the exact arithmetic.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use fcp_core::conformal::{calibrate, log_volume_score, score, ScoreNorm};
use fcp_core::grid::{discretize, weighted_distance, weighted_norm};
use fcp_core::intervals::adjust_quantile_bounds;
use fcp_core::pde::{
    darcy_face_potentials, ns_rollout, solve_darcy_1d, solve_poisson_2d, Forcing, NsConfig, PoissonMethod,
};
use fcp_core::rng::stream_rng;
use fcp_core::transport::fit_log_linear;
use fcp_core::{Field, Grid, GridKind};
use fcp_harness::config::{Experiment, ExperimentConfig, Problem};
use fcp_harness::data::{problem_grid, static_splits};
use fcp_harness::experiments::{ablation, fit_operator, forecast, poisson, superres};
use fcp_harness::report::{coefficient_of_variation, mean, spearman};
use fcp_harness::run_experiment;
use rand::Rng;
use rand_distr::StandardNormal;

/// Criteria whose literal statement is arithmetically unreachable. They are
/// still evaluated and printed as FAIL.
const KNOWN_UNATTAINABLE: &[usize] = &[4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

type Check = fn() -> Outcome;

fn seeded(cfg: ExperimentConfig, seed: u64) -> ExperimentConfig {
    ExperimentConfig { seed, ..cfg }
}

/// Mean functional coverage over 50 calibration/test redraws.
fn marginal_coverage() -> Outcome {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::defaults(Experiment::PoissonQuantile);
    cfg.data.n_cal = 100;
    cfg.data.n_test = 500;
    cfg.evaluation.resamples = 50;
    let run = || -> fcp_harness::Result<Vec<poisson::Resample>> {
        let grid = problem_grid(Problem::Poisson, GridKind::Uniform, cfg.data.resolution)?;
        let splits = static_splits(&cfg, cfg.seed, &grid)?;
        let op = fit_operator(&cfg, &splits.train)?;
        poisson::coverage_resamples(&cfg, &op, &grid)
    };
    let r = match run() {
        Ok(r) => r,
        Err(e) => return outcome(false, e.to_string()),
    };
    let m = mean(&r.iter().map(|s| s.functional).collect::<Vec<_>>());
    let elapsed = start.elapsed();
    outcome(
        (0.88..=0.92).contains(&m) && elapsed < Duration::from_secs(300),
        format!(
            "mean C_f = {m:.4} over {} redraws, {:.1}s",
            r.len(),
            elapsed.as_secs_f64()
        ),
    )
}

/// Weighted and unweighted radii coincide on uniform grids.
fn uniform_norm_equivalence() -> Outcome {
    let mut rng = stream_rng(2, 0);
    let mut worst = 0.0f64;
    for trial in 0..200 {
        let n = rng.random_range(1..=40usize);
        let shape: Vec<usize> = (0..rng.random_range(1..=3usize))
            .map(|_| rng.random_range(1..=9usize))
            .collect();
        let g = Grid::uniform(&shape).unwrap();
        let pairs: Vec<(Field, Field)> = (0..n)
            .map(|_| {
                let mut draw = || {
                    let v: Vec<f64> = (0..g.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    Field::new(g.clone(), v).unwrap()
                };
                (draw(), draw())
            })
            .collect();
        let alpha = rng.random_range(0.01..0.99);
        let tau = |norm| {
            let s: Vec<f64> = pairs.iter().map(|(p, t)| score(p, t, norm).unwrap()).collect();
            calibrate(&s, alpha).unwrap().tau()
        };
        let (w, u) = (tau(ScoreNorm::Weighted), tau(ScoreNorm::Unweighted));
        if w.is_finite() || u.is_finite() {
            worst = worst.max((w - u).abs());
        } else if w != u {
            return outcome(false, format!("trial {trial}: {w} vs {u}"));
        }
    }
    let pipeline = ablation::geometry_runs(&ExperimentConfig {
        evaluation: fcp_harness::config::EvaluationConfig {
            resamples: 1,
            geometries: vec![GridKind::Uniform],
        },
        ..ExperimentConfig::defaults(Experiment::GridAblation)
    });
    let pipeline_gap = match pipeline {
        Ok(runs) => (runs[0].relative.tau - runs[0].weighted.tau).abs(),
        Err(e) => return outcome(false, e.to_string()),
    };
    worst = worst.max(pipeline_gap);
    outcome(
        worst <= 1e-12,
        format!("max |τ_w − τ_u| = {worst:.2e} (200 random sets + Poisson pipeline)"),
    )
}

/// CV of τ across the mapped geometries is smaller for the weighted norm.
fn geometry_ablation() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for seed in 0..3 {
        let start = Instant::now();
        let runs = match ablation::geometry_runs(&seeded(ExperimentConfig::defaults(Experiment::GridAblation), seed)) {
            Ok(r) => r,
            Err(e) => return outcome(false, e.to_string()),
        };
        let elapsed = start.elapsed();
        let rel = coefficient_of_variation(&runs.iter().map(|r| r.relative.tau).collect::<Vec<_>>());
        let w = coefficient_of_variation(&runs.iter().map(|r| r.weighted.tau).collect::<Vec<_>>());
        pass &= w < rel && elapsed < Duration::from_secs(120);
        lines.push(format!(
            "seed {seed}: cv weighted {:.1}% vs relative {:.1}% ({:.1}s)",
            100.0 * w,
            100.0 * rel,
            elapsed.as_secs_f64()
        ));
    }
    outcome(pass, lines.join("; "))
}

/// Midpoint sum of x² against 1/3, and convergence order of ‖sin 2πx‖².
fn riemann_convergence() -> Outcome {
    let mut literal = true;
    let mut exact = true;
    let mut worst_exact = 0.0f64;
    for n in [8usize, 16, 32, 64, 128] {
        let g = Grid::uniform(&[n]).unwrap();
        let x = discretize(|p| p[0], &g).unwrap();
        let dev = 1.0 / 3.0 - weighted_norm(&x).powi(2);
        let n2 = (n * n) as f64;
        literal &= (dev - 1.0 / (192.0 * n2)).abs() <= 1e-12;
        let e = (dev - 1.0 / (12.0 * n2)).abs();
        worst_exact = worst_exact.max(e);
        exact &= e <= 1e-12;
    }
    let mut min_order = f64::INFINITY;
    let mut min_pairwise = f64::INFINITY;
    let mut exact_geometries = Vec::new();
    for kind in GridKind::MAPPED {
        let errs: Vec<f64> = [8usize, 16, 32, 64, 128]
            .iter()
            .map(|&n| {
                let g = Grid::new(kind, &[n]).unwrap();
                let f = discretize(|p| (2.0 * PI * p[0]).sin(), &g).unwrap();
                (weighted_norm(&f).powi(2) - 0.5).abs()
            })
            .collect();
        // The uniform midpoint sum of sin² is exact up to rounding; an order
        // is only meaningful where the error is resolved.
        if errs.iter().all(|&e| e < 1e-13) {
            exact_geometries.push(kind.name());
            continue;
        }
        // Observed order: least-squares slope of log|e| against log N over
        // the whole range; pairwise ratios are reported for reference.
        let x: Vec<f64> = (3..=7).map(|p| p as f64).collect();
        let y: Vec<f64> = errs.iter().map(|e| e.log2()).collect();
        let (mx, my) = (mean(&x), mean(&y));
        let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
        let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
        min_order = min_order.min(-sxy / sxx);
        for w in errs.windows(2) {
            min_pairwise = min_pairwise.min((w[0] / w[1]).log2());
        }
    }
    outcome(
        literal && min_order >= 1.9,
        format!(
            "1/3 − Σ h x² = 1/(192N²): {}; = 1/(12N²): {} (max err {worst_exact:.1e}); \
             sin(2πx) min fitted order {min_order:.3} \
             (min pairwise {min_pairwise:.3}), exact on {exact_geometries:?}",
            if literal { "holds" } else { "does not hold" },
            if exact { "holds" } else { "does not hold" },
        ),
    )
}

/// Adjusted bounds sit at relative radius τ, and a second pass is a no-op.
fn quantile_adjustment() -> Outcome {
    let mut rng = stream_rng(5, 0);
    let g = Grid::uniform(&[16, 16]).unwrap();
    let mut worst_radius = 0.0f64;
    let mut worst_idem = 0.0f64;
    for _ in 0..100 {
        let mut draw = |scale: f64, shift: f64| {
            let v: Vec<f64> = (0..g.len())
                .map(|_| shift + scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Field::new(g.clone(), v).unwrap()
        };
        let mid = draw(1.0, 0.5);
        let lo = mid.sub(&draw(0.2, 0.0).map(f64::abs)).unwrap();
        let hi = mid.add(&draw(0.3, 0.0).map(f64::abs)).unwrap();
        let tau = rng.random_range(0.01..1.0);
        let (alo, ahi) = adjust_quantile_bounds(&lo, &mid, &hi, tau).unwrap();
        for b in [&alo, &ahi] {
            let r = weighted_distance(b, &mid).unwrap() / weighted_norm(&mid);
            worst_radius = worst_radius.max((r - tau).abs());
        }
        let (blo, bhi) = adjust_quantile_bounds(&alo, &mid, &ahi, tau).unwrap();
        for (a, b) in [(&alo, &blo), (&ahi, &bhi)] {
            for (x, y) in a.values().iter().zip(b.values()) {
                worst_idem = worst_idem.max((x - y).abs());
            }
        }
    }
    outcome(
        worst_radius <= 1e-12 && worst_idem <= 1e-12,
        format!("max |r − τ| = {worst_radius:.1e}, max idempotence change = {worst_idem:.1e} (100 triplets)"),
    )
}

fn solver_oracles() -> Outcome {
    // Darcy, k = 1 on [0, ½), 2 on [½, 1].
    let g = Grid::uniform(&[256]).unwrap();
    let k = discretize(|x| if x[0] < 0.5 { 1.0 } else { 2.0 }, &g).unwrap();
    let u = solve_darcy_1d(&k).unwrap();
    let mid = 0.5 * (u.values()[127] + u.values()[128]);
    let face = darcy_face_potentials(&k, &u).unwrap()[128];
    let darcy = (mid - 2.0 / 3.0).abs();

    // Poisson manufactured solution.
    let err = |n: usize| {
        let g = Grid::uniform(&[n, n]).unwrap();
        let f = discretize(|x| -2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin(), &g).unwrap();
        let exact = discretize(|x| (PI * x[0]).sin() * (PI * x[1]).sin(), &g).unwrap();
        weighted_distance(&solve_poisson_2d(&f, PoissonMethod::Direct).unwrap(), &exact).unwrap()
    };
    let e: Vec<f64> = [32, 64, 128].into_iter().map(err).collect();
    let order = e.windows(2).map(|w| (w[0] / w[1]).log2()).fold(f64::INFINITY, f64::min);

    // Taylor–Green decay.
    let nu = 0.01;
    let cfg = NsConfig {
        grid_size: 64,
        viscosity: nu,
        forcing: Forcing::None,
        horizon: 2.0,
        snapshots: 5,
        ..NsConfig::default()
    };
    let g = Grid::uniform(&[64, 64]).unwrap();
    let w0 = discretize(|x| (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).sin(), &g).unwrap();
    let snaps = ns_rollout(&w0, cfg).unwrap();
    let n0 = weighted_norm(&w0);
    let tg = snaps
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let expected = (-8.0 * PI * PI * nu * 0.5 * i as f64).exp();
            (weighted_norm(s) / n0 / expected - 1.0).abs()
        })
        .fold(0.0, f64::max);

    outcome(
        darcy <= 1e-3 && order >= 1.9 && tg <= 0.01,
        format!(
            "darcy |u(½) − 2/3| = {darcy:.1e} (face value {face:.12}); poisson min order {order:.3}; \
             taylor–green max rel. dev. {tg:.1e}"
        ),
    )
}

/// Independent k: exact integer ceiling of (1000 − a)(n + 1)/1000 for α = a/1000.
fn calibration_oracle() -> Outcome {
    let mut rng = stream_rng(7, 0);
    for trial in 0..1000 {
        let n = rng.random_range(1..=300usize);
        let a = rng.random_range(1..1000u64);
        let alpha = a as f64 / 1000.0;
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let c = match calibrate(&scores, alpha) {
            Ok(c) => c,
            Err(e) => return outcome(false, format!("trial {trial}: {e}")),
        };
        let k = (((1000 - a) * (n as u64 + 1)).div_ceil(1000)) as usize;
        let mut sorted = scores.clone();
        sorted.sort_by(f64::total_cmp);
        let expected = if k > n { f64::INFINITY } else { sorted[k - 1] };
        if c.tau() != expected || c.k_index() != k {
            return outcome(
                false,
                format!(
                    "trial {trial}: n={n} α={alpha}: got (k={}, τ={}), expected (k={k}, τ={expected})",
                    c.k_index(),
                    c.tau()
                ),
            );
        }
    }
    outcome(true, "1000 instances match sort-and-index exactly")
}

/// Adjusted coverage at 2× and 4× the calibration resolution is at least the
/// unadjusted coverage.
fn superres_direction() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    for seed in 0..3 {
        let r = match superres::compute(&seeded(ExperimentConfig::defaults(Experiment::Superres), seed)) {
            Ok(r) => r.0,
            Err(e) => return outcome(false, e.to_string()),
        };
        for t in &r.targets {
            pass &= t.adjusted >= t.unadjusted;
            lines.push(format!(
                "s{seed} R={}: {:.2} → {:.2}",
                t.resolution, t.unadjusted, t.adjusted
            ));
        }
    }
    outcome(pass, lines.join(", "))
}

/// CES rises and IA falls with forecast step; CES = distance + spread.
fn forecast_trend() -> Outcome {
    let mut pass = true;
    let mut lines = Vec::new();
    let mut identity = 0.0f64;
    for seed in 0..3 {
        let cfg = seeded(ExperimentConfig::defaults(Experiment::NsForecast), seed);
        let r = match forecast::compute(&cfg) {
            Ok(r) => r.0,
            Err(e) => return outcome(false, e.to_string()),
        };
        let t: Vec<f64> = (1..=cfg.solver.steps).map(|t| t as f64).collect();
        let ces = spearman(&t, &r.average(|d| d.ces));
        let ia = spearman(&t, &r.average(|d| d.ia));
        for d in r.trajectories.iter().flatten() {
            identity = identity.max((d.ces - (d.mean_distance + d.spread)).abs());
        }
        pass &= t.len() == 8 && ces >= 0.7 && ia <= -0.7;
        lines.push(format!("seed {seed}: ρ(CES) = {ces:.3}, ρ(IA) = {ia:.3}"));
    }
    pass &= identity <= 1e-12;
    lines.push(format!("max |CES − (d + ES)| = {identity:.1e}"));
    outcome(pass, lines.join("; "))
}

/// Closed-form volume of `{h : Σ w h² ≤ τ²}` for d ≤ 3.
fn ellipsoid_volume(w: &[f64], tau: f64) -> f64 {
    let unit = match w.len() {
        1 => 2.0,
        2 => PI,
        3 => 4.0 / 3.0 * PI,
        _ => unreachable!(),
    };
    unit * tau.powi(w.len() as i32) / w.iter().product::<f64>().sqrt()
}

fn log_volume() -> Outcome {
    let mut rng = stream_rng(10, 0);
    let mut worst = 0.0f64;
    for _ in 0..300 {
        let d = rng.random_range(1..=3usize);
        let w: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..5.0)).collect();
        let tau = rng.random_range(0.05..3.0);
        let got = log_volume_score(&w, tau, d).unwrap();
        worst = worst.max((got + ellipsoid_volume(&w, tau).ln()).abs());
        // Unit weights: the d-ball of radius τ.
        let ball = PI.powf(d as f64 / 2.0) / gamma_half(d as f64 / 2.0 + 1.0) * tau.powi(d as i32);
        worst = worst.max((log_volume_score(&vec![1.0; d], tau, d).unwrap() + ball.ln()).abs());
    }
    outcome(
        worst <= 1e-10,
        format!("max deviation from −log V = {worst:.1e} (600 checks, d ≤ 3)"),
    )
}

/// Γ at 3/2, 2 and 5/2, the only arguments needed for d ≤ 3.
fn gamma_half(x: f64) -> f64 {
    match (2.0 * x) as u32 {
        3 => PI.sqrt() / 2.0,
        4 => 1.0,
        5 => 3.0 * PI.sqrt() / 4.0,
        _ => unreachable!(),
    }
}

fn transport_regression() -> Outcome {
    let rs: Vec<usize> = (0..10).map(|i| 16 + 4 * i).collect();
    let (s, b) = (0.002, -3.0);
    let exact: Vec<(usize, f64)> = rs.iter().map(|&r| (r, (s * r as f64 + b).exp())).collect();
    let fit = fit_log_linear(&exact).unwrap();
    let exact_err = (fit.slope - s).abs().max((fit.intercept - b).abs());

    let mut rng = stream_rng(11, 0);
    let noisy: Vec<(usize, f64)> = rs
        .iter()
        .map(|&r| {
            (
                r,
                (s * r as f64 + b + 0.01 * rng.sample::<f64, _>(StandardNormal)).exp(),
            )
        })
        .collect();
    let fit = fit_log_linear(&noisy).unwrap();
    let x: Vec<f64> = noisy.iter().map(|p| p.0 as f64).collect();
    let y: Vec<f64> = noisy.iter().map(|p| p.1.ln()).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let ols_s = sxy / sxx;
    let ols_b = my - ols_s * mx;
    let ols_err = (fit.slope - ols_s).abs().max((fit.intercept - ols_b).abs());
    outcome(
        exact_err <= 1e-10 && ols_err <= 1e-10,
        format!("noise-free error {exact_err:.1e}; OLS oracle gap {ols_err:.1e}"),
    )
}

fn output_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|e| e.to_str()), Some("csv" | "fcpd")) {
                out.insert(
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                );
            }
        }
    }
    out
}

fn determinism() -> Outcome {
    let mut compared = 0;
    for e in Experiment::ALL {
        let mut outputs = Vec::new();
        for _ in 0..2 {
            let tmp = tempfile::tempdir().unwrap();
            let cfg = ExperimentConfig {
                out: tmp.path().to_path_buf(),
                ..ExperimentConfig::defaults(e)
            };
            if let Err(err) = run_experiment(&cfg) {
                return outcome(false, format!("{e}: {err}"));
            }
            outputs.push(output_bytes(&cfg.run_dir()));
        }
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            return outcome(false, format!("{e}: outputs differ between runs"));
        }
        compared += outputs[0].len();
    }
    outcome(
        true,
        format!("{compared} CSV/FCPD files byte-identical across two runs of every experiment"),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, Check); 12] = [
        ("marginal coverage", marginal_coverage),
        ("uniform-grid norm equivalence", uniform_norm_equivalence),
        ("grid-geometry ablation direction", geometry_ablation),
        ("riemann convergence", riemann_convergence),
        ("quantile adjustment exactness", quantile_adjustment),
        ("solver oracles", solver_oracles),
        ("calibration oracle", calibration_oracle),
        ("super-resolution direction", superres_direction),
        ("forecast degradation trend", forecast_trend),
        ("log-volume score", log_volume),
        ("transport regression", transport_regression),
        ("determinism", determinism),
    ];
    let mut unexpected = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        let start = Instant::now();
        let o = check();
        println!(
            "criterion {id:>2}  {}  {name}  ({}) [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
        if !o.pass && !KNOWN_UNATTAINABLE.contains(&id) {
            unexpected.push(id);
        }
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
