//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! The process exits 0 after printing every line so that a failing
//! criterion is reported rather than aborting the run; set
//! `WEXP_ACCEPTANCE_STRICT=1` to exit non-zero on any FAIL.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use wexp::chaos::{coeff3, coeff3_top, linearize_product, triangular};
use wexp::estimators::{quadratic_error, variation};
use wexp::expansion::{
    approx_from_grid, approx_samples, assemble, conditional_terms, expand_expectation,
    expansion_density, linspace, target_samples, ApproxSample, ExpansionConfig, TestFunction,
};
use wexp::exponent::measure_rate;
use wexp::parallel::try_par_map;
use wexp::paths::{sample_wiener, solve, CoefFn, Scheme};
use wexp::rates::{dyadic_grid, measure_form_rate, ACCEPTANCE_FORMS};
use wexp::stats::{ks_normal, ks_pvalue, normal_pdf, summarize};
use wexp::volatility::{
    error_expansion_terms, robust_rv, simulate_robust, Derivative, Filter, FilterSpec,
    RobustVolConfig, DEFAULT_GUARD,
};
use wexp::weights::{FamilyKind, WeightFamily, WeightFn};

const SEED: u64 = 20_240_601;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Criterion 1: coefficient oracle equivalence, q ≤ 8, under 5 s.
fn coefficients() -> Outcome {
    let start = Instant::now();
    let mut mismatches = 0;
    let mut checked = 0;
    for q1 in 0..=8u32 {
        for q2 in 0..=8 {
            for q3 in 0..=8 {
                let lin = linearize_product(&[q1, q2, q3]).unwrap();
                let qbar = q1 + q2 + q3;
                for nu in 0..=qbar {
                    let want = if 2 * nu <= qbar {
                        lin.get(&(qbar - 2 * nu)).map_or(0, |t| t.coef)
                    } else {
                        0
                    };
                    mismatches += usize::from(coeff3(q1, q2, q3, nu).unwrap() != want);
                    checked += 1;
                }
                let top = coeff3_top(q1, q2, q3).unwrap();
                let expect = if qbar % 2 == 0 {
                    coeff3(q1, q2, q3, qbar / 2).unwrap()
                } else {
                    0
                };
                mismatches += usize::from(top != expect);
                mismatches += usize::from(!triangular(q1, q2, q3) && top != 0);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 5.0,
        format!("{checked} coefficients, {mismatches} mismatches, {secs:.2} s (limit 5 s)"),
    )
}

/// Criterion 2: measured L² slopes within ±0.1 of the exponents.
fn rates() -> Outcome {
    let grid = dyadic_grid(64, 4096);
    let mut pass = true;
    let mut parts = Vec::new();
    for f in ACCEPTANCE_FORMS {
        let est = measure_form_rate(f, &grid, 100_000, 2, SEED).unwrap();
        let e = f.exponent().to_f64();
        let ok = (est.slope - e).abs() <= 0.1;
        pass &= ok;
        parts.push(format!("{f}: {:.4}±{:.4} vs {e}", est.slope, est.slope_se));
    }
    outcome(pass, parts.join("; "))
}

/// Criterion 3: unit weights, `Q = {2}`, `n = 1024`: `Var = 2` within 5 SE
/// and KS distance to `N(0, 2)` at most 0.02.
fn clt() -> Outcome {
    let fam = WeightFamily::new(FamilyKind::Constant, vec![(2, WeightFn::Const(1.0))]).unwrap();
    let reps = 100_000;
    let v: Vec<f64> = try_par_map(reps, |rep| {
        variation(&fam, &sample_wiener(1024, 1, SEED, rep)?).map(|s| s.v_n)
    })
    .unwrap();
    let s = summarize(&v);
    let m4 = v.iter().map(|x| (x - s.mean).powi(4)).sum::<f64>() / v.len() as f64;
    let se_var = ((m4 - s.var * s.var) / v.len() as f64).sqrt();
    let ks = ks_normal(&v, 0.0, 2f64.sqrt());
    let var_ok = (s.var - 2.0).abs() <= 5.0 * se_var;
    outcome(
        var_ok && ks <= 0.02,
        format!(
            "var {:.4} (se {:.4}, |dev| {:.2} SE), KS {:.4} (limit 0.02)",
            s.var,
            se_var,
            (s.var - 2.0).abs() / se_var,
            ks
        ),
    )
}

/// `E[(ξ² − 1)³]` by expanding the cube and using `E[ξ^{2k}] = (2k − 1)!!`.
fn third_cumulant_oracle() -> f64 {
    let even_moment = |k: u32| (1..=k).map(|i| (2 * i - 1) as f64).product::<f64>();
    let binom = [1.0, 3.0, 3.0, 1.0];
    (0..=3u32)
        .map(|i| binom[i as usize] * if (3 - i) % 2 == 1 { -1.0 } else { 1.0 } * even_moment(i))
        .sum()
}

/// Criterion 4: Edgeworth identity for unit weights and the third-cumulant
/// correction of `z³`.
fn edgeworth() -> Outcome {
    let fam = WeightFamily::anticipative_quadratic(WeightFn::Const(1.0)).unwrap();
    let sample = approx_from_grid(&fam, &sample_wiener(64, 8, SEED, 0).unwrap()).unwrap();
    let zs = linspace(-8.0, 8.0, 320);
    let mut worst = 0.0_f64;
    for n in [64usize, 1024] {
        for (z, _, p1) in expansion_density(&[sample], n, &zs) {
            let u = z / 2f64.sqrt();
            let he3 = u * u * u - 3.0 * u;
            let want = normal_pdf(u) / 2f64.sqrt()
                * (1.0 + (4.0 / 3.0) * 2f64.powf(-1.5) * he3 / (n as f64).sqrt());
            worst = worst.max((p1 - want).abs());
        }
    }
    let oracle = third_cumulant_oracle();
    let cfg = ExpansionConfig {
        reps: 100_000,
        target_refine: 8,
        approx_reps: 10_000,
        approx_n: 64,
        approx_refine: 8,
        seed: SEED,
    };
    let r = expand_expectation(&fam, &TestFunction::Z3, 1024, &cfg).unwrap();
    let corr_ok = (r.correction - oracle).abs() <= (3.0 * r.se_correction).max(1e-9 * oracle);
    let scaled_target = r.target * 32.0;
    outcome(
        worst <= 1e-10 && corr_ok && (oracle - 8.0).abs() < 1e-12,
        format!(
            "density max diff {worst:.2e} (limit 1e-10); oracle E[He2^3] = {oracle}; correction {:.6} (se {:.2e}); simulated sqrt(n) E[Z^3] = {:.3} (se {:.3})",
            r.correction,
            r.se_correction,
            scaled_target,
            32.0 * r.se_target
        ),
    )
}

/// Standard error of `err0 − err1` with the target shared by both errors and
/// the two approximations computed on the same paths.
fn paired_gap_se(
    f: &TestFunction,
    n: usize,
    target: (f64, f64),
    approx: &[ApproxSample],
) -> (f64, f64) {
    let scale = (n as f64).sqrt().recip();
    let per_path: Vec<(f64, f64)> = approx
        .iter()
        .map(|s| {
            let (z0, c) = conditional_terms(f, s);
            (z0, z0 + scale * c)
        })
        .collect();
    let m = per_path.len() as f64;
    let z0 = per_path.iter().map(|p| p.0).sum::<f64>() / m;
    let f1 = per_path.iter().map(|p| p.1).sum::<f64>() / m;
    let (t, se_t) = target;
    let s0 = (t - z0).signum();
    let s1 = (t - f1).signum();
    let mixed: Vec<f64> = per_path.iter().map(|(a, b)| -s0 * a + s1 * b).collect();
    let sm = summarize(&mixed);
    let gap = (t - z0).abs() - (t - f1).abs();
    let var = (s0 - s1).powi(2) * se_t * se_t + sm.se * sm.se;
    (gap, var.sqrt())
}

/// Criterion 5: first-order improvement for `a = 2 + sin`.
fn improvement() -> Outcome {
    let fam = WeightFamily::anticipative_quadratic(WeightFn::Sin2).unwrap();
    let cfg = ExpansionConfig {
        reps: 1_000_000,
        target_refine: 8,
        approx_reps: 1_000_000,
        approx_n: 64,
        approx_refine: 8,
        seed: SEED,
    };
    let functions = [
        TestFunction::Z2,
        TestFunction::Z3,
        TestFunction::SinZ,
        TestFunction::ZX,
    ];
    let n_grid = [64usize, 256, 1024];
    let approx = approx_samples(&fam, &cfg).unwrap();
    let mut reports = Vec::new();
    for &n in &n_grid {
        let targets = target_samples(&fam, n, &cfg).unwrap();
        for f in &functions {
            let r = assemble(f, n, &targets, &approx).unwrap();
            let (gap, se) = paired_gap_se(f, n, (r.target, r.se_target), &approx);
            reports.push((*f, n, r, gap, se));
        }
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for f in &functions {
        let rows: Vec<_> = reports.iter().filter(|r| r.0 == *f).collect();
        let mut line = format!("{f}:");
        for (_, n, r, gap, se) in &rows {
            let better = *gap > 3.0 * se;
            pass &= better;
            let gap_text = if *se > 0.0 {
                format!("{:.1} SE", gap / se)
            } else {
                "0 (identical)".to_string()
            };
            line += &format!(
                " n={n} err0 {:.3e} err1 {:.3e} gap {gap_text}{}",
                r.err0,
                r.err1,
                if better { "" } else { " [no gain]" }
            );
        }
        for w in rows.windows(2) {
            let (a, b) = (&w[0].2, &w[1].2);
            let rn = |r: &wexp::expansion::ExpansionReport| (r.n as f64).sqrt();
            let s1 = (rn(a) * a.se_err1).hypot(rn(b) * b.se_err1);
            let s0 = (rn(a) * a.se_err0).hypot(rn(b) * b.se_err0);
            let e1_ok = b.scaled_err1() <= a.scaled_err1() + 3.0 * s1;
            let e0_ok = b.scaled_err0() >= a.scaled_err0() - 3.0 * s0;
            if !e1_ok {
                line += &format!(" [sqrt(n) err1 rises {}->{}]", a.n, b.n);
            }
            if !e0_ok {
                line += &format!(" [sqrt(n) err0 falls {}->{}]", a.n, b.n);
            }
            pass &= e1_ok && e0_ok;
        }
        if let (Some(first), Some(last)) = (rows.first(), rows.last()) {
            if last.2.scaled_err1() >= first.2.scaled_err1() {
                line += " [sqrt(n) err1 does not decrease overall]";
                pass = false;
            }
        }
        parts.push(line);
    }
    outcome(pass, parts.join("; "))
}

/// Criterion 6: `Z_n / √G_∞` against `N(0,1)` at level 0.01 for the
/// weighted quadratic error and the filtered realized volatility.
fn standardization() -> Outcome {
    let reps = 100_000;
    let fam = WeightFamily::anticipative_quadratic(WeightFn::Sin2).unwrap();
    let x5: Vec<f64> = try_par_map(reps, |rep| {
        let g = sample_wiener(1024, 8, SEED, rep)?;
        let q = quadratic_error(&fam, &g)?;
        Ok::<_, wexp::Error>(q.sample.z_n / fam.g_infinity(&g).sqrt())
    })
    .unwrap();
    let cfg = RobustVolConfig {
        sigma: CoefFn::Tanh {
            base: 1.0,
            amp: 0.1,
        },
        n: 1024,
        refine: 4,
        reps,
        seed: SEED,
        ..RobustVolConfig::default()
    };
    let rows = simulate_robust(&cfg).unwrap();
    let x6: Vec<f64> = rows.iter().map(|r| r.z_n / r.g_inf.sqrt()).collect();
    let (d5, d6) = (ks_normal(&x5, 0.0, 1.0), ks_normal(&x6, 0.0, 1.0));
    let (p5, p6) = (ks_pvalue(d5, x5.len()), ks_pvalue(d6, x6.len()));
    outcome(
        p5 >= 0.01 && p6 >= 0.01,
        format!(
            "weighted quadratic error: KS {d5:.5}, p {p5:.4}; filtered RV ({}, lambda {}): KS {d6:.5}, p {p6:.4}",
            cfg.filter.phi, cfg.filter.lambda
        ),
    )
}

/// Criterion 7: residual slope at most −0.9 and exact identity-filter
/// collapse.
fn decomposition() -> Outcome {
    let sigma = CoefFn::Tanh {
        base: 1.0,
        amp: 0.3,
    };
    let drift = CoefFn::Linear(0.1, -0.2);
    let filt = FilterSpec::new(
        Filter::SmoothCut {
            c: 1.5,
            c0: DEFAULT_GUARD,
        },
        0.1,
    )
    .unwrap();
    let est = measure_rate(
        |n, rep| {
            let g = sample_wiener(n, n / 4, SEED, rep)?;
            let path = solve(g, &sigma, &drift, 0.2, Scheme::Milstein)?;
            Ok(error_expansion_terms(&path, &filt, Derivative::Tangent)?.residual)
        },
        &dyadic_grid(64, 1024),
        300,
        2,
    )
    .unwrap();
    let one = FilterSpec::new(Filter::One, 0.1).unwrap();
    let mut exact = true;
    for rep in 0..50 {
        let g = sample_wiener(256, 4, SEED, rep).unwrap();
        let path = solve(g, &sigma, &drift, 0.2, Scheme::Milstein).unwrap();
        let rv = robust_rv(&path, &one).unwrap();
        exact &= rv.v_robust == rv.u_n;
    }
    outcome(
        est.slope <= -0.9 && exact,
        format!(
            "residual L2 slope {:.3} (se {:.3}, limit -0.9) with {}; identity filter exact on 50 paths: {exact}",
            est.slope, est.slope_se, filt.phi
        ),
    )
}

/// Criterion 8: the smooth-cut filter reduces jump bias at 3 SE and leaves
/// clean data within the pass band for 99% of replications.
fn robustness() -> Outcome {
    let cfg = RobustVolConfig {
        sigma: CoefFn::Tanh {
            base: 1.0,
            amp: 0.1,
        },
        n: 1024,
        refine: 4,
        reps: 20_000,
        jump_rate: 5.0,
        jump_scale: 10.0,
        seed: SEED,
        ..RobustVolConfig::default()
    };
    let band = 1e-2;
    let rows = simulate_robust(&cfg).unwrap();
    let eu: Vec<f64> = rows.iter().map(|r| r.u_n - r.iv).collect();
    let ev: Vec<f64> = rows.iter().map(|r| r.v_robust - r.iv).collect();
    let (su, sv) = (summarize(&eu), summarize(&ev));
    let (gu, gv) = (su.mean.signum(), sv.mean.signum());
    let diff: Vec<f64> = eu.iter().zip(&ev).map(|(u, v)| gu * u - gv * v).collect();
    let sd = summarize(&diff);
    let pass_rate = rows
        .iter()
        .filter(|r| ((r.clean_v_robust - r.clean_u_n) / r.clean_u_n).abs() < band)
        .count() as f64
        / rows.len() as f64;
    outcome(
        sd.mean > 3.0 * sd.se && pass_rate >= 0.99,
        format!(
            "bias U_n {:.4} (se {:.4}), bias filtered {:.4} (se {:.4}), gap {:.1} SE; clean pass rate {:.4} at band {band} ({}, lambda {})",
            su.mean,
            su.se,
            sv.mean,
            sv.se,
            sd.mean / sd.se,
            pass_rate,
            cfg.filter.phi,
            cfg.filter.lambda
        ),
    )
}

fn selftest_run(dir: &Path, threads: &str) -> bool {
    Command::new(env!("CARGO_BIN_EXE_wexp"))
        .args(["selftest", "--seed", "7", "--out-dir"])
        .arg(dir)
        .env("WEXP_THREADS", threads)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

/// Criterion 9: selftest artifacts are byte-identical for 1 and 8 workers.
fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("t1"), tmp.path().join("t8"));
    let ran = selftest_run(&a, "1") && selftest_run(&b, "8");
    let mut names: Vec<String> = std::fs::read_dir(&a)
        .map(|d| {
            d.filter_map(|e| e.ok())
                .map(|e| e.file_name().to_string_lossy().into_owned())
                .collect()
        })
        .unwrap_or_default();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| std::fs::read(a.join(n)).ok() != std::fs::read(b.join(n)).ok())
        .collect();
    outcome(
        ran && !names.is_empty() && differing.is_empty(),
        format!(
            "selftest exit ok: {ran}; {} artifacts compared, differing: {differing:?}",
            names.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("coefficient oracle equivalence", coefficients),
        ("exponent vs measured rate", rates),
        ("CLT sanity", clt),
        ("Edgeworth oracle", edgeworth),
        ("expansion improvement", improvement),
        ("mixed-normal standardization", standardization),
        ("robust-vol error decomposition", decomposition),
        ("robustness property", robustness),
        ("determinism", determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("WEXP_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        failed += usize::from(!o.pass);
        println!(
            "criterion {id} {}: {name}: {} [{:.1} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {failed} criteria failed");
    if failed > 0 && std::env::var("WEXP_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
