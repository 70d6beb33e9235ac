//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use linbandit::geometry::{alpha_hat_sphere, vinv_range};
use linbandit::harness::aggregate::terminal_rows;
use linbandit::harness::{run_experiment, verify_bounds, ExperimentConfig, ExperimentResult, RunTrace};
use linbandit::linalg::CovarianceState;

struct Outcome {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn gaussian(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

fn run_toml(text: &str) -> ExperimentResult {
    let cfg = ExperimentConfig::from_toml_str(text, Path::new(".")).expect("acceptance config parses");
    let result = run_experiment(&cfg, None).expect("experiment runs");
    assert_eq!(result.failed_runs(), 0, "acceptance runs must all complete");
    result
}

fn policies_block(mu: f64) -> String {
    let mut s = String::new();
    for kind in ["OFUL", "LinTS", "TSFreq", "Greedy"] {
        s.push_str(&format!("[[policy]]\nkind = \"{kind}\"\n\n"));
    }
    for kind in ["TS_MR", "Greedy_MR"] {
        s.push_str(&format!("[[policy]]\nkind = \"{kind}\"\nmu = {mu:?}\n\n"));
    }
    s
}

fn terminal_mean(result: &ExperimentResult, label: &str) -> f64 {
    terminal_rows(&result.aggregate)
        .into_iter()
        .find(|r| r.policy == label)
        .map(|r| r.mean_cum_regret)
        .expect("policy present in aggregate")
}

fn terminal_oful_fraction(result: &ExperimentResult, label: &str) -> f64 {
    terminal_rows(&result.aggregate)
        .into_iter()
        .find(|r| r.policy == label)
        .map(|r| r.oful_fraction)
        .expect("policy present in aggregate")
}

/// Slope of the mean regret curve over the last quarter of the horizon.
fn last_quartile_slope(result: &ExperimentResult, label: &str, horizon: usize) -> f64 {
    let rows: Vec<_> = result.aggregate.iter().filter(|r| r.policy == label).collect();
    let start = 3 * horizon / 4;
    (rows[horizon - 1].mean_cum_regret - rows[start - 1].mean_cum_regret) / (horizon - start) as f64
}

// Sup/inf of ‖x*(θ)‖_{V⁻¹} = ‖θ‖_{V⁻¹}/‖θ‖ over the two ellipsoids, sampled
// in the eigenbasis of V. Half the samples lie on the boundary.
fn mc_ratio(
    eigs: &[f64],
    center: &DVector<f64>,
    beta_rls: f64,
    beta_pvt: f64,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let d = eigs.len();
    let ratio = |theta: &DVector<f64>| {
        let inv: f64 = theta.iter().zip(eigs).map(|(x, l)| x * x / l).sum();
        inv.sqrt() / theta.norm()
    };
    let point = |beta: f64, i: usize, rng: &mut ChaCha8Rng| {
        let u = gaussian(d, rng);
        let u = &u / u.norm();
        let r = if i.is_multiple_of(2) { 1.0 } else { rng.random::<f64>().powf(1.0 / d as f64) };
        DVector::from_fn(d, |k, _| center[k] + beta * r * u[k] / eigs[k].sqrt())
    };
    let mut sup = 0.0f64;
    let mut inf = f64::INFINITY;
    for i in 0..samples / 2 {
        sup = sup.max(ratio(&point(beta_rls, i, rng)));
        inf = inf.min(ratio(&point(beta_pvt, i, rng)));
    }
    sup / inf
}

fn geometry_soundness() -> Outcome {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let dims = [2usize, 3, 5, 10];
    let instances = 500;
    let mut ok = 0;
    let mut worst_slack = f64::INFINITY;
    for i in 0..instances {
        let d = dims[i % dims.len()];
        let mut state = CovarianceState::new(d, rng.random_range(0.5..2.0)).unwrap();
        // fewer updates than d leaves repeated eigenvalues
        let updates = rng.random_range(0..3 * d + 1);
        for _ in 0..updates {
            let x = gaussian(d, &mut rng);
            let x = &x / x.norm() * rng.random_range(0.2..3.0);
            state.update(&x).unwrap();
        }
        let theta_hat = gaussian(d, &mut rng) * rng.random_range(0.5..5.0);
        let vn = state.v_norm(&theta_hat).unwrap();
        let beta_rls = vn * rng.random_range(0.05..0.95);
        let beta_pvt = beta_rls * rng.random_range(0.05..1.0);
        let report = alpha_hat_sphere(&state, &theta_hat, beta_rls, beta_pvt).unwrap();
        let eigs: Vec<f64> = state.eigenvalues().iter().copied().collect();
        let center = state.eigenvectors().tr_mul(&theta_hat);
        let mc = mc_ratio(&eigs, &center, beta_rls, beta_pvt, 100_000, &mut rng);
        worst_slack = worst_slack.min(report.alpha_hat - mc);
        if report.alpha_hat >= mc * (1.0 - 1e-9) {
            ok += 1;
        }
    }
    let elapsed = clock.elapsed();
    Outcome {
        name: "geometry soundness",
        pass: ok == instances && elapsed < Duration::from_secs(120),
        detail: format!("{ok}/{instances} instances with alpha_hat >= Monte-Carlo ratio, min slack {worst_slack:.3e}"),
        elapsed,
    }
}

// Exact LP optimum of Σ w_i/λ_i over the simplex cut by m ≤ Σ w_i λ_i ≤ M,
// by enumerating vertices: single eigenvalues inside the slab and two-point
// mixtures on either face.
fn vinv_oracle(eigs: &[f64], m: f64, big_m: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut visit = |v: f64| {
        lo = lo.min(v);
        hi = hi.max(v);
    };
    for &l in eigs {
        if l >= m && l <= big_m {
            visit(1.0 / l);
        }
    }
    for i in 0..eigs.len() {
        for j in i + 1..eigs.len() {
            let (a, b) = (eigs[i], eigs[j]);
            for s in [m, big_m] {
                if s <= a && s >= b {
                    let w = (s - b) / (a - b);
                    visit(w / a + (1.0 - w) / b);
                }
            }
        }
    }
    (lo, hi)
}

fn lp_oracle_equivalence() -> Outcome {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let instances = 200;
    let mut ok = 0;
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let k = rng.random_range(1..=6usize);
        let mut eigs: Vec<f64> = Vec::with_capacity(k);
        let mut level: f64 = rng.random_range(0.5..2.0);
        for _ in 0..k {
            eigs.push(level);
            level *= rng.random_range(1.1..4.0);
        }
        eigs.reverse();
        let (l1, ld) = (eigs[0], eigs[k - 1]);
        let a = rng.random_range(ld..=l1);
        let b = rng.random_range(ld..=l1);
        let (m, big_m) = (a.min(b), a.max(b));
        let (lo, hi) = vinv_range(&eigs, m, big_m).unwrap();
        let (olo, ohi) = vinv_oracle(&eigs, m, big_m);
        let err = (lo - olo).abs().max((hi - ohi).abs());
        worst = worst.max(err);
        if err <= 1e-6 {
            ok += 1;
        }
    }
    let elapsed = clock.elapsed();
    Outcome {
        name: "eigen-weight LP equivalence",
        pass: ok == instances && elapsed < Duration::from_secs(30),
        detail: format!("{ok}/{instances} instances within 1e-6 of vertex enumeration, max error {worst:.2e}"),
        elapsed,
    }
}

fn isotropic_and_limit() -> Outcome {
    let clock = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();

    for d in [2usize, 5, 10] {
        let state = CovarianceState::new(d, 3.0).unwrap();
        let theta = DVector::from_fn(d, |i, _| 1.0 + i as f64);
        let vn = state.v_norm(&theta).unwrap();
        let a = alpha_hat_sphere(&state, &theta, 0.5 * vn, 0.25 * vn).unwrap().alpha_hat;
        ok &= a == 1.0;
        notes.push(format!("iso d={d}: {a}"));
    }

    // V = diag(8, 2, 1): λ1/λ2 = 4
    let mut state = CovarianceState::new(3, 1.0).unwrap();
    state.update(&DVector::from_vec(vec![7f64.sqrt(), 0.0, 0.0])).unwrap();
    state.update(&DVector::from_vec(vec![0.0, 1.0, 0.0])).unwrap();
    let mut last = f64::INFINITY;
    let mut zeta_last = 0.0;
    for k in 1..=8 {
        let eps = 10f64.powi(-k);
        let theta = DVector::from_vec(vec![5.0, 5.0 * eps, 5.0 * eps]);
        let vn = state.v_norm(&theta).unwrap();
        let beta = vn * eps;
        let r = alpha_hat_sphere(&state, &theta, beta, beta).unwrap();
        last = r.alpha_hat;
        zeta_last = r.zeta.unwrap();
    }
    ok &= last < 1.05;
    notes.push(format!("limit alpha_hat {last:.6} at zeta {zeta_last:.10}"));
    Outcome { name: "aligned limit and isotropy", pass: ok, detail: notes.join(", "), elapsed: clock.elapsed() }
}

fn concentration(traces: &mut Vec<RunTrace>) -> Outcome {
    let clock = Instant::now();
    let text = format!(
        "[experiment]\nhorizon = 500\nreplicates = 200\ndelta = 0.05\nseed = 11\n\n\
         [environment]\nkind = \"finite_random\"\ndim = 5\nactions = 100\ntheta_norm = 10.0\n\n{}",
        policies_block(8.0)
    );
    let result = run_toml(&text);
    let mut ok = true;
    let mut notes = Vec::new();
    for label in &result.labels {
        let runs: Vec<_> = result.traces.iter().filter(|t| &t.summary.policy == label).collect();
        let inside = runs.iter().filter(|t| t.summary.theta_in_ellipsoid_all).count();
        let frac = inside as f64 / runs.len() as f64;
        ok &= frac >= 0.90;
        notes.push(format!("{label} {frac:.3}"));
    }
    traces.extend(result.traces);
    Outcome {
        name: "concentration",
        pass: ok,
        detail: format!("fraction of 200 runs inside the ellipsoid at every step: {}", notes.join(", ")),
        elapsed: clock.elapsed(),
    }
}

fn regret_bound_coverage(traces: &mut Vec<RunTrace>) -> Outcome {
    let clock = Instant::now();
    let text = format!(
        "[experiment]\nhorizon = 1000\nreplicates = 200\ndelta = 0.05\nseed = 12\n\n\
         [environment]\nkind = \"finite_random\"\ndim = 10\nactions = 100\ntheta_norm = 10.0\n\n{}",
        policies_block(8.0)
    );
    let result = run_toml(&text);
    let report = verify_bounds(&result.traces);
    let mut ok = report.prefix_failures() == 0;
    let mut notes = Vec::new();
    for (policy, pass, total) in report.by_policy() {
        let frac = pass as f64 / total as f64;
        ok &= total == 200 && frac >= 0.90;
        notes.push(format!("{policy} {pass}/{total}"));
    }
    ok &= report.by_policy().len() == result.labels.len();
    traces.extend(result.traces);
    Outcome {
        name: "data-driven regret bound",
        pass: ok,
        detail: format!("runs within recomputed bound: {}", notes.join(", ")),
        elapsed: clock.elapsed(),
    }
}

fn example3(traces: &mut Vec<RunTrace>) -> Outcome {
    let clock = Instant::now();
    let text = format!(
        "[experiment]\nhorizon = 2000\nreplicates = 50\nseed = 3\n\n\
         [environment]\nkind = \"prior_mismatch\"\nd_block = 10\nmean = 10.0\n\n{}",
        policies_block(12.0)
    );
    let result = run_toml(&text);
    let t = 2000;
    let ratio_ts = terminal_mean(&result, "TS_MR") / terminal_mean(&result, "LinTS");
    let ratio_greedy = terminal_mean(&result, "Greedy_MR") / terminal_mean(&result, "Greedy");
    let slope_ts = last_quartile_slope(&result, "TS_MR", t) / last_quartile_slope(&result, "LinTS", t);
    let slope_greedy = last_quartile_slope(&result, "Greedy_MR", t) / last_quartile_slope(&result, "Greedy", t);
    traces.extend(result.traces);
    let elapsed = clock.elapsed();
    Outcome {
        name: "prior-mismatch example",
        pass: ratio_ts <= 0.6
            && slope_ts <= 0.5
            && ratio_greedy <= 0.6
            && slope_greedy <= 0.5
            && elapsed < Duration::from_secs(600),
        detail: format!(
            "R(TS_MR)/R(LinTS) {ratio_ts:.4}, slope ratio {slope_ts:.4}; \
             R(Greedy_MR)/R(Greedy) {ratio_greedy:.4}, slope ratio {slope_greedy:.4}"
        ),
        elapsed,
    }
}

fn example1(traces: &mut Vec<RunTrace>) -> Outcome {
    let clock = Instant::now();
    let text = format!(
        "[experiment]\nhorizon = 2000\nreplicates = 50\nseed = 1\n\n\
         [environment]\nkind = \"finite_random\"\ndim = 20\nactions = 100\ntheta_norm = 10.0\n\n{}",
        policies_block(8.0)
    );
    let result = run_toml(&text);
    let lin_ts = terminal_mean(&result, "LinTS");
    let ts_freq = terminal_mean(&result, "TSFreq");
    let group: Vec<f64> = ["Greedy", "LinTS", "TS_MR", "Greedy_MR"].iter().map(|p| terminal_mean(&result, p)).collect();
    let spread = group.iter().cloned().fold(f64::NEG_INFINITY, f64::max) / group.iter().cloned().fold(f64::INFINITY, f64::min);
    traces.extend(result.traces);
    let elapsed = clock.elapsed();
    Outcome {
        name: "random-actions example",
        pass: ts_freq >= 1.3 * lin_ts && spread <= 1.5 && elapsed < Duration::from_secs(600),
        detail: format!(
            "R(TSFreq)/R(LinTS) {:.3}, max/min over Greedy, LinTS, TS_MR, Greedy_MR {spread:.3} (means {:.1}, {:.1}, {:.1}, {:.1})",
            ts_freq / lin_ts,
            group[0],
            group[1],
            group[2],
            group[3]
        ),
        elapsed,
    }
}

fn mu_sweep(traces: &mut Vec<RunTrace>) -> Outcome {
    let clock = Instant::now();
    let mut text = String::from(
        "[experiment]\nhorizon = 2000\nreplicates = 50\nseed = 4\n\n\
         [environment]\nkind = \"contextual_block\"\nblocks = 10\nwidth = 5\ntheta_norm = 70.0\n\n",
    );
    let mus = [4.0, 8.0, 12.0];
    for base in ["Greedy_MR", "TS_MR"] {
        for mu in mus {
            text.push_str(&format!("[[policy]]\nkind = \"{base}\"\nlabel = \"{base}_mu{mu}\"\nmu = {mu:?}\n\n"));
        }
    }
    let result = run_toml(&text);
    let mut ok = true;
    let mut notes = Vec::new();
    for base in ["Greedy_MR", "TS_MR"] {
        let fr: Vec<f64> = mus.iter().map(|mu| terminal_oful_fraction(&result, &format!("{base}_mu{mu}"))).collect();
        ok &= fr.windows(2).all(|w| w[1] <= w[0]);
        notes.push(format!("{base} {:.4} >= {:.4} >= {:.4}", fr[0], fr[1], fr[2]));
    }
    traces.extend(result.traces);
    Outcome {
        name: "OFUL fraction vs threshold",
        pass: ok,
        detail: format!("terminal OFUL fraction for mu = 4, 8, 12: {}", notes.join("; ")),
        elapsed: clock.elapsed(),
    }
}

fn potential(traces: &[RunTrace]) -> Outcome {
    let clock = Instant::now();
    let steps: usize = traces.iter().map(|t| t.steps.len()).sum();
    let violations: usize = traces.iter().map(|t| t.summary.potential_violations).sum();
    Outcome {
        name: "elliptical potential",
        pass: violations == 0 && !traces.is_empty(),
        detail: format!("{violations} violations over {} runs, {steps} steps", traces.len()),
        elapsed: clock.elapsed(),
    }
}

fn mr_cap(traces: &[RunTrace]) -> Outcome {
    let clock = Instant::now();
    let mut runs = 0;
    let mut checked = 0usize;
    let mut violations = 0usize;
    for tr in traces {
        let Some(mu) = tr.summary.mr_threshold else { continue };
        runs += 1;
        let cap = mu.max(2.0);
        for s in &tr.steps {
            checked += 1;
            match s.effective_proxy() {
                Some(p) if p <= cap * (1.0 + 1e-12) => {}
                _ => violations += 1,
            }
        }
        violations += tr.summary.mr_cap_violations;
    }
    Outcome {
        name: "MR proxy cap",
        pass: violations == 0 && runs > 0,
        detail: format!("{violations} violations over {runs} MR runs, {checked} steps"),
        elapsed: clock.elapsed(),
    }
}

fn main() -> ExitCode {
    let mut traces: Vec<RunTrace> = Vec::new();
    let mut outcomes = vec![geometry_soundness(), lp_oracle_equivalence()];
    outcomes.push(concentration(&mut traces));
    outcomes.push(regret_bound_coverage(&mut traces));
    outcomes.push(example3(&mut traces));
    outcomes.push(example1(&mut traces));
    outcomes.push(mu_sweep(&mut traces));
    outcomes.push(potential(&traces));
    outcomes.push(mr_cap(&traces));
    outcomes.push(isotropic_and_limit());

    let mut failed = 0;
    for o in &outcomes {
        if !o.pass {
            failed += 1;
        }
        println!(
            "{} {:<28} {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.name,
            o.detail,
            o.elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {}/{} criteria passed", outcomes.len() - failed, outcomes.len());
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
