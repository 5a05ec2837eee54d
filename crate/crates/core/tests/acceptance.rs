//! Acceptance gate: one test per numbered criterion, each emitting a single
//! PASS/FAIL line. Statistical criteria use 3-standard-error tolerances;
//! exact criteria demand bit identity. Reference values are recomputed by
//! independent oracles coded in this file (exact rational arithmetic for the
//! decay condition, an interval-splitting recursion for the parking
//! constant) rather than taken from the implementation.

use std::process::Command;

use num_rational::BigRational;
use num_traits::{One, Pow, ToPrimitive};

use hardcore_sbd::analysis::{
    fit_decay_rate, laplace_bound_check, packing_fraction, rank_sum_test, theorem_condition,
    theorem_threshold, BoxFunction,
};
use hardcore_sbd::cftp::{coupled_horizon_run, sample_stationary, stationarity_check};
use hardcore_sbd::check::{
    generator_law, hardcore_sweep, marginal_consistency, mass_transport, slab_equivalence,
};
use hardcore_sbd::coupling::{simulate_coupled, DensityRow, DensitySeries};
use hardcore_sbd::dynamics::{generate_initial, simulate};
use hardcore_sbd::randomness::CounterStream;
use hardcore_sbd::{Boundary, Configuration, InitKind, SimParams};

fn report(name: &str, outcome: Result<String, String>) {
    match outcome {
        Ok(detail) => println!("PASS {name}: {detail}"),
        Err(detail) => {
            println!("FAIL {name}: {detail}");
            panic!("{name}: {detail}");
        }
    }
}

fn base_params() -> SimParams {
    SimParams { d: 2, side: 20.0, rho: 0.75, lambda: 1.0, seed: 1, ..SimParams::default() }
}

#[test]
fn a01_hardcore_invariant_across_grid() {
    let (events, ok, detail) = hardcore_sweep(100, 1_200_000).unwrap();
    let outcome = if ok && events >= 1_000_000 {
        Ok(format!("{events} applied events across d in 1..3, rho in {{0,.3,.75,1}}, zero violations"))
    } else {
        Err(detail)
    };
    report("01 hard-core invariant", outcome);
}

#[test]
fn a02_generator_law() {
    let mut bad = Vec::new();
    for &rho in &[0.3, 0.6] {
        for k in 0..=4 {
            let s = generator_law(200 + k as u64, rho, k, 100_000).unwrap();
            if !s.accept_ok || !s.death_ok {
                bad.push(format!(
                    "rho={rho} k={k} accept {:.4} (want {:.4}) death {:.4}",
                    s.accept_freq, s.accept_expected, s.death_freq
                ));
            }
        }
    }
    let outcome = if bad.is_empty() {
        Ok("acceptance ~ rho^k and death ~ rho within 3 SE, k in 0..=4, 1e5 trials".into())
    } else {
        Err(bad.join("; "))
    };
    report("02 generator law", outcome);
}

#[test]
fn a03_backward_investigation_equivalence() {
    let p = base_params().with_seed(300);
    let mism = slab_equivalence(&p, 0.1, 100).unwrap();
    let outcome = if mism == 0 {
        Ok("resolve_slab == forward simulate on 100 seeds, eps=0.1, L=20".into())
    } else {
        Err(format!("{mism} mismatching seeds"))
    };
    report("03 backward-investigation equivalence", outcome);
}

#[test]
fn a04_coupling_marginal_consistency() {
    let p = base_params().with_seed(400);
    let mism = marginal_consistency(&p, 20, 50).unwrap();
    let outcome = if mism == 0 {
        Ok("coupled marginals identical to standalone runs, 20 seeds x 50 times".into())
    } else {
        Err(format!("{mism} mismatching (seed, time) pairs"))
    };
    report("04 coupling marginal consistency", outcome);
}

#[test]
fn a05_naive_decay_bound() {
    let p = base_params().with_seed(500);
    let replicas = 20usize;
    let t_end = 6.0;
    let dt = 0.2;
    let mut all: Vec<DensitySeries> = Vec::new();
    for i in 0..replicas {
        let pi = p.replica(i as u64);
        let init2 = generate_initial(InitKind::Matern2, 1.0, &pi).unwrap();
        let (s, _) =
            simulate_coupled(&pi, Configuration::new(pi.window()), init2, t_end, dt).unwrap();
        all.push(s);
    }
    let n_rows = all[0].rows.len();
    let n = replicas as f64;
    let rate = std::f64::consts::FRAC_PI_2; // nu1 * lambda * (2 rho - 1) at rho = 3/4, d = 2
    let mut mean_rows = Vec::with_capacity(n_rows);
    let mut violations = Vec::new();
    let beta0 = all.iter().map(|s| s.rows[0].beta_s).sum::<f64>() / n;
    for k in 0..n_rows {
        let t = all[0].rows[k].t;
        let vals: Vec<f64> = all.iter().map(|s| s.rows[k].beta_s).collect();
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let se = (var / n).sqrt();
        let bound = beta0 * (-rate * t).exp();
        if mean > bound + 3.0 * se {
            violations.push(format!("t={t:.1}: {mean:.4} > {bound:.4} + 3*{se:.4}"));
        }
        mean_rows.push(DensityRow { t, beta_r: 0.0, beta_a: 0.0, beta_z: 0.0, beta_s: mean });
    }
    let fit = fit_decay_rate(&DensitySeries { rows: mean_rows }, 1.0).unwrap();
    let threshold = rate - 0.15;
    let outcome = if violations.is_empty() && fit.c_hat >= threshold {
        Ok(format!(
            "c_hat = {:.3} >= {:.3}, pointwise bound holds at all {} sample times",
            fit.c_hat, threshold, n_rows
        ))
    } else if !violations.is_empty() {
        Err(format!("pointwise violations: {}", violations.join("; ")))
    } else {
        Err(format!("c_hat = {:.3} below {:.3}", fit.c_hat, threshold))
    };
    report("05 decay bound", outcome);
}

/// Exact rational re-evaluation of the decay condition on the f64-rounded
/// inputs; disagreement with the float evaluator would expose an expression
/// transcription error.
fn exact_condition_value(rho: f64, d: usize) -> f64 {
    let r = BigRational::from_float(rho).unwrap();
    let one = BigRational::one();
    let kappa: usize = [2, 6, 12][d - 1];
    let three_halves = BigRational::new(3.into(), 2.into());
    let four = BigRational::from_integer(4.into());
    let numer = r.clone().pow(kappa as i32)
        * (&one - &r).pow(2)
        * (three_halves.pow(d as i32) - &one);
    let denom = four.pow(d as i32)
        * BigRational::from_integer((kappa as i64 - 1).into())
        * (&one + &r - &r * &r);
    let two = BigRational::from_integer(2.into());
    let value: BigRational = (&one - two * &r) - numer / denom;
    value.to_f64().unwrap()
}

#[test]
fn a06_condition_table_against_exact_oracle() {
    let mut worst = 0.0f64;
    for d in 1..=3usize {
        for &rho in &[0.1, 0.3, 0.5, 0.6, 0.9] {
            let fast = theorem_condition(rho, d, 1.0).unwrap().theorem_value;
            let exact = exact_condition_value(rho, d);
            let err = (fast - exact).abs() / exact.abs().max(1.0);
            worst = worst.max(err);
            if fast.signum() != exact.signum() || err > 1e-12 {
                report(
                    "06 condition table",
                    Err(format!("rho={rho} d={d}: {fast:.15e} vs exact {exact:.15e}")),
                );
            }
        }
    }
    let thr = theorem_threshold(2, 0.1, 0.5, 1e-7).unwrap();
    let below = exact_condition_value(thr - 1e-5, 2);
    let above = exact_condition_value(thr + 1e-5, 2);
    let outcome = if below > 0.0 && above < 0.0 {
        Ok(format!(
            "two evaluators agree to 12 digits (worst rel err {worst:.1e}); d=2 threshold {thr:.7} bracketed by exact oracle"
        ))
    } else {
        Err(format!("bisection threshold {thr} not bracketed: f({:.6})={below:.2e}, f({:.6})={above:.2e}",
            thr - 1e-5, thr + 1e-5))
    };
    report("06 condition table", outcome);
}

#[test]
fn a07_mass_transport_inequality() {
    let p = base_params().with_seed(700);
    let rows = mass_transport(&p, 20, 0.1, 20).unwrap();
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| !r.ok)
        .map(|r| format!("t={:.2}: {:.2} > {:.2} + 3*{:.2}", r.t, r.lhs, r.rhs, r.se))
        .collect();
    let outcome = if bad.is_empty() {
        Ok("special mass after delta covered by family mass at all 20 checkpoints".into())
    } else {
        Err(bad.join("; "))
    };
    report("07 mass transport", outcome);
}

#[test]
fn a08_cftp_correctness() {
    let p = base_params().with_seed(800);
    let mut coalesced = 0usize;
    let mut absorbing_bad = 0usize;
    for i in 0..50u64 {
        let pi = p.replica(i);
        let out = sample_stationary(&pi, 1.0, 64.0).unwrap();
        if out.result.coalesced {
            coalesced += 1;
            let t = out.result.horizon_used;
            let run = coupled_horizon_run(&pi, t, 4.0 * t).unwrap();
            if !run.state.coalesced() || !run.state.proc1.same_points(&out.sample) {
                absorbing_bad += 1;
            }
        }
    }
    let rep = stationarity_check(&p.with_seed(850), 15, 1.0, 64.0).unwrap();
    let p_null = rep.p_value.unwrap_or(0.0);
    // broken control: exact samples against a transient batch from t = 0.5
    let stationary: Vec<f64> = rep.counts_t0.iter().map(|&c| c as f64).collect();
    let transient: Vec<f64> = (0..15u64)
        .map(|i| {
            let pi = p.with_seed(900 + i);
            simulate(&pi, Configuration::new(pi.window()), 0.0, 0.5, false)
                .unwrap()
                .1
                .len() as f64
        })
        .collect();
    let p_broken = rank_sum_test(&stationary, &transient).unwrap();
    let outcome = if coalesced >= 48 && absorbing_bad == 0 && p_null > 0.01 && p_broken < 0.01 {
        Ok(format!(
            "{coalesced}/50 coalesced within T_max=64, absorbing on all, rank test p={p_null:.3}, broken control p={p_broken:.1e}"
        ))
    } else {
        Err(format!(
            "coalesced {coalesced}/50, absorbing violations {absorbing_bad}, p_null={p_null:.4}, p_broken={p_broken:.4}"
        ))
    };
    report("08 cftp correctness", outcome);
}

#[test]
fn a09_cftp_designed_failure_at_rho_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("cftp.json");
    std::fs::write(
        &cfg_path,
        r#"{"rho": 0.0, "L": 8.0, "seed": 9, "replicas": 2, "t_init": 1.0, "t_max": 4.0}"#,
    )
    .unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hardcore-sbd"))
        .args(["cftp", "--config"])
        .arg(&cfg_path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    let code = out.status.code();
    // the rho = 0 dynamics itself must still run (pure RSA)
    let p = SimParams { rho: 0.0, side: 8.0, seed: 9, ..SimParams::default() };
    let (_, rsa) = simulate(&p, Configuration::new(p.window()), 0.0, 5.0, false).unwrap();
    let outcome = if code == Some(3) && !rsa.is_empty() {
        Ok(format!("exit code 3 with diagnostic; RSA dynamics still produce {} points", rsa.len()))
    } else {
        Err(format!(
            "exit code {code:?}, stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        ))
    };
    report("09 cftp designed failure", outcome);
}

#[test]
fn a10_laplace_bound() {
    let p = base_params().with_seed(1000);
    let f = BoxFunction::new(1.0, [5.0, 5.0, 0.0], [6.0, 6.0, 0.0]).unwrap();
    let check = laplace_bound_check(&p, &f, 4.0, 0.2, 30, 1.0, 64.0).unwrap();
    let outcome = if check.n_violations == 0 && check.rows.len() >= 20 {
        Ok(format!(
            "zero violations over {} sample times, 30 replicas (c_hat {:.2})",
            check.rows.len(),
            check.c_hat
        ))
    } else {
        Err(format!("{} violations of {} rows", check.n_violations, check.rows.len()))
    };
    report("10 laplace bound", outcome);
}

/// Independent 1-d parking oracle: split the free interval at a uniformly
/// placed point and recurse on both sides. Shares no code with the gap-list
/// generator under test.
fn parking_oracle_density(length: f64, trials: usize, seed: u64) -> f64 {
    let mut stream = CounterStream::new(seed);
    let mut total = 0u64;
    for _ in 0..trials {
        let mut stack = vec![(0.0f64, length)];
        while let Some((lo, hi)) = stack.pop() {
            if hi < lo {
                continue;
            }
            let x = lo + (hi - lo) * stream.uniform();
            total += 1;
            if x - 1.0 >= lo {
                stack.push((lo, x - 1.0));
            }
            if hi >= x + 1.0 {
                stack.push((x + 1.0, hi));
            }
        }
    }
    total as f64 / (trials as f64 * length)
}

#[test]
fn a11_rsa_and_matern_cross_checks() {
    let p = SimParams {
        d: 1,
        side: 10_000.0,
        boundary: Boundary::Free,
        rho: 0.0,
        seed: 1100,
        ..SimParams::default()
    };
    let jammed = generate_initial(InitKind::SaturatedRsa, 1.0, &p).unwrap();
    let density = packing_fraction(&jammed);
    let oracle = parking_oracle_density(10_000.0, 20, 1101);
    let renyi = 0.7476;
    let matern_p = SimParams { side: 50.0, seed: 1150, ..SimParams::default() };
    let n_seeds = 50u64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for i in 0..n_seeds {
        let pi = matern_p.replica(i);
        m1 += generate_initial(InitKind::Matern1, 1.0, &pi).unwrap().len() as f64;
        m2 += generate_initial(InitKind::Matern2, 1.0, &pi).unwrap().len() as f64;
    }
    let vol = matern_p.window().volume() * n_seeds as f64;
    let (m1, m2) = (m1 / vol, m2 / vol);
    let pi_ = std::f64::consts::PI;
    let (ref1, ref2) = ((-pi_).exp(), (1.0 - (-pi_).exp()) / pi_);
    let ok = (density - renyi).abs() < 0.01
        && (density - oracle).abs() < 0.01
        && (oracle - renyi).abs() < 0.01
        && (m1 - ref1).abs() / ref1 < 0.05
        && (m2 - ref2).abs() / ref2 < 0.05;
    let outcome = if ok {
        Ok(format!(
            "jamming density {density:.4} (oracle {oracle:.4}); Matern I {m1:.4} vs {ref1:.4}, II {m2:.4} vs {ref2:.4}"
        ))
    } else {
        Err(format!(
            "density {density:.4}, oracle {oracle:.4}, matern1 {m1:.4}/{ref1:.4}, matern2 {m2:.4}/{ref2:.4}"
        ))
    };
    report("11 rsa and matern cross-checks", outcome);
}

fn dir_contents(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn a12_manifest_replay_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_hardcore-sbd");
    let run = |cmd: &str, config: Option<&std::path::Path>, out: &std::path::Path| {
        let mut c = Command::new(bin);
        c.arg(cmd);
        if let Some(cfg) = config {
            c.arg("--config").arg(cfg);
        }
        let st = c.arg("--out").arg(out).status().unwrap();
        assert!(st.success(), "{cmd} exited {st:?}");
    };
    // simulate: defaults, then replay from the emitted manifest
    let (s1, s2) = (dir.path().join("sim1"), dir.path().join("sim2"));
    run("simulate", None, &s1);
    run("simulate", Some(&s1.join("manifest.json")), &s2);
    // couple: parallel replicas must merge deterministically
    let couple_cfg = dir.path().join("couple.json");
    std::fs::write(
        &couple_cfg,
        r#"{"L": 10.0, "replicas": 8, "t_end": 3.0, "parallelism": 4}"#,
    )
    .unwrap();
    let (c1, c2) = (dir.path().join("cpl1"), dir.path().join("cpl2"));
    run("couple", Some(&couple_cfg), &c1);
    run("couple", Some(&c1.join("manifest.json")), &c2);
    let same_sim = dir_contents(&s1) == dir_contents(&s2);
    let same_cpl = dir_contents(&c1) == dir_contents(&c2);
    let outcome = if same_sim && same_cpl {
        Ok("simulate and couple artifacts byte-identical under manifest replay".into())
    } else {
        Err(format!("simulate identical: {same_sim}, couple identical: {same_cpl}"))
    };
    report("12 manifest replay determinism", outcome);
}

#[test]
fn config_rejection_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"rho": 0.5, "bogus_key": 1}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hardcore-sbd"))
        .args(["simulate", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("bogus_key"), "{msg}");
    // out-of-range value
    let bad2 = dir.path().join("bad2.json");
    std::fs::write(&bad2, r#"{"rho": 1.5}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hardcore-sbd"))
        .args(["simulate", "--config"])
        .arg(&bad2)
        .arg("--out")
        .arg(dir.path().join("out2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
