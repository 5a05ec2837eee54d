//! Self-contained invariant and property suites behind the `check`
//! subcommand, plus the dependency-graph statistics behind `slab-demo`.
//! Each suite is a plain function so tests can run it at their own scale.

use serde::Serialize;

use crate::config::{InitKind, SimParams};
use crate::coupling::{advance_coupled, track_families, CoupledState};
use crate::dynamics::{
    apply_arrival, build_dependency_graph, generate_initial, resolve_slab, simulate,
    Configuration,
};
use crate::error::Result;
use crate::geometry::Window;
use crate::randomness::{ArrivalEvent, EventId, SeededMarks};

#[derive(Clone, Debug, Serialize)]
pub struct CheckItem {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
    pub events_applied: u64,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }
}

/// Run forward dynamics across the (d, rho) grid until `target_events`
/// arrivals have been applied in total, verifying the hard-core property
/// along the way (grid check per chunk, brute-force pair scan at the end).
pub fn hardcore_sweep(base_seed: u64, target_events: u64) -> Result<(u64, bool, String)> {
    let rhos = [0.0, 0.3, 0.75, 1.0];
    let sides = [(1usize, 200.0f64), (2, 20.0), (3, 8.0)];
    let per_combo = target_events / (rhos.len() * sides.len()) as u64;
    let mut total = 0u64;
    let mut combo = 0u64;
    for &(d, side) in &sides {
        for &rho in &rhos {
            let p = SimParams {
                d,
                side,
                rho,
                seed: base_seed.wrapping_add(combo),
                ..SimParams::default()
            };
            combo += 1;
            let volume = p.window().volume();
            // expected events = lambda * volume * t
            let t_end = per_combo as f64 / (p.lambda * volume);
            let mut c = Configuration::new(p.window());
            let chunk = t_end / 8.0;
            for k in 0..8 {
                let (traj, next) = simulate(&p, c, k as f64 * chunk, (k + 1) as f64 * chunk, false)?;
                total += traj.n_events;
                c = next;
                if !c.hardcore_ok() {
                    return Ok((total, false, format!("violation at d={d}, rho={rho}")));
                }
            }
            if !c.hardcore_ok_bruteforce() {
                return Ok((total, false, format!("pair-scan violation at d={d}, rho={rho}")));
            }
        }
    }
    Ok((total, true, format!("{total} events, zero violations")))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct GeneratorLawStat {
    pub rho: f64,
    pub k: usize,
    pub trials: usize,
    pub accept_freq: f64,
    pub accept_expected: f64,
    pub accept_ok: bool,
    pub death_freq: f64,
    pub death_ok: bool,
}

/// Frozen-neighborhood law: an arrival with exactly k unit-ball neighbors is
/// accepted with probability rho^k, and each neighbor dies with probability
/// rho, independently per trial.
pub fn generator_law(seed: u64, rho: f64, k: usize, trials: usize) -> Result<GeneratorLawStat> {
    let w = Window::torus(2, 20.0)?;
    let center = [10.0, 10.0, 0.0];
    let marks = SeededMarks::new(seed, rho);
    let mut accepted = 0usize;
    let mut deaths = 0usize;
    for trial in 0..trials {
        let pts = (0..k).map(|j| {
            let a = 2.0 * std::f64::consts::PI * j as f64 / k.max(1) as f64;
            let x = [center[0] + 0.95 * a.cos(), center[1] + 0.95 * a.sin(), 0.0];
            (EventId::Initial { ordinal: j as u64 }, x, 0.0)
        });
        let mut c = Configuration::from_points(w, pts);
        let e = ArrivalEvent {
            // a fresh slab per trial gives an independent mark set
            id: EventId::Rain { slab: trial as i64, cell: [0, 0, 0], ordinal: 0 },
            x: center,
            t: 0.5,
        };
        let tr = apply_arrival(&mut c, &e, &marks)?;
        accepted += tr.accepted as usize;
        deaths += tr.killed.len();
    }
    let accept_freq = accepted as f64 / trials as f64;
    let accept_expected = rho.powi(k as i32);
    let se_a = (accept_expected * (1.0 - accept_expected) / trials as f64).sqrt();
    let accept_ok = (accept_freq - accept_expected).abs() <= 3.0 * se_a.max(f64::EPSILON);
    let pairs = k * trials;
    let (death_freq, death_ok) = if pairs == 0 {
        (0.0, true)
    } else {
        let f = deaths as f64 / pairs as f64;
        let se_d = (rho * (1.0 - rho) / pairs as f64).sqrt();
        (f, (f - rho).abs() <= 3.0 * se_d.max(f64::EPSILON))
    };
    Ok(GeneratorLawStat {
        rho,
        k,
        trials,
        accept_freq,
        accept_expected,
        accept_ok,
        death_freq,
        death_ok,
    })
}

/// Backward investigation must reproduce the forward run exactly, seed by
/// seed. Returns the number of mismatching seeds.
pub fn slab_equivalence(p: &SimParams, epsilon: f64, n_seeds: usize) -> Result<usize> {
    let mut mismatches = 0;
    for i in 0..n_seeds {
        let pi = p.replica(i as u64);
        let mut init = generate_initial(InitKind::Matern2, 1.0, &pi)?;
        init.now = 0.0;
        let g = build_dependency_graph(&pi, 0.0, epsilon)?;
        let marks = SeededMarks::new(pi.seed, pi.rho);
        let resolved = resolve_slab(&init, &g, &marks)?;
        let (_, forward) = simulate(&pi, init, 0.0, epsilon, false)?;
        if !resolved.same_points(&forward) {
            mismatches += 1;
        }
    }
    Ok(mismatches)
}

/// Coupled marginals must be bit-identical to standalone runs at every
/// sample time. Returns the number of mismatching (seed, time) pairs.
pub fn marginal_consistency(p: &SimParams, n_seeds: usize, n_samples: usize) -> Result<usize> {
    let dt = 0.2;
    let mut mismatches = 0;
    for i in 0..n_seeds {
        let pi = p.replica(i as u64);
        let init2 = generate_initial(InitKind::Matern2, 1.0, &pi)?;
        let mut s = CoupledState::new(Configuration::new(pi.window()), init2.clone())?;
        let mut solo1 = Configuration::new(pi.window());
        let mut solo2 = init2;
        for k in 1..=n_samples {
            let t = k as f64 * dt;
            advance_coupled(&mut s, &pi, t)?;
            solo1 = simulate(&pi, solo1, t - dt, t, false)?.1;
            solo2 = simulate(&pi, solo2, t - dt, t, false)?.1;
            if !s.proc1.same_points(&solo1) || !s.proc2.same_points(&solo2) {
                mismatches += 1;
            }
        }
    }
    Ok(mismatches)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MassTransportRow {
    pub t: f64,
    /// Mean special count after the tracking window.
    pub lhs: f64,
    /// Mean total family mass claimed by specials alive at t.
    pub rhs: f64,
    pub se: f64,
    pub ok: bool,
}

/// Family bookkeeping check: the specials alive at t + delta are covered by
/// the families of the specials alive at t, so the mean special count after
/// delta cannot exceed the mean total family size (within Monte Carlo error).
pub fn mass_transport(
    p: &SimParams,
    checkpoints: usize,
    delta: f64,
    replicas: usize,
) -> Result<Vec<MassTransportRow>> {
    let dt = 0.25;
    let mut lhs = vec![Vec::with_capacity(replicas); checkpoints];
    let mut rhs = vec![Vec::with_capacity(replicas); checkpoints];
    for i in 0..replicas {
        let pi = p.replica(i as u64);
        let init2 = generate_initial(InitKind::Matern2, 1.0, &pi)?;
        let mut s = CoupledState::new(Configuration::new(pi.window()), init2)?;
        for k in 0..checkpoints {
            advance_coupled(&mut s, &pi, (k + 1) as f64 * dt)?;
            let fams = track_families(&s, &pi, delta)?;
            let total_mass: usize = fams.iter().map(|f| f.m).sum();
            let mut after = s.clone();
            advance_coupled(&mut after, &pi, s.now + delta)?;
            lhs[k].push(after.specials().len() as f64);
            rhs[k].push(total_mass as f64);
        }
    }
    let n = replicas as f64;
    Ok((0..checkpoints)
        .map(|k| {
            let ml = lhs[k].iter().sum::<f64>() / n;
            let mr = rhs[k].iter().sum::<f64>() / n;
            let diffs: Vec<f64> = lhs[k].iter().zip(&rhs[k]).map(|(a, b)| a - b).collect();
            let md = diffs.iter().sum::<f64>() / n;
            let var = diffs.iter().map(|d| (d - md).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let se = (var / n).sqrt();
            MassTransportRow {
                t: (k + 1) as f64 * dt,
                lhs: ml,
                rhs: mr,
                se,
                ok: ml <= mr + 3.0 * se,
            }
        })
        .collect())
}

/// Full suite with scales chosen by `quick`.
pub fn run_checks(p: &SimParams, quick: bool) -> Result<CheckReport> {
    let mut items = Vec::new();
    let target = if quick { 60_000 } else { 1_200_000 };
    let (events_applied, hc_ok, hc_detail) = hardcore_sweep(p.seed, target)?;
    items.push(CheckItem { name: "hardcore-invariant", passed: hc_ok, detail: hc_detail });

    let trials = if quick { 10_000 } else { 100_000 };
    let mut law_ok = true;
    let mut law_detail = String::new();
    for &rho in &[0.3, 0.6] {
        for k in 0..=4 {
            let stat = generator_law(p.seed.wrapping_add(1000 + k as u64), rho, k, trials)?;
            if !(stat.accept_ok && stat.death_ok) {
                law_ok = false;
                law_detail.push_str(&format!(
                    "rho={rho} k={k}: accept {:.4} vs {:.4}, death {:.4}; ",
                    stat.accept_freq, stat.accept_expected, stat.death_freq
                ));
            }
        }
    }
    if law_ok {
        law_detail = format!("accept ~ rho^k and death ~ rho at {trials} trials");
    }
    items.push(CheckItem { name: "generator-law", passed: law_ok, detail: law_detail });

    let n_seeds = if quick { 10 } else { 100 };
    let mism = slab_equivalence(p, 0.1, n_seeds)?;
    items.push(CheckItem {
        name: "slab-equivalence",
        passed: mism == 0,
        detail: format!("{mism} mismatches over {n_seeds} seeds"),
    });

    let (seeds, samples) = if quick { (5, 10) } else { (20, 50) };
    let mism = marginal_consistency(p, seeds, samples)?;
    items.push(CheckItem {
        name: "marginal-consistency",
        passed: mism == 0,
        detail: format!("{mism} mismatches over {seeds} seeds x {samples} times"),
    });

    let (cps, reps) = if quick { (5, 5) } else { (20, 20) };
    let rows = mass_transport(p, cps, 0.1, reps)?;
    let bad = rows.iter().filter(|r| !r.ok).count();
    items.push(CheckItem {
        name: "mass-transport",
        passed: bad == 0,
        detail: format!("{bad} checkpoint violations of {cps}"),
    });

    let a = simulate(p, Configuration::new(p.window()), 0.0, 2.0, true)?;
    let b = simulate(p, Configuration::new(p.window()), 0.0, 2.0, true)?;
    let det = a.0.events == b.0.events && a.1.same_points(&b.1);
    items.push(CheckItem {
        name: "replay-determinism",
        passed: det,
        detail: "two runs, identical event logs".to_string(),
    });

    Ok(CheckReport { items, events_applied })
}

#[derive(Clone, Debug, Serialize)]
pub struct SlabDemoReport {
    pub epsilon: f64,
    pub seeds: usize,
    pub mean_events: f64,
    pub mean_components: f64,
    pub max_component: usize,
    pub equivalence_mismatches: usize,
}

/// Dependency-graph statistics over many seeds: how finely a slab of width
/// epsilon decomposes into independent components, and that resolving those
/// components reproduces the forward run.
pub fn slab_demo(p: &SimParams, epsilon: f64, seeds: usize) -> Result<SlabDemoReport> {
    let mut total_events = 0usize;
    let mut total_components = 0usize;
    let mut max_component = 0usize;
    for i in 0..seeds {
        let pi = p.replica(i as u64);
        let g = build_dependency_graph(&pi, 0.0, epsilon)?;
        total_events += g.events.len();
        total_components += g.n_components;
        let mut sizes = std::collections::HashMap::new();
        for idx in 0..g.events.len() {
            *sizes.entry(g.component_of(idx)).or_insert(0usize) += 1;
        }
        max_component = max_component.max(sizes.values().copied().max().unwrap_or(0));
    }
    let equivalence_mismatches = slab_equivalence(p, epsilon, seeds)?;
    Ok(SlabDemoReport {
        epsilon,
        seeds,
        mean_events: total_events as f64 / seeds as f64,
        mean_components: total_components as f64 / seeds as f64,
        max_component,
        equivalence_mismatches,
    })
}
