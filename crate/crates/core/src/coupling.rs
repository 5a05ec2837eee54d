//! Two processes driven by identical rain and marks.
//!
//! A point's identity is its creating event id, so "the same point" in both
//! processes is well defined: a point live in both is regular, live in the
//! first only is an anti-zombie, live in the second only is a zombie.
//! Zombies and anti-zombies together are the special points whose density
//! decay drives every stationarity result.

use std::collections::BTreeMap;
use std::io::Write as IoWrite;

use crate::config::SimParams;
use crate::dynamics::{rain_in_interval, Configuration};
use crate::error::{Error, Result};
use crate::geometry::{unit_ball_volume, Coord};
use crate::randomness::{ArrivalEvent, CounterStream, EventId, MarkOracle, SeededMarks};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Status {
    Regular,
    AntiZombie,
    Zombie,
}

/// Two configurations sharing all randomness.
#[derive(Clone, Debug)]
pub struct CoupledState {
    pub proc1: Configuration,
    pub proc2: Configuration,
    pub now: f64,
}

impl CoupledState {
    pub fn new(init1: Configuration, init2: Configuration) -> Result<Self> {
        if init1.window() != init2.window() {
            return Err(Error::contract("coupled processes must share a window"));
        }
        if !init1.hardcore_ok() || !init2.hardcore_ok() {
            return Err(Error::InvalidInitialCondition(
                "coupled initial conditions must be hard-core".into(),
            ));
        }
        let now = init1.now;
        Ok(CoupledState { proc1: init1, proc2: init2, now })
    }

    pub fn status_of(&self, id: EventId) -> Option<Status> {
        match (self.proc1.contains(id), self.proc2.contains(id)) {
            (true, true) => Some(Status::Regular),
            (true, false) => Some(Status::AntiZombie),
            (false, true) => Some(Status::Zombie),
            (false, false) => None,
        }
    }

    /// (regular, anti-zombie, zombie) counts.
    pub fn counts(&self) -> (usize, usize, usize) {
        let mut r = 0;
        let mut a = 0;
        for (id, _) in self.proc1.iter() {
            if self.proc2.contains(*id) {
                r += 1;
            } else {
                a += 1;
            }
        }
        let z = self.proc2.len() - r;
        (r, a, z)
    }

    /// Special points (id, coordinate, status), sorted by id.
    pub fn specials(&self) -> Vec<(EventId, Coord, Status)> {
        let mut out = Vec::new();
        for (id, rec) in self.proc1.iter() {
            if !self.proc2.contains(*id) {
                out.push((*id, rec.x, Status::AntiZombie));
            }
        }
        for (id, rec) in self.proc2.iter() {
            if !self.proc1.contains(*id) {
                out.push((*id, rec.x, Status::Zombie));
            }
        }
        out.sort_by_key(|s| s.0);
        out
    }

    pub fn coalesced(&self) -> bool {
        self.proc1.same_points(&self.proc2)
    }
}

#[derive(Clone, Debug)]
pub struct CoupledTransition {
    pub accepted1: bool,
    pub accepted2: bool,
    pub killed1: Vec<EventId>,
    pub killed2: Vec<EventId>,
    /// Status of the arrival if it was inserted anywhere.
    pub status: Option<Status>,
    /// Ids that were special and within distance 1 of the arrival (in either
    /// process) just before it was applied; used for family tracking.
    pub special_neighbors: Vec<EventId>,
}

/// Apply one arrival to both processes with shared marks.
///
/// One mark per (arrival, neighbor id) pair is drawn and applied in both
/// processes wherever that neighbor is live, so each marginal follows the
/// standalone dynamics exactly.
pub fn coupled_apply_arrival(
    s: &mut CoupledState,
    e: &ArrivalEvent,
    marks: &dyn MarkOracle,
) -> Result<CoupledTransition> {
    if e.t < s.now {
        return Err(Error::OutOfOrderEvent { event_t: e.t, now: s.now });
    }
    let n1 = s.proc1.neighbors_within(e.x, 1.0)?;
    let n2 = s.proc2.neighbors_within(e.x, 1.0)?;
    let mut ids: Vec<EventId> = n1.iter().chain(n2.iter()).map(|h| h.0).collect();
    ids.sort();
    ids.dedup();

    let special_neighbors: Vec<EventId> = ids
        .iter()
        .copied()
        .filter(|&q| s.proc1.contains(q) != s.proc2.contains(q))
        .collect();

    let shared: BTreeMap<EventId, bool> =
        ids.iter().map(|&q| (q, marks.mark(e.id, q))).collect();

    let apply = |proc: &mut Configuration, neighbors: &[(EventId, Coord)]| {
        let mut killed = Vec::new();
        let mut accepted = true;
        for (q, _) in neighbors {
            if shared[q] {
                killed.push(*q);
            } else {
                accepted = false;
            }
        }
        for q in &killed {
            proc.remove(*q);
        }
        if accepted {
            proc.insert(e.id, e.x, e.t);
        }
        proc.now = e.t;
        (accepted, killed)
    };
    let (accepted1, killed1) = apply(&mut s.proc1, &n1);
    let (accepted2, killed2) = apply(&mut s.proc2, &n2);
    s.now = e.t;

    let status = match (accepted1, accepted2) {
        (true, true) => Some(Status::Regular),
        (true, false) => Some(Status::AntiZombie),
        (false, true) => Some(Status::Zombie),
        (false, false) => None,
    };
    Ok(CoupledTransition {
        accepted1,
        accepted2,
        killed1,
        killed2,
        status,
        special_neighbors,
    })
}

/// Drive the coupled state through all rain in [s.now, t1), invoking the
/// observer after every applied event.
pub fn advance_coupled_with<F>(
    s: &mut CoupledState,
    p: &SimParams,
    t1: f64,
    mut observer: F,
) -> Result<()>
where
    F: FnMut(&CoupledState, &ArrivalEvent, &CoupledTransition),
{
    let t0 = s.now;
    if t0 > t1 {
        return Err(Error::contract(format!("now = {t0} > t1 = {t1}")));
    }
    let marks = SeededMarks::new(p.seed, p.rho);
    for e in rain_in_interval(p, t0, t1) {
        let tr = coupled_apply_arrival(s, &e, &marks)?;
        observer(s, &e, &tr);
    }
    s.now = t1;
    s.proc1.now = t1;
    s.proc2.now = t1;
    Ok(())
}

pub fn advance_coupled(s: &mut CoupledState, p: &SimParams, t1: f64) -> Result<()> {
    advance_coupled_with(s, p, t1, |_, _, _| {})
}

/// One sampled row of discrepancy densities (counts over window volume).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DensityRow {
    pub t: f64,
    pub beta_r: f64,
    pub beta_a: f64,
    pub beta_z: f64,
    pub beta_s: f64,
}

#[derive(Clone, Debug, Default)]
pub struct DensitySeries {
    pub rows: Vec<DensityRow>,
}

impl DensitySeries {
    pub fn push_from(&mut self, s: &CoupledState, volume: f64) {
        let (r, a, z) = s.counts();
        self.rows.push(DensityRow {
            t: s.now,
            beta_r: r as f64 / volume,
            beta_a: a as f64 / volume,
            beta_z: z as f64 / volume,
            beta_s: (a + z) as f64 / volume,
        });
    }

    pub fn write_csv<Wr: IoWrite>(&self, out: &mut Wr) -> std::io::Result<()> {
        writeln!(out, "t,beta_R,beta_A,beta_Z,beta_S")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.t, r.beta_r, r.beta_a, r.beta_z, r.beta_s
            )?;
        }
        Ok(())
    }
}

/// Run coupled dynamics on [0, T], sampling densities every `sample_dt`.
pub fn simulate_coupled(
    p: &SimParams,
    init1: Configuration,
    init2: Configuration,
    t_end: f64,
    sample_dt: f64,
) -> Result<(DensitySeries, CoupledState)> {
    p.validate()?;
    if !(t_end > 0.0 && sample_dt > 0.0) {
        return Err(Error::contract("t_end and sample_dt must be positive"));
    }
    let mut s = CoupledState::new(init1, init2)?;
    let volume = p.window().volume();
    let mut series = DensitySeries::default();
    series.push_from(&s, volume);
    let n_samples = (t_end / sample_dt).round() as usize;
    for k in 1..=n_samples {
        let t = (k as f64 * sample_dt).min(t_end);
        advance_coupled(&mut s, p, t)?;
        series.push_from(&s, volume);
    }
    if s.now < t_end {
        advance_coupled(&mut s, p, t_end)?;
        series.push_from(&s, volume);
    }
    Ok((series, s))
}

/// The family of a special point: everything reachable from it through the
/// realized interaction graph over one tracking window.
#[derive(Clone, Debug)]
pub struct FamilyRecord {
    pub root: EventId,
    pub members_alive: Vec<EventId>,
    pub m: usize,
}

/// Track families over [s.now, s.now + delta].
///
/// A new special point joins the family of every special that was within
/// distance 1 of its arrival, so each special alive at the end belongs to at
/// least one family of a special alive at the start; this makes the
/// mass-transport bound directly testable.
pub fn track_families(
    s: &CoupledState,
    p: &SimParams,
    delta: f64,
) -> Result<Vec<FamilyRecord>> {
    let roots: Vec<EventId> = s.specials().iter().map(|sp| sp.0).collect();
    let mut run = s.clone();
    let mut children: BTreeMap<EventId, Vec<EventId>> = BTreeMap::new();
    advance_coupled_with(&mut run, p, s.now + delta, |_, e, tr| {
        if matches!(tr.status, Some(Status::AntiZombie) | Some(Status::Zombie)) {
            for &parent in &tr.special_neighbors {
                children.entry(parent).or_default().push(e.id);
            }
        }
    })?;
    let alive: std::collections::BTreeSet<EventId> =
        run.specials().iter().map(|sp| sp.0).collect();
    let mut out = Vec::with_capacity(roots.len());
    for root in roots {
        let mut seen = std::collections::BTreeSet::new();
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            if seen.insert(v) {
                if let Some(kids) = children.get(&v) {
                    stack.extend(kids.iter().copied());
                }
            }
        }
        let members_alive: Vec<EventId> =
            seen.into_iter().filter(|id| alive.contains(id)).collect();
        let m = members_alive.len();
        out.push(FamilyRecord { root, members_alive, m });
    }
    Ok(out)
}

/// Per-special coverage data for the geometric bound checks.
#[derive(Clone, Debug)]
pub struct SpecialCoverage {
    pub id: EventId,
    /// Count of regular points within distance 3/2.
    pub regulars_within_3_2: usize,
    /// Monte Carlo estimate of the volume of B(z,1) covered by unit balls
    /// around regular points.
    pub covered_volume: f64,
    pub n_samples: usize,
}

#[derive(Clone, Debug, Default)]
pub struct CoverageStat {
    pub per_special: Vec<SpecialCoverage>,
    pub mean_regulars_within_3_2: f64,
    pub mean_covered_volume: f64,
}

impl CoverageStat {
    pub fn is_empty(&self) -> bool {
        self.per_special.is_empty()
    }
}

/// Empirical regular-point coverage around each special point.
pub fn regular_coverage_stat(
    s: &CoupledState,
    n_samples: usize,
    seed: u64,
) -> Result<CoverageStat> {
    let w = *s.proc1.window();
    let nu1 = unit_ball_volume(w.d);
    let mut stream = CounterStream::new(seed ^ 0xC0FF_EE00);
    let mut per_special = Vec::new();
    for (id, x, _) in s.specials() {
        let regulars: Vec<Coord> = s
            .proc1
            .neighbors_within(x, 1.5)?
            .into_iter()
            .filter(|(q, _)| s.proc2.contains(*q))
            .map(|(_, y)| y)
            .collect();
        let mut covered = 0usize;
        for _ in 0..n_samples {
            // uniform point in B(x, 1) by rejection from the cube
            let y = loop {
                let mut u = [0.0; 3];
                let mut norm2 = 0.0;
                for uk in u.iter_mut().take(w.d) {
                    *uk = stream.uniform_in(-1.0, 1.0);
                    norm2 += *uk * *uk;
                }
                if norm2 <= 1.0 {
                    let mut y = x;
                    for k in 0..w.d {
                        y[k] += u[k];
                    }
                    break w.canonicalize(y);
                }
            };
            let hit = s
                .proc1
                .neighbors_within(y, 1.0)?
                .iter()
                .any(|(q, _)| s.proc2.contains(*q));
            covered += hit as usize;
        }
        per_special.push(SpecialCoverage {
            id,
            regulars_within_3_2: regulars.len(),
            covered_volume: nu1 * covered as f64 / n_samples as f64,
            n_samples,
        });
    }
    let n = per_special.len().max(1) as f64;
    let mean_regulars_within_3_2 =
        per_special.iter().map(|c| c.regulars_within_3_2 as f64).sum::<f64>() / n;
    let mean_covered_volume = per_special.iter().map(|c| c.covered_volume).sum::<f64>() / n;
    Ok(CoverageStat {
        per_special,
        mean_regulars_within_3_2,
        mean_covered_volume,
    })
}
