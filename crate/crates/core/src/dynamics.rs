//! Single-process hard-core birth-death dynamics.
//!
//! The pathwise rule: when a point arrives, one Bernoulli(rho) mark is drawn
//! per live neighbor within distance 1. Neighbors with mark 1 die; the
//! arrival is accepted iff every mark was 1 (vacuously when there are no
//! neighbors). Deaths happen only this way, so given k neighbors the
//! acceptance probability is exactly rho^k and each neighbor dies with
//! probability rho.

use std::collections::BTreeMap;
use std::io::Write as IoWrite;

use crate::config::{InitKind, SimParams};
use crate::error::{Error, Result};
use crate::geometry::{Boundary, Coord, GridIndex, Window};
use crate::randomness::{init_stream, poisson_count, rain, ArrivalEvent, EventId, MarkOracle};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointRecord {
    pub x: Coord,
    pub birth: f64,
}

/// Live point set with stable identities and a cell-list index.
#[derive(Clone, Debug)]
pub struct Configuration {
    window: Window,
    points: BTreeMap<EventId, PointRecord>,
    index: GridIndex<EventId>,
    pub now: f64,
}

impl Configuration {
    pub fn new(window: Window) -> Self {
        Configuration {
            window,
            points: BTreeMap::new(),
            index: GridIndex::new(window),
            now: 0.0,
        }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, id: EventId) -> bool {
        self.points.contains_key(&id)
    }

    pub fn get(&self, id: EventId) -> Option<&PointRecord> {
        self.points.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EventId, &PointRecord)> {
        self.points.iter()
    }

    pub fn insert(&mut self, id: EventId, x: Coord, birth: f64) {
        let x = self.window.canonicalize(x);
        let prev = self.points.insert(id, PointRecord { x, birth });
        debug_assert!(prev.is_none(), "duplicate point id {id}");
        self.index.insert(id, x);
    }

    pub fn remove(&mut self, id: EventId) -> bool {
        if let Some(rec) = self.points.remove(&id) {
            self.index.remove(id, rec.x);
            true
        } else {
            false
        }
    }

    /// Live points within closed distance `r` of `x`, sorted by id.
    pub fn neighbors_within(&self, x: Coord, r: f64) -> Result<Vec<(EventId, Coord)>> {
        self.index.neighbors_within(x, r)
    }

    /// No live point within closed distance 1 of `x`.
    pub fn is_admissible(&self, x: Coord) -> bool {
        self.neighbors_within(x, 1.0)
            .map(|v| v.is_empty())
            .unwrap_or(false)
    }

    /// Hard-core invariant via the grid (every point's unit ball holds only
    /// itself).
    pub fn hardcore_ok(&self) -> bool {
        self.points.iter().all(|(id, rec)| {
            self.neighbors_within(rec.x, 1.0)
                .map(|v| v.iter().all(|(k, _)| k == id))
                .unwrap_or(false)
        })
    }

    /// Hard-core invariant by brute-force pair scan (test oracle).
    pub fn hardcore_ok_bruteforce(&self) -> bool {
        let pts: Vec<_> = self.points.values().map(|r| r.x).collect();
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                if self.window.distance(pts[i], pts[j]) <= 1.0 {
                    return false;
                }
            }
        }
        true
    }

    /// Point-set equality (ids, coordinates, and birth times).
    pub fn same_points(&self, other: &Configuration) -> bool {
        self.points == other.points
    }

    pub fn from_points<I>(window: Window, points: I) -> Self
    where
        I: IntoIterator<Item = (EventId, Coord, f64)>,
    {
        let mut c = Configuration::new(window);
        for (id, x, birth) in points {
            c.insert(id, x, birth);
        }
        c
    }
}

/// Outcome of one applied arrival.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub accepted: bool,
    pub killed: Vec<EventId>,
}

/// Apply one arrival to a configuration (pathwise transition rule).
pub fn apply_arrival(
    c: &mut Configuration,
    e: &ArrivalEvent,
    marks: &dyn MarkOracle,
) -> Result<Transition> {
    if e.t < c.now {
        return Err(Error::OutOfOrderEvent { event_t: e.t, now: c.now });
    }
    let neighbors = c.neighbors_within(e.x, 1.0)?;
    let mut killed = Vec::new();
    let mut accepted = true;
    for (q, _) in &neighbors {
        if marks.mark(e.id, *q) {
            killed.push(*q);
        } else {
            accepted = false;
        }
    }
    for q in &killed {
        c.remove(*q);
    }
    if accepted {
        c.insert(e.id, e.x, e.t);
    }
    c.now = e.t;
    Ok(Transition { accepted, killed })
}

/// All rain events with t in [t0, t1), sorted by (t, id).
pub fn rain_in_interval(p: &SimParams, t0: f64, t1: f64) -> Vec<ArrivalEvent> {
    let w = p.window();
    let slab_lo = (t0 / p.slab_len).floor() as i64;
    let slab_hi = (t1 / p.slab_len).ceil() as i64; // exclusive
    let mut events = Vec::new();
    for slab in slab_lo..slab_hi {
        for cell in w.cells() {
            for e in rain(p.seed, slab, cell, p.lambda, p.slab_len, &w) {
                if e.t >= t0 && e.t < t1 {
                    events.push(e);
                }
            }
        }
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.id.cmp(&b.id)));
    events
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub id: EventId,
    pub t: f64,
    pub accepted: bool,
    pub killed: Vec<EventId>,
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    /// (time, live point count) at the start and at each slab boundary.
    pub snapshots: Vec<(f64, usize)>,
    /// Full event log when requested.
    pub events: Option<Vec<EventRecord>>,
    /// Number of arrivals applied, whether or not logged.
    pub n_events: u64,
}

/// Run the dynamics over [t0, t1) from an initial configuration.
pub fn simulate(
    p: &SimParams,
    mut init: Configuration,
    t0: f64,
    t1: f64,
    log_events: bool,
) -> Result<(Trajectory, Configuration)> {
    p.validate()?;
    if t0 > t1 {
        return Err(Error::contract(format!("t0 = {t0} > t1 = {t1}")));
    }
    if !init.hardcore_ok() {
        return Err(Error::InvalidInitialCondition(
            "initial configuration violates the hard-core property".into(),
        ));
    }
    let marks = crate::randomness::SeededMarks::new(p.seed, p.rho);
    init.now = t0;
    let mut traj = Trajectory {
        snapshots: vec![(t0, init.len())],
        events: if log_events { Some(Vec::new()) } else { None },
        n_events: 0,
    };
    if t0 == t1 {
        return Ok((traj, init));
    }
    let w = p.window();
    let slab_lo = (t0 / p.slab_len).floor() as i64;
    let slab_hi = (t1 / p.slab_len).ceil() as i64;
    for slab in slab_lo..slab_hi {
        let mut events = Vec::new();
        for cell in w.cells() {
            for e in rain(p.seed, slab, cell, p.lambda, p.slab_len, &w) {
                if e.t >= t0 && e.t < t1 {
                    events.push(e);
                }
            }
        }
        events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.id.cmp(&b.id)));
        for e in events {
            let tr = apply_arrival(&mut init, &e, &marks)?;
            traj.n_events += 1;
            if let Some(log) = traj.events.as_mut() {
                log.push(EventRecord {
                    id: e.id,
                    t: e.t,
                    accepted: tr.accepted,
                    killed: tr.killed,
                });
            }
        }
        let slab_end = ((slab + 1) as f64 * p.slab_len).min(t1);
        traj.snapshots.push((slab_end, init.len()));
    }
    init.now = t1;
    Ok((traj, init))
}

/// Dependency graph over one time slab: directed edges from later to earlier
/// arrivals within spatial distance 2.
#[derive(Clone, Debug)]
pub struct DependencyGraph {
    pub t0: f64,
    pub t1: f64,
    /// Sorted by (t, id).
    pub events: Vec<ArrivalEvent>,
    /// (later index, earlier index) pairs.
    pub edges: Vec<(usize, usize)>,
    component: Vec<usize>,
    pub n_components: usize,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, i: usize) -> usize {
        if self.parent[i] != i {
            let root = self.find(self.parent[i]);
            self.parent[i] = root;
        }
        self.parent[i]
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

impl DependencyGraph {
    pub fn component_of(&self, event_index: usize) -> usize {
        self.component[event_index]
    }

    pub fn max_component_size(&self) -> usize {
        let mut sizes = vec![0usize; self.n_components];
        for &c in &self.component {
            sizes[c] += 1;
        }
        sizes.into_iter().max().unwrap_or(0)
    }
}

/// Build the slab dependency graph over [t0, t0 + epsilon).
pub fn build_dependency_graph(p: &SimParams, t0: f64, epsilon: f64) -> Result<DependencyGraph> {
    if !(epsilon > 0.0) {
        return Err(Error::contract(format!("epsilon = {epsilon} must be > 0")));
    }
    let w = p.window();
    let events = rain_in_interval(p, t0, t0 + epsilon);
    let n = events.len();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            // events are time-sorted, so j is the later endpoint
            if w.distance(events[i].x, events[j].x) <= 2.0 {
                edges.push((j, i));
            }
        }
    }
    let mut uf = UnionFind::new(n);
    for &(a, b) in &edges {
        uf.union(a, b);
    }
    let mut label = BTreeMap::new();
    let mut component = vec![0usize; n];
    for (i, c) in component.iter_mut().enumerate() {
        let root = uf.find(i);
        let next = label.len();
        *c = *label.entry(root).or_insert(next);
    }
    let n_components = label.len();
    Ok(DependencyGraph {
        t0,
        t1: t0 + epsilon,
        events,
        edges,
        component,
        n_components,
    })
}

/// Resolve one slab by backward investigation: each dependency-graph
/// component is settled independently, in time order, against the initial
/// points it can reach. Output is point-set identical to `simulate` over the
/// same slab and randomness.
pub fn resolve_slab(
    init: &Configuration,
    g: &DependencyGraph,
    marks: &dyn MarkOracle,
) -> Result<Configuration> {
    if (init.now - g.t0).abs() > 1e-9 {
        return Err(Error::contract(format!(
            "graph starts at t = {} but configuration is at t = {}",
            g.t0, init.now
        )));
    }
    let n = g.events.len();

    // Attach each initial point within distance 1 of an event to that
    // event's component; merge components on (measure-zero) conflicts.
    let mut uf = UnionFind::new(n);
    for &(a, b) in &g.edges {
        uf.union(a, b);
    }
    let mut init_owner: BTreeMap<EventId, usize> = BTreeMap::new();
    for (i, e) in g.events.iter().enumerate() {
        for (id, _) in init.neighbors_within(e.x, 1.0)? {
            match init_owner.get(&id) {
                Some(&j) => uf.union(i, j),
                None => {
                    init_owner.insert(id, i);
                }
            }
        }
    }

    let mut roots: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        roots.entry(uf.find(i)).or_default().push(i);
    }

    let mut out = init.clone();
    for (_, mut members) in roots {
        members.sort_by(|&a, &b| {
            g.events[a]
                .t
                .total_cmp(&g.events[b].t)
                .then(g.events[a].id.cmp(&g.events[b].id))
        });
        // local board: just the initial points this component can touch
        let mut local = Configuration::new(*init.window());
        local.now = g.t0;
        let mut local_inits = Vec::new();
        for (&id, &owner) in &init_owner {
            if uf.find(owner) == uf.find(members[0]) {
                let rec = init.get(id).expect("initial point");
                local.insert(id, rec.x, rec.birth);
                local_inits.push(id);
            }
        }
        for &i in &members {
            apply_arrival(&mut local, &g.events[i], marks)?;
        }
        for id in local_inits {
            if !local.contains(id) {
                out.remove(id);
            }
        }
        for (&id, rec) in local.iter() {
            if !id.is_initial() {
                out.insert(id, rec.x, rec.birth);
            }
        }
    }
    out.now = g.t1;
    Ok(out)
}

/// Generate an initial condition of the requested kind at time 0.
pub fn generate_initial(kind: InitKind, lambda_prop: f64, p: &SimParams) -> Result<Configuration> {
    let w = p.window();
    match kind {
        InitKind::Empty => Ok(Configuration::new(w)),
        InitKind::Matern1 | InitKind::Matern2 => {
            if !(lambda_prop > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "lambda_prop = {lambda_prop} must be > 0"
                )));
            }
            let mut stream = init_stream(p.seed);
            let count = poisson_count(&mut stream, lambda_prop * w.volume());
            let mut proposals = Vec::with_capacity(count as usize);
            for ordinal in 0..count {
                let mut x = [0.0; 3];
                for xk in x.iter_mut().take(w.d) {
                    *xk = stream.uniform_in(0.0, w.side);
                }
                let mark = stream.uniform();
                proposals.push((EventId::Initial { ordinal }, x, mark));
            }
            let mut index = GridIndex::new(w);
            for &(id, x, _) in &proposals {
                index.insert(id, x);
            }
            let marks: BTreeMap<EventId, f64> =
                proposals.iter().map(|&(id, _, m)| (id, m)).collect();
            let mut cfg = Configuration::new(w);
            for &(id, x, m) in &proposals {
                let neighbors = index.neighbors_within(x, 1.0)?;
                let keep = match kind {
                    // type I: delete every point with a neighbor within 1
                    InitKind::Matern1 => neighbors.iter().all(|(q, _)| *q == id),
                    // type II: keep iff our mark is smallest in the neighborhood
                    InitKind::Matern2 => neighbors
                        .iter()
                        .all(|(q, _)| *q == id || (m, id) < (marks[q], *q)),
                    _ => unreachable!(),
                };
                if keep {
                    cfg.insert(id, x, 0.0);
                }
            }
            Ok(cfg)
        }
        InitKind::SaturatedRsa => saturated_rsa(p),
    }
}

/// Fill the window to jamming with pure-birth (rho = 0) hard-core dynamics.
///
/// d = 1 uses exact gap bookkeeping (sample the next center uniformly from
/// the still-admissible set until its measure vanishes), which has the same
/// law as rain-driven RSA. d >= 2 uses dart throwing followed by sweeps of a
/// fine candidate grid; the process stops when a full sweep finds no
/// admissible site.
fn saturated_rsa(p: &SimParams) -> Result<Configuration> {
    let w = p.window();
    let mut stream = init_stream(p.seed);
    let mut cfg = Configuration::new(w);
    let mut ordinal = 0u64;
    let mut place = |cfg: &mut Configuration, x: Coord| {
        cfg.insert(EventId::Initial { ordinal }, x, 0.0);
        ordinal += 1;
    };

    if w.d == 1 {
        // admissible intervals for new centers, kept sorted and disjoint
        let mut gaps: Vec<(f64, f64)> = vec![(0.0, w.side)];
        loop {
            let total: f64 = gaps.iter().map(|(a, b)| b - a).sum();
            if total < 1e-9 {
                break;
            }
            let mut u = stream.uniform() * total;
            let mut x = None;
            for &(a, b) in &gaps {
                if u <= b - a {
                    x = Some(a + u);
                    break;
                }
                u -= b - a;
            }
            let x = x.unwrap_or(gaps.last().unwrap().1);
            place(&mut cfg, [x, 0.0, 0.0]);
            // remove [x-1, x+1] from the admissible set (wrapping on a torus)
            let blocked: Vec<(f64, f64)> = if w.boundary == Boundary::Torus {
                let (lo, hi) = (x - 1.0, x + 1.0);
                if lo < 0.0 {
                    vec![(0.0, hi), (lo + w.side, w.side)]
                } else if hi > w.side {
                    vec![(lo, w.side), (0.0, hi - w.side)]
                } else {
                    vec![(lo, hi)]
                }
            } else {
                vec![((x - 1.0).max(0.0), (x + 1.0).min(w.side))]
            };
            for (blo, bhi) in blocked {
                let mut next = Vec::with_capacity(gaps.len() + 1);
                for &(a, b) in &gaps {
                    if bhi <= a || blo >= b {
                        next.push((a, b));
                    } else {
                        if a < blo {
                            next.push((a, blo));
                        }
                        if bhi < b {
                            next.push((bhi, b));
                        }
                    }
                }
                gaps = next;
            }
        }
        return Ok(cfg);
    }

    // darts to fill the bulk quickly
    let darts = (20.0 * w.volume()) as usize;
    for _ in 0..darts {
        let mut x = [0.0; 3];
        for xk in x.iter_mut().take(w.d) {
            *xk = stream.uniform_in(0.0, w.side);
        }
        if cfg.is_admissible(x) {
            place(&mut cfg, x);
        }
    }
    // grid sweeps; a site once inadmissible stays inadmissible, so this
    // terminates after the first empty sweep
    let h = 0.1;
    let per_axis = (w.side / h).floor() as i64;
    loop {
        let mut admissible = Vec::new();
        let axis_range = |k: usize| if k < w.d { per_axis } else { 1 };
        for i in 0..axis_range(0) {
            for j in 0..axis_range(1) {
                for k in 0..axis_range(2) {
                    let x = [i as f64 * h, j as f64 * h, k as f64 * h];
                    if cfg.is_admissible(x) {
                        admissible.push(x);
                    }
                }
            }
        }
        if admissible.is_empty() {
            break;
        }
        // insert in random order, re-checking against fresh insertions
        for i in (1..admissible.len()).rev() {
            let j = (stream.next_word() % (i as u64 + 1)) as usize;
            admissible.swap(i, j);
        }
        for x in admissible {
            if cfg.is_admissible(x) {
                place(&mut cfg, x);
            }
        }
    }
    Ok(cfg)
}

/// Snapshot export: `id,kind,x1[,x2[,x3]],birth_time`, one row per live
/// point, coordinates with 17 significant digits for exact round-trip.
pub fn write_snapshot_csv<Wr: IoWrite>(c: &Configuration, out: &mut Wr) -> std::io::Result<()> {
    let d = c.window().d;
    let coords: String = (1..=d).map(|k| format!(",x{k}")).collect();
    writeln!(out, "id,kind{coords},birth_time")?;
    for (id, rec) in c.iter() {
        let kind = if id.is_initial() { "initial" } else { "rain" };
        write!(out, "{id},{kind}")?;
        for k in 0..d {
            write!(out, ",{:.16e}", rec.x[k])?;
        }
        writeln!(out, ",{:.16e}", rec.birth)?;
    }
    Ok(())
}
