//! Randomized structural properties, exercised across the parameter space
//! rather than at hand-picked points.

use proptest::prelude::*;

use hardcore_sbd::config::parse_config;
use hardcore_sbd::config::SimulateConfig;
use hardcore_sbd::dynamics::{simulate, Configuration};
use hardcore_sbd::geometry::GridIndex;
use hardcore_sbd::randomness::{pair_mark, EventId};
use hardcore_sbd::{SimParams, Window};

fn coord(side: f64) -> impl Strategy<Value = [f64; 3]> {
    (0.0..side, 0.0..side).prop_map(|(x, y)| [x, y, 0.0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn torus_distance_is_a_metric(
        a in coord(9.0),
        b in coord(9.0),
        c in coord(9.0),
    ) {
        let w = Window::torus(2, 9.0).unwrap();
        let (ab, ba) = (w.distance(a, b), w.distance(b, a));
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!(w.distance(a, a) == 0.0);
        prop_assert!(ab <= w.distance(a, c) + w.distance(c, b) + 1e-9);
        // on a torus of side L no two points are farther than L*sqrt(d)/2
        prop_assert!(ab <= 9.0 * 2.0f64.sqrt() / 2.0 + 1e-9);
    }

    #[test]
    fn grid_query_matches_brute_force(
        pts in proptest::collection::vec(coord(7.3), 0..60),
        q in coord(7.3),
        r in 0.1..1.5f64,
    ) {
        let w = Window::torus(2, 7.3).unwrap();
        let mut index = GridIndex::new(w);
        for (i, &x) in pts.iter().enumerate() {
            index.insert(i, x);
        }
        let mut got: Vec<usize> = index
            .neighbors_within(q, r)
            .unwrap()
            .into_iter()
            .map(|(id, _)| id)
            .collect();
        got.sort_unstable();
        let mut want: Vec<usize> = pts
            .iter()
            .enumerate()
            .filter(|(_, &x)| w.distance(w.canonicalize(x), q) <= r)
            .map(|(i, _)| i)
            .collect();
        want.sort_unstable();
        prop_assert_eq!(got, want);
    }

    #[test]
    fn marks_are_symmetric_and_binary_fair(seed in any::<u64>(), s1 in 0i64..50, s2 in 50i64..100) {
        let a = EventId::Rain { slab: s1, cell: [0, 0, 0], ordinal: 0 };
        let b = EventId::Rain { slab: s2, cell: [1, 0, 0], ordinal: 1 };
        let m1 = pair_mark(seed, a, b, 0.5).unwrap();
        let m2 = pair_mark(seed, b, a, 0.5).unwrap();
        prop_assert_eq!(m1, m2);
        prop_assert!(pair_mark(seed, a, b, 1.0).unwrap());
        prop_assert!(!pair_mark(seed, a, b, 0.0).unwrap());
    }

    #[test]
    fn simulation_preserves_hardcore_everywhere(
        seed in any::<u64>(),
        rho in 0.0..=1.0f64,
        t in 0.5..4.0f64,
    ) {
        let p = SimParams { seed, rho, side: 6.0, ..SimParams::default() };
        let (_, end) = simulate(&p, Configuration::new(p.window()), 0.0, t, false).unwrap();
        prop_assert!(end.hardcore_ok_bruteforce());
        prop_assert!((end.now - t).abs() < 1e-12);
    }

    #[test]
    fn config_json_roundtrip(rho in 0.0..=1.0f64, seed in any::<u64>(), t_end in 0.0..50.0f64) {
        let cfg = SimulateConfig {
            params: SimParams { rho, seed, ..SimParams::default() },
            t_end,
            ..SimulateConfig::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        let back: SimulateConfig = parse_config(&text, "simulate").unwrap();
        prop_assert_eq!(back.params, cfg.params);
        prop_assert_eq!(back.t_end, cfg.t_end);
    }
}
