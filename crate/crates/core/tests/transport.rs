mod common;

use common::{random_piecewise, rk45};
use ntc_core::plannernd::build_parallel_translation;
use ntc_core::transport::{pushforward_1d, simulate_boxes, simulate_density, transport_particles};
use ntc_core::{Cell, ControlArc, ControlSchedule, DensityFunction, GridDensityND, ParticleCloud};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn arc_strategy() -> impl Strategy<Value = ControlArc> {
    (-2.0..2.0f64, prop_oneof![Just(-1.0), Just(1.0), -2.0..2.0f64], -1.5..1.5f64, 0.05..1.0f64)
        .prop_filter("nonzero slope", |(_, a, _, _)| a.abs() > 1e-3)
        .prop_map(|(w, a, b, t)| ControlArc::scalar(w, a, b, t).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pushforward_conserves_mass(seed in any::<u64>(), k in 1usize..6, arc in arc_strategy()) {
        let p = random_piecewise(&mut ChaCha8Rng::seed_from_u64(seed), k, -1.0, 1.0);
        let q = pushforward_1d(&p, &arc).unwrap();
        prop_assert!((q.mass() - p.mass()).abs() < 1e-10);
    }

    #[test]
    fn pushforward_preserves_l1_distance(seed in any::<u64>(), arcs in prop::collection::vec(arc_strategy(), 1..4)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_piecewise(&mut rng, 3, -1.0, 1.0);
        let q = random_piecewise(&mut rng, 4, -1.0, 1.0);
        let s = ControlSchedule::new(1, arcs).unwrap();
        let before = p.l1_distance(&q);
        let after = simulate_density(&p, &s).unwrap().l1_distance(&simulate_density(&q, &s).unwrap());
        prop_assert!((before - after).abs() < 1e-8 * (1.0 + before), "{before} vs {after}");
    }

    #[test]
    fn component_count_is_invariant(seed in any::<u64>(), k in 1usize..6, arcs in prop::collection::vec(arc_strategy(), 1..5)) {
        let p = random_piecewise(&mut ChaCha8Rng::seed_from_u64(seed), k, -1.0, 1.0);
        let s = ControlSchedule::new(1, arcs).unwrap();
        let q = simulate_density(&p, &s).unwrap();
        prop_assert_eq!(q.support_components(), p.support_components());
    }

    #[test]
    fn closed_form_flow_matches_integrator(
        w in prop::collection::vec(-1.5..1.5f64, 2),
        a in prop::collection::vec(-1.5..1.5f64, 2),
        b in -1.0..1.0f64,
        x in prop::collection::vec(-1.0..1.0f64, 2),
        t in 0.05..1.0f64,
    ) {
        let arc = ControlArc::new(w, a, b, t).unwrap();
        let exact = arc.flow_map(&x, t).unwrap();
        let oracle = rk45(&arc, &x, t, 1e-10, 1e-12);
        for (e, o) in exact.iter().zip(&oracle) {
            prop_assert!((e - o).abs() < 1e-7, "{exact:?} vs {oracle:?}");
        }
    }

    #[test]
    fn shear_pairs_move_boxes_rigidly(shift in -1.0..1.0f64, y in 0.2..0.8f64) {
        let g = GridDensityND::new(2, vec![
            Cell::from_bounds(&[-1.0, -0.5], &[-0.2, 0.5], 1.0),
            Cell::from_bounds(&[0.2 + y, -0.5], &[1.5, 0.5], 2.0),
        ]).unwrap();
        let s = build_parallel_translation(2, 0, 1, 0.0, 0.1, 20.0 * shift.abs().max(0.01)).unwrap();
        let out = simulate_boxes(&g, &s).unwrap();
        prop_assert!((out.mass() - g.mass()).abs() < 1e-12);
        prop_assert_eq!(&out.cells()[0], &g.cells()[0]);
        let moved = &out.cells()[1];
        let expected = -0.1 * 10.0 * shift.abs().max(0.01);
        prop_assert!((moved.center[1] - g.cells()[1].center[1] - expected).abs() < 1e-12);
        prop_assert_eq!(&moved.half_widths, &g.cells()[1].half_widths);
    }
}

#[test]
fn particles_follow_the_exact_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rho = random_piecewise(&mut rng, 4, -1.0, 1.0);
    let s = ControlSchedule::new(
        1,
        vec![
            ControlArc::scalar(0.8, 1.0, 0.2, 0.5).unwrap(),
            ControlArc::scalar(-0.6, -1.0, 0.4, 0.7).unwrap(),
            ControlArc::scalar(1.0, 0.0, 0.5, 0.3).unwrap(),
        ],
    )
    .unwrap();
    let exact = simulate_density(&rho, &s).unwrap();
    let m = 20_000;
    let pts = DensityFunction::from_piecewise(rho).sample(m, &mut rng).unwrap();
    let cloud = transport_particles(&ParticleCloud::uniform(1, pts).unwrap(), &s).unwrap();
    let ks = exact.ks_distance_to_samples(&cloud.sorted_coordinate(0));
    // Dvoretzky–Kiefer–Wolfowitz at level 1e-6
    let bound = ((2.0f64 / 1e-6).ln() / (2.0 * m as f64)).sqrt();
    assert!(ks < bound, "KS {ks} ≥ {bound}");
}

#[test]
fn boxes_agree_with_particle_flow() {
    let g = GridDensityND::new(
        2,
        vec![
            Cell::from_bounds(&[0.0, 0.0], &[0.5, 0.5], 2.0),
            Cell::from_bounds(&[1.0, 0.0], &[1.5, 0.5], 2.0),
        ],
    )
    .unwrap();
    let s = build_parallel_translation(2, 0, 1, 0.7, 0.8, 4.0).unwrap();
    let out = simulate_boxes(&g, &s).unwrap();
    let probes = [[0.1, 0.1], [0.4, 0.45], [1.1, 0.2], [1.45, 0.05]];
    for p in probes {
        let q = s.flow_map(&p).unwrap();
        assert!(out.eval(&q) > 0.0, "{p:?} ↦ {q:?} outside the image");
    }
}
