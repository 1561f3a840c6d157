mod common;

use common::random_piecewise;
use ntc_core::families::named_density;
use ntc_core::planner1d::{plan_1d_full, CertMethod};
use ntc_core::plannernd::{certify, plan_nd};
use ntc_core::transport::transport_particles;
use ntc_core::{DensityFunction, ExactRepr, GridDensityND, ParticleCloud, PiecewiseDensity1D};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dkw(m: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / (2.0 * m as f64)).sqrt()
}

#[test]
fn one_dimensional_plan_nd_is_plan_1d_full() {
    let rho0 = named_density("uniform", 1).unwrap();
    let rho_t = named_density("triangle", 1).unwrap();
    let (s1, r1) = plan_1d_full(&rho0, &rho_t, 0.1, 1.0).unwrap();
    let (s2, r2) = plan_nd(&rho0, &rho_t, 0.1, 1.0).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(r1.certified_error, r2.certified_error);
    assert_eq!(r1.discontinuities, r2.discontinuities);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn particles_land_near_the_target(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let src = random_piecewise(&mut rng, 2, 0.0, 1.0);
        let dst = random_piecewise(&mut rng, k, 0.5, 2.0);
        let eps = 0.1;
        let (s, report) = plan_1d_full(
            &DensityFunction::from_piecewise(src.clone()),
            &DensityFunction::from_piecewise(dst.clone()),
            eps,
            1.0,
        ).unwrap();
        prop_assert!(report.within_tolerance(), "{report:?}");
        prop_assert_eq!(report.method, CertMethod::Exact);
        prop_assert!((s.total_duration() - 1.0).abs() < 1e-9);
        let m = 5_000;
        let pts = DensityFunction::from_piecewise(src).sample(m, &mut rng).unwrap();
        let cloud = transport_particles(&ParticleCloud::uniform(1, pts).unwrap(), &s).unwrap();
        // KS is at most half the L1 distance
        let ks = dst.ks_distance_to_samples(&cloud.sorted_coordinate(0));
        prop_assert!(ks <= 0.5 * report.certified_error + dkw(m, 1e-6), "KS {ks}");
    }
}

#[test]
fn two_dimensional_checkerboard() {
    let rho0 = named_density("uniform", 2).unwrap();
    let rho_t = named_density("checkerboard:2", 2).unwrap();
    let eps = 0.1;
    let (s, report) = plan_nd(&rho0, &rho_t, eps, 1.0).unwrap();
    assert!(report.within_tolerance(), "{report:?}");
    assert!(report.discontinuities <= report.discontinuity_bound);
    assert!(report.mesh_origin.is_some());

    let src = ExactRepr::Grid(GridDensityND::new(2, vec![ntc_core::Cell::from_bounds(&[0.0, 0.0], &[1.0, 1.0], 1.0)]).unwrap());
    let particles = certify(&src, &s, &rho_t, 40_000).unwrap();
    assert!(particles.certified_error <= report.tolerance + particles.statistical_tolerance.unwrap_or(0.0));
}

#[test]
fn certify_rejects_a_wrong_reference() {
    let rho0 = PiecewiseDensity1D::uniform(0.0, 1.0).unwrap();
    let rho_t = named_density("triangle", 1).unwrap();
    let (s, _) = plan_1d_full(&DensityFunction::from_piecewise(rho0.clone()), &rho_t, 0.05, 1.0).unwrap();
    let wrong = named_density("uniform", 1).unwrap();
    let report = certify(&ExactRepr::OneD(rho0), &s, &wrong, 0).unwrap();
    assert!(report.certified_error > 0.3, "{}", report.certified_error);
}
