use modular_ppt::linalg::{self, max_abs, Subsystem};
use modular_ppt::optim::{self, PptSetSpec};
use modular_ppt::{choi, cones, gns, io, rng, BipartiteShape, Density64, Hermitian64};
use proptest::prelude::*;

fn shape() -> impl Strategy<Value = BipartiteShape> {
    (1usize..4, 1usize..4).prop_map(|(a, b)| BipartiteShape::new(a, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partial_transposes_are_involutions(s in shape(), seed in any::<u64>()) {
        let m = rng::ginibre::<f64, _>(&mut rng::seeded(seed), s.total(), s.total());
        for sys in [Subsystem::A, Subsystem::B] {
            let twice = linalg::partial_transpose(&linalg::partial_transpose(&m, s, sys).unwrap(), s, sys).unwrap();
            prop_assert_eq!(&twice, &m);
        }
        let both = linalg::partial_transpose(&linalg::partial_transpose(&m, s, Subsystem::A).unwrap(), s, Subsystem::B).unwrap();
        prop_assert_eq!(both, m.transpose());
    }

    #[test]
    fn partial_trace_keeps_the_trace(s in shape(), seed in any::<u64>()) {
        let d = rng::density::<f64, _>(&mut rng::seeded(seed), s.total());
        for keep in [Subsystem::A, Subsystem::B] {
            let r = linalg::partial_trace(d.matrix(), s, keep).unwrap();
            prop_assert!((r.trace().re - 1.0).abs() < 1e-12);
            prop_assert!(Density64::new(r).is_ok());
        }
    }

    #[test]
    fn choi_round_trip_is_exact(s in shape(), seed in any::<u64>()) {
        let h = rng::ginibre::<f64, _>(&mut rng::seeded(seed), s.total(), s.total());
        let t = choi::map_from_choi_matrix(&h, s).unwrap();
        prop_assert_eq!(choi::choi_matrix(&t), h);
    }

    #[test]
    fn square_roots_square_back(n in 1usize..8, rank in 1usize..8, seed in any::<u64>()) {
        let p = rng::psd_of_rank::<f64, _>(&mut rng::seeded(seed), n, rank.min(n));
        let r = linalg::mat_sqrt_psd(&p).unwrap();
        prop_assert!(max_abs(&(r.matrix() * r.matrix() - p.matrix())) <= 1e-9);
        prop_assert!(max_abs(&(r.matrix() * p.matrix() - p.matrix() * r.matrix())) <= 1e-9);
    }

    #[test]
    fn u_is_an_involution_and_maps_omega_to_itself(n in 1usize..5, seed in any::<u64>()) {
        let ctx = gns::build_gns(&gns::random_faithful::<f64, _>(&mut rng::seeded(seed), n)).unwrap();
        let xi = ctx.vector(rng::ginibre(&mut rng::seeded(seed ^ 1), n, n)).unwrap();
        let back = ctx.apply_u(&ctx.apply_u(&xi).unwrap()).unwrap();
        prop_assert!(back.distance(&xi) <= 1e-12);
        prop_assert!(ctx.apply_u(ctx.omega()).unwrap().distance(ctx.omega()) <= 1e-12);
    }

    #[test]
    fn cone_vectors_reproduce_their_states(n in 1usize..5, seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let ctx = gns::build_gns(&gns::random_faithful::<f64, _>(&mut r, n)).unwrap();
        let sigma = rng::density::<f64, _>(&mut r, n);
        let xi = cones::state_to_cone_vector(&ctx, &sigma).unwrap();
        prop_assert!(max_abs(&(xi.density() - sigma.matrix())) <= 1e-12);
        prop_assert!(cones::natural_cone_membership(&ctx, &xi).unwrap().inside);
    }

    #[test]
    fn matrix_files_round_trip(s in shape(), seed in any::<u64>()) {
        let m = rng::ginibre::<f64, _>(&mut rng::seeded(seed), s.total(), s.total());
        let file = io::MatrixFile::new(&m, Some(s), None);
        let back = io::MatrixFile::from_json(&file.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.matrix(), m);
        prop_assert_eq!(back.shape, Some(s));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn projections_land_in_the_ppt_set(a in 1usize..3, b in 2usize..4, seed in any::<u64>()) {
        let s = BipartiteShape::new(a, b).unwrap();
        let spec = PptSetSpec::new(s).with_seed(seed);
        let h = rng::hermitian::<f64, _>(&mut rng::seeded(seed), s.total());
        let (p, trace) = optim::project_ppt(&h, &spec).unwrap();
        prop_assert!(trace.feasibility_residual <= 1e-12);
        prop_assert!((p.trace() - 1.0).abs() <= 1e-12);
        let gamma = Hermitian64::from_hermitian_part(linalg::partial_transpose(p.matrix(), s, Subsystem::B).unwrap());
        prop_assert!(gamma.min_eigenvalue() >= -1e-12);
        prop_assert!(p.min_eigenvalue() >= -1e-12);
    }
}
