use std::sync::OnceLock;

use nalgebra::{DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use reflect2d::bvp::{BoundaryCondition, Discretization, ProblemSpec};
use reflect2d::config::ConfigFile;
use reflect2d::geometry::{make_circle, GeometryLayout, Point};
use reflect2d::projection::{
    intersection_of_projectors, iterate, operator_norm, orth_projector, random_instance, IterationKind,
    ProjectorMatrix,
};
use reflect2d::reflections::{estimate_contraction, kappa_pair, run_reflections, ReflectionForm, ReflectionOptions};

fn two_disk_problem() -> &'static Discretization {
    static DISC: OnceLock<Discretization> = OnceLock::new();
    DISC.get_or_init(|| {
        let a = make_circle(Point::new(-1.5, 0.0), 1.0, 64).unwrap();
        let b = make_circle(Point::new(1.6, 0.3), 0.9, 64).unwrap();
        let g: Vec<f64> = a.nodes().iter().map(|p| p.x).collect();
        let h: Vec<f64> = b.nodes().iter().map(|p| p.y * p.y).collect();
        let layout = GeometryLayout::new(Some(make_circle(Point::zeros(), 6.0, 128).unwrap()), vec![a, b]);
        let problem =
            ProblemSpec::new(layout, vec![BoundaryCondition::Dirichlet(g), BoundaryCondition::Neumann(h)]).unwrap();
        Discretization::new(problem).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projectors_are_symmetric_idempotent_with_binary_spectrum(seed in any::<u64>(), n in 2usize..10, d in 1usize..10) {
        let d = d.min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = &random_instance(n, &[d], 0, &mut rng).unwrap()[0];
        let p = orth_projector(b);
        prop_assert!(p.idempotence_defect() <= 1e-12 * operator_norm(p.matrix()));
        prop_assert!(p.symmetry_defect() <= 1e-12);
        let ev = SymmetricEigen::new(p.0.clone()).eigenvalues;
        prop_assert!(ev.iter().all(|e| e.abs() < 1e-10 || (e - 1.0).abs() < 1e-10));
        prop_assert_eq!(p.rank(), d);
    }

    #[test]
    fn intersection_vectors_are_fixed_points(seed in any::<u64>(), count in 2usize..5, common in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = vec![common + 2; count];
        let bases = random_instance(8, &dims, common, &mut rng).unwrap();
        let ps: Vec<ProjectorMatrix> = bases.iter().map(orth_projector).collect();
        let p = intersection_of_projectors(&ps).unwrap();
        prop_assert!(p.rank() >= common);
        let v = p.matrix() * DVector::from_fn(8, |i, _| (i as f64 + 1.0).sin());
        let w = vec![1.0 / count as f64; count];
        for kind in [IterationKind::Alternating, IterationKind::Averaged(w), IterationKind::Relaxed(0.4)] {
            let r = iterate(&kind, &ps, &v, 5).unwrap();
            for it in &r.iterates {
                prop_assert!((it - &v).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn geometric_series_contraction_is_exact(alpha in 0.01f64..0.99, c in 0.1f64..100.0) {
        let errors: Vec<f64> = (0..30).map(|k| c * alpha.powi(k)).filter(|e| *e > 1e-12).collect();
        prop_assume!(errors.len() >= 12);
        let fit = estimate_contraction(&errors, 2).unwrap();
        prop_assert!((fit.k - alpha).abs() < 1e-12 * alpha.max(1.0) * 10.0);
        prop_assert!(fit.residual < 1e-10);
    }

    #[test]
    fn kappa_is_symmetric_and_decreasing(s_i in 0.1f64..50.0, s_j in 0.1f64..50.0, d in 0.05f64..50.0) {
        let k = kappa_pair(s_i, s_j, 1.0, d).unwrap();
        prop_assert!(k > 0.0);
        prop_assert!((k - kappa_pair(s_j, s_i, 1.0, d).unwrap()).abs() <= 1e-15 * k);
        prop_assert!(kappa_pair(s_i, s_j, 1.0, d * 1.5).unwrap() < k);
        prop_assert!(kappa_pair(s_i, s_j, 1.0, -d).is_err());
    }

    #[test]
    fn config_values_round_trip(key in "[a-z][a-z_]{0,10}", value in "[A-Za-z0-9.,+*/ -]{1,20}") {
        let value = value.trim().to_string();
        prop_assume!(!value.is_empty());
        let text = format!("[section name]\n{key} = {value}\n");
        let c = ConfigFile::parse(&text).unwrap();
        let s = c.section("section").unwrap();
        prop_assert_eq!(s.name.as_deref(), Some("name"));
        prop_assert_eq!(&s.entry(&key).unwrap().value, &value);
        prop_assert_eq!(s.entry(&key).unwrap().line, 2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn relaxed_correction_identity_for_any_factor(nu in 0.05f64..=1.0) {
        let disc = two_disk_problem();
        let opts = ReflectionOptions { max_cycles: 6, tol: 0.0, run_to_completion: true, ..Default::default() };
        let (_, report) = run_reflections(disc, ReflectionForm::Relaxed(nu), &opts, None).unwrap();
        prop_assert!(report.max_correction_residual < 1e-10, "{}", report.max_correction_residual);
    }

    #[test]
    fn direct_solution_is_linear_in_the_data(alpha in -5.0f64..5.0) {
        let disc = two_disk_problem();
        let base = disc.solve_direct().unwrap();
        let conds: Vec<BoundaryCondition> = disc
            .problem()
            .conditions()
            .iter()
            .map(|c| match c {
                BoundaryCondition::Dirichlet(g) => BoundaryCondition::Dirichlet(g.iter().map(|v| alpha * v).collect()),
                BoundaryCondition::Neumann(g) => BoundaryCondition::Neumann(g.iter().map(|v| alpha * v).collect()),
                BoundaryCondition::FourthType { flux } => BoundaryCondition::FourthType { flux: alpha * flux },
            })
            .collect();
        let scaled = Discretization::new(ProblemSpec::new(disc.problem().layout().clone(), conds).unwrap())
            .unwrap()
            .solve_direct()
            .unwrap();
        for (a, b) in base.densities.layers.iter().zip(&scaled.densities.layers) {
            if let (Some(a), Some(b)) = (a, b) {
                prop_assert!((a * alpha - b).amax() <= 1e-10 * (1.0 + a.amax() * alpha.abs()));
            }
        }
    }
}
