use std::f64::consts::PI;

use reflect2d::bvp::{BoundaryCondition, CarrierDensities, Discretization, ProblemSpec};
use reflect2d::geometry::{make_circle, make_cshape, GeometryLayout, Point};
use reflect2d::potentials::{evaluate_field, Want};
use reflect2d::reflections::{
    correction_residual, probe_cloud, run_reflections, ReflectionForm, ReflectionOptions, Status,
};

fn layout_with_container(objects: Vec<reflect2d::geometry::BoundaryCurve>) -> GeometryLayout {
    GeometryLayout::new(Some(make_circle(Point::zeros(), 10.0, 256).unwrap()), objects)
}

fn mixed_problem() -> Discretization {
    let a = make_circle(Point::new(-3.0, 0.5), 1.0, 96).unwrap();
    let b = make_circle(Point::new(3.0, -0.5), 0.8, 96).unwrap();
    let c = make_circle(Point::new(0.0, 4.0), 0.6, 96).unwrap();
    let g_a: Vec<f64> = a.nodes().iter().map(|p| 1.0 + 0.3 * p.y).collect();
    let g_b: Vec<f64> = b.nodes().iter().map(|p| ((p.y + 0.5) / 0.8).sin()).collect();
    let problem = ProblemSpec::new(
        layout_with_container(vec![a, b, c]),
        vec![
            BoundaryCondition::Dirichlet(g_a),
            BoundaryCondition::Neumann(g_b),
            BoundaryCondition::FourthType { flux: 0.7 },
        ],
    )
    .unwrap();
    Discretization::new(problem).unwrap()
}

fn bitwise_equal(a: &CarrierDensities, b: &CarrierDensities) -> bool {
    let layers = a.layers.iter().zip(&b.layers).all(|(x, y)| match (x, y) {
        (Some(x), Some(y)) => x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()),
        (None, None) => true,
        _ => false,
    });
    let sources = a.sources.iter().zip(&b.sources).all(|(p, q)| p.to_bits() == q.to_bits());
    layers && sources
}

#[test]
fn single_object_is_solved_in_one_cycle() {
    for cond in [
        BoundaryCondition::Dirichlet(vec![2.0; 128]),
        BoundaryCondition::FourthType { flux: -1.0 },
    ] {
        let obj = make_circle(Point::new(1.0, -2.0), 1.5, 128).unwrap();
        let disc = Discretization::new(ProblemSpec::new(layout_with_container(vec![obj]), vec![cond]).unwrap()).unwrap();
        let direct = disc.solve_direct().unwrap();
        let opts = ReflectionOptions {
            tol: 1e-10,
            ..Default::default()
        };
        for form in [ReflectionForm::Sequential, ReflectionForm::Parallel, ReflectionForm::averaged(1)] {
            let (_, report) = run_reflections(&disc, form, &opts, Some(&direct.field)).unwrap();
            assert_eq!(report.status, Status::Converged);
            assert!(report.cycles <= 1, "{form:?} needed {} cycles", report.cycles);
        }
        // sequential and parallel coincide bitwise for one object
        let (ts, _) = run_reflections(&disc, ReflectionForm::Sequential, &opts, None).unwrap();
        let (tp, _) = run_reflections(&disc, ReflectionForm::Parallel, &opts, None).unwrap();
        assert!(bitwise_equal(&ts.approximation(), &tp.approximation()));
    }
}

#[test]
fn parallel_is_relaxed_with_unit_factor_bitwise() {
    let disc = mixed_problem();
    let opts = ReflectionOptions {
        max_cycles: 12,
        tol: 0.0,
        run_to_completion: true,
        ..Default::default()
    };
    let (tp, rp) = run_reflections(&disc, ReflectionForm::Parallel, &opts, None).unwrap();
    let (tr, rr) = run_reflections(&disc, ReflectionForm::Relaxed(1.0), &opts, None).unwrap();
    assert!(bitwise_equal(&tp.approximation(), &tr.approximation()));
    assert!(rp.errors.iter().zip(&rr.errors).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn converged_runs_match_direct_solution_and_boundary_data() {
    let disc = mixed_problem();
    let direct = disc.solve_direct().unwrap();
    let tol = 1e-8;
    let opts = ReflectionOptions {
        max_cycles: 200,
        tol,
        ..Default::default()
    };
    let probes = probe_cloud(disc.problem().layout(), 50, 99).unwrap();
    let exact = evaluate_field(&direct.field, &probes, Want::Value).unwrap().values;
    let scale = exact.iter().map(|v| v.abs()).fold(0.0, f64::max);
    for form in [ReflectionForm::Sequential, ReflectionForm::Parallel, ReflectionForm::averaged(3)] {
        let (trace, report) = run_reflections(&disc, form, &opts, Some(&direct.field)).unwrap();
        assert_eq!(report.status, Status::Converged, "{form:?}");
        let approx = trace.approximation();
        let field = disc.to_field(&approx, "reflections");
        let values = evaluate_field(&field, &probes, Want::Value).unwrap().values;
        let worst = values.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 10.0 * tol * scale.max(1.0), "{form:?}: {worst:e}");
        assert!(disc.boundary_residual(&approx) <= 10.0 * tol * scale.max(1.0));
        // reflections vanish in the limit
        // boundary data of Neumann objects are derivatives, so this is on a
        // different scale than the relative probe error used for stopping
        let last = trace.cycles.last().unwrap().reflection_max;
        assert!(last < 100.0 * tol && last < 1e-6 * trace.cycles[0].reflection_max, "{form:?}: {last:e}");
        assert!(report.max_correction_residual < 1e-10);
    }
}

#[test]
fn correction_identity_per_cycle() {
    let disc = mixed_problem();
    let opts = ReflectionOptions {
        max_cycles: 15,
        tol: 0.0,
        run_to_completion: true,
        ..Default::default()
    };
    for form in [ReflectionForm::Sequential, ReflectionForm::Parallel, ReflectionForm::Relaxed(0.37)] {
        let (trace, _) = run_reflections(&disc, form, &opts, None).unwrap();
        for k in 0..trace.cycles.len() {
            let r = correction_residual(&trace, k).unwrap();
            assert_eq!(r.len(), 3);
            assert!(r.iter().all(|v| *v <= 1e-10), "{form:?} cycle {k}: {r:?}");
        }
    }
}

#[test]
fn compaction_keeps_the_sum() {
    let disc = mixed_problem();
    let mut opts = ReflectionOptions {
        max_cycles: 20,
        tol: 0.0,
        run_to_completion: true,
        ..Default::default()
    };
    let (full, _) = run_reflections(&disc, ReflectionForm::Sequential, &opts, None).unwrap();
    opts.max_stored_cycles = 3;
    let (compact, _) = run_reflections(&disc, ReflectionForm::Sequential, &opts, None).unwrap();
    assert!(compact.cycles.iter().filter(|c| c.reflections.is_some()).count() <= 3);
    let (a, b) = (full.approximation(), compact.approximation());
    for (x, y) in a.layers.iter().zip(&b.layers) {
        if let (Some(x), Some(y)) = (x, y) {
            assert!((x - y).amax() <= 1e-12 * x.amax().max(1.0));
        }
    }
}

#[test]
fn fourth_type_fluxes_are_restored_every_cycle() {
    // two equivalued objects; after each sequential sweep the object last
    // reflected carries exactly its prescribed flux
    let a = make_circle(Point::new(-2.0, 0.0), 1.0, 96).unwrap();
    let b = make_circle(Point::new(2.0, 0.0), 1.0, 96).unwrap();
    let disc = Discretization::new(
        ProblemSpec::new(
            layout_with_container(vec![a, b]),
            vec![BoundaryCondition::FourthType { flux: 1.0 }, BoundaryCondition::FourthType { flux: -2.0 }],
        )
        .unwrap(),
    )
    .unwrap();
    let direct = disc.solve_direct().unwrap();
    let opts = ReflectionOptions {
        tol: 1e-10,
        max_cycles: 100,
        ..Default::default()
    };
    let (trace, report) = run_reflections(&disc, ReflectionForm::Sequential, &opts, Some(&direct.field)).unwrap();
    assert_eq!(report.status, Status::Converged);
    let approx = trace.approximation();
    assert!((disc.discrete_flux(&approx, 0).unwrap() - 1.0).abs() < 1e-9);
    assert!((disc.discrete_flux(&approx, 1).unwrap() + 2.0).abs() < 1e-12);
}

#[test]
fn exterior_neumann_reflections_converge() {
    let objs: Vec<_> = (0..3)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / 3.0;
            make_circle(Point::new(3.0 * t.cos(), 3.0 * t.sin()), 1.0, 64).unwrap()
        })
        .collect();
    let conds = objs
        .iter()
        .map(|c| {
            let ctr = c.analytic_center().unwrap();
            BoundaryCondition::Neumann(c.nodes().iter().map(|p| (p - ctr).y).collect())
        })
        .collect();
    let disc = Discretization::new(ProblemSpec::new(GeometryLayout::new(None, objs), conds).unwrap()).unwrap();
    let direct = disc.solve_direct().unwrap();
    let opts = ReflectionOptions {
        tol: 1e-10,
        max_cycles: 100,
        ..Default::default()
    };
    for form in [ReflectionForm::Sequential, ReflectionForm::Parallel, ReflectionForm::averaged(3)] {
        let (_, report) = run_reflections(&disc, form, &opts, Some(&direct.field)).unwrap();
        assert_eq!(report.status, Status::Converged, "{form:?}");
    }
}

#[test]
fn divergence_is_reported_not_raised() {
    let disk = make_circle(Point::zeros(), 2.0, 64).unwrap();
    let c = make_cshape(Point::zeros(), 3.0, 5.0, PI / 6.0, 256).unwrap();
    let g: Vec<f64> = c.nodes().iter().map(|p| p.x / p.norm()).collect();
    let disc = Discretization::new(
        ProblemSpec::new(
            layout_with_container(vec![disk, c]),
            vec![BoundaryCondition::Dirichlet(vec![1.0; 64]), BoundaryCondition::Neumann(g)],
        )
        .unwrap(),
    )
    .unwrap();
    let direct = disc.solve_direct().unwrap();
    let opts = ReflectionOptions {
        max_cycles: 200,
        tol: 1e-6,
        ..Default::default()
    };
    let (_, report) = run_reflections(&disc, ReflectionForm::Sequential, &opts, Some(&direct.field)).unwrap();
    assert_eq!(report.status, Status::Diverged);
    assert!(report.final_error > 1e20);
    assert!(report.cycles < 200);
}

#[test]
fn invalid_relaxation_is_rejected() {
    let disc = mixed_problem();
    for nu in [0.0, -0.5, 1.5, f64::NAN] {
        assert!(run_reflections(&disc, ReflectionForm::Relaxed(nu), &ReflectionOptions::default(), None).is_err());
    }
}
