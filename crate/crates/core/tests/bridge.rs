//! The sequential reflection method for two Dirichlet objects is alternating
//! projection in the energy inner product of H¹₀(container). The space of
//! reflections from object i is spanned by container Green's functions
//! centered on its boundary, so the per-cycle error ratio must be c², with c
//! the cosine of the principal angle between the two discrete spans. The
//! Gram matrices are assembled here from the closed-form Green's function of
//! a disk, independently of the solver's double-layer representation.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix};
use reflect2d::bvp::{BoundaryCondition, Discretization, ProblemSpec};
use reflect2d::geometry::{make_circle, BoundaryCurve, GeometryLayout, Point};
use reflect2d::potentials::{layer_matrix, LayerKind, Side, TraceKind};
use reflect2d::reflections::{estimate_contraction_renormalized, ReflectionForm};

const R: f64 = 10.0;

/// Regular part of the Green's function of the disk |x| < R:
/// G(x, y) = Φ(x − y) + h(x, y).
fn image_part(x: &Point, y: &Point) -> f64 {
    let ny = y.norm();
    let star = y * (R * R / (ny * ny));
    (ny * (x - star).norm() / R).ln() / (2.0 * PI)
}

fn green_disk(x: &Point, y: &Point) -> f64 {
    -(x - y).norm().ln() / (2.0 * PI) + image_part(x, y)
}

/// `a(u_k, u_l)` for the Green's-function single layers of unit nodal
/// densities on curves `a` and `b`.
fn gram_block(a: &BoundaryCurve, b: &BoundaryCurve, same: bool) -> DMatrix<f64> {
    let wa = a.arc_weights();
    let wb = b.arc_weights();
    let trace = if same {
        let s = layer_matrix(a, a, LayerKind::Single, TraceKind::Value, Side::OnSurface).unwrap();
        DMatrix::from_fn(a.len(), a.len(), |k, l| s[(k, l)] + wa[l] * image_part(&a.nodes()[k], &a.nodes()[l]))
    } else {
        DMatrix::from_fn(a.len(), b.len(), |k, l| wb[l] * green_disk(&a.nodes()[k], &b.nodes()[l]))
    };
    DMatrix::from_fn(a.len(), b.len(), |k, l| wa[k] * trace[(k, l)])
}

fn principal_cosine(c1: &BoundaryCurve, c2: &BoundaryCurve) -> f64 {
    let sym = |m: DMatrix<f64>| (&m + m.transpose()) * 0.5;
    let l1 = Cholesky::new(sym(gram_block(c1, c1, true))).expect("positive definite").l();
    let l2 = Cholesky::new(sym(gram_block(c2, c2, true))).expect("positive definite").l();
    let g12 = gram_block(c1, c2, false);
    let x = l1.solve_lower_triangular(&g12).unwrap();
    let y = l2.solve_lower_triangular(&x.transpose()).unwrap();
    y.singular_values().max()
}

fn two_disks(offset: f64, radius: f64, n: usize) -> (BoundaryCurve, BoundaryCurve, Discretization) {
    let c1 = make_circle(Point::new(-offset, 0.0), radius, n).unwrap();
    let c2 = make_circle(Point::new(offset, 0.0), radius, n).unwrap();
    let layout = GeometryLayout::new(
        Some(make_circle(Point::zeros(), R, 256).unwrap()),
        vec![c1.clone(), c2.clone()],
    );
    let problem = ProblemSpec::new(
        layout,
        vec![BoundaryCondition::Dirichlet(vec![1.0; n]), BoundaryCondition::Dirichlet(vec![1.0; n])],
    )
    .unwrap();
    (c1, c2, Discretization::new(problem).unwrap())
}

#[test]
fn sequential_ratio_matches_squared_principal_cosine() {
    for (offset, radius) in [(1.5, 1.0), (2.5, 1.0), (3.0, 0.5)] {
        let (c1, c2, disc) = two_disks(offset, radius, 64);
        let c = principal_cosine(&c1, &c2);
        let k = estimate_contraction_renormalized(&disc, ReflectionForm::Sequential, 40, 15).unwrap().k;
        let rel = (k - c * c).abs() / (c * c);
        println!("offset {offset} radius {radius}: c² = {:.6e}, K_seq = {k:.6e}, rel {rel:.2e}", c * c);
        assert!(rel < 0.05, "K_seq {k} vs c² {}", c * c);
    }
}

#[test]
fn parallel_ratio_matches_principal_cosine() {
    // For two subspaces the Jacobi error operator has spectral radius c.
    let (c1, c2, disc) = two_disks(1.5, 1.0, 64);
    let c = principal_cosine(&c1, &c2);
    let k = estimate_contraction_renormalized(&disc, ReflectionForm::Parallel, 40, 15).unwrap().k;
    assert!((k - c).abs() / c < 0.05, "K_par {k} vs c {c}");
}
