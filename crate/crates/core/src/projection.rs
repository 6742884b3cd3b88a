//! Finite-dimensional laboratory for alternating and averaged projections.
//!
//! Subspaces of ℝⁿ with the Euclidean inner product; other inner products
//! `⟨Lx, Ly⟩` are handled by transforming bases with [`SubspaceBasis::transformed`].

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative singular-value cut-off for rank decisions.
pub const RANK_TOL: f64 = 1e-10;
/// Singular values of the stacked complement constraints below this count
/// as zero in the intersection oracle.
const NULL_TOL: f64 = 1e-9;

/// Full-column-rank basis of a subspace together with an orthonormal basis
/// of the same span.
#[derive(Debug, Clone)]
pub struct SubspaceBasis {
    basis: DMatrix<f64>,
    orthonormal: DMatrix<f64>,
}

impl SubspaceBasis {
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let cols = basis.ncols();
        if cols == 0 {
            return Ok(Self {
                orthonormal: DMatrix::zeros(basis.nrows(), 0),
                basis,
            });
        }
        let svd = basis.clone().svd(true, false);
        let smax = svd.singular_values.max();
        let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * smax.max(f64::MIN_POSITIVE)).count();
        if rank < cols || smax == 0.0 {
            return Err(Error::RankDeficient { rank, columns: cols });
        }
        let orthonormal = orthonormalize(&basis);
        Ok(Self { basis, orthonormal })
    }

    /// Span of the given column vectors.
    pub fn from_columns(columns: &[DVector<f64>]) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::InvalidParameter("empty column list; use zero_dim".into()));
        }
        Self::new(DMatrix::from_columns(columns))
    }

    /// The trivial subspace of ℝⁿ.
    pub fn zero_dim(ambient: usize) -> Self {
        Self {
            basis: DMatrix::zeros(ambient, 0),
            orthonormal: DMatrix::zeros(ambient, 0),
        }
    }

    /// Basis mapped by `factor` (to realise the inner product `⟨Lx, Ly⟩`).
    pub fn transformed(&self, factor: &DMatrix<f64>) -> Result<Self> {
        Self::new(factor * &self.basis)
    }

    pub fn ambient(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn orthonormal(&self) -> &DMatrix<f64> {
        &self.orthonormal
    }
}

/// Orthonormal basis of the column span (columns assumed independent).
fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    u.columns(0, cols.min(rows)).into_owned()
}

/// Orthonormal basis of the range of `m`, dropping directions with relative
/// singular value below `tol`.
fn range_basis(m: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();
    DMatrix::from_fn(m.nrows(), keep.len(), |r, c| u[(r, keep[c])])
}

/// Orthogonal projector matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorMatrix(pub DMatrix<f64>);

impl ProjectorMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// `‖P² − P‖₂`
    pub fn idempotence_defect(&self) -> f64 {
        operator_norm(&(&self.0 * &self.0 - &self.0))
    }

    /// `‖P − Pᵀ‖₂`
    pub fn symmetry_defect(&self) -> f64 {
        operator_norm(&(&self.0 - self.0.transpose()))
    }

    /// Rank as the rounded trace.
    pub fn rank(&self) -> usize {
        self.0.trace().round().max(0.0) as usize
    }
}

/// `P = QQᵀ` for an orthonormal basis `Q` of the subspace.
pub fn orth_projector(basis: &SubspaceBasis) -> ProjectorMatrix {
    let q = basis.orthonormal();
    ProjectorMatrix(q * q.transpose())
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Projector onto `∩ M_j`, computed as the null space of the stacked
/// constraints `(I − P_j) x = 0`; independent of any iteration.
pub fn intersection_projector(bases: &[SubspaceBasis]) -> Result<ProjectorMatrix> {
    let projectors: Vec<ProjectorMatrix> = bases.iter().map(orth_projector).collect();
    intersection_of_projectors(&projectors)
}

pub fn intersection_of_projectors(projectors: &[ProjectorMatrix]) -> Result<ProjectorMatrix> {
    let n = check_dims(projectors)?;
    let id = DMatrix::<f64>::identity(n, n);
    let mut stacked = DMatrix::zeros(n * projectors.len(), n);
    for (j, p) in projectors.iter().enumerate() {
        stacked.view_mut((j * n, 0), (n, n)).copy_from(&(&id - p.matrix()));
    }
    let svd = stacked.svd(false, true);
    let v_t = svd.v_t.expect("requested Vᵀ");
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= NULL_TOL)
        .collect();
    let z = DMatrix::from_fn(n, null.len(), |r, c| v_t[(null[c], r)]);
    Ok(ProjectorMatrix(&z * z.transpose()))
}

fn check_dims(projectors: &[ProjectorMatrix]) -> Result<usize> {
    let first = projectors
        .first()
        .ok_or_else(|| Error::InvalidParameter("at least one subspace is required".into()))?;
    let n = first.dim();
    for p in projectors {
        if p.0.nrows() != n || p.0.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: p.0.nrows() });
        }
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq)]
pub enum IterationKind {
    /// `w ← P_N ⋯ P_1 w`
    Alternating,
    /// `w ← Σ λ_j P_j w` with convex weights.
    Averaged(Vec<f64>),
    /// `w ← w − ν Σ (I − P_j) w`; ν = 1/N is the equal-weight average.
    Relaxed(f64),
}

/// One-cycle iteration matrix of `kind`.
pub fn iteration_operator(kind: &IterationKind, projectors: &[ProjectorMatrix]) -> Result<DMatrix<f64>> {
    let n = check_dims(projectors)?;
    let id = DMatrix::<f64>::identity(n, n);
    Ok(match kind {
        IterationKind::Alternating => projectors.iter().fold(id, |acc, p| p.matrix() * acc),
        IterationKind::Averaged(w) => {
            if w.len() != projectors.len() {
                return Err(Error::DimensionMismatch {
                    expected: projectors.len(),
                    got: w.len(),
                });
            }
            let sum: f64 = w.iter().sum();
            if w.iter().any(|&x| x < 0.0) || (sum - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter("averaging weights must be a convex combination".into()));
            }
            projectors
                .iter()
                .zip(w)
                .fold(DMatrix::zeros(n, n), |acc, (p, wj)| acc + p.matrix() * *wj)
        }
        IterationKind::Relaxed(nu) => {
            if !(*nu > 0.0 && *nu <= 1.0) {
                return Err(Error::InvalidParameter(format!("relaxation factor {nu} not in (0, 1]")));
            }
            let s = projectors
                .iter()
                .fold(DMatrix::zeros(n, n), |acc, p| acc + (&id - p.matrix()));
            &id - s * *nu
        }
    })
}

#[derive(Debug, Clone)]
pub struct IterationResult {
    /// `v_1, …, v_k`
    pub iterates: Vec<DVector<f64>>,
    /// `‖v_j − P_∩ v‖` for `j = 1..k`.
    pub errors: Vec<f64>,
}

/// Run `k` cycles from `v`, measuring against the intersection oracle.
pub fn iterate(kind: &IterationKind, projectors: &[ProjectorMatrix], v: &DVector<f64>, k: usize) -> Result<IterationResult> {
    let t = iteration_operator(kind, projectors)?;
    if v.len() != t.nrows() {
        return Err(Error::DimensionMismatch {
            expected: t.nrows(),
            got: v.len(),
        });
    }
    let limit = intersection_of_projectors(projectors)?.0 * v;
    let mut w = v.clone();
    let mut iterates = Vec::with_capacity(k);
    let mut errors = Vec::with_capacity(k);
    for _ in 0..k {
        w = &t * w;
        errors.push((&w - &limit).norm());
        iterates.push(w.clone());
    }
    Ok(IterationResult { iterates, errors })
}

/// `‖Tʲ − P_∩‖₂` for `j = 1..k`.
pub fn error_operator_norms(kind: &IterationKind, projectors: &[ProjectorMatrix], k: usize) -> Result<Vec<f64>> {
    let t = iteration_operator(kind, projectors)?;
    let p = intersection_of_projectors(projectors)?.0;
    let mut power = DMatrix::<f64>::identity(t.nrows(), t.nrows());
    Ok((0..k)
        .map(|_| {
            power = &t * &power;
            operator_norm(&(&power - &p))
        })
        .collect())
}

/// Cosine of the Friedrichs angle: largest principal-angle cosine between
/// `M1 ∩ (M1∩M2)^⊥` and `M2 ∩ (M1∩M2)^⊥`; zero if either is trivial.
pub fn friedrichs_cosine(m1: &SubspaceBasis, m2: &SubspaceBasis) -> Result<f64> {
    if m1.ambient() != m2.ambient() {
        return Err(Error::DimensionMismatch {
            expected: m1.ambient(),
            got: m2.ambient(),
        });
    }
    let n = m1.ambient();
    let p_cap = intersection_projector(&[m1.clone(), m2.clone()])?.0;
    let comp = DMatrix::<f64>::identity(n, n) - p_cap;
    let q1 = range_basis(&(&comp * m1.orthonormal()), 1e-8);
    let q2 = range_basis(&(&comp * m2.orthonormal()), 1e-8);
    if q1.ncols() == 0 || q2.ncols() == 0 {
        return Ok(0.0);
    }
    Ok(operator_norm(&(q1.transpose() * q2)).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct XuZikatanov {
    /// `‖P_N ⋯ P_1 − P_∩‖²`
    pub lhs: f64,
    /// `c₀` implied by `lhs = c₀ / (1 + c₀)`.
    pub c0: f64,
}

pub fn xu_zikatanov_gap(projectors: &[ProjectorMatrix]) -> Result<XuZikatanov> {
    let e = iteration_operator(&IterationKind::Alternating, projectors)?;
    let p = intersection_of_projectors(projectors)?.0;
    let lhs = operator_norm(&(e - p)).powi(2);
    Ok(XuZikatanov { lhs, c0: lhs / (1.0 - lhs) })
}

/// Projector onto the eigenspace of the (symmetric) weighted average
/// `Σ λ_j P_j` for eigenvalues within `tol` of 1.
pub fn averaged_fixed_space(projectors: &[ProjectorMatrix], weights: &[f64], tol: f64) -> Result<ProjectorMatrix> {
    let a = iteration_operator(&IterationKind::Averaged(weights.to_vec()), projectors)?;
    let sym = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] >= 1.0 - tol)
        .collect();
    let z = DMatrix::from_fn(a.nrows(), keep.len(), |r, c| eig.eigenvectors[(r, keep[c])]);
    Ok(ProjectorMatrix(&z * z.transpose()))
}

/// Eigenvalues of the symmetric weighted average of projectors, ascending.
pub fn averaged_spectrum(projectors: &[ProjectorMatrix], weights: &[f64]) -> Result<Vec<f64>> {
    let a = iteration_operator(&IterationKind::Averaged(weights.to_vec()), projectors)?;
    let mut ev: Vec<f64> = SymmetricEigen::new((&a + a.transpose()) * 0.5).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Gaussian random matrix.
pub fn random_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random subspaces of ℝⁿ with the given dimensions that all contain a
/// common random subspace of dimension `common`.
pub fn random_instance<R: Rng + ?Sized>(n: usize, dims: &[usize], common: usize, rng: &mut R) -> Result<Vec<SubspaceBasis>> {
    if dims.iter().any(|&d| d < common || d > n) {
        return Err(Error::InvalidParameter(format!(
            "dimensions {dims:?} must lie between {common} and {n}"
        )));
    }
    let shared = random_matrix(n, common, rng);
    dims.iter()
        .map(|&d| {
            let mut b = DMatrix::zeros(n, d);
            b.columns_mut(0, common).copy_from(&shared);
            b.columns_mut(common, d - common).copy_from(&random_matrix(n, d - common, rng));
            SubspaceBasis::new(b)
        })
        .collect()
}

/// Line through the origin of ℝ² at angle `theta`.
pub fn line(theta: f64) -> SubspaceBasis {
    SubspaceBasis::new(DMatrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()])).expect("unit vector")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    #[test]
    fn coordinate_and_full_projectors() {
        let p = orth_projector(&SubspaceBasis::new(DMatrix::from_column_slice(2, 1, &[1.0, 0.0])).unwrap());
        assert!((p.0.clone() - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-15);
        let full = orth_projector(&SubspaceBasis::new(random_matrix(5, 5, &mut ChaCha8Rng::seed_from_u64(1))).unwrap());
        assert!((full.0 - DMatrix::<f64>::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let b = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0]);
        assert!(matches!(SubspaceBasis::new(b), Err(Error::RankDeficient { rank: 1, columns: 2 })));
    }

    #[test]
    fn random_projector_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let b = SubspaceBasis::new(random_matrix(8, 3, &mut rng)).unwrap();
        let p = orth_projector(&b);
        assert!(p.idempotence_defect() <= 1e-12 * operator_norm(p.matrix()));
        assert!(p.symmetry_defect() <= 1e-12);
        let v = b.basis() * DVector::from_vec(vec![0.3, -1.0, 2.0]);
        assert!((p.matrix() * &v - &v).amax() < 1e-12);
        let w = DVector::from_fn(8, |i, _| (i as f64).sin());
        let pw = p.matrix() * &w;
        assert!((b.basis().transpose() * (&w - &pw)).amax() < 1e-12);
        let ev = SymmetricEigen::new(p.0.clone()).eigenvalues;
        assert!(ev.iter().all(|e| e.abs() < 1e-10 || (e - 1.0).abs() < 1e-10));
    }

    #[test]
    fn intersection_oracle_trivial_cases() {
        let z = intersection_projector(&[line(0.0), line(PI / 2.0)]).unwrap();
        assert!(z.0.amax() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = SubspaceBasis::new(random_matrix(6, 4, &mut rng)).unwrap();
        let p = intersection_projector(&[b.clone(), b.clone(), b.clone()]).unwrap();
        assert!((p.0 - orth_projector(&b).0).amax() < 1e-10);
    }

    #[test]
    fn friedrichs_examples() {
        let theta: f64 = 0.4;
        assert!((friedrichs_cosine(&line(0.0), &line(theta)).unwrap() - theta.cos()).abs() < 1e-14);
        let b = line(0.3);
        assert_eq!(friedrichs_cosine(&b, &b).unwrap(), 0.0);
        // two planes in ℝ³ through the x axis, dihedral angle φ
        let phi: f64 = 0.7;
        let p1 = SubspaceBasis::new(DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])).unwrap();
        let p2 = SubspaceBasis::new(DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, phi.cos(), phi.sin()])).unwrap();
        assert!((friedrichs_cosine(&p1, &p2).unwrap() - phi.cos()).abs() < 1e-12);
    }

    #[test]
    fn xu_zikatanov_examples() {
        let theta = PI / 5.0;
        let ps = [orth_projector(&line(0.0)), orth_projector(&line(theta))];
        let xz = xu_zikatanov_gap(&ps).unwrap();
        assert!((xz.lhs - theta.cos().powi(2)).abs() < 1e-12);
        assert!((xz.c0 - 1.0 / theta.tan().powi(2)).abs() < 1e-10);
        let ortho = [orth_projector(&line(0.0)), orth_projector(&line(PI / 2.0))];
        let xz = xu_zikatanov_gap(&ortho).unwrap();
        assert!(xz.lhs < 1e-30 && xz.c0 < 1e-30);
    }

    #[test]
    fn weights_and_dimensions_are_checked() {
        let ps = [orth_projector(&line(0.0)), orth_projector(&line(1.0))];
        assert!(iteration_operator(&IterationKind::Averaged(vec![0.7, 0.7]), &ps).is_err());
        assert!(iteration_operator(&IterationKind::Relaxed(0.0), &ps).is_err());
        let v = DVector::zeros(3);
        assert!(matches!(
            iterate(&IterationKind::Alternating, &ps, &v, 2),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
