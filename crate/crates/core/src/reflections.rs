//! Method of reflections: sequential, parallel and relaxed-parallel cycles of
//! one-object solves, with runtime verification of the correction identities.
//!
//! Reflection `r_i` of cycle `k+1` solves the one-object problem for object
//! `i` with datum
//!
//! * sequential: `−Σ_{j<i} B_i r_j^{(k+1)} − Σ_{j>i} B_i r_j^{(k)}`,
//! * relaxed (ν): `(1−ν) B_i r_i^{(k)} − ν Σ_{j≠i} B_i r_j^{(k)}`,
//!
//! (first cycle: `b_i − B_i u^{(0)}`, minus the earlier reflections of the
//! same cycle for the sequential form), and the approximation is updated by
//! `u^{(k+1)} = u^{(k)} + ν Σ_i r_i^{(k+1)}` (ν = 1 for sequential and
//! parallel). Both recursions keep the identity `B_i(u^{(k)} + r_i^{(k+1)}) =
//! b_i` (sequential: `B_i(u^{(k)} + Σ_{j≤i} r_j^{(k+1)}) = b_i`), which is
//! checked every cycle.

use log::{debug, info};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bvp::{BoundaryDatum, CarrierDensities, Discretization, ProbeOperator};
use crate::error::{Error, Result};
use crate::geometry::{GeometryLayout, LayoutMetrics, Point};
use crate::potentials::{evaluate_field, HarmonicField, Want};

/// Errors above this (or non-finite) count as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e20;
/// Error values at or below this are ignored by contraction fits.
pub const ERROR_FLOOR: f64 = 1e-13;
/// Minimum number of usable points for a contraction fit.
pub const MIN_FIT_POINTS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReflectionForm {
    Sequential,
    Parallel,
    /// Parallel cycle with relaxation factor ν ∈ (0, 1].
    Relaxed(f64),
}

impl ReflectionForm {
    /// Averaged parallel form, ν = 1/N.
    pub fn averaged(objects: usize) -> Self {
        Self::Relaxed(1.0 / objects as f64)
    }

    pub fn nu(&self) -> f64 {
        match self {
            Self::Sequential | Self::Parallel => 1.0,
            Self::Relaxed(nu) => *nu,
        }
    }

    pub fn is_sequential(&self) -> bool {
        matches!(self, Self::Sequential)
    }

    fn validate(&self) -> Result<()> {
        let nu = self.nu();
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::InvalidParameter(format!("relaxation factor {nu} not in (0, 1]")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    Diverged,
    MaxCycles,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Converged => "converged",
            Status::Diverged => "diverged",
            Status::MaxCycles => "max_cycles",
        })
    }
}

#[derive(Debug, Clone)]
pub struct ReflectionOptions {
    pub max_cycles: usize,
    pub tol: f64,
    pub divergence_threshold: f64,
    /// Keep cycling after the tolerance is met (for full error curves);
    /// divergence still stops the run.
    pub run_to_completion: bool,
    pub probe_count: usize,
    pub seed: u64,
    /// Cycles whose reflections are kept individually; older ones are
    /// summed into a single compacted density.
    pub max_stored_cycles: usize,
}

impl Default for ReflectionOptions {
    fn default() -> Self {
        Self {
            max_cycles: 100,
            tol: 1e-8,
            divergence_threshold: DIVERGENCE_THRESHOLD,
            run_to_completion: false,
            probe_count: 200,
            seed: 0,
            max_stored_cycles: 1000,
        }
    }
}

/// One reflection: the densities of the one-object solve and the boundary
/// operators of every object applied to it.
#[derive(Debug, Clone)]
pub struct Reflection {
    pub object: usize,
    pub densities: CarrierDensities,
    pub constant: Option<f64>,
    /// `B_j r` for every object `j`.
    pub operators: Vec<BoundaryDatum>,
}

impl Reflection {
    fn scale(&mut self, alpha: f64) {
        self.densities.scale(alpha);
        if let Some(c) = &mut self.constant {
            *c *= alpha;
        }
        for op in &mut self.operators {
            op.scale(alpha);
        }
    }
}

#[derive(Debug, Clone)]
pub struct CycleRecord {
    pub cycle: usize,
    /// `None` once compacted.
    pub reflections: Option<Vec<Reflection>>,
    /// `max |B_i u^{(k)} − b_i|` per object after this cycle.
    pub boundary_residuals: Vec<f64>,
    pub error: f64,
    /// Relative size of this cycle's update on the probe cloud.
    pub increment: f64,
    /// Deviation of the correction identity per object (relative to the
    /// magnitude of the terms involved, floored at 1).
    pub correction_residuals: Vec<f64>,
    /// Same deviation, absolute.
    pub correction_residuals_abs: Vec<f64>,
    /// Largest boundary operator value of any reflection of this cycle.
    pub reflection_max: f64,
}

#[derive(Debug, Clone)]
pub struct ReflectionTrace {
    pub form: ReflectionForm,
    pub initial: CarrierDensities,
    /// ν-weighted sum of the reflections of compacted cycles.
    pub compacted: CarrierDensities,
    pub cycles: Vec<CycleRecord>,
    pub probes: Vec<Point>,
    /// Error of `u^{(0)}` (same metric as the cycle errors).
    pub initial_error: f64,
}

impl ReflectionTrace {
    /// `u^{(k)}` for the last cycle: initial densities plus the ν-weighted
    /// sum of all reflections.
    pub fn approximation(&self) -> CarrierDensities {
        let nu = self.form.nu();
        let mut acc = self.initial.clone();
        acc.axpy(1.0, &self.compacted);
        for rec in &self.cycles {
            for r in rec.reflections.iter().flatten() {
                acc.axpy(nu, &r.densities);
            }
        }
        acc
    }

    /// Errors of `u^{(0)}, u^{(1)}, …`.
    pub fn error_series(&self) -> Vec<f64> {
        std::iter::once(self.initial_error)
            .chain(self.cycles.iter().map(|c| c.error))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionFit {
    /// Per-cycle contraction factor `exp(slope)`.
    pub k: f64,
    pub slope: f64,
    /// Root-mean-square deviation of `ln(error)` from the fitted line.
    pub residual: f64,
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub status: Status,
    pub cycles: usize,
    pub final_error: f64,
    pub contraction: Option<ContractionFit>,
    /// Errors of `u^{(0)}, …, u^{(cycles)}`.
    pub errors: Vec<f64>,
    /// Worst correction-identity residual over all cycles and objects.
    pub max_correction_residual: f64,
    /// Whether the error metric compares against a reference field.
    pub against_reference: bool,
}

/// Deterministic cloud of points in the fluid, at least three node spacings
/// away from every curve. Without a container the points are drawn from the
/// box around the objects enlarged by half its size on each side.
pub fn probe_cloud(layout: &GeometryLayout, count: usize, seed: u64) -> Result<Vec<Point>> {
    let margin = 3.0
        * layout
            .curves()
            .iter()
            .map(|c| c.max_spacing())
            .fold(0.0, f64::max);
    let (lo, hi) = match &layout.container {
        Some(c) => {
            let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
            let mut hi = -lo;
            for x in c.nodes() {
                lo = lo.inf(x);
                hi = hi.sup(x);
            }
            (lo, hi)
        }
        None => {
            let (lo, hi) = layout.object_bounds();
            let pad = 0.5 * (hi - lo).max();
            (lo.add_scalar(-pad), hi.add_scalar(pad))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1_000_000 {
            return Err(Error::InvalidGeometry("could not place probe points in the fluid".into()));
        }
        let p = Point::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if layout.in_fluid(&p, margin) {
            out.push(p);
        }
    }
    Ok(out)
}

/// Deviation of the correction identity at every object. `before[i]` is
/// `B_i u^{(k)}`, `targets[i]` is `b_i`.
fn identity_residuals(
    sequential: bool,
    before: &[BoundaryDatum],
    targets: &[BoundaryDatum],
    refl: &[Reflection],
) -> (Vec<f64>, Vec<f64>) {
    let n = before.len();
    let mut rel = Vec::with_capacity(n);
    let mut abs = Vec::with_capacity(n);
    for i in 0..n {
        let mut lhs = before[i].clone();
        let mut scale = before[i].max_abs().max(targets[i].max_abs());
        let terms: Vec<usize> = if sequential { (0..=i).collect() } else { vec![i] };
        for j in terms {
            lhs.axpy(1.0, &refl[j].operators[i]);
            scale = scale.max(refl[j].operators[i].max_abs());
        }
        lhs.axpy(-1.0, &targets[i]);
        let dev = lhs.max_abs();
        abs.push(dev);
        rel.push(dev / scale.max(1.0));
    }
    (rel, abs)
}

/// Per-object correction-identity residual between `u^{(k)}` and the
/// reflections of cycle `k+1` (`k` counts from 0).
pub fn correction_residual(trace: &ReflectionTrace, k: usize) -> Result<Vec<f64>> {
    trace
        .cycles
        .get(k)
        .map(|c| c.correction_residuals.clone())
        .ok_or(Error::TooFewCycles {
            needed: k + 1,
            available: trace.cycles.len(),
        })
}

struct Engine<'a> {
    disc: &'a Discretization,
    form: ReflectionForm,
    n: usize,
}

impl<'a> Engine<'a> {
    fn reflect(&self, cycle: usize, i: usize, datum: &BoundaryDatum) -> Result<Reflection> {
        let sol = self.disc.solve_one_object(i, datum).map_err(|e| Error::Subproblem {
            cycle,
            object: i,
            source: Box::new(e),
        })?;
        let operators = (0..self.n)
            .into_par_iter()
            .map(|j| self.disc.apply_boundary_operator(&sol.densities, j))
            .collect();
        Ok(Reflection {
            object: i,
            densities: sol.densities,
            constant: sol.constant,
            operators,
        })
    }

    /// Reflections of one cycle. `first` holds `b_i − B_i u^{(0)}` for the
    /// first cycle; otherwise `prev` holds the previous cycle.
    fn cycle(&self, cycle: usize, first: Option<&[BoundaryDatum]>, prev: Option<&[Reflection]>) -> Result<Vec<Reflection>> {
        let n = self.n;
        if self.form.is_sequential() {
            let mut out: Vec<Reflection> = Vec::with_capacity(n);
            for i in 0..n {
                let mut datum = match first {
                    Some(d) => d[i].clone(),
                    None => {
                        let prev = prev.expect("previous cycle");
                        let mut d = BoundaryDatum::zeros(prev[0].operators[i].values.len());
                        for r in &prev[i + 1..] {
                            d.axpy(-1.0, &r.operators[i]);
                        }
                        d
                    }
                };
                for r in &out {
                    datum.axpy(-1.0, &r.operators[i]);
                }
                out.push(self.reflect(cycle, i, &datum)?);
            }
            Ok(out)
        } else {
            let nu = self.form.nu();
            (0..n)
                .into_par_iter()
                .map(|i| {
                    let datum = match first {
                        Some(d) => d[i].clone(),
                        None => {
                            let prev = prev.expect("previous cycle");
                            let mut d = BoundaryDatum::zeros(prev[0].operators[i].values.len());
                            for (j, r) in prev.iter().enumerate() {
                                let w = if j == i { 1.0 - nu } else { -nu };
                                if w != 0.0 {
                                    d.axpy(w, &r.operators[i]);
                                }
                            }
                            d
                        }
                    };
                    self.reflect(cycle, i, &datum)
                })
                .collect()
        }
    }

    fn initial_operators(&self, initial: &CarrierDensities) -> Vec<BoundaryDatum> {
        (0..self.n)
            .map(|i| {
                let mut d = self.disc.apply_boundary_operator(initial, i);
                if let Some(p) = self.disc.particular_operator(i) {
                    d.axpy(1.0, p);
                }
                d
            })
            .collect()
    }
}

fn l2(v: &DVector<f64>) -> f64 {
    v.norm()
}

/// Run the method of reflections on a discretised problem.
///
/// With a `reference` the error is the relative ℓ² difference on the probe
/// cloud; otherwise it is the relative size of each cycle's update.
pub fn run_reflections(
    disc: &Discretization,
    form: ReflectionForm,
    opts: &ReflectionOptions,
    reference: Option<&HarmonicField>,
) -> Result<(ReflectionTrace, ConvergenceReport)> {
    form.validate()?;
    let n = disc.object_count();
    let nu = form.nu();
    let engine = Engine { disc, form, n };
    let probes = probe_cloud(disc.problem().layout(), opts.probe_count, opts.seed)?;
    let probe_op: ProbeOperator = disc.probe_operator(&probes);
    let reference_values = match reference {
        Some(f) => Some(DVector::from_vec(evaluate_field(f, &probes, Want::Value)?.values)),
        None => None,
    };
    let particular = probe_op.particular().cloned();
    let with_particular = |mut v: DVector<f64>| {
        if let Some(p) = &particular {
            v += p;
        }
        v
    };

    let initial = disc.initial_densities()?;
    let targets: Vec<BoundaryDatum> = (0..n).map(|i| disc.target(i)).collect();
    let mut acc_ops = engine.initial_operators(&initial);
    let mut acc_probe = with_particular(probe_op.apply(&initial));

    let error_of = |acc: &DVector<f64>, increment: f64| -> f64 {
        match &reference_values {
            Some(r) => l2(&(acc - r)) / l2(r).max(f64::MIN_POSITIVE),
            None => increment,
        }
    };
    let initial_error = match &reference_values {
        Some(_) => error_of(&acc_probe, f64::NAN),
        None => f64::INFINITY,
    };

    let mut trace = ReflectionTrace {
        form,
        initial: initial.clone(),
        compacted: CarrierDensities::empty(disc.carrier_count()),
        cycles: Vec::new(),
        probes,
        initial_error,
    };
    let mut errors = vec![initial_error];
    let mut status = Status::MaxCycles;
    let mut max_identity: f64 = 0.0;
    let mut prev: Option<Vec<Reflection>> = None;
    let first_data: Vec<BoundaryDatum> = targets
        .iter()
        .zip(&acc_ops)
        .map(|(b, a)| {
            let mut d = b.clone();
            d.axpy(-1.0, a);
            d
        })
        .collect();
    let mut converged_once = false;

    for k in 1..=opts.max_cycles {
        let refl = engine.cycle(k, if k == 1 { Some(&first_data) } else { None }, prev.as_deref())?;
        let (rel, abs) = identity_residuals(form.is_sequential(), &acc_ops, &targets, &refl);
        max_identity = rel.iter().copied().fold(max_identity, f64::max);

        let mut update = DVector::zeros(acc_probe.len());
        let mut reflection_max: f64 = 0.0;
        for r in &refl {
            update.axpy(nu, &probe_op.apply(&r.densities), 1.0);
            for (i, op) in r.operators.iter().enumerate() {
                acc_ops[i].axpy(nu, op);
                reflection_max = reflection_max.max(op.max_abs());
            }
        }
        acc_probe += &update;
        let increment = l2(&update) / l2(&acc_probe).max(f64::MIN_POSITIVE);
        let error = error_of(&acc_probe, increment);
        let boundary_residuals = acc_ops
            .iter()
            .zip(&targets)
            .map(|(a, b)| {
                let mut d = a.clone();
                d.axpy(-1.0, b);
                d.max_abs()
            })
            .collect();
        debug!("{form:?} cycle {k}: error {error:.3e}, increment {increment:.3e}");
        trace.cycles.push(CycleRecord {
            cycle: k,
            reflections: Some(refl.clone()),
            boundary_residuals,
            error,
            increment,
            correction_residuals: rel,
            correction_residuals_abs: abs,
            reflection_max,
        });
        compact(&mut trace, opts.max_stored_cycles);
        errors.push(error);
        prev = Some(refl);

        if !error.is_finite() || error > opts.divergence_threshold {
            status = Status::Diverged;
            break;
        }
        if error < opts.tol {
            converged_once = true;
            if !opts.run_to_completion {
                status = Status::Converged;
                break;
            }
        }
    }
    let final_error = *errors.last().unwrap();
    if status == Status::MaxCycles && converged_once && final_error < opts.tol {
        status = Status::Converged;
    }
    let cycles = trace.cycles.len();
    info!("{form:?}: {status} after {cycles} cycles, error {final_error:.3e}");
    let contraction = estimate_contraction(&errors[1..], 0).ok();
    let report = ConvergenceReport {
        status,
        cycles,
        final_error,
        contraction,
        errors,
        max_correction_residual: max_identity,
        against_reference: reference.is_some(),
    };
    Ok((trace, report))
}

fn compact(trace: &mut ReflectionTrace, keep: usize) {
    let stored = trace.cycles.iter().filter(|c| c.reflections.is_some()).count();
    if stored <= keep {
        return;
    }
    let nu = trace.form.nu();
    let mut excess = stored - keep;
    for rec in &mut trace.cycles {
        if excess == 0 {
            break;
        }
        if let Some(refl) = rec.reflections.take() {
            for r in &refl {
                trace.compacted.axpy(nu, &r.densities);
            }
            excess -= 1;
        }
    }
}

/// Least-squares fit of `ln(error)` against the cycle index, after dropping
/// `discard` leading entries and every entry at or below the error floor.
pub fn estimate_contraction(errors: &[f64], discard: usize) -> Result<ContractionFit> {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .skip(discard)
        .filter(|(_, e)| e.is_finite() && **e > ERROR_FLOOR)
        .map(|(k, e)| (k as f64, e.ln()))
        .collect();
    fit_log_series(&pts)
}

fn fit_log_series(pts: &[(f64, f64)]) -> Result<ContractionFit> {
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewCycles {
            needed: MIN_FIT_POINTS,
            available: pts.len(),
        });
    }
    let (slope, intercept) = linear_fit(pts);
    let residual = (pts
        .iter()
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum::<f64>()
        / pts.len() as f64)
        .sqrt();
    Ok(ContractionFit {
        k: slope.exp(),
        slope,
        residual,
        points: pts.len(),
    })
}

/// Ordinary least-squares line through `(x, y)` pairs: `(slope, intercept)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Asymptotic contraction factor of the homogeneous reflection recursion by
/// power iteration: after every cycle the reflections are rescaled to unit
/// ℓ² norm of their boundary data and the logarithms of the scale factors
/// are accumulated into a virtual error series, which is then fitted like
/// [`estimate_contraction`]. Unlike the true error this series never hits
/// the round-off floor, so fast contractions can be measured.
pub fn estimate_contraction_renormalized(
    disc: &Discretization,
    form: ReflectionForm,
    cycles: usize,
    discard: usize,
) -> Result<ContractionFit> {
    form.validate()?;
    let n = disc.object_count();
    let engine = Engine { disc, form, n };
    let initial = disc.initial_densities()?;
    let ops = engine.initial_operators(&initial);
    let first: Vec<BoundaryDatum> = (0..n)
        .map(|i| {
            let mut d = disc.target(i);
            d.axpy(-1.0, &ops[i]);
            d
        })
        .collect();
    let mut log_norm = 0.0;
    let mut series = Vec::with_capacity(cycles);
    let mut prev: Option<Vec<Reflection>> = None;
    for k in 1..=cycles {
        let mut refl = engine.cycle(k, if k == 1 { Some(&first) } else { None }, prev.as_deref())?;
        let norm = refl
            .iter()
            .flat_map(|r| r.operators.iter())
            .map(|op| op.values.norm_squared() + op.flux * op.flux)
            .sum::<f64>()
            .sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::Singular(format!("reflections vanished or blew up at cycle {k}")));
        }
        for r in &mut refl {
            r.scale(1.0 / norm);
        }
        log_norm += norm.ln();
        series.push((k as f64, log_norm));
        prev = Some(refl);
    }
    let pts: Vec<(f64, f64)> = series.into_iter().skip(discard).collect();
    fit_log_series(&pts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaReport {
    /// `κ_{i,j}`, zero on the diagonal.
    pub matrix: Vec<Vec<f64>>,
    pub kappa: f64,
    /// `N(N−1)κ(N)`.
    pub product: f64,
    pub satisfied: bool,
}

/// `κ_{i,j} = S_i S_j C_i² / (4π)² · min{1/d² + 2/d⁴, 1/d⁴ + 16/d⁶}`.
pub fn kappa_pair(s_i: f64, s_j: f64, c_i: f64, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidParameter(format!("distance must be positive, got {d}")));
    }
    let (d2, d4, d6) = (d * d, d.powi(4), d.powi(6));
    let f = (1.0 / d2 + 2.0 / d4).min(1.0 / d4 + 16.0 / d6);
    let four_pi = 4.0 * std::f64::consts::PI;
    Ok(s_i * s_j * c_i * c_i / (four_pi * four_pi) * f)
}

/// Sufficient convergence certificate `N(N−1)κ(N) < 1` from perimeters,
/// pairwise distances and constants `C_i ≥ 1`.
pub fn kappa_from_metrics(perimeters: &[f64], distances: &[Vec<f64>], c: &[f64], n: usize) -> Result<KappaReport> {
    let m = perimeters.len();
    if distances.len() != m || c.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: distances.len().min(c.len()),
        });
    }
    if let Some(bad) = c.iter().find(|&&ci| !(ci >= 1.0)) {
        return Err(Error::InvalidParameter(format!("constants must be ≥ 1, got {bad}")));
    }
    let mut matrix = vec![vec![0.0; m]; m];
    let mut kappa: f64 = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                matrix[i][j] = kappa_pair(perimeters[i], perimeters[j], c[i], distances[i][j])?;
                kappa = kappa.max(matrix[i][j]);
            }
        }
    }
    let product = (n * n.saturating_sub(1)) as f64 * kappa;
    Ok(KappaReport {
        matrix,
        kappa,
        product,
        satisfied: product < 1.0,
    })
}

/// [`kappa_from_metrics`] for a layout; `c` defaults to all ones.
pub fn kappa_criterion(metrics: &LayoutMetrics, c: Option<&[f64]>) -> Result<KappaReport> {
    let m = metrics.perimeters.len();
    let ones = vec![1.0; m];
    kappa_from_metrics(&metrics.perimeters, &metrics.distances, c.unwrap_or(&ones), m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn geometric_series_is_fitted_exactly() {
        let errors: Vec<f64> = (0..20).map(|k| 3.0 * 0.37f64.powi(k)).collect();
        let fit = estimate_contraction(&errors, 2).unwrap();
        assert!((fit.k - 0.37).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert!(matches!(
            estimate_contraction(&errors[..5], 0),
            Err(Error::TooFewCycles { .. })
        ));
    }

    #[test]
    fn kappa_examples() {
        let s = 4.0 * PI;
        let d = vec![vec![0.0, 10.0], vec![10.0, 0.0]];
        let r = kappa_from_metrics(&[s, s], &d, &[1.0, 1.0], 2).unwrap();
        assert!((r.kappa - (1e-4 + 16e-6)).abs() < 1e-12);
        assert!((r.product - 2.32e-4).abs() < 1e-12);
        assert!(r.satisfied);
        let d = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let r = kappa_from_metrics(&[s, s], &d, &[1.0, 1.0], 2).unwrap();
        assert!((r.kappa - 3.0).abs() < 1e-12);
        assert!((r.product - 6.0).abs() < 1e-12);
        assert!(!r.satisfied);
        assert!(kappa_pair(s, s, 1.0, 0.0).is_err());
        assert!(kappa_pair(s, s, 1.0, 1e6).unwrap() < 1e-11);
    }

    #[test]
    fn relaxation_factor_is_validated() {
        assert!(ReflectionForm::Relaxed(0.0).validate().is_err());
        assert!(ReflectionForm::Relaxed(1.5).validate().is_err());
        assert_eq!(ReflectionForm::averaged(4).nu(), 0.25);
    }
}
