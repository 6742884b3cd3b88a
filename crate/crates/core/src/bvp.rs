//! Boundary integral solution of the perforated-domain problem.
//!
//! Every object carries one density; the container (if present) carries a
//! double layer with `u = 0` on it. Representations:
//!
//! * Dirichlet object: double layer plus a point source at an interior
//!   anchor, with the density constrained to zero mean.
//! * Neumann object: single layer.
//! * Fourth-type object (`u` constant on the boundary, prescribed flux):
//!   single layer plus an unknown constant; the flux row is `−∫σ = Q`.
//!
//! A [`Discretization`] caches every interaction block and the factorised
//! one-object systems so that repeated reflections only cost triangular
//! solves and matrix–vector products.

use std::sync::{Arc, OnceLock};

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};
use crate::geometry::{layout_metrics, BoundaryCurve, GeometryLayout, LayoutMetrics, Point};
use crate::potentials::{
    green, green_gradient, layer_matrix, point_matrix, HarmonicField, LayerDensity, LayerKind,
    ParticularSolution, PointSource, Side, TraceKind,
};

/// Condition estimates above this are reported with a warning.
pub const CONDITION_WARN: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConditionKind {
    Dirichlet,
    Neumann,
    FourthType,
}

/// Boundary condition on one object, sampled at its nodes.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundaryCondition {
    Dirichlet(Vec<f64>),
    Neumann(Vec<f64>),
    /// `u` equals an unknown constant on the boundary and `∫ ∂u/∂n = flux`.
    FourthType { flux: f64 },
}

impl BoundaryCondition {
    pub fn kind(&self) -> ConditionKind {
        match self {
            Self::Dirichlet(_) => ConditionKind::Dirichlet,
            Self::Neumann(_) => ConditionKind::Neumann,
            Self::FourthType { .. } => ConditionKind::FourthType,
        }
    }
}

/// Data of an object-local problem: nodal values plus a scalar flux (only
/// used by fourth-type objects).
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryDatum {
    pub values: DVector<f64>,
    pub flux: f64,
}

impl BoundaryDatum {
    pub fn zeros(n: usize) -> Self {
        Self {
            values: DVector::zeros(n),
            flux: 0.0,
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &BoundaryDatum) {
        self.values.axpy(alpha, &other.values, 1.0);
        self.flux += alpha * other.flux;
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values *= alpha;
        self.flux *= alpha;
    }

    pub fn max_abs(&self) -> f64 {
        self.values.amax().max(self.flux.abs())
    }
}

/// Geometry, boundary conditions and optional particular solution.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    layout: GeometryLayout,
    conditions: Vec<BoundaryCondition>,
    particular: Option<ParticularSolution>,
    metrics: LayoutMetrics,
}

impl ProblemSpec {
    pub fn new(layout: GeometryLayout, conditions: Vec<BoundaryCondition>) -> Result<Self> {
        if conditions.len() != layout.object_count() {
            return Err(Error::DimensionMismatch {
                expected: layout.object_count(),
                got: conditions.len(),
            });
        }
        if layout.object_count() == 0 {
            return Err(Error::InvalidGeometry("at least one object is required".into()));
        }
        for (obj, bc) in layout.objects.iter().zip(&conditions) {
            if let BoundaryCondition::Dirichlet(v) | BoundaryCondition::Neumann(v) = bc {
                if v.len() != obj.len() {
                    return Err(Error::DimensionMismatch {
                        expected: obj.len(),
                        got: v.len(),
                    });
                }
            }
        }
        if layout.container.is_none() {
            for (i, bc) in conditions.iter().enumerate() {
                match bc {
                    BoundaryCondition::Neumann(g) => {
                        let obj = &layout.objects[i];
                        let w = obj.arc_weights();
                        let total: f64 = w.iter().zip(g).map(|(w, g)| w * g).sum();
                        let scale: f64 = w.iter().zip(g).map(|(w, g)| w * g.abs()).sum();
                        if total.abs() > 1e-8 * scale.max(f64::MIN_POSITIVE) {
                            return Err(Error::IllPosed(format!(
                                "object {i}: exterior Neumann data with nonzero total flux {total:e} \
                                 has no solution decaying at infinity"
                            )));
                        }
                    }
                    _ => {
                        return Err(Error::IllPosed(format!(
                            "object {i}: only Neumann conditions are supported without a container"
                        )))
                    }
                }
            }
        }
        let metrics = layout_metrics(&layout)?;
        Ok(Self {
            layout,
            conditions,
            particular: None,
            metrics,
        })
    }

    /// Attach a particular solution of `−Δu = f`; needs a container.
    pub fn with_particular(mut self, particular: ParticularSolution) -> Result<Self> {
        if self.layout.container.is_none() {
            return Err(Error::IllPosed("a source term requires a container".into()));
        }
        self.particular = Some(particular);
        Ok(self)
    }

    pub fn layout(&self) -> &GeometryLayout {
        &self.layout
    }

    pub fn conditions(&self) -> &[BoundaryCondition] {
        &self.conditions
    }

    pub fn particular(&self) -> Option<&ParticularSolution> {
        self.particular.as_ref()
    }

    pub fn metrics(&self) -> &LayoutMetrics {
        &self.metrics
    }

    pub fn object_count(&self) -> usize {
        self.layout.object_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CarrierKind {
    Object(ConditionKind),
    Container,
}

#[derive(Debug, Clone)]
struct Carrier {
    curve: Arc<BoundaryCurve>,
    kind: CarrierKind,
    layer: LayerKind,
    /// One-sided limit taken from the fluid.
    side: Side,
    /// Trace the boundary condition acts on.
    trace: TraceKind,
    anchor: Option<Point>,
}

impl Carrier {
    fn has_extra(&self) -> bool {
        matches!(
            self.kind,
            CarrierKind::Object(ConditionKind::Dirichlet) | CarrierKind::Object(ConditionKind::FourthType)
        )
    }
}

/// Densities on the carriers (objects first, container last). Carriers that
/// play no part hold `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierDensities {
    pub layers: Vec<Option<DVector<f64>>>,
    /// Point-source strengths at the anchors of Dirichlet objects.
    pub sources: Vec<f64>,
}

impl CarrierDensities {
    pub fn empty(carriers: usize) -> Self {
        Self {
            layers: vec![None; carriers],
            sources: vec![0.0; carriers],
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &CarrierDensities) {
        for (mine, theirs) in self.layers.iter_mut().zip(&other.layers) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => m.axpy(alpha, t, 1.0),
                    None => *mine = Some(t * alpha),
                }
            }
        }
        for (m, t) in self.sources.iter_mut().zip(&other.sources) {
            *m += alpha * t;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for v in self.layers.iter_mut().flatten() {
            *v *= alpha;
        }
        for s in &mut self.sources {
            *s *= alpha;
        }
    }
}

/// Solution of a one-object subproblem.
#[derive(Debug, Clone)]
pub struct ObjectSolution {
    pub densities: CarrierDensities,
    /// Boundary constant of a fourth-type object.
    pub constant: Option<f64>,
}

/// Solution of the full coupled problem.
#[derive(Debug, Clone)]
pub struct DirectSolution {
    pub densities: CarrierDensities,
    /// Boundary constants of fourth-type objects, `None` for the others.
    pub constants: Vec<Option<f64>>,
    /// `‖Ax − b‖∞ / (‖A‖∞‖x‖∞ + ‖b‖∞)`.
    pub relative_residual: f64,
    /// Estimate of the 1-norm condition number of the system.
    pub condition: f64,
    pub field: HarmonicField,
}

struct Factor {
    set: Vec<usize>,
    offsets: Vec<usize>,
    /// Column/row of the extra unknown (point source or constant).
    extras: Vec<Option<usize>>,
    matrix: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
    condition: f64,
}

impl Factor {
    fn size(&self) -> usize {
        self.matrix.nrows()
    }
}

/// Cached Nyström discretisation of a [`ProblemSpec`].
pub struct Discretization {
    problem: ProblemSpec,
    carriers: Vec<Carrier>,
    blocks: Vec<OnceLock<DMatrix<f64>>>,
    sources: Vec<OnceLock<DVector<f64>>>,
    one_object: Vec<OnceLock<std::result::Result<Arc<Factor>, String>>>,
    container_only: OnceLock<std::result::Result<Arc<Factor>, String>>,
    full: OnceLock<std::result::Result<Arc<Factor>, String>>,
    particular_ops: Option<Vec<BoundaryDatum>>,
    particular_container: Option<DVector<f64>>,
}

impl std::fmt::Debug for Discretization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Discretization")
            .field("objects", &self.object_count())
            .field("nodes", &self.node_counts())
            .finish()
    }
}

fn trace_index(t: TraceKind) -> usize {
    match t {
        TraceKind::Value => 0,
        TraceKind::NormalDerivative => 1,
    }
}

impl Discretization {
    pub fn new(problem: ProblemSpec) -> Result<Self> {
        let layout = problem.layout();
        let mut carriers = Vec::with_capacity(layout.object_count() + 1);
        for (obj, bc) in layout.objects.iter().zip(problem.conditions()) {
            let kind = bc.kind();
            let (layer, trace) = match kind {
                ConditionKind::Dirichlet => (LayerKind::Double, TraceKind::Value),
                ConditionKind::Neumann => (LayerKind::Single, TraceKind::NormalDerivative),
                ConditionKind::FourthType => (LayerKind::Single, TraceKind::Value),
            };
            carriers.push(Carrier {
                curve: Arc::clone(obj),
                kind: CarrierKind::Object(kind),
                layer,
                side: Side::Exterior,
                trace,
                anchor: (kind == ConditionKind::Dirichlet).then(|| obj.interior_anchor()),
            });
        }
        if let Some(c) = &layout.container {
            carriers.push(Carrier {
                curve: Arc::clone(c),
                kind: CarrierKind::Container,
                layer: LayerKind::Double,
                side: Side::Interior,
                trace: TraceKind::Value,
                anchor: None,
            });
        }
        let nc = carriers.len();
        let n_obj = layout.object_count();

        let (particular_ops, particular_container) = match problem.particular() {
            Some(p) => {
                let ops = (0..n_obj)
                    .map(|i| particular_operator(p, &carriers[i]))
                    .collect::<Vec<_>>();
                let cont = DVector::from_iterator(
                    carriers[nc - 1].curve.len(),
                    carriers[nc - 1].curve.nodes().iter().map(|x| p.eval(x).0),
                );
                (Some(ops), Some(cont))
            }
            None => (None, None),
        };

        Ok(Self {
            problem,
            blocks: (0..nc * nc * 2).map(|_| OnceLock::new()).collect(),
            sources: (0..nc * nc * 2).map(|_| OnceLock::new()).collect(),
            one_object: (0..n_obj).map(|_| OnceLock::new()).collect(),
            container_only: OnceLock::new(),
            full: OnceLock::new(),
            carriers,
            particular_ops,
            particular_container,
        })
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn object_count(&self) -> usize {
        self.problem.object_count()
    }

    pub fn carrier_count(&self) -> usize {
        self.carriers.len()
    }

    pub fn has_container(&self) -> bool {
        self.problem.layout().container.is_some()
    }

    pub fn curve(&self, carrier: usize) -> &Arc<BoundaryCurve> {
        &self.carriers[carrier].curve
    }

    /// Node counts of the objects, then of the container.
    pub fn node_counts(&self) -> Vec<usize> {
        self.carriers.iter().map(|c| c.curve.len()).collect()
    }

    pub fn condition_kind(&self, object: usize) -> ConditionKind {
        self.problem.conditions()[object].kind()
    }

    fn block(&self, source: usize, target: usize, trace: TraceKind) -> &DMatrix<f64> {
        let nc = self.carriers.len();
        let idx = (source * nc + target) * 2 + trace_index(trace);
        self.blocks[idx].get_or_init(|| {
            let (s, t) = (&self.carriers[source], &self.carriers[target]);
            layer_matrix(&s.curve, &t.curve, s.layer, trace, t.side)
                .expect("hypersingular blocks are never requested")
        })
    }

    /// Trace on `target` of the unit point source anchored in `source`.
    fn source_column(&self, source: usize, target: usize, trace: TraceKind) -> &DVector<f64> {
        let nc = self.carriers.len();
        let idx = (source * nc + target) * 2 + trace_index(trace);
        self.sources[idx].get_or_init(|| {
            let z = self.carriers[source].anchor.expect("anchored carrier");
            let t = &self.carriers[target].curve;
            DVector::from_iterator(
                t.len(),
                t.nodes().iter().zip(t.normals()).map(|(x, n)| match trace {
                    TraceKind::Value => green(x, &z),
                    TraceKind::NormalDerivative => green_gradient(x, &z).dot(n),
                }),
            )
        })
    }

    /// Trace of `dens` on carrier `target` (fluid-side limit).
    pub fn carrier_trace(&self, dens: &CarrierDensities, target: usize, trace: TraceKind) -> DVector<f64> {
        let mut out = DVector::zeros(self.carriers[target].curve.len());
        for (a, layer) in dens.layers.iter().enumerate() {
            if let Some(mu) = layer {
                out.gemv(1.0, self.block(a, target, trace), mu, 1.0);
            }
            if dens.sources[a] != 0.0 {
                out.axpy(dens.sources[a], self.source_column(a, target, trace), 1.0);
            }
        }
        out
    }

    /// Boundary operator of object `i` applied to the field of `dens`: the
    /// trace its condition acts on; for fourth-type objects the trace minus
    /// its weighted mean, together with the flux.
    pub fn apply_boundary_operator(&self, dens: &CarrierDensities, i: usize) -> BoundaryDatum {
        let c = &self.carriers[i];
        let mut values = self.carrier_trace(dens, i, c.trace);
        let mut flux = 0.0;
        if c.kind == CarrierKind::Object(ConditionKind::FourthType) {
            let mean = c.curve.mean(values.as_slice());
            values.add_scalar_mut(-mean);
            if let Some(sigma) = &dens.layers[i] {
                flux = -weighted_sum(&c.curve, sigma);
            }
        }
        BoundaryDatum { values, flux }
    }

    /// Boundary operator of object `i` applied to the particular solution.
    pub fn particular_operator(&self, i: usize) -> Option<&BoundaryDatum> {
        self.particular_ops.as_ref().map(|ops| &ops[i])
    }

    /// Prescribed data `b_i` of object `i`, in the form returned by
    /// [`Self::apply_boundary_operator`].
    pub fn target(&self, i: usize) -> BoundaryDatum {
        let n = self.carriers[i].curve.len();
        match &self.problem.conditions()[i] {
            BoundaryCondition::Dirichlet(v) | BoundaryCondition::Neumann(v) => BoundaryDatum {
                values: DVector::from_column_slice(v),
                flux: 0.0,
            },
            BoundaryCondition::FourthType { flux } => BoundaryDatum {
                values: DVector::zeros(n),
                flux: *flux,
            },
        }
    }

    fn factor_for(&self, set: Vec<usize>) -> std::result::Result<Arc<Factor>, String> {
        let mut offsets = Vec::with_capacity(set.len());
        let mut size = 0;
        for &a in &set {
            offsets.push(size);
            size += self.carriers[a].curve.len();
        }
        let mut extras = Vec::with_capacity(set.len());
        for &a in &set {
            if self.carriers[a].has_extra() {
                extras.push(Some(size));
                size += 1;
            } else {
                extras.push(None);
            }
        }
        let mut m = DMatrix::zeros(size, size);
        for (bi, &b) in set.iter().enumerate() {
            let tb = &self.carriers[b];
            let rows = offsets[bi];
            let nb = tb.curve.len();
            for (ai, &a) in set.iter().enumerate() {
                let na = self.carriers[a].curve.len();
                m.view_mut((rows, offsets[ai]), (nb, na))
                    .copy_from(self.block(a, b, tb.trace));
                if self.carriers[a].anchor.is_some() {
                    let col = extras[ai].expect("anchored carrier has an extra unknown");
                    m.view_mut((rows, col), (nb, 1))
                        .copy_from(self.source_column(a, b, tb.trace));
                }
            }
            if let Some(row) = extras[bi] {
                let w = tb.curve.arc_weights();
                let sign = match tb.kind {
                    CarrierKind::Object(ConditionKind::FourthType) => {
                        for k in 0..nb {
                            m[(rows + k, row)] = -1.0;
                        }
                        -1.0
                    }
                    _ => 1.0,
                };
                for (k, wk) in w.iter().enumerate() {
                    m[(row, rows + k)] = sign * wk;
                }
            }
        }
        let lu = m.clone().lu();
        if !lu.is_invertible() {
            return Err(format!("exactly singular system on carriers {set:?}"));
        }
        let condition = m.column_iter().map(|c| c.lp_norm(1)).fold(0.0, f64::max) * inverse_norm1_estimate(&lu);
        if !condition.is_finite() || condition > 1e15 {
            return Err(format!("system on carriers {set:?} is numerically singular (condition ≈ {condition:.3e})"));
        }
        if condition > CONDITION_WARN {
            warn!("ill-conditioned system on carriers {set:?}: condition ≈ {condition:.3e}");
        } else {
            debug!("system on carriers {set:?}: size {size}, condition ≈ {condition:.3e}");
        }
        Ok(Arc::new(Factor {
            set,
            offsets,
            extras,
            matrix: m,
            lu,
            condition,
        }))
    }

    fn one_object_factor(&self, i: usize) -> Result<Arc<Factor>> {
        self.one_object[i]
            .get_or_init(|| {
                let mut set = vec![i];
                if self.has_container() {
                    set.push(self.carriers.len() - 1);
                }
                self.factor_for(set)
            })
            .clone()
            .map_err(Error::Singular)
    }

    fn full_factor(&self) -> Result<Arc<Factor>> {
        self.full
            .get_or_init(|| self.factor_for((0..self.carriers.len()).collect()))
            .clone()
            .map_err(Error::Singular)
    }

    fn container_factor(&self) -> Result<Arc<Factor>> {
        self.container_only
            .get_or_init(|| self.factor_for(vec![self.carriers.len() - 1]))
            .clone()
            .map_err(Error::Singular)
    }

    /// Assemble the right-hand side for `factor` from per-carrier data.
    fn rhs(&self, factor: &Factor, data: &[(usize, &BoundaryDatum)], container: Option<&DVector<f64>>) -> DVector<f64> {
        let mut b = DVector::zeros(factor.size());
        for (ai, &a) in factor.set.iter().enumerate() {
            let n = self.carriers[a].curve.len();
            if self.carriers[a].kind == CarrierKind::Container {
                if let Some(g) = container {
                    b.rows_mut(factor.offsets[ai], n).copy_from(g);
                }
                continue;
            }
            if let Some((_, d)) = data.iter().find(|(k, _)| *k == a) {
                b.rows_mut(factor.offsets[ai], n).copy_from(&d.values);
                if self.carriers[a].kind == CarrierKind::Object(ConditionKind::FourthType) {
                    b[factor.extras[ai].unwrap()] = d.flux;
                }
            }
        }
        b
    }

    fn unpack(&self, factor: &Factor, x: &DVector<f64>) -> (CarrierDensities, Vec<Option<f64>>) {
        let mut dens = CarrierDensities::empty(self.carriers.len());
        let mut constants = vec![None; self.object_count()];
        for (ai, &a) in factor.set.iter().enumerate() {
            let n = self.carriers[a].curve.len();
            dens.layers[a] = Some(x.rows(factor.offsets[ai], n).into_owned());
            if let Some(e) = factor.extras[ai] {
                match self.carriers[a].kind {
                    CarrierKind::Object(ConditionKind::Dirichlet) => dens.sources[a] = x[e],
                    CarrierKind::Object(ConditionKind::FourthType) => constants[a] = Some(x[e]),
                    _ => unreachable!(),
                }
            }
        }
        (dens, constants)
    }

    /// Solve the problem with only object `i` (and the container, with
    /// `u = 0` on it) present, boundary data `datum` on object `i`.
    pub fn solve_one_object(&self, i: usize, datum: &BoundaryDatum) -> Result<ObjectSolution> {
        if i >= self.object_count() {
            return Err(Error::InvalidParameter(format!("object index {i} out of range")));
        }
        if datum.values.len() != self.carriers[i].curve.len() {
            return Err(Error::DimensionMismatch {
                expected: self.carriers[i].curve.len(),
                got: datum.values.len(),
            });
        }
        if !self.has_container() && self.carriers[i].kind == CarrierKind::Object(ConditionKind::Neumann) {
            let w = self.carriers[i].curve.arc_weights();
            let total: f64 = w.iter().zip(datum.values.iter()).map(|(w, g)| w * g).sum();
            let scale: f64 = w.iter().zip(datum.values.iter()).map(|(w, g)| w * g.abs()).sum();
            if total.abs() > 1e-6 * scale {
                return Err(Error::IllPosed(format!(
                    "object {i}: exterior Neumann datum has nonzero mean ({total:e}); no decaying solution"
                )));
            }
        }
        let factor = self.one_object_factor(i)?;
        let b = self.rhs(&factor, &[(i, datum)], None);
        let x = factor.lu.solve(&b).ok_or_else(|| Error::Singular("LU solve failed".into()))?;
        let (densities, constants) = self.unpack(&factor, &x);
        Ok(ObjectSolution {
            densities,
            constant: constants[i],
        })
    }

    /// Initial field of the reflection method (without the particular
    /// solution itself): corrects the particular solution on the container
    /// and carries the prescribed fluxes of fourth-type objects.
    pub fn initial_densities(&self) -> Result<CarrierDensities> {
        let mut dens = CarrierDensities::empty(self.carriers.len());
        if let Some(g) = &self.particular_container {
            let factor = self.container_factor()?;
            let b = self.rhs(&factor, &[], Some(&(-g)));
            let x = factor.lu.solve(&b).ok_or_else(|| Error::Singular("LU solve failed".into()))?;
            dens.axpy(1.0, &self.unpack(&factor, &x).0);
        }
        for (i, bc) in self.problem.conditions().iter().enumerate() {
            if let BoundaryCondition::FourthType { flux } = bc {
                if *flux != 0.0 {
                    let datum = BoundaryDatum {
                        values: DVector::zeros(self.carriers[i].curve.len()),
                        flux: *flux,
                    };
                    dens.axpy(1.0, &self.solve_one_object(i, &datum)?.densities);
                }
            }
        }
        Ok(dens)
    }

    /// Flux `∫ ∂u/∂n` through object `i` (normal pointing into the fluid) by
    /// quadrature of the fluid-side normal trace, including the particular
    /// solution.
    pub fn discrete_flux(&self, dens: &CarrierDensities, i: usize) -> Result<f64> {
        if self.carriers[i].layer == LayerKind::Double && dens.layers[i].is_some() {
            return Err(Error::Hypersingular);
        }
        let curve = &self.carriers[i].curve;
        let mut flux = weighted_sum(curve, &self.carrier_trace(dens, i, TraceKind::NormalDerivative));
        if let Some(p) = self.problem.particular() {
            flux += curve
                .nodes()
                .iter()
                .zip(curve.normals())
                .zip(curve.arc_weights())
                .map(|((x, n), w)| w * p.eval(x).1.dot(n))
                .sum::<f64>();
        }
        Ok(flux)
    }

    /// Solve the coupled problem with all objects at once.
    pub fn solve_direct(&self) -> Result<DirectSolution> {
        let factor = self.full_factor()?;
        let n_obj = self.object_count();
        let mut data: Vec<BoundaryDatum> = (0..n_obj).map(|i| self.target(i)).collect();
        if let Some(ops) = &self.particular_ops {
            for (d, p) in data.iter_mut().zip(ops) {
                // fourth-type values are defined up to a constant anyway
                d.axpy(-1.0, p);
            }
        }
        let pairs: Vec<(usize, &BoundaryDatum)> = data.iter().enumerate().collect();
        let container = self.particular_container.as_ref().map(|g| -g);
        let b = self.rhs(&factor, &pairs, container.as_ref());
        let x = factor.lu.solve(&b).ok_or_else(|| Error::Singular("LU solve failed".into()))?;
        let r = &factor.matrix * &x - &b;
        let denom = factor.matrix.row_iter().map(|row| row.lp_norm(1)).fold(0.0, f64::max) * x.amax() + b.amax();
        let relative_residual = if denom > 0.0 { r.amax() / denom } else { 0.0 };
        let (densities, mut constants) = self.unpack(&factor, &x);
        if let Some(p) = self.problem.particular() {
            // the particular solution's own boundary mean is part of the constant
            for (i, c) in constants.iter_mut().enumerate() {
                if let Some(c) = c {
                    let curve = &self.carriers[i].curve;
                    let vals: Vec<f64> = curve.nodes().iter().map(|x| p.eval(x).0).collect();
                    *c += curve.mean(&vals);
                }
            }
        }
        let field = self.to_field(&densities, "direct");
        Ok(DirectSolution {
            densities,
            constants,
            relative_residual,
            condition: factor.condition,
            field,
        })
    }

    /// Condition estimate of the one-object system of object `i`.
    pub fn one_object_condition(&self, i: usize) -> Result<f64> {
        Ok(self.one_object_factor(i)?.condition)
    }

    /// Harmonic field represented by `dens`, including the particular
    /// solution if the problem has one.
    pub fn to_field(&self, dens: &CarrierDensities, label: &str) -> HarmonicField {
        let mut densities = Vec::new();
        for (a, layer) in dens.layers.iter().enumerate() {
            let c = &self.carriers[a];
            if let Some(mu) = layer {
                let mut d = LayerDensity {
                    curve: Arc::clone(&c.curve),
                    kind: c.layer,
                    values: mu.as_slice().to_vec(),
                    point_source: None,
                };
                if let Some(z) = c.anchor {
                    d.point_source = Some(PointSource {
                        location: z,
                        strength: dens.sources[a],
                    });
                }
                densities.push(d);
            }
        }
        HarmonicField {
            densities,
            particular: self.problem.particular().cloned(),
            label: label.to_string(),
        }
    }

    /// Evaluation operator for a fixed set of off-curve points.
    pub fn probe_operator(&self, points: &[Point]) -> ProbeOperator {
        let layers = self
            .carriers
            .iter()
            .map(|c| point_matrix(&c.curve, c.layer, points, None))
            .collect();
        let sources = self
            .carriers
            .iter()
            .map(|c| {
                c.anchor
                    .map(|z| DVector::from_iterator(points.len(), points.iter().map(|x| green(x, &z))))
            })
            .collect();
        let particular = self
            .problem
            .particular()
            .map(|p| DVector::from_iterator(points.len(), points.iter().map(|x| p.eval(x).0)));
        ProbeOperator {
            layers,
            sources,
            particular,
        }
    }

    /// Maximum boundary-condition violation of the field `dens` (plus the
    /// particular solution) over all objects and the container.
    pub fn boundary_residual(&self, dens: &CarrierDensities) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.object_count() {
            let mut d = self.apply_boundary_operator(dens, i);
            if let Some(p) = self.particular_operator(i) {
                d.axpy(1.0, p);
            }
            d.axpy(-1.0, &self.target(i));
            worst = worst.max(d.max_abs());
        }
        if self.has_container() {
            let c = self.carriers.len() - 1;
            let mut v = self.carrier_trace(dens, c, TraceKind::Value);
            if let Some(g) = &self.particular_container {
                v += g;
            }
            worst = worst.max(v.amax());
        }
        worst
    }
}

/// Precomputed evaluation matrices at fixed points.
#[derive(Debug, Clone)]
pub struct ProbeOperator {
    layers: Vec<DMatrix<f64>>,
    sources: Vec<Option<DVector<f64>>>,
    particular: Option<DVector<f64>>,
}

impl ProbeOperator {
    /// Values of the harmonic part represented by `dens`.
    pub fn apply(&self, dens: &CarrierDensities) -> DVector<f64> {
        let mut out = DVector::zeros(self.layers.first().map_or(0, |m| m.nrows()));
        for (a, layer) in dens.layers.iter().enumerate() {
            if let Some(mu) = layer {
                out.gemv(1.0, &self.layers[a], mu, 1.0);
            }
            if let Some(s) = &self.sources[a] {
                out.axpy(dens.sources[a], s, 1.0);
            }
        }
        out
    }

    /// Values of the particular solution (zero if there is none).
    pub fn particular(&self) -> Option<&DVector<f64>> {
        self.particular.as_ref()
    }
}

fn weighted_sum(curve: &BoundaryCurve, v: &DVector<f64>) -> f64 {
    curve.arc_weights().iter().zip(v.iter()).map(|(w, x)| w * x).sum()
}

fn particular_operator(p: &ParticularSolution, c: &Carrier) -> BoundaryDatum {
    let curve = &c.curve;
    let evals: Vec<(f64, Point)> = curve.nodes().iter().map(|x| p.eval(x)).collect();
    let normal: DVector<f64> =
        DVector::from_iterator(curve.len(), evals.iter().zip(curve.normals()).map(|((_, g), n)| g.dot(n)));
    match c.kind {
        CarrierKind::Object(ConditionKind::Dirichlet) => BoundaryDatum {
            values: DVector::from_iterator(curve.len(), evals.iter().map(|e| e.0)),
            flux: 0.0,
        },
        CarrierKind::Object(ConditionKind::Neumann) => BoundaryDatum { values: normal, flux: 0.0 },
        CarrierKind::Object(ConditionKind::FourthType) => {
            let vals: Vec<f64> = evals.iter().map(|e| e.0).collect();
            let mean = curve.mean(&vals);
            BoundaryDatum {
                values: DVector::from_iterator(curve.len(), vals.iter().map(|v| v - mean)),
                flux: weighted_sum(curve, &normal),
            }
        }
        CarrierKind::Container => unreachable!("container data handled separately"),
    }
}

/// Hager–Higham estimate of `‖A⁻¹‖₁` from an LU factorisation.
fn inverse_norm1_estimate(lu: &LU<f64, Dyn, Dyn>) -> f64 {
    let n = lu.u().nrows();
    let l = lu.l();
    let u = lu.u();
    let p = lu.p();
    let solve_t = |b: &DVector<f64>| -> Option<DVector<f64>> {
        // Aᵀ = Uᵀ Lᵀ P
        let z = u.tr_solve_upper_triangular(b)?;
        let mut w = l.tr_solve_lower_triangular(&z)?;
        p.inv_permute_rows(&mut w);
        Some(w)
    };
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut estimate = 0.0;
    for _ in 0..5 {
        let Some(y) = lu.solve(&x) else { return f64::INFINITY };
        estimate = y.lp_norm(1);
        let xi = y.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        let Some(z) = solve_t(&xi) else { return f64::INFINITY };
        let j = z.iamax();
        if z[j].abs() <= z.dot(&x) {
            break;
        }
        x = DVector::zeros(n);
        x[j] = 1.0;
    }
    estimate
}

/// Solve the coupled problem directly.
pub fn solve_direct(problem: &ProblemSpec) -> Result<DirectSolution> {
    Discretization::new(problem.clone())?.solve_direct()
}

/// Initial approximation of the reflection method: zero for homogeneous
/// Dirichlet/Neumann problems, otherwise the sum of the container
/// correction of the particular solution and the one-object solutions
/// carrying the prescribed fluxes.
pub fn solve_initial(problem: &ProblemSpec) -> Result<HarmonicField> {
    let disc = Discretization::new(problem.clone())?;
    let dens = disc.initial_densities()?;
    Ok(disc.to_field(&dens, "initial"))
}

/// Solve the one-object problem for object `i` with the given datum.
pub fn solve_one_object(problem: &ProblemSpec, i: usize, datum: &BoundaryDatum) -> Result<ObjectSolution> {
    Discretization::new(problem.clone())?.solve_one_object(i, datum)
}
