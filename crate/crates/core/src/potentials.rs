//! Laplace layer potentials in the plane and their Nyström discretisation.
//!
//! Conventions: the fundamental solution is `Φ(x) = −ln|x| / 2π`, so that a
//! single layer with total charge `q` behaves like `−q ln|x| / 2π` far away.
//! The double layer uses `∂Φ(x−y)/∂n(y)`; with a unit density it equals `−1`
//! inside the curve, `0` outside and `−1/2` on it (principal value).
//! Normals are outward for counterclockwise curves; "exterior" is the side
//! the normal points to.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Read, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, Orientation, Point};

const INV_2PI: f64 = 1.0 / (2.0 * PI);
const INV_4PI: f64 = 1.0 / (4.0 * PI);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LayerKind {
    Single,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TraceKind {
    Value,
    NormalDerivative,
}

/// Which one-sided limit a self-interaction block represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    /// Limit from the side the normal points to.
    Exterior,
    Interior,
    /// Principal value, no jump term.
    OnSurface,
}

/// Fundamental solution `−ln|x−y| / 2π`.
#[inline]
pub fn green(x: &Point, y: &Point) -> f64 {
    -INV_2PI * (x - y).norm().ln()
}

/// Gradient in `x` of [`green`].
#[inline]
pub fn green_gradient(x: &Point, y: &Point) -> Point {
    let r = x - y;
    r * (-INV_2PI / r.norm_squared())
}

/// `∂Φ(x−y)/∂n(y)`.
#[inline]
pub fn double_layer_kernel(x: &Point, y: &Point, ny: &Point) -> f64 {
    let r = x - y;
    INV_2PI * r.dot(ny) / r.norm_squared()
}

/// Gradient in `x` of [`double_layer_kernel`].
#[inline]
pub fn double_layer_gradient(x: &Point, y: &Point, ny: &Point) -> Point {
    let r = x - y;
    let r2 = r.norm_squared();
    (ny - r * (2.0 * r.dot(ny) / r2)) * (INV_2PI / r2)
}

fn require_ccw(curve: &BoundaryCurve) -> Result<()> {
    match curve.orientation() {
        Orientation::CounterClockwise => Ok(()),
        Orientation::Clockwise => Err(Error::OrientationMismatch),
    }
}

/// Weights of the periodic log-kernel rule: for `n = 2m` nodes,
/// `∫₀^{2π} ln(4 sin²((t−τ)/2)) f(τ) dτ ≈ Σ_j R_{|i−j|} f(t_j)`.
pub fn log_quadrature_weights(n: usize) -> Vec<f64> {
    let m = n / 2;
    let mf = m as f64;
    (0..n)
        .map(|d| {
            let theta = PI * d as f64 / mf;
            let mut sum = 0.0;
            for k in 1..m {
                sum += (k as f64 * theta).cos() / k as f64;
            }
            let sign = if d % 2 == 0 { 1.0 } else { -1.0 };
            -2.0 * PI / mf * sum - PI / (mf * mf) * sign
        })
        .collect()
}

/// Nyström matrix mapping nodal densities on `source` to nodal traces on
/// `target`.
///
/// For distinct curves the kernels are smooth and the plain trapezoidal rule
/// is used; `side` is ignored. For `source == target` the single-layer value
/// uses the log-splitting rule, the double-layer and adjoint diagonals use
/// the curvature limit, and the jump term of `side` is added.
pub fn layer_matrix(
    source: &BoundaryCurve,
    target: &BoundaryCurve,
    layer: LayerKind,
    trace: TraceKind,
    side: Side,
) -> Result<DMatrix<f64>> {
    require_ccw(source)?;
    require_ccw(target)?;
    if source.id() == target.id() {
        return self_matrix(source, layer, trace, side);
    }
    let ys = source.nodes();
    let ny = source.normals();
    let a = source.arc_weights();
    let xs = target.nodes();
    let nx = target.normals();
    let m = DMatrix::from_fn(xs.len(), ys.len(), |i, j| {
        let (x, y) = (&xs[i], &ys[j]);
        let k = match (layer, trace) {
            (LayerKind::Single, TraceKind::Value) => green(x, y),
            (LayerKind::Single, TraceKind::NormalDerivative) => green_gradient(x, y).dot(&nx[i]),
            (LayerKind::Double, TraceKind::Value) => double_layer_kernel(x, y, &ny[j]),
            (LayerKind::Double, TraceKind::NormalDerivative) => {
                double_layer_gradient(x, y, &ny[j]).dot(&nx[i])
            }
        };
        k * a[j]
    });
    Ok(m)
}

fn self_matrix(curve: &BoundaryCurve, layer: LayerKind, trace: TraceKind, side: Side) -> Result<DMatrix<f64>> {
    let n = curve.len();
    let xs = curve.nodes();
    let normals = curve.normals();
    let speeds = curve.speeds();
    let kappa = curve.curvatures();
    let w = curve.param_weight();
    match (layer, trace) {
        (LayerKind::Single, TraceKind::Value) => {
            let r = log_quadrature_weights(n);
            Ok(DMatrix::from_fn(n, n, |i, j| {
                let m1 = -INV_4PI * speeds[j];
                let m2 = if i == j {
                    -INV_2PI * speeds[i] * speeds[i].ln()
                } else {
                    let dt = PI * (i as f64 - j as f64) / (n as f64 / 2.0);
                    let s = (0.5 * dt).sin();
                    -INV_2PI * speeds[j] * ((xs[i] - xs[j]).norm().ln() - 0.5 * (4.0 * s * s).ln())
                };
                r[i.abs_diff(j)] * m1 + w * m2
            }))
        }
        (LayerKind::Double, TraceKind::Value) => {
            let jump = match side {
                Side::Exterior => 0.5,
                Side::Interior => -0.5,
                Side::OnSurface => 0.0,
            };
            Ok(DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    jump - INV_4PI * kappa[j] * speeds[j] * w
                } else {
                    double_layer_kernel(&xs[i], &xs[j], &normals[j]) * speeds[j] * w
                }
            }))
        }
        (LayerKind::Single, TraceKind::NormalDerivative) => {
            let jump = match side {
                Side::Exterior => -0.5,
                Side::Interior => 0.5,
                Side::OnSurface => 0.0,
            };
            Ok(DMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    jump - INV_4PI * kappa[i] * speeds[i] * w
                } else {
                    green_gradient(&xs[i], &xs[j]).dot(&normals[i]) * speeds[j] * w
                }
            }))
        }
        (LayerKind::Double, TraceKind::NormalDerivative) => Err(Error::Hypersingular),
    }
}

/// Matrix mapping nodal densities on `source` to values (`directions =
/// None`) or directional derivatives at arbitrary off-curve points.
pub fn point_matrix(
    source: &BoundaryCurve,
    layer: LayerKind,
    points: &[Point],
    directions: Option<&[Point]>,
) -> DMatrix<f64> {
    let ys = source.nodes();
    let ny = source.normals();
    let a = source.arc_weights();
    DMatrix::from_fn(points.len(), ys.len(), |i, j| {
        let (x, y) = (&points[i], &ys[j]);
        let k = match (layer, directions) {
            (LayerKind::Single, None) => green(x, y),
            (LayerKind::Single, Some(d)) => green_gradient(x, y).dot(&d[i]),
            (LayerKind::Double, None) => double_layer_kernel(x, y, &ny[j]),
            (LayerKind::Double, Some(d)) => double_layer_gradient(x, y, &ny[j]).dot(&d[i]),
        };
        k * a[j]
    })
}

/// A point charge `strength · Φ(x − location)` attached to a density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSource {
    pub location: Point,
    pub strength: f64,
}

/// Layer density carried by one curve.
#[derive(Debug, Clone)]
pub struct LayerDensity {
    pub curve: Arc<BoundaryCurve>,
    pub kind: LayerKind,
    pub values: Vec<f64>,
    pub point_source: Option<PointSource>,
}

impl LayerDensity {
    pub fn new(curve: Arc<BoundaryCurve>, kind: LayerKind, values: Vec<f64>) -> Result<Self> {
        if values.len() != curve.len() {
            return Err(Error::DimensionMismatch {
                expected: curve.len(),
                got: values.len(),
            });
        }
        Ok(Self {
            curve,
            kind,
            values,
            point_source: None,
        })
    }

    pub fn with_point_source(mut self, source: PointSource) -> Self {
        self.point_source = Some(source);
        self
    }

    /// `Σ w_i |x'(t_i)| σ_i`, the total charge of a single layer.
    pub fn total_charge(&self) -> f64 {
        self.curve
            .arc_weights()
            .iter()
            .zip(&self.values)
            .map(|(w, v)| w * v)
            .sum()
    }
}

type ParticularFn = dyn Fn(&Point) -> (f64, Point) + Send + Sync;

/// User-supplied particular solution of `−Δu = f`, returning value and
/// gradient.
#[derive(Clone)]
pub struct ParticularSolution(pub Arc<ParticularFn>);

impl ParticularSolution {
    pub fn new(f: impl Fn(&Point) -> (f64, Point) + Send + Sync + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn eval(&self, p: &Point) -> (f64, Point) {
        (self.0)(p)
    }
}

impl fmt::Debug for ParticularSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ParticularSolution(..)")
    }
}

/// A field represented by layer densities (plus an optional particular
/// solution); harmonic away from its carrier curves.
#[derive(Debug, Clone, Default)]
pub struct HarmonicField {
    pub densities: Vec<LayerDensity>,
    pub particular: Option<ParticularSolution>,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Want {
    Value,
    Gradient,
}

/// Result of [`evaluate_field`]; exactly one of `values`/`gradients` is
/// filled according to the request.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    pub values: Vec<f64>,
    pub gradients: Vec<Point>,
    /// Points closer to a carrier than its local node spacing, where the
    /// trapezoidal rule loses accuracy.
    pub near_curve: Vec<bool>,
}

impl Evaluation {
    pub fn any_near_curve(&self) -> bool {
        self.near_curve.iter().any(|&b| b)
    }
}

/// Polygon distance under which a point counts as lying on a curve.
const ON_CURVE_TOL: f64 = 1e-10;

/// Direct quadrature summation of all densities (and the particular
/// solution) at off-curve points.
pub fn evaluate_field(field: &HarmonicField, points: &[Point], want: Want) -> Result<Evaluation> {
    let mut near = vec![false; points.len()];
    for d in &field.densities {
        let spacing = d.curve.max_spacing();
        for (p, flag) in points.iter().zip(near.iter_mut()) {
            let dist = d.curve.polygon_distance(p);
            if dist <= ON_CURVE_TOL * (1.0 + p.norm()) {
                return Err(Error::PointOnCurve { x: p.x, y: p.y });
            }
            if dist < spacing {
                *flag = true;
            }
        }
    }
    let mut out = Evaluation {
        near_curve: near,
        ..Default::default()
    };
    match want {
        Want::Value => out.values = field_values(field, points),
        Want::Gradient => out.gradients = field_gradients(field, points),
    }
    Ok(out)
}

fn field_values(field: &HarmonicField, points: &[Point]) -> Vec<f64> {
    points
        .iter()
        .map(|x| {
            let mut u = 0.0;
            for d in &field.densities {
                let ys = d.curve.nodes();
                let ny = d.curve.normals();
                let a = d.curve.arc_weights();
                for j in 0..ys.len() {
                    let k = match d.kind {
                        LayerKind::Single => green(x, &ys[j]),
                        LayerKind::Double => double_layer_kernel(x, &ys[j], &ny[j]),
                    };
                    u += k * a[j] * d.values[j];
                }
                if let Some(ps) = d.point_source {
                    u += ps.strength * green(x, &ps.location);
                }
            }
            if let Some(p) = &field.particular {
                u += p.eval(x).0;
            }
            u
        })
        .collect()
}

fn field_gradients(field: &HarmonicField, points: &[Point]) -> Vec<Point> {
    points
        .iter()
        .map(|x| {
            let mut g = Point::zeros();
            for d in &field.densities {
                let ys = d.curve.nodes();
                let ny = d.curve.normals();
                let a = d.curve.arc_weights();
                for j in 0..ys.len() {
                    let k = match d.kind {
                        LayerKind::Single => green_gradient(x, &ys[j]),
                        LayerKind::Double => double_layer_gradient(x, &ys[j], &ny[j]),
                    };
                    g += k * (a[j] * d.values[j]);
                }
                if let Some(ps) = d.point_source {
                    g += green_gradient(x, &ps.location) * ps.strength;
                }
            }
            if let Some(p) = &field.particular {
                g += p.eval(x).1;
            }
            g
        })
        .collect()
}

/// Nodal trace of `field` on `target`, taking the one-sided limit `side`
/// for densities carried by `target` itself.
pub fn field_trace(
    field: &HarmonicField,
    target: &BoundaryCurve,
    side: Side,
    trace: TraceKind,
) -> Result<DVector<f64>> {
    let mut out = DVector::zeros(target.len());
    for d in &field.densities {
        let m = layer_matrix(&d.curve, target, d.kind, trace, side)?;
        out += m * DVector::from_column_slice(&d.values);
        if let Some(ps) = d.point_source {
            for (k, x) in target.nodes().iter().enumerate() {
                out[k] += ps.strength
                    * match trace {
                        TraceKind::Value => green(x, &ps.location),
                        TraceKind::NormalDerivative => {
                            green_gradient(x, &ps.location).dot(&target.normals()[k])
                        }
                    };
            }
        }
    }
    if let Some(p) = &field.particular {
        for (k, x) in target.nodes().iter().enumerate() {
            let (v, g) = p.eval(x);
            out[k] += match trace {
                TraceKind::Value => v,
                TraceKind::NormalDerivative => g.dot(&target.normals()[k]),
            };
        }
    }
    Ok(out)
}

const DUMP_MAGIC: &[u8; 4] = b"R2DM";

/// Binary dump: magic `R2DM`, rows and columns as little-endian `u64`,
/// then the entries row-major as little-endian `f64`.
pub fn write_matrix_dump<W: Write>(mut w: W, m: &DMatrix<f64>) -> io::Result<()> {
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            w.write_all(&m[(i, j)].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_matrix_dump<R: Read>(mut r: R) -> io::Result<DMatrix<f64>> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != DUMP_MAGIC {
        return Err(io::Error::new(io::ErrorKind::InvalidData, "bad matrix dump header"));
    }
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    let rows = u64::from_le_bytes(buf) as usize;
    r.read_exact(&mut buf)?;
    let cols = u64::from_le_bytes(buf) as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        r.read_exact(&mut buf)?;
        data.push(f64::from_le_bytes(buf));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_circle, make_cshape};
    use approx::assert_abs_diff_eq;

    fn circle(r: f64, n: usize) -> Arc<BoundaryCurve> {
        Arc::new(make_circle(Point::zeros(), r, n).unwrap())
    }

    #[test]
    fn gauss_identity_off_surface() {
        let c = circle(1.0, 128);
        let field = HarmonicField {
            densities: vec![LayerDensity::new(c, LayerKind::Double, vec![1.0; 128]).unwrap()],
            ..Default::default()
        };
        let inside = evaluate_field(&field, &[Point::new(0.3, -0.2)], Want::Value).unwrap();
        assert_abs_diff_eq!(inside.values[0], -1.0, epsilon = 1e-10);
        let outside = evaluate_field(&field, &[Point::new(2.0, 1.0)], Want::Value).unwrap();
        assert_abs_diff_eq!(outside.values[0], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn gauss_identity_on_surface_all_sides() {
        // the blended C-shape is only finitely smooth, hence the looser bound
        for (curve, tol) in [
            (circle(1.0, 64), 1e-12),
            (Arc::new(make_cshape(Point::zeros(), 3.0, 5.0, PI / 6.0, 1024).unwrap()), 1e-9),
        ] {
            let n = curve.len();
            let ones = DVector::from_element(n, 1.0);
            for (side, expected) in [(Side::OnSurface, -0.5), (Side::Interior, -1.0), (Side::Exterior, 0.0)] {
                let m = layer_matrix(&curve, &curve, LayerKind::Double, TraceKind::Value, side).unwrap();
                let row_sums = m * &ones;
                for v in row_sums.iter() {
                    assert_abs_diff_eq!(*v, expected, epsilon = tol);
                }
            }
        }
    }

    #[test]
    fn uniform_charge_potential() {
        let a = 0.7;
        let c = circle(a, 128);
        let q = 2.5;
        let sigma = q / (2.0 * PI * a);
        let field = HarmonicField {
            densities: vec![LayerDensity::new(Arc::clone(&c), LayerKind::Single, vec![sigma; 128]).unwrap()],
            ..Default::default()
        };
        assert_abs_diff_eq!(field.densities[0].total_charge(), q, epsilon = 1e-12);
        let rho = 3.0;
        let val = evaluate_field(&field, &[Point::new(0.0, rho)], Want::Value).unwrap();
        assert_abs_diff_eq!(val.values[0], -q / (2.0 * PI) * rho.ln(), epsilon = 1e-10);
        let grad = evaluate_field(&field, &[Point::new(rho, 0.0)], Want::Gradient).unwrap();
        assert_abs_diff_eq!(grad.gradients[0].x, -q / (2.0 * PI * rho), epsilon = 1e-8);
        assert_abs_diff_eq!(grad.gradients[0].y, 0.0, epsilon = 1e-8);
        // on-surface value through the log-corrected rule
        let s = layer_matrix(&c, &c, LayerKind::Single, TraceKind::Value, Side::OnSurface).unwrap();
        let on = s * DVector::from_element(128, sigma);
        for v in on.iter() {
            assert_abs_diff_eq!(*v, -q / (2.0 * PI) * a.ln(), epsilon = 1e-12);
        }
        // one-sided normal derivatives: −σ outside, 0 inside
        let dn_out = layer_matrix(&c, &c, LayerKind::Single, TraceKind::NormalDerivative, Side::Exterior).unwrap()
            * DVector::from_element(128, sigma);
        let dn_in = layer_matrix(&c, &c, LayerKind::Single, TraceKind::NormalDerivative, Side::Interior).unwrap()
            * DVector::from_element(128, sigma);
        for (o, i) in dn_out.iter().zip(dn_in.iter()) {
            assert_abs_diff_eq!(*o, -sigma, epsilon = 1e-12);
            assert_abs_diff_eq!(*i, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_layer_self_matrix_on_fourier_modes() {
        // on a circle of radius a, S maps cos(kt) to a/(2k) cos(kt)
        let a = 1.3;
        let c = circle(a, 64);
        let s = layer_matrix(&c, &c, LayerKind::Single, TraceKind::Value, Side::OnSurface).unwrap();
        for k in 1..5 {
            let dens = DVector::from_fn(64, |j, _| (k as f64 * 2.0 * PI * j as f64 / 64.0).cos());
            let out = &s * &dens;
            for j in 0..64 {
                assert_abs_diff_eq!(out[j], a * dens[j] / (2.0 * k as f64), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hypersingular_is_rejected() {
        let c = circle(1.0, 32);
        assert!(matches!(
            layer_matrix(&c, &c, LayerKind::Double, TraceKind::NormalDerivative, Side::Exterior),
            Err(Error::Hypersingular)
        ));
    }

    #[test]
    fn clockwise_curves_are_rejected() {
        let c = circle(1.0, 32);
        let r = c.reversed();
        assert!(matches!(
            layer_matrix(&r, &c, LayerKind::Single, TraceKind::Value, Side::Exterior),
            Err(Error::OrientationMismatch)
        ));
    }

    #[test]
    fn zero_density_and_on_curve_points() {
        let c = circle(1.0, 64);
        let field = HarmonicField {
            densities: vec![LayerDensity::new(Arc::clone(&c), LayerKind::Single, vec![0.0; 64]).unwrap()],
            ..Default::default()
        };
        let e = evaluate_field(&field, &[Point::new(5.0, 0.0), Point::new(0.1, 0.1)], Want::Value).unwrap();
        assert!(e.values.iter().all(|v| *v == 0.0));
        assert!(matches!(
            evaluate_field(&field, &[c.nodes()[3]], Want::Value),
            Err(Error::PointOnCurve { .. })
        ));
        let near = evaluate_field(&field, &[Point::new(1.0 + 1e-3, 0.0)], Want::Value).unwrap();
        assert!(near.any_near_curve());
        assert!(LayerDensity::new(c, LayerKind::Single, vec![0.0; 3]).is_err());
    }

    #[test]
    fn matrix_dump_round_trip() {
        let m = DMatrix::from_fn(3, 2, |i, j| i as f64 - 0.5 * j as f64);
        let mut buf = Vec::new();
        write_matrix_dump(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 4 + 16 + 6 * 8);
        assert_eq!(read_matrix_dump(&buf[..]).unwrap(), m);
        // row-major layout
        assert_eq!(f64::from_le_bytes(buf[28..36].try_into().unwrap()), m[(0, 1)]);
    }
}
