//! Smooth closed boundary curves and their periodic quadrature data.
//!
//! Every curve is parametrised over `t ∈ [0, 2π)` and sampled at the
//! equispaced nodes `t_k = 2πk/n` of the composite trapezoidal rule. Curves
//! are immutable once built; identity is tracked through a process-unique id
//! so that operators can recognise self-interaction blocks.

use std::f64::consts::PI;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::Vector2;

use crate::error::{Error, Result};

pub type Point = Vector2<f64>;

const TWO_PI: f64 = 2.0 * PI;
const MIN_NODES: usize = 16;
const GOLDEN: f64 = 0.618_033_988_749_894_8;

static NEXT_CURVE_ID: AtomicU64 = AtomicU64::new(1);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    CounterClockwise,
    Clockwise,
}

/// A circular arc parametrised by arc length `s`, `x(s) = c + ρ e^{i(φ₀ + σ s/ρ)}`.
///
/// Evaluation outside `[0, len]` continues along the same circle, which is
/// what the junction blends rely on.
#[derive(Debug, Clone, Copy)]
struct ArcPiece {
    center: Point,
    radius: f64,
    start_angle: f64,
    sense: f64,
    len: f64,
}

impl ArcPiece {
    /// Position and first two arc-length derivatives.
    fn eval(&self, s: f64) -> [Point; 3] {
        let phi = self.start_angle + self.sense * s / self.radius;
        let (sin, cos) = phi.sin_cos();
        let radial = Point::new(cos, sin);
        let tangent = Point::new(-sin, cos) * self.sense;
        [
            self.center + radial * self.radius,
            tangent,
            -radial / self.radius,
        ]
    }
}

/// C^∞ step `f(u) / (f(u) + f(1−u))` with `f(u) = exp(−1/u)`, and its first
/// two derivatives on `[0, 1]`. All derivatives vanish at both ends.
fn smoothstep(u: f64) -> (f64, f64, f64) {
    if u <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if u >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let v = 1.0 - u;
    let a = (-1.0 / u).exp();
    let b = (-1.0 / v).exp();
    let a1 = a / (u * u);
    let a2 = a * (1.0 / u.powi(4) - 2.0 / u.powi(3));
    let b1 = -b / (v * v);
    let b2 = b * (1.0 / v.powi(4) - 2.0 / v.powi(3));
    let d = a + b;
    let d1 = a1 + b1;
    let num1 = a1 * b - a * b1;
    let num2 = a2 * b - a * b2;
    (a / d, num1 / (d * d), (num2 * d - 2.0 * num1 * d1) / (d * d * d))
}

/// Piecewise-circular closed curve with smooth blends at the junctions.
#[derive(Debug, Clone)]
struct BlendedArcs {
    pieces: Vec<ArcPiece>,
    /// Cumulative arc length at the start of each piece.
    offsets: Vec<f64>,
    total: f64,
    /// Whether the junction at the start of each piece is blended.
    blended: Vec<bool>,
    half_window: f64,
}

impl BlendedArcs {
    fn new(pieces: Vec<ArcPiece>, blended: Vec<bool>, half_window: f64) -> Self {
        let mut offsets = Vec::with_capacity(pieces.len());
        let mut acc = 0.0;
        for p in &pieces {
            offsets.push(acc);
            acc += p.len;
        }
        Self {
            pieces,
            offsets,
            total: acc,
            blended,
            half_window,
        }
    }

    fn piece_at(&self, s: f64) -> usize {
        self.offsets.iter().rposition(|&o| o <= s).unwrap_or(0)
    }

    /// Derivatives with respect to arc length of the blended curve.
    fn eval_s(&self, s: f64) -> [Point; 3] {
        let s = s.rem_euclid(self.total);
        let h = self.half_window;
        let np = self.pieces.len();
        if h > 0.0 {
            // Junction j sits at offsets[j] between piece j-1 and piece j.
            for j in (0..np).filter(|&j| self.blended[j]) {
                let sj = self.offsets[j];
                let mut d = s - sj;
                if d > 0.5 * self.total {
                    d -= self.total;
                } else if d < -0.5 * self.total {
                    d += self.total;
                }
                if d.abs() < h {
                    let prev = &self.pieces[(j + np - 1) % np];
                    let next = &self.pieces[j];
                    let a = prev.eval(prev.len + d);
                    let b = next.eval(d);
                    let (w, w1, w2) = smoothstep((d + h) / (2.0 * h));
                    let w1 = w1 / (2.0 * h);
                    let w2 = w2 / (4.0 * h * h);
                    let diff0 = b[0] - a[0];
                    let diff1 = b[1] - a[1];
                    let diff2 = b[2] - a[2];
                    return [
                        a[0] + diff0 * w,
                        a[1] + diff0 * w1 + diff1 * w,
                        a[2] + diff0 * w2 + diff1 * (2.0 * w1) + diff2 * w,
                    ];
                }
            }
        }
        let i = self.piece_at(s);
        self.pieces[i].eval(s - self.offsets[i])
    }

    fn eval_t(&self, t: f64) -> [Point; 3] {
        let scale = self.total / TWO_PI;
        let [x, xs, xss] = self.eval_s(t * scale);
        [x, xs * scale, xss * (scale * scale)]
    }
}

#[derive(Debug, Clone)]
enum Shape {
    Circle { center: Point, radius: f64 },
    Arcs(BlendedArcs),
}

impl Shape {
    fn eval(&self, t: f64) -> [Point; 3] {
        match self {
            Shape::Circle { center, radius } => {
                let (sin, cos) = t.sin_cos();
                [
                    center + Point::new(cos, sin) * *radius,
                    Point::new(-sin, cos) * *radius,
                    Point::new(-cos, -sin) * *radius,
                ]
            }
            Shape::Arcs(arcs) => arcs.eval_t(t),
        }
    }
}

/// A closed parametric curve sampled at the trapezoidal nodes.
#[derive(Debug, Clone)]
pub struct BoundaryCurve {
    id: u64,
    shape: Arc<Shape>,
    orientation: Orientation,
    nodes: Vec<Point>,
    derivatives: Vec<Point>,
    second_derivatives: Vec<Point>,
    speeds: Vec<f64>,
    normals: Vec<Point>,
    curvatures: Vec<f64>,
    analytic_center: Option<Point>,
}

impl BoundaryCurve {
    fn sample(shape: Shape, n: usize, analytic_center: Option<Point>) -> Result<Self> {
        check_node_count(n)?;
        let shape = Arc::new(shape);
        let mut nodes = Vec::with_capacity(n);
        let mut derivatives = Vec::with_capacity(n);
        let mut second = Vec::with_capacity(n);
        let mut speeds = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut curvatures = Vec::with_capacity(n);
        for k in 0..n {
            let t = TWO_PI * k as f64 / n as f64;
            let [x, dx, ddx] = shape.eval(t);
            let speed = dx.norm();
            nodes.push(x);
            derivatives.push(dx);
            second.push(ddx);
            speeds.push(speed);
            normals.push(Point::new(dx.y, -dx.x) / speed);
            curvatures.push((dx.x * ddx.y - dx.y * ddx.x) / (speed * speed * speed));
        }
        Ok(Self {
            id: NEXT_CURVE_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            orientation: Orientation::CounterClockwise,
            nodes,
            derivatives,
            second_derivatives: second,
            speeds,
            normals,
            curvatures,
            analytic_center,
        })
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    /// `x'(t_k)`.
    pub fn derivatives(&self) -> &[Point] {
        &self.derivatives
    }

    /// `x''(t_k)`.
    pub fn second_derivatives(&self) -> &[Point] {
        &self.second_derivatives
    }

    /// Jacobians `|x'(t_k)|`.
    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    /// Unit normals; outward (away from the enclosed region) for
    /// counterclockwise curves.
    pub fn normals(&self) -> &[Point] {
        &self.normals
    }

    /// Unit tangents in the direction of traversal.
    pub fn tangents(&self) -> Vec<Point> {
        self.derivatives
            .iter()
            .zip(&self.speeds)
            .map(|(d, s)| d / *s)
            .collect()
    }

    /// Signed curvature, positive where the curve turns left.
    pub fn curvatures(&self) -> &[f64] {
        &self.curvatures
    }

    /// Trapezoidal weight in the parameter, `2π/n`.
    pub fn param_weight(&self) -> f64 {
        TWO_PI / self.len() as f64
    }

    /// Arc-length quadrature weights `w |x'(t_k)|`.
    pub fn arc_weights(&self) -> Vec<f64> {
        let w = self.param_weight();
        self.speeds.iter().map(|s| w * s).collect()
    }

    pub fn perimeter(&self) -> f64 {
        self.arc_weights().iter().sum()
    }

    /// Weighted boundary mean of nodal data.
    pub fn mean(&self, values: &[f64]) -> f64 {
        let w = self.arc_weights();
        let total: f64 = w.iter().sum();
        values.iter().zip(&w).map(|(v, w)| v * w).sum::<f64>() / total
    }

    /// Largest distance between consecutive nodes.
    pub fn max_spacing(&self) -> f64 {
        let n = self.len();
        (0..n)
            .map(|k| (self.nodes[(k + 1) % n] - self.nodes[k]).norm())
            .fold(0.0, f64::max)
    }

    /// Point on the continuous curve at parameter `t` (counterclockwise
    /// parametrisation; reversed curves map `t ↦ 2π − t`).
    pub fn point_at(&self, t: f64) -> Point {
        let t = match self.orientation {
            Orientation::CounterClockwise => t,
            Orientation::Clockwise => TWO_PI - t,
        };
        self.shape.eval(t)[0]
    }

    /// Centre for circles; `None` for other shapes.
    pub fn analytic_center(&self) -> Option<Point> {
        self.analytic_center
    }

    pub fn centroid_of_nodes(&self) -> Point {
        let w = self.arc_weights();
        let total: f64 = w.iter().sum();
        self.nodes
            .iter()
            .zip(&w)
            .fold(Point::zeros(), |acc, (x, w)| acc + x * *w)
            / total
    }

    /// The same curve traversed in the opposite direction; node `k` of the
    /// result is node `(n − k) mod n` of `self`, normals and curvatures are
    /// negated.
    pub fn reversed(&self) -> Self {
        let n = self.len();
        let idx = |k: usize| (n - k) % n;
        Self {
            id: NEXT_CURVE_ID.fetch_add(1, Ordering::Relaxed),
            shape: Arc::clone(&self.shape),
            orientation: match self.orientation {
                Orientation::CounterClockwise => Orientation::Clockwise,
                Orientation::Clockwise => Orientation::CounterClockwise,
            },
            nodes: (0..n).map(|k| self.nodes[idx(k)]).collect(),
            derivatives: (0..n).map(|k| -self.derivatives[idx(k)]).collect(),
            second_derivatives: (0..n).map(|k| self.second_derivatives[idx(k)]).collect(),
            speeds: (0..n).map(|k| self.speeds[idx(k)]).collect(),
            normals: (0..n).map(|k| -self.normals[idx(k)]).collect(),
            curvatures: (0..n).map(|k| -self.curvatures[idx(k)]).collect(),
            analytic_center: self.analytic_center,
        }
    }

    /// Winding number of the node polygon around `p`.
    pub fn winding_number(&self, p: &Point) -> i64 {
        let n = self.len();
        let mut total = 0.0;
        for k in 0..n {
            let a = self.nodes[k] - p;
            let b = self.nodes[(k + 1) % n] - p;
            total += (a.x * b.y - a.y * b.x).atan2(a.dot(&b));
        }
        (total / TWO_PI).round() as i64
    }

    /// Whether `p` lies in the region bounded by the curve.
    pub fn contains(&self, p: &Point) -> bool {
        self.winding_number(p) != 0
    }

    /// Distance from `p` to the node polygon.
    pub fn polygon_distance(&self, p: &Point) -> f64 {
        let n = self.len();
        (0..n)
            .map(|k| segment_distance(p, &self.nodes[k], &self.nodes[(k + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }

    /// A point well inside the enclosed region, used as the anchor of
    /// point-source augmentations.
    pub fn interior_anchor(&self) -> Point {
        if let Some(c) = self.analytic_center {
            return c;
        }
        let centroid = self.centroid_of_nodes();
        let mut best = (f64::NEG_INFINITY, centroid);
        if self.contains(&centroid) {
            best = (self.polygon_distance(&centroid), centroid);
        }
        let n = self.len();
        let diameter = self
            .nodes
            .iter()
            .map(|x| (x - centroid).norm())
            .fold(0.0, f64::max);
        let stride = (n / 64).max(1);
        for k in (0..n).step_by(stride) {
            let inward = match self.orientation {
                Orientation::CounterClockwise => -self.normals[k],
                Orientation::Clockwise => self.normals[k],
            };
            for frac in [0.02, 0.05, 0.1, 0.2, 0.3, 0.5] {
                let p = self.nodes[k] + inward * (frac * diameter);
                if self.contains(&p) {
                    let d = self.polygon_distance(&p);
                    if d > best.0 {
                        best = (d, p);
                    }
                }
            }
        }
        best.1
    }
}

fn segment_distance(p: &Point, a: &Point, b: &Point) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

fn check_node_count(n: usize) -> Result<()> {
    if n < MIN_NODES || n % 2 != 0 {
        return Err(Error::InvalidNodeCount(n));
    }
    Ok(())
}

/// Uniformly parametrised counterclockwise circle.
pub fn make_circle(center: Point, radius: f64, n_nodes: usize) -> Result<BoundaryCurve> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidGeometry(format!(
            "circle radius must be positive, got {radius}"
        )));
    }
    BoundaryCurve::sample(Shape::Circle { center, radius }, n_nodes, Some(center))
}

/// Default half-width of the junction blends, as a fraction of the
/// parameter period.
pub const CSHAPE_BLEND_FRACTION: f64 = 0.05;

/// C-shaped object: the annular sector `r_inner < r < r_outer` with an
/// opening of half-angle `opening_half_angle` around the positive x-axis,
/// closed by two semicircular caps.
///
/// Arc/cap junctions are tangent-continuous but have curvature jumps; each
/// is replaced by a smooth blend over a parameter window of width
/// `blend_fraction · 2π` (clamped to 45% of the shortest piece).
pub fn make_cshape(
    center: Point,
    r_inner: f64,
    r_outer: f64,
    opening_half_angle: f64,
    n_nodes: usize,
) -> Result<BoundaryCurve> {
    make_cshape_with_blend(
        center,
        r_inner,
        r_outer,
        opening_half_angle,
        n_nodes,
        CSHAPE_BLEND_FRACTION,
    )
}

pub fn make_cshape_with_blend(
    center: Point,
    r_inner: f64,
    r_outer: f64,
    opening_half_angle: f64,
    n_nodes: usize,
    blend_fraction: f64,
) -> Result<BoundaryCurve> {
    if !(r_inner > 0.0 && r_inner < r_outer) {
        return Err(Error::InvalidGeometry(format!(
            "C-shape radii must satisfy 0 < r_inner < r_outer, got {r_inner}, {r_outer}"
        )));
    }
    let alpha = opening_half_angle;
    if !(alpha > 0.0 && alpha < PI / 2.0) {
        return Err(Error::InvalidGeometry(format!(
            "C-shape opening half-angle must lie in (0, π/2), got {alpha}"
        )));
    }
    if !(0.0..0.5).contains(&blend_fraction) {
        return Err(Error::InvalidGeometry(format!(
            "blend fraction must lie in [0, 0.5), got {blend_fraction}"
        )));
    }
    let cap_r = 0.5 * (r_outer - r_inner);
    let mid_r = 0.5 * (r_outer + r_inner);
    let sweep = TWO_PI - 2.0 * alpha;
    let dir = |a: f64| Point::new(a.cos(), a.sin());
    // Start on the outer arc at angle π, run counterclockwise.
    let outer_a = ArcPiece {
        center,
        radius: r_outer,
        start_angle: PI,
        sense: 1.0,
        len: r_outer * (PI - alpha),
    };
    let bottom_cap = ArcPiece {
        center: center + dir(-alpha) * mid_r,
        radius: cap_r,
        start_angle: -alpha,
        sense: 1.0,
        len: PI * cap_r,
    };
    let inner = ArcPiece {
        center,
        radius: r_inner,
        start_angle: -alpha,
        sense: -1.0,
        len: r_inner * sweep,
    };
    let top_cap = ArcPiece {
        center: center + dir(alpha) * mid_r,
        radius: cap_r,
        start_angle: PI + alpha,
        sense: 1.0,
        len: PI * cap_r,
    };
    let outer_b = ArcPiece {
        center,
        radius: r_outer,
        start_angle: alpha,
        sense: 1.0,
        len: r_outer * (PI - alpha),
    };
    let pieces = vec![outer_a, bottom_cap, inner, top_cap, outer_b];
    let total: f64 = pieces.iter().map(|p| p.len).sum();
    let shortest = pieces.iter().map(|p| p.len).fold(f64::INFINITY, f64::min);
    let half = (0.5 * blend_fraction * total).min(0.45 * shortest);
    // The seam at angle π joins two pieces of the same circle.
    let blended = vec![false, true, true, true, true];
    let shape = Shape::Arcs(BlendedArcs::new(pieces, blended, half));
    BoundaryCurve::sample(shape, n_nodes, None)
}

/// Container and objects of a multiply connected domain.
#[derive(Debug, Clone)]
pub struct GeometryLayout {
    pub container: Option<Arc<BoundaryCurve>>,
    pub objects: Vec<Arc<BoundaryCurve>>,
}

impl GeometryLayout {
    pub fn new(container: Option<BoundaryCurve>, objects: Vec<BoundaryCurve>) -> Self {
        Self {
            container: container.map(Arc::new),
            objects: objects.into_iter().map(Arc::new).collect(),
        }
    }

    pub fn object_count(&self) -> usize {
        self.objects.len()
    }

    /// Every curve of the layout, objects first, container last.
    pub fn curves(&self) -> Vec<Arc<BoundaryCurve>> {
        let mut all = self.objects.clone();
        if let Some(c) = &self.container {
            all.push(Arc::clone(c));
        }
        all
    }

    /// Whether `p` is in the perforated domain and at least `margin` away
    /// from every curve (measured to the node polygon).
    pub fn in_fluid(&self, p: &Point, margin: f64) -> bool {
        if let Some(c) = &self.container {
            if !c.contains(p) || c.polygon_distance(p) < margin {
                return false;
            }
        }
        self.objects
            .iter()
            .all(|o| !o.contains(p) && o.polygon_distance(p) >= margin)
    }

    /// Axis-aligned box enclosing all objects.
    pub fn object_bounds(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for o in &self.objects {
            for x in o.nodes() {
                lo = lo.inf(x);
                hi = hi.sup(x);
            }
        }
        (lo, hi)
    }
}

/// Pairwise distances, perimeters and containment diagnostics.
#[derive(Debug, Clone)]
pub struct LayoutMetrics {
    /// `distances[i][j]`, symmetric, zero on the diagonal.
    pub distances: Vec<Vec<f64>>,
    pub perimeters: Vec<f64>,
    pub container_perimeter: Option<f64>,
    /// Smallest distance from an object to the container.
    pub container_clearance: Vec<f64>,
}

impl LayoutMetrics {
    pub fn min_distance(&self) -> Option<f64> {
        let n = self.distances.len();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| self.distances[i][j])
            .reduce(f64::min)
    }
}

pub fn layout_metrics(layout: &GeometryLayout) -> Result<LayoutMetrics> {
    let n = layout.objects.len();
    let mut distances = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let (a, b) = (&layout.objects[i], &layout.objects[j]);
            if a.nodes().iter().any(|x| b.contains(x)) || b.nodes().iter().any(|x| a.contains(x)) {
                return Err(Error::Overlap { first: i, second: j });
            }
            let d = min_curve_distance(a, b);
            if !(d > 0.0) {
                return Err(Error::Overlap { first: i, second: j });
            }
            distances[i][j] = d;
            distances[j][i] = d;
        }
    }
    let mut clearance = Vec::with_capacity(n);
    if let Some(c) = &layout.container {
        for (i, o) in layout.objects.iter().enumerate() {
            if !o.nodes().iter().all(|x| c.contains(x)) {
                return Err(Error::OutsideContainer(i));
            }
            let d = min_curve_distance(o, c);
            if !(d > 0.0) {
                return Err(Error::OutsideContainer(i));
            }
            clearance.push(d);
        }
    }
    Ok(LayoutMetrics {
        distances,
        perimeters: layout.objects.iter().map(|o| o.perimeter()).collect(),
        container_perimeter: layout.container.as_ref().map(|c| c.perimeter()),
        container_clearance: clearance,
    })
}

/// Minimal distance between two curves: best node pair, then alternating
/// golden-section refinement on the neighbouring parameter intervals.
pub fn min_curve_distance(a: &BoundaryCurve, b: &BoundaryCurve) -> f64 {
    let mut best = (f64::INFINITY, 0, 0);
    for (i, x) in a.nodes().iter().enumerate() {
        for (j, y) in b.nodes().iter().enumerate() {
            let d = (x - y).norm_squared();
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    let (ha, hb) = (a.param_weight(), b.param_weight());
    let mut ta = ha * best.1 as f64;
    let mut tb = hb * best.2 as f64;
    let mut current = best.0.sqrt();
    for _ in 0..200 {
        let pb = b.point_at(tb);
        ta = golden_section(|t| (a.point_at(t) - pb).norm(), ta - ha, ta + ha, 1e-12);
        let pa = a.point_at(ta);
        tb = golden_section(|t| (b.point_at(t) - pa).norm(), tb - hb, tb + hb, 1e-12);
        let d = (a.point_at(ta) - b.point_at(tb)).norm();
        let done = (current - d).abs() <= 1e-15 * current.max(1.0);
        current = current.min(d);
        if done {
            break;
        }
    }
    current
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut c = hi - GOLDEN * (hi - lo);
    let mut d = lo + GOLDEN * (hi - lo);
    let mut fc = f(c);
    let mut fd = f(d);
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - GOLDEN * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + GOLDEN * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

/// Centres of an equilateral triangle with side `side` and centroid at `centroid`,
/// the first vertex on the positive x-axis direction.
pub fn triangle_centers(centroid: Point, side: f64) -> [Point; 3] {
    let circumradius = side / 3f64.sqrt();
    let mut out = [Point::zeros(); 3];
    for (k, p) in out.iter_mut().enumerate() {
        let a = PI / 2.0 + TWO_PI * k as f64 / 3.0;
        *p = centroid + Point::new(a.cos(), a.sin()) * circumradius;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn circle_perimeter_and_first_node() {
        let c = make_circle(Point::zeros(), 10.0, 128).unwrap();
        assert_abs_diff_eq!(c.perimeter(), 20.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(c.nodes()[0].x, 10.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.nodes()[0].y, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.normals()[0].x, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.normals()[0].y, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn circle_self_convergence() {
        let a = make_circle(Point::zeros(), 1.0, 64).unwrap();
        let b = make_circle(Point::zeros(), 1.0, 128).unwrap();
        assert!((a.perimeter() - b.perimeter()).abs() <= 1e-13);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(
            make_circle(Point::zeros(), 0.0, 64),
            Err(Error::InvalidGeometry(_))
        ));
        assert!(matches!(
            make_circle(Point::zeros(), 1.0, 15),
            Err(Error::InvalidNodeCount(15))
        ));
        assert!(matches!(
            make_circle(Point::zeros(), 1.0, 14),
            Err(Error::InvalidNodeCount(14))
        ));
        assert!(make_cshape(Point::zeros(), 5.0, 3.0, 0.5, 64).is_err());
        assert!(make_cshape(Point::zeros(), 3.0, 5.0, PI / 2.0, 64).is_err());
    }

    #[test]
    fn circle_curvature_and_normals() {
        let c = make_circle(Point::new(1.0, -2.0), 2.5, 64).unwrap();
        for ((k, n), t) in c.curvatures().iter().zip(c.normals()).zip(c.tangents()) {
            assert_abs_diff_eq!(*k, 1.0 / 2.5, epsilon = 1e-10);
            assert!((n.norm() - 1.0).abs() <= 1e-12);
            assert!(n.dot(&t).abs() <= 1e-12);
        }
    }

    #[test]
    fn reversal_negates_normals_exactly() {
        let c = make_cshape(Point::zeros(), 3.0, 5.0, PI / 6.0, 128).unwrap();
        let r = c.reversed();
        assert_eq!(r.orientation(), Orientation::Clockwise);
        let n = c.len();
        for k in 0..n {
            let j = (n - k) % n;
            assert_eq!(r.normals()[k], -c.normals()[j]);
            assert_eq!(r.nodes()[k], c.nodes()[j]);
        }
        assert_eq!(r.reversed().normals(), c.normals());
    }

    // Closed-form arc-length sum of the four pieces: 5π + 25π/3 + 2π.
    #[test]
    fn cshape_perimeter_close_to_piece_sum() {
        let c = make_cshape(Point::zeros(), 3.0, 5.0, PI / 6.0, 256).unwrap();
        let exact = 46.0 * PI / 3.0;
        assert!(((c.perimeter() - exact) / exact).abs() < 0.01);
        let unblended =
            make_cshape_with_blend(Point::zeros(), 3.0, 5.0, PI / 6.0, 1024, 0.0).unwrap();
        assert!(((unblended.perimeter() - exact) / exact).abs() < 1e-9);
    }

    #[test]
    fn cshape_is_closed_smooth_and_simple() {
        let c = make_cshape(Point::zeros(), 3.0, 5.0, PI / 6.0, 256).unwrap();
        // body point has winding 1, the hole and the opening have winding 0
        assert_eq!(c.winding_number(&Point::new(-4.0, 0.0)), 1);
        assert_eq!(c.winding_number(&Point::new(0.0, 0.0)), 0);
        assert_eq!(c.winding_number(&Point::new(4.0, 0.0)), 0);
        for (n, t) in c.normals().iter().zip(c.tangents()) {
            assert!((n.norm() - 1.0).abs() <= 1e-12);
            assert!(n.dot(&t).abs() <= 1e-12);
        }
        // periodic closure: x(2π⁻) → x(0)
        let end = c.point_at(2.0 * PI - 1e-9);
        assert!((end - c.nodes()[0]).norm() < 1e-6);
        let anchor = c.interior_anchor();
        assert!(c.contains(&anchor));
        assert!(c.polygon_distance(&anchor) > 0.5);
    }

    #[test]
    fn cshape_near_half_annulus_limit() {
        let c = make_cshape(Point::zeros(), 3.0, 5.0, PI / 2.0 - 1e-3, 256).unwrap();
        assert_eq!(c.winding_number(&Point::new(-4.0, 0.0)), 1);
        assert_eq!(c.winding_number(&Point::new(4.0, 0.0)), 0);
        assert!(c.perimeter().is_finite());
    }

    #[test]
    fn cshape_curvature_is_continuous() {
        // neighbouring-node curvature differences shrink with refinement
        let max_jump = |n: usize| {
            let c = make_cshape(Point::zeros(), 3.0, 5.0, PI / 6.0, n).unwrap();
            let k = c.curvatures();
            (0..n).map(|i| (k[(i + 1) % n] - k[i]).abs()).fold(0.0, f64::max)
        };
        let (coarse, fine) = (max_jump(2048), max_jump(4096));
        assert!(coarse < 0.15, "curvature jump {coarse}");
        assert!(fine < 0.6 * coarse, "{fine} vs {coarse}");
    }

    #[test]
    fn two_circle_distance() {
        let layout = GeometryLayout::new(
            None,
            vec![
                make_circle(Point::new(0.0, 0.0), 1.0, 64).unwrap(),
                make_circle(Point::new(4.0, 0.0), 1.0, 64).unwrap(),
            ],
        );
        let m = layout_metrics(&layout).unwrap();
        assert_abs_diff_eq!(m.distances[0][1], 2.0, epsilon = 1e-12);
        assert_eq!(m.distances[0][1].to_bits(), m.distances[1][0].to_bits());
    }

    #[test]
    fn distance_refinement_between_nodes() {
        // offsets chosen so that no node pair realises the minimum
        let layout = GeometryLayout::new(
            None,
            vec![
                make_circle(Point::new(0.0, 0.0), 1.0, 16).unwrap(),
                make_circle(Point::new(2.3, 1.7), 0.7, 18).unwrap(),
            ],
        );
        let m = layout_metrics(&layout).unwrap();
        let exact = (2.3f64 * 2.3 + 1.7 * 1.7).sqrt() - 1.7;
        assert_abs_diff_eq!(m.distances[0][1], exact, epsilon = 1e-12);
    }

    #[test]
    fn overlapping_triangle_is_rejected() {
        let centers = triangle_centers(Point::zeros(), 1.2);
        let objects = centers
            .iter()
            .map(|c| make_circle(*c, 1.0, 64).unwrap())
            .collect();
        let layout = GeometryLayout::new(None, objects);
        assert!(matches!(
            layout_metrics(&layout),
            Err(Error::Overlap { .. })
        ));
    }

    #[test]
    fn single_object_perimeter() {
        let layout = GeometryLayout::new(None, vec![make_circle(Point::zeros(), 2.0, 64).unwrap()]);
        let m = layout_metrics(&layout).unwrap();
        assert_abs_diff_eq!(m.perimeters[0], 4.0 * PI, epsilon = 1e-12);
    }

    #[test]
    fn object_outside_container_is_rejected() {
        let layout = GeometryLayout::new(
            Some(make_circle(Point::zeros(), 2.0, 64).unwrap()),
            vec![make_circle(Point::new(1.5, 0.0), 1.0, 64).unwrap()],
        );
        assert!(matches!(layout_metrics(&layout), Err(Error::OutsideContainer(0))));
    }

    #[test]
    fn triangle_centers_have_requested_side() {
        let c = triangle_centers(Point::zeros(), 3.0);
        for i in 0..3 {
            assert_abs_diff_eq!((c[i] - c[(i + 1) % 3]).norm(), 3.0, epsilon = 1e-12);
        }
        let centroid = (c[0] + c[1] + c[2]) / 3.0;
        assert!(centroid.norm() < 1e-12);
    }
}
