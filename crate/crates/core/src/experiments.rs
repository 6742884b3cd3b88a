//! Experiment drivers behind the CLI: build problems from configs, run the
//! solvers, and render CSV files with a reproducibility header.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bvp::{BoundaryCondition, Discretization, ProblemSpec};
use crate::config::{condition_from_section, resolve_curve, ConfigFile, DatumExpr, ExperimentKind, Section};
use crate::error::{Error, Result};
use crate::geometry::{make_circle, make_cshape, triangle_centers, BoundaryCurve, GeometryLayout, Point};
use crate::potentials::{evaluate_field, HarmonicField, Want};
use crate::projection::{self, IterationKind, ProjectorMatrix, SubspaceBasis};
use crate::reflections::{
    estimate_contraction_renormalized, linear_fit, probe_cloud, run_reflections, ConvergenceReport, ReflectionForm,
    ReflectionOptions, Status,
};

pub const ERROR_COLUMNS: [&str; 4] = ["iter", "error_seq", "error_par", "error_avgpar"];
pub const SWEEP_COLUMNS: [&str; 4] = ["R", "seq_coef", "par_coef", "avgpar_coef"];
pub const PROJECTION_COLUMNS: [&str; 3] = ["iter", "error_alternating", "error_averaged"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FormChoice {
    Seq,
    Par,
    Avg,
}

impl FormChoice {
    pub const ALL: [FormChoice; 3] = [FormChoice::Seq, FormChoice::Par, FormChoice::Avg];

    pub fn form(self, objects: usize) -> ReflectionForm {
        match self {
            Self::Seq => ReflectionForm::Sequential,
            Self::Par => ReflectionForm::Parallel,
            Self::Avg => ReflectionForm::averaged(objects),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Seq => "seq",
            Self::Par => "par",
            Self::Avg => "avg",
        }
    }

    fn column(self) -> usize {
        match self {
            Self::Seq => 0,
            Self::Par => 1,
            Self::Avg => 2,
        }
    }
}

impl FromStr for FormChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "seq" | "sequential" => Ok(Self::Seq),
            "par" | "parallel" => Ok(Self::Par),
            "avg" | "averaged" | "avgpar" => Ok(Self::Avg),
            other => Err(format!("unknown form `{other}` (expected seq, par or avg)")),
        }
    }
}

/// Command-line overrides; `None` falls back to the config, then to the
/// experiment's default.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub max_cycles: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
    pub form: Option<FormChoice>,
    pub expect_divergence: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub file: ConfigFile,
    pub overrides: Overrides,
}

impl ExperimentConfig {
    /// `kind` (from the CLI subcommand) must agree with `[experiment] kind`
    /// when both are present.
    pub fn new(kind: Option<ExperimentKind>, file: ConfigFile, overrides: Overrides) -> Result<Self> {
        let declared = match file.section("experiment") {
            Some(s) => s.get::<String>("kind")?.map(|k| {
                k.parse::<ExperimentKind>().map_err(|m| Error::Config {
                    line: s.entry("kind").unwrap().line,
                    message: m,
                })
            }),
            None => None,
        }
        .transpose()?;
        let kind = match (kind, declared) {
            (Some(a), Some(b)) if a != b => {
                return Err(Error::Config {
                    line: file.section("experiment").unwrap().entry("kind").unwrap().line,
                    message: format!("config declares `{}` but `{}` was requested", b.name(), a.name()),
                })
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => {
                return Err(Error::Config {
                    line: 0,
                    message: "no experiment kind given".into(),
                })
            }
        };
        Ok(Self { kind, file, overrides })
    }

    fn experiment_section(&self) -> Option<&Section> {
        self.file.section("experiment")
    }

    pub fn seed(&self) -> Result<u64> {
        self.resolve(self.overrides.seed, "seed", 0)
    }

    pub fn max_cycles(&self, default: usize) -> Result<usize> {
        self.resolve(self.overrides.max_cycles, "max_cycles", default)
    }

    pub fn tol(&self, default: f64) -> Result<f64> {
        self.resolve(self.overrides.tol, "tol", default)
    }

    pub fn forms(&self) -> Result<Vec<FormChoice>> {
        if let Some(f) = self.overrides.form {
            return Ok(vec![f]);
        }
        match self.experiment_section().and_then(|s| s.entry("form")) {
            Some(e) => Ok(vec![e.value.parse().map_err(|m| Error::Config { line: e.line, message: m })?]),
            None => Ok(FormChoice::ALL.to_vec()),
        }
    }

    fn resolve<T: FromStr>(&self, cli: Option<T>, key: &str, default: T) -> Result<T> {
        if let Some(v) = cli {
            return Ok(v);
        }
        match self.experiment_section() {
            Some(s) => s.get_or(key, default),
            None => Ok(default),
        }
    }

    fn section_or_empty(&self, kind: &str) -> Section {
        self.file.section(kind).cloned().unwrap_or(Section {
            kind: kind.to_string(),
            name: None,
            line: 0,
            entries: Vec::new(),
        })
    }
}

/// How a run ended, for the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    /// Experiment finished; convergence is not the point (sweeps, demos).
    Completed,
    /// Every reflection run converged.
    Converged,
    /// At least one run diverged or stopped at the cycle limit.
    NotConverged,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub outcome: Outcome,
    pub files: Vec<PathBuf>,
    /// Human-readable status lines.
    pub lines: Vec<String>,
}

impl RunOutput {
    /// 0 success, 2 diverged or (with `expect_divergence`) converged
    /// unexpectedly.
    pub fn exit_code(&self, expect_divergence: bool) -> i32 {
        match (self.outcome, expect_divergence) {
            (Outcome::Completed, _) => 0,
            (Outcome::Converged, false) | (Outcome::NotConverged, true) => 0,
            (Outcome::Converged, true) | (Outcome::NotConverged, false) => 2,
        }
    }
}

/// Comment header written at the top of every CSV.
#[derive(Debug, Clone, Default)]
pub struct CsvHeader {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
    pub nodes: Vec<usize>,
    pub tol: Option<f64>,
    pub max_cycles: Option<usize>,
    pub extra: Vec<(String, String)>,
}

impl CsvHeader {
    fn render(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# reflect2d {}", self.kind).unwrap();
        writeln!(s, "# config_sha256: {}", self.config_hash).unwrap();
        writeln!(s, "# seed: {}", self.seed).unwrap();
        if !self.nodes.is_empty() {
            let nodes: Vec<String> = self.nodes.iter().map(|n| n.to_string()).collect();
            writeln!(s, "# nodes: {}", nodes.join(" ")).unwrap();
        }
        if let Some(t) = self.tol {
            writeln!(s, "# tol: {}", num(t)).unwrap();
        }
        if let Some(m) = self.max_cycles {
            writeln!(s, "# max_cycles: {m}").unwrap();
        }
        for (k, v) in &self.extra {
            writeln!(s, "# {k}: {v}").unwrap();
        }
        s
    }
}

/// 17 significant digits; `nan` for missing values.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

/// Render a CSV: header comments, column line, rows.
pub fn render_csv(header: &CsvHeader, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut s = header.render();
    s.push_str(&columns.join(","));
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

/// Error-table rows `iter, seq, par, avg` starting at iteration 0, padded
/// with `nan` where a run stopped early or a form was not run.
pub fn error_rows(series: &[Option<&[f64]>; 3]) -> Vec<Vec<String>> {
    let len = series.iter().flatten().map(|s| s.len()).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let mut row = vec![k.to_string()];
            row.extend(
                series
                    .iter()
                    .map(|s| num(s.and_then(|s| s.get(k).copied()).unwrap_or(f64::NAN))),
            );
            row
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FormRun {
    pub choice: FormChoice,
    pub report: ConvergenceReport,
}

/// Run the selected forms against a common reference, in the fixed order
/// seq, par, avg.
pub fn run_forms(
    disc: &Discretization,
    choices: &[FormChoice],
    opts: &ReflectionOptions,
    reference: Option<&HarmonicField>,
) -> Result<Vec<FormRun>> {
    let n = disc.object_count();
    FormChoice::ALL
        .iter()
        .filter(|c| choices.contains(c))
        .map(|&choice| {
            let (_, report) = run_reflections(disc, choice.form(n), opts, reference)?;
            Ok(FormRun { choice, report })
        })
        .collect()
}

fn error_series<'a>(runs: &'a [FormRun]) -> [Option<&'a [f64]>; 3] {
    let mut out: [Option<&[f64]>; 3] = [None; 3];
    for r in runs {
        out[r.choice.column()] = Some(&r.report.errors);
    }
    out
}

fn status_line(prefix: &str, run: &FormRun) -> String {
    format!(
        "{prefix}{}: {} after {} cycles, error {:.3e}, identity residual {:.2e}",
        run.choice.name(),
        run.report.status,
        run.report.cycles,
        run.report.final_error,
        run.report.max_correction_residual
    )
}

// ---------------------------------------------------------------------------
// Triangle configuration

#[derive(Debug, Clone)]
pub struct TriangleParams {
    pub radius: f64,
    /// Center-to-center distances.
    pub sides: Vec<f64>,
    pub n_nodes: usize,
    pub container_radius: f64,
    pub container_nodes: usize,
    pub datum: String,
}

impl Default for TriangleParams {
    fn default() -> Self {
        Self {
            radius: 0.5,
            sides: vec![1.05, 4.0, 8.0],
            n_nodes: 128,
            container_radius: 10.0,
            container_nodes: 256,
            datum: "1".into(),
        }
    }
}

impl TriangleParams {
    pub fn from_section(s: &Section) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            radius: s.get_or("radius", d.radius)?,
            sides: s.get_list("sides")?.unwrap_or(d.sides),
            n_nodes: s.get_or("n_nodes", d.n_nodes)?,
            container_radius: s.get_or("container_radius", d.container_radius)?,
            container_nodes: s.get_or("container_nodes", d.container_nodes)?,
            datum: s.get_or("datum", d.datum)?,
        })
    }
}

/// Three equal disks on an equilateral triangle centered at the origin,
/// Dirichlet data, inside a circular container.
pub fn triangle_problem(p: &TriangleParams, side: f64) -> Result<ProblemSpec> {
    let datum = DatumExpr::parse(&p.datum).map_err(Error::InvalidParameter)?;
    let mut objects = Vec::new();
    let mut conditions = Vec::new();
    for c in triangle_centers(Point::zeros(), side) {
        let curve = make_circle(c, p.radius, p.n_nodes)?;
        conditions.push(BoundaryCondition::Dirichlet(
            datum.sample(&curve, &c).map_err(Error::InvalidParameter)?,
        ));
        objects.push(curve);
    }
    let container = make_circle(Point::zeros(), p.container_radius, p.container_nodes)?;
    ProblemSpec::new(GeometryLayout::new(Some(container), objects), conditions)
}

// ---------------------------------------------------------------------------
// Disk + C-shape configuration

#[derive(Debug, Clone)]
pub struct DivergenceParams {
    pub disk_radius: f64,
    pub disk_nodes: usize,
    pub disk_datum: String,
    pub r_inner: f64,
    pub r_outer: f64,
    pub half_angle: f64,
    pub cshape_nodes: usize,
    pub cshape_datum: String,
    pub container_radius: f64,
    pub container_nodes: usize,
}

impl Default for DivergenceParams {
    fn default() -> Self {
        Self {
            disk_radius: 2.0,
            disk_nodes: 128,
            disk_datum: "1".into(),
            r_inner: 3.0,
            r_outer: 5.0,
            half_angle: PI / 6.0,
            cshape_nodes: 512,
            cshape_datum: "cos(theta)".into(),
            container_radius: 10.0,
            container_nodes: 256,
        }
    }
}

impl DivergenceParams {
    pub fn from_section(s: &Section) -> Result<Self> {
        let d = Self::default();
        Ok(Self {
            disk_radius: s.get_or("disk_radius", d.disk_radius)?,
            disk_nodes: s.get_or("disk_nodes", d.disk_nodes)?,
            disk_datum: s.get_or("disk_datum", d.disk_datum)?,
            r_inner: s.get_or("r_inner", d.r_inner)?,
            r_outer: s.get_or("r_outer", d.r_outer)?,
            half_angle: match s.get::<f64>("half_angle_deg")? {
                Some(deg) => deg.to_radians(),
                None => d.half_angle,
            },
            cshape_nodes: s.get_or("cshape_nodes", d.cshape_nodes)?,
            cshape_datum: s.get_or("cshape_datum", d.cshape_datum)?,
            container_radius: s.get_or("container_radius", d.container_radius)?,
            container_nodes: s.get_or("container_nodes", d.container_nodes)?,
        })
    }
}

/// Dirichlet disk at the origin enclosed by a Neumann C-shape opening
/// toward +x, inside a circular container.
pub fn divergence_problem(p: &DivergenceParams) -> Result<ProblemSpec> {
    let o = Point::zeros();
    let disk = make_circle(o, p.disk_radius, p.disk_nodes)?;
    let cshape = make_cshape(o, p.r_inner, p.r_outer, p.half_angle, p.cshape_nodes)?;
    let sample = |expr: &str, c: &BoundaryCurve| -> Result<Vec<f64>> {
        DatumExpr::parse(expr)
            .and_then(|e| e.sample(c, &o))
            .map_err(Error::InvalidParameter)
    };
    let conditions = vec![
        BoundaryCondition::Dirichlet(sample(&p.disk_datum, &disk)?),
        BoundaryCondition::Neumann(sample(&p.cshape_datum, &cshape)?),
    ];
    let container = make_circle(o, p.container_radius, p.container_nodes)?;
    ProblemSpec::new(GeometryLayout::new(Some(container), vec![disk, cshape]), conditions)
}

// ---------------------------------------------------------------------------
// Exterior distance sweep

#[derive(Debug, Clone)]
pub struct SweepParams {
    /// 2 (on the x axis) or 3 (equilateral triangle).
    pub objects: usize,
    pub radius: f64,
    pub n_nodes: usize,
    /// Center-to-center distances.
    pub distances: Vec<f64>,
    pub cycles: usize,
    pub discard: usize,
    /// Number of largest distances entering the slope fit.
    pub fit_count: usize,
    pub datum: String,
}

impl Default for SweepParams {
    fn default() -> Self {
        Self {
            objects: 3,
            radius: 1.0,
            n_nodes: 64,
            distances: vec![2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0],
            cycles: 40,
            discard: 15,
            fit_count: 5,
            datum: "cos(theta)".into(),
        }
    }
}

impl SweepParams {
    pub fn from_section(s: &Section) -> Result<Self> {
        let d = Self::default();
        let p = Self {
            objects: s.get_or("objects", d.objects)?,
            radius: s.get_or("radius", d.radius)?,
            n_nodes: s.get_or("n_nodes", d.n_nodes)?,
            distances: s.get_list("distances")?.unwrap_or(d.distances),
            cycles: s.get_or("cycles", d.cycles)?,
            discard: s.get_or("discard", d.discard)?,
            fit_count: s.get_or("fit_count", d.fit_count)?,
            datum: s.get_or("datum", d.datum)?,
        };
        if !(p.objects == 2 || p.objects == 3) {
            return Err(Error::Config {
                line: s.entry("objects").map_or(s.line, |e| e.line),
                message: "`objects` must be 2 or 3".into(),
            });
        }
        Ok(p)
    }
}

/// Equal disks without a container, Neumann data in the polar angle about
/// each disk's own center.
pub fn sweep_problem(p: &SweepParams, distance: f64) -> Result<ProblemSpec> {
    let centers: Vec<Point> = match p.objects {
        2 => vec![Point::new(-distance / 2.0, 0.0), Point::new(distance / 2.0, 0.0)],
        3 => triangle_centers(Point::zeros(), distance).to_vec(),
        n => return Err(Error::InvalidParameter(format!("sweep supports 2 or 3 objects, got {n}"))),
    };
    let datum = DatumExpr::parse(&p.datum).map_err(Error::InvalidParameter)?;
    let mut objects = Vec::new();
    let mut conditions = Vec::new();
    for c in centers {
        let curve = make_circle(c, p.radius, p.n_nodes)?;
        conditions.push(BoundaryCondition::Neumann(
            datum.sample(&curve, &c).map_err(Error::InvalidParameter)?,
        ));
        objects.push(curve);
    }
    ProblemSpec::new(GeometryLayout::new(None, objects), conditions)
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    /// `(distance, [K_seq, K_par, K_avg])`, `nan` for forms not run.
    pub rows: Vec<(f64, [f64; 3])>,
    pub slopes: [f64; 3],
    pub node_counts: Vec<usize>,
}

/// Log–log least-squares slopes of each column over the `fit_count`
/// largest distances.
pub fn sweep_slopes(rows: &[(f64, [f64; 3])], fit_count: usize) -> [f64; 3] {
    let mut sorted: Vec<&(f64, [f64; 3])> = rows.iter().collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tail = &sorted[sorted.len().saturating_sub(fit_count)..];
    std::array::from_fn(|c| {
        let pts: Vec<(f64, f64)> = tail
            .iter()
            .filter(|(_, k)| k[c].is_finite() && k[c] > 0.0)
            .map(|(l, k)| (l.ln(), k[c].ln()))
            .collect();
        if pts.len() < 2 {
            f64::NAN
        } else {
            linear_fit(&pts).0
        }
    })
}

pub fn run_sweep(p: &SweepParams, choices: &[FormChoice]) -> Result<SweepResult> {
    let mut rows = Vec::new();
    let mut node_counts = Vec::new();
    for &l in &p.distances {
        let disc = Discretization::new(sweep_problem(p, l)?)?;
        node_counts = disc.node_counts();
        let mut ks = [f64::NAN; 3];
        for &c in choices {
            ks[c.column()] = estimate_contraction_renormalized(&disc, c.form(p.objects), p.cycles, p.discard)?.k;
        }
        rows.push((l, ks));
    }
    let slopes = sweep_slopes(&rows, p.fit_count);
    Ok(SweepResult {
        rows,
        slopes,
        node_counts,
    })
}

// ---------------------------------------------------------------------------
// Projection demo

#[derive(Debug, Clone)]
pub struct ProjectionParams {
    pub ambient: usize,
    pub dims: Vec<usize>,
    pub common: usize,
    pub cycles: usize,
    /// If set, use lines in ℝ² at these angles (degrees) instead of random
    /// subspaces.
    pub line_angles_deg: Option<Vec<f64>>,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        Self {
            ambient: 8,
            dims: vec![5, 5, 6],
            common: 2,
            cycles: 50,
            line_angles_deg: None,
        }
    }
}

impl ProjectionParams {
    pub fn from_section(s: &Section) -> Result<Self> {
        let d = Self::default();
        let dims = match s.get_list("dims")? {
            Some(v) => v.iter().map(|&x| x as usize).collect(),
            None => d.dims,
        };
        Ok(Self {
            ambient: s.get_or("ambient", d.ambient)?,
            dims,
            common: s.get_or("common", d.common)?,
            cycles: s.get_or("cycles", d.cycles)?,
            line_angles_deg: s.get_list("line_angles_deg")?,
        })
    }
}

/// Alternating and equal-weight averaged iterations from a random start;
/// errors against the intersection oracle, starting at iteration 0.
pub fn run_projection_demo(p: &ProjectionParams, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases: Vec<SubspaceBasis> = match &p.line_angles_deg {
        Some(angles) => angles.iter().map(|a| projection::line(a.to_radians())).collect(),
        None => projection::random_instance(p.ambient, &p.dims, p.common, &mut rng)?,
    };
    let projectors: Vec<ProjectorMatrix> = bases.iter().map(projection::orth_projector).collect();
    let n = bases[0].ambient();
    let v = DVector::from_iterator(n, projection::random_matrix(n, 1, &mut rng).iter().copied());
    let limit = projection::intersection_of_projectors(&projectors)?.0 * &v;
    let e0 = (&v - &limit).norm();
    let weights = vec![1.0 / projectors.len() as f64; projectors.len()];
    let mut out = Vec::new();
    for kind in [IterationKind::Alternating, IterationKind::Averaged(weights)] {
        let r = projection::iterate(&kind, &projectors, &v, p.cycles)?;
        let mut e = vec![e0];
        e.extend(r.errors);
        out.push(e);
    }
    let avg = out.pop().unwrap();
    Ok((out.pop().unwrap(), avg))
}

// ---------------------------------------------------------------------------
// Generic problems from config sections

/// Problem described by `[container]` and `[object]` sections.
pub fn problem_from_config(file: &ConfigFile) -> Result<ProblemSpec> {
    let mut geometries: HashMap<String, &Section> = HashMap::new();
    for g in file.sections("geometry") {
        let name = g.name.clone().ok_or(Error::Config {
            line: g.line,
            message: "geometry sections need a name: [geometry NAME]".into(),
        })?;
        if geometries.insert(name.clone(), g).is_some() {
            return Err(Error::Config {
                line: g.line,
                message: format!("duplicate geometry `{name}`"),
            });
        }
    }
    let container = match file.section("container") {
        Some(s) => Some(resolve_curve(s, &geometries)?.curve),
        None => None,
    };
    let mut objects = Vec::new();
    let mut conditions = Vec::new();
    for s in file.sections("object") {
        let nc = resolve_curve(s, &geometries)?;
        conditions.push(condition_from_section(s, &nc)?);
        objects.push(nc.curve);
    }
    if objects.is_empty() {
        return Err(Error::Config {
            line: 0,
            message: "no [object] sections".into(),
        });
    }
    ProblemSpec::new(GeometryLayout::new(container, objects), conditions)
}

// ---------------------------------------------------------------------------
// Driver

fn header(cfg: &ExperimentConfig, seed: u64, nodes: Vec<usize>) -> CsvHeader {
    CsvHeader {
        kind: cfg.kind.name().into(),
        config_hash: cfg.file.hash.clone(),
        seed,
        nodes,
        ..Default::default()
    }
}

/// Name of the CSV for one triangle side, e.g. `triangle_l1.05.csv`.
pub fn triangle_file_name(side: f64) -> String {
    format!("triangle_l{side}.csv")
}

/// Run an experiment and write its files into `out_dir`. Nothing is
/// written unless every computation succeeds.
pub fn run_config(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunOutput> {
    let seed = cfg.seed()?;
    let mut files: Vec<(String, String)> = Vec::new();
    let mut lines = Vec::new();
    let outcome;
    match cfg.kind {
        ExperimentKind::Solve => {
            let disc = Discretization::new(problem_from_config(&cfg.file)?)?;
            let direct = disc.solve_direct()?;
            let probes = probe_cloud(disc.problem().layout(), 200, seed)?;
            let values = evaluate_field(&direct.field, &probes, Want::Value)?.values;
            let mut h = header(cfg, seed, disc.node_counts());
            h.extra.push(("relative_residual".into(), num(direct.relative_residual)));
            h.extra.push(("condition_estimate".into(), num(direct.condition)));
            for (i, c) in direct.constants.iter().enumerate() {
                if let Some(c) = c {
                    h.extra.push((format!("constant_{i}"), num(*c)));
                    lines.push(format!("object {i}: constant {c:.12e}"));
                }
            }
            lines.push(format!(
                "direct solve: relative residual {:.2e}, condition estimate {:.2e}",
                direct.relative_residual, direct.condition
            ));
            let rows: Vec<Vec<String>> = probes
                .iter()
                .zip(&values)
                .map(|(p, u)| vec![num(p.x), num(p.y), num(*u)])
                .collect();
            files.push(("solution.csv".into(), render_csv(&h, &["x", "y", "u"], &rows)));
            outcome = Outcome::Completed;
        }
        ExperimentKind::Reflect => {
            let disc = Discretization::new(problem_from_config(&cfg.file)?)?;
            let direct = disc.solve_direct()?;
            let opts = ReflectionOptions {
                max_cycles: cfg.max_cycles(100)?,
                tol: cfg.tol(1e-8)?,
                seed,
                ..Default::default()
            };
            let runs = run_forms(&disc, &cfg.forms()?, &opts, Some(&direct.field))?;
            let mut h = header(cfg, seed, disc.node_counts());
            h.tol = Some(opts.tol);
            h.max_cycles = Some(opts.max_cycles);
            for r in &runs {
                h.extra.push((format!("status_{}", r.choice.name()), r.report.status.to_string()));
                lines.push(status_line("", r));
            }
            files.push(("reflect.csv".into(), render_csv(&h, &ERROR_COLUMNS, &error_rows(&error_series(&runs)))));
            outcome = if runs.iter().all(|r| r.report.status == Status::Converged) {
                Outcome::Converged
            } else {
                Outcome::NotConverged
            };
        }
        ExperimentKind::TriangleConvergence => {
            let p = TriangleParams::from_section(&cfg.section_or_empty("triangle"))?;
            let opts = ReflectionOptions {
                max_cycles: cfg.max_cycles(100)?,
                tol: cfg.tol(1e-10)?,
                run_to_completion: true,
                seed,
                ..Default::default()
            };
            let forms = cfg.forms()?;
            for &side in &p.sides {
                let disc = Discretization::new(triangle_problem(&p, side)?)?;
                let direct = disc.solve_direct()?;
                let runs = run_forms(&disc, &forms, &opts, Some(&direct.field))?;
                let mut h = header(cfg, seed, disc.node_counts());
                h.tol = Some(opts.tol);
                h.max_cycles = Some(opts.max_cycles);
                h.extra.push(("side".into(), num(side)));
                h.extra.push(("radius".into(), num(p.radius)));
                for r in &runs {
                    h.extra.push((format!("status_{}", r.choice.name()), r.report.status.to_string()));
                    lines.push(status_line(&format!("l={side} "), r));
                }
                files.push((
                    triangle_file_name(side),
                    render_csv(&h, &ERROR_COLUMNS, &error_rows(&error_series(&runs))),
                ));
            }
            outcome = Outcome::Completed;
        }
        ExperimentKind::DivergenceCase => {
            let p = DivergenceParams::from_section(&cfg.section_or_empty("divergence"))?;
            let disc = Discretization::new(divergence_problem(&p)?)?;
            let direct = disc.solve_direct()?;
            let opts = ReflectionOptions {
                max_cycles: cfg.max_cycles(200)?,
                tol: cfg.tol(1e-6)?,
                seed,
                ..Default::default()
            };
            let runs = run_forms(&disc, &cfg.forms()?, &opts, Some(&direct.field))?;
            let mut h = header(cfg, seed, disc.node_counts());
            h.tol = Some(opts.tol);
            h.max_cycles = Some(opts.max_cycles);
            for r in &runs {
                h.extra.push((format!("status_{}", r.choice.name()), r.report.status.to_string()));
                lines.push(status_line("", r));
            }
            files.push(("divergence.csv".into(), render_csv(&h, &ERROR_COLUMNS, &error_rows(&error_series(&runs)))));
            outcome = if runs.iter().any(|r| r.report.status == Status::Converged) {
                Outcome::Converged
            } else {
                Outcome::NotConverged
            };
        }
        ExperimentKind::DistanceSweep => {
            let p = SweepParams::from_section(&cfg.section_or_empty("sweep"))?;
            let res = run_sweep(&p, &cfg.forms()?)?;
            let mut h = header(cfg, seed, res.node_counts.clone());
            h.extra.push(("objects".into(), p.objects.to_string()));
            h.extra.push(("radius".into(), num(p.radius)));
            h.extra.push(("cycles".into(), format!("{} (first {} discarded)", p.cycles, p.discard)));
            let slopes: Vec<String> = res.slopes.iter().map(|s| num(*s)).collect();
            h.extra.push((format!("loglog_slopes_{}_largest", p.fit_count), slopes.join(" ")));
            let rows: Vec<Vec<String>> = res
                .rows
                .iter()
                .map(|(l, k)| vec![num(*l), num(k[0]), num(k[1]), num(k[2])])
                .collect();
            lines.push(format!(
                "log-log slopes (seq, par, avg): {:.3} {:.3} {:.3}",
                res.slopes[0], res.slopes[1], res.slopes[2]
            ));
            files.push(("sweep.csv".into(), render_csv(&h, &SWEEP_COLUMNS, &rows)));
            outcome = Outcome::Completed;
        }
        ExperimentKind::ProjectionDemo => {
            let p = ProjectionParams::from_section(&cfg.section_or_empty("projection"))?;
            let (alt, avg) = run_projection_demo(&p, seed)?;
            let mut h = header(cfg, seed, Vec::new());
            match &p.line_angles_deg {
                Some(a) => h.extra.push(("line_angles_deg".into(), format!("{a:?}"))),
                None => {
                    h.extra.push(("ambient".into(), p.ambient.to_string()));
                    h.extra.push(("dims".into(), format!("{:?}", p.dims)));
                    h.extra.push(("common".into(), p.common.to_string()));
                }
            }
            let rows: Vec<Vec<String>> = (0..alt.len())
                .map(|k| vec![k.to_string(), num(alt[k]), num(avg[k])])
                .collect();
            lines.push(format!(
                "final errors: alternating {:.3e}, averaged {:.3e}",
                alt.last().unwrap(),
                avg.last().unwrap()
            ));
            files.push(("projection.csv".into(), render_csv(&h, &PROJECTION_COLUMNS, &rows)));
            outcome = Outcome::Completed;
        }
    }
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (name, text) in files {
        let path = out_dir.join(name);
        fs::write(&path, text)?;
        written.push(path);
    }
    Ok(RunOutput {
        outcome,
        files: written,
        lines,
    })
}

// ---------------------------------------------------------------------------
// Plot data

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvSchema {
    Errors,
    Sweep,
    Projection,
}

#[derive(Debug, Clone)]
pub struct PlotData {
    pub schema: CsvSchema,
    pub data: String,
    pub script: String,
    /// Fitted log–log slopes for sweep files.
    pub slopes: Option<[f64; 3]>,
}

/// Convert CSV text into whitespace-separated data and a gnuplot script
/// that reads `data_file`.
pub fn plot_data(csv: &str, data_file: &str) -> Result<PlotData> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
    let columns: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::UnknownSchema("empty CSV".into()))?
        .split(',')
        .collect();
    let schema = if columns == ERROR_COLUMNS {
        CsvSchema::Errors
    } else if columns == SWEEP_COLUMNS {
        CsvSchema::Sweep
    } else if columns == PROJECTION_COLUMNS {
        CsvSchema::Projection
    } else {
        return Err(Error::UnknownSchema(columns.join(",")));
    };
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, l) in lines.enumerate() {
        let row = l
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::UnknownSchema(format!("non-numeric data row {}", i + 1)))?;
        if row.len() != columns.len() {
            return Err(Error::UnknownSchema(format!("data row {} has {} fields", i + 1, row.len())));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::UnknownSchema("CSV has no data rows".into()));
    }
    let mut data = format!("# {}\n", columns.join(" "));
    for r in &rows {
        let fields: Vec<String> = r.iter().map(|v| num(*v)).collect();
        data.push_str(&fields.join(" "));
        data.push('\n');
    }

    let mut script = String::from("set datafile missing \"nan\"\nset key outside\n");
    let mut slopes = None;
    match schema {
        CsvSchema::Errors | CsvSchema::Projection => {
            script.push_str("set logscale y\nset format y \"%.0e\"\nset xlabel \"cycle\"\nset ylabel \"error\"\n");
            let plots: Vec<String> = (1..columns.len())
                .map(|c| format!("'{data_file}' using 1:{} with linespoints title \"{}\"", c + 1, columns[c]))
                .collect();
            writeln!(script, "plot {}", plots.join(", \\\n     ")).unwrap();
        }
        CsvSchema::Sweep => {
            let table: Vec<(f64, [f64; 3])> = rows.iter().map(|r| (r[0], [r[1], r[2], r[3]])).collect();
            let fit_count = 5.min(table.len());
            let s = sweep_slopes(&table, fit_count);
            script.push_str("set logscale xy\nset xlabel \"distance\"\nset ylabel \"contraction factor\"\n");
            let mut plots = Vec::new();
            for c in 0..3 {
                // intercept of the same least-squares line
                let mut sorted = table.clone();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                let pts: Vec<(f64, f64)> = sorted[sorted.len() - fit_count..]
                    .iter()
                    .filter(|(_, k)| k[c].is_finite() && k[c] > 0.0)
                    .map(|(l, k)| (l.ln(), k[c].ln()))
                    .collect();
                if pts.len() < 2 {
                    continue;
                }
                let (a, b) = linear_fit(&pts);
                let name = columns[c + 1];
                writeln!(script, "fit_{name}(x) = exp({}) * x**({})", num(b), num(a)).unwrap();
                writeln!(script, "print \"{name} slope = {a:.6}\"").unwrap();
                plots.push(format!("'{data_file}' using 1:{} with points title \"{name}\"", c + 2));
                plots.push(format!("fit_{name}(x) with lines title \"slope {a:.2}\""));
            }
            writeln!(script, "plot {}", plots.join(", \\\n     ")).unwrap();
            slopes = Some(s);
        }
    }
    Ok(PlotData {
        schema,
        data,
        script,
        slopes,
    })
}

/// Write `<stem>.dat` and `<stem>.gp` next to `csv_path` (or into
/// `out_dir`). Fails without writing anything if the CSV is unusable.
pub fn emit_plotdata(csv_path: &Path, out_dir: Option<&Path>) -> Result<(PathBuf, PathBuf, PlotData)> {
    let text = fs::read_to_string(csv_path)?;
    let stem = csv_path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidParameter(format!("bad file name {}", csv_path.display())))?;
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => csv_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let dat_name = format!("{stem}.dat");
    let plot = plot_data(&text, &dat_name)?;
    fs::create_dir_all(&dir)?;
    let dat = dir.join(&dat_name);
    let gp = dir.join(format!("{stem}.gp"));
    fs::write(&dat, &plot.data)?;
    fs::write(&gp, &plot.script)?;
    Ok((dat, gp, plot))
}
