//! Flat `[section]` / `key = value` experiment configuration.
//!
//! ```text
//! [experiment]
//! kind = reflect
//! max_cycles = 100
//!
//! [geometry ball]
//! shape = circle
//! center = 0, 0
//! radius = 1
//! n_nodes = 128
//!
//! [object]
//! geometry = ball
//! bc = dirichlet
//! datum = 1 + 0.5 * cos(theta)
//! ```
//!
//! Section headers may carry a name (`[geometry ball]`); `object` sections
//! are ordered and may repeat. Lines starting with `#` or `;` are comments.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use evalexpr::{
    build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables, DefaultNumericTypes, EvalexprError,
    Function, HashMapContext, Node, Value,
};
use sha2::{Digest, Sha256};

use crate::bvp::BoundaryCondition;
use crate::error::{Error, Result};
use crate::geometry::{make_circle, make_cshape_with_blend, BoundaryCurve, Point, CSHAPE_BLEND_FRACTION};

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub kind: String,
    pub name: Option<String>,
    pub line: usize,
    pub entries: Vec<Entry>,
}

impl Section {
    pub fn entry(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn has(&self, key: &str) -> bool {
        self.entry(key).is_some()
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entry(key) {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|_| Error::Config {
                line: e.line,
                message: format!("cannot parse `{}` for key `{key}`", e.value),
            }),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::Config {
            line: self.line,
            message: format!("section [{}] needs key `{key}`", self.kind),
        })
    }

    /// Comma-separated list of numbers.
    pub fn get_list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(e) = self.entry(key) else { return Ok(None) };
        e.value
            .split(',')
            .map(|s| {
                s.trim().parse::<f64>().map_err(|_| Error::Config {
                    line: e.line,
                    message: format!("cannot parse list item `{}` for key `{key}`", s.trim()),
                })
            })
            .collect::<Result<Vec<_>>>()
            .map(Some)
    }

    fn get_point(&self, key: &str) -> Result<Option<Point>> {
        match self.get_list(key)? {
            None => Ok(None),
            Some(v) if v.len() == 2 => Ok(Some(Point::new(v[0], v[1]))),
            Some(_) => Err(Error::Config {
                line: self.entry(key).unwrap().line,
                message: format!("`{key}` needs two comma-separated numbers"),
            }),
        }
    }

    fn error(&self, message: impl Into<String>) -> Error {
        Error::Config {
            line: self.line,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConfigFile {
    pub sections: Vec<Section>,
    /// Hex SHA-256 of the raw text.
    pub hash: String,
}

impl Default for ConfigFile {
    fn default() -> Self {
        Self::parse("").expect("empty config parses")
    }
}

/// Cuts a `#` or `;` comment that follows whitespace.
fn strip_trailing_comment(line: &str) -> &str {
    let bytes = line.as_bytes();
    (1..bytes.len())
        .find(|&i| (bytes[i] == b'#' || bytes[i] == b';') && bytes[i - 1].is_ascii_whitespace())
        .map_or(line, |i| &line[..i])
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut sections: Vec<Section> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let s = strip_trailing_comment(raw).trim();
            if s.is_empty() || s.starts_with('#') || s.starts_with(';') {
                continue;
            }
            if let Some(inner) = s.strip_prefix('[') {
                let inner = inner.strip_suffix(']').ok_or(Error::Config {
                    line,
                    message: "unterminated section header".into(),
                })?;
                let mut parts = inner.split_whitespace();
                let kind = parts.next().ok_or(Error::Config {
                    line,
                    message: "empty section header".into(),
                })?;
                let name = parts.next().map(str::to_string);
                if parts.next().is_some() {
                    return Err(Error::Config {
                        line,
                        message: "section header takes at most a kind and a name".into(),
                    });
                }
                sections.push(Section {
                    kind: kind.to_string(),
                    name,
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = s.split_once('=').ok_or(Error::Config {
                line,
                message: format!("expected `key = value`, got `{s}`"),
            })?;
            let section = sections.last_mut().ok_or(Error::Config {
                line,
                message: "key outside of any section".into(),
            })?;
            let key = key.trim().to_string();
            if key.is_empty() {
                return Err(Error::Config {
                    line,
                    message: "empty key".into(),
                });
            }
            if section.has(&key) {
                return Err(Error::Config {
                    line,
                    message: format!("duplicate key `{key}`"),
                });
            }
            section.entries.push(Entry {
                key,
                value: value.trim().to_string(),
                line,
            });
        }
        let digest = Sha256::digest(text.as_bytes());
        let mut hash = String::with_capacity(64);
        for b in digest {
            write!(hash, "{b:02x}").unwrap();
        }
        Ok(Self { sections, hash })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn section(&self, kind: &str) -> Option<&Section> {
        self.sections.iter().find(|s| s.kind == kind)
    }

    pub fn sections<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Section> + 'a {
        self.sections.iter().filter(move |s| s.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Solve,
    Reflect,
    TriangleConvergence,
    DivergenceCase,
    DistanceSweep,
    ProjectionDemo,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Reflect => "reflect",
            Self::TriangleConvergence => "triangle_convergence",
            Self::DivergenceCase => "divergence_case",
            Self::DistanceSweep => "distance_sweep",
            Self::ProjectionDemo => "projection_demo",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s.replace('-', "_").as_str() {
            "solve" => Self::Solve,
            "reflect" => Self::Reflect,
            "triangle_convergence" => Self::TriangleConvergence,
            "divergence_case" => Self::DivergenceCase,
            "distance_sweep" => Self::DistanceSweep,
            "projection_demo" => Self::ProjectionDemo,
            other => return Err(format!("unknown experiment kind `{other}`")),
        })
    }
}

/// Boundary datum given as a constant or an expression in `x`, `y`, and the
/// polar coordinates `r`, `theta` about the object's center. `sin`, `cos`,
/// `exp`, `ln`, `sqrt`, `atan2`, … and `pi` are available.
#[derive(Debug, Clone)]
pub enum DatumExpr {
    Constant(f64),
    Expression(String, Node<DefaultNumericTypes>),
}

fn unary(f: fn(f64) -> f64) -> Function<DefaultNumericTypes> {
    Function::new(move |arg: &Value<DefaultNumericTypes>| Ok(Value::Float(f(arg.as_number()?))))
}

impl DatumExpr {
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        if let Ok(v) = text.trim().parse::<f64>() {
            return Ok(Self::Constant(v));
        }
        build_operator_tree::<DefaultNumericTypes>(text)
            .map(|node| Self::Expression(text.to_string(), node))
            .map_err(|e| format!("bad expression `{text}`: {e}"))
    }

    pub fn eval(&self, p: &Point, center: &Point) -> std::result::Result<f64, String> {
        match self {
            Self::Constant(v) => Ok(*v),
            Self::Expression(text, node) => {
                let d = p - center;
                let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
                let set = |ctx: &mut HashMapContext, k: &str, v: f64| ctx.set_value(k.into(), Value::Float(v));
                let res: std::result::Result<f64, EvalexprError> = (|| {
                    set(&mut ctx, "x", p.x)?;
                    set(&mut ctx, "y", p.y)?;
                    set(&mut ctx, "r", d.norm())?;
                    set(&mut ctx, "theta", d.y.atan2(d.x))?;
                    set(&mut ctx, "pi", PI)?;
                    for (name, f) in [
                        ("sin", f64::sin as fn(f64) -> f64),
                        ("cos", f64::cos),
                        ("tan", f64::tan),
                        ("exp", f64::exp),
                        ("ln", f64::ln),
                        ("sqrt", f64::sqrt),
                        ("abs", f64::abs),
                    ] {
                        ctx.set_function(name.into(), unary(f))?;
                    }
                    ctx.set_function(
                        "atan2".into(),
                        Function::new(|arg: &Value<DefaultNumericTypes>| {
                            let t = arg.as_fixed_len_tuple(2)?;
                            Ok(Value::Float(t[0].as_number()?.atan2(t[1].as_number()?)))
                        }),
                    )?;
                    node.eval_number_with_context(&ctx)
                })();
                res.map_err(|e| format!("evaluating `{text}`: {e}"))
            }
        }
    }

    /// Values at every node of `curve`, polar coordinates about `center`.
    pub fn sample(&self, curve: &BoundaryCurve, center: &Point) -> std::result::Result<Vec<f64>, String> {
        curve.nodes().iter().map(|x| self.eval(x, center)).collect()
    }
}

/// A curve built from a geometry block, with the center used for polar
/// coordinates in datum expressions.
#[derive(Debug, Clone)]
pub struct NamedCurve {
    pub curve: BoundaryCurve,
    pub center: Point,
}

/// Build a curve from `shape = circle|cshape` keys.
pub fn curve_from_section(s: &Section) -> Result<NamedCurve> {
    let shape: String = s.require("shape")?;
    let center = s.get_point("center")?.unwrap_or_else(Point::zeros);
    let n: usize = s.get_or("n_nodes", 128)?;
    let curve = match shape.as_str() {
        "circle" => make_circle(center, s.require("radius")?, n),
        "cshape" => {
            let half = match (s.get::<f64>("half_angle")?, s.get::<f64>("half_angle_deg")?) {
                (Some(a), None) => a,
                (None, Some(d)) => d.to_radians(),
                (None, None) => PI / 6.0,
                _ => return Err(s.error("give only one of `half_angle` and `half_angle_deg`")),
            };
            make_cshape_with_blend(
                center,
                s.require("r_inner")?,
                s.require("r_outer")?,
                half,
                n,
                s.get_or("blend", CSHAPE_BLEND_FRACTION)?,
            )
        }
        other => return Err(s.error(format!("unknown shape `{other}`"))),
    }
    .map_err(|e| s.error(e.to_string()))?;
    Ok(NamedCurve { curve, center })
}

/// Resolve the curve of an `object`/`container` section: either a
/// `geometry = NAME` reference or inline shape keys.
pub fn resolve_curve(s: &Section, geometries: &HashMap<String, &Section>) -> Result<NamedCurve> {
    match s.entry("geometry") {
        Some(e) => {
            let g = geometries.get(&e.value).ok_or(Error::Config {
                line: e.line,
                message: format!("unknown geometry `{}`", e.value),
            })?;
            curve_from_section(g)
        }
        None => curve_from_section(s),
    }
}

/// Boundary condition of an `object` section sampled on its curve.
pub fn condition_from_section(s: &Section, nc: &NamedCurve) -> Result<BoundaryCondition> {
    let bc: String = s.require("bc")?;
    let datum = || -> Result<Vec<f64>> {
        let e = s.entry("datum").ok_or_else(|| s.error("missing `datum`"))?;
        let expr = DatumExpr::parse(&e.value).map_err(|m| Error::Config { line: e.line, message: m })?;
        expr.sample(&nc.curve, &nc.center)
            .map_err(|m| Error::Config { line: e.line, message: m })
    };
    match bc.as_str() {
        "dirichlet" => Ok(BoundaryCondition::Dirichlet(datum()?)),
        "neumann" => Ok(BoundaryCondition::Neumann(datum()?)),
        "fourth" | "fourth_type" => Ok(BoundaryCondition::FourthType {
            flux: s.require("flux")?,
        }),
        other => Err(s.error(format!("unknown boundary condition `{other}`"))),
    }
}
