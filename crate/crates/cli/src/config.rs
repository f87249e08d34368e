//! Run configuration: a JSON document describing the spacetime, the operator (or a
//! Proca mass), tolerance overrides and a seed.
//!
//! ```json
//! {
//!   "spacetime": { "kind": "flrw", "dim": 4, "scale_factor": "exp(x0)" },
//!   "operator": { "rank": 1, "C": [[["0"]], [["0"]], [["0"]], [["0"]]], "V": [["0"]] },
//!   "tolerances": { "tol_pos": 1e-6 },
//!   "seed": 7
//! }
//! ```
//!
//! Every schema error names the offending location as a JSON pointer.

use std::fmt;
use std::sync::Arc;

use polset_core::bichar::RelationParams;
use polset_core::exprs::{parse, Expr, ExprMatrix};
use polset_core::geometry::{ChartDomain, SpacetimeModel};
use polset_core::nhop::NHOperatorSpec;
use polset_core::proca::ProcaContext;
use serde_json::{Map, Value};

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    /// JSON pointer into the document; empty for the root.
    pub pointer: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let at = if self.pointer.is_empty() { "(root)" } else { &self.pointer };
        write!(f, "config error at {at}: {}", self.message)
    }
}

impl std::error::Error for ConfigError {}

fn fail<T>(pointer: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError { pointer: pointer.to_string(), message: message.into() })
}

fn child(pointer: &str, key: impl fmt::Display) -> String {
    let key = key.to_string().replace('~', "~0").replace('/', "~1");
    format!("{pointer}/{key}")
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Tolerances {
    pub tol_null: Option<f64>,
    pub tol_pos: Option<f64>,
    pub tol_cov: Option<f64>,
    pub lambda_max: Option<f64>,
}

impl Tolerances {
    /// Fields set in `over` win.
    pub fn merged(self, over: Tolerances) -> Tolerances {
        Tolerances {
            tol_null: over.tol_null.or(self.tol_null),
            tol_pos: over.tol_pos.or(self.tol_pos),
            tol_cov: over.tol_cov.or(self.tol_cov),
            lambda_max: over.lambda_max.or(self.lambda_max),
        }
    }

    pub fn relation_params(&self) -> RelationParams {
        let d = RelationParams::default();
        RelationParams {
            tol_pos: self.tol_pos.unwrap_or(d.tol_pos),
            tol_cov: self.tol_cov.unwrap_or(d.tol_cov),
            lambda_max: self.lambda_max.unwrap_or(d.lambda_max),
            step: d.step,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Body {
    Operator { rank: usize, c: Vec<ExprMatrix>, v: ExprMatrix },
    Proca { mass: f64 },
}

/// A validated configuration, not yet bound to tolerance overrides.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spacetime: SpacetimeModel,
    pub body: Body,
    pub tolerances: Tolerances,
    pub seed: Option<u64>,
}

/// Objects ready for the commands.
pub struct Setup {
    pub spacetime: Arc<SpacetimeModel>,
    /// The configured operator, or `K⁽¹⁾` for a Proca run.
    pub operator: NHOperatorSpec,
    pub proca: Option<ProcaContext>,
    pub params: RelationParams,
}

impl RunConfig {
    /// Minkowski 4D with the scalar wave operator.
    pub fn builtin() -> Self {
        RunConfig {
            spacetime: SpacetimeModel::minkowski(4).expect("valid dimension"),
            body: Body::Operator { rank: 1, c: vec![ExprMatrix::zeros(1, 1); 4], v: ExprMatrix::zeros(1, 1) },
            tolerances: Tolerances::default(),
            seed: None,
        }
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let value: Value = serde_json::from_str(text).or_else(|e| fail("", format!("invalid JSON: {e}")))?;
        Self::from_value(&value)
    }

    pub fn from_value(doc: &Value) -> Result<Self, ConfigError> {
        let root = object(doc, "")?;
        only_keys(root, "", &["spacetime", "operator", "proca", "tolerances", "seed"])?;
        let spacetime = match root.get("spacetime") {
            Some(v) => spacetime(v, "/spacetime")?,
            None => return fail("/spacetime", "missing required block"),
        };
        let dim = spacetime.dim();
        let body = match (root.get("operator"), root.get("proca")) {
            (Some(op), None) => operator(op, "/operator", dim)?,
            (None, Some(p)) => proca(p, "/proca", dim)?,
            (Some(_), Some(_)) => return fail("/proca", "exactly one of operator and proca may be given"),
            (None, None) => return fail("", "one of operator and proca is required"),
        };
        let tolerances = match root.get("tolerances") {
            Some(v) => tolerances(v, "/tolerances")?,
            None => Tolerances::default(),
        };
        let seed = match root.get("seed") {
            Some(v) => Some(v.as_u64().map_or_else(|| fail("/seed", "expected a non-negative 64-bit integer"), Ok)?),
            None => None,
        };
        Ok(RunConfig { spacetime, body, tolerances, seed })
    }

    /// Applies tolerance overrides and builds the operator.
    pub fn setup(&self, overrides: Tolerances) -> Result<Setup, ConfigError> {
        let tol = self.tolerances.merged(overrides);
        let mut model = self.spacetime.clone();
        if let Some(t) = tol.tol_null {
            model = model.with_tol_null(t);
        }
        let spacetime = Arc::new(model);
        let (operator, proca) = match &self.body {
            Body::Operator { rank, c, v } => {
                let op = NHOperatorSpec::new(spacetime.clone(), *rank, c.clone(), v.clone())
                    .or_else(|e| fail("/operator", e.to_string()))?;
                (op, None)
            }
            Body::Proca { mass } => {
                let ctx = ProcaContext::new(spacetime.clone(), *mass).or_else(|e| fail("/proca", e.to_string()))?;
                let kg1 = ctx.kg1_spec().or_else(|e| fail("/proca", e.to_string()))?;
                (kg1, Some(ctx))
            }
        };
        Ok(Setup { spacetime, operator, proca, params: tol.relation_params() })
    }
}

fn object<'a>(v: &'a Value, ptr: &str) -> Result<&'a Map<String, Value>, ConfigError> {
    v.as_object().map_or_else(|| fail(ptr, "expected an object"), Ok)
}

fn array<'a>(v: &'a Value, ptr: &str) -> Result<&'a Vec<Value>, ConfigError> {
    v.as_array().map_or_else(|| fail(ptr, "expected an array"), Ok)
}

fn only_keys(obj: &Map<String, Value>, ptr: &str, allowed: &[&str]) -> Result<(), ConfigError> {
    let mut keys: Vec<&String> = obj.keys().collect();
    keys.sort();
    for k in keys {
        if !allowed.contains(&k.as_str()) {
            return fail(&child(ptr, k), format!("unknown field, expected one of {}", allowed.join(", ")));
        }
    }
    Ok(())
}

fn usize_field(v: &Value, ptr: &str) -> Result<usize, ConfigError> {
    v.as_u64().and_then(|n| usize::try_from(n).ok()).map_or_else(|| fail(ptr, "expected a non-negative integer"), Ok)
}

fn positive(v: &Value, ptr: &str) -> Result<f64, ConfigError> {
    match v.as_f64() {
        Some(x) if x > 0.0 && x.is_finite() => Ok(x),
        _ => fail(ptr, "expected a positive finite number"),
    }
}

/// A string in the expression grammar or a plain number, with variables below `dim`.
fn expr(v: &Value, ptr: &str, dim: usize) -> Result<Expr, ConfigError> {
    let e = match v {
        Value::String(s) => parse(s).or_else(|e| fail(ptr, e.to_string()))?,
        Value::Number(n) => Expr::num(n.as_f64().map_or_else(|| fail(ptr, "number out of range"), Ok)?),
        _ => return fail(ptr, "expected an expression string or a number"),
    };
    if let Some(i) = e.max_var() {
        if i >= dim {
            return fail(ptr, format!("x{i} is out of range for dimension {dim}"));
        }
    }
    Ok(e)
}

fn matrix(v: &Value, ptr: &str, size: usize, dim: usize) -> Result<ExprMatrix, ConfigError> {
    let rows = array(v, ptr)?;
    if rows.len() != size {
        return fail(ptr, format!("expected {size} rows, found {}", rows.len()));
    }
    let mut out = ExprMatrix::zeros(size, size);
    for (i, row) in rows.iter().enumerate() {
        let rptr = child(ptr, i);
        let cells = array(row, &rptr)?;
        if cells.len() != size {
            return fail(&rptr, format!("expected {size} entries, found {}", cells.len()));
        }
        for (j, cell) in cells.iter().enumerate() {
            out.set(i, j, expr(cell, &child(&rptr, j), dim)?);
        }
    }
    Ok(out)
}

fn chart(v: Option<&Value>, ptr: &str, dim: usize) -> Result<Option<ChartDomain>, ConfigError> {
    let Some(v) = v else { return Ok(None) };
    let items = array(v, ptr)?;
    if items.len() != dim {
        return fail(ptr, format!("expected {dim} intervals, found {}", items.len()));
    }
    let mut bounds = Vec::with_capacity(dim);
    for (i, item) in items.iter().enumerate() {
        let iptr = child(ptr, i);
        let pair = array(item, &iptr)?;
        if pair.len() != 2 {
            return fail(&iptr, "expected [lo, hi]");
        }
        let end = |j: usize, unbounded: f64| match &pair[j] {
            Value::Null => Ok(unbounded),
            other => other.as_f64().map_or_else(|| fail(&child(&iptr, j), "expected a number or null"), Ok),
        };
        let (lo, hi) = (end(0, f64::NEG_INFINITY)?, end(1, f64::INFINITY)?);
        if !(lo < hi) {
            return fail(&iptr, "empty interval");
        }
        bounds.push((lo, hi));
    }
    Ok(Some(ChartDomain { bounds }))
}

fn spacetime(v: &Value, ptr: &str) -> Result<SpacetimeModel, ConfigError> {
    let obj = object(v, ptr)?;
    let kind = match obj.get("kind") {
        Some(Value::String(s)) => s.as_str(),
        Some(_) => return fail(&child(ptr, "kind"), "expected a string"),
        None => return fail(&child(ptr, "kind"), "missing field"),
    };
    let dim_ptr = child(ptr, "dim");
    let dim = obj.get("dim").map(|d| usize_field(d, &dim_ptr)).transpose()?;
    match kind {
        "minkowski" => {
            only_keys(obj, ptr, &["kind", "dim"])?;
            let Some(dim) = dim else { return fail(&dim_ptr, "missing field") };
            SpacetimeModel::minkowski(dim).or_else(|e| fail(&dim_ptr, e.to_string()))
        }
        "flrw" => {
            only_keys(obj, ptr, &["kind", "dim", "scale_factor", "chart"])?;
            let Some(dim) = dim else { return fail(&dim_ptr, "missing field") };
            if !(2..=4).contains(&dim) {
                return fail(&dim_ptr, "FLRW dimension must be 2, 3 or 4");
            }
            let a_ptr = child(ptr, "scale_factor");
            let a = match obj.get("scale_factor") {
                Some(v) => expr(v, &a_ptr, dim)?,
                None => parse("exp(x0)").expect("valid expression"),
            };
            if a.max_var().is_some_and(|i| i > 0) {
                return fail(&a_ptr, "the scale factor may depend on x0 only");
            }
            let model = match chart(obj.get("chart"), &child(ptr, "chart"), dim)? {
                Some(c) => SpacetimeModel::flrw_with_chart(dim, a, c),
                None => SpacetimeModel::flrw(dim, a),
            };
            model.or_else(|e| fail(ptr, e.to_string()))
        }
        "custom" => {
            only_keys(obj, ptr, &["kind", "dim", "metric", "chart", "time_axis"])?;
            let m_ptr = child(ptr, "metric");
            let Some(metric) = obj.get("metric") else { return fail(&m_ptr, "missing field") };
            let size = array(metric, &m_ptr)?.len();
            if size < 2 {
                return fail(&m_ptr, "the metric must be at least 2x2");
            }
            if let Some(d) = dim {
                if d != size {
                    return fail(&dim_ptr, format!("dimension {d} does not match the {size}x{size} metric"));
                }
            }
            let g = matrix(metric, &m_ptr, size, size)?;
            let chart = chart(obj.get("chart"), &child(ptr, "chart"), size)?.unwrap_or_else(|| ChartDomain::unbounded(size));
            let t_ptr = child(ptr, "time_axis");
            let time_axis = obj.get("time_axis").map(|t| usize_field(t, &t_ptr)).transpose()?.unwrap_or(0);
            if time_axis >= size {
                return fail(&t_ptr, format!("time axis must be below {size}"));
            }
            SpacetimeModel::custom(g, chart, time_axis).or_else(|e| fail(&m_ptr, e.to_string()))
        }
        other => fail(&child(ptr, "kind"), format!("unknown kind {other:?}, expected minkowski, flrw or custom")),
    }
}

fn operator(v: &Value, ptr: &str, dim: usize) -> Result<Body, ConfigError> {
    let obj = object(v, ptr)?;
    only_keys(obj, ptr, &["rank", "C", "V"])?;
    let r_ptr = child(ptr, "rank");
    let rank = match obj.get("rank") {
        Some(r) => usize_field(r, &r_ptr)?,
        None => return fail(&r_ptr, "missing field"),
    };
    if rank == 0 {
        return fail(&r_ptr, "rank must be positive");
    }
    let c_ptr = child(ptr, "C");
    let c = match obj.get("C") {
        Some(c) => {
            let items = array(c, &c_ptr)?;
            if items.len() != dim {
                return fail(&c_ptr, format!("expected {dim} matrices C^0..C^{}, found {}", dim - 1, items.len()));
            }
            items.iter().enumerate().map(|(nu, m)| matrix(m, &child(&c_ptr, nu), rank, dim)).collect::<Result<_, _>>()?
        }
        None => vec![ExprMatrix::zeros(rank, rank); dim],
    };
    let v = match obj.get("V") {
        Some(m) => matrix(m, &child(ptr, "V"), rank, dim)?,
        None => ExprMatrix::zeros(rank, rank),
    };
    Ok(Body::Operator { rank, c, v })
}

fn proca(v: &Value, ptr: &str, dim: usize) -> Result<Body, ConfigError> {
    let obj = object(v, ptr)?;
    only_keys(obj, ptr, &["mass"])?;
    let m_ptr = child(ptr, "mass");
    let mass = match obj.get("mass") {
        Some(m) => positive(m, &m_ptr)?,
        None => return fail(&m_ptr, "missing field"),
    };
    if dim != 4 {
        return fail("/spacetime/dim", "a Proca run needs a 4-dimensional spacetime");
    }
    Ok(Body::Proca { mass })
}

fn tolerances(v: &Value, ptr: &str) -> Result<Tolerances, ConfigError> {
    let obj = object(v, ptr)?;
    only_keys(obj, ptr, &["tol_null", "tol_pos", "tol_cov", "lambda_max"])?;
    let get = |k: &str| obj.get(k).map(|x| positive(x, &child(ptr, k))).transpose();
    Ok(Tolerances {
        tol_null: get("tol_null")?,
        tol_pos: get("tol_pos")?,
        tol_cov: get("tol_cov")?,
        lambda_max: get("lambda_max")?,
    })
}
