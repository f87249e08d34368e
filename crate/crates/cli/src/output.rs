//! Deterministic JSON and CSV writers.
//!
//! Floats are printed with 17 significant digits in scientific notation, so equal
//! inputs always give byte-identical files. Non-finite floats become `null`.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use polset_core::exprs::ExprMatrix;
use polset_core::geometry::PhasePoint;

/// JSON value with insertion-ordered objects.
#[derive(Clone, Debug, PartialEq)]
pub enum Json {
    Null,
    Bool(bool),
    UInt(u64),
    Num(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
}

impl Json {
    pub fn obj<K: Into<String>>(fields: impl IntoIterator<Item = (K, Json)>) -> Json {
        Json::Obj(fields.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn str(s: impl Into<String>) -> Json {
        Json::Str(s.into())
    }

    pub fn nums(v: &[f64]) -> Json {
        Json::Arr(v.iter().map(|&x| Json::Num(x)).collect())
    }

    pub fn complex(z: Complex64) -> Json {
        Json::Arr(vec![Json::Num(z.re), Json::Num(z.im)])
    }

    pub fn real_matrix(m: &DMatrix<f64>) -> Json {
        Json::Arr(m.row_iter().map(|r| Json::Arr(r.iter().map(|&v| Json::Num(v)).collect())).collect())
    }

    /// Rows of `[re, im]` pairs.
    pub fn complex_matrix(m: &DMatrix<Complex64>) -> Json {
        Json::Arr(m.row_iter().map(|r| Json::Arr(r.iter().map(|&z| Json::complex(z)).collect())).collect())
    }

    /// Rows of expression strings.
    pub fn expr_matrix(m: &ExprMatrix) -> Json {
        Json::Arr(
            (0..m.nrows())
                .map(|i| Json::Arr((0..m.ncols()).map(|j| Json::Str(m.get(i, j).to_string())).collect()))
                .collect(),
        )
    }

    pub fn phase_point(p: &PhasePoint) -> Json {
        Json::obj([("x", Json::nums(p.x.as_slice())), ("k", Json::nums(p.k.as_slice()))])
    }

    pub fn opt_num(v: Option<f64>) -> Json {
        v.map_or(Json::Null, Json::Num)
    }

    fn is_scalar(&self) -> bool {
        !matches!(self, Json::Arr(_) | Json::Obj(_))
    }

    /// Two-space indented text with a trailing newline. Arrays of scalars stay on one line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.write(&mut out, 0);
        out.push('\n');
        out
    }

    fn write(&self, out: &mut String, indent: usize) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::UInt(v) => write!(out, "{v}").unwrap(),
            Json::Num(v) => out.push_str(&format_num(*v)),
            Json::Str(s) => out.push_str(&serde_json::to_string(s).expect("strings serialise")),
            Json::Arr(items) if items.is_empty() => out.push_str("[]"),
            Json::Arr(items) if items.iter().all(Json::is_scalar) => {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    v.write(out, indent);
                }
                out.push(']');
            }
            Json::Arr(items) => {
                out.push_str("[\n");
                for (i, v) in items.iter().enumerate() {
                    pad(out, indent + 1);
                    v.write(out, indent + 1);
                    out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
                }
                pad(out, indent);
                out.push(']');
            }
            Json::Obj(fields) if fields.is_empty() => out.push_str("{}"),
            Json::Obj(fields) => {
                out.push_str("{\n");
                for (i, (k, v)) in fields.iter().enumerate() {
                    pad(out, indent + 1);
                    out.push_str(&serde_json::to_string(k).expect("strings serialise"));
                    out.push_str(": ");
                    v.write(out, indent + 1);
                    out.push_str(if i + 1 < fields.len() { ",\n" } else { "\n" });
                }
                pad(out, indent);
                out.push('}');
            }
        }
    }
}

fn pad(out: &mut String, indent: usize) {
    for _ in 0..indent {
        out.push_str("  ");
    }
}

/// `{:.16e}`, or `null` when not finite. Negative zero prints as zero.
pub fn format_num(v: f64) -> String {
    if v.is_finite() {
        format!("{:.16e}", v + 0.0)
    } else {
        "null".into()
    }
}

/// Comma-separated rows with a header and LF line endings. Non-finite values are left empty.
pub fn csv(header: &[String], rows: &[Vec<f64>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for row in rows {
        let cells: Vec<String> =
            row.iter().map(|&v| if v.is_finite() { format_num(v) } else { String::new() }).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_have_seventeen_digits() {
        assert_eq!(format_num(1.0), "1.0000000000000000e0");
        assert_eq!(format_num(-0.1), "-1.0000000000000001e-1");
        assert_eq!(format_num(f64::NAN), "null");
        assert_eq!(format_num(-0.0), "0.0000000000000000e0");
        let parsed: f64 = format_num(std::f64::consts::PI).parse().unwrap();
        assert_eq!(parsed, std::f64::consts::PI);
    }

    #[test]
    fn render_is_valid_json() {
        let v = Json::obj([
            ("a", Json::nums(&[1.0, f64::INFINITY])),
            ("b", Json::Arr(vec![Json::obj([("c", Json::str("x\"y"))])])),
            ("d", Json::Arr(vec![])),
            ("e", Json::UInt(u64::MAX)),
        ]);
        let text = v.render();
        let back: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back["b"][0]["c"], "x\"y");
        assert!(back["a"][1].is_null());
        assert_eq!(back["e"].as_u64(), Some(u64::MAX));
    }

    #[test]
    fn csv_uses_lf() {
        let s = csv(&["a".into(), "b".into()], &[vec![1.0, f64::NAN]]);
        assert_eq!(s, "a,b\n1.0000000000000000e0,\n");
    }
}
