//! JSON matrix files and report output.
//!
//! A matrix file is
//!
//! ```json
//! { "schema_version": "1", "rows": 2, "cols": 2,
//!   "re": [[1.0, 0.0], [0.0, 1.0]], "im": [[0.0, 0.0], [0.0, 0.0]],
//!   "shape": { "dim_a": 2, "dim_b": 1 }, "kind": "hermitian" }
//! ```
//!
//! `shape` and `kind` are optional. Floats are written in shortest
//! round-trip form, so `load(save(m)) == m` bit for bit. A declared kind is
//! re-validated on load with the default tolerances.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::linalg::{BipartiteShape, ComplexMatrix, DensityMatrix, HermitianOperator};
use crate::{lit, Error, Real, Result};

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Hermitian,
    Density,
    Generic,
}

impl MatrixKind {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "hermitian" => Some(Self::Hermitian),
            "density" => Some(Self::Density),
            "generic" => Some(Self::Generic),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixFile {
    pub schema_version: String,
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<BipartiteShape>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<MatrixKind>,
}

impl MatrixFile {
    pub fn new<T: Real>(m: &ComplexMatrix<T>, shape: Option<BipartiteShape>, kind: Option<MatrixKind>) -> Self {
        let (rows, cols) = m.shape();
        Self {
            schema_version: SCHEMA_VERSION.into(),
            rows,
            cols,
            re: (0..rows).map(|r| (0..cols).map(|c| m[(r, c)].re.to_f64_lossy()).collect()).collect(),
            im: (0..rows).map(|r| (0..cols).map(|c| m[(r, c)].im.to_f64_lossy()).collect()).collect(),
            shape,
            kind,
        }
    }

    pub fn matrix(&self) -> ComplexMatrix<f64> {
        ComplexMatrix::from_fn(self.rows, self.cols, |r, c| Complex::new(self.re[r][c], self.im[r][c]))
    }

    /// The stored matrix rounded to `T`.
    pub fn matrix_as<T: Real>(&self) -> ComplexMatrix<T> {
        ComplexMatrix::from_fn(self.rows, self.cols, |r, c| Complex::new(lit(self.re[r][c]), lit(self.im[r][c])))
    }

    /// Checks array dimensions, finiteness, `shape` and the declared kind.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(parse_err("schema_version", format!("unsupported version {:?}", self.schema_version)));
        }
        for (field, arr) in [("re", &self.re), ("im", &self.im)] {
            if arr.len() != self.rows {
                return Err(parse_err(field, format!("has {} rows, expected {}", arr.len(), self.rows)));
            }
            for (r, row) in arr.iter().enumerate() {
                if row.len() != self.cols {
                    return Err(parse_err(
                        &format!("{field}[{r}]"),
                        format!("has {} entries, expected {}", row.len(), self.cols),
                    ));
                }
                if let Some(c) = row.iter().position(|x| !x.is_finite()) {
                    return Err(parse_err(&format!("{field}[{r}][{c}]"), "entry is not finite".into()));
                }
            }
        }
        if let Some(s) = self.shape {
            if s.dim_a == 0 || s.dim_b == 0 || s.dim_a * s.dim_b != self.rows || self.rows != self.cols {
                return Err(parse_err(
                    "shape",
                    format!("{}x{} does not factor a {}x{} matrix", s.dim_a, s.dim_b, self.rows, self.cols),
                ));
            }
        }
        match self.kind {
            None | Some(MatrixKind::Generic) => {}
            Some(kind) => {
                if self.rows != self.cols {
                    return Err(parse_err("kind", "hermitian and density matrices must be square".into()));
                }
                let m = self.matrix();
                let res = match kind {
                    MatrixKind::Hermitian => HermitianOperator::new(m).map(|_| ()),
                    _ => DensityMatrix::new(m).map(|_| ()),
                };
                res.map_err(|e| parse_err("kind", format!("declared {kind:?} but {e}").to_lowercase()))?;
            }
        }
        Ok(())
    }

    /// Parses and validates a matrix file, naming the offending field on
    /// failure.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| parse_err("<document>", e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| parse_err("<document>", "expected a JSON object".into()))?;
        let version = obj
            .get("schema_version")
            .and_then(Value::as_str)
            .ok_or_else(|| parse_err("schema_version", "missing or not a string".into()))?;
        let rows = count(obj, "rows")?;
        let cols = count(obj, "cols")?;
        let re = grid(obj, "re")?;
        let im = grid(obj, "im")?;
        let shape = match obj.get("shape") {
            None | Some(Value::Null) => None,
            Some(v) => Some(BipartiteShape {
                dim_a: v.get("dim_a").and_then(Value::as_u64).ok_or_else(|| parse_err("shape.dim_a", "missing or not a count".into()))?
                    as usize,
                dim_b: v.get("dim_b").and_then(Value::as_u64).ok_or_else(|| parse_err("shape.dim_b", "missing or not a count".into()))?
                    as usize,
            }),
        };
        let kind = match obj.get("kind") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                v.as_str()
                    .and_then(MatrixKind::parse)
                    .ok_or_else(|| parse_err("kind", format!("expected hermitian, density or generic, got {v}")))?,
            ),
        };
        let file = Self { schema_version: version.into(), rows, cols, re, im, shape, kind };
        file.validate()?;
        Ok(file)
    }

    pub fn to_json(&self) -> Result<String> {
        for (field, arr) in [("re", &self.re), ("im", &self.im)] {
            if arr.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::Contract(format!("cannot serialize non-finite entries in `{field}`")));
            }
        }
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Contract(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

fn parse_err(field: &str, message: String) -> Error {
    Error::Parse { field: field.into(), message }
}

fn count(obj: &Map<String, Value>, field: &str) -> Result<usize> {
    obj.get(field)
        .and_then(Value::as_u64)
        .map(|v| v as usize)
        .ok_or_else(|| parse_err(field, "missing or not a non-negative integer".into()))
}

fn grid(obj: &Map<String, Value>, field: &str) -> Result<Vec<Vec<f64>>> {
    let rows = obj
        .get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| parse_err(field, "missing or not an array".into()))?;
    rows.iter()
        .enumerate()
        .map(|(r, row)| {
            let row = row.as_array().ok_or_else(|| parse_err(&format!("{field}[{r}]"), "not an array".into()))?;
            row.iter()
                .enumerate()
                .map(|(c, x)| x.as_f64().ok_or_else(|| parse_err(&format!("{field}[{r}][{c}]"), "not a number".into())))
                .collect()
        })
        .collect()
}

pub fn load_matrix(path: &Path) -> Result<MatrixFile> {
    let text = fs::read_to_string(path)?;
    MatrixFile::from_json(&text)
}

pub fn save_matrix(path: &Path, file: &MatrixFile) -> Result<()> {
    file.validate()?;
    write_atomic(path, file.to_json()?.as_bytes())
}

/// Pretty JSON with a trailing newline.
pub fn report_json<S: Serialize>(report: &S) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report).map_err(|e| Error::Contract(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn save_report<S: Serialize>(report: &S, path: &Path) -> Result<()> {
    write_atomic(path, report_json(report)?.as_bytes())
}

/// Writes to a temporary file in the target directory and renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::Contract(format!("{} is not a file path", path.display())))?;
    let mut tmp = PathBuf::from(dir);
    tmp.push(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let result = (|| -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn identity_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("id.json");
        let m = ComplexMatrix::<f64>::identity(4, 4);
        save_matrix(&path, &MatrixFile::new(&m, BipartiteShape::new(2, 2).ok(), Some(MatrixKind::Hermitian))).unwrap();
        let back = load_matrix(&path).unwrap();
        assert_eq!(back.matrix(), m);
        assert_eq!(back.kind, Some(MatrixKind::Hermitian));
    }

    #[test]
    fn generic_round_trip_is_bit_exact() {
        let mut r = rng::seeded(1);
        for _ in 0..20 {
            let mut m = rng::ginibre::<f64, _>(&mut r, 3, 3);
            m[(0, 0)] = Complex::new(1e-300, -5e-324);
            m[(1, 2)] = Complex::new(0.1 + 0.2, std::f64::consts::PI);
            let text = MatrixFile::new(&m, None, Some(MatrixKind::Generic)).to_json().unwrap();
            let back = MatrixFile::from_json(&text).unwrap().matrix();
            for (a, b) in m.iter().zip(back.iter()) {
                assert_eq!(a.re.to_bits(), b.re.to_bits());
                assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }

    #[test]
    fn density_with_wrong_trace_is_rejected() {
        let m = ComplexMatrix::<f64>::identity(2, 2).scale(0.45);
        let text = MatrixFile::new(&m, None, Some(MatrixKind::Density)).to_json().unwrap();
        match MatrixFile::from_json(&text) {
            Err(Error::Parse { field, message }) => {
                assert_eq!(field, "kind");
                assert!(message.contains("trace"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn diagnostics_name_the_field() {
        let cases = [
            (r#"{"schema_version":"1","rows":1,"cols":1,"re":[[1]],"im":[["x"]]}"#, "im[0][0]"),
            (r#"{"schema_version":"2","rows":1,"cols":1,"re":[[1]],"im":[[0]]}"#, "schema_version"),
            (r#"{"schema_version":"1","cols":1,"re":[[1]],"im":[[0]]}"#, "rows"),
            (r#"{"schema_version":"1","rows":2,"cols":1,"re":[[1]],"im":[[0]]}"#, "re"),
            (r#"{"schema_version":"1","rows":1,"cols":1,"re":[[1]],"im":[[0]],"kind":"unitary"}"#, "kind"),
            (r#"{"schema_version":"1","rows":2,"cols":2,"re":[[1,0],[0,1]],"im":[[0,0],[0,0]],"shape":{"dim_a":3,"dim_b":1}}"#, "shape"),
            ("[1, 2", "<document>"),
        ];
        for (text, expected) in cases {
            match MatrixFile::from_json(text) {
                Err(Error::Parse { field, .. }) => assert_eq!(field, expected, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn non_hermitian_declared_hermitian() {
        let mut m = ComplexMatrix::<f64>::identity(2, 2);
        m[(0, 1)] = Complex::new(1.0, 0.0);
        let text = MatrixFile::new(&m, None, Some(MatrixKind::Hermitian)).to_json().unwrap();
        assert!(matches!(MatrixFile::from_json(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.json");
        save_report(&serde_json::json!({"a": 1}), &path).unwrap();
        save_report(&serde_json::json!({"a": 2}), &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "{\n  \"a\": 2\n}\n");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
