//! Run configuration files and map I/O for the command-line tool.
//!
//! A config file is TOML with an optional top-level `seed` and one optional
//! table per command. Every field is optional; command-line flags take
//! precedence over file values, which take precedence over defaults.
//!
//! ```toml
//! seed = 7
//!
//! [frame]
//! bandwidth = 2.0
//! j_max = 4
//!
//! [bench]
//! r = 2.0
//! pi = 2.0
//! q = 2.0
//! m = 3.0
//! loss_p = "2"
//! n_grid = [256, 1024, 4096, 16384]
//! replications = 100
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::needlet::write_atomic;
use crate::sphere::SpherePoint;

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FrameSection {
    pub bandwidth: Option<f64>,
    pub j_max: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DenoiseSection {
    pub kappa: Option<f64>,
    pub eta: Option<f64>,
    pub p_stat: Option<u32>,
    pub n: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BenchSection {
    pub r: Option<f64>,
    pub pi: Option<f64>,
    /// A number or `"inf"`.
    pub q: Option<toml::Value>,
    pub m: Option<f64>,
    /// A number or `"inf"`.
    pub loss_p: Option<toml::Value>,
    pub n_grid: Option<Vec<f64>>,
    pub replications: Option<usize>,
    pub kappa: Option<f64>,
    pub eta: Option<f64>,
    pub p_stat: Option<u32>,
    pub bandwidth: Option<f64>,
    pub truth_mode: Option<String>,
    pub truth_depth: Option<usize>,
    pub tolerance: Option<f64>,
    pub gamma: Option<f64>,
    pub point_cap: Option<usize>,
}

/// Parsed config file.
#[derive(Debug, Clone, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub frame: FrameSection,
    #[serde(default)]
    pub denoise: DenoiseSection,
    #[serde(default)]
    pub bench: BenchSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| format!("bytes {}..{}", s.start, s.end)).unwrap_or_default();
            Error::format("config", field, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }
}

/// Reads a number or the string `inf` from a TOML value.
pub fn value_as_exponent(name: &'static str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        toml::Value::String(s) if matches!(s.as_str(), "inf" | "infinity") => Ok(f64::INFINITY),
        toml::Value::String(s) => s
            .parse::<f64>()
            .map_err(|_| Error::format("config", name, format!("`{s}` is not a number or inf"))),
        other => Err(Error::format("config", name, format!("unexpected {}", other.type_str()))),
    }
}

/// Flag value if given, else file value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// A map sample: a point and a value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSample {
    pub point: SpherePoint,
    pub value: f64,
}

/// Reads a `theta,phi,value` CSV (header required). With `value_optional`
/// the third column may be absent, and missing values read as zero.
pub fn read_map(path: &Path, value_optional: bool) -> Result<Vec<MapSample>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(value_optional)
        .from_path(path)
        .map_err(csv_error)?;
    let headers = reader.headers().map_err(csv_error)?.clone();
    let expect: &[&str] = if value_optional { &["theta", "phi"] } else { &["theta", "phi", "value"] };
    for (i, name) in expect.iter().enumerate() {
        if headers.get(i) != Some(name) {
            return Err(Error::format("map", format!("header column {}", i + 1), format!("expected `{name}`")));
        }
    }
    let mut out = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_error)?;
        let field = |i: usize, name: &str| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::format("map", format!("row {} {name}", row + 1), "missing"))?
                .parse::<f64>()
                .map_err(|_| Error::format("map", format!("row {} {name}", row + 1), "not a number"))
        };
        let theta = field(0, "theta")?;
        let phi = field(1, "phi")?;
        let value = if value_optional && rec.len() < 3 { 0.0 } else { field(2, "value")? };
        let point = SpherePoint::from_angles_wrapped(theta, phi)
            .map_err(|e| Error::format("map", format!("row {} theta/phi", row + 1), e.to_string()))?;
        out.push(MapSample { point, value });
    }
    Ok(out)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format("map", "csv", format!("{other:?}")),
    }
}

/// Map CSV text with full-precision values.
pub fn map_to_csv(points: &[SpherePoint], values: &[f64]) -> Result<String> {
    if points.len() != values.len() {
        return Err(Error::LengthMismatch {
            what: "map values",
            expected: points.len(),
            found: values.len(),
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["theta", "phi", "value"]).map_err(csv_error)?;
    for (p, v) in points.iter().zip(values) {
        w.write_record([format!("{:?}", p.theta()), format!("{:?}", p.phi()), format!("{v:?}")])
            .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Writes a map CSV atomically.
pub fn write_map(path: &Path, points: &[SpherePoint], values: &[f64]) -> Result<()> {
    write_atomic(path, map_to_csv(points, values)?.as_bytes())
}

/// Values of a map given on exactly the points of `grid`, in grid order.
pub fn values_on_grid(samples: &[MapSample], grid: &[SpherePoint]) -> Result<Vec<f64>> {
    if samples.len() != grid.len() {
        return Err(Error::LengthMismatch {
            what: "map samples on the analysis grid",
            expected: grid.len(),
            found: samples.len(),
        });
    }
    samples
        .iter()
        .zip(grid)
        .enumerate()
        .map(|(i, (s, g))| {
            if s.point.dot(g) < 1.0 - 1e-12 {
                Err(Error::format(
                    "map",
                    format!("row {} theta/phi", i + 1),
                    "point does not match the analysis grid",
                ))
            } else {
                Ok(s.value)
            }
        })
        .collect()
}
