//! Needlet coefficient pyramids and their file formats.
//!
//! Text format (UTF-8, one value per line, shortest round-trip decimal):
//!
//! ```text
//! needlet-pyramid text 1
//! B=2 j_max=2 counts=6,28,120 tag=clean
//! level 0
//! 0.125
//! ...
//! level 1
//! ...
//! ```
//!
//! Binary format (little-endian):
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 8            | magic `NDLPYR\0\x01`                      |
//! | 8            | B as f64                                  |
//! | 4            | j_max as u32                              |
//! | 1            | tag: 0 clean, 1 noisy, 2 thresholded      |
//! | 3            | zero padding                              |
//! | 8 (j_max+1)  | per-level counts as u64                   |
//! | 8 Σ counts   | coefficients as f64, level-major          |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

pub const BINARY_MAGIC: [u8; 8] = *b"NDLPYR\0\x01";
pub const TEXT_MAGIC: &str = "needlet-pyramid text 1";

/// Provenance of a pyramid's coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PyramidTag {
    Clean,
    Noisy,
    Thresholded,
}

impl PyramidTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PyramidTag::Clean => "clean",
            PyramidTag::Noisy => "noisy",
            PyramidTag::Thresholded => "thresholded",
        }
    }

    fn code(&self) -> u8 {
        match self {
            PyramidTag::Clean => 0,
            PyramidTag::Noisy => 1,
            PyramidTag::Thresholded => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(PyramidTag::Clean),
            1 => Some(PyramidTag::Noisy),
            2 => Some(PyramidTag::Thresholded),
            _ => None,
        }
    }
}

impl std::str::FromStr for PyramidTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(PyramidTag::Clean),
            "noisy" => Ok(PyramidTag::Noisy),
            "thresholded" => Ok(PyramidTag::Thresholded),
            other => Err(Error::format("pyramid header", "tag", format!("unknown tag `{other}`"))),
        }
    }
}

/// Needlet coefficients β_jk for levels `0..levels.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientPyramid {
    pub bandwidth: f64,
    pub levels: Vec<Vec<f64>>,
    pub tag: PyramidTag,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PyramidFormat {
    Text,
    Binary,
}

impl CoefficientPyramid {
    pub fn zeros(bandwidth: f64, counts: &[usize], tag: PyramidTag) -> Self {
        Self {
            bandwidth,
            levels: counts.iter().map(|&n| vec![0.0; n]).collect(),
            tag,
        }
    }

    pub fn j_max(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn counts(&self) -> Vec<usize> {
        self.levels.iter().map(Vec::len).collect()
    }

    pub fn level(&self, j: usize) -> &[f64] {
        &self.levels[j]
    }

    pub fn total_len(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.levels.iter().flatten().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            bandwidth: self.bandwidth,
            levels: self
                .levels
                .iter()
                .map(|lv| lv.iter().map(|v| v * factor).collect())
                .collect(),
            tag: self.tag,
        }
    }

    /// Σ_jk β_jk².
    pub fn energy(&self) -> f64 {
        self.levels.iter().flatten().map(|v| v * v).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::EmptyInput("pyramid has no levels"));
        }
        if !self.is_finite() {
            return Err(Error::invalid("pyramid", "coefficients must be finite"));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(TEXT_MAGIC);
        out.push('\n');
        let counts: Vec<String> = self.counts().iter().map(|c| c.to_string()).collect();
        out.push_str(&format!(
            "B={} j_max={} counts={} tag={}\n",
            self.bandwidth,
            self.j_max(),
            counts.join(","),
            self.tag.as_str()
        ));
        for (j, lv) in self.levels.iter().enumerate() {
            out.push_str(&format!("level {j}\n"));
            for v in lv {
                out.push_str(&format!("{v:?}\n"));
            }
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let magic = lines.next().unwrap_or("");
        if magic.trim() != TEXT_MAGIC {
            return Err(Error::format("pyramid header", "magic", format!("expected `{TEXT_MAGIC}`")));
        }
        let header = lines
            .next()
            .ok_or_else(|| Error::format("pyramid header", "header", "missing header line"))?;
        let mut bandwidth = None;
        let mut j_max = None;
        let mut counts: Option<Vec<usize>> = None;
        let mut tag = None;
        for field in header.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::format("pyramid header", field, "expected key=value"))?;
            match key {
                "B" => {
                    bandwidth = Some(
                        value
                            .parse::<f64>()
                            .map_err(|e| Error::format("pyramid header", "B", e.to_string()))?,
                    )
                }
                "j_max" => {
                    j_max = Some(
                        value
                            .parse::<usize>()
                            .map_err(|e| Error::format("pyramid header", "j_max", e.to_string()))?,
                    )
                }
                "counts" => {
                    let parsed: std::result::Result<Vec<usize>, _> = value.split(',').map(str::parse).collect();
                    counts = Some(parsed.map_err(|e| Error::format("pyramid header", "counts", e.to_string()))?);
                }
                "tag" => tag = Some(value.parse::<PyramidTag>()?),
                other => return Err(Error::format("pyramid header", other, "unknown field")),
            }
        }
        let bandwidth = bandwidth.ok_or_else(|| Error::format("pyramid header", "B", "missing"))?;
        if !(bandwidth.is_finite() && bandwidth > 1.0) {
            return Err(Error::format("pyramid header", "B", "must be a finite value above 1"));
        }
        let j_max = j_max.ok_or_else(|| Error::format("pyramid header", "j_max", "missing"))?;
        let counts = counts.ok_or_else(|| Error::format("pyramid header", "counts", "missing"))?;
        let tag = tag.ok_or_else(|| Error::format("pyramid header", "tag", "missing"))?;
        if counts.len() != j_max + 1 {
            return Err(Error::format(
                "pyramid header",
                "counts",
                format!("{} entries for j_max = {j_max}", counts.len()),
            ));
        }
        let mut levels = Vec::with_capacity(counts.len());
        for (j, &n) in counts.iter().enumerate() {
            let marker = lines
                .next()
                .ok_or_else(|| Error::format("pyramid body", format!("level {j}"), "missing level marker"))?;
            if marker.trim() != format!("level {j}") {
                return Err(Error::format(
                    "pyramid body",
                    format!("level {j}"),
                    format!("unexpected line `{marker}`"),
                ));
            }
            let mut lv = Vec::with_capacity(n);
            for k in 0..n {
                let line = lines.next().ok_or_else(|| {
                    Error::format("pyramid body", format!("level {j}"), format!("expected {n} values, found {k}"))
                })?;
                let v: f64 = line
                    .trim()
                    .parse()
                    .map_err(|e| Error::format("pyramid body", format!("level {j} value {k}"), format!("{e}")))?;
                lv.push(v);
            }
            levels.push(lv);
        }
        if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
            return Err(Error::format("pyramid body", "trailer", format!("unexpected line `{extra}`")));
        }
        let pyr = Self {
            bandwidth,
            levels,
            tag,
        };
        pyr.validate()?;
        Ok(pyr)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 8 * (self.levels.len() + self.total_len()));
        out.extend_from_slice(&BINARY_MAGIC);
        out.extend_from_slice(&self.bandwidth.to_le_bytes());
        out.extend_from_slice(&(self.j_max() as u32).to_le_bytes());
        out.push(self.tag.code());
        out.extend_from_slice(&[0u8; 3]);
        for n in self.counts() {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for v in self.levels.iter().flatten() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = ByteCursor { bytes, pos: 0 };
        let magic = cursor.take(8, "magic")?;
        if magic != BINARY_MAGIC {
            return Err(Error::format("binary pyramid", "magic", "bad magic bytes"));
        }
        let bandwidth = f64::from_le_bytes(cursor.array("B")?);
        if !(bandwidth.is_finite() && bandwidth > 1.0) {
            return Err(Error::format("binary pyramid", "B", "must be a finite value above 1"));
        }
        let j_max = u32::from_le_bytes(cursor.array("j_max")?) as usize;
        if j_max > 64 {
            return Err(Error::format("binary pyramid", "j_max", format!("{j_max} is implausibly large")));
        }
        let tag_code = cursor.take(1, "tag")?[0];
        let tag = PyramidTag::from_code(tag_code)
            .ok_or_else(|| Error::format("binary pyramid", "tag", format!("unknown code {tag_code}")))?;
        cursor.take(3, "padding")?;
        let mut counts = Vec::with_capacity(j_max + 1);
        for j in 0..=j_max {
            let n = u64::from_le_bytes(cursor.array("counts")?) as usize;
            if n > bytes.len() / 8 {
                return Err(Error::format("binary pyramid", "counts", format!("level {j} count {n} exceeds file size")));
            }
            counts.push(n);
        }
        let mut levels = Vec::with_capacity(counts.len());
        for (j, &n) in counts.iter().enumerate() {
            let mut lv = Vec::with_capacity(n);
            for _ in 0..n {
                let field = format!("level {j} values");
                lv.push(f64::from_le_bytes(cursor.array_named(&field)?));
            }
            levels.push(lv);
        }
        if cursor.pos != bytes.len() {
            return Err(Error::format(
                "binary pyramid",
                "trailer",
                format!("{} unexpected trailing bytes", bytes.len() - cursor.pos),
            ));
        }
        let pyr = Self {
            bandwidth,
            levels,
            tag,
        };
        pyr.validate()?;
        Ok(pyr)
    }

    /// Reads either format, detected by the leading magic.
    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)?;
        if bytes.starts_with(&BINARY_MAGIC) {
            Self::from_bytes(&bytes)
        } else {
            let text = std::str::from_utf8(&bytes)
                .map_err(|_| Error::format("pyramid header", "magic", "neither binary magic nor UTF-8 text"))?;
            Self::from_text(text)
        }
    }

    pub fn write(&self, path: &Path, format: PyramidFormat) -> Result<()> {
        self.validate()?;
        let bytes = match format {
            PyramidFormat::Text => self.to_text().into_bytes(),
            PyramidFormat::Binary => self.to_bytes(),
        };
        write_atomic(path, &bytes)
    }
}

struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteCursor<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format("binary pyramid", field, "unexpected end of file"));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, field: &'static str) -> Result<[u8; N]> {
        self.array_named(field)
    }

    fn array_named<const N: usize>(&mut self, field: &str) -> Result<[u8; N]> {
        let s = self.take(N, field)?;
        Ok(s.try_into().expect("slice has requested length"))
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}
