//! Reconstruction-error profiles ("Diffusion DNA") and the per-jump cost model.
//!
//! A [`DnaProfile`] records, for every point of a normalized time grid, the
//! squared error of the denoiser's single-step clean estimate taken from the
//! ideal noisy state at that time. Jumping from `t` down to `k` costs
//! `temporal_lever(t, k) * C(t)`: only the source value matters.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::fmt::{sig17, to_stable_json};

/// Strictly increasing timesteps in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
}

impl TimeGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        let report = validate_grid(&points);
        if report.is_valid() {
            Ok(Self { points })
        } else {
            Err(Error::InvalidProfile(report))
        }
    }

    /// `n` evenly spaced points from 0 to 1 inclusive.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("a grid needs at least 2 points, got {n}")));
        }
        let last = (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|i| i as f64 / last).collect();
        points[n - 1] = 1.0;
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Index of the grid point bit-equal to `t`.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.points
            .binary_search_by(|p| p.total_cmp(&t))
            .ok()
    }

    pub fn into_points(self) -> Vec<f64> {
        self.points
    }
}

/// A reconstruction-error profile over a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct DnaProfile {
    grid: TimeGrid,
    values: Vec<f64>,
    meta: Map<String, Value>,
}

impl DnaProfile {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        Self::with_meta(grid, values, Map::new())
    }

    pub fn with_meta(grid: TimeGrid, values: Vec<f64>, meta: Map<String, Value>) -> Result<Self> {
        let report = validate(grid.points(), &values);
        if !report.is_valid() {
            return Err(Error::InvalidProfile(report));
        }
        Ok(Self { grid, values, meta })
    }

    /// Samples `f` at every grid point.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.points().iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    /// Builds a profile from raw arrays, normalizing time if the largest
    /// grid point exceeds 1.
    pub fn from_parts(grid: Vec<f64>, values: Vec<f64>, mut meta: Map<String, Value>) -> Result<Self> {
        let scale = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let grid = if scale.is_finite() && scale > 1.0 {
            meta.insert("time_scale".to_string(), Value::from(scale));
            grid.iter().map(|t| t / scale).collect()
        } else {
            grid
        };
        let report = validate(&grid, &values);
        if !report.is_valid() {
            return Err(Error::InvalidProfile(report));
        }
        Ok(Self { grid: TimeGrid { points: grid }, values, meta })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        self.grid.points()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn meta(&self) -> &Map<String, Value> {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut Map<String, Value> {
        &mut self.meta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Error value at grid index `i`.
    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Returns a copy with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        let values = self.values.iter().map(|v| v * factor).collect();
        Self::with_meta(self.grid.clone(), values, self.meta.clone())
    }

    pub fn to_document(&self) -> DnaDocument {
        DnaDocument {
            grid: self.grid.points.clone(),
            values: self.values.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        to_stable_json(&self.to_document())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: DnaDocument = serde_json::from_str(text)?;
        doc.into_profile()
    }

    /// Reads the two-column `t,c` CSV form.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "c" {
            return Err(Error::Parse(format!(
                "expected CSV header `t,c`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut grid = Vec::new();
        let mut values = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let parse = |field: &str| {
                field
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("bad number `{field}`: {e}")))
            };
            grid.push(parse(&record[0])?);
            values.push(parse(&record[1])?);
        }
        let mut meta = Map::new();
        meta.insert("format".to_string(), Value::from("csv"));
        Self::from_parts(grid, values, meta)
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writeln!(writer, "t,c")?;
        for (t, c) in self.times().iter().zip(&self.values) {
            writeln!(writer, "{},{}", sig17(*t), sig17(*c))?;
        }
        Ok(())
    }

    /// Loads a profile from `.json` or `.csv` by extension.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let is_csv = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
        if is_csv {
            Self::from_csv(std::fs::File::open(path)?)
        } else {
            Self::from_json(&std::fs::read_to_string(path)?)
        }
    }
}

/// Wire form of a profile: `{ "grid": [...], "values": [...], "meta": {...} }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DnaDocument {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub meta: Map<String, Value>,
}

impl DnaDocument {
    pub fn into_profile(self) -> Result<DnaProfile> {
        DnaProfile::from_parts(self.grid, self.values, self.meta)
    }
}

/// One broken profile invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewPoints { len: usize },
    LengthMismatch { grid: usize, values: usize },
    NonFiniteTime { index: usize },
    TimeOutOfRange { index: usize, t: f64 },
    NotIncreasing { index: usize },
    NoPositiveTime,
    NonFiniteValue { index: usize },
    NegativeValue { index: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::TooFewPoints { len } => write!(f, "grid has {len} points, at least 2 required"),
            Violation::LengthMismatch { grid, values } => {
                write!(f, "length mismatch: {grid} grid points but {values} values")
            }
            Violation::NonFiniteTime { index } => write!(f, "grid[{index}] is not finite"),
            Violation::TimeOutOfRange { index, t } => write!(f, "grid[{index}] = {t} lies outside [0, 1]"),
            Violation::NotIncreasing { index } => {
                write!(f, "grid not strictly increasing at index {index}")
            }
            Violation::NoPositiveTime => write!(f, "largest grid point must be > 0"),
            Violation::NonFiniteValue { index } => write!(f, "values[{index}] is not finite"),
            Violation::NegativeValue { index, value } => write!(f, "values[{index}] = {value} is negative"),
        }
    }
}

/// Every violated invariant of a candidate profile; empty iff valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "  - {v}")?;
        }
        Ok(())
    }
}

fn validate_grid(grid: &[f64]) -> ValidationReport {
    let mut violations = Vec::new();
    if grid.len() < 2 {
        violations.push(Violation::TooFewPoints { len: grid.len() });
    }
    for (index, &t) in grid.iter().enumerate() {
        if !t.is_finite() {
            violations.push(Violation::NonFiniteTime { index });
        } else if !(0.0..=1.0).contains(&t) {
            violations.push(Violation::TimeOutOfRange { index, t });
        }
    }
    for index in 1..grid.len() {
        if !(grid[index] > grid[index - 1]) {
            violations.push(Violation::NotIncreasing { index });
        }
    }
    if let Some(&last) = grid.last() {
        if !(last > 0.0) {
            violations.push(Violation::NoPositiveTime);
        }
    }
    ValidationReport { violations }
}

/// Checks raw grid/value arrays against the profile invariants.
pub fn validate(grid: &[f64], values: &[f64]) -> ValidationReport {
    let mut report = validate_grid(grid);
    if grid.len() != values.len() {
        report.violations.push(Violation::LengthMismatch { grid: grid.len(), values: values.len() });
    }
    for (index, &value) in values.iter().enumerate() {
        if !value.is_finite() {
            report.violations.push(Violation::NonFiniteValue { index });
        } else if value < 0.0 {
            report.violations.push(Violation::NegativeValue { index, value });
        }
    }
    report
}

/// `((t - k) / t)^2`: the fraction of the clean-estimate error that shows up
/// as drift after a first-order jump from `t` to `k` under linear flow.
pub fn temporal_lever(t: f64, k: f64) -> Result<f64> {
    if !(t.is_finite() && k.is_finite()) {
        return Err(Error::Domain(format!("non-finite timestep pair ({t}, {k})")));
    }
    if t <= 0.0 {
        return Err(Error::Domain(format!("lever undefined for source timestep {t}")));
    }
    if k < 0.0 || k > t {
        return Err(Error::Domain(format!("need 0 <= k <= t, got t = {t}, k = {k}")));
    }
    Ok(lever(t, k))
}

#[inline]
pub(crate) fn lever(t: f64, k: f64) -> f64 {
    let r = (t - k) / t;
    r * r
}

/// Cost of jumping from grid index `src` down to grid index `dst`.
pub fn transition_cost(dna: &DnaProfile, src: usize, dst: usize) -> Result<f64> {
    let n = dna.len();
    for index in [src, dst] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, len: n });
        }
    }
    let (t, k) = (dna.times()[src], dna.times()[dst]);
    if !(t > k) {
        return Err(Error::Ordering(format!(
            "source t = {t} (index {src}) must be later than destination t = {k} (index {dst})"
        )));
    }
    Ok(temporal_lever(t, k)? * dna.values[src])
}

/// Grid indices kept by a stride-`stride` subsampling of an `n`-point grid:
/// every `stride`-th point counted down from the last one.
pub fn stride_indices(n: usize, stride: usize) -> Vec<usize> {
    if n == 0 || stride == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..n).rev().step_by(stride).collect();
    idx.reverse();
    idx
}

/// Keeps every `stride`-th grid point, anchored at (and always retaining) the
/// last point. Retained pairs are copied bit-for-bit.
pub fn resample(dna: &DnaProfile, stride: usize) -> Result<DnaProfile> {
    if stride == 0 {
        return Err(Error::Domain("stride must be at least 1".to_string()));
    }
    let idx = stride_indices(dna.len(), stride);
    if idx.len() < 2 {
        return Err(Error::Domain(format!(
            "stride {stride} leaves {} point(s) of a {}-point grid",
            idx.len(),
            dna.len()
        )));
    }
    let grid = idx.iter().map(|&i| dna.times()[i]).collect();
    let values = idx.iter().map(|&i| dna.values[i]).collect();
    let mut meta = dna.meta.clone();
    let prior = meta.get("stride").and_then(Value::as_u64).unwrap_or(1);
    meta.insert("stride".to_string(), Value::from(prior * stride as u64));
    DnaProfile::with_meta(TimeGrid { points: grid }, values, meta)
}
