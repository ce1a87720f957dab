//! Dispersion-plot data model and the on-disk dataset format.
//!
//! A dataset directory holds a `manifest.json` (instrument configuration and
//! record index) and one UTF-8 JSON file per measurement under `records/`.
//! Grids are stored explicitly; intensities are stored row-major as one JSON
//! array per separation-voltage sweep. Numbers use shortest round-trip
//! decimal representation, so `load_dataset(save_dataset(d)) == d` bitwise.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

/// Tolerance, in volts, when comparing stored grids with the linear formula.
pub const GRID_TOLERANCE: f64 = 1e-6;

const MANIFEST_FILE: &str = "manifest.json";
const RECORDS_DIR: &str = "records";
const FORMAT_TAG: &str = "dmsclass-dataset";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentConfig {
    pub usv_min: f64,
    pub usv_max: f64,
    pub n_usv: usize,
    pub ucv_min: f64,
    pub ucv_max: f64,
    pub n_ucv: usize,
    /// Duty cycle `D` of the rectangular separation waveform.
    pub duty_cycle: f64,
    /// Electrode gap `d` in millimetres.
    pub gap_width_mm: f64,
    pub sv_frequency_hz: f64,
}

impl Default for InstrumentConfig {
    /// IonVision defaults: 40 sweeps from 200 V to 700 V, 200 compensation
    /// steps from -1 V to 9 V, 0.25 mm gap, 1 MHz at 20 % duty cycle.
    fn default() -> Self {
        Self {
            usv_min: 200.0,
            usv_max: 700.0,
            n_usv: 40,
            ucv_min: -1.0,
            ucv_max: 9.0,
            n_ucv: 200,
            duty_cycle: 0.2,
            gap_width_mm: 0.25,
            sv_frequency_hz: 1.0e6,
        }
    }
}

impl InstrumentConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.usv_min < self.usv_max) {
            problems.push("usv_min must be below usv_max");
        }
        if !(self.ucv_min < self.ucv_max) {
            problems.push("ucv_min must be below ucv_max");
        }
        if self.n_usv < 2 {
            problems.push("n_usv must be at least 2");
        }
        if self.n_ucv < 2 {
            problems.push("n_ucv must be at least 2");
        }
        if !(self.duty_cycle > 0.0 && self.duty_cycle < 1.0) {
            problems.push("duty_cycle must lie in (0, 1)");
        }
        if !(self.gap_width_mm > 0.0) {
            problems.push("gap_width_mm must be positive");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn usv_grid(&self) -> Vec<f64> {
        linear_grid(self.usv_min, self.usv_max, self.n_usv)
    }

    pub fn ucv_grid(&self) -> Vec<f64> {
        linear_grid(self.ucv_min, self.ucv_max, self.n_ucv)
    }

    pub fn usv_step(&self) -> f64 {
        (self.usv_max - self.usv_min) / (self.n_usv - 1) as f64
    }

    pub fn ucv_step(&self) -> f64 {
        (self.ucv_max - self.ucv_min) / (self.n_ucv - 1) as f64
    }
}

/// `min + i * (max - min) / (n - 1)` for `i in 0..n`.
pub fn linear_grid(min: f64, max: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![min; n];
    }
    let step = (max - min) / (n - 1) as f64;
    (0..n).map(|i| min + i as f64 * step).collect()
}

/// Signed field strengths in V/cm during the two phases of the waveform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldStrengths {
    pub low_field: f64,
    pub high_field: f64,
}

/// Low field `-D * usv / d` and high field `(D - 1) * usv / d`, with the gap
/// converted from millimetres to centimetres.
pub fn field_strengths(config: &InstrumentConfig, usv: f64) -> FieldStrengths {
    let d_cm = config.gap_width_mm / 10.0;
    let duty = config.duty_cycle;
    FieldStrengths {
        low_field: -duty * usv / d_cm,
        high_field: (duty - 1.0) * usv / d_cm,
    }
}

/// Ion-current matrix indexed by separation voltage (rows) and compensation
/// voltage (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DispersionPlot {
    usv_grid: Vec<f64>,
    ucv_grid: Vec<f64>,
    intensity: Array2<f64>,
}

impl DispersionPlot {
    /// Checks shape and grid ordering. Finiteness is left to
    /// [`validate_record`] so corrupt measurements can still be represented.
    pub fn new(usv_grid: Vec<f64>, ucv_grid: Vec<f64>, intensity: Array2<f64>) -> Result<Self> {
        let (rows, cols) = intensity.dim();
        if rows != usv_grid.len() || cols != ucv_grid.len() {
            return Err(Error::InvalidArgument(format!(
                "intensity is {rows}x{cols} but grids are {}x{}",
                usv_grid.len(),
                ucv_grid.len()
            )));
        }
        for (name, grid) in [("usv_grid", &usv_grid), ("ucv_grid", &ucv_grid)] {
            if grid.is_empty() {
                return Err(Error::InvalidArgument(format!("{name} is empty")));
            }
            if grid.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidArgument(format!(
                    "{name} is not strictly ascending"
                )));
            }
        }
        Ok(Self {
            usv_grid,
            ucv_grid,
            intensity,
        })
    }

    /// Plot on the configuration's grids.
    pub fn on_config(config: &InstrumentConfig, intensity: Array2<f64>) -> Result<Self> {
        Self::new(config.usv_grid(), config.ucv_grid(), intensity)
    }

    pub fn usv_grid(&self) -> &[f64] {
        &self.usv_grid
    }

    pub fn ucv_grid(&self) -> &[f64] {
        &self.ucv_grid
    }

    pub fn intensity(&self) -> &Array2<f64> {
        &self.intensity
    }

    pub fn n_usv(&self) -> usize {
        self.usv_grid.len()
    }

    pub fn n_ucv(&self) -> usize {
        self.ucv_grid.len()
    }

    /// Same grids, new values. Panics if the shape differs.
    pub fn with_intensity(&self, intensity: Array2<f64>) -> Self {
        assert_eq!(intensity.dim(), self.intensity.dim(), "shape must be preserved");
        Self {
            usv_grid: self.usv_grid.clone(),
            ucv_grid: self.ucv_grid.clone(),
            intensity,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        self.with_intensity(self.intensity.mapv(f))
    }
}

/// Chemical label. The five analytes come first, in the order used for
/// class indices; `Other` holds baseline or reference substances.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum Chemical {
    Carvone,
    E2mb,
    Mcp,
    PhenylEthanol,
    NButanol,
    Other(String),
}

impl Chemical {
    pub const ANALYTES: [Chemical; 5] = [
        Chemical::Carvone,
        Chemical::E2mb,
        Chemical::Mcp,
        Chemical::PhenylEthanol,
        Chemical::NButanol,
    ];

    pub fn name(&self) -> &str {
        match self {
            Chemical::Carvone => "Carvone",
            Chemical::E2mb => "E2MB",
            Chemical::Mcp => "MCP",
            Chemical::PhenylEthanol => "2PEtOH",
            Chemical::NButanol => "nBuOH",
            Chemical::Other(name) => name,
        }
    }
}

impl fmt::Display for Chemical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<String> for Chemical {
    fn from(s: String) -> Self {
        match s.as_str() {
            "Carvone" => Chemical::Carvone,
            "E2MB" => Chemical::E2mb,
            "MCP" => Chemical::Mcp,
            "2PEtOH" => Chemical::PhenylEthanol,
            "nBuOH" => Chemical::NButanol,
            _ => Chemical::Other(s),
        }
    }
}

impl From<Chemical> for String {
    fn from(c: Chemical) -> Self {
        c.name().to_string()
    }
}

impl FromStr for Chemical {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(Chemical::from(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub id: String,
    pub plot: DispersionPlot,
    pub chemical: Chemical,
    /// Sample flow rate in sccm.
    pub flow_rate: f64,
    /// Dilution as a fraction, e.g. `1e-2` for 1 % v/v.
    pub concentration: f64,
    pub day_index: u32,
    /// Position in the measurement campaign; strictly orders a dataset.
    pub seq_timestamp: u64,
    pub humidity: Option<f64>,
}

/// One broken invariant of a record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn violation(field: impl Into<String>, message: impl Into<String>) -> Violation {
    Violation {
        field: field.into(),
        message: message.into(),
    }
}

/// Every invariant of the record is checked; nothing short-circuits.
/// An empty vector means the record conforms.
pub fn validate_record(record: &MeasurementRecord, config: &InstrumentConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    if record.id.trim().is_empty() {
        out.push(violation("id", "must not be empty"));
    }
    if !(record.flow_rate.is_finite() && record.flow_rate > 0.0) {
        out.push(violation(
            "flow_rate",
            format!("must be positive, got {}", record.flow_rate),
        ));
    }
    if !(record.concentration > 0.0 && record.concentration < 1.0) {
        out.push(violation(
            "concentration",
            format!("must lie in (0, 1), got {}", record.concentration),
        ));
    }
    if let Some(h) = record.humidity {
        if !h.is_finite() {
            out.push(violation("humidity", "must be finite when present"));
        }
    }
    out.extend(grid_violations(&record.plot, config));
    for ((row, col), value) in record.plot.intensity.indexed_iter() {
        if !value.is_finite() {
            out.push(violation(
                "intensity",
                format!("non-finite value {value} at row {row}, column {col}"),
            ));
        }
    }
    out
}

fn grid_violations(plot: &DispersionPlot, config: &InstrumentConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    for (field, grid, expected) in [
        ("usv_grid", plot.usv_grid(), config.usv_grid()),
        ("ucv_grid", plot.ucv_grid(), config.ucv_grid()),
    ] {
        if grid.len() != expected.len() {
            out.push(violation(
                field,
                format!("has {} points, configuration expects {}", grid.len(), expected.len()),
            ));
            continue;
        }
        if let Some(i) = grid
            .iter()
            .zip(&expected)
            .position(|(g, e)| (g - e).abs() > GRID_TOLERANCE)
        {
            out.push(violation(
                field,
                format!(
                    "point {i} is {} V, linear grid gives {} V",
                    grid[i], expected[i]
                ),
            ));
        }
    }
    out
}

/// Validated, timestamp-ordered collection of measurements on one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    config: InstrumentConfig,
    records: Vec<MeasurementRecord>,
}

impl Dataset {
    /// Validates every record, checks id and timestamp uniqueness, and sorts
    /// by `seq_timestamp`.
    pub fn new(config: InstrumentConfig, mut records: Vec<MeasurementRecord>) -> Result<Self> {
        config.validate()?;
        let mut grid_mismatch = Vec::new();
        for record in &records {
            let violations = validate_record(record, &config);
            let (grid, other): (Vec<_>, Vec<_>) = violations
                .into_iter()
                .partition(|v| v.field == "usv_grid" || v.field == "ucv_grid");
            if !other.is_empty() {
                return Err(Error::Shape {
                    id: record.id.clone(),
                    reason: other
                        .iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>()
                        .join("; "),
                });
            }
            if !grid.is_empty() {
                grid_mismatch.push(record.id.clone());
            }
        }
        if !grid_mismatch.is_empty() {
            return Err(Error::GridMismatch { ids: grid_mismatch });
        }
        let mut ids = HashSet::new();
        for r in &records {
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Duplicate {
                    what: "record id",
                    value: r.id.clone(),
                });
            }
        }
        records.sort_by_key(|r| r.seq_timestamp);
        if let Some(w) = records
            .windows(2)
            .find(|w| w[0].seq_timestamp == w[1].seq_timestamp)
        {
            return Err(Error::Duplicate {
                what: "seq_timestamp",
                value: format!("{} (records {} and {})", w[0].seq_timestamp, w[0].id, w[1].id),
            });
        }
        Ok(Self { config, records })
    }

    pub fn config(&self) -> &InstrumentConfig {
        &self.config
    }

    pub fn records(&self) -> &[MeasurementRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn into_parts(self) -> (InstrumentConfig, Vec<MeasurementRecord>) {
        (self.config, self.records)
    }

    pub fn get(&self, id: &str) -> Option<&MeasurementRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Distinct chemicals in label order.
    pub fn classes(&self) -> Vec<Chemical> {
        self.records
            .iter()
            .map(|r| r.chemical.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Subset of records satisfying `keep`.
    pub fn filter(&self, keep: impl Fn(&MeasurementRecord) -> bool) -> Dataset {
        Dataset {
            config: self.config.clone(),
            records: self.records.iter().filter(|r| keep(r)).cloned().collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    config: InstrumentConfig,
    records: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    id: String,
    file: String,
}

/// Writes record files first and the manifest last (atomically), so a failed
/// save never leaves a manifest pointing at missing records.
pub fn save_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let records_dir = path.join(RECORDS_DIR);
    fs::create_dir_all(&records_dir).map_err(|e| Error::io(&records_dir, e))?;
    let mut entries = Vec::with_capacity(dataset.len());
    for (i, record) in dataset.records().iter().enumerate() {
        let file = format!("{RECORDS_DIR}/r{i:05}.json");
        write_atomic(&path.join(&file), record_to_json(record).as_bytes())?;
        entries.push(ManifestEntry {
            id: record.id.clone(),
            file,
        });
    }
    let manifest = Manifest {
        format: FORMAT_TAG.to_string(),
        version: FORMAT_VERSION,
        config: dataset.config().clone(),
        records: entries,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    write_atomic(&path.join(MANIFEST_FILE), text.as_bytes())
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest_path = path.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
            file: manifest_path.clone(),
            field: "manifest".into(),
            reason: e.to_string(),
        })?;
    if manifest.format != FORMAT_TAG {
        return Err(Error::MalformedRecord {
            file: manifest_path,
            field: "format".into(),
            reason: format!("expected `{FORMAT_TAG}`, got `{}`", manifest.format),
        });
    }
    let mut records = Vec::with_capacity(manifest.records.len());
    for entry in &manifest.records {
        let file = path.join(&entry.file);
        let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let record = record_from_json(&text, &file)?;
        if record.id != entry.id {
            return Err(Error::MalformedRecord {
                file,
                field: "id".into(),
                reason: format!("manifest lists `{}`, file holds `{}`", entry.id, record.id),
            });
        }
        records.push(record);
    }
    Dataset::new(manifest.config, records)
}

fn json_num(x: f64) -> String {
    serde_json::to_string(&x).expect("finite numbers serialize")
}

fn json_array(xs: impl IntoIterator<Item = f64>) -> String {
    let parts: Vec<String> = xs.into_iter().map(json_num).collect();
    format!("[{}]", parts.join(","))
}

/// One record as JSON with one intensity row per line.
pub fn record_to_json(record: &MeasurementRecord) -> String {
    let mut s = String::new();
    s.push_str("{\n");
    let string = |v: &str| serde_json::to_string(v).expect("strings serialize");
    s.push_str(&format!("  \"id\": {},\n", string(&record.id)));
    s.push_str(&format!("  \"chemical\": {},\n", string(record.chemical.name())));
    s.push_str(&format!("  \"flow_rate_sccm\": {},\n", json_num(record.flow_rate)));
    s.push_str(&format!("  \"concentration\": {},\n", json_num(record.concentration)));
    s.push_str(&format!("  \"day_index\": {},\n", record.day_index));
    s.push_str(&format!("  \"seq_timestamp\": {},\n", record.seq_timestamp));
    if let Some(h) = record.humidity {
        s.push_str(&format!("  \"humidity\": {},\n", json_num(h)));
    }
    s.push_str("  \"channel\": \"positive\",\n");
    s.push_str(&format!(
        "  \"usv_grid\": {},\n",
        json_array(record.plot.usv_grid().iter().copied())
    ));
    s.push_str(&format!(
        "  \"ucv_grid\": {},\n",
        json_array(record.plot.ucv_grid().iter().copied())
    ));
    s.push_str("  \"intensity\": [\n");
    let rows = record.plot.intensity.rows();
    let n = record.plot.intensity.nrows();
    for (i, row) in rows.into_iter().enumerate() {
        s.push_str("    ");
        s.push_str(&json_array(row.iter().copied()));
        s.push_str(if i + 1 < n { ",\n" } else { "\n" });
    }
    s.push_str("  ]\n}\n");
    s
}

struct FieldReader<'a> {
    obj: &'a Map<String, Value>,
    file: &'a Path,
}

impl FieldReader<'_> {
    fn err(&self, field: &str, reason: impl Into<String>) -> Error {
        Error::MalformedRecord {
            file: self.file.to_path_buf(),
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    fn get(&self, field: &str) -> Result<&Value> {
        self.obj.get(field).ok_or_else(|| self.err(field, "missing"))
    }

    fn string(&self, field: &str) -> Result<String> {
        self.get(field)?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| self.err(field, "expected a string"))
    }

    fn f64(&self, field: &str) -> Result<f64> {
        self.get(field)?
            .as_f64()
            .ok_or_else(|| self.err(field, "expected a number"))
    }

    fn u64(&self, field: &str) -> Result<u64> {
        self.get(field)?
            .as_u64()
            .ok_or_else(|| self.err(field, "expected a non-negative integer"))
    }

    fn f64_array(&self, field: &str, value: &Value) -> Result<Vec<f64>> {
        let items = value
            .as_array()
            .ok_or_else(|| self.err(field, "expected an array of numbers"))?;
        items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_f64()
                    .ok_or_else(|| self.err(field, format!("element {i} is not a number")))
            })
            .collect()
    }
}

pub fn record_from_json(text: &str, file: &Path) -> Result<MeasurementRecord> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::MalformedRecord {
        file: file.to_path_buf(),
        field: "<document>".into(),
        reason: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| Error::MalformedRecord {
        file: file.to_path_buf(),
        field: "<document>".into(),
        reason: "expected a JSON object".into(),
    })?;
    let r = FieldReader { obj, file };
    let id = r.string("id")?;
    let chemical = Chemical::from(r.string("chemical")?);
    let flow_rate = r.f64("flow_rate_sccm")?;
    let concentration = r.f64("concentration")?;
    let day_index = u32::try_from(r.u64("day_index")?)
        .map_err(|_| r.err("day_index", "out of range"))?;
    let seq_timestamp = r.u64("seq_timestamp")?;
    let humidity = match obj.get("humidity") {
        None | Some(Value::Null) => None,
        Some(v) => Some(v.as_f64().ok_or_else(|| r.err("humidity", "expected a number"))?),
    };
    let usv_grid = r.f64_array("usv_grid", r.get("usv_grid")?)?;
    let ucv_grid = r.f64_array("ucv_grid", r.get("ucv_grid")?)?;
    let rows = r
        .get("intensity")?
        .as_array()
        .ok_or_else(|| r.err("intensity", "expected an array of rows"))?;
    let shape_err = |reason: String| Error::Shape {
        id: id.clone(),
        reason,
    };
    if rows.len() != usv_grid.len() {
        return Err(shape_err(format!(
            "intensity has {} rows but usv_grid has {} points",
            rows.len(),
            usv_grid.len()
        )));
    }
    let mut flat = Vec::with_capacity(rows.len() * ucv_grid.len());
    for (i, row) in rows.iter().enumerate() {
        let values = r.f64_array("intensity", row)?;
        if values.len() != ucv_grid.len() {
            return Err(shape_err(format!(
                "intensity row {i} has {} columns but ucv_grid has {} points",
                values.len(),
                ucv_grid.len()
            )));
        }
        flat.extend(values);
    }
    let intensity = Array2::from_shape_vec((usv_grid.len(), ucv_grid.len()), flat)
        .expect("shape checked above");
    let plot = DispersionPlot::new(usv_grid, ucv_grid, intensity).map_err(|e| shape_err(e.to_string()))?;
    Ok(MeasurementRecord {
        id,
        plot,
        chemical,
        flow_rate,
        concentration,
        day_index,
        seq_timestamp,
        humidity,
    })
}
