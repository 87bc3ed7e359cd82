//! Run records (JSON), result tables (CSV) and the timing sidecar.
//!
//! Records hold exact decimal renderings so that a checkpoint restores the
//! same binary values; tables round to the working digits for reading.

use std::fs;
use std::path::{Path, PathBuf};

use oppq_core::bounds::{BoundRecord, FunctionalKind, MinimaRecord};
use oppq_core::cdr::Diagnostics;
use oppq_core::precision::{format_exact, format_sig};
use oppq_core::{Precision, Real};
use serde::{Deserialize, Serialize};

use crate::config::ConfigSnapshot;
use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaRow {
    pub order: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_s: Option<usize>,
    pub functional: String,
    pub energy: String,
    pub value: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub derivative: Option<String>,
    pub window: (String, String),
    pub grid_step: String,
    pub near_edge: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub order: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_s: Option<usize>,
    pub state: String,
    pub cap: String,
    pub minimum: String,
    pub lower: String,
    pub upper: String,
    pub tolerance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViolationRow {
    pub order: usize,
    pub previous: String,
    pub current: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PrecisionReport {
    pub max_recursion_residual: f64,
    pub evaluations: usize,
    pub small_gap_flags: usize,
}

impl From<Diagnostics> for PrecisionReport {
    fn from(d: Diagnostics) -> Self {
        PrecisionReport {
            max_recursion_residual: d.max_recursion_residual,
            evaluations: d.evaluations,
            small_gap_flags: d.small_gap_flags,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format: u32,
    pub software: String,
    pub command: String,
    pub config: ConfigSnapshot,
    /// Weight parameter found by the low-order pass when none was given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detected_eps0: Option<String>,
    pub minima: Vec<MinimaRow>,
    pub violations: Vec<ViolationRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cap: Option<String>,
    pub bounds: Vec<BoundRow>,
    pub precision: PrecisionReport,
    pub complete: bool,
}

impl RunRecord {
    pub fn new(command: &str, config: ConfigSnapshot) -> Self {
        RunRecord {
            format: FORMAT_VERSION,
            software: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            detected_eps0: None,
            minima: Vec::new(),
            violations: Vec::new(),
            cap: None,
            bounds: Vec::new(),
            precision: PrecisionReport::default(),
            complete: false,
        }
    }

    pub fn load(path: &Path) -> Result<Option<RunRecord>, CliError> {
        match fs::read_to_string(path) {
            Ok(text) => Ok(serde_json::from_str(&text).ok()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(CliError::io(path, e)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("record serializes");
        text.push('\n');
        write_atomic(path, &text)
    }

    /// A previous, unfinished run of the same command and configuration.
    pub fn resumable_from(&self, other: &RunRecord) -> bool {
        !other.complete
            && other.format == self.format
            && other.software == self.software
            && other.command == self.command
            && other.config == self.config
            && other.detected_eps0.is_none() == self.detected_eps0.is_none()
    }
}

pub fn write_atomic(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, text).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

/// `<out><suffix>`, e.g. `table.csv.record.json`.
pub fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

pub fn minima_row(r: &MinimaRecord, m_s: Option<usize>) -> MinimaRow {
    MinimaRow {
        order: r.order,
        m_s,
        functional: r.kind.label().to_string(),
        energy: format_exact(&r.energy),
        value: format_exact(&r.value),
        derivative: r.derivative.as_ref().map(format_exact),
        window: (format_exact(&r.window.0), format_exact(&r.window.1)),
        grid_step: format_exact(&r.grid_step),
        near_edge: r.near_edge,
    }
}

pub fn minima_from_row(row: &MinimaRow, prec: Precision) -> Result<MinimaRecord, CliError> {
    let parse = |s: &str| -> Result<Real, CliError> {
        prec.parse(s)
            .map_err(|_| CliError::Config(format!("checkpoint value `{s}` is unreadable")))
    };
    let kind = match row.functional.as_str() {
        "lambda" => FunctionalKind::Lambda,
        "L" => FunctionalKind::Constrained,
        _ => FunctionalKind::Other,
    };
    Ok(MinimaRecord {
        order: row.order,
        energy: parse(&row.energy)?,
        value: parse(&row.value)?,
        kind,
        window: (parse(&row.window.0)?, parse(&row.window.1)?),
        grid_step: parse(&row.grid_step)?,
        near_edge: row.near_edge,
        derivative: row.derivative.as_deref().map(parse).transpose()?,
    })
}

pub fn bound_row(b: &BoundRecord, m_s: Option<usize>) -> BoundRow {
    BoundRow {
        order: b.order,
        m_s,
        state: b.state.clone(),
        cap: format_exact(&b.cap),
        minimum: format_exact(&b.minimum),
        lower: format_exact(&b.lower),
        upper: format_exact(&b.upper),
        tolerance: format_exact(&b.tolerance),
    }
}

/// Comma-separated table with a header row and LF line endings.
pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.join(",");
        text.push('\n');
        Csv { text }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn into_string(self) -> String {
        self.text
    }
}

/// A value rounded to the working digits.
pub fn cell(x: &Real, digits: u32) -> String {
    format_sig(x, digits as usize)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct OrderTiming {
    pub order: usize,
    pub stage: &'static str,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Timings {
    pub command: String,
    pub setup_seconds: f64,
    pub orders: Vec<OrderTiming>,
    pub total_seconds: f64,
}
