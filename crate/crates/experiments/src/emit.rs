//! Writing experiment results as CSV tables or JSON documents, each with a
//! plot-data companion `<name>.plot.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use eosgd_core::io::{fmt17, to_json17, write_text, TOOL_VERSION};
use eosgd_core::{Constants, Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Header carried by every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputMeta {
    pub schema: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub constants_sha256: String,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

impl OutputMeta {
    pub fn new(schema: &str, seed: Option<u64>, constants: &Constants) -> Self {
        Self {
            schema: schema.into(),
            tool_version: TOOL_VERSION.into(),
            seed,
            constants_sha256: constants.hash(),
            notes: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<R> {
    pub meta: OutputMeta,
    pub result: R,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub series: String,
    pub x: f64,
    pub y: f64,
}

impl PlotPoint {
    pub fn new(series: impl Into<String>, x: f64, y: f64) -> Self {
        Self { series: series.into(), x, y }
    }
}

/// A result that can be flattened to a table.
pub trait Tabular {
    const SCHEMA: &'static str;
    fn columns(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<String>>;
    /// Result-level facts written as `# key: value` header lines.
    fn notes(&self) -> BTreeMap<String, String> {
        BTreeMap::new()
    }
    fn plot(&self) -> Vec<PlotPoint> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(Error::Format(format!("unknown output format {s:?}"))),
        }
    }
}

pub fn cell_f(x: f64) -> String {
    fmt17(x)
}

pub fn cell_opt_f(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_default()
}

pub fn cell_opt_u(x: Option<usize>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn cell_json<S: Serialize>(v: &S) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

fn header(meta: &OutputMeta, extra: &BTreeMap<String, String>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# schema: {}", meta.schema);
    let _ = writeln!(out, "# tool: {}", meta.tool_version);
    let _ = writeln!(out, "# seed: {}", meta.seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into()));
    let _ = writeln!(out, "# constants_sha256: {}", meta.constants_sha256);
    for (k, v) in meta.notes.iter().chain(extra) {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn render_csv<R: Tabular>(result: &R, meta: &OutputMeta) -> String {
    let mut out = header(meta, &result.notes());
    out.push_str(&result.columns().join(","));
    out.push('\n');
    for row in result.rows() {
        let fields: Vec<String> = row.iter().map(|f| csv_field(f)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

pub fn render_json<R: Serialize>(result: &R, meta: &OutputMeta) -> Result<String> {
    to_json17(&Document { meta: meta.clone(), result })
}

pub fn render_plot(points: &[PlotPoint], meta: &OutputMeta) -> String {
    let mut out = header(meta, &BTreeMap::new());
    out.push_str("series,x,y\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", csv_field(&p.series), fmt17(p.x), fmt17(p.y));
    }
    out
}

pub fn plot_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.plot.csv"))
}

/// Writes `result` to `path` and, when it has plot data, the companion file.
/// Returns the paths written.
pub fn emit<R: Tabular + Serialize>(
    result: &R,
    meta: &OutputMeta,
    format: OutputFormat,
    path: &Path,
) -> Result<Vec<PathBuf>> {
    let text = match format {
        OutputFormat::Csv => render_csv(result, meta),
        OutputFormat::Json => render_json(result, meta)?,
    };
    write_text(path, &text)?;
    let mut written = vec![path.to_path_buf()];
    let points = result.plot();
    if !points.is_empty() {
        let p = plot_path(path);
        write_text(&p, &render_plot(&points, meta))?;
        written.push(p);
    }
    Ok(written)
}

pub fn parse_json<R: DeserializeOwned>(text: &str) -> Result<Document<R>> {
    Ok(serde_json::from_str(text)?)
}
