//! File formats: datasets (JSON), trajectories (CSV plus a JSON sidecar) and
//! bound-check tables (CSV). Every float is written with 17 significant
//! digits, which round-trips `f64` exactly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::analysis::{BoundCheckRecord, BoundKind, DatasetMeta};
use crate::datasets::{LabeledDataset, RNG_ALGORITHM};
use crate::error::{Error, Result};
use crate::optimizers::{RunEcho, TerminalStatus, Trajectory};
use crate::reference::ReferenceSolution;

pub const TOOL_VERSION: &str = concat!("eosgd ", env!("CARGO_PKG_VERSION"));
pub const DATASET_SCHEMA: &str = "eosgd.dataset/1";
pub const TRAJECTORY_SCHEMA: &str = "eosgd.trajectory/1";
pub const BOUNDS_SCHEMA: &str = "eosgd.bounds/1";

/// `x` with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

/// Pretty printing with floats at 17 significant digits.
struct Fmt17<'a>(PrettyFormatter<'a>);

impl Formatter for Fmt17<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        w.write_all(fmt17(value).as_bytes())
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(w, f64::from(value))
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Pretty JSON with every float at 17 significant digits.
pub fn to_json17<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Fmt17(PrettyFormatter::new()));
    value.serialize(&mut ser)?;
    let mut text = String::from_utf8(buf).expect("serde_json writes UTF-8");
    text.push('\n');
    Ok(text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetFile {
    schema: String,
    dim: usize,
    count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    direction: Option<Vec<f64>>,
    /// Each row is `[x_1, …, x_d, y]`.
    rows: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rng: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

pub fn dataset_to_json(ds: &LabeledDataset<f64>, seed: Option<u64>) -> Result<String> {
    let rows = (0..ds.count())
        .map(|i| {
            let mut r = ds.row(i).to_vec();
            r.push(f64::from(ds.label(i)));
            r
        })
        .collect();
    let file = DatasetFile {
        schema: DATASET_SCHEMA.into(),
        dim: ds.dim(),
        count: ds.count(),
        gamma: ds.certificate().map(|c| c.gamma),
        direction: ds.certificate().map(|c| c.direction.clone()),
        rows,
        rng: seed.map(|_| RNG_ALGORITHM.to_string()),
        seed,
    };
    to_json17(&file)
}

pub fn dataset_from_json(text: &str) -> Result<LabeledDataset<f64>> {
    let f: DatasetFile = serde_json::from_str(text)?;
    if f.schema != DATASET_SCHEMA {
        return Err(Error::Format(format!("unexpected dataset schema {:?}", f.schema)));
    }
    if f.rows.len() != f.count {
        return Err(Error::Format(format!("count is {} but {} rows given", f.count, f.rows.len())));
    }
    let mut rows = Vec::with_capacity(f.count);
    let mut labels = Vec::with_capacity(f.count);
    for (i, r) in f.rows.into_iter().enumerate() {
        if r.len() != f.dim + 1 {
            return Err(Error::Format(format!("row {i} has {} entries, expected {}", r.len(), f.dim + 1)));
        }
        let y = r[f.dim];
        labels.push(match y {
            1.0 => 1,
            -1.0 => -1,
            _ => return Err(Error::Format(format!("row {i} has label {y}"))),
        });
        rows.push(r[..f.dim].to_vec());
    }
    let ds = LabeledDataset::from_rows(rows, labels)?;
    match (f.gamma, f.direction) {
        (Some(g), Some(d)) => ds.with_certificate(g, d),
        (None, None) => Ok(ds),
        _ => Err(Error::Format("gamma and direction must be given together".into())),
    }
}

pub fn write_dataset(path: &Path, ds: &LabeledDataset<f64>, seed: Option<u64>) -> Result<()> {
    write_text(path, &dataset_to_json(ds, seed)?)
}

pub fn read_dataset(path: &Path) -> Result<LabeledDataset<f64>> {
    dataset_from_json(&fs::read_to_string(path)?)
}

/// Sidecar metadata written next to a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub schema: String,
    pub tool_version: String,
    pub config: RunEcho,
    pub dataset_hash: String,
    /// `(γ, n)` of the dataset, when its margin is known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetMeta>,
    pub terminal_status: TerminalStatus,
    pub steps_run: usize,
    pub snapshots: Vec<(usize, Vec<f64>)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub averaged_final: Option<Vec<f64>>,
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    let mut s = csv.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn trajectory_csv(traj: &Trajectory<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# schema: {TRAJECTORY_SCHEMA}");
    let _ = writeln!(out, "# tool: {TOOL_VERSION}");
    out.push_str("step,risk,loss,potential,grad_norm,param_norm");
    if traj.dist_to_ref.is_some() {
        out.push_str(",dist_to_ref");
    }
    out.push('\n');
    for t in 0..traj.len() {
        let _ = write!(
            out,
            "{t},{},{},{},{},{}",
            fmt17(traj.risk[t]),
            fmt17(traj.loss[t]),
            fmt17(traj.potential[t]),
            fmt17(traj.grad_norm[t]),
            fmt17(traj.param_norm[t])
        );
        if let Some(d) = &traj.dist_to_ref {
            let _ = write!(out, ",{}", fmt17(d[t]));
        }
        out.push('\n');
    }
    out
}

/// Writes the CSV and its `.meta.json` sidecar.
pub fn write_trajectory(
    path: &Path,
    traj: &Trajectory<f64>,
    dataset_hash: &str,
    dataset: Option<DatasetMeta>,
) -> Result<()> {
    write_text(path, &trajectory_csv(traj))?;
    let meta = TrajectoryMeta {
        schema: TRAJECTORY_SCHEMA.into(),
        tool_version: TOOL_VERSION.into(),
        config: traj.config.clone(),
        dataset_hash: dataset_hash.into(),
        dataset,
        terminal_status: traj.terminal_status,
        steps_run: traj.steps_run,
        snapshots: traj.snapshots.clone(),
        averaged_final: traj.averaged.as_ref().map(|a| a.final_average.clone()),
    };
    write_text(&sidecar_path(path), &to_json17(&meta)?)
}

/// Reads a trajectory CSV together with its sidecar.
pub fn read_trajectory(path: &Path) -> Result<(Trajectory<f64>, TrajectoryMeta)> {
    let text = fs::read_to_string(path)?;
    let meta: TrajectoryMeta = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().ok_or_else(|| Error::Format("empty trajectory file".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols[..6] != ["step", "risk", "loss", "potential", "grad_norm", "param_norm"] {
        return Err(Error::Format(format!("unexpected trajectory header {header:?}")));
    }
    let with_dist = cols.get(6) == Some(&"dist_to_ref");
    let mut cols_data: Vec<Vec<f64>> = vec![Vec::new(); if with_dist { 6 } else { 5 }];
    for (k, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() || fields[0].parse::<usize>().ok() != Some(k) {
            return Err(Error::Format(format!("malformed trajectory row {k}")));
        }
        for (c, f) in cols_data.iter_mut().zip(&fields[1..]) {
            c.push(f.parse::<f64>().map_err(|e| Error::Format(format!("row {k}: {e}")))?);
        }
    }
    let mut it = cols_data.into_iter();
    let mut next = || it.next().unwrap_or_default();
    let traj = Trajectory {
        risk: next(),
        loss: next(),
        potential: next(),
        grad_norm: next(),
        param_norm: next(),
        dist_to_ref: with_dist.then(&mut next),
        snapshots: meta.snapshots.clone(),
        averaged: None,
        terminal_status: meta.terminal_status,
        steps_run: meta.steps_run,
        config: meta.config.clone(),
    };
    if traj.len() != traj.steps_run + 1 {
        return Err(Error::Format("row count does not match steps_run".into()));
    }
    Ok((traj, meta))
}

pub fn bounds_csv(records: &[BoundCheckRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# schema: {BOUNDS_SCHEMA}");
    let _ = writeln!(out, "# tool: {TOOL_VERSION}");
    out.push_str("step,which_bound,lhs,rhs,margin,violation\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.step,
            r.which_bound.name(),
            fmt17(r.lhs),
            fmt17(r.rhs),
            fmt17(r.margin),
            r.is_violation()
        );
    }
    out
}

pub fn parse_bounds_csv(text: &str) -> Result<Vec<BoundCheckRecord>> {
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Format(format!("malformed bound row {line:?}")));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Format(e.to_string()));
        out.push(BoundCheckRecord {
            step: f[0].parse().map_err(|_| Error::Format(format!("bad step {:?}", f[0])))?,
            which_bound: BoundKind::parse(f[1])?,
            lhs: num(f[2])?,
            rhs: num(f[3])?,
            margin: num(f[4])?,
        });
    }
    Ok(out)
}

pub fn read_reference(path: &Path) -> Result<ReferenceSolution> {
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    // Accept either a bare solution or the `reference` subcommand's output.
    let inner = v.get("reference").cloned().unwrap_or(v);
    Ok(serde_json::from_value(inner)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{make_hard_dataset, sample_separable};
    use crate::optimizers::{run_gd, ConvergenceTest, GDConfig};
    use crate::reference::solve_minimizer;

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt17(0.05), "5.0000000000000003e-2");
        assert_eq!(fmt17(0.1).parse::<f64>().unwrap(), 0.1);
        let j = to_json17(&serde_json::json!({"a": 0.1, "n": 3, "v": [1.0, 2.5e-300]})).unwrap();
        assert!(j.contains("1.0000000000000001e-1"));
        assert!(j.contains("\"n\": 3"));
    }

    #[test]
    fn dataset_roundtrip() {
        for ds in [sample_separable::<f64>(8, 3, 0.3, 7).unwrap(), make_hard_dataset::<f64>(0.05).unwrap()] {
            let text = dataset_to_json(&ds, Some(7)).unwrap();
            let back = dataset_from_json(&text).unwrap();
            assert_eq!(back, ds);
        }
        let plain = LabeledDataset::from_rows(vec![vec![0.3, -0.2]], vec![-1]).unwrap();
        assert_eq!(dataset_from_json(&dataset_to_json(&plain, None).unwrap()).unwrap(), plain);
    }

    #[test]
    fn dataset_rejects_bad_files() {
        let bad = r#"{"schema":"eosgd.dataset/1","dim":1,"count":1,"rows":[[0.5, 0.0]]}"#;
        assert!(dataset_from_json(bad).is_err());
        let bad = r#"{"schema":"eosgd.dataset/1","dim":1,"count":2,"rows":[[0.5, 1]]}"#;
        assert!(dataset_from_json(bad).is_err());
        let bad = r#"{"schema":"other","dim":1,"count":1,"rows":[[0.5, 1]]}"#;
        assert!(dataset_from_json(bad).is_err());
    }

    #[test]
    fn trajectory_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_hard_dataset::<f64>(0.05).unwrap();
        let sol = solve_minimizer(&ds, 1e-3, 1e-12).unwrap();
        let cfg = GDConfig::new(12.0, 1e-3, 2, 400).with_stride(7).with_convergence(ConvergenceTest::Never);
        let tr = run_gd(&ds, &cfg, Some(&sol)).unwrap();
        let p = dir.path().join("t.csv");
        write_trajectory(&p, &tr, &ds.content_hash(), Some(DatasetMeta::of(&ds).unwrap())).unwrap();
        let (back, meta) = read_trajectory(&p).unwrap();
        assert_eq!(back, tr);
        assert_eq!(meta.dataset_hash, ds.content_hash());
        assert_eq!(meta.dataset, Some(DatasetMeta { gamma: 0.05, n: 2 }));
    }

    #[test]
    fn bounds_roundtrip() {
        let recs = vec![
            BoundCheckRecord { step: 3, lhs: 0.1, rhs: 0.3, margin: 0.3 - 0.1, which_bound: BoundKind::ParamBound },
            BoundCheckRecord { step: 4, lhs: 1.0, rhs: 0.5, margin: -0.5, which_bound: BoundKind::ContractionRisk },
        ];
        let text = bounds_csv(&recs);
        assert!(text.contains(",true\n"));
        assert_eq!(parse_bounds_csv(&text).unwrap(), recs);
        assert_eq!(parse_bounds_csv(&bounds_csv(&[])).unwrap(), vec![]);
    }
}
