//! CSV schemas, mean ± stddev summaries and charts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use hwrel_core::dramfault::CampaignRecord;
use hwrel_core::macfault::{FaultTrainRecord, SweepRecord};
use hwrel_core::netcore::train::EpochStats;
use hwrel_core::netcore::NumericMode;
use hwrel_core::neurorel::MappingRow;

use crate::svg::{heat_map, line_chart, Series};

/// One line of `deactivation.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeactivationRow {
    pub run: usize,
    pub seed: u64,
    pub faulty_pes: usize,
    pub critical_pes: usize,
    pub feasible: bool,
    pub deactivated: usize,
    pub active_pes: usize,
    pub active_faulty: usize,
    pub active_fault_rate: f64,
    pub active_critical: usize,
    pub adjacent_pairs: usize,
    pub faulty_accuracy: Option<f64>,
    pub deactivated_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub mode: NumericMode,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsoTraceRow {
    pub iteration: usize,
    pub global_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub column: usize,
    pub class: usize,
    pub recall_drop_pp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnduranceRow {
    pub row: usize,
    pub col: usize,
    pub path_length: usize,
    pub temperature: f64,
    pub endurance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    Bitpos,
    Column,
    Sweep,
    Deactivation,
    FaultTrain,
    Endurance,
    Mapping,
    History,
    Accuracy,
    PsoTrace,
}

const CAMPAIGN: &[&str] = &["campaign", "bit_pos", "column", "fault_count", "run_seed", "accuracy", "drop_pp"];

impl Schema {
    pub const ALL: [Schema; 10] = [
        Schema::Accuracy,
        Schema::History,
        Schema::Bitpos,
        Schema::Column,
        Schema::Sweep,
        Schema::Deactivation,
        Schema::FaultTrain,
        Schema::Endurance,
        Schema::Mapping,
        Schema::PsoTrace,
    ];

    pub fn file_name(self) -> &'static str {
        match self {
            Schema::Bitpos => "bitpos.csv",
            Schema::Column => "column.csv",
            Schema::Sweep => "sweep.csv",
            Schema::Deactivation => "deactivation.csv",
            Schema::FaultTrain => "fault_train.csv",
            Schema::Endurance => "endurance.csv",
            Schema::Mapping => "mapping.csv",
            Schema::History => "history.csv",
            Schema::Accuracy => "accuracy.csv",
            Schema::PsoTrace => "pso_trace.csv",
        }
    }

    /// Schema of a file, from its name (`sweep.csv`, `sweep-int8.csv`, ...).
    pub fn of_path(path: &Path) -> Option<Schema> {
        let name = path.file_name()?.to_str()?;
        let stem = name.strip_suffix(".csv")?;
        Schema::ALL.into_iter().find(|s| {
            let base = s.file_name().trim_end_matches(".csv");
            stem == base || stem.strip_prefix(base).is_some_and(|rest| rest.starts_with('-'))
        })
    }

    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Schema::Bitpos | Schema::Column => CAMPAIGN,
            Schema::Sweep => &["format", "K", "FR", "seed", "accuracy", "drop_pp"],
            Schema::Deactivation => &[
                "run",
                "seed",
                "faulty_pes",
                "critical_pes",
                "feasible",
                "deactivated",
                "active_pes",
                "active_faulty",
                "active_fault_rate",
                "active_critical",
                "adjacent_pairs",
                "faulty_accuracy",
                "deactivated_accuracy",
            ],
            Schema::FaultTrain => &[
                "seed",
                "faulty_pes",
                "deactivated",
                "clean_accuracy",
                "faulty_accuracy",
                "control_clean_accuracy",
                "retrained_faulty_accuracy",
                "loss_before_pct",
                "loss_after_pct",
            ],
            Schema::Endurance => &["row", "col", "path_length", "temperature", "endurance"],
            Schema::Mapping => &["cluster", "tile", "synapse", "cell_row", "cell_col", "endurance", "lifetime"],
            Schema::History => &["epoch", "mean_loss", "test_accuracy"],
            Schema::Accuracy => &["mode", "accuracy"],
            Schema::PsoTrace => &["iteration", "global_best"],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: empty CSV, nothing to report")]
    Empty { path: PathBuf },
    #[error("{path}: unrecognized CSV name (expected one of {})", known_names())]
    Unknown { path: PathBuf },
    #[error("{path}: column `{column}`: {message}")]
    Schema { path: PathBuf, column: String, message: String },
    #[error("{path}: line {line}: {message}")]
    Row { path: PathBuf, line: u64, message: String },
    #[error("{path}: no recognized CSV files")]
    NothingToReport { path: PathBuf },
}

fn known_names() -> String {
    Schema::ALL.iter().map(|s| s.file_name()).collect::<Vec<_>>().join(", ")
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<(), ReportError> {
    let err = |column: &str, message: String| ReportError::Schema { path: path.into(), column: column.into(), message };
    for (i, w) in want.iter().enumerate() {
        match got.get(i) {
            Some(g) if g == *w => {}
            Some(g) => return Err(err(g, format!("column {} should be `{w}`", i + 1))),
            None => return Err(err(w, "missing".into())),
        }
    }
    if let Some(extra) = got.get(want.len()) {
        return Err(err(extra, format!("unexpected column {}", want.len() + 1)));
    }
    Ok(())
}

/// Reads a CSV with the given schema; mismatches name the offending column.
pub fn read_rows<T: DeserializeOwned>(path: &Path, schema: Schema) -> Result<Vec<T>, ReportError> {
    let bytes = std::fs::read(path).map_err(|source| ReportError::Io { path: path.into(), source })?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(ReportError::Empty { path: path.into() });
    }
    let mut rdr = csv::Reader::from_reader(bytes.as_slice());
    let headers = rdr.headers().map_err(|e| row_error(path, &csv::StringRecord::new(), e))?.clone();
    check_header(path, &headers, schema.columns())?;
    let rows = rdr
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| row_error(path, &headers, e))?;
    if rows.is_empty() {
        return Err(ReportError::Empty { path: path.into() });
    }
    Ok(rows)
}

fn row_error(path: &Path, headers: &csv::StringRecord, e: csv::Error) -> ReportError {
    let line = e.position().map_or(0, |p| p.line());
    if let csv::ErrorKind::Deserialize { err, .. } = e.kind() {
        if let Some(column) = err.field().and_then(|f| headers.get(f as usize)) {
            return ReportError::Schema {
                path: path.into(),
                column: column.into(),
                message: format!("line {line}: {}", err.kind()),
            };
        }
    }
    ReportError::Row { path: path.into(), line, message: e.to_string() }
}

/// Mean and sample standard deviation; one value gives stddev 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn pm(xs: &[f64]) -> String {
    let (m, s) = mean_std(xs);
    format!("{m:.4} ± {s:.4}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(headers: &[&str]) -> Self {
        Self { headers: headers.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("| {} |\n|{}\n", self.headers.join(" | "), "---|".repeat(self.headers.len()));
        for r in &self.rows {
            out.push_str(&format!("| {} |\n", r.join(" | ")));
        }
        out
    }
}

/// Summary of one CSV: a table and any charts as `(file name, svg)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Section {
    pub title: String,
    pub table: Table,
    pub charts: Vec<(String, String)>,
}

/// Groups by key, keeping first-seen key order.
fn group<T, K: PartialEq + Clone>(rows: &[T], key: impl Fn(&T) -> K) -> Vec<(K, Vec<&T>)> {
    let mut out: Vec<(K, Vec<&T>)> = Vec::new();
    for r in rows {
        let k = key(r);
        match out.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(r),
            None => out.push((k, vec![r])),
        }
    }
    out
}

pub fn bitpos_section(records: &[CampaignRecord]) -> Section {
    let mut table = Table::new(&["bit_pos", "fault_count", "runs", "accuracy", "drop_pp (mean ± std)"]);
    let mut by_bit: BTreeMap<u32, Vec<(f64, f64, f64)>> = BTreeMap::new();
    for ((bit, count), g) in group(records, |r| (r.bit_pos, r.fault_count)) {
        let acc: Vec<f64> = g.iter().map(|r| r.accuracy).collect();
        let drop: Vec<f64> = g.iter().map(|r| r.drop_pp).collect();
        table.push(vec![bit.to_string(), count.to_string(), g.len().to_string(), pm(&acc), pm(&drop)]);
        let (m, s) = mean_std(&drop);
        by_bit.entry(bit).or_default().push((count as f64, m, s));
    }
    let series: Vec<Series> = by_bit
        .into_iter()
        .rev()
        .map(|(bit, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label: format!("bit {bit}"), points }
        })
        .collect();
    let chart = line_chart("Accuracy drop vs faults per layer", "faults per layer", "accuracy drop (pp)", &series);
    Section { title: "DRAM bit-position campaign".into(), table, charts: vec![("bitpos.svg".into(), chart)] }
}

pub fn column_section(records: &[CampaignRecord]) -> Section {
    let mut table = Table::new(&["column", "bit_pos", "fault_count", "runs", "drop_pp (mean ± std)"]);
    let mut points = Vec::new();
    for ((col, bit, count), g) in group(records, |r| (r.column, r.bit_pos, r.fault_count)) {
        let drop: Vec<f64> = g.iter().map(|r| r.drop_pp).collect();
        let col_s = col.map_or("-".into(), |c| c.to_string());
        table.push(vec![col_s, bit.to_string(), count.to_string(), g.len().to_string(), pm(&drop)]);
        if let Some(c) = col {
            let (m, s) = mean_std(&drop);
            points.push((c as f64, m, s));
        }
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let series = [Series { label: "mean drop".into(), points }];
    let chart = line_chart("Accuracy drop vs faulty column", "output-layer column", "accuracy drop (pp)", &series);
    Section { title: "DRAM column campaign".into(), table, charts: vec![("column.svg".into(), chart)] }
}

pub fn sweep_section(records: &[SweepRecord]) -> Section {
    let mut table = Table::new(&["format", "K", "FR", "runs", "accuracy % (mean ± std)", "drop_pp (mean ± std)"]);
    let mut by_k: Vec<((String, u32), Vec<(f64, f64, f64)>)> = Vec::new();
    for ((format, k, fr), g) in group(records, |r| (r.format, r.k, r.fr.to_bits())) {
        let fr = f64::from_bits(fr);
        let acc: Vec<f64> = g.iter().map(|r| 100.0 * r.accuracy).collect();
        let drop: Vec<f64> = g.iter().map(|r| r.drop_pp).collect();
        table.push(vec![format.to_string(), k.to_string(), fr.to_string(), g.len().to_string(), pm(&acc), pm(&drop)]);
        let key = (format.to_string(), k);
        let (m, s) = mean_std(&acc);
        match by_k.iter_mut().find(|(kk, _)| *kk == key) {
            Some((_, v)) => v.push((fr, m, s)),
            None => by_k.push((key, vec![(fr, m, s)])),
        }
    }
    let series: Vec<Series> = by_k
        .into_iter()
        .map(|((format, k), mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            Series { label: format!("{format} K={k}"), points }
        })
        .collect();
    let chart = line_chart("Accuracy vs fault rate", "fault rate (% of PEs per column)", "accuracy (%)", &series);
    Section { title: "MAC LSB sensitivity sweep".into(), table, charts: vec![("sweep.svg".into(), chart)] }
}

pub fn deactivation_section(rows: &[DeactivationRow]) -> Section {
    let mut table = Table::new(&["metric", "runs", "mean ± std"]);
    let feasible: Vec<&DeactivationRow> = rows.iter().filter(|r| r.feasible).collect();
    table.push(vec!["feasible runs".into(), rows.len().to_string(), format!("{}", feasible.len())]);
    let metrics: [(&str, fn(&DeactivationRow) -> Option<f64>); 8] = [
        ("faulty PEs", |r| Some(r.faulty_pes as f64)),
        ("critical PEs", |r| Some(r.critical_pes as f64)),
        ("deactivated", |r| Some(r.deactivated as f64)),
        ("active fault rate", |r| Some(r.active_fault_rate)),
        ("active critical", |r| Some(r.active_critical as f64)),
        ("adjacent active faulty pairs", |r| Some(r.adjacent_pairs as f64)),
        ("accuracy before", |r| r.faulty_accuracy),
        ("accuracy after", |r| r.deactivated_accuracy),
    ];
    for (name, f) in metrics {
        let xs: Vec<f64> = feasible.iter().filter_map(|r| f(r)).collect();
        if !xs.is_empty() {
            table.push(vec![name.into(), xs.len().to_string(), pm(&xs)]);
        }
    }
    Section { title: "PE deactivation".into(), table, charts: Vec::new() }
}

pub fn fault_train_section(rows: &[FaultTrainRecord]) -> Section {
    let mut table = Table::new(&["metric", "runs", "mean ± std"]);
    let before: Vec<f64> = rows.iter().map(|r| r.loss_before_pct).collect();
    let after: Vec<f64> = rows.iter().map(|r| r.loss_after_pct).collect();
    let col = |f: fn(&FaultTrainRecord) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let n = rows.len().to_string();
    table.push(vec!["faulty PEs".into(), n.clone(), pm(&col(|r| r.faulty_pes as f64))]);
    table.push(vec!["deactivated".into(), n.clone(), pm(&col(|r| r.deactivated as f64))]);
    table.push(vec!["normalized loss before (%)".into(), n.clone(), pm(&before)]);
    table.push(vec!["normalized loss after (%)".into(), n.clone(), pm(&after)]);
    let (mb, _) = mean_std(&before);
    let (ma, _) = mean_std(&after);
    let reduction = if mb > 0.0 { format!("{:.1}%", 100.0 * (1.0 - ma / mb)) } else { "n/a".into() };
    table.push(vec!["relative reduction".into(), n, reduction]);
    Section { title: "Fault-aware training".into(), table, charts: Vec::new() }
}

pub fn endurance_section(rows: &[EnduranceRow]) -> Section {
    let n = rows.iter().map(|r| r.row.max(r.col) + 1).max().unwrap_or(0);
    let mut grid = vec![vec![f64::NAN; n]; n];
    for r in rows {
        grid[r.row][r.col] = r.endurance;
    }
    let e: Vec<f64> = rows.iter().map(|r| r.endurance).collect();
    let lo = e.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let t: Vec<f64> = rows.iter().map(|r| r.temperature).collect();
    let mut table = Table::new(&["metric", "value"]);
    table.push(vec!["crossbar".into(), format!("{n}×{n}")]);
    table.push(vec!["endurance min".into(), format!("{lo:.4e}")]);
    table.push(vec!["endurance max".into(), format!("{hi:.4e}")]);
    table.push(vec!["max / min".into(), format!("{:.4e}", hi / lo)]);
    table.push(vec!["temperature (K)".into(), pm(&t)]);
    let chart = heat_map("Cell endurance", &grid, "write cycles");
    Section { title: "Endurance map".into(), table, charts: vec![("endurance_heatmap.svg".into(), chart)] }
}

pub fn mapping_section(rows: &[MappingRow]) -> Section {
    let mut clusters: Vec<usize> = rows.iter().map(|r| r.cluster).collect();
    clusters.dedup();
    clusters.sort_unstable();
    clusters.dedup();
    let mut tiles: Vec<usize> = rows.iter().map(|r| r.tile).collect();
    tiles.sort_unstable();
    tiles.dedup();
    let finite: Vec<f64> = rows.iter().map(|r| r.lifetime).filter(|l| l.is_finite()).collect();
    let min_life = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mut table = Table::new(&["metric", "value"]);
    table.push(vec!["synapses".into(), rows.len().to_string()]);
    table.push(vec!["clusters".into(), clusters.len().to_string()]);
    table.push(vec!["tiles used".into(), tiles.len().to_string()]);
    table.push(vec!["min lifetime (windows)".into(), format!("{min_life:.4e}")]);
    if !finite.is_empty() {
        let (m, s) = mean_std(&finite);
        table.push(vec!["lifetime (mean ± std)".into(), format!("{m:.4e} ± {s:.4e}")]);
    }
    Section { title: "Neuromorphic mapping".into(), table, charts: Vec::new() }
}

pub fn history_section(rows: &[EpochStats]) -> Section {
    let mut table = Table::new(&["epoch", "mean_loss", "test_accuracy"]);
    for r in rows {
        let acc = r.test_accuracy.map_or("-".into(), |a| format!("{a:.4}"));
        table.push(vec![r.epoch.to_string(), format!("{:.4}", r.mean_loss), acc]);
    }
    Section { title: "Training history".into(), table, charts: Vec::new() }
}

pub fn accuracy_section(rows: &[AccuracyRow]) -> Section {
    let mut table = Table::new(&["mode", "runs", "accuracy (mean ± std)"]);
    for (mode, g) in group(rows, |r| r.mode) {
        let acc: Vec<f64> = g.iter().map(|r| r.accuracy).collect();
        table.push(vec![mode.to_string(), g.len().to_string(), pm(&acc)]);
    }
    Section { title: "Test accuracy".into(), table, charts: Vec::new() }
}

pub fn pso_section(rows: &[PsoTraceRow]) -> Section {
    let mut table = Table::new(&["metric", "value"]);
    table.push(vec!["iterations".into(), rows.len().to_string()]);
    table.push(vec!["first global best".into(), format!("{:.6}", rows[0].global_best)]);
    table.push(vec!["final global best".into(), format!("{:.6}", rows[rows.len() - 1].global_best)]);
    let points = rows.iter().map(|r| (r.iteration as f64, r.global_best, 0.0)).collect();
    let chart = line_chart("PSO convergence", "iteration", "global-best fitness", &[Series { label: "global best".into(), points }]);
    Section { title: "PSO trace".into(), table, charts: vec![("pso_trace.svg".into(), chart)] }
}

/// Reads and summarizes one CSV.
pub fn section_for(path: &Path, schema: Schema) -> Result<Section, ReportError> {
    Ok(match schema {
        Schema::Bitpos => bitpos_section(&read_rows(path, schema)?),
        Schema::Column => column_section(&read_rows(path, schema)?),
        Schema::Sweep => sweep_section(&read_rows(path, schema)?),
        Schema::Deactivation => deactivation_section(&read_rows(path, schema)?),
        Schema::FaultTrain => fault_train_section(&read_rows(path, schema)?),
        Schema::Endurance => endurance_section(&read_rows(path, schema)?),
        Schema::Mapping => mapping_section(&read_rows(path, schema)?),
        Schema::History => history_section(&read_rows(path, schema)?),
        Schema::Accuracy => accuracy_section(&read_rows(path, schema)?),
        Schema::PsoTrace => pso_section(&read_rows(path, schema)?),
    })
}

/// CSVs to report on: recognized files in a directory (sorted), or the
/// given file, which must have a recognized name.
fn collect(path: &Path) -> Result<Vec<(PathBuf, Schema)>, ReportError> {
    if path.is_dir() {
        let entries = std::fs::read_dir(path).map_err(|source| ReportError::Io { path: path.into(), source })?;
        let mut files: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
        files.sort();
        let found: Vec<(PathBuf, Schema)> =
            files.into_iter().filter_map(|f| Schema::of_path(&f).map(|s| (f, s))).collect();
        if found.is_empty() {
            return Err(ReportError::NothingToReport { path: path.into() });
        }
        Ok(found)
    } else {
        match Schema::of_path(path) {
            Some(s) => Ok(vec![(path.into(), s)]),
            None if !path.exists() => Err(ReportError::Io {
                path: path.into(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            }),
            None => Err(ReportError::Unknown { path: path.into() }),
        }
    }
}

/// Summarizes every input into `out/summary.md` plus charts; returns the
/// markdown.
pub fn report(inputs: &[PathBuf], out: &Path) -> Result<String, ReportError> {
    let mut md = String::from("# hwrel report\n");
    let mut charts = Vec::new();
    for input in inputs {
        for (path, schema) in collect(input)? {
            let s = section_for(&path, schema)?;
            md.push_str(&format!("\n## {} ({})\n\n{}", s.title, path.display(), s.table.to_markdown()));
            for (name, svg) in s.charts {
                md.push_str(&format!("\n![{name}]({name})\n"));
                charts.push((name, svg));
            }
        }
    }
    let io = |source| ReportError::Io { path: out.into(), source };
    std::fs::create_dir_all(out).map_err(io)?;
    for (name, svg) in charts {
        std::fs::write(out.join(name), svg).map_err(io)?;
    }
    std::fs::write(out.join("summary.md"), &md).map_err(io)?;
    Ok(md)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn single_row_gives_zero_spread() {
        assert_eq!(mean_std(&[0.25]), (0.25, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "sweep.csv", "format,K,FR,seed,accuracy,drop_pp\nint8,2,5.0,1,0.97,0.3\n");
        let s = section_for(&p, Schema::Sweep).unwrap();
        assert_eq!(s.table.rows[0][5], "0.3000 ± 0.0000");
    }

    #[test]
    fn empty_csv_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "bitpos.csv", "");
        assert!(matches!(section_for(&p, Schema::Bitpos), Err(ReportError::Empty { .. })));
        let p = write(dir.path(), "column.csv", "campaign,bit_pos,column,fault_count,run_seed,accuracy,drop_pp\n");
        assert!(matches!(section_for(&p, Schema::Column), Err(ReportError::Empty { .. })));
    }

    #[test]
    fn schema_errors_cite_the_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "sweep.csv", "format,k,FR,seed,accuracy,drop_pp\nint8,2,5,1,0.9,0.1\n");
        let e = section_for(&p, Schema::Sweep).unwrap_err();
        assert!(matches!(&e, ReportError::Schema { column, .. } if column == "k"), "{e}");
        let p = write(dir.path(), "sweep.csv", "format,K,FR,seed,accuracy,drop_pp\nint8,2,5,1,high,0.1\n");
        let e = section_for(&p, Schema::Sweep).unwrap_err();
        assert!(matches!(&e, ReportError::Schema { column, .. } if column == "accuracy"), "{e}");
        let p = write(dir.path(), "history.csv", "epoch,mean_loss\n1,0.5\n");
        let e = section_for(&p, Schema::History).unwrap_err();
        assert!(matches!(&e, ReportError::Schema { column, .. } if column == "test_accuracy"), "{e}");
    }

    #[test]
    fn column_table_has_one_row_per_column() {
        let mut csv = String::from("campaign,bit_pos,column,fault_count,run_seed,accuracy,drop_pp\n");
        for col in 0..12 {
            for seed in 0..10 {
                csv.push_str(&format!("column,7,{col},20,{seed},0.9,{}\n", if col < 10 { 1.0 } else { 0.0 }));
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "column.csv", &csv);
        let s = section_for(&p, Schema::Column).unwrap();
        assert_eq!(s.table.rows.len(), 12);
        assert_eq!(s.table.rows[3][0], "3");
        assert_eq!(s.table.rows[3][3], "10");
        assert_eq!(s.table.rows[3][4], "1.0000 ± 0.0000");
        assert_eq!(s.table.rows[11][4], "0.0000 ± 0.0000");
    }

    #[test]
    fn names_map_to_schemas() {
        assert_eq!(Schema::of_path(Path::new("a/sweep.csv")), Some(Schema::Sweep));
        assert_eq!(Schema::of_path(Path::new("sweep-bf16.csv")), Some(Schema::Sweep));
        assert_eq!(Schema::of_path(Path::new("bitpos_summary.csv")), None);
        assert_eq!(Schema::of_path(Path::new("column_recall.csv")), None);
    }

    #[test]
    fn unknown_explicit_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "other.csv", "a\n1\n");
        assert!(matches!(report(&[p], dir.path()), Err(ReportError::Unknown { .. })));
    }
}
