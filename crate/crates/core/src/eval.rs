//! Hyper-parameter grid sweeps and their reports.
//!
//! A sweep trains one fresh model per grid cell (and per replicate), scores
//! it on the development set and collects the results. Cells run one after
//! another; a cell that errors or panics is recorded as failed and the sweep
//! moves on.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::panic::{catch_unwind, AssertUnwindSafe};

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::hash::fnv1a64;
use crate::huffman::CodecSpec;
use crate::ngram::{parse_ngram_set, NGramSet};
use crate::trainer::{train, IndexerSpec, TrainConfig};

/// Values to sweep. An empty axis keeps the base configuration's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepAxes {
    /// n-gram set shorthands such as `"4,8,12,16"` or `"2[1-8]"`.
    pub ngram_sets: Vec<String>,
    pub weight_decays: Vec<f64>,
    pub embedding_dims: Vec<usize>,
    pub table_sizes: Vec<u64>,
    /// `"none"` or a codec spec such as `"byte:2"`.
    pub codecs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    #[serde(default)]
    pub axes: SweepAxes,
    #[serde(default)]
    pub base: TrainConfig,
    #[serde(default = "one")]
    pub replicates: usize,
    #[serde(default)]
    pub base_seed: u64,
    /// Upper bound on `cells * replicates`.
    #[serde(default = "default_budget")]
    pub max_runs: usize,
}

fn one() -> usize {
    1
}

fn default_budget() -> usize {
    256
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            axes: SweepAxes::default(),
            base: TrainConfig::default(),
            replicates: 1,
            base_seed: 0,
            max_runs: default_budget(),
        }
    }
}

/// Coordinates of one grid cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub ngrams: String,
    pub weight_decay: f64,
    pub dim: usize,
    /// `None` for top-k indexing.
    pub table_size: Option<u64>,
    pub codec: Option<CodecSpec>,
}

impl CellKey {
    fn coordinates(&self) -> String {
        format!(
            "{}|{:e}|{}|{}|{}",
            self.ngrams,
            self.weight_decay,
            self.dim,
            self.table_size.map_or("-".into(), |t| t.to_string()),
            self.codec.map_or("none".into(), |c| c.to_string()),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    /// Mean final development error over replicates.
    pub dev_error: f64,
    pub replicate_errors: Vec<f64>,
    /// Total training wall time over replicates.
    pub train_time_s: f64,
    pub samples_per_sec: f64,
    pub compression_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum CellOutcome {
    Done(CellMetrics),
    Failed { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub outcome: CellOutcome,
}

impl CellResult {
    pub fn dev_error(&self) -> Option<f64> {
        match &self.outcome {
            CellOutcome::Done(m) => Some(m.dev_error),
            CellOutcome::Failed { .. } => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub cells: Vec<CellResult>,
}

impl SweepReport {
    pub fn cell(&self, key: &CellKey) -> Option<&CellResult> {
        self.cells.iter().find(|c| &c.key == key)
    }

    /// Lowest development error over cells with the given n-gram set.
    pub fn best_for_ngrams(&self, ngrams: &str) -> Option<&CellResult> {
        self.cells
            .iter()
            .filter(|c| c.key.ngrams == ngrams && c.dev_error().is_some())
            .min_by(|a, b| a.dev_error().unwrap().total_cmp(&b.dev_error().unwrap()))
    }
}

/// Cell configurations in row-major order (n-gram set outermost, codec innermost).
pub fn expand(spec: &SweepSpec) -> Result<Vec<(CellKey, TrainConfig)>> {
    let bad = |msg: String| Err(Error::InvalidConfig(msg));
    if spec.replicates == 0 {
        return bad("replicates must be at least 1".into());
    }
    let ngram_sets: Vec<NGramSet> = if spec.axes.ngram_sets.is_empty() {
        vec![spec.base.ngrams.clone()]
    } else {
        spec.axes
            .ngram_sets
            .iter()
            .map(|s| parse_ngram_set(s))
            .collect::<Result<_>>()?
    };
    let or_base = |axis: &[f64], base: f64| if axis.is_empty() { vec![base] } else { axis.to_vec() };
    let decays = or_base(&spec.axes.weight_decays, spec.base.weight_decay);
    let dims = if spec.axes.embedding_dims.is_empty() {
        vec![spec.base.dim]
    } else {
        spec.axes.embedding_dims.clone()
    };
    let table_sizes: Vec<Option<u64>> = match (&spec.base.indexer, spec.axes.table_sizes.is_empty()) {
        (IndexerSpec::Hashed { table_size, .. }, true) => vec![Some(*table_size)],
        (IndexerSpec::Hashed { .. }, false) => spec.axes.table_sizes.iter().map(|&t| Some(t)).collect(),
        (IndexerSpec::TopK { .. }, true) => vec![None],
        (IndexerSpec::TopK { .. }, false) => {
            return bad("table_sizes axis requires a hashed base indexer".into());
        }
    };
    let codecs: Vec<Option<CodecSpec>> = if spec.axes.codecs.is_empty() {
        vec![spec.base.codec]
    } else {
        spec.axes
            .codecs
            .iter()
            .map(|c| match c.as_str() {
                "none" => Ok(None),
                other => other.parse().map(Some).map_err(Error::InvalidConfig),
            })
            .collect::<Result<_>>()?
    };

    let cells = ngram_sets.len() * decays.len() * dims.len() * table_sizes.len() * codecs.len();
    let runs = cells.saturating_mul(spec.replicates);
    if runs > spec.max_runs {
        return bad(format!(
            "sweep needs {runs} training runs ({cells} cells x {} replicates), budget is {}",
            spec.replicates, spec.max_runs
        ));
    }

    let mut out = Vec::with_capacity(cells);
    for ngrams in &ngram_sets {
        for &weight_decay in &decays {
            for &dim in &dims {
                for &table_size in &table_sizes {
                    for &codec in &codecs {
                        let mut config = spec.base.clone();
                        config.ngrams = ngrams.clone();
                        config.weight_decay = weight_decay;
                        config.dim = dim;
                        if let (IndexerSpec::Hashed { table_size: t, .. }, Some(size)) =
                            (&mut config.indexer, table_size)
                        {
                            *t = size;
                        }
                        config.codec = codec;
                        let key = CellKey {
                            ngrams: ngrams.to_string(),
                            weight_decay,
                            dim,
                            table_size,
                            codec,
                        };
                        out.push((key, config));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Seed for one replicate of one cell: FNV-1a of the base seed and the cell coordinates.
pub fn cell_seed(base_seed: u64, key: &CellKey, replicate: usize) -> u64 {
    let mut bytes = base_seed.to_le_bytes().to_vec();
    bytes.extend_from_slice(key.coordinates().as_bytes());
    bytes.extend_from_slice(&(replicate as u64).to_le_bytes());
    fnv1a64(&bytes)
}

pub fn run_sweep(spec: &SweepSpec, train_set: &Dataset, dev_set: &Dataset) -> Result<SweepReport> {
    resume_sweep(spec, train_set, dev_set, None, |_| {})
}

/// Runs every cell not already completed in `previous`, calling `on_cell` after each.
pub fn resume_sweep(
    spec: &SweepSpec,
    train_set: &Dataset,
    dev_set: &Dataset,
    previous: Option<&SweepReport>,
    mut on_cell: impl FnMut(&CellResult),
) -> Result<SweepReport> {
    let cells = expand(spec)?;
    let mut report = SweepReport {
        cells: Vec::with_capacity(cells.len()),
    };
    for (key, config) in cells {
        let done = previous
            .and_then(|p| p.cell(&key))
            .filter(|c| matches!(c.outcome, CellOutcome::Done(_)));
        let result = match done {
            Some(c) => c.clone(),
            None => {
                log::info!("sweep cell {}", key.coordinates());
                let outcome = run_cell(spec, &key, config, train_set, dev_set);
                CellResult { key, outcome }
            }
        };
        on_cell(&result);
        report.cells.push(result);
    }
    Ok(report)
}

fn run_cell(spec: &SweepSpec, key: &CellKey, config: TrainConfig, train_set: &Dataset, dev_set: &Dataset) -> CellOutcome {
    let mut errors = Vec::with_capacity(spec.replicates);
    let (mut time, mut rate, mut ratio) = (0.0, 0.0, None);
    for replicate in 0..spec.replicates {
        let config = TrainConfig {
            seed: cell_seed(spec.base_seed, key, replicate),
            ..config.clone()
        };
        let run = catch_unwind(AssertUnwindSafe(|| train(&config, train_set, Some(dev_set))));
        let out = match run {
            Ok(Ok(out)) => out,
            Ok(Err(e)) => return CellOutcome::Failed { reason: e.to_string() },
            Err(panic) => {
                let msg = panic
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "unknown panic".into());
                return CellOutcome::Failed {
                    reason: format!("panic: {msg}"),
                };
            }
        };
        let Some(err) = out.report.final_dev_error() else {
            return CellOutcome::Failed {
                reason: "no development error recorded".into(),
            };
        };
        errors.push(err);
        time += out.report.epochs.iter().map(|e| e.wall_time_s).sum::<f64>();
        rate += out.report.epochs.iter().map(|e| e.samples_per_sec).sum::<f64>() / out.report.epochs.len() as f64;
        ratio = out.report.compression_ratio;
    }
    let n = errors.len() as f64;
    CellOutcome::Done(CellMetrics {
        dev_error: errors.iter().sum::<f64>() / n,
        replicate_errors: errors,
        train_time_s: time,
        samples_per_sec: rate / n,
        compression_ratio: ratio,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    /// Markdown grid: n-gram sets by weight decays, errors in percent, minimum in bold.
    TableText,
    /// CSV, one row per cell.
    Delimited,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "table" | "table-text" | "text" => Ok(ReportFormat::TableText),
            "csv" | "delimited" => Ok(ReportFormat::Delimited),
            _ => Err(format!("unknown report format {s:?} (expected table-text or delimited)")),
        }
    }
}

pub fn render_report(report: &SweepReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::TableText => render_table(report),
        ReportFormat::Delimited => render_delimited(report),
    }
}

fn distinct<T: PartialEq + Clone>(items: impl Iterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for i in items {
        if !out.contains(&i) {
            out.push(i);
        }
    }
    out
}

fn render_table(report: &SweepReport) -> String {
    let groups = distinct(report.cells.iter().map(|c| (c.key.dim, c.key.table_size, c.key.codec)));
    if groups.is_empty() {
        return "| n-grams |\n|---|\n".into();
    }
    let mut out = String::new();
    for (g, &(dim, table_size, codec)) in groups.iter().enumerate() {
        let cells: Vec<&CellResult> = report
            .cells
            .iter()
            .filter(|c| (c.key.dim, c.key.table_size, c.key.codec) == (dim, table_size, codec))
            .collect();
        if groups.len() > 1 {
            if g > 0 {
                out.push('\n');
            }
            let _ = writeln!(
                out,
                "dim {dim}, table {}, codec {}\n",
                table_size.map_or("top-k".into(), |t| t.to_string()),
                codec.map_or("none".into(), |c| c.to_string())
            );
        }
        let rows = distinct(cells.iter().map(|c| c.key.ngrams.clone()));
        let cols = distinct(cells.iter().map(|c| c.key.weight_decay));
        let best = cells
            .iter()
            .filter_map(|c| c.dev_error())
            .min_by(f64::total_cmp);

        out.push_str("| n-grams |");
        for d in &cols {
            let _ = write!(out, " {d:e} |");
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(cols.len()));
        out.push('\n');
        for r in &rows {
            let _ = write!(out, "| {r} |");
            for &d in &cols {
                let cell = cells.iter().find(|c| &c.key.ngrams == r && c.key.weight_decay == d);
                let text = match cell.map(|c| &c.outcome) {
                    None => "-".to_string(),
                    Some(CellOutcome::Failed { .. }) => "failed".to_string(),
                    Some(CellOutcome::Done(m)) if Some(m.dev_error) == best => {
                        format!("**{:.2}**", 100.0 * m.dev_error)
                    }
                    Some(CellOutcome::Done(m)) => format!("{:.2}", 100.0 * m.dev_error),
                };
                let _ = write!(out, " {text} |");
            }
            out.push('\n');
        }
    }
    out
}

const COLUMNS: [&str; 11] = [
    "ngrams",
    "weight_decay",
    "dim",
    "table_size",
    "codec",
    "status",
    "dev_error",
    "replicate_errors",
    "train_time_s",
    "samples_per_sec",
    "compression_ratio",
];

fn render_delimited(report: &SweepReport) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = COLUMNS.to_vec();
    header.push("reason");
    w.write_record(&header).expect("writing to memory");
    for c in &report.cells {
        let k = &c.key;
        let mut row = vec![
            k.ngrams.clone(),
            k.weight_decay.to_string(),
            k.dim.to_string(),
            k.table_size.map_or(String::new(), |t| t.to_string()),
            k.codec.map_or("none".into(), |c| c.to_string()),
        ];
        match &c.outcome {
            CellOutcome::Done(m) => row.extend([
                "done".into(),
                m.dev_error.to_string(),
                m.replicate_errors.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
                m.train_time_s.to_string(),
                m.samples_per_sec.to_string(),
                m.compression_ratio.map_or(String::new(), |r| r.to_string()),
                String::new(),
            ]),
            CellOutcome::Failed { reason } => {
                row.extend(["failed".into()]);
                row.extend(std::iter::repeat_n(String::new(), 5));
                row.push(reason.clone());
            }
        }
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flushing to memory")).expect("csv output is utf-8")
}

/// Reads a report written in the delimited format.
pub fn parse_delimited(text: &str) -> Result<SweepReport> {
    let bad = |line: usize, reason: String| Error::Parse {
        path: "<report>".into(),
        line,
        reason,
    };
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| bad(1, e.to_string()))?.clone();
    if header.iter().take(COLUMNS.len()).ne(COLUMNS.iter().copied()) {
        return Err(bad(1, "unexpected header".into()));
    }
    let mut cells = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| bad(line, e.to_string()))?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let num = |j: usize| -> Result<f64> {
            field(j)
                .parse::<f64>()
                .map_err(|_| bad(line, format!("column {} is not a number: {:?}", COLUMNS[j], field(j))))
        };
        let opt = |j: usize| -> Result<Option<f64>> {
            if field(j).is_empty() { Ok(None) } else { num(j).map(Some) }
        };
        let key = CellKey {
            ngrams: field(0).to_string(),
            weight_decay: num(1)?,
            dim: field(2).parse().map_err(|_| bad(line, "bad dim".into()))?,
            table_size: match field(3) {
                "" => None,
                t => Some(t.parse().map_err(|_| bad(line, "bad table size".into()))?),
            },
            codec: match field(4) {
                "none" => None,
                c => Some(c.parse().map_err(|e: String| bad(line, e))?),
            },
        };
        let outcome = match field(5) {
            "done" => CellOutcome::Done(CellMetrics {
                dev_error: num(6)?,
                replicate_errors: field(7)
                    .split(';')
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|_| bad(line, "bad replicate error".into())))
                    .collect::<Result<_>>()?,
                train_time_s: num(8)?,
                samples_per_sec: num(9)?,
                compression_ratio: opt(10)?,
            }),
            "failed" => CellOutcome::Failed {
                reason: field(11).to_string(),
            },
            s => return Err(bad(line, format!("unknown status {s:?}"))),
        };
        cells.push(CellResult { key, outcome });
    }
    Ok(SweepReport { cells })
}

/// Distinct n-gram sets in the order they first appear.
pub fn ngram_rows(report: &SweepReport) -> Vec<String> {
    let mut seen = BTreeSet::new();
    report
        .cells
        .iter()
        .filter(|c| seen.insert(c.key.ngrams.clone()))
        .map(|c| c.key.ngrams.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, split, SyntheticKind, SyntheticParams};
    use crate::hash::HashVariant;

    fn small_base() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            dim: 4,
            indexer: IndexerSpec::Hashed {
                hash: HashVariant::Fnv1a64,
                table_size: 1 << 10,
            },
            ..TrainConfig::text_preset()
        }
    }

    fn data() -> (Dataset, Dataset) {
        let p = SyntheticParams {
            n: 120,
            min_len: 8,
            max_len: 24,
            ..Default::default()
        };
        let d = generate_synthetic(SyntheticKind::SeparableText, &p, 3).unwrap();
        split(&d, 0.75, 0).unwrap()
    }

    fn done(ngrams: &str, wd: f64, err: f64) -> CellResult {
        CellResult {
            key: CellKey {
                ngrams: ngrams.into(),
                weight_decay: wd,
                dim: 16,
                table_size: Some(1 << 24),
                codec: None,
            },
            outcome: CellOutcome::Done(CellMetrics {
                dev_error: err,
                replicate_errors: vec![err],
                train_time_s: 1.5,
                samples_per_sec: 1000.0,
                compression_ratio: None,
            }),
        }
    }

    #[test]
    fn paper_grid_shape() {
        let spec = SweepSpec {
            axes: SweepAxes {
                ngram_sets: ["1", "2", "4", "8", "12", "16", "1[1-2]", "2[1-2]", "4[1-2]", "2[1-4]", "4[1-4]", "2[1-8]"]
                    .map(String::from)
                    .to_vec(),
                weight_decays: vec![1e-3, 1e-4, 1e-5],
                ..Default::default()
            },
            ..Default::default()
        };
        let cells = expand(&spec).unwrap();
        assert_eq!(cells.len(), 36);
        assert_eq!(cells[1].0.ngrams, "{1}");
        assert_eq!(cells[1].1.weight_decay, 1e-4);
    }

    #[test]
    fn expansion_errors() {
        let budget = SweepSpec {
            axes: SweepAxes {
                embedding_dims: vec![4, 8, 16],
                ..Default::default()
            },
            replicates: 2,
            max_runs: 5,
            ..Default::default()
        };
        assert!(expand(&budget).unwrap_err().to_string().contains("budget"));
        let bad_set = SweepSpec {
            axes: SweepAxes {
                ngram_sets: vec!["[3-1]".into()],
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(expand(&bad_set).is_err());
        let bad_codec = SweepSpec {
            axes: SweepAxes {
                codecs: vec!["none".into(), "trit:2".into()],
                ..Default::default()
            },
            ..Default::default()
        };
        assert!(expand(&bad_codec).is_err());
    }

    #[test]
    fn single_cell_matches_direct_training() {
        let (tr, dev) = data();
        let spec = SweepSpec {
            base: small_base(),
            base_seed: 11,
            ..Default::default()
        };
        let report = run_sweep(&spec, &tr, &dev).unwrap();
        assert_eq!(report.cells.len(), 1);
        let cell = &report.cells[0];
        let config = TrainConfig {
            seed: cell_seed(11, &cell.key, 0),
            ..small_base()
        };
        let direct = train(&config, &tr, Some(&dev)).unwrap();
        assert_eq!(cell.dev_error(), direct.report.final_dev_error());

        let again = run_sweep(&spec, &tr, &dev).unwrap();
        assert_eq!(again.cells[0].dev_error(), cell.dev_error());
    }

    #[test]
    fn failing_cell_does_not_disturb_others() {
        let (tr, dev) = data();
        let spec = SweepSpec {
            base: small_base(),
            axes: SweepAxes {
                embedding_dims: vec![4, 0, 4],
                ..Default::default()
            },
            ..Default::default()
        };
        let report = run_sweep(&spec, &tr, &dev).unwrap();
        assert!(matches!(report.cells[1].outcome, CellOutcome::Failed { .. }));
        assert!(report.cells[0].dev_error().is_some());
        assert_eq!(report.cells[0].dev_error(), report.cells[2].dev_error());

        let mut calls = 0;
        let resumed = resume_sweep(&spec, &tr, &dev, Some(&report), |_| calls += 1).unwrap();
        assert_eq!(calls, 3);
        assert_eq!(resumed.cells[0], report.cells[0]);
    }

    #[test]
    fn table_rendering() {
        let empty = render_report(&SweepReport::default(), ReportFormat::TableText);
        assert_eq!(empty, "| n-grams |\n|---|\n");

        let single = SweepReport {
            cells: vec![done("{4}", 1e-3, 0.1234)],
        };
        let text = render_report(&single, ReportFormat::TableText);
        assert_eq!(text, "| n-grams | 1e-3 |\n|---|---:|\n| {4} | **12.34** |\n");

        let grid = SweepReport {
            cells: vec![
                done("{1}", 1e-3, 0.5),
                done("{1}", 1e-4, 0.4),
                done("{4}", 1e-3, 0.2),
                CellResult {
                    outcome: CellOutcome::Failed { reason: "boom".into() },
                    ..done("{4}", 1e-4, 0.0)
                },
            ],
        };
        let text = render_report(&grid, ReportFormat::TableText);
        assert!(text.contains("| {1} | 50.00 | 40.00 |"), "{text}");
        assert!(text.contains("| {4} | **20.00** | failed |"), "{text}");
        assert_eq!(ngram_rows(&grid), vec!["{1}", "{4}"]);
    }

    #[test]
    fn delimited_roundtrip() {
        let mut cells = vec![done("{4,8}", 1e-5, 0.0625), done("{1}", 0.001, 1.0 / 3.0)];
        cells[1].key.codec = Some("byte:2".parse().unwrap());
        cells[1].key.table_size = None;
        if let CellOutcome::Done(m) = &mut cells[1].outcome {
            m.compression_ratio = Some(0.5);
            m.replicate_errors = vec![0.25, 5.0 / 12.0];
        }
        cells.push(CellResult {
            outcome: CellOutcome::Failed {
                reason: "bad, \"quoted\" reason".into(),
            },
            ..done("{2}", 1e-4, 0.0)
        });
        let report = SweepReport { cells };
        let text = render_report(&report, ReportFormat::Delimited);
        assert_eq!(parse_delimited(&text).unwrap(), report);

        let empty = render_report(&SweepReport::default(), ReportFormat::Delimited);
        assert_eq!(empty.lines().count(), 1);
        assert_eq!(parse_delimited(&empty).unwrap(), SweepReport::default());
        assert!(parse_delimited("a,b\n1,2\n").is_err());
    }

    #[test]
    fn spec_json_defaults() {
        let spec: SweepSpec = serde_json::from_str(r#"{"axes": {"weight_decays": [0.001, 0.0001]}}"#).unwrap();
        assert_eq!(spec.replicates, 1);
        assert_eq!(spec.base, TrainConfig::default());
        assert_eq!(expand(&spec).unwrap().len(), 2);
    }
}
