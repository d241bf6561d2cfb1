//! Synthetic-benchmark evaluation, seed aggregation, and report
//! emission.
//!
//! Question splits score greedy (argmax) decoding of the answer token
//! against the oracle answer; the captioning split scores teacher-forced
//! next-token predictions pooled over caption positions. The Avg column
//! is the arithmetic mean of the split scores.

pub use crate::data::{EvalSplit, SplitName};

use crate::data::CorpusRecord;
use crate::error::{Error, Result};
use crate::model::TinyVlm;
use serde::{Deserialize, Serialize};

/// Exact-match accuracy of a model on one split. Never mutates the
/// model.
pub fn evaluate(model: &TinyVlm, split: &EvalSplit) -> Result<f64> {
    if split.records.is_empty() {
        return Err(Error::EmptySplit(split.name.as_str().into()));
    }
    let mut correct = 0usize;
    let mut total = 0usize;
    for (record, batch) in split.records.iter().zip(&split.batches) {
        let bundle = model.infer(batch)?;
        match record {
            CorpusRecord::Question { answer, .. } => {
                let pos = record.predict_pos(batch.m).expect("question record");
                total += 1;
                if argmax(bundle.logits.row(pos)) == *answer as usize {
                    correct += 1;
                }
            }
            CorpusRecord::Caption { .. } => {
                // Pool every supervised caption position.
                for i in 0..batch.k() - 1 {
                    let supervised = batch.relevance_mask[i]
                        && batch.relevance_mask[i + 1]
                        && i + 1 >= batch.m;
                    if supervised {
                        total += 1;
                        if argmax(bundle.logits.row(i)) == batch.target_classes[i + 1] as usize {
                            correct += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(correct as f64 / total as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

// ── result tables ────────────────────────────────────────────────────

/// One evaluated run: a method under a strategy at one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub strategy: String,
    pub seed: u64,
    /// Aligned with the table's `split_names`.
    pub scores: Vec<f64>,
}

impl ResultRow {
    /// Arithmetic mean of the split scores (the Avg column).
    pub fn avg(&self) -> f64 {
        self.scores.iter().sum::<f64>() / self.scores.len() as f64
    }
}

/// Mean ± sample standard deviation over the seeds of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub strategy: String,
    pub n_seeds: usize,
    pub mean: Vec<f64>,
    pub stdev: Vec<f64>,
    pub mean_avg: f64,
    pub stdev_avg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub split_names: Vec<String>,
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    /// (bottom_up, top_down) full-scale reference averages, attached by
    /// strategy comparisons that include both orderings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_full_scale: Option<(f64, f64)>,
}

impl ResultTable {
    pub fn aggregate_for(&self, method: &str) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.method == method)
    }
}

fn mean_stdev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Assemble a table from per-seed rows: validates score widths and
/// builds mean ± stdev aggregates grouped by method, in first-appearance
/// order.
pub fn make_table(split_names: Vec<String>, rows: Vec<ResultRow>) -> Result<ResultTable> {
    for r in &rows {
        if r.scores.len() != split_names.len() {
            return Err(Error::InconsistentTables(format!(
                "row `{}` (seed {}) has {} scores for {} splits",
                r.method,
                r.seed,
                r.scores.len(),
                split_names.len()
            )));
        }
    }
    let mut order: Vec<(String, String)> = Vec::new();
    for r in &rows {
        let key = (r.method.clone(), r.strategy.clone());
        if !order.contains(&key) {
            order.push(key);
        }
    }
    let mut aggregates = Vec::new();
    for (method, strategy) in order {
        let group: Vec<&ResultRow> =
            rows.iter().filter(|r| r.method == method && r.strategy == strategy).collect();
        let mut mean = Vec::new();
        let mut stdev = Vec::new();
        for s in 0..split_names.len() {
            let vals: Vec<f64> = group.iter().map(|r| r.scores[s]).collect();
            let (m, sd) = mean_stdev(&vals);
            mean.push(m);
            stdev.push(sd);
        }
        let avgs: Vec<f64> = group.iter().map(|r| r.avg()).collect();
        let (mean_avg, stdev_avg) = mean_stdev(&avgs);
        aggregates.push(AggregateRow {
            method,
            strategy,
            n_seeds: group.len(),
            mean,
            stdev,
            mean_avg,
            stdev_avg,
        });
    }
    Ok(ResultTable { split_names, rows, aggregates, reference_full_scale: None })
}

/// Merge per-seed tables (one per replicate) into one aggregated table.
pub fn aggregate(tables: &[ResultTable]) -> Result<ResultTable> {
    let Some(first) = tables.first() else {
        return Err(Error::InconsistentTables("no tables to aggregate".into()));
    };
    for t in tables {
        if t.split_names != first.split_names {
            return Err(Error::InconsistentTables(format!(
                "split sets differ: {:?} vs {:?}",
                t.split_names, first.split_names
            )));
        }
    }
    let rows: Vec<ResultRow> = tables.iter().flat_map(|t| t.rows.iter().cloned()).collect();
    make_table(first.split_names.clone(), rows)
}

// ── report emission ──────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Result<ReportFormat> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::InvalidArgument {
                op: "report_format",
                detail: format!("unknown format `{other}` (csv|json|markdown)"),
            }),
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

/// Serialize a table. Floats are written in shortest round-trip form, so
/// serialization is bit-deterministic and injective on tables.
pub fn emit_report(table: &ResultTable, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(table)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => Ok(emit_csv(table)),
        ReportFormat::Markdown => Ok(emit_markdown(table)),
    }
}

fn emit_csv(table: &ResultTable) -> String {
    let mut out = String::new();
    out.push_str("row,method,strategy,seed,n_seeds");
    for s in &table.split_names {
        out.push(',');
        out.push_str(s);
    }
    out.push_str(",avg\n");
    for r in &table.rows {
        out.push_str(&format!("seed,{},{},{},", r.method, r.strategy, r.seed));
        for v in &r.scores {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{}\n", r.avg()));
    }
    for a in &table.aggregates {
        out.push_str(&format!("mean,{},{},,{}", a.method, a.strategy, a.n_seeds));
        for v in &a.mean {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{}\n", a.mean_avg));
        out.push_str(&format!("stdev,{},{},,{}", a.method, a.strategy, a.n_seeds));
        for v in &a.stdev {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(",{}\n", a.stdev_avg));
    }
    out
}

fn emit_markdown(table: &ResultTable) -> String {
    let mut out = String::new();
    out.push_str("| method | strategy | seed |");
    for s in &table.split_names {
        out.push_str(&format!(" {s} |"));
    }
    out.push_str(" avg |\n|---|---|---|");
    for _ in &table.split_names {
        out.push_str("---|");
    }
    out.push_str("---|\n");
    for r in &table.rows {
        out.push_str(&format!("| {} | {} | {} |", r.method, r.strategy, r.seed));
        for v in &r.scores {
            out.push_str(&format!(" {v} |"));
        }
        out.push_str(&format!(" {} |\n", r.avg()));
    }
    for a in &table.aggregates {
        out.push_str(&format!("| {} | {} | mean±stdev (n={}) |", a.method, a.strategy, a.n_seeds));
        for (m, s) in a.mean.iter().zip(&a.stdev) {
            out.push_str(&format!(" {m} ± {s} |"));
        }
        out.push_str(&format!(" {} ± {} |\n", a.mean_avg, a.stdev_avg));
    }
    if let Some((bu, td)) = table.reference_full_scale {
        out.push_str(&format!(
            "\nFull-scale reference averages: bottom_up {bu} vs top_down {td}.\n"
        ));
    }
    out
}

/// Parse a table back out of its CSV form. `emit_csv(parse(emit_csv(t)))`
/// reproduces the bytes exactly.
pub fn parse_report_csv(text: &str) -> Result<ResultTable> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::Serde("empty csv".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 6 || cols[0] != "row" {
        return Err(Error::Serde("not a result-table csv".into()));
    }
    let split_names: Vec<String> =
        cols[5..cols.len() - 1].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::Serde(format!("ragged csv line: `{line}`")));
        }
        let parse_f64 = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::Serde(format!("bad float `{s}`: {e}")))
        };
        match f[0] {
            "seed" => {
                let scores = f[5..f.len() - 1]
                    .iter()
                    .map(|s| parse_f64(s))
                    .collect::<Result<Vec<f64>>>()?;
                rows.push(ResultRow {
                    method: f[1].to_string(),
                    strategy: f[2].to_string(),
                    seed: f[3]
                        .parse()
                        .map_err(|e| Error::Serde(format!("bad seed `{}`: {e}", f[3])))?,
                    scores,
                });
            }
            // Aggregates are recomputed from the seed rows.
            "mean" | "stdev" => {}
            other => return Err(Error::Serde(format!("unknown row kind `{other}`"))),
        }
    }
    make_table(split_names, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, seed: u64, scores: Vec<f64>) -> ResultRow {
        ResultRow { method: method.into(), strategy: "none".into(), seed, scores }
    }

    fn names() -> Vec<String> {
        vec!["lookup".into(), "counting".into()]
    }

    #[test]
    fn avg_is_arithmetic_mean() {
        let r = row("m", 0, vec![0.5, 0.7]);
        assert!((r.avg() - 0.6).abs() < 1e-15);
    }

    #[test]
    fn single_seed_stdev_is_zero() {
        let t = make_table(names(), vec![row("m", 0, vec![0.5, 0.7])]).unwrap();
        assert_eq!(t.aggregates[0].stdev, vec![0.0, 0.0]);
        assert_eq!(t.aggregates[0].stdev_avg, 0.0);
    }

    #[test]
    fn duplicated_rows_have_zero_stdev_and_same_mean() {
        let t = make_table(
            names(),
            vec![row("m", 0, vec![0.5, 0.7]), row("m", 1, vec![0.5, 0.7])],
        )
        .unwrap();
        assert_eq!(t.aggregates[0].mean, vec![0.5, 0.7]);
        assert_eq!(t.aggregates[0].stdev, vec![0.0, 0.0]);
    }

    #[test]
    fn matches_spreadsheet_recomputation() {
        // Five hand-made rows; mean and sample stdev recomputed by hand:
        // values 0.2 0.4 0.6 0.8 1.0 → mean 0.6, stdev sqrt(0.1).
        let rows: Vec<ResultRow> = (0..5)
            .map(|i| row("m", i, vec![0.2 * (i + 1) as f64, 0.5]))
            .collect();
        let t = make_table(names(), rows).unwrap();
        let a = &t.aggregates[0];
        assert!((a.mean[0] - 0.6).abs() < 1e-12);
        assert!((a.stdev[0] - (0.1f64).sqrt()).abs() < 1e-12);
        assert!((a.mean[1] - 0.5).abs() < 1e-12);
        assert_eq!(a.stdev[1], 0.0);
    }

    #[test]
    fn aggregate_rejects_inconsistent_split_sets() {
        let t1 = make_table(names(), vec![row("m", 0, vec![0.5, 0.7])]).unwrap();
        let t2 = make_table(vec!["lookup".into()], vec![row("m", 1, vec![0.5])]).unwrap();
        assert!(matches!(aggregate(&[t1, t2]), Err(Error::InconsistentTables(_))));
    }

    #[test]
    fn csv_round_trip_is_identical_bytes() {
        let t = make_table(
            names(),
            vec![row("a", 0, vec![0.125, 0.7071067811865476]), row("b", 1, vec![1.0 / 3.0, 0.9])],
        )
        .unwrap();
        let csv = emit_report(&t, ReportFormat::Csv).unwrap();
        let parsed = parse_report_csv(&csv).unwrap();
        let again = emit_report(&parsed, ReportFormat::Csv).unwrap();
        assert_eq!(csv, again);
    }

    #[test]
    fn header_only_for_empty_tables() {
        let t = make_table(names(), vec![]).unwrap();
        let csv = emit_report(&t, ReportFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn distinct_tables_produce_distinct_reports() {
        let t1 = make_table(names(), vec![row("m", 0, vec![0.5, 0.7])]).unwrap();
        let t2 = make_table(names(), vec![row("m", 0, vec![0.5000001, 0.7])]).unwrap();
        for fmt in [ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown] {
            assert_ne!(emit_report(&t1, fmt).unwrap(), emit_report(&t2, fmt).unwrap());
        }
    }
}
