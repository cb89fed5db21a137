//! Run manifests and result tables.
//!
//! Tables have one row per prompt setting and one column per context length
//! (or question complexity), each followed by its change against the
//! baseline row, plus a drop-rate column for context-length tables. Output is
//! a pure function of the records and manifest, so reruns diff cleanly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bench::metrics::{accuracy_table, by_context_length, extremum_drop_rate, row, GroupBy, Percent};
use crate::bench::{Bucket, EvalRecord, PromptMode};
use crate::cache::{CacheCounters, CacheStats};
use crate::model::{canonical_hash, Digest};

/// Every counter a run reports. All fields are always present.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub chunks: u64,
    pub unique_chunks: u64,
    pub tagger_calls: u64,
    pub cache_hits: u64,
    pub parse_failures: u64,
    pub fidelity_failures: u64,
    pub dropped_spans: u64,
    pub records: u64,
    pub flagged: u64,
    pub errors: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Effective configuration after flags and config file are merged.
    pub config: serde_json::Value,
    pub config_hash: Digest,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_set_hash: Option<Digest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tagger: Option<String>,
    pub seed: u64,
    pub counts: StageCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache: Option<CacheStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_counters: Option<CacheCounters>,
    /// Unix seconds.
    pub started_at: u64,
    pub finished_at: u64,
}

impl RunManifest {
    pub fn new(command: &str, config: serde_json::Value, seed: u64) -> Self {
        let config_hash = canonical_hash(&config).expect("config serializes");
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config,
            config_hash,
            category_set_hash: None,
            model_id: None,
            tagger: None,
            seed,
            counts: StageCounts::default(),
            cache: None,
            cache_counters: None,
            started_at: now(),
            finished_at: 0,
        }
    }

    pub fn finish(&mut self) {
        self.finished_at = now();
    }
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Report {
    pub markdown: String,
    /// The accuracy table alone.
    pub csv: String,
    /// Per-bucket change against each model's baseline row. Absent when no
    /// row has a baseline to compare with.
    pub delta_csv: Option<String>,
}

/// One rendered table: header cells and rows of cells.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
    /// (row, col) cells that beat the baseline, bolded in Markdown.
    gains: BTreeSet<(usize, usize)>,
}

/// The three setting columns: tagged context, tagger, tag definition in prompt.
fn setting_cells(mode: PromptMode, tagger: Option<&str>) -> [String; 3] {
    match mode {
        PromptMode::Baseline => ["No".into(), "-".into(), "No".into()],
        PromptMode::Td => ["No".into(), "-".into(), "Yes".into()],
        PromptMode::TdTc => ["Yes".into(), tagger.unwrap_or("-").into(), "Yes".into()],
    }
}

fn setting_label(mode: PromptMode, tagger: Option<&str>) -> String {
    match (mode, tagger) {
        (PromptMode::TdTc, Some(t)) => format!("{} ({t})", mode.label()),
        _ => mode.label().to_string(),
    }
}

const LEAD: [&str; 4] = ["Model", "Tagged context", "Tagger", "Tag definition in prompt"];

struct Row {
    model: String,
    mode: PromptMode,
    tagger: Option<String>,
    acc: BTreeMap<Bucket, Percent>,
}

fn collect_rows(runs: &[(&RunManifest, &[EvalRecord])], group_by: GroupBy) -> (Vec<Row>, BTreeSet<Bucket>) {
    let mut rows = Vec::new();
    let mut buckets = BTreeSet::new();
    for (m, records) in runs {
        let acc = accuracy_table(records, group_by);
        buckets.extend(acc.keys().map(|(_, b)| *b));
        let modes: BTreeSet<PromptMode> = acc.keys().map(|(m, _)| *m).collect();
        for mode in modes {
            rows.push(Row {
                model: m.model_id.clone().unwrap_or_else(|| "model".into()),
                mode,
                tagger: m.tagger.clone(),
                acc: row(&acc, mode),
            });
        }
    }
    (rows, buckets)
}

/// Each model's first baseline row.
fn baselines(rows: &[Row]) -> BTreeMap<&str, &BTreeMap<Bucket, Percent>> {
    let mut out = BTreeMap::new();
    for r in rows.iter().filter(|r| r.mode == PromptMode::Baseline) {
        out.entry(r.model.as_str()).or_insert(&r.acc);
    }
    out
}

fn lead_cells(r: &Row) -> Vec<String> {
    let mut cells = vec![r.model.clone()];
    cells.extend(setting_cells(r.mode, r.tagger.as_deref()));
    cells
}

fn accuracy_view(rows: &[Row], buckets: &BTreeSet<Bucket>, group_by: GroupBy) -> Table {
    let with_drop = group_by == GroupBy::ContextLength;
    let mut header: Vec<String> = LEAD.iter().map(|s| s.to_string()).collect();
    header.extend(buckets.iter().map(Bucket::to_string));
    if with_drop {
        header.push("Extremum drop rate".into());
    }
    let base = baselines(rows);
    let mut out = Vec::new();
    let mut gains = BTreeSet::new();
    for r in rows {
        let mut cells = lead_cells(r);
        for b in buckets {
            let v = r.acc.get(b);
            let bv = base.get(r.model.as_str()).and_then(|br| br.get(b));
            if let (Some(v), Some(bv), false) = (v, bv, r.mode == PromptMode::Baseline) {
                if v > bv {
                    gains.insert((out.len(), cells.len()));
                }
            }
            cells.push(v.map(Percent::to_string).unwrap_or_default());
        }
        if with_drop {
            cells.push(
                extremum_drop_rate(&by_context_length(&r.acc))
                    .map(|p| p.to_string())
                    .unwrap_or_default(),
            );
        }
        out.push(cells);
    }
    Table {
        header,
        rows: out,
        gains,
    }
}

fn delta_view(rows: &[Row], buckets: &BTreeSet<Bucket>) -> Option<Table> {
    let base = baselines(rows);
    let mut header: Vec<String> = LEAD.iter().map(|s| s.to_string()).collect();
    header.extend(buckets.iter().map(|b| format!("{b} Δ")));
    let mut out = Vec::new();
    let mut gains = BTreeSet::new();
    for r in rows.iter().filter(|r| r.mode != PromptMode::Baseline) {
        let Some(br) = base.get(r.model.as_str()) else { continue };
        let mut cells = lead_cells(r);
        for b in buckets {
            match (r.acc.get(b), br.get(b)) {
                (Some(v), Some(bv)) => {
                    let d = *v - *bv;
                    if d.0 > 0 {
                        gains.insert((out.len(), cells.len()));
                    }
                    cells.push(d.signed());
                }
                _ => cells.push(String::new()),
            }
        }
        out.push(cells);
    }
    (!out.is_empty()).then_some(Table {
        header,
        rows: out,
        gains,
    })
}

fn render_csv(t: &Table) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for line in std::iter::once(&t.header).chain(&t.rows) {
        w.write_record(line).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("cells are UTF-8")
}

fn render_markdown(t: &Table) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "| {} |", t.header.join(" | "));
    let aligns: Vec<&str> = t
        .header
        .iter()
        .enumerate()
        .map(|(i, _)| if i < LEAD.len() { "---" } else { "---:" })
        .collect();
    let _ = writeln!(out, "| {} |", aligns.join(" | "));
    for (ri, r) in t.rows.iter().enumerate() {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(ci, c)| {
                if t.gains.contains(&(ri, ci)) {
                    format!("**{c}**")
                } else {
                    c.clone()
                }
            })
            .collect();
        let _ = writeln!(out, "| {} |", cells.join(" | "));
    }
    out
}

/// Counts of records that failed or could not be scored, per setting.
fn problems(records: &[EvalRecord]) -> BTreeMap<PromptMode, (usize, usize, usize)> {
    let mut out: BTreeMap<PromptMode, (usize, usize, usize)> = BTreeMap::new();
    for r in records {
        let e = out.entry(r.mode).or_default();
        e.0 += 1;
        e.1 += usize::from(r.flagged);
        e.2 += usize::from(r.error.is_some());
    }
    out
}

/// Render one run's records as Markdown and CSV. Records lacking the
/// grouping field are left out of the table; [`default_grouping`] picks a
/// field they all have.
pub fn emit_report(records: &[EvalRecord], manifest: &RunManifest, group_by: GroupBy) -> Report {
    emit_combined_report(&[(manifest, records)], group_by)
}

/// Several runs in one table, rows in run order. Runs sharing a model id are
/// compared against the first baseline row of that model, so a second tagger
/// can be evaluated in the tagged-context setting alone.
pub fn emit_combined_report(runs: &[(&RunManifest, &[EvalRecord])], group_by: GroupBy) -> Report {
    let (rows, buckets) = collect_rows(runs, group_by);
    let table = accuracy_view(&rows, &buckets, group_by);
    let delta = delta_view(&rows, &buckets);

    let mut md = String::new();
    let title = match group_by {
        GroupBy::ContextLength => "Accuracy by context length",
        GroupBy::Complexity => "Accuracy by question type",
        GroupBy::Mode => "Accuracy by setting",
    };
    let _ = writeln!(md, "## {title}\n");
    md.push_str(&render_markdown(&table));
    let _ = writeln!(md, "\nBold cells beat the same model's baseline row.");
    if group_by == GroupBy::ContextLength {
        let _ = writeln!(
            md,
            "Extremum drop rate is 100 x (shortest-length accuracy - longest-length accuracy) / shortest-length accuracy."
        );
    }
    if let Some(d) = &delta {
        let _ = writeln!(md, "\n### Change against baseline (percentage points)\n");
        md.push_str(&render_markdown(d));
    }
    let _ = writeln!(
        md,
        "\n### Records\n\n| Model | Setting | Records | Flagged | Errors |\n| --- | --- | ---: | ---: | ---: |"
    );
    for (m, records) in runs {
        let model = m.model_id.as_deref().unwrap_or("model");
        for (mode, (n, f, e)) in problems(records) {
            let _ = writeln!(
                md,
                "| {model} | {} | {n} | {f} | {e} |",
                setting_label(mode, m.tagger.as_deref())
            );
        }
    }
    let _ = writeln!(md);
    for (m, _) in runs {
        let _ = writeln!(
            md,
            "Tool version {}, config {}, seed {}.",
            m.tool_version,
            &m.config_hash.to_hex()[..12],
            m.seed
        );
    }
    Report {
        markdown: md,
        csv: render_csv(&table),
        delta_csv: delta.as_ref().map(render_csv),
    }
}

/// Context length when every record has one, otherwise complexity.
pub fn default_grouping(records: &[EvalRecord]) -> GroupBy {
    if records.iter().all(|r| r.context_length.is_some()) {
        GroupBy::ContextLength
    } else if records.iter().all(|r| r.complexity.is_some()) {
        GroupBy::Complexity
    } else {
        GroupBy::Mode
    }
}
