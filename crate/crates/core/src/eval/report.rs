//! Markdown renderings of evaluation results.
//!
//! Two layouts: a per-setup table (`| Setup | Accuracy | Precision | Recall |`)
//! and a component table with one ✓/✗ column per model family and pipeline
//! stage. Scores print as percentages with one decimal; undefined values
//! print as `—`.

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use crate::backend::REFERENCE_COST_PER_SAMPLE_USD;
use crate::debate::{DebateConfig, DebateStrategy};

pub const UNDEFINED: &str = "—";
pub const CHECK: &str = "✓";
pub const CROSS: &str = "✗";

/// Model families shown as columns in the component table.
pub const MODEL_COLUMNS: [&str; 2] = ["LLaVA", "GPT-4o"];

/// Scores as fractions in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl Scores {
    pub fn from_percent(accuracy: f64, precision: f64, recall: f64) -> Self {
        Self {
            accuracy: Some(accuracy / 100.0),
            precision: Some(precision / 100.0),
            recall: Some(recall / 100.0),
        }
    }

    fn cells(&self) -> [String; 3] {
        [pct(self.accuracy), pct(self.precision), pct(self.recall)]
    }
}

impl From<&MetricsReport> for Scores {
    fn from(m: &MetricsReport) -> Self {
        Self {
            accuracy: Some(m.accuracy),
            precision: m.precision,
            recall: m.recall,
        }
    }
}

pub fn pct(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{:.1}", v * 100.0),
        None => UNDEFINED.to_string(),
    }
}

fn row(cells: &[String]) -> String {
    format!("| {} |", cells.join(" | "))
}

fn separator(n: usize) -> String {
    format!("|{}", "---|".repeat(n))
}

/// Human-readable name of a debate setup.
pub fn setup_label(config: &DebateConfig, retrieval: bool) -> String {
    if config.num_agents() <= 1 && config.max_rounds == 0 {
        return if retrieval {
            "Single agent (w external info)".into()
        } else {
            "Single agent (w/o external info)".into()
        };
    }
    match config.strategy {
        DebateStrategy::AsyncAIFraming => "Async_Debate_AI".into(),
        DebateStrategy::AsyncHumanFraming if retrieval => "Async_Debate_human (w external info)".into(),
        DebateStrategy::AsyncHumanFraming => "Async_Debate_human (w/o external info)".into(),
        DebateStrategy::ActorSkeptic => "Actor-Skeptic".into(),
        DebateStrategy::Judged => "Judged Debate".into(),
        DebateStrategy::Disambiguation => "Debate with Disambiguation".into(),
    }
}

/// Table with one row per debate setup.
pub fn setup_table<'a>(rows: impl IntoIterator<Item = (&'a str, Scores)>) -> String {
    let mut out = vec![
        row(&["Setup".into(), "Accuracy".into(), "Precision".into(), "Recall".into()]),
        separator(4),
    ];
    for (label, scores) in rows {
        let mut cells = vec![label.to_string()];
        cells.extend(scores.cells());
        out.push(row(&cells));
    }
    out.join("\n") + "\n"
}

/// One row of the component table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRow {
    pub model_id: String,
    pub retrieval: bool,
    pub debate: bool,
    pub scores: Scores,
}

fn normalized(s: &str) -> String {
    s.chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .flat_map(|c| c.to_lowercase())
        .collect()
}

/// Whether `model_id` belongs to the family named by a column header.
pub fn model_matches(column: &str, model_id: &str) -> bool {
    normalized(model_id).contains(&normalized(column))
}

fn mark(on: bool) -> String {
    if on { CHECK } else { CROSS }.to_string()
}

pub fn component_table(rows: &[ComponentRow]) -> String {
    let mut header: Vec<String> = MODEL_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(["Retrieval", "Debate", "Accuracy", "Precision", "Recall"].map(String::from));
    let mut out = vec![row(&header), separator(header.len())];
    for r in rows {
        let mut cells: Vec<String> = MODEL_COLUMNS
            .iter()
            .map(|c| mark(model_matches(c, &r.model_id)))
            .collect();
        cells.push(mark(r.retrieval));
        cells.push(mark(r.debate));
        cells.extend(r.scores.cells());
        out.push(row(&cells));
    }
    out.join("\n") + "\n"
}

fn opt3(v: Option<f64>) -> String {
    v.map_or_else(|| UNDEFINED.to_string(), |v| format!("{v:.3}"))
}

/// Full text report for one run: setup table, counts and cost.
pub fn render_report(label: &str, m: &MetricsReport) -> String {
    let mut out = setup_table([(label, Scores::from(m))]);
    out.push('\n');
    out.push_str(&format!(
        "samples: {}  correct: {}  unparseable: {}  errors: {}\n",
        m.total, m.correct, m.unparseable, m.errors
    ));
    out.push_str(&format!("TP {}  FP {}  TN {}  FN {}\n", m.tp, m.fp, m.tn, m.fn_));
    out.push_str(&format!(
        "accuracy {:.3}  precision {}  recall {}\n",
        m.accuracy,
        opt3(m.precision),
        opt3(m.recall)
    ));
    let cost = m
        .mean_cost_usd
        .map_or_else(|| "n/a".to_string(), |c| format!("${c:.4}"));
    out.push_str(&format!(
        "cost/sample: {cost} (reference ${REFERENCE_COST_PER_SAMPLE_USD:.2})  latency/sample: {:.2}s\n",
        m.mean_latency_secs
    ));
    out
}
