use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::debate::{DecisionRule, ResultFlag};
use crate::prompt::Verdict;

/// Outcome for one evaluated sample. One JSON line in the records file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub label: Label,
    pub predicted: Verdict,
    pub converged: bool,
    pub rounds_used: u32,
    pub decision_rule: Option<DecisionRule>,
    pub cost_usd: Option<f64>,
    pub latency_secs: f64,
    pub backend_calls: usize,
    pub explanation: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<ResultFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PredictionRecord {
    pub fn is_correct(&self) -> bool {
        self.predicted == self.label.expected_verdict()
    }

    /// Record for a sample whose session could not complete.
    pub fn failed(sample_id: impl Into<String>, label: Label, error: impl Into<String>) -> Self {
        Self {
            sample_id: sample_id.into(),
            label,
            predicted: Verdict::Unparseable,
            converged: false,
            rounds_used: 0,
            decision_rule: None,
            cost_usd: None,
            latency_secs: 0.0,
            backend_calls: 0,
            explanation: String::new(),
            flags: Vec::new(),
            error: Some(error.into()),
        }
    }
}

/// An exact fraction; `den == 0` means undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn value(self) -> Option<f64> {
        (self.den != 0).then(|| self.num as f64 / self.den as f64)
    }
}

/// Accuracy, precision and recall with misinformation as the positive
/// class. Unparseable predictions count as wrong for accuracy and are kept
/// out of the confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub total: u64,
    pub correct: u64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub unparseable: u64,
    pub errors: u64,
    pub accuracy: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub mean_cost_usd: Option<f64>,
    pub mean_latency_secs: f64,
}

impl MetricsReport {
    pub fn accuracy_ratio(&self) -> Ratio {
        Ratio {
            num: self.tp + self.tn,
            den: self.total,
        }
    }

    pub fn precision_ratio(&self) -> Ratio {
        Ratio {
            num: self.tp,
            den: self.tp + self.fp,
        }
    }

    pub fn recall_ratio(&self) -> Ratio {
        Ratio {
            num: self.tp,
            den: self.tp + self.fn_,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot compute metrics over zero records")]
pub struct NoRecords;

pub fn compute_metrics(records: &[PredictionRecord]) -> Result<MetricsReport, NoRecords> {
    if records.is_empty() {
        return Err(NoRecords);
    }
    let (mut tp, mut fp, mut tn, mut fn_, mut unparseable, mut errors) = (0u64, 0u64, 0u64, 0u64, 0u64, 0u64);
    for r in records {
        if r.error.is_some() {
            errors += 1;
        }
        match (r.predicted, r.label) {
            (Verdict::Misinformation, Label::Falsified) => tp += 1,
            (Verdict::Misinformation, Label::Pristine) => fp += 1,
            (Verdict::NotMisinformation, Label::Pristine) => tn += 1,
            (Verdict::NotMisinformation, Label::Falsified) => fn_ += 1,
            (Verdict::Unparseable, _) => unparseable += 1,
        }
    }
    let total = records.len() as u64;
    let costs: Vec<f64> = records.iter().filter_map(|r| r.cost_usd).collect();
    let mut report = MetricsReport {
        total,
        correct: tp + tn,
        tp,
        fp,
        tn,
        fn_,
        unparseable,
        errors,
        accuracy: 0.0,
        precision: None,
        recall: None,
        mean_cost_usd: (!costs.is_empty()).then(|| costs.iter().sum::<f64>() / costs.len() as f64),
        mean_latency_secs: records.iter().map(|r| r.latency_secs).sum::<f64>() / total as f64,
    };
    report.accuracy = report.accuracy_ratio().value().unwrap_or(0.0);
    report.precision = report.precision_ratio().value();
    report.recall = report.recall_ratio().value();
    Ok(report)
}
