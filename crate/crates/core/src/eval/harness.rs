use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use futures::StreamExt;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use super::metrics::{MetricsReport, PredictionRecord, compute_metrics};
use super::report::{render_report, setup_label};
use crate::backend::{PriceTable, Usage, estimate_cost};
use crate::dataset::{DatasetError, Sample, subset};
use crate::debate::{ConfigError, DebateConfig, DebateRuntime, TRANSCRIPT_SCHEMA_VERSION, TranscriptFile, run_session};
use crate::evidence::EvidencePipeline;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.md";
pub const TRANSCRIPT_DIR: &str = "transcripts";
pub const ABORT_FAILURE_RATIO: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub debate: DebateConfig,
    pub retrieval_enabled: bool,
    /// Evaluate a stratified subset of this size.
    pub limit: Option<usize>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Samples evaluated concurrently.
    pub jobs: usize,
    pub save_transcripts: bool,
}

impl RunConfig {
    pub fn new(debate: DebateConfig, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            retrieval_enabled: debate.evidence_enabled,
            debate,
            limit: None,
            seed: 0,
            output_dir: output_dir.into(),
            jobs: 1,
            save_transcripts: false,
        }
    }

    pub fn label(&self) -> String {
        setup_label(&self.debate, self.retrieval_enabled)
    }

    pub fn records_path(&self) -> PathBuf {
        self.output_dir.join(RECORDS_FILE)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.debate.validate()?;
        if self.jobs == 0 {
            return Err(ConfigError {
                field: "jobs".into(),
                message: "must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("retrieval is enabled but no evidence pipeline is configured")]
    NoEvidencePipeline,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("no samples to evaluate")]
    NoSamples,
    #[error("records file {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("records file {path} line {line}: {message}")]
    CorruptRecords {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("aborted: {failed} of {total} samples failed (limit {:.0}%)", ABORT_FAILURE_RATIO * 100.0)]
    TooManyFailures { failed: usize, total: usize },
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub report: MetricsReport,
    pub records: Vec<PredictionRecord>,
    pub records_path: PathBuf,
    pub text: String,
    /// Samples skipped because the records file already held them.
    pub resumed: usize,
}

/// Reads a records file. A final line without a trailing newline is an
/// interrupted write: it is dropped and the file truncated to the last
/// complete record.
pub fn load_records(path: &Path) -> Result<Vec<PredictionRecord>, EvalError> {
    let io_err = |source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(e)),
    };
    if !text.is_empty() && !text.ends_with('\n') {
        let keep = text.rfind('\n').map_or(0, |i| i + 1);
        warn!(path = %path.display(), "dropping incomplete trailing record");
        text.truncate(keep);
        let f = OpenOptions::new().write(true).open(path).map_err(io_err)?;
        f.set_len(keep as u64).map_err(io_err)?;
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::CorruptRecords {
                path: path.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

/// Serialized appends to the records file.
struct RecordSink {
    path: PathBuf,
    file: Mutex<File>,
}

impl RecordSink {
    fn open(path: &Path) -> Result<Self, EvalError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| EvalError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    fn append(&self, record: &PredictionRecord) -> Result<(), EvalError> {
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        let mut f = self.file.lock().expect("records lock");
        f.write_all(line.as_bytes())
            .and_then(|_| f.flush())
            .map_err(|source| EvalError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

/// Runs debate sessions over a dataset and scores them.
#[derive(Clone)]
pub struct EvalHarness {
    pub runtime: Arc<DebateRuntime>,
    pub evidence: Option<EvidencePipeline>,
    pub prices: Option<PriceTable>,
}

impl EvalHarness {
    pub fn new(runtime: DebateRuntime) -> Self {
        Self {
            runtime: Arc::new(runtime),
            evidence: None,
            prices: None,
        }
    }

    pub fn with_evidence(mut self, pipeline: EvidencePipeline) -> Self {
        self.evidence = Some(pipeline);
        self
    }

    pub fn with_prices(mut self, prices: PriceTable) -> Self {
        self.prices = Some(prices);
        self
    }

    /// Evaluates one sample. Never fails: problems become an errored record.
    pub async fn evaluate(&self, sample: &Sample, config: &RunConfig) -> (PredictionRecord, Option<TranscriptFile>) {
        let fail = |msg: String| (PredictionRecord::failed(&sample.sample_id, sample.label, msg), None);
        let pair = match sample.pair() {
            Ok(p) => p,
            Err(e) => return fail(format!("image: {e}")),
        };
        let mut evidence_usage: Vec<Usage> = Vec::new();
        let bundle = if config.retrieval_enabled {
            let Some(pipeline) = &self.evidence else {
                return fail(EvalError::NoEvidencePipeline.to_string());
            };
            match pipeline.build(&pair.image, self.runtime.backend.as_ref()).await {
                Ok(built) => {
                    evidence_usage = built.usage;
                    Some(built.bundle)
                }
                Err(e) => return fail(format!("evidence: {e}")),
            }
        } else {
            None
        };
        let mut debate = config.debate.clone();
        debate.evidence_enabled = bundle.is_some();

        let (result, error) = match run_session(&pair, bundle.as_ref(), &debate, &self.runtime).await {
            Ok(r) => (r, None),
            Err(e) => match e.partial() {
                Some(p) => (p.clone(), Some(e.to_string())),
                None => return fail(e.to_string()),
            },
        };
        let usage: Vec<&Usage> = evidence_usage.iter().chain(&result.usage).collect();

        let cost = self
            .prices
            .as_ref()
            .and_then(|p| match estimate_cost(usage.iter().copied(), p) {
                Ok(c) => Some(c),
                Err(e) => {
                    warn!(sample = %sample.sample_id, "cost unavailable: {e}");
                    None
                }
            });
        let mut record = PredictionRecord {
            sample_id: sample.sample_id.clone(),
            label: sample.label,
            predicted: result.final_verdict,
            converged: result.converged,
            rounds_used: result.rounds_used,
            decision_rule: Some(result.decision_rule),
            cost_usd: cost,
            latency_secs: usage.iter().map(|u| u.latency_secs).sum(),
            backend_calls: usage.len(),
            explanation: result.explanation.clone(),
            flags: result.flags.clone(),
            error: None,
        };
        if let Some(e) = &error {
            record.predicted = crate::prompt::Verdict::Unparseable;
            record.error = Some(e.clone());
        }
        let transcript = config.save_transcripts.then(|| TranscriptFile {
            schema_version: TRANSCRIPT_SCHEMA_VERSION,
            session_id: sample.sample_id.clone(),
            created_at: self.runtime.clock.now(),
            image: pair.image.clone(),
            caption: pair.caption.clone(),
            config: debate,
            evidence: bundle,
            result,
            evidence_usage,
            cost_usd: cost,
            error,
        });
        (record, transcript)
    }

    /// Evaluates `samples` (or a stratified subset when `config.limit` is
    /// set), appending one record per sample to the records file and
    /// skipping samples already recorded there.
    pub async fn run_eval(&self, samples: &[Sample], config: &RunConfig) -> Result<EvalOutcome, EvalError> {
        config.validate()?;
        if config.retrieval_enabled && self.evidence.is_none() {
            return Err(EvalError::NoEvidencePipeline);
        }
        let selected = match config.limit {
            Some(n) => subset(samples, n, config.seed)?,
            None => samples.to_vec(),
        };
        if selected.is_empty() {
            return Err(EvalError::NoSamples);
        }
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| EvalError::Io { path, source }
        };
        fs::create_dir_all(&config.output_dir).map_err(io_err(&config.output_dir))?;
        let records_path = config.records_path();
        let previous = load_records(&records_path)?;
        let done: HashSet<&str> = previous.iter().map(|r| r.sample_id.as_str()).collect();
        let pending: Vec<&Sample> = selected
            .iter()
            .filter(|s| !done.contains(s.sample_id.as_str()))
            .collect();
        let resumed = selected.len() - pending.len();

        let total = selected.len();
        let wanted: HashSet<&str> = selected.iter().map(|s| s.sample_id.as_str()).collect();
        let mut failed = previous
            .iter()
            .filter(|r| r.error.is_some() && wanted.contains(r.sample_id.as_str()))
            .count();
        let sink = RecordSink::open(&records_path)?;
        let transcript_dir = config.output_dir.join(TRANSCRIPT_DIR);

        let mut stream = futures::stream::iter(pending)
            .map(|s| self.evaluate(s, config))
            .buffer_unordered(config.jobs);
        while let Some((record, transcript)) = stream.next().await {
            sink.append(&record)?;
            if let Some(t) = transcript {
                let path = transcript_dir.join(format!("{}.json", sanitize(&record.sample_id)));
                if let Err(e) = t.save(&path) {
                    warn!(path = %path.display(), "could not save transcript: {e}");
                }
            }
            if record.error.is_some() {
                failed += 1;
                if failed as f64 > ABORT_FAILURE_RATIO * total as f64 {
                    return Err(EvalError::TooManyFailures { failed, total });
                }
            }
        }
        drop(stream);

        let mut records: Vec<PredictionRecord> = load_records(&records_path)?
            .into_iter()
            .filter(|r| wanted.contains(r.sample_id.as_str()))
            .collect();
        // A sample recorded twice (e.g. two concurrent runs) counts once.
        let mut seen = HashSet::new();
        records.retain(|r| seen.insert(r.sample_id.clone()));
        records.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));

        let report = compute_metrics(&records).map_err(|_| EvalError::NoSamples)?;
        let text = render_report(&config.label(), &report);
        let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        let json_path = config.output_dir.join(REPORT_JSON);
        fs::write(&json_path, json).map_err(io_err(&json_path))?;
        let text_path = config.output_dir.join(REPORT_TEXT);
        fs::write(&text_path, &text).map_err(io_err(&text_path))?;
        Ok(EvalOutcome {
            report,
            records,
            records_path,
            text,
            resumed,
        })
    }
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}
