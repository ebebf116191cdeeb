//! User-study workflow: participants answer an item, reveal the system's
//! insight, then answer again.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Duration, Utc};
use ooc_core::dataset::Label;
use ooc_core::prompt::Verdict;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAX_CONFIDENCE: i64 = 10;
const UNDEFINED: &str = "—";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Journalist,
    Academic,
    Other,
}

impl Group {
    pub const ALL: [Group; 3] = [Group::Journalist, Group::Academic, Group::Other];

    pub fn column(self) -> &'static str {
        match self {
            Group::Journalist => "Journalists",
            Group::Academic => "Academics",
            Group::Other => "Others",
        }
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "journalist" | "journalists" => Ok(Group::Journalist),
            "academic" | "academics" => Ok(Group::Academic),
            "other" | "others" => Ok(Group::Other),
            other => Err(format!(
                "unknown group `{other}` (expected journalist, academic or other)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pre,
    Post,
}

/// Accepts `YES`/`NO` as well as the verdict names.
pub fn parse_answer(s: &str) -> Result<Verdict, String> {
    match s.trim().to_ascii_lowercase().replace([' ', '-'], "_").as_str() {
        "yes" | "misinformation" => Ok(Verdict::Misinformation),
        "no" | "not_misinformation" => Ok(Verdict::NotMisinformation),
        other => Err(format!("`{other}` is not an answer (expected YES or NO)")),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insight {
    pub verdict: Verdict,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyItem {
    pub item_id: String,
    #[serde(default)]
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_url: Option<String>,
    pub label: Label,
    pub insight: Insight,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseAnswer {
    pub participant_id: String,
    pub item_id: String,
    pub group: Group,
    pub phase: Phase,
    pub verdict: Verdict,
    pub confidence: u8,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reveal {
    pub participant_id: String,
    pub item_id: String,
    pub at: DateTime<Utc>,
}

/// One line of a study's append-only log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StudyEntry {
    Answer(PhaseAnswer),
    Reveal(Reveal),
}

/// A participant's full record for one item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StudyResponse {
    pub participant_id: String,
    pub item_id: String,
    pub group: Group,
    pub pre_verdict: Verdict,
    pub pre_confidence: u8,
    pub pre_at: DateTime<Utc>,
    pub revealed_at: Option<DateTime<Utc>>,
    pub post_verdict: Option<Verdict>,
    pub post_confidence: Option<u8>,
    pub post_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum StudyError {
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("unknown item `{0}`")]
    UnknownItem(String),
    #[error("{0}")]
    Order(String),
    #[error("participant `{participant}` already answered item `{item}` in the {phase:?} phase")]
    Duplicate {
        participant: String,
        item: String,
        phase: Phase,
    },
}

impl StudyError {
    fn invalid(field: &str, message: impl Into<String>) -> Self {
        StudyError::Invalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Incoming answer before validation.
#[derive(Debug, Clone, Deserialize)]
pub struct AnswerInput {
    pub participant_id: String,
    pub item_id: String,
    pub group: String,
    pub phase: Phase,
    pub verdict: String,
    pub confidence: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Study {
    pub id: String,
    pub created_at: DateTime<Utc>,
    pub items: Vec<StudyItem>,
    #[serde(skip)]
    entries: Vec<StudyEntry>,
    #[serde(skip)]
    index: HashMap<(String, String), StudyResponse>,
}

impl Study {
    pub fn new(id: impl Into<String>, items: Vec<StudyItem>, created_at: DateTime<Utc>) -> Result<Self, StudyError> {
        if items.is_empty() {
            return Err(StudyError::invalid("items", "a study needs at least one item"));
        }
        let mut seen = HashSet::new();
        for (i, item) in items.iter().enumerate() {
            if item.item_id.trim().is_empty() {
                return Err(StudyError::invalid(&format!("items[{i}].item_id"), "must not be empty"));
            }
            if !seen.insert(item.item_id.as_str()) {
                return Err(StudyError::invalid(
                    &format!("items[{i}].item_id"),
                    format!("duplicate item id `{}`", item.item_id),
                ));
            }
            if !item.insight.verdict.is_parseable() {
                return Err(StudyError::invalid(
                    &format!("items[{i}].insight.verdict"),
                    "the insight must carry a YES or NO verdict",
                ));
            }
        }
        Ok(Self {
            id: id.into(),
            created_at,
            items,
            entries: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn entries(&self) -> &[StudyEntry] {
        &self.entries
    }

    pub fn item(&self, item_id: &str) -> Option<&StudyItem> {
        self.items.iter().find(|i| i.item_id == item_id)
    }

    pub fn responses(&self) -> Vec<StudyResponse> {
        let mut out: Vec<StudyResponse> = self.index.values().cloned().collect();
        out.sort_by_key(|a| a.pre_at);
        out
    }

    /// Next timestamp: `now`, or just after the latest entry if the clock has
    /// not moved past it.
    fn stamp(&self, now: DateTime<Utc>) -> DateTime<Utc> {
        let last = self.entries.last().map(|e| match e {
            StudyEntry::Answer(a) => a.at,
            StudyEntry::Reveal(r) => r.at,
        });
        match last {
            Some(last) if now <= last => last + Duration::microseconds(1),
            _ => now,
        }
    }

    fn group_of(&self, participant: &str) -> Option<Group> {
        self.index
            .iter()
            .find(|((p, _), _)| p == participant)
            .map(|(_, r)| r.group)
    }

    /// Validates and records an answer, returning the log entry to persist.
    pub fn answer(&mut self, input: AnswerInput, now: DateTime<Utc>) -> Result<StudyEntry, StudyError> {
        if input.participant_id.trim().is_empty() {
            return Err(StudyError::invalid("participant_id", "must not be empty"));
        }
        if !(0..=MAX_CONFIDENCE).contains(&input.confidence) {
            return Err(StudyError::invalid(
                "confidence",
                format!(
                    "must be an integer from 0 to {MAX_CONFIDENCE}, got {}",
                    input.confidence
                ),
            ));
        }
        let verdict = parse_answer(&input.verdict).map_err(|m| StudyError::invalid("verdict", m))?;
        let group: Group = input
            .group
            .parse()
            .map_err(|m: String| StudyError::invalid("group", m))?;
        if self.item(&input.item_id).is_none() {
            return Err(StudyError::UnknownItem(input.item_id));
        }
        if let Some(existing) = self.group_of(&input.participant_id).filter(|g| *g != group) {
            return Err(StudyError::invalid(
                "group",
                format!("participant `{}` is registered as {existing:?}", input.participant_id),
            ));
        }
        let answer = PhaseAnswer {
            participant_id: input.participant_id,
            item_id: input.item_id,
            group,
            phase: input.phase,
            verdict,
            confidence: input.confidence as u8,
            at: self.stamp(now),
        };
        let entry = StudyEntry::Answer(answer);
        self.apply(entry.clone())?;
        Ok(entry)
    }

    /// Reveals the insight for an item the participant has answered. A
    /// second reveal returns the insight without logging anything.
    pub fn reveal(
        &mut self,
        participant_id: &str,
        item_id: &str,
        now: DateTime<Utc>,
    ) -> Result<(Insight, Option<StudyEntry>), StudyError> {
        let insight = self
            .item(item_id)
            .ok_or_else(|| StudyError::UnknownItem(item_id.to_string()))?
            .insight
            .clone();
        let key = (participant_id.to_string(), item_id.to_string());
        if self.index.get(&key).is_some_and(|r| r.revealed_at.is_some()) {
            return Ok((insight, None));
        }
        let entry = StudyEntry::Reveal(Reveal {
            participant_id: participant_id.to_string(),
            item_id: item_id.to_string(),
            at: self.stamp(now),
        });
        self.apply(entry.clone())?;
        Ok((insight, Some(entry)))
    }

    /// Applies a log entry, enforcing pre → reveal → post for each
    /// (participant, item). Used both for new entries and when reloading.
    pub fn apply(&mut self, entry: StudyEntry) -> Result<(), StudyError> {
        match &entry {
            StudyEntry::Answer(a) => {
                let key = (a.participant_id.clone(), a.item_id.clone());
                match (a.phase, self.index.get_mut(&key)) {
                    (Phase::Pre, Some(_)) | (Phase::Post, Some(StudyResponse { post_at: Some(_), .. })) => {
                        return Err(StudyError::Duplicate {
                            participant: a.participant_id.clone(),
                            item: a.item_id.clone(),
                            phase: a.phase,
                        });
                    }
                    (Phase::Pre, None) => {
                        self.index.insert(
                            key,
                            StudyResponse {
                                participant_id: a.participant_id.clone(),
                                item_id: a.item_id.clone(),
                                group: a.group,
                                pre_verdict: a.verdict,
                                pre_confidence: a.confidence,
                                pre_at: a.at,
                                revealed_at: None,
                                post_verdict: None,
                                post_confidence: None,
                                post_at: None,
                            },
                        );
                    }
                    (Phase::Post, None) => {
                        return Err(StudyError::Order(format!(
                            "participant `{}` has no pre answer for item `{}`",
                            a.participant_id, a.item_id
                        )));
                    }
                    (Phase::Post, Some(r)) => match r.revealed_at {
                        Some(revealed) if revealed < a.at => {
                            r.post_verdict = Some(a.verdict);
                            r.post_confidence = Some(a.confidence);
                            r.post_at = Some(a.at);
                        }
                        _ => {
                            return Err(StudyError::Order(format!(
                                "the insight for item `{}` has not been revealed to participant `{}`",
                                a.item_id, a.participant_id
                            )));
                        }
                    },
                }
            }
            StudyEntry::Reveal(rv) => {
                let key = (rv.participant_id.clone(), rv.item_id.clone());
                match self.index.get_mut(&key) {
                    Some(r) if r.revealed_at.is_none() && r.pre_at < rv.at => r.revealed_at = Some(rv.at),
                    Some(_) => return Err(StudyError::Order(format!("item `{}` was already revealed", rv.item_id))),
                    None => {
                        return Err(StudyError::Order(format!(
                            "participant `{}` must answer item `{}` before seeing the insight",
                            rv.participant_id, rv.item_id
                        )));
                    }
                }
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn summary(&self) -> StudySummary {
        summarize(&self.items, &self.responses())
    }
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }

    /// `mean±std` with one decimal, after multiplying both by `scale`.
    pub fn display(&self, scale: f64) -> String {
        format!("{:.1}±{:.1}", self.mean * scale, self.std * scale)
    }
}

fn cell(stat: Option<MeanStd>, scale: f64) -> String {
    stat.map_or_else(|| UNDEFINED.to_string(), |s| s.display(scale))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantStats {
    pub participant_id: String,
    pub group: Group,
    pub pre_answers: usize,
    pub pre_correct: usize,
    pub post_answers: usize,
    pub post_correct: usize,
    /// Fractions in [0, 1].
    pub pre_accuracy: Option<f64>,
    pub post_accuracy: Option<f64>,
    pub pre_confidence: Option<f64>,
    pub post_confidence: Option<f64>,
    /// Accuracy of the insights on the items this participant answered.
    pub system_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub participants: usize,
    pub pre_accuracy: Option<MeanStd>,
    pub pre_confidence: Option<MeanStd>,
    pub post_accuracy: Option<MeanStd>,
    pub post_confidence: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub participants: Vec<ParticipantStats>,
    pub humans: Option<MeanStd>,
    pub humans_with_system: Option<MeanStd>,
    pub system: Option<MeanStd>,
    pub groups: BTreeMap<Group, GroupStats>,
    /// Overall accuracy table (percentages).
    pub overall_table: String,
    /// Per-group accuracy (percent) and confidence (0-10) table.
    pub group_table: String,
}

fn fraction(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean(values: &[u8]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().map(|&v| v as f64).sum::<f64>() / values.len() as f64)
}

/// Per-participant accuracy and confidence, aggregated as mean±std over
/// participants.
pub fn summarize(items: &[StudyItem], responses: &[StudyResponse]) -> StudySummary {
    let items: HashMap<&str, &StudyItem> = items.iter().map(|i| (i.item_id.as_str(), i)).collect();
    let mut by_participant: BTreeMap<&str, Vec<&StudyResponse>> = BTreeMap::new();
    for r in responses {
        by_participant.entry(r.participant_id.as_str()).or_default().push(r);
    }

    let participants: Vec<ParticipantStats> = by_participant
        .iter()
        .map(|(id, rs)| {
            let truth = |r: &StudyResponse| items.get(r.item_id.as_str()).map(|i| i.label.expected_verdict());
            let pre_correct = rs.iter().filter(|r| truth(r) == Some(r.pre_verdict)).count();
            let posts: Vec<&&StudyResponse> = rs.iter().filter(|r| r.post_verdict.is_some()).collect();
            let post_correct = posts.iter().filter(|r| truth(r) == r.post_verdict).count();
            let system_correct = rs
                .iter()
                .filter(|r| {
                    items
                        .get(r.item_id.as_str())
                        .is_some_and(|i| i.insight.verdict == i.label.expected_verdict())
                })
                .count();
            let pre_conf: Vec<u8> = rs.iter().map(|r| r.pre_confidence).collect();
            let post_conf: Vec<u8> = posts.iter().filter_map(|r| r.post_confidence).collect();
            ParticipantStats {
                participant_id: id.to_string(),
                group: rs[0].group,
                pre_answers: rs.len(),
                pre_correct,
                post_answers: posts.len(),
                post_correct,
                pre_accuracy: fraction(pre_correct, rs.len()),
                post_accuracy: fraction(post_correct, posts.len()),
                pre_confidence: mean(&pre_conf),
                post_confidence: mean(&post_conf),
                system_accuracy: fraction(system_correct, rs.len()),
            }
        })
        .collect();

    let stat = |ps: &[&ParticipantStats], f: fn(&ParticipantStats) -> Option<f64>| {
        MeanStd::of(&ps.iter().filter_map(|p| f(p)).collect::<Vec<_>>())
    };
    let everyone: Vec<&ParticipantStats> = participants.iter().collect();
    let humans = stat(&everyone, |p| p.pre_accuracy);
    let humans_with_system = stat(&everyone, |p| p.post_accuracy);
    let system = stat(&everyone, |p| p.system_accuracy);

    let mut groups = BTreeMap::new();
    for group in Group::ALL {
        let members: Vec<&ParticipantStats> = participants.iter().filter(|p| p.group == group).collect();
        groups.insert(
            group,
            GroupStats {
                participants: members.len(),
                pre_accuracy: stat(&members, |p| p.pre_accuracy),
                pre_confidence: stat(&members, |p| p.pre_confidence),
                post_accuracy: stat(&members, |p| p.post_accuracy),
                post_confidence: stat(&members, |p| p.post_confidence),
            },
        );
    }

    StudySummary {
        overall_table: overall_table(humans, humans_with_system, system),
        group_table: group_table(&groups),
        participants,
        humans,
        humans_with_system,
        system,
        groups,
    }
}

/// Accuracy of humans alone, humans with the system's insights, and the
/// system alone. Inputs are fractions; cells are percentages.
pub fn overall_table(humans: Option<MeanStd>, with_system: Option<MeanStd>, system: Option<MeanStd>) -> String {
    let mut out = String::from("| Setup | Average Accuracy |\n|---|---|\n");
    for (name, stat) in [("Humans", humans), ("Humans + system", with_system), ("System", system)] {
        out.push_str(&format!("| {name} | {} |\n", cell(stat, 100.0)));
    }
    out
}

pub fn group_table(groups: &BTreeMap<Group, GroupStats>) -> String {
    let mut out = String::from("| Metric |");
    for g in Group::ALL {
        out.push_str(&format!(" {} |", g.column()));
    }
    out.push_str("\n|---|---|---|---|\n");
    type Row = (&'static str, fn(&GroupStats) -> Option<MeanStd>, f64);
    let rows: [Row; 4] = [
        ("Accuracy (only human)", |g| g.pre_accuracy, 100.0),
        ("Confidence (only human)", |g| g.pre_confidence, 1.0),
        ("Accuracy (with system)", |g| g.post_accuracy, 100.0),
        ("Confidence (with system)", |g| g.post_confidence, 1.0),
    ];
    for (name, pick, scale) in rows {
        out.push_str(&format!("| {name} |"));
        for g in Group::ALL {
            let stat = groups.get(&g).and_then(pick);
            out.push_str(&format!(" {} |", cell(stat, scale)));
        }
        out.push('\n');
    }
    out
}

impl fmt::Display for StudySummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\n{}", self.overall_table, self.group_table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn items(n: usize, wrong_insights: usize) -> Vec<StudyItem> {
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Falsified } else { Label::Pristine };
                let right = label.expected_verdict();
                let wrong = if right == Verdict::Misinformation {
                    Verdict::NotMisinformation
                } else {
                    Verdict::Misinformation
                };
                StudyItem {
                    item_id: format!("item-{i}"),
                    caption: String::new(),
                    image_url: None,
                    label,
                    insight: Insight {
                        verdict: if i < wrong_insights { wrong } else { right },
                        explanation: format!("insight {i}"),
                    },
                }
            })
            .collect()
    }

    fn input(p: &str, item: &str, phase: Phase, verdict: &str, confidence: i64) -> AnswerInput {
        AnswerInput {
            participant_id: p.into(),
            item_id: item.into(),
            group: "other".into(),
            phase,
            verdict: verdict.into(),
            confidence,
        }
    }

    fn t0() -> DateTime<Utc> {
        DateTime::UNIX_EPOCH
    }

    #[test]
    fn answers_parse() {
        assert_eq!(parse_answer("YES"), Ok(Verdict::Misinformation));
        assert_eq!(parse_answer(" no "), Ok(Verdict::NotMisinformation));
        assert_eq!(parse_answer("not misinformation"), Ok(Verdict::NotMisinformation));
        assert!(parse_answer("maybe").is_err());
    }

    #[test]
    fn confidence_bounds_are_inclusive() {
        let mut study = Study::new("s", items(3, 0), t0()).unwrap();
        assert!(study.answer(input("p", "item-0", Phase::Pre, "YES", 0), t0()).is_ok());
        assert!(study.answer(input("p", "item-1", Phase::Pre, "YES", 10), t0()).is_ok());
        for bad in [11, -1] {
            let err = study
                .answer(input("p", "item-2", Phase::Pre, "YES", bad), t0())
                .unwrap_err();
            assert!(
                matches!(err, StudyError::Invalid { ref field, .. } if field == "confidence"),
                "{err}"
            );
        }
    }

    #[test]
    fn ordering_is_enforced() {
        let mut study = Study::new("s", items(2, 0), t0()).unwrap();
        let err = study.reveal("p", "item-0", t0()).unwrap_err();
        assert!(matches!(err, StudyError::Order(_)));
        study.answer(input("p", "item-0", Phase::Pre, "YES", 5), t0()).unwrap();
        let err = study
            .answer(input("p", "item-0", Phase::Post, "YES", 5), t0())
            .unwrap_err();
        assert!(matches!(err, StudyError::Order(_)));
        let (insight, entry) = study.reveal("p", "item-0", t0()).unwrap();
        assert_eq!(insight.explanation, "insight 0");
        assert!(entry.is_some());
        assert!(study.reveal("p", "item-0", t0()).unwrap().1.is_none());
        study.answer(input("p", "item-0", Phase::Post, "NO", 7), t0()).unwrap();
        let dup = study
            .answer(input("p", "item-0", Phase::Post, "NO", 7), t0())
            .unwrap_err();
        assert!(matches!(dup, StudyError::Duplicate { phase: Phase::Post, .. }));
        let dup = study
            .answer(input("p", "item-0", Phase::Pre, "NO", 7), t0())
            .unwrap_err();
        assert!(matches!(dup, StudyError::Duplicate { phase: Phase::Pre, .. }));

        let r = &study.responses()[0];
        let (pre, rev, post) = (r.pre_at, r.revealed_at.unwrap(), r.post_at.unwrap());
        assert!(pre < rev && rev < post);
    }

    #[test]
    fn participant_group_is_fixed() {
        let mut study = Study::new("s", items(2, 0), t0()).unwrap();
        study.answer(input("p", "item-0", Phase::Pre, "YES", 5), t0()).unwrap();
        let mut other = input("p", "item-1", Phase::Pre, "YES", 5);
        other.group = "journalist".into();
        assert!(matches!(study.answer(other, t0()), Err(StudyError::Invalid { .. })));
    }

    #[test]
    fn study_items_are_validated() {
        assert!(Study::new("s", vec![], t0()).is_err());
        let mut dup = items(2, 0);
        dup[1].item_id = dup[0].item_id.clone();
        assert!(Study::new("s", dup, t0()).is_err());
    }

    #[test]
    fn mean_std_is_population() {
        let s = MeanStd::of(&[0.5, 0.7]).unwrap();
        assert!((s.mean - 0.6).abs() < 1e-12);
        assert!((s.std - 0.1).abs() < 1e-12);
        assert_eq!(MeanStd::of(&[]), None);
    }

    #[test]
    fn table_cells_match_published_layout() {
        let table = overall_table(
            Some(MeanStd {
                mean: 0.603,
                std: 0.135,
                n: 30,
            }),
            Some(MeanStd {
                mean: 0.767,
                std: 0.122,
                n: 30,
            }),
            Some(MeanStd {
                mean: 0.8,
                std: 0.0,
                n: 30,
            }),
        );
        assert_eq!(
            table,
            "| Setup | Average Accuracy |\n|---|---|\n| Humans | 60.3±13.5 |\n| Humans + system | 76.7±12.2 |\n| System | 80.0±0.0 |\n"
        );
        assert!(overall_table(None, None, None).contains("| Humans | — |"));
    }
}
