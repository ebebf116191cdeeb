mod common;

use std::sync::Arc;

use chrono::{DateTime, Utc};
use common::*;
use ooc_core::backend::ScriptedBackend;
use ooc_core::dataset::Label;
use ooc_core::prompt::Verdict;
use ooc_service::study::{AnswerInput, Insight, Phase, Study, StudyEntry, StudyItem};
use ooc_service::{Engines, ServiceConfig};
use proptest::prelude::*;
use serde_json::{Value, json};

fn label(i: usize) -> Label {
    if i.is_multiple_of(2) {
        Label::Falsified
    } else {
        Label::Pristine
    }
}

fn answer(correct: bool, i: usize) -> &'static str {
    match (label(i), correct) {
        (Label::Falsified, true) | (Label::Pristine, false) => "YES",
        _ => "NO",
    }
}

/// Ten items, five of each label, with insights wrong on the first two.
fn items_json() -> Value {
    let items: Vec<Value> = (0..10)
        .map(|i| {
            let insight_correct = i >= 2;
            json!({
                "item_id": format!("q{i}"),
                "caption": format!("Caption {i}"),
                "label": label(i),
                "insight": { "verdict": answer(insight_correct, i), "explanation": format!("Because {i}.") },
            })
        })
        .collect();
    json!({ "items": items })
}

async fn server() -> Server {
    let backend = Arc::new(ScriptedBackend::new(["x. IS THIS MISINFORMATION? YES"; 4]).unwrap());
    start(ServiceConfig::default(), Engines::new(backend)).await
}

#[tokio::test]
async fn six_then_eight_correct_gives_point_six_and_point_eight() {
    let server = server().await;
    let (status, created) = server.post("/studies", items_json()).await;
    assert_eq!(status, 201, "{created}");
    let id = created["id"].as_str().unwrap();
    let (_, study) = server.get(&format!("/studies/{id}")).await;
    assert_eq!(study["items"].as_array().unwrap().len(), 10);
    assert!(study["items"][0].get("insight").is_none());

    for i in 0..10 {
        let item = format!("q{i}");
        let body = |phase: &str, correct: bool, confidence: i64| {
            json!({ "participant_id": "p1", "item_id": item, "group": "journalist", "phase": phase,
                    "verdict": answer(correct, i), "confidence": confidence })
        };
        let (status, resp) = server
            .post(&format!("/studies/{id}/responses"), body("pre", i < 6, 4))
            .await;
        assert_eq!(status, 201, "{resp}");
        let (status, revealed) = server
            .post(
                &format!("/studies/{id}/reveal"),
                json!({ "participant_id": "p1", "item_id": item }),
            )
            .await;
        assert_eq!(status, 200);
        assert_eq!(revealed["insight"]["explanation"], format!("Because {i}."));
        let (status, _) = server
            .post(&format!("/studies/{id}/responses"), body("post", i < 8, 7))
            .await;
        assert_eq!(status, 201);
    }

    let (status, summary) = server.get(&format!("/studies/{id}/summary")).await;
    assert_eq!(status, 200);
    let p = &summary["participants"][0];
    assert_eq!(p["pre_accuracy"], 0.6);
    assert_eq!(p["post_accuracy"], 0.8);
    assert_eq!(p["system_accuracy"], 0.8);
    assert_eq!(p["pre_confidence"], 4.0);
    assert_eq!(p["post_confidence"], 7.0);
    assert_eq!(summary["groups"]["journalist"]["pre_accuracy"]["mean"], 0.6);
    assert_eq!(summary["groups"]["journalist"]["post_accuracy"]["mean"], 0.8);

    let markdown = server
        .client
        .get(format!("{}/studies/{id}/summary?format=markdown", server.base))
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert!(markdown.contains("| Humans | 60.0±0.0 |"), "{markdown}");
    assert!(markdown.contains("| Humans + system | 80.0±0.0 |"), "{markdown}");
    assert!(
        markdown.contains("| Accuracy (only human) | 60.0±0.0 | — | — |"),
        "{markdown}"
    );
    assert!(
        markdown.contains("| Confidence (with system) | 7.0±0.0 | — | — |"),
        "{markdown}"
    );

    let (_, responses) = server.get(&format!("/studies/{id}/responses")).await;
    let responses = responses.as_array().unwrap();
    assert_eq!(responses.len(), 10);
    for r in responses {
        let at = |k: &str| r[k].as_str().unwrap().parse::<DateTime<Utc>>().unwrap();
        assert!(at("pre_at") < at("revealed_at") && at("revealed_at") < at("post_at"));
    }
}

#[tokio::test]
async fn invalid_and_out_of_order_answers_are_rejected() {
    let server = server().await;
    let (_, created) = server.post("/studies", items_json()).await;
    let id = created["id"].as_str().unwrap();
    let responses = format!("/studies/{id}/responses");
    let body = |phase: &str, confidence: i64| {
        json!({ "participant_id": "p", "item_id": "q0", "group": "other", "phase": phase,
                "verdict": "YES", "confidence": confidence })
    };

    let (status, resp) = server.post(&responses, body("pre", 11)).await;
    assert_eq!((status, resp["field"].as_str()), (422, Some("confidence")));
    let (status, resp) = server.post(&responses, body("pre", -1)).await;
    assert_eq!((status, resp["field"].as_str()), (422, Some("confidence")));
    let mut bad_group = body("pre", 5);
    bad_group["group"] = json!("astronaut");
    assert_eq!(server.post(&responses, bad_group).await.1["field"], "group");
    let mut bad_item = body("pre", 5);
    bad_item["item_id"] = json!("q99");
    assert_eq!(server.post(&responses, bad_item).await.1["field"], "item_id");

    let reveal = json!({ "participant_id": "p", "item_id": "q0" });
    let (status, resp) = server.post(&format!("/studies/{id}/reveal"), reveal.clone()).await;
    assert_eq!((status, resp["error"].as_str()), (409, Some("order")));
    let (status, resp) = server.post(&responses, body("post", 5)).await;
    assert_eq!((status, resp["error"].as_str()), (409, Some("order")));

    assert_eq!(server.post(&responses, body("pre", 0)).await.0, 201);
    let (status, resp) = server.post(&responses, body("pre", 3)).await;
    assert_eq!((status, resp["error"].as_str()), (409, Some("duplicate")));
    let (status, resp) = server.post(&responses, body("post", 5)).await;
    assert_eq!(
        (status, resp["error"].as_str()),
        (409, Some("order")),
        "post before reveal"
    );

    assert_eq!(
        server.post(&format!("/studies/{id}/reveal"), reveal.clone()).await.0,
        200
    );
    assert_eq!(server.post(&format!("/studies/{id}/reveal"), reveal).await.0, 200);
    assert_eq!(server.post(&responses, body("post", 10)).await.0, 201);
    let (status, resp) = server.post(&responses, body("post", 10)).await;
    assert_eq!((status, resp["error"].as_str()), (409, Some("duplicate")));

    assert_eq!(server.get("/studies/unknown/summary").await.0, 404);
}

#[tokio::test]
async fn insights_can_come_from_finished_sessions() {
    let backend = Arc::new(ScriptedBackend::new(["The date is wrong. IS THIS MISINFORMATION? YES"; 2]).unwrap());
    let server = start(ServiceConfig::default(), Engines::new(backend)).await;
    let session = server.create(request("Storm over Oslo.", json!({}))).await;
    server.wait_done(&session).await;

    let (status, created) = server
        .post(
            "/studies",
            json!({ "items": [{ "label": "falsified", "session_id": session }] }),
        )
        .await;
    assert_eq!(status, 201, "{created}");
    let id = created["id"].as_str().unwrap();
    let (_, study) = server.get(&format!("/studies/{id}")).await;
    assert_eq!(study["items"][0]["item_id"], "item-1");
    assert_eq!(study["items"][0]["caption"], "Storm over Oslo.");
    server
        .post(
            &format!("/studies/{id}/responses"),
            json!({ "participant_id": "p", "item_id": "item-1", "group": "academic", "phase": "pre",
                    "verdict": "NO", "confidence": 2 }),
        )
        .await;
    let (_, revealed) = server
        .post(
            &format!("/studies/{id}/reveal"),
            json!({ "participant_id": "p", "item_id": "item-1" }),
        )
        .await;
    assert_eq!(revealed["insight"]["verdict"], "misinformation");
    assert_eq!(revealed["insight"]["explanation"], "The date is wrong.");

    let (status, resp) = server
        .post(
            "/studies",
            json!({ "items": [{ "label": "pristine", "session_id": "missing" }] }),
        )
        .await;
    assert_eq!((status, resp["field"].as_str()), (422, Some("items[0].session_id")));
    let (status, resp) = server
        .post("/studies", json!({ "items": [{ "label": "pristine" }] }))
        .await;
    assert_eq!((status, resp["field"].as_str()), (422, Some("items[0].insight")));
    let (status, resp) = server.post("/studies", json!({ "items": [] })).await;
    assert_eq!((status, resp["field"].as_str()), (422, Some("items")));
}

#[tokio::test]
async fn studies_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        state_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let backend = Arc::new(ScriptedBackend::new(["x. IS THIS MISINFORMATION? YES"]).unwrap());
    let first = start(config.clone(), Engines::new(backend.clone())).await;
    let (_, created) = first.post("/studies", items_json()).await;
    let id = created["id"].as_str().unwrap().to_string();
    let responses = format!("/studies/{id}/responses");
    let pre = json!({ "participant_id": "p", "item_id": "q1", "group": "other", "phase": "pre",
                      "verdict": "NO", "confidence": 3 });
    first.post(&responses, pre).await;
    first
        .post(
            &format!("/studies/{id}/reveal"),
            json!({ "participant_id": "p", "item_id": "q1" }),
        )
        .await;
    let (_, summary_before) = first.get(&format!("/studies/{id}/summary")).await;

    let second = start(config, Engines::new(backend)).await;
    let (_, summary_after) = second.get(&format!("/studies/{id}/summary")).await;
    assert_eq!(summary_before, summary_after);
    // The reveal was persisted, so the post phase is open after the restart.
    let post = json!({ "participant_id": "p", "item_id": "q1", "group": "other", "phase": "post",
                       "verdict": "NO", "confidence": 8 });
    assert_eq!(second.post(&responses, post).await.0, 201);
}

fn study_items() -> Vec<StudyItem> {
    (0..10)
        .map(|i| StudyItem {
            item_id: format!("q{i}"),
            caption: String::new(),
            image_url: None,
            label: label(i),
            insight: Insight {
                verdict: if i < 8 {
                    label(i).expected_verdict()
                } else if label(i) == Label::Falsified {
                    Verdict::NotMisinformation
                } else {
                    Verdict::Misinformation
                },
                explanation: String::new(),
            },
        })
        .collect()
}

fn submit(study: &mut Study, participant: &str, i: usize, phase: Phase, correct: bool, now: DateTime<Utc>) {
    let input = AnswerInput {
        participant_id: participant.into(),
        item_id: format!("q{i}"),
        group: "other".into(),
        phase,
        verdict: answer(correct, i).into(),
        confidence: 5,
    };
    study.answer(input, now).unwrap();
}

#[test]
fn published_overall_row_is_reproduced_by_a_thirty_person_cohort() {
    // Correct answers out of ten per participant, before and after insights.
    let pre = [
        3, 4, 4, 4, 4, 5, 5, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 6, 7, 7, 7, 7, 7, 7, 7, 7, 8, 10,
    ];
    let post = [
        5, 6, 6, 6, 7, 7, 7, 7, 7, 7, 7, 7, 7, 7, 7, 8, 8, 8, 8, 8, 8, 8, 8, 9, 9, 9, 9, 10, 10, 10,
    ];
    let now = DateTime::UNIX_EPOCH;
    let mut study = Study::new("cohort", study_items(), now).unwrap();
    for (p, (&a, &b)) in pre.iter().zip(&post).enumerate() {
        let who = format!("p{p:02}");
        for i in 0..10 {
            submit(&mut study, &who, i, Phase::Pre, i < a, now);
            study.reveal(&who, &format!("q{i}"), now).unwrap();
            submit(&mut study, &who, i, Phase::Post, i < b, now);
        }
    }
    let summary = study.summary();
    assert_eq!(
        summary.overall_table,
        "| Setup | Average Accuracy |\n|---|---|\n| Humans | 60.3±13.5 |\n| Humans + system | 76.7±12.2 |\n| System | 80.0±0.0 |\n"
    );

    // Independent recount of the means.
    let mean = |xs: &[usize]| xs.iter().sum::<usize>() as f64 / xs.len() as f64 / 10.0;
    assert!((summary.humans.unwrap().mean - mean(&pre)).abs() < 1e-12);
    assert!((summary.humans_with_system.unwrap().mean - mean(&post)).abs() < 1e-12);
    assert!((summary.system.unwrap().mean - 0.8).abs() < 1e-12);
    assert!(summary.system.unwrap().std < 1e-9);
}

#[derive(Debug, Clone)]
enum Op {
    Answer(usize, usize, Phase),
    Reveal(usize, usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..3usize, 0..4usize, prop_oneof![Just(Phase::Pre), Just(Phase::Post)])
            .prop_map(|(p, i, ph)| Op::Answer(p, i, ph)),
        (0..3usize, 0..4usize).prop_map(|(p, i)| Op::Reveal(p, i)),
    ]
}

proptest! {
    #[test]
    fn persisted_timestamps_follow_pre_reveal_post(ops in prop::collection::vec(op(), 0..60), clock_steps in prop::collection::vec(-2i64..3, 60)) {
        let mut study = Study::new("s", study_items(), DateTime::UNIX_EPOCH).unwrap();
        let mut now = DateTime::UNIX_EPOCH;
        for (op, step) in ops.iter().zip(clock_steps.iter()) {
            // The wall clock may stall or step backwards.
            now += chrono::Duration::microseconds(*step);
            let _ = match op {
                Op::Answer(p, i, phase) => study
                    .answer(
                        AnswerInput {
                            participant_id: format!("p{p}"),
                            item_id: format!("q{i}"),
                            group: "academic".into(),
                            phase: *phase,
                            verdict: "YES".into(),
                            confidence: 5,
                        },
                        now,
                    )
                    .map(|_| ()),
                Op::Reveal(p, i) => study.reveal(&format!("p{p}"), &format!("q{i}"), now).map(|_| ()),
            };
        }
        // Replaying the persisted log reproduces the same records.
        let mut reloaded = Study::new("s", study_items(), DateTime::UNIX_EPOCH).unwrap();
        for entry in study.entries() {
            reloaded.apply(entry.clone()).unwrap();
        }
        prop_assert_eq!(reloaded.responses(), study.responses());
        let mut keys = std::collections::HashSet::new();
        for entry in study.entries() {
            if let StudyEntry::Answer(a) = entry {
                prop_assert!(keys.insert((a.participant_id.clone(), a.item_id.clone(), a.phase == Phase::Pre)));
            }
        }
        for r in study.responses() {
            if let Some(post) = r.post_at {
                let revealed = r.revealed_at.expect("post implies reveal");
                prop_assert!(r.pre_at < revealed && revealed < post);
            }
            if let Some(revealed) = r.revealed_at {
                prop_assert!(r.pre_at < revealed);
            }
        }
    }
}
