use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::{Value, json};

const YES: &str = "The caption names the wrong city. IS THIS MISINFORMATION? YES";
const NO: &str = "The caption matches the scene. IS THIS MISINFORMATION? NO";

/// Environment variables that would leak host configuration into a run.
const SCRUBBED: [&str; 7] = [
    "MODEL_ENDPOINT",
    "MODEL_API_KEY",
    "SEARCH_API_KEY",
    "OOC_CACHE_DIR",
    "OOC_TOKEN",
    "STATE_DIR",
    "DATA_ROOT",
];

fn ooc(dir: &Path) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ooc"));
    cmd.current_dir(dir);
    for var in SCRUBBED {
        cmd.env_remove(var);
    }
    cmd
}

fn run(dir: &Path, args: &[&str]) -> Output {
    ooc(dir).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/evidence/provider")
}

fn write_json(path: &Path, value: &Value) -> String {
    std::fs::write(path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::write(ws.path().join("photo.png"), b"\x89PNG\r\n\x1a\nfake image bytes").unwrap();
        ws
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn file(&self, name: &str) -> String {
        self.path().join(name).to_str().unwrap().to_string()
    }

    fn script(&self, name: &str, value: Value) -> String {
        write_json(&self.path().join(name), &value)
    }

    fn run(&self, args: &[&str]) -> Output {
        run(self.path(), args)
    }

    fn detect(&self, script: &str, extra: &[&str]) -> Output {
        let mut args = vec![
            "detect",
            "--image",
            "photo.png",
            "--caption",
            "Flooded street in Lisbon after the storm",
            "--backend",
            "scripted",
            "--script",
            script,
        ];
        args.extend_from_slice(extra);
        self.run(&args)
    }
}

#[test]
fn every_command_prints_help_and_exits_zero_without_side_effects() {
    let ws = Workspace::new();
    let before: Vec<_> = std::fs::read_dir(ws.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    for args in [
        vec!["--help"],
        vec!["detect", "--help"],
        vec!["eval", "--help"],
        vec!["ablate", "--help"],
        vec!["serve", "--help"],
        vec!["cache", "--help"],
        vec!["cache", "list", "--help"],
        vec!["cache", "clear", "--help"],
        vec!["help", "detect"],
    ] {
        let out = ws.run(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", stderr(&out));
        assert!(stdout(&out).contains("Usage:"), "{args:?}");
    }
    let after: Vec<_> = std::fs::read_dir(ws.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(before, after);
}

#[test]
fn usage_errors_exit_one() {
    let ws = Workspace::new();
    let out = ws.run(&["detect", "--image", "photo.png"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("--caption"));
    let out = ws.run(&[
        "detect",
        "--image",
        "photo.png",
        "--caption",
        "x",
        "--strategy",
        "shouting",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown strategy"), "{}", stderr(&out));
    assert_eq!(ws.run(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn converging_yes_session_prints_verdict_last_and_writes_transcript() {
    let ws = Workspace::new();
    let script = ws.script("script.json", json!([YES, YES]));
    let out = ws.detect(&script, &["--no-retrieval", "--out", "t.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    assert_eq!(text.lines().last(), Some("VERDICT: MISINFORMATION"));
    assert!(text.contains("The caption names the wrong city."));
    assert!(text.contains("decision: convergence"));

    let transcript: Value = serde_json::from_str(&std::fs::read_to_string(ws.path().join("t.json")).unwrap()).unwrap();
    assert_eq!(transcript["result"]["rounds_used"], 0);
    assert_eq!(transcript["result"]["final_verdict"], "misinformation");
    assert_eq!(transcript["result"]["transcript"].as_array().unwrap().len(), 2);
    assert_eq!(transcript["caption"], "Flooded street in Lisbon after the storm");
}

#[test]
fn zero_rounds_one_agent_is_a_single_opinion() {
    let ws = Workspace::new();
    let script = ws.script("script.json", json!([NO]));
    let out = ws.detect(
        &script,
        &["--no-retrieval", "--rounds", "0", "--agents", "1", "--out", "t.json"],
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().last(), Some("VERDICT: NOT MISINFORMATION"));
    assert!(stdout(&out).contains("backend calls: 1"));
    let transcript: Value = serde_json::from_str(&std::fs::read_to_string(ws.path().join("t.json")).unwrap()).unwrap();
    let turns = transcript["result"]["transcript"].as_array().unwrap();
    assert_eq!(turns.len(), 1);
    assert_eq!(turns[0]["round_index"], 0);
    assert_eq!(transcript["config"]["max_rounds"], 0);
}

#[test]
fn unreadable_image_exits_one_naming_the_path() {
    let ws = Workspace::new();
    let script = ws.script("script.json", json!([YES, YES]));
    let out = ws.run(&[
        "detect",
        "--image",
        "missing/nowhere.jpg",
        "--caption",
        "A caption",
        "--script",
        &script,
        "--no-retrieval",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("missing/nowhere.jpg"), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());
}

#[test]
fn unparseable_verdict_exits_two() {
    let ws = Workspace::new();
    let script = ws.script("script.json", json!(["I cannot tell.", "Hard to say."]));
    let out = ws.detect(&script, &["--no-retrieval"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert_eq!(stdout(&out).lines().last(), Some("VERDICT: UNPARSEABLE"));
}

#[test]
fn exhausted_script_is_an_operational_error_with_partial_transcript() {
    let ws = Workspace::new();
    // Disagreement forces a debate round the script cannot answer.
    let script = ws.script("script.json", json!([YES, NO]));
    let out = ws.detect(&script, &["--no-retrieval", "--out", "t.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("debate failed"), "{}", stderr(&out));
    let transcript: Value = serde_json::from_str(&std::fs::read_to_string(ws.path().join("t.json")).unwrap()).unwrap();
    assert!(transcript["error"].as_str().unwrap().contains("script exhausted"));
    assert_eq!(transcript["result"]["transcript"].as_array().unwrap().len(), 2);
}

fn retrieval_script(ws: &Workspace) -> String {
    ws.script(
        "rules.json",
        json!({
            "rules": [{"contains": "IS THIS MISINFORMATION", "response": NO}],
            "default": "The page reports flooding in Lisbon in 2019."
        }),
    )
}

#[test]
fn seeded_detect_with_fixtures_is_bit_reproducible() {
    let ws = Workspace::new();
    let script = retrieval_script(&ws);
    let image = fixtures().join("images/five_hits.png");
    let fixture_dir = fixtures();
    let args = |out: &str| {
        vec![
            "detect".to_string(),
            "--image".into(),
            image.to_str().unwrap().into(),
            "--caption".into(),
            "Flooded street in Lisbon".into(),
            "--script".into(),
            script.clone(),
            "--fixtures".into(),
            fixture_dir.to_str().unwrap().into(),
            "--seed".into(),
            "42".into(),
            "--out".into(),
            out.into(),
        ]
    };
    let first = ooc(ws.path()).args(args("a.json")).output().unwrap();
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let second = ooc(ws.path()).args(args("b.json")).output().unwrap();
    assert_eq!(second.status.code(), Some(0), "{}", stderr(&second));

    let a = std::fs::read(ws.path().join("a.json")).unwrap();
    let b = std::fs::read(ws.path().join("b.json")).unwrap();
    assert_eq!(a, b);
    let transcript: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(transcript["evidence"]["hits_used"].as_array().unwrap().len(), 3);
    assert!(transcript["session_id"].as_str().unwrap().starts_with("seed42-"));
    assert!(stdout(&first).contains("evidence: 3 page(s)"));

    // Another seed moves the logical clock and the session id.
    let mut other = args("c.json");
    other[10] = "43".into();
    let third = ooc(ws.path()).args(other).output().unwrap();
    assert_eq!(third.status.code(), Some(0), "{}", stderr(&third));
    let c: Value = serde_json::from_slice(&std::fs::read(ws.path().join("c.json")).unwrap()).unwrap();
    assert_ne!(c["created_at"], transcript["created_at"]);
    assert_eq!(c["result"]["final_verdict"], transcript["result"]["final_verdict"]);
}

#[test]
fn retrieval_without_provider_fails_before_any_call() {
    let ws = Workspace::new();
    let script = ws.script("script.json", json!([YES, YES]));
    let out = ws.detect(&script, &[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("SEARCH_API_KEY"), "{}", stderr(&out));
}

#[test]
fn openai_backend_without_endpoint_is_reported() {
    let ws = Workspace::new();
    let out = ws.run(&[
        "detect",
        "--image",
        "photo.png",
        "--caption",
        "A caption",
        "--backend",
        "openai",
        "--no-retrieval",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("MODEL_ENDPOINT"), "{}", stderr(&out));
}

/// 100 samples, half falsified, with an oracle that is wrong on every tenth.
fn synthetic_eval(ws: &Workspace) -> (String, String) {
    std::fs::create_dir_all(ws.path().join("img")).unwrap();
    let mut manifest = String::new();
    let mut rules = Vec::new();
    for i in 0..100 {
        let falsified = i % 2 == 0;
        let id = format!("s{i:03}");
        std::fs::write(ws.path().join(format!("img/{id}.png")), format!("image {i}")).unwrap();
        let caption = format!("Crowd gathers downtown <case {id}>");
        let record = json!({
            "id": id,
            "image_path": format!("img/{id}.png"),
            "caption": caption,
            "label": if falsified { "falsified" } else { "pristine" },
            "split": "test",
        });
        manifest.push_str(&record.to_string());
        manifest.push('\n');
        let correct = i % 10 != 3;
        let says_yes = falsified == correct;
        rules.push(json!({"contains": format!("<case {id}>"), "response": if says_yes { YES } else { NO }}));
    }
    std::fs::write(ws.path().join("manifest.jsonl"), manifest).unwrap();
    let script = ws.script("oracle.json", json!({ "rules": rules }));
    (ws.file("manifest.jsonl"), script)
}

#[test]
fn eval_reports_oracle_accuracy_and_resumes_identically() {
    let ws = Workspace::new();
    let (manifest, script) = synthetic_eval(&ws);
    let args = [
        "eval",
        "--manifest",
        &manifest,
        "--script",
        &script,
        "--no-retrieval",
        "--out",
        "run",
        "--jobs",
        "4",
    ];
    let first = ws.run(&args);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let report = stdout(&first);
    assert!(report.contains("accuracy 0.900"), "{report}");
    assert!(report.contains("| Accuracy"), "{report}");
    assert!(ws.path().join("run/records.jsonl").is_file());
    assert!(ws.path().join("run/report.md").is_file());

    let again = ws.run(&args);
    assert_eq!(again.status.code(), Some(0), "{}", stderr(&again));
    assert_eq!(stdout(&again), report);
    let records = std::fs::read_to_string(ws.path().join("run/records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 100);
}

#[test]
fn eval_limit_larger_than_split_names_both_sizes() {
    let ws = Workspace::new();
    let (manifest, script) = synthetic_eval(&ws);
    let out = ws.run(&[
        "eval",
        "--manifest",
        &manifest,
        "--script",
        &script,
        "--no-retrieval",
        "--limit",
        "500",
        "--out",
        "run",
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("500") && err.contains("100"), "{err}");
    assert!(!ws.path().join("run").exists(), "nothing runs before validation");
}

#[test]
fn eval_subset_and_split_flags() {
    let ws = Workspace::new();
    let (manifest, script) = synthetic_eval(&ws);
    let out = ws.run(&[
        "eval",
        "--manifest",
        &manifest,
        "--script",
        &script,
        "--no-retrieval",
        "--limit",
        "20",
        "--seed",
        "5",
        "--out",
        "run",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("samples: 20"), "{}", stdout(&out));

    let out = ws.run(&[
        "eval",
        "--manifest",
        &manifest,
        "--script",
        &script,
        "--no-retrieval",
        "--split",
        "val",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("no samples"), "{}", stderr(&out));
}

#[test]
fn ablate_prints_component_table_for_four_rows() {
    let ws = Workspace::new();
    let (manifest, _) = synthetic_eval(&ws);
    // Every sample gets a falsified-leaning answer; retrieval comes from fixtures
    // with no registered hits, so the evidence is empty but the rows still run.
    let script = ws.script(
        "rules.json",
        json!({"rules": [{"contains": "IS THIS MISINFORMATION", "response": YES}], "default": "summary"}),
    );
    let out = ws.run(&[
        "ablate",
        "--manifest",
        &manifest,
        "--script",
        &script,
        "--fixtures",
        fixtures().to_str().unwrap(),
        "--limit",
        "10",
        "--out",
        "grid",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let text = stdout(&out);
    let table = std::fs::read_to_string(ws.path().join("grid/components.md")).unwrap();
    assert!(text.ends_with(&table));
    let rows: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(rows.len(), 4, "{table}");
    // Always answering YES on a balanced subset: accuracy 50, precision 50, recall 100.
    for row in rows {
        assert!(row.contains("| 50.0 | 50.0 | 100.0 |"), "{row}");
    }
    for sub in [
        "retrieval-off_debate-on",
        "retrieval-on_debate-on",
        "retrieval-on_debate-off",
        "retrieval-off_debate-off",
    ] {
        assert!(
            ws.path().join("grid").join(sub).join("records.jsonl").is_file(),
            "{sub}"
        );
    }
}

#[test]
fn cache_commands_list_and_clear_detect_results() {
    let ws = Workspace::new();
    let script = retrieval_script(&ws);
    let cache = ws.file("cache");

    let out = ws.run(&["cache", "list"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("OOC_CACHE_DIR"), "{}", stderr(&out));

    let image = fixtures().join("images/five_hits.png");
    let out = ws.run(&[
        "detect",
        "--image",
        image.to_str().unwrap(),
        "--caption",
        "Flooded street in Lisbon",
        "--script",
        &script,
        "--fixtures",
        fixtures().to_str().unwrap(),
        "--cache-dir",
        &cache,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));

    let out = ws.run(&["cache", "list", "--dir", &cache]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let listing = stdout(&out);
    assert!(listing.contains("3 page(s)"), "{listing}");
    assert!(listing.ends_with("1 entry\n"), "{listing}");

    let out = ooc(ws.path())
        .args(["cache", "clear"])
        .env("OOC_CACHE_DIR", &cache)
        .output()
        .unwrap();
    assert_eq!(stdout(&out), "removed 1 entry\n");
    let out = ws.run(&["cache", "list", "--dir", &cache]);
    assert_eq!(stdout(&out), "0 entries\n");
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let ws = Workspace::new();
    ws.script("script.json", json!([NO, NO]));
    std::fs::write(
        ws.path().join("ooc.toml"),
        "[backend]\nkind = \"scripted\"\nscript = \"script.json\"\n\n[debate]\nrounds = 0\nagents = 1\n\n[retrieval]\nenabled = false\n",
    )
    .unwrap();
    let elsewhere = tempfile::tempdir().unwrap();
    std::fs::write(elsewhere.path().join("photo.png"), b"bytes").unwrap();
    let config = ws.file("ooc.toml");

    let base = [
        "detect",
        "--image",
        "photo.png",
        "--caption",
        "A caption",
        "--config",
        &config,
    ];
    let out = run(elsewhere.path(), &base);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("backend calls: 1"));
    assert!(stdout(&out).contains("evidence: disabled"));

    let mut with_flag = base.to_vec();
    with_flag.extend(["--agents", "2"]);
    let out = run(elsewhere.path(), &with_flag);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert!(stdout(&out).contains("backend calls: 2"), "{}", stdout(&out));

    std::fs::write(ws.path().join("bad.toml"), "[debate]\nround = 2\n").unwrap();
    let out = run(
        elsewhere.path(),
        &[
            "detect",
            "--image",
            "photo.png",
            "--caption",
            "x",
            "--config",
            &ws.file("bad.toml"),
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("bad.toml"), "{}", stderr(&out));
}

fn http_get(addr: &str, path: &str) -> (u16, BTreeMap<String, String>, String) {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(
        stream,
        "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut raw = String::new();
    stream.read_to_string(&mut raw).unwrap();
    let (head, body) = raw.split_once("\r\n\r\n").unwrap();
    let mut lines = head.lines();
    let status = lines
        .next()
        .unwrap()
        .split_whitespace()
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    let headers = lines
        .filter_map(|l| l.split_once(':'))
        .map(|(k, v)| (k.trim().to_ascii_lowercase(), v.trim().to_string()))
        .collect();
    (status, headers, body.to_string())
}

struct Child(std::process::Child);

impl Drop for Child {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn serve_binds_and_answers_health_and_enforces_token() {
    let ws = Workspace::new();
    let script = ws.script("script.json", json!([YES, YES]));
    let mut child = Child(
        ooc(ws.path())
            .args([
                "serve",
                "--bind",
                "127.0.0.1:0",
                "--script",
                &script,
                "--no-retrieval",
                "--token",
                "s3cret",
            ])
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .unwrap(),
    );
    let mut line = String::new();
    BufReader::new(child.0.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let addr = line
        .trim()
        .strip_prefix("listening on http://")
        .expect("address line")
        .to_string();

    let (status, _, body) = http_get(&addr, "/health");
    assert_eq!(status, 200, "{body}");
    let (status, _, _) = http_get(&addr, "/sessions");
    assert_eq!(status, 401);
    let (status, _, body) = http_get(&addr, "/sessions?token=s3cret");
    assert_eq!(status, 200, "{body}");
}
