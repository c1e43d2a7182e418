use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

use nkg_core::annotation::{parse_annotations, validate_annotations};
use nkg_core::builder::build_all;
use nkg_core::eval::EvalReport;
use nkg_core::fixture::{generate_fixture, FixtureKind};
use nkg_core::graph::NarrativeGraph;
use nkg_core::normalize::{apply_normalization, build_normalization_map, GoldLabels, HashedNgram, SynonymLexicon};
use nkg_core::reason::{
    character_trajectory, reconstruct_timeline, summarize_event, trace_dialogue, OrderKind,
};

fn nkg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nkg"))
        .args(args)
        .env_remove("NKG_EMBED_URL")
        .env_remove("NKG_THRESHOLD")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn nkg_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nkg"));
    cmd.args(args).env_remove("NKG_EMBED_URL").env_remove("NKG_THRESHOLD");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout_json(out: &Output) -> Value {
    assert_eq!(code(out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is only the JSON payload")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Fixture, gold file, raw graph and normalized graph for `kind`.
    fn pipeline(&self, kind: &str) -> (PathBuf, PathBuf, PathBuf, PathBuf) {
        let (ann, gold, raw, norm) = (
            self.path(&format!("{kind}.json")),
            self.path(&format!("{kind}_gold.json")),
            self.path(&format!("{kind}.graph.json")),
            self.path(&format!("{kind}.norm.json")),
        );
        assert_eq!(code(&nkg(&["fixture", kind, "--output", s(&ann), "--gold-output", s(&gold)])), 0);
        assert_eq!(code(&nkg(&["build", "--input", s(&ann), "--output", s(&raw)])), 0);
        assert_eq!(code(&nkg(&["normalize", "--input", s(&raw), "--output", s(&norm)])), 0);
        (ann, gold, raw, norm)
    }
}

fn load_graph(path: &Path) -> NarrativeGraph {
    NarrativeGraph::from_json(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn build_writes_a_round_tripping_graph() {
    let ws = Workspace::new();
    let (ann, _, raw, _) = ws.pipeline("battle");
    let bytes = std::fs::read(&raw).unwrap();
    let g = NarrativeGraph::from_json(&bytes).unwrap();
    assert_eq!(g.to_json(), bytes);
    assert!(!g.is_normalized());

    let manifest: Value = serde_json::from_slice(
        &std::fs::read(Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/battle_fixture.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(g.node_count() as u64, manifest["node_total"].as_u64().unwrap());
    assert_eq!(g.edge_count() as u64, manifest["edge_total"].as_u64().unwrap());

    let to_stdout = nkg(&["build", "--input", s(&ann)]);
    assert_eq!(code(&to_stdout), 0);
    assert_eq!(to_stdout.stdout, bytes);
}

#[test]
fn build_rejects_malformed_json() {
    let ws = Workspace::new();
    let bad = ws.path("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1,").unwrap();
    let out = nkg(&["build", "--input", s(&bad)]);
    assert_eq!(code(&out), 2);
    assert!(out.stdout.is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("malformed JSON"));

    let invalid = ws.path("invalid.json");
    std::fs::write(
        &invalid,
        r#"{"schema_version":1,"story_id":"s","macro_events":[{"id":"m","label":"M","events":[]}]}"#,
    )
    .unwrap();
    assert_eq!(code(&nkg(&["build", "--input", s(&invalid)])), 2);
}

#[test]
fn normalize_matches_library_and_refuses_twice() {
    let ws = Workspace::new();
    let (_, _, raw, norm) = ws.pipeline("battle");
    let g = load_graph(&norm);
    assert!(g.is_normalized());

    let lib_raw = load_graph(&raw);
    let lex = SynonymLexicon::default_lexicon();
    let map = build_normalization_map(&lib_raw, &HashedNgram::default(), &lex, 0.75, &GoldLabels::default()).unwrap();
    assert_eq!(std::fs::read(ws.path("battle.norm.map.json")).unwrap(), map.to_json());
    assert_eq!(g, apply_normalization(&lib_raw, &map).unwrap());

    let again = nkg(&["normalize", "--input", s(&norm), "--output", s(&ws.path("x.json"))]);
    assert_eq!(code(&again), 3);
    assert!(!ws.path("x.json").exists());
}

#[test]
fn query_action_attack_finds_three_hits() {
    let ws = Workspace::new();
    let (_, _, _, norm) = ws.pipeline("battle");
    let hits = stdout_json(&nkg(&["query", "--input", s(&norm), "action", "attack"]));
    let labels: Vec<&str> = hits
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["surface_label"].as_str().unwrap())
        .collect();
    assert_eq!(labels, ["fight", "hit", "strike"]);
}

#[test]
fn query_results_equal_library_calls() {
    let ws = Workspace::new();
    let (_, _, raw, _) = ws.pipeline("battle");
    let g = load_graph(&raw);
    let q = |task: &str, target: &str, extra: &[&str]| {
        let mut args = vec!["query", "--input", s(&raw), task, target];
        args.extend_from_slice(extra);
        stdout_json(&nkg(&args))
    };
    let json = |v: &dyn erased::Ser| v.value();
    assert_eq!(q("dialogue", "e3_0", &[]), json(&trace_dialogue(&g, "e3_0").unwrap()));
    assert_eq!(q("trajectory", "charA", &[]), json(&character_trajectory(&g, "charA").unwrap()));
    assert_eq!(
        q("timeline", "m2", &["--order", "storytime"]),
        json(&reconstruct_timeline(&g, "m2", OrderKind::Storytime).unwrap())
    );
    assert_eq!(q("summary", "m0", &[]), json(&summarize_event(&g, "m0").unwrap()));
}

mod erased {
    pub trait Ser {
        fn value(&self) -> serde_json::Value;
    }

    impl<T: serde::Serialize> Ser for T {
        fn value(&self) -> serde_json::Value {
            serde_json::to_value(self).unwrap()
        }
    }
}

#[test]
fn query_timeline_starts_at_first_panel() {
    let ws = Workspace::new();
    let (_, _, raw, _) = ws.pipeline("battle");
    let t = stdout_json(&nkg(&["query", "--input", s(&raw), "timeline", "m0", "--order", "reading"]));
    let panels: Vec<&str> = t["panel_ids"].as_array().unwrap().iter().map(|p| p.as_str().unwrap()).collect();
    assert_eq!(panels.first(), Some(&"0_0_0"));
    assert_eq!(panels.last(), Some(&"0_2_3"));
    assert_eq!(panels.len(), 9);
}

#[test]
fn query_error_exit_codes() {
    let ws = Workspace::new();
    let (_, _, raw, _) = ws.pipeline("battle");
    let summary_of_panel = nkg(&["query", "--input", s(&raw), "summary", "0_0_0"]);
    assert_eq!(code(&summary_of_panel), 5);
    assert!(summary_of_panel.stdout.is_empty());
    assert_eq!(code(&nkg(&["query", "--input", s(&raw), "trajectory", "nobody"])), 5);
    assert_eq!(code(&nkg(&["query", "--input", s(&raw), "dialogue", "zzz"])), 5);
    assert_eq!(code(&nkg(&["query", "--input", s(&raw), "timeline", "nowhere"])), 5);
    assert_eq!(
        code(&nkg(&["query", "--input", s(&raw), "action", "fight", "--mode", "normalized"])),
        6
    );
}

#[test]
fn eval_romance_markdown() {
    let ws = Workspace::new();
    let (ann, gold, _, _) = ws.pipeline("romance");
    let out = nkg(&["eval", "--input", s(&ann), "--gold", s(&gold), "--format", "md"]);
    assert_eq!(code(&out), 0);
    let md = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = md.lines().skip(2).collect();
    assert_eq!(rows.len(), 3);
    for (row, label) in rows.iter().zip(["Message from family", "Shock by message", "Think of family"]) {
        assert!(row.starts_with(&format!("| {label} |")));
    }
}

#[test]
fn eval_threshold_extremes_order_cluster_counts() {
    let ws = Workspace::new();
    let (ann, gold, _, _) = ws.pipeline("romance");
    let run = |t: &str| {
        let v = stdout_json(&nkg(&["eval", "--input", s(&ann), "--gold", s(&gold), "--threshold", t]));
        EvalReport::from_json(v.to_string().as_bytes()).unwrap()
    };
    let (loose, strict) = (run("0.0"), run("1.0"));
    assert!(loose.action_clusters <= strict.action_clusters);
    assert!(loose.event_clusters <= strict.event_clusters);
}

#[test]
fn eval_minimal_document() {
    let ws = Workspace::new();
    let ann = ws.path("tiny.json");
    let gold = ws.path("gold.json");
    std::fs::write(
        &ann,
        r#"{"schema_version":1,"story_id":"tiny","macro_events":[{"id":"m","label":"Only","events":[
            {"id":"e","label":"Scene","panels":[{"id":"0_0_0","reading_order":0,"storytime_order":0}]}]}]}"#,
    )
    .unwrap();
    std::fs::write(&gold, r#"{"action_clusters":{}}"#).unwrap();
    let out = nkg(&["eval", "--input", s(&ann), "--gold", s(&gold), "--format", "md"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 3);

    std::fs::write(&gold, r#"{"clusters":{}}"#).unwrap();
    let bad = nkg(&["eval", "--input", s(&ann), "--gold", s(&gold)]);
    assert_eq!(code(&bad), 2);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("gold stage"));
}

#[test]
fn fixtures_are_valid_and_deterministic() {
    let ws = Workspace::new();
    let (a, b, r) = (ws.path("a.json"), ws.path("b.json"), ws.path("r.json"));
    assert_eq!(code(&nkg(&["fixture", "noise", "--seed", "1", "--output", s(&a)])), 0);
    assert_eq!(code(&nkg(&["fixture", "noise", "--seed", "1", "--output", s(&b)])), 0);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let battle = nkg(&["fixture", "battle"]);
    assert_eq!(code(&battle), 0);
    let doc = parse_annotations(&battle.stdout).unwrap();
    assert!(validate_annotations(&doc).is_empty());
    assert_eq!(doc, generate_fixture(FixtureKind::Battle));
    build_all(&doc).unwrap();

    assert_eq!(code(&nkg(&["fixture", "romance", "--output", s(&r)])), 0);
    let text = std::fs::read_to_string(&r).unwrap();
    assert!(text.contains("\"insert\"") && text.contains("\"insert_into\""));

    assert_eq!(code(&nkg(&["fixture", "noise", "--variance", "2"])), 2);
}

#[test]
fn configuration_precedence() {
    let ws = Workspace::new();
    let (ann, gold, _, _) = ws.pipeline("romance");
    let config = ws.path("nkg.toml");
    std::fs::write(&config, "threshold = 0.5\n").unwrap();
    let threshold = |out: Output| stdout_json(&out)["threshold"].as_f64().unwrap();
    let base = ["eval", "--input", s(&ann), "--gold", s(&gold)];

    let mut with_config = base.to_vec();
    with_config.extend(["--config", s(&config)]);
    assert_eq!(threshold(nkg(&with_config)), 0.5);
    assert_eq!(threshold(nkg_env(&with_config, &[("NKG_THRESHOLD", "0.6")])), 0.6);
    let mut with_flag = with_config.clone();
    with_flag.extend(["--threshold", "0.7"]);
    assert_eq!(threshold(nkg_env(&with_flag, &[("NKG_THRESHOLD", "0.6")])), 0.7);
    assert_eq!(threshold(nkg(&base)), 0.75);

    let mut bad = base.to_vec();
    bad.extend(["--threshold", "1.5"]);
    assert_eq!(code(&nkg(&bad)), 2);
    let mut bad_url = base.to_vec();
    bad_url.extend(["--embedder", "remote:not-a-url"]);
    assert_eq!(code(&nkg(&bad_url)), 2);
}

#[test]
fn unreachable_embedding_service_is_a_provider_error() {
    let ws = Workspace::new();
    let (_, _, raw, _) = ws.pipeline("battle");
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let out = nkg_env(
        &["normalize", "--input", s(&raw), "--output", s(&ws.path("n.json"))],
        &[("NKG_EMBED_URL", &format!("http://127.0.0.1:{port}"))],
    );
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_vector_in_file_embedder_is_a_provider_error() {
    let ws = Workspace::new();
    let (_, _, raw, _) = ws.pipeline("battle");
    let vectors = ws.path("vectors.json");
    std::fs::write(&vectors, r#"{"dim":2,"vectors":{"fight":[1.0,0.0]}}"#).unwrap();
    let embedder = format!("file:{}", s(&vectors));
    let out = nkg(&["normalize", "--input", s(&raw), "--output", s(&ws.path("n.json")), "--embedder", &embedder]);
    assert_eq!(code(&out), 4);
}
