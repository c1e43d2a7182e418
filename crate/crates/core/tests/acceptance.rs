//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any
//! failure.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use nkg_core::annotation::AnnotationDoc;
use nkg_core::builder::build_all;
use nkg_core::eval::{
    build_gold, coverage, ordering_accuracy, run_eval, set_f1, token_f1, EvalSettings, GoldLabelFile, Prf,
    Task, Variant,
};
use nkg_core::fixture::{fixture_gold, generate_fixture, FixtureKind};
use nkg_core::graph::{deserialize, serialize, NarrativeGraph, NodeKind};
use nkg_core::normalize::{
    apply_normalization, build_normalization_map, cluster_labels, cosine, EmbeddingProvider, HashedNgram,
    NormalizationMap, SynonymLexicon, VectorFile,
};
use nkg_core::reason::{
    character_trajectory, reconstruct_timeline, retrieve_actions, summarize_event, trace_dialogue, OrderKind,
    RetrievalMode,
};

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn all_fixtures() -> Vec<FixtureKind> {
    let mut kinds = vec![FixtureKind::Battle, FixtureKind::Romance];
    for seed in 0..8 {
        for variance in [0.0, 0.3, 0.7] {
            kinds.push(FixtureKind::Noise { seed, variance });
        }
    }
    kinds
}

struct Pipeline {
    doc: AnnotationDoc,
    labels: GoldLabelFile,
    raw: NarrativeGraph,
    map: NormalizationMap,
    norm: NarrativeGraph,
}

fn pipeline(kind: FixtureKind) -> Pipeline {
    let doc = generate_fixture(kind);
    let labels = fixture_gold(kind);
    let raw = build_all(&doc).expect("fixture builds");
    let lexicon = SynonymLexicon::default_lexicon();
    let map = build_normalization_map(&raw, &HashedNgram::default(), &lexicon, 0.75, &labels.gold_labels())
        .expect("map builds");
    let norm = apply_normalization(&raw, &map).expect("normalizes");
    Pipeline {
        doc,
        labels,
        raw,
        map,
        norm,
    }
}

fn fixture_replication() -> Outcome {
    let battle = pipeline(FixtureKind::Battle);

    let hits = retrieve_actions(&battle.norm, "attack", RetrievalMode::Normalized).map_err(|e| e.to_string())?;
    let hit_panels: BTreeSet<String> = hits.iter().map(|h| h.panel_id.clone()).collect();
    let expected: BTreeSet<String> = battle
        .doc
        .panels()
        .filter(|(_, _, p)| p.actions.iter().any(|a| ["fight", "strike", "hit"].contains(&a.label.as_str())))
        .map(|(_, _, p)| p.id.clone())
        .collect();
    ensure!(expected.len() == 3, "fixture has {} attack panels", expected.len());
    ensure!(hit_panels == expected && hits.len() == 3, "attack hits {hit_panels:?}, expected {expected:?}");

    let intro = battle
        .doc
        .macro_events
        .iter()
        .flat_map(|m| &m.events)
        .find(|e| e.label == "Monster intro")
        .ok_or("no Monster intro event")?;
    let trace = trace_dialogue(&battle.raw, &intro.id).map_err(|e| e.to_string())?;
    let panels: BTreeSet<_> = trace.entries.iter().map(|e| &e.panel_id).collect();
    let speakers: BTreeSet<_> = trace.entries.iter().filter_map(|e| e.speaker.as_ref()).collect();
    ensure!(
        (trace.entries.len(), panels.len(), speakers.len()) == (4, 3, 2),
        "dialogue trace has {} entries, {} panels, {} speakers",
        trace.entries.len(),
        panels.len(),
        speakers.len()
    );

    let t = character_trajectory(&battle.raw, "charA").map_err(|e| e.to_string())?;
    ensure!(
        (t.panel_ids.len(), t.event_ids.len(), t.macro_event_ids.len()) == (12, 4, 2),
        "charA trajectory {} / {} / {}",
        t.panel_ids.len(),
        t.event_ids.len(),
        t.macro_event_ids.len()
    );
    let gold = build_gold(&battle.doc, &battle.labels);
    let cov = coverage(&t.panel_ids.iter().cloned().collect(), &gold.trajectory_gold["charA"])
        .map_err(|e| e.to_string())?;
    ensure!(cov == 1.0, "charA coverage {cov}");

    let first = &battle.doc.macro_events[0];
    let timeline = reconstruct_timeline(&battle.raw, &first.id, OrderKind::Reading).map_err(|e| e.to_string())?;
    let annotated: Vec<String> = first.panels().map(|p| p.id.clone()).collect();
    ensure!(timeline.panel_ids == annotated, "timeline {:?}", timeline.panel_ids);
    ensure!(
        timeline.panel_ids.first().map(String::as_str) == Some("0_0_0")
            && timeline.panel_ids.last().map(String::as_str) == Some("0_2_3"),
        "timeline endpoints {:?}",
        timeline.panel_ids
    );
    let acc = ordering_accuracy(&timeline.panel_ids, &gold.order_gold[&first.id]).map_err(|e| e.to_string())?;
    ensure!(acc == 1.0, "ordering accuracy {acc}");

    let romance = pipeline(FixtureKind::Romance);
    let think = romance
        .doc
        .macro_events
        .iter()
        .find(|m| m.label == "Think of family")
        .ok_or("no Think of family")?;
    let summary = summarize_event(&romance.raw, &think.id).map_err(|e| e.to_string())?;
    let labels: Vec<&str> = summary.children.iter().map(|c| c.label.as_str()).collect();
    ensure!(
        labels == ["Intro", "Get new rice cooker", "Test new rice cooker", "Eat and think of family"],
        "summary {labels:?}"
    );
    Ok(())
}

/// Label pool with lexical collisions, synonym hits and unrelated words.
fn random_labels(rng: &mut ChaCha8Rng, max: usize) -> Vec<String> {
    const STEMS: &[&str] = &[
        "attack", "strike", "fight", "hit", "walk", "run", "dash", "look", "see", "eat", "cry", "weep", "open",
        "jump", "insert", "insert_into", "put_in", "read", "smile", "grin", "hold", "carry", "wave", "fall",
    ];
    const SUFFIXES: &[&str] = &["", "", "s", "ing", "ed"];
    let n = rng.random_range(1..=max);
    let mut out = BTreeSet::new();
    while out.len() < n {
        let stem = *STEMS.choose(rng).unwrap();
        let label = if rng.random_bool(0.3) {
            let len = rng.random_range(3..8);
            (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
        } else {
            format!("{stem}{}", SUFFIXES.choose(rng).unwrap())
        };
        out.insert(label);
    }
    out.into_iter().collect()
}

fn random_vectors(rng: &mut ChaCha8Rng, labels: &[String], dim: usize) -> VectorFile {
    VectorFile::from_vectors(
        "random",
        dim,
        labels.iter().map(|l| {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            if v.iter().all(|x| *x == 0.0) {
                v[0] = 1.0;
            }
            (l.clone(), v)
        }),
    )
    .expect("uniform dimension")
}

/// Connected components by breadth-first search over the explicit link matrix.
fn bfs_components(
    labels: &[String],
    provider: &dyn EmbeddingProvider,
    lexicon: &SynonymLexicon,
    threshold: f64,
) -> Vec<Vec<String>> {
    let n = labels.len();
    let keys: Vec<String> = labels.iter().map(|l| lexicon.lexical_key(l).unwrap()).collect();
    let groups: Vec<Option<usize>> = keys.iter().map(|k| lexicon.group_of_key(k)).collect();
    let vecs: Vec<_> = labels.iter().map(|l| provider.embed(l).unwrap()).collect();
    let mut linked = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            linked[i][j] = i != j
                && (keys[i] == keys[j]
                    || (groups[i].is_some() && groups[i] == groups[j])
                    || cosine(vecs[i].values(), vecs[j].values()) >= threshold);
        }
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            comp.push(labels[i].clone());
            for j in 0..n {
                if linked[i][j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        comp.sort();
        out.push(comp);
    }
    out.sort();
    out
}

fn clustering_oracle() -> Outcome {
    let lexicon = SynonymLexicon::default_lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    for trial in 0..200 {
        let labels = random_labels(&mut rng, 50);
        let dim = rng.random_range(2..6);
        let provider = random_vectors(&mut rng, &labels, dim);
        let threshold = rng.random_range(0.0..=1.0);
        let set: BTreeSet<String> = labels.iter().cloned().collect();
        let mut got = cluster_labels(&set, &provider, &lexicon, threshold).map_err(|e| e.to_string())?;
        got.sort();
        let expected = bfs_components(&labels, &provider, &lexicon, threshold);
        ensure!(got == expected, "trial {trial} (θ={threshold}) disagrees with BFS components");
    }
    Ok(())
}

fn threshold_monotonicity() -> Outcome {
    let lexicon = SynonymLexicon::default_lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(0x7e57);
    let hashed = HashedNgram::default();
    for trial in 0..50 {
        let labels = random_labels(&mut rng, 40);
        let file = random_vectors(&mut rng, &labels, 3);
        let providers: [&dyn EmbeddingProvider; 2] = [&hashed, &file];
        let provider = providers[trial % 2];
        let set: BTreeSet<String> = labels.into_iter().collect();
        let mut previous: Option<Vec<Vec<String>>> = None;
        for threshold in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let clusters = cluster_labels(&set, provider, &lexicon, threshold).map_err(|e| e.to_string())?;
            if let Some(coarse) = &previous {
                ensure!(
                    clusters.len() >= coarse.len(),
                    "trial {trial}: {} clusters at θ={threshold} after {}",
                    clusters.len(),
                    coarse.len()
                );
                let owner: BTreeMap<&String, usize> = coarse
                    .iter()
                    .enumerate()
                    .flat_map(|(i, c)| c.iter().map(move |m| (m, i)))
                    .collect();
                for c in &clusters {
                    let parents: BTreeSet<usize> = c.iter().map(|m| owner[m]).collect();
                    ensure!(parents.len() == 1, "trial {trial}: θ={threshold} cluster {c:?} is not a refinement");
                }
            }
            previous = Some(clusters);
        }
    }
    Ok(())
}

fn label_snapshot(g: &NarrativeGraph) -> BTreeMap<String, (Option<String>, Option<String>)> {
    g.nodes()
        .map(|n| {
            (
                n.id.clone(),
                (n.label().map(str::to_owned), n.surface_label().map(str::to_owned)),
            )
        })
        .collect()
}

fn normalization_idempotence() -> Outcome {
    for kind in all_fixtures() {
        let p = pipeline(kind);
        let ids = |g: &NarrativeGraph| g.nodes().map(|n| (n.id.clone(), n.kind)).collect::<Vec<_>>();
        ensure!(ids(&p.raw) == ids(&p.norm), "{kind:?}: node set changed");
        ensure!(
            p.raw.edges().cloned().collect::<Vec<_>>() == p.norm.edges().cloned().collect::<Vec<_>>(),
            "{kind:?}: edge set changed"
        );
        let mut again = p.norm.clone();
        again.set_normalized(false);
        let again = apply_normalization(&again, &p.map).map_err(|e| e.to_string())?;
        ensure!(label_snapshot(&again) == label_snapshot(&p.norm), "{kind:?}: re-application changed labels");
        ensure!(serialize(&again) == serialize(&p.norm), "{kind:?}: re-application changed bytes");
        let relabeled = p
            .norm
            .nodes()
            .filter(|n| matches!(n.kind, NodeKind::Action | NodeKind::Event | NodeKind::MacroEvent))
            .all(|n| n.surface_label().is_some());
        ensure!(relabeled, "{kind:?}: labeled node without surface label");
    }
    Ok(())
}

fn eval_report(p: &Pipeline, also_normalized: bool) -> Result<nkg_core::eval::EvalReport, String> {
    let gold = build_gold(&p.doc, &p.labels);
    let settings = EvalSettings {
        also_normalized,
        ..EvalSettings::from_map(&p.map)
    };
    run_eval(&p.doc, &p.raw, &p.norm, &gold, &settings).map_err(|e| e.to_string())
}

fn degradation_direction() -> Outcome {
    let romance = pipeline(FixtureKind::Romance);
    let report = eval_report(&romance, false)?;
    let think = romance
        .doc
        .macro_events
        .iter()
        .find(|m| m.label == "Think of family")
        .ok_or("no Think of family")?;
    let raw = report.row(&think.id, Task::T1, Variant::Raw).ok_or("missing raw row")?.f1;
    let norm = report.row(&think.id, Task::T1, Variant::Normalized).ok_or("missing norm row")?.f1;
    ensure!(norm < raw, "Think of family T1 raw {raw} vs normalized {norm}");

    let battle = pipeline(FixtureKind::Battle);
    let report = eval_report(&battle, false)?;
    for m in &battle.doc.macro_events {
        let raw = report.row(&m.id, Task::T1, Variant::Raw).ok_or("missing raw row")?.f1;
        let norm = report.row(&m.id, Task::T1, Variant::Normalized).ok_or("missing norm row")?.f1;
        ensure!(raw == norm, "battle `{}` T1 raw {raw} vs normalized {norm}", m.label);
    }
    Ok(())
}

fn oracle_tokens(span: &str) -> Vec<String> {
    let cleaned: String = span
        .to_lowercase()
        .chars()
        .filter(|c| c.is_whitespace() || !c.is_ascii_punctuation())
        .collect();
    cleaned.split_whitespace().map(str::to_owned).collect()
}

fn oracle_token_prf(pred: &[String], gold: &[String]) -> Prf {
    let mut p: Vec<String> = pred.iter().flat_map(|s| oracle_tokens(s)).collect();
    let mut g: Vec<String> = gold.iter().flat_map(|s| oracle_tokens(s)).collect();
    p.sort();
    g.sort();
    let (mut i, mut j, mut tp) = (0, 0, 0);
    while i < p.len() && j < g.len() {
        match p[i].cmp(&g[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                tp += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Prf {
        precision: div(tp, p.len()),
        recall: div(tp, g.len()),
        f1: div(2 * tp, p.len() + g.len()),
    }
}

fn random_span(rng: &mut ChaCha8Rng) -> String {
    const WORDS: &[&str] = &["Hello", "hello,", "world", "there!", "the", "The", "monster", "run.", "I'm", "...", "ok"];
    let n = rng.random_range(0..8);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn metric_correctness() -> Outcome {
    let a: BTreeSet<&str> = ["a", "b", "c"].into();
    let b: BTreeSet<&str> = ["b", "c", "d"].into();
    let s = set_f1(&a, &b);
    ensure!(
        s.precision == 2.0 / 3.0 && s.recall == 2.0 / 3.0 && s.f1 == 2.0 / 3.0,
        "set_f1 gave {s:?}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(0xf1);
    for trial in 0..100 {
        let pred: Vec<String> = (0..rng.random_range(0..4)).map(|_| random_span(&mut rng)).collect();
        let gold: Vec<String> = (0..rng.random_range(0..4)).map(|_| random_span(&mut rng)).collect();
        let got = token_f1(&pred, &gold);
        let want = oracle_token_prf(&pred, &gold);
        ensure!(got == want, "token_f1 trial {trial}: {got:?} vs oracle {want:?}");
    }

    for trial in 0..100 {
        let n = rng.random_range(0..=20);
        let gold: Vec<usize> = (0..n).collect();
        let mut pred = gold.clone();
        for i in (1..n).rev() {
            pred.swap(i, rng.random_range(0..=i));
        }
        let pos: BTreeMap<usize, usize> = gold.iter().enumerate().map(|(i, x)| (*x, i)).collect();
        let mut concordant = 0usize;
        let mut total = 0usize;
        for i in 0..n {
            for j in i + 1..n {
                total += 1;
                if pos[&pred[i]] < pos[&pred[j]] {
                    concordant += 1;
                }
            }
        }
        let want = if total == 0 { 1.0 } else { concordant as f64 / total as f64 };
        let got = ordering_accuracy(&pred, &gold).map_err(|e| e.to_string())?;
        ensure!(got == want, "ordering trial {trial} (n={n}): {got} vs oracle {want}");
    }
    Ok(())
}

fn serialization_stability() -> Outcome {
    for kind in all_fixtures() {
        let p = pipeline(kind);
        for g in [&p.raw, &p.norm] {
            let first = serialize(g);
            let back = deserialize(&first).map_err(|e| e.to_string())?;
            ensure!(&back == g, "{kind:?}: deserialized graph differs");
            ensure!(serialize(&back) == first, "{kind:?}: bytes differ after round trip");
        }
    }
    Ok(())
}

fn perfect_information() -> Outcome {
    for kind in all_fixtures() {
        let p = pipeline(kind);
        let report = eval_report(&p, true)?;
        for r in &report.rows {
            if matches!(r.task, Task::T3 | Task::T4) {
                ensure!(
                    r.precision == 1.0 && r.recall == 1.0 && r.f1 == 1.0,
                    "{kind:?} {} {} {:?}: {}",
                    r.macro_event_id,
                    r.task,
                    r.variant,
                    r.f1
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("fixture replication", fixture_replication),
        ("clustering oracle equivalence", clustering_oracle),
        ("threshold monotonicity", threshold_monotonicity),
        ("normalization idempotence and topology preservation", normalization_idempotence),
        ("degradation direction", degradation_direction),
        ("metric correctness", metric_correctness),
        ("serialization stability", serialization_stability),
        ("perfect-information sanity", perfect_information),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (name, run) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(()) => println!("PASS  {name}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.2?}",
        criteria.len() - failed,
        start.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
