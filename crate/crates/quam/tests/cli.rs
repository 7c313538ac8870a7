use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use quam::core::graph::{CorpusGraph, Edge};
use quam::core::{DocId, DocIndex};
use quam::format;

fn quam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quam"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = quam(args);
    assert!(
        out.status.success(),
        "quam {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Four-document pool, six scored documents, two linked nodes.
struct SixDocs {
    _dir: tempfile::TempDir,
    run: PathBuf,
    scores: PathBuf,
    graph: PathBuf,
    root: PathBuf,
}

fn six_docs() -> SixDocs {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let run = root.join("run.txt");
    std::fs::write(
        &run,
        "q Q0 d1 1 4 bm25\nq Q0 d2 2 3 bm25\nq Q0 d3 3 2 bm25\nq Q0 d4 4 1 bm25\n",
    )
    .unwrap();
    let scores = root.join("scores.txt");
    std::fs::write(
        &scores,
        "q Q0 d5 1 0.95 ce\nq Q0 d1 2 0.9 ce\nq Q0 d3 3 0.8 ce\nq Q0 d4 4 0.2 ce\nq Q0 d2 5 0.1 ce\nq Q0 d6 6 0.05 ce\n",
    )
    .unwrap();
    let mut lists = vec![Vec::new(); 6];
    lists[0] = vec![Edge::new(DocId(4), 0.9), Edge::new(DocId(5), 0.1)];
    lists[1] = vec![Edge::new(DocId(5), 0.8)];
    let graph_path = root.join("graph.bin");
    format::save_graph(&CorpusGraph::from_adjacency(2, lists).unwrap(), &graph_path).unwrap();
    let ids = DocIndex::from_names(["d1", "d2", "d3", "d4", "d5", "d6"]).unwrap();
    format::write_ids(&ids, &format::sidecar_path(&graph_path)).unwrap();
    SixDocs {
        _dir: dir,
        run,
        scores,
        graph: graph_path,
        root,
    }
}

fn docs_of(run_text: &str) -> Vec<String> {
    run_text
        .lines()
        .map(|l| l.split_whitespace().nth(2).unwrap().to_string())
        .collect()
}

fn rerank_six(fx: &SixDocs, strategy: &str, out: &Path, trace: Option<&Path>) -> Output {
    let mut args = vec![
        "rerank",
        "--run",
        p(&fx.run),
        "--scores",
        p(&fx.scores),
        "--graph",
        p(&fx.graph),
        "--strategy",
        strategy,
        "--budget",
        "4",
        "--batch",
        "2",
        "--s",
        "2",
        "--out",
        p(out),
    ];
    if let Some(t) = trace {
        args.extend(["--trace", p(t)]);
    }
    quam(&args)
}

#[test]
fn six_doc_quam_run_and_trace() {
    let fx = six_docs();
    let out = fx.root.join("quam.txt");
    let trace = fx.root.join("trace.jsonl");
    assert!(rerank_six(&fx, "quam", &out, Some(&trace)).status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(docs_of(&text), ["d5", "d1", "d2", "d6"]);
    assert!(text.lines().all(|l| l.ends_with(" quam")));

    let steps: Vec<serde_json::Value> = std::fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(steps.len(), 2);
    assert_eq!(steps[0]["pool"], "R0");
    assert_eq!(steps[1]["pool"], "F");
    let frontier = steps[0]["frontier"].as_array().unwrap();
    assert_eq!(frontier[0][0], "d5");
    assert_eq!(frontier[1][0], "d6");
    assert!((frontier[0][1].as_f64().unwrap() - 0.620977).abs() < 5e-7);
    assert!((frontier[1][1].as_f64().unwrap() - 0.317018).abs() < 5e-7);
}

#[test]
fn rerank_output_is_reproducible() {
    let fx = six_docs();
    let a = fx.root.join("a.txt");
    let b = fx.root.join("b.txt");
    assert!(rerank_six(&fx, "gar", &a, None).status.success());
    assert!(rerank_six(&fx, "gar", &b, None).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn edgeless_graph_reproduces_plain() {
    let fx = six_docs();
    format::save_graph(&CorpusGraph::empty(6, 2), &fx.graph).unwrap();
    let plain = fx.root.join("plain.txt");
    let quam_out = fx.root.join("quam.txt");
    assert!(rerank_six(&fx, "plain", &plain, None).status.success());
    assert!(rerank_six(&fx, "quam", &quam_out, None).status.success());
    let strip = |t: String| docs_of(&t);
    assert_eq!(
        strip(std::fs::read_to_string(&plain).unwrap()),
        strip(std::fs::read_to_string(&quam_out).unwrap())
    );
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = quam(&[
        "rerank",
        "--run",
        p(&dir.path().join("absent.txt")),
        "--scores",
        p(&dir.path().join("absent.txt")),
        "--strategy",
        "plain",
        "--out",
        p(&dir.path().join("o.txt")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("absent.txt"), "{err}");
}

#[test]
fn gar_laff_without_affinity_graph_is_a_config_error() {
    let fx = six_docs();
    let out = rerank_six(&fx, "gar-laff", &fx.root.join("o.txt"), None);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(quam(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(quam(&["rerank"]).status.code(), Some(1));
    assert_eq!(quam(&["--help"]).status.code(), Some(0));
}

#[test]
fn corrupt_graph_is_a_data_error() {
    let fx = six_docs();
    let mut bytes = std::fs::read(&fx.graph).unwrap();
    bytes[0] = b'X';
    std::fs::write(&fx.graph, bytes).unwrap();
    let out = rerank_six(&fx, "gar", &fx.root.join("o.txt"), None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("offset 0"));
}

#[test]
fn perfect_run_scores_one() {
    let dir = tempfile::tempdir().unwrap();
    let qrels = dir.path().join("qrels.txt");
    let run = dir.path().join("run.txt");
    std::fs::write(&qrels, "q1 0 a 3\nq1 0 b 2\nq1 0 c 0\nq2 0 x 2\n").unwrap();
    std::fs::write(
        &run,
        "q1 Q0 a 1 3 ideal\nq1 Q0 b 2 2 ideal\nq1 Q0 c 3 1 ideal\nq2 Q0 x 1 1 ideal\n",
    )
    .unwrap();
    let out = ok(&[
        "evaluate",
        "--run",
        p(&run),
        "--qrels",
        p(&qrels),
        "--cutoffs",
        "10",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "strategy\tc\tnDCG@10\tnDCG@c\tRecall@c\tms/query"
    );
    assert_eq!(
        lines.next().unwrap(),
        "ideal\t10\t1.0000\t1.0000\t1.0000\tNA"
    );
}

#[test]
fn synthetic_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let data = d.join("data");
    ok(&[
        "synth",
        "--num-docs",
        "400",
        "--num-queries",
        "4",
        "--text",
        "--seed",
        "3",
        "--out",
        p(&data),
    ]);
    let graph = data.join("graph.bin");
    let qrels = data.join("qrels.txt");
    let affinity = d.join("affinity.bin");
    ok(&[
        "reweight-graph",
        "--graph",
        p(&graph),
        "--qrels",
        p(&qrels),
        "--noise",
        "0.3",
        "--prune",
        "8",
        "--out",
        p(&affinity),
    ]);
    ok(&[
        "build-graph",
        "--corpus",
        p(&data.join("corpus.tsv")),
        "--k",
        "4",
        "--out",
        p(&d.join("bm25.bin")),
    ]);
    let mut runs = Vec::new();
    for strategy in ["plain", "gar", "gar-laff", "gar-setaff", "quam"] {
        let out = d.join(format!("{strategy}.txt"));
        ok(&[
            "rerank",
            "--run",
            p(&data.join("run.txt")),
            "--scorer",
            "oracle",
            "--qrels",
            p(&qrels),
            "--noise",
            "0.5",
            "--graph",
            p(&graph),
            "--affinity-graph",
            p(&affinity),
            "--strategy",
            strategy,
            "--budget",
            "40",
            "--threads",
            "2",
            "--out",
            p(&out),
        ]);
        runs.push(out);
    }
    let mut args = vec!["evaluate", "--qrels", p(&qrels), "--cutoffs", "40", "--run"];
    args.extend(runs.iter().map(|r| p(r)));
    let sig = d.join("sig.tsv");
    args.extend(["--significance", p(&sig)]);
    let table = String::from_utf8(ok(&args).stdout).unwrap();
    assert_eq!(table.lines().count(), 6);
    assert_eq!(
        std::fs::read_to_string(&sig).unwrap().lines().count(),
        1 + 4 * 3
    );

    let triples = d.join("triples.tsv");
    ok(&[
        "mine-triples",
        "--r0",
        p(&data.join("run.txt")),
        "--r1",
        p(&runs[4]),
        "--k",
        "5",
        "--out",
        p(&triples),
    ]);
    // at most k*k pairs per label and query, fewer when a pool doc is also in the top of R1
    let text = std::fs::read_to_string(&triples).unwrap();
    let positives = text.lines().filter(|l| l.ends_with("\t1")).count();
    let negatives = text.lines().filter(|l| l.ends_with("\t0")).count();
    assert!(positives > 0 && positives <= 4 * 25);
    assert!(negatives > 0 && negatives <= 4 * 25);
    assert_eq!(positives + negatives, text.lines().count());
}
