//! End-to-end runs of the `tagforge` binary. `TAGFORGE_REGEN=1 cargo test -p
//! tagforge-cli regen` rewrites fixtures/nolima and the golden report.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tagforge_core::bench::{synth, EvalRecord, NeedleSpec, PromptMode};
use tagforge_core::io::{read_jsonl, write_jsonl};
use tagforge_core::TagCategory;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn tagforge(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tagforge"))
        .args(args)
        .current_dir(cwd)
        .env_remove("TAGFORGE_CACHE")
        .env_remove("TAGFORGE_MODEL")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Copy the fixtures the benchmark run needs into `dir`, so every path in
/// the run config is relative and the manifest hash is stable.
fn stage(dir: &Path) {
    std::fs::create_dir_all(dir.join("nolima")).unwrap();
    std::fs::copy(fixtures().join("corpus.jsonl"), dir.join("corpus.jsonl")).unwrap();
    for f in ["needles.jsonl", "categories.json", "lexicon.json"] {
        std::fs::copy(fixtures().join("nolima").join(f), dir.join("nolima").join(f)).unwrap();
    }
}

const BENCH: &[&str] = &[
    "bench",
    "nolima",
    "--needles",
    "nolima/needles.jsonl",
    "--haystack-corpus",
    "corpus.jsonl",
    "--cl",
    "250,500",
    "--positions",
    "5",
    "--mode",
    "baseline,td,td_tc",
    "--gateway",
    "oracle",
    "--tagger",
    "gazetteer",
    "--categories",
    "nolima/categories.json",
    "--lexicon",
    "nolima/lexicon.json",
    "--max-chunk-size",
    "64",
    "--out-dir",
    "run",
];

#[test]
fn regen() {
    if std::env::var("TAGFORGE_REGEN").as_deref() != Ok("1") {
        return;
    }
    let dir = fixtures().join("nolima");
    std::fs::create_dir_all(&dir).unwrap();
    let needles = synth::needles(4);
    write_jsonl(&dir.join("needles.jsonl"), &needles).unwrap();
    let cats = vec![
        TagCategory::new("Landmark", "A named building, monument or other visitable place.")
            .with_examples(["Semper Opera House"]),
        TagCategory::new("City", "A city or town.").with_examples(["Dresden"]),
    ];
    std::fs::write(
        dir.join("categories.json"),
        serde_json::to_string_pretty(&cats).unwrap() + "\n",
    )
    .unwrap();
    let lex = serde_json::json!({
        "Landmark": needles.iter().map(|n| n.keywords[0].clone()).collect::<Vec<_>>(),
        "City": needles.iter().map(|n| n.keywords[1].clone()).collect::<Vec<_>>(),
    });
    std::fs::write(
        dir.join("lexicon.json"),
        serde_json::to_string_pretty(&lex).unwrap() + "\n",
    )
    .unwrap();

    let tmp = tempfile::tempdir().unwrap();
    stage(tmp.path());
    ok(&tagforge(tmp.path(), BENCH));
    let golden = fixtures().join("golden/nolima");
    std::fs::create_dir_all(&golden).unwrap();
    for f in ["report.md", "report.csv", "report_delta.csv"] {
        std::fs::copy(tmp.path().join("run").join(f), golden.join(f)).unwrap();
    }
}

#[test]
fn help_lists_subcommands() {
    let out = tagforge(Path::new("."), &["--help"]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["chunk", "tag", "render", "bench", "report", "cache"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn missing_input_is_an_operational_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tagforge(tmp.path(), &["chunk", "--in", "missing.jsonl"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.jsonl"));
}

#[test]
fn bad_flag_is_a_usage_error() {
    let out = tagforge(Path::new("."), &["chunk", "--in", "x.jsonl", "--strategy", "semantic"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn config_file_overrides_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = fixtures().join("corpus.jsonl");
    std::fs::write(
        tmp.path().join("run.json"),
        r#"{"max-chunk-size": 10000, "strategy": "paragraph"}"#,
    )
    .unwrap();
    let args = [
        "chunk",
        "--in",
        corpus.to_str().unwrap(),
        "--max-chunk-size",
        "8",
        "--out",
        "c.jsonl",
    ];
    ok(&tagforge(tmp.path(), &args));
    let small: Vec<Value> = read_jsonl(&tmp.path().join("c.jsonl")).unwrap();
    let mut with_config = vec!["--config", "run.json"];
    with_config.extend(args);
    ok(&tagforge(tmp.path(), &with_config));
    let big: Vec<Value> = read_jsonl(&tmp.path().join("c.jsonl")).unwrap();
    // paragraphs pack up to the budget: one chunk per document once it no longer binds
    let docs = read_jsonl::<Value>(&corpus).unwrap().len();
    assert_eq!(big.len(), docs);
    assert!(small.len() > big.len());
    let m: Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("c.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["strategy"], "paragraph");
    assert_eq!(m["counts"]["chunks"], big.len());
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("run.json"), r#"{"max_chunk_sise": 3}"#).unwrap();
    let corpus = fixtures().join("corpus.jsonl");
    let out = tagforge(
        tmp.path(),
        &["--config", "run.json", "chunk", "--in", corpus.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("max_chunk_sise"));
}

#[test]
fn chunk_tag_render_round_trip_and_cache() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let corpus = fixtures().join("corpus.jsonl");
    let lexicon = fixtures().join("lexicon.json");
    let (corpus, lexicon) = (corpus.to_str().unwrap(), lexicon.to_str().unwrap());
    let tag = |out: &str| {
        ok(&tagforge(
            d,
            &[
                "tag",
                "--in",
                corpus,
                "--max-chunk-size",
                "32",
                "--lexicon",
                lexicon,
                "--cache",
                "cache",
                "--out",
                out,
            ],
        ))
    };
    tag("t1.jsonl");
    tag("t2.jsonl");
    let manifest = |f: &str| -> Value { serde_json::from_str(&std::fs::read_to_string(d.join(f)).unwrap()).unwrap() };
    let first = manifest("t1.jsonl.manifest.json");
    let second = manifest("t2.jsonl.manifest.json");
    assert!(first["counts"]["tagger_calls"].as_u64().unwrap() > 0);
    assert_eq!(second["counts"]["tagger_calls"], 0);
    assert_eq!(second["counts"]["cache_hits"], first["counts"]["unique_chunks"]);
    assert_eq!(
        std::fs::read(d.join("t1.jsonl")).unwrap(),
        std::fs::read(d.join("t2.jsonl")).unwrap()
    );

    ok(&tagforge(
        d,
        &[
            "render",
            "--in",
            corpus,
            "--tagged",
            "t1.jsonl",
            "--max-chunk-size",
            "32",
            "--out",
            "r.jsonl",
        ],
    ));
    // same output as the library pipeline behind the committed golden file
    let got: Vec<Value> = read_jsonl(&d.join("r.jsonl")).unwrap();
    let want: Vec<Value> = read_jsonl(&fixtures().join("golden/corpus_tagged.jsonl")).unwrap();
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert_eq!(g["id"], w["id"]);
        assert_eq!(g["tagged_text"], w["text"]);
    }

    let stats = tagforge(d, &["cache", "stats", "--dir", "cache"]);
    ok(&stats);
    let s: Value = serde_json::from_slice(&stats.stdout).unwrap();
    assert_eq!(s["entries"], first["counts"]["unique_chunks"]);
    let gc = tagforge(d, &["cache", "gc", "--dir", "cache", "--max-bytes", "0"]);
    ok(&gc);
    let g: Value = serde_json::from_slice(&gc.stdout).unwrap();
    assert_eq!(g["remaining_bytes"], 0);
}

#[test]
fn tag_render_flag_on_chunk_input() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let corpus = fixtures().join("corpus.jsonl");
    let lexicon = fixtures().join("lexicon.json");
    ok(&tagforge(
        d,
        &[
            "chunk",
            "--in",
            corpus.to_str().unwrap(),
            "--max-chunk-size",
            "32",
            "--out",
            "c.jsonl",
        ],
    ));
    ok(&tagforge(
        d,
        &[
            "tag",
            "--in",
            "c.jsonl",
            "--lexicon",
            lexicon.to_str().unwrap(),
            "--render",
            "--out",
            "t.jsonl",
        ],
    ));
    let chunks: Vec<Value> = read_jsonl(&d.join("c.jsonl")).unwrap();
    let tagged: Vec<Value> = read_jsonl(&d.join("t.jsonl")).unwrap();
    assert_eq!(chunks.len(), tagged.len());
    let lex: Value = serde_json::from_str(&std::fs::read_to_string(&lexicon).unwrap()).unwrap();
    let names: std::collections::BTreeSet<String> = lex.as_object().unwrap().keys().cloned().collect();
    for (c, t) in chunks.iter().zip(&tagged) {
        assert_eq!(c["hash"], t["hash"]);
        let stripped = tagforge_core::annotator::strip_tags(t["tagged_text"].as_str().unwrap(), &names);
        assert_eq!(stripped, c["text"].as_str().unwrap());
    }
    assert!(tagged
        .iter()
        .any(|t| t["tagged_text"].as_str().unwrap().contains("<PERSON>")));
}

#[test]
fn mock_benchmark_matches_golden_report() {
    let tmp = tempfile::tempdir().unwrap();
    stage(tmp.path());
    ok(&tagforge(tmp.path(), BENCH));
    let run = tmp.path().join("run");
    for f in ["report.md", "report.csv", "report_delta.csv"] {
        let got = std::fs::read_to_string(run.join(f)).unwrap();
        let want = std::fs::read_to_string(fixtures().join("golden/nolima").join(f)).unwrap();
        assert_eq!(got, want, "{f}");
    }
    let md = std::fs::read_to_string(run.join("report.md")).unwrap();
    assert!(!md.contains(tmp.path().to_str().unwrap()));

    // all three settings present, every cell populated
    let csv = std::fs::read_to_string(run.join("report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(
        rows[0],
        "Model,Tagged context,Tagger,Tag definition in prompt,CL250,CL500,Extremum drop rate"
    );
    assert_eq!(rows.len(), 4);
    for r in &rows[1..] {
        assert!(r.split(',').all(|c| !c.is_empty()), "{r}");
    }

    // 4 needles x 5 positions x 2 lengths x 3 settings
    let records: Vec<EvalRecord> = read_jsonl(&run.join("results.jsonl")).unwrap();
    assert_eq!(records.len(), 4 * 5 * 2 * 3);
    let needles: Vec<NeedleSpec> = read_jsonl(&fixtures().join("nolima/needles.jsonl")).unwrap();
    assert_eq!(needles.len(), 4);
    assert!(records
        .iter()
        .filter(|r| r.mode == PromptMode::TdTc)
        .all(|r| !r.mode_mismatch));

    let m: Value = serde_json::from_str(&std::fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["counts"]["records"], 120);
    assert_eq!(m["model_id"], "oracle");
    assert_eq!(m["tagger"], "gazetteer");
    for k in [
        "chunks",
        "unique_chunks",
        "tagger_calls",
        "cache_hits",
        "parse_failures",
        "fidelity_failures",
    ] {
        assert!(m["counts"][k].is_u64(), "{k}");
    }

    // a rerun resumes: nothing new to write, same report
    ok(&tagforge(tmp.path(), BENCH));
    let again: Vec<EvalRecord> = read_jsonl(&run.join("results.jsonl")).unwrap();
    assert_eq!(again.len(), records.len());
    assert_eq!(std::fs::read_to_string(run.join("report.csv")).unwrap(), csv);

    // `report` over the results file reproduces the bench tables
    ok(&tagforge(
        tmp.path(),
        &["report", "--in", "run/results.jsonl", "--out-dir", "again"],
    ));
    for f in ["report.md", "report.csv", "report_delta.csv"] {
        assert_eq!(
            std::fs::read_to_string(tmp.path().join("again").join(f)).unwrap(),
            std::fs::read_to_string(run.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn empty_model_run_scores_zero_and_flags_everything() {
    let tmp = tempfile::tempdir().unwrap();
    stage(tmp.path());
    let mut args: Vec<&str> = BENCH.to_vec();
    let g = args.iter().position(|a| *a == "oracle").unwrap();
    args[g] = "empty";
    ok(&tagforge(tmp.path(), &args));
    let records: Vec<EvalRecord> = read_jsonl(&tmp.path().join("run/results.jsonl")).unwrap();
    assert!(records.iter().all(|r| r.flagged && r.score == Some(0)));
    let csv = std::fs::read_to_string(tmp.path().join("run/report.csv")).unwrap();
    assert!(csv.lines().skip(1).all(|l| l.contains(",0.00,0.00,")));
}

#[test]
fn synthetic_novelqa_with_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tagforge(
        tmp.path(),
        &[
            "bench",
            "novelqa",
            "--synthetic-books",
            "2",
            "--budget",
            "100000",
            "--mode",
            "baseline,td",
            "--gateway",
            "oracle",
            "--out-dir",
            "run",
        ],
    );
    ok(&out);
    let csv = std::fs::read_to_string(tmp.path().join("run/report.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.ends_with("Single-hop,Multi-hop,Detail"), "{header}");
    let records: Vec<EvalRecord> = read_jsonl(&tmp.path().join("run/results.jsonl")).unwrap();
    assert!(!records.is_empty());
    assert!(records.iter().all(|r| r.score == Some(1)));
}

#[test]
fn tagged_setting_without_tagger_inputs_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    stage(tmp.path());
    let out = tagforge(
        tmp.path(),
        &[
            "bench",
            "nolima",
            "--needles",
            "nolima/needles.jsonl",
            "--cl",
            "250",
            "--gateway",
            "oracle",
            "--out-dir",
            "run",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--lexicon"));
}
