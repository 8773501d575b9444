use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dictdis::checkpoint;
use dictdis::commands::{evaluation_records, source_input, PrepareStats, TrainLogEntry, Translation};
use dictdis::files::{read_prepared, read_tokenized};
use dictdis::RunConfig;
use dictdis_core::data::{tokenize, PhraseMatcher, SEP};
use dictdis_core::decoding::{greedy_search, DecodeConfig};
use dictdis_core::evaluation::MetricsReport;
use dictdis_core::model::forward_teacher_forced;
use tempfile::TempDir;

const TINY: &str = r#"{
  "model": {"d_model": 16, "n_heads": 2, "n_layers": 1, "d_ffn": 32, "gate_hidden": 16},
  "train": {"max_updates": 10, "checkpoint_every": 1, "batch_tokens": 256, "warmup_steps": 4}
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dictdis"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

/// Runs a command expected to fail and returns its single stderr line.
fn fails(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "stderr: {err}");
    err.trim_end().to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn sample(dir: &Path) {
    write(dir, "s.src", "the bank raised the rate\nopen an account today\nnothing here\n");
    write(dir, "s.tgt", "B1 R1 X\nK1 Y\nZ\n");
    write(dir, "d.tsv", "# banking terms\nbank\tB1|B2\naccount\tK1\n");
}

fn stats(dir: &Path) -> PrepareStats {
    serde_json::from_str(&fs::read_to_string(dir.join("stats.json")).unwrap()).unwrap()
}

/// Copy-task data prepared into `prep/` plus the tiny config.
fn copy_setup() -> TempDir {
    let t = TempDir::new().unwrap();
    let d = t.path();
    ok(d, &["make-synthetic", "--task", "copy", "--out", "syn", "--seed", "5"]);
    ok(d, &["prepare", "--src", "syn/train.src", "--tgt", "syn/train.tgt", "--dict", "syn/dict.tsv", "--out", "prep"]);
    write(d, "tiny.json", TINY);
    let test: Vec<String> = fs::read_to_string(d.join("syn/test.src")).unwrap().lines().take(6).map(String::from).collect();
    write(d, "in.src", &(test.join("\n") + "\n"));
    t
}

fn train_tiny(d: &Path, out: &str) {
    ok(d, &["train", "--config", "tiny.json", "--data", "prep", "--out", out, "--deterministic"]);
}

#[test]
fn prepare_three_sentence_sample() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    sample(d);
    ok(d, &["prepare", "--src", "s.src", "--tgt", "s.tgt", "--dict", "d.tsv", "--out", "prep"]);
    let jsonl = fs::read_to_string(d.join("prep/data.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 3);
    let s = stats(&d.join("prep"));
    assert_eq!(s.records, 3);
    assert_eq!(s.constrained_records, 2);
    assert!((s.dictionary.coverage - 200.0 / 3.0).abs() < 1e-9);
    assert_eq!(s.constraints_by_degree.get(&1), Some(&1));
    assert_eq!(s.constraints_by_degree.get(&2), Some(&1));

    let vocab = dictdis::files::load_vocab(&d.join("prep/vocab.txt")).unwrap();
    let ex = read_prepared(&d.join("prep/data.jsonl"), vocab.len()).unwrap();
    assert_eq!(ex[0].constraints[0].span, 1..2);
    let cands: Vec<Vec<&str>> = ex[0].constraints[0].candidates.iter().map(|c| vocab.decode(c)).collect();
    assert_eq!(cands, vec![vec!["B1"], vec!["B2"]]);
    assert!(ex[2].constraints.is_empty());
}

#[test]
fn prepare_without_matches_and_rerun_is_identical() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    sample(d);
    write(d, "none.tsv", "zebra\tZZ\n");
    ok(d, &["prepare", "--src", "s.src", "--tgt", "s.tgt", "--dict", "none.tsv", "--out", "a"]);
    let s = stats(&d.join("a"));
    assert_eq!(s.dictionary.coverage, 0.0);
    assert_eq!(s.constrained_records, 0);
    ok(d, &["prepare", "--src", "s.src", "--tgt", "s.tgt", "--dict", "none.tsv", "--out", "b"]);
    for f in ["data.jsonl", "vocab.txt", "stats.json"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn prepare_reports_file_and_line() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    sample(d);
    write(d, "bad.tsv", "bank\tB1\nno tab on this line\n");
    let err = fails(d, &["prepare", "--src", "s.src", "--tgt", "s.tgt", "--dict", "bad.tsv", "--out", "p"]);
    assert!(err.starts_with("error[parse]: bad.tsv:2:"), "{err}");

    write(d, "short.tgt", "B1\n");
    let err = fails(d, &["prepare", "--src", "s.src", "--tgt", "short.tgt", "--dict", "d.tsv", "--out", "p"]);
    assert!(err.starts_with("error[mismatch]:") && err.contains("short.tgt"), "{err}");

    let err = fails(d, &["prepare", "--src", "missing.src", "--tgt", "s.tgt", "--dict", "d.tsv", "--out", "p"]);
    assert!(err.starts_with("error[io]: missing.src"), "{err}");
}

#[test]
fn train_writes_checkpoints_and_log() {
    let t = copy_setup();
    let d = t.path();
    train_tiny(d, "run");
    let ckpts = fs::read_dir(d.join("run")).unwrap().filter(|e| {
        e.as_ref().unwrap().file_name().to_str().unwrap().starts_with("checkpoint-")
    });
    assert_eq!(ckpts.count(), 10);
    let log: Vec<TrainLogEntry> = fs::read_to_string(d.join("run/train_log.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(log.iter().map(|e| e.losses.len()).sum::<usize>(), 10);
    assert_eq!(log.last().unwrap().step, 10);
    assert!(log.iter().all(|e| e.elapsed_secs.is_none() && e.smoothed_loss.is_finite()));

    // coarser checkpointing: every 4 steps plus the final one
    let cfg = TINY.replace("\"checkpoint_every\": 1", "\"checkpoint_every\": 4");
    write(d, "every4.json", &cfg);
    ok(d, &["train", "--config", "every4.json", "--data", "prep", "--out", "run4"]);
    let mut names: Vec<String> =
        fs::read_dir(d.join("run4")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(
        names,
        ["checkpoint-00000004.bin", "checkpoint-00000008.bin", "checkpoint-00000010.bin", "train_log.jsonl"]
    );
    let log = fs::read_to_string(d.join("run4/train_log.jsonl")).unwrap();
    let losses: usize =
        log.lines().map(|l| serde_json::from_str::<TrainLogEntry>(l).unwrap().losses.len()).sum();
    assert_eq!(losses, 10);
}

#[test]
fn resume_matches_uninterrupted_run() {
    let t = copy_setup();
    let d = t.path();
    train_tiny(d, "full");
    write(d, "half.json", &TINY.replace("\"max_updates\": 10", "\"max_updates\": 5"));
    ok(d, &["train", "--config", "half.json", "--data", "prep", "--out", "resumed", "--deterministic"]);
    ok(d, &["train", "--config", "tiny.json", "--data", "prep", "--out", "resumed", "--deterministic", "--resume"]);
    for f in ["checkpoint-00000010.bin", "checkpoint-00000007.bin", "train_log.jsonl"] {
        assert_eq!(fs::read(d.join("full").join(f)).unwrap(), fs::read(d.join("resumed").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn resume_rejects_incompatible_runs() {
    let t = copy_setup();
    let d = t.path();
    train_tiny(d, "run");
    // different vocabulary
    sample(d);
    ok(d, &["prepare", "--src", "s.src", "--tgt", "s.tgt", "--dict", "d.tsv", "--out", "other"]);
    let err = fails(d, &["train", "--config", "tiny.json", "--data", "other", "--out", "run", "--resume"]);
    assert!(err.starts_with("error[mismatch]:") && err.contains("vocabulary"), "{err}");
    // different model shape
    let err = fails(d, &["train", "--data", "prep", "--out", "run", "--resume"]);
    assert!(err.starts_with("error[mismatch]:") && err.contains("model"), "{err}");
    // fresh training over existing checkpoints
    let err = fails(d, &["train", "--config", "tiny.json", "--data", "prep", "--out", "run"]);
    assert!(err.starts_with("error[config]:"), "{err}");
}

#[test]
fn default_hyperparameters() {
    let cfg = RunConfig::default();
    assert_eq!(cfg.train.lr_peak, 5e-4);
    assert_eq!(cfg.train.label_smoothing, 0.1);
    assert_eq!(cfg.decode.beam_size, 5);
    assert_eq!(cfg.bootstrap.resamples, 1000);
}

#[test]
fn checkpoint_round_trip_preserves_forward_outputs() {
    let t = copy_setup();
    let d = t.path();
    train_tiny(d, "run");
    let path = d.join("run/checkpoint-00000010.bin");
    let bytes = fs::read(&path).unwrap();
    let ck = checkpoint::load(&path).unwrap();
    let state = ck.state.clone().unwrap();
    assert_eq!(state.step, 10);
    assert_eq!(checkpoint::encode(&state, &ck.vocab, ck.manifest.train.as_ref(), true), bytes);

    let again = checkpoint::decode(&path, &checkpoint::encode(&state, &ck.vocab, None, false)).unwrap();
    assert!(again.state.is_none());
    let examples = read_prepared(&d.join("prep/data.jsonl"), ck.vocab.len()).unwrap();
    for e in examples.iter().take(3) {
        assert_eq!(forward_teacher_forced(e, &ck.params).unwrap(), forward_teacher_forced(e, &again.params).unwrap());
    }

    let mut cut = bytes.clone();
    cut.truncate(bytes.len() - 4);
    assert!(checkpoint::decode(&path, &cut).is_err());
}

fn jsonl(out: &Output) -> Vec<Translation> {
    String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn translate_modes_and_alpha_passthrough() {
    let t = copy_setup();
    let d = t.path();
    train_tiny(d, "run");
    let ck_path = d.join("run/checkpoint-00000010.bin");
    let ck = checkpoint::load(&ck_path).unwrap();
    let ckpt = ck_path.to_str().unwrap();
    let lines = read_tokenized(&d.join("in.src")).unwrap();
    let dict = dictdis::files::load_dictionary(&d.join("syn/dict.tsv")).unwrap().encode(&ck.vocab);
    let matcher = PhraseMatcher::from_dictionary(&dict);

    // unconstrained inputs carry no constraint block at all
    for l in &lines {
        let aug = source_input(l, &ck, None, 15).unwrap();
        assert!(!aug.token_ids.contains(&SEP));
        assert!(source_input(l, &ck, Some((&dict, &matcher)), 15).unwrap().token_ids.contains(&SEP));
    }
    let uncons = jsonl(&ok(d, &["translate", "--ckpt", ckpt, "--src", "in.src", "--unconstrained", "--jsonl", "--beam", "1"]));
    assert!(uncons.iter().all(|t| t.constraints == 0));

    let mut by_alpha = Vec::new();
    for alpha in ["0", "0.1", "5"] {
        let out = ok(d, &["translate", "--ckpt", ckpt, "--src", "in.src", "--dict", "syn/dict.tsv", "--jsonl", "--beam", "1", "--alpha", alpha]);
        let got = jsonl(&out);
        let dc = DecodeConfig { beam_size: 1, alpha: alpha.parse().unwrap(), ..Default::default() };
        for (l, t) in lines.iter().zip(&got) {
            let aug = source_input(l, &ck, Some((&dict, &matcher)), 15).unwrap();
            let hyp = greedy_search(&aug, &ck.params, &dc).unwrap();
            assert_eq!(t.log_prob, hyp.log_prob);
            assert_eq!(t.gates, hyp.gates);
            assert!(t.constraints > 0);
        }
        by_alpha.push(got);
    }
    assert_ne!(by_alpha[0], by_alpha[2]);

    // plain output is the hypothesis column, stable across runs
    ok(d, &["translate", "--ckpt", ckpt, "--src", "in.src", "--dict", "syn/dict.tsv", "--out", "a.txt", "--threads", "1"]);
    ok(d, &["translate", "--ckpt", ckpt, "--src", "in.src", "--dict", "syn/dict.tsv", "--out", "b.txt", "--threads", "3"]);
    let a = fs::read_to_string(d.join("a.txt")).unwrap();
    assert_eq!(a, fs::read_to_string(d.join("b.txt")).unwrap());
    assert_eq!(a.lines().count(), lines.len());

    let err = fails(d, &["translate", "--ckpt", ckpt, "--src", "in.src"]);
    assert!(err.starts_with("error[config]:") && err.contains("--dict"), "{err}");
}

#[test]
fn evaluate_reports_and_bootstrap() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    sample(d);
    write(d, "hyp.txt", "B2 R1 X\nK1\nZ Z\n");
    let out = ok(d, &["evaluate", "--hyp", "s.tgt", "--ref", "s.tgt", "--src", "s.src", "--dict", "d.tsv"]);
    let rep: MetricsReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep.bleu, 100.0);
    assert_eq!(rep.csr, 100.0);
    assert!(rep.bootstrap.is_none());

    ok(d, &["evaluate", "--hyp", "hyp.txt", "--hyp", "s.tgt", "--tgt", "s.tgt", "--src", "s.src", "--dict", "d.tsv", "--out", "m.json"]);
    let raw: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    for key in ["csr", "csr_by_degree", "bleu", "counts", "bootstrap"] {
        assert!(raw.get(key).is_some(), "{key}");
    }
    assert!(raw["bootstrap"]["p_value"].as_f64().is_some());

    // CLI report equals the library on the same records
    let cfg = RunConfig {
        paths: dictdis::config::Paths { src: Some(d.join("s.src")), dict: Some(d.join("d.tsv")), ..Default::default() },
        ..Default::default()
    };
    let recs = evaluation_records(&cfg, &[d.join("hyp.txt")], &d.join("s.tgt")).unwrap();
    let lib = MetricsReport::compute(&recs[0]);
    let cli: MetricsReport = serde_json::from_value(raw).unwrap();
    assert_eq!(cli.csr, lib.csr);
    assert_eq!(cli.csr_by_degree, lib.csr_by_degree);
    assert_eq!(cli.bleu, lib.bleu);
    assert_eq!(cli.counts, lib.counts);
    // "bank" is degree 2 and the reference holds B1 while the hypothesis has B2
    assert_eq!(lib.csr_by_degree.get(&2), Some(&0.0));
    assert_eq!(lib.csr_by_degree.get(&1), Some(&100.0));

    write(d, "two.txt", "a\nb\n");
    let err = fails(d, &["evaluate", "--hyp", "two.txt", "--ref", "s.tgt"]);
    assert!(err.starts_with("error[mismatch]:") && err.contains("two.txt") && err.contains("s.tgt"), "{err}");
}

#[test]
fn stats_and_synthetic_generation() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    sample(d);
    let out = ok(d, &["stats", "--dict", "d.tsv", "--src", "s.src"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["polysemy_histogram"]["1"], 50.0);
    assert_eq!(v["polysemy_histogram"]["2"], 50.0);

    ok(d, &["make-synthetic", "--task", "disambiguation", "--out", "a", "--seed", "9"]);
    ok(d, &["make-synthetic", "--task", "disambiguation", "--out", "b", "--seed", "9"]);
    for f in ["dict.tsv", "train.src", "train.tgt", "test.src", "test.tgt", "test.first"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
    let dict = dictdis::files::load_dictionary(&d.join("a/dict.tsv")).unwrap();
    assert!(dict.entries().iter().all(|e| e.degree() == 2));
    let first = fs::read_to_string(d.join("a/test.src")).unwrap();
    assert!(!tokenize(first.lines().next().unwrap()).is_empty());
}

#[test]
fn unknown_config_key_is_a_parse_error() {
    let t = TempDir::new().unwrap();
    let d = t.path();
    write(d, "c.json", r#"{"model": {"d_modle": 3}}"#);
    let err = fails(d, &["stats", "--config", "c.json", "--dict", "x"]);
    assert!(err.starts_with("error[parse]: c.json:1:"), "{err}");
}
