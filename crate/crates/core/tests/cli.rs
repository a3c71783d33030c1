use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 9] = [
    "synth",
    "distort",
    "train-cae",
    "train-dae",
    "train-visor",
    "eval",
    "cross-eval",
    "ablate",
    "analyze",
];

fn coae(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coae"))
        .args(args)
        .env("COAE_DATA_DIR", root)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(root: &Path, args: &[&str]) -> String {
    let out = coae(root, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn help_documents_every_flag() {
    let tmp = tempfile::tempdir().unwrap();
    for sub in SUBCOMMANDS {
        let help = ok(tmp.path(), &[sub, "--help"]);
        let lines: Vec<&str> = help.lines().collect();
        let mut flags = 0;
        for (i, line) in lines.iter().enumerate() {
            let t = line.trim_start();
            if !t.starts_with("--") && !(t.starts_with('-') && t.chars().nth(2) == Some(',')) {
                continue;
            }
            flags += 1;
            let inline = t.split_once("  ").is_some_and(|(_, d)| !d.trim().is_empty());
            let below = lines.get(i + 1).is_some_and(|n| {
                let n = n.trim_start();
                !n.is_empty() && !n.starts_with('-')
            });
            assert!(inline || below, "`{sub}` flag without description: {line}");
        }
        assert!(flags >= 5, "`{sub}` help lists only {flags} flags");
        for common in ["--config", "--profile", "--seed", "--out"] {
            assert!(help.contains(common), "`{sub}` help lacks {common}");
        }
    }
}

#[test]
fn usage_errors_exit_2_and_runtime_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(coae(tmp.path(), &["synth", "--bogus"]).status.code(), Some(2));
    assert_eq!(coae(tmp.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(coae(tmp.path(), &["synth", "--n", "many"]).status.code(), Some(2));
    let out = coae(tmp.path(), &["train-cae", "--corpus", "missing", "--profile", "tiny"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    let out = coae(tmp.path(), &["synth", "--n", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn cae_rejects_distorted_corpus_without_s_cae() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    ok(root, &["synth", "--n", "2", "--size", "32", "--out", "p"]);
    ok(root, &["distort", "--input", "p", "--types", "quantize", "--levels", "2", "--out", "d"]);
    let out = coae(root, &["train-cae", "--corpus", "d", "--profile", "tiny", "--max-steps", "1", "--out", "c"]);
    assert_eq!(out.status.code(), Some(1));
}

fn run_pipeline(root: &Path) {
    let tiny = ["--profile", "tiny", "--seed", "5"];
    let with = |args: &[&'static str]| -> Vec<&'static str> { args.iter().chain(tiny.iter()).copied().collect() };
    ok(root, &with(&["synth", "--n", "6", "--size", "64", "--out", "a/pristine"]));
    ok(root, &["synth", "--n", "4", "--size", "64", "--seed", "9", "--out", "b/pristine"]);
    ok(
        root,
        &with(&["distort", "--input", "a/pristine", "--types", "gaussian_blur,gaussian_noise", "--levels", "1,3,5", "--out", "a/corpus"]),
    );
    ok(
        root,
        &with(&["distort", "--input", "b/pristine", "--types", "gaussian_blur,gaussian_noise", "--levels", "1,3,5", "--out", "b/corpus"]),
    );
    ok(root, &with(&["train-cae", "--corpus", "a/pristine", "--max-steps", "2", "--out", "m"]));
    ok(
        root,
        &with(&["train-dae", "--corpus", "a/corpus", "--cae", "m/cae.safetensors", "--max-steps", "2", "--out", "m"]),
    );
    let enc = ["--cae", "m/cae.safetensors", "--dae", "m/dae.safetensors", "--visor-epochs", "3"];
    let mut args = vec!["train-visor", "--data", "a/corpus", "--out", "m"];
    args.extend(enc);
    ok(root, &args);
    let mut args = vec!["eval", "--data", "a/corpus", "--sessions", "2", "--out", "r"];
    args.extend(enc);
    let table = ok(root, &args);
    assert!(table.contains("corpus"), "{table}");
    let mut args = vec!["cross-eval", "--train", "a/corpus", "--test", "b/corpus", "--out", "r"];
    args.extend(enc);
    ok(root, &args);
    ok(root, &["analyze", "--corpus", "a/corpus", "--cae", "m/cae.safetensors", "--dae", "m/dae.safetensors", "--plot", "--out", "an"]);
    ok(
        root,
        &with(&["ablate", "--corpus", "a/corpus", "--variant", "s_dae", "--max-steps", "2", "--sessions", "2", "--visor-epochs", "2", "--out", "ab"]),
    );
}

fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(&p, root, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn pipeline_is_bit_identical_across_runs() {
    let (x, y) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_pipeline(x.path());
    run_pipeline(y.path());
    let (a, b) = (snapshot(x.path()), snapshot(y.path()));
    for f in [
        "a/corpus/manifest.jsonl",
        "m/cae.safetensors",
        "m/dae.safetensors",
        "m/visor.safetensors",
        "m/dae_log.jsonl",
        "r/eval.jsonl",
        "r/cross_eval.jsonl",
        "an/features.jsonl",
        "an/analysis.json",
        "an/embedding.svg",
        "ab/ablate.jsonl",
    ] {
        assert!(a.contains_key(f), "missing artifact {f}");
    }
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(v == &b[k], "{k} differs between runs");
    }
}
