//! Contract tests for the `dsrim` binary: config resolution, flag
//! overrides, manifest contents, rerun idempotency, and error messages
//! that name the producing command.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn dsrim_bin() -> &'static str {
    env!("CARGO_BIN_EXE_dsrim")
}

fn dsrim(args: &[&str]) -> Output {
    Command::new(dsrim_bin())
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("failed to launch the dsrim binary")
}

fn expect_ok(args: &[&str]) {
    let output = dsrim(args);
    assert!(
        output.status.success(),
        "dsrim {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
}

/// Run a command expected to fail; returns its stderr.
fn expect_err(args: &[&str]) -> String {
    let output = dsrim(args);
    assert!(
        !output.status.success(),
        "dsrim {:?} unexpectedly succeeded:\nstdout: {}",
        args,
        String::from_utf8_lossy(&output.stdout),
    );
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// Generate a small corpus fixture and write a paths-only config next to
/// it; returns (fixture dir guard, config path).
fn paths_only_fixture(seed: u64) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    expect_ok(&[
        "gen-fixture",
        "--out",
        dir.path().to_str().unwrap(),
        "--seed",
        &seed.to_string(),
        "--topics",
        "2",
        "--docs-per-topic",
        "15",
        "--queries-per-topic",
        "2",
    ]);
    let config = dir.path().join("paths.txt");
    fs::write(
        &config,
        "nodes = nodes.tsv\n\
         edges = edges.tsv\n\
         documents = documents.jsonl\n\
         queries = queries.jsonl\n\
         annotations = annotations.tsv\n\
         qrels = qrels.txt\n\
         out = out\n",
    )
    .unwrap();
    (dir, config)
}

fn read_manifest(path: &Path) -> BTreeMap<String, String> {
    let text =
        fs::read_to_string(path).unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    text.lines()
        .map(|line| {
            let (k, v) = line
                .split_once('=')
                .unwrap_or_else(|| panic!("manifest line without '=': {line}"));
            (k.to_string(), v.to_string())
        })
        .collect()
}

fn manifest_value<'m>(manifest: &'m BTreeMap<String, String>, key: &str) -> &'m str {
    manifest
        .get(key)
        .unwrap_or_else(|| panic!("manifest is missing key {key}"))
}

#[test]
fn paths_only_config_uses_documented_defaults() {
    let (dir, config) = paths_only_fixture(7);
    expect_ok(&["build-graph", "--config", config.to_str().unwrap()]);

    let manifest = read_manifest(&dir.path().join("out/build-graph.manifest"));
    assert_eq!(manifest_value(&manifest, "command"), "build-graph");
    for (key, want) in [
        ("config.k", "200"),
        ("config.strategy", "centroid"),
        ("config.dims", "100"),
        ("config.parts", "kr+p2v"),
        ("config.alpha", "1"),
        ("config.n", "4"),
        ("config.batch", "5"),
        ("config.dropout", "0.3"),
        ("config.epochs", "50"),
        ("config.folds", "5"),
        ("config.top_candidates", "2000"),
        ("config.top_rerank", "1000"),
        ("config.seed", "42"),
    ] {
        assert_eq!(
            manifest_value(&manifest, key),
            want,
            "default for {key} not echoed in manifest"
        );
    }

    // Integrity fields: a 64-hex config hash plus content hashes for every
    // declared input and the produced artifact.
    let hash = manifest_value(&manifest, "config_hash");
    assert_eq!(hash.len(), 64);
    assert!(hash.chars().all(|c| c.is_ascii_hexdigit()));
    for input in [
        "input.nodes",
        "input.edges",
        "input.documents",
        "input.queries",
        "input.annotations",
    ] {
        assert_eq!(manifest_value(&manifest, input).len(), 64, "{input} hash");
    }
    assert_eq!(manifest_value(&manifest, "output.graph.tsv").len(), 64);
}

#[test]
fn flag_overrides_are_echoed_in_manifest() {
    let (dir, config) = paths_only_fixture(8);
    expect_ok(&["build-graph", "--config", config.to_str().unwrap()]);
    let baseline = read_manifest(&dir.path().join("out/build-graph.manifest"));

    let out_b = dir.path().join("out_b");
    expect_ok(&[
        "build-graph",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
        "--k",
        "100",
        "--strategy",
        "idf_max",
    ]);
    let overridden = read_manifest(&out_b.join("build-graph.manifest"));

    assert_eq!(manifest_value(&overridden, "config.k"), "100");
    assert_eq!(manifest_value(&overridden, "config.strategy"), "idf_max");
    // Untouched keys keep their defaults.
    assert_eq!(manifest_value(&overridden, "config.dims"), "100");
    // Different resolved config ⇒ different config hash. The hash covers
    // settings, not the output directory, so `--out` alone cannot change it.
    assert_ne!(
        manifest_value(&baseline, "config_hash"),
        manifest_value(&overridden, "config_hash")
    );
}

#[test]
fn out_dir_alone_does_not_change_config_hash() {
    let (dir, config) = paths_only_fixture(9);
    expect_ok(&["build-graph", "--config", config.to_str().unwrap()]);
    let out_b = dir.path().join("elsewhere");
    expect_ok(&[
        "build-graph",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out_b.to_str().unwrap(),
    ]);

    let a = read_manifest(&dir.path().join("out/build-graph.manifest"));
    let b = read_manifest(&out_b.join("build-graph.manifest"));
    assert_eq!(
        manifest_value(&a, "config_hash"),
        manifest_value(&b, "config_hash")
    );
    assert_eq!(
        manifest_value(&a, "output.graph.tsv"),
        manifest_value(&b, "output.graph.tsv")
    );
}

#[test]
fn rerun_into_same_dir_is_byte_identical() {
    let (dir, config) = paths_only_fixture(10);
    let graph = dir.path().join("out/graph.tsv");
    let manifest = dir.path().join("out/build-graph.manifest");

    expect_ok(&["build-graph", "--config", config.to_str().unwrap()]);
    let first = (fs::read(&graph).unwrap(), fs::read(&manifest).unwrap());
    expect_ok(&["build-graph", "--config", config.to_str().unwrap()]);
    let second = (fs::read(&graph).unwrap(), fs::read(&manifest).unwrap());

    assert_eq!(
        first.0, second.0,
        "graph.tsv changed across identical reruns"
    );
    assert_eq!(
        first.1, second.1,
        "manifest changed across identical reruns"
    );
}

#[test]
fn missing_artifact_error_names_the_producing_command() {
    let (_dir, config) = paths_only_fixture(11);
    // `evaluate` needs the training artifacts, none of which exist yet.
    let stderr = expect_err(&["evaluate", "--config", config.to_str().unwrap()]);
    assert!(
        stderr.contains("missing artifact"),
        "stderr does not mention the missing artifact: {stderr}"
    );
    assert!(
        stderr.contains("run `dsrim train` first"),
        "stderr does not name the producing command: {stderr}"
    );
}

#[test]
fn vectorize_without_embeddings_points_at_train_embeddings() {
    let (_dir, config) = paths_only_fixture(12);
    expect_ok(&["build-graph", "--config", config.to_str().unwrap()]);
    let stderr = expect_err(&["vectorize", "--config", config.to_str().unwrap()]);
    assert!(
        stderr.contains("run `dsrim train-embeddings` first")
            || stderr.contains("run `dsrim build-referential` first"),
        "stderr does not name a producing command: {stderr}"
    );
}

#[test]
fn unknown_config_key_is_rejected() {
    let (dir, config) = paths_only_fixture(13);
    let mut text = fs::read_to_string(&config).unwrap();
    text.push_str("bogus = 1\n");
    fs::write(&config, text).unwrap();
    let stderr = expect_err(&["build-graph", "--config", config.to_str().unwrap()]);
    assert!(
        stderr.contains("bogus"),
        "stderr does not name the unknown key: {stderr}"
    );
    drop(dir);
}

#[test]
fn invalid_strategy_flag_is_rejected() {
    let (_dir, config) = paths_only_fixture(14);
    let stderr = expect_err(&[
        "build-graph",
        "--config",
        config.to_str().unwrap(),
        "--strategy",
        "nonsense",
    ]);
    assert!(
        stderr.contains("nonsense"),
        "stderr does not echo the bad strategy value: {stderr}"
    );
}
