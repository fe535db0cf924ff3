//! Runs the `lifegraph` binary over the bundled fixtures.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn fixture(rel: &str) -> PathBuf {
    root().join("fixtures").join(rel)
}

pub fn golden_dir() -> PathBuf {
    fixture("golden")
}

pub fn lifegraph(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lifegraph"))
        .args(args)
        .env_remove("MODEL_BASE_URL")
        .env_remove("MODEL_NAME")
        .env_remove("LIFEGRAPH_LOG")
        .output()
        .expect("spawn lifegraph")
}

fn ok(out: Output, what: &str) -> Result<Vec<u8>, String> {
    if out.status.code() != Some(0) {
        return Err(format!(
            "{what} exited with {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok(out.stdout)
}

pub const QUESTION: &str = "What does David's aunt's dog look like?";

/// build → analyze → ask → eval in `dir`, returning every artifact compared
/// against the golden files, by golden file name.
pub fn run_pipeline(dir: &Path) -> Result<Vec<(&'static str, Vec<u8>)>, String> {
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let mock = s(&fixture("mock/script.json"));
    let vaccount = s(&fixture("vaccount/family.json"));
    let media = s(&fixture("vaccount/media"));
    let graph = dir.join("family.lgr.jsonl");
    let degree = dir.join("degree.dat");
    let report = dir.join("eval.json");
    let (g, d, r) = (s(&graph), s(&degree), s(&report));

    let build = ok(lifegraph(&["--mock", &mock, "build", &vaccount, "-o", &g]), "build")?;
    let analyze = ok(lifegraph(&["analyze", &g, "--degree-data", &d]), "analyze")?;
    let ask = ok(
        lifegraph(&["--mock", &mock, "--media-dir", &media, "ask", &g, QUESTION]),
        "ask",
    )?;
    let table = ok(
        lifegraph(&[
            "--mock",
            &mock,
            "eval",
            "--vaccount",
            &vaccount,
            "--answerer",
            "lifegraph",
            "--graph",
            &g,
            "--judge",
            "mock",
            "--out",
            &r,
        ]),
        "eval",
    )?;
    let read = |p: &Path| std::fs::read(p).map_err(|e| format!("{}: {e}", p.display()));
    Ok(vec![
        ("build.json", build),
        ("family.lgr.jsonl", read(&graph)?),
        ("analyze.json", analyze),
        ("degree.dat", read(&degree)?),
        ("ask.txt", ask),
        ("eval.json", read(&report)?),
        ("eval.txt", table),
    ])
}

/// Names of artifacts that differ from their golden file.
pub fn golden_mismatches(artifacts: &[(&str, Vec<u8>)]) -> Vec<String> {
    artifacts
        .iter()
        .filter(|(name, bytes)| std::fs::read(golden_dir().join(name)).ok().as_ref() != Some(bytes))
        .map(|(name, _)| name.to_string())
        .collect()
}

/// Rewrites the golden files; used when `LIFEGRAPH_BLESS` is set.
pub fn bless(artifacts: &[(&str, Vec<u8>)]) {
    std::fs::create_dir_all(golden_dir()).unwrap();
    for (name, bytes) in artifacts {
        std::fs::write(golden_dir().join(name), bytes).unwrap();
    }
}
