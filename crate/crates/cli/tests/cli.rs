//! The `cogmcts` binary end to end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cogmcts::exec::template::{TemplateDocument, TemplateId};
use cogmcts::llm::scripted::SyntheticScript;
use cogmcts::{Dialect, HeuristicArtifact, Problem, RunConfig};

fn cogmcts(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cogmcts"))
        .args(args)
        .env_remove("COGMCTS_API_KEY")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Writes a small KP config and a matching response script.
fn setup(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let mut cfg = RunConfig::default();
    cfg.problem = Problem::Kp;
    cfg.seed = seed;
    cfg.dataset.n_instances = 8;
    cfg.dataset.n = 30;
    cfg.search.n_init = 4;
    cfg.search.budget = 30;
    cfg.search.thinking_cycle = 2;
    let config = dir.join("config.toml");
    std::fs::write(&config, cfg.to_toml()).unwrap();
    let script = dir.join("script.json");
    let entries = SyntheticScript::new(Problem::Kp, seed, 40).build();
    std::fs::write(&script, serde_json::to_string(&entries).unwrap()).unwrap();
    (config, script)
}

fn run_args<'a>(config: &'a str, script: &'a str, out: &'a str) -> Vec<&'a str> {
    vec!["run", "--config", config, "--script", script, "--out", out]
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect()
}

#[test]
fn scripted_run_writes_a_complete_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let (config, script) = setup(tmp.path(), 1);
    let out = tmp.path().join("run");
    let o = cogmcts(&run_args(config.to_str().unwrap(), script.to_str().unwrap(), out.to_str().unwrap()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("best reward:"));
    for f in ["config.toml", "metadata.json", "events.jsonl", "transcript.jsonl", "tree.json", "report.json", "checkpoint.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }

    // A second run into the same directory is refused.
    let again = cogmcts(&run_args(config.to_str().unwrap(), script.to_str().unwrap(), out.to_str().unwrap()));
    assert_eq!(again.status.code(), Some(1));
}

#[test]
fn live_backend_without_a_key_exits_with_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let (config, _) = setup(tmp.path(), 2);
    let out = tmp.path().join("run");
    let o = cogmcts(&["run", "--config", config.to_str().unwrap(), "--backend", "live", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn resume_finishes_an_aborted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (config, script) = setup(tmp.path(), 3);
    let (c, s) = (config.to_str().unwrap(), script.to_str().unwrap());

    let reference = tmp.path().join("reference");
    assert!(cogmcts(&run_args(c, s, reference.to_str().unwrap())).status.success());

    // Drop every m2 response after the second so the run aborts midway.
    let mut entries: Vec<serde_json::Value> = serde_json::from_str(&std::fs::read_to_string(&script).unwrap()).unwrap();
    let mut seen = 0;
    entries.retain(|e| {
        if e["tag"] != "m2" {
            return true;
        }
        seen += 1;
        seen <= 2
    });
    let short = tmp.path().join("short.json");
    std::fs::write(&short, serde_json::to_string(&entries).unwrap()).unwrap();

    let out = tmp.path().join("run");
    let o = cogmcts(&run_args(c, short.to_str().unwrap(), out.to_str().unwrap()));
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("report.json").exists());

    let o = cogmcts(&["run", "--resume", "--script", s, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let digest = |dir: &Path| {
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
        v["digest"].as_str().unwrap().to_string()
    };
    assert_eq!(digest(&out), digest(&reference));
}

#[test]
fn report_prints_sections_without_touching_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (config, script) = setup(tmp.path(), 4);
    let out = tmp.path().join("run");
    assert!(cogmcts(&run_args(config.to_str().unwrap(), script.to_str().unwrap(), out.to_str().unwrap())).status.success());
    let before = snapshot(&out);
    let a = cogmcts(&["report", out.to_str().unwrap()]);
    let b = cogmcts(&["report", out.to_str().unwrap()]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    for section in ["# trajectory", "# actions", "# knowledge"] {
        assert!(stdout(&a).contains(section), "missing {section}");
    }
    assert_eq!(before, snapshot(&out));

    let missing = cogmcts(&["report", tmp.path().join("nowhere").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn generated_datasets_are_stable_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = |name: &str, seed: &str| {
        let path = tmp.path().join(name);
        let o = cogmcts(&["gen-instances", "--problem", "kp", "--n-instances", "5", "--n", "20", "--seed", seed, "--out", path.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        (stdout(&o).trim().to_string(), std::fs::read(path).unwrap())
    };
    let a = gen("a.json", "9");
    let b = gen("b.json", "9");
    let c = gen("c.json", "10");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}

#[test]
fn eval_reports_the_gap_and_rejects_corrupt_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("kp.json");
    let o = cogmcts(&["gen-instances", "--problem", "kp", "--n-instances", "4", "--n", "20", "--seed", "3", "--out", ds.to_str().unwrap()]);
    assert!(o.status.success());

    let doc = TemplateDocument::new(TemplateId::ValueWeightRatio, &[]).unwrap();
    let art = HeuristicArtifact::new("ratio greedy", Dialect::Template, doc.to_text(), TemplateId::ValueWeightRatio.signature_kind());
    let good = tmp.path().join("good.txt");
    std::fs::write(&good, art.render("python")).unwrap();
    let o = cogmcts(&["eval", "--artifact", good.to_str().unwrap(), "--dataset", ds.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.contains("reward:"));
    assert!(text.contains("mean gap vs optimum:") && !text.contains("n/a"), "{text}");

    let bad = tmp.path().join("bad.txt");
    std::fs::write(&bad, "no description and no code").unwrap();
    let o = cogmcts(&["eval", "--artifact", bad.to_str().unwrap(), "--dataset", ds.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}
