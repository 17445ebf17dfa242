//! End-to-end runs against the scripted backend.

mod common;

use std::collections::BTreeMap;

use cogmcts::llm::BackendConfig;
use cogmcts::orchestrator::{resume, run_in, EventStatus, RunError, RunReport};
use cogmcts::summary::render_run_dir;
use cogmcts::Problem;
use common::*;

#[test]
fn run_directory_is_complete_and_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let script = write_script(&tmp.path().join("script.json"), &script_entries(Problem::Kp, 1));
    let out = tmp.path().join("run");
    let report = run_in(&e2e_config(&script), &out).unwrap();
    for f in [
        "config.toml",
        "metadata.json",
        "events.jsonl",
        "transcript.jsonl",
        "tree.json",
        "best_artifact.txt",
        "knowledge.json",
        "report.json",
        "checkpoint.json",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let on_disk: RunReport = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(on_disk, report);
    assert_eq!(report.compute_digest(), report.digest);
    assert_eq!(report.events.len() as u64, report.t);
    assert_eq!(report.t, report.n_init + report.widenings + report.iterations * report.fanout_sum);

    // Every tree node came from exactly one accepted event.
    let accepted = report.events.iter().filter(|e| e.status == EventStatus::Ok).count();
    assert_eq!(accepted + 1, report.tree.nodes.len());
    // Visit counts equal subtree sizes (the root counts its descendants).
    let mut size: BTreeMap<usize, u64> = BTreeMap::new();
    for n in report.tree.nodes.iter().rev() {
        let own = u64::from(n.parent.is_some());
        let total = size.get(&n.id.0).copied().unwrap_or(0) + own;
        assert_eq!(n.n_visits, total, "node {}", n.id);
        if let Some(p) = n.parent {
            *size.entry(p.0).or_default() += total;
        }
    }
    let best_text = std::fs::read_to_string(out.join("best_artifact.txt")).unwrap();
    assert!(best_text.contains(&report.best.artifact.payload));
}

#[test]
fn identical_seeds_reproduce_the_digest() {
    let tmp = tempfile::tempdir().unwrap();
    let script = write_script(&tmp.path().join("script.json"), &script_entries(Problem::Kp, 2));
    let a = run_in(&e2e_config(&script), &tmp.path().join("a")).unwrap();
    let b = run_in(&e2e_config(&script), &tmp.path().join("b")).unwrap();
    assert_eq!(a.digest, b.digest);
    let ta = std::fs::read(tmp.path().join("a/transcript.jsonl")).unwrap();
    let tb = std::fs::read(tmp.path().join("b/transcript.jsonl")).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn resume_after_abort_matches_an_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let full = script_entries(Problem::Kp, 3);
    let full_path = write_script(&tmp.path().join("full.json"), &full);
    let short_path = write_script(&tmp.path().join("short.json"), &truncate_tag(&full, "m2", 3));

    let reference = run_in(&e2e_config(&full_path), &tmp.path().join("reference")).unwrap();

    let out = tmp.path().join("resumed");
    let err = run_in(&e2e_config(&short_path), &out).unwrap_err();
    let RunError::Aborted { iteration, .. } = err else { panic!("expected abort, got {err}") };
    assert_eq!(iteration, 3);
    assert!(!out.join("report.json").exists());

    let resumed = resume(&out, Some(BackendConfig::scripted(&full_path))).unwrap();
    assert_eq!(resumed.digest, reference.digest);
    assert_eq!(
        std::fs::read(out.join("transcript.jsonl")).unwrap(),
        std::fs::read(tmp.path().join("reference/transcript.jsonl")).unwrap()
    );
}

#[test]
fn ablation_issues_no_em_calls() {
    let tmp = tempfile::tempdir().unwrap();
    let script = write_script(&tmp.path().join("script.json"), &script_entries(Problem::Kp, 4));
    let out = tmp.path().join("run");
    let report = run_in(&ablated(e2e_config(&script)), &out).unwrap();
    let tags = transcript_tags(&out);
    assert!(!tags.iter().any(|t| t == "em1" || t == "em2"));
    assert!(tags.iter().any(|t| t == "m1"));
    assert_eq!(report.fanout_sum, 2);
    assert!(report.t >= 64);
}

#[test]
fn missing_api_key_fails_before_any_search() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = e2e_config(&tmp.path().join("unused.json"));
    cfg.backend = BackendConfig { api_key_env: "COGMCTS_TEST_KEY_THAT_IS_NOT_SET".into(), ..BackendConfig::default() };
    let out = tmp.path().join("run");
    assert!(matches!(run_in(&cfg, &out), Err(RunError::Config(_))));
    assert!(!out.exists());
}

#[test]
fn existing_run_directory_is_not_overwritten() {
    let tmp = tempfile::tempdir().unwrap();
    let script = write_script(&tmp.path().join("script.json"), &script_entries(Problem::Kp, 5));
    let out = tmp.path().join("run");
    run_in(&e2e_config(&script), &out).unwrap();
    assert!(matches!(run_in(&e2e_config(&script), &out), Err(RunError::Config(_))));
}

#[test]
fn report_rendering_is_stable_and_read_only() {
    let tmp = tempfile::tempdir().unwrap();
    let script = write_script(&tmp.path().join("script.json"), &script_entries(Problem::Kp, 6));
    let out = tmp.path().join("run");
    let report = run_in(&e2e_config(&script), &out).unwrap();
    let snapshot = |dir: &std::path::Path| -> BTreeMap<String, Vec<u8>> {
        std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap())
            .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
            .collect()
    };
    let before = snapshot(&out);
    let a = render_run_dir(&out).unwrap();
    let b = render_run_dir(&out).unwrap();
    assert_eq!(a, b);
    assert_eq!(before, snapshot(&out));

    // The CSV trajectory is monotone and ends at the best reward.
    let rows: Vec<f64> = a
        .lines()
        .skip_while(|l| *l != "t,best_reward")
        .skip(1)
        .take_while(|l| !l.is_empty())
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(rows.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(*rows.last().unwrap(), report.best.reward);
}

#[test]
fn empty_events_are_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("events.jsonl"), "").unwrap();
    assert!(render_run_dir(tmp.path()).is_err());
}

#[test]
fn every_problem_runs_with_the_template_dialect() {
    for problem in [Problem::Tsp, Problem::Op, Problem::Cvrp, Problem::Mkp] {
        let tmp = tempfile::tempdir().unwrap();
        let script = write_script(&tmp.path().join("script.json"), &script_entries(problem, 8));
        let mut cfg = e2e_config(&script);
        cfg.problem = problem;
        cfg.dataset.n_instances = 2;
        cfg.dataset.n = 10;
        cfg.search.n_init = 3;
        cfg.search.budget = 12;
        let report = run_in(&cfg, &tmp.path().join("run")).unwrap();
        assert!(report.best.reward.is_finite(), "{problem}");
        assert!(report.baseline_reward.is_none());
    }
}
