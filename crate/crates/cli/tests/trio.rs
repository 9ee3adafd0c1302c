mod common;

use std::process::Command;

use common::{build_trio, expected_totals, fixture_dir, BUILD_TS};
use pkgraph::engine::{Engine, RecommendRequest};

fn engine() -> Engine {
    Engine::new(build_trio().graph, Default::default()).unwrap()
}

#[test]
fn ranking_matches_hand_computation() {
    let resp = engine().recommend(&RecommendRequest::new("web framework", 10), 0).unwrap();
    let got: Vec<(&str, f64)> = resp.recommendations.iter().map(|r| (r.package.as_str(), r.total)).collect();
    let want = expected_totals();
    assert_eq!(got.len(), want.len());
    for ((gn, gt), (wn, wt)) in got.iter().zip(want) {
        assert_eq!(*gn, wn);
        assert!((gt - wt).abs() < 1e-9, "{gn}: {gt} vs {wt}");
    }
    assert_eq!(resp.graph_build_timestamp, Some(BUILD_TS));
}

#[test]
fn exclude_vulnerable_removes_the_advisory_holder() {
    let mut req = RecommendRequest::new("web framework", 10);
    req.filters.exclude_vulnerable = true;
    let names: Vec<String> = engine().recommend(&req, 0).unwrap().recommendations.into_iter().map(|r| r.package).collect();
    assert_eq!(names, ["selenium", "spacy"]);
}

#[test]
fn evidence_links_point_at_sources() {
    let resp = engine().recommend(&RecommendRequest::new("web framework", 1), 0).unwrap();
    let links = &resp.recommendations[0].evidence_links;
    assert!(links.iter().any(|l| l == "CVE-2024-99001"));
    assert!(links.iter().any(|l| l == "https://stackoverflow.com/q/9003"));
    assert!(links.iter().any(|l| l == "registry:django"));
}

#[test]
fn unrecorded_review_platforms_become_warnings() {
    let trio = build_trio();
    // four of five platforms are absent from the bundle for each package
    assert_eq!(trio.second_ingest.warnings.len(), 12);
    assert!(trio.second_ingest.warnings.iter().all(|w| w.contains("not present in fixture bundle")));
    assert_eq!(trio.second_ingest.reviews, 4);
    assert_eq!(trio.second_ingest.advisories, 1);
}

#[test]
fn compare_has_a_row_per_attribute() {
    let m = engine()
        .compare(&pkgraph::engine::CompareRequest { names: vec!["spacy".into(), "django".into()] })
        .unwrap();
    assert_eq!(m.rows.len(), 8);
    assert!(m.rows.iter().all(|r| r.cells.len() == 2));
}

fn pkgraph() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_pkgraph"));
    c.env("PKGRAPH_LOG", "off").env_remove("PKGRAPH_CONFIG");
    c
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(out.status.success(), "{:?}: {}", cmd, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn cli_pipeline_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let fx = fixture_dir();
    run_ok(pkgraph().current_dir(d).args(["ingest", "--staging", "s", "--term", "web framework", "--fixtures"]).arg(&fx));
    run_ok(pkgraph().current_dir(d).args(["scan", "--staging", "s", "--out", "c1"]));
    run_ok(pkgraph().current_dir(d).args(["ingest", "--staging", "s", "--packages-from-scan", "c1", "--fixtures"]).arg(&fx));
    run_ok(pkgraph().current_dir(d).args(["scan", "--staging", "s", "--out", "c"]));
    run_ok(pkgraph().current_dir(d).args(["build-graph", "--staging", "s", "--scan", "c", "--out", "g.snap", "--timestamp", "1717300000"]));

    let table = run_ok(pkgraph().current_dir(d).args(["recommend", "--graph", "g.snap", "--story", "web framework", "--k", "3"]));
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].split_whitespace().nth(1) == Some("django"), "{table}");
    assert!(rows[0].contains("0.7750"));

    // usage buckets: counts are 4, 2 and 1 files
    let counts = [4u64, 2, 1];
    let ones = counts.iter().filter(|c| **c == 1).count();
    let small = counts.iter().filter(|c| **c > 1 && **c <= 10).count();
    let tsv = run_ok(pkgraph().current_dir(d).args(["analyze", "--graph", "g.snap", "--report", "usage", "--format", "tsv"]));
    let lines: Vec<&str> = tsv.lines().collect();
    assert_eq!(lines[0], "interval\tcount\tpercentage");
    assert_eq!(lines[1], format!("x = 1\t{ones}\t33.33%"));
    assert_eq!(lines[2], format!("1 < x <= 10\t{small}\t66.67%"));
    assert!(lines[3..].iter().all(|l| l.ends_with("\t0\t0.00%")));

    let top = run_ok(pkgraph().current_dir(d).args(["analyze", "--graph", "g.snap", "--report", "top-usage", "--scan", "c", "--format", "tsv"]));
    assert_eq!(top.lines().nth(1), Some("1\tdjango\t4\t66.67%"));
}

#[test]
fn exit_codes() {
    let out = pkgraph().args(["recommend", "--story", "web framework"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--graph"));

    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "[ranking\nalpha = ").unwrap();
    let snap = tmp.path().join("g.snap");
    pkgraph_core::save_snapshot(&build_trio().graph, &snap).unwrap();
    let out = pkgraph().arg("--config").arg(&cfg).args(["recommend", "--story", "x", "--graph"]).arg(&snap).output().unwrap();
    assert_eq!(out.status.code(), Some(3));

    let out = pkgraph().args(["recommend", "--story", "web framework", "--k", "0", "--graph"]).arg(&snap).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn eval_sample_size_subcommand() {
    let out = run_ok(pkgraph().args(["eval", "sample-size", "--population", "16887"]));
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["test"], "sample_size");
    assert_eq!(v["n"], 376);
}
