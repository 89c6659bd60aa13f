use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scriptclique_core::{synth, write_corpus, CliqueReport, Tag};

const DEMO_CATEGORIES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data/demo_categories.csv");

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scriptclique"))
        .args(args)
        .arg("--quiet")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes the planted corpus and analyzes it, returning the corpus dir and report path.
fn analyzed(dir: &Path) -> (PathBuf, PathBuf) {
    let corpus = dir.join("corpus");
    write_corpus(&corpus, &synth::planted_corpus(3).data).unwrap();
    let report = dir.join("report.json");
    let o = bin(&["analyze", "--corpus", p(&corpus), "--out", p(&report)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    (corpus, report)
}

#[test]
fn analyze_writes_report_and_graph() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, report_path) = analyzed(dir.path());
    let report = CliqueReport::from_file(&report_path).unwrap();
    assert_eq!(report.cliques.len(), 5);
    assert_eq!(report.tag_summary[&Tag::AntiAdblocker].n_sites, 10);

    let graph = dir.path().join("edges.csv");
    let o = bin(&["analyze", "--corpus", p(&corpus), "--dump-graph", p(&graph)]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        stdout(&o),
        std::fs::read_to_string(&report_path).unwrap(),
        "stdout report matches the file"
    );
    let edges = std::fs::read_to_string(&graph).unwrap();
    assert!(edges.starts_with("node_a,node_b,score\n"));
    assert!(edges.lines().count() > 1);
}

#[test]
fn config_file_is_applied() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    write_corpus(&corpus, &synth::planted_corpus(3).data).unwrap();
    let cfg = dir.path().join("cfg.toml");
    std::fs::write(&cfg, "min_clique_sites = 11\n").unwrap();
    let o = bin(&["analyze", "--corpus", p(&corpus), "--config", p(&cfg)]);
    assert_eq!(code(&o), 0);
    let report = CliqueReport::from_json(&stdout(&o)).unwrap();
    assert_eq!(report.config.min_clique_sites, 11);
    assert!(report.cliques.is_empty());

    std::fs::write(&cfg, "similarity_threshold = 3.0\n").unwrap();
    assert_eq!(code(&bin(&["analyze", "--corpus", p(&corpus), "--config", p(&cfg)])), 1);
}

#[test]
fn calibrate_writes_thirteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, _) = analyzed(dir.path());
    let o = bin(&["calibrate", "--corpus", p(&corpus)]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("threshold,n_cliques,n_labeled,tpr"));
    assert_eq!(text.lines().count(), 14);
    assert!(text.contains("\n0.80,5,0,\n"));

    let o = bin(&["calibrate", "--corpus", p(&corpus), "--min", "0.9", "--max", "0.5"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn check_blocking_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report) = analyzed(dir.path());
    let blocking = dir.path().join("blocking.txt");
    std::fs::write(&blocking, "! demo list\n||baitcheck.net^$script\n").unwrap();
    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "").unwrap();
    let list_a = format!("abp={}", p(&blocking));
    let list_b = format!("none={}", p(&empty));
    let o = bin(&[
        "check-blocking",
        "--report",
        p(&report),
        "--list",
        &list_a,
        "--list",
        &list_b,
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        stdout(&o),
        "vendor_domain,list_name,decision,witness_rule\n\
         baitcheck.net,abp,blocked,||baitcheck.net^$script\n\
         baitcheck.net,none,allowed,\n"
    );
    assert_eq!(
        code(&bin(&["check-blocking", "--report", p(&report), "--list", "noequals"])),
        1
    );
}

#[test]
fn categorize_with_demo_mapping() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report) = analyzed(dir.path());
    let o = bin(&["categorize", "--report", p(&report), "--categories", DEMO_CATEGORIES]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert!(text.starts_with("category,percent\n"));
    let total: f64 = text
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 100.0).abs() <= 0.1, "{total}");
    assert!(text.lines().last().unwrap().starts_with("# categorized_sites="));
    assert_eq!(std::fs::read_to_string(DEMO_CATEGORIES).unwrap().lines().count(), 31);
}

#[test]
fn top_lists_largest_first() {
    let dir = tempfile::tempdir().unwrap();
    let (_, report) = analyzed(dir.path());
    let out = dir.path().join("top.csv");
    let o = bin(&["top", "--report", p(&report), "--k", "2", "--out", p(&out)]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.lines().nth(1).unwrap().starts_with("1,c00001,10,"));
    let o = bin(&["top", "--report", p(&report), "--k", "0"]);
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bin(&[])), 1);
    assert_eq!(code(&bin(&["analyze"])), 1);
    assert_eq!(code(&bin(&["top", "--report", "x.json", "--k", "minus"])), 1);
    assert_eq!(code(&bin(&["--help"])), 0);
    // Missing corpus and corrupted content are data errors.
    assert_eq!(code(&bin(&["analyze", "--corpus", p(dir.path())])), 2);
    let (corpus, _) = analyzed(dir.path());
    let data = scriptclique_core::load_corpus(&corpus).unwrap();
    let victim = &data.manifest.scripts[0];
    std::fs::write(corpus.join(&victim.content_path), b"tampered").unwrap();
    let o = bin(&["analyze", "--corpus", p(&corpus)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains(&victim.id));
    // harvest without an output directory is a usage error.
    let urls = dir.path().join("urls.txt");
    std::fs::write(&urls, "").unwrap();
    assert_eq!(code(&bin(&["harvest", "--urls", p(&urls)])), 1);
}
