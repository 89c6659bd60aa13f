mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use scriptclique_core::corpus::{CorpusBuilder, CorpusData, FetchStatus, ScriptKind};
use scriptclique_core::graph::{build_graph, build_nodes, candidate_pairs, external_ref_scan};
use scriptclique_core::pipeline::{prepare, PreparedCorpus};
use scriptclique_core::synth;
use scriptclique_core::AnalysisConfig;
use support::{oracle_graph, ref_has_external_refs};

fn words(prefix: &str, n: usize) -> String {
    (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
}

fn prepared(data: &CorpusData) -> PreparedCorpus {
    prepare(data, &AnalysisConfig::default()).unwrap()
}

#[test]
fn external_ref_hand_cases() {
    let cases: [(&str, bool); 10] = [
        (r#"x.src="https://t.co/a.js""#, true),
        ("var a = 1 + 2;", false),
        (r#"u = "//cdn.ex.com/p.js""#, true),
        ("u = '//cdn.ex.com/p.js'", true),
        ("load(`//img.ex.org/x.png`)", true),
        ("HTTP://EXAMPLE.COM", true),
        ("// just a comment\nfoo();", false),
        (r#"re = "// ""#, false),
        ("a = b // c.com", false),
        ("x = 'http:' + y", false),
    ];
    for (text, want) in cases {
        assert_eq!(external_ref_scan(text.as_bytes()), want, "{text}");
        assert_eq!(ref_has_external_refs(text.as_bytes()), want, "oracle on {text}");
    }
}

#[test]
fn same_url_on_three_sites_is_one_node() {
    let mut b = CorpusBuilder::new();
    for (i, site) in ["a.com", "b.com", "c.com"].iter().enumerate() {
        let p = b.add_page(site, &format!("https://{site}/"), support::ts(), None, FetchStatus::Ok);
        // Different bodies: the URL alone decides.
        let body = format!("{} variant{i}", words("lib", 20));
        b.add_script(
            p,
            ScriptKind::Downloaded,
            Some("https://cdn.x.com/a.js"),
            body.into_bytes(),
            false,
        );
    }
    let data = b.finish();
    let nodes = build_nodes(&prepared(&data).scripts);
    assert_eq!(nodes.len(), 1);
    assert_eq!(nodes[0].sites.len(), 3);
    assert_eq!(nodes[0].member_scripts.len(), 3);
}

#[test]
fn distinct_embedded_scripts_stay_apart() {
    let mut b = CorpusBuilder::new();
    let a = b.add_page("a.com", "https://a.com/", support::ts(), None, FetchStatus::Ok);
    let c = b.add_page("c.com", "https://c.com/", support::ts(), None, FetchStatus::Ok);
    b.add_script(a, ScriptKind::Embedded, None, words("x", 12).into_bytes(), false);
    b.add_script(c, ScriptKind::Embedded, None, words("y", 12).into_bytes(), false);
    assert_eq!(build_nodes(&prepared(&b.finish()).scripts).len(), 2);
}

#[test]
fn twenty_scripts_four_url_groups() {
    let group_sizes = [2usize, 3, 4, 5];
    let mut b = CorpusBuilder::new();
    let pages: Vec<usize> = (0..20)
        .map(|i| {
            let site = format!("s{i}.org");
            b.add_page(&site, &format!("https://{site}/"), support::ts(), None, FetchStatus::Ok)
        })
        .collect();
    let mut n = 0;
    for (g, &size) in group_sizes.iter().enumerate() {
        for _ in 0..size {
            let url = format!("https://cdn{g}.net/lib.js");
            let body = format!("{} {}", words(&format!("g{g}_"), 15), words(&format!("v{n}_"), 2));
            b.add_script(pages[n], ScriptKind::Downloaded, Some(&url), body.into_bytes(), false);
            n += 1;
        }
    }
    while n < 20 {
        b.add_script(
            pages[n],
            ScriptKind::Embedded,
            None,
            words(&format!("solo{n}_"), 15).into_bytes(),
            false,
        );
        n += 1;
    }
    let nodes = build_nodes(&prepared(&b.finish()).scripts);
    let expected = 20 - group_sizes.iter().map(|s| s - 1).sum::<usize>();
    assert_eq!(nodes.len(), expected);
}

/// Builds a corpus of named scripts on distinct sites and returns node indices
/// in insertion order.
fn pair_corpus(specs: &[(ScriptKind, usize, bool)]) -> CorpusData {
    let mut b = CorpusBuilder::new();
    for (i, &(kind, n_words, ext)) in specs.iter().enumerate() {
        let site = format!("p{i}.com");
        let p = b.add_page(&site, &format!("https://{site}/"), support::ts(), None, FetchStatus::Ok);
        let mut body = words(&format!("t{i}_"), n_words);
        if ext {
            // "https", "cdn", "ex", "com" add four tokens; compensate.
            body = format!("{} x=\"https://cdn.ex.com\"", words(&format!("t{i}_"), n_words - 5));
        }
        let url = format!("https://{site}/s.js");
        let source = (kind == ScriptKind::Downloaded).then_some(url.as_str());
        b.add_script(p, kind, source, body.into_bytes(), false);
    }
    b.finish()
}

#[test]
fn candidate_filter_examples() {
    let cfg = AnalysisConfig::default();
    let data = pair_corpus(&[(ScriptKind::Embedded, 100, false), (ScriptKind::Downloaded, 100, false)]);
    let nodes = build_nodes(&prepared(&data).scripts);
    assert!(candidate_pairs(&nodes, &cfg).is_empty(), "kinds never mix");

    let data = pair_corpus(&[(ScriptKind::Embedded, 100, false), (ScriptKind::Embedded, 160, false)]);
    let nodes = build_nodes(&prepared(&data).scripts);
    assert_eq!((nodes[0].total_terms, nodes[1].total_terms), (100, 160));
    assert!(candidate_pairs(&nodes, &cfg).is_empty(), "ratio 1.6 exceeds the bound");

    let data = pair_corpus(&[(ScriptKind::Downloaded, 100, true), (ScriptKind::Downloaded, 150, true)]);
    let nodes = build_nodes(&prepared(&data).scripts);
    assert_eq!((nodes[0].total_terms, nodes[1].total_terms), (100, 150));
    assert!(nodes.iter().all(|n| n.has_external_refs));
    assert_eq!(
        candidate_pairs(&nodes, &cfg),
        vec![(0, 1)],
        "ratio 1.5 is inside the bound"
    );

    let data = pair_corpus(&[(ScriptKind::Embedded, 100, true), (ScriptKind::Embedded, 100, false)]);
    let nodes = build_nodes(&prepared(&data).scripts);
    assert!(candidate_pairs(&nodes, &cfg).is_empty(), "external-reference mismatch");
}

#[test]
fn disjoint_vocabularies_give_no_edges() {
    let data = pair_corpus(&[
        (ScriptKind::Embedded, 50, false),
        (ScriptKind::Embedded, 50, false),
        (ScriptKind::Embedded, 60, false),
    ]);
    let p = prepared(&data);
    let g = build_graph(build_nodes(&p.scripts), &p.scripts, &AnalysisConfig::default());
    assert!(g.edges.is_empty());
    assert_eq!(g.audit.compared, 3);
}

#[test]
fn identical_scripts_on_two_sites_score_one() {
    let mut b = CorpusBuilder::new();
    for site in ["a.com", "b.com"] {
        let p = b.add_page(site, &format!("https://{site}/"), support::ts(), None, FetchStatus::Ok);
        // Whitespace differs, so the hashes differ and the nodes stay separate.
        let body = if site == "a.com" {
            words("w", 20)
        } else {
            format!("  {}\n", words("w", 20))
        };
        b.add_script(p, ScriptKind::Embedded, None, body.into_bytes(), false);
    }
    let p = prepared(&b.finish());
    let g = build_graph(build_nodes(&p.scripts), &p.scripts, &AnalysisConfig::default());
    assert_eq!(g.edges.len(), 1);
    assert!((g.edges[0].score - 1.0).abs() < 1e-12);
}

#[test]
fn planted_corpus_matches_unfiltered_oracle() {
    let corpus = synth::planted_corpus(21);
    let cfg = AnalysisConfig::default();
    let p = prepared(&corpus.data);
    assert_eq!(p.manifest.scripts.len(), 200);
    let g = build_graph(build_nodes(&p.scripts), &p.scripts, &cfg);
    let ids: Vec<String> = p.scripts.iter().map(|s| s.record.id.clone()).collect();
    let oracle = oracle_graph(&corpus.data, &ids, &g.nodes, cfg.wordcount_ratio_max);

    let got: BTreeSet<(usize, usize)> = g.edges.iter().map(|e| (e.a, e.b)).collect();
    let want: BTreeSet<(usize, usize)> = oracle
        .survivors
        .iter()
        .copied()
        .filter(|pair| oracle.all_pairs[pair] >= cfg.similarity_threshold)
        .collect();
    assert_eq!(got, want);
    for e in &g.edges {
        assert!((e.score - oracle.all_pairs[&(e.a, e.b)]).abs() < 1e-9);
        assert_eq!(g.nodes[e.a].kind, g.nodes[e.b].kind);
    }
    let survivors: BTreeSet<(usize, usize)> = candidate_pairs(&g.nodes, &cfg).into_iter().collect();
    assert_eq!(survivors, oracle.survivors);
}

#[test]
fn filters_never_split_a_planted_family() {
    let corpus = synth::planted_corpus(4);
    let cfg = AnalysisConfig::default();
    let p = prepared(&corpus.data);
    let nodes = build_nodes(&p.scripts);
    let survivors: BTreeSet<(usize, usize)> = candidate_pairs(&nodes, &cfg).into_iter().collect();
    let node_of = |id: &str| {
        nodes
            .iter()
            .position(|n| n.member_scripts.iter().any(|m| m == id))
            .unwrap()
    };
    for fam in corpus.families.iter().chain(&corpus.minor_families) {
        let ns: Vec<usize> = fam.script_ids.iter().map(|id| node_of(id)).collect();
        for (i, &a) in ns.iter().enumerate() {
            for &b in &ns[i + 1..] {
                assert!(
                    survivors.contains(&(a.min(b), a.max(b))),
                    "family {} pair dropped",
                    fam.index
                );
            }
        }
    }
}

#[test]
fn dump_is_sorted_csv() {
    let corpus = synth::planted_corpus(2);
    let p = prepared(&corpus.data);
    let g = build_graph(build_nodes(&p.scripts), &p.scripts, &AnalysisConfig::default());
    let mut buf = Vec::new();
    g.write_edge_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("node_a,node_b,score"));
    let rows: Vec<(String, String)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 3);
            assert!(f[0] < f[1]);
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    assert_eq!(rows.len(), g.edges.len());
    assert!(rows.windows(2).all(|w| w[0] < w[1]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn edges_are_antitone_in_threshold(seed in 0u64..1000, t1 in 0.3f64..1.0, t2 in 0.3f64..1.0) {
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let corpus = synth::planted_corpus(seed);
        let p = prepared(&corpus.data);
        let base = AnalysisConfig::default();
        let g_lo = build_graph(build_nodes(&p.scripts), &p.scripts, &base.with_threshold(lo));
        let g_hi = build_graph(build_nodes(&p.scripts), &p.scripts, &base.with_threshold(hi));
        let lo_set: BTreeSet<(usize, usize)> = g_lo.edges.iter().map(|e| (e.a, e.b)).collect();
        prop_assert!(g_hi.edges.iter().all(|e| lo_set.contains(&(e.a, e.b))));
        prop_assert!(g_lo.edges.iter().all(|e| g_lo.nodes[e.a].kind == g_lo.nodes[e.b].kind && e.score >= lo));
        prop_assert_eq!(g_lo.at_threshold(hi).edges, g_hi.edges);
    }
}
