//! Independent reference implementations used as test oracles, plus shared
//! fixtures. Nothing here calls the code under test except for parsing and
//! hostname helpers that are not what the oracles check.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scriptclique_core::domain::registrable_domain;
use scriptclique_core::filter::{Action, Anchor, Atom, FilterRule, RequestContext, ResourceType, Verdict};

pub fn ts() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2016-05-01T12:00:00Z")
        .unwrap()
        .with_timezone(&Utc)
}

// ---------------------------------------------------------------------------
// Lexical oracles

const REF_RESERVED: &str = "break case catch class const continue debugger default delete do else export \
    extends finally for function if import in instanceof let new return static super switch this throw try \
    typeof var void while with yield true false null undefined";

/// Reference tokenizer: character runs over `[A-Za-z0-9_$]` that contain an
/// ASCII letter, minus reserved words.
pub fn ref_tokenize(text: &str) -> BTreeMap<String, u32> {
    let reserved: BTreeSet<&str> = REF_RESERVED.split_whitespace().collect();
    let mut counts = BTreeMap::new();
    let mut cur = String::new();
    let mut flush = |cur: &mut String| {
        if cur.chars().any(|c| c.is_ascii_alphabetic()) && !reserved.contains(cur.as_str()) {
            *counts.entry(cur.clone()).or_insert(0) += 1;
        }
        cur.clear();
    };
    for c in text.chars() {
        if c.is_ascii_alphanumeric() || c == '_' || c == '$' {
            cur.push(c);
        } else {
            flush(&mut cur);
        }
    }
    flush(&mut cur);
    counts
}

/// Direct evaluation of `tf * (ln((1 + N) / (1 + df)) + 1)` per document.
pub fn ref_tfidf(docs: &[BTreeMap<String, u32>]) -> Vec<HashMap<String, f64>> {
    let n = docs.len() as f64;
    let mut df: HashMap<&str, f64> = HashMap::new();
    for d in docs {
        for t in d.keys() {
            *df.entry(t.as_str()).or_insert(0.0) += 1.0;
        }
    }
    docs.iter()
        .map(|d| {
            let total: f64 = d.values().map(|&c| f64::from(c)).sum();
            d.iter()
                .map(|(t, &c)| {
                    let idf = ((1.0 + n) / (1.0 + df[t.as_str()])).ln() + 1.0;
                    (t.clone(), f64::from(c) / total * idf)
                })
                .collect()
        })
        .collect()
}

pub fn ref_cosine(u: &HashMap<String, f64>, v: &HashMap<String, f64>) -> f64 {
    let nu = u.values().map(|w| w * w).sum::<f64>().sqrt();
    let nv = v.values().map(|w| w * w).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let dot: f64 = u.iter().filter_map(|(t, w)| v.get(t).map(|x| w * x)).sum();
    dot / (nu * nv)
}

// ---------------------------------------------------------------------------
// Clique oracle

pub fn random_graph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in a + 1..n {
            if rng.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Every maximal clique of size at least two, by checking all 2^n subsets.
pub fn brute_force_cliques(n: usize, edges: &[(usize, usize)]) -> BTreeSet<Vec<usize>> {
    let mut adj = vec![0u32; n];
    for &(a, b) in edges {
        adj[a] |= 1 << b;
        adj[b] |= 1 << a;
    }
    let is_clique = |mask: u32| {
        (0..n)
            .filter(|&v| mask >> v & 1 == 1)
            .all(|v| mask & !(1 << v) & !adj[v] == 0)
    };
    let mut out = BTreeSet::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() < 2 || !is_clique(mask) {
            continue;
        }
        let extendable = (0..n).any(|v| mask >> v & 1 == 0 && mask & !adj[v] == 0);
        if !extendable {
            out.insert((0..n).filter(|&v| mask >> v & 1 == 1).collect());
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Filter oracle

fn oracle_host_span(url: &str, host: &str) -> (usize, usize) {
    let after = url.find("://").unwrap() + 3;
    let rest = &url[after..];
    let auth_end = rest.find(['/', '?', '#']).unwrap_or(rest.len());
    let start = after + rest[..auth_end].rfind('@').map_or(0, |i| i + 1);
    (start, start + host.len())
}

fn oracle_is_sep(b: u8) -> bool {
    !(b.is_ascii_alphanumeric() || b"_-.%".contains(&b))
}

/// Backtracking matcher over the parsed atoms.
fn match_here(atoms: &[Atom], url: &[u8], pos: usize, host_end: usize) -> bool {
    match atoms.split_first() {
        None => true,
        Some((Atom::Wildcard, rest)) => (pos..=url.len()).any(|k| match_here(rest, url, k, host_end)),
        Some((Atom::Separator, rest)) => {
            if pos == url.len() {
                match_here(rest, url, pos, host_end)
            } else {
                oracle_is_sep(url[pos]) && match_here(rest, url, pos + 1, host_end)
            }
        }
        Some((Atom::Literal(lit), rest)) => {
            let lit = lit.as_bytes();
            if pos + lit.len() > url.len() {
                return false;
            }
            let ok = lit.iter().enumerate().all(|(k, &l)| {
                let u = url[pos + k];
                if pos + k < host_end {
                    u.eq_ignore_ascii_case(&l)
                } else {
                    u == l
                }
            });
            ok && match_here(rest, url, pos + lit.len(), host_end)
        }
    }
}

fn oracle_domain_hit(site: &str, d: &str) -> bool {
    site == d || site.ends_with(&format!(".{d}"))
}

pub fn oracle_matches(rule: &FilterRule, ctx: &RequestContext) -> bool {
    let o = &rule.options;
    if o.script_only && ctx.resource_type != ResourceType::Script {
        return false;
    }
    let host = ctx.url.host_str().unwrap();
    if let Some(third) = o.third_party {
        if (registrable_domain(host) != ctx.page_site) != third {
            return false;
        }
    }
    if let Some(dc) = &o.domains {
        if !dc.include.is_empty() && !dc.include.iter().any(|d| oracle_domain_hit(&ctx.page_site, d)) {
            return false;
        }
        if dc.exclude.iter().any(|d| oracle_domain_hit(&ctx.page_site, d)) {
            return false;
        }
    }
    let s = ctx.url.as_str();
    let (hs, he) = oracle_host_span(s, host);
    let url = s.as_bytes();
    let starts: Vec<usize> = match rule.anchor {
        Anchor::StartAnchor => vec![0],
        Anchor::None => (0..=url.len()).collect(),
        Anchor::DomainAnchor => (hs..he).filter(|&p| p == hs || url[p - 1] == b'.').collect(),
    };
    starts.into_iter().any(|p| match_here(&rule.pattern, url, p, he))
}

/// Tests every rule independently, then combines.
pub fn naive_decide(rules: &[FilterRule], ctx: &RequestContext) -> (Verdict, Option<usize>) {
    let hits: Vec<usize> = (0..rules.len()).filter(|&i| oracle_matches(&rules[i], ctx)).collect();
    let block = hits.iter().copied().find(|&i| rules[i].action == Action::Block);
    let exception = hits.iter().copied().find(|&i| rules[i].action == Action::Exception);
    match (block, exception) {
        (Some(_), Some(e)) => (Verdict::Allowed, Some(e)),
        (Some(b), None) => (Verdict::Blocked, Some(b)),
        (None, _) => (Verdict::Allowed, None),
    }
}

// ---------------------------------------------------------------------------
// Hand-audited filter fixture: 12 rules and 20 requests with expected outcomes.

pub const AUDIT_RULES: [&str; 12] = [
    "||pagefair.com^",
    "||ads.example.com^$script",
    "@@||ads.example.com/allowed/*$script",
    "/banner.",
    "|https://cdn.tracker.net/t.js",
    "||tracker.net^$third-party",
    "@@||tracker.net^$domain=partner.org",
    "/adblock-detect*.js$script,domain=~blog.com",
    "||metrics.",
    "&adtype=",
    "||static.example.org/ads/*^$~third-party",
    "@@/banner.$domain=shop.com",
];

pub struct AuditCase {
    pub url: &'static str,
    pub page_site: &'static str,
    pub script: bool,
    pub blocked: bool,
    pub witness: Option<usize>,
}

const fn case(
    url: &'static str,
    page_site: &'static str,
    script: bool,
    blocked: bool,
    witness: Option<usize>,
) -> AuditCase {
    AuditCase {
        url,
        page_site,
        script,
        blocked,
        witness,
    }
}

pub const AUDIT_CASES: [AuditCase; 20] = [
    case("https://asset.pagefair.com/measure.js", "news.com", true, true, Some(0)),
    case("https://notpagefair.com/x.js", "news.com", true, false, None),
    case("https://pagefair.com:8080/x.js", "news.com", true, true, Some(0)),
    case("https://ads.example.com/lib.js", "news.com", true, true, Some(1)),
    case("https://ads.example.com/lib.js", "news.com", false, false, None),
    case(
        "https://ads.example.com/allowed/lib.js",
        "news.com",
        true,
        false,
        Some(2),
    ),
    case("https://ex.com/img/banner.gif", "news.com", false, true, Some(3)),
    case("https://ex.com/img/banner.gif", "shop.com", false, false, Some(11)),
    case("https://ex.com/img/Banner.gif", "news.com", false, false, None),
    case("https://cdn.tracker.net/t.js", "news.com", true, true, Some(4)),
    case("https://cdn.tracker.net/t.js", "partner.org", true, false, Some(6)),
    case("https://cdn.tracker.net/other.js", "tracker.net", true, false, None),
    case("http://cdn.tracker.net/t.js", "news.com", true, true, Some(5)),
    case(
        "https://news.com/js/adblock-detect-v2.js",
        "news.com",
        true,
        true,
        Some(7),
    ),
    case(
        "https://news.com/js/adblock-detect-v2.js",
        "blog.com",
        true,
        false,
        None,
    ),
    case("https://metrics.foo.com/collect", "news.com", false, true, Some(8)),
    case("https://xmetrics.foo.com/collect", "news.com", false, false, None),
    case(
        "https://ads.net/serve?id=1&adtype=banner",
        "news.com",
        false,
        true,
        Some(9),
    ),
    case(
        "https://static.example.org/ads/x.js",
        "example.org",
        true,
        true,
        Some(10),
    ),
    case("https://static.example.org/ads/x.js", "news.com", true, false, None),
];

pub fn audit_context(c: &AuditCase) -> RequestContext {
    let rt = if c.script {
        ResourceType::Script
    } else {
        ResourceType::Other
    };
    RequestContext::new(c.url, c.page_site, rt).unwrap()
}

// ---------------------------------------------------------------------------
// Random filter instances

const RULE_PIECES: [&str; 16] = [
    "ads",
    "example.com",
    ".js",
    "/",
    "^",
    "*",
    "banner",
    "tracker",
    "cdn.",
    "Ads",
    "https://",
    "x.gif",
    "?q=",
    "%20",
    "net",
    "_",
];
const RULE_OPTIONS: [&str; 6] = [
    "script",
    "third-party",
    "~third-party",
    "domain=example.com|~news.org",
    "domain=news.org",
    "domain=~tracker.net",
];
const HOSTS: [&str; 8] = [
    "ads.example.com",
    "example.com",
    "cdn.tracker.net",
    "tracker.net",
    "notexample.com",
    "static.cdn.example.com",
    "news.org",
    "x.ads.net",
];
const PATHS: [&str; 8] = [
    "/",
    "/ads/banner.js",
    "/js/app.js",
    "/Ads/x.gif",
    "/p?q=ads&x=1",
    "/banner.x.gif",
    "/a_b-c.d%20e",
    "/cdn./tracker.js",
];
const PAGE_SITES: [&str; 4] = ["example.com", "news.org", "tracker.net", "other.io"];

/// A random rule line that parses.
pub fn random_rule_line(rng: &mut impl Rng, force_exception: Option<bool>) -> String {
    loop {
        let mut s = String::new();
        let exception = force_exception.unwrap_or_else(|| rng.gen_bool(0.3));
        if exception {
            s.push_str("@@");
        }
        match rng.gen_range(0..3) {
            0 => s.push_str("||"),
            1 => s.push('|'),
            _ => {}
        }
        for _ in 0..rng.gen_range(1..=4) {
            s.push_str(RULE_PIECES[rng.gen_range(0..RULE_PIECES.len())]);
        }
        if rng.gen_bool(0.4) {
            let mut opts: Vec<&str> = Vec::new();
            for _ in 0..rng.gen_range(1..=2) {
                let o = RULE_OPTIONS[rng.gen_range(0..RULE_OPTIONS.len())];
                if !opts.contains(&o) {
                    opts.push(o);
                }
            }
            s.push('$');
            s.push_str(&opts.join(","));
        }
        if scriptclique_core::filter::parse_rule(&s).is_ok() {
            return s;
        }
    }
}

pub fn random_context(rng: &mut impl Rng) -> RequestContext {
    let scheme = if rng.gen_bool(0.7) { "https" } else { "http" };
    let url = format!(
        "{scheme}://{}{}",
        HOSTS[rng.gen_range(0..HOSTS.len())],
        PATHS[rng.gen_range(0..PATHS.len())]
    );
    let rt = if rng.gen_bool(0.5) {
        ResourceType::Script
    } else {
        ResourceType::Other
    };
    RequestContext::new(&url, PAGE_SITES[rng.gen_range(0..PAGE_SITES.len())], rt).unwrap()
}

// ---------------------------------------------------------------------------
// Similarity-graph oracle

/// Lexical external-reference check written independently of the library.
pub fn ref_has_external_refs(content: &[u8]) -> bool {
    let text = String::from_utf8_lossy(content).to_ascii_lowercase();
    if text.contains("http://") || text.contains("https://") {
        return true;
    }
    let b = text.as_bytes();
    (0..b.len().saturating_sub(3)).any(|i| {
        matches!(b[i], b'"' | b'\'' | b'`') && b[i + 1] == b'/' && b[i + 2] == b'/' && b[i + 3].is_ascii_alphanumeric()
    })
}

pub struct OracleGraph {
    /// Cosine of every node pair from an unfiltered all-pairs pass, keyed `(a, b)` with `a < b`.
    pub all_pairs: HashMap<(usize, usize), f64>,
    /// Pairs that pass kind, external-reference and word-count filters.
    pub survivors: BTreeSet<(usize, usize)>,
}

/// Recomputes every node-pair similarity from raw script bytes. `analyzed_ids`
/// is the document set the vocabulary is built over; each node is represented
/// by its first member.
pub fn oracle_graph(
    data: &scriptclique_core::CorpusData,
    analyzed_ids: &[String],
    nodes: &[scriptclique_core::GraphNode],
    ratio_max: f64,
) -> OracleGraph {
    let docs: Vec<BTreeMap<String, u32>> = analyzed_ids
        .iter()
        .map(|id| ref_tokenize(&String::from_utf8_lossy(data.content(id))))
        .collect();
    let vectors = ref_tfidf(&docs);
    let pos: HashMap<&str, usize> = analyzed_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let rep: Vec<usize> = nodes.iter().map(|n| pos[n.member_scripts[0].as_str()]).collect();
    let words: Vec<u32> = rep.iter().map(|&r| docs[r].values().sum()).collect();
    let ext: Vec<bool> = nodes
        .iter()
        .map(|n| {
            n.member_scripts
                .iter()
                .any(|id| ref_has_external_refs(data.content(id)))
        })
        .collect();
    let mut all_pairs = HashMap::new();
    let mut survivors = BTreeSet::new();
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            all_pairs.insert((a, b), ref_cosine(&vectors[rep[a]], &vectors[rep[b]]));
            let (lo, hi) = (words[a].min(words[b]), words[a].max(words[b]));
            if nodes[a].kind == nodes[b].kind
                && ext[a] == ext[b]
                && lo > 0
                && f64::from(hi) / f64::from(lo) <= ratio_max
            {
                survivors.insert((a, b));
            }
        }
    }
    OracleGraph { all_pairs, survivors }
}

// ---------------------------------------------------------------------------
// Hand-built report cliques

/// An anti-adblock clique whose members are one script per site, each fetched
/// from `source_url` when given.
pub fn anti_clique(id: &str, sites: &[&str], source_url: Option<&str>) -> scriptclique_core::report::ReportClique {
    use scriptclique_core::corpus::ScriptKind;
    use scriptclique_core::profile::{Tag, TagScores};
    use scriptclique_core::report::MemberScript;

    let members: Vec<MemberScript> = sites
        .iter()
        .enumerate()
        .map(|(i, s)| MemberScript {
            script_id: format!("{id}-s{i}"),
            site_id: s.to_string(),
            source_url: source_url.map(str::to_string),
            content_hash: format!("{:064x}", i),
        })
        .collect();
    let source_fqdns = source_url
        .map(|u| url::Url::parse(u).unwrap().host_str().unwrap().to_string())
        .into_iter()
        .collect();
    scriptclique_core::report::ReportClique {
        clique_id: id.to_string(),
        kind: if source_url.is_some() {
            ScriptKind::Downloaded
        } else {
            ScriptKind::Embedded
        },
        node_ids: vec![format!("{id}-n0")],
        sites: sites.iter().map(|s| s.to_string()).collect(),
        n_sites: sites.len(),
        min_internal_score: 1.0,
        members,
        source_fqdns,
        external_fqdns: Default::default(),
        top_keywords: Vec::new(),
        tag: Tag::AntiAdblocker,
        tag_evidence: Vec::new(),
        tag_scores: TagScores {
            anti_adblocker: 3.0,
            tracker: 0.0,
        },
        overlaps_with: Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// Local fixture HTTP server

pub const INLINE_SCRIPT: &str = "var inlineCounter = 0; function bump() { inlineCounter += 1; }";
pub const LIB_JS: &str = "function libInit(opts) { return opts.enabled && window.libReady; }";
pub const APP_JS: &str = "document.addEventListener('load', function () { libInit({ enabled: true }); });";
pub const OTHER_JS: &str = "var other = 'served from the second host name';";
pub const BIG_JS_LEN: usize = 4096;

pub fn big_js() -> String {
    let mut s = String::new();
    while s.len() < BIG_JS_LEN {
        s.push_str("var filler = 1;\n");
    }
    s.truncate(BIG_JS_LEN);
    s
}

/// A minimal HTTP/1.1 server on 127.0.0.1 serving fixed routes until the test
/// process exits.
///
/// Routes: `/page.html` (one inline script and five external ones, among them
/// a 404, a redirect and an oversized body), `/second.html` on the `localhost`
/// name, `/broken.html` (500).
pub struct FixtureServer {
    pub port: u16,
}

impl FixtureServer {
    pub fn start() -> Self {
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                std::thread::spawn(move || serve(stream, port));
            }
        });
        FixtureServer { port }
    }

    pub fn url(&self, host: &str, path: &str) -> String {
        format!("http://{host}:{}{path}", self.port)
    }
}

fn page_html(port: u16) -> String {
    format!(
        r#"<!DOCTYPE html>
<html><head><title>fixture</title>
<script>{INLINE_SCRIPT}</script>
<script src="/lib.js"></script>
<script type="text/javascript" src="js/app.js"></script>
<script src="http://localhost:{port}/other.js"></script>
<script src="/missing.js"></script>
<script src="/moved.js"></script>
<script src="/big.js"></script>
</head><body><!-- <script>commented()</script> --><p>hello</p></body></html>
"#
    )
}

fn serve(mut stream: std::net::TcpStream, port: u16) {
    use std::io::{BufRead, BufReader, Write};
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() {
        return;
    }
    loop {
        let mut line = String::new();
        match reader.read_line(&mut line) {
            Ok(0) | Err(_) => break,
            Ok(_) if line == "\r\n" || line == "\n" => break,
            Ok(_) => {}
        }
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let (status, extra, body): (&str, String, Vec<u8>) = match path.as_str() {
        "/page.html" => (
            "200 OK",
            "Content-Type: text/html\r\n".into(),
            page_html(port).into_bytes(),
        ),
        "/second.html" => (
            "200 OK",
            "Content-Type: text/html\r\n".into(),
            format!("<html><script src=\"/lib.js\"></script><script>{INLINE_SCRIPT}</script></html>").into_bytes(),
        ),
        "/broken.html" => ("500 Internal Server Error", String::new(), b"oops".to_vec()),
        "/lib.js" => ("200 OK", String::new(), LIB_JS.as_bytes().to_vec()),
        "/js/app.js" => ("200 OK", String::new(), APP_JS.as_bytes().to_vec()),
        "/other.js" => ("200 OK", String::new(), OTHER_JS.as_bytes().to_vec()),
        "/moved.js" => ("302 Found", "Location: /lib.js\r\n".into(), Vec::new()),
        "/big.js" => ("200 OK", String::new(), big_js().into_bytes()),
        _ => ("404 Not Found", String::new(), b"not found".to_vec()),
    };
    let head = format!(
        "HTTP/1.1 {status}\r\n{extra}Content-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    let _ = stream.write_all(head.as_bytes());
    let _ = stream.write_all(&body);
    let _ = stream.flush();
}

// ---------------------------------------------------------------------------
// Hand-built similarity graphs

/// A graph whose node `i` lives on `sites[i]`, with every listed edge scored 0.9.
pub fn toy_graph(sites: &[&[&str]], edges: &[(usize, usize)]) -> scriptclique_core::SimilarityGraph {
    let nodes = sites
        .iter()
        .enumerate()
        .map(|(i, s)| scriptclique_core::GraphNode {
            node_id: format!("n{i:06}"),
            member_scripts: vec![format!("s{i:06}")],
            kind: scriptclique_core::corpus::ScriptKind::Embedded,
            sites: s.iter().map(|x| x.to_string()).collect(),
            has_external_refs: false,
            total_terms: 10,
            representative: i,
            members: vec![i],
        })
        .collect();
    let mut edges: Vec<scriptclique_core::SimilarityEdge> = edges
        .iter()
        .map(|&(a, b)| scriptclique_core::SimilarityEdge {
            a: a.min(b),
            b: a.max(b),
            score: 0.9,
        })
        .collect();
    edges.sort_by_key(|e| (e.a, e.b));
    scriptclique_core::SimilarityGraph {
        nodes,
        edges,
        threshold: 0.8,
        audit: scriptclique_core::graph::FilterAudit::default(),
    }
}
