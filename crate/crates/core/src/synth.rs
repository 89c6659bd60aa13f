//! Seeded synthetic corpora with planted script families, used by tests,
//! acceptance checks and benchmarks.
//!
//! A family is one JS-like template rendered on several sites. Each copy has a
//! fraction of its template words replaced by identifiers unique to that copy,
//! and its indentation varies by site so no two copies are byte-identical.
//! Families draw from disjoint vocabularies. Noise scripts are sampled
//! uniformly from a large shared word pool, so they rarely resemble anything.

use std::collections::BTreeSet;

use chrono::{DateTime, TimeZone, Utc};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CorpusBuilder, CorpusData, FetchStatus, ScriptKind};

const SYLLABLES: [&str; 20] = [
    "ka", "lo", "mi", "nu", "pe", "ra", "so", "ti", "vu", "we", "xo", "ze", "bi", "do", "fu", "go", "hy", "ja", "qe",
    "yo",
];

/// Extra content a family carries verbatim in every copy. Mutation never
/// touches these lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flavor {
    Plain,
    AntiAdblock,
    Tracker,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySpec {
    pub n_sites: usize,
    pub kind: ScriptKind,
    pub flavor: Flavor,
    /// Template length in words, before flavor lines.
    pub template_words: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_sites: usize,
    pub families: Vec<FamilySpec>,
    /// Families spanning fewer sites than the default floor, so they yield
    /// graph edges but no retained clique. Values are site counts.
    pub minor_families: Vec<usize>,
    pub noise_scripts: usize,
    pub noise_pool: usize,
    pub noise_words: (usize, usize),
    /// Fraction of template words replaced per copy.
    pub mutation_rate: f64,
}

/// Ground truth for one planted family.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedFamily {
    pub index: usize,
    pub flavor: Flavor,
    pub kind: ScriptKind,
    pub script_ids: Vec<String>,
    pub sites: BTreeSet<String>,
    pub hashes: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub data: CorpusData,
    pub families: Vec<PlantedFamily>,
    pub minor_families: Vec<PlantedFamily>,
}

/// Source host serving downloaded copies of family `fam`.
pub fn family_host(fam: usize, flavor: Flavor) -> String {
    match flavor {
        Flavor::AntiAdblock => "cdn.baitcheck.net".to_string(),
        Flavor::Tracker => "px.countvisit.io".to_string(),
        Flavor::Plain => format!("static{fam}.widgetcdn.com"),
    }
}

pub fn site_name(i: usize) -> String {
    format!("site{i:04}.com")
}

/// A word built from syllables, unique per `(prefix, i)`.
pub fn word(prefix: &str, mut i: usize) -> String {
    let mut s = String::from(prefix);
    s.push('_');
    loop {
        s.push_str(SYLLABLES[i % SYLLABLES.len()]);
        i /= SYLLABLES.len();
        if i == 0 {
            break;
        }
    }
    s
}

fn timestamp() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2016, 4, 1, 0, 0, 0).unwrap()
}

fn flavor_lines(flavor: Flavor) -> &'static [&'static str] {
    match flavor {
        Flavor::Plain => &[],
        Flavor::AntiAdblock => &[
            "var bait = document.createElement(\"div\");",
            "bait.className = \"adsbox\"; bait.id = \"adsbox\";",
            "document.body.appendChild(bait);",
            "if (bait.offsetHeight === 0) { adsbox(); adsbox(); adsbox(); }",
            "function adsbox() { show(\"Please disable your adblocker\", \"adsbox\", \"adsbox\"); }",
        ],
        Flavor::Tracker => &[
            "var uid = readUid(document.cookie);",
            "var pixel = new Image(); pixel.src = \"https://px.countvisit.io/p.gif?uid=\" + uid;",
            "document.cookie = \"uid=\" + uid;",
        ],
    }
}

/// Template words for family `prefix`: each vocabulary word appears one to
/// three times, in random order.
fn template(rng: &mut ChaCha8Rng, prefix: &str, n_words: usize) -> Vec<String> {
    let mut words = Vec::with_capacity(n_words);
    let mut v = 0;
    while words.len() < n_words {
        let reps = rng.gen_range(1..=3).min(n_words - words.len());
        for _ in 0..reps {
            words.push(word(prefix, v));
        }
        v += 1;
    }
    for i in (1..words.len()).rev() {
        let j = rng.gen_range(0..=i);
        words.swap(i, j);
    }
    words
}

/// Renders words as JS-like statements. `indent` varies whitespace only.
fn render(words: &[String], extra: &[&str], indent: usize) -> Vec<u8> {
    let pad = " ".repeat(indent);
    let mut out = String::new();
    for line in extra {
        out.push_str(&pad);
        out.push_str(line);
        out.push('\n');
    }
    for (n, chunk) in words.chunks(5).enumerate() {
        out.push_str(&pad);
        match chunk {
            [a, b, c, d, e] if n % 3 == 0 => out.push_str(&format!("var {a} = {b}.{c}({d}, \"{e}\");")),
            [a, b, c, d, e] if n % 3 == 1 => out.push_str(&format!("function {a}({b}) {{ return {c}[{d}] + {e}; }}")),
            _ => {
                out.push_str(&chunk.join("."));
                out.push_str("();");
            }
        }
        out.push('\n');
    }
    out.into_bytes()
}

fn mutate(rng: &mut ChaCha8Rng, words: &[String], rate: f64, tag: &str) -> Vec<String> {
    let k = (words.len() as f64 * rate).floor() as usize;
    let mut out = words.to_vec();
    for (j, pos) in sample(rng, words.len(), k).into_iter().enumerate() {
        out[pos] = format!("m{tag}_{j}");
    }
    out
}

struct Page {
    index: usize,
}

/// Builds the corpus described by `spec`. The same spec always yields the
/// same bytes.
pub fn generate(spec: &SynthSpec) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = CorpusBuilder::new();
    let pages: Vec<Page> = (0..spec.n_sites)
        .map(|i| {
            let site = site_name(i);
            let url = format!("https://www.{site}/");
            Page {
                index: b.add_page(
                    &site,
                    &url,
                    timestamp(),
                    Some(b"<html></html>".to_vec()),
                    FetchStatus::Ok,
                ),
            }
        })
        .collect();

    let plant = |rng: &mut ChaCha8Rng, b: &mut CorpusBuilder, index: usize, prefix: &str, fam: &FamilySpec| {
        assert!(fam.n_sites <= spec.n_sites, "family spans more sites than exist");
        let words = template(rng, prefix, fam.template_words);
        let extra = flavor_lines(fam.flavor);
        let host = family_host(index, fam.flavor);
        let mut out = PlantedFamily {
            index,
            flavor: fam.flavor,
            kind: fam.kind,
            script_ids: Vec::new(),
            sites: BTreeSet::new(),
            hashes: BTreeSet::new(),
        };
        let mut sites = sample(rng, spec.n_sites, fam.n_sites).into_vec();
        sites.sort_unstable();
        for (copy, site) in sites.into_iter().enumerate() {
            let mutated = mutate(rng, &words, spec.mutation_rate, &format!("{prefix}s{site}"));
            let content = render(&mutated, extra, copy % 7);
            let url = format!("https://{host}/{}/{prefix}.js", site_name(site));
            let source = (fam.kind == ScriptKind::Downloaded).then_some(url.as_str());
            out.hashes.insert(crate::corpus::sha256_hex(&content));
            let id = b.add_script(pages[site].index, fam.kind, source, content, false);
            out.script_ids.push(id);
            out.sites.insert(site_name(site));
        }
        out
    };

    let families: Vec<PlantedFamily> = spec
        .families
        .iter()
        .enumerate()
        .map(|(i, fam)| plant(&mut rng, &mut b, i, &format!("f{i}"), fam))
        .collect();
    let minor_families: Vec<PlantedFamily> = spec
        .minor_families
        .iter()
        .enumerate()
        .map(|(i, &n_sites)| {
            let fam = FamilySpec {
                n_sites,
                kind: if i % 2 == 0 {
                    ScriptKind::Embedded
                } else {
                    ScriptKind::Downloaded
                },
                flavor: Flavor::Plain,
                template_words: 40 + 20 * (i % 5),
            };
            plant(&mut rng, &mut b, i, &format!("g{i}"), &fam)
        })
        .collect();

    for n in 0..spec.noise_scripts {
        let len = rng.gen_range(spec.noise_words.0..=spec.noise_words.1);
        let words: Vec<String> = (0..len).map(|_| word("c", rng.gen_range(0..spec.noise_pool))).collect();
        let with_url = n % 4 == 0;
        let extra: &[&str] = if with_url {
            &["load(\"https://api.noisehost.org/v1\");"]
        } else {
            &[]
        };
        let content = render(&words, extra, 0);
        let site = rng.gen_range(0..spec.n_sites);
        let kind = if n % 3 == 0 {
            ScriptKind::Downloaded
        } else {
            ScriptKind::Embedded
        };
        let url = format!("https://assets.{}/n{n}.js", site_name(site));
        let source = (kind == ScriptKind::Downloaded).then_some(url.as_str());
        b.add_script(pages[site].index, kind, source, content, false);
    }

    SynthCorpus {
        data: b.finish(),
        families,
        minor_families,
    }
}

/// Five vocabulary-disjoint families on ten sites each (one anti-adblock
/// flavored, one tracker flavored), four minor families below the site floor
/// and noise, for 200 scripts over 40 sites.
pub fn planted_spec(seed: u64) -> SynthSpec {
    let fam = |kind, flavor, template_words| FamilySpec {
        n_sites: 10,
        kind,
        flavor,
        template_words,
    };
    SynthSpec {
        seed,
        n_sites: 40,
        families: vec![
            fam(ScriptKind::Embedded, Flavor::Plain, 120),
            fam(ScriptKind::Downloaded, Flavor::AntiAdblock, 160),
            fam(ScriptKind::Embedded, Flavor::Tracker, 90),
            fam(ScriptKind::Downloaded, Flavor::Plain, 300),
            fam(ScriptKind::Embedded, Flavor::Plain, 60),
        ],
        minor_families: vec![2, 3, 4, 5],
        noise_scripts: 200 - 50 - 14,
        noise_pool: 3000,
        noise_words: (10, 300),
        mutation_rate: 0.05,
    }
}

pub fn planted_corpus(seed: u64) -> SynthCorpus {
    generate(&planted_spec(seed))
}

/// 5,000 scripts over 500 sites: forty families spanning 6 to 45 sites,
/// twenty minor families and noise.
pub fn scale_spec(seed: u64) -> SynthSpec {
    let families: Vec<FamilySpec> = (0..40)
        .map(|i| FamilySpec {
            n_sites: 6 + i,
            kind: if i % 3 == 0 {
                ScriptKind::Downloaded
            } else {
                ScriptKind::Embedded
            },
            flavor: match i % 10 {
                4 => Flavor::AntiAdblock,
                7 => Flavor::Tracker,
                _ => Flavor::Plain,
            },
            template_words: 50 + 37 * (i % 17),
        })
        .collect();
    let planted: usize = families.iter().map(|f| f.n_sites).sum();
    let minor: Vec<usize> = (0..20).map(|i| 2 + i % 4).collect();
    let minor_total: usize = minor.iter().sum();
    SynthSpec {
        seed,
        n_sites: 500,
        families,
        minor_families: minor,
        noise_scripts: 5000 - planted - minor_total,
        noise_pool: 20_000,
        noise_words: (10, 1500),
        mutation_rate: 0.05,
    }
}

pub fn scale_corpus(seed: u64) -> SynthCorpus {
    generate(&scale_spec(seed))
}
