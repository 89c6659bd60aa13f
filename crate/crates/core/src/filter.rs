//! Adblock filter-list parsing and request blocking decisions.
//!
//! Supported network-rule syntax: plain substring patterns, `|` start anchor,
//! `||` domain anchor, `*` wildcard, `^` separator, `@@` exceptions and the
//! options `$script`, `$third-party`, `$~third-party` and `$domain=a.com|~b.com`.
//! Everything else is reported as skipped with a reason, never half-parsed.
//!
//! URL hosts compare case-insensitively; everything after the host is
//! case-sensitive.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use url::{Position, Url};

use crate::domain::registrable_domain;
use crate::error::{Error, Result};
use crate::profile::{vendor_domains, Tag};
use crate::report::ReportClique;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Block,
    Exception,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    None,
    DomainAnchor,
    StartAnchor,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Atom {
    Literal(String),
    Wildcard,
    Separator,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DomainConstraint {
    pub include: BTreeSet<String>,
    pub exclude: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuleOptions {
    pub script_only: bool,
    /// `Some(true)` for `$third-party`, `Some(false)` for `$~third-party`.
    pub third_party: Option<bool>,
    pub domains: Option<DomainConstraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FilterRule {
    pub raw: String,
    pub action: Action,
    pub anchor: Anchor,
    pub pattern: Vec<Atom>,
    pub options: RuleOptions,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    Comment,
    SectionHeader,
    ElementHiding,
    Unsupported(String),
}

impl std::fmt::Display for SkipReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SkipReason::Comment => f.write_str("comment"),
            SkipReason::SectionHeader => f.write_str("section header"),
            SkipReason::ElementHiding => f.write_str("element hiding rule"),
            SkipReason::Unsupported(why) => write!(f, "unsupported: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedLine {
    pub line_no: usize,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedList {
    pub rules: Vec<FilterRule>,
    pub skipped: Vec<SkippedLine>,
}

fn unsupported(why: impl Into<String>) -> SkipReason {
    SkipReason::Unsupported(why.into())
}

fn parse_options(text: &str) -> Result<RuleOptions, SkipReason> {
    let mut opts = RuleOptions::default();
    for opt in text.split(',') {
        match opt {
            "script" => opts.script_only = true,
            "third-party" | "~third-party" => {
                let want = opt == "third-party";
                if opts.third_party.is_some_and(|t| t != want) {
                    return Err(unsupported("conflicting third-party options"));
                }
                opts.third_party = Some(want);
            }
            _ if opt.starts_with("domain=") => {
                let mut dc = DomainConstraint::default();
                for d in opt["domain=".len()..].split('|') {
                    let (set, name) = match d.strip_prefix('~') {
                        Some(rest) => (&mut dc.exclude, rest),
                        None => (&mut dc.include, d),
                    };
                    if name.is_empty() || name.contains(|c: char| c == '/' || c.is_whitespace()) {
                        return Err(unsupported(format!("bad domain option entry {d:?}")));
                    }
                    set.insert(name.to_ascii_lowercase());
                }
                opts.domains = Some(dc);
            }
            other => return Err(unsupported(format!("option ${other}"))),
        }
    }
    Ok(opts)
}

fn parse_pattern(text: &str) -> Vec<Atom> {
    let mut atoms = Vec::new();
    let mut lit = String::new();
    for c in text.chars() {
        let atom = match c {
            '*' => Atom::Wildcard,
            '^' => Atom::Separator,
            _ => {
                lit.push(c);
                continue;
            }
        };
        if !lit.is_empty() {
            atoms.push(Atom::Literal(std::mem::take(&mut lit)));
        }
        if !(atom == Atom::Wildcard && atoms.last() == Some(&Atom::Wildcard)) {
            atoms.push(atom);
        }
    }
    if !lit.is_empty() {
        atoms.push(Atom::Literal(lit));
    }
    atoms
}

/// Parses a single non-empty line.
pub fn parse_rule(line: &str) -> Result<FilterRule, SkipReason> {
    let line = line.trim();
    if line.starts_with('!') {
        return Err(SkipReason::Comment);
    }
    if line.starts_with('[') {
        return Err(SkipReason::SectionHeader);
    }
    if ["##", "#@#", "#?#", "#$#"].iter().any(|m| line.contains(m)) {
        return Err(SkipReason::ElementHiding);
    }
    if line.contains(char::is_whitespace) {
        return Err(unsupported("whitespace in rule"));
    }
    let (action, body) = match line.strip_prefix("@@") {
        Some(rest) => (Action::Exception, rest),
        None => (Action::Block, line),
    };
    let (pattern_text, options) = match body.rfind('$') {
        Some(i) => (&body[..i], parse_options(&body[i + 1..])?),
        None => (body, RuleOptions::default()),
    };
    if pattern_text.len() > 1 && pattern_text.starts_with('/') && pattern_text.ends_with('/') {
        return Err(unsupported("regular expression rule"));
    }
    let (anchor, rest) = if let Some(r) = pattern_text.strip_prefix("||") {
        (Anchor::DomainAnchor, r)
    } else if let Some(r) = pattern_text.strip_prefix('|') {
        (Anchor::StartAnchor, r)
    } else {
        (Anchor::None, pattern_text)
    };
    if rest.ends_with('|') {
        return Err(unsupported("end anchor"));
    }
    if rest.contains('|') {
        return Err(unsupported("'|' inside pattern"));
    }
    let pattern = parse_pattern(rest);
    if pattern.iter().all(|a| *a == Atom::Wildcard) {
        return Err(unsupported("empty pattern"));
    }
    Ok(FilterRule {
        raw: line.to_string(),
        action,
        anchor,
        pattern,
        options,
    })
}

/// Parses a whole list. Blank lines are ignored; every other line becomes a rule
/// or a skip entry (1-based line numbers).
pub fn parse_filter_list(text: &[u8]) -> ParsedList {
    let text = String::from_utf8_lossy(text);
    let mut out = ParsedList::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match parse_rule(line) {
            Ok(rule) => out.rules.push(rule),
            Err(reason) => out.skipped.push(SkippedLine { line_no: i + 1, reason }),
        }
    }
    out
}

impl FilterRule {
    /// Canonical filter text for this rule's components.
    pub fn to_filter_string(&self) -> String {
        let mut s = String::new();
        if self.action == Action::Exception {
            s.push_str("@@");
        }
        match self.anchor {
            Anchor::DomainAnchor => s.push_str("||"),
            Anchor::StartAnchor => s.push('|'),
            Anchor::None => {}
        }
        for a in &self.pattern {
            match a {
                Atom::Literal(l) => s.push_str(l),
                Atom::Wildcard => s.push('*'),
                Atom::Separator => s.push('^'),
            }
        }
        let mut opts = Vec::new();
        if self.options.script_only {
            opts.push("script".to_string());
        }
        match self.options.third_party {
            Some(true) => opts.push("third-party".into()),
            Some(false) => opts.push("~third-party".into()),
            None => {}
        }
        if let Some(dc) = &self.options.domains {
            let mut d = String::from("domain=");
            let entries = dc
                .include
                .iter()
                .cloned()
                .chain(dc.exclude.iter().map(|e| format!("~{e}")));
            for (i, e) in entries.enumerate() {
                if i > 0 {
                    d.push('|');
                }
                d.push_str(&e);
            }
            opts.push(d);
        }
        if !opts.is_empty() {
            let _ = write!(s, "${}", opts.join(","));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceType {
    Script,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestContext {
    pub url: Url,
    /// Registrable domain of the embedding page.
    pub page_site: String,
    pub resource_type: ResourceType,
}

impl RequestContext {
    pub fn new(url: &str, page_site: &str, resource_type: ResourceType) -> Result<Self> {
        let url = Url::parse(url).map_err(|e| Error::InvalidArgument(format!("request url {url:?}: {e}")))?;
        if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
            return Err(Error::InvalidArgument(format!("request url {url} is not http(s)")));
        }
        Ok(RequestContext {
            url,
            page_site: page_site.to_ascii_lowercase(),
            resource_type,
        })
    }

    fn host_span(&self) -> (usize, usize) {
        let start = self.url[..Position::BeforeHost].len();
        let end = self.url[..Position::AfterHost].len();
        (start, end)
    }
}

fn is_separator(b: u8) -> bool {
    !(b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.' | b'%'))
}

fn literal_at(url: &[u8], host_end: usize, pos: usize, lit: &[u8]) -> bool {
    if pos + lit.len() > url.len() {
        return false;
    }
    url[pos..pos + lit.len()]
        .iter()
        .zip(lit)
        .enumerate()
        .all(|(k, (&u, &l))| {
            if pos + k < host_end {
                u.eq_ignore_ascii_case(&l)
            } else {
                u == l
            }
        })
}

/// Runs the pattern from every start position in `starts`; true if any run
/// consumes all atoms. Reachable positions are tracked as a set, so wildcards
/// cost linear time rather than backtracking.
fn pattern_matches(pattern: &[Atom], url: &[u8], host_end: usize, starts: &[usize]) -> bool {
    let n = url.len();
    let mut reach = vec![false; n + 1];
    for &s in starts {
        reach[s] = true;
    }
    for atom in pattern {
        let mut next = vec![false; n + 1];
        let mut any = false;
        match atom {
            Atom::Wildcard => {
                if let Some(first) = reach.iter().position(|&r| r) {
                    next[first..].iter_mut().for_each(|r| *r = true);
                    any = true;
                }
            }
            Atom::Separator => {
                for p in (0..=n).filter(|&p| reach[p]) {
                    if p == n {
                        next[p] = true;
                        any = true;
                    } else if is_separator(url[p]) {
                        next[p + 1] = true;
                        any = true;
                    }
                }
            }
            Atom::Literal(lit) => {
                let lit = lit.as_bytes();
                for p in (0..=n).filter(|&p| reach[p]) {
                    if literal_at(url, host_end, p, lit) {
                        next[p + lit.len()] = true;
                        any = true;
                    }
                }
            }
        }
        if !any {
            return false;
        }
        reach = next;
    }
    true
}

fn domain_matches(page_site: &str, domain: &str) -> bool {
    page_site == domain || page_site.strip_suffix(domain).is_some_and(|p| p.ends_with('.'))
}

fn options_match(opts: &RuleOptions, ctx: &RequestContext) -> bool {
    if opts.script_only && ctx.resource_type != ResourceType::Script {
        return false;
    }
    if let Some(want_third) = opts.third_party {
        let host = ctx.url.host_str().unwrap_or("");
        let is_third = registrable_domain(host) != ctx.page_site;
        if is_third != want_third {
            return false;
        }
    }
    if let Some(dc) = &opts.domains {
        if !dc.include.is_empty() && !dc.include.iter().any(|d| domain_matches(&ctx.page_site, d)) {
            return false;
        }
        if dc.exclude.iter().any(|d| domain_matches(&ctx.page_site, d)) {
            return false;
        }
    }
    true
}

/// Whether `rule` applies to the request, ignoring its action.
pub fn matches(rule: &FilterRule, ctx: &RequestContext) -> bool {
    if !options_match(&rule.options, ctx) {
        return false;
    }
    let url = ctx.url.as_str().as_bytes();
    let (host_start, host_end) = ctx.host_span();
    let starts: Vec<usize> = match rule.anchor {
        Anchor::StartAnchor => vec![0],
        Anchor::None => (0..=url.len()).collect(),
        Anchor::DomainAnchor => std::iter::once(host_start)
            .chain((host_start..host_end).filter(|&p| url[p] == b'.').map(|p| p + 1))
            .filter(|&p| p < host_end)
            .collect(),
    };
    pattern_matches(&rule.pattern, url, host_end, &starts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Blocked,
    Allowed,
}

/// Outcome of [`decide`]. `witness` indexes the rule list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub verdict: Verdict,
    pub witness: Option<usize>,
}

fn url_tokens(url: &str) -> impl Iterator<Item = String> + '_ {
    url.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_ascii_lowercase)
}

/// Alphanumeric runs of the pattern that must appear as whole URL tokens in any
/// matching URL: bounded on both sides by a non-alphanumeric literal byte, a
/// separator, or the anchor.
fn required_tokens(rule: &FilterRule) -> Vec<String> {
    let mut out = Vec::new();
    for (i, atom) in rule.pattern.iter().enumerate() {
        let Atom::Literal(lit) = atom else { continue };
        let bytes = lit.as_bytes();
        let left_edge_bounded = match i.checked_sub(1).map(|j| &rule.pattern[j]) {
            None => rule.anchor != Anchor::None,
            Some(Atom::Separator) => true,
            _ => false,
        };
        let right_edge_bounded = matches!(rule.pattern.get(i + 1), Some(Atom::Separator));
        let mut k = 0;
        while k < bytes.len() {
            if !bytes[k].is_ascii_alphanumeric() {
                k += 1;
                continue;
            }
            let start = k;
            while k < bytes.len() && bytes[k].is_ascii_alphanumeric() {
                k += 1;
            }
            let left_ok = start > 0 || left_edge_bounded;
            let right_ok = k < bytes.len() || right_edge_bounded;
            if left_ok && right_ok {
                out.push(lit[start..k].to_ascii_lowercase());
            }
        }
    }
    out
}

/// Rules indexed by a required URL token, for fast decisions over long lists.
#[derive(Debug, Clone, Default)]
pub struct FilterSet {
    rules: Vec<FilterRule>,
    by_token: HashMap<String, Vec<usize>>,
    untokenized: Vec<usize>,
}

impl FilterSet {
    pub fn new(rules: Vec<FilterRule>) -> Self {
        let mut by_token: HashMap<String, Vec<usize>> = HashMap::new();
        let mut untokenized = Vec::new();
        for (i, r) in rules.iter().enumerate() {
            match required_tokens(r).into_iter().max_by_key(|t| t.len()) {
                Some(tok) => by_token.entry(tok).or_default().push(i),
                None => untokenized.push(i),
            }
        }
        FilterSet {
            rules,
            by_token,
            untokenized,
        }
    }

    pub fn rules(&self) -> &[FilterRule] {
        &self.rules
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    /// Blocked iff some block rule matches and no exception does. The witness is
    /// the first matching exception when one overrides a block, otherwise the
    /// first matching block rule, otherwise none.
    pub fn decide(&self, ctx: &RequestContext) -> Decision {
        let mut candidates: Vec<usize> = self.untokenized.clone();
        for tok in url_tokens(ctx.url.as_str()) {
            if let Some(ids) = self.by_token.get(&tok) {
                candidates.extend_from_slice(ids);
            }
        }
        candidates.sort_unstable();
        candidates.dedup();

        let mut first_block = None;
        let mut first_exception = None;
        for &i in &candidates {
            let rule = &self.rules[i];
            let slot = match rule.action {
                Action::Block => &mut first_block,
                Action::Exception => &mut first_exception,
            };
            if slot.is_none() && matches(rule, ctx) {
                *slot = Some(i);
                if first_block.is_some() && first_exception.is_some() {
                    break;
                }
            }
        }
        match (first_block, first_exception) {
            (Some(_), Some(e)) => Decision {
                verdict: Verdict::Allowed,
                witness: Some(e),
            },
            (Some(b), None) => Decision {
                verdict: Verdict::Blocked,
                witness: Some(b),
            },
            (None, _) => Decision {
                verdict: Verdict::Allowed,
                witness: None,
            },
        }
    }
}

pub fn decide(rules: &[FilterRule], ctx: &RequestContext) -> Decision {
    FilterSet::new(rules.to_vec()).decide(ctx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CounterblockDecision {
    Blocked,
    Allowed,
    NotApplicable,
}

impl CounterblockDecision {
    pub fn as_str(self) -> &'static str {
        match self {
            CounterblockDecision::Blocked => "blocked",
            CounterblockDecision::Allowed => "allowed",
            CounterblockDecision::NotApplicable => "not_applicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterblockRow {
    pub vendor_domain: String,
    pub list_name: String,
    pub decision: CounterblockDecision,
    pub witness_rule: Option<String>,
}

fn clique_decision(clique: &ReportClique, list: &FilterSet) -> (CounterblockDecision, Option<String>) {
    let mut allowed_witness = None;
    let mut any_request = false;
    for m in &clique.members {
        let Some(url) = &m.source_url else { continue };
        let Ok(ctx) = RequestContext::new(url, &m.site_id, ResourceType::Script) else {
            continue;
        };
        any_request = true;
        let d = list.decide(&ctx);
        let witness = d.witness.map(|i| list.rules()[i].raw.clone());
        if d.verdict == Verdict::Blocked {
            return (CounterblockDecision::Blocked, witness);
        }
        if allowed_witness.is_none() {
            allowed_witness = witness;
        }
    }
    if any_request {
        (CounterblockDecision::Allowed, allowed_witness)
    } else {
        (CounterblockDecision::NotApplicable, None)
    }
}

/// Vendor × list matrix over anti-adblock cliques. A clique is blocked by a list
/// when any member's script request would be; a vendor is blocked when any of
/// its cliques is. Cliques without source URLs are not applicable.
pub fn counterblock_report(cliques: &[ReportClique], lists: &[(String, FilterSet)]) -> Vec<CounterblockRow> {
    let mut cells: BTreeMap<(String, String), (CounterblockDecision, Option<String>)> = BTreeMap::new();
    let mut anti: Vec<&ReportClique> = cliques.iter().filter(|c| c.tag == Tag::AntiAdblocker).collect();
    anti.sort_by(|a, b| a.clique_id.cmp(&b.clique_id));
    for clique in anti {
        let vendors = vendor_domains(clique);
        for (name, list) in lists {
            let (decision, witness) = clique_decision(clique, list);
            for v in &vendors {
                let cell = cells
                    .entry((v.clone(), name.clone()))
                    .or_insert((CounterblockDecision::NotApplicable, None));
                // Blocked < Allowed < NotApplicable: keep the strongest outcome seen
                if decision < cell.0 || (decision == cell.0 && cell.1.is_none() && witness.is_some()) {
                    *cell = (decision, witness.clone());
                }
            }
        }
    }
    cells
        .into_iter()
        .map(
            |((vendor_domain, list_name), (decision, witness_rule))| CounterblockRow {
                vendor_domain,
                list_name,
                decision,
                witness_rule,
            },
        )
        .collect()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn counterblock_csv(rows: &[CounterblockRow]) -> String {
    let mut out = String::from("vendor_domain,list_name,decision,witness_rule\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            csv_field(&r.vendor_domain),
            csv_field(&r.list_name),
            r.decision.as_str(),
            csv_field(r.witness_rule.as_deref().unwrap_or(""))
        );
    }
    out
}
