//! Shared test support: seeded generators, fixtures and brute-force oracles.
//!
//! The oracles recompute results straight from their definitions, sharing no
//! code with the library beyond plain data types.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use coref_core::annotation::{AnnotationAction, AnnotationState, AnnotationTask, Target};
use coref_core::corpus::{Corpus, Document, MentionSpan, Token, TokenRef};
use coref_core::ids::{ClusterId, MentionId};
use coref_core::review::{ReviewSession, ReviewStep, SpanDecision};
use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

pub fn fixture(name: &str) -> String {
    std::fs::read_to_string(fixture_path(name)).unwrap_or_else(|e| panic!("fixture {name}: {e}"))
}

pub fn boa_original() -> AnnotationState {
    coref_core::conll::import_conll(&fixture("review_boa.conll")).unwrap().1
}

pub fn boa_script() -> Vec<ReviewStep> {
    serde_json::from_str(&fixture("review_boa_script.json")).unwrap()
}

// ---------------------------------------------------------------------------
// Generators

const VOCAB: &[&str] = &[
    "the", "bank", "it", "they", "Obama", "named", "shot", "he", "a", "report", "BoA", "fired", ",", "said",
    "nomination", "she", "CNN", "mall", "שלום", "東京",
];

/// 1–3 documents, at least one token each, `max_tokens` in total.
pub fn random_corpus(rng: &mut impl Rng, max_tokens: usize) -> Corpus {
    let docs = rng.gen_range(1..=3usize).min(max_tokens);
    let mut budget = rng.gen_range(docs..=max_tokens);
    let mut documents = Vec::with_capacity(docs);
    for d in 0..docs {
        let left = docs - d - 1;
        let len = if left == 0 { budget } else { rng.gen_range(1..=budget - left) };
        budget -= len;
        let tokens = (0..len)
            .map(|_| Token::new(*VOCAB.choose(rng).unwrap()))
            .collect();
        documents.push(Document::new(format!("doc{d}"), tokens));
    }
    Corpus::new(documents).unwrap()
}

/// Non-overlapping spans of 1–3 tokens, between 1 and `max_mentions`.
pub fn random_spans(rng: &mut impl Rng, corpus: &Corpus, max_mentions: usize) -> Vec<MentionSpan> {
    let mut spans = Vec::new();
    let density = rng.gen_range(0.2..0.8);
    for (d, doc) in corpus.documents().iter().enumerate() {
        let mut t = 0;
        while t < doc.tokens.len() && spans.len() < max_mentions {
            if rng.gen_bool(density) {
                let len = rng.gen_range(1..=3usize).min(doc.tokens.len() - t);
                spans.push(MentionSpan::new(d, t, t + len - 1));
                t += len;
            } else {
                t += 1;
            }
        }
    }
    if spans.is_empty() {
        spans.push(MentionSpan::single(0, 0));
    }
    spans.shuffle(rng);
    spans
}

pub fn random_partition(rng: &mut impl Rng, spans: &[MentionSpan]) -> Vec<Vec<MentionSpan>> {
    let k = rng.gen_range(1..=spans.len());
    let mut groups: BTreeMap<usize, Vec<MentionSpan>> = BTreeMap::new();
    for s in spans {
        groups.entry(rng.gen_range(0..k)).or_default().push(*s);
    }
    groups.into_values().collect()
}

pub fn random_task(rng: &mut impl Rng, max_tokens: usize, max_mentions: usize) -> AnnotationTask {
    let corpus = random_corpus(rng, max_tokens);
    let mentions = random_spans(rng, &corpus, max_mentions);
    AnnotationTask { corpus, mentions }
}

pub fn random_complete_state(rng: &mut impl Rng, max_tokens: usize, max_mentions: usize) -> AnnotationState {
    let task = random_task(rng, max_tokens, max_mentions);
    let clusters = random_partition(rng, &task.mentions);
    AnnotationState::from_partition(task.corpus, &clusters).unwrap()
}

fn random_cluster(rng: &mut impl Rng, state: &AnnotationState) -> Option<ClusterId> {
    let ids: Vec<ClusterId> = state.clusters().map(|c| c.id).collect();
    ids.choose(rng).copied()
}

/// A plausible annotator action; some are illegal on purpose.
pub fn random_action(rng: &mut impl Rng, state: &AnnotationState) -> AnnotationAction {
    let roll = rng.gen_range(0..100);
    let current = state.current().map(|m| m.span);
    match (roll, current) {
        (0..=29, _) => AnnotationAction::AssignNew,
        (30..=59, _) => AnnotationAction::Assign {
            cluster: random_cluster(rng, state).filter(|_| rng.gen_bool(0.8)),
        },
        (60..=67, _) => match random_cluster(rng, state) {
            Some(cluster) => AnnotationAction::Select { cluster },
            None => AnnotationAction::AssignNew,
        },
        (68..=79, _) => {
            let mentions: Vec<MentionId> = state.assigned().map(|(id, _)| *id).collect();
            let mention = mentions.choose(rng).copied().unwrap_or(MentionId(99));
            let cluster = match random_cluster(rng, state) {
                Some(c) if rng.gen_bool(0.7) => Target::Existing(c),
                _ => Target::New,
            };
            AnnotationAction::Reassign { mention, cluster }
        }
        (80..=91, Some(span)) => {
            let len = state.corpus().doc_len(span.doc).unwrap();
            let start = rng.gen_range(span.start.saturating_sub(1)..=span.end.min(len - 1));
            let end = rng.gen_range(start..=(start + 3).min(len - 1));
            AnnotationAction::Fix {
                span: MentionSpan::new(span.doc, start, end),
            }
        }
        _ => {
            let doc = rng.gen_range(0..state.corpus().num_documents());
            let len = state.corpus().doc_len(doc).unwrap();
            let start = rng.gen_range(0..len);
            let end = rng.gen_range(start..=(start + 2).min(len - 1));
            AnnotationAction::Add {
                span: MentionSpan::new(doc, start, end),
            }
        }
    }
}

/// Protocol form of an annotation action: `(op, params)`.
pub fn action_message(action: &AnnotationAction) -> (String, serde_json::Map<String, serde_json::Value>) {
    let mut v = serde_json::to_value(action).unwrap();
    let obj = v.as_object_mut().unwrap();
    let op = obj.remove("op").unwrap().as_str().unwrap().to_string();
    (op, obj.clone())
}

// ---------------------------------------------------------------------------
// Review driving

/// Picks a span decision for the current stack top: mostly accept, sometimes
/// split, extend or retarget.
pub fn random_span_decision(rng: &mut impl Rng, session: &ReviewSession) -> SpanDecision {
    let top = session.top().expect("review not finished").span;
    let len = session.reviewed().corpus().doc_len(top.doc).unwrap();
    match rng.gen_range(0..100) {
        0..=54 => SpanDecision::ACCEPT,
        55..=74 if top.end > top.start => {
            SpanDecision::Span(MentionSpan::new(top.doc, top.start, rng.gen_range(top.start..top.end)))
        }
        55..=89 => SpanDecision::Span(MentionSpan::new(
            top.doc,
            top.start,
            rng.gen_range(top.end..=(top.end + 4).min(len - 1)),
        )),
        _ => {
            let start = rng.gen_range(top.start.saturating_sub(2)..=top.end);
            let end = rng.gen_range(start..=(start + 3).min(len - 1));
            SpanDecision::Span(MentionSpan::new(top.doc, start, end))
        }
    }
}

pub fn random_target(rng: &mut impl Rng, session: &ReviewSession) -> Target {
    let candidates = session.current_candidates();
    match rng.gen_range(0..100) {
        0..=44 if !candidates.is_empty() => Target::Existing(candidates[0]),
        0..=59 if !candidates.is_empty() => Target::Existing(*candidates.choose(rng).unwrap()),
        60..=79 => match random_cluster(rng, session.reviewed()) {
            Some(c) => Target::Existing(c),
            None => Target::New,
        },
        _ => Target::New,
    }
}

// ---------------------------------------------------------------------------
// Oracles

/// Candidate clusters for `span`, straight from the definitions: for every
/// token t of the span, the antecedent tokens of t are the tokens of t's
/// original cluster that come before t; each antecedent token covered by a
/// committed reviewer span contributes that span's reviewer cluster.
pub fn oracle_candidates(original: &AnnotationState, reviewed: &AnnotationState, span: MentionSpan) -> Vec<ClusterId> {
    let clusters = original.partition();
    let mut found = BTreeSet::new();
    for t in span.start..=span.end {
        let t = TokenRef::new(span.doc, t);
        for cluster in &clusters {
            let own = cluster.iter().any(|m| m.doc == t.doc && m.start <= t.token && t.token <= m.end);
            if !own {
                continue;
            }
            for m in cluster {
                for a in m.start..=m.end {
                    let a = TokenRef::new(m.doc, a);
                    if a >= t {
                        continue;
                    }
                    for (_, assignment) in reviewed.assigned() {
                        let s = assignment.span;
                        if s.doc == a.doc && s.start <= a.token && a.token <= s.end {
                            found.insert(assignment.cluster);
                        }
                    }
                }
            }
        }
    }
    // cluster ids are issued in creation order
    found.into_iter().sorted_by_key(|c| c.0).collect()
}

/// Stack after fixing `span`: every entry keeps only its tokens past
/// `span.end`.
pub fn oracle_stack_after(before: &[MentionSpan], span: MentionSpan) -> Vec<MentionSpan> {
    before
        .iter()
        .filter_map(|e| {
            let after_doc = e.doc > span.doc;
            if after_doc {
                return Some(*e);
            }
            if e.doc < span.doc || e.end <= span.end {
                return None;
            }
            Some(MentionSpan::new(e.doc, e.start.max(span.end + 1), e.end))
        })
        .collect()
}

fn phi4(a: &BTreeSet<u32>, b: &BTreeSet<u32>) -> f64 {
    2.0 * a.intersection(b).count() as f64 / (a.len() + b.len()) as f64
}

/// Best total φ4 over every injective alignment of the smaller side.
pub fn brute_force_ceaf_total(key: &[BTreeSet<u32>], response: &[BTreeSet<u32>]) -> f64 {
    let (small, large, flip) = if key.len() <= response.len() {
        (key, response, false)
    } else {
        (response, key, true)
    };
    let mut best = 0.0_f64;
    for perm in (0..large.len()).permutations(small.len()) {
        let total: f64 = perm
            .iter()
            .enumerate()
            .map(|(i, &j)| if flip { phi4(&large[j], &small[i]) } else { phi4(&small[i], &large[j]) })
            .sum();
        best = best.max(total);
    }
    best
}

fn owner(p: &[BTreeSet<u32>], m: u32) -> &BTreeSet<u32> {
    p.iter().find(|c| c.contains(&m)).expect("mention in partition")
}

/// B³ (precision, recall) by per-mention enumeration.
pub fn naive_b_cubed(key: &[BTreeSet<u32>], response: &[BTreeSet<u32>]) -> (f64, f64) {
    let mentions: Vec<u32> = key.iter().flatten().copied().collect();
    let n = mentions.len() as f64;
    let (mut p, mut r) = (0.0, 0.0);
    for &m in &mentions {
        let k = owner(key, m);
        let s = owner(response, m);
        let common = k.intersection(s).count() as f64;
        r += common / k.len() as f64;
        p += common / s.len() as f64;
    }
    (p / n, r / n)
}

/// MUC (precision, recall) by counting links: a spanning forest of each
/// cluster needs |S|−1 links; the links that survive under the other
/// partition number |S| minus the pieces S is cut into.
pub fn naive_muc(key: &[BTreeSet<u32>], response: &[BTreeSet<u32>]) -> (f64, f64) {
    let side = |of: &[BTreeSet<u32>], by: &[BTreeSet<u32>]| {
        let mut num = 0usize;
        let mut den = 0usize;
        for s in of {
            let pieces = by.iter().filter(|c| !c.is_disjoint(s)).count();
            num += s.len() - pieces;
            den += s.len() - 1;
        }
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    (side(response, key), side(key, response))
}

/// Random set partition of `0..n` into at most `max_clusters` blocks.
pub fn random_set_partition(rng: &mut impl Rng, n: u32, max_clusters: usize) -> Vec<BTreeSet<u32>> {
    let k = rng.gen_range(1..=max_clusters);
    let mut blocks = vec![BTreeSet::new(); k];
    for m in 0..n {
        blocks[rng.gen_range(0..k)].insert(m);
    }
    blocks.retain(|b| !b.is_empty());
    blocks
}

// ---------------------------------------------------------------------------
// CoNLL framing grammar

fn is_mark(item: &str) -> bool {
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if let Some(inner) = item.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
        digits(inner)
    } else if let Some(inner) = item.strip_prefix('(') {
        digits(inner)
    } else if let Some(inner) = item.strip_suffix(')') {
        digits(inner)
    } else {
        false
    }
}

/// Checks the exact written layout: header, consecutive tab-separated rows,
/// blank line, footer; every line newline-terminated.
pub fn check_framing(text: &str) -> Result<usize, String> {
    if !text.ends_with('\n') {
        return Err("missing final newline".into());
    }
    let lines: Vec<&str> = text[..text.len() - 1].split('\n').collect();
    let mut i = 0;
    let mut docs = 0;
    while i < lines.len() {
        let header = lines[i];
        let rest = header
            .strip_prefix("#begin document (")
            .ok_or_else(|| format!("line {}: bad header {header:?}", i + 1))?;
        let (id, part) = rest
            .rsplit_once("); part ")
            .ok_or_else(|| format!("line {}: bad header {header:?}", i + 1))?;
        if part.len() != 3 || !part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("line {}: part must be three digits", i + 1));
        }
        let part_no: u32 = part.parse().unwrap();
        i += 1;
        let mut index = 0;
        while i < lines.len() && !lines[i].is_empty() {
            let cols: Vec<&str> = lines[i].split('\t').collect();
            if cols.len() != 5 {
                return Err(format!("line {}: expected 5 columns", i + 1));
            }
            if cols[0] != id || cols[1] != part_no.to_string() || cols[2] != index.to_string() || cols[3].is_empty() {
                return Err(format!("line {}: bad row {:?}", i + 1, lines[i]));
            }
            if cols[4] != "-" && !cols[4].split('|').all(is_mark) {
                return Err(format!("line {}: bad coref field {:?}", i + 1, cols[4]));
            }
            index += 1;
            i += 1;
        }
        if index == 0 {
            return Err(format!("document {id} has no rows"));
        }
        if lines.get(i) != Some(&"") || lines.get(i + 1) != Some(&"#end document") {
            return Err(format!("line {}: expected blank line then #end document", i + 1));
        }
        i += 2;
        docs += 1;
    }
    Ok(docs)
}

/// Partition as a set of span sets, independent of ids.
pub fn span_sets(state: &AnnotationState) -> BTreeSet<BTreeSet<MentionSpan>> {
    state.partition().into_iter().map(|c| c.into_iter().collect()).collect()
}

// ---------------------------------------------------------------------------
// Randomised review runs

fn random_reassign(rng: &mut impl Rng, session: &mut ReviewSession) {
    let mentions: Vec<MentionId> = session.reviewed().assigned().map(|(id, _)| *id).collect();
    if let Some(&mention) = mentions.choose(rng) {
        let target = match random_cluster(rng, session.reviewed()) {
            Some(c) if rng.gen_bool(0.7) => Target::Existing(c),
            _ => Target::New,
        };
        let _ = session.reassign(mention, target);
    }
}

fn check_candidates(session: &ReviewSession, span: MentionSpan, step: usize) -> Result<(), String> {
    let got = session.current_candidates().to_vec();
    let want = oracle_candidates(session.original(), session.reviewed(), span);
    if got == want {
        Ok(())
    } else {
        Err(format!("step {step}: candidates for {span} were {got:?}, oracle says {want:?}"))
    }
}

/// Reviews `original` with random decisions, checking candidates and stack
/// edits against the oracles at every step. Returns the number of checked
/// steps.
pub fn random_review_checked(rng: &mut impl Rng, original: AnnotationState) -> Result<usize, String> {
    let mut session = ReviewSession::new(original).map_err(|e| e.to_string())?;
    let mut step = 0;
    while !session.is_complete() {
        step += 1;
        if step > 500 {
            return Err("review did not terminate".into());
        }
        if rng.gen_bool(0.1) {
            random_reassign(rng, &mut session);
        }
        let before: BTreeSet<MentionSpan> = session.stack().map(|e| e.span).collect();
        let decision = random_span_decision(rng, &session);
        if session.review_span(decision).is_err() {
            session.review_span(SpanDecision::ACCEPT).map_err(|e| format!("step {step}: accept failed: {e}"))?;
        }
        let span = session.current_span().ok_or("no span under review")?;
        let after: BTreeSet<MentionSpan> = session.stack().map(|e| e.span).collect();
        let want: BTreeSet<MentionSpan> =
            oracle_stack_after(&before.iter().copied().collect::<Vec<_>>(), span).into_iter().collect();
        if after != want {
            return Err(format!("step {step}: stack after {span} is {after:?}, oracle says {want:?}"));
        }
        check_candidates(&session, span, step)?;
        if rng.gen_bool(0.1) {
            random_reassign(rng, &mut session);
            check_candidates(&session, span, step)?;
        }
        let target = random_target(rng, &session);
        session
            .select_cluster(target)
            .map_err(|e| format!("step {step}: select {target:?} failed: {e}"))?;
    }
    let reviewed = session.reviewed();
    reviewed.check_invariants().map_err(|e| e.to_string())?;
    let mut spans: Vec<MentionSpan> = reviewed.assigned().map(|(_, a)| a.span).collect();
    if let Some((a, b)) = coref_core::corpus::first_overlap(&mut spans) {
        return Err(format!("reviewed spans {a} and {b} overlap"));
    }
    Ok(step)
}
