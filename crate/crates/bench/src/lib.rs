//! Deterministic workload generators for the benchmarks.

use coref_core::{AnnotationState, Corpus, Document, MentionSpan, Partition};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A complete annotation: `docs` documents of `tokens_per_doc` tokens, about
/// one mention (1-3 tokens) every four tokens, spread over `clusters`
/// clusters.
pub fn synthetic_state(seed: u64, docs: usize, tokens_per_doc: usize, clusters: usize) -> AnnotationState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let documents = (0..docs)
        .map(|d| Document::from_text(format!("doc{d}"), &vec!["tok"; tokens_per_doc].join(" ")))
        .collect();
    let corpus = Corpus::new(documents).expect("non-empty documents");
    let mut groups = vec![Vec::new(); clusters.max(1)];
    for doc in 0..docs {
        let mut at = rng.gen_range(0..4);
        while at < tokens_per_doc {
            let end = (at + rng.gen_range(0..3)).min(tokens_per_doc - 1);
            let k = rng.gen_range(0..groups.len());
            groups[k].push(MentionSpan::new(doc, at, end));
            at = end + rng.gen_range(2..6);
        }
    }
    groups.retain(|g| !g.is_empty());
    AnnotationState::from_partition(corpus, &groups).expect("disjoint spans")
}

/// A key over `n` mentions in `clusters` clusters and a response that moves
/// roughly a fifth of them.
pub fn partition_pair(seed: u64, n: u32, clusters: u32) -> (Partition<u32>, Partition<u32>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let key: Vec<u32> = (0..n).map(|_| rng.gen_range(0..clusters)).collect();
    let response: Vec<u32> = key
        .iter()
        .map(|&k| if rng.gen_bool(0.2) { rng.gen_range(0..clusters + 2) } else { k })
        .collect();
    (group(&key), group(&response))
}

fn group(labels: &[u32]) -> Partition<u32> {
    let top = labels.iter().copied().max().unwrap_or(0) as usize;
    let mut blocks = vec![Vec::new(); top + 1];
    for (m, &k) in labels.iter().enumerate() {
        blocks[k as usize].push(m as u32);
    }
    blocks.retain(|b| !b.is_empty());
    Partition::new(blocks).expect("labels define a partition")
}

/// A square weight matrix for the assignment solver.
pub fn weight_matrix(seed: u64, n: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.gen::<f64>()).collect()).collect();
    rows.shuffle(&mut rng);
    rows
}
