use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::DomainGraph;
use crate::objective::{OverlapBatch, Triplet};

/// One epoch of triplets: every train edge once, shuffled and split into
/// `batches` near-equal batches, each paired with a uniformly drawn seen item
/// the user has not interacted with. Users adjacent to every seen item are
/// skipped.
pub fn sample_triplets<R: Rng + ?Sized>(graph: &DomainGraph, batches: usize, rng: &mut R) -> Vec<Vec<Triplet>> {
    let batches = batches.max(1);
    let n_items = graph.population().seen_items;
    let mut edges: Vec<(usize, usize)> = graph.edges().collect();
    edges.shuffle(rng);
    let mut saturated = Vec::new();
    let mut triplets = Vec::with_capacity(edges.len());
    for (u, pos) in edges {
        let known = graph.user_items(u);
        let seen_known = known.iter().filter(|&&i| i < n_items).count();
        if seen_known >= n_items {
            if !saturated.contains(&u) {
                log::warn!("domain {}: user {u} interacted with every item; skipped", graph.tag());
                saturated.push(u);
            }
            continue;
        }
        let neg = loop {
            let cand = rng.gen_range(0..n_items);
            if known.binary_search(&cand).is_err() {
                break cand;
            }
        };
        triplets.push(Triplet { user: u, pos, neg });
    }
    let total = triplets.len();
    let mut out = Vec::with_capacity(batches);
    let mut it = triplets.into_iter();
    for b in 0..batches {
        let size = total / batches + usize::from(b < total % batches);
        out.push(it.by_ref().take(size).collect());
    }
    out
}

/// Up to `size` distinct overlap pairs drawn uniformly.
pub fn sample_overlap<R: Rng + ?Sized>(pairs: &[(usize, usize)], size: usize, rng: &mut R) -> Option<OverlapBatch> {
    let take = size.min(pairs.len());
    if take < 2 {
        return None;
    }
    let mut idx = sample(rng, pairs.len(), take).into_vec();
    idx.sort_unstable();
    Some(OverlapBatch {
        pairs: idx.into_iter().map(|k| pairs[k]).collect(),
    })
}
