use std::cmp::Ordering;

use rayon::prelude::*;

use super::{cosine_with_norms, derive_user_features, FeatureMatrix, SimilarityMode};
use crate::error::{Error, Result};
use crate::graph::DomainGraph;

/// Exact top-K neighbors of every entity of one class, by descending fused
/// similarity with ties broken by ascending id. Entities outside the indexed
/// population have empty lists.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    k: usize,
    neighbors: Vec<Vec<usize>>,
    scores: Vec<Vec<f64>>,
}

impl NeighborIndex {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, id: usize) -> &[usize] {
        self.neighbors.get(id).map_or(&[], Vec::as_slice)
    }

    pub fn scores(&self, id: usize) -> &[f64] {
        self.scores.get(id).map_or(&[], Vec::as_slice)
    }

    /// Pads the index with empty lists up to `total` entities.
    fn padded(mut self, total: usize) -> Self {
        self.neighbors.resize(total, Vec::new());
        self.scores.resize(total, Vec::new());
        self
    }
}

fn by_score_then_id(a: &(f64, usize), b: &(f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Exact all-pairs top-`k` over the rows of `text`/`visual`.
pub fn build_neighbor_index(
    text: &FeatureMatrix,
    visual: &FeatureMatrix,
    mode: SimilarityMode,
    k: usize,
) -> Result<NeighborIndex> {
    if k == 0 {
        return Err(Error::Config("neighbor count K must be at least 1".into()));
    }
    let n = text.n_rows();
    if visual.n_rows() != n {
        return Err(Error::Population(format!(
            "text has {n} rows, visual has {}",
            visual.n_rows()
        )));
    }
    let tn = text.norms();
    let vn = visual.norms();
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&b| b != a)
                .map(|b| {
                    let ct = cosine_with_norms(text.row(a), text.row(b), tn[a], tn[b]);
                    let cv = cosine_with_norms(visual.row(a), visual.row(b), vn[a], vn[b]);
                    (mode.combine(ct, cv), b)
                })
                .collect();
            let take = k.min(cand.len());
            if take > 0 && take < cand.len() {
                cand.select_nth_unstable_by(take - 1, by_score_then_id);
                cand.truncate(take);
            }
            cand.sort_by(by_score_then_id);
            cand.into_iter().map(|(s, id)| (id, s)).unzip()
        })
        .collect();
    let (neighbors, scores) = rows.into_iter().unzip();
    Ok(NeighborIndex { k, neighbors, scores })
}

/// Which entities an index covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexScope {
    /// Seen entities only, as neighbors and as queries (training).
    Seen,
    /// Every entity, including unseen ones (inference).
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainIndex {
    pub users: NeighborIndex,
    pub items: NeighborIndex,
}

/// Builds user and item indices for `graph`. User features are derived from
/// the edges present in `graph`.
pub fn build_domain_index(
    graph: &DomainGraph,
    item_text: &FeatureMatrix,
    item_visual: &FeatureMatrix,
    mode: SimilarityMode,
    k: usize,
    scope: IndexScope,
) -> Result<DomainIndex> {
    let users = derive_user_features(graph, item_text, item_visual)?;
    let pop = graph.population();
    let (nu, ni) = match scope {
        IndexScope::Seen => (pop.seen_users, pop.seen_items),
        IndexScope::All => (pop.users, pop.items),
    };
    let user_index = build_neighbor_index(&users.text.prefix(nu), &users.visual.prefix(nu), mode, k)?;
    let item_index = build_neighbor_index(&item_text.prefix(ni), &item_visual.prefix(ni), mode, k)?;
    Ok(DomainIndex {
        users: user_index.padded(pop.users),
        items: item_index.padded(pop.items),
    })
}
