//! Multimodal item features, derived user features, fused cosine similarity
//! and exact top-K neighbor indices.

mod index;
mod io;

use std::fmt;
use std::str::FromStr;

pub use index::{build_domain_index, build_neighbor_index, DomainIndex, IndexScope, NeighborIndex};
pub use io::{load_features, parse_features, write_features};

use crate::error::{Error, Result};
use crate::graph::DomainGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Modality {
    Text,
    Visual,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Visual => "visual",
        })
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(Modality::Text),
            "visual" => Ok(Modality::Visual),
            _ => Err(Error::Config(format!("unknown modality {s:?}"))),
        }
    }
}

/// One modality's feature vectors, one dense row per entity id.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    modality: Modality,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(modality: Modality, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::Dimension(format!("{} values with dim {dim}", data.len())));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFeature {
                path: "<memory>".into(),
                id: pos / dim,
            });
        }
        Ok(Self { modality, dim, data })
    }

    pub fn from_rows(modality: Modality, rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Dimension("ragged feature rows".into()));
        }
        Self::new(modality, dim, rows.concat())
    }

    pub fn zeros(modality: Modality, rows: usize, dim: usize) -> Self {
        Self {
            modality,
            dim,
            data: vec![0.0; rows * dim],
        }
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.data[id * self.dim..(id + 1) * self.dim]
    }

    fn row_mut(&mut self, id: usize) -> &mut [f64] {
        &mut self.data[id * self.dim..(id + 1) * self.dim]
    }

    /// First `n` rows.
    pub fn prefix(&self, n: usize) -> Self {
        Self {
            modality: self.modality,
            dim: self.dim,
            data: self.data[..n * self.dim].to_vec(),
        }
    }

    pub fn norms(&self) -> Vec<f64> {
        (0..self.n_rows())
            .map(|i| self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect()
    }
}

/// Per-user features: means of interacted items' features.
#[derive(Debug, Clone, PartialEq)]
pub struct UserFeatures {
    pub text: FeatureMatrix,
    pub visual: FeatureMatrix,
}

fn mean_rows(adj: &[Vec<usize>], items: &FeatureMatrix) -> FeatureMatrix {
    let mut out = FeatureMatrix::zeros(items.modality(), adj.len(), items.dim());
    for (u, neighbors) in adj.iter().enumerate() {
        if neighbors.is_empty() {
            continue;
        }
        let row = out.row_mut(u);
        // adjacency lists are sorted, so accumulation runs in ascending id order
        for &i in neighbors {
            for (acc, &v) in row.iter_mut().zip(items.row(i)) {
                *acc += v;
            }
        }
        let n = neighbors.len() as f64;
        row.iter_mut().for_each(|v| *v /= n);
    }
    out
}

/// Averages item features over each user's neighbors in `graph`; users
/// without edges get zero vectors.
pub fn derive_user_features(
    graph: &DomainGraph,
    item_text: &FeatureMatrix,
    item_visual: &FeatureMatrix,
) -> Result<UserFeatures> {
    for m in [item_text, item_visual] {
        if m.n_rows() != graph.n_items() {
            return Err(Error::Population(format!(
                "{} features have {} rows for {} items",
                m.modality(),
                m.n_rows(),
                graph.n_items()
            )));
        }
    }
    Ok(UserFeatures {
        text: mean_rows(graph.user_adjacency(), item_text),
        visual: mean_rows(graph.user_adjacency(), item_visual),
    })
}

/// Text weight `w` of the fused similarity, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeight(f64);

impl FusionWeight {
    pub fn new(w: f64) -> Result<Self> {
        if w > 0.0 && w < 1.0 {
            Ok(Self(w))
        } else {
            Err(Error::Config(format!("fusion weight {w} must lie in (0, 1)")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Which modalities enter the similarity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimilarityMode {
    Fused(FusionWeight),
    TextOnly,
    VisualOnly,
}

impl SimilarityMode {
    #[inline]
    pub fn combine(self, text_cos: f64, visual_cos: f64) -> f64 {
        match self {
            SimilarityMode::Fused(w) => w.0 * text_cos + (1.0 - w.0) * visual_cos,
            SimilarityMode::TextOnly => text_cos,
            SimilarityMode::VisualOnly => visual_cos,
        }
    }
}

#[inline]
pub(crate) fn cosine_with_norms(a: &[f64], b: &[f64], na: f64, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    (d / (na * nb)).clamp(-1.0, 1.0)
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    cosine_with_norms(a, b, norm(a), norm(b))
}

pub fn fused_similarity(a_text: &[f64], a_vis: &[f64], b_text: &[f64], b_vis: &[f64], w: FusionWeight) -> f64 {
    SimilarityMode::Fused(w).combine(cosine(a_text, b_text), cosine(a_vis, b_vis))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{DomainTag, Population};

    #[test]
    fn fusion_weight_bounds() {
        assert!(FusionWeight::new(0.0).is_err());
        assert!(FusionWeight::new(1.0).is_err());
        assert!(FusionWeight::new(0.9).is_ok());
    }

    #[test]
    fn identical_features_have_similarity_one() {
        let w = FusionWeight::new(0.3).unwrap();
        let s = fused_similarity(&[1.0, 2.0], &[3.0, -1.0], &[1.0, 2.0], &[3.0, -1.0], w);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn plug_in_weighting() {
        let w = FusionWeight::new(0.9).unwrap();
        let s = fused_similarity(&[1.0, 0.0], &[1.0, 0.0], &[2.0, 0.0], &[0.0, 5.0], w);
        assert!((s - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_vectors_have_zero_similarity() {
        let w = FusionWeight::new(0.5).unwrap();
        assert_eq!(fused_similarity(&[0.0; 3], &[0.0; 2], &[0.0; 3], &[0.0; 2], w), 0.0);
    }

    fn two_item_features() -> (FeatureMatrix, FeatureMatrix) {
        let t = FeatureMatrix::from_rows(Modality::Text, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let v = FeatureMatrix::from_rows(Modality::Visual, &[vec![2.0], vec![4.0]]).unwrap();
        (t, v)
    }

    #[test]
    fn user_features_are_item_means() {
        let (t, v) = two_item_features();
        let g = DomainGraph::new(DomainTag::A, Population::all_seen(3, 2), &[(0, 0), (1, 0), (1, 1)]).unwrap();
        let uf = derive_user_features(&g, &t, &v).unwrap();
        assert_eq!(uf.text.row(0), t.row(0));
        assert_eq!(uf.text.row(1), &[0.5, 0.5]);
        assert_eq!(uf.visual.row(1), &[3.0]);
        assert_eq!(uf.text.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn user_feature_row_count_checked() {
        let (t, v) = two_item_features();
        let g = DomainGraph::new(DomainTag::A, Population::all_seen(1, 3), &[]).unwrap();
        assert!(derive_user_features(&g, &t, &v).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vecs() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> {
            let v = || proptest::collection::vec(-10.0f64..10.0, 4);
            (v(), v(), v(), v())
        }

        proptest! {
            #[test]
            fn fused_similarity_symmetric_and_scale_invariant(
                (at, av, bt, bv) in vecs(), c in 0.01f64..100.0, w in 0.01f64..0.99
            ) {
                let w = FusionWeight::new(w).unwrap();
                let s = fused_similarity(&at, &av, &bt, &bv, w);
                prop_assert_eq!(s, fused_similarity(&bt, &bv, &at, &av, w));
                let at2: Vec<f64> = at.iter().map(|x| x * c).collect();
                let av2: Vec<f64> = av.iter().map(|x| x * c).collect();
                prop_assert!((s - fused_similarity(&at2, &av2, &bt, &bv, w)).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&s));
            }
        }
    }
}
