//! Quick invariant suite run by `micrec selftest`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encoder::{Checkpoint, DomainEncoder, EncoderConfig, ModelParams, Representations};
use crate::error::Result;
use crate::eval::{metrics_at, rank_items};
use crate::features::{build_domain_index, build_neighbor_index, fused_similarity, FeatureMatrix, FusionWeight, IndexScope, Modality, SimilarityMode};
use crate::graph::{DomainGraph, DomainTag, Population};
use crate::numeric::{grad_check, spmm, DenseMatrix, GradCheckConfig, NormalizedAdjacency};
use crate::objective::{joint_loss, Gradients, JointInputs, LossWeights, OverlapBatch, Triplet, TripletBatch};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn random_graph(tag: DomainTag, users: usize, items: usize, rng: &mut ChaCha8Rng) -> Result<DomainGraph> {
    let mut edges = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.gen::<f64>() < 0.4 || i == u % items {
                edges.push((u, i));
            }
        }
    }
    DomainGraph::new(tag, Population::all_seen(users, items), &edges)?.with_templates((0..users).collect(), (0..items).collect())
}

fn random_features(rows: usize, dim: usize, modality: Modality, rng: &mut ChaCha8Rng) -> Result<FeatureMatrix> {
    FeatureMatrix::new(modality, dim, (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn triplets(g: &DomainGraph, rng: &mut ChaCha8Rng) -> Vec<Triplet> {
    let mut out = Vec::new();
    for (u, pos) in g.edges() {
        let free: Vec<usize> = (0..g.n_items()).filter(|&i| !g.has_edge(u, i)).collect();
        if !free.is_empty() {
            out.push(Triplet {
                user: u,
                pos,
                neg: free[rng.gen_range(0..free.len())],
            });
        }
    }
    out
}

/// Joint loss through both encoders against finite differences.
fn end_to_end_gradient(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EncoderConfig {
        dim: 4,
        k: 2,
        layers: 2,
        dropout_p: 0.0,
    };
    let mut encoders = Vec::new();
    for tag in DomainTag::BOTH {
        let g = random_graph(tag, 5, 6, &mut rng)?;
        let text = random_features(6, 3, Modality::Text, &mut rng)?;
        let visual = random_features(6, 2, Modality::Visual, &mut rng)?;
        let mode = SimilarityMode::Fused(FusionWeight::new(0.9)?);
        let idx = build_domain_index(&g, &text, &visual, mode, cfg.k, IndexScope::All)?;
        encoders.push(DomainEncoder::<f64>::new(g, Some(idx), cfg)?);
    }
    let batch = TripletBatch {
        domains: [triplets(encoders[0].graph(), &mut rng), triplets(encoders[1].graph(), &mut rng)],
    };
    let overlap = OverlapBatch {
        pairs: vec![(0, 0), (1, 1), (2, 2)],
    };
    let weights = LossWeights {
        lambda: 1e-2,
        beta: 0.5,
        gamma: 1.0,
        tau: 0.5,
        include_positive_in_denominator: false,
    };
    let alpha = 0.7;
    let params = ModelParams::<f64>::init(4, [(5, 6), (5, 6)], &mut rng);

    let forward = |p: &ModelParams<f64>, grads: Option<&mut Gradients<f64>>| -> Result<(f64, [Representations<f64>; 2])> {
        let ra = encoders[0].encode_infer(p.domain(DomainTag::A), alpha)?;
        let rb = encoders[1].encode_infer(p.domain(DomainTag::B), alpha)?;
        let inputs = JointInputs {
            reps: [&ra, &rb],
            graphs: [encoders[0].graph(), encoders[1].graph()],
            batch: &batch,
            overlap: Some(&overlap),
            params: p,
            weights: &weights,
        };
        let l = joint_loss(&inputs, grads)?.total;
        Ok((l, [ra, rb]))
    };

    let (_, reps) = forward(&params, None)?;
    let mut grads = Gradients::zeros(&params, [&reps[0], &reps[1]]);
    forward(&params, Some(&mut grads))?;
    for (d, enc) in encoders.iter().enumerate() {
        let trace = Default::default();
        enc.backward(&trace, &grads.reps[d], alpha, &mut grads.params.domains[d])?;
    }
    let flat = params.to_flat();
    let analytic = grads.params.to_flat();
    let mut probe = params.clone();
    let err = grad_check(
        |x| {
            probe.set_flat(x)?;
            Ok(forward(&probe, None)?.0)
        },
        &flat,
        &analytic,
        GradCheckConfig {
            eps: 1e-5,
            max_coords: 96,
        },
        &mut rng,
    )?;
    Ok(err)
}

fn propagation_oracle(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_graph(DomainTag::A, 6, 7, &mut rng)?;
    let adj = NormalizedAdjacency::<f64>::from_user_adjacency(g.user_adjacency(), g.n_items())?;
    let n = adj.n_nodes();
    let x = DenseMatrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
    let layers = 3;
    let fast = crate::encoder::propagate(&x, &adj, layers)?;
    let dense = adj.to_dense();
    let mut acc = x.clone();
    let mut h = x.clone();
    for _ in 0..layers {
        h = dense.matmul(&h)?;
        acc.add_scaled(&h, 1.0);
    }
    acc.scale(1.0 / (layers + 1) as f64);
    let sparse_once = spmm(&adj, &x)?;
    let dense_once = dense.matmul(&x)?;
    let diff = |a: &DenseMatrix<f64>, b: &DenseMatrix<f64>| {
        a.as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max)
    };
    Ok(diff(&fast, &acc).max(diff(&sparse_once, &dense_once)))
}

fn index_oracle(seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 30;
    let text = random_features(n, 4, Modality::Text, &mut rng)?;
    let visual = random_features(n, 3, Modality::Visual, &mut rng)?;
    let w = FusionWeight::new(0.9)?;
    let k = 3;
    let idx = build_neighbor_index(&text, &visual, SimilarityMode::Fused(w), k)?;
    for q in 0..n {
        let mut all: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != q)
            .map(|j| (fused_similarity(text.row(q), visual.row(q), text.row(j), visual.row(j), w), j))
            .collect();
        all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let want: Vec<usize> = all.iter().take(k).map(|x| x.1).collect();
        if idx.neighbors(q) != want.as_slice() {
            return Ok(false);
        }
    }
    Ok(true)
}

fn metric_invariants(seed: u64) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..50 {
        let n_items = rng.gen_range(5..40);
        let scores: Vec<f64> = (0..n_items).map(|_| rng.gen_range(0..4) as f64).collect();
        let ranking = rank_items(&scores, &[], n_items);
        let relevant: Vec<usize> = (0..n_items).filter(|_| rng.gen::<f64>() < 0.3).collect();
        if relevant.is_empty() {
            continue;
        }
        let mut last = 0.0;
        for n in 1..=n_items {
            let m = metrics_at(&ranking, &relevant, n);
            if m.recall < last || !(0.0..=1.0).contains(&m.ndcg) || m.precision > 1.0 {
                return false;
            }
            last = m.recall;
        }
        let ideal: Vec<usize> = relevant.iter().copied().chain((0..n_items).filter(|i| !relevant.contains(i))).collect();
        let m = metrics_at(&ideal, &relevant, relevant.len());
        if (m.precision - 1.0).abs() > 1e-12 || (m.recall - 1.0).abs() > 1e-12 || (m.ndcg - 1.0).abs() > 1e-12 {
            return false;
        }
    }
    true
}

fn checkpoint_round_trip(seed: u64) -> Result<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::<f64>::init(5, [(3, 4), (2, 6)], &mut rng);
    let mut ck = Checkpoint::default();
    ck.config.insert("precision".into(), "f64".into());
    ck.push_params("p.", &params);
    let mut buf = Vec::new();
    ck.write(&mut buf)?;
    let back = Checkpoint::<f64>::read(buf.as_slice(), "memory")?;
    Ok(back.params("p.")? == params)
}

/// Runs every check; failures are reported, not raised.
pub fn run() -> Vec<CheckResult> {
    let mut out = Vec::new();
    let mut push = |name: &'static str, r: Result<(bool, String)>| {
        let (passed, detail) = r.unwrap_or_else(|e| (false, e.to_string()));
        out.push(CheckResult { name, passed, detail });
    };
    push(
        "joint loss gradient",
        (0..3)
            .map(end_to_end_gradient)
            .collect::<Result<Vec<_>>>()
            .map(|e| {
                let worst = e.iter().copied().fold(0.0, f64::max);
                (worst <= 1e-4, format!("max relative error {worst:.2e}"))
            }),
    );
    push(
        "propagation matches dense operator",
        (0..5)
            .map(propagation_oracle)
            .collect::<Result<Vec<_>>>()
            .map(|e| {
                let worst = e.iter().copied().fold(0.0, f64::max);
                (worst <= 1e-10, format!("max abs deviation {worst:.2e}"))
            }),
    );
    push(
        "neighbor index matches brute force",
        (0..5)
            .map(index_oracle)
            .collect::<Result<Vec<_>>>()
            .map(|ok| (ok.iter().all(|&b| b), "5 random feature sets".to_string())),
    );
    push(
        "ranking metric invariants",
        Ok((metric_invariants(7), "recall monotone in N, ideal ranking scores 1".to_string())),
    );
    push(
        "checkpoint round trip",
        checkpoint_round_trip(3).map(|ok| (ok, "params restored exactly".to_string())),
    );
    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        for r in super::run() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
