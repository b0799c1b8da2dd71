//! Independent oracles and fixtures shared by the integration tests and the
//! acceptance suite.
#![allow(dead_code)]

use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use micrec::dataset::{prepare_domain, resolve_overlap, FilterConfig};
use micrec::encoder::{propagate, template_encode, DomainEncoder, EncoderConfig, ModelParams, Representations};
use micrec::eval::{evaluate, metrics_at, rank_items, Metrics, RankingContext, Scorer, Slice};
use micrec::features::{
    build_domain_index, build_neighbor_index, FeatureMatrix, FusionWeight, IndexScope, Modality, SimilarityMode,
};
use micrec::graph::{DomainGraph, DomainTag, Population, SplitConfig, SplitTag};
use micrec::numeric::{grad_check, GradCheckConfig, NormalizedAdjacency};
use micrec::objective::{
    bpr_loss, contrastive_loss, joint_loss, se_loss, Gradients, JointInputs, LossWeights, OverlapBatch, Triplet,
    TripletBatch,
};
use micrec::pipeline::{DomainData, ModelConfig};
use micrec::synth::{generate, SynthConfig, SynthDataset};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Random bipartite graph with a seen prefix and random template subsets of
/// the seen entities. Every user keeps at least one edge.
pub fn random_graph(tag: DomainTag, users: usize, items: usize, density: f64, rng: &mut ChaCha8Rng) -> DomainGraph {
    let seen_users = rng.gen_range(1..=users);
    let seen_items = rng.gen_range(1..=items);
    let pop = Population {
        users,
        seen_users,
        items,
        seen_items,
    };
    let mut edges = Vec::new();
    for u in 0..users {
        edges.push((u, rng.gen_range(0..items)));
        for i in 0..items {
            if rng.gen::<f64>() < density {
                edges.push((u, i));
            }
        }
    }
    let tu: Vec<usize> = (0..seen_users).filter(|_| rng.gen::<f64>() < 0.7).collect();
    let ti: Vec<usize> = (0..seen_items).filter(|_| rng.gen::<f64>() < 0.7).collect();
    DomainGraph::new(tag, pop, &edges).unwrap().with_templates(tu, ti).unwrap()
}

pub fn random_features(rows: usize, dim: usize, modality: Modality, rng: &mut ChaCha8Rng) -> FeatureMatrix {
    FeatureMatrix::new(modality, dim, (0..rows * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

// ---------------------------------------------------------------------------
// encoder oracles

/// Template encoding evaluated straight from the formula, entity by entity.
pub fn template_encode_direct(g: &DomainGraph, p: &micrec::encoder::DomainParams<f64>, alpha: f64) -> Vec<Vec<f64>> {
    let d = p.bias_user.cols();
    let mut out = Vec::new();
    for u in 0..g.n_users() {
        let rows: Vec<usize> = g.user_items(u).iter().filter_map(|&i| g.item_template_row(i)).collect();
        let mut x = vec![0.0; d];
        if !rows.is_empty() {
            let c = ((rows.len() + 1) as f64).powf(-alpha);
            for k in 0..d {
                let s: f64 = rows.iter().map(|&r| p.item_templates.get(r, k) + p.bias_user.get(0, k)).sum();
                x[k] = c * s;
            }
        }
        out.push(x);
    }
    for i in 0..g.n_items() {
        let rows: Vec<usize> = g.item_users(i).iter().filter_map(|&u| g.user_template_row(u)).collect();
        let mut x = vec![0.0; d];
        if !rows.is_empty() {
            let c = ((rows.len() + 1) as f64).powf(-alpha);
            for k in 0..d {
                let s: f64 = rows.iter().map(|&r| p.user_templates.get(r, k) + p.bias_item.get(0, k)).sum();
                x[k] = c * s;
            }
        }
        out.push(x);
    }
    out
}

/// Worst deviation of `template_encode` from the direct formula over `graphs`
/// random graphs.
pub fn template_encode_oracle(graphs: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..graphs {
        let users = rng.gen_range(1..8);
        let items = rng.gen_range(1..9);
        let g = random_graph(DomainTag::A, users, items, 0.35, &mut rng);
        let d = rng.gen_range(1..5);
        let params = ModelParams::<f64>::init(
            d,
            [(g.template_users().len(), g.template_items().len()), (1, 1)],
            &mut rng,
        );
        let mut p = params.domains[0].clone();
        // non-zero biases so their multiplicity is exercised
        p.bias_user = micrec::numeric::DenseMatrix::from_fn(1, d, |_, _| rng.gen_range(-1.0..1.0));
        p.bias_item = micrec::numeric::DenseMatrix::from_fn(1, d, |_, _| rng.gen_range(-1.0..1.0));
        let alpha = rng.gen_range(0.0..=1.0);
        let fast = template_encode(&g, &p, alpha);
        let want = template_encode_direct(&g, &p, alpha);
        for (r, row) in want.iter().enumerate() {
            worst = worst.max(max_abs_diff(fast.row(r), row));
        }
    }
    worst
}

type Dense = Vec<Vec<f64>>;

fn dense_matmul(a: &Dense, b: &Dense) -> Dense {
    let m = b[0].len();
    a.iter()
        .map(|row| (0..m).map(|j| row.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
        .collect()
}

/// `D^{-1/2} A D^{-1/2}` of the user-item graph, users first.
pub fn dense_normalized_adjacency(g: &DomainGraph) -> Dense {
    let nu = g.n_users();
    let n = nu + g.n_items();
    let mut a = vec![vec![0.0; n]; n];
    for (u, i) in g.edges() {
        a[u][nu + i] = 1.0;
        a[nu + i][u] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    for r in 0..n {
        for c in 0..n {
            if a[r][c] != 0.0 {
                a[r][c] /= (deg[r] * deg[c]).sqrt();
            }
        }
    }
    a
}

/// Worst deviation of `propagate` from `Σ_l Â^l X / (L+1)` built densely,
/// over graphs of at most 20 nodes.
pub fn propagation_oracle(graphs: usize, seed: u64) -> f64 {
    let mut rng = rng(seed);
    let mut worst = 0.0f64;
    for _ in 0..graphs {
        let users = rng.gen_range(1..=10);
        let items = rng.gen_range(1..=10);
        let g = random_graph(DomainTag::B, users, items, 0.3, &mut rng);
        let n = users + items;
        let d = rng.gen_range(1..5);
        let layers = rng.gen_range(0..5);
        let x: Dense = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let a = dense_normalized_adjacency(&g);
        let mut acc = x.clone();
        let mut power = x.clone();
        for _ in 0..layers {
            power = dense_matmul(&a, &power);
            for (ar, pr) in acc.iter_mut().zip(&power) {
                for (v, p) in ar.iter_mut().zip(pr) {
                    *v += p;
                }
            }
        }
        let adj = NormalizedAdjacency::<f64>::from_user_adjacency(g.user_adjacency(), g.n_items()).unwrap();
        let xm = micrec::numeric::DenseMatrix::from_fn(n, d, |r, c| x[r][c]);
        let fast = propagate(&xm, &adj, layers).unwrap();
        for (r, row) in acc.iter().enumerate() {
            let want: Vec<f64> = row.iter().map(|v| v / (layers + 1) as f64).collect();
            worst = worst.max(max_abs_diff(fast.row(r), &want));
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// similarity / index oracle

pub fn cosine_oracle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

pub fn similarity_oracle(mode: SimilarityMode, t: &FeatureMatrix, v: &FeatureMatrix, a: usize, b: usize) -> f64 {
    let ct = cosine_oracle(t.row(a), t.row(b));
    let cv = cosine_oracle(v.row(a), v.row(b));
    match mode {
        SimilarityMode::Fused(w) => w.get() * ct + (1.0 - w.get()) * cv,
        SimilarityMode::TextOnly => ct,
        SimilarityMode::VisualOnly => cv,
    }
}

/// O(n²) top-`k`: sort every other entity by descending similarity, ascending
/// id on ties.
pub fn brute_force_top_k(mode: SimilarityMode, t: &FeatureMatrix, v: &FeatureMatrix, q: usize, k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = (0..t.n_rows())
        .filter(|&j| j != q)
        .map(|j| (j, similarity_oracle(mode, t, v, q, j)))
        .collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

/// Random feature sets with exact duplicates (forcing ties) and zero rows.
pub fn tie_heavy_features(n: usize, rng: &mut ChaCha8Rng) -> (FeatureMatrix, FeatureMatrix) {
    let (dt, dv) = (rng.gen_range(1..6), rng.gen_range(1..6));
    let mut t: Dense = (0..n).map(|_| (0..dt).map(|_| rng.gen_range(-2..=2) as f64).collect()).collect();
    let mut v: Dense = (0..n).map(|_| (0..dv).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    for _ in 0..n / 4 {
        let (src, dst) = (rng.gen_range(0..n), rng.gen_range(0..n));
        t[dst] = t[src].clone();
        v[dst] = v[src].clone();
    }
    if n > 3 && rng.gen_bool(0.5) {
        let z = rng.gen_range(0..n);
        t[z] = vec![0.0; dt];
    }
    (
        FeatureMatrix::from_rows(Modality::Text, &t).unwrap(),
        FeatureMatrix::from_rows(Modality::Visual, &v).unwrap(),
    )
}

pub fn random_mode(rng: &mut ChaCha8Rng) -> SimilarityMode {
    match rng.gen_range(0..4) {
        0 => SimilarityMode::TextOnly,
        1 => SimilarityMode::VisualOnly,
        2 => SimilarityMode::Fused(FusionWeight::new(0.9).unwrap()),
        _ => SimilarityMode::Fused(FusionWeight::new(rng.gen_range(0.0..=1.0)).unwrap()),
    }
}

/// Number of feature sets (out of `sets`, up to 64 entities each) whose
/// index differs from brute force, and the worst score deviation.
pub fn index_oracle(sets: usize, seed: u64) -> (usize, f64) {
    let mut rng = rng(seed);
    let mut mismatches = 0;
    let mut worst = 0.0f64;
    for _ in 0..sets {
        let n = rng.gen_range(1..=64);
        let (t, v) = tie_heavy_features(n, &mut rng);
        let mode = random_mode(&mut rng);
        let k = rng.gen_range(1..=6);
        let idx = build_neighbor_index(&t, &v, mode, k).unwrap();
        let mut ok = true;
        for q in 0..n {
            let want = brute_force_top_k(mode, &t, &v, q, k);
            let ids: Vec<usize> = want.iter().map(|w| w.0).collect();
            if idx.neighbors(q) != ids.as_slice() {
                ok = false;
            }
            for (s, w) in idx.scores(q).iter().zip(&want) {
                worst = worst.max((s - w.1).abs());
            }
        }
        mismatches += usize::from(!ok);
    }
    (mismatches, worst)
}

/// Worst asymmetry `|s(a,b) - s(b,a)|` and scale deviation
/// `|s(ca,b) - s(a,b)|` of the fused similarity over random pairs.
pub fn similarity_symmetry_and_scale(trials: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng(seed);
    let (mut asym, mut scale) = (0.0f64, 0.0f64);
    for _ in 0..trials {
        let dt = rng.gen_range(1..10);
        let dv = rng.gen_range(1..10);
        let mut vec_of = |d: usize| -> Vec<f64> { (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect() };
        let (at, av, bt, bv) = (vec_of(dt), vec_of(dv), vec_of(dt), vec_of(dv));
        let w = FusionWeight::new(rng.gen_range(0.0..=1.0)).unwrap();
        let c = 10f64.powf(rng.gen_range(-3.0..3.0));
        let s = micrec::features::fused_similarity(&at, &av, &bt, &bv, w);
        let r = micrec::features::fused_similarity(&bt, &bv, &at, &av, w);
        let ct: Vec<f64> = at.iter().map(|x| c * x).collect();
        let cv: Vec<f64> = av.iter().map(|x| c * x).collect();
        let sc = micrec::features::fused_similarity(&ct, &cv, &bt, &bv, w);
        asym = asym.max((s - r).abs());
        scale = scale.max((s - sc).abs());
    }
    (asym, scale)
}

// ---------------------------------------------------------------------------
// metric oracle

/// Pre/Rec/NDCG@n from a fully sorted candidate list.
pub fn metrics_oracle(scores: &[f64], excluded: &[usize], relevant: &[usize], n: usize) -> Metrics {
    let mut cand: Vec<usize> = (0..scores.len()).filter(|i| !excluded.contains(i)).collect();
    cand.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let top = &cand[..n.min(cand.len())];
    let hits: Vec<usize> = (0..top.len()).filter(|&p| relevant.contains(&top[p])).collect();
    let dcg: f64 = hits.iter().map(|&p| 1.0 / ((p + 2) as f64).log2()).sum();
    let idcg: f64 = (0..n.min(relevant.len())).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
    Metrics {
        precision: hits.len() as f64 / n as f64,
        recall: hits.len() as f64 / relevant.len() as f64,
        ndcg: dcg / idcg,
    }
}

/// Instances (out of `instances`) where the library metrics differ from
/// the oracle.
pub fn metric_oracle(instances: usize, seed: u64) -> usize {
    let mut rng = rng(seed);
    let mut bad = 0;
    for _ in 0..instances {
        let n_items = rng.gen_range(2..60);
        let scores: Vec<f64> = (0..n_items).map(|_| rng.gen_range(0..6) as f64 * 0.5).collect();
        let mut excluded: Vec<usize> = (0..n_items).filter(|_| rng.gen::<f64>() < 0.2).collect();
        excluded.truncate(n_items - 1);
        let cand: Vec<usize> = (0..n_items).filter(|i| !excluded.contains(i)).collect();
        let mut relevant: Vec<usize> = cand.iter().copied().filter(|_| rng.gen::<f64>() < 0.3).collect();
        if relevant.is_empty() {
            relevant.push(cand[rng.gen_range(0..cand.len())]);
        }
        let n = rng.gen_range(1..=n_items + 5);
        let ranking = rank_items(&scores, &excluded, n);
        let got = metrics_at(&ranking, &relevant, n);
        let want = metrics_oracle(&scores, &excluded, &relevant, n);
        if got != want {
            bad += 1;
        }
    }
    bad
}

// ---------------------------------------------------------------------------
// gradient oracles

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Bpr,
    Se,
    Contrastive { include_positive: bool },
    Joint,
}

pub struct ToyModel {
    pub encoders: [DomainEncoder<f64>; 2],
    pub batch: TripletBatch,
    pub overlap: OverlapBatch,
    pub params: ModelParams<f64>,
    pub alpha: f64,
}

fn toy_triplets(g: &DomainGraph, rng: &mut ChaCha8Rng) -> Vec<Triplet> {
    let mut out = Vec::new();
    for (u, pos) in g.edges() {
        let free: Vec<usize> = (0..g.n_items()).filter(|&i| !g.has_edge(u, i)).collect();
        if let Some(&neg) = free.choose(rng) {
            out.push(Triplet { user: u, pos, neg });
        }
    }
    out
}

/// Two domains of at most 6 users and 8 items, `d = 4`, with modality
/// aggregation, random templates and a 3-5 user overlap batch.
pub fn toy_model(seed: u64) -> ToyModel {
    let mut rng = rng(seed);
    let cfg = EncoderConfig {
        dim: 4,
        k: 2,
        layers: 2,
        dropout_p: 0.0,
    };
    let encoders = DomainTag::BOTH.map(|tag| {
        let users = rng.gen_range(5..=6);
        let items = rng.gen_range(6..=8);
        let mut g = random_graph(tag, users, items, 0.35, &mut rng);
        // every seen entity is a template so the self-enhanced term is non-trivial
        let pop = g.population();
        g = g.with_templates((0..pop.seen_users).collect(), (0..pop.seen_items).collect()).unwrap();
        let t = random_features(items, 3, Modality::Text, &mut rng);
        let v = random_features(items, 2, Modality::Visual, &mut rng);
        let mode = SimilarityMode::Fused(FusionWeight::new(0.9).unwrap());
        let idx = build_domain_index(&g, &t, &v, mode, cfg.k, IndexScope::All).unwrap();
        DomainEncoder::new(g, Some(idx), cfg).unwrap()
    });
    let batch = TripletBatch {
        domains: [toy_triplets(encoders[0].graph(), &mut rng), toy_triplets(encoders[1].graph(), &mut rng)],
    };
    let pairs = rng.gen_range(3..=5);
    let overlap = OverlapBatch {
        pairs: (0..pairs).map(|k| (k, (k + 1) % pairs)).collect(),
    };
    let t = |e: &DomainEncoder<f64>| (e.graph().template_users().len(), e.graph().template_items().len());
    let mut params = ModelParams::<f64>::init(4, [t(&encoders[0]), t(&encoders[1])], &mut rng);
    // larger scale than the trainer's init so every term has a sizeable gradient
    for d in params.domains.iter_mut() {
        for m in [&mut d.user_templates, &mut d.item_templates, &mut d.bias_user, &mut d.bias_item, &mut d.se_projection] {
            m.as_mut_slice().iter_mut().for_each(|v| *v += rng.gen_range(-0.5..0.5));
        }
    }
    ToyModel {
        encoders,
        batch,
        overlap,
        params,
        alpha: rng.gen_range(0.5..=1.0),
    }
}

fn toy_weights(kind: LossKind) -> LossWeights {
    LossWeights {
        lambda: 1e-2,
        beta: 0.3,
        gamma: 0.7,
        tau: 0.2,
        include_positive_in_denominator: matches!(kind, LossKind::Contrastive { include_positive: true }),
    }
}

/// Loss value and, when requested, the gradient with respect to every
/// parameter (representation gradients pulled back through the encoders).
pub fn toy_loss(m: &ToyModel, p: &ModelParams<f64>, kind: LossKind, want_grad: bool) -> (f64, Option<Vec<f64>>) {
    let w = toy_weights(kind);
    let reps: [Representations<f64>; 2] = [0, 1].map(|d| m.encoders[d].encode_infer(&p.domains[d], m.alpha).unwrap());
    let mut grads = want_grad.then(|| Gradients::zeros(p, [&reps[0], &reps[1]]));
    let loss = match kind {
        LossKind::Bpr => DomainTag::BOTH
            .iter()
            .map(|&tag| {
                let r = &reps[tag.index()];
                bpr_loss(r, m.batch.domain(tag), p, tag, w.lambda, grads.as_mut()).unwrap()
            })
            .sum(),
        LossKind::Se => DomainTag::BOTH
            .iter()
            .map(|&tag| se_loss(p, m.encoders[tag.index()].graph(), m.batch.domain(tag), tag, grads.as_mut()).unwrap())
            .sum(),
        LossKind::Contrastive { .. } => contrastive_loss(&reps[0], &reps[1], &m.overlap, p, &w, grads.as_mut()).unwrap(),
        LossKind::Joint => {
            let inputs = JointInputs {
                reps: [&reps[0], &reps[1]],
                graphs: [m.encoders[0].graph(), m.encoders[1].graph()],
                batch: &m.batch,
                overlap: Some(&m.overlap),
                params: p,
                weights: &w,
            };
            joint_loss(&inputs, grads.as_mut()).unwrap().total
        }
    };
    let flat = grads.map(|mut g| {
        for d in 0..2 {
            m.encoders[d]
                .backward(&Default::default(), &g.reps[d], m.alpha, &mut g.params.domains[d])
                .unwrap();
        }
        g.params.to_flat()
    });
    (loss, flat)
}

/// Maximum relative error between the analytic gradient and central
/// differences, over every parameter coordinate.
pub fn gradient_error(kind: LossKind, seed: u64) -> f64 {
    let m = toy_model(seed);
    let (_, analytic) = toy_loss(&m, &m.params, kind, true);
    let analytic = analytic.unwrap();
    let mut probe = m.params.clone();
    grad_check(
        |x| {
            probe.set_flat(x).unwrap();
            Ok(toy_loss(&m, &probe, kind, false).0)
        },
        &m.params.to_flat(),
        &analytic,
        GradCheckConfig {
            eps: 1e-5,
            max_coords: usize::MAX,
        },
        &mut rng(seed),
    )
    .unwrap()
}

// ---------------------------------------------------------------------------
// synthetic two-domain fixtures

pub struct SynthDomains {
    pub synth: SynthDataset,
    pub domains: [DomainData; 2],
    pub overlap: Vec<(usize, usize)>,
    pub items: [micrec::graph::IdMap; 2],
}

/// Generated, filtered, split and featurized synthetic domains.
pub fn synth_domains(sc: &SynthConfig, split_seed: u64) -> SynthDomains {
    let synth = generate(sc).unwrap();
    let filter = FilterConfig {
        min_rating: 4.0,
        min_degree: 0,
    };
    let split = SplitConfig {
        seed: split_seed,
        ..SplitConfig::default()
    };
    let pa = prepare_domain(DomainTag::A, &synth.records[0], filter, &split).unwrap();
    let pb = prepare_domain(DomainTag::B, &synth.records[1], filter, &split).unwrap();
    let keys: Vec<(String, String)> = synth.overlap.iter().map(|k| (k.clone(), k.clone())).collect();
    let overlap = resolve_overlap(&keys, &pa, &pb).unwrap().pairs().to_vec();
    let data = |p: &micrec::dataset::PreparedDomain| {
        let (t, v) = synth.features(p.tag, &p.items).unwrap();
        DomainData::new(p.tag, p.population, p.bundle.clone(), t, v).unwrap()
    };
    let domains = [data(&pa), data(&pb)];
    SynthDomains {
        items: [pa.items.clone(), pb.items.clone()],
        synth,
        domains,
        overlap,
    }
}

/// A dataset small enough for a training epoch in milliseconds.
pub fn tiny_domains(seed: u64) -> SynthDomains {
    let sc = SynthConfig {
        users: 60,
        items: [40, 40],
        degree: [10, 4],
        seed,
        ..SynthConfig::default()
    };
    synth_domains(&sc, seed)
}

pub fn tiny_model_config(seed: u64) -> ModelConfig {
    let mut cfg = ModelConfig::default();
    cfg.encoder.dim = 8;
    cfg.train.epochs_max = 6;
    cfg.train.patience = 6;
    cfg.train.batches_per_epoch = 4;
    cfg.train.overlap_batch = 16;
    cfg.train.lr = 5e-3;
    cfg.train.seed = seed;
    cfg
}

pub fn shuffled<T: Clone>(v: &[T], rng: &mut ChaCha8Rng) -> Vec<T> {
    let mut out = v.to_vec();
    out.shuffle(rng);
    out
}

pub struct RandomScores {
    pub items: usize,
    pub seed: u64,
}

impl Scorer for RandomScores {
    fn n_items(&self) -> usize {
        self.items
    }

    fn score_items(&self, user: usize, out: &mut [f64]) {
        let mut r = rng(self.seed.wrapping_mul(1_000_003).wrapping_add(user as u64));
        out.iter_mut().for_each(|o| *o = r.gen());
    }
}

/// Mean Recall@20 of random scores over uniformly drawn relevant sets of
/// size `relevant`, as a fraction.
pub fn random_recall(seed: u64, users: usize, items: usize, relevant: usize) -> f64 {
    let mut r = rng(seed);
    let rel: Vec<(usize, usize)> = (0..users)
        .flat_map(|u| {
            rand::seq::index::sample(&mut r, items, relevant)
                .into_iter()
                .map(move |i| (u, i))
                .collect::<Vec<_>>()
        })
        .collect();
    let ctx = RankingContext::new(users, items, &[], &rel);
    let rows = evaluate(DomainTag::A, &RandomScores { items, seed }, &ctx, &[20], Slice::All, &[]).unwrap();
    rows[0].recall / 100.0
}

/// Pooled random-score Recall@20 over `seeds` datasets against its
/// hypergeometric expectation: `(mean, expected, sigma)`.
pub fn random_recall_check(seeds: u64) -> (f64, f64, f64) {
    let (users, items, k, n) = (300usize, 200usize, 10usize, 20usize);
    let (nf, kf, itf) = (n as f64, k as f64, items as f64);
    // hits ~ Hypergeometric(items, k, n); recall = hits / k
    let var_hits = nf * kf / itf * (1.0 - kf / itf) * (itf - nf) / (itf - 1.0);
    let sigma = (var_hits / (kf * kf) / (users as u64 * seeds) as f64).sqrt();
    let mean = (0..seeds).map(|s| random_recall(s, users, items, k)).sum::<f64>() / seeds as f64;
    (mean, nf / itf, sigma)
}

/// Copy of `d` in which `user` reveals exactly `revealed` at inference and
/// every other interaction of that user becomes a test edge.
pub fn with_revealed(d: &DomainData, user: usize, revealed: &[(usize, usize)]) -> DomainData {
    let mut bundle = d.bundle.clone();
    let mut held = Vec::new();
    for tag in [SplitTag::New, SplitTag::Val, SplitTag::Test] {
        let edges = bundle.get_mut(tag);
        held.extend(edges.iter().copied().filter(|e| e.0 == user && !revealed.contains(e)));
        edges.retain(|e| e.0 != user);
    }
    bundle.new.extend_from_slice(revealed);
    bundle.test.extend(held);
    DomainData::new(d.tag, d.population, bundle, d.text.clone(), d.visual.clone()).unwrap()
}
