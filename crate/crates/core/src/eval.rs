//! Top-N ranking metrics under the inductive protocol: per-user candidate
//! sets exclude every interaction the model has observed, metrics are
//! macro-averaged over users with a non-empty relevant set and reported ×100.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::encoder::Representations;
use crate::error::{Error, Result};
use crate::graph::DomainTag;
use crate::numeric::dot;
use crate::scalar::Scalar;

/// Anything that can score all items of a domain for a user.
pub trait Scorer: Sync {
    fn n_items(&self) -> usize;
    fn score_items(&self, user: usize, out: &mut [f64]);
}

impl<T: Scalar> Scorer for Representations<T> {
    fn n_items(&self) -> usize {
        self.r.rows() - self.n_users
    }

    fn score_items(&self, user: usize, out: &mut [f64]) {
        let ru = self.user(user);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(ru, self.item(i)).as_f64();
        }
    }
}

/// Per-user candidate exclusions and relevant items of one domain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RankingContext {
    pub n_items: usize,
    /// Sorted item ids never offered to each user.
    pub excluded: Vec<Vec<usize>>,
    /// Sorted held-out items of each user.
    pub relevant: Vec<Vec<usize>>,
}

impl RankingContext {
    pub fn new(n_users: usize, n_items: usize, excluded: &[&[(usize, usize)]], relevant: &[(usize, usize)]) -> Self {
        let mut ex = vec![Vec::new(); n_users];
        for set in excluded {
            for &(u, i) in *set {
                ex[u].push(i);
            }
        }
        let mut rel = vec![Vec::new(); n_users];
        for &(u, i) in relevant {
            rel[u].push(i);
        }
        for l in ex.iter_mut().chain(rel.iter_mut()) {
            l.sort_unstable();
            l.dedup();
        }
        Self {
            n_items,
            excluded: ex,
            relevant: rel,
        }
    }

    pub fn n_users(&self) -> usize {
        self.relevant.len()
    }
}

/// Candidates (all items minus `excluded`) by descending score, ties by
/// ascending id; only the first `limit` are returned.
pub fn rank_items(scores: &[f64], excluded: &[usize], limit: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..scores.len()).filter(|i| excluded.binary_search(i).is_err()).collect();
    let order = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if limit < cand.len() {
        if limit == 0 {
            return Vec::new();
        }
        cand.select_nth_unstable_by(limit - 1, order);
        cand.truncate(limit);
    }
    cand.sort_by(order);
    cand
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
}

/// Precision, recall and NDCG at `n` (fractions, not ×100). Ranks are
/// 1-based; the ideal DCG is truncated at `min(n, |relevant|)`.
pub fn metrics_at(ranking: &[usize], relevant: &[usize], n: usize) -> Metrics {
    debug_assert!(n >= 1 && !relevant.is_empty());
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (p, item) in ranking.iter().take(n).enumerate() {
        if relevant.contains(item) {
            hits += 1;
            dcg += 1.0 / ((p + 2) as f64).log2();
        }
    }
    let idcg: f64 = (1..=n.min(relevant.len())).map(|p| 1.0 / ((p + 1) as f64).log2()).sum();
    Metrics {
        precision: hits as f64 / n as f64,
        recall: hits as f64 / relevant.len() as f64,
        ndcg: dcg / idcg,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slice {
    All,
    /// Relevant sets restricted to the bottom `q` fraction of items by train
    /// frequency.
    LowDegree(f64),
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slice::All => f.write_str("all"),
            Slice::LowDegree(q) => write!(f, "low:{q}"),
        }
    }
}

impl FromStr for Slice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(Slice::All);
        }
        let q = s
            .strip_prefix("low:")
            .and_then(|q| q.parse::<f64>().ok())
            .filter(|q| *q > 0.0 && *q <= 1.0)
            .ok_or_else(|| Error::Config(format!("bad slice {s:?} (all | low:<q> with 0 < q <= 1)")))?;
        Ok(Slice::LowDegree(q))
    }
}

/// Items in the bottom `q` fraction by frequency: `⌈q·|I|⌉` items, ties at
/// the boundary broken by ascending id.
pub fn low_degree_items(freq: &[usize], q: f64) -> Vec<bool> {
    let count = ((q * freq.len() as f64).ceil() as usize).min(freq.len());
    let mut order: Vec<usize> = (0..freq.len()).collect();
    order.sort_by(|&a, &b| freq[a].cmp(&freq[b]).then(a.cmp(&b)));
    let mut mask = vec![false; freq.len()];
    for &i in &order[..count] {
        mask[i] = true;
    }
    mask
}

/// One user's metrics for every requested `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct UserMetrics {
    pub user: usize,
    pub per_n: Vec<Metrics>,
}

/// Per-user metrics for every user with a non-empty (sliced) relevant set.
pub fn evaluate_users<S: Scorer + ?Sized>(
    scorer: &S,
    ctx: &RankingContext,
    ns: &[usize],
    slice_mask: Option<&[bool]>,
) -> Result<Vec<UserMetrics>> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::Config(format!("N list {ns:?} must be non-empty with N >= 1")));
    }
    if scorer.n_items() != ctx.n_items {
        return Err(Error::Population(format!(
            "scorer has {} items, ranking context {}",
            scorer.n_items(),
            ctx.n_items
        )));
    }
    let max_n = *ns.iter().max().expect("non-empty");
    let users: Vec<UserMetrics> = (0..ctx.n_users())
        .into_par_iter()
        .filter_map(|u| {
            let relevant: Vec<usize> = match slice_mask {
                Some(mask) => ctx.relevant[u].iter().copied().filter(|&i| mask[i]).collect(),
                None => ctx.relevant[u].clone(),
            };
            if relevant.is_empty() {
                return None;
            }
            let mut scores = vec![0.0; ctx.n_items];
            scorer.score_items(u, &mut scores);
            let ranking = rank_items(&scores, &ctx.excluded[u], max_n);
            Some(UserMetrics {
                user: u,
                per_n: ns.iter().map(|&n| metrics_at(&ranking, &relevant, n)).collect(),
            })
        })
        .collect();
    Ok(users)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub domain: DomainTag,
    pub n: usize,
    pub slice: Slice,
    /// ×100
    pub precision: f64,
    pub recall: f64,
    pub ndcg: f64,
    pub users: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

/// Macro-averaged report rows, one per `N`. `item_freq` is the train-edge
/// frequency of each item, used by low-degree slices.
pub fn evaluate<S: Scorer + ?Sized>(
    domain: DomainTag,
    scorer: &S,
    ctx: &RankingContext,
    ns: &[usize],
    slice: Slice,
    item_freq: &[usize],
) -> Result<Vec<EvalRow>> {
    let mask = match slice {
        Slice::All => None,
        Slice::LowDegree(q) => Some(low_degree_items(item_freq, q)),
    };
    let users = evaluate_users(scorer, ctx, ns, mask.as_deref())?;
    if users.is_empty() {
        return Err(Error::NoEvaluableUsers(domain.to_string()));
    }
    let m = users.len() as f64;
    Ok(ns
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let sum = |f: fn(&Metrics) -> f64| users.iter().map(|u| f(&u.per_n[k])).sum::<f64>();
            EvalRow {
                domain,
                n,
                slice,
                precision: 100.0 * sum(|x| x.precision) / m,
                recall: 100.0 * sum(|x| x.recall) / m,
                ndcg: 100.0 * sum(|x| x.ndcg) / m,
                users: users.len(),
            }
        })
        .collect())
}

impl EvalReport {
    /// `domain N slice precision recall ndcg users`, one row per line.
    pub fn to_lines(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            s.push_str(&format!(
                "{} {} {} {:.6} {:.6} {:.6} {}\n",
                r.domain, r.n, r.slice, r.precision, r.recall, r.ndcg, r.users
            ));
        }
        s
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<6} {:>4} {:<10} {:>10} {:>10} {:>10} {:>7}\n",
            "domain", "N", "slice", "Pre", "Rec", "NDCG", "users"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<6} {:>4} {:<10} {:>10.3} {:>10.3} {:>10.3} {:>7}\n",
                r.domain.to_string(),
                r.n,
                r.slice.to_string(),
                r.precision,
                r.recall,
                r.ndcg,
                r.users
            ));
        }
        s
    }
}
