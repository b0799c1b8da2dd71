use rand::Rng;

use super::params::DomainParams;
use crate::error::{Error, Result};
use crate::features::DomainIndex;
use crate::graph::DomainGraph;
use crate::numeric::{axpy, spmm, DenseMatrix, NormalizedAdjacency};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderConfig {
    pub dim: usize,
    /// Neighbor count `K`; also the aggregation divisor.
    pub k: usize,
    pub layers: usize,
    pub dropout_p: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            k: 3,
            layers: 3,
            dropout_p: 0.2,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dim must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} not in [0, 1)", self.dropout_p)));
        }
        Ok(())
    }
}

/// Stacked `[users; items] x d` matrices of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Representations<T> {
    pub x: DenseMatrix<T>,
    pub x_agg: DenseMatrix<T>,
    pub r: DenseMatrix<T>,
    pub n_users: usize,
}

impl<T: Scalar> Representations<T> {
    pub fn user(&self, u: usize) -> &[T] {
        self.r.row(u)
    }

    pub fn item(&self, i: usize) -> &[T] {
        self.r.row(self.n_users + i)
    }
}

pub enum EncodeMode<'a, R: Rng + ?Sized> {
    /// Entrywise inverted dropout on `x` with a fresh mask from `rng`.
    Train(&'a mut R),
    Infer,
}

/// What the backward pass needs from a forward pass. The encoder is linear in
/// its parameters, so only the dropout mask is kept.
#[derive(Debug, Clone, Default)]
pub struct EncodeTrace<T> {
    mask: Option<Vec<T>>,
}

fn norm_coef<T: Scalar>(n: usize, alpha: T) -> T {
    (T::of_usize(n) + T::one()).powf(-alpha)
}

/// `x_u = (|N_u ∩ I_tem| + 1)^(-alpha) · Σ (e_i + b_user)` over template
/// neighbors, and symmetrically for items. Rows are stacked users first.
pub fn template_encode<T: Scalar>(graph: &DomainGraph, params: &DomainParams<T>, alpha: T) -> DenseMatrix<T> {
    let d = params.bias_user.cols();
    let n_users = graph.n_users();
    let mut x = DenseMatrix::zeros(n_users + graph.n_items(), d);
    for u in 0..n_users {
        let row = x.row_mut(u);
        let mut n = 0;
        for &i in graph.user_items(u) {
            if let Some(t) = graph.item_template_row(i) {
                axpy(row, T::one(), params.item_templates.row(t));
                n += 1;
            }
        }
        if n > 0 {
            axpy(row, T::of_usize(n), params.bias_user.as_slice());
            let c = norm_coef(n, alpha);
            row.iter_mut().for_each(|v| *v *= c);
        }
    }
    for i in 0..graph.n_items() {
        let row = x.row_mut(n_users + i);
        let mut n = 0;
        for &u in graph.item_users(i) {
            if let Some(t) = graph.user_template_row(u) {
                axpy(row, T::one(), params.user_templates.row(t));
                n += 1;
            }
        }
        if n > 0 {
            axpy(row, T::of_usize(n), params.bias_item.as_slice());
            let c = norm_coef(n, alpha);
            row.iter_mut().for_each(|v| *v *= c);
        }
    }
    x
}

fn template_encode_backward<T: Scalar>(graph: &DomainGraph, grad_x: &DenseMatrix<T>, alpha: T, grads: &mut DomainParams<T>) {
    let n_users = graph.n_users();
    for u in 0..n_users {
        let n = graph
            .user_items(u)
            .iter()
            .filter(|&&i| graph.item_template_row(i).is_some())
            .count();
        if n == 0 {
            continue;
        }
        let c = norm_coef(n, alpha);
        let g = grad_x.row(u);
        for &i in graph.user_items(u) {
            if let Some(t) = graph.item_template_row(i) {
                axpy(grads.item_templates.row_mut(t), c, g);
            }
        }
        axpy(grads.bias_user.as_mut_slice(), c * T::of_usize(n), g);
    }
    for i in 0..graph.n_items() {
        let n = graph
            .item_users(i)
            .iter()
            .filter(|&&u| graph.user_template_row(u).is_some())
            .count();
        if n == 0 {
            continue;
        }
        let c = norm_coef(n, alpha);
        let g = grad_x.row(n_users + i);
        for &u in graph.item_users(i) {
            if let Some(t) = graph.user_template_row(u) {
                axpy(grads.user_templates.row_mut(t), c, g);
            }
        }
        axpy(grads.bias_item.as_mut_slice(), c * T::of_usize(n), g);
    }
}

/// `x̃_e = x_e + (1/K) Σ_{e' ∈ Ñ_e} x_{e'}`, with `K` the index's configured
/// neighbor count even when a list is shorter.
pub fn aggregate_modal<T: Scalar>(x: &DenseMatrix<T>, index: &DomainIndex, n_users: usize) -> DenseMatrix<T> {
    let mut out = x.clone();
    let (cu, ci) = (T::one() / T::of_usize(index.users.k()), T::one() / T::of_usize(index.items.k()));
    for u in 0..n_users {
        for &v in index.users.neighbors(u) {
            axpy(out.row_mut(u), cu, x.row(v));
        }
    }
    for i in 0..x.rows() - n_users {
        for &j in index.items.neighbors(i) {
            axpy(out.row_mut(n_users + i), ci, x.row(n_users + j));
        }
    }
    out
}

fn aggregate_modal_backward<T: Scalar>(grad_agg: &DenseMatrix<T>, index: &DomainIndex, n_users: usize) -> DenseMatrix<T> {
    let mut g = grad_agg.clone();
    let (cu, ci) = (T::one() / T::of_usize(index.users.k()), T::one() / T::of_usize(index.items.k()));
    for u in 0..n_users {
        for &v in index.users.neighbors(u) {
            axpy(g.row_mut(v), cu, grad_agg.row(u));
        }
    }
    for i in 0..grad_agg.rows() - n_users {
        for &j in index.items.neighbors(i) {
            axpy(g.row_mut(n_users + j), ci, grad_agg.row(n_users + i));
        }
    }
    g
}

/// Layer-averaged propagation `r = Σ_{l=0..L} Â^l x̃ / (L + 1)`.
pub fn propagate<T: Scalar>(x_agg: &DenseMatrix<T>, adj: &NormalizedAdjacency<T>, layers: usize) -> Result<DenseMatrix<T>> {
    let mut acc = x_agg.clone();
    let mut h = x_agg.clone();
    for _ in 0..layers {
        h = spmm(adj, &h)?;
        acc.add_scaled(&h, T::one());
    }
    acc.scale(T::one() / T::of_usize(layers + 1));
    Ok(acc)
}

/// One domain's encoder: graph state, neighbor index and propagation
/// operator. `index = None` disables modality-based aggregation.
#[derive(Debug, Clone)]
pub struct DomainEncoder<T> {
    graph: DomainGraph,
    index: Option<DomainIndex>,
    adjacency: NormalizedAdjacency<T>,
    cfg: EncoderConfig,
}

impl<T: Scalar> DomainEncoder<T> {
    pub fn new(graph: DomainGraph, index: Option<DomainIndex>, cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        if let Some(idx) = &index {
            if idx.users.len() != graph.n_users() || idx.items.len() != graph.n_items() {
                return Err(Error::Population(format!(
                    "index covers {} users / {} items, graph has {} / {}",
                    idx.users.len(),
                    idx.items.len(),
                    graph.n_users(),
                    graph.n_items()
                )));
            }
        }
        let adjacency = NormalizedAdjacency::from_user_adjacency(graph.user_adjacency(), graph.n_items())?;
        Ok(Self {
            graph,
            index,
            adjacency,
            cfg,
        })
    }

    pub fn graph(&self) -> &DomainGraph {
        &self.graph
    }

    pub fn index(&self) -> Option<&DomainIndex> {
        self.index.as_ref()
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    fn check_params(&self, params: &DomainParams<T>) -> Result<()> {
        let (tu, ti) = (self.graph.template_users().len(), self.graph.template_items().len());
        if params.user_templates.rows() != tu || params.item_templates.rows() != ti {
            return Err(Error::Population(format!(
                "parameters hold {} / {} template rows, graph has {tu} / {ti} templates",
                params.user_templates.rows(),
                params.item_templates.rows()
            )));
        }
        if params.bias_user.cols() != self.cfg.dim {
            return Err(Error::Population(format!(
                "parameter dim {} vs encoder dim {}",
                params.bias_user.cols(),
                self.cfg.dim
            )));
        }
        Ok(())
    }

    pub fn encode<R: Rng + ?Sized>(
        &self,
        params: &DomainParams<T>,
        alpha: f64,
        mode: EncodeMode<'_, R>,
    ) -> Result<(Representations<T>, EncodeTrace<T>)> {
        self.check_params(params)?;
        let mut x = template_encode(&self.graph, params, T::of(alpha));
        let mut trace = EncodeTrace::default();
        if let EncodeMode::Train(rng) = mode {
            let p = self.cfg.dropout_p;
            if p > 0.0 {
                let keep = T::one() / T::of(1.0 - p);
                let mask: Vec<T> = (0..x.as_slice().len())
                    .map(|_| if rng.gen::<f64>() < p { T::zero() } else { keep })
                    .collect();
                for (v, &m) in x.as_mut_slice().iter_mut().zip(&mask) {
                    *v *= m;
                }
                trace.mask = Some(mask);
            }
        }
        let x_agg = match &self.index {
            Some(idx) => aggregate_modal(&x, idx, self.graph.n_users()),
            None => x.clone(),
        };
        let r = propagate(&x_agg, &self.adjacency, self.cfg.layers)?;
        Ok((
            Representations {
                x,
                x_agg,
                r,
                n_users: self.graph.n_users(),
            },
            trace,
        ))
    }

    pub fn encode_infer(&self, params: &DomainParams<T>, alpha: f64) -> Result<Representations<T>> {
        self.encode::<rand::rngs::ThreadRng>(params, alpha, EncodeMode::Infer)
            .map(|(r, _)| r)
    }

    /// Accumulates parameter gradients given `grad_r = ∂L/∂r`.
    pub fn backward(&self, trace: &EncodeTrace<T>, grad_r: &DenseMatrix<T>, alpha: f64, grads: &mut DomainParams<T>) -> Result<()> {
        // Â is symmetric, so the propagation adjoint reuses the same operator.
        let grad_agg = propagate(grad_r, &self.adjacency, self.cfg.layers)?;
        let mut grad_x = match &self.index {
            Some(idx) => aggregate_modal_backward(&grad_agg, idx, self.graph.n_users()),
            None => grad_agg,
        };
        if let Some(mask) = &trace.mask {
            for (g, &m) in grad_x.as_mut_slice().iter_mut().zip(mask) {
                *g *= m;
            }
        }
        template_encode_backward(&self.graph, &grad_x, T::of(alpha), grads);
        Ok(())
    }
}
