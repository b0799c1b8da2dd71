//! Ranking, self-enhanced and cross-domain contrastive losses with
//! hand-derived gradients, and their weighted joint objective.

use crate::encoder::{DomainParams, ModelParams, Representations};
use crate::error::{Error, Result};
use crate::graph::{DomainGraph, DomainTag};
use crate::numeric::{axpy, dot, DenseMatrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// Sampled `(user, positive, negative)` triples per domain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TripletBatch {
    pub domains: [Vec<Triplet>; 2],
}

impl TripletBatch {
    pub fn domain(&self, tag: DomainTag) -> &[Triplet] {
        &self.domains[tag.index()]
    }

    /// Checks that every positive is a train edge and every negative is not.
    pub fn validate(&self, graphs: [&DomainGraph; 2]) -> Result<()> {
        for tag in DomainTag::BOTH {
            let g = graphs[tag.index()];
            for t in self.domain(tag) {
                if !g.has_edge(t.user, t.pos) || g.has_edge(t.user, t.neg) {
                    return Err(Error::Population(format!("domain {tag}: invalid triplet {t:?}")));
                }
            }
        }
        Ok(())
    }
}

/// Overlapping users sampled for one batch, as `(id in A, id in B)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapBatch {
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tau: f64,
    /// Adds the positive pair to the contrastive denominator (conventional
    /// InfoNCE) instead of summing over the other users only.
    pub include_positive_in_denominator: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            beta: 0.01,
            gamma: 1.0,
            tau: 0.1,
            include_positive_in_denominator: false,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || self.beta < 0.0 || self.gamma < 0.0 {
            return Err(Error::Config(format!("loss weights must be non-negative: {self:?}")));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Config(format!("temperature {} must be positive", self.tau)));
        }
        Ok(())
    }
}

/// Gradients of the joint objective: parameter tensors plus `∂L/∂r` per
/// domain, to be pulled back through the encoders.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub params: ModelParams<T>,
    pub reps: [DenseMatrix<T>; 2],
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros(params: &ModelParams<T>, reps: [&Representations<T>; 2]) -> Self {
        let z = |r: &Representations<T>| DenseMatrix::zeros(r.r.rows(), r.r.cols());
        Self {
            params: params.zeros_like(),
            reps: [z(reps[0]), z(reps[1])],
        }
    }
}

/// `-ln σ(x)` computed without overflow.
#[inline]
fn neg_log_sigmoid<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `λ(‖Θ_D‖² + ½‖Θ_proj‖²)`: each domain carries its own tensors and half of
/// the shared projections, so the two domains together penalize every tensor
/// once.
pub fn l2_penalty<T: Scalar>(params: &ModelParams<T>, tag: DomainTag, lambda: T, grads: Option<&mut Gradients<T>>, scale: T) -> T {
    if lambda == T::zero() {
        return T::zero();
    }
    let half = T::of(0.5);
    let value = lambda
        * (params.domain(tag).squared_norm() + half * (params.proj_a.squared_norm() + params.proj_b.squared_norm()));
    if let Some(g) = grads {
        let two = T::of(2.0);
        let own: Vec<&DenseMatrix<T>> = domain_tensors(params.domain(tag));
        let own_g = domain_tensors_mut(g.params.domain_mut(tag));
        for (gm, m) in own_g.into_iter().zip(own) {
            gm.add_scaled(m, scale * two * lambda);
        }
        for (gp, p) in [(&mut g.params.proj_a, &params.proj_a), (&mut g.params.proj_b, &params.proj_b)] {
            gp.w1.add_scaled(&p.w1, scale * lambda);
            gp.b1.add_scaled(&p.b1, scale * lambda);
            gp.w2.add_scaled(&p.w2, scale * lambda);
            gp.b2.add_scaled(&p.b2, scale * lambda);
        }
    }
    value
}

fn domain_tensors<T>(p: &DomainParams<T>) -> Vec<&DenseMatrix<T>> {
    vec![&p.user_templates, &p.item_templates, &p.bias_user, &p.bias_item, &p.se_projection]
}

fn domain_tensors_mut<T>(p: &mut DomainParams<T>) -> Vec<&mut DenseMatrix<T>> {
    vec![
        &mut p.user_templates,
        &mut p.item_templates,
        &mut p.bias_user,
        &mut p.bias_item,
        &mut p.se_projection,
    ]
}

fn bpr_data_term<T: Scalar>(reps: &Representations<T>, triplets: &[Triplet], grad_r: Option<&mut DenseMatrix<T>>, scale: T) -> Result<T> {
    if triplets.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let n = T::of_usize(triplets.len());
    let mut total = T::zero();
    let mut grad_r = grad_r;
    for t in triplets {
        let (ru, rp, rn) = (reps.user(t.user), reps.item(t.pos), reps.item(t.neg));
        let diff = dot(ru, rp) - dot(ru, rn);
        total += neg_log_sigmoid(diff);
        if let Some(g) = grad_r.as_deref_mut() {
            // d(-ln σ(Δ))/dΔ = -σ(-Δ)
            let c = -sigmoid(-diff) * scale / n;
            let nu = reps.n_users;
            let d = ru.len();
            let mut gu = vec![T::zero(); d];
            axpy(&mut gu, c, rp);
            axpy(&mut gu, -c, rn);
            axpy(g.row_mut(t.user), T::one(), &gu);
            axpy(g.row_mut(nu + t.pos), c, ru);
            axpy(g.row_mut(nu + t.neg), -c, ru);
        }
    }
    Ok(total / n)
}

/// Mean of `-ln σ(s(u,i) - s(u,i⁻))` over `triplets` with `s = r_u · r_i`,
/// plus the domain's share of `λ‖Θ‖²`.
pub fn bpr_loss<T: Scalar>(
    reps: &Representations<T>,
    triplets: &[Triplet],
    params: &ModelParams<T>,
    tag: DomainTag,
    lambda: f64,
    grads: Option<&mut Gradients<T>>,
) -> Result<T> {
    bpr_loss_scaled(reps, triplets, params, tag, lambda, grads, T::one())
}

fn bpr_loss_scaled<T: Scalar>(
    reps: &Representations<T>,
    triplets: &[Triplet],
    params: &ModelParams<T>,
    tag: DomainTag,
    lambda: f64,
    mut grads: Option<&mut Gradients<T>>,
    scale: T,
) -> Result<T> {
    let data = bpr_data_term(reps, triplets, grads.as_deref_mut().map(|g| &mut g.reps[tag.index()]), scale)?;
    Ok(data + l2_penalty(params, tag, T::of(lambda), grads, scale))
}

/// Self-enhanced loss: BPR over the batch's template triples, scored
/// directly on template embeddings as `e_u · W e_i`. Triples whose user,
/// positive or negative is not a template are skipped; none left gives 0.
pub fn se_loss<T: Scalar>(
    params: &ModelParams<T>,
    graph: &DomainGraph,
    triplets: &[Triplet],
    tag: DomainTag,
    grads: Option<&mut Gradients<T>>,
) -> Result<T> {
    se_loss_scaled(params, graph, triplets, tag, grads, T::one())
}

fn se_loss_scaled<T: Scalar>(
    params: &ModelParams<T>,
    graph: &DomainGraph,
    triplets: &[Triplet],
    tag: DomainTag,
    grads: Option<&mut Gradients<T>>,
    scale: T,
) -> Result<T> {
    let p = params.domain(tag);
    let rows: Vec<(usize, usize, usize)> = triplets
        .iter()
        .filter_map(|t| {
            Some((
                graph.user_template_row(t.user)?,
                graph.item_template_row(t.pos)?,
                graph.item_template_row(t.neg)?,
            ))
        })
        .collect();
    if rows.is_empty() {
        return Ok(T::zero());
    }
    let n = T::of_usize(rows.len());
    let d = params.dim;
    let w = &p.se_projection;
    let mut wp = vec![T::zero(); d];
    let mut wn = vec![T::zero(); d];
    let mut total = T::zero();
    let mut grads = grads;
    for &(u, ip, ineg) in &rows {
        let eu = p.user_templates.row(u);
        let ep = p.item_templates.row(ip);
        let en = p.item_templates.row(ineg);
        w.matvec(ep, &mut wp);
        w.matvec(en, &mut wn);
        let diff = dot(eu, &wp) - dot(eu, &wn);
        total += neg_log_sigmoid(diff);
        if let Some(g) = grads.as_deref_mut() {
            let c = -sigmoid(-diff) * scale / n;
            let gp = g.params.domain_mut(tag);
            // ∂s/∂e_u = W e_i, ∂s/∂e_i = Wᵀ e_u, ∂s/∂W = e_u e_iᵀ
            let mut gu = vec![T::zero(); d];
            axpy(&mut gu, c, &wp);
            axpy(&mut gu, -c, &wn);
            axpy(gp.user_templates.row_mut(u), T::one(), &gu);
            let mut wt_eu = vec![T::zero(); d];
            w.matvec_t_acc(eu, &mut wt_eu);
            axpy(gp.item_templates.row_mut(ip), c, &wt_eu);
            axpy(gp.item_templates.row_mut(ineg), -c, &wt_eu);
            gp.se_projection.add_outer(c, eu, ep);
            gp.se_projection.add_outer(-c, eu, en);
        }
    }
    Ok(total / n)
}

fn log_sum_exp<T: Scalar>(vals: impl Iterator<Item = T> + Clone) -> T {
    let m = vals.clone().fold(T::neg_infinity(), T::max);
    if m == T::neg_infinity() {
        return m;
    }
    m + vals.map(|v| (v - m).exp()).sum::<T>().ln()
}

/// `L₁ + L₂` over the overlap batch: projected representations
/// `z_A = f^A(r^A_u)`, `z_B = f^B(r^B_u)` are matched to their counterpart
/// against the other users of the batch, in both directions.
pub fn contrastive_loss<T: Scalar>(
    reps_a: &Representations<T>,
    reps_b: &Representations<T>,
    batch: &OverlapBatch,
    params: &ModelParams<T>,
    weights: &LossWeights,
    grads: Option<&mut Gradients<T>>,
) -> Result<T> {
    contrastive_loss_scaled(reps_a, reps_b, batch, params, weights, grads, T::one())
}

fn contrastive_loss_scaled<T: Scalar>(
    reps_a: &Representations<T>,
    reps_b: &Representations<T>,
    batch: &OverlapBatch,
    params: &ModelParams<T>,
    weights: &LossWeights,
    grads: Option<&mut Gradients<T>>,
    scale: T,
) -> Result<T> {
    let n = batch.pairs.len();
    if n < 2 {
        return Err(Error::BatchTooSmall(n));
    }
    let inv_tau = T::one() / T::of(weights.tau);
    let include_pos = weights.include_positive_in_denominator;
    let (za, ta): (Vec<Vec<T>>, Vec<_>) = batch
        .pairs
        .iter()
        .map(|&(a, _)| params.proj_a.forward(reps_a.user(a)))
        .unzip();
    let (zb, tb): (Vec<Vec<T>>, Vec<_>) = batch
        .pairs
        .iter()
        .map(|&(_, b)| params.proj_b.forward(reps_b.user(b)))
        .unzip();
    let s: Vec<Vec<T>> = za
        .iter()
        .map(|a| zb.iter().map(|b| dot(a, b) * inv_tau).collect())
        .collect();

    let nt = T::of_usize(n);
    let in_denominator = |k: usize, j: usize| include_pos || j != k;
    let mut l1 = T::zero();
    let mut l2 = T::zero();
    // gs[k][j] = ∂(L₁ + L₂)/∂s[k][j]
    let mut gs = vec![vec![T::zero(); n]; n];
    for k in 0..n {
        let row = (0..n).filter(|&j| in_denominator(k, j)).map(|j| s[k][j]);
        let col = (0..n).filter(|&j| in_denominator(k, j)).map(|j| s[j][k]);
        let lse_row = log_sum_exp(row);
        let lse_col = log_sum_exp(col);
        l1 += lse_row - s[k][k];
        l2 += lse_col - s[k][k];
        gs[k][k] -= T::of(2.0) / nt;
        for j in (0..n).filter(|&j| in_denominator(k, j)) {
            gs[k][j] += (s[k][j] - lse_row).exp() / nt;
            gs[j][k] += (s[j][k] - lse_col).exp() / nt;
        }
    }
    let loss = (l1 + l2) / nt;

    if let Some(g) = grads {
        let d = params.dim;
        for k in 0..n {
            let mut gza = vec![T::zero(); d];
            let mut gzb = vec![T::zero(); d];
            for j in 0..n {
                axpy(&mut gza, gs[k][j] * inv_tau * scale, &zb[j]);
                axpy(&mut gzb, gs[j][k] * inv_tau * scale, &za[j]);
            }
            let (ua, ub) = batch.pairs[k];
            let gra = params.proj_a.backward(&ta[k], &gza, &mut g.params.proj_a);
            let grb = params.proj_b.backward(&tb[k], &gzb, &mut g.params.proj_b);
            axpy(g.reps[0].row_mut(ua), T::one(), &gra);
            axpy(g.reps[1].row_mut(ub), T::one(), &grb);
        }
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown<T> {
    pub bpr: [T; 2],
    pub se: [T; 2],
    pub cl: T,
    pub total: T,
}

/// Everything the joint objective consumes for one step.
pub struct JointInputs<'a, T> {
    pub reps: [&'a Representations<T>; 2],
    pub graphs: [&'a DomainGraph; 2],
    pub batch: &'a TripletBatch,
    pub overlap: Option<&'a OverlapBatch>,
    pub params: &'a ModelParams<T>,
    pub weights: &'a LossWeights,
}

/// `(L_BPR^A + L_BPR^B) + β(L_SE^A + L_SE^B) + γ L_CL`. A domain with no
/// triplets in this batch contributes only its regularizer; the contrastive
/// term is skipped when `γ = 0` or no overlap batch is given.
pub fn joint_loss<T: Scalar>(inputs: &JointInputs<'_, T>, mut grads: Option<&mut Gradients<T>>) -> Result<LossBreakdown<T>> {
    let w = inputs.weights;
    w.validate()?;
    let beta = T::of(w.beta);
    let gamma = T::of(w.gamma);
    let mut bpr = [T::zero(); 2];
    let mut se = [T::zero(); 2];
    for tag in DomainTag::BOTH {
        let d = tag.index();
        let triplets = inputs.batch.domain(tag);
        bpr[d] = if triplets.is_empty() {
            l2_penalty(inputs.params, tag, T::of(w.lambda), grads.as_deref_mut(), T::one())
        } else {
            bpr_loss_scaled(inputs.reps[d], triplets, inputs.params, tag, w.lambda, grads.as_deref_mut(), T::one())?
        };
        if w.beta > 0.0 {
            se[d] = se_loss_scaled(inputs.params, inputs.graphs[d], triplets, tag, grads.as_deref_mut(), beta)?;
        }
    }
    let cl = match inputs.overlap {
        Some(ov) if w.gamma > 0.0 => {
            contrastive_loss_scaled(inputs.reps[0], inputs.reps[1], ov, inputs.params, w, grads, gamma)?
        }
        _ => T::zero(),
    };
    let total = bpr[0] + bpr[1] + beta * (se[0] + se[1]) + gamma * cl;
    Ok(LossBreakdown { bpr, se, cl, total })
}
