use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::DomainTag;
use crate::numeric::DenseMatrix;
use crate::scalar::Scalar;

/// Learnable tensors of one domain's encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainParams<T> {
    /// `|U_tem| x d`
    pub user_templates: DenseMatrix<T>,
    /// `|I_tem| x d`
    pub item_templates: DenseMatrix<T>,
    pub bias_user: DenseMatrix<T>,
    pub bias_item: DenseMatrix<T>,
    /// `d x d`, scores template pairs in the self-enhanced loss.
    pub se_projection: DenseMatrix<T>,
}

/// Two-layer feedforward map `d -> d` with a rectifier in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection<T> {
    pub w1: DenseMatrix<T>,
    pub b1: DenseMatrix<T>,
    pub w2: DenseMatrix<T>,
    pub b2: DenseMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub dim: usize,
    pub domains: [DomainParams<T>; 2],
    pub proj_a: Projection<T>,
    pub proj_b: Projection<T>,
}

/// Cached activations of a projection forward pass.
#[derive(Debug, Clone)]
pub struct ProjectionTrace<T> {
    input: Vec<T>,
    hidden_pre: Vec<T>,
    hidden: Vec<T>,
}

fn xavier<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> DenseMatrix<T> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| T::of(rng.gen_range(-bound..bound)))
}

fn normal<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, std: f64, rng: &mut R) -> DenseMatrix<T> {
    let dist = Normal::new(0.0, std).expect("positive std");
    DenseMatrix::from_fn(rows, cols, |_, _| T::of(dist.sample(rng)))
}

impl<T: Scalar> DomainParams<T> {
    pub fn init<R: Rng + ?Sized>(dim: usize, template_users: usize, template_items: usize, rng: &mut R) -> Self {
        Self {
            user_templates: normal(template_users, dim, 0.1, rng),
            item_templates: normal(template_items, dim, 0.1, rng),
            bias_user: DenseMatrix::zeros(1, dim),
            bias_item: DenseMatrix::zeros(1, dim),
            se_projection: xavier(dim, dim, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &DenseMatrix<T>| DenseMatrix::zeros(m.rows(), m.cols());
        Self {
            user_templates: z(&self.user_templates),
            item_templates: z(&self.item_templates),
            bias_user: z(&self.bias_user),
            bias_item: z(&self.bias_item),
            se_projection: z(&self.se_projection),
        }
    }

    fn tensors(&self) -> [(&'static str, &DenseMatrix<T>); 5] {
        [
            ("user_templates", &self.user_templates),
            ("item_templates", &self.item_templates),
            ("bias_user", &self.bias_user),
            ("bias_item", &self.bias_item),
            ("se_projection", &self.se_projection),
        ]
    }

    fn tensors_mut(&mut self) -> [&mut DenseMatrix<T>; 5] {
        [
            &mut self.user_templates,
            &mut self.item_templates,
            &mut self.bias_user,
            &mut self.bias_item,
            &mut self.se_projection,
        ]
    }

    pub fn squared_norm(&self) -> T {
        self.tensors().iter().map(|(_, m)| m.squared_norm()).sum()
    }
}

impl<T: Scalar> Projection<T> {
    pub fn init<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        Self {
            w1: xavier(dim, dim, rng),
            b1: DenseMatrix::zeros(1, dim),
            w2: xavier(dim, dim, rng),
            b2: DenseMatrix::zeros(1, dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &DenseMatrix<T>| DenseMatrix::zeros(m.rows(), m.cols());
        Self {
            w1: z(&self.w1),
            b1: z(&self.b1),
            w2: z(&self.w2),
            b2: z(&self.b2),
        }
    }

    fn tensors(&self) -> [(&'static str, &DenseMatrix<T>); 4] {
        [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)]
    }

    fn tensors_mut(&mut self) -> [&mut DenseMatrix<T>; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn squared_norm(&self) -> T {
        self.tensors().iter().map(|(_, m)| m.squared_norm()).sum()
    }

    pub fn forward(&self, x: &[T]) -> (Vec<T>, ProjectionTrace<T>) {
        let d = self.w1.rows();
        let mut hidden_pre = vec![T::zero(); d];
        self.w1.matvec(x, &mut hidden_pre);
        for (h, &b) in hidden_pre.iter_mut().zip(self.b1.as_slice()) {
            *h += b;
        }
        let hidden: Vec<T> = hidden_pre.iter().map(|&h| h.max(T::zero())).collect();
        let mut out = vec![T::zero(); self.w2.rows()];
        self.w2.matvec(&hidden, &mut out);
        for (o, &b) in out.iter_mut().zip(self.b2.as_slice()) {
            *o += b;
        }
        let trace = ProjectionTrace {
            input: x.to_vec(),
            hidden_pre,
            hidden,
        };
        (out, trace)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input.
    pub fn backward(&self, trace: &ProjectionTrace<T>, grad_out: &[T], grads: &mut Projection<T>) -> Vec<T> {
        grads.w2.add_outer(T::one(), grad_out, &trace.hidden);
        crate::numeric::axpy(grads.b2.as_mut_slice(), T::one(), grad_out);
        let mut grad_hidden = vec![T::zero(); trace.hidden.len()];
        self.w2.matvec_t_acc(grad_out, &mut grad_hidden);
        for (g, &pre) in grad_hidden.iter_mut().zip(&trace.hidden_pre) {
            if pre <= T::zero() {
                *g = T::zero();
            }
        }
        grads.w1.add_outer(T::one(), &grad_hidden, &trace.input);
        crate::numeric::axpy(grads.b1.as_mut_slice(), T::one(), &grad_hidden);
        let mut grad_in = vec![T::zero(); trace.input.len()];
        self.w1.matvec_t_acc(&grad_hidden, &mut grad_in);
        grad_in
    }
}

impl<T: Scalar> ModelParams<T> {
    /// `templates[d] = (template users, template items)` of domain `d`.
    pub fn init<R: Rng + ?Sized>(dim: usize, templates: [(usize, usize); 2], rng: &mut R) -> Self {
        let a = DomainParams::init(dim, templates[0].0, templates[0].1, rng);
        let b = DomainParams::init(dim, templates[1].0, templates[1].1, rng);
        Self {
            dim,
            domains: [a, b],
            proj_a: Projection::init(dim, rng),
            proj_b: Projection::init(dim, rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            dim: self.dim,
            domains: [self.domains[0].zeros_like(), self.domains[1].zeros_like()],
            proj_a: self.proj_a.zeros_like(),
            proj_b: self.proj_b.zeros_like(),
        }
    }

    pub fn domain(&self, tag: DomainTag) -> &DomainParams<T> {
        &self.domains[tag.index()]
    }

    pub fn domain_mut(&mut self, tag: DomainTag) -> &mut DomainParams<T> {
        &mut self.domains[tag.index()]
    }

    /// Named tensors in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &DenseMatrix<T>)> {
        let mut out = Vec::new();
        for tag in DomainTag::BOTH {
            for (name, m) in self.domain(tag).tensors() {
                out.push((format!("{tag}.{name}"), m));
            }
        }
        for (prefix, p) in [("proj_a", &self.proj_a), ("proj_b", &self.proj_b)] {
            for (name, m) in p.tensors() {
                out.push((format!("{prefix}.{name}"), m));
            }
        }
        out
    }

    /// Mutable tensors in the order of [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut DenseMatrix<T>> {
        let [a, b] = &mut self.domains;
        let mut out: Vec<&mut DenseMatrix<T>> = Vec::new();
        out.extend(a.tensors_mut());
        out.extend(b.tensors_mut());
        out.extend(self.proj_a.tensors_mut());
        out.extend(self.proj_b.tensors_mut());
        out
    }

    pub fn n_values(&self) -> usize {
        self.named_tensors().iter().map(|(_, m)| m.as_slice().len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, m)| m.is_finite())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.named_tensors()
            .iter()
            .flat_map(|(_, m)| m.as_slice().iter().map(|v| v.as_f64()))
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_values() {
            return Err(Error::Dimension(format!(
                "{} values for {} parameters",
                flat.len(),
                self.n_values()
            )));
        }
        let mut pos = 0;
        for m in self.tensors_mut() {
            for v in m.as_mut_slice() {
                *v = T::of(flat[pos]);
                pos += 1;
            }
        }
        Ok(())
    }

    /// `self += s * other`, tensor-wise.
    pub fn add_scaled(&mut self, other: &Self, s: T) {
        let others: Vec<&DenseMatrix<T>> = other.named_tensors().into_iter().map(|(_, m)| m).collect();
        for (m, o) in self.tensors_mut().into_iter().zip(others) {
            m.add_scaled(o, s);
        }
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let dom = |p: &DomainParams<T>| DomainParams {
            user_templates: p.user_templates.cast(),
            item_templates: p.item_templates.cast(),
            bias_user: p.bias_user.cast(),
            bias_item: p.bias_item.cast(),
            se_projection: p.se_projection.cast(),
        };
        let proj = |p: &Projection<T>| Projection {
            w1: p.w1.cast(),
            b1: p.b1.cast(),
            w2: p.w2.cast(),
            b2: p.b2.cast(),
        };
        ModelParams {
            dim: self.dim,
            domains: [dom(&self.domains[0]), dom(&self.domains[1])],
            proj_a: proj(&self.proj_a),
            proj_b: proj(&self.proj_b),
        }
    }
}
