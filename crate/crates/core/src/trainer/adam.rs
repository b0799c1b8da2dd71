use crate::encoder::ModelParams;
use crate::scalar::Scalar;

/// Adam first/second moments shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub m: ModelParams<T>,
    pub v: ModelParams<T>,
    pub steps: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>, lr: f64, betas: (f64, f64), eps: f64) {
        self.steps += 1;
        let (b1, b2) = (T::of(betas.0), T::of(betas.1));
        let one = T::one();
        let bias1 = one - b1.powi(self.steps as i32);
        let bias2 = one - b2.powi(self.steps as i32);
        let (lr, eps) = (T::of(lr), T::of(eps));
        let grads: Vec<_> = grads.named_tensors().into_iter().map(|(_, g)| g).collect();
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads);
        for (((p, m), v), g) in tensors {
            for (((p, m), v), &g) in p
                .as_mut_slice()
                .iter_mut()
                .zip(m.as_mut_slice())
                .zip(v.as_mut_slice())
                .zip(g.as_slice())
            {
                *m = b1 * *m + (one - b1) * g;
                *v = b2 * *v + (one - b2) * g * g;
                let m_hat = *m / bias1;
                let v_hat = *v / bias2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
