use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Coordinates probed; every coordinate is checked when the parameter
    /// vector is shorter.
    pub max_coords: usize,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            eps: 1e-6,
            max_coords: 64,
        }
    }
}

/// Compares `analytic` against central finite differences of `loss` at
/// `params` and returns the maximum relative error, using
/// `max(|a|, |g|, 1e-8)` as denominator.
pub fn grad_check<F, R>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    cfg: GradCheckConfig,
    rng: &mut R,
) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
    R: Rng + ?Sized,
{
    if params.len() != analytic.len() {
        return Err(Error::Dimension(format!(
            "{} params vs {} gradient entries",
            params.len(),
            analytic.len()
        )));
    }
    if !(1e-6..=1e-4).contains(&cfg.eps) {
        return Err(Error::Config(format!("grad_check eps {} outside [1e-6, 1e-4]", cfg.eps)));
    }
    let coords: Vec<usize> = if params.len() <= cfg.max_coords {
        (0..params.len()).collect()
    } else {
        let mut c = sample(rng, params.len(), cfg.max_coords).into_vec();
        c.sort_unstable();
        c
    };
    let base = loss(params)?;
    if !base.is_finite() {
        return Err(Error::NonFinite(format!("loss {base} at unperturbed params")));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for k in coords {
        let orig = probe[k];
        probe[k] = orig + cfg.eps;
        let plus = loss(&probe)?;
        probe[k] = orig - cfg.eps;
        let minus = loss(&probe)?;
        probe[k] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss at perturbed coordinate {k}")));
        }
        let numeric = (plus - minus) / (2.0 * cfg.eps);
        let a = analytic[k];
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
