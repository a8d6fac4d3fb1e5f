//! Upper `(1 − α)`-quantile estimators for batches of latent radii.
//!
//! With radii sorted in non-increasing order `r_(1) ≥ … ≥ r_(n)`, the
//! Bernstein estimate is `Σ_k C(n−1, k−1) α^{k−1} (1−α)^{n−k} · r_(k)`. It is
//! a convex combination whose weight mass sits around rank `nα`, so its
//! gradient reaches only the radii near the decision boundary.

use statrs::function::gamma::ln_gamma;

use crate::ad::{Backend, Eager, Tensor};
use crate::error::{dim_err, Error, Result};

/// Differentiable Bernstein estimate of the upper quantile.
#[derive(Clone, Debug)]
pub struct QuantileEstimate<V> {
    /// Scalar estimate, differentiable with respect to the radii.
    pub value: V,
    /// Weight of the `k`-th largest radius.
    pub weights: Vec<f64>,
    /// `sorted[k] == radii[perm[k]]`.
    pub perm: Vec<usize>,
    pub alpha: f64,
    pub n: usize,
}

impl<V> QuantileEstimate<V> {
    /// Weight attached to each input radius, in input order.
    pub fn weights_by_input(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (k, &i) in self.perm.iter().enumerate() {
            out[i] = self.weights[k];
        }
        out
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Bernstein weights over descending-sorted radii.
///
/// Evaluated in the log domain and normalized, so large `n` neither
/// overflows the binomial coefficient nor underflows every term.
pub fn bernstein_weights(n: usize, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    if n == 0 {
        return Err(Error::Config("bernstein weights need n >= 1".into()));
    }
    let (la, lb) = (alpha.ln(), (-alpha).ln_1p());
    let ln_n = ln_gamma(n as f64);
    let logs: Vec<f64> = (0..n)
        .map(|j| {
            let log_binom = ln_n - ln_gamma(j as f64 + 1.0) - ln_gamma((n - j) as f64);
            log_binom + j as f64 * la + (n - 1 - j) as f64 * lb
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total = neumaier_sum(&w);
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

fn neumaier_sum(xs: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = sum + x;
        comp += if sum.abs() >= x.abs() { (sum - t) + x } else { (x - t) + sum };
        sum = t;
    }
    sum + comp
}

fn check_radii(values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(dim_err("quantile of an empty sample"));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("radius {i} is not finite: {}", values[i])));
    }
    Ok(())
}

/// Bernstein upper quantile of a radii vector, differentiable through the sort.
pub fn bernstein_upper_quantile<B: Backend>(
    b: &mut B,
    radii: &B::Value,
    alpha: f64,
) -> Result<QuantileEstimate<B::Value>> {
    check_alpha(alpha)?;
    let t = b.tensor(radii);
    if t.shape().len() != 1 {
        return Err(dim_err(format!("radii must be a vector, got shape {:?}", t.shape())));
    }
    check_radii(t.data())?;
    let n = t.len();
    let weights = bernstein_weights(n, alpha)?;
    let (sorted, perm) = b.sort_descending(radii)?;
    let w = b.constant(Tensor::vector(weights.clone()));
    let weighted = b.mul(&sorted, &w)?;
    let value = b.sum(&weighted)?;
    Ok(QuantileEstimate {
        value,
        weights,
        perm,
        alpha,
        n,
    })
}

/// Plain-number form of [`bernstein_upper_quantile`].
pub fn bernstein_quantile_value(radii: &[f64], alpha: f64) -> Result<f64> {
    check_radii(radii)?;
    let est = bernstein_upper_quantile(&mut Eager, &Tensor::vector(radii.to_vec()), alpha)?;
    Ok(est.value.item())
}

/// Single order statistic of the descending sample: rank `αn` when that is
/// an integer, otherwise rank `⌊αn⌋ + 1` (ranks are 1-based).
pub fn simple_upper_quantile(radii: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_radii(radii)?;
    let n = radii.len();
    let an = alpha * n as f64;
    let rank = if (an - an.round()).abs() < 1e-9 && an.round() >= 1.0 {
        an.round() as usize
    } else {
        an.floor() as usize + 1
    };
    let mut sorted = radii.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[rank.min(n) - 1])
}

/// Number of weights strictly above `threshold`.
pub fn effective_support(weights: &[f64], threshold: f64) -> usize {
    weights.iter().filter(|&&w| w > threshold).count()
}
