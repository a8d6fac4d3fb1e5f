//! Log-volume cost functions for the bounding region `f⁻¹(B(0, R_α))`, and
//! the negative log-likelihood baseline.
//!
//! Const-det flows have an exact volume, `vol(B(0,1)) · w · R^D`, where `w`
//! is the (constant) inverse Jacobian determinant. General flows estimate
//! `∫_{B(0,R)} w` by Monte Carlo over `m` uniform points of the unit ball.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

use crate::ad::{Backend, Tensor};
use crate::error::{Error, Result};
use crate::flow::{BoundFlow, FlowVariant};
use crate::quantile::{bernstein_upper_quantile, QuantileEstimate};

/// `ln vol(B(0,1))` in `ℝ^D`: `(D/2)·ln π − ln Γ(D/2 + 1)`.
pub fn log_unit_ball_volume(dim: usize) -> Result<f64> {
    if dim < 1 {
        return Err(Error::Config("unit ball needs dimension >= 1".into()));
    }
    let d = dim as f64;
    Ok(0.5 * d * PI.ln() - ln_gamma(0.5 * d + 1.0))
}

/// Deterministic source of points uniform on the unit ball.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BallSampler {
    pub dim: usize,
    pub m: usize,
    pub seed: u64,
}

impl BallSampler {
    pub fn new(dim: usize, m: usize, seed: u64) -> Result<Self> {
        let s = Self { dim, m, seed };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::Config("ball sampler needs m >= 1".into()));
        }
        if self.dim < 1 {
            return Err(Error::Config("ball sampler needs dim >= 1".into()));
        }
        Ok(())
    }

    /// `m × D` matrix: normalized Gaussian directions, radius `U^{1/D}`.
    pub fn sample(&self) -> Result<Tensor> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let d = self.dim;
        let mut data = Vec::with_capacity(self.m * d);
        let mut dir = vec![0.0; d];
        for _ in 0..self.m {
            let norm = loop {
                dir.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > 0.0 {
                    break n;
                }
            };
            let radius = rng.gen::<f64>().powf(1.0 / d as f64);
            data.extend(dir.iter().map(|v| v / norm * radius));
        }
        Tensor::matrix(self.m, d, data)
    }
}

/// A cost value together with its additive parts.
///
/// `total == log_unit_ball_vol + log_w_term + d_log_r_term`.
#[derive(Clone, Debug)]
pub struct CostBreakdown<V> {
    pub total: V,
    pub log_unit_ball_vol: f64,
    /// `ln w` (const-det) or `ln((1/m) Σ_k w(R e_k))` (general).
    pub log_w_term: V,
    pub d_log_r_term: V,
    pub radius_estimate: QuantileEstimate<V>,
    /// Latent norm of every batch row.
    pub radii: V,
}

/// Euclidean norm of every row of `z`.
pub fn row_norms<B: Backend>(b: &mut B, z: &B::Value) -> Result<B::Value> {
    let sq = b.square(z)?;
    let s = b.row_sum(&sq)?;
    b.sqrt(&s)
}

fn batch_rows<B: Backend>(b: &B, x: &B::Value) -> Result<usize> {
    let t = b.tensor(x);
    if !t.is_matrix() {
        return Err(Error::Dimension(format!("batch must be a matrix, got shape {:?}", t.shape())));
    }
    Ok(t.rows())
}

/// Radius estimate `R_α` of the batch norms and the term `D · ln R_α`.
fn radius_term<B: Backend>(
    b: &mut B,
    flow: &BoundFlow<B::Value>,
    radii: &B::Value,
    alpha: f64,
) -> Result<(QuantileEstimate<B::Value>, B::Value)> {
    let estimate = bernstein_upper_quantile(b, radii, alpha)?;
    let log_r = b.log(&estimate.value)?;
    let d_log_r = b.scale(&log_r, flow.dim() as f64)?;
    Ok((estimate, d_log_r))
}

/// Exact log-volume of the region for a const-det flow.
pub fn cost_const_det<B: Backend>(
    b: &mut B,
    flow: &BoundFlow<B::Value>,
    x: &B::Value,
    alpha: f64,
) -> Result<CostBreakdown<B::Value>> {
    if flow.variant() != FlowVariant::ConstDet {
        return Err(Error::Config(format!(
            "cost_const_det needs a const-det flow, got {:?}",
            flow.variant()
        )));
    }
    if batch_rows(b, x)? < 2 {
        return Err(Error::Data("const-det cost needs a batch of at least 2 rows".into()));
    }
    let (z, log_det) = flow.forward(b, x)?;
    let radii = row_norms(b, &z)?;
    let (estimate, d_log_r) = radius_term(b, flow, &radii, alpha)?;
    // Every row carries the same log-determinant; the mean keeps one copy.
    let mean_ld = b.mean(&log_det)?;
    let log_w = b.scale(&mean_ld, -1.0)?;
    let log_ball = log_unit_ball_volume(flow.dim())?;
    let sum = b.add(&log_w, &d_log_r)?;
    let total = b.offset(&sum, log_ball)?;
    Ok(CostBreakdown {
        total,
        log_unit_ball_vol: log_ball,
        log_w_term: log_w,
        d_log_r_term: d_log_r,
        radius_estimate: estimate,
        radii,
    })
}

/// Monte Carlo log-volume of the region:
/// `ln(vol(B(0,1))/m) + D ln R_α + ln Σ_k w(R_α e_k)`.
///
/// The inner sum is a log-sum-exp of inverse log-determinants at `R_α e_k`,
/// so the gradient also flows through `R_α` inside `w`. Valid for any flow;
/// for a const-det flow it reduces to [`cost_const_det`].
pub fn cost_general<B: Backend>(
    b: &mut B,
    flow: &BoundFlow<B::Value>,
    x: &B::Value,
    alpha: f64,
    sampler: &BallSampler,
) -> Result<CostBreakdown<B::Value>> {
    sampler.validate()?;
    if sampler.dim != flow.dim() {
        return Err(Error::Dimension(format!(
            "ball sampler of dimension {} for a flow of dimension {}",
            sampler.dim,
            flow.dim()
        )));
    }
    batch_rows(b, x)?;
    let (z, _) = flow.forward(b, x)?;
    let radii = row_norms(b, &z)?;
    let (estimate, d_log_r) = radius_term(b, flow, &radii, alpha)?;

    let e = b.constant(sampler.sample()?);
    let latent = b.mul(&e, &estimate.value)?;
    let (_, log_w_inv) = flow.inverse(b, &latent)?;
    let lse = b.logsumexp(&log_w_inv)?;
    let log_w = b.offset(&lse, -(sampler.m as f64).ln())?;

    let log_ball = log_unit_ball_volume(flow.dim())?;
    let sum = b.add(&log_w, &d_log_r)?;
    let total = b.offset(&sum, log_ball)?;
    Ok(CostBreakdown {
        total,
        log_unit_ball_vol: log_ball,
        log_w_term: log_w,
        d_log_r_term: d_log_r,
        radius_estimate: estimate,
        radii,
    })
}

/// Mean negative log-likelihood under a standard-normal latent prior.
pub fn nll_loss<B: Backend>(b: &mut B, flow: &BoundFlow<B::Value>, x: &B::Value) -> Result<B::Value> {
    nll_with_sq_norms(b, flow, x).map(|(loss, _)| loss)
}

/// [`nll_loss`] together with the squared latent norm of every row.
pub(crate) fn nll_with_sq_norms<B: Backend>(
    b: &mut B,
    flow: &BoundFlow<B::Value>,
    x: &B::Value,
) -> Result<(B::Value, B::Value)> {
    batch_rows(b, x)?;
    let (z, log_det) = flow.forward(b, x)?;
    let sq = b.square(&z)?;
    let sq = b.row_sum(&sq)?;
    let half = b.scale(&sq, 0.5)?;
    let per_row = b.sub(&half, &log_det)?;
    let mean = b.mean(&per_row)?;
    let loss = b.offset(&mean, 0.5 * flow.dim() as f64 * (2.0 * PI).ln())?;
    Ok((loss, sq))
}
