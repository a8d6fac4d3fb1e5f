//! Mini-batch training of a bounding region.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ad::{Backend, Tape, Tensor};
use crate::data::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::eval::{BoundingRegion, Method};
use crate::flow::{FlowConfig, FlowModel};
use crate::objective::{cost_const_det, cost_general, nll_with_sq_norms, BallSampler};
use crate::quantile::{bernstein_quantile_value, check_alpha, simple_upper_quantile};

mod adam;
mod checkpoint;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};

/// Batches smaller than this are dropped unless they are the only batch.
pub const MIN_BATCH: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub variant: Method,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub n_blocks: usize,
    pub couplings_per_block: usize,
    pub hidden_dim: usize,
    /// Unit-ball samples per step for the general cost.
    pub mc_samples: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            variant: Method::ConstDet,
            epochs: 1000,
            batch_size: 1000,
            learning_rate: 1e-3,
            n_blocks: 4,
            couplings_per_block: 4,
            hidden_dim: 256,
            mc_samples: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings for two-dimensional toy data.
    pub fn preset_2d() -> Self {
        Self { hidden_dim: 16, ..Self::default() }
    }

    /// Settings for small tabular benchmarks.
    pub fn preset_tabular() -> Self {
        Self {
            n_blocks: 2,
            couplings_per_block: 6,
            hidden_dim: 64,
            epochs: 2000,
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("training config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        let positive = [
            ("epochs", self.epochs),
            ("n_blocks", self.n_blocks),
            ("couplings_per_block", self.couplings_per_block),
            ("hidden_dim", self.hidden_dim),
            ("mc_samples", self.mc_samples),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be at least 2, got {}", self.batch_size)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        Ok(())
    }

    pub fn flow_config(&self, dim: usize) -> FlowConfig {
        FlowConfig::new(dim, self.variant.flow_variant())
            .with_blocks(self.n_blocks, self.couplings_per_block)
            .with_hidden_dim(self.hidden_dim)
            .with_seed(self.seed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean training loss over the epoch's batches.
    pub mean_cost: f64,
    /// Frozen-radius rule applied to the latent norms seen during the epoch.
    /// Each norm comes from the model as it was when its batch was drawn.
    pub radius_estimate: f64,
    /// Share of those norms within `radius_estimate`.
    pub coverage_on_train: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub method: Method,
    pub optimizer: String,
    pub alpha: f64,
    pub seed: u64,
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

/// Seed for a sub-stream, mixed with splitmix64 so nearby inputs decorrelate.
pub(crate) fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut h = seed;
    for &p in parts {
        h = h.wrapping_add(p.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x9E37_79B9_7F4A_7C15);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// Split a shuffled index list into batches.
pub(crate) fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < MIN_BATCH) {
        out.pop();
    }
    out
}

/// Radius at which the region is frozen for a given method.
pub fn frozen_radius(method: Method, radii: &[f64], alpha: f64) -> Result<f64> {
    match method {
        Method::ConstDet | Method::General => bernstein_quantile_value(radii, alpha),
        Method::LlFlow => simple_upper_quantile(radii, alpha),
    }
}

/// Loss of one batch on a fresh tape, with parameter gradients and the
/// batch's latent norms.
fn batch_loss(
    model: &FlowModel,
    config: &TrainConfig,
    x: Tensor,
    sampler_seed: u64,
) -> Result<(f64, Vec<Vec<f64>>, Vec<f64>)> {
    let mut tape = Tape::new();
    let flow = model.bind(&mut tape);
    let x = tape.constant(x);
    let (loss, radii) = match config.variant {
        Method::ConstDet => {
            let c = cost_const_det(&mut tape, &flow, &x, config.alpha)?;
            (c.total, tape.value(c.radii).data().to_vec())
        }
        Method::General => {
            let sampler = BallSampler::new(model.dim(), config.mc_samples, sampler_seed)?;
            let c = cost_general(&mut tape, &flow, &x, config.alpha, &sampler)?;
            (c.total, tape.value(c.radii).data().to_vec())
        }
        Method::LlFlow => {
            let (loss, sq) = nll_with_sq_norms(&mut tape, &flow, &x)?;
            (loss, tape.value(sq).data().iter().map(|v| v.sqrt()).collect())
        }
    };
    let value = tape.value(loss).item();
    let grads = tape.backward(loss)?;
    let per_param = flow
        .params()
        .iter()
        .map(|&p| match grads.wrt(p) {
            Some(g) => g.to_vec(),
            None => vec![0.0; tape.value(p).len()],
        })
        .collect();
    Ok((value, per_param, radii))
}

/// Fit a region to `data` (raw units; the standardizer is fitted here).
///
/// Each epoch visits a fresh permutation of the rows in mini-batches and
/// takes one Adam step per batch. After the last epoch the radius is frozen
/// from the latent norms of the whole training set.
pub fn train(data: &Dataset, config: &TrainConfig) -> Result<(BoundingRegion, TrainHistory)> {
    config.validate()?;
    let n = data.n();
    if n < 2 {
        return Err(Error::Data(format!("training needs at least 2 rows, got {n}")));
    }
    let standardizer = Standardizer::fit(&data.features)?;
    let x = standardizer.apply(&data.features)?;
    let mut model = FlowModel::init(config.flow_config(data.dim()))?;
    let mut adam = AdamState::for_model(&model);

    let mut history = TrainHistory {
        method: config.variant,
        optimizer: "adam".into(),
        alpha: config.alpha,
        seed: config.seed,
        records: Vec::with_capacity(config.epochs),
    };
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[1, epoch as u64]));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut radii = Vec::with_capacity(n);
        let epoch_batches = batches(&order, config.batch_size);
        for (step, idx) in epoch_batches.iter().enumerate() {
            let xb = x.select_rows(idx)?;
            let sampler_seed = derive_seed(config.seed, &[2, epoch as u64, step as u64]);
            let (loss, grads, batch_radii) = batch_loss(&model, config, xb, sampler_seed)?;
            if !loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, step, loss });
            }
            adam_step(&mut model.parameters_mut(), &grads, &mut adam, config.learning_rate)?;
            total += loss;
            radii.extend(batch_radii);
        }
        let radius = frozen_radius(config.variant, &radii, config.alpha)?;
        let inside = radii.iter().filter(|&&r| r <= radius).count();
        history.records.push(EpochRecord {
            epoch,
            mean_cost: total / epoch_batches.len() as f64,
            radius_estimate: radius,
            coverage_on_train: inside as f64 / radii.len() as f64,
        });
    }
    let radius = frozen_radius(config.variant, &model.latent_norms(&x)?, config.alpha)?;
    if !radius.is_finite() {
        return Err(Error::Diverged { epoch: config.epochs, step: 0, loss: radius });
    }
    let region = BoundingRegion::new(model, radius, config.alpha, standardizer, config.variant)?;
    Ok((region, history))
}
