//! Invertible coupling flows with exact inverse and log-determinant.
//!
//! Two variants are provided. [`FlowVariant::ConstDet`] stacks additive
//! couplings followed by one diagonal scaling layer, so the Jacobian
//! determinant is the same at every input. [`FlowVariant::General`] uses
//! affine couplings whose log-scale depends on the passive half, so the
//! determinant varies with the input.
//!
//! Coordinates are split by index parity: layer `i` keeps the even (or odd)
//! coordinates fixed and transforms the rest, alternating from layer to
//! layer. A `D = 3` input is split 2/1, then 1/2, and so on.

mod jacobian;

pub use jacobian::{log_abs_det, numeric_jacobian_logdet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::ad::{Backend, Eager, Tensor};
use crate::error::{dim_err, Error, Result};

/// Negative-side slope of the hidden activations.
pub const LEAKY_SLOPE: f64 = 0.01;
/// Hidden layers per coupling network (so each net has this many + 1 linear maps).
pub const HIDDEN_LAYERS: usize = 2;
/// Bound on the affine log-scale: `s = MAX_LOG_SCALE · tanh(raw / MAX_LOG_SCALE)`.
pub const MAX_LOG_SCALE: f64 = 5.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowVariant {
    ConstDet,
    General,
}

/// Which coordinate half stays fixed in a coupling layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    fn for_layer(i: usize) -> Self {
        if i.is_multiple_of(2) {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    /// `(passive, active)` coordinate indices for dimension `dim`.
    pub fn split(self, dim: usize) -> (Vec<usize>, Vec<usize>) {
        let even: Vec<usize> = (0..dim).step_by(2).collect();
        let odd: Vec<usize> = (1..dim).step_by(2).collect();
        match self {
            Parity::Even => (even, odd),
            Parity::Odd => (odd, even),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    /// `[in × out]`
    pub weight: Tensor,
    /// `[out]`
    pub bias: Tensor,
}

/// Fully connected net: leaky-ReLU between layers, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    /// Hidden weights are Kaiming-uniform; the output layer and all biases are zero.
    fn init(input: usize, hidden: usize, output: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut widths = vec![input];
        widths.extend(std::iter::repeat_n(hidden, HIDDEN_LAYERS));
        widths.push(output);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| if i == last { 0.0 } else { rng.gen_range(-bound..bound) })
                    .collect();
                Linear {
                    weight: Tensor::from_parts(vec![fan_in, fan_out], data),
                    bias: Tensor::from_parts(vec![fan_out], vec![0.0; fan_out]),
                }
            })
            .collect();
        Self { layers }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CouplingLayer {
    pub parity: Parity,
    pub shift_net: Mlp,
    /// Present only for affine couplings.
    pub scale_net: Option<Mlp>,
}

/// Per-coordinate scaling `z_j = y_j · exp(log_scale_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingLayer {
    pub log_scale: Tensor,
}

/// Architecture of a [`FlowModel`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FlowConfig {
    pub dim: usize,
    pub variant: FlowVariant,
    pub n_blocks: usize,
    pub couplings_per_block: usize,
    pub hidden_dim: usize,
    pub seed: u64,
}

impl FlowConfig {
    /// Four blocks of four couplings with 256 hidden units.
    pub fn new(dim: usize, variant: FlowVariant) -> Self {
        Self {
            dim,
            variant,
            n_blocks: 4,
            couplings_per_block: 4,
            hidden_dim: 256,
            seed: 0,
        }
    }

    pub fn with_hidden_dim(mut self, hidden_dim: usize) -> Self {
        self.hidden_dim = hidden_dim;
        self
    }

    pub fn with_blocks(mut self, n_blocks: usize, couplings_per_block: usize) -> Self {
        self.n_blocks = n_blocks;
        self.couplings_per_block = couplings_per_block;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    config: FlowConfig,
    couplings: Vec<CouplingLayer>,
    scaling: Option<ScalingLayer>,
}

impl FlowModel {
    /// Build a model that is exactly the identity map.
    pub fn init(config: FlowConfig) -> Result<Self> {
        let FlowConfig {
            dim,
            variant,
            n_blocks,
            couplings_per_block,
            hidden_dim,
            seed,
        } = config;
        if dim < 2 {
            return Err(Error::Config(format!(
                "flow dimension must be at least 2 to split coordinates, got {dim}"
            )));
        }
        if n_blocks == 0 || couplings_per_block == 0 || hidden_dim == 0 {
            return Err(Error::Config(
                "n_blocks, couplings_per_block and hidden_dim must be positive".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let couplings = (0..n_blocks * couplings_per_block)
            .map(|i| {
                let parity = Parity::for_layer(i);
                let (passive, active) = parity.split(dim);
                let shift_net = Mlp::init(passive.len(), hidden_dim, active.len(), &mut rng);
                let scale_net = (variant == FlowVariant::General)
                    .then(|| Mlp::init(passive.len(), hidden_dim, active.len(), &mut rng));
                CouplingLayer {
                    parity,
                    shift_net,
                    scale_net,
                }
            })
            .collect();
        let scaling = (variant == FlowVariant::ConstDet).then(|| ScalingLayer {
            log_scale: Tensor::from_parts(vec![dim], vec![0.0; dim]),
        });
        Ok(Self {
            config,
            couplings,
            scaling,
        })
    }

    pub fn config(&self) -> FlowConfig {
        self.config
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn variant(&self) -> FlowVariant {
        self.config.variant
    }

    pub fn couplings(&self) -> &[CouplingLayer] {
        &self.couplings
    }

    pub fn scaling(&self) -> Option<&ScalingLayer> {
        self.scaling.as_ref()
    }

    pub fn scaling_mut(&mut self) -> Option<&mut ScalingLayer> {
        self.scaling.as_mut()
    }

    /// Every trainable tensor with a stable name, in canonical order.
    pub fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, c) in self.couplings.iter().enumerate() {
            let nets = std::iter::once(("shift", &c.shift_net)).chain(c.scale_net.iter().map(|n| ("scale", n)));
            for (kind, net) in nets {
                for (l, layer) in net.layers.iter().enumerate() {
                    out.push((format!("coupling.{i}.{kind}.{l}.weight"), &layer.weight));
                    out.push((format!("coupling.{i}.{kind}.{l}.bias"), &layer.bias));
                }
            }
        }
        if let Some(s) = &self.scaling {
            out.push(("scaling.log_scale".to_string(), &s.log_scale));
        }
        out
    }

    /// Mutable view of [`parameters`](Self::parameters), same order.
    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for c in &mut self.couplings {
            for net in std::iter::once(&mut c.shift_net).chain(c.scale_net.as_mut()) {
                for layer in &mut net.layers {
                    out.push(&mut layer.weight);
                    out.push(&mut layer.bias);
                }
            }
        }
        if let Some(s) = &mut self.scaling {
            out.push(&mut s.log_scale);
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    /// Add `N(0, std²)` noise to every parameter. Used to obtain non-trivial
    /// models in tests and diagnostics.
    pub fn perturb(&mut self, std: f64, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, std).expect("finite std");
        for t in self.parameters_mut() {
            for v in t.data_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }

    /// Register every parameter on `backend`.
    pub fn bind<B: Backend>(&self, backend: &mut B) -> BoundFlow<B::Value> {
        let mut params = Vec::new();
        let mut bind_net = |net: &Mlp, params: &mut Vec<B::Value>| -> Vec<(B::Value, B::Value)> {
            net.layers
                .iter()
                .map(|l| {
                    let w = backend.param(&l.weight);
                    let b = backend.param(&l.bias);
                    params.push(w.clone());
                    params.push(b.clone());
                    (w, b)
                })
                .collect()
        };
        let dim = self.dim();
        let mut couplings = Vec::with_capacity(self.couplings.len());
        for c in &self.couplings {
            let (passive, active) = c.parity.split(dim);
            let shift = bind_net(&c.shift_net, &mut params);
            let scale = c.scale_net.as_ref().map(|n| bind_net(n, &mut params));
            couplings.push(BoundCoupling {
                passive,
                active,
                shift,
                scale,
            });
        }
        let scaling = self.scaling.as_ref().map(|s| {
            let v = backend.param(&s.log_scale);
            params.push(v.clone());
            v
        });
        BoundFlow {
            dim,
            variant: self.variant(),
            couplings,
            scaling,
            params,
        }
    }

    /// `z = f(x)` and `log|det df(x)|` per row, evaluated without a tape.
    pub fn forward_eval(&self, x: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let mut eager = Eager;
        let bound = self.bind(&mut eager);
        let (z, ld) = bound.forward(&mut eager, x)?;
        Ok((z, ld.into_data()))
    }

    /// `x = f⁻¹(z)` and `log|det d(f⁻¹)(z)|` per row, evaluated without a tape.
    pub fn inverse_eval(&self, z: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        let mut eager = Eager;
        let bound = self.bind(&mut eager);
        let (x, ld) = bound.inverse(&mut eager, z)?;
        Ok((x, ld.into_data()))
    }

    /// Euclidean norms `‖f(x_i)‖`, processed in chunks.
    pub fn latent_norms(&self, x: &Tensor) -> Result<Vec<f64>> {
        const CHUNK: usize = 4096;
        check_input(x, self.dim())?;
        let mut eager = Eager;
        let bound = self.bind(&mut eager);
        let mut out = Vec::with_capacity(x.rows());
        for rows in x.data().chunks(CHUNK * self.dim()) {
            let chunk = Tensor::matrix(rows.len() / self.dim(), self.dim(), rows.to_vec())?;
            let (z, _) = bound.forward(&mut eager, &chunk)?;
            out.extend(z.data().chunks(self.dim()).map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt()));
        }
        Ok(out)
    }
}

fn check_input(x: &Tensor, dim: usize) -> Result<()> {
    if !x.is_matrix() || x.cols() != dim {
        return Err(dim_err(format!(
            "flow of dimension {dim} cannot take input of shape {:?}",
            x.shape()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
struct BoundCoupling<V> {
    passive: Vec<usize>,
    active: Vec<usize>,
    shift: Vec<(V, V)>,
    scale: Option<Vec<(V, V)>>,
}

/// A [`FlowModel`] whose parameters live on a particular backend.
#[derive(Clone, Debug)]
pub struct BoundFlow<V> {
    dim: usize,
    variant: FlowVariant,
    couplings: Vec<BoundCoupling<V>>,
    scaling: Option<V>,
    params: Vec<V>,
}

fn mlp<B: Backend>(b: &mut B, layers: &[(B::Value, B::Value)], x: &B::Value) -> Result<B::Value> {
    let mut h = x.clone();
    for (i, (w, bias)) in layers.iter().enumerate() {
        h = b.matmul(&h, w)?;
        h = b.add_bias(&h, bias)?;
        if i + 1 < layers.len() {
            h = b.leaky_relu(&h, LEAKY_SLOPE)?;
        }
    }
    Ok(h)
}

fn bounded_log_scale<B: Backend>(
    b: &mut B,
    layers: &[(B::Value, B::Value)],
    x: &B::Value,
) -> Result<B::Value> {
    let raw = mlp(b, layers, x)?;
    let raw = b.scale(&raw, 1.0 / MAX_LOG_SCALE)?;
    let t = b.tanh(&raw)?;
    b.scale(&t, MAX_LOG_SCALE)
}

impl<V: Clone> BoundFlow<V> {
    /// Parameter handles in the order of [`FlowModel::parameters`].
    pub fn params(&self) -> &[V] {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn variant(&self) -> FlowVariant {
        self.variant
    }

    fn zero_logdet<B: Backend<Value = V>>(b: &mut B, n: usize) -> V {
        b.constant(Tensor::from_parts(vec![n], vec![0.0; n]))
    }

    /// `(z, log|det df(x)|)` for a batch `x: [n × D]`.
    pub fn forward<B: Backend<Value = V>>(&self, b: &mut B, x: &V) -> Result<(V, V)> {
        check_input(b.tensor(x), self.dim)?;
        let n = b.tensor(x).rows();
        let mut logdet = Self::zero_logdet(b, n);
        let mut h = x.clone();
        for c in &self.couplings {
            let xp = b.select_cols(&h, &c.passive)?;
            let xa = b.select_cols(&h, &c.active)?;
            let t = mlp(b, &c.shift, &xp)?;
            let ya = match &c.scale {
                Some(scale) => {
                    let s = bounded_log_scale(b, scale, &xp)?;
                    let es = b.exp(&s)?;
                    let scaled = b.mul(&xa, &es)?;
                    let rs = b.row_sum(&s)?;
                    logdet = b.add(&logdet, &rs)?;
                    b.add(&scaled, &t)?
                }
                None => b.add(&xa, &t)?,
            };
            h = b.merge_cols(&xp, &c.passive, &ya, &c.active)?;
        }
        if let Some(log_scale) = &self.scaling {
            let factor = b.exp(log_scale)?;
            h = b.mul_cols(&h, &factor)?;
            let total = b.sum(log_scale)?;
            logdet = b.add(&logdet, &total)?;
        }
        Ok((h, logdet))
    }

    /// `(x, log|det d(f⁻¹)(z)|)` for a batch `z: [n × D]`.
    pub fn inverse<B: Backend<Value = V>>(&self, b: &mut B, z: &V) -> Result<(V, V)> {
        check_input(b.tensor(z), self.dim)?;
        let n = b.tensor(z).rows();
        let mut logdet = Self::zero_logdet(b, n);
        let mut h = z.clone();
        if let Some(log_scale) = &self.scaling {
            let neg = b.scale(log_scale, -1.0)?;
            let factor = b.exp(&neg)?;
            h = b.mul_cols(&h, &factor)?;
            let total = b.sum(&neg)?;
            logdet = b.add(&logdet, &total)?;
        }
        for c in self.couplings.iter().rev() {
            let yp = b.select_cols(&h, &c.passive)?;
            let ya = b.select_cols(&h, &c.active)?;
            let t = mlp(b, &c.shift, &yp)?;
            let diff = b.sub(&ya, &t)?;
            let xa = match &c.scale {
                Some(scale) => {
                    let s = bounded_log_scale(b, scale, &yp)?;
                    let neg = b.scale(&s, -1.0)?;
                    let es = b.exp(&neg)?;
                    let rs = b.row_sum(&neg)?;
                    logdet = b.add(&logdet, &rs)?;
                    b.mul(&diff, &es)?
                }
                None => diff,
            };
            h = b.merge_cols(&yp, &c.passive, &xa, &c.active)?;
        }
        Ok((h, logdet))
    }
}
