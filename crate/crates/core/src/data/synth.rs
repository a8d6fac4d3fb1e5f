use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::ad::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthName {
    TwoMoons,
    BigUniform,
    TwoBlobs,
    Doughnut,
    DiverseBlobs,
}

impl SynthName {
    pub const ALL: [SynthName; 5] = [
        SynthName::TwoMoons,
        SynthName::BigUniform,
        SynthName::TwoBlobs,
        SynthName::Doughnut,
        SynthName::DiverseBlobs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SynthName::TwoMoons => "two_moons",
            SynthName::BigUniform => "big_uniform",
            SynthName::TwoBlobs => "two_blobs",
            SynthName::Doughnut => "doughnut",
            SynthName::DiverseBlobs => "diverse_blobs",
        }
    }
}

impl fmt::Display for SynthName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SynthName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|n| n.as_str()).collect();
                Error::Config(format!("unknown dataset '{s}' (known: {})", known.join(", ")))
            })
    }
}

/// Generator constants. The defaults are the reference settings used by the
/// 2D benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    /// Std of the Gaussian noise added to both moons (unit radius).
    pub moon_noise: f64,
    /// Samples are uniform on `[-w, w]²`.
    pub uniform_half_width: f64,
    /// Blob centers `(±c, 0)`.
    pub blob_offset: f64,
    pub blob_std: f64,
    pub doughnut_radius: f64,
    pub doughnut_sigma: f64,
    pub diverse_large_std: f64,
    pub diverse_small_center: [f64; 2],
    pub diverse_small_std: f64,
    /// Share of rows in the small (anomalous) blob.
    pub diverse_small_fraction: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            moon_noise: 0.1,
            uniform_half_width: 4.0,
            blob_offset: 2.0,
            blob_std: 0.5,
            doughnut_radius: 1.0,
            doughnut_sigma: 0.1,
            diverse_large_std: 1.0,
            diverse_small_center: [4.0, 4.0],
            diverse_small_std: 0.25,
            diverse_small_fraction: 0.02,
        }
    }
}

pub fn synth(name: SynthName, n: usize, seed: u64) -> Result<Dataset> {
    synth_with(name, n, seed, &SynthParams::default())
}

pub fn synth_with(name: SynthName, n: usize, seed: u64, p: &SynthParams) -> Result<Dataset> {
    if n < 10 {
        return Err(Error::Config(format!("synthetic datasets need n >= 10, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |std: f64| Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()));
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut labels = None;
    match name {
        SynthName::TwoMoons => {
            let noise = gauss(p.moon_noise)?;
            for i in 0..n {
                let t = rng.gen_range(0.0..PI);
                let (x, y) = if i < n / 2 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                pts.push([x + noise.sample(&mut rng), y + noise.sample(&mut rng)]);
            }
        }
        SynthName::BigUniform => {
            let w = p.uniform_half_width;
            for _ in 0..n {
                pts.push([rng.gen_range(-w..w), rng.gen_range(-w..w)]);
            }
        }
        SynthName::TwoBlobs => {
            let noise = gauss(p.blob_std)?;
            for i in 0..n {
                let cx = if i < n / 2 { -p.blob_offset } else { p.blob_offset };
                pts.push([cx + noise.sample(&mut rng), noise.sample(&mut rng)]);
            }
        }
        SynthName::Doughnut => {
            let radial = Normal::new(p.doughnut_radius, p.doughnut_sigma).map_err(|e| Error::Config(e.to_string()))?;
            for _ in 0..n {
                let angle = rng.gen_range(0.0..2.0 * PI);
                let r = radial.sample(&mut rng).max(1e-6);
                pts.push([r * angle.cos(), r * angle.sin()]);
            }
        }
        SynthName::DiverseBlobs => {
            let small = (p.diverse_small_fraction * n as f64).round() as usize;
            let large = gauss(p.diverse_large_std)?;
            let tight = gauss(p.diverse_small_std)?;
            let [sx, sy] = p.diverse_small_center;
            for i in 0..n {
                if i < n - small {
                    pts.push([large.sample(&mut rng), large.sample(&mut rng)]);
                } else {
                    pts.push([sx + tight.sample(&mut rng), sy + tight.sample(&mut rng)]);
                }
            }
            labels = Some((0..n).map(|i| u8::from(i >= n - small)).collect());
        }
    }
    let features = Tensor::matrix(n, 2, pts.into_iter().flatten().collect())?;
    let mut ds = Dataset::new(features, labels, name.as_str())?;
    ds.seed = Some(seed);
    Ok(ds)
}
