//! Decision boundary of a 2D region: the preimage of the latent circle of
//! radius `R`, plus its length and the enclosed area.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ad::Tensor;
use crate::error::{Error, Result};
use crate::eval::BoundingRegion;

pub const MIN_BOUNDARY_POINTS: usize = 16;

/// Axis-aligned rectangle `[min, max]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl BBox {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Result<Self> {
        let b = Self { min, max };
        if b.area().is_nan() || b.area() <= 0.0 || b.area().is_infinite() {
            return Err(Error::Geometry(format!("bounding box {min:?}..{max:?} has no area")));
        }
        Ok(b)
    }

    /// Square `[-h, h]²`.
    pub fn centered(half_width: f64) -> Result<Self> {
        Self::new([-half_width; 2], [half_width; 2])
    }

    /// Data extent grown by `margin` times its span on every side.
    pub fn around(x: &Tensor, margin: f64) -> Result<Self> {
        if !x.is_matrix() || x.cols() != 2 || x.rows() == 0 {
            return Err(Error::Geometry(format!("expected an n×2 matrix, got {:?}", x.shape())));
        }
        let mut min = [f64::INFINITY; 2];
        let mut max = [f64::NEG_INFINITY; 2];
        for p in x.data().chunks(2) {
            for j in 0..2 {
                min[j] = min[j].min(p[j]);
                max[j] = max[j].max(p[j]);
            }
        }
        for j in 0..2 {
            let pad = margin * (max[j] - min[j]).max(1e-9);
            min[j] -= pad;
            max[j] += pad;
        }
        Self::new(min, max)
    }

    /// Union with another box.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            min: [self.min[0].min(other.min[0]), self.min[1].min(other.min[1])],
            max: [self.max[0].max(other.max[0]), self.max[1].max(other.max[1])],
        }
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

fn check_2d(region: &BoundingRegion) -> Result<()> {
    if region.dim() != 2 {
        return Err(Error::Config(format!("boundary tools need a 2D region, got dimension {}", region.dim())));
    }
    Ok(())
}

/// `k_points` vertices `f⁻¹(R·(cos θ, sin θ))` at equally spaced angles, in
/// data units. The loop closes implicitly.
pub fn boundary_polyline_2d(region: &BoundingRegion, k_points: usize) -> Result<Vec<[f64; 2]>> {
    check_2d(region)?;
    if k_points < MIN_BOUNDARY_POINTS {
        return Err(Error::Config(format!(
            "need at least {MIN_BOUNDARY_POINTS} boundary points, got {k_points}"
        )));
    }
    let r = region.radius;
    let latent: Vec<f64> = (0..k_points)
        .flat_map(|i| {
            let t = 2.0 * PI * i as f64 / k_points as f64;
            [r * t.cos(), r * t.sin()]
        })
        .collect();
    let (x, _) = region.model.inverse_eval(&Tensor::matrix(k_points, 2, latent)?)?;
    let x = region.standardizer.invert(&x)?;
    Ok(x.data().chunks(2).map(|p| [p[0], p[1]]).collect())
}

/// Perimeter of the closed polygon through `poly`.
pub fn boundary_length(poly: &[[f64; 2]]) -> Result<f64> {
    if poly.len() < 3 {
        return Err(Error::Geometry(format!("a closed boundary needs 3 vertices, got {}", poly.len())));
    }
    Ok(poly
        .iter()
        .zip(poly.iter().cycle().skip(1))
        .map(|(a, b)| (a[0] - b[0]).hypot(a[1] - b[1]))
        .sum())
}

/// Monte Carlo area of the region inside `bbox`.
pub fn region_area_mc(region: &BoundingRegion, bbox: &BBox, n_samples: usize, seed: u64) -> Result<f64> {
    Ok(bbox.area() * region_fraction_mc(region, bbox, n_samples, seed)?)
}

/// Fraction of uniform samples from `bbox` that fall inside the region.
pub fn region_fraction_mc(region: &BoundingRegion, bbox: &BBox, n_samples: usize, seed: u64) -> Result<f64> {
    const CHUNK: usize = 1 << 16;
    check_2d(region)?;
    let bbox = BBox::new(bbox.min, bbox.max)?;
    if n_samples == 0 {
        return Err(Error::Config("need at least one Monte Carlo sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inside = 0usize;
    let mut left = n_samples;
    while left > 0 {
        let m = left.min(CHUNK);
        let pts: Vec<f64> = (0..m)
            .flat_map(|_| {
                [
                    rng.gen_range(bbox.min[0]..bbox.max[0]),
                    rng.gen_range(bbox.min[1]..bbox.max[1]),
                ]
            })
            .collect();
        let scores = region.score(&Tensor::matrix(m, 2, pts)?)?;
        inside += scores.iter().filter(|&&s| s <= region.radius).count();
        left -= m;
    }
    Ok(inside as f64 / n_samples as f64)
}

/// `x,y` rows with a header.
pub fn write_polyline_csv<W: Write>(poly: &[[f64; 2]], mut out: W) -> Result<()> {
    writeln!(out, "x,y")?;
    for p in poly {
        writeln!(out, "{:?},{:?}", p[0], p[1])?;
    }
    Ok(())
}

/// Standalone SVG with the boundary as one closed path. The y axis is
/// flipped so the picture matches the usual plot orientation.
pub fn polyline_svg(poly: &[[f64; 2]], size_px: u32) -> Result<String> {
    if poly.len() < 3 {
        return Err(Error::Geometry("an SVG boundary needs 3 vertices".into()));
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in poly {
        for j in 0..2 {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-12);
    let pad = 0.05 * span;
    let scale = f64::from(size_px) / (span + 2.0 * pad);
    let mut path = String::new();
    for (i, p) in poly.iter().enumerate() {
        let x = (p[0] - lo[0] + pad) * scale;
        let y = (hi[1] - p[1] + pad) * scale;
        let cmd = if i == 0 { 'M' } else { 'L' };
        write!(path, "{cmd}{x:.3},{y:.3} ").expect("writing to a String cannot fail");
    }
    path.push('Z');
    Ok(format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size_px}\" height=\"{size_px}\" viewBox=\"0 0 {size_px} {size_px}\">\n  <path d=\"{path}\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n</svg>\n"
    ))
}

#[cfg(test)]
mod tests;
