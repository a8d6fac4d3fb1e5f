//! Scoring against a frozen bounding region and the detection metrics.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ad::{descending_permutation, Tensor};
use crate::data::Standardizer;
use crate::error::{dim_err, Error, Result};
use crate::flow::{FlowConfig, FlowModel, FlowVariant};
use crate::quantile::check_alpha;

/// How a region was trained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Minimum-volume objective, constant-Jacobian flow.
    #[default]
    ConstDet,
    /// Minimum-volume objective, input-dependent Jacobian.
    General,
    /// Likelihood baseline on a constant-Jacobian flow.
    LlFlow,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::ConstDet, Method::General, Method::LlFlow];

    pub fn flow_variant(self) -> FlowVariant {
        match self {
            Method::ConstDet | Method::LlFlow => FlowVariant::ConstDet,
            Method::General => FlowVariant::General,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Method::ConstDet => "const_det",
            Method::General => "general",
            Method::LlFlow => "ll_flow",
        }
    }

    /// Display name used in benchmark tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::ConstDet => "OneFlow",
            Method::General => "OneFlow-Gen",
            Method::LlFlow => "LL-Flow",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant '{s}' (expected const_det, general or ll_flow)")))
    }
}

/// The set `{x : ‖f(standardize(x))‖ ≤ radius}`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundingRegion {
    pub model: FlowModel,
    pub radius: f64,
    pub alpha: f64,
    pub standardizer: Standardizer,
    pub method: Method,
}

impl BoundingRegion {
    pub fn new(
        model: FlowModel,
        radius: f64,
        alpha: f64,
        standardizer: Standardizer,
        method: Method,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        if !radius.is_finite() || radius < 0.0 {
            return Err(Error::Config(format!("radius must be finite and non-negative, got {radius}")));
        }
        if standardizer.dim() != model.dim() {
            return Err(dim_err(format!(
                "standardizer has dimension {} but the flow has {}",
                standardizer.dim(),
                model.dim()
            )));
        }
        if method.flow_variant() != model.variant() {
            return Err(Error::Config(format!(
                "method {method} needs a {:?} flow, got {:?}",
                method.flow_variant(),
                model.variant()
            )));
        }
        Ok(Self { model, radius, alpha, standardizer, method })
    }

    /// Identity flow and identity standardizer: the region is the ball `B(0, radius)`.
    pub fn identity(dim: usize, radius: f64, alpha: f64) -> Result<Self> {
        let model = FlowModel::init(FlowConfig::new(dim, FlowVariant::ConstDet).with_blocks(1, 2).with_hidden_dim(4))?;
        Self::new(model, radius, alpha, Standardizer::identity(dim), Method::ConstDet)
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    /// `‖f(standardize(x_i))‖`; larger means more anomalous.
    pub fn score(&self, x: &Tensor) -> Result<Vec<f64>> {
        let z = self.standardizer.apply(x)?;
        self.model.latent_norms(&z)
    }

    pub fn contains(&self, x: &Tensor) -> Result<Vec<bool>> {
        Ok(self.score(x)?.into_iter().map(|s| s <= self.radius).collect())
    }

    /// Fraction of rows inside the region.
    pub fn coverage(&self, x: &Tensor) -> Result<f64> {
        let inside = self.contains(x)?;
        Ok(inside.iter().filter(|&&b| b).count() as f64 / inside.len() as f64)
    }
}

fn check_labels(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(dim_err(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(i) = labels.iter().position(|&l| l > 1) {
        return Err(Error::Metric(format!("label at index {i} is {}, expected 0 or 1", labels[i])));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(Error::Metric(format!("score at index {i} is NaN")));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    Ok((pos, labels.len() - pos))
}

/// Area under the ROC curve for "label 1 scores higher", with ties counted
/// as one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (pos, neg) = check_labels(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("AUC needs both classes among the labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of 1-based midranks over the positives, doubled to stay integral.
    let mut twice_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let twice_midrank = (start + 1 + end) as u128;
        let tied_pos = order[start..end].iter().filter(|&&i| labels[i] == 1).count() as u128;
        twice_rank_sum += tied_pos * twice_midrank;
        start = end;
    }
    let (pos, neg) = (pos as u128, neg as u128);
    let twice_u = twice_rank_sum - pos * (pos + 1);
    Ok(twice_u as f64 / (2 * pos * neg) as f64)
}

/// Precision, recall and F1 when the `k` highest scores are flagged.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold_count: usize,
}

/// Flags the top `k` scores as anomalies; equal scores keep index order.
pub fn prf1_at_count(scores: &[f64], labels: &[u8], k: usize) -> Result<Prf1> {
    let (pos, _) = check_labels(scores, labels)?;
    if k == 0 || k > scores.len() {
        return Err(Error::Config(format!("k must lie in 1..={}, got {k}", scores.len())));
    }
    if pos == 0 {
        return Err(Error::Metric("recall is undefined without anomalies".into()));
    }
    let perm = descending_permutation(scores)?;
    let tp = perm[..k].iter().filter(|&&i| labels[i] == 1).count() as f64;
    Ok(Prf1 {
        precision: tp / k as f64,
        recall: tp / pos as f64,
        f1: 2.0 * tp / (k + pos) as f64,
        threshold_count: k,
    })
}

/// How many of the highest scores count as predicted anomalies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum KRule {
    Count(usize),
    /// `⌈f · n⌉`
    Fraction(f64),
    /// The number of label-1 rows.
    TrueCount,
}

impl KRule {
    pub fn resolve(self, labels: &[u8]) -> Result<usize> {
        let n = labels.len();
        match self {
            KRule::Count(k) => Ok(k),
            KRule::Fraction(f) if f > 0.0 && f <= 1.0 => Ok(((f * n as f64).ceil() as usize).max(1)),
            KRule::Fraction(f) => Err(Error::Config(format!("k fraction must lie in (0, 1], got {f}"))),
            KRule::TrueCount => Ok(labels.iter().filter(|&&l| l == 1).count()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub coverage: f64,
    pub threshold_count: usize,
    pub n: usize,
    pub n_anomalies: usize,
}

/// All metrics for a labelled sample.
pub fn evaluate(region: &BoundingRegion, x: &Tensor, labels: &[u8], rule: KRule) -> Result<Metrics> {
    let scores = region.score(x)?;
    let k = rule.resolve(labels)?;
    let prf = prf1_at_count(&scores, labels, k)?;
    let inside = scores.iter().filter(|&&s| s <= region.radius).count();
    Ok(Metrics {
        auc: auc(&scores, labels)?,
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        coverage: inside as f64 / scores.len() as f64,
        threshold_count: k,
        n: scores.len(),
        n_anomalies: labels.iter().filter(|&&l| l == 1).count(),
    })
}

#[cfg(test)]
mod tests;
