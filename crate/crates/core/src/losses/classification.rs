use super::{check_finite, LossValue, COS_CLIP};
use crate::error::{Error, Result};
use crate::vocab::ClassId;

const UNIT_TOL: f64 = 1e-9;

/// Probability vector over `C` classes: non-negative, sums to one (1e-9).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument("probability vector needs C >= 2".into()));
        }
        check_finite("probabilities", &values)?;
        if values.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidArgument("negative probability entries".into()));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {sum}")));
        }
        Ok(Self(values))
    }

    pub fn uniform(c: usize) -> Result<Self> {
        Self::new(vec![1.0 / c as f64; c])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// `KL(p || u)` against the uniform distribution, natural log, `0 ln 0 = 0`.
///
/// The gradient is `ln(C p_k) + 1`; entries with `p_k = 0` use the smallest
/// positive normal in place of zero so the gradient stays finite.
pub fn kl_uniform_loss(p: &ProbVector) -> LossValue {
    let c = p.0.len() as f64;
    let value =
        p.0.iter()
            .map(|&pk| if pk == 0.0 { 0.0 } else { pk * (pk * c).ln() })
            .sum();
    let gradient =
        p.0.iter()
            .map(|&pk| (pk.max(f64::MIN_POSITIVE) * c).ln() + 1.0)
            .collect();
    LossValue::with_gradient(value, gradient)
}

/// Embedding feature and class centers, all unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingGeometry {
    feature: Vec<f64>,
    centers: Vec<Vec<f64>>,
}

impl EmbeddingGeometry {
    pub fn new(feature: Vec<f64>, centers: Vec<Vec<f64>>) -> Result<Self> {
        if centers.len() < 2 {
            return Err(Error::InvalidArgument("need at least two class centers".into()));
        }
        let dim = feature.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("empty embedding".into()));
        }
        for (i, v) in std::iter::once(&feature).chain(&centers).enumerate() {
            if v.len() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "embedding vector {i} has dim {}, expected {dim}",
                    v.len()
                )));
            }
            check_finite("embedding", v)?;
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidArgument(format!(
                    "embedding vector {i} has norm {norm}, expected 1"
                )));
            }
        }
        Ok(Self { feature, centers })
    }

    pub fn feature(&self) -> &[f64] {
        &self.feature
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    pub fn num_classes(&self) -> usize {
        self.centers.len()
    }
}

/// Additive angular margin loss with gradient w.r.t. the feature.
///
/// Target logit `s cos(theta_y + m)`, other logits `s cos(theta_k)`, then
/// softmax cross-entropy. Cosines are clipped by [`COS_CLIP`] before `acos`;
/// clipped components contribute no gradient.
pub fn arcface_loss(geom: &EmbeddingGeometry, label: ClassId, scale: f64, margin: f64) -> Result<LossValue> {
    let c = geom.num_classes();
    if label.0 >= c {
        return Err(Error::InvalidArgument(format!(
            "label {label} out of range for {c} classes"
        )));
    }
    check_finite("arcface parameters", &[scale, margin])?;
    let y = label.0;
    let lo = -1.0 + COS_CLIP;
    let hi = 1.0 - COS_CLIP;
    let raw_cos: Vec<f64> = geom
        .centers
        .iter()
        .map(|w| w.iter().zip(&geom.feature).map(|(a, b)| a * b).sum())
        .collect();
    let cos: Vec<f64> = raw_cos.iter().map(|&v| v.clamp(lo, hi)).collect();
    let theta_y = cos[y].acos();
    let logits: Vec<f64> = cos
        .iter()
        .enumerate()
        .map(|(k, &ck)| {
            if k == y {
                scale * (theta_y + margin).cos()
            } else {
                scale * ck
            }
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|z| (z - max).exp()).sum();
    let lse = max + sum.ln();
    // ln(1 + sum_{k != y} e^{z_k - z_y}) keeps relative accuracy for tiny losses
    let rest: f64 = logits
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != y)
        .map(|(_, z)| z - logits[y])
        .fold(f64::NEG_INFINITY, f64::max);
    let value = if rest < 700.0 {
        logits
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != y)
            .map(|(_, z)| (z - logits[y]).exp())
            .sum::<f64>()
            .ln_1p()
    } else {
        lse - logits[y]
    };

    // dL/dz_k = softmax_k - [k == y]
    let mut gradient = vec![0.0; geom.feature.len()];
    for (k, w) in geom.centers.iter().enumerate() {
        if raw_cos[k] <= lo || raw_cos[k] >= hi {
            continue;
        }
        let dz = (logits[k] - lse).exp() - if k == y { 1.0 } else { 0.0 };
        let dcos = if k == y {
            scale * (theta_y + margin).sin() / theta_y.sin()
        } else {
            scale
        };
        for (g, wi) in gradient.iter_mut().zip(w) {
            *g += dz * dcos * wi;
        }
    }
    Ok(LossValue::with_gradient(value, gradient))
}
