use serde::{Deserialize, Serialize};

use super::{check_finite, LossValue};
use crate::error::{Error, Result};

/// Raw (unnormalized) classifier outputs, one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("empty logit vector".into()));
        }
        check_finite("logits", &values)?;
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest logit; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.0.iter().enumerate().skip(1) {
            if v > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Same logits shifted by `c`.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|v| v + c).collect())
    }
}

impl TryFrom<Vec<f64>> for LogitVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<LogitVector> for Vec<f64> {
    fn from(l: LogitVector) -> Self {
        l.0
    }
}

/// Energy score `-ln sum_k exp(l_k)`, via a max-shifted log-sum-exp.
///
/// Low energy indicates an active source, high energy indicates silence.
pub fn energy_score(logits: &LogitVector) -> f64 {
    let v = logits.values();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = v.iter().map(|l| (l - max).exp()).sum();
    -(max + sum.ln())
}

/// Squared hinge on energy scores:
/// `mean_in max(0, E - m_in)^2 + mean_out max(0, m_out - E)^2`.
///
/// An empty list contributes zero. The gradient is over `[in..., out...]`.
pub fn energy_hinge_loss(in_scores: &[f64], out_scores: &[f64], m_in: f64, m_out: f64) -> Result<LossValue> {
    if in_scores.is_empty() && out_scores.is_empty() {
        return Err(Error::InvalidArgument("both energy score lists are empty".into()));
    }
    check_finite("energy scores", in_scores)?;
    check_finite("energy scores", out_scores)?;
    check_finite("energy margins", &[m_in, m_out])?;
    let mut value = 0.0;
    let mut gradient = Vec::with_capacity(in_scores.len() + out_scores.len());
    if !in_scores.is_empty() {
        let inv = 1.0 / in_scores.len() as f64;
        for &e in in_scores {
            let h = (e - m_in).max(0.0);
            value += inv * h * h;
            gradient.push(2.0 * inv * h);
        }
    }
    if !out_scores.is_empty() {
        let inv = 1.0 / out_scores.len() as f64;
        for &e in out_scores {
            let h = (m_out - e).max(0.0);
            value += inv * h * h;
            gradient.push(-2.0 * inv * h);
        }
    }
    Ok(LossValue::with_gradient(value, gradient))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{ENERGY_MARGIN_IN, ENERGY_MARGIN_OUT};
    use proptest::prelude::*;

    fn l(x: &[f64]) -> LogitVector {
        LogitVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn energy_examples() {
        let e = energy_score(&l(&[0.0; 18]));
        assert!((e - -2.890_371_757_896_165).abs() < 1e-12);
        assert_eq!(energy_score(&l(&[5.0])), -5.0);
        let big = energy_score(&l(&[1000.0, 1000.0]));
        assert!((big - -1_000.693_147_180_559_9).abs() < 1e-9, "{big}");
    }

    #[test]
    fn hinge_examples() {
        let (mi, mo) = (ENERGY_MARGIN_IN, ENERGY_MARGIN_OUT);
        assert_eq!(energy_hinge_loss(&[-7.0], &[0.0], mi, mo).unwrap().value, 0.0);
        assert_eq!(energy_hinge_loss(&[-5.0], &[], mi, mo).unwrap().value, 1.0);
        assert_eq!(energy_hinge_loss(&[], &[-2.0], mi, mo).unwrap().value, 1.0);
        assert!(energy_hinge_loss(&[], &[], mi, mo).is_err());
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(l(&[1.0, 3.0, 3.0]).argmax(), 1);
        assert_eq!(l(&[2.0, 2.0]).argmax(), 0);
    }

    #[test]
    fn logits_reject_nan() {
        assert!(LogitVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(serde_json::from_str::<LogitVector>("[]").is_err());
    }

    proptest! {
        #[test]
        fn shift_moves_energy_exactly(
            v in prop::collection::vec(-50.0f64..50.0, 2..20),
            c in -20.0f64..20.0,
        ) {
            let a = energy_score(&l(&v));
            let b = energy_score(&l(&v).shifted(c).unwrap());
            prop_assert!((b - (a - c)).abs() < 1e-9);
        }
    }
}
