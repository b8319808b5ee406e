//! Training objectives with analytic gradients.
//!
//! All logarithms in the classification and energy losses are natural logs;
//! the ratio losses report decibels (`10 log10`). Ratio losses add
//! [`RATIO_EPS`] to their denominators instead of clamping, so they stay
//! finite and differentiable at perfect reconstruction.
//!
//! Gradients are taken with respect to the trainable argument only: the
//! estimates, the probability vector, the embedding feature, or the energy
//! scores. Multi-signal gradients are flattened in argument order.

mod classification;
mod energy;
mod ratio;

pub use classification::{arcface_loss, kl_uniform_loss, EmbeddingGeometry, ProbVector};
pub use energy::{energy_hinge_loss, energy_score, LogitVector};
pub use ratio::{masked_snr_loss, sa_sdr_loss, si_snr_loss};

use crate::error::{Error, Result};

/// Denominator floor for the ratio losses.
pub const RATIO_EPS: f64 = 1e-12;
/// Interference/noise weight in the separation objective.
pub const USS_AUX_WEIGHT: f64 = 0.01;
/// ArcFace scale.
pub const ARCFACE_SCALE: f64 = 32.0;
/// ArcFace additive angular margin, radians.
pub const ARCFACE_MARGIN: f64 = 0.5;
/// Cosines are clipped to `[-1 + COS_CLIP, 1 - COS_CLIP]` before `acos`.
pub const COS_CLIP: f64 = 1e-7;
/// Energy margin for active (in-distribution) samples.
pub const ENERGY_MARGIN_IN: f64 = -6.0;
/// Energy margin for silent (out-of-distribution) samples.
pub const ENERGY_MARGIN_OUT: f64 = -1.0;
/// Weight of the energy hinge in the second classifier fine-tuning step.
pub const ENERGY_WEIGHT: f64 = 0.001;

/// A loss value with an optional gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
}

impl LossValue {
    pub(crate) fn with_gradient(value: f64, gradient: Vec<f64>) -> Self {
        Self {
            value,
            gradient: Some(gradient),
        }
    }
}

fn check_finite(what: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Separation objective: `foreground + weight * (interference + noise)`.
pub fn uss_loss(foreground: f64, interference: f64, noise: f64, weight: f64) -> Result<f64> {
    check_finite("uss loss terms", &[foreground, interference, noise, weight])?;
    Ok(foreground + weight * (interference + noise))
}

/// Classifier fine-tuning step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScStage {
    /// ArcFace + KL.
    First,
    /// ArcFace + KL + weighted energy hinge.
    Second,
}

impl TryFrom<u8> for ScStage {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            1 => Ok(ScStage::First),
            2 => Ok(ScStage::Second),
            _ => Err(Error::InvalidArgument(format!(
                "classifier stage must be 1 or 2, got {v}"
            ))),
        }
    }
}

/// Combined classifier objective for the given fine-tuning step.
pub fn sc_stage_loss(arcface: f64, kl: f64, energy: f64, stage: ScStage, energy_weight: f64) -> Result<f64> {
    check_finite("classifier loss terms", &[arcface, kl, energy, energy_weight])?;
    Ok(match stage {
        ScStage::First => arcface + kl,
        ScStage::Second => arcface + kl + energy_weight * energy,
    })
}
