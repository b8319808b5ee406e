use std::f64::consts::LN_10;

use super::{LossValue, RATIO_EPS};
use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

const DB: f64 = 10.0 / LN_10;

fn check_pairs(refs: &[AudioBuffer], ests: &[AudioBuffer]) -> Result<()> {
    if refs.is_empty() {
        return Err(Error::InvalidArgument("need at least one source".into()));
    }
    if refs.len() != ests.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} references vs {} estimates",
            refs.len(),
            ests.len()
        )));
    }
    for (r, e) in refs.iter().zip(ests) {
        r.check_compatible(e)?;
    }
    Ok(())
}

fn residual_energy(r: &AudioBuffer, e: &AudioBuffer) -> f64 {
    r.samples()
        .iter()
        .zip(e.samples())
        .map(|(s, x)| (s - x) * (s - x))
        .sum()
}

/// Negative source-aggregated SDR:
/// `-10 log10(sum |s_m|^2 / (sum |s_m - s_hat_m|^2 + eps))`.
pub fn sa_sdr_loss(refs: &[AudioBuffer], ests: &[AudioBuffer]) -> Result<LossValue> {
    check_pairs(refs, ests)?;
    let signal: f64 = refs.iter().map(AudioBuffer::energy).sum();
    if signal == 0.0 {
        return Err(Error::SilentSignal("all SA-SDR references are silent".into()));
    }
    let distortion: f64 = refs.iter().zip(ests).map(|(r, e)| residual_energy(r, e)).sum();
    let den = distortion + RATIO_EPS;
    let value = -DB * (signal / den).ln();
    // d/d(s_hat) of DB * ln(D + eps) = DB * 2 (s_hat - s) / (D + eps)
    let k = 2.0 * DB / den;
    let gradient = refs
        .iter()
        .zip(ests)
        .flat_map(|(r, e)| r.samples().iter().zip(e.samples()).map(move |(s, x)| k * (x - s)))
        .collect();
    Ok(LossValue::with_gradient(value, gradient))
}

/// Negative scale-invariant SNR of `est` against `reference`.
///
/// With `a = <est, ref> / |ref|^2`, `t = a ref` and `e = est - t`, the value is
/// `-10 log10(|t|^2 / (|e|^2 + eps |t|^2))`. Scaling `eps` by `|t|^2` keeps the
/// loss exactly invariant to rescaling `est`, including at perfect alignment
/// where it bottoms out at `10 log10(eps) = -120 dB`.
pub fn si_snr_loss(reference: &AudioBuffer, est: &AudioBuffer) -> Result<LossValue> {
    reference.check_compatible(est)?;
    let n = reference.samples();
    let x = est.samples();
    let ref_energy = reference.energy();
    if ref_energy == 0.0 {
        return Err(Error::SilentSignal("SI-SNR reference".into()));
    }
    let dot: f64 = n.iter().zip(x).map(|(a, b)| a * b).sum();
    let alpha = dot / ref_energy;
    if alpha == 0.0 {
        return Err(Error::InvalidArgument(
            "SI-SNR estimate is orthogonal to the reference".into(),
        ));
    }
    let target = alpha * alpha * ref_energy;
    let err: Vec<f64> = n.iter().zip(x).map(|(a, b)| b - alpha * a).collect();
    let err_energy: f64 = err.iter().map(|v| v * v).sum();
    let den = err_energy + RATIO_EPS * target;
    let value = -DB * (target / den).ln();
    // L = -DB [ln P - ln(Q + eps P)],  dP = 2 a n,  dQ = 2 e
    let p_term = 2.0 / (alpha * ref_energy);
    let gradient = n
        .iter()
        .zip(&err)
        .map(|(&ni, &ei)| {
            let dp = p_term * ni;
            let dq = (2.0 * ei + RATIO_EPS * 2.0 * alpha * ni) / den;
            -DB * (dp - dq)
        })
        .collect();
    Ok(LossValue::with_gradient(value, gradient))
}

/// Negative SNR averaged over the active sources only:
/// `-(1/|A|) sum_{m in A} 10 log10(|s_m|^2 / (|s_m - s_hat_m|^2 + eps))`.
///
/// Inactive estimates never influence the value and get a zero gradient.
pub fn masked_snr_loss(refs: &[AudioBuffer], ests: &[AudioBuffer], active: &[bool]) -> Result<LossValue> {
    check_pairs(refs, ests)?;
    if active.len() != refs.len() {
        return Err(Error::ShapeMismatch(format!(
            "mask of length {} for {} sources",
            active.len(),
            refs.len()
        )));
    }
    let n_active = active.iter().filter(|&&a| a).count();
    if n_active == 0 {
        return Err(Error::NoActiveSources);
    }
    let inv = 1.0 / n_active as f64;
    let mut value = 0.0;
    let mut gradient = Vec::with_capacity(ests.iter().map(AudioBuffer::len).sum());
    for ((r, e), &on) in refs.iter().zip(ests).zip(active) {
        if !on {
            gradient.extend(std::iter::repeat_n(0.0, e.len()));
            continue;
        }
        let signal = r.energy();
        if signal == 0.0 {
            return Err(Error::SilentSignal("active masked-SNR reference".into()));
        }
        let den = residual_energy(r, e) + RATIO_EPS;
        value -= inv * DB * (signal / den).ln();
        let k = inv * 2.0 * DB / den;
        gradient.extend(r.samples().iter().zip(e.samples()).map(|(s, x)| k * (x - s)));
    }
    Ok(LossValue::with_gradient(value, gradient))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(x: &[f64]) -> AudioBuffer {
        AudioBuffer::mono(x.to_vec(), 16_000).unwrap()
    }

    #[test]
    fn sa_sdr_examples() {
        let refs = [m(&[1.0, 0.0]), m(&[0.0, 1.0])];
        let zeros = [m(&[0.0, 0.0]), m(&[0.0, 0.0])];
        assert!(sa_sdr_loss(&refs, &zeros).unwrap().value.abs() < 1e-9);
        let half = [m(&[1.0, 0.0]), m(&[0.0, 0.0])];
        let v = sa_sdr_loss(&refs, &half).unwrap().value;
        assert!((v - -3.010_299_956_639_812).abs() < 1e-9, "{v}");
        let perfect = sa_sdr_loss(&refs, &refs).unwrap().value;
        assert!((perfect - -123.010_299_956_639_81).abs() < 1e-9, "{perfect}");
    }

    #[test]
    fn sa_sdr_errors() {
        let z = [m(&[0.0, 0.0])];
        assert!(matches!(sa_sdr_loss(&z, &z), Err(Error::SilentSignal(_))));
        assert!(sa_sdr_loss(&[m(&[1.0])], &[m(&[1.0, 2.0])]).is_err());
        assert!(sa_sdr_loss(&[m(&[1.0])], &[]).is_err());
    }

    #[test]
    fn sa_sdr_permutation_invariant() {
        let refs = [m(&[1.0, 0.5]), m(&[0.2, -1.0]), m(&[0.3, 0.3])];
        let ests = [m(&[0.9, 0.1]), m(&[0.0, -0.8]), m(&[0.5, 0.2])];
        let a = sa_sdr_loss(&refs, &ests).unwrap().value;
        let pr = [refs[2].clone(), refs[0].clone(), refs[1].clone()];
        let pe = [ests[2].clone(), ests[0].clone(), ests[1].clone()];
        let b = sa_sdr_loss(&pr, &pe).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn si_snr_examples() {
        let r = m(&[1.0, 0.0]);
        assert!(si_snr_loss(&r, &m(&[1.0, 1.0])).unwrap().value.abs() < 1e-9);
        assert!(si_snr_loss(&r, &m(&[2.0, 2.0])).unwrap().value.abs() < 1e-9);
        let floor: Vec<f64> = [0.5, 1.0, 3.0, -2.0]
            .iter()
            .map(|&c| si_snr_loss(&r, &m(&[c, 0.0])).unwrap().value)
            .collect();
        for v in &floor {
            assert!((v - -120.0).abs() < 1e-9, "{v}");
        }
        assert!(si_snr_loss(&m(&[0.0, 0.0]), &r).is_err());
        assert!(si_snr_loss(&r, &m(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn masked_examples() {
        let refs = [m(&[1.0, 0.0]), m(&[0.0, 0.0])];
        let ests = [m(&[0.5, 0.0]), m(&[7.0, -3.0])];
        let v = masked_snr_loss(&refs, &ests, &[true, false]).unwrap();
        assert!((v.value - -6.020_599_913_279_624).abs() < 1e-9);
        let zeros = [m(&[0.0, 0.0]), m(&[0.0, 0.0])];
        assert!(masked_snr_loss(&refs, &zeros, &[true, false]).unwrap().value.abs() < 1e-9);
        let flipped = [m(&[0.5, 0.0]), m(&[-7.0, 3.0])];
        let w = masked_snr_loss(&refs, &flipped, &[true, false]).unwrap();
        assert_eq!(v.value, w.value);
        assert!(matches!(
            masked_snr_loss(&refs, &ests, &[false, false]),
            Err(Error::NoActiveSources)
        ));
        assert!(masked_snr_loss(&refs, &ests, &[true]).is_err());
        let g = v.gradient.unwrap();
        assert_eq!(&g[2..], &[0.0, 0.0]);
    }
}
