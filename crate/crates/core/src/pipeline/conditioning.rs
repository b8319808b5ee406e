//! Numeric conditioning contracts shared with learned extractor backends.

use ndarray::{concatenate, Array, ArrayView, Axis, RemoveAxis};

use crate::error::{Error, Result};

/// Residual feature-wise modulation `h + (gamma * h + beta)`.
pub fn res_film(h: &[f64], gamma: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    if h.len() != gamma.len() || h.len() != beta.len() {
        return Err(Error::ShapeMismatch(format!(
            "res_film lengths h={} gamma={} beta={}",
            h.len(),
            gamma.len(),
            beta.len()
        )));
    }
    Ok(h.iter()
        .zip(gamma)
        .zip(beta)
        .map(|((&x, &g), &b)| x + (g * x + b))
        .collect())
}

/// Stacks enrollment channels after the mixture channels along axis 0.
/// All other extents must agree.
pub fn clue_concat<D: RemoveAxis>(
    mixture: ArrayView<'_, f64, D>,
    enrollment: ArrayView<'_, f64, D>,
) -> Result<Array<f64, D>> {
    if mixture.shape()[1..] != enrollment.shape()[1..] {
        return Err(Error::ShapeMismatch(format!(
            "clue_concat extents {:?} vs {:?}",
            &mixture.shape()[1..],
            &enrollment.shape()[1..]
        )));
    }
    concatenate(Axis(0), &[mixture, enrollment]).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{s, Array3};
    use proptest::prelude::*;

    #[test]
    fn film_examples() {
        assert_eq!(res_film(&[1.0, 2.0], &[0.5, 0.5], &[1.0, 1.0]).unwrap(), vec![2.5, 4.0]);
        assert_eq!(
            res_film(&[1.5, -3.0], &[1.0, 1.0], &[0.0, 0.0]).unwrap(),
            vec![3.0, -6.0]
        );
        assert!(res_film(&[1.0], &[1.0, 2.0], &[0.0]).is_err());
    }

    #[test]
    fn concat_keeps_mixture_first() {
        let mix = Array3::from_shape_fn((4, 5, 6), |(c, f, t)| (c * 100 + f * 10 + t) as f64);
        let enr = Array3::from_shape_fn((1, 5, 6), |(_, f, t)| -((f * 10 + t) as f64));
        let out = clue_concat(mix.view(), enr.view()).unwrap();
        assert_eq!(out.shape(), &[5, 5, 6]);
        assert_eq!(out.slice(s![..4, .., ..]), mix);
        assert_eq!(out.slice(s![4.., .., ..]), enr);
        let zero = Array3::zeros((1, 5, 6));
        let z = clue_concat(mix.view(), zero.view()).unwrap();
        assert_eq!(z.slice(s![..4, .., ..]), mix);
        let wrong = Array3::zeros((1, 5, 7));
        assert!(clue_concat(mix.view(), wrong.view()).is_err());
    }

    proptest! {
        #[test]
        fn zero_modulation_is_identity(h in prop::collection::vec(-1e6f64..1e6, 0..64)) {
            let z = vec![0.0; h.len()];
            prop_assert_eq!(res_film(&h, &z, &z).unwrap(), h);
        }
    }
}
