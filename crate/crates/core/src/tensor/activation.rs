use super::{Real, Result, Tensor};

/// `max(0, x)` elementwise.
pub fn relu_forward<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_inplace<T: Real>(x: &mut Tensor<T>) {
    for v in x.data_mut() {
        if !(*v > T::zero()) {
            *v = T::zero();
        }
    }
}

/// Passes `grad_out` through where `x > 0`; the subgradient at exactly 0 is 0.
pub fn relu_backward<T: Real>(grad_out: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    x.zip_map(grad_out, |xv, g| if xv > T::zero() { g } else { T::zero() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clamps_negatives() {
        let x = Tensor::from_vec(&[3], vec![-1.0f64, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
        let mut y = x.clone();
        relu_inplace(&mut y);
        assert_eq!(y, relu_forward(&x));
    }

    #[test]
    fn nonnegative_input_passes_through() {
        let x = Tensor::from_vec(&[4], vec![0.0f32, 0.5, 3.0, 1e-9]).unwrap();
        assert_eq!(relu_forward(&x), x);
    }

    #[test]
    fn backward_masks_nonpositive() {
        let x = Tensor::from_vec(&[4], vec![-1.0f64, 0.0, 2.0, 1e-3]).unwrap();
        let g = Tensor::from_vec(&[4], vec![5.0, 6.0, 7.0, 8.0]).unwrap();
        assert_eq!(relu_backward(&g, &x).unwrap().data(), &[0.0, 0.0, 7.0, 8.0]);
    }

    #[test]
    fn backward_matches_finite_differences_away_from_kink() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let xs: Vec<f64> = (0..64)
            .map(|_| rng.random_range(-1.0..1.0))
            .filter(|v: &f64| v.abs() >= 1e-3)
            .collect();
        let gs: Vec<f64> = (0..xs.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = Tensor::from_vec(&[xs.len()], xs).unwrap();
        let g = Tensor::from_vec(&[gs.len()], gs).unwrap();
        let analytic = relu_backward(&g, &x).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let f = |d: f64| {
                let mut xp = x.clone();
                xp.data_mut()[i] += d;
                relu_forward(&xp).data()[i] * g.data()[i]
            };
            let fd = (f(h) - f(-h)) / (2.0 * h);
            assert!((fd - analytic.data()[i]).abs() < 1e-8);
        }
    }
}
