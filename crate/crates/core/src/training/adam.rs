//! Adam with bias correction.

use crate::tensor::Real;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates mirroring the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    /// Number of updates applied so far.
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    /// Fresh state for parameter groups of the given lengths.
    pub fn new(lens: &[usize]) -> Self {
        AdamState {
            m: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: lens.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPSILON,
        }
    }

    pub fn lens(&self) -> Vec<usize> {
        self.m.iter().map(Vec::len).collect()
    }
}

/// One Adam update of every parameter group. `params` and `grads` must
/// mirror the groups the state was created for.
pub fn adam_step<T: Real>(params: Vec<&mut [T]>, grads: &[&[T]], state: &mut AdamState<T>, lr: f64) {
    assert_eq!(params.len(), state.m.len(), "parameter groups do not mirror the optimizer state");
    assert_eq!(grads.len(), state.m.len(), "gradient groups do not mirror the optimizer state");
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        assert_eq!(p.len(), g.len());
        assert_eq!(p.len(), m.len());
        for i in 0..p.len() {
            let gi = g[i].as_f64();
            let mi = b1 * m[i].as_f64() + (1.0 - b1) * gi;
            let vi = b2 * v[i].as_f64() + (1.0 - b2) * gi * gi;
            m[i] = T::from_f64(mi);
            v[i] = T::from_f64(vi);
            let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            p[i] = T::from_f64(p[i].as_f64() - update);
        }
    }
}
