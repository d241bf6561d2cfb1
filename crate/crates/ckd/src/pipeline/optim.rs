//! AdamW with decoupled weight decay, plus global-norm gradient clipping.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use std::collections::BTreeMap;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// First/second-moment accumulators for the trainable tensors of one
/// training step. Moments are created lazily, so only tensors that
/// actually receive gradients carry state.
pub struct OptimizerState {
    moments: BTreeMap<String, Moments>,
    t: u64,
    weight_decay: f64,
}

impl OptimizerState {
    pub fn new(weight_decay: f64) -> Self {
        OptimizerState { moments: BTreeMap::new(), t: 0, weight_decay }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn tracked_tensors(&self) -> usize {
        self.moments.len()
    }

    /// One decoupled-weight-decay Adam update over the given parameters.
    /// `grads` must cover exactly the trainable set for this step.
    pub fn step(
        &mut self,
        params: &mut [(String, &mut Tensor)],
        grads: &BTreeMap<String, Vec<f64>>,
        lr: f64,
    ) -> Result<()> {
        for (name, g) in grads {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { context: format!("gradient of `{name}`") });
            }
        }
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let entry = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| Moments { m: vec![0.0; g.len()], v: vec![0.0; g.len()] });
            let data = p.data_mut();
            for i in 0..g.len() {
                entry.m[i] = ADAM_BETA1 * entry.m[i] + (1.0 - ADAM_BETA1) * g[i];
                entry.v[i] = ADAM_BETA2 * entry.v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = entry.m[i] / bc1;
                let v_hat = entry.v[i] / bc2;
                data[i] -= lr * (m_hat / (v_hat.sqrt() + ADAM_EPS) + self.weight_decay * data[i]);
            }
        }
        Ok(())
    }
}

/// Scale all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm(grads: &mut BTreeMap<String, Vec<f64>>, max_norm: f64) -> f64 {
    let norm: f64 = grads
        .values()
        .map(|g| g.iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.values_mut() {
            for v in g.iter_mut() {
                *v *= s;
            }
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tensor1(v: &[f64]) -> Tensor {
        Tensor::new(vec![v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut p = tensor1(&[1.0, -2.0]);
        let mut opt = OptimizerState::new(0.0);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![0.0, 0.0]);
        let mut params = vec![("w".to_string(), &mut p)];
        opt.step(&mut params, &grads, 0.1).unwrap();
        assert_eq!(p.data(), &[1.0, -2.0]);
    }

    #[test]
    fn descends_on_quadratic() {
        // f(w) = w², ∇f = 2w; from w = 1 the iterate must decrease.
        let mut p = tensor1(&[1.0]);
        let mut opt = OptimizerState::new(0.0);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![2.0]);
        let mut params = vec![("w".to_string(), &mut p)];
        opt.step(&mut params, &grads, 0.1).unwrap();
        assert!(p.data()[0] < 1.0);
    }

    #[test]
    fn converges_on_linear_regression() {
        // 10 samples of y = 3x, one weight, MSE gradient in closed form.
        let xs: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x).collect();
        let mut w = tensor1(&[0.0]);
        let mut opt = OptimizerState::new(0.0);
        let loss = |w: f64| -> f64 {
            xs.iter().zip(&ys).map(|(x, y)| (w * x - y) * (w * x - y)).sum::<f64>() / 10.0
        };
        let initial = loss(0.0);
        for _ in 0..200 {
            let wv = w.data()[0];
            let g: f64 =
                xs.iter().zip(&ys).map(|(x, y)| 2.0 * (wv * x - y) * x).sum::<f64>() / 10.0;
            let mut grads = BTreeMap::new();
            grads.insert("w".to_string(), vec![g]);
            let mut params = vec![("w".to_string(), &mut w)];
            opt.step(&mut params, &grads, 0.05).unwrap();
        }
        let final_loss = loss(w.data()[0]);
        assert!(
            final_loss < 1e-3 * initial,
            "loss {final_loss} vs initial {initial}, w = {}",
            w.data()[0]
        );
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut p = tensor1(&[1.0]);
        let mut opt = OptimizerState::new(0.0);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![f64::NAN]);
        let mut params = vec![("w".to_string(), &mut p)];
        let err = opt.step(&mut params, &grads, 0.1).unwrap_err();
        assert!(err.to_string().contains("`w`"));
    }

    #[test]
    fn clip_preserves_direction() {
        let mut grads = BTreeMap::new();
        grads.insert("a".to_string(), vec![3.0, 4.0]);
        let norm = clip_global_norm(&mut grads, 1.0);
        assert!((norm - 5.0).abs() < 1e-12);
        let g = &grads["a"];
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn moments_only_for_updated_tensors() {
        let mut p = tensor1(&[1.0]);
        let mut opt = OptimizerState::new(0.0);
        let mut grads = BTreeMap::new();
        grads.insert("w".to_string(), vec![1.0]);
        let mut params = vec![("w".to_string(), &mut p)];
        opt.step(&mut params, &grads, 0.1).unwrap();
        assert_eq!(opt.tracked_tensors(), 1);
    }
}
