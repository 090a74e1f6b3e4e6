use crate::error::{AutogradError, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adaptive moment estimation state for every parameter of a store.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
    steps: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, store: &ParamStore<T>) -> Self {
        let zeros = || -> Vec<Tensor<T>> {
            store
                .params()
                .map(|(_, p)| Tensor::zeros(p.value.shape().to_vec()))
                .collect()
        };
        Adam {
            config,
            first: zeros(),
            second: zeros(),
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the gradients currently held in `store`.
    ///
    /// Leaves parameters and moments untouched if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(AutogradError::InvalidArgument(format!(
                "optimizer tracks {} parameters, store has {}",
                self.first.len(),
                store.len()
            )));
        }
        if let Some((_, p)) = store.params().find(|(_, p)| !p.grad.all_finite()) {
            return Err(AutogradError::NonFiniteGradient(p.name.clone()));
        }
        self.steps += 1;
        let c = &self.config;
        let t = self.steps as i32;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powi(t));
        let bc2 = T::of(1.0 - c.beta2.powi(t));
        let (lr, eps) = (T::of(c.learning_rate), T::of(c.eps));
        for ((p, m), v) in store.params_mut().zip(&mut self.first).zip(&mut self.second) {
            let g = p.grad.data();
            let w = p.value.data_mut();
            for (((wi, &gi), mi), vi) in w
                .iter_mut()
                .zip(g)
                .zip(m.data_mut().iter_mut())
                .zip(v.data_mut().iter_mut())
            {
                *mi = b1 * *mi + (T::one() - b1) * gi;
                *vi = b2 * *vi + (T::one() - b2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *wi = *wi - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64) -> (ParamStore<f64>, crate::ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("x", Tensor::scalar(value)).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let (mut s, id) = single(0.7);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        for _ in 0..10 {
            adam.step(&mut s).unwrap();
        }
        assert_eq!(s.value(id).data()[0], 0.7);
    }

    #[test]
    fn constant_gradient_moves_against_its_sign() {
        let (mut s, id) = single(0.0);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        s.grad_mut(id).data_mut()[0] = 2.5;
        for _ in 0..50 {
            adam.step(&mut s).unwrap();
        }
        assert!(s.value(id).data()[0] < 0.0);
    }

    #[test]
    fn quadratic_bowl_reaches_optimum() {
        let (mut s, id) = single(1.0);
        let mut adam = Adam::new(
            AdamConfig {
                learning_rate: 1e-2,
                ..AdamConfig::default()
            },
            &s,
        );
        for _ in 0..2000 {
            let x = s.value(id).data()[0];
            s.grad_mut(id).data_mut()[0] = 2.0 * x;
            adam.step(&mut s).unwrap();
        }
        assert!(s.value(id).data()[0].abs() < 1e-3);
    }

    #[test]
    fn non_finite_gradient_aborts_step() {
        let (mut s, id) = single(1.0);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        s.grad_mut(id).data_mut()[0] = f64::NAN;
        let err = adam.step(&mut s).unwrap_err();
        assert!(matches!(err, AutogradError::NonFiniteGradient(ref n) if n == "x"));
        assert_eq!(s.value(id).data()[0], 1.0);
        assert_eq!(adam.steps(), 0);
    }
}
