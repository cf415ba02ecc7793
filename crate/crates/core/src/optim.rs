//! Adam with bias-corrected moments. Frozen parameters are skipped entirely:
//! they carry no moment state and are never written.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Moments<T: Real> {
    m: Tensor<T>,
    v: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T: Real = f32> {
    pub config: AdamConfig,
    step_count: u64,
    moments: BTreeMap<ParamId, Moments<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Result<Self> {
        let c = &config;
        if !(c.learning_rate > 0.0
            && c.epsilon > 0.0
            && (0.0..1.0).contains(&c.beta1)
            && (0.0..1.0).contains(&c.beta2))
        {
            return Err(Error::invalid(format!(
                "invalid Adam hyperparameters {config:?}"
            )));
        }
        Ok(Self {
            config,
            step_count: 0,
            moments: BTreeMap::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Number of parameters holding moment state.
    pub fn tracked(&self) -> usize {
        self.moments.len()
    }

    /// One update of every trainable parameter from its stored gradient.
    /// Gradients are consumed (cleared) by the step.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if let Some((_, p)) = store.iter().find(|(_, p)| p.trainable && p.grad.is_none()) {
            return Err(Error::MissingGrad(p.name.clone()));
        }
        self.step_count += 1;
        let t = self.step_count as i32;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let correction1 = T::from_f64(1.0 - beta1.powi(t));
        let correction2 = T::from_f64(1.0 - beta2.powi(t));
        let (b1, b2) = (T::from_f64(beta1), T::from_f64(beta2));
        let (lr, eps) = (T::from_f64(learning_rate), T::from_f64(epsilon));

        for (id, p) in store.iter_mut() {
            if !p.trainable {
                continue;
            }
            let grad = p.grad.take().expect("checked above");
            let state = self.moments.entry(id).or_insert_with(|| Moments {
                m: Tensor::from_parts(grad.shape().to_vec(), vec![T::ZERO; grad.len()]),
                v: Tensor::from_parts(grad.shape().to_vec(), vec![T::ZERO; grad.len()]),
            });
            let values = p.value.data_mut();
            let (m, v) = (state.m.data_mut(), state.v.data_mut());
            for i in 0..values.len() {
                let gi = grad[i];
                m[i] = b1 * m[i] + (T::ONE - b1) * gi;
                v[i] = b2 * v[i] + (T::ONE - b2) * gi * gi;
                let m_hat = m[i] / correction1;
                let v_hat = v[i] / correction2;
                values[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
