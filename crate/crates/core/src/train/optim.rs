use crate::error::{Error, Result};
use crate::nn::{Gradients, ParamStore, Real};

use super::TrainConfig;

/// Rescales `grads` so their global norm is at most `max_norm`; returns the
/// norm before clipping.
pub fn clip_gradients<T: Real>(grads: &mut Gradients<T>, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm && norm > 0.0 {
        grads.scale(T::from_f64(max_norm / norm));
    }
    norm
}

/// Adaptive-moment optimizer with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    clip_norm: f64,
    step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(params: &ParamStore<T>, cfg: &TrainConfig) -> Self {
        let zeros = |_| Vec::new();
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            clip_norm: cfg.clip_norm,
            step: 0,
            first: (0..params.len()).map(zeros).collect(),
            second: (0..params.len()).map(zeros).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Clips, then updates every parameter that has a gradient. Parameters
    /// without one keep their values and moments.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &mut Gradients<T>) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::NonFinite(format!(
                "gradient at optimizer step {}",
                self.step + 1
            )));
        }
        clip_gradients(grads, self.clip_norm);
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - self.beta1), T::from_f64(1.0 - self.beta2));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        let (c1, c2) = (T::from_f64(c1), T::from_f64(c2));
        for (id, g) in grads.iter() {
            let p = params.tensor_mut(id).data_mut();
            if p.len() != g.len() {
                return Err(Error::shape(
                    "optimizer_step",
                    format!("parameter has {} values, gradient {}", p.len(), g.len()),
                ));
            }
            let m = &mut self.first[id.index()];
            let v = &mut self.second[id.index()];
            if m.is_empty() {
                *m = vec![T::zero(); g.len()];
                *v = vec![T::zero(); g.len()];
            }
            for k in 0..g.len() {
                m[k] = b1 * m[k] + one_b1 * g[k];
                v[k] = b2 * v[k] + one_b2 * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Component, ParamId, Tensor};

    fn scalar_store(p: f64) -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new();
        let id = s
            .add("p", Component::Decoder, Tensor::new(vec![1], vec![p]).unwrap())
            .unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut s, id) = scalar_store(0.7);
        let mut adam = Adam::new(&s, &TrainConfig::default());
        let mut g = Gradients::new(1);
        g.set(id, vec![0.0]);
        adam.step(&mut s, &mut g).unwrap();
        assert_eq!(s.tensor(id).data(), &[0.7]);
    }

    #[test]
    fn quadratic_descends_monotonically() {
        let (mut s, id) = scalar_store(1.0);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let mut adam = Adam::new(&s, &cfg);
        let mut last = 1.0;
        for _ in 0..100 {
            let p = s.tensor(id).data()[0];
            let mut g = Gradients::new(1);
            g.set(id, vec![2.0 * p]);
            adam.step(&mut s, &mut g).unwrap();
            let now = s.tensor(id).data()[0];
            assert!(now < last, "{now} !< {last}");
            last = now;
        }
    }

    #[test]
    fn clipping_hits_the_bound() {
        let (_, id) = scalar_store(0.0);
        let mut g = Gradients::<f64>::new(1);
        g.set(id, vec![10.0]);
        let before = clip_gradients(&mut g, 5.0);
        assert_eq!(before, 10.0);
        assert!((g.global_norm() - 5.0).abs() < 1e-9);

        let mut two = Gradients::<f64>::new(2);
        two.set(ParamId(0), vec![6.0]);
        two.set(ParamId(1), vec![8.0]);
        clip_gradients(&mut two, 5.0);
        assert!((two.global_norm() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn nan_gradient_fails_fast() {
        let (mut s, id) = scalar_store(1.0);
        let mut adam = Adam::new(&s, &TrainConfig::default());
        let mut g = Gradients::new(1);
        g.set(id, vec![f64::NAN]);
        assert!(matches!(adam.step(&mut s, &mut g), Err(Error::NonFinite(_))));
        assert_eq!(s.tensor(id).data(), &[1.0]);
    }
}
