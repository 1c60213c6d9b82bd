//! Adam with global gradient-norm clipping.

use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale gradients so their global L2 norm is at most this.
    pub clip_norm: Option<f64>,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Global L2 norm of the accumulated gradients.
    pub fn grad_norm(store: &ParamStore) -> f64 {
        store
            .ids()
            .flat_map(|id| store.grad(id).data().iter().map(|&g| g as f64 * g as f64))
            .sum::<f64>()
            .sqrt()
    }

    /// Apply one update from the gradients held in `store`. Returns the
    /// pre-clipping gradient norm.
    pub fn step(&mut self, store: &mut ParamStore) -> f64 {
        let norm = Self::grad_norm(store);
        let scale = match self.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((value, grad), m), v) in store
            .values_and_grads_mut()
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (i, (p, &g)) in value.data_mut().iter_mut().zip(grad.data()).enumerate() {
                let g = g as f64 * scale;
                let mi = b1 * md[i] as f64 + (1.0 - b1) * g;
                let vi = b2 * vd[i] as f64 + (1.0 - b2) * g * g;
                md[i] = mi as f32;
                vd[i] = vi as f32;
                let update = lr * (mi / bc1) / ((vi / bc2).sqrt() + eps);
                *p = (*p as f64 - update) as f32;
            }
        }
        norm
    }
}
