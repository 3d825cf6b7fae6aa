use alloc::vec::Vec;

use crate::encoders::ParamSet;
use crate::numeric::Matrix;

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    /// One update of `params` along `grads` (a gradient of the loss to minimise).
    pub fn update<P: ParamSet>(&mut self, params: &mut P, grads: &P) {
        self.update_blocks(params.blocks_mut(), grads.blocks());
    }

    /// [`update`](Self::update) over explicit, equally laid out block lists.
    pub fn update_blocks(&mut self, params: Vec<&mut Matrix>, grads: Vec<&Matrix>) {
        let n: usize = params.iter().map(|b| b.as_slice().len()).sum();
        if self.m.len() != n {
            self.m = alloc::vec![0.0; n];
            self.v = alloc::vec![0.0; n];
            self.step = 0;
        }
        self.step += 1;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(self.step));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(self.step));
        let mut offset = 0;
        for (p, g) in params.into_iter().zip(grads) {
            for (x, &gx) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                let m = &mut self.m[offset];
                let v = &mut self.v[offset];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gx;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gx * gx;
                *x -= self.lr * (*m / c1) / (libm::sqrt(*v / c2) + self.eps);
                offset += 1;
            }
        }
    }
}
