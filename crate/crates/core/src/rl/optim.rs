//! Adam with global-norm gradient clipping.

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One descent step on `params` split across `slices` in order.
    pub fn step(&mut self, slices: &mut [&mut [f64]], grad: &[f64]) {
        let total: usize = slices.iter().map(|s| s.len()).sum();
        assert_eq!(total, grad.len(), "gradient length");
        assert_eq!(total, self.m.len(), "optimizer state length");
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut i = 0;
        for s in slices.iter_mut() {
            for p in s.iter_mut() {
                let g = grad[i];
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                let mh = self.m[i] / c1;
                let vh = self.v[i] / c2;
                *p -= self.lr * mh / (vh.sqrt() + self.eps);
                i += 1;
            }
        }
    }
}

/// Rescales `grad` so its Euclidean norm is at most `max_norm`; returns the original norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}
