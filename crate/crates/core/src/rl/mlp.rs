//! Fully connected network with tanh hidden layers over a flat parameter vector.
//!
//! Layer `i` stores its weights row-major (`out × in`) followed by its biases.

use crate::error::{Error, Result};
use crate::numerics::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations recorded by a forward pass; `layers[0]` is the input.
#[derive(Debug, Clone)]
pub struct Tape {
    layers: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("tape has an input layer")
    }
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    pub fn from_params(sizes: Vec<usize>, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Shape(format!("layer sizes {sizes:?}")));
        }
        if params.len() != param_count(&sizes) {
            return Err(Error::Shape(format!(
                "{} parameters for layers {sizes:?}, expected {}",
                params.len(),
                param_count(&sizes)
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters"));
        }
        Ok(Self { sizes, params })
    }

    /// Gaussian weights with variance `1/fan_in`, zero biases; the last layer
    /// is further scaled by `output_gain`.
    pub fn init(sizes: Vec<usize>, output_gain: f64, rng: &mut Rng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Shape(format!("layer sizes {sizes:?}")));
        }
        let n = param_count(&sizes);
        let mut params = vec![0.0; n];
        let layers = sizes.len() - 1;
        let mut offset = 0;
        for (i, w) in sizes.windows(2).enumerate() {
            let std = (1.0 / w[0] as f64).sqrt() * if i + 1 == layers { output_gain } else { 1.0 };
            for p in &mut params[offset..offset + w[0] * w[1]] {
                *p = std * rng.standard_normal();
            }
            offset += w[0] * w[1] + w[1];
        }
        Self::from_params(sizes, params)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().expect("validated")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_tape(input)?.layers.pop().expect("output layer"))
    }

    pub fn forward_tape(&self, input: &[f64]) -> Result<Tape> {
        if input.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "input of length {}, network expects {}",
                input.len(),
                self.input_len()
            )));
        }
        let last = self.sizes.len() - 2;
        let mut layers = Vec::with_capacity(self.sizes.len());
        layers.push(input.to_vec());
        let mut offset = 0;
        for (i, w) in self.sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[offset..offset + n_in * n_out];
            let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
            let x = layers.last().expect("previous layer");
            let mut y: Vec<f64> = weights
                .chunks_exact(n_in)
                .zip(bias)
                .map(|(row, b)| b + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
                .collect();
            if i < last {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
            layers.push(y);
            offset += n_in * n_out + n_out;
        }
        Ok(Tape { layers })
    }

    /// Adds `∂L/∂params` to `grad` given `∂L/∂output`; returns `∂L/∂input`.
    pub fn backward(&self, tape: &Tape, grad_output: &[f64], grad: &mut [f64]) -> Vec<f64> {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer length");
        assert_eq!(grad_output.len(), self.output_len(), "output gradient length");
        let n_layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(n_layers);
        let mut offset = 0;
        for w in self.sizes.windows(2) {
            offsets.push(offset);
            offset += w[0] * w[1] + w[1];
        }
        let mut delta = grad_output.to_vec();
        for i in (0..n_layers).rev() {
            let (n_in, n_out) = (self.sizes[i], self.sizes[i + 1]);
            if i + 1 < n_layers {
                // through tanh: d/dz tanh(z) = 1 - y²
                for (d, y) in delta.iter_mut().zip(&tape.layers[i + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let o = offsets[i];
            let x = &tape.layers[i];
            let (gw, gb) = grad[o..o + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            for ((row, gb), &d) in gw.chunks_exact_mut(n_in).zip(gb.iter_mut()).zip(&delta) {
                *gb += d;
                if d != 0.0 {
                    row.iter_mut().zip(x).for_each(|(g, xv)| *g += d * xv);
                }
            }
            let weights = &self.params[o..o + n_in * n_out];
            let mut prev = vec![0.0; n_in];
            for (row, &d) in weights.chunks_exact(n_in).zip(&delta) {
                if d != 0.0 {
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                }
            }
            delta = prev;
        }
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let s = net.sizes();
        let mut off = 0;
        let mut a = x.to_vec();
        for l in 0..s.len() - 1 {
            let mut y = vec![0.0; s[l + 1]];
            for (r, yr) in y.iter_mut().enumerate() {
                let mut acc = net.params()[off + s[l] * s[l + 1] + r];
                for c in 0..s[l] {
                    acc += net.params()[off + r * s[l] + c] * a[c];
                }
                *yr = if l + 2 < s.len() { acc.tanh() } else { acc };
            }
            off += s[l] * s[l + 1] + s[l + 1];
            a = y;
        }
        a
    }

    #[test]
    fn zero_weights_pass_bias() {
        let sizes = vec![3, 4, 2];
        let mut p = vec![0.0; param_count(&sizes)];
        let n = p.len();
        p[n - 2] = 0.7;
        p[n - 1] = -1.5;
        let net = Mlp::from_params(sizes, p).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![0.7, -1.5]);
    }

    #[test]
    fn identity_layer() {
        let mut p = vec![0.0; 12];
        for i in 0..3 {
            p[i * 3 + i] = 1.0;
        }
        let net = Mlp::from_params(vec![3, 3], p).unwrap();
        assert_eq!(net.forward(&[0.5, -2.0, 4.0]).unwrap(), vec![0.5, -2.0, 4.0]);
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn random_net_matches_oracle() {
        let mut rng = Rng::new(4);
        let net = Mlp::init(vec![5, 7, 6, 3], 1.0, &mut rng).unwrap();
        let x: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
        let got = net.forward(&x).unwrap();
        let want = oracle_forward(&net, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * w.abs().max(1.0));
        }
    }

    #[test]
    fn linear_squared_loss_gradient() {
        // y = W x + b, L = 0.5 ‖y − t‖²: ∂L/∂W = (y − t) xᵀ, ∂L/∂b = y − t
        let mut rng = Rng::new(10);
        let net = Mlp::init(vec![3, 2], 1.0, &mut rng).unwrap();
        let x = [0.3, -1.2, 2.0];
        let t = [1.0, -1.0];
        let tape = net.forward_tape(&x).unwrap();
        let r: Vec<f64> = tape.output().iter().zip(&t).map(|(y, t)| y - t).collect();
        let mut g = vec![0.0; net.num_params()];
        let gx = net.backward(&tape, &r, &mut g);
        for i in 0..2 {
            for j in 0..3 {
                assert!((g[i * 3 + j] - r[i] * x[j]).abs() < 1e-14);
            }
            assert!((g[6 + i] - r[i]).abs() < 1e-14);
        }
        for j in 0..3 {
            let want = r[0] * net.params()[j] + r[1] * net.params()[3 + j];
            assert!((gx[j] - want).abs() < 1e-14);
        }
        let mut z = vec![0.0; net.num_params()];
        net.backward(&tape, &[0.0, 0.0], &mut z);
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn finite_difference_every_parameter() {
        let mut rng = Rng::new(21);
        let net = Mlp::init(vec![4, 5, 5, 3], 1.0, &mut rng).unwrap();
        let x: Vec<f64> = (0..4).map(|_| rng.standard_normal()).collect();
        let c: Vec<f64> = (0..3).map(|_| rng.standard_normal()).collect();
        let loss = |n: &Mlp| -> f64 {
            n.forward(&x).unwrap().iter().zip(&c).map(|(y, c)| c * y + 0.5 * y * y).sum()
        };
        let tape = net.forward_tape(&x).unwrap();
        let go: Vec<f64> = tape.output().iter().zip(&c).map(|(y, c)| c + y).collect();
        let mut g = vec![0.0; net.num_params()];
        net.backward(&tape, &go, &mut g);
        let h = 1e-5;
        for i in 0..net.num_params() {
            let mut p = net.clone();
            p.params_mut()[i] += h;
            let lp = loss(&p);
            p.params_mut()[i] -= 2.0 * h;
            let lm = loss(&p);
            let fd = (lp - lm) / (2.0 * h);
            let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(1e-6);
            assert!(err <= 1e-4, "param {i}: fd {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Mlp::from_params(vec![2], vec![]).is_err());
        assert!(Mlp::from_params(vec![2, 2], vec![0.0; 5]).is_err());
        assert!(Mlp::from_params(vec![1, 1], vec![f64::NAN, 0.0]).is_err());
    }
}
