//! Small fully connected network with hand-written backpropagation.
//!
//! Hidden layers use tanh, the output layer is affine. Weights are stored
//! row-major as `out x in`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub n_in: usize,
    pub n_out: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            w: vec![0.0; n_in * n_out],
            b: vec![0.0; n_out],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_out)
            .map(|o| {
                let row = &self.w[o * self.n_in..(o + 1) * self.n_in];
                self.b[o] + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Parameter gradients, shaped like [`Mlp::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl MlpGrads {
    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.w.iter_mut().zip(&b.w).for_each(|(x, y)| *x += y);
            a.b.iter_mut().zip(&b.b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            l.w.iter_mut().chain(l.b.iter_mut()).for_each(|v| *v *= c);
        }
    }

    pub fn norm(&self) -> f64 {
        self.flat().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
    }
}

impl Mlp {
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        Self {
            layers: sizes.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    /// Uniform Glorot initialisation; the output layer is scaled by
    /// `out_scale` and all biases start at zero.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], out_scale: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let last = net.layers.len() - 1;
        for (k, l) in net.layers.iter_mut().enumerate() {
            let limit = (6.0 / (l.n_in + l.n_out) as f64).sqrt();
            let scale = if k == last { out_scale } else { 1.0 };
            for w in &mut l.w {
                *w = rng.random_range(-limit..limit) * scale;
            }
        }
        net
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].n_in
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.n_out)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| (l.n_in + 1) * l.n_out).sum()
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            layers: self.layers.iter().map(|l| Layer::zeros(l.n_in, l.n_out)).collect(),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_size() {
            return Err(Error::DimensionMismatch { expected: self.input_size(), got: x.len() });
        }
        Ok(())
    }

    /// Activations of every layer, input first.
    fn activations(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let last = self.layers.len() - 1;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = l.affine(acts.last().expect("non-empty"));
            if k != last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            acts.push(z);
        }
        acts
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.activations(x).pop().expect("output layer"))
    }

    /// Gradient of `upstream . forward(x)` with respect to every parameter.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<MlpGrads> {
        self.check_input(x)?;
        if upstream.len() != self.output_size() {
            return Err(Error::DimensionMismatch { expected: self.output_size(), got: upstream.len() });
        }
        let acts = self.activations(x);
        let mut grads = self.zero_grads();
        let mut delta = upstream.to_vec();
        for k in (0..self.layers.len()).rev() {
            let l = &self.layers[k];
            let input = &acts[k];
            let g = &mut grads.layers[k];
            for o in 0..l.n_out {
                g.b[o] = delta[o];
                let row = &mut g.w[o * l.n_in..(o + 1) * l.n_in];
                row.iter_mut().zip(input).for_each(|(gw, a)| *gw = delta[o] * a);
            }
            if k > 0 {
                // back through the affine map, then through tanh of layer k-1
                let mut prev = vec![0.0; l.n_in];
                for o in 0..l.n_out {
                    let row = &l.w[o * l.n_in..(o + 1) * l.n_in];
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += w * delta[o]);
                }
                prev.iter_mut().zip(input).for_each(|(p, a)| *p *= 1.0 - a * a);
                delta = prev;
            }
        }
        Ok(grads)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
    }

    pub fn params(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()).copied())
    }
}

/// SGD with optional momentum and global gradient-norm clipping.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: f64,
    pub clip: f64,
    velocity: Option<MlpGrads>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64, clip: f64) -> Self {
        Self { lr, momentum, clip, velocity: None }
    }

    /// Descends along `grads` (a gradient of the loss to minimise).
    pub fn step(&mut self, net: &mut Mlp, mut grads: MlpGrads) {
        let norm = grads.norm();
        if norm > self.clip && norm > 0.0 {
            grads.scale(self.clip / norm);
        }
        let v = self.velocity.get_or_insert_with(|| net.zero_grads());
        v.scale(self.momentum);
        v.add_assign(&grads);
        for (p, g) in net.params_mut().zip(v.flat()) {
            *p -= self.lr * g;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::new_rng;

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 5, 2]);
        assert_eq!(net.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn single_layer_is_affine() {
        let mut net = Mlp::zeros(&[2, 2]);
        net.layers[0].w = vec![1.0, 2.0, -1.0, 0.5];
        net.layers[0].b = vec![0.1, -0.2];
        let y = net.forward(&[3.0, 4.0]).unwrap();
        assert!((y[0] - 11.1).abs() < 1e-12 && (y[1] + 1.2).abs() < 1e-12);
    }

    #[test]
    fn forward_is_bit_identical() {
        let net = Mlp::new(&[4, 8, 3], 1.0, &mut new_rng(1, "mlp"));
        let x = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
    }

    #[test]
    fn param_count() {
        assert_eq!(Mlp::zeros(&[80, 64, 32]).param_count(), 81 * 64 + 65 * 32);
    }

    #[test]
    fn dimension_checks() {
        let net = Mlp::zeros(&[3, 2]);
        assert!(net.forward(&[1.0]).is_err());
        assert!(net.backward(&[1.0, 2.0, 3.0], &[1.0]).is_err());
    }

    #[test]
    fn zero_upstream_zero_grads() {
        let net = Mlp::new(&[3, 4, 2], 1.0, &mut new_rng(2, "mlp"));
        let g = net.backward(&[0.3, -0.1, 0.7], &[0.0, 0.0]).unwrap();
        assert!(g.flat().all(|v| v == 0.0));
    }

    #[test]
    fn gradients_are_linear_in_upstream() {
        let net = Mlp::new(&[3, 4, 2], 1.0, &mut new_rng(3, "mlp"));
        let x = [0.3, -0.1, 0.7];
        let g1 = net.backward(&x, &[0.5, -1.5]).unwrap();
        let g2 = net.backward(&x, &[1.0, -3.0]).unwrap();
        for (a, b) in g1.flat().zip(g2.flat()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_clips_norm() {
        let mut net = Mlp::zeros(&[1, 1]);
        let mut g = net.zero_grads();
        g.layers[0].w[0] = 30.0;
        g.layers[0].b[0] = 40.0;
        let mut opt = Sgd::new(1.0, 0.0, 5.0);
        opt.step(&mut net, g);
        assert!((net.layers[0].w[0] + 3.0).abs() < 1e-12);
        assert!((net.layers[0].b[0] + 4.0).abs() < 1e-12);
    }
}
