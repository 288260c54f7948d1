//! A small fully connected network with ReLU hidden layers and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// One affine layer `x W + b`, `W` stored `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn fan_in(&self) -> usize {
        self.weights.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// `U(-sqrt(6/fan_in), sqrt(6/fan_in))` weights and zero biases.
    HeUniform,
    /// As [`Init::HeUniform`] but the last layer starts at exactly zero.
    HeUniformZeroLast,
}

/// Multilayer perceptron; ReLU after every layer except the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Layer inputs recorded during a forward pass (post-activation).
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
}

/// Gradients with the same layout as [`Mlp::layers`].
pub type Gradients = Vec<Dense>;

impl Mlp {
    pub fn new(sizes: &[usize], init: Init, rng: &mut ChaCha8Rng) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer sizes {sizes:?}")));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let weights = if i == last && init == Init::HeUniformZeroLast {
                    Array2::zeros((fan_in, fan_out))
                } else {
                    let bound = (6.0 / fan_in as f64).sqrt();
                    Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-bound..bound))
                };
                Dense {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(Mlp { layers })
    }

    /// `[input, hidden..., output]`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].fan_in()];
        s.extend(self.layers.iter().map(Dense::fan_out));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(Dense::fan_out).unwrap_or(0)
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = h.dot(&layer.weights) + &layer.bias;
            if i < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        h
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, ForwardCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let next = h.dot(&layer.weights) + &layer.bias;
            inputs.push(h);
            h = next;
            if i < last {
                h.mapv_inplace(|v| v.max(0.0));
            }
        }
        (h, ForwardCache { inputs })
    }

    /// Backpropagates `d loss / d output` through the recorded pass.
    pub fn backward(&self, cache: &ForwardCache, grad_out: Array2<f64>) -> Gradients {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_out;
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.inputs[i];
            grads.push(Dense {
                weights: input.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            if i > 0 {
                let mut back = delta.dot(&layer.weights.t());
                // `input` is the ReLU output of the previous layer; its
                // derivative is 1 exactly where the output is positive.
                ndarray::Zip::from(&mut back)
                    .and(input)
                    .for_each(|g, &a| {
                        if a <= 0.0 {
                            *g = 0.0;
                        }
                    });
                delta = back;
            }
        }
        grads.reverse();
        grads
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        let zeros: Gradients = net
            .layers
            .iter()
            .map(|l| Dense {
                weights: Array2::zeros(l.weights.raw_dim()),
                bias: Array1::zeros(l.bias.len()),
            })
            .collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients) {
        self.t += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        let lr = self.lr;
        let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((layer, g), m), v) in net
            .layers
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            ndarray::Zip::from(&mut layer.weights)
                .and(&g.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut layer.bias)
                .and(&g.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .for_each(|p, &g, m, v| update(p, g, m, v));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    fn toy() -> (Mlp, Array2<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Mlp::new(&[3, 5, 4, 2], Init::HeUniform, &mut rng).unwrap();
        let x = Array2::from_shape_fn((7, 3), |_| rng.gen_range(-1.0..1.0));
        (net, x)
    }

    #[test]
    fn shapes_and_zero_last_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[4, 8, 3], Init::HeUniformZeroLast, &mut rng).unwrap();
        assert_eq!(net.sizes(), vec![4, 8, 3]);
        let out = net.forward(Array2::ones((5, 4)).view());
        assert_eq!(out.dim(), (5, 3));
        assert!(out.iter().all(|&v| v == 0.0));
        assert!(Mlp::new(&[4], Init::HeUniform, &mut rng).is_err());
    }

    #[test]
    fn cached_forward_matches_plain_forward() {
        let (net, x) = toy();
        let (a, _) = net.forward_cached(x.view());
        assert_eq!(a, net.forward(x.view()));
    }

    #[test]
    fn backprop_matches_finite_differences() {
        // loss = sum(out * c) for a fixed c.
        let (net, x) = toy();
        let c = Array2::from_shape_fn((7, 2), |(i, j)| (i as f64 + 1.0) * 0.1 - j as f64 * 0.3);
        let loss = |n: &Mlp| (&n.forward(x.view()) * &c).sum();
        let (_, cache) = net.forward_cached(x.view());
        let grads = net.backward(&cache, c.clone());
        let h = 1e-6;
        for (li, layer) in net.layers.iter().enumerate() {
            for idx in 0..layer.weights.len() {
                let (r, col) = (idx / layer.fan_out(), idx % layer.fan_out());
                let mut p = net.clone();
                p.layers[li].weights[[r, col]] += h;
                let mut m = net.clone();
                m.layers[li].weights[[r, col]] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                let an = grads[li].weights[[r, col]];
                assert!((fd - an).abs() < 1e-6 * (1.0 + an.abs()), "layer {li} w[{r},{col}]: {fd} vs {an}");
            }
            for j in 0..layer.bias.len() {
                let mut p = net.clone();
                p.layers[li].bias[j] += h;
                let mut m = net.clone();
                m.layers[li].bias[j] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * h);
                assert!((fd - grads[li].bias[j]).abs() < 1e-6 * (1.0 + fd.abs()));
            }
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut net = Mlp {
            layers: vec![Dense {
                weights: array![[1.0]],
                bias: array![0.0],
            }],
        };
        let mut opt = Adam::new(&net, 0.1);
        let g = vec![Dense {
            weights: array![[2.0]],
            bias: array![-3.0],
        }];
        opt.step(&mut net, &g);
        assert!((net.layers[0].weights[[0, 0]] - 0.9).abs() < 1e-7);
        assert!((net.layers[0].bias[0] - 0.1).abs() < 1e-7);
    }

    #[test]
    fn adam_minimizes_a_quadratic() {
        let mut net = Mlp {
            layers: vec![Dense {
                weights: array![[3.0, -2.0]],
                bias: array![1.0, 4.0],
            }],
        };
        let mut opt = Adam::new(&net, 0.05);
        for _ in 0..2000 {
            let g = vec![Dense {
                weights: net.layers[0].weights.mapv(|w| 2.0 * w),
                bias: net.layers[0].bias.mapv(|b| 2.0 * b),
            }];
            opt.step(&mut net, &g);
        }
        assert!(net.layers[0].weights.iter().chain(net.layers[0].bias.iter()).all(|v| v.abs() < 1e-2));
    }
}
