//! Fully connected network with a linear scalar output, trained on mean squared error.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut ArrayViewMut2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| v.max(0.0)),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Multiplies `delta` by the derivative, expressed through the activated output.
    fn backprop(self, delta: &mut ArrayViewMut2<f64>, activated: ArrayView2<f64>) {
        match self {
            Activation::Relu => Zip::from(delta).and(activated).for_each(|d, &a| {
                if a <= 0.0 {
                    *d = 0.0;
                }
            }),
            Activation::Tanh => Zip::from(delta).and(activated).for_each(|d, &a| *d *= 1.0 - a * a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `fan_in x fan_out`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

/// Per-layer gradients, same shapes as the layers.
pub type Gradients = Vec<Dense>;

impl Network {
    /// He-style uniform initialization, `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, zero biases.
    pub fn init(n_inputs: usize, hidden: &[usize], activation: Activation, rng: &mut Rng) -> Network {
        let mut widths = vec![n_inputs];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / fan_in.max(1) as f64).sqrt();
                Dense {
                    weights: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..limit)),
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Network { layers, activation }
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn hidden_widths(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.weights.ncols())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    /// Network output for each row of `x`.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = a.dot(&layer.weights) + &layer.bias;
            if l < last {
                self.activation.apply(&mut z.view_mut());
            }
            a = z;
        }
        a.index_axis_move(Axis(1), 0)
    }

    /// Mean squared error on `(x, y)` and its gradient with respect to every parameter.
    pub fn loss_and_gradients(&self, x: ArrayView2<f64>, y: ArrayView1<f64>) -> (f64, Gradients) {
        let mut ws = Workspace::new(self, x.nrows());
        let mut grads = self.zero_gradients();
        let loss = ws.loss_and_gradients(self, x, y, &mut grads);
        (loss, grads)
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.layers
            .iter()
            .map(|l| Dense {
                weights: Array2::zeros(l.weights.raw_dim()),
                bias: Array1::zeros(l.bias.len()),
            })
            .collect()
    }
}

/// Reusable activation buffers for mini-batches of up to `capacity` rows.
pub(crate) struct Workspace {
    /// Activated outputs of every layer (the last one is the raw network output).
    acts: Vec<Array2<f64>>,
    deltas: Vec<Array2<f64>>,
}

impl Workspace {
    pub(crate) fn new(net: &Network, capacity: usize) -> Workspace {
        let acts: Vec<Array2<f64>> = net
            .layers
            .iter()
            .map(|l| Array2::zeros((capacity, l.weights.ncols())))
            .collect();
        let deltas = acts.clone();
        Workspace { acts, deltas }
    }

    /// Writes gradients of the mean squared error into `grads` and returns the loss.
    pub(crate) fn loss_and_gradients(
        &mut self,
        net: &Network,
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        grads: &mut Gradients,
    ) -> f64 {
        let b = x.nrows();
        let last = net.layers.len() - 1;
        for l in 0..net.layers.len() {
            let (before, rest) = self.acts.split_at_mut(l);
            let input = if l == 0 { x } else { before[l - 1].slice(s![..b, ..]) };
            let mut out = rest[0].slice_mut(s![..b, ..]);
            out.assign(&net.layers[l].bias.broadcast((b, net.layers[l].bias.len())).unwrap());
            general_mat_mul(1.0, &input, &net.layers[l].weights, 1.0, &mut out);
            if l < last {
                net.activation.apply(&mut out);
            }
        }

        let scale = 2.0 / b as f64;
        let mut loss = 0.0;
        {
            let out = self.acts[last].slice(s![..b, 0]);
            let mut delta = self.deltas[last].slice_mut(s![..b, 0]);
            for ((d, &o), &t) in delta.iter_mut().zip(out.iter()).zip(y.iter()) {
                let r = o - t;
                loss += r * r;
                *d = scale * r;
            }
        }

        for l in (0..=last).rev() {
            let input = if l == 0 { x } else { self.acts[l - 1].slice(s![..b, ..]) };
            let (lower, upper) = self.deltas.split_at_mut(l);
            let delta = upper[0].slice(s![..b, ..]);
            general_mat_mul(1.0, &input.t(), &delta, 0.0, &mut grads[l].weights);
            grads[l].bias.assign(&delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut prev = lower[l - 1].slice_mut(s![..b, ..]);
                general_mat_mul(1.0, &delta, &net.layers[l].weights.t(), 0.0, &mut prev);
                net.activation.backprop(&mut prev, self.acts[l - 1].slice(s![..b, ..]));
            }
        }
        loss / b as f64
    }
}

/// Adam with bias correction.
pub(crate) struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Gradients,
    v: Gradients,
}

impl Adam {
    pub(crate) fn new(net: &Network, lr: f64) -> Adam {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: net.zero_gradients(),
            v: net.zero_gradients(),
        }
    }

    pub(crate) fn update(&mut self, net: &mut Network, grads: &Gradients) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = self.lr;
        let apply = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        };
        for (((layer, g), m), v) in net.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|p, m, v, &g| apply(p, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|p, m, v, &g| apply(p, m, v, g));
        }
    }
}

pub(crate) fn check_inputs(net: &Network, x: ArrayView2<f64>) -> Result<()> {
    if x.ncols() != net.n_inputs() {
        return Err(Error::DimensionMismatch {
            expected: net.n_inputs(),
            found: x.ncols(),
        });
    }
    Ok(())
}
