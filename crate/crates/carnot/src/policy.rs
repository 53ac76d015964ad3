//! Two-layer feed-forward policy network.
//!
//! The architecture is fixed: a linear input layer, one hidden layer with
//! activation `(1/2)·tanh(I + b)`, and a linear output layer with no bias.
//! Parameters live in one flat vector with layout
//! `[w_ih (n_in×n_hidden, input-major), b_h (n_hidden), w_ho (n_hidden×n_out,
//! hidden-major)]`, which is also the checkpoint wire order.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::engine::{EngineConfig, EngineState};

/// Network dimensions. `n_out` counts every output neuron; a trainer that
/// wants a value head allocates one extra output and treats the last neuron
/// as the value estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NetShape {
    pub n_in: usize,
    pub n_hidden: usize,
    pub n_out: usize,
}

impl NetShape {
    pub fn new(n_in: usize, n_hidden: usize, n_out: usize) -> Self {
        assert!(n_in >= 1 && n_hidden >= 1 && n_out >= 1, "degenerate net shape");
        NetShape { n_in, n_hidden, n_out }
    }

    /// Total number of parameters in the flat layout.
    pub fn len(&self) -> usize {
        self.n_in * self.n_hidden + self.n_hidden + self.n_hidden * self.n_out
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Flat parameter vector plus its shape. Immutable in normal use; trainers
/// replace or update whole vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub shape: NetShape,
    pub data: Vec<f64>,
}

impl Params {
    /// Every weight and bias drawn i.i.d. from the standard normal.
    pub fn init<R: Rng>(shape: &NetShape, rng: &mut R) -> Params {
        let data = (0..shape.len()).map(|_| rng.sample(StandardNormal)).collect();
        Params { shape: *shape, data }
    }

    pub fn zeros(shape: &NetShape) -> Params {
        Params { shape: *shape, data: vec![0.0; shape.len()] }
    }

    #[inline]
    fn b_h_offset(&self) -> usize {
        self.shape.n_in * self.shape.n_hidden
    }

    #[inline]
    fn w_ho_offset(&self) -> usize {
        self.b_h_offset() + self.shape.n_hidden
    }

    /// Forward pass; returns all `n_out` linear outputs.
    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        let (hidden, _pre) = self.forward_hidden(input);
        self.output_from_hidden(&hidden)
    }

    /// Hidden activations (post-activation, pre-activation) for an input.
    fn forward_hidden(&self, input: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(
            input.len(),
            self.shape.n_in,
            "input length {} does not match n_in {}",
            input.len(),
            self.shape.n_in
        );
        let nh = self.shape.n_hidden;
        let mut pre = self.data[self.b_h_offset()..self.b_h_offset() + nh].to_vec();
        for (i, &x) in input.iter().enumerate() {
            let row = &self.data[i * nh..(i + 1) * nh];
            for (p, &w) in pre.iter_mut().zip(row) {
                *p += x * w;
            }
        }
        let hidden: Vec<f64> = pre.iter().map(|&a| 0.5 * a.tanh()).collect();
        (hidden, pre)
    }

    fn output_from_hidden(&self, hidden: &[f64]) -> Vec<f64> {
        let no = self.shape.n_out;
        let mut out = vec![0.0; no];
        let w_ho = &self.data[self.w_ho_offset()..];
        for (j, &h) in hidden.iter().enumerate() {
            if h == 0.0 {
                continue;
            }
            let row = &w_ho[j * no..(j + 1) * no];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += h * w;
            }
        }
        out
    }

    /// Reverse-mode gradient of `sum_k upstream[k] · output_k` with respect
    /// to every parameter, in flat layout.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.shape.len()];
        self.backward_into(input, upstream, &mut grad);
        grad
    }

    /// As `backward`, accumulating into an existing buffer.
    pub fn backward_into(&self, input: &[f64], upstream: &[f64], grad: &mut [f64]) {
        assert_eq!(upstream.len(), self.shape.n_out, "upstream length mismatch");
        assert_eq!(grad.len(), self.shape.len(), "gradient buffer mismatch");
        let (nh, no) = (self.shape.n_hidden, self.shape.n_out);
        let (hidden, pre) = self.forward_hidden(input);
        let w_ho_off = self.w_ho_offset();

        // Output weights and the pull-back onto hidden activations.
        let mut grad_hidden = vec![0.0; nh];
        for j in 0..nh {
            let row = &self.data[w_ho_off + j * no..w_ho_off + (j + 1) * no];
            let grow = &mut grad[w_ho_off + j * no..w_ho_off + (j + 1) * no];
            let h = hidden[j];
            let mut acc = 0.0;
            for k in 0..no {
                grow[k] += h * upstream[k];
                acc += row[k] * upstream[k];
            }
            grad_hidden[j] = acc;
        }

        // Through the activation: d/da (1/2)tanh(a) = (1/2)(1 − tanh²a).
        let b_off = self.b_h_offset();
        let mut grad_pre = vec![0.0; nh];
        for j in 0..nh {
            let th = pre[j].tanh();
            let g = grad_hidden[j] * 0.5 * (1.0 - th * th);
            grad_pre[j] = g;
            grad[b_off + j] += g;
        }

        // Input weights.
        for (i, &x) in input.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            let grow = &mut grad[i * nh..(i + 1) * nh];
            for (g, &gp) in grow.iter_mut().zip(&grad_pre) {
                *g += x * gp;
            }
        }
    }

    /// A fresh copy with every parameter perturbed by `epsilon` times an
    /// independent standard-normal draw.
    pub fn mutate<R: Rng>(&self, epsilon: f64, rng: &mut R) -> Params {
        assert!(epsilon >= 0.0, "mutation scale must be non-negative");
        let data = self
            .data
            .iter()
            .map(|&w| w + epsilon * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Params { shape: self.shape, data }
    }
}

/// Anything that maps an observation to output-layer activations.
pub trait Policy {
    fn logits(&self, obs: &[f64]) -> Vec<f64>;
}

impl Policy for Params {
    fn logits(&self, obs: &[f64]) -> Vec<f64> {
        self.forward(obs)
    }
}

/// The observation vector: scaled temperature then scaled volume, both
/// affine maps onto [0,1] at the reservoir/volume bounds and deliberately
/// unclipped outside them. The budgeted variant appends each budget scaled
/// by its initial value.
pub fn observe(cfg: &EngineConfig, state: &EngineState) -> Vec<f64> {
    let mut obs = Vec::with_capacity(cfg.n_inputs());
    obs.push((state.t - cfg.t_cold) / (cfg.t_hot - cfg.t_cold));
    obs.push((state.v - cfg.v_min) / (cfg.v_max - cfg.v_min));
    if cfg.budgets_enabled {
        let scale = |b: f64, b0: f64| if b0 > 0.0 { b / b0 } else { 0.0 };
        obs.push(scale(state.w_budget.unwrap_or(cfg.w0_budget), cfg.w0_budget));
        obs.push(scale(state.q_budget.unwrap_or(cfg.q0_budget), cfg.q0_budget));
    }
    obs
}

/// Index of the largest logit; ties break to the lowest index.
pub fn act_argmax(logits: &[f64]) -> usize {
    assert!(!logits.is_empty(), "argmax over empty logits");
    let mut best = 0;
    for (i, &l) in logits.iter().enumerate().skip(1) {
        if l > logits[best] {
            best = i;
        }
    }
    best
}

/// Softmax with max-subtraction; always a proper distribution.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Samples an action from the softmax distribution over the logits.
/// Returns the sampled index, its log-probability, and the distribution.
pub fn act_softmax<R: Rng>(logits: &[f64], rng: &mut R) -> (usize, f64, Vec<f64>) {
    let probs = softmax(logits);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut idx = probs.len() - 1;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            idx = i;
            break;
        }
    }
    let log_prob = probs[idx].ln();
    (idx, log_prob, probs)
}

/// Shannon entropy of a distribution, in nats.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 }).sum::<f64>()
}
