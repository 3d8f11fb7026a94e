//! A small dense feed-forward network with manual backpropagation, the
//! Adam/SGD optimizers, a Lipschitz-certified initializer, and a flat binary
//! checkpoint format. The training loops live in [`train`].

pub mod train;

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HjError, Result};

/// Smooth nonlinearity; the slope bound matters for the Lipschitz init.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
        }
    }

    fn slope_bound(self) -> f64 {
        1.0
    }

    fn id(self) -> u8 {
        match self {
            Activation::Tanh => 0,
        }
    }

    fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Activation::Tanh),
            other => Err(HjError::InvalidParam(format!("unknown activation id {other}"))),
        }
    }
}

/// Network parameters. `sizes` runs input to output, e.g. `[1, 64, 64, 64, 1]`
/// for three hidden layers; the final layer is affine.
#[derive(Debug, Clone)]
pub struct MlpParams {
    pub sizes: Vec<usize>,
    /// Row-major `out x in` weight matrices, one per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub activation: Activation,
    /// Certified bound from the Lipschitz initializer, when used.
    pub lipschitz_bound: Option<f64>,
    pub seed: u64,
}

/// Reverse-mode scratch: activations per layer (input included).
#[derive(Debug, Clone, Default)]
pub struct Tape {
    post: Vec<Vec<f64>>,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    pub fn zeros_like(p: &MlpParams) -> Self {
        Self {
            weights: p.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: p.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn clear(&mut self) {
        for w in self.weights.iter_mut() {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        for b in self.biases.iter_mut() {
            b.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn add(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for w in self.weights.iter_mut() {
            w.iter_mut().for_each(|x| *x *= c);
        }
        for b in self.biases.iter_mut() {
            b.iter_mut().for_each(|x| *x *= c);
        }
    }

    /// Flat L2 norm over all entries.
    pub fn norm(&self) -> f64 {
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w.iter().map(|x| x * x).sum::<f64>();
        }
        for b in &self.biases {
            acc += b.iter().map(|x| x * x).sum::<f64>();
        }
        acc.sqrt()
    }
}

impl MlpParams {
    /// Uniform init in ±sqrt(6/(fan_in + fan_out)), zero biases.
    pub fn new_random(sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(HjError::InvalidParam("need at least input and output sizes".into()));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(HjError::InvalidParam("output dimension must be 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            weights,
            biases,
            activation: Activation::Tanh,
            lipschitz_bound: None,
            seed,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn param_count(&self) -> usize {
        self.sizes
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Plain forward pass.
    pub fn forward(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.input_dim());
        let mut a = x.to_vec();
        let mut next = Vec::new();
        for l in 0..self.n_layers() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            next.clear();
            next.resize(n_out, 0.0);
            let w = &self.weights[l];
            for o in 0..n_out {
                let mut z = self.biases[l][o];
                let row = &w[o * n_in..(o + 1) * n_in];
                for (wi, ai) in row.iter().zip(&a) {
                    z += wi * ai;
                }
                next[o] = if l + 1 < self.n_layers() {
                    self.activation.apply(z)
                } else {
                    z
                };
            }
            std::mem::swap(&mut a, &mut next);
        }
        a[0]
    }

    /// Forward pass recording activations for a later [`Self::backprop`].
    pub fn forward_tape(&self, x: &[f64], tape: &mut Tape) -> f64 {
        debug_assert_eq!(x.len(), self.input_dim());
        let layers = self.n_layers();
        tape.post.resize(layers + 1, Vec::new());
        tape.post[0].clear();
        tape.post[0].extend_from_slice(x);
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (head, tail) = tape.post.split_at_mut(l + 1);
            let a = &head[l];
            let out = &mut tail[0];
            out.clear();
            out.resize(n_out, 0.0);
            let w = &self.weights[l];
            for o in 0..n_out {
                let mut z = self.biases[l][o];
                let row = &w[o * n_in..(o + 1) * n_in];
                for (wi, ai) in row.iter().zip(a.iter()) {
                    z += wi * ai;
                }
                out[o] = if l + 1 < layers {
                    self.activation.apply(z)
                } else {
                    z
                };
            }
        }
        tape.post[layers][0]
    }

    /// Accumulates the gradient of `cotangent * u(x; θ)` into `grads`, using
    /// the tape of the matching forward pass.
    pub fn backprop(&self, tape: &Tape, cotangent: f64, grads: &mut MlpGrads) {
        let layers = self.n_layers();
        let mut delta = vec![cotangent];
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let a = &tape.post[l];
            let w = &self.weights[l];
            {
                let gw = &mut grads.weights[l];
                let gb = &mut grads.biases[l];
                for o in 0..n_out {
                    gb[o] += delta[o];
                    let row = &mut gw[o * n_in..(o + 1) * n_in];
                    for (g, ai) in row.iter_mut().zip(a.iter()) {
                        *g += delta[o] * ai;
                    }
                }
            }
            if l > 0 {
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for (p, wi) in prev.iter_mut().zip(row) {
                        *p += wi * delta[o];
                    }
                }
                // a = activated output of the previous hidden layer.
                for (p, ai) in prev.iter_mut().zip(a.iter()) {
                    *p *= self.activation.derivative_from_output(*ai);
                }
                delta = prev;
            }
        }
    }

    /// Product of Frobenius norms times the activation slope bound; a cheap
    /// certified global Lipschitz bound for x -> u(x; θ).
    pub fn lipschitz_product_bound(&self) -> f64 {
        let slope = self.activation.slope_bound();
        let mut bound = 1.0;
        for (l, w) in self.weights.iter().enumerate() {
            let fro = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            bound *= fro;
            if l + 1 < self.n_layers() {
                bound *= slope;
            }
        }
        bound
    }

    /// Largest sampled difference quotient over random point pairs.
    pub fn empirical_lipschitz(&self, n_pairs: usize, seed: u64) -> f64 {
        let d = self.input_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = 0.0f64;
        for _ in 0..n_pairs {
            let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let dist: f64 = x
                .iter()
                .zip(&y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist > 1e-12 {
                best = best.max((self.forward(&x) - self.forward(&y)).abs() / dist);
            }
        }
        best
    }
}

/// Random init rescaled so the certified operator-norm product is exactly
/// `l`; the bound is recorded on the returned parameters.
pub fn lipschitz_init(sizes: &[usize], l: f64, seed: u64) -> Result<MlpParams> {
    if !(l > 0.0) {
        return Err(HjError::InvalidParam(format!(
            "Lipschitz target {l} must be positive"
        )));
    }
    let mut params = MlpParams::new_random(sizes, seed)?;
    let bound = params.lipschitz_product_bound();
    if bound > 0.0 {
        let layers = params.weights.len();
        let scale = (l / bound).powf(1.0 / layers as f64);
        for w in params.weights.iter_mut() {
            w.iter_mut().for_each(|x| *x *= scale);
        }
    }
    params.lipschitz_bound = Some(l);
    Ok(params)
}

/// Adam state with the usual bias correction.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step_count: usize,
    m: MlpGrads,
    v: MlpGrads,
}

impl AdamState {
    pub fn new(params: &MlpParams, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: MlpGrads::zeros_like(params),
            v: MlpGrads::zeros_like(params),
        }
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) {
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        };
        for l in 0..params.weights.len() {
            update(
                &mut params.weights[l],
                &grads.weights[l],
                &mut self.m.weights[l],
                &mut self.v.weights[l],
            );
            update(
                &mut params.biases[l],
                &grads.biases[l],
                &mut self.m.biases[l],
                &mut self.v.biases[l],
            );
        }
    }
}

/// Plain SGD or Adam.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam(AdamState),
}

impl Optimizer {
    pub fn adam(params: &MlpParams, lr: f64) -> Self {
        Optimizer::Adam(AdamState::new(params, lr))
    }

    pub fn step(&mut self, params: &mut MlpParams, grads: &MlpGrads) {
        match self {
            Optimizer::Sgd { lr } => {
                for l in 0..params.weights.len() {
                    for (p, g) in params.weights[l].iter_mut().zip(&grads.weights[l]) {
                        *p -= *lr * g;
                    }
                    for (p, g) in params.biases[l].iter_mut().zip(&grads.biases[l]) {
                        *p -= *lr * g;
                    }
                }
            }
            Optimizer::Adam(state) => state.step(params, grads),
        }
    }
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"MLPC";

/// Flat binary checkpoint: magic, version, activation id, seed, layer sizes,
/// then all weights and biases layer by layer, little-endian f64.
pub fn save_checkpoint<W: Write>(params: &MlpParams, mut w: W) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&[1u8, params.activation.id()])?;
    w.write_all(&params.seed.to_le_bytes())?;
    w.write_all(&(params.sizes.len() as u32).to_le_bytes())?;
    for &s in &params.sizes {
        w.write_all(&(s as u32).to_le_bytes())?;
    }
    for l in 0..params.weights.len() {
        for x in params.weights[l].iter().chain(params.biases[l].iter()) {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn load_checkpoint<R: Read>(mut r: R) -> Result<MlpParams> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(HjError::InvalidParam("not a checkpoint file".into()));
    }
    let mut head = [0u8; 2];
    r.read_exact(&mut head)?;
    if head[0] != 1 {
        return Err(HjError::InvalidParam(format!(
            "unsupported checkpoint version {}",
            head[0]
        )));
    }
    let activation = Activation::from_id(head[1])?;
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let seed = u64::from_le_bytes(u64buf);
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let n_sizes = u32::from_le_bytes(u32buf) as usize;
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        r.read_exact(&mut u32buf)?;
        sizes.push(u32::from_le_bytes(u32buf) as usize);
    }
    let mut params = MlpParams::new_random(&sizes, seed)?;
    params.activation = activation;
    params.lipschitz_bound = None;
    for l in 0..params.weights.len() {
        for i in 0..params.weights[l].len() {
            r.read_exact(&mut u64buf)?;
            params.weights[l][i] = f64::from_le_bytes(u64buf);
        }
        for i in 0..params.biases[l].len() {
            r.read_exact(&mut u64buf)?;
            params.biases[l][i] = f64::from_le_bytes(u64buf);
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_network_outputs_zero() {
        let mut p = MlpParams::new_random(&[2, 8, 1], 0).unwrap();
        for w in p.weights.iter_mut() {
            w.iter_mut().for_each(|x| *x = 0.0);
        }
        assert_eq!(p.forward(&[0.3, -0.7]), 0.0);
        assert_eq!(p.forward(&[5.0, 5.0]), 0.0);
    }

    #[test]
    fn single_affine_layer() {
        let mut p = MlpParams::new_random(&[1, 1], 0).unwrap();
        p.weights[0][0] = 2.0;
        p.biases[0][0] = 1.0;
        assert_eq!(p.forward(&[3.0]), 7.0);
    }

    #[test]
    fn param_count_matches_formula() {
        let p = MlpParams::new_random(&[1, 64, 64, 64, 1], 0).unwrap();
        assert_eq!(p.param_count(), 8513);
        let q = MlpParams::new_random(&[6, 80, 80, 80, 80, 1], 0).unwrap();
        assert_eq!(q.param_count(), 20081);
    }

    #[test]
    fn backprop_matches_finite_differences() {
        let p = MlpParams::new_random(&[2, 6, 5, 1], 3).unwrap();
        let x = [0.4, -1.2];
        let mut tape = Tape::default();
        let out = p.forward_tape(&x, &mut tape);
        assert!((out - p.forward(&x)).abs() < 1e-15);
        let mut grads = MlpGrads::zeros_like(&p);
        p.backprop(&tape, 1.0, &mut grads);
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = 1e-6;
        for _ in 0..20 {
            let l = rng.gen_range(0..p.weights.len());
            let i = rng.gen_range(0..p.weights[l].len());
            let mut pp = p.clone();
            pp.weights[l][i] += eps;
            let hi = pp.forward(&x);
            pp.weights[l][i] -= 2.0 * eps;
            let lo = pp.forward(&x);
            let fd = (hi - lo) / (2.0 * eps);
            let an = grads.weights[l][i];
            assert!(
                (an - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                "layer {l} weight {i}: {an} vs {fd}"
            );
        }
    }

    #[test]
    fn backprop_is_linear_in_cotangent() {
        let p = MlpParams::new_random(&[1, 4, 1], 1).unwrap();
        let mut tape = Tape::default();
        p.forward_tape(&[0.3], &mut tape);
        let mut g1 = MlpGrads::zeros_like(&p);
        p.backprop(&tape, 1.0, &mut g1);
        let mut g2 = MlpGrads::zeros_like(&p);
        p.backprop(&tape, 2.0, &mut g2);
        let mut combined = MlpGrads::zeros_like(&p);
        p.backprop(&tape, 0.5, &mut combined);
        p.backprop(&tape, 1.5, &mut combined);
        for l in 0..g1.weights.len() {
            for i in 0..g1.weights[l].len() {
                assert!((g2.weights[l][i] - 2.0 * g1.weights[l][i]).abs() < 1e-12);
                assert!((combined.weights[l][i] - g2.weights[l][i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn lipschitz_init_certifies_bound() {
        let p = lipschitz_init(&[1, 32, 32, 1], 1.0, 7).unwrap();
        assert!((p.lipschitz_product_bound() - 1.0).abs() < 1e-9);
        let emp = p.empirical_lipschitz(10_000, 9);
        assert!(emp <= 1.0 + 1e-9, "empirical estimate {emp}");
        assert!(lipschitz_init(&[1, 8, 1], 0.0, 0).is_err());
        // Same seed, same parameters.
        let q = lipschitz_init(&[1, 32, 32, 1], 1.0, 7).unwrap();
        assert_eq!(p.weights, q.weights);
    }

    #[test]
    fn sgd_with_zero_lr_is_identity() {
        let mut p = MlpParams::new_random(&[1, 4, 1], 2).unwrap();
        let before = p.clone();
        let mut grads = MlpGrads::zeros_like(&p);
        grads.weights[0][0] = 123.0;
        let mut opt = Optimizer::Sgd { lr: 0.0 };
        opt.step(&mut p, &grads);
        assert_eq!(p.weights, before.weights);
        let mut opt = Optimizer::adam(&p, 0.0);
        opt.step(&mut p, &grads);
        assert_eq!(p.weights, before.weights);
    }

    #[test]
    fn checkpoint_roundtrip() {
        let p = lipschitz_init(&[2, 5, 1], 1.5, 11).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&p, &mut buf).unwrap();
        let q = load_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(p.sizes, q.sizes);
        assert_eq!(p.weights, q.weights);
        assert_eq!(p.biases, q.biases);
        assert_eq!(p.seed, q.seed);
    }
}
