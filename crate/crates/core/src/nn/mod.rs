//! Small dense neural-network engine: matrices, ReLU multilayer perceptrons
//! with hand-written reverse mode, Adam, and a central-difference gradient
//! checker.
//!
//! Checkpoints are plain text. Each tensor starts with a header line
//! `tensor <name> <rows> <cols>` followed by `rows` lines of comma-separated
//! values. Weight `l` is named `w<l>` and has shape `fan_in × fan_out`; bias
//! `l` is `b<l>` with shape `1 × fan_out`. Floats are written in shortest
//! round-trip form, so save/load is lossless.

pub mod matrix;

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;

pub use matrix::Matrix;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Fully connected network, ReLU on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub widths: Vec<usize>,
    /// `weights[l]` is `widths[l] × widths[l+1]`.
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// Parameter-shaped values: gradients, Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Grads {
            weights: net.weights.iter().map(|w| Matrix::zeros(w.rows, w.cols)).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().flat_map(|w| w.data.iter()).chain(self.biases.iter().flatten())
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().flat_map(|w| w.data.iter_mut()).chain(self.biases.iter_mut().flatten())
    }

    pub fn scale(&mut self, k: f64) {
        self.values_mut().for_each(|x| *x *= k);
    }

    /// `self += other`.
    pub fn add(&mut self, other: &Grads) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is the input to layer `l`; the last entry is the output.
    layers: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.layers.last().expect("cache holds at least the input")
    }
}

impl Mlp {
    /// Weights and biases uniform in `±1/√fan_in`.
    pub fn new(widths: &[usize], rng: &mut Rng) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::config(format!("invalid layer widths {widths:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
            weights.push(Matrix::from_vec(fan_in, fan_out, w)?);
            biases.push((0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect());
        }
        Ok(Mlp { widths: widths.to_vec(), weights, biases })
    }

    /// All-zero parameters.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::config(format!("invalid layer widths {widths:?}")));
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            weights: widths.windows(2).map(|p| Matrix::zeros(p[0], p[1])).collect(),
            biases: widths[1..].iter().map(|&w| vec![0.0; w]).collect(),
        })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.data.len()).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite) && self.biases.iter().flatten().all(|x| x.is_finite())
    }

    pub fn forward(&self, batch: &Matrix) -> Result<Matrix> {
        let mut x = self.check_input(batch)?;
        for l in 0..self.weights.len() {
            x = self.layer(l, &x);
        }
        Ok(x)
    }

    pub fn forward_cached(&self, batch: &Matrix) -> Result<ForwardCache> {
        let first = self.check_input(batch)?;
        let mut layers = Vec::with_capacity(self.weights.len() + 1);
        layers.push(first);
        for l in 0..self.weights.len() {
            let next = self.layer(l, layers.last().unwrap());
            layers.push(next);
        }
        Ok(ForwardCache { layers })
    }

    /// Smallest `|pre-activation|` over all hidden units and rows: how far
    /// the batch is from a ReLU kink. Infinite for networks without hidden
    /// layers.
    pub fn kink_margin(&self, batch: &Matrix) -> Result<f64> {
        let mut x = self.check_input(batch)?;
        let mut margin = f64::INFINITY;
        for l in 0..self.weights.len() - 1 {
            let mut z = x.matmul(&self.weights[l])?;
            for r in 0..z.rows {
                for (v, b) in z.row_mut(r).iter_mut().zip(&self.biases[l]) {
                    *v += b;
                    margin = margin.min(v.abs());
                    *v = v.max(0.0);
                }
            }
            x = z;
        }
        Ok(margin)
    }

    /// Output for a single input row.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = Matrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward(&batch)?.data)
    }

    fn check_input(&self, batch: &Matrix) -> Result<Matrix> {
        if batch.cols != self.input_width() {
            return Err(Error::usage(format!(
                "batch width {} does not match network input width {}",
                batch.cols,
                self.input_width()
            )));
        }
        Ok(batch.clone())
    }

    fn layer(&self, l: usize, x: &Matrix) -> Matrix {
        let w = &self.weights[l];
        let b = &self.biases[l];
        let last = l + 1 == self.weights.len();
        let mut z = Matrix::zeros(x.rows, w.cols);
        for r in 0..x.rows {
            let dst = z.row_mut(r);
            dst.copy_from_slice(b);
            for (k, &a) in x.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (d, &wv) in dst.iter_mut().zip(w.row(k)) {
                    *d += a * wv;
                }
            }
            if !last {
                dst.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        z
    }

    /// Gradients of `sum(upstream ⊙ output)` with respect to the parameters.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<Grads> {
        Ok(self.backward_impl(cache, upstream, false)?.0)
    }

    /// Parameter gradients plus the gradient with respect to the input batch.
    pub fn backward_full(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<(Grads, Matrix)> {
        self.backward_impl(cache, upstream, true)
    }

    fn backward_impl(&self, cache: &ForwardCache, upstream: &Matrix, input_grad: bool) -> Result<(Grads, Matrix)> {
        let out = cache.output();
        if upstream.shape() != out.shape() {
            return Err(Error::usage(format!(
                "upstream gradient is {}×{} but the output is {}×{}",
                upstream.rows, upstream.cols, out.rows, out.cols
            )));
        }
        let mut grads = Grads::zeros_like(self);
        let mut delta = upstream.clone();
        for l in (0..self.weights.len()).rev() {
            let x = &cache.layers[l];
            let w = &self.weights[l];
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for r in 0..x.rows {
                let d = delta.row(r);
                for (gbj, &dj) in gb.iter_mut().zip(d) {
                    *gbj += dj;
                }
                for (k, &a) in x.row(r).iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    for (g, &dj) in gw.row_mut(k).iter_mut().zip(d) {
                        *g += a * dj;
                    }
                }
            }
            if l == 0 && !input_grad {
                break;
            }
            let mut prev = Matrix::zeros(x.rows, x.cols);
            for r in 0..x.rows {
                let d = delta.row(r);
                let dst = prev.row_mut(r);
                for (k, p) in dst.iter_mut().enumerate() {
                    *p = w.row(k).iter().zip(d).map(|(a, b)| a * b).sum();
                }
                // ReLU derivative of the layer that produced x
                if l > 0 {
                    for (p, &a) in dst.iter_mut().zip(x.row(r)) {
                        if a <= 0.0 {
                            *p = 0.0;
                        }
                    }
                }
            }
            delta = prev;
        }
        Ok((grads, delta))
    }

    /// Apply `params += k · grads`.
    pub fn add_scaled(&mut self, grads: &Grads, k: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            for (a, b) in w.data.iter_mut().zip(&g.data) {
                *a += k * b;
            }
        }
        for (bias, g) in self.biases.iter_mut().zip(&grads.biases) {
            for (a, b) in bias.iter_mut().zip(g) {
                *a += k * b;
            }
        }
    }

    /// Deep copy; later updates to `self` do not reach the copy.
    pub fn copy_params(&self) -> Mlp {
        self.clone()
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().flat_map(|w| w.data.iter_mut()).chain(self.biases.iter_mut().flatten())
    }

    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let _ = writeln!(out, "tensor w{l} {} {}", w.rows, w.cols);
            for r in 0..w.rows {
                write_row(&mut out, w.row(r));
            }
            let _ = writeln!(out, "tensor b{l} 1 {}", b.len());
            write_row(&mut out, b);
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Mlp> {
        let bad = |msg: String| Error::config(format!("checkpoint: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut tensors: Vec<(String, Matrix)> = Vec::new();
        while let Some(header) = lines.next() {
            let parts: Vec<&str> = header.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "tensor" {
                return Err(bad(format!("expected tensor header, got '{header}'")));
            }
            let rows: usize = parts[2].parse().map_err(|_| bad(format!("bad row count in '{header}'")))?;
            let cols: usize = parts[3].parse().map_err(|_| bad(format!("bad column count in '{header}'")))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let line = lines.next().ok_or_else(|| bad(format!("tensor {} is short", parts[1])))?;
                for v in line.split(',') {
                    data.push(v.trim().parse::<f64>().map_err(|_| bad(format!("bad value '{v}'")))?);
                }
            }
            tensors.push((parts[1].to_string(), Matrix::from_vec(rows, cols, data).map_err(|e| bad(e.to_string()))?));
        }
        if tensors.is_empty() || !tensors.len().is_multiple_of(2) {
            return Err(bad("expected alternating weight and bias tensors".into()));
        }
        let mut widths = vec![tensors[0].1.rows];
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, pair) in tensors.chunks(2).enumerate() {
            let (wn, w) = &pair[0];
            let (bn, b) = &pair[1];
            if *wn != format!("w{l}") || *bn != format!("b{l}") {
                return Err(bad(format!("unexpected tensor names {wn}, {bn} at layer {l}")));
            }
            if w.rows != *widths.last().unwrap() || b.rows != 1 || b.cols != w.cols {
                return Err(bad(format!("inconsistent shapes at layer {l}")));
            }
            widths.push(w.cols);
            weights.push(w.clone());
            biases.push(b.data.clone());
        }
        Ok(Mlp { widths, weights, biases })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Mlp> {
        Mlp::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}

fn write_row(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{v:?}");
    }
    out.push('\n');
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Grads,
    v: Grads,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        AdamState {
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            t: 0,
            m: Grads::zeros_like(net),
            v: Grads::zeros_like(net),
        }
    }

    /// One Adam update of `net` (gradient descent on the loss whose gradient
    /// is `grads`).
    pub fn step(&mut self, net: &mut Mlp, grads: &Grads) -> Result<()> {
        if let Some(bad) = grads.values().find(|g| !g.is_finite()) {
            return Err(Error::training(format!(
                "non-finite gradient ({bad}) at Adam step {}; largest finite magnitude {}",
                self.t + 1,
                grads.values().filter(|g| g.is_finite()).fold(0.0f64, |m, g| m.max(g.abs()))
            )));
        }
        if grads.weights.len() != self.m.weights.len()
            || grads.weights.iter().zip(&self.m.weights).any(|(a, b)| a.shape() != b.shape())
        {
            return Err(Error::usage("gradient shapes do not match the optimizer state"));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let params = net.params_mut();
        let moments = self.m.values_mut().zip(self.v.values_mut());
        for ((p, (m, v)), &g) in params.zip(moments).zip(grads.values()) {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Largest relative error between `analytic` parameter gradients and central
/// finite differences of `loss` with step `h`. Pairs whose absolute
/// difference is below `1e-9` count as agreeing.
pub fn gradient_check(net: &Mlp, analytic: &Grads, h: f64, mut loss: impl FnMut(&Mlp) -> f64) -> f64 {
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    let n = net.num_params();
    let flat: Vec<f64> = analytic.values().copied().collect();
    for (idx, &a) in flat.iter().enumerate().take(n) {
        let orig = *probe.params_mut().nth(idx).unwrap();
        *probe.params_mut().nth(idx).unwrap() = orig + h;
        let up = loss(&probe);
        *probe.params_mut().nth(idx).unwrap() = orig - h;
        let down = loss(&probe);
        *probe.params_mut().nth(idx).unwrap() = orig;
        let numeric = (up - down) / (2.0 * h);
        let diff = (a - numeric).abs();
        if diff < 1e-9 {
            continue;
        }
        worst = worst.max(diff / a.abs().max(numeric.abs()));
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn two_layer() -> Mlp {
        // 2 → 2 (ReLU) → 1
        let mut net = Mlp::zeros(&[2, 2, 1]).unwrap();
        net.weights[0] = Matrix::from_rows(&[[1.0, -1.0], [0.5, 2.0]]).unwrap();
        net.biases[0] = vec![0.0, -1.0];
        net.weights[1] = Matrix::from_rows(&[[2.0], [3.0]]).unwrap();
        net.biases[1] = vec![0.5];
        net
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2]).unwrap();
        let out = net.forward(&Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap()).unwrap();
        assert_eq!(out.data, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_net() {
        let mut net = Mlp::zeros(&[1, 1]).unwrap();
        net.weights[0].set(0, 0, 1.0);
        assert_eq!(net.forward_one(&[3.0]).unwrap(), vec![3.0]);
    }

    #[test]
    fn hand_computed_two_layer() {
        // hidden = relu([1+1, -1+4-1]) = [2, 2]; out = 4 + 6 + 0.5
        assert_eq!(two_layer().forward_one(&[1.0, 2.0]).unwrap(), vec![10.5]);
        let out = two_layer().forward_one(&[-3.0, 0.25]).unwrap();
        // z1 = [-3+0.125, 3+0.5-1] = [-2.875, 2.5] → [0, 2.5]; out = 7.5+0.5
        assert_eq!(out, vec![8.0]);
    }

    #[test]
    fn width_mismatch_is_usage_error() {
        let net = two_layer();
        assert!(matches!(net.forward_one(&[1.0]), Err(Error::Usage(_))));
        let cache = net.forward_cached(&Matrix::from_rows(&[[1.0, 2.0]]).unwrap()).unwrap();
        assert!(matches!(net.backward(&cache, &Matrix::zeros(1, 2)), Err(Error::Usage(_))));
    }

    #[test]
    fn linear_weight_gradient_is_input() {
        let mut net = Mlp::zeros(&[1, 1]).unwrap();
        net.weights[0].set(0, 0, 0.7);
        let cache = net.forward_cached(&Matrix::from_rows(&[[2.5]]).unwrap()).unwrap();
        let g = net.backward(&cache, &Matrix::from_rows(&[[1.0]]).unwrap()).unwrap();
        assert_eq!(g.weights[0].data, vec![2.5]);
        assert_eq!(g.biases[0], vec![1.0]);
        let zero = net.backward(&cache, &Matrix::zeros(1, 1)).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut r = rng::stream(3, "gradcheck");
        for widths in [vec![4, 8, 3], vec![5, 16, 16, 2], vec![3, 7, 9, 6, 4]] {
            let net = Mlp::new(&widths, &mut r).unwrap();
            let rows: Vec<Vec<f64>> =
                (0..6).map(|_| (0..widths[0]).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
            let batch = Matrix::from_rows(&rows).unwrap();
            assert!(net.kink_margin(&batch).unwrap() > 1e-4);
            let up_rows: Vec<Vec<f64>> =
                (0..6).map(|_| (0..*widths.last().unwrap()).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
            let upstream = Matrix::from_rows(&up_rows).unwrap();
            let cache = net.forward_cached(&batch).unwrap();
            let grads = net.backward(&cache, &upstream).unwrap();
            let err = gradient_check(&net, &grads, 1e-5, |n| {
                let out = n.forward(&batch).unwrap();
                out.data.iter().zip(&upstream.data).map(|(a, b)| a * b).sum()
            });
            assert!(err <= 1e-4, "{widths:?}: {err}");
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut net = Mlp::zeros(&[1, 2]).unwrap();
        let mut g = Grads::zeros_like(&net);
        g.weights[0].data = vec![0.3, -2.0];
        let mut adam = AdamState::new(&net, 1e-3);
        adam.step(&mut net, &g).unwrap();
        assert!((net.weights[0].data[0] + 1e-3).abs() < 1e-9);
        assert!((net.weights[0].data[1] - 1e-3).abs() < 1e-9);
        assert_eq!(net.biases[0], vec![0.0, 0.0]);
        assert_eq!(adam.t, 1);
    }

    #[test]
    fn adam_rejects_non_finite() {
        let mut net = Mlp::zeros(&[1, 1]).unwrap();
        let mut g = Grads::zeros_like(&net);
        g.biases[0][0] = f64::NAN;
        let mut adam = AdamState::new(&net, 1e-3);
        assert!(matches!(adam.step(&mut net, &g), Err(Error::Training(_))));
    }

    #[test]
    fn adam_descends_a_quadratic() {
        // loss = (w - 3)^2
        let mut net = Mlp::zeros(&[1, 1]).unwrap();
        let mut adam = AdamState::new(&net, 0.1);
        let loss = |n: &Mlp| (n.weights[0].data[0] - 3.0).powi(2);
        let before = loss(&net);
        for _ in 0..2 {
            let mut g = Grads::zeros_like(&net);
            g.weights[0].data[0] = 2.0 * (net.weights[0].data[0] - 3.0);
            adam.step(&mut net, &g).unwrap();
        }
        assert!(loss(&net) < before);
    }

    #[test]
    fn copy_is_independent() {
        let mut r = rng::stream(1, "copy");
        let mut net = Mlp::new(&[3, 5, 2], &mut r).unwrap();
        let copy = net.copy_params();
        let x = [0.1, -0.2, 0.3];
        let before = copy.forward_one(&x).unwrap();
        let g = Grads::zeros_like(&net);
        let mut ones = g.clone();
        ones.scale(0.0);
        ones.biases[1] = vec![1.0, 1.0];
        net.add_scaled(&ones, 1.0);
        assert_eq!(copy.forward_one(&x).unwrap(), before);
        assert_eq!(copy.copy_params(), copy);
        assert_ne!(net, copy);
    }

    #[test]
    fn same_seed_same_init() {
        let a = Mlp::new(&[4, 6, 2], &mut rng::stream(9, "init")).unwrap();
        let b = Mlp::new(&[4, 6, 2], &mut rng::stream(9, "init")).unwrap();
        assert_eq!(a, b);
        assert!(a.weights[0].data.iter().all(|w| w.abs() <= 0.5));
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = Mlp::new(&[3, 4, 2], &mut rng::stream(2, "ckpt")).unwrap();
        let text = net.to_checkpoint();
        assert!(text.starts_with("tensor w0 3 4\n"));
        assert_eq!(Mlp::from_checkpoint(&text).unwrap(), net);
        assert!(Mlp::from_checkpoint("tensor w0 1 1\n1.0\n").is_err());
    }

    #[test]
    fn relu_positive_homogeneity() {
        let mut net = Mlp::new(&[3, 8, 8, 2], &mut rng::stream(4, "homog")).unwrap();
        net.biases.iter_mut().flatten().for_each(|b| *b = 0.0);
        let x = [0.4, -1.0, 0.7];
        let base = net.forward_one(&x).unwrap();
        let mut scaled = net.clone();
        scaled.weights[1].data.iter_mut().for_each(|w| *w *= 2.5);
        let out = scaled.forward_one(&x).unwrap();
        for (a, b) in out.iter().zip(&base) {
            assert!((a - 2.5 * b).abs() < 1e-12);
        }
    }
}
