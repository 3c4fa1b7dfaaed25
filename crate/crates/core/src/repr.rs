//! Learned Laplacian representation.
//!
//! A network maps observations to `d` outputs `f_1..f_d` trained so that they
//! approximate the `d` smallest Laplacian eigenfunctions, in order. The loss
//! has a smoothness part over observed transitions and an orthonormality
//! penalty over independently drawn states:
//!
//! ```text
//! ½ · mean_pairs Σ_i Σ_{k≤i} (f_k(s) - f_k(s'))²
//!   + β Σ_i Σ_{j≤i} Σ_{k≤i} (E[f_j f_k] - δ_jk)²
//! ```
//!
//! Collapsing the nested sums gives weight `d - k + 1` (1-based) on the
//! smoothness of `f_k` and `d - max(j,k) + 1` on penalty entry `(j,k)`. The
//! squared expectation is estimated without bias as the product
//! `(A_jk - δ_jk)(B_jk - δ_jk)` where `A` and `B` are second-moment
//! estimates from the two halves of the state batch. Gradients flow through
//! both factors and across all outputs.
//!
//! The uniform variant used for comparison weighs every smoothness term by 1
//! and every penalty entry `(j,k)` by 1.

use rand::Rng as _;

use crate::agents::ReplayBuffer;
use crate::env::EnvState;
use crate::error::{Error, Result};
use crate::nn::{AdamState, Grads, Matrix, Mlp};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReprLoss {
    /// Decreasing coefficients; recovers individual eigenfunctions in order.
    #[default]
    Generalized,
    /// Uniform coefficients; recovers the eigenspace only up to rotation.
    Uniform,
}

impl ReprLoss {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "generalized" => Ok(ReprLoss::Generalized),
            "wu" | "uniform" => Ok(ReprLoss::Uniform),
            other => Err(Error::config(format!("unknown representation loss '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ReprLoss::Generalized => "generalized",
            ReprLoss::Uniform => "wu",
        }
    }

    /// Smoothness weight of output `k` (0-based) out of `d`.
    pub fn smoothness_weight(self, k: usize, d: usize) -> f64 {
        match self {
            ReprLoss::Generalized => (d - k) as f64,
            ReprLoss::Uniform => 1.0,
        }
    }

    /// Penalty weight of entry `(j, k)` (0-based) out of `d`.
    pub fn penalty_weight(self, j: usize, k: usize, d: usize) -> f64 {
        match self {
            ReprLoss::Generalized => (d - j.max(k)) as f64,
            ReprLoss::Uniform => 1.0,
        }
    }
}

/// Coefficients `c_i = d - i + 1`, `i = 1..d`.
pub fn coefficients(d: usize) -> Vec<f64> {
    (0..d).map(|k| ReprLoss::Generalized.smoothness_weight(k, d)).collect()
}

/// Observation rows for one loss evaluation.
#[derive(Debug, Clone)]
pub struct ReprBatch {
    /// `s` of each transition pair.
    pub from: Matrix,
    /// `s'` of each transition pair.
    pub to: Matrix,
    /// Independently drawn states for the orthonormality penalty.
    pub aux: Matrix,
}

impl ReprBatch {
    pub fn from_states(pairs: &[(&EnvState, &EnvState)], aux: &[&EnvState]) -> Result<Self> {
        let from: Vec<&[f64]> = pairs.iter().map(|(s, _)| &*s.features).collect();
        let to: Vec<&[f64]> = pairs.iter().map(|(_, t)| &*t.features).collect();
        let aux_rows: Vec<&[f64]> = aux.iter().map(|s| &*s.features).collect();
        Ok(ReprBatch {
            from: Matrix::from_rows(&from)?,
            to: Matrix::from_rows(&to)?,
            aux: Matrix::from_rows(&aux_rows)?,
        })
    }
}

/// Loss value and gradients with respect to the network outputs.
#[derive(Debug, Clone)]
pub struct OutputGrads {
    pub loss: f64,
    pub from: Matrix,
    pub to: Matrix,
    pub aux: Matrix,
}

/// The loss as a function of network outputs `f(s)`, `f(s')`, `f(aux)`.
pub fn loss_on_outputs(kind: ReprLoss, beta: f64, from: &Matrix, to: &Matrix, aux: &Matrix) -> Result<OutputGrads> {
    check_outputs(from, to, aux)?;
    let d = from.cols;
    let (smooth, g_from, g_to) = smoothness(kind, from, to);
    let h1 = aux.rows / 2;
    let h2 = aux.rows - h1;
    let a = second_moments(aux, 0, h1);
    let b = second_moments(aux, h1, aux.rows);
    let mut penalty = 0.0;
    // weighted residuals wa = w (A - δ), wb = w (B - δ)
    let mut wa = vec![0.0; d * d];
    let mut wb = vec![0.0; d * d];
    for j in 0..d {
        for k in 0..d {
            let w = kind.penalty_weight(j, k, d);
            let ea = a[j * d + k] - delta(j, k);
            let eb = b[j * d + k] - delta(j, k);
            penalty += w * ea * eb;
            wa[j * d + k] = w * ea;
            wb[j * d + k] = w * eb;
        }
    }
    penalty *= beta;

    // d/d f_l(x) of Σ_jk w (A-δ)(B-δ): for x in the first half,
    // (2β/h1) Σ_k w_lk (B_lk - δ_lk) f_k(x); symmetric for the second half.
    let mut g_aux = Matrix::zeros(aux.rows, d);
    for r in 0..aux.rows {
        let (weights, n) = if r < h1 { (&wb, h1) } else { (&wa, h2) };
        let row = aux.row(r);
        for l in 0..d {
            let s: f64 = (0..d).map(|k| weights[l * d + k] * row[k]).sum();
            g_aux.set(r, l, 2.0 * beta * s / n as f64);
        }
    }
    Ok(OutputGrads { loss: smooth + penalty, from: g_from, to: g_to, aux: g_aux })
}

fn check_outputs(from: &Matrix, to: &Matrix, aux: &Matrix) -> Result<()> {
    if from.rows == 0 || to.shape() != from.shape() {
        return Err(Error::usage("transition pairs must be non-empty and aligned"));
    }
    if aux.rows < 2 {
        return Err(Error::usage("orthonormality estimate needs at least two states"));
    }
    if aux.cols != from.cols {
        return Err(Error::usage("aux outputs have the wrong width"));
    }
    Ok(())
}

fn delta(j: usize, k: usize) -> f64 {
    if j == k {
        1.0
    } else {
        0.0
    }
}

/// Weighted smoothness term and its gradients for `from` and `to`.
fn smoothness(kind: ReprLoss, from: &Matrix, to: &Matrix) -> (f64, Matrix, Matrix) {
    let (m, d) = from.shape();
    let mut g_from = Matrix::zeros(m, d);
    let mut g_to = Matrix::zeros(m, d);
    let mut smooth = 0.0;
    for r in 0..m {
        for k in 0..d {
            let c = kind.smoothness_weight(k, d);
            let diff = from.get(r, k) - to.get(r, k);
            smooth += c * diff * diff;
            let g = c * diff / m as f64;
            g_from.set(r, k, g);
            g_to.set(r, k, -g);
        }
    }
    (smooth * 0.5 / m as f64, g_from, g_to)
}

/// Mean of `f f^T` over rows `lo..hi`, row-major `d×d`.
fn second_moments(out: &Matrix, lo: usize, hi: usize) -> Vec<f64> {
    let d = out.cols;
    let mut acc = vec![0.0; d * d];
    for r in lo..hi {
        let row = out.row(r);
        for j in 0..d {
            for k in 0..d {
                acc[j * d + k] += row[j] * row[k];
            }
        }
    }
    let n = (hi - lo) as f64;
    acc.iter_mut().for_each(|x| *x /= n);
    acc
}

#[derive(Debug, Clone)]
pub struct ReprConfig {
    pub d: usize,
    pub hidden: Vec<usize>,
    pub beta: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub loss: ReprLoss,
    /// Subtracted from every input feature before the network sees it.
    pub input_offset: f64,
}

impl Default for ReprConfig {
    fn default() -> Self {
        ReprConfig {
            d: 10,
            hidden: vec![256, 256],
            beta: 2.0,
            lr: 1e-4,
            batch_size: 32,
            loss: ReprLoss::Generalized,
            input_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LaplacianRepr {
    pub d: usize,
    pub net: Mlp,
    pub beta: f64,
    pub loss: ReprLoss,
    pub batch_size: usize,
    pub input_offset: f64,
    pub adam: AdamState,
}

impl LaplacianRepr {
    pub fn new(input: usize, cfg: &ReprConfig, rng: &mut Rng) -> Result<Self> {
        if cfg.d == 0 {
            return Err(Error::config("representation needs at least one output"));
        }
        let mut widths = vec![input];
        widths.extend(&cfg.hidden);
        widths.push(cfg.d);
        let net = Mlp::new(&widths, rng)?;
        Ok(Self::from_net(net, cfg))
    }

    pub fn from_net(net: Mlp, cfg: &ReprConfig) -> Self {
        LaplacianRepr {
            d: net.output_width(),
            adam: AdamState::new(&net, cfg.lr),
            net,
            beta: cfg.beta,
            loss: cfg.loss,
            batch_size: cfg.batch_size,
            input_offset: cfg.input_offset,
        }
    }

    fn shift(&self, m: &Matrix) -> Matrix {
        let mut out = m.clone();
        if self.input_offset != 0.0 {
            out.data.iter_mut().for_each(|x| *x -= self.input_offset);
        }
        out
    }

    fn outputs(&self, m: &Matrix) -> Result<Matrix> {
        self.net.forward(&self.shift(m))
    }

    pub fn coefficients(&self) -> Vec<f64> {
        coefficients(self.d)
    }

    /// Loss of the configured kind and its parameter gradients.
    pub fn loss_and_grads(&self, batch: &ReprBatch) -> Result<(f64, Grads)> {
        self.loss_and_grads_as(self.loss, batch)
    }

    pub fn generalized_loss(&self, batch: &ReprBatch) -> Result<(f64, Grads)> {
        self.loss_and_grads_as(ReprLoss::Generalized, batch)
    }

    pub fn wu_loss(&self, batch: &ReprBatch) -> Result<(f64, Grads)> {
        self.loss_and_grads_as(ReprLoss::Uniform, batch)
    }

    fn loss_and_grads_as(&self, kind: ReprLoss, batch: &ReprBatch) -> Result<(f64, Grads)> {
        let cf = self.net.forward_cached(&self.shift(&batch.from))?;
        let ct = self.net.forward_cached(&self.shift(&batch.to))?;
        let ca = self.net.forward_cached(&self.shift(&batch.aux))?;
        let g = loss_on_outputs(kind, self.beta, cf.output(), ct.output(), ca.output())?;
        let mut grads = self.net.backward(&cf, &g.from)?;
        grads.add(&self.net.backward(&ct, &g.to)?);
        grads.add(&self.net.backward(&ca, &g.aux)?);
        Ok((g.loss, grads))
    }

    /// One Adam step on a given batch. Returns the loss before the step.
    pub fn train_on_batch(&mut self, batch: &ReprBatch) -> Result<f64> {
        let (loss, grads) = self.loss_and_grads(batch)?;
        if !loss.is_finite() {
            return Err(Error::training(format!("representation loss is {loss} at step {}", self.adam.t + 1)));
        }
        self.adam.step(&mut self.net, &grads)?;
        Ok(loss)
    }

    /// Sample pairs and independent states uniformly from `buffer` and take
    /// one Adam step. `Ok(None)` when the buffer holds fewer than
    /// `batch_size` transitions.
    pub fn train_step(&mut self, buffer: &ReplayBuffer, rng: &mut Rng) -> Result<Option<f64>> {
        let m = self.batch_size.max(2);
        if buffer.len() < m || buffer.is_empty() {
            return Ok(None);
        }
        let pairs: Vec<(&EnvState, &EnvState)> = (0..m)
            .map(|_| {
                let t = buffer.get(rng.gen_range(0..buffer.len()));
                (&t.state, &t.next_state)
            })
            .collect();
        let aux: Vec<&EnvState> = (0..m).map(|_| &buffer.get(rng.gen_range(0..buffer.len())).state).collect();
        let batch = ReprBatch::from_states(&pairs, &aux)?;
        self.train_on_batch(&batch).map(Some)
    }

    /// `f_1..f_d` per state, one row each.
    pub fn eigenfunction_values(&self, states: &[EnvState]) -> Result<Vec<Vec<f64>>> {
        if states.is_empty() {
            return Ok(Vec::new());
        }
        let rows: Vec<&[f64]> = states.iter().map(|s| &*s.features).collect();
        let out = self.outputs(&Matrix::from_rows(&rows)?)?;
        Ok((0..out.rows).map(|r| out.row(r).to_vec()).collect())
    }

    pub fn values_one(&self, state: &EnvState) -> Result<Vec<f64>> {
        let x: Vec<f64> = state.features.iter().map(|v| v - self.input_offset).collect();
        self.net.forward_one(&x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradient_check;
    use crate::rng;

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    /// Direct evaluation of the nested sums, with no weight collapsing.
    fn nested_sum_loss(kind: ReprLoss, beta: f64, from: &Matrix, to: &Matrix, aux: &Matrix) -> f64 {
        let d = from.cols;
        let mut smooth = 0.0;
        for r in 0..from.rows {
            for i in 0..d {
                let ks: Vec<usize> = match kind {
                    ReprLoss::Generalized => (0..=i).collect(),
                    ReprLoss::Uniform => vec![i],
                };
                for k in ks {
                    smooth += (from.get(r, k) - to.get(r, k)).powi(2);
                }
            }
        }
        smooth *= 0.5 / from.rows as f64;
        let h1 = aux.rows / 2;
        let mean = |lo: usize, hi: usize, j: usize, k: usize| {
            (lo..hi).map(|r| aux.get(r, j) * aux.get(r, k)).sum::<f64>() / (hi - lo) as f64
        };
        let term = |j: usize, k: usize| {
            let dl = if j == k { 1.0 } else { 0.0 };
            (mean(0, h1, j, k) - dl) * (mean(h1, aux.rows, j, k) - dl)
        };
        let mut pen = 0.0;
        match kind {
            ReprLoss::Generalized => {
                for i in 0..d {
                    for j in 0..=i {
                        for k in 0..=i {
                            pen += term(j, k);
                        }
                    }
                }
            }
            ReprLoss::Uniform => {
                for j in 0..d {
                    for k in 0..d {
                        pen += term(j, k);
                    }
                }
            }
        }
        smooth + beta * pen
    }

    #[test]
    fn constant_unit_function_has_zero_loss() {
        let ones = m(&[&[1.0], &[1.0], &[1.0]]);
        let g = loss_on_outputs(ReprLoss::Generalized, 2.0, &ones, &ones, &ones).unwrap();
        assert_eq!(g.loss, 0.0);
    }

    #[test]
    fn zero_functions_cost_beta_times_nested_count() {
        for d in 1..=5 {
            let z = Matrix::zeros(4, d);
            let g = loss_on_outputs(ReprLoss::Generalized, 1.5, &z, &z, &z).unwrap();
            assert_eq!(g.loss, 1.5 * (d * (d + 1) / 2) as f64);
            let u = loss_on_outputs(ReprLoss::Uniform, 1.5, &z, &z, &z).unwrap();
            assert_eq!(u.loss, 1.5 * d as f64);
        }
    }

    #[test]
    fn hand_built_two_function_batch() {
        let from = m(&[&[1.0, 0.0], &[0.5, 0.5]]);
        let to = m(&[&[0.0, 1.0], &[0.5, 0.5]]);
        let aux = m(&[&[1.0, 1.0], &[1.0, -1.0]]);
        // smoothness ½·(3 + 0)/2 = 0.75; penalty: off-diagonal (1)(-1) twice at i=2 → -2
        let g = loss_on_outputs(ReprLoss::Generalized, 1.0, &from, &to, &aux).unwrap();
        assert!((g.loss - (-1.25)).abs() < 1e-15);
        // uniform: smoothness ½·2/2 = 0.5; same penalty
        let u = loss_on_outputs(ReprLoss::Uniform, 1.0, &from, &to, &aux).unwrap();
        assert!((u.loss - (-1.5)).abs() < 1e-15);
        for kind in [ReprLoss::Generalized, ReprLoss::Uniform] {
            let got = loss_on_outputs(kind, 1.0, &from, &to, &aux).unwrap().loss;
            assert!((got - nested_sum_loss(kind, 1.0, &from, &to, &aux)).abs() < 1e-15);
        }
    }

    #[test]
    fn single_function_losses_coincide() {
        let mut r = rng::stream(0, "d1");
        let rand_m =
            |r: &mut Rng, rows| Matrix::from_vec(rows, 1, (0..rows).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
        let (f, t, a) = (rand_m(&mut r, 5), rand_m(&mut r, 5), rand_m(&mut r, 6));
        let g = loss_on_outputs(ReprLoss::Generalized, 2.0, &f, &t, &a).unwrap().loss;
        let u = loss_on_outputs(ReprLoss::Uniform, 2.0, &f, &t, &a).unwrap().loss;
        assert_eq!(g, u);
    }

    #[test]
    fn constant_functions_are_penalized_for_correlation() {
        let ones = Matrix::from_vec(4, 2, vec![1.0; 8]).unwrap();
        for kind in [ReprLoss::Generalized, ReprLoss::Uniform] {
            assert!(loss_on_outputs(kind, 1.0, &ones, &ones, &ones).unwrap().loss > 0.0);
        }
    }

    #[test]
    fn too_few_states_is_usage_error() {
        let one = Matrix::zeros(1, 2);
        assert!(matches!(loss_on_outputs(ReprLoss::Generalized, 1.0, &one, &one, &one), Err(Error::Usage(_))));
    }

    #[test]
    fn output_gradients_match_finite_differences() {
        let mut r = rng::stream(1, "og");
        let mut rand_m = |rows, cols| {
            Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        let (f, t, a) = (rand_m(4, 3), rand_m(4, 3), rand_m(5, 3));
        for kind in [ReprLoss::Generalized, ReprLoss::Uniform] {
            let g = loss_on_outputs(kind, 2.0, &f, &t, &a).unwrap();
            let h = 1e-6;
            for (which, grad) in [(0, &g.from), (1, &g.to), (2, &g.aux)] {
                let base = [&f, &t, &a][which];
                for idx in 0..base.data.len() {
                    let eval = |delta: f64| {
                        let mut mats = [f.clone(), t.clone(), a.clone()];
                        mats[which].data[idx] += delta;
                        nested_sum_loss(kind, 2.0, &mats[0], &mats[1], &mats[2])
                    };
                    let num = (eval(h) - eval(-h)) / (2.0 * h);
                    assert!((num - grad.data[idx]).abs() < 1e-6, "{kind:?} {which} {idx}");
                }
            }
        }
    }

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut r = rng::stream(2, "pg");
        for kind in [ReprLoss::Generalized, ReprLoss::Uniform] {
            let cfg = ReprConfig { d: 3, hidden: vec![32, 32], beta: 2.0, loss: kind, ..Default::default() };
            let repr = LaplacianRepr::new(4, &cfg, &mut r).unwrap();
            let batch = loop {
                let mut rand_m =
                    |rows| Matrix::from_vec(rows, 4, (0..rows * 4).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
                let b = ReprBatch { from: rand_m(6), to: rand_m(6), aux: rand_m(6) };
                // finite differences are only meaningful away from ReLU kinks
                if [&b.from, &b.to, &b.aux].iter().all(|x| repr.net.kink_margin(x).unwrap() > 1e-3) {
                    break b;
                }
            };
            let (_, grads) = repr.loss_and_grads(&batch).unwrap();
            let err = gradient_check(&repr.net, &grads, 1e-5, |net| {
                let probe = LaplacianRepr { net: net.clone(), ..repr.clone() };
                probe.loss_and_grads(&batch).unwrap().0
            });
            assert!(err <= 1e-4, "{kind:?}: {err}");
        }
    }

    #[test]
    fn pair_order_does_not_matter() {
        let from = m(&[&[1.0, 0.2], &[0.5, 0.5], &[0.0, -1.0]]);
        let to = m(&[&[0.0, 1.0], &[0.3, 0.5], &[0.1, 0.1]]);
        let aux = m(&[&[1.0, 1.0], &[1.0, -1.0]]);
        let perm = |x: &Matrix| m(&[x.row(2), x.row(0), x.row(1)]);
        let a = loss_on_outputs(ReprLoss::Generalized, 2.0, &from, &to, &aux).unwrap().loss;
        let b = loss_on_outputs(ReprLoss::Generalized, 2.0, &perm(&from), &perm(&to), &aux).unwrap().loss;
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn coefficients_decrease() {
        assert_eq!(coefficients(4), vec![4.0, 3.0, 2.0, 1.0]);
    }

    #[test]
    fn train_step_skips_on_small_buffer() {
        let cfg = ReprConfig { d: 2, hidden: vec![4], ..Default::default() };
        let mut repr = LaplacianRepr::new(3, &cfg, &mut rng::stream(0, "r")).unwrap();
        let buffer = ReplayBuffer::new(0);
        assert_eq!(repr.train_step(&buffer, &mut rng::stream(0, "s")).unwrap(), None);
    }
}
