//! Stacked GRU with an MLP head, forward pass and backpropagation through time.
//!
//! Gate convention (per layer, `*` elementwise):
//!
//! ```text
//! r  = σ(W_ir x + b_ir + W_hr h + b_hr)
//! z  = σ(W_iz x + b_iz + W_hz h + b_hz)
//! n  = tanh(W_in x + b_in + r * (W_hn h + b_hn))
//! h' = (1 - z) * n + z * h
//! ```
//!
//! Gate rows are stacked `[r; z; n]` in `w_ih`, `w_hh`, `b_ih` and `b_hh`.
//! The head maps the top layer's last hidden state through a dense layer
//! with LeakyReLU and a dense layer with a sigmoid output.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricError;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub head_hidden: usize,
}

impl ModelShape {
    pub fn new(input_dim: usize) -> Self {
        Self { input_dim, hidden: 256, layers: 4, head_hidden: 256 }
    }

    pub fn validate(&self) -> Result<(), MetricError> {
        if self.input_dim == 0 || self.hidden == 0 || self.layers == 0 || self.head_hidden == 0 {
            return Err(MetricError::InvalidConfig(format!("all model dimensions must be positive: {self:?}")));
        }
        Ok(())
    }

    fn layer_input(&self, l: usize) -> usize {
        if l == 0 {
            self.input_dim
        } else {
            self.hidden
        }
    }

    /// Named tensors in storage order.
    pub fn tensors(&self) -> Vec<TensorSpec> {
        let mut out = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, rows: usize, cols: usize| {
            out.push(TensorSpec { name, rows, cols, offset });
            offset += rows * cols;
        };
        let g = 3 * self.hidden;
        for l in 0..self.layers {
            push(format!("gru.{l}.w_ih"), g, self.layer_input(l));
            push(format!("gru.{l}.w_hh"), g, self.hidden);
            push(format!("gru.{l}.b_ih"), g, 1);
            push(format!("gru.{l}.b_hh"), g, 1);
        }
        push("head.0.weight".into(), self.head_hidden, self.hidden);
        push("head.0.bias".into(), self.head_hidden, 1);
        push("head.1.weight".into(), 1, self.head_hidden);
        push("head.1.bias".into(), 1, 1);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.rows * t.cols).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }
}

#[derive(Debug, Clone, Copy)]
struct LayerOffsets {
    w_ih: usize,
    w_hh: usize,
    b_ih: usize,
    b_hh: usize,
}

#[derive(Debug, Clone)]
struct Offsets {
    layers: Vec<LayerOffsets>,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

impl Offsets {
    fn of(shape: &ModelShape) -> Self {
        let t = shape.tensors();
        let layers = (0..shape.layers)
            .map(|l| LayerOffsets {
                w_ih: t[4 * l].offset,
                w_hh: t[4 * l + 1].offset,
                b_ih: t[4 * l + 2].offset,
                b_hh: t[4 * l + 3].offset,
            })
            .collect();
        let h = 4 * shape.layers;
        Self { layers, w1: t[h].offset, b1: t[h + 1].offset, w2: t[h + 2].offset, b2: t[h + 3].offset }
    }
}

/// All weights in one flat buffer, laid out as [`ModelShape::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    shape: ModelShape,
    data: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(shape: ModelShape) -> Self {
        Self { shape, data: vec![0.0; shape.param_count()] }
    }

    /// GRU weights uniform in ±1/√hidden, dense layers uniform in ±1/√fan_in.
    pub fn init(shape: ModelShape, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(shape);
        for spec in shape.tensors() {
            let bound = if spec.name.starts_with("gru.") {
                1.0 / (shape.hidden as f64).sqrt()
            } else if spec.name == "head.0.weight" || spec.name == "head.0.bias" {
                1.0 / (shape.hidden as f64).sqrt()
            } else {
                1.0 / (shape.head_hidden as f64).sqrt()
            };
            for v in &mut p.data[spec.range()] {
                *v = rng.random_range(-bound..=bound);
            }
        }
        p
    }

    pub fn from_vec(shape: ModelShape, data: Vec<f64>) -> Result<Self, MetricError> {
        let expected = shape.param_count();
        if data.len() != expected {
            return Err(MetricError::ShapeMismatch { expected, got: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Visits every named tensor with its values.
    pub fn visit(&self, mut f: impl FnMut(&TensorSpec, &[f64])) {
        for spec in self.shape.tensors() {
            f(&spec, &self.data[spec.range()]);
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        self.shape.tensors().into_iter().find(|t| t.name == name).map(|t| &self.data[t.range()])
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let spec = self.shape.tensors().into_iter().find(|t| t.name == name)?;
        Some(&mut self.data[spec.range()])
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out += W x` with `W` row-major, `out.len()` rows.
fn matvec_add(out: &mut [f64], w: &[f64], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += Wᵀ g`.
fn matvec_t_add(out: &mut [f64], w: &[f64], g: &[f64]) {
    let cols = out.len();
    for (gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if *gi != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += gi * a;
            }
        }
    }
}

/// `dw += g xᵀ`.
fn outer_add(dw: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (gi, row) in g.iter().zip(dw.chunks_exact_mut(cols)) {
        if *gi != 0.0 {
            for (d, b) in row.iter_mut().zip(x) {
                *d += gi * b;
            }
        }
    }
}

/// Activations kept for the backward pass of one layer at one step.
struct StepCache {
    h_prev: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    n: Vec<f64>,
    /// `W_hn h + b_hn`, before the reset gate.
    hn: Vec<f64>,
}

struct ForwardTrace {
    /// `outputs[l][t]`: hidden state of layer `l` after step `t`.
    outputs: Vec<Vec<Vec<f64>>>,
    caches: Vec<Vec<StepCache>>,
    head_pre: Vec<f64>,
    head_act: Vec<f64>,
    y: f64,
}

impl ModelParams {
    fn check_sequence<X: AsRef<[f64]>>(&self, seq: &[X]) -> Result<(), MetricError> {
        if seq.is_empty() {
            return Err(MetricError::EmptySequence);
        }
        if let Some(x) = seq.iter().find(|x| x.as_ref().len() != self.shape.input_dim) {
            return Err(MetricError::ShapeMismatch { expected: self.shape.input_dim, got: x.as_ref().len() });
        }
        Ok(())
    }

    fn trace<X: AsRef<[f64]>>(&self, seq: &[X], keep: bool) -> ForwardTrace {
        let s = &self.shape;
        let h = s.hidden;
        let off = Offsets::of(s);
        let d = &self.data;
        let mut outputs: Vec<Vec<Vec<f64>>> = Vec::with_capacity(s.layers);
        let mut caches = Vec::with_capacity(s.layers);
        for (l, o) in off.layers.iter().enumerate() {
            let in_dim = s.layer_input(l);
            let w_ih = &d[o.w_ih..o.w_ih + 3 * h * in_dim];
            let w_hh = &d[o.w_hh..o.w_hh + 3 * h * h];
            let b_ih = &d[o.b_ih..o.b_ih + 3 * h];
            let b_hh = &d[o.b_hh..o.b_hh + 3 * h];
            let mut hs = Vec::with_capacity(seq.len());
            let mut cs = Vec::new();
            let mut h_prev = vec![0.0; h];
            for t in 0..seq.len() {
                let x: &[f64] = if l == 0 { seq[t].as_ref() } else { &outputs[l - 1][t] };
                let mut gi = b_ih.to_vec();
                matvec_add(&mut gi, w_ih, x);
                let mut gh = b_hh.to_vec();
                matvec_add(&mut gh, w_hh, &h_prev);
                let r: Vec<f64> = (0..h).map(|k| sigmoid(gi[k] + gh[k])).collect();
                let z: Vec<f64> = (0..h).map(|k| sigmoid(gi[h + k] + gh[h + k])).collect();
                let hn = gh[2 * h..].to_vec();
                let n: Vec<f64> = (0..h).map(|k| (gi[2 * h + k] + r[k] * hn[k]).tanh()).collect();
                let h_new: Vec<f64> = (0..h).map(|k| (1.0 - z[k]) * n[k] + z[k] * h_prev[k]).collect();
                if keep {
                    cs.push(StepCache { h_prev: std::mem::replace(&mut h_prev, h_new.clone()), r, z, n, hn });
                } else {
                    h_prev.clone_from(&h_new);
                }
                hs.push(h_new);
            }
            if !keep && l > 0 {
                // Only the layer directly below is needed to feed the next one.
                outputs[l - 1] = Vec::new();
            }
            outputs.push(hs);
            caches.push(cs);
        }
        let last = outputs[s.layers - 1].last().expect("non-empty sequence");
        let mut head_pre = d[off.b1..off.b1 + s.head_hidden].to_vec();
        matvec_add(&mut head_pre, &d[off.w1..off.w1 + s.head_hidden * h], last);
        let head_act: Vec<f64> = head_pre.iter().map(|&a| if a > 0.0 { a } else { LEAKY_SLOPE * a }).collect();
        let w2 = &d[off.w2..off.w2 + s.head_hidden];
        let a2 = d[off.b2] + w2.iter().zip(&head_act).map(|(a, b)| a * b).sum::<f64>();
        ForwardTrace { outputs, caches, head_pre, head_act, y: sigmoid(a2) }
    }

    /// Score in (0, 1) for one input sequence, starting from zero hidden state.
    pub fn forward<X: AsRef<[f64]>>(&self, seq: &[X]) -> Result<f64, MetricError> {
        self.check_sequence(seq)?;
        Ok(self.trace(seq, false).y)
    }

    /// Prediction and gradient of `weight * (y - target)^2` for one item,
    /// accumulated into `grad`.
    pub fn backward_into<X: AsRef<[f64]>>(
        &self,
        seq: &[X],
        target: f64,
        weight: f64,
        grad: &mut [f64],
    ) -> Result<f64, MetricError> {
        self.check_sequence(seq)?;
        if grad.len() != self.data.len() {
            return Err(MetricError::ShapeMismatch { expected: self.data.len(), got: grad.len() });
        }
        let s = &self.shape;
        let h = s.hidden;
        let off = Offsets::of(s);
        let d = &self.data;
        let tr = self.trace(seq, true);
        let steps = seq.len();

        // Head.
        let dy = 2.0 * weight * (tr.y - target);
        let da2 = dy * tr.y * (1.0 - tr.y);
        grad[off.b2] += da2;
        let w2 = &d[off.w2..off.w2 + s.head_hidden];
        for k in 0..s.head_hidden {
            grad[off.w2 + k] += da2 * tr.head_act[k];
        }
        let da1: Vec<f64> = (0..s.head_hidden)
            .map(|k| da2 * w2[k] * if tr.head_pre[k] > 0.0 { 1.0 } else { LEAKY_SLOPE })
            .collect();
        let last = &tr.outputs[s.layers - 1][steps - 1];
        outer_add(&mut grad[off.w1..off.w1 + s.head_hidden * h], &da1, last);
        for k in 0..s.head_hidden {
            grad[off.b1 + k] += da1[k];
        }

        // Gradient w.r.t. each layer's output at each step, top layer first.
        let mut d_out = vec![vec![0.0; h]; steps];
        matvec_t_add(&mut d_out[steps - 1], &d[off.w1..off.w1 + s.head_hidden * h], &da1);

        for l in (0..s.layers).rev() {
            let o = off.layers[l];
            let in_dim = s.layer_input(l);
            let w_ih = &d[o.w_ih..o.w_ih + 3 * h * in_dim];
            let w_hh = &d[o.w_hh..o.w_hh + 3 * h * h];
            let mut d_in = vec![vec![0.0; in_dim]; if l > 0 { steps } else { 0 }];
            let mut carry = vec![0.0; h];
            let mut dgi = vec![0.0; 3 * h];
            let mut dgh = vec![0.0; 3 * h];
            for t in (0..steps).rev() {
                let c = &tr.caches[l][t];
                let x: &[f64] = if l == 0 { seq[t].as_ref() } else { &tr.outputs[l - 1][t] };
                let mut next_carry = vec![0.0; h];
                for k in 0..h {
                    let dh = d_out[t][k] + carry[k];
                    let dn = dh * (1.0 - c.z[k]);
                    let dz = dh * (c.h_prev[k] - c.n[k]);
                    next_carry[k] = dh * c.z[k];
                    let dan = dn * (1.0 - c.n[k] * c.n[k]);
                    let dr = dan * c.hn[k];
                    let dar = dr * c.r[k] * (1.0 - c.r[k]);
                    let daz = dz * c.z[k] * (1.0 - c.z[k]);
                    dgi[k] = dar;
                    dgi[h + k] = daz;
                    dgi[2 * h + k] = dan;
                    dgh[k] = dar;
                    dgh[h + k] = daz;
                    dgh[2 * h + k] = dan * c.r[k];
                }
                outer_add(&mut grad[o.w_ih..o.w_ih + 3 * h * in_dim], &dgi, x);
                outer_add(&mut grad[o.w_hh..o.w_hh + 3 * h * h], &dgh, &c.h_prev);
                for k in 0..3 * h {
                    grad[o.b_ih + k] += dgi[k];
                    grad[o.b_hh + k] += dgh[k];
                }
                if l > 0 {
                    matvec_t_add(&mut d_in[t], w_ih, &dgi);
                }
                matvec_t_add(&mut next_carry, w_hh, &dgh);
                carry = next_carry;
            }
            if l > 0 {
                d_out = d_in;
            }
        }
        Ok(tr.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn tiny(layers: usize, hidden: usize, input_dim: usize, seed: u64) -> ModelParams {
        let shape = ModelShape { input_dim, hidden, layers, head_hidden: hidden };
        let mut p = ModelParams::init(shape, &mut ChaCha8Rng::seed_from_u64(seed));
        // Larger weights than the default init so every gate is exercised.
        for v in p.as_mut_slice() {
            *v *= 2.0;
        }
        p
    }

    fn sequence(len: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn zero_params_give_half() {
        let p = ModelParams::zeros(ModelShape::new(42));
        assert_eq!(p.forward(&sequence(5, 42, 1)).unwrap(), 0.5);
    }

    #[test]
    fn default_shape_counts() {
        let s = ModelShape::new(42);
        let gru0 = 768 * 42 + 768 * 256 + 2 * 768;
        let gru = 768 * 256 * 2 + 2 * 768;
        assert_eq!(s.param_count(), gru0 + 3 * gru + 256 * 256 + 256 + 256 + 1);
        assert_eq!(s.tensors().len(), 4 * 4 + 4);
    }

    #[test]
    fn shape_errors() {
        let p = tiny(1, 2, 3, 0);
        assert!(matches!(p.forward(&Vec::<Vec<f64>>::new()), Err(MetricError::EmptySequence)));
        assert!(matches!(p.forward(&[vec![0.0; 4]]), Err(MetricError::ShapeMismatch { expected: 3, got: 4 })));
    }

    #[test]
    fn output_in_open_interval() {
        for seed in 0..20 {
            let p = tiny(2, 4, 3, seed);
            let y = p.forward(&sequence(6, 3, seed + 100)).unwrap();
            assert!(y > 0.0 && y < 1.0);
        }
    }

    /// Independent scalar recurrence: one layer, hidden size 2, written out per unit.
    #[test]
    fn matches_hand_rolled_recurrence() {
        let p = tiny(1, 2, 3, 7);
        let seq = sequence(3, 3, 8);
        let w_ih = p.tensor("gru.0.w_ih").unwrap();
        let w_hh = p.tensor("gru.0.w_hh").unwrap();
        let b_ih = p.tensor("gru.0.b_ih").unwrap();
        let b_hh = p.tensor("gru.0.b_hh").unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let dot3 = |row: usize, x: &[f64]| w_ih[row * 3] * x[0] + w_ih[row * 3 + 1] * x[1] + w_ih[row * 3 + 2] * x[2];
        let dot2 = |row: usize, h: &[f64; 2]| w_hh[row * 2] * h[0] + w_hh[row * 2 + 1] * h[1];
        let mut hid = [0.0f64; 2];
        for x in &seq {
            let mut next = [0.0; 2];
            for u in 0..2 {
                let r = sig(dot3(u, x) + b_ih[u] + dot2(u, &hid) + b_hh[u]);
                let z = sig(dot3(2 + u, x) + b_ih[2 + u] + dot2(2 + u, &hid) + b_hh[2 + u]);
                let n = (dot3(4 + u, x) + b_ih[4 + u] + r * (dot2(4 + u, &hid) + b_hh[4 + u])).tanh();
                next[u] = (1.0 - z) * n + z * hid[u];
            }
            hid = next;
        }
        let w1 = p.tensor("head.0.weight").unwrap();
        let b1 = p.tensor("head.0.bias").unwrap();
        let w2 = p.tensor("head.1.weight").unwrap();
        let b2 = p.tensor("head.1.bias").unwrap();
        let mut a2 = b2[0];
        for k in 0..2 {
            let a = w1[k * 2] * hid[0] + w1[k * 2 + 1] * hid[1] + b1[k];
            a2 += w2[k] * if a > 0.0 { a } else { 0.01 * a };
        }
        let expected = sig(a2);
        assert!((p.forward(&seq).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let shape = ModelShape { input_dim: 5, hidden: 8, layers: 2, head_hidden: 8 };
        let mut p = ModelParams::init(shape, &mut ChaCha8Rng::seed_from_u64(3));
        for v in p.as_mut_slice() {
            *v *= 3.0;
        }
        let batch: Vec<(Vec<Vec<f64>>, f64)> = (0..3).map(|i| (sequence(4, 5, 50 + i), [0.1, 0.7, 0.95][i as usize])).collect();
        let loss = |p: &ModelParams| batch.iter().map(|(s, t)| (p.forward(s).unwrap() - t).powi(2)).sum::<f64>() / 3.0;
        let mut grad = vec![0.0; shape.param_count()];
        for (s, t) in &batch {
            p.backward_into(s, *t, 1.0 / 3.0, &mut grad).unwrap();
        }
        let eps = 1e-4;
        let mut worst = 0.0f64;
        for i in 0..grad.len() {
            let orig = p.as_slice()[i];
            p.as_mut_slice()[i] = orig + eps;
            let up = loss(&p);
            p.as_mut_slice()[i] = orig - eps;
            let down = loss(&p);
            p.as_mut_slice()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
            assert!(rel < 1e-3, "param {i}: analytic {} numeric {numeric}", grad[i]);
        }
        assert!(worst < 1e-3);
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let p = tiny(2, 4, 3, 11);
        let seq = sequence(5, 3, 12);
        let y = p.forward(&seq).unwrap();
        let mut grad = vec![0.0; p.as_slice().len()];
        p.backward_into(&seq, y, 1.0, &mut grad).unwrap();
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn visit_covers_all_params() {
        let p = tiny(2, 3, 4, 0);
        let mut n = 0;
        p.visit(|spec, values| {
            assert_eq!(values.len(), spec.rows * spec.cols);
            n += values.len();
        });
        assert_eq!(n, p.as_slice().len());
    }
}
