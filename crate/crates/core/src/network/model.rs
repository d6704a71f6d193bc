//! Multi-branch recurrent classifier: per branch a stack of (bi)directional
//! LSTM layers and one fully connected layer, then a fully connected head and
//! softmax.
//!
//! Parameter order (flat vector, also the checkpoint payload order): for each
//! branch, for each LSTM layer, the forward direction then the backward
//! direction (`W`, `U`, `b` each); then the branch FC layer (`W`, `b`); then
//! the head layers in order (`W`, `b`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lstm::{axpy, backward_into, dot, lstm_forward, valid_length, Direction, LstmShape, LstmTrace};
use super::NetworkError;
use crate::features::{FeatureKind, SequenceFeatures};
use crate::seed::derive_seed;
use crate::tensor::Tensor2;

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct BranchConfig {
    pub kind: FeatureKind,
    pub input_dim: usize,
    /// Hidden units per direction.
    pub lstm_hidden: usize,
    pub lstm_layers: usize,
    pub fc_out: usize,
    pub dropout_rate: f64,
}

impl BranchConfig {
    pub fn new(kind: FeatureKind, input_dim: usize) -> Self {
        Self {
            kind,
            input_dim,
            lstm_hidden: 100,
            lstm_layers: 2,
            fc_out: 128,
            dropout_rate: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub branches: Vec<BranchConfig>,
    /// Widths of the ReLU layers between the concatenated branches and the
    /// final class layer.
    pub head_hidden: Vec<usize>,
    pub classes: usize,
    pub bidirectional: bool,
    pub head_dropout: f64,
}

impl NetworkConfig {
    /// One branch per kind with default sizes, head 256 → 128 → classes.
    pub fn new(branches: &[(FeatureKind, usize)], classes: usize) -> Self {
        Self {
            branches: branches.iter().map(|&(k, d)| BranchConfig::new(k, d)).collect(),
            head_hidden: vec![256, 128],
            classes,
            bidirectional: true,
            head_dropout: 0.3,
        }
    }

    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let bad = |m: String| Err(NetworkError::InvalidConfig(m));
        if self.branches.is_empty() {
            return bad("at least one branch is required".into());
        }
        if self.classes < 2 {
            return bad("at least two classes are required".into());
        }
        for b in &self.branches {
            if b.input_dim == 0 || b.lstm_hidden == 0 || b.lstm_layers == 0 || b.fc_out == 0 {
                return bad(format!("{} branch: all sizes must be at least 1", b.kind));
            }
            if !(0.0..1.0).contains(&b.dropout_rate) {
                return bad(format!("{} branch: dropout must lie in [0, 1)", b.kind));
            }
        }
        if self.head_hidden.contains(&0) {
            return bad("head layer widths must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.head_dropout) {
            return bad("head dropout must lie in [0, 1)".into());
        }
        Ok(())
    }

    pub fn concat_width(&self) -> usize {
        self.branches.iter().map(|b| b.fc_out).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct DenseSlot {
    pub offset: usize,
    pub input: usize,
    pub output: usize,
}

impl DenseSlot {
    fn len(&self) -> usize {
        self.output * (self.input + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LstmSlot {
    pub offset: usize,
    pub shape: LstmShape,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct BranchSlots {
    /// `[layer][direction]`.
    pub layers: Vec<Vec<LstmSlot>>,
    pub fc: DenseSlot,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct ParamLayout {
    pub branches: Vec<BranchSlots>,
    pub head: Vec<DenseSlot>,
    pub total: usize,
}

impl ParamLayout {
    fn new(config: &NetworkConfig) -> Self {
        let dirs = config.directions();
        let mut offset = 0;
        let mut branches = Vec::new();
        for b in &config.branches {
            let mut layers = Vec::new();
            let mut input = b.input_dim;
            for _ in 0..b.lstm_layers {
                let shape = LstmShape {
                    input,
                    hidden: b.lstm_hidden,
                };
                let slots = (0..dirs)
                    .map(|_| {
                        let s = LstmSlot { offset, shape };
                        offset += shape.len();
                        s
                    })
                    .collect();
                layers.push(slots);
                input = dirs * b.lstm_hidden;
            }
            let fc = DenseSlot {
                offset,
                input,
                output: b.fc_out,
            };
            offset += fc.len();
            branches.push(BranchSlots { layers, fc });
        }
        let mut head = Vec::new();
        let mut input = config.concat_width();
        for &output in config.head_hidden.iter().chain(std::iter::once(&config.classes)) {
            let slot = DenseSlot {
                offset,
                input,
                output,
            };
            offset += slot.len();
            head.push(slot);
            input = output;
        }
        Self {
            branches,
            head,
            total: offset,
        }
    }
}

/// Per-dimension z-score statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Statistics over every frame of every sequence. Dimensions with zero
    /// spread get a unit scale.
    pub fn fit<'a>(streams: impl IntoIterator<Item = &'a Tensor2>) -> Option<Self> {
        let mut count = 0usize;
        let mut sum: Vec<f64> = Vec::new();
        let mut sq: Vec<f64> = Vec::new();
        for s in streams {
            if sum.is_empty() {
                sum = vec![0.0; s.cols()];
                sq = vec![0.0; s.cols()];
            }
            for r in 0..s.rows() {
                for (k, v) in s.row(r).iter().enumerate() {
                    sum[k] += v;
                    sq[k] += v * v;
                }
                count += 1;
            }
        }
        if count == 0 {
            return None;
        }
        let n = count as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let std = sq
            .iter()
            .zip(&mean)
            .map(|(q, m)| {
                let var = (q / n - m * m).max(0.0);
                let s = var.sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Some(Self { mean, std })
    }

    pub fn apply(&self, x: &Tensor2) -> Tensor2 {
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (k, v) in out.row_mut(r).iter_mut().enumerate() {
                *v = (*v - self.mean[k]) / self.std[k];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Inference,
    /// Dropout active; sample `i` of a batch draws its masks from a stream
    /// derived from `(seed, i)`.
    Train { seed: u64 },
}

/// Padded minibatch: every stream of every sample has `max_len` rows and
/// `masks[i]` marks the valid prefix of sample `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `[sample][branch]`.
    pub streams: Vec<Vec<Tensor2>>,
    pub masks: Vec<Vec<bool>>,
}

impl Batch {
    pub fn pad(samples: &[Vec<Tensor2>]) -> Result<Self, NetworkError> {
        let max_len = samples
            .iter()
            .flat_map(|s| s.iter().map(Tensor2::rows))
            .max()
            .unwrap_or(0);
        let mut streams = Vec::with_capacity(samples.len());
        let mut masks = Vec::with_capacity(samples.len());
        for s in samples {
            let len = s.first().map_or(0, Tensor2::rows);
            if s.iter().any(|t| t.rows() != len) {
                return Err(NetworkError::ShapeMismatch(
                    "streams of one sample must share a frame count".into(),
                ));
            }
            streams.push(s.iter().map(|t| t.padded(max_len)).collect());
            masks.push((0..max_len).map(|t| t < len).collect());
        }
        Ok(Self { streams, masks })
    }

    pub fn len(&self) -> usize {
        self.streams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.streams.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    config: NetworkConfig,
    layout: ParamLayout,
    params: Vec<f64>,
    /// Per branch; `None` leaves the stream as is.
    normalization: Vec<Option<Standardizer>>,
}

fn dropout_mask(rng: &mut ChaCha8Rng, len: usize, rate: f64) -> Option<Vec<f64>> {
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(
        (0..len)
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect(),
    )
}

fn dense_forward(params: &[f64], slot: DenseSlot, x: &[f64]) -> Vec<f64> {
    let w = &params[slot.offset..slot.offset + slot.input * slot.output];
    let b = &params[slot.offset + slot.input * slot.output..slot.offset + slot.len()];
    (0..slot.output)
        .map(|r| b[r] + dot(&w[r * slot.input..(r + 1) * slot.input], x))
        .collect()
}

/// Adds parameter gradients into `grad` and returns the input gradient.
fn dense_backward(params: &[f64], slot: DenseSlot, x: &[f64], d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
    let (n_in, n_out) = (slot.input, slot.output);
    let w = &params[slot.offset..slot.offset + n_in * n_out];
    let g = &mut grad[slot.offset..slot.offset + slot.len()];
    let (gw, gb) = g.split_at_mut(n_in * n_out);
    let mut dx = vec![0.0; n_in];
    for (r, &d) in d_out.iter().enumerate() {
        gb[r] += d;
        if d == 0.0 {
            continue;
        }
        axpy(d, x, &mut gw[r * n_in..(r + 1) * n_in]);
        axpy(d, &w[r * n_in..(r + 1) * n_in], &mut dx);
    }
    dx
}

/// A fully connected layer's recorded activations.
#[derive(Debug, Clone)]
struct DenseTrace {
    input: Vec<f64>,
    pre: Vec<f64>,
    relu: bool,
    mask: Option<Vec<f64>>,
    output: Vec<f64>,
}

fn dense_layer(
    params: &[f64],
    slot: DenseSlot,
    input: Vec<f64>,
    relu: bool,
    mask: Option<Vec<f64>>,
) -> DenseTrace {
    let pre = dense_forward(params, slot, &input);
    let mut output: Vec<f64> = if relu {
        pre.iter().map(|&v| v.max(0.0)).collect()
    } else {
        pre.clone()
    };
    if let Some(m) = &mask {
        output.iter_mut().zip(m).for_each(|(o, k)| *o *= k);
    }
    DenseTrace {
        input,
        pre,
        relu,
        mask,
        output,
    }
}

fn dense_layer_backward(params: &[f64], slot: DenseSlot, tr: &DenseTrace, d_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
    let d_pre: Vec<f64> = d_out
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let d = tr.mask.as_ref().map_or(d, |m| d * m[k]);
            if tr.relu && tr.pre[k] <= 0.0 {
                0.0
            } else {
                d
            }
        })
        .collect();
    dense_backward(params, slot, &tr.input, &d_pre, grad)
}

#[derive(Debug, Clone)]
struct BranchTrace {
    /// Input of each LSTM layer (after dropout for layers above the first).
    layer_inputs: Vec<Tensor2>,
    /// `[layer][direction]`.
    lstm: Vec<Vec<LstmTrace>>,
    /// Dropout multipliers on the outputs of every layer but the last (`T × width`).
    layer_masks: Vec<Option<Tensor2>>,
    valid: usize,
    summary_mask: Option<Vec<f64>>,
    fc: DenseTrace,
}

#[derive(Debug, Clone)]
struct SampleTrace {
    branches: Vec<BranchTrace>,
    head: Vec<DenseTrace>,
    probs: Vec<f64>,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Mean cross-entropy `−ln max(p[label], 1e-12)` over the rows of `probs`.
pub fn loss(probs: &Tensor2, labels: &[usize]) -> Result<f64, NetworkError> {
    if probs.rows() != labels.len() || labels.is_empty() {
        return Err(NetworkError::ShapeMismatch(format!(
            "{} probability rows vs {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (i, &l) in labels.iter().enumerate() {
        if l >= probs.cols() {
            return Err(NetworkError::LabelOutOfRange {
                label: l,
                classes: probs.cols(),
            });
        }
        total -= probs.get(i, l).max(PROB_FLOOR).ln();
    }
    Ok(total / labels.len() as f64)
}

/// Loss, mean gradient and the forward probabilities of a batch.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub probabilities: Tensor2,
}

impl NetworkModel {
    /// Uniform initialization in `±1/√fan_in` (LSTM fan-in is input plus
    /// hidden width); LSTM forget-gate biases get `+1`.
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self, NetworkError> {
        let mut model = Self::zeros(config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x1417]));
        let layout = model.layout.clone();
        let params = &mut model.params;
        for branch in &layout.branches {
            for slot in branch.layers.iter().flatten() {
                let LstmShape { input, hidden } = slot.shape;
                let bound = 1.0 / ((input + hidden) as f64).sqrt();
                let block = &mut params[slot.offset..slot.offset + slot.shape.len()];
                for v in block.iter_mut() {
                    *v = rng.random_range(-bound..=bound);
                }
                let b = slot.shape.b_range();
                for v in &mut block[b.start + hidden..b.start + 2 * hidden] {
                    *v += 1.0;
                }
            }
        }
        for slot in layout.branches.iter().map(|b| &b.fc).chain(&layout.head) {
            let bound = 1.0 / (slot.input as f64).sqrt();
            for v in &mut params[slot.offset..slot.offset + slot.len()] {
                *v = rng.random_range(-bound..=bound);
            }
        }
        Ok(model)
    }

    pub fn zeros(config: NetworkConfig) -> Result<Self, NetworkError> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let normalization = vec![None; config.branches.len()];
        Ok(Self {
            params: vec![0.0; layout.total],
            normalization,
            layout,
            config,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn normalization(&self) -> &[Option<Standardizer>] {
        &self.normalization
    }

    pub fn set_normalization(&mut self, norm: Vec<Option<Standardizer>>) -> Result<(), NetworkError> {
        if norm.len() != self.config.branches.len() {
            return Err(NetworkError::ShapeMismatch("one normalization slot per branch".into()));
        }
        for (n, b) in norm.iter().zip(&self.config.branches) {
            if let Some(s) = n {
                if s.mean.len() != b.input_dim || s.std.len() != b.input_dim {
                    return Err(NetworkError::ShapeMismatch(format!(
                        "{} statistics have {} dims, branch expects {}",
                        b.kind,
                        s.mean.len(),
                        b.input_dim
                    )));
                }
            }
        }
        self.normalization = norm;
        Ok(())
    }

    /// FNV-1a over the parameter bit patterns.
    pub fn checksum(&self) -> u64 {
        self.params.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            v.to_bits()
                .to_le_bytes()
                .iter()
                .fold(h, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
        })
    }

    /// Picks the streams this model consumes, in branch order, and applies
    /// the stored standardization.
    pub fn prepare(&self, features: &SequenceFeatures) -> Result<Vec<Tensor2>, NetworkError> {
        self.config
            .branches
            .iter()
            .zip(&self.normalization)
            .map(|(b, norm)| {
                let s = features.stream(b.kind);
                if s.cols() != b.input_dim {
                    return Err(NetworkError::ShapeMismatch(format!(
                        "{} stream has {} dims, model expects {}",
                        b.kind,
                        s.cols(),
                        b.input_dim
                    )));
                }
                Ok(norm.as_ref().map_or_else(|| s.clone(), |n| n.apply(s)))
            })
            .collect()
    }

    fn check_sample(&self, streams: &[Tensor2], mask: &[bool]) -> Result<usize, NetworkError> {
        if streams.len() != self.config.branches.len() {
            return Err(NetworkError::ShapeMismatch(format!(
                "{} streams for {} branches",
                streams.len(),
                self.config.branches.len()
            )));
        }
        for (s, b) in streams.iter().zip(&self.config.branches) {
            if s.cols() != b.input_dim || s.rows() != mask.len() {
                return Err(NetworkError::ShapeMismatch(format!(
                    "{} stream is {}x{}, expected {}x{}",
                    b.kind,
                    s.rows(),
                    s.cols(),
                    mask.len(),
                    b.input_dim
                )));
            }
        }
        let valid = valid_length(mask)?;
        if valid == 0 {
            return Err(NetworkError::InvalidMask);
        }
        Ok(valid)
    }

    fn forward_branch(
        &self,
        index: usize,
        input: &Tensor2,
        mask: &[bool],
        valid: usize,
        rng: &mut Option<ChaCha8Rng>,
    ) -> Result<BranchTrace, NetworkError> {
        let cfg = &self.config.branches[index];
        let slots = &self.layout.branches[index];
        let dirs = self.config.directions();
        let h = cfg.lstm_hidden;
        let mut layer_inputs = vec![input.clone()];
        let mut lstm = Vec::new();
        let mut layer_masks = Vec::new();
        let last = slots.layers.len() - 1;
        for (l, layer) in slots.layers.iter().enumerate() {
            let x = layer_inputs.last().expect("layer input");
            let traces = layer
                .iter()
                .zip([Direction::Forward, Direction::Backward])
                .map(|(slot, dir)| {
                    lstm_forward(&self.params[slot.offset..slot.offset + slot.shape.len()], slot.shape, x, mask, dir)
                })
                .collect::<Result<Vec<_>, _>>()?;
            if l < last {
                let steps = mask.len();
                let mut out = Tensor2::zeros(steps, dirs * h);
                for t in 0..steps {
                    let row = out.row_mut(t);
                    for (k, tr) in traces.iter().enumerate() {
                        row[k * h..(k + 1) * h].copy_from_slice(tr.hidden.row(t));
                    }
                }
                let drop = rng.as_mut().and_then(|r| dropout_mask(r, valid * dirs * h, cfg.dropout_rate)).map(|m| {
                    let mut full = vec![1.0; steps * dirs * h];
                    full[..m.len()].copy_from_slice(&m);
                    Tensor2::from_vec(steps, dirs * h, full)
                });
                if let Some(m) = &drop {
                    out.as_mut_slice().iter_mut().zip(m.as_slice()).for_each(|(o, k)| *o *= k);
                }
                layer_masks.push(drop);
                layer_inputs.push(out);
            }
            lstm.push(traces);
        }
        let top = lstm.last().expect("at least one layer");
        let mut summary = top[0].hidden.row(valid - 1).to_vec();
        if dirs == 2 {
            summary.extend_from_slice(top[1].hidden.row(0));
        }
        let summary_mask = rng.as_mut().and_then(|r| dropout_mask(r, summary.len(), cfg.dropout_rate));
        if let Some(m) = &summary_mask {
            summary.iter_mut().zip(m).for_each(|(s, k)| *s *= k);
        }
        let fc_mask = rng.as_mut().and_then(|r| dropout_mask(r, cfg.fc_out, cfg.dropout_rate));
        let fc = dense_layer(&self.params, slots.fc, summary, true, fc_mask);
        Ok(BranchTrace {
            layer_inputs,
            lstm,
            layer_masks,
            valid,
            summary_mask,
            fc,
        })
    }

    fn forward_sample(&self, streams: &[Tensor2], mask: &[bool], rng_seed: Option<u64>) -> Result<SampleTrace, NetworkError> {
        let valid = self.check_sample(streams, mask)?;
        let mut rng = rng_seed.map(ChaCha8Rng::seed_from_u64);
        let branches = streams
            .iter()
            .enumerate()
            .map(|(i, s)| self.forward_branch(i, s, mask, valid, &mut rng))
            .collect::<Result<Vec<_>, _>>()?;
        let mut x: Vec<f64> = branches.iter().flat_map(|b| b.fc.output.iter().copied()).collect();
        let mut head = Vec::new();
        let n = self.layout.head.len();
        for (i, slot) in self.layout.head.iter().enumerate() {
            let hidden = i + 1 < n;
            let mask = if hidden {
                rng.as_mut().and_then(|r| dropout_mask(r, slot.output, self.config.head_dropout))
            } else {
                None
            };
            let tr = dense_layer(&self.params, *slot, x, hidden, mask);
            x = tr.output.clone();
            head.push(tr);
        }
        let probs = softmax(&x);
        Ok(SampleTrace { branches, head, probs })
    }

    fn backward_sample(&self, trace: &SampleTrace, label: usize, grad: &mut [f64]) {
        let mut d: Vec<f64> = trace.probs.clone();
        if trace.probs[label] < PROB_FLOOR {
            d.iter_mut().for_each(|v| *v = 0.0);
        } else {
            d[label] -= 1.0;
        }
        for (slot, tr) in self.layout.head.iter().zip(&trace.head).rev() {
            d = dense_layer_backward(&self.params, *slot, tr, &d, grad);
        }
        let dirs = self.config.directions();
        let mut offset = 0;
        for (b, (slots, tr)) in self.layout.branches.iter().zip(&trace.branches).enumerate() {
            let h = self.config.branches[b].lstm_hidden;
            let width = slots.fc.output;
            let d_fc = &d[offset..offset + width];
            offset += width;
            let mut d_summary = dense_layer_backward(&self.params, slots.fc, &tr.fc, d_fc, grad);
            if let Some(m) = &tr.summary_mask {
                d_summary.iter_mut().zip(m).for_each(|(v, k)| *v *= k);
            }
            let steps = tr.layer_inputs[0].rows();
            // Gradients w.r.t. each direction's hidden outputs of the current layer.
            let mut d_hidden: Vec<Tensor2> = (0..dirs).map(|_| Tensor2::zeros(steps, h)).collect();
            d_hidden[0].row_mut(tr.valid - 1).copy_from_slice(&d_summary[..h]);
            if dirs == 2 {
                d_hidden[1].row_mut(0).copy_from_slice(&d_summary[h..2 * h]);
            }
            for l in (0..slots.layers.len()).rev() {
                let x = &tr.layer_inputs[l];
                let mut d_x = (l > 0).then(|| Tensor2::zeros(steps, x.cols()));
                for (k, slot) in slots.layers[l].iter().enumerate() {
                    let range = slot.offset..slot.offset + slot.shape.len();
                    backward_into(
                        &self.params[range.clone()],
                        slot.shape,
                        x,
                        &tr.lstm[l][k],
                        &d_hidden[k],
                        &mut grad[range],
                        d_x.as_mut(),
                    );
                }
                let Some(mut d_x) = d_x else {
                    break;
                };
                if let Some(m) = &tr.layer_masks[l - 1] {
                    d_x.as_mut_slice().iter_mut().zip(m.as_slice()).for_each(|(a, k)| *a *= k);
                }
                for (k, dh) in d_hidden.iter_mut().enumerate() {
                    for t in 0..steps {
                        dh.row_mut(t).copy_from_slice(&d_x.row(t)[k * h..(k + 1) * h]);
                    }
                }
            }
        }
    }

    fn sample_seed(mode: Mode, index: usize) -> Option<u64> {
        match mode {
            Mode::Inference => None,
            Mode::Train { seed } => Some(derive_seed(seed, &[index as u64])),
        }
    }

    /// Class probabilities, one row per sample.
    pub fn forward(&self, batch: &Batch, mode: Mode) -> Result<Tensor2, NetworkError> {
        let c = self.config.classes;
        let mut out = Tensor2::zeros(batch.len(), c);
        for i in 0..batch.len() {
            let tr = self.forward_sample(&batch.streams[i], &batch.masks[i], Self::sample_seed(mode, i))?;
            out.row_mut(i).copy_from_slice(&tr.probs);
        }
        Ok(out)
    }

    /// Mean cross-entropy over the batch and its exact gradient for every
    /// parameter, under the dropout masks that `mode` implies.
    pub fn backward(&self, batch: &Batch, labels: &[usize], mode: Mode) -> Result<Gradients, NetworkError> {
        if labels.len() != batch.len() || batch.is_empty() {
            return Err(NetworkError::ShapeMismatch(format!(
                "{} labels for {} samples",
                labels.len(),
                batch.len()
            )));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= self.config.classes) {
            return Err(NetworkError::LabelOutOfRange {
                label,
                classes: self.config.classes,
            });
        }
        let mut grad = vec![0.0; self.params.len()];
        let mut probabilities = Tensor2::zeros(batch.len(), self.config.classes);
        for i in 0..batch.len() {
            let tr = self.forward_sample(&batch.streams[i], &batch.masks[i], Self::sample_seed(mode, i))?;
            self.backward_sample(&tr, labels[i], &mut grad);
            probabilities.row_mut(i).copy_from_slice(&tr.probs);
        }
        let scale = 1.0 / batch.len() as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok(Gradients {
            loss: loss(&probabilities, labels)?,
            grad,
            probabilities,
        })
    }

    /// Single-sample loss gradient added into `grad` (unscaled); returns the
    /// sample's probabilities.
    pub(crate) fn accumulate_sample(
        &self,
        streams: &[Tensor2],
        label: usize,
        dropout_seed: Option<u64>,
        grad: &mut [f64],
    ) -> Result<Vec<f64>, NetworkError> {
        let mask = vec![true; streams.first().map_or(0, Tensor2::rows)];
        let tr = self.forward_sample(streams, &mask, dropout_seed)?;
        self.backward_sample(&tr, label, grad);
        Ok(tr.probs)
    }

    /// Inference-mode probabilities for one unpadded sample.
    pub fn probabilities(&self, streams: &[Tensor2]) -> Result<Vec<f64>, NetworkError> {
        let mask = vec![true; streams.first().map_or(0, Tensor2::rows)];
        Ok(self.forward_sample(streams, &mask, None)?.probs)
    }

    /// Arg-max class (lowest index on ties) and the probability vector.
    pub fn predict(&self, streams: &[Tensor2]) -> Result<(usize, Vec<f64>), NetworkError> {
        let probs = self.probabilities(streams)?;
        Ok((argmax(&probs), probs))
    }

    #[cfg(test)]
    pub(crate) fn layout(&self) -> &ParamLayout {
        &self.layout
    }
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}
