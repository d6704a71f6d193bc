//! Single-direction LSTM layer over a masked sequence, with exact BPTT.
//!
//! Parameters of one direction are stored contiguously as `W (4h × d)`,
//! `U (4h × h)`, `b (4h)`, row-major, gate blocks ordered input, forget,
//! cell, output.

use super::NetworkError;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LstmShape {
    pub input: usize,
    pub hidden: usize,
}

impl LstmShape {
    pub fn len(&self) -> usize {
        4 * self.hidden * (self.input + self.hidden + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub(crate) fn w_range(&self) -> std::ops::Range<usize> {
        0..4 * self.hidden * self.input
    }

    pub(crate) fn u_range(&self) -> std::ops::Range<usize> {
        let s = 4 * self.hidden * self.input;
        s..s + 4 * self.hidden * self.hidden
    }

    pub(crate) fn b_range(&self) -> std::ops::Range<usize> {
        let s = 4 * self.hidden * (self.input + self.hidden);
        s..s + 4 * self.hidden
    }
}

/// Number of valid steps if `mask` is a prefix of `true`s.
pub fn valid_length(mask: &[bool]) -> Result<usize, NetworkError> {
    let len = mask.iter().take_while(|&&m| m).count();
    if mask[len..].iter().any(|&m| m) {
        return Err(NetworkError::InvalidMask);
    }
    Ok(len)
}

/// Dot product with four independent accumulators.
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`.
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations recorded by [`lstm_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub direction: Direction,
    pub valid: usize,
    /// Hidden state after each step, indexed by time (`T × h`).
    pub hidden: Tensor2,
    gates: Tensor2,
    cell: Tensor2,
    tanh_cell: Tensor2,
    prev_hidden: Tensor2,
    prev_cell: Tensor2,
}

fn order(direction: Direction, steps: usize, valid: usize) -> Vec<(usize, bool)> {
    match direction {
        Direction::Forward => (0..steps).map(|t| (t, t < valid)).collect(),
        Direction::Backward => (0..steps).rev().map(|t| (t, t < valid)).collect(),
    }
}

/// Runs one direction over `inputs` (`T × d`). Masked steps carry the
/// previous state forward unchanged; the backward direction starts at the
/// last valid step.
pub fn lstm_forward(
    params: &[f64],
    shape: LstmShape,
    inputs: &Tensor2,
    mask: &[bool],
    direction: Direction,
) -> Result<LstmTrace, NetworkError> {
    let (steps, d) = inputs.shape();
    let h = shape.hidden;
    if params.len() != shape.len() || d != shape.input || mask.len() != steps {
        return Err(NetworkError::ShapeMismatch(format!(
            "lstm expects input width {} and {} params, got {d} and {}; mask {} for {steps} steps",
            shape.input,
            shape.len(),
            params.len(),
            mask.len()
        )));
    }
    let valid = valid_length(mask)?;
    let w = &params[shape.w_range()];
    let u = &params[shape.u_range()];
    let b = &params[shape.b_range()];

    let mut trace = LstmTrace {
        direction,
        valid,
        hidden: Tensor2::zeros(steps, h),
        gates: Tensor2::zeros(steps, 4 * h),
        cell: Tensor2::zeros(steps, h),
        tanh_cell: Tensor2::zeros(steps, h),
        prev_hidden: Tensor2::zeros(steps, h),
        prev_cell: Tensor2::zeros(steps, h),
    };
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    let mut z = vec![0.0; 4 * h];
    for (t, active) in order(direction, steps, valid) {
        trace.prev_hidden.row_mut(t).copy_from_slice(&h_prev);
        trace.prev_cell.row_mut(t).copy_from_slice(&c_prev);
        if !active {
            trace.hidden.row_mut(t).copy_from_slice(&h_prev);
            trace.cell.row_mut(t).copy_from_slice(&c_prev);
            continue;
        }
        let x = inputs.row(t);
        for (r, zr) in z.iter_mut().enumerate() {
            let wr = &w[r * d..(r + 1) * d];
            let ur = &u[r * h..(r + 1) * h];
            *zr = b[r] + dot(wr, x) + dot(ur, &h_prev);
        }
        let gates = trace.gates.row_mut(t);
        for k in 0..h {
            gates[k] = sigmoid(z[k]);
            gates[h + k] = sigmoid(z[h + k]);
            gates[2 * h + k] = z[2 * h + k].tanh();
            gates[3 * h + k] = sigmoid(z[3 * h + k]);
        }
        let tanh_cell = trace.tanh_cell.row_mut(t);
        for k in 0..h {
            let c = gates[h + k] * c_prev[k] + gates[k] * gates[2 * h + k];
            let tc = c.tanh();
            c_prev[k] = c;
            tanh_cell[k] = tc;
            h_prev[k] = gates[3 * h + k] * tc;
        }
        trace.cell.row_mut(t).copy_from_slice(&c_prev);
        trace.hidden.row_mut(t).copy_from_slice(&h_prev);
    }
    Ok(trace)
}

/// Backpropagates `d_hidden` (`T × h`, gradient w.r.t. every output row)
/// through the recurrence. Parameter gradients are added into `grad`, laid
/// out like the parameters. Returns the gradient w.r.t. the inputs.
pub fn lstm_backward(
    params: &[f64],
    shape: LstmShape,
    inputs: &Tensor2,
    trace: &LstmTrace,
    d_hidden: &Tensor2,
    grad: &mut [f64],
) -> Tensor2 {
    let mut d_inputs = Tensor2::zeros(inputs.rows(), inputs.cols());
    backward_into(params, shape, inputs, trace, d_hidden, grad, Some(&mut d_inputs));
    d_inputs
}

/// As [`lstm_backward`], accumulating the input gradient into `d_inputs`
/// when given.
pub(crate) fn backward_into(
    params: &[f64],
    shape: LstmShape,
    inputs: &Tensor2,
    trace: &LstmTrace,
    d_hidden: &Tensor2,
    grad: &mut [f64],
    mut d_inputs: Option<&mut Tensor2>,
) {
    let (steps, d) = inputs.shape();
    let h = shape.hidden;
    let w = &params[shape.w_range()];
    let u = &params[shape.u_range()];
    let (gw, rest) = grad.split_at_mut(shape.u_range().start);
    let (gu, gb) = rest.split_at_mut(4 * h * h);

    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];
    let mut seq = order(trace.direction, steps, trace.valid);
    seq.reverse();
    for (t, active) in seq {
        let dh_out = d_hidden.row(t);
        if !active {
            for k in 0..h {
                dh_next[k] += dh_out[k];
            }
            continue;
        }
        let gates = trace.gates.row(t);
        let tc = trace.tanh_cell.row(t);
        let c_prev = trace.prev_cell.row(t);
        for k in 0..h {
            let (i, f, g, o) = (gates[k], gates[h + k], gates[2 * h + k], gates[3 * h + k]);
            let dh = dh_out[k] + dh_next[k];
            let dc = dh * o * (1.0 - tc[k] * tc[k]) + dc_next[k];
            dz[k] = dc * g * i * (1.0 - i);
            dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
            dz[2 * h + k] = dc * i * (1.0 - g * g);
            dz[3 * h + k] = dh * tc[k] * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        let x = inputs.row(t);
        let h_prev = trace.prev_hidden.row(t);
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        let mut dx = d_inputs.as_deref_mut().map(|m| m.row_mut(t));
        for (r, &g) in dz.iter().enumerate() {
            gb[r] += g;
            if g == 0.0 {
                continue;
            }
            let wr = &w[r * d..(r + 1) * d];
            let ur = &u[r * h..(r + 1) * h];
            axpy(g, x, &mut gw[r * d..(r + 1) * d]);
            if let Some(dx) = dx.as_deref_mut() {
                axpy(g, wr, dx);
            }
            axpy(g, h_prev, &mut gu[r * h..(r + 1) * h]);
            axpy(g, ur, &mut dh_next);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_params(wi: f64, ui: f64, bi: f64, wf: f64, uf: f64, bf: f64, wg: f64, ug: f64, bg: f64, wo: f64, uo: f64, bo: f64) -> Vec<f64> {
        // W (4×1), U (4×1), b (4)
        vec![wi, wf, wg, wo, ui, uf, ug, uo, bi, bf, bg, bo]
    }

    #[test]
    fn zero_params_zero_states() {
        let shape = LstmShape { input: 3, hidden: 4 };
        let params = vec![0.0; shape.len()];
        let x = Tensor2::from_vec(5, 3, (0..15).map(|v| v as f64).collect());
        for dir in [Direction::Forward, Direction::Backward] {
            let tr = lstm_forward(&params, shape, &x, &[true; 5], dir).unwrap();
            assert!(tr.hidden.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn scalar_two_step_hand_computed() {
        let shape = LstmShape { input: 1, hidden: 1 };
        let p = scalar_params(0.5, 0.3, 0.1, -0.4, 0.2, 1.0, 0.7, -0.6, 0.0, 0.2, 0.9, -0.1);
        let x = Tensor2::from_vec(2, 1, vec![1.0, -2.0]);
        let tr = lstm_forward(&p, shape, &x, &[true, true], Direction::Forward).unwrap();
        // Independent scalar recurrence.
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let (mut h, mut c) = (0.0f64, 0.0f64);
        let mut hs = Vec::new();
        for xt in [1.0, -2.0] {
            let i = s(0.5 * xt + 0.3 * h + 0.1);
            let f = s(-0.4 * xt + 0.2 * h + 1.0);
            let g = (0.7 * xt - 0.6 * h + 0.0f64).tanh();
            let o = s(0.2 * xt + 0.9 * h - 0.1);
            c = f * c + i * g;
            h = o * c.tanh();
            hs.push(h);
        }
        // Frozen from an independent script evaluation: h1 = 0.195053..., h2 = 0.026451...
        assert!((hs[0] - 0.195_053_174_768_536_6).abs() < 1e-12);
        assert!((hs[1] - 0.026_451_600_428_952_64).abs() < 1e-12);
        assert!((tr.hidden.get(0, 0) - 0.195_053_174_768_536_6).abs() < 1e-12);
        assert!((tr.hidden.get(0, 0) - hs[0]).abs() < 1e-15);
        assert!((tr.hidden.get(1, 0) - hs[1]).abs() < 1e-15);
    }

    #[test]
    fn masked_tail_repeats_last_state() {
        let shape = LstmShape { input: 2, hidden: 3 };
        let params: Vec<f64> = (0..shape.len()).map(|k| ((k * 37 % 11) as f64 - 5.0) * 0.1).collect();
        let x = Tensor2::from_vec(6, 2, (0..12).map(|v| (v as f64 * 0.3).sin()).collect());
        let mask = [true, true, true, true, false, false];
        let tr = lstm_forward(&params, shape, &x, &mask, Direction::Forward).unwrap();
        assert_eq!(tr.hidden.row(4), tr.hidden.row(3));
        assert_eq!(tr.hidden.row(5), tr.hidden.row(3));
        let short = Tensor2::from_vec(4, 2, x.as_slice()[..8].to_vec());
        let full = lstm_forward(&params, shape, &short, &[true; 4], Direction::Backward).unwrap();
        let padded = lstm_forward(&params, shape, &x, &mask, Direction::Backward).unwrap();
        assert_eq!(full.hidden.row(0), padded.hidden.row(0));
    }

    #[test]
    fn mask_with_hole_rejected() {
        assert!(matches!(valid_length(&[true, false, true]), Err(NetworkError::InvalidMask)));
        assert_eq!(valid_length(&[true, true, false]).unwrap(), 2);
        assert_eq!(valid_length(&[]).unwrap(), 0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let shape = LstmShape { input: 2, hidden: 3 };
        let params = vec![0.0; shape.len()];
        let x = Tensor2::zeros(4, 3);
        assert!(matches!(
            lstm_forward(&params, shape, &x, &[true; 4], Direction::Forward),
            Err(NetworkError::ShapeMismatch(_))
        ));
    }
}
