use super::params::{BoundParams, LSTM_GATES, LSTM_PEEPHOLES};
use crate::engine::{Tape, Var};
use crate::error::{Error, Result};

/// Handles to the weights of one ConvLSTM layer, gates ordered `i, f, c, o`.
///
/// Input-to-state kernels `w_x*` are `[hidden, in, k, k]`, state-to-state kernels
/// `w_h*` are `[hidden, hidden, k, k]`, peephole maps `w_c*` (for `i, f, o`) are
/// `[hidden, H, W]` and biases are `[hidden]`.
#[derive(Clone, Copy, Debug)]
pub struct ConvLstmCell {
    pub w_x: [Var; 4],
    pub w_h: [Var; 4],
    pub w_c: [Var; 3],
    pub b: [Var; 4],
    pub hidden: usize,
    pub kernel: usize,
}

/// Gate activations and new state of one step.
#[derive(Clone, Copy, Debug)]
pub struct StepOutput {
    pub h: Var,
    pub c: Var,
    pub i: Var,
    pub f: Var,
    pub o: Var,
}

/// Scalar count of one ConvLSTM layer with peephole maps on an `h × w` grid.
pub fn convlstm_cell_size(in_ch: usize, hidden: usize, kernel: usize, h: usize, w: usize) -> usize {
    let k2 = kernel * kernel;
    4 * hidden * in_ch * k2 + 4 * hidden * hidden * k2 + 3 * hidden * h * w + 4 * hidden
}

impl ConvLstmCell {
    pub fn from_params(tape: &Tape, params: &BoundParams, prefix: &str) -> Result<Self> {
        let get = |n: String| params.get(&n);
        let w_x = LSTM_GATES.map(|g| get(format!("{prefix}.w_x{g}")));
        let w_h = LSTM_GATES.map(|g| get(format!("{prefix}.w_h{g}")));
        let w_c = LSTM_PEEPHOLES.map(|g| get(format!("{prefix}.w_c{g}")));
        let b = LSTM_GATES.map(|g| get(format!("{prefix}.b_{g}")));
        let unwrap4 = |a: [Result<Var>; 4]| -> Result<[Var; 4]> {
            let [a, b, c, d] = a;
            Ok([a?, b?, c?, d?])
        };
        let [c0, c1, c2] = w_c;
        let cell = Self {
            w_x: unwrap4(w_x)?,
            w_h: unwrap4(w_h)?,
            w_c: [c0?, c1?, c2?],
            b: unwrap4(b)?,
            hidden: 0,
            kernel: 0,
        };
        let ws = tape.shape(cell.w_h[0]);
        Ok(Self {
            hidden: ws[0],
            kernel: ws[2],
            ..cell
        })
    }

    /// Concatenates the four gate kernels so each transition is one convolution.
    pub(crate) fn fuse(&self, tape: &mut Tape) -> Result<FusedCell> {
        Ok(FusedCell {
            wx: tape.concat(&self.w_x, 0)?,
            wh: tape.concat(&self.w_h, 0)?,
            b: tape.concat(&self.b, 0)?,
            w_c: self.w_c,
            hidden: self.hidden,
            pad: self.kernel / 2,
        })
    }
}

pub(crate) struct FusedCell {
    wx: Var,
    wh: Var,
    b: Var,
    w_c: [Var; 3],
    hidden: usize,
    pad: usize,
}

impl FusedCell {
    /// Input-to-state pre-activations `W_x* * x + b_*` for all four gates.
    pub(crate) fn input_gates(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        tape.conv2d(x, self.wx, Some(self.b), self.pad)
    }

    /// Gate equations given the input pre-activations. A `None` state is the
    /// all-zero initial state, whose convolution and peephole terms vanish.
    pub(crate) fn advance(
        &self,
        tape: &mut Tape,
        gx: Var,
        h_prev: Option<Var>,
        c_prev: Option<Var>,
    ) -> Result<StepOutput> {
        let hc = self.hidden;
        let pre = match h_prev {
            Some(h) => {
                let gh = tape.conv2d(h, self.wh, None, self.pad)?;
                tape.add(gx, gh)?
            }
            None => gx,
        };
        let mut pi = tape.narrow(pre, 1, 0, hc)?;
        let mut pf = tape.narrow(pre, 1, hc, hc)?;
        let pc = tape.narrow(pre, 1, 2 * hc, hc)?;
        let mut po = tape.narrow(pre, 1, 3 * hc, hc)?;
        if let Some(c) = c_prev {
            let ci = tape.mul_broadcast(c, self.w_c[0])?;
            pi = tape.add(pi, ci)?;
            let cf = tape.mul_broadcast(c, self.w_c[1])?;
            pf = tape.add(pf, cf)?;
        }
        let i = tape.sigmoid(pi);
        let f = tape.sigmoid(pf);
        let g = tape.tanh(pc);
        let ig = tape.mul(i, g)?;
        let c = match c_prev {
            Some(cp) => {
                let fc = tape.mul(f, cp)?;
                tape.add(fc, ig)?
            }
            None => ig,
        };
        let co = tape.mul_broadcast(c, self.w_c[2])?;
        po = tape.add(po, co)?;
        let o = tape.sigmoid(po);
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc)?;
        Ok(StepOutput { h, c, i, f, o })
    }
}

/// One ConvLSTM step with peephole connections:
///
/// ```text
/// i = σ(W_xi * x + W_hi * h' + W_ci ∘ c' + b_i)
/// f = σ(W_xf * x + W_hf * h' + W_cf ∘ c' + b_f)
/// c = f ∘ c' + i ∘ tanh(W_xc * x + W_hc * h' + b_c)
/// o = σ(W_xo * x + W_ho * h' + W_co ∘ c + b_o)
/// h = o ∘ tanh(c)
/// ```
pub fn convlstm_step(
    tape: &mut Tape,
    cell: &ConvLstmCell,
    x_t: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<StepOutput> {
    let (xs, hs, cs) = (tape.shape(x_t), tape.shape(h_prev), tape.shape(c_prev));
    if xs.len() != 4 || hs.len() != 4 || cs != hs || xs[0] != hs[0] || xs[2..] != hs[2..] {
        return Err(Error::dim(format!(
            "ConvLSTM step: x {xs:?}, h {hs:?}, c {cs:?}"
        )));
    }
    if hs[1] != cell.hidden || tape.shape(cell.w_c[0])[1..] != hs[2..] {
        return Err(Error::dim(format!(
            "state {hs:?} does not match cell with {} hidden channels and peephole {:?}",
            cell.hidden,
            tape.shape(cell.w_c[0])
        )));
    }
    let fused = cell.fuse(tape)?;
    let gx = fused.input_gates(tape, x_t)?;
    fused.advance(tape, gx, Some(h_prev), Some(c_prev))
}
