use rand::Rng;

use super::init::xavier_fill;
use super::tape::{Tape, Var};
use super::tensor::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Gate blocks, in the order they are stacked in the fused matrices.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Input = 0,
    Forget = 1,
    Output = 2,
    Cell = 3,
}

/// LSTM cell parameters. The four gate matrices are stacked row-wise into
/// `w` (`4H × I`), `u` (`4H × H`) and `b` (`4H`), gate order input, forget,
/// output, cell candidate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmParams {
    /// Registers `{prefix}.w`, `{prefix}.u`, `{prefix}.b`: Xavier-uniform
    /// matrices (per gate block) and zero biases.
    pub fn register<R: Rng>(
        store: &mut ParamStore,
        prefix: &str,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let h = hidden_dim;
        let mut w = Tensor::zeros(vec![4 * h, input_dim]);
        let mut u = Tensor::zeros(vec![4 * h, h]);
        for gate in 0..4 {
            xavier_fill(&mut w.data[gate * h * input_dim..(gate + 1) * h * input_dim], input_dim, h, rng);
            xavier_fill(&mut u.data[gate * h * h..(gate + 1) * h * h], h, h, rng);
        }
        let b = Tensor::zeros(vec![4 * h]);
        Ok(LstmParams {
            w: store.add(format!("{prefix}.w"), w)?,
            u: store.add(format!("{prefix}.u"), u)?,
            b: store.add(format!("{prefix}.b"), b)?,
            input_dim,
            hidden_dim,
        })
    }

    /// Row range of one gate inside the stacked matrices.
    pub fn gate_rows(&self, gate: Gate) -> std::ops::Range<usize> {
        let g = gate as usize;
        g * self.hidden_dim..(g + 1) * self.hidden_dim
    }

    /// Runs the cell over a sequence from zero state, returning every
    /// hidden state.
    pub fn run(&self, tape: &mut Tape<'_>, inputs: &[Var]) -> Result<Vec<Var>> {
        let mut h = tape.zeros(self.hidden_dim);
        let mut c = tape.zeros(self.hidden_dim);
        let mut out = Vec::with_capacity(inputs.len());
        for &x in inputs {
            (h, c) = lstm_step(tape, self, x, h, c)?;
            out.push(h);
        }
        Ok(out)
    }
}

/// One standard LSTM step without peepholes:
///
/// ```text
/// i = σ(W_i x + U_i h + b_i)   f = σ(W_f x + U_f h + b_f)
/// o = σ(W_o x + U_o h + b_o)   g = tanh(W_g x + U_g h + b_g)
/// c' = f ⊙ c + i ⊙ g           h' = o ⊙ tanh(c')
/// ```
pub fn lstm_step(tape: &mut Tape<'_>, p: &LstmParams, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
    let hd = p.hidden_dim;
    if tape.dim(x) != p.input_dim || tape.dim(h) != hd || tape.dim(c) != hd {
        return Err(Error::Dimension(format!(
            "lstm_step expects x:{} h:{hd} c:{hd}, got x:{} h:{} c:{}",
            p.input_dim,
            tape.dim(x),
            tape.dim(h),
            tape.dim(c)
        )));
    }
    let wx = tape.matvec(p.w, x);
    let uh = tape.matvec(p.u, h);
    let b = tape.param(p.b);
    let z = tape.sum(&[wx, uh, b]);
    let zi = tape.slice(z, 0, hd);
    let zf = tape.slice(z, hd, hd);
    let zo = tape.slice(z, 2 * hd, hd);
    let zg = tape.slice(z, 3 * hd, hd);
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let o = tape.sigmoid(zo);
    let g = tape.tanh(zg);
    let fc = tape.mul(f, c);
    let ig = tape.mul(i, g);
    let c_new = tape.add(fc, ig);
    let tc = tape.tanh(c_new);
    let h_new = tape.mul(o, tc);
    Ok((h_new, c_new))
}

/// Value-level convenience wrapper around [`lstm_step`].
pub fn lstm_step_values(
    store: &ParamStore,
    p: &LstmParams,
    x: &[f64],
    h: &[f64],
    c: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut tape = Tape::new(store);
    let (xv, hv, cv) = (tape.constant(x.to_vec()), tape.constant(h.to_vec()), tape.constant(c.to_vec()));
    let (h, c) = lstm_step(&mut tape, p, xv, hv, cv)?;
    Ok((tape.value(h).to_vec(), tape.value(c).to_vec()))
}
