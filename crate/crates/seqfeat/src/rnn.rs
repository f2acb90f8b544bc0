//! GRU and LSTM cells: forward evaluation over a sequence and exact
//! (untruncated) backpropagation through time.
//!
//! GRU recurrence, with `*` elementwise and `sigma` the logistic function:
//!
//! ```text
//! z_t = sigma(q1 + W1 x_t + U1 m_{t-1})          update gate
//! r_t = sigma(q2 + W2 x_t + U2 m_{t-1})          reset gate
//! g_t = tanh (q3 + W3 x_t + U3 (r_t * m_{t-1}))  candidate state
//! m_t = (1 - z_t) * m_{t-1} + z_t * g_t
//! y_t = m_t
//! ```
//!
//! LSTM recurrence:
//!
//! ```text
//! z_t = sigma(q1 + W1 x_t + U1 m_{t-1})          forget gate
//! r_t = sigma(q2 + W2 x_t + U2 m_{t-1})          input gate
//! g_t = tanh (q3 + W3 x_t + U3 m_{t-1})          cell candidate
//! c_t = z_t * c_{t-1} + r_t * g_t                cell state
//! v_t = sigma(q4 + W4 x_t + r_t * (U4 m_{t-1}))  output gate
//! m_t = v_t * tanh(c_t)
//! y_t = m_t
//! ```
//!
//! Note the output gate's recurrent term is scaled by the input gate `r_t`.
//! That differs from the textbook LSTM (which uses `U4 m_{t-1}` unscaled);
//! the variant is intentional and the gradients below account for it.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Rng;

/// Which recurrent unit to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

impl CellKind {
    /// Number of (bias, input-weight, recurrent-weight) gate triples.
    pub fn gate_count(self) -> usize {
        match self {
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CellKind::Gru => "gru",
            CellKind::Lstm => "lstm",
        }
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gru" => Ok(CellKind::Gru),
            "lstm" => Ok(CellKind::Lstm),
            other => Err(Error::InvalidInput(format!("unknown cell kind {other:?}"))),
        }
    }
}

/// One gate's parameters: bias `q` (K), input weights `w` (KxK) and
/// recurrent weights `u` (KxK).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub bias: Vec<f64>,
    pub w: Matrix,
    pub u: Matrix,
}

impl Gate {
    fn zeros(k: usize) -> Self {
        Gate {
            bias: vec![0.0; k],
            w: Matrix::zeros(k, k),
            u: Matrix::zeros(k, k),
        }
    }
}

/// All parameters of one recurrent cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RnnParams {
    pub cell: CellKind,
    pub hidden_dim: usize,
    pub gates: Vec<Gate>,
}

impl RnnParams {
    /// All-zero parameters.
    pub fn zeros(cell: CellKind, hidden_dim: usize) -> Self {
        RnnParams {
            cell,
            hidden_dim,
            gates: (0..cell.gate_count()).map(|_| Gate::zeros(hidden_dim)).collect(),
        }
    }

    /// Random initialization: weight entries uniform on [-a, a] with
    /// a = 1/sqrt(K), biases zero. Keeps pre-activation variance O(1).
    pub fn init(cell: CellKind, hidden_dim: usize, rng: &mut Rng) -> Self {
        let mut params = RnnParams::zeros(cell, hidden_dim);
        let a = 1.0 / (hidden_dim as f64).sqrt();
        for gate in &mut params.gates {
            for r in 0..hidden_dim {
                for c in 0..hidden_dim {
                    gate.w.set(r, c, rng.random_range(-a..a));
                }
            }
            for r in 0..hidden_dim {
                for c in 0..hidden_dim {
                    gate.u.set(r, c, rng.random_range(-a..a));
                }
            }
        }
        params
    }

    /// Total number of scalar parameters: gates * (K + 2 K^2).
    pub fn param_count(&self) -> usize {
        let k = self.hidden_dim;
        self.cell.gate_count() * (k + 2 * k * k)
    }

    /// Visit every parameter in a fixed order (bias, w, u per gate).
    pub fn visit(&self, f: &mut impl FnMut(f64)) {
        for gate in &self.gates {
            for &v in &gate.bias {
                f(v);
            }
            for &v in gate.w.data() {
                f(v);
            }
            for &v in gate.u.data() {
                f(v);
            }
        }
    }

    /// Mutable visit in the same order as [`RnnParams::visit`].
    pub fn visit_mut(&mut self, f: &mut impl FnMut(&mut f64)) {
        for gate in &mut self.gates {
            for v in &mut gate.bias {
                f(v);
            }
            for v in gate.w.data_mut() {
                f(v);
            }
            for v in gate.u.data_mut() {
                f(v);
            }
        }
    }
}

/// Everything recorded during a forward pass, enough to run the exact
/// backward pass without recomputation.
#[derive(Clone, Debug)]
pub struct RnnTrace {
    pub inputs: Matrix,
    pub initial_hidden: Vec<f64>,
    /// Hidden states m_1..m_T, one row per step; also the outputs (y_t = m_t).
    pub hidden: Matrix,
    pub gate_z: Matrix,
    pub gate_r: Matrix,
    /// Candidate activations g_t (tanh output) per step.
    pub candidate: Matrix,
    /// LSTM-only step records; `None` for GRU.
    pub lstm: Option<LstmTrace>,
}

/// LSTM-specific forward records.
#[derive(Clone, Debug)]
pub struct LstmTrace {
    pub gate_v: Matrix,
    pub cell_state: Matrix,
    /// The recurrent output-gate term k_t = U4 m_{t-1}, needed for gradients.
    pub output_gate_rec: Matrix,
}

impl RnnTrace {
    pub fn len(&self) -> usize {
        self.hidden.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.rows() == 0
    }

    /// Output sequence; both cells set y_t = m_t.
    pub fn outputs(&self) -> &Matrix {
        &self.hidden
    }

    /// Final output y_T.
    pub fn last_output(&self) -> &[f64] {
        self.hidden.row(self.hidden.rows() - 1)
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gate pre-activation: bias + W x + U h.
fn preactivation(gate: &Gate, x: &[f64], h: &[f64], out: &mut [f64]) {
    out.copy_from_slice(&gate.bias);
    gate.w.matvec_add(x, out);
    gate.u.matvec_add(h, out);
}

/// Run a cell over a T-by-K input matrix from initial hidden state `m0`.
pub fn rnn_forward(params: &RnnParams, inputs: &Matrix, m0: &[f64]) -> Result<RnnTrace> {
    let k = params.hidden_dim;
    let t_len = inputs.rows();
    if t_len == 0 {
        return Err(Error::EmptySequence("rnn_forward on a zero-step input".into()));
    }
    if inputs.cols() != k {
        return Err(Error::InvalidInput(format!(
            "rnn input has {} columns, hidden_dim is {k}",
            inputs.cols()
        )));
    }
    if m0.len() != k {
        return Err(Error::InvalidInput(format!(
            "initial hidden state has length {}, hidden_dim is {k}",
            m0.len()
        )));
    }
    if !inputs.is_finite() || m0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("rnn_forward got non-finite input".into()));
    }

    let mut hidden = Matrix::zeros(t_len, k);
    let mut gate_z = Matrix::zeros(t_len, k);
    let mut gate_r = Matrix::zeros(t_len, k);
    let mut candidate = Matrix::zeros(t_len, k);
    let mut lstm = match params.cell {
        CellKind::Gru => None,
        CellKind::Lstm => Some(LstmTrace {
            gate_v: Matrix::zeros(t_len, k),
            cell_state: Matrix::zeros(t_len, k),
            output_gate_rec: Matrix::zeros(t_len, k),
        }),
    };

    let mut prev_m = m0.to_vec();
    let mut prev_c = vec![0.0; k]; // LSTM initial cell state c0 = 0.
    let mut scratch = vec![0.0; k];

    for t in 0..t_len {
        let x = inputs.row(t).to_vec();

        preactivation(&params.gates[0], &x, &prev_m, &mut scratch);
        for (o, &a) in gate_z.row_mut(t).iter_mut().zip(scratch.iter()) {
            *o = sigmoid(a);
        }
        preactivation(&params.gates[1], &x, &prev_m, &mut scratch);
        for (o, &a) in gate_r.row_mut(t).iter_mut().zip(scratch.iter()) {
            *o = sigmoid(a);
        }

        match params.cell {
            CellKind::Gru => {
                // g_t = tanh(q3 + W3 x + U3 (r * m_{t-1}))
                let gated: Vec<f64> = gate_r
                    .row(t)
                    .iter()
                    .zip(&prev_m)
                    .map(|(r, m)| r * m)
                    .collect();
                preactivation(&params.gates[2], &x, &gated, &mut scratch);
                for (o, &a) in candidate.row_mut(t).iter_mut().zip(scratch.iter()) {
                    *o = a.tanh();
                }
                for i in 0..k {
                    let z = gate_z.get(t, i);
                    hidden.set(t, i, (1.0 - z) * prev_m[i] + z * candidate.get(t, i));
                }
            }
            CellKind::Lstm => {
                preactivation(&params.gates[2], &x, &prev_m, &mut scratch);
                for (o, &a) in candidate.row_mut(t).iter_mut().zip(scratch.iter()) {
                    *o = a.tanh();
                }
                let lt = lstm.as_mut().unwrap();
                for i in 0..k {
                    let c = gate_z.get(t, i) * prev_c[i] + gate_r.get(t, i) * candidate.get(t, i);
                    lt.cell_state.set(t, i, c);
                }
                // Output gate: v = sigma(q4 + W4 x + r * (U4 m_{t-1})).
                let g4 = &params.gates[3];
                let mut rec = vec![0.0; k];
                g4.u.matvec_add(&prev_m, &mut rec);
                for i in 0..k {
                    lt.output_gate_rec.set(t, i, rec[i]);
                }
                scratch.copy_from_slice(&g4.bias);
                g4.w.matvec_add(&x, &mut scratch);
                for i in 0..k {
                    let v = sigmoid(scratch[i] + gate_r.get(t, i) * rec[i]);
                    lt.gate_v.set(t, i, v);
                    hidden.set(t, i, v * lt.cell_state.get(t, i).tanh());
                }
                prev_c.copy_from_slice(lt.cell_state.row(t));
            }
        }
        prev_m.copy_from_slice(hidden.row(t));
    }

    Ok(RnnTrace {
        inputs: inputs.clone(),
        initial_hidden: m0.to_vec(),
        hidden,
        gate_z,
        gate_r,
        candidate,
        lstm,
    })
}

/// Backpropagation through time.
///
/// `output_grads` holds dL/dy_t per step for any scalar loss L. Returns the
/// gradients with respect to every cell parameter (same shape as `params`)
/// and with respect to every input row.
pub fn rnn_backward(
    params: &RnnParams,
    trace: &RnnTrace,
    output_grads: &Matrix,
) -> Result<(RnnParams, Matrix)> {
    let k = params.hidden_dim;
    let t_len = trace.len();
    if output_grads.rows() != t_len || output_grads.cols() != k {
        return Err(Error::InvalidInput(format!(
            "output_grads is {}x{}, trace expects {}x{}",
            output_grads.rows(),
            output_grads.cols(),
            t_len,
            k
        )));
    }
    if trace.inputs.rows() != t_len || trace.inputs.cols() != k {
        return Err(Error::InvalidInput("trace inputs do not match trace length".into()));
    }
    match (params.cell, &trace.lstm) {
        (CellKind::Gru, None) | (CellKind::Lstm, Some(_)) => {}
        _ => return Err(Error::InvalidInput("trace cell kind does not match params".into())),
    }

    let mut grads = RnnParams::zeros(params.cell, k);
    let mut input_grads = Matrix::zeros(t_len, k);

    // dL/dm_t carried backwards; dL/dc_t for LSTM.
    let mut dm = vec![0.0; k];
    let mut dc = vec![0.0; k];

    let mut da_z = vec![0.0; k];
    let mut da_r = vec![0.0; k];
    let mut da_g = vec![0.0; k];
    let mut dm_prev = vec![0.0; k];

    for t in (0..t_len).rev() {
        for (d, &g) in dm.iter_mut().zip(output_grads.row(t)) {
            *d += g;
        }
        let x = trace.inputs.row(t);
        let prev_m: &[f64] = if t == 0 {
            &trace.initial_hidden
        } else {
            trace.hidden.row(t - 1)
        };
        dm_prev.iter_mut().for_each(|v| *v = 0.0);

        match params.cell {
            CellKind::Gru => {
                let z = trace.gate_z.row(t);
                let r = trace.gate_r.row(t);
                let g = trace.candidate.row(t);

                // m_t = (1-z) * m_{t-1} + z * g
                for i in 0..k {
                    let dg = dm[i] * z[i];
                    let dz = dm[i] * (g[i] - prev_m[i]);
                    dm_prev[i] += dm[i] * (1.0 - z[i]);
                    da_g[i] = dg * (1.0 - g[i] * g[i]);
                    da_z[i] = dz * z[i] * (1.0 - z[i]);
                }

                // Candidate path: a_g = q3 + W3 x + U3 (r * m_{t-1}).
                let gated: Vec<f64> = r.iter().zip(prev_m).map(|(ri, mi)| ri * mi).collect();
                accumulate_gate(&mut grads.gates[2], &da_g, x, &gated);
                let mut d_gated = vec![0.0; k];
                params.gates[2].u.tr_matvec_add(&da_g, &mut d_gated);
                for i in 0..k {
                    let dr = d_gated[i] * prev_m[i];
                    dm_prev[i] += d_gated[i] * r[i];
                    da_r[i] = dr * r[i] * (1.0 - r[i]);
                }

                accumulate_gate(&mut grads.gates[0], &da_z, x, prev_m);
                accumulate_gate(&mut grads.gates[1], &da_r, x, prev_m);
                params.gates[0].u.tr_matvec_add(&da_z, &mut dm_prev);
                params.gates[1].u.tr_matvec_add(&da_r, &mut dm_prev);

                let dx = input_grads.row_mut(t);
                params.gates[0].w.tr_matvec_add(&da_z, dx);
                params.gates[1].w.tr_matvec_add(&da_r, dx);
                params.gates[2].w.tr_matvec_add(&da_g, dx);
            }
            CellKind::Lstm => {
                let lt = trace.lstm.as_ref().unwrap();
                let z = trace.gate_z.row(t);
                let r = trace.gate_r.row(t);
                let g = trace.candidate.row(t);
                let v = lt.gate_v.row(t);
                let c = lt.cell_state.row(t);
                let rec = lt.output_gate_rec.row(t);
                let prev_c: Vec<f64> = if t == 0 {
                    vec![0.0; k]
                } else {
                    lt.cell_state.row(t - 1).to_vec()
                };

                let mut da_v = vec![0.0; k];
                let mut dr = vec![0.0; k];
                let mut d_rec = vec![0.0; k];
                for i in 0..k {
                    let tc = c[i].tanh();
                    // m = v * tanh(c)
                    let dv = dm[i] * tc;
                    dc[i] += dm[i] * v[i] * (1.0 - tc * tc);
                    da_v[i] = dv * v[i] * (1.0 - v[i]);
                    // a_v = q4 + W4 x + r * rec
                    dr[i] = da_v[i] * rec[i];
                    d_rec[i] = da_v[i] * r[i];
                }
                // rec = U4 m_{t-1}
                grads.gates[3].u.add_outer(&d_rec, prev_m, 1.0);
                params.gates[3].u.tr_matvec_add(&d_rec, &mut dm_prev);
                for (b, &d) in grads.gates[3].bias.iter_mut().zip(&da_v) {
                    *b += d;
                }
                grads.gates[3].w.add_outer(&da_v, x, 1.0);

                // c = z * c_{t-1} + r * g
                let mut dc_prev = vec![0.0; k];
                for i in 0..k {
                    let dz = dc[i] * prev_c[i];
                    dr[i] += dc[i] * g[i];
                    let dg = dc[i] * r[i];
                    dc_prev[i] = dc[i] * z[i];
                    da_z[i] = dz * z[i] * (1.0 - z[i]);
                    da_r[i] = dr[i] * r[i] * (1.0 - r[i]);
                    da_g[i] = dg * (1.0 - g[i] * g[i]);
                }

                accumulate_gate(&mut grads.gates[0], &da_z, x, prev_m);
                accumulate_gate(&mut grads.gates[1], &da_r, x, prev_m);
                accumulate_gate(&mut grads.gates[2], &da_g, x, prev_m);
                params.gates[0].u.tr_matvec_add(&da_z, &mut dm_prev);
                params.gates[1].u.tr_matvec_add(&da_r, &mut dm_prev);
                params.gates[2].u.tr_matvec_add(&da_g, &mut dm_prev);

                let dx = input_grads.row_mut(t);
                params.gates[0].w.tr_matvec_add(&da_z, dx);
                params.gates[1].w.tr_matvec_add(&da_r, dx);
                params.gates[2].w.tr_matvec_add(&da_g, dx);
                params.gates[3].w.tr_matvec_add(&da_v, dx);

                dc.copy_from_slice(&dc_prev);
            }
        }

        dm.copy_from_slice(&dm_prev);
    }

    Ok((grads, input_grads))
}

/// Accumulate bias/W/U gradients for one gate given its pre-activation
/// gradient `da` and the vectors it was applied to.
fn accumulate_gate(gate: &mut Gate, da: &[f64], x: &[f64], h: &[f64]) {
    for (b, &d) in gate.bias.iter_mut().zip(da) {
        *b += d;
    }
    gate.w.add_outer(da, x, 1.0);
    gate.u.add_outer(da, h, 1.0);
}
