use super::activation::{sigmoid, sigmoid_in_place, tanh, tanh_in_place};
use super::array::DenseArray;
use super::gemm::{gemm, product, MatRef};
use crate::error::{Error, Result};

/// LSTM cell with gate blocks stacked in the order (input, forget, cell, output).
///
/// `w_ih: [4H, I]`, `w_hh: [4H, H]`, `bias: [4H]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub w_ih: DenseArray,
    pub w_hh: DenseArray,
    pub bias: DenseArray,
}

/// Gradients of one [`LstmCell::step`].
#[derive(Debug, Clone)]
pub struct LstmStepGrads {
    pub x: DenseArray,
    pub h: DenseArray,
    pub c: DenseArray,
    pub w_ih: DenseArray,
    pub w_hh: DenseArray,
    pub bias: DenseArray,
}

/// Activations of a batched run from zero initial state, kept for backprop.
///
/// All buffers are laid out `[T, B, ...]`.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    pub steps: usize,
    pub batch: usize,
    pub hidden: usize,
    /// Post-nonlinearity gates `[T, B, 4H]`.
    pub gates: Vec<f64>,
    pub cells: Vec<f64>,
    pub tanh_cells: Vec<f64>,
    pub hidden_states: Vec<f64>,
}

impl LstmTrace {
    /// Hidden state after step `s` for every batch row, `[B, H]`.
    pub fn hidden_at(&self, s: usize) -> &[f64] {
        let n = self.batch * self.hidden;
        &self.hidden_states[s * n..(s + 1) * n]
    }
}

/// Gradients of [`LstmCell::backward_sequence`].
#[derive(Debug, Clone)]
pub struct LstmSequenceGrads {
    /// Gradient w.r.t. the projected inputs (pre-activation input terms), `[T, B, 4H]`.
    pub projected: DenseArray,
    pub w_hh: DenseArray,
}

impl LstmCell {
    pub fn new(w_ih: DenseArray, w_hh: DenseArray, bias: DenseArray) -> Result<Self> {
        let [g, _input] = w_ih.shape() else {
            return Err(Error::shape("lstm w_ih must be [4H, I]"));
        };
        if g % 4 != 0 {
            return Err(Error::shape(format!("lstm gate rows {g} not divisible by 4")));
        }
        let h = g / 4;
        if w_hh.shape() != [*g, h] {
            return Err(Error::shape(format!(
                "lstm w_hh must be [{g}, {h}], got {:?}",
                w_hh.shape()
            )));
        }
        if bias.shape() != [*g] {
            return Err(Error::shape(format!(
                "lstm bias must be [{g}], got {:?}",
                bias.shape()
            )));
        }
        Ok(LstmCell { w_ih, w_hh, bias })
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmCell::new(
            DenseArray::zeros(&[4 * hidden, input_dim]),
            DenseArray::zeros(&[4 * hidden, hidden]),
            DenseArray::zeros(&[4 * hidden]),
        )
        .expect("valid lstm geometry")
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.shape()[1]
    }

    fn check_step_shapes(&self, x: &DenseArray, h: &DenseArray, c: &DenseArray) -> Result<()> {
        let (i, hd) = (self.input_dim(), self.hidden());
        if x.shape() != [i] || h.shape() != [hd] || c.shape() != [hd] {
            return Err(Error::shape(format!(
                "lstm step expects x [{i}], h [{hd}], c [{hd}]; got {:?}, {:?}, {:?}",
                x.shape(),
                h.shape(),
                c.shape()
            )));
        }
        Ok(())
    }

    /// Activated gates `(i, f, g, o)` for one step, each of length H.
    fn step_gates(&self, x: &[f64], h: &[f64]) -> [Vec<f64>; 4] {
        let (ni, nh) = (self.input_dim(), self.hidden());
        let w_ih = self.w_ih.data();
        let w_hh = self.w_hh.data();
        let b = self.bias.data();
        let pre = |row: usize| -> f64 {
            let mut z = b[row];
            for (w, v) in w_ih[row * ni..(row + 1) * ni].iter().zip(x) {
                z += w * v;
            }
            for (w, v) in w_hh[row * nh..(row + 1) * nh].iter().zip(h) {
                z += w * v;
            }
            z
        };
        let gate = |block: usize, act: fn(f64) -> f64| -> Vec<f64> {
            (0..nh).map(|j| act(pre(block * nh + j))).collect()
        };
        [
            gate(0, sigmoid),
            gate(1, sigmoid),
            gate(2, tanh),
            gate(3, sigmoid),
        ]
    }

    /// One step: returns `(h', c')`.
    pub fn step(&self, x: &DenseArray, h: &DenseArray, c: &DenseArray) -> Result<(DenseArray, DenseArray)> {
        self.check_step_shapes(x, h, c)?;
        let [i, f, g, o] = self.step_gates(x.data(), h.data());
        let nh = self.hidden();
        let mut c_next = vec![0.0; nh];
        let mut h_next = vec![0.0; nh];
        for j in 0..nh {
            c_next[j] = f[j] * c.data()[j] + i[j] * g[j];
            h_next[j] = o[j] * tanh(c_next[j]);
        }
        Ok((
            DenseArray::from_vec(&[nh], h_next)?,
            DenseArray::from_vec(&[nh], c_next)?,
        ))
    }

    /// Gradients of one step given upstream gradients on `h'` and `c'`.
    pub fn step_backward(
        &self,
        x: &DenseArray,
        h: &DenseArray,
        c: &DenseArray,
        grad_h_next: &DenseArray,
        grad_c_next: &DenseArray,
    ) -> Result<LstmStepGrads> {
        self.check_step_shapes(x, h, c)?;
        let nh = self.hidden();
        let ni = self.input_dim();
        if grad_h_next.shape() != [nh] || grad_c_next.shape() != [nh] {
            return Err(Error::shape("lstm step_backward upstream gradients must be [H]"));
        }
        let [i, f, g, o] = self.step_gates(x.data(), h.data());
        let mut dz = vec![0.0; 4 * nh];
        let mut dc_prev = vec![0.0; nh];
        for j in 0..nh {
            let c_next = f[j] * c.data()[j] + i[j] * g[j];
            let tc = tanh(c_next);
            let dh = grad_h_next.data()[j];
            let d_o = dh * tc;
            let dc = grad_c_next.data()[j] + dh * o[j] * (1.0 - tc * tc);
            let d_i = dc * g[j];
            let d_f = dc * c.data()[j];
            let d_g = dc * i[j];
            dc_prev[j] = dc * f[j];
            dz[j] = d_i * i[j] * (1.0 - i[j]);
            dz[nh + j] = d_f * f[j] * (1.0 - f[j]);
            dz[2 * nh + j] = d_g * (1.0 - g[j] * g[j]);
            dz[3 * nh + j] = d_o * o[j] * (1.0 - o[j]);
        }
        let mut dx = vec![0.0; ni];
        let mut dh = vec![0.0; nh];
        let mut dw_ih = vec![0.0; 4 * nh * ni];
        let mut dw_hh = vec![0.0; 4 * nh * nh];
        for (row, &d) in dz.iter().enumerate() {
            let wi = &self.w_ih.data()[row * ni..(row + 1) * ni];
            for (k, &w) in wi.iter().enumerate() {
                dx[k] += w * d;
                dw_ih[row * ni + k] = d * x.data()[k];
            }
            let wh = &self.w_hh.data()[row * nh..(row + 1) * nh];
            for (k, &w) in wh.iter().enumerate() {
                dh[k] += w * d;
                dw_hh[row * nh + k] = d * h.data()[k];
            }
        }
        Ok(LstmStepGrads {
            x: DenseArray::from_vec(&[ni], dx)?,
            h: DenseArray::from_vec(&[nh], dh)?,
            c: DenseArray::from_vec(&[nh], dc_prev)?,
            w_ih: DenseArray::from_vec(&[4 * nh, ni], dw_ih)?,
            w_hh: DenseArray::from_vec(&[4 * nh, nh], dw_hh)?,
            bias: DenseArray::from_vec(&[4 * nh], dz)?,
        })
    }

    /// Input term of the gate pre-activations, `x W_ih^T + b`, for `[R, I]` rows.
    pub fn project_inputs(&self, inputs: &DenseArray) -> Result<DenseArray> {
        let [rows, i] = inputs.shape() else {
            return Err(Error::shape("lstm inputs must be [R, I]"));
        };
        if *i != self.input_dim() {
            return Err(Error::shape(format!(
                "lstm expects input dim {}, got {i}",
                self.input_dim()
            )));
        }
        let g = 4 * self.hidden();
        let mut out = Vec::with_capacity(rows * g);
        for _ in 0..*rows {
            out.extend_from_slice(self.bias.data());
        }
        gemm(
            1.0,
            MatRef::new(inputs.data(), *rows, *i),
            MatRef::new(self.w_ih.data(), g, *i).t(),
            1.0,
            &mut out,
        );
        DenseArray::from_vec(&[*rows, g], out)
    }

    /// Runs `T` steps over `B` independent sequences from zero state.
    ///
    /// `projected` is `[T, B, 4H]` as produced by [`LstmCell::project_inputs`].
    pub fn forward_sequence(&self, projected: &DenseArray) -> Result<LstmTrace> {
        let nh = self.hidden();
        let [steps, batch, g] = projected.shape() else {
            return Err(Error::shape("lstm projected inputs must be [T, B, 4H]"));
        };
        let (steps, batch) = (*steps, *batch);
        if *g != 4 * nh {
            return Err(Error::shape(format!("lstm projected width must be {}", 4 * nh)));
        }
        let gw = 4 * nh;
        let mut gates = projected.data().to_vec();
        let mut cells = vec![0.0; steps * batch * nh];
        let mut tanh_cells = vec![0.0; steps * batch * nh];
        let mut hidden_states = vec![0.0; steps * batch * nh];
        let w_hh = MatRef::new(self.w_hh.data(), gw, nh);

        for s in 0..steps {
            let z = &mut gates[s * batch * gw..(s + 1) * batch * gw];
            if s > 0 {
                let h_prev = &hidden_states[(s - 1) * batch * nh..s * batch * nh];
                gemm(1.0, MatRef::new(h_prev, batch, nh), w_hh.t(), 1.0, z);
            }
            for b in 0..batch {
                let zr = &mut z[b * gw..(b + 1) * gw];
                sigmoid_in_place(&mut zr[..2 * nh]);
                tanh_in_place(&mut zr[2 * nh..3 * nh]);
                sigmoid_in_place(&mut zr[3 * nh..]);
                let base = (s * batch + b) * nh;
                for j in 0..nh {
                    let c_prev = if s > 0 { cells[base - batch * nh + j] } else { 0.0 };
                    cells[base + j] = zr[nh + j] * c_prev + zr[j] * zr[2 * nh + j];
                }
                let tc = &mut tanh_cells[base..base + nh];
                tc.copy_from_slice(&cells[base..base + nh]);
                tanh_in_place(tc);
                for j in 0..nh {
                    hidden_states[base + j] = zr[3 * nh + j] * tc[j];
                }
            }
        }
        Ok(LstmTrace {
            steps,
            batch,
            hidden: nh,
            gates,
            cells,
            tanh_cells,
            hidden_states,
        })
    }

    /// Backprop through time. `grad_h` is the upstream gradient on every
    /// step's hidden output, `[T, B, H]`.
    pub fn backward_sequence(&self, trace: &LstmTrace, grad_h: &DenseArray) -> Result<LstmSequenceGrads> {
        let nh = self.hidden();
        let (steps, batch) = (trace.steps, trace.batch);
        if trace.hidden != nh || grad_h.shape() != [steps, batch, nh] {
            return Err(Error::shape(format!(
                "lstm grad_h must be [{steps}, {batch}, {nh}], got {:?}",
                grad_h.shape()
            )));
        }
        let gw = 4 * nh;
        let mut dz = vec![0.0; steps * batch * gw];
        let mut dh_rec = vec![0.0; batch * nh];
        let mut dc_next = vec![0.0; batch * nh];
        let w_hh = MatRef::new(self.w_hh.data(), gw, nh);

        for s in (0..steps).rev() {
            for b in 0..batch {
                let row = s * batch + b;
                let gt = &trace.gates[row * gw..(row + 1) * gw];
                let dzr = &mut dz[row * gw..(row + 1) * gw];
                for j in 0..nh {
                    let (i, f, g, o) = (gt[j], gt[nh + j], gt[2 * nh + j], gt[3 * nh + j]);
                    let tc = trace.tanh_cells[row * nh + j];
                    let c_prev = if s > 0 { trace.cells[(row - batch) * nh + j] } else { 0.0 };
                    let dh = grad_h.data()[row * nh + j] + dh_rec[b * nh + j];
                    let d_o = dh * tc;
                    let dc = dc_next[b * nh + j] + dh * o * (1.0 - tc * tc);
                    dc_next[b * nh + j] = dc * f;
                    dzr[j] = dc * g * i * (1.0 - i);
                    dzr[nh + j] = dc * c_prev * f * (1.0 - f);
                    dzr[2 * nh + j] = dc * i * (1.0 - g * g);
                    dzr[3 * nh + j] = d_o * o * (1.0 - o);
                }
            }
            if s > 0 {
                let dzs = &dz[s * batch * gw..(s + 1) * batch * gw];
                gemm(1.0, MatRef::new(dzs, batch, gw), w_hh, 0.0, &mut dh_rec);
            }
        }

        let mut dw_hh = vec![0.0; gw * nh];
        if steps > 1 {
            let rows = (steps - 1) * batch;
            gemm(
                1.0,
                MatRef::new(&dz[batch * gw..], rows, gw).t(),
                MatRef::new(&trace.hidden_states[..rows * nh], rows, nh),
                0.0,
                &mut dw_hh,
            );
        }
        Ok(LstmSequenceGrads {
            projected: DenseArray::from_vec(&[steps, batch, gw], dz)?,
            w_hh: DenseArray::from_vec(&[gw, nh], dw_hh)?,
        })
    }

    /// Gradients of [`LstmCell::project_inputs`]: `(d inputs, d w_ih, d bias)`.
    pub fn projection_backward(
        &self,
        inputs: &DenseArray,
        grad_projected: &DenseArray,
    ) -> Result<(DenseArray, DenseArray, DenseArray)> {
        let gw = 4 * self.hidden();
        let ni = self.input_dim();
        let [rows, i] = inputs.shape() else {
            return Err(Error::shape("lstm inputs must be [R, I]"));
        };
        if *i != ni || grad_projected.shape() != [*rows, gw] {
            return Err(Error::shape(format!(
                "lstm projection_backward expects [{rows}, {ni}] and [{rows}, {gw}]"
            )));
        }
        let dz = MatRef::new(grad_projected.data(), *rows, gw);
        let dx = product(1.0, dz, MatRef::new(self.w_ih.data(), gw, ni));
        let dw = product(1.0, dz.t(), MatRef::new(inputs.data(), *rows, ni));
        let mut db = vec![0.0; gw];
        for row in grad_projected.data().chunks_exact(gw) {
            for (d, v) in db.iter_mut().zip(row) {
                *d += v;
            }
        }
        Ok((
            DenseArray::from_vec(&[*rows, ni], dx)?,
            DenseArray::from_vec(&[gw, ni], dw)?,
            DenseArray::from_vec(&[gw], db)?,
        ))
    }
}
