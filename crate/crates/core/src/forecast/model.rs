//! LSTM encoder with a two-layer MLP head, plus analytic gradients.
//!
//! Gates are stacked in the order input, forget, candidate, output. The MLP
//! maps the final hidden state through `tanh` to `horizon` outputs. All
//! parameters live in one flat vector so FedAvg and optimisers treat them
//! uniformly.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ForecastError;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub input: usize,
    pub hidden: usize,
    pub mlp_hidden: usize,
    pub horizon: usize,
}

impl ModelDims {
    pub fn new(input: usize, hidden: usize, horizon: usize) -> Self {
        Self {
            input,
            hidden,
            mlp_hidden: (hidden / 2).max(1),
            horizon,
        }
    }

    /// Named parameter groups and their ranges in the flat vector.
    pub fn groups(&self) -> [(&'static str, Range<usize>); 7] {
        let (d, h, m, o) = (self.input, self.hidden, self.mlp_hidden, self.horizon);
        let sizes = [
            ("lstm_wx", 4 * h * d),
            ("lstm_wh", 4 * h * h),
            ("lstm_b", 4 * h),
            ("mlp1_w", m * h),
            ("mlp1_b", m),
            ("mlp2_w", o * m),
            ("mlp2_b", o),
        ];
        let mut at = 0;
        sizes.map(|(name, n)| {
            let r = at..at + n;
            at += n;
            (name, r)
        })
    }

    pub fn n_params(&self) -> usize {
        self.groups()[6].1.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub values: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out[r] += Σ_c w[r·cols + c] · x[c]`
fn matvec_acc(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out[c] += Σ_r w[r·cols + c] · v[r]`
fn matvec_t_acc(w: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (row, &vr) in w.chunks_exact(cols).zip(v) {
        if vr != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * vr;
            }
        }
    }
}

/// `g[r·cols + c] += v[r] · x[c]`
fn outer_acc(g: &mut [f64], v: &[f64], x: &[f64]) {
    let cols = x.len();
    for (row, &vr) in g.chunks_exact_mut(cols).zip(v) {
        if vr != 0.0 {
            for (a, b) in row.iter_mut().zip(x) {
                *a += vr * b;
            }
        }
    }
}

/// Scratch buffers reused across samples.
#[derive(Debug, Default)]
struct Workspace {
    steps: usize,
    /// Post-activation gates per step, `steps × 4h`.
    gates: Vec<f64>,
    /// Cell states, `(steps + 1) × h`, row 0 is the zero initial state.
    c: Vec<f64>,
    /// Hidden states, same layout as `c`.
    h: Vec<f64>,
    /// `tanh(c_t)` per step.
    tc: Vec<f64>,
    u: Vec<f64>,
    y: Vec<f64>,
}

impl ModelParams {
    /// Small uniform weights, zero biases except the forget gate at 1.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut r = rng::stream(seed, &[0x1157]);
        let mut values = vec![0.0; dims.n_params()];
        let [wx, wh, b, w1, _, w2, _] = dims.groups();
        let lstm_a = 1.0 / (dims.hidden as f64).sqrt();
        for range in [wx.1, wh.1] {
            for v in &mut values[range] {
                *v = r.random_range(-lstm_a..lstm_a);
            }
        }
        let h = dims.hidden;
        for v in &mut values[b.1.start + h..b.1.start + 2 * h] {
            *v = 1.0;
        }
        for (range, fan_in) in [(w1.1, dims.hidden), (w2.1, dims.mlp_hidden)] {
            let a = 1.0 / (fan_in as f64).sqrt();
            for v in &mut values[range] {
                *v = r.random_range(-a..a);
            }
        }
        Self { dims, values }
    }

    pub fn zeros(dims: ModelDims) -> Self {
        Self {
            dims,
            values: vec![0.0; dims.n_params()],
        }
    }

    pub fn group(&self, name: &str) -> &[f64] {
        let (_, r) = self
            .dims
            .groups()
            .into_iter()
            .find(|(n, _)| *n == name)
            .expect("known parameter group");
        &self.values[r]
    }

    pub fn group_mut(&mut self, name: &str) -> &mut [f64] {
        let (_, r) = self
            .dims
            .groups()
            .into_iter()
            .find(|(n, _)| *n == name)
            .expect("known parameter group");
        &mut self.values[r]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_input(&self, x: &[f64]) -> Result<usize, ForecastError> {
        let d = self.dims.input;
        if x.is_empty() || !x.len().is_multiple_of(d) {
            return Err(ForecastError::DimensionMismatch(format!(
                "input of length {} is not a positive multiple of {d}",
                x.len()
            )));
        }
        Ok(x.len() / d)
    }

    fn run(&self, x: &[f64], ws: &mut Workspace) {
        let (d, h, m) = (self.dims.input, self.dims.hidden, self.dims.mlp_hidden);
        let steps = x.len() / d;
        let [wx, wh, b, w1, b1, w2, b2] = self.dims.groups().map(|(_, r)| &self.values[r]);
        ws.steps = steps;
        ws.gates.resize(steps * 4 * h, 0.0);
        ws.c.clear();
        ws.c.resize((steps + 1) * h, 0.0);
        ws.h.clear();
        ws.h.resize((steps + 1) * h, 0.0);
        ws.tc.resize(steps * h, 0.0);
        for t in 0..steps {
            let z = &mut ws.gates[t * 4 * h..(t + 1) * 4 * h];
            z.copy_from_slice(b);
            matvec_acc(wx, &x[t * d..(t + 1) * d], z);
            matvec_acc(wh, &ws.h[t * h..(t + 1) * h], z);
            for j in 0..h {
                let i = sigmoid(z[j]);
                let f = sigmoid(z[h + j]);
                let g = z[2 * h + j].tanh();
                let o = sigmoid(z[3 * h + j]);
                z[j] = i;
                z[h + j] = f;
                z[2 * h + j] = g;
                z[3 * h + j] = o;
                let c = f * ws.c[t * h + j] + i * g;
                let tc = c.tanh();
                ws.c[(t + 1) * h + j] = c;
                ws.tc[t * h + j] = tc;
                ws.h[(t + 1) * h + j] = o * tc;
            }
        }
        let h_last = &ws.h[steps * h..];
        ws.u.clear();
        ws.u.extend_from_slice(b1);
        matvec_acc(w1, h_last, &mut ws.u);
        for v in &mut ws.u[..m] {
            *v = v.tanh();
        }
        ws.y.clear();
        ws.y.extend_from_slice(b2);
        matvec_acc(w2, &ws.u, &mut ws.y);
    }

    /// Prediction for one input sequence (row-major `steps × input`).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ForecastError> {
        self.check_input(x)?;
        let mut ws = Workspace::default();
        self.run(x, &mut ws);
        Ok(ws.y)
    }

    /// Mean squared error over the batch and horizon, and its gradient.
    pub fn backward<X, Y>(&self, batch: &[(X, Y)]) -> Result<(f64, Vec<f64>), ForecastError>
    where
        X: AsRef<[f64]>,
        Y: AsRef<[f64]>,
    {
        if batch.is_empty() {
            return Err(ForecastError::EmptyBatch);
        }
        let mut grad = vec![0.0; self.values.len()];
        let mut ws = Workspace::default();
        let mut loss = 0.0;
        let scale = 1.0 / (batch.len() * self.dims.horizon) as f64;
        for (x, y) in batch {
            let (x, y) = (x.as_ref(), y.as_ref());
            self.check_input(x)?;
            if y.len() != self.dims.horizon {
                return Err(ForecastError::DimensionMismatch(format!(
                    "target of length {}, expected {}",
                    y.len(),
                    self.dims.horizon
                )));
            }
            loss += self.accumulate(x, y, scale, &mut ws, &mut grad);
        }
        Ok((loss, grad))
    }

    /// Adds one sample's scaled gradient to `grad` and returns its scaled loss.
    fn accumulate(&self, x: &[f64], y: &[f64], scale: f64, ws: &mut Workspace, grad: &mut [f64]) -> f64 {
        self.run(x, ws);
        let (d, h) = (self.dims.input, self.dims.hidden);
        let steps = ws.steps;
        let groups = self.dims.groups();
        let [_, wh, _, w1, _, w2, _] = groups.clone().map(|(_, r)| &self.values[r]);
        let [gwx, gwh, gb, gw1, gb1, gw2, gb2] = groups.map(|(_, r)| r);

        let mut loss = 0.0;
        let dy: Vec<f64> = ws
            .y
            .iter()
            .zip(y)
            .map(|(p, t)| {
                let e = p - t;
                loss += e * e;
                2.0 * e * scale
            })
            .collect();

        outer_acc(&mut grad[gw2], &dy, &ws.u);
        for (g, v) in grad[gb2].iter_mut().zip(&dy) {
            *g += v;
        }
        let mut da = vec![0.0; ws.u.len()];
        matvec_t_acc(w2, &dy, &mut da);
        for (a, u) in da.iter_mut().zip(&ws.u) {
            *a *= 1.0 - u * u;
        }
        outer_acc(&mut grad[gw1], &da, &ws.h[steps * h..]);
        for (g, v) in grad[gb1].iter_mut().zip(&da) {
            *g += v;
        }
        let mut dh = vec![0.0; h];
        matvec_t_acc(w1, &da, &mut dh);

        let mut dc = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let gates = &ws.gates[t * 4 * h..(t + 1) * 4 * h];
            let c_prev = &ws.c[t * h..(t + 1) * h];
            for j in 0..h {
                let (i, f, g, o) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                let tc = ws.tc[t * h + j];
                let dcj = dc[j] + dh[j] * o * (1.0 - tc * tc);
                dz[j] = dcj * g * i * (1.0 - i);
                dz[h + j] = dcj * c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dcj * i * (1.0 - g * g);
                dz[3 * h + j] = dh[j] * tc * o * (1.0 - o);
                dc[j] = dcj * f;
            }
            outer_acc(&mut grad[gwx.clone()], &dz, &x[t * d..(t + 1) * d]);
            outer_acc(&mut grad[gwh.clone()], &dz, &ws.h[t * h..(t + 1) * h]);
            for (g, v) in grad[gb.clone()].iter_mut().zip(&dz) {
                *g += v;
            }
            dh.iter_mut().for_each(|v| *v = 0.0);
            matvec_t_acc(wh, &dz, &mut dh);
        }
        loss * scale
    }
}
