use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayD, ArrayView1, Axis, Ix2, Ix3};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_uniform;

/// Weights of one recurrent direction. Gate blocks along the last axis are
/// ordered input, forget, candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    /// `features x 4h`.
    pub input_weights: Array2<f64>,
    /// `h x 4h`.
    pub recurrent_weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(features: usize, hidden: usize) -> Self {
        Self {
            input_weights: Array2::zeros((features, 4 * hidden)),
            recurrent_weights: Array2::zeros((hidden, 4 * hidden)),
            bias: Array1::zeros(4 * hidden),
        }
    }

    /// Glorot kernels and a unit forget-gate bias.
    pub fn glorot(features: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = glorot_uniform(features, 4 * hidden, &[features, 4 * hidden], rng);
        let u = glorot_uniform(hidden, 4 * hidden, &[hidden, 4 * hidden], rng);
        let mut bias = Array1::zeros(4 * hidden);
        bias.slice_mut(s![hidden..2 * hidden]).fill(1.0);
        Self {
            input_weights: w.into_dimensionality().expect("2-D"),
            recurrent_weights: u.into_dimensionality().expect("2-D"),
            bias,
        }
    }

    pub fn hidden(&self) -> usize {
        self.recurrent_weights.nrows()
    }

    pub fn features(&self) -> usize {
        self.input_weights.nrows()
    }

    pub(crate) fn params(&self) -> Vec<(&[f64], bool)> {
        vec![
            (self.input_weights.as_slice().expect("standard layout"), true),
            (self.recurrent_weights.as_slice().expect("standard layout"), true),
            (self.bias.as_slice().expect("standard layout"), false),
        ]
    }

    pub(crate) fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.input_weights.as_slice_mut().expect("standard layout"),
            self.recurrent_weights.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One step of the gated recurrence for a single sample.
pub fn lstm_cell(
    x: ArrayView1<f64>,
    h_prev: ArrayView1<f64>,
    c_prev: ArrayView1<f64>,
    params: &LstmParams,
) -> (Array1<f64>, Array1<f64>) {
    let h = params.hidden();
    let z = x.dot(&params.input_weights) + h_prev.dot(&params.recurrent_weights) + &params.bias;
    let mut c = Array1::zeros(h);
    let mut out = Array1::zeros(h);
    for j in 0..h {
        let i = sigmoid(z[j]);
        let f = sigmoid(z[h + j]);
        let g = z[2 * h + j].tanh();
        let o = sigmoid(z[3 * h + j]);
        c[j] = f * c_prev[j] + i * g;
        out[j] = o * c[j].tanh();
    }
    (out, c)
}

pub(crate) struct DirectionCache {
    /// Inputs stacked in processing order, `(t * b) x features`.
    x: Array2<f64>,
    /// Activated gates per step, `b x 4h`.
    gates: Vec<Array2<f64>>,
    cells: Vec<Array2<f64>>,
    tanh_cells: Vec<Array2<f64>>,
    hidden: Vec<Array2<f64>>,
}

pub(crate) struct BiLstmCache {
    forward: DirectionCache,
    backward: DirectionCache,
    return_sequences: bool,
    timesteps: usize,
}

/// Runs one direction over `x` (`b x t x f`), returning the cache whose
/// `hidden[s]` is the state after processing step `s`.
fn run_direction(p: &LstmParams, x: &Array3<f64>, reverse: bool) -> DirectionCache {
    let (b, t, f) = x.dim();
    let h = p.hidden();
    let mut stacked = Array2::<f64>::zeros((t * b, f));
    for step in 0..t {
        let time = if reverse { t - 1 - step } else { step };
        stacked
            .slice_mut(s![step * b..(step + 1) * b, ..])
            .assign(&x.slice(s![.., time, ..]));
    }
    let pre = stacked.dot(&p.input_weights) + &p.bias;

    let mut gates = Vec::with_capacity(t);
    let mut cells: Vec<Array2<f64>> = Vec::with_capacity(t);
    let mut tanh_cells = Vec::with_capacity(t);
    let mut hidden: Vec<Array2<f64>> = Vec::with_capacity(t);
    for step in 0..t {
        let mut z = pre.slice(s![step * b..(step + 1) * b, ..]).to_owned();
        if step > 0 {
            general_mat_mul(1.0, &hidden[step - 1], &p.recurrent_weights, 1.0, &mut z);
        }
        let mut c = Array2::<f64>::zeros((b, h));
        let mut tc = Array2::<f64>::zeros((b, h));
        let mut hs = Array2::<f64>::zeros((b, h));
        for r in 0..b {
            let zr = z.row_mut(r).into_slice().expect("row contiguous");
            for v in &mut zr[..2 * h] {
                *v = sigmoid(*v);
            }
            for v in &mut zr[2 * h..3 * h] {
                *v = v.tanh();
            }
            for v in &mut zr[3 * h..] {
                *v = sigmoid(*v);
            }
            for j in 0..h {
                let prev = if step > 0 { cells[step - 1][(r, j)] } else { 0.0 };
                let cv = zr[h + j] * prev + zr[j] * zr[2 * h + j];
                let tv = cv.tanh();
                c[(r, j)] = cv;
                tc[(r, j)] = tv;
                hs[(r, j)] = zr[3 * h + j] * tv;
            }
        }
        gates.push(z);
        cells.push(c);
        tanh_cells.push(tc);
        hidden.push(hs);
    }
    DirectionCache {
        x: stacked,
        gates,
        cells,
        tanh_cells,
        hidden,
    }
}

/// Backpropagation through time for one direction. `dh[s]` is the upstream
/// gradient on the state after step `s`. Returns the input gradient in
/// processing order plus gradients for the three parameter blocks.
fn direction_backward(
    p: &LstmParams,
    cache: &DirectionCache,
    dh: &[Option<Array2<f64>>],
) -> (Array2<f64>, Vec<Vec<f64>>) {
    let t = cache.gates.len();
    let (b, h) = cache.hidden[0].dim();
    let mut dpre = Array2::<f64>::zeros((t * b, 4 * h));
    let mut du = Array2::<f64>::zeros(p.recurrent_weights.dim());
    let mut dh_next = Array2::<f64>::zeros((b, h));
    let mut dc_next = Array2::<f64>::zeros((b, h));
    for step in (0..t).rev() {
        let mut dhs = dh_next.clone();
        if let Some(g) = &dh[step] {
            dhs += g;
        }
        let gates = &cache.gates[step];
        let tc = &cache.tanh_cells[step];
        let mut dz = dpre.slice_mut(s![step * b..(step + 1) * b, ..]);
        for r in 0..b {
            for j in 0..h {
                let i = gates[(r, j)];
                let f = gates[(r, h + j)];
                let g = gates[(r, 2 * h + j)];
                let o = gates[(r, 3 * h + j)];
                let c_prev = if step > 0 { cache.cells[step - 1][(r, j)] } else { 0.0 };
                let d = dhs[(r, j)];
                let tcv = tc[(r, j)];
                let dc = d * o * (1.0 - tcv * tcv) + dc_next[(r, j)];
                dz[(r, j)] = dc * g * i * (1.0 - i);
                dz[(r, h + j)] = dc * c_prev * f * (1.0 - f);
                dz[(r, 2 * h + j)] = dc * i * (1.0 - g * g);
                dz[(r, 3 * h + j)] = d * tcv * o * (1.0 - o);
                dc_next[(r, j)] = dc * f;
            }
        }
        if step > 0 {
            general_mat_mul(1.0, &cache.hidden[step - 1].t(), &dz, 1.0, &mut du);
            dh_next = dz.dot(&p.recurrent_weights.t());
        }
    }
    let dw = cache.x.t().dot(&dpre);
    let db = dpre.sum_axis(Axis(0));
    let dx = dpre.dot(&p.input_weights.t());
    (
        dx,
        vec![
            dw.into_raw_vec_and_offset().0,
            du.into_raw_vec_and_offset().0,
            db.to_vec(),
        ],
    )
}

pub(crate) fn bilstm_forward(
    fwd: &LstmParams,
    bwd: &LstmParams,
    x: Array3<f64>,
    return_sequences: bool,
) -> (ArrayD<f64>, BiLstmCache) {
    let (b, t, _) = x.dim();
    let h = fwd.hidden();
    let cf = run_direction(fwd, &x, false);
    let cb = run_direction(bwd, &x, true);
    let out = if return_sequences {
        let mut out = Array3::<f64>::zeros((b, t, 2 * h));
        for time in 0..t {
            out.slice_mut(s![.., time, ..h]).assign(&cf.hidden[time]);
            out.slice_mut(s![.., time, h..]).assign(&cb.hidden[t - 1 - time]);
        }
        out.into_dyn()
    } else {
        let mut out = Array2::<f64>::zeros((b, 2 * h));
        out.slice_mut(s![.., ..h]).assign(&cf.hidden[t - 1]);
        out.slice_mut(s![.., h..]).assign(&cb.hidden[t - 1]);
        out.into_dyn()
    };
    (
        out,
        BiLstmCache {
            forward: cf,
            backward: cb,
            return_sequences,
            timesteps: t,
        },
    )
}

pub(crate) fn bilstm_backward(
    fwd: &LstmParams,
    bwd: &LstmParams,
    cache: &BiLstmCache,
    grad: ArrayD<f64>,
) -> (ArrayD<f64>, Vec<Vec<f64>>) {
    let t = cache.timesteps;
    let h = fwd.hidden();
    let mut dh_f: Vec<Option<Array2<f64>>> = vec![None; t];
    let mut dh_b: Vec<Option<Array2<f64>>> = vec![None; t];
    if cache.return_sequences {
        let g = grad.into_dimensionality::<Ix3>().expect("3-D grad");
        for time in 0..t {
            dh_f[time] = Some(g.slice(s![.., time, ..h]).to_owned());
            dh_b[t - 1 - time] = Some(g.slice(s![.., time, h..]).to_owned());
        }
    } else {
        let g = grad.into_dimensionality::<Ix2>().expect("2-D grad");
        dh_f[t - 1] = Some(g.slice(s![.., ..h]).to_owned());
        dh_b[t - 1] = Some(g.slice(s![.., h..]).to_owned());
    }
    let (dxf, mut grads) = direction_backward(fwd, &cache.forward, &dh_f);
    let (dxb, gb) = direction_backward(bwd, &cache.backward, &dh_b);
    grads.extend(gb);

    let b = dxf.nrows() / t;
    let f = fwd.features();
    let mut dx = Array3::<f64>::zeros((b, t, f));
    for step in 0..t {
        let mut fw = dx.slice_mut(s![.., step, ..]);
        fw += &dxf.slice(s![step * b..(step + 1) * b, ..]);
        let mut bw = dx.slice_mut(s![.., t - 1 - step, ..]);
        bw += &dxb.slice(s![step * b..(step + 1) * b, ..]);
    }
    (dx.into_dyn(), grads)
}
