//! Single-layer LSTM with exact backpropagation through time.
//!
//! Gate parameters are stacked row-wise in the order forget, input, output, cell:
//! `w` is `4m x c`, `u` is `4m x m` and `b` has length `4m`. All operations are
//! batched: a time step is a `B x c` matrix and the state is a pair of `B x m` matrices.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Output = 2,
    Cell = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Output, Gate::Cell];

    pub fn suffix(self) -> &'static str {
        match self {
            Gate::Forget => "f",
            Gate::Input => "i",
            Gate::Output => "o",
            Gate::Cell => "c",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmParams {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

impl LstmParams {
    pub fn zeros(m: usize, c: usize) -> Self {
        Self {
            w: Array2::zeros((4 * m, c)),
            u: Array2::zeros((4 * m, m)),
            b: Array1::zeros(4 * m),
        }
    }

    /// Weights uniform in `±1/sqrt(m)`, biases zero except the forget gate at 1.
    pub fn init(m: usize, c: usize, rng: &mut impl Rng) -> Self {
        assert!(m >= 1 && c >= 1, "LSTM dimensions must be positive");
        let bound = 1.0 / (m as f64).sqrt();
        let mut p = Self::zeros(m, c);
        p.w.iter_mut()
            .for_each(|v| *v = rng.random_range(-bound..bound));
        p.u.iter_mut()
            .for_each(|v| *v = rng.random_range(-bound..bound));
        p.b.slice_mut(s![0..m]).fill(1.0);
        p
    }

    pub fn hidden(&self) -> usize {
        self.u.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn gate_w(&self, g: Gate) -> ArrayView2<'_, f64> {
        let m = self.hidden();
        self.w.slice(s![g as usize * m..(g as usize + 1) * m, ..])
    }

    pub fn gate_u(&self, g: Gate) -> ArrayView2<'_, f64> {
        let m = self.hidden();
        self.u.slice(s![g as usize * m..(g as usize + 1) * m, ..])
    }

    pub fn gate_b(&self, g: Gate) -> ndarray::ArrayView1<'_, f64> {
        let m = self.hidden();
        self.b.slice(s![g as usize * m..(g as usize + 1) * m])
    }

    pub fn check(&self) -> Result<(), ModelError> {
        let m = self.hidden();
        if m == 0 || self.u.nrows() != 4 * m || self.w.nrows() != 4 * m || self.b.len() != 4 * m {
            return Err(ModelError::Dimension(format!(
                "inconsistent LSTM shapes w {:?} u {:?} b {}",
                self.w.dim(),
                self.u.dim(),
                self.b.len()
            )));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.w.len() + self.u.len() + self.b.len()
    }
}

/// Hidden and cell state for a batch (`B x m` each).
#[derive(Clone, Debug, PartialEq)]
pub struct LstmState {
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

impl LstmState {
    pub fn zeros(batch: usize, m: usize) -> Self {
        Self {
            h: Array2::zeros((batch, m)),
            c: Array2::zeros((batch, m)),
        }
    }

    pub fn batch(&self) -> usize {
        self.h.nrows()
    }
}

/// Per-step activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LstmCache {
    inputs: Vec<Array2<f64>>,
    h_prev: Vec<Array2<f64>>,
    c_prev: Vec<Array2<f64>>,
    /// Activated gates `[f | i | o | g]`, `B x 4m`.
    gates: Vec<Array2<f64>>,
    tanh_c: Vec<Array2<f64>>,
}

impl LstmCache {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn batch(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LstmGrads {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct StepOut {
    gates: Array2<f64>,
    c: Array2<f64>,
    tanh_c: Array2<f64>,
    h: Array2<f64>,
}

fn step_kernel(p: &LstmParams, x: &ArrayView2<f64>, h: &Array2<f64>, c: &Array2<f64>) -> StepOut {
    let m = p.hidden();
    let mut a = x.dot(&p.w.t());
    a += &h.dot(&p.u.t());
    a += &p.b;
    let batch = a.nrows();
    let mut c_new = Array2::zeros((batch, m));
    let mut tanh_c = Array2::zeros((batch, m));
    let mut h_new = Array2::zeros((batch, m));
    for r in 0..batch {
        let mut row = a.row_mut(r);
        let g = row.as_slice_mut().expect("standard layout");
        for v in &mut g[..3 * m] {
            *v = sigmoid(*v);
        }
        for v in &mut g[3 * m..] {
            *v = v.tanh();
        }
        let cp = c.row(r);
        for j in 0..m {
            let cn = g[j] * cp[j] + g[m + j] * g[3 * m + j];
            let tc = cn.tanh();
            c_new[[r, j]] = cn;
            tanh_c[[r, j]] = tc;
            h_new[[r, j]] = g[2 * m + j] * tc;
        }
    }
    StepOut {
        gates: a,
        c: c_new,
        tanh_c,
        h: h_new,
    }
}

fn check_input(p: &LstmParams, x: &ArrayView2<f64>, state: &LstmState) -> Result<(), ModelError> {
    if x.ncols() != p.input_dim() {
        return Err(ModelError::Dimension(format!(
            "input has {} features, expected {}",
            x.ncols(),
            p.input_dim()
        )));
    }
    if state.h.dim() != (x.nrows(), p.hidden()) || state.c.dim() != (x.nrows(), p.hidden()) {
        return Err(ModelError::Dimension(format!(
            "state shape {:?} does not match batch {} x {}",
            state.h.dim(),
            x.nrows(),
            p.hidden()
        )));
    }
    Ok(())
}

/// Advances the state by one input, without caching.
pub fn step(
    p: &LstmParams,
    x: ArrayView2<f64>,
    state: &LstmState,
) -> Result<LstmState, ModelError> {
    check_input(p, &x, state)?;
    let out = step_kernel(p, &x, &state.h, &state.c);
    Ok(LstmState { h: out.h, c: out.c })
}

/// Consumes the whole sequence and returns the final encoding plus the cache for
/// [`backward`]. Intermediate states are only kept inside the cache.
pub fn forward(
    p: &LstmParams,
    seq: &[Array2<f64>],
    init: &LstmState,
) -> Result<(LstmState, LstmCache), ModelError> {
    if seq.is_empty() {
        return Err(ModelError::Dimension("empty input sequence".into()));
    }
    let t_len = seq.len();
    let mut cache = LstmCache {
        inputs: Vec::with_capacity(t_len),
        h_prev: Vec::with_capacity(t_len),
        c_prev: Vec::with_capacity(t_len),
        gates: Vec::with_capacity(t_len),
        tanh_c: Vec::with_capacity(t_len),
    };
    let mut h = init.h.clone();
    let mut c = init.c.clone();
    for x in seq {
        check_input(
            p,
            &x.view(),
            &LstmState {
                h: h.clone(),
                c: c.clone(),
            },
        )?;
        let out = step_kernel(p, &x.view(), &h, &c);
        cache.inputs.push(x.clone());
        cache.h_prev.push(std::mem::replace(&mut h, out.h));
        cache.c_prev.push(std::mem::replace(&mut c, out.c));
        cache.gates.push(out.gates);
        cache.tanh_c.push(out.tanh_c);
    }
    Ok((LstmState { h, c }, cache))
}

/// Backpropagates gradients of a scalar loss with respect to the final `(h, c)`.
/// Returns the parameter gradients and the gradient for every input step.
pub fn backward(
    p: &LstmParams,
    cache: &LstmCache,
    grad_h: &Array2<f64>,
    grad_c: &Array2<f64>,
) -> Result<(LstmGrads, Vec<Array2<f64>>), ModelError> {
    let m = p.hidden();
    let batch = cache.batch();
    if cache.is_empty() {
        return Err(ModelError::CacheMismatch("empty cache".into()));
    }
    if cache.gates[0].ncols() != 4 * m || cache.inputs[0].ncols() != p.input_dim() {
        return Err(ModelError::CacheMismatch(
            "cache was produced by different parameters".into(),
        ));
    }
    if grad_h.dim() != (batch, m) || grad_c.dim() != (batch, m) {
        return Err(ModelError::CacheMismatch(format!(
            "upstream gradient shape {:?} does not match batch {batch} x {m}",
            grad_h.dim()
        )));
    }
    let mut grads = LstmGrads {
        w: Array2::zeros(p.w.dim()),
        u: Array2::zeros(p.u.dim()),
        b: Array1::zeros(p.b.len()),
    };
    let mut dh = grad_h.clone();
    let mut dc = grad_c.clone();
    let mut dxs = vec![Array2::zeros((0, 0)); cache.len()];
    let mut da = Array2::<f64>::zeros((batch, 4 * m));
    for t in (0..cache.len()).rev() {
        let gates = &cache.gates[t];
        let tc = &cache.tanh_c[t];
        let c_prev = &cache.c_prev[t];
        for r in 0..batch {
            let g = gates.row(r);
            let mut d = da.row_mut(r);
            for j in 0..m {
                let (f, i, o, gg) = (g[j], g[m + j], g[2 * m + j], g[3 * m + j]);
                let tcj = tc[[r, j]];
                let dh_rj = dh[[r, j]];
                let dcj = dc[[r, j]] + dh_rj * o * (1.0 - tcj * tcj);
                d[j] = dcj * c_prev[[r, j]] * f * (1.0 - f);
                d[m + j] = dcj * gg * i * (1.0 - i);
                d[2 * m + j] = dh_rj * tcj * o * (1.0 - o);
                d[3 * m + j] = dcj * i * (1.0 - gg * gg);
                dc[[r, j]] = dcj * f;
            }
        }
        grads.w += &da.t().dot(&cache.inputs[t]);
        grads.u += &da.t().dot(&cache.h_prev[t]);
        grads.b += &da.sum_axis(Axis(0));
        dxs[t] = da.dot(&p.w);
        dh = da.dot(&p.u);
    }
    Ok((grads, dxs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_seq(len: usize, batch: usize, c: usize, rng: &mut impl Rng) -> Vec<Array2<f64>> {
        (0..len)
            .map(|_| Array2::from_shape_fn((batch, c), |_| rng.random_range(-1.5..1.5)))
            .collect()
    }

    #[test]
    fn zero_params_keep_zero_state() {
        let p = LstmParams::zeros(4, 3);
        let seq = vec![array![[1.0, -2.0, 0.5]]; 5];
        let (st, _) = forward(&p, &seq, &LstmState::zeros(1, 4)).unwrap();
        assert!(st.h.iter().all(|&v| v == 0.0));
        assert!(st.c.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_params_halve_cell_state() {
        let p = LstmParams::zeros(2, 1);
        let init = LstmState {
            h: array![[0.0, 0.0]],
            c: array![[0.8, -0.4]],
        };
        let st = step(&p, array![[3.0]].view(), &init).unwrap();
        assert_eq!(st.c, array![[0.4, -0.2]]);
        assert_eq!(st.h, array![[0.5 * 0.4f64.tanh(), 0.5 * (-0.2f64).tanh()]]);
    }

    #[test]
    fn saturated_cell_input() {
        let mut p = LstmParams::zeros(1, 1);
        p.b[3] = 40.0;
        let st = step(&p, array![[0.7]].view(), &LstmState::zeros(1, 1)).unwrap();
        // input gate is sigmoid(0) = 0.5, tanh(40) = 1
        assert!((st.c[[0, 0]] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stepwise_matches_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = LstmParams::init(5, 4, &mut rng);
        let seq = random_seq(6, 2, 4, &mut rng);
        let init = LstmState::zeros(2, 5);
        let (batch, _) = forward(&p, &seq, &init).unwrap();
        let mut st = init;
        for x in &seq {
            st = step(&p, x.view(), &st).unwrap();
        }
        assert_eq!(st, batch);
    }

    #[test]
    fn init_properties() {
        let a = LstmParams::init(8, 10, &mut ChaCha8Rng::seed_from_u64(9));
        let b = LstmParams::init(8, 10, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert!(a.gate_b(Gate::Forget).iter().all(|&v| v == 1.0));
        assert!(a.gate_b(Gate::Input).iter().all(|&v| v == 0.0));
        let big = LstmParams::init(100, 1000, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(big.w.len() >= 100_000);
        assert!(big.w.iter().chain(big.u.iter()).all(|v| v.abs() <= 0.1));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_grads() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LstmParams::init(3, 2, &mut rng);
        let seq = random_seq(4, 2, 2, &mut rng);
        let (_, cache) = forward(&p, &seq, &LstmState::zeros(2, 3)).unwrap();
        let z = Array2::zeros((2, 3));
        let (g, dx) = backward(&p, &cache, &z, &z).unwrap();
        assert!(g
            .w
            .iter()
            .chain(g.u.iter())
            .chain(g.b.iter())
            .all(|&v| v == 0.0));
        assert!(dx.iter().all(|d| d.iter().all(|&v| v == 0.0)));
    }

    /// One step, m = c = 1, zero initial state:
    /// h = o * tanh(c1) with o = sigmoid(w_o x + b_o), c1 = i * tanh(w_c x + b_c),
    /// so dh/db_o = o (1 - o) tanh(c1).
    #[test]
    fn hand_derived_output_bias_gradient() {
        let mut p = LstmParams::zeros(1, 1);
        p.w = array![[0.3], [-0.2], [0.5], [0.9]];
        p.b = array![0.1, 0.2, -0.3, 0.4];
        let x = 0.7;
        let (_, cache) = forward(&p, &[array![[x]]], &LstmState::zeros(1, 1)).unwrap();
        let (g, _) = backward(&p, &cache, &array![[1.0]], &array![[0.0]]).unwrap();

        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = sig(-0.2 * x + 0.2);
        let o = sig(0.5 * x - 0.3);
        let c1 = i * (0.9 * x + 0.4).tanh();
        let expected = o * (1.0 - o) * c1.tanh();
        assert!((g.b[2] - expected).abs() < 1e-12);
        // forget gate cannot matter from a zero cell state
        assert_eq!(g.b[0], 0.0);
    }

    #[test]
    fn dimension_errors() {
        let p = LstmParams::zeros(2, 3);
        let bad = vec![Array2::zeros((1, 4))];
        assert!(matches!(
            forward(&p, &bad, &LstmState::zeros(1, 2)),
            Err(ModelError::Dimension(_))
        ));
        assert!(matches!(
            forward(&p, &[], &LstmState::zeros(1, 2)),
            Err(ModelError::Dimension(_))
        ));
        let (_, cache) = forward(&p, &[Array2::zeros((1, 3))], &LstmState::zeros(1, 2)).unwrap();
        let other = LstmParams::zeros(3, 3);
        let g = Array2::zeros((1, 3));
        assert!(matches!(
            backward(&other, &cache, &g, &g),
            Err(ModelError::CacheMismatch(_))
        ));
    }
}
