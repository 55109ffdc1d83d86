//! Mixture-density head: a bias-free linear layer on `[h; c]` that parameterizes a
//! `k`-component isotropic Gaussian mixture over a `d`-dimensional target.
//!
//! The raw output row is laid out as `[z_alpha (k) | z_mu (k * d) | z_sigma (k)]`.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::lstm::LstmState;
use super::ModelError;

/// Lower bound on every component scale.
pub const SIGMA_FLOOR: f64 = 1e-4;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Debug, PartialEq)]
pub struct MdnParams {
    /// `k (d + 2) x 2m`
    pub w_z: Array2<f64>,
    pub k: usize,
    pub d: usize,
}

impl MdnParams {
    pub fn zeros(k: usize, d: usize, m: usize) -> Self {
        Self {
            w_z: Array2::zeros((k * (d + 2), 2 * m)),
            k,
            d,
        }
    }

    /// Entries uniform in `±1/sqrt(2m)`.
    pub fn init(k: usize, d: usize, m: usize, rng: &mut impl Rng) -> Self {
        assert!(
            k >= 1 && d >= 1 && m >= 1,
            "MDN dimensions must be positive"
        );
        let bound = 1.0 / ((2 * m) as f64).sqrt();
        let mut p = Self::zeros(k, d, m);
        p.w_z
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-bound..bound));
        p
    }

    pub fn output_dim(&self) -> usize {
        self.k * (self.d + 2)
    }

    pub fn hidden(&self) -> usize {
        self.w_z.ncols() / 2
    }

    pub fn check(&self) -> Result<(), ModelError> {
        if self.k == 0
            || self.d == 0
            || self.w_z.nrows() != self.output_dim()
            || self.w_z.ncols() % 2 != 0
        {
            return Err(ModelError::Dimension(format!(
                "W_z is {:?}, expected {} x 2m for k = {}, d = {}",
                self.w_z.dim(),
                self.output_dim(),
                self.k,
                self.d
            )));
        }
        Ok(())
    }
}

/// Mixture parameters for one prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct MixtureParams {
    pub alpha: Vec<f64>,
    pub log_alpha: Vec<f64>,
    /// `k` centers of dimension `d`.
    pub mu: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl MixtureParams {
    pub fn k(&self) -> usize {
        self.alpha.len()
    }

    pub fn d(&self) -> usize {
        self.mu.first().map_or(0, Vec::len)
    }

    /// Builds a mixture from probabilities, centers and scales.
    pub fn new(alpha: Vec<f64>, mu: Vec<Vec<f64>>, sigma: Vec<f64>) -> Self {
        let log_alpha = alpha.iter().map(|a| a.ln()).collect();
        let log_sigma = sigma.iter().map(|s| s.ln()).collect();
        Self {
            alpha,
            log_alpha,
            mu,
            sigma,
            log_sigma,
        }
    }

    /// Interprets one raw head output row.
    pub fn from_logits(z: &[f64], k: usize, d: usize) -> Self {
        assert_eq!(z.len(), k * (d + 2), "logit row has the wrong length");
        let za = &z[..k];
        let zmax = za.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = zmax + za.iter().map(|v| (v - zmax).exp()).sum::<f64>().ln();
        let log_alpha: Vec<f64> = za.iter().map(|v| v - lse).collect();
        let alpha = log_alpha.iter().map(|v| v.exp()).collect();
        let mu = (0..k)
            .map(|i| z[k + i * d..k + (i + 1) * d].to_vec())
            .collect();
        let (sigma, log_sigma) = z[k + k * d..].iter().map(|&zs| sigma_of(zs)).unzip();
        Self {
            alpha,
            log_alpha,
            mu,
            sigma,
            log_sigma,
        }
    }
}

/// Returns `(sigma, ln sigma)` for a raw scale logit, applying the floor.
fn sigma_of(zs: f64) -> (f64, f64) {
    let s = zs.exp();
    if s > SIGMA_FLOOR {
        (s, zs)
    } else {
        (SIGMA_FLOOR, SIGMA_FLOOR.ln())
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn log_density(y: &[f64], mu: &[f64], sigma: f64, log_sigma: f64) -> f64 {
    let d = y.len() as f64;
    -0.5 * d * LN_2PI - d * log_sigma - 0.5 * sq_dist(y, mu) / (sigma * sigma)
}

/// Isotropic Gaussian density of `y` around `mu` with scale `sigma`.
pub fn component_density(y: &[f64], mu: &[f64], sigma: f64) -> f64 {
    log_density(y, mu, sigma, sigma.ln()).exp()
}

/// Mixture density at `y`.
pub fn mixture_density(mix: &MixtureParams, y: &[f64]) -> f64 {
    (-nll_loss(mix, y)).exp()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let mx = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
}

/// Negative log-likelihood of `y` under the mixture.
pub fn nll_loss(mix: &MixtureParams, y: &[f64]) -> f64 {
    let terms: Vec<f64> = (0..mix.k())
        .map(|i| mix.log_alpha[i] + log_density(y, &mix.mu[i], mix.sigma[i], mix.log_sigma[i]))
        .collect();
    -log_sum_exp(&terms)
}

/// Loss for one logit row and its gradient, scaled by `weight`, written into `dz`.
pub fn nll_and_grad_logits(
    z: &[f64],
    y: &[f64],
    k: usize,
    d: usize,
    weight: f64,
    dz: &mut [f64],
) -> f64 {
    let mix = MixtureParams::from_logits(z, k, d);
    let terms: Vec<f64> = (0..k)
        .map(|i| mix.log_alpha[i] + log_density(y, &mix.mu[i], mix.sigma[i], mix.log_sigma[i]))
        .collect();
    let lse = log_sum_exp(&terms);
    for i in 0..k {
        let gamma = (terms[i] - lse).exp();
        dz[i] = weight * (mix.alpha[i] - gamma);
        let inv_var = 1.0 / (mix.sigma[i] * mix.sigma[i]);
        for j in 0..d {
            dz[k + i * d + j] = weight * gamma * (mix.mu[i][j] - y[j]) * inv_var;
        }
        let floored = z[k + k * d + i].exp() <= SIGMA_FLOOR;
        dz[k + k * d + i] = if floored {
            0.0
        } else {
            weight * gamma * (d as f64 - sq_dist(y, &mix.mu[i]) * inv_var)
        };
    }
    -lse
}

fn encoding_row(enc: &LstmState, row: usize) -> Array1<f64> {
    let m = enc.h.ncols();
    let mut e = Array1::zeros(2 * m);
    e.slice_mut(s![..m]).assign(&enc.h.row(row));
    e.slice_mut(s![m..]).assign(&enc.c.row(row));
    e
}

fn check_enc(p: &MdnParams, enc: &LstmState) -> Result<(), ModelError> {
    p.check()?;
    if enc.h.ncols() != p.hidden() || enc.c.ncols() != p.hidden() || enc.h.nrows() != enc.c.nrows()
    {
        return Err(ModelError::Dimension(format!(
            "encoding width {} does not match head input 2m = {}",
            enc.h.ncols() + enc.c.ncols(),
            p.w_z.ncols()
        )));
    }
    Ok(())
}

/// Raw head outputs `[h c] W_z^T` for every row of the encoding batch.
pub fn head_logits(p: &MdnParams, enc: &LstmState) -> Result<Array2<f64>, ModelError> {
    check_enc(p, enc)?;
    let m = p.hidden();
    let wh = p.w_z.slice(s![.., ..m]);
    let wc = p.w_z.slice(s![.., m..]);
    Ok(enc.h.dot(&wh.t()) + enc.c.dot(&wc.t()))
}

/// Mixture for the first row of the encoding.
pub fn head_forward(p: &MdnParams, enc: &LstmState) -> Result<MixtureParams, ModelError> {
    check_enc(p, enc)?;
    if enc.h.nrows() == 0 {
        return Err(ModelError::Dimension("empty encoding batch".into()));
    }
    let z = p.w_z.dot(&encoding_row(enc, 0));
    Ok(MixtureParams::from_logits(
        z.as_slice().expect("contiguous"),
        p.k,
        p.d,
    ))
}

/// Gradients of the mean batch NLL.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadGrads {
    pub w_z: Array2<f64>,
    pub h: Array2<f64>,
    pub c: Array2<f64>,
}

/// Mean NLL over the batch and its gradients with respect to `W_z` and the encoding.
/// `y` is `B x d`.
pub fn head_loss_and_backward(
    p: &MdnParams,
    enc: &LstmState,
    y: ArrayView2<f64>,
) -> Result<(f64, HeadGrads), ModelError> {
    let logits = head_logits(p, enc)?;
    let batch = logits.nrows();
    if y.dim() != (batch, p.d) {
        return Err(ModelError::Dimension(format!(
            "labels are {:?}, expected ({batch}, {})",
            y.dim(),
            p.d
        )));
    }
    let weight = 1.0 / batch as f64;
    let mut dz = Array2::zeros(logits.dim());
    let mut loss = 0.0;
    let mut yrow = vec![0.0; p.d];
    for r in 0..batch {
        yrow.iter_mut().zip(y.row(r)).for_each(|(a, b)| *a = *b);
        let z = logits.row(r);
        let mut dzr = dz.row_mut(r);
        loss += nll_and_grad_logits(
            z.as_slice().expect("contiguous"),
            &yrow,
            p.k,
            p.d,
            weight,
            dzr.as_slice_mut().expect("contiguous"),
        );
    }
    let m = p.hidden();
    let mut w_z = Array2::zeros(p.w_z.dim());
    w_z.slice_mut(s![.., ..m]).assign(&dz.t().dot(&enc.h));
    w_z.slice_mut(s![.., m..]).assign(&dz.t().dot(&enc.c));
    let de = dz.dot(&p.w_z);
    let h = de.slice(s![.., ..m]).to_owned();
    let c = de.slice(s![.., m..]).to_owned();
    Ok((loss * weight, HeadGrads { w_z, h, c }))
}

/// Gradients of a single NLL term with respect to `W_z` and `(h, c)` for a batch of one.
pub fn head_backward(
    p: &MdnParams,
    enc: &LstmState,
    y: ArrayView1<f64>,
) -> Result<HeadGrads, ModelError> {
    let y2 = y.to_owned().insert_axis(ndarray::Axis(0));
    let first = LstmState {
        h: enc.h.slice(s![0..1, ..]).to_owned(),
        c: enc.c.slice(s![0..1, ..]).to_owned(),
    };
    Ok(head_loss_and_backward(p, &first, y2.view())?.1)
}

/// Draws a target from the mixture. Temperature scales the mixing logits by `1/tau`
/// and the component spread by `sqrt(tau)`; `tau = 0` returns the most probable center.
pub fn sample(mix: &MixtureParams, rng: &mut impl Rng, temperature: f64) -> Vec<f64> {
    let k = mix.k();
    if temperature <= 0.0 {
        let best = (0..k).fold(0, |b, i| {
            if mix.log_alpha[i] > mix.log_alpha[b] {
                i
            } else {
                b
            }
        });
        return mix.mu[best].clone();
    }
    let scaled: Vec<f64> = mix.log_alpha.iter().map(|a| a / temperature).collect();
    let lse = log_sum_exp(&scaled);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = k - 1;
    for (i, a) in scaled.iter().enumerate() {
        acc += (a - lse).exp();
        if u < acc {
            pick = i;
            break;
        }
    }
    let spread = mix.sigma[pick] * temperature.sqrt();
    mix.mu[pick]
        .iter()
        .map(|m| {
            let e: f64 = StandardNormal.sample(rng);
            m + spread * e
        })
        .collect()
}
