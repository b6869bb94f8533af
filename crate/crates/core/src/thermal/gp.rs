//! Exact Gaussian-process regression of the next indoor temperature on
//! `(s_prev, s_out_prev, u)` with a squared-exponential ARD kernel, additive
//! observation noise and a constant prior mean equal to the target average.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MeteringHistory;
use crate::error::{Error, Result};
use crate::solver::pg::{minimize, PgSettings};

pub const GP_INPUT_DIM: usize = 3;

/// Jitter levels tried, in order, when a Gram matrix fails to factorize.
const JITTER_LADDER: [f64; 6] = [0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpHyper {
    pub signal_var: f64,
    pub length_scales: [f64; GP_INPUT_DIM],
    pub noise_var: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum NoiseSpec {
    Learned,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpConfig {
    /// Number of starts for the marginal-likelihood search (at least 5).
    pub starts: usize,
    /// Training rows kept (most recent first).
    pub max_rows: usize,
    /// Rows used during the hyperparameter search; evenly subsampled.
    pub search_rows: usize,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for GpConfig {
    fn default() -> Self {
        Self {
            starts: 5,
            max_rows: 2000,
            search_rows: 300,
            noise: NoiseSpec::Learned,
            seed: 0x6770,
            max_iters: 200,
        }
    }
}

/// Fitted GP with its Cholesky factor cached.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GpDocument", into = "GpDocument")]
pub struct GpThermal {
    x: Vec<[f64; GP_INPUT_DIM]>,
    y: Vec<f64>,
    hyper: GpHyper,
    mean: f64,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

/// Serialized form: the factorization is rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GpDocument {
    hyper: GpHyper,
    mean: f64,
    x: Vec<[f64; GP_INPUT_DIM]>,
    y: Vec<f64>,
}

impl TryFrom<GpDocument> for GpThermal {
    type Error = Error;
    fn try_from(doc: GpDocument) -> Result<Self> {
        GpThermal::with_hyper(doc.x, doc.y, doc.hyper, Some(doc.mean))
    }
}

impl From<GpThermal> for GpDocument {
    fn from(gp: GpThermal) -> Self {
        GpDocument {
            hyper: gp.hyper,
            mean: gp.mean,
            x: gp.x,
            y: gp.y,
        }
    }
}

#[inline]
fn kernel(h: &GpHyper, a: &[f64; GP_INPUT_DIM], b: &[f64; GP_INPUT_DIM]) -> f64 {
    let mut r2 = 0.0;
    for d in 0..GP_INPUT_DIM {
        let z = (a[d] - b[d]) / h.length_scales[d];
        r2 += z * z;
    }
    h.signal_var * (-0.5 * r2).exp()
}

fn gram(x: &[[f64; GP_INPUT_DIM]], h: &GpHyper) -> DMatrix<f64> {
    let n = x.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = kernel(h, &x[i], &x[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] += h.noise_var;
    }
    k
}

fn factorize(mut k: DMatrix<f64>) -> Option<(Cholesky<f64, Dyn>, f64)> {
    let n = k.nrows();
    let mut added = 0.0;
    for &jitter in &JITTER_LADDER {
        for i in 0..n {
            k[(i, i)] += jitter - added;
        }
        added = jitter;
        if let Some(c) = Cholesky::new(k.clone()) {
            return Some((c, jitter));
        }
    }
    None
}

impl GpThermal {
    /// Builds the posterior for fixed hyperparameters.
    pub fn with_hyper(
        x: Vec<[f64; GP_INPUT_DIM]>,
        y: Vec<f64>,
        hyper: GpHyper,
        mean: Option<f64>,
    ) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Fit(format!(
                "GP needs matching non-empty data ({} vs {})",
                x.len(),
                y.len()
            )));
        }
        let mean = mean.unwrap_or_else(|| y.iter().sum::<f64>() / y.len() as f64);
        let (chol, jitter) =
            factorize(gram(&x, &hyper)).ok_or(Error::NotPositiveDefinite("GP Gram matrix"))?;
        let centered = DVector::from_iterator(y.len(), y.iter().map(|v| v - mean));
        let alpha = chol.solve(&centered);
        Ok(Self {
            x,
            y,
            hyper,
            mean,
            jitter,
            chol,
            alpha,
        })
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn prior_mean(&self) -> f64 {
        self.mean
    }

    pub fn training_len(&self) -> usize {
        self.x.len()
    }

    /// Jitter that was needed to factorize the Gram matrix.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn kernel(&self, a: &[f64; GP_INPUT_DIM], b: &[f64; GP_INPUT_DIM]) -> f64 {
        kernel(&self.hyper, a, b)
    }

    /// Posterior mean.
    pub fn mean_at(&self, q: &[f64; GP_INPUT_DIM]) -> f64 {
        let mut m = self.mean;
        for (xi, a) in self.x.iter().zip(self.alpha.iter()) {
            m += a * kernel(&self.hyper, q, xi);
        }
        m
    }

    /// Posterior mean and its gradient with respect to the query.
    pub fn mean_with_grad(&self, q: &[f64; GP_INPUT_DIM]) -> (f64, [f64; GP_INPUT_DIM]) {
        let mut m = self.mean;
        let mut g = [0.0; GP_INPUT_DIM];
        for (xi, a) in self.x.iter().zip(self.alpha.iter()) {
            let kv = a * kernel(&self.hyper, q, xi);
            m += kv;
            for d in 0..GP_INPUT_DIM {
                let l = self.hyper.length_scales[d];
                g[d] -= kv * (q[d] - xi[d]) / (l * l);
            }
        }
        (m, g)
    }

    /// Posterior mean and latent-function variance.
    pub fn predict(&self, q: &[f64; GP_INPUT_DIM]) -> (f64, f64) {
        let n = self.x.len();
        let kstar = DVector::from_iterator(n, self.x.iter().map(|xi| kernel(&self.hyper, q, xi)));
        let mean = self.mean + kstar.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .expect("cholesky factor has a non-zero diagonal");
        let var = (self.hyper.signal_var - v.norm_squared()).max(0.0);
        (mean, var)
    }
}

/// Negative log marginal likelihood and its gradient in log-hyperparameter space.
fn neg_lml(
    x: &[[f64; GP_INPUT_DIM]],
    yc: &DVector<f64>,
    logp: &[f64],
    fixed_noise: Option<f64>,
    grad: &mut [f64],
) -> f64 {
    let hyper = unpack(logp, fixed_noise);
    let n = x.len();
    let k = gram(x, &hyper);
    let Some((chol, _)) = factorize(k) else {
        grad.iter_mut().for_each(|g| *g = 0.0);
        return f64::INFINITY;
    };
    let alpha = chol.solve(yc);
    let logdet: f64 = chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum();
    let value = 0.5 * yc.dot(&alpha) + logdet + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();

    // dNLL/dp = -1/2 tr((a a^T - K^-1) dK/dp)
    let kinv = chol.inverse();
    grad.iter_mut().for_each(|g| *g = 0.0);
    for i in 0..n {
        for j in 0..n {
            let w = alpha[i] * alpha[j] - kinv[(i, j)];
            let kf = kernel(&hyper, &x[i], &x[j]);
            grad[0] -= 0.5 * w * kf;
            for d in 0..GP_INPUT_DIM {
                let l = hyper.length_scales[d];
                let z = (x[i][d] - x[j][d]) / l;
                grad[1 + d] -= 0.5 * w * kf * z * z;
            }
        }
        if fixed_noise.is_none() {
            let w = alpha[i] * alpha[i] - kinv[(i, i)];
            grad[1 + GP_INPUT_DIM] -= 0.5 * w * hyper.noise_var;
        }
    }
    value
}

fn unpack(logp: &[f64], fixed_noise: Option<f64>) -> GpHyper {
    GpHyper {
        signal_var: logp[0].exp(),
        length_scales: [logp[1].exp(), logp[2].exp(), logp[3].exp()],
        noise_var: fixed_noise.unwrap_or_else(|| logp[4].exp()),
    }
}

/// Fits hyperparameters by multi-start maximization of the log marginal
/// likelihood, then factorizes the full (capped) training set.
pub fn fit_gp(hist: &MeteringHistory, cfg: &GpConfig) -> Result<GpThermal> {
    if hist.len() < 5 {
        return Err(Error::Fit(format!(
            "GP fit needs at least 5 rows, got {}",
            hist.len()
        )));
    }
    if cfg.starts < 1 {
        return Err(Error::Config("GP search needs at least one start".into()));
    }
    let hist = hist.tail(cfg.max_rows.max(5));
    let (x, y): (Vec<_>, Vec<_>) = hist.transitions().unzip();
    let n = x.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let var_y = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).max(1e-6);

    let stride = n.div_ceil(cfg.search_rows.max(1)).max(1);
    let xs: Vec<_> = x.iter().step_by(stride).copied().collect();
    let yc = DVector::from_iterator(xs.len(), y.iter().step_by(stride).map(|v| v - mean));

    let mut ranges = [1.0; GP_INPUT_DIM];
    for (d, r) in ranges.iter_mut().enumerate() {
        let (lo, hi) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[d]), hi.max(p[d]))
            });
        if hi - lo > 1e-9 {
            *r = hi - lo;
        }
    }
    let fixed_noise = match cfg.noise {
        NoiseSpec::Fixed(v) if v >= 0.0 && v.is_finite() => Some(v),
        NoiseSpec::Fixed(v) => return Err(Error::Config(format!("invalid fixed noise {v}"))),
        NoiseSpec::Learned => None,
    };
    let dim = if fixed_noise.is_some() { 4 } else { 5 };
    let mut lo = vec![(1e-3 * var_y).ln(), 0.0, 0.0, 0.0, (1e-8 * var_y).ln()];
    let mut hi = vec![(1e3 * var_y).ln(), 0.0, 0.0, 0.0, var_y.ln()];
    for d in 0..GP_INPUT_DIM {
        lo[1 + d] = (0.05 * ranges[d]).ln();
        hi[1 + d] = (20.0 * ranges[d]).ln();
    }
    lo.truncate(dim);
    hi.truncate(dim);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = Vec::with_capacity(cfg.starts);
    let mut default_start = vec![
        var_y.ln(),
        ranges[0].ln(),
        ranges[1].ln(),
        ranges[2].ln(),
        (0.01 * var_y).ln(),
    ];
    default_start.truncate(dim);
    starts.push(default_start);
    while starts.len() < cfg.starts {
        starts.push((0..dim).map(|i| rng.random_range(lo[i]..=hi[i])).collect());
    }

    let settings = PgSettings {
        max_iters: cfg.max_iters,
        stall_tol: 1e-10,
        ..PgSettings::default()
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for s in &starts {
        let out = minimize(
            s,
            |p, g| neg_lml(&xs, &yc, p, fixed_noise, g),
            |p: &mut [f64]| {
                for i in 0..p.len() {
                    p[i] = p[i].clamp(lo[i], hi[i]);
                }
            },
            &settings,
        );
        if out.value.is_finite() && best.as_ref().is_none_or(|(v, _)| out.value < *v) {
            best = Some((out.value, out.x));
        }
    }
    let (_, logp) = best.ok_or(Error::NotPositiveDefinite("GP Gram matrix at every start"))?;
    GpThermal::with_hyper(x, y, unpack(&logp, fixed_noise), Some(mean))
}
