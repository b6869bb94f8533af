//! Gaussian belief over logistic parameters, Thompson draws, and the
//! Jaakkola-Jordan variational update for a single Bernoulli observation.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ensure_finite, Error, Result};

/// Number of posterior / variational-parameter alternations per observation.
pub const VARIATIONAL_PASSES: usize = 3;

const JITTER_LADDER: [f64; 6] = [0.0, 1e-12, 1e-10, 1e-9, 1e-8, 1e-6];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BeliefDoc", into = "BeliefDoc")]
pub struct Belief {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct BeliefDoc {
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
}

impl TryFrom<BeliefDoc> for Belief {
    type Error = Error;
    fn try_from(doc: BeliefDoc) -> Result<Self> {
        let n = doc.mu.len();
        if doc.sigma.len() != n || doc.sigma.iter().any(|r| r.len() != n) {
            return Err(Error::Length {
                what: "belief covariance",
                expected: n,
                actual: doc.sigma.len(),
            });
        }
        let sigma = DMatrix::from_fn(n, n, |i, j| doc.sigma[i][j]);
        Belief::new(DVector::from_vec(doc.mu), sigma)
    }
}

impl From<Belief> for BeliefDoc {
    fn from(b: Belief) -> Self {
        let n = b.dim();
        BeliefDoc {
            mu: b.mu.iter().copied().collect(),
            sigma: (0..n)
                .map(|i| (0..n).map(|j| b.sigma[(i, j)]).collect())
                .collect(),
        }
    }
}

/// `(sigma(xi) - 1/2) / (2 xi)`, i.e. `|l(xi)|`, with its limit 1/8 at zero.
pub fn jj_lambda(xi: f64) -> f64 {
    let xi = xi.abs();
    if xi < 1e-6 {
        // Series: 1/8 - xi^2/96 + ...
        return 0.125 - xi * xi / 96.0;
    }
    // sigma(x) - 1/2 = tanh(x/2)/2, which avoids cancellation near zero.
    (0.5 * xi).tanh() / (4.0 * xi)
}

impl Belief {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let n = mu.len();
        if n == 0 {
            return Err(Error::Config("belief needs at least one dimension".into()));
        }
        if sigma.nrows() != n || sigma.ncols() != n {
            return Err(Error::Length {
                what: "belief covariance",
                expected: n,
                actual: sigma.nrows(),
            });
        }
        ensure_finite(mu.as_slice(), "belief mean")?;
        ensure_finite(sigma.as_slice(), "belief covariance")?;
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        if Cholesky::new(sigma.clone()).is_none() {
            return Err(Error::NotPositiveDefinite("belief covariance"));
        }
        Ok(Self { mu, sigma })
    }

    pub fn isotropic(mu: &[f64], var: f64) -> Result<Self> {
        let n = mu.len();
        Self::new(
            DVector::from_column_slice(mu),
            DMatrix::from_diagonal_element(n, n, var),
        )
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.sigma.clone()).eigenvalues.min()
    }

    /// Short hex digest of the mean and covariance bits.
    pub fn digest(&self) -> String {
        digest_f64(self.mu.iter().chain(self.sigma.iter()))
    }
}

pub fn digest_f64<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

/// Draws `mu + L e` with `Sigma = L L^T`, escalating diagonal jitter if needed.
pub fn sample_params<R: Rng + ?Sized>(rng: &mut R, belief: &Belief) -> Result<Vec<f64>> {
    let n = belief.dim();
    let mut chol = None;
    for &j in &JITTER_LADDER {
        let m = &belief.sigma + DMatrix::from_diagonal_element(n, n, j);
        if let Some(c) = Cholesky::new(m) {
            chol = Some(c);
            break;
        }
    }
    let chol = chol.ok_or(Error::NotPositiveDefinite("belief covariance"))?;
    let e = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok((&belief.mu + chol.l() * e).iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateOutcome {
    pub belief: Belief,
    /// Final variational parameter.
    pub xi: f64,
    /// Jitter was added to restore positive definiteness.
    pub repaired: bool,
}

/// Posterior after observing `z` at augmented factors `w`.
///
/// The prior is held fixed while the variational parameter and the Gaussian
/// posterior alternate; the precision gains `2|l(xi)| w w^T`, applied through
/// the Sherman-Morrison identity.
pub fn variational_update(belief: &Belief, w: &[f64], z: bool) -> Result<UpdateOutcome> {
    variational_update_with(belief, w, z, VARIATIONAL_PASSES)
}

/// [`variational_update`] with an explicit number of alternations.
pub fn variational_update_with(
    belief: &Belief,
    w: &[f64],
    z: bool,
    passes: usize,
) -> Result<UpdateOutcome> {
    let n = belief.dim();
    if w.len() != n {
        return Err(Error::Length {
            what: "observation",
            expected: n,
            actual: w.len(),
        });
    }
    ensure_finite(w, "observation")?;
    let w = DVector::from_column_slice(w);
    let sw = &belief.sigma * &w;
    let s = w.dot(&sw).max(0.0);
    let wmu = w.dot(&belief.mu);
    let target = if z { 0.5 } else { -0.5 };

    let mut xi = (s + wmu * wmu).sqrt();
    let mut mu = belief.mu.clone();
    let mut sigma = belief.sigma.clone();
    for _ in 0..passes.max(1) {
        let c = 2.0 * jj_lambda(xi);
        let denom = 1.0 + c * s;
        sigma = &belief.sigma - (&sw * sw.transpose()) * (c / denom);
        mu = &belief.mu + &sw * ((target - c * wmu) / denom);
        let s_post = w.dot(&(&sigma * &w)).max(0.0);
        let m_post = w.dot(&mu);
        xi = (s_post + m_post * m_post).sqrt();
    }
    sigma = (&sigma + sigma.transpose()) * 0.5;

    for &j in &JITTER_LADDER {
        let m = &sigma + DMatrix::from_diagonal_element(n, n, j);
        if Cholesky::new(m.clone()).is_some()
            && SymmetricEigen::new(m.clone()).eigenvalues.min() > 1e-12
        {
            let belief = Belief { mu, sigma: m };
            return Ok(UpdateOutcome {
                belief,
                xi,
                repaired: j > 0.0,
            });
        }
    }
    Err(Error::NotPositiveDefinite("posterior covariance"))
}
