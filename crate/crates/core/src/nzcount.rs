//! Estimating `nzcount(x)`, the number of components with `<x, v> != 0`,
//! by repeating a query.

use serde::{Deserialize, Serialize};

use crate::oracle::{Model, OracleError, OracleHandle};

/// Error function, via `libm` (fdlibm rational approximations, accurate to
/// well below `1e-12`).
pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// `P(|W| <= a)` for `W ~ N(0, sigma^2)`.
pub fn phi1(a: f64, sigma: f64) -> f64 {
    assert!(sigma > 0.0, "phi1 needs sigma > 0");
    erf(a / (std::f64::consts::SQRT_2 * sigma))
}

/// `P(|W| <= a)` for `W ~ N(0, sigma^2 + gamma^2)`.
pub fn phi2(a: f64, sigma: f64, gamma: f64) -> f64 {
    let v = sigma * sigma + gamma * gamma;
    assert!(v > 0.0, "phi2 needs sigma or gamma positive");
    erf(a / (2.0 * v).sqrt())
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NzError {
    #[error("invalid nzcount parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("MLR nzcount needs a binary query")]
    NotBinary,
}

/// Parameters of the MLR estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NzParamsMlr {
    /// Acceptance half-width.
    pub a: f64,
    /// Standard deviation of the Gaussian query scaling.
    pub gamma: f64,
    /// Batch size.
    pub t: u64,
    pub phi1: f64,
    /// `phi2(a, sigma, gamma * delta)`, the worst-case acceptance of a
    /// component with nonzero inner product.
    pub phi2: f64,
}

impl NzParamsMlr {
    /// `a = sigma / 2` and `gamma = 2 sqrt(2) ell sigma / delta`.
    pub fn new(ell: usize, sigma: f64, delta: f64, t: u64) -> Result<Self, NzError> {
        let gamma = 2.0 * std::f64::consts::SQRT_2 * ell as f64 * sigma / delta;
        Self::custom(ell, sigma, delta, sigma / 2.0, gamma, t)
    }

    /// Arbitrary `(a, gamma)`. Rejected unless the bias of the estimate,
    /// at most `ell * phi2 / phi1`, stays below one half.
    pub fn custom(
        ell: usize,
        sigma: f64,
        delta: f64,
        a: f64,
        gamma: f64,
        t: u64,
    ) -> Result<Self, NzError> {
        let bad = |m: &str| Err(NzError::Params(m.to_string()));
        if !(sigma > 0.0) || !(a > 0.0) {
            return bad("sigma and a must be positive");
        }
        if !(gamma > 0.0) || !(delta > 0.0) || !gamma.is_finite() {
            return bad("gamma and delta must be positive");
        }
        if t == 0 {
            return bad("batch size must be positive");
        }
        let p1 = phi1(a, sigma);
        let p2 = phi2(a, sigma, gamma * delta);
        if 2.0 * ell as f64 * p2 >= p1 {
            return bad("2 ell phi2 >= phi1: estimate can round to the wrong count");
        }
        Ok(NzParamsMlr {
            a,
            gamma,
            t,
            phi1: p1,
            phi2: p2,
        })
    }

    pub fn with_batch(mut self, t: u64) -> Self {
        self.t = t;
        self
    }
}

fn round_clamp(x: f64, ell: usize) -> usize {
    let z = x.round();
    z.clamp(0.0, ell as f64) as usize
}

/// MLC estimator: `T` rounds of querying `x` and `-x`.
pub fn nzcount_mlc(h: &mut OracleHandle, x: &[f64], t: u64) -> Result<usize, NzError> {
    if h.model() != Model::Mlc {
        return Err(OracleError::ModelMismatch {
            expected: Model::Mlc,
            actual: h.model(),
        }
        .into());
    }
    let ips = h.inner_products(x)?;
    Ok(nzcount_mlc_ips(h, &ips, t))
}

/// MLC estimator for a sparse query.
pub fn nzcount_mlc_sparse(h: &mut OracleHandle, x: &[(usize, f64)], t: u64) -> Result<usize, NzError> {
    if h.model() != Model::Mlc {
        return Err(OracleError::ModelMismatch {
            expected: Model::Mlc,
            actual: h.model(),
        }
        .into());
    }
    let ips = h.inner_products_sparse(x);
    Ok(nzcount_mlc_ips(h, &ips, t))
}

fn nzcount_mlc_ips(h: &mut OracleHandle, ips: &[f64], t: u64) -> usize {
    assert!(t >= 1, "batch size must be positive");
    let ell = h.ell();
    let neg: Vec<f64> = ips.iter().map(|v| -v).collect();
    let sum: i64 = match h.sampling() {
        crate::oracle::Sampling::Exact => (0..t)
            .map(|_| h.mlc_respond(ips) as i64 + h.mlc_respond(&neg) as i64)
            .sum(),
        crate::oracle::Sampling::Aggregated => {
            let py = h.mlc_count_plus(ips, t) as i64;
            let pz = h.mlc_count_plus(&neg, t) as i64;
            2 * (py + pz) - 2 * t as i64
        }
    };
    let eta = h.instance().eta;
    let z = ell as f64 * sum as f64 / (2.0 * t as f64 * (1.0 - 2.0 * eta));
    ell - round_clamp(z, ell)
}

/// MLR estimator for a binary query given as a dense 0/1 vector.
pub fn nzcount_mlr(h: &mut OracleHandle, x: &[f64], p: &NzParamsMlr) -> Result<usize, NzError> {
    if x.len() != h.n() {
        return Err(OracleError::Length {
            got: x.len(),
            n: h.n(),
        }
        .into());
    }
    if x.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(NzError::NotBinary);
    }
    let support: Vec<usize> = (0..x.len()).filter(|&i| x[i] == 1.0).collect();
    nzcount_mlr_support(h, &support, p)
}

/// MLR estimator for the binary query with the given support.
pub fn nzcount_mlr_support(
    h: &mut OracleHandle,
    support: &[usize],
    p: &NzParamsMlr,
) -> Result<usize, NzError> {
    if h.model() != Model::Mlr {
        return Err(OracleError::ModelMismatch {
            expected: Model::Mlr,
            actual: h.model(),
        }
        .into());
    }
    let ell = h.ell();
    let hits = h.mlr_count_accepted(support, p.gamma, p.a, p.t);
    let z = ell as f64 * hits as f64 / (p.t as f64 * p.phi1);
    Ok(ell - round_clamp(z, ell))
}

/// Number of components with nonzero inner product, from the instance.
pub fn nzcount_true(h: &OracleHandle, x: &[f64]) -> usize {
    h.inner_products(x)
        .expect("query length")
        .iter()
        .filter(|&&v| v != 0.0)
        .count()
}
