//! Simulated MLC and MLR query oracles with a query ledger.
//!
//! Randomness per call is consumed in a fixed order. MLC: the component
//! index (`random_range(0..ell)`), then one uniform `f64` compared against
//! `eta`. MLR: the component index, then one standard normal (ziggurat,
//! `rand_distr::StandardNormal`) scaled by `sigma`. Both draws happen on
//! every call, so the stream position depends only on the number of calls.
//!
//! [`Sampling::Aggregated`] replaces `T` identical calls by a single
//! binomial draw of the number of `+1` (MLC) or accepted (MLR) responses.
//! The responses of `T` calls are i.i.d., so the count has exactly the same
//! distribution; the ledger still advances by `T`.

use rand::Rng as _;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::model::MixtureInstance;
use crate::rng::{derive_seed, rng_from_seed, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Mlc,
    Mlr,
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Model::Mlc => "mlc",
            Model::Mlr => "mlr",
        })
    }
}

impl std::str::FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "mlc" => Ok(Model::Mlc),
            "mlr" => Ok(Model::Mlr),
            _ => Err(format!("unknown model {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    /// Every query is simulated individually.
    #[default]
    Exact,
    /// Repeated identical queries are drawn as one binomial count.
    Aggregated,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OracleError {
    #[error("oracle answers {actual} queries, {expected} requested")]
    ModelMismatch { expected: Model, actual: Model },
    #[error("query has length {got}, expected {n}")]
    Length { got: usize, n: usize },
    #[error("instance rejected: {0}")]
    Instance(#[from] crate::model::ModelError),
}

/// A hidden instance behind a noisy query interface.
#[derive(Debug, Clone)]
pub struct OracleHandle {
    instance: MixtureInstance,
    model: Model,
    sampling: Sampling,
    rng: Rng,
    design: Rng,
    ledger: u64,
    dense: Vec<Vec<f64>>,
}

impl OracleHandle {
    /// The response stream and the design stream (used by query
    /// constructions such as the Gaussian scaling in MLR nzcount) are split
    /// off `seed`.
    pub fn new(instance: MixtureInstance, model: Model, seed: u64) -> Result<Self, OracleError> {
        instance.validate(model == Model::Mlr)?;
        let dense = (0..instance.ell).map(|j| instance.dense(j)).collect();
        Ok(OracleHandle {
            instance,
            model,
            sampling: Sampling::Exact,
            rng: rng_from_seed(derive_seed(seed, 0)),
            design: rng_from_seed(derive_seed(seed, 1)),
            ledger: 0,
            dense,
        })
    }

    pub fn with_sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn sampling(&self) -> Sampling {
        self.sampling
    }

    pub fn instance(&self) -> &MixtureInstance {
        &self.instance
    }

    pub fn ell(&self) -> usize {
        self.instance.ell
    }

    pub fn n(&self) -> usize {
        self.instance.n
    }

    /// Total number of oracle calls so far.
    pub fn ledger(&self) -> u64 {
        self.ledger
    }

    fn expect(&self, model: Model) -> Result<(), OracleError> {
        if self.model != model {
            return Err(OracleError::ModelMismatch {
                expected: model,
                actual: self.model,
            });
        }
        Ok(())
    }

    /// `<x, v^j>` for every component of a dense query.
    pub fn inner_products(&self, x: &[f64]) -> Result<Vec<f64>, OracleError> {
        if x.len() != self.instance.n {
            return Err(OracleError::Length {
                got: x.len(),
                n: self.instance.n,
            });
        }
        Ok(self.instance.vectors.iter().map(|v| v.dot_dense(x)).collect())
    }

    /// `<x, v^j>` for every component of a sparse query.
    pub fn inner_products_sparse(&self, x: &[(usize, f64)]) -> Vec<f64> {
        self.dense
            .iter()
            .map(|v| x.iter().map(|&(i, xi)| xi * v[i]).sum())
            .collect()
    }

    /// One MLC call given the inner products of the query with every
    /// component.
    pub(crate) fn mlc_respond(&mut self, ips: &[f64]) -> i8 {
        self.ledger += 1;
        let c = self.rng.random_range(0..ips.len());
        let flip = self.rng.random::<f64>() < self.instance.eta;
        let s: i8 = if ips[c] >= 0.0 { 1 } else { -1 };
        if flip {
            -s
        } else {
            s
        }
    }

    /// One MLR call given the inner products of the query with every
    /// component.
    pub(crate) fn mlr_respond(&mut self, ips: &[f64]) -> f64 {
        self.ledger += 1;
        let c = self.rng.random_range(0..ips.len());
        let z: f64 = self.rng.sample(StandardNormal);
        ips[c] + self.instance.sigma * z
    }

    /// `sign(<x, v>) (1 - 2Z)` with `v` uniform over components and
    /// `Z ~ Ber(eta)`; `sign(0) = +1`.
    pub fn mlc_query(&mut self, x: &[f64]) -> Result<i8, OracleError> {
        self.expect(Model::Mlc)?;
        let ips = self.inner_products(x)?;
        Ok(self.mlc_respond(&ips))
    }

    /// `<x, v> + Z` with `v` uniform over components and `Z ~ N(0, sigma^2)`.
    pub fn mlr_query(&mut self, x: &[f64]) -> Result<f64, OracleError> {
        self.expect(Model::Mlr)?;
        let ips = self.inner_products(x)?;
        Ok(self.mlr_respond(&ips))
    }

    /// Number of `+1` labels among `t` MLC calls with the same query.
    pub(crate) fn mlc_count_plus(&mut self, ips: &[f64], t: u64) -> u64 {
        match self.sampling {
            Sampling::Exact => (0..t).filter(|_| self.mlc_respond(ips) > 0).count() as u64,
            Sampling::Aggregated => {
                let eta = self.instance.eta;
                let p = ips
                    .iter()
                    .map(|&ip| if ip >= 0.0 { 1.0 - eta } else { eta })
                    .sum::<f64>()
                    / ips.len() as f64;
                self.ledger += t;
                binomial(&mut self.rng, t, p)
            }
        }
    }

    /// Number of responses in `[-a, a]` among `t` MLR calls, each with a
    /// fresh query `g` drawn i.i.d. `N(0, gamma^2)` on `support` and zero
    /// elsewhere.
    pub(crate) fn mlr_count_accepted(
        &mut self,
        support: &[usize],
        gamma: f64,
        a: f64,
        t: u64,
    ) -> u64 {
        match self.sampling {
            Sampling::Exact => {
                let mut g: Vec<(usize, f64)> = support.iter().map(|&i| (i, 0.0)).collect();
                let mut hits = 0;
                for _ in 0..t {
                    for e in g.iter_mut() {
                        let z: f64 = self.design.sample(StandardNormal);
                        e.1 = gamma * z;
                    }
                    let ips = self.inner_products_sparse(&g);
                    if self.mlr_respond(&ips).abs() <= a {
                        hits += 1;
                    }
                }
                hits
            }
            Sampling::Aggregated => {
                // Given the component, the response is N(0, sigma^2 + gamma^2 |x . v|^2).
                let s2 = self.instance.sigma * self.instance.sigma;
                let p = self
                    .dense
                    .iter()
                    .map(|v| {
                        let w: f64 = support.iter().map(|&i| v[i] * v[i]).sum();
                        let var = s2 + gamma * gamma * w;
                        if var == 0.0 {
                            1.0
                        } else {
                            libm::erf(a / (2.0 * var).sqrt())
                        }
                    })
                    .sum::<f64>()
                    / self.dense.len() as f64;
                self.ledger += t;
                binomial(&mut self.rng, t, p)
            }
        }
    }
}

fn binomial(rng: &mut Rng, t: u64, p: f64) -> u64 {
    let p = p.clamp(0.0, 1.0);
    Binomial::new(t, p).expect("valid binomial").sample(rng)
}

/// A family of MLR query distributions: for each binary row `b`, the
/// query `g_gamma(b)` with i.i.d. `N(0, gamma^2)` entries on `supp(b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScaledQueries {
    pub gamma: f64,
    pub rows: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    pub snr: f64,
    /// `8 ell^2 max ||v||^2 / delta^2`, the value at `gamma = 2 sqrt(2) ell sigma / delta`.
    pub bound: f64,
}

/// Signal-to-noise ratio of the query distributions actually used:
/// the maximum over rows of the minimum over components of
/// `E <x, v^j>^2 / sigma^2 = gamma^2 sum_{i in b} (v^j_i)^2 / sigma^2`.
pub fn snr_report(h: &OracleHandle, q: &GaussianScaledQueries) -> Result<SnrReport, OracleError> {
    h.expect(Model::Mlr)?;
    let inst = h.instance();
    let s2 = inst.sigma * inst.sigma;
    let mut snr: f64 = 0.0;
    for row in &q.rows {
        let worst = h
            .dense
            .iter()
            .map(|v| row.iter().map(|&i| v[i] * v[i]).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let e = q.gamma * q.gamma * worst;
        let r = if e == 0.0 { 0.0 } else { e / s2 };
        snr = snr.max(r);
    }
    let ell = inst.ell as f64;
    let bound = 8.0 * ell * ell * inst.max_norm_sq() / (inst.delta * inst.delta);
    Ok(SnrReport { snr, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SparseVector;

    fn inst(vectors: Vec<Vec<(usize, f64)>>, eta: f64, sigma: f64) -> MixtureInstance {
        let ell = vectors.len();
        MixtureInstance {
            n: 4,
            ell,
            k: 4,
            delta: 0.5,
            eta,
            sigma,
            vectors: vectors.into_iter().map(SparseVector).collect(),
        }
    }

    #[test]
    fn noiseless_mlc_signs() {
        let i = inst(vec![vec![(0, 1.0)], vec![(0, 0.5), (1, 0.5)]], 0.0, 0.0);
        let mut h = OracleHandle::new(i, Model::Mlc, 1).unwrap();
        for _ in 0..100 {
            assert_eq!(h.mlc_query(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 1);
            assert_eq!(h.mlc_query(&[0.0; 4]).unwrap(), 1);
        }
        assert_eq!(h.ledger(), 200);
    }

    #[test]
    fn model_mismatch_and_length() {
        let i = inst(vec![vec![(0, 1.0)]], 0.0, 0.0);
        let mut h = OracleHandle::new(i, Model::Mlc, 1).unwrap();
        assert!(matches!(
            h.mlr_query(&[0.0; 4]),
            Err(OracleError::ModelMismatch { .. })
        ));
        assert!(matches!(h.mlc_query(&[0.0; 3]), Err(OracleError::Length { .. })));
        assert_eq!(h.ledger(), 0);
    }

    #[test]
    fn mlc_flip_mean() {
        let i = inst(vec![vec![(0, 1.0)]], 0.1, 0.0);
        let mut h = OracleHandle::new(i, Model::Mlc, 5).unwrap();
        let x = [-1.0, 0.0, 0.0, 0.0];
        let n = 100_000;
        let s: i64 = (0..n).map(|_| h.mlc_query(&x).unwrap() as i64).sum();
        let mean = s as f64 / n as f64;
        assert!((mean + 0.8).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn mlr_noiseless_single() {
        let i = inst(vec![vec![(1, 0.75), (3, -0.5)]], 0.0, 0.0);
        let mut h = OracleHandle::new(i, Model::Mlr, 2).unwrap();
        assert_eq!(h.mlr_query(&[0.0, 2.0, 0.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn mlr_mixture_variance() {
        let i = inst(vec![vec![(0, 1.0)], vec![(0, -0.5)]], 0.0, 1.0);
        let mut h = OracleHandle::new(i, Model::Mlr, 9).unwrap();
        let x = [2.0, 0.0, 0.0, 0.0];
        // Means 2 and -1 with equal weight: mean 0.5, variance 1 + 2.25.
        let n = 100_000;
        let ys: Vec<f64> = (0..n).map(|_| h.mlr_query(&x).unwrap()).collect();
        let var = ys.iter().map(|y| (y - 0.5).powi(2)).sum::<f64>() / n as f64;
        assert!((var / 3.25 - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn stream_reproducible() {
        let i = inst(vec![vec![(0, 1.0)], vec![(1, -1.0)]], 0.2, 0.0);
        let x = [1.0, 1.0, 0.0, 0.0];
        let run = |seed| {
            let mut h = OracleHandle::new(i.clone(), Model::Mlc, seed).unwrap();
            (0..64).map(|_| h.mlc_query(&x).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn snr_single_component() {
        let i = inst(vec![vec![(0, 1.0), (2, 0.5)]], 0.0, 2.0);
        let h = OracleHandle::new(i, Model::Mlr, 0).unwrap();
        let q = GaussianScaledQueries {
            gamma: 3.0,
            rows: vec![vec![0, 2]],
        };
        let r = snr_report(&h, &q).unwrap();
        assert!((r.snr - 9.0 * 1.25 / 4.0).abs() < 1e-12);
        assert!((r.bound - 8.0 * 1.25 / 0.25).abs() < 1e-12);
    }
}
