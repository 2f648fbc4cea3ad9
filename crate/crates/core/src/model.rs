//! Mixture instances, support matrices and synthetic generators.
//!
//! Indices are 0-based throughout the crate.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::rng::rng_from_seed;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("infeasible spec: {0}")]
    Infeasible(String),
    #[error("invalid instance: {0}")]
    Invalid(String),
}

/// A sparse vector as sorted `(index, value)` pairs with nonzero values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct SparseVector(pub Vec<(usize, f64)>);

impl SparseVector {
    pub fn support(&self) -> Vec<usize> {
        self.0.iter().map(|&(i, _)| i).collect()
    }

    pub fn nnz(&self) -> usize {
        self.0.len()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|&(_, v)| v * v).sum()
    }

    pub fn dot_dense(&self, x: &[f64]) -> f64 {
        self.0.iter().map(|&(i, v)| v * x[i]).sum()
    }
}

/// The hidden vectors together with the noise parameters of both models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureInstance {
    pub n: usize,
    pub ell: usize,
    pub k: usize,
    pub delta: f64,
    pub eta: f64,
    pub sigma: f64,
    pub vectors: Vec<SparseVector>,
}

impl MixtureInstance {
    /// Checks the structural invariants. `mlr` adds the `delta` lower bound
    /// on nonzero magnitudes.
    pub fn validate(&self, mlr: bool) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::Invalid(m));
        if self.ell == 0 || self.vectors.len() != self.ell {
            return bad(format!("{} vectors for ell = {}", self.vectors.len(), self.ell));
        }
        if !(0.0..0.5).contains(&self.eta) {
            return bad(format!("eta = {} outside [0, 0.5)", self.eta));
        }
        if self.sigma < 0.0 || !self.sigma.is_finite() {
            return bad(format!("sigma = {}", self.sigma));
        }
        for (j, v) in self.vectors.iter().enumerate() {
            if v.nnz() > self.k {
                return bad(format!("vector {j} has {} > k nonzeros", v.nnz()));
            }
            if v.0.windows(2).any(|w| w[0].0 >= w[1].0) {
                return bad(format!("vector {j} indices not strictly increasing"));
            }
            for &(i, x) in &v.0 {
                if i >= self.n || x == 0.0 || !x.is_finite() {
                    return bad(format!("vector {j} entry ({i}, {x})"));
                }
                if mlr && x.abs() < self.delta {
                    return bad(format!("vector {j} entry {x} below delta"));
                }
            }
        }
        Ok(())
    }

    /// Dense copy of component `j`.
    pub fn dense(&self, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for &(i, v) in &self.vectors[j].0 {
            out[i] = v;
        }
        out
    }

    pub fn max_norm_sq(&self) -> f64 {
        self.vectors.iter().map(|v| v.norm_sq()).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// `n x ell` binary matrix whose columns are the supports.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SupportMatrix {
    pub n: usize,
    pub columns: Vec<Vec<bool>>,
}

impl SupportMatrix {
    pub fn from_supports(n: usize, supports: &[Vec<usize>]) -> Self {
        let columns = supports
            .iter()
            .map(|s| {
                let mut c = vec![false; n];
                for &i in s {
                    c[i] = true;
                }
                c
            })
            .collect();
        SupportMatrix { n, columns }
    }

    /// Parses columns written as strings of `0` and `1`.
    pub fn from_strings(cols: &[&str]) -> Self {
        let columns: Vec<Vec<bool>> = cols
            .iter()
            .map(|s| s.bytes().map(|b| b == b'1').collect())
            .collect();
        let n = columns.first().map_or(0, |c| c.len());
        SupportMatrix { n, columns }
    }

    pub fn ell(&self) -> usize {
        self.columns.len()
    }

    pub fn bit(&self, i: usize, j: usize) -> bool {
        self.columns[j][i]
    }

    /// Distinct columns in first-seen order.
    pub fn dedup(&self) -> SupportMatrix {
        let mut seen = BTreeSet::new();
        let columns = self
            .columns
            .iter()
            .filter(|c| seen.insert((*c).clone()))
            .cloned()
            .collect();
        SupportMatrix { n: self.n, columns }
    }

    pub fn has_duplicates(&self) -> bool {
        self.dedup().ell() != self.ell()
    }

    /// Keeps only the listed rows, in order.
    pub fn restrict_rows(&self, rows: &[usize]) -> SupportMatrix {
        SupportMatrix {
            n: rows.len(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
        }
    }

    pub fn column_strings(&self) -> Vec<String> {
        self.columns.iter().map(|c| bits_to_string(c)).collect()
    }
}

pub fn bits_to_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

pub fn string_to_bits(s: &str) -> Vec<bool> {
    s.bytes().map(|b| b == b'1').collect()
}

pub fn support_matrix(inst: &MixtureInstance) -> SupportMatrix {
    let supports: Vec<Vec<usize>> = inst.vectors.iter().map(|v| v.support()).collect();
    SupportMatrix::from_supports(inst.n, &supports)
}

/// Rows with at least one nonzero entry, ascending.
pub fn union_support(m: &SupportMatrix) -> Vec<usize> {
    (0..m.n).filter(|&i| m.columns.iter().any(|c| c[i])).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum SupportMode {
    /// Independent uniform `k`-subsets of `[n]`.
    RandomDisjointish,
    /// `ell = 3`: two `k`-subsets meeting in exactly 2 indices and their union.
    UnionDesign,
    /// Supports given verbatim.
    Explicit(Vec<Vec<usize>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub n: usize,
    pub ell: usize,
    pub k: usize,
    pub support_mode: SupportMode,
    /// Nonzero magnitudes are uniform on `[delta, 1]` with a random sign.
    pub delta: f64,
    pub eta: f64,
    pub sigma: f64,
    /// Resample until all supports are distinct (random mode only).
    pub distinct: bool,
    /// Draw magnitudes only, no random sign.
    pub positive: bool,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(n: usize, ell: usize, k: usize, support_mode: SupportMode, seed: u64) -> Self {
        GeneratorSpec {
            n,
            ell,
            k,
            support_mode,
            delta: 0.1,
            eta: 0.0,
            sigma: 0.0,
            distinct: false,
            positive: false,
            seed,
        }
    }

    pub fn with_noise(mut self, delta: f64, eta: f64, sigma: f64) -> Self {
        self.delta = delta;
        self.eta = eta;
        self.sigma = sigma;
        self
    }
}

/// Builds an instance from a generator spec.
///
/// In union-design mode `k` is the size of each base support, so the third
/// vector has `2k - 2` nonzeros and the returned instance carries
/// `k = 2k - 2` to keep the sparsity invariant.
pub fn generate_instance(spec: &GeneratorSpec) -> Result<MixtureInstance, ModelError> {
    let inf = |m: &str| Err(ModelError::Infeasible(m.to_string()));
    if spec.ell == 0 {
        return inf("ell must be positive");
    }
    if !(spec.delta > 0.0 && spec.delta <= 1.0) {
        return inf("delta must lie in (0, 1]");
    }
    if !(0.0..0.5).contains(&spec.eta) || spec.sigma < 0.0 {
        return inf("eta must lie in [0, 0.5) and sigma must be nonnegative");
    }
    let mut rng = rng_from_seed(spec.seed);
    let n = spec.n;
    let (supports, k) = match &spec.support_mode {
        SupportMode::RandomDisjointish => {
            if spec.k > n {
                return inf("k > n");
            }
            let distinct_possible = binomial_at_least(n, spec.k, spec.ell);
            if spec.distinct && !distinct_possible {
                return inf("fewer than ell distinct k-subsets exist");
            }
            let mut out: Vec<Vec<usize>> = Vec::with_capacity(spec.ell);
            while out.len() < spec.ell {
                let mut s = sample(&mut rng, n, spec.k).into_vec();
                s.sort_unstable();
                if spec.distinct && out.contains(&s) {
                    continue;
                }
                out.push(s);
            }
            (out, spec.k)
        }
        SupportMode::UnionDesign => {
            if spec.ell != 3 {
                return inf("union design needs ell = 3");
            }
            if spec.k < 2 || 2 * spec.k - 2 > n {
                return inf("union design needs 2 <= k and 2k - 2 <= n");
            }
            let k = spec.k;
            let picked = sample(&mut rng, n, 2 * k - 2).into_vec();
            let (common, rest) = picked.split_at(2);
            let (only1, only2) = rest.split_at(k - 2);
            let mut s1: Vec<usize> = common.iter().chain(only1).copied().collect();
            let mut s2: Vec<usize> = common.iter().chain(only2).copied().collect();
            let mut s3 = picked.clone();
            s1.sort_unstable();
            s2.sort_unstable();
            s3.sort_unstable();
            (vec![s1, s2, s3], 2 * k - 2)
        }
        SupportMode::Explicit(sets) => {
            if sets.len() != spec.ell {
                return inf("explicit mode needs exactly ell supports");
            }
            let mut out = Vec::with_capacity(sets.len());
            for s in sets {
                let set: BTreeSet<usize> = s.iter().copied().collect();
                if set.len() > spec.k || set.iter().any(|&i| i >= n) {
                    return inf("explicit support too large or out of range");
                }
                out.push(set.into_iter().collect());
            }
            (out, spec.k)
        }
    };
    let vectors = supports
        .into_iter()
        .map(|s| {
            SparseVector(
                s.into_iter()
                    .map(|i| {
                        let mag = if spec.delta < 1.0 {
                            rng.random_range(spec.delta..=1.0)
                        } else {
                            1.0
                        };
                        let flip = rng.random::<bool>();
                        let sign = if flip && !spec.positive { -1.0 } else { 1.0 };
                        (i, sign * mag)
                    })
                    .collect(),
            )
        })
        .collect();
    let inst = MixtureInstance {
        n,
        ell: spec.ell,
        k,
        delta: spec.delta,
        eta: spec.eta,
        sigma: spec.sigma,
        vectors,
    };
    inst.validate(true)?;
    Ok(inst)
}

/// Whether `C(n, k) >= need`, without overflow.
fn binomial_at_least(n: usize, k: usize, need: usize) -> bool {
    let mut c: u128 = 1;
    for i in 0..k.min(n - k) {
        c = c * (n - i) as u128 / (i + 1) as u128;
        if c >= need as u128 {
            return true;
        }
    }
    c >= need as u128
}
