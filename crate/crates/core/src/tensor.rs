//! Symmetric tensors built from occ-tables and their CP decompositions.
//!
//! An occ tensor is indexed by positions into an `index_set`; the entry at
//! `(i_1, .., i_w)` is a count over the distinct indices of the tuple, so
//! diagonal entries carry real data. Two decompositions are provided:
//! [`jennrich`] for order three and [`bruteforce_cp`] for any order.

use std::collections::HashMap;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::occ_engine::{OccError, OccTable};
use crate::rng::rng_from_seed;

const MAX_DENSE: usize = 1 << 26;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TensorError {
    #[error("factors are linearly dependent")]
    RankDeficient,
    #[error("decomposition does not reproduce the tensor")]
    ReconstructionMismatch,
    #[error("slice rank {rank} exceeds the bound {bound}")]
    RankExceedsBound { rank: usize, bound: usize },
    #[error("no multiset of binary factors reproduces the tensor")]
    NoDecomposition,
    #[error("enumeration exceeded {0} nodes")]
    EnumerationBudgetExceeded(u64),
    #[error("expected order {expected}, got {got}")]
    Order { expected: usize, got: usize },
    #[error("tensor with {0} entries is too large")]
    TooLarge(u128),
    #[error("index set has {0} positions, at most 64 are supported")]
    TooManyPositions(usize),
    #[error(transparent)]
    Table(#[from] OccError),
}

#[derive(Debug, Clone, PartialEq)]
enum Store {
    /// Row-major entries over `index_set^order`.
    Dense(Vec<f64>),
    /// Nonzero values keyed by sorted distinct positions, `1..=order` long.
    Sets(HashMap<Vec<usize>, f64>),
}

/// An order-`w` tensor over `index_set^w`. Occ tensors are stored as set
/// functions of the distinct positions of a tuple; explicit data is dense.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTensor {
    order: usize,
    index_set: Vec<usize>,
    store: Store,
}

fn dense_len(dim: usize, order: usize) -> Result<usize, TensorError> {
    let len = (dim as u128).pow(order as u32);
    if len > MAX_DENSE as u128 {
        return Err(TensorError::TooLarge(len));
    }
    Ok(len as usize)
}

fn canonical(pos: &[usize]) -> Vec<usize> {
    let mut key = pos.to_vec();
    key.sort_unstable();
    key.dedup();
    key
}

impl SymmetricTensor {
    pub fn zeros(order: usize, index_set: Vec<usize>) -> Self {
        SymmetricTensor {
            order,
            index_set,
            store: Store::Sets(HashMap::new()),
        }
    }

    /// Wraps row-major data of length `index_set.len()^order`.
    pub fn from_dense(order: usize, index_set: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        let len = dense_len(index_set.len(), order)?;
        assert_eq!(data.len(), len, "data length must be dim^order");
        Ok(SymmetricTensor {
            order,
            index_set,
            store: Store::Dense(data),
        })
    }

    /// The tensor whose entry at a tuple is `f` of the tuple's sorted
    /// distinct positions.
    pub fn from_set_function<E>(
        order: usize,
        index_set: Vec<usize>,
        mut f: impl FnMut(&[usize]) -> Result<f64, E>,
    ) -> Result<Self, TensorError>
    where
        TensorError: From<E>,
    {
        let d = index_set.len();
        let mut map = HashMap::new();
        for size in 1..=order.min(d) {
            for s in (0..d).combinations(size) {
                let v = f(&s)?;
                if v != 0.0 {
                    map.insert(s, v);
                }
            }
        }
        Ok(SymmetricTensor {
            order,
            index_set,
            store: Store::Sets(map),
        })
    }

    /// `Σ_r weights[r] · factors[r]^{⊗order}` for binary factors.
    pub fn from_factors(
        order: usize,
        index_set: Vec<usize>,
        factors: &[Vec<bool>],
        weights: &[u64],
    ) -> Result<Self, TensorError> {
        let f = |s: &[usize]| -> Result<f64, TensorError> {
            Ok(factors
                .iter()
                .zip(weights)
                .filter(|(z, _)| s.iter().all(|&p| z[p]))
                .map(|(_, &w)| w as f64)
                .sum())
        };
        SymmetricTensor::from_set_function(order, index_set, f)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.index_set.len()
    }

    pub fn index_set(&self) -> &[usize] {
        &self.index_set
    }

    fn flat(&self, pos: &[usize]) -> usize {
        pos.iter().fold(0, |acc, &p| acc * self.dim() + p)
    }

    /// The entry at a tuple of positions into `index_set`.
    pub fn entry(&self, pos: &[usize]) -> f64 {
        assert_eq!(pos.len(), self.order, "tuple length must equal the order");
        match &self.store {
            Store::Dense(data) => data[self.flat(pos)],
            Store::Sets(map) => *map.get(&canonical(pos)).unwrap_or(&0.0),
        }
    }

    /// Overwrites one entry. A set-function tensor changes at every
    /// permutation of the tuple's distinct positions.
    pub fn set(&mut self, pos: &[usize], v: f64) {
        assert_eq!(pos.len(), self.order, "tuple length must equal the order");
        let i = self.flat(pos);
        match &mut self.store {
            Store::Dense(data) => data[i] = v,
            Store::Sets(map) => {
                map.insert(canonical(pos), v);
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.store {
            Store::Dense(data) => data.iter().all(|&v| v == 0.0),
            Store::Sets(map) => map.values().all(|&v| v == 0.0),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        match &self.store {
            Store::Sets(_) => true,
            Store::Dense(_) => {
                let mut tuple = vec![0usize; self.order];
                (0..self.entry_count()).all(|flat| {
                    unflatten(flat, self.dim(), &mut tuple);
                    let mut sorted = tuple.clone();
                    sorted.sort_unstable();
                    self.entry(&tuple) == self.entry(&sorted)
                })
            }
        }
    }

    /// Number of entries, `dim^order`, saturating.
    pub fn entry_count(&self) -> usize {
        (self.dim() as u128).pow(self.order as u32).min(usize::MAX as u128) as usize
    }

    /// Largest entrywise difference. Set-function tensors are compared per
    /// position set, anything else tuple by tuple.
    pub fn max_abs_diff(&self, other: &SymmetricTensor) -> f64 {
        assert_eq!((self.order, self.dim()), (other.order, other.dim()), "shapes must agree");
        if let (Store::Sets(a), Store::Sets(b)) = (&self.store, &other.store) {
            return a
                .iter()
                .map(|(k, v)| (v - b.get(k).unwrap_or(&0.0)).abs())
                .chain(b.iter().map(|(k, v)| (v - a.get(k).unwrap_or(&0.0)).abs()))
                .fold(0.0, f64::max);
        }
        let mut tuple = vec![0usize; self.order];
        (0..self.entry_count()).fold(0.0, |m, flat| {
            unflatten(flat, self.dim(), &mut tuple);
            m.max((self.entry(&tuple) - other.entry(&tuple)).abs())
        })
    }

    /// `Σ_k v_k A[.., .., k]` for an order-3 tensor.
    fn slice(&self, v: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |i, j| (0..d).map(|k| v[k] * self.entry(&[i, j, k])).sum())
    }

    /// `Σ A[i, j, k] x_i x_j x_k` for an order-3 tensor.
    fn contract3(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    acc += self.entry(&[i, j, k]) * x[i] * x[j] * x[k];
                }
            }
        }
        acc
    }
}

fn unflatten(mut flat: usize, dim: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % dim;
        flat /= dim;
    }
}

/// The order-3 tensor `A^F` over `index_set`: the pattern bit of index `i`
/// is 0 when `i` is in `flip` and 1 otherwise.
pub fn build_occ_tensor_order3(
    table: &OccTable,
    flip: &[usize],
    index_set: &[usize],
) -> Result<SymmetricTensor, TensorError> {
    let f = |s: &[usize]| -> Result<f64, OccError> {
        let c: Vec<usize> = s.iter().map(|&p| index_set[p]).collect();
        let a: Vec<bool> = c.iter().map(|i| !flip.contains(i)).collect();
        Ok(table.try_get(&c, &a)? as f64)
    };
    SymmetricTensor::from_set_function(3, index_set.to_vec(), f)
}

/// The order-`w` all-ones-pattern occ tensor over `index_set`.
pub fn build_occ_tensor_orderw(
    table: &OccTable,
    w: usize,
    index_set: &[usize],
) -> Result<SymmetricTensor, TensorError> {
    let f = |s: &[usize]| -> Result<f64, OccError> {
        let c: Vec<usize> = s.iter().map(|&p| index_set[p]).collect();
        Ok(table.try_get(&c, &vec![true; c.len()])? as f64)
    };
    SymmetricTensor::from_set_function(w, index_set.to_vec(), f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CpMethod {
    Jennrich,
    Bruteforce,
}

/// Distinct binary factors over the index set with positive multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct CpResult {
    pub factors: Vec<Vec<bool>>,
    pub weights: Vec<u64>,
    pub method: CpMethod,
}

impl CpResult {
    pub fn total_weight(&self) -> u64 {
        self.weights.iter().sum()
    }

    pub fn reconstruct(&self, order: usize, index_set: Vec<usize>) -> Result<SymmetricTensor, TensorError> {
        SymmetricTensor::from_factors(order, index_set, &self.factors, &self.weights)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JennrichOptions {
    /// Relative cutoff for the numerical rank of the first slice.
    pub tau: f64,
    /// Entries of a normalized eigenvector at or below this are zero.
    pub threshold: f64,
    /// Minimum relative separation of generalized eigenvalues.
    pub gap: f64,
    pub seed: u64,
}

impl Default for JennrichOptions {
    fn default() -> Self {
        JennrichOptions {
            tau: 1e-8,
            threshold: 0.002,
            gap: 1e-6,
            seed: 0,
        }
    }
}

enum Attempt {
    Done(Result<CpResult, TensorError>),
    Degenerate,
}

/// Jennrich's algorithm on an order-3 tensor whose factors are binary.
/// `r_max` bounds the number of distinct factors.
pub fn jennrich(t: &SymmetricTensor, r_max: usize, opts: &JennrichOptions) -> Result<CpResult, TensorError> {
    if t.order() != 3 {
        return Err(TensorError::Order {
            expected: 3,
            got: t.order(),
        });
    }
    let mut rng = rng_from_seed(opts.seed);
    let d = t.dim();
    if d == 0 || t.is_zero() {
        return Ok(CpResult {
            factors: vec![],
            weights: vec![],
            method: CpMethod::Jennrich,
        });
    }
    for _ in 0..2 {
        let a = unit_vector(&mut rng, d);
        let b = unit_vector(&mut rng, d);
        match jennrich_attempt(t, r_max, opts, &a, &b) {
            Attempt::Done(r) => return r,
            Attempt::Degenerate => continue,
        }
    }
    Err(TensorError::RankDeficient)
}

fn unit_vector(rng: &mut crate::rng::Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn jennrich_attempt(t: &SymmetricTensor, r_max: usize, opts: &JennrichOptions, a: &[f64], b: &[f64]) -> Attempt {
    let d = t.dim();
    let t1 = t.slice(a);
    let t2 = t.slice(b);
    let eig = SymmetricEigen::new(t1.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if top == 0.0 {
        return Attempt::Degenerate;
    }
    let keep: Vec<usize> = (0..d).filter(|&i| eig.eigenvalues[i].abs() > opts.tau * top).collect();
    let rank = keep.len();
    if rank > r_max {
        return Attempt::Done(Err(TensorError::RankExceedsBound { rank, bound: r_max }));
    }
    let u = DMatrix::from_fn(d, rank, |i, j| eig.eigenvectors[(i, keep[j])]);
    let m1 = u.transpose() * &t1 * &u;
    let m2 = u.transpose() * &t2 * &u;
    let sv = m2.singular_values();
    let smax = sv.max();
    if smax == 0.0 || sv.min() <= opts.tau * smax {
        return Attempt::Degenerate;
    }
    let Some(m2inv) = m2.try_inverse() else {
        return Attempt::Degenerate;
    };
    let m = &m1 * m2inv;
    let ev = m.clone().complex_eigenvalues();
    let scale = ev.iter().fold(0.0f64, |s, z| s.max(z.norm())).max(1e-300);
    if ev.iter().any(|z| z.im.abs() > 1e-8 * scale) {
        return Attempt::Done(Err(TensorError::RankDeficient));
    }
    let mut lambdas: Vec<f64> = ev.iter().map(|z| z.re).collect();
    lambdas.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    if lambdas.windows(2).any(|w| (w[1] - w[0]).abs() < opts.gap * scale) {
        return Attempt::Degenerate;
    }
    let mut factors: Vec<Vec<bool>> = Vec::with_capacity(rank);
    for &lam in &lambdas {
        let shifted = &m - DMatrix::<f64>::identity(rank, rank) * lam;
        let svd = shifted.svd(false, true);
        let vt = svd.v_t.expect("requested right singular vectors");
        let idx = svd.singular_values.argmin().0;
        let w = vt.row(idx).transpose();
        let z: DVector<f64> = &u * w;
        let (pivot, _) = z
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, v)| if v.abs() > bv { (i, v.abs()) } else { (bi, bv) });
        let top = z[pivot];
        let z = z / top;
        let mut bits = vec![false; d];
        for (i, &e) in z.iter().enumerate() {
            if e.abs() > opts.threshold {
                if (e - 1.0).abs() > 1e-4 {
                    return Attempt::Done(Err(TensorError::RankDeficient));
                }
                bits[i] = true;
            }
        }
        factors.push(bits);
    }
    factors.sort();
    factors.dedup();
    Attempt::Done(solve_weights(t, factors))
}

fn solve_weights(t: &SymmetricTensor, factors: Vec<Vec<bool>>) -> Result<CpResult, TensorError> {
    let r = factors.len();
    let xs: Vec<Vec<f64>> = factors
        .iter()
        .map(|z| z.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
        .collect();
    let g = DMatrix::from_fn(r, r, |i, j| {
        let ip: f64 = xs[i].iter().zip(&xs[j]).map(|(x, y)| x * y).sum();
        ip.powi(3)
    });
    let h = DVector::from_iterator(r, xs.iter().map(|x| t.contract3(x)));
    let sol = g.lu().solve(&h).ok_or(TensorError::RankDeficient)?;
    let mut weights = Vec::with_capacity(r);
    for &lam in sol.iter() {
        let rounded = lam.round();
        if (lam - rounded).abs() > 1e-4 * lam.abs().max(1.0) || rounded < 1.0 {
            return Err(TensorError::ReconstructionMismatch);
        }
        weights.push(rounded as u64);
    }
    let out = CpResult {
        factors,
        weights,
        method: CpMethod::Jennrich,
    };
    let back = out.reconstruct(3, t.index_set().to_vec())?;
    if back.max_abs_diff(t) > 1e-6 {
        return Err(TensorError::ReconstructionMismatch);
    }
    Ok(out)
}

pub const BRUTEFORCE_BUDGET: u64 = 100_000_000;

/// Exhaustive search for at most `ell` binary factors (with multiplicity)
/// whose rank-one sum equals `t`. Factors with empty support are implicit:
/// the returned total weight may be below `ell`.
pub fn bruteforce_cp(t: &SymmetricTensor, ell: usize) -> Result<CpResult, TensorError> {
    bruteforce_cp_with_budget(t, ell, BRUTEFORCE_BUDGET)
}

pub fn bruteforce_cp_with_budget(t: &SymmetricTensor, ell: usize, budget: u64) -> Result<CpResult, TensorError> {
    let d = t.dim();
    let w = t.order();
    if d > 64 {
        return Err(TensorError::TooManyPositions(d));
    }
    let mut residual: HashMap<u64, i64> = HashMap::new();
    for size in 1..=w.min(d) {
        for s in (0..d).combinations(size) {
            let mut pos = s.clone();
            pos.resize(w, s[size - 1]);
            let v = t.entry(&pos);
            if v != v.round() || v < 0.0 {
                return Err(TensorError::NoDecomposition);
            }
            if v > 0.0 {
                residual.insert(mask_of(&s), v as i64);
            }
        }
    }
    let candidates = candidate_supports(d, w, &residual);
    let mut search = Search {
        w,
        ell,
        candidates: &candidates,
        residual,
        chosen: Vec::new(),
        nodes: 0,
        budget,
        tensor: t,
    };
    match search.dfs(usize::MAX, 0)? {
        true => {
            let mut factors: Vec<Vec<bool>> = Vec::new();
            let mut weights: Vec<u64> = Vec::new();
            for &c in &search.chosen {
                let bits: Vec<bool> = (0..d).map(|p| candidates[c] >> p & 1 == 1).collect();
                match factors.last() {
                    Some(last) if *last == bits => *weights.last_mut().expect("paired") += 1,
                    _ => {
                        factors.push(bits);
                        weights.push(1);
                    }
                }
            }
            Ok(CpResult {
                factors,
                weights,
                method: CpMethod::Bruteforce,
            })
        }
        false => Err(TensorError::NoDecomposition),
    }
}

fn mask_of(s: &[usize]) -> u64 {
    s.iter().fold(0u64, |m, &p| m | 1 << p)
}

/// Masks `Z` with a positive residual on every subset of size at most `w`,
/// ordered by lowest position, then largest first.
fn candidate_supports(d: usize, w: usize, residual: &HashMap<u64, i64>) -> Vec<u64> {
    let mut all: Vec<u64> = Vec::new();
    let mut level: Vec<u64> = (0..d).map(|p| 1u64 << p).filter(|m| residual.contains_key(m)).collect();
    let mut size = 1;
    while !level.is_empty() {
        all.extend(&level);
        let current: std::collections::HashSet<u64> = level.iter().copied().collect();
        let mut next: Vec<u64> = Vec::new();
        for &m in &level {
            let top = 63 - m.leading_zeros() as usize;
            for p in top + 1..d {
                let z = m | 1 << p;
                let subsets_ok = (0..d)
                    .filter(|&q| z >> q & 1 == 1)
                    .all(|q| current.contains(&(z & !(1u64 << q))));
                if subsets_ok && (size + 1 > w || residual.contains_key(&z)) {
                    next.push(z);
                }
            }
        }
        level = next;
        size += 1;
    }
    all.sort_by_key(|&m| (m.trailing_zeros(), std::cmp::Reverse(m.count_ones()), m));
    all
}

struct Search<'a> {
    w: usize,
    ell: usize,
    candidates: &'a [u64],
    residual: HashMap<u64, i64>,
    chosen: Vec<usize>,
    nodes: u64,
    budget: u64,
    tensor: &'a SymmetricTensor,
}

impl Search<'_> {
    fn subsets(&self, z: u64) -> Vec<u64> {
        let bits: Vec<u64> = (0..64).filter(|&p| z >> p & 1 == 1).map(|p| 1u64 << p).collect();
        let mut out = Vec::new();
        for size in 1..=self.w.min(bits.len()) {
            for c in bits.iter().combinations(size) {
                out.push(c.into_iter().fold(0, |m, b| m | b));
            }
        }
        out
    }

    fn apply(&mut self, z: u64, delta: i64) -> bool {
        let mut ok = true;
        for s in self.subsets(z) {
            let e = self.residual.entry(s).or_insert(0);
            *e += delta;
            if *e < 0 {
                ok = false;
            } else if *e == 0 {
                self.residual.remove(&s);
            }
        }
        ok
    }

    fn pivot(&self) -> Option<usize> {
        self.residual
            .keys()
            .filter(|m| m.count_ones() == 1)
            .map(|m| m.trailing_zeros() as usize)
            .min()
    }

    fn dfs(&mut self, last_pivot: usize, from: usize) -> Result<bool, TensorError> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(TensorError::EnumerationBudgetExceeded(self.budget));
        }
        let Some(pivot) = self.pivot() else {
            return Ok(self.residual.is_empty() && self.leaf_matches());
        };
        if self.chosen.len() >= self.ell {
            return Ok(false);
        }
        let start = if pivot == last_pivot { from } else { 0 };
        for ci in start..self.candidates.len() {
            let z = self.candidates[ci];
            if z.trailing_zeros() as usize != pivot {
                continue;
            }
            let ok = self.apply(z, -1);
            if ok {
                self.chosen.push(ci);
                if self.dfs(pivot, ci)? {
                    return Ok(true);
                }
                self.chosen.pop();
            }
            self.apply(z, 1);
        }
        Ok(false)
    }

    fn leaf_matches(&self) -> bool {
        let d = self.tensor.dim();
        let factors: Vec<Vec<bool>> = self
            .chosen
            .iter()
            .map(|&c| (0..d).map(|p| self.candidates[c] >> p & 1 == 1).collect())
            .collect();
        let ones = vec![1u64; factors.len()];
        match SymmetricTensor::from_factors(self.w, self.tensor.index_set().to_vec(), &factors, &ones) {
            Ok(back) => back.max_abs_diff(self.tensor) == 0.0,
            Err(_) => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ground_truth::{exact_occ_table, occ_bruteforce};
    use crate::model::SupportMatrix;

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    fn sorted_pairs(r: &CpResult) -> Vec<(Vec<bool>, u64)> {
        let mut v: Vec<_> = r.factors.iter().cloned().zip(r.weights.iter().copied()).collect();
        v.sort();
        v
    }

    #[test]
    fn single_basis_vector() {
        let t = SymmetricTensor::from_factors(3, vec![0, 1, 2], &[bits("100")], &[1]).unwrap();
        let r = jennrich(&t, 1, &JennrichOptions::default()).unwrap();
        assert_eq!(sorted_pairs(&r), vec![(bits("100"), 1)]);
    }

    #[test]
    fn two_overlapping_factors() {
        let t = SymmetricTensor::from_factors(3, vec![0, 1, 2], &[bits("110"), bits("011")], &[1, 1]).unwrap();
        let r = jennrich(&t, 2, &JennrichOptions::default()).unwrap();
        assert_eq!(sorted_pairs(&r), vec![(bits("011"), 1), (bits("110"), 1)]);
    }

    #[test]
    fn dependent_factors_are_rejected() {
        let t = SymmetricTensor::from_factors(3, vec![0, 1, 2], &[bits("100"), bits("010"), bits("110")], &[1, 1, 1])
            .unwrap();
        for seed in 0..20 {
            let opts = JennrichOptions { seed, ..Default::default() };
            assert_eq!(jennrich(&t, 3, &opts), Err(TensorError::RankDeficient), "seed {seed}");
        }
    }

    #[test]
    fn weights_are_multiplicities() {
        let t = SymmetricTensor::from_factors(3, (0..4).collect(), &[bits("1100"), bits("0111")], &[2, 1]).unwrap();
        let r = jennrich(&t, 3, &JennrichOptions::default()).unwrap();
        assert_eq!(sorted_pairs(&r), vec![(bits("0111"), 1), (bits("1100"), 2)]);
    }

    #[test]
    fn rank_bound_is_enforced() {
        let t = SymmetricTensor::from_factors(3, vec![0, 1], &[bits("10"), bits("01")], &[1, 1]).unwrap();
        assert_eq!(
            jennrich(&t, 1, &JennrichOptions::default()),
            Err(TensorError::RankExceedsBound { rank: 2, bound: 1 })
        );
    }

    #[test]
    fn order3_from_table_matches_bruteforce() {
        let m = SupportMatrix::from_strings(&["1100", "0110", "1110"]);
        let table = exact_occ_table(&m, 3);
        let idx = vec![0, 1, 2, 3];
        let t = build_occ_tensor_order3(&table, &[], &idx).unwrap();
        for p in (0..4).combinations_with_replacement(3) {
            let c: Vec<usize> = p.iter().map(|&q| idx[q]).collect();
            let mut set = c.clone();
            set.dedup();
            let want = occ_bruteforce(&m, &set, &vec![true; set.len()]) as f64;
            assert_eq!(t.entry(&p), want);
        }
        assert!(t.is_symmetric());
    }

    #[test]
    fn full_flip_on_zero_instance() {
        let m = SupportMatrix::from_strings(&["000", "000"]);
        let table = exact_occ_table(&m, 3);
        let t = build_occ_tensor_order3(&table, &[0, 1, 2], &[0, 1, 2]).unwrap();
        for p in (0..3).combinations_with_replacement(3) {
            assert_eq!(t.entry(&p), 2.0);
        }
    }

    #[test]
    fn single_component_order4() {
        let m = SupportMatrix::from_strings(&["10110"]);
        let table = exact_occ_table(&m, 4);
        let t = build_occ_tensor_orderw(&table, 4, &[0, 1, 2, 3, 4]).unwrap();
        let z = bits("10110");
        let want = SymmetricTensor::from_factors(4, (0..5).collect(), &[z], &[1]).unwrap();
        assert_eq!(t, want);
    }

    #[test]
    fn bruteforce_order5() {
        let t = SymmetricTensor::from_factors(5, vec![0, 1, 2], &[bits("110"), bits("011")], &[2, 1]).unwrap();
        let r = bruteforce_cp(&t, 3).unwrap();
        assert_eq!(sorted_pairs(&r), vec![(bits("011"), 1), (bits("110"), 2)]);
    }

    #[test]
    fn bruteforce_single_component() {
        let t = SymmetricTensor::from_factors(3, (0..5).collect(), &[bits("01101")], &[1]).unwrap();
        let r = bruteforce_cp(&t, 1).unwrap();
        assert_eq!(sorted_pairs(&r), vec![(bits("01101"), 1)]);
    }

    #[test]
    fn bruteforce_rejects_corruption() {
        let mut t = SymmetricTensor::from_factors(3, vec![0, 1, 2], &[bits("110"), bits("011")], &[1, 1]).unwrap();
        t.set(&[0, 1, 2], 1.0);
        assert_eq!(bruteforce_cp(&t, 2), Err(TensorError::NoDecomposition));
    }

    #[test]
    fn bruteforce_budget() {
        let t = SymmetricTensor::from_factors(3, (0..6).collect(), &[bits("111111"); 1], &[4]).unwrap();
        assert_eq!(
            bruteforce_cp_with_budget(&t, 4, 3),
            Err(TensorError::EnumerationBudgetExceeded(3))
        );
    }

    #[test]
    fn bruteforce_agrees_with_jennrich() {
        let t = SymmetricTensor::from_factors(3, (0..5).collect(), &[bits("11000"), bits("01110"), bits("00011")], &[1, 1, 1])
            .unwrap();
        let a = jennrich(&t, 3, &JennrichOptions::default()).unwrap();
        let b = bruteforce_cp(&t, 3).unwrap();
        assert_eq!(sorted_pairs(&a), sorted_pairs(&b));
    }
}
