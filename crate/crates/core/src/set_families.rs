//! Randomized robust union-free (RUFF) and cover-free (CFF) families, their
//! exact verifiers, and the query matrices built on them.
//!
//! RUFF families store their sets explicitly. CFF families can be far too
//! large for that (tens of millions of elements), so membership is a
//! stateless hash: `p in H_j` iff `hash3(seed, j, p) < q * 2^64`, which is
//! an i.i.d. Bernoulli(q) incidence.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

use crate::oracle::Model;
use crate::rng::{hash3, rng_from_seed, unit_open0};

/// Multipliers of the family sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for FamilyConstants {
    fn default() -> Self {
        FamilyConstants {
            c1: 4.0,
            c2: 2.0,
            c3: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FamilyKind {
    Ruff { d: usize, t: usize, alpha: f64 },
    Cff { r: usize, t: usize },
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FamilyError {
    #[error("invalid family parameters: {0}")]
    Params(String),
    #[error("verification exceeded its budget of {0} search nodes")]
    TooLarge(u64),
    #[error("no verified family after {0} seeds")]
    NotVerified(usize),
}

#[derive(Debug, Clone)]
enum Storage {
    Explicit(Vec<Vec<usize>>),
    Hashed { seed: u64, threshold: u64 },
}

/// `n` subsets `H_0 .. H_{n-1}` of the alphabet `[m]`.
#[derive(Debug, Clone)]
pub struct SetFamily {
    pub n: usize,
    pub m: usize,
    pub kind: FamilyKind,
    pub seed: u64,
    pub verified: bool,
    storage: Storage,
    rows: OnceLock<Vec<Vec<usize>>>,
}

fn log2n(n: usize) -> f64 {
    (n as f64).log2().max(1.0)
}

/// `(m, d)` of a RUFF of size `n`: `m = ceil(c1 t^2 log2 n / alpha^2)` and
/// `d = ceil(c2 t log2 n / alpha)`, with `log2 n` floored at 1.
pub fn ruff_dims(n: usize, t: usize, alpha: f64, c: &FamilyConstants) -> (usize, usize) {
    let l = log2n(n);
    let t = t as f64;
    let m = (c.c1 * t * t * l / (alpha * alpha)).ceil() as usize;
    let d = (c.c2 * t * l / alpha).ceil() as usize;
    (m.max(1), d.min(m).max(1))
}

/// `m = ceil(c3 t^(r+1) log2 n)` of a CFF of size `n`.
pub fn cff_dims(n: usize, r: usize, t: usize, c: &FamilyConstants) -> usize {
    let m = c.c3 * (t as f64).powi(r as i32 + 1) * log2n(n);
    (m.ceil() as usize).max(1)
}

pub fn build_ruff(n: usize, t: usize, alpha: f64, seed: u64) -> Result<SetFamily, FamilyError> {
    build_ruff_with(n, t, alpha, seed, &FamilyConstants::default())
}

/// Every set is a uniform `d`-subset of `[m]`.
pub fn build_ruff_with(
    n: usize,
    t: usize,
    alpha: f64,
    seed: u64,
    c: &FamilyConstants,
) -> Result<SetFamily, FamilyError> {
    if n == 0 || t == 0 || !(alpha > 0.0 && alpha <= 1.0) {
        return Err(FamilyError::Params(format!("n={n}, t={t}, alpha={alpha}")));
    }
    let (m, d) = ruff_dims(n, t, alpha, c);
    let mut rng = rng_from_seed(seed);
    let sets = (0..n)
        .map(|_| {
            let mut s = sample(&mut rng, m, d).into_vec();
            s.sort_unstable();
            s
        })
        .collect();
    Ok(SetFamily {
        n,
        m,
        kind: FamilyKind::Ruff { d, t, alpha },
        seed,
        verified: false,
        storage: Storage::Explicit(sets),
        rows: OnceLock::new(),
    })
}

pub fn build_cff(n: usize, r: usize, t: usize, seed: u64) -> Result<SetFamily, FamilyError> {
    build_cff_with(n, r, t, seed, &FamilyConstants::default())
}

/// Each element joins each set independently with probability `1/(t+1)`.
pub fn build_cff_with(
    n: usize,
    r: usize,
    t: usize,
    seed: u64,
    c: &FamilyConstants,
) -> Result<SetFamily, FamilyError> {
    if n == 0 || r == 0 || t == 0 {
        return Err(FamilyError::Params(format!("n={n}, r={r}, t={t}")));
    }
    let m = cff_dims(n, r, t, c);
    let q = 1.0 / (t as f64 + 1.0);
    Ok(SetFamily {
        n,
        m,
        kind: FamilyKind::Cff { r, t },
        seed,
        verified: false,
        storage: Storage::Hashed {
            seed,
            threshold: (q * 2f64.powi(64)) as u64,
        },
        rows: OnceLock::new(),
    })
}

impl SetFamily {
    /// A family with explicitly given sets.
    pub fn from_sets(m: usize, kind: FamilyKind, sets: Vec<Vec<usize>>) -> SetFamily {
        let sets = sets
            .into_iter()
            .map(|mut s| {
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect::<Vec<_>>();
        SetFamily {
            n: sets.len(),
            m,
            kind,
            seed: 0,
            verified: false,
            storage: Storage::Explicit(sets),
            rows: OnceLock::new(),
        }
    }

    /// Whether element `p` belongs to `H_j`.
    pub fn contains(&self, j: usize, p: usize) -> bool {
        match &self.storage {
            Storage::Explicit(sets) => sets[j].binary_search(&p).is_ok(),
            Storage::Hashed { seed, threshold } => hash3(*seed, j as u64, p as u64) < *threshold,
        }
    }

    /// `H_j` as a sorted list. Costs `m` hash evaluations for hashed storage.
    pub fn set(&self, j: usize) -> Vec<usize> {
        match &self.storage {
            Storage::Explicit(sets) => sets[j].clone(),
            Storage::Hashed { .. } => (0..self.m).filter(|&p| self.contains(j, p)).collect(),
        }
    }

    pub fn sets(&self) -> Vec<Vec<usize>> {
        (0..self.n).map(|j| self.set(j)).collect()
    }

    /// `{ j : p in H_j }`, the support of row `p` of the incidence matrix.
    pub fn row(&self, p: usize) -> Vec<usize> {
        match &self.storage {
            Storage::Explicit(_) => self.rows()[p].clone(),
            Storage::Hashed { .. } => (0..self.n).filter(|&j| self.contains(j, p)).collect(),
        }
    }

    fn rows(&self) -> &Vec<Vec<usize>> {
        self.rows.get_or_init(|| {
            let mut rows = vec![Vec::new(); self.m];
            if let Storage::Explicit(sets) = &self.storage {
                for (j, s) in sets.iter().enumerate() {
                    for &p in s {
                        rows[p].push(j);
                    }
                }
            }
            rows
        })
    }

    /// Smallest row whose restriction to `universe` equals each target
    /// subset, scanning rows in order. `targets` are bitmasks over positions
    /// in `universe`; missing ones map to `None`.
    pub fn first_rows_with_patterns(&self, universe: &[usize], targets: &[u64]) -> Vec<Option<usize>> {
        assert!(universe.len() <= 64, "universe larger than 64 indices");
        let mut found: std::collections::HashMap<u64, Option<usize>> =
            targets.iter().map(|&t| (t, None)).collect();
        let mut missing = found.len();
        let mut p = 0;
        while missing > 0 && p < self.m {
            let mut mask = 0u64;
            for (b, &j) in universe.iter().enumerate() {
                if self.contains(j, p) {
                    mask |= 1 << b;
                }
            }
            if let Some(slot) = found.get_mut(&mask) {
                if slot.is_none() {
                    *slot = Some(p);
                    missing -= 1;
                }
            }
            p += 1;
        }
        targets.iter().map(|t| found[t]).collect()
    }

    pub fn to_json(&self) -> String {
        let (kind, params) = match self.kind {
            FamilyKind::Ruff { d, t, alpha } => (
                "ruff",
                serde_json::json!({ "d": d, "t": t, "alpha": alpha }),
            ),
            FamilyKind::Cff { r, t } => ("cff", serde_json::json!({ "r": r, "t": t })),
        };
        serde_json::json!({
            "n": self.n,
            "m": self.m,
            "kind": kind,
            "params": params,
            "sets": self.sets(),
        })
        .to_string()
    }

    pub fn from_json(s: &str) -> Result<SetFamily, FamilyError> {
        #[derive(Deserialize)]
        struct Raw {
            m: usize,
            kind: String,
            params: serde_json::Value,
            sets: Vec<Vec<usize>>,
        }
        let raw: Raw = serde_json::from_str(s).map_err(|e| FamilyError::Params(e.to_string()))?;
        let get = |k: &str| raw.params.get(k).and_then(|v| v.as_f64());
        let kind = match raw.kind.as_str() {
            "ruff" => FamilyKind::Ruff {
                d: get("d").unwrap_or(0.0) as usize,
                t: get("t").unwrap_or(0.0) as usize,
                alpha: get("alpha").unwrap_or(0.0),
            },
            "cff" => FamilyKind::Cff {
                r: get("r").unwrap_or(0.0) as usize,
                t: get("t").unwrap_or(0.0) as usize,
            },
            k => return Err(FamilyError::Params(format!("unknown kind {k}"))),
        };
        if raw.sets.iter().flatten().any(|&p| p >= raw.m) {
            return Err(FamilyError::Params("element outside the alphabet".into()));
        }
        Ok(SetFamily::from_sets(raw.m, kind, raw.sets))
    }
}

/// Search-node budget of the verifiers.
pub const VERIFY_BUDGET: u64 = 20_000_000;

type Bits = Vec<u64>;

fn bits_of(positions: impl Iterator<Item = usize>, len: usize) -> Bits {
    let mut b = vec![0u64; len.div_ceil(64)];
    for p in positions {
        b[p / 64] |= 1 << (p % 64);
    }
    b
}

fn popcount(b: &[u64]) -> usize {
    b.iter().map(|w| w.count_ones() as usize).sum()
}

fn and_count(a: &[u64], b: &[u64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x & y).count_ones() as usize).sum()
}

/// Largest number of elements of the base set covered by `depth` of the
/// candidate bitsets, searched with the bound "current plus the best
/// remaining single overlaps". Stops early once `goal` is reached.
struct MaxCover<'a> {
    cands: &'a [Bits],
    overlap: Vec<usize>,
    goal: usize,
    nodes: u64,
}

impl MaxCover<'_> {
    fn reach(&mut self, covered: &Bits, start: usize, left: usize) -> Result<bool, FamilyError> {
        self.nodes += 1;
        if self.nodes > VERIFY_BUDGET {
            return Err(FamilyError::TooLarge(VERIFY_BUDGET));
        }
        let have = popcount(covered);
        if have >= self.goal {
            return Ok(true);
        }
        if left == 0 {
            return Ok(false);
        }
        // Candidates are sorted by decreasing overlap with the base set.
        let bound: usize = have + self.overlap[start..].iter().take(left).sum::<usize>();
        if bound < self.goal {
            return Ok(false);
        }
        for i in start..self.cands.len() {
            let bound: usize = have + self.overlap[i..].iter().take(left).sum::<usize>();
            if bound < self.goal {
                break;
            }
            let next: Bits = covered.iter().zip(&self.cands[i]).map(|(a, b)| a | b).collect();
            if self.reach(&next, i + 1, left - 1)? {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// Exact check of `|H_j \ U_{i in T} H_i| > (1 - alpha) d` for all `j` and
/// all `T` of size `min(t, n - 1)` avoiding `j`.
pub fn verify_ruff(f: &SetFamily, d: usize, t: usize, alpha: f64) -> Result<bool, FamilyError> {
    let sets = f.sets();
    let t = t.min(f.n.saturating_sub(1));
    for (j, hj) in sets.iter().enumerate() {
        if hj.len() < d {
            return Ok(false);
        }
        let len = hj.len();
        // Smallest covered count that violates the condition.
        let limit = (1.0 - alpha) * d as f64;
        let Some(goal) = (0..=len).find(|&c| ((len - c) as f64) <= limit) else {
            continue;
        };
        if goal == 0 {
            return Ok(false);
        }
        let mut cands: Vec<Bits> = sets
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != j)
            .map(|(_, hi)| {
                bits_of(
                    hj.iter().enumerate().filter(|(_, p)| hi.binary_search(p).is_ok()).map(|(k, _)| k),
                    len,
                )
            })
            .collect();
        cands.sort_by_key(|b| std::cmp::Reverse(popcount(b)));
        let overlap = cands.iter().map(|b| popcount(b)).collect();
        let mut mc = MaxCover {
            cands: &cands,
            overlap,
            goal,
            nodes: 0,
        };
        if mc.reach(&vec![0; len.div_ceil(64)], 0, t)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether `left` sets among `cands[..]` (bitsets over the target) can cover
/// every bit of `need`.
fn coverable(need: &Bits, cands: &[Bits], left: usize, nodes: &mut u64) -> Result<bool, FamilyError> {
    *nodes += 1;
    if *nodes > VERIFY_BUDGET {
        return Err(FamilyError::TooLarge(VERIFY_BUDGET));
    }
    let rest = popcount(need);
    if rest == 0 {
        return Ok(true);
    }
    if left == 0 {
        return Ok(false);
    }
    let best = cands.iter().map(|c| and_count(c, need)).max().unwrap_or(0);
    if best * left < rest {
        return Ok(false);
    }
    // Branch on the uncovered element with the fewest covering sets.
    let mut pick = None;
    let mut fewest = usize::MAX;
    for (w, &word) in need.iter().enumerate() {
        let mut bits = word;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            let cnt = cands.iter().filter(|c| c[w] >> b & 1 == 1).count();
            if cnt < fewest {
                fewest = cnt;
                pick = Some((w, b));
            }
        }
    }
    let (w, b) = pick.expect("need is nonempty");
    for c in cands.iter().filter(|c| c[w] >> b & 1 == 1) {
        let next: Bits = need.iter().zip(c).map(|(x, y)| x & !y).collect();
        if coverable(&next, cands, left - 1, nodes)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Exact check that `(intersection of T1) \ (union of T2)` is nonempty for
/// all disjoint `T1`, `T2` with `|T1| = r` and `|T2| = min(t, n - r)`.
pub fn verify_cff(f: &SetFamily, r: usize, t: usize) -> Result<bool, FamilyError> {
    use itertools::Itertools;
    if r == 0 || r > f.n {
        return Err(FamilyError::Params(format!("r = {r} for n = {}", f.n)));
    }
    let sets = f.sets();
    let t = t.min(f.n - r);
    let mut nodes = 0u64;
    for t1 in (0..f.n).combinations(r) {
        let mut inter = sets[t1[0]].clone();
        for &i in &t1[1..] {
            inter.retain(|p| sets[i].binary_search(p).is_ok());
        }
        if inter.is_empty() {
            return Ok(false);
        }
        let len = inter.len();
        let cands: Vec<Bits> = (0..f.n)
            .filter(|i| !t1.contains(i))
            .map(|i| {
                bits_of(
                    inter.iter().enumerate().filter(|(_, p)| sets[i].binary_search(p).is_ok()).map(|(k, _)| k),
                    len,
                )
            })
            .collect();
        let need = bits_of(0..len, len);
        if coverable(&need, &cands, t, &mut nodes)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Reseeds `seed, seed + 1, ...` until the RUFF verifier passes.
pub fn build_ruff_verified(
    n: usize,
    t: usize,
    alpha: f64,
    seed: u64,
    c: &FamilyConstants,
    attempts: usize,
) -> Result<SetFamily, FamilyError> {
    for a in 0..attempts {
        let mut f = build_ruff_with(n, t, alpha, seed.wrapping_add(a as u64), c)?;
        let FamilyKind::Ruff { d, .. } = f.kind else { unreachable!() };
        if verify_ruff(&f, d, t, alpha)? {
            f.verified = true;
            return Ok(f);
        }
    }
    Err(FamilyError::NotVerified(attempts))
}

/// Reseeds `seed, seed + 1, ...` until the CFF verifier passes.
pub fn build_cff_verified(
    n: usize,
    r: usize,
    t: usize,
    seed: u64,
    c: &FamilyConstants,
    attempts: usize,
) -> Result<SetFamily, FamilyError> {
    for a in 0..attempts {
        let mut f = build_cff_with(n, r, t, seed.wrapping_add(a as u64), c)?;
        if verify_cff(&f, r, t)? {
            f.verified = true;
            return Ok(f);
        }
    }
    Err(FamilyError::NotVerified(attempts))
}

/// The query matrices on a family: `ell + 1` matrices with i.i.d.
/// uniform `(0, 1]` values on the incidence pattern (MLC), or the single
/// 0/1 incidence matrix (MLR). Values are hashed, never stored.
#[derive(Debug, Clone)]
pub struct QueryMatrixBundle {
    pub family: SetFamily,
    pub model: Model,
    pub count: usize,
    value_seed: u64,
}

pub fn to_query_bundle(f: SetFamily, model: Model, ell: usize, seed: u64) -> QueryMatrixBundle {
    let count = match model {
        Model::Mlc => ell + 1,
        Model::Mlr => 1,
    };
    QueryMatrixBundle {
        family: f,
        model,
        count,
        value_seed: seed,
    }
}

impl QueryMatrixBundle {
    /// Rows of each matrix.
    pub fn rows(&self) -> usize {
        self.family.m
    }

    /// Columns of each matrix.
    pub fn cols(&self) -> usize {
        self.family.n
    }

    fn value(&self, w: usize, p: usize, j: usize) -> f64 {
        match self.model {
            Model::Mlr => 1.0,
            Model::Mlc => unit_open0(hash3(
                self.value_seed ^ (w as u64).wrapping_mul(0xA24B_AED4_963E_E407),
                p as u64,
                j as u64,
            )),
        }
    }

    /// Entry `B^(w)[p, j]`.
    pub fn entry(&self, w: usize, p: usize, j: usize) -> f64 {
        assert!(w < self.count);
        if self.family.contains(j, p) {
            self.value(w, p, j)
        } else {
            0.0
        }
    }

    /// Nonzeros of row `p` of matrix `w`.
    pub fn row(&self, w: usize, p: usize) -> Vec<(usize, f64)> {
        assert!(w < self.count);
        self.family
            .row(p)
            .into_iter()
            .map(|j| (j, self.value(w, p, j)))
            .collect()
    }

    pub fn to_dense(&self, w: usize) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|p| (0..self.cols()).map(|j| self.entry(w, p, j)).collect())
            .collect()
    }
}
