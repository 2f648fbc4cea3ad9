//! The three support-recovery algorithms and an end-to-end driver.
//!
//! Every routine reads an [`OccTable`] and returns the ℓ supports as a
//! multiset; the order of the output carries no meaning.

use std::fmt;
use std::str::FromStr;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::model::{bits_to_string, string_to_bits};
use crate::occ_engine::{build_occ_table, OccError, OccParams, OccTable};
use crate::oracle::OracleHandle;
use crate::tensor::{
    bruteforce_cp, build_occ_tensor_order3, build_occ_tensor_orderw, jennrich, CpResult, JennrichOptions,
    TensorError,
};

/// Largest `|U'|` for which every flip set is tried.
pub const MAX_FLIP_UNIVERSE: usize = 24;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RecoveryError {
    #[error("no identifying pattern after recovering {found} of {ell} supports")]
    Stuck { found: usize, ell: usize },
    #[error("table update produced a negative count")]
    NegativeCount,
    #[error("no flip set yields an exact decomposition")]
    AllFlipsFailed,
    #[error("flip search over {0} indices is out of reach")]
    UniverseTooLarge(usize),
    #[error("decomposition carries weight {got}, more than {ell}")]
    Overweight { got: u64, ell: usize },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Table(#[from] OccError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    PIdentifiable,
    FlipIndependent,
    Kruskal,
}

/// Recovered supports, each of length `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredSupports {
    pub supports: Vec<Vec<bool>>,
    pub method: Method,
    pub queries_used: u64,
}

#[derive(Serialize, Deserialize)]
struct SupportsJson {
    method: Method,
    queries_used: u64,
    supports: Vec<String>,
}

impl RecoveredSupports {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&SupportsJson {
            method: self.method,
            queries_used: self.queries_used,
            supports: self.supports.iter().map(|s| bits_to_string(s)).collect(),
        })
        .expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let j: SupportsJson = serde_json::from_str(text)?;
        Ok(RecoveredSupports {
            supports: j.supports.iter().map(|s| string_to_bits(s)).collect(),
            method: j.method,
            queries_used: j.queries_used,
        })
    }
}

fn check_size(table: &OccTable, need: usize) -> Result<(), RecoveryError> {
    if table.s < need {
        return Err(OccError::Incomplete {
            s: table.s,
            asked: need,
        }
        .into());
    }
    Ok(())
}

/// Peels off one support group at a time using patterns on at most `p`
/// indices, then removes it from the table.
pub fn recover_p_identifiable(table: &OccTable, ell: usize, p: usize) -> Result<RecoveredSupports, RecoveryError> {
    if p == 0 {
        return Err(RecoveryError::Params("p must be positive".into()));
    }
    check_size(table, p + 1)?;
    let n = table.n;
    let u = table.universe().to_vec();
    let mut t = table.clone();
    let mut supports: Vec<Vec<bool>> = Vec::with_capacity(ell);
    'outer: while supports.len() < ell {
        if u.is_empty() {
            supports.resize(ell, vec![false; n]);
            break;
        }
        for size in 1..=p.min(u.len()) {
            for c in u.iter().copied().combinations(size) {
                for bits in 0..1u32 << size {
                    let a: Vec<bool> = (0..size).map(|b| bits >> (size - 1 - b) & 1 == 1).collect();
                    let w = t.try_get(&c, &a)?;
                    if w <= 0 {
                        continue;
                    }
                    let Some(support) = extend(&t, &u, &c, &a, w)? else {
                        continue;
                    };
                    if supports.len() as i64 + w > ell as i64 {
                        return Err(RecoveryError::NegativeCount);
                    }
                    t.subtract_support(&support, w);
                    if t.validate().is_err() {
                        return Err(RecoveryError::NegativeCount);
                    }
                    for _ in 0..w {
                        supports.push(support.clone());
                    }
                    continue 'outer;
                }
            }
        }
        return Err(RecoveryError::Stuck {
            found: supports.len(),
            ell,
        });
    }
    Ok(RecoveredSupports {
        supports,
        method: Method::PIdentifiable,
        queries_used: 0,
    })
}

/// The support singled out by `(c, a)` when every one-index extension
/// splits the `w` matching components all-or-nothing.
fn extend(t: &OccTable, u: &[usize], c: &[usize], a: &[bool], w: i64) -> Result<Option<Vec<bool>>, RecoveryError> {
    let mut support = vec![false; t.n];
    for (&i, &b) in c.iter().zip(a) {
        support[i] = b;
    }
    let mut cc = c.to_vec();
    let mut aa = a.to_vec();
    cc.push(0);
    aa.push(true);
    for &j in u {
        if c.contains(&j) {
            continue;
        }
        *cc.last_mut().expect("pushed") = j;
        let v = t.try_get(&cc, &aa)?;
        if v == w {
            support[j] = true;
        } else if v != 0 {
            return Ok(None);
        }
    }
    Ok(Some(support))
}

/// Expands a decomposition over `index_set` into `ell` supports of length
/// `n`. Weight missing from the decomposition belongs to components whose
/// flipped restriction is zero.
fn expand(cp: &CpResult, index_set: &[usize], flip: &[usize], n: usize, ell: usize) -> Result<Vec<Vec<bool>>, RecoveryError> {
    let total = cp.total_weight();
    if total > ell as u64 {
        return Err(RecoveryError::Overweight { got: total, ell });
    }
    let lift = |z: &[bool]| -> Vec<bool> {
        let mut s = vec![false; n];
        for (pos, &i) in index_set.iter().enumerate() {
            s[i] = z[pos] != flip.contains(&i);
        }
        s
    };
    let mut out = Vec::with_capacity(ell);
    for (z, &w) in cp.factors.iter().zip(&cp.weights) {
        let s = lift(z);
        out.extend(std::iter::repeat_n(s, w as usize));
    }
    let zero = vec![false; index_set.len()];
    out.resize(ell, lift(&zero));
    Ok(out)
}

/// The index set `U` plus the smallest index outside it, when one exists.
pub fn extended_universe(table: &OccTable) -> Vec<usize> {
    let mut u = table.universe().to_vec();
    if let Some(t) = (0..table.n).find(|i| u.binary_search(i).is_err()) {
        u.push(t);
        u.sort_unstable();
    }
    u
}

/// Tries flip sets `F` by increasing size, then lexicographically, and
/// decomposes the order-3 tensor `A^F` until one decomposition is exact.
pub fn recover_flip_independent(
    table: &OccTable,
    ell: usize,
    n: usize,
    opts: &JennrichOptions,
) -> Result<RecoveredSupports, RecoveryError> {
    check_size(table, 3)?;
    if table.universe().is_empty() {
        return Ok(RecoveredSupports {
            supports: vec![vec![false; n]; ell],
            method: Method::FlipIndependent,
            queries_used: 0,
        });
    }
    let u1 = extended_universe(table);
    if u1.len() > MAX_FLIP_UNIVERSE {
        return Err(RecoveryError::UniverseTooLarge(u1.len()));
    }
    for size in 0..=u1.len() {
        for flip in u1.iter().copied().combinations(size) {
            let t = build_occ_tensor_order3(table, &flip, &u1)?;
            match jennrich(&t, ell, opts) {
                Ok(cp) if cp.total_weight() <= ell as u64 => {
                    return Ok(RecoveredSupports {
                        supports: expand(&cp, &u1, &flip, n, ell)?,
                        method: Method::FlipIndependent,
                        queries_used: 0,
                    })
                }
                _ => continue,
            }
        }
    }
    Err(RecoveryError::AllFlipsFailed)
}

/// Smallest `w >= 3` with `w (r - 1) >= 2 ell - 1`.
pub fn kruskal_order(ell: usize, r: usize) -> usize {
    assert!(r >= 2, "Kruskal rank bound must be at least 2");
    let need = (2 * ell).saturating_sub(1);
    need.div_ceil(r - 1).max(3)
}

/// Decomposes the order-`w` all-ones occ tensor over `U`.
pub fn recover_kruskal(
    table: &OccTable,
    ell: usize,
    r: usize,
    opts: &JennrichOptions,
) -> Result<RecoveredSupports, RecoveryError> {
    if r < 2 {
        return Err(RecoveryError::Params("r must be at least 2".into()));
    }
    let w = kruskal_order(ell, r);
    check_size(table, w)?;
    let u = table.universe().to_vec();
    let t = build_occ_tensor_orderw(table, w, &u)?;
    let cp = if w == 3 { jennrich(&t, ell, opts)? } else { bruteforce_cp(&t, ell)? };
    Ok(RecoveredSupports {
        supports: expand(&cp, &u, &[], table.n, ell)?,
        method: Method::Kruskal,
        queries_used: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    PIdentifiable(usize),
    FlipIndependent,
    Kruskal(usize),
}

impl Strategy {
    /// Table size the strategy reads.
    pub fn table_size(&self, ell: usize) -> usize {
        match *self {
            Strategy::PIdentifiable(p) => p + 1,
            Strategy::FlipIndependent => 3,
            Strategy::Kruskal(r) => kruskal_order(ell, r.max(2)),
        }
    }

    pub fn run(&self, table: &OccTable, opts: &JennrichOptions) -> Result<RecoveredSupports, RecoveryError> {
        match *self {
            Strategy::PIdentifiable(p) => recover_p_identifiable(table, table.ell, p),
            Strategy::FlipIndependent => recover_flip_independent(table, table.ell, table.n, opts),
            Strategy::Kruskal(r) => recover_kruskal(table, table.ell, r, opts),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::PIdentifiable(p) => write!(f, "p_identifiable:{p}"),
            Strategy::FlipIndependent => write!(f, "flip_independent"),
            Strategy::Kruskal(r) => write!(f, "kruskal:{r}"),
        }
    }
}

impl FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((a, b)) => (a, Some(b)),
            None => (s, None),
        };
        let num = |arg: Option<&str>| -> Result<usize, String> {
            arg.ok_or_else(|| format!("{name} needs a numeric argument"))?
                .parse()
                .map_err(|e| format!("bad argument in {s:?}: {e}"))
        };
        match name {
            "p_identifiable" => Ok(Strategy::PIdentifiable(num(arg)?)),
            "flip_independent" if arg.is_none() => Ok(Strategy::FlipIndependent),
            "kruskal" => Ok(Strategy::Kruskal(num(arg)?)),
            _ => Err(format!("unknown strategy {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RecoverParams {
    pub occ: OccParams,
    pub jennrich: JennrichOptions,
}

/// Builds the table the strategy needs from oracle queries, then recovers.
pub fn recover(h: &mut OracleHandle, strategy: Strategy, params: &RecoverParams) -> Result<RecoveredSupports, RecoveryError> {
    let s = strategy.table_size(h.ell());
    let build = build_occ_table(h, s, &params.occ)?;
    let mut out = strategy.run(&build.table, &params.jennrich)?;
    out.queries_used = h.ledger();
    Ok(out)
}
