//! Occ-tables: `|occ(C, a)|`, the number of components whose support
//! restricted to the index tuple `C` equals the pattern `a`.
//!
//! The pipeline has three stages:
//! - [`compute_singletons`] recovers `|occ((i), 1)|` for every index from
//!   nzcount estimates on the rows of a RUFF matrix.
//! - [`compute_union_counts`] recovers `|U_{i in S} occ((i), 1)|` for every
//!   `S` inside the union of supports, from one CFF row per `S`.
//! - [`intersections_from_unions`] and [`occ_from_intersections`] turn
//!   unions into intersections and intersections into arbitrary patterns by
//!   inclusion-exclusion.
//!
//! A table is stored as intersection counts `|∩_{i in S} S_i|` over subsets
//! of the union of supports `U`. Every pattern count is a signed sum of
//! those, so updates that remove a component stay exact.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

use crate::nzcount::{nzcount_mlc_sparse, nzcount_mlr_support, NzError, NzParamsMlr};
use crate::oracle::{Model, OracleHandle};
use crate::rng::derive_seed;
use crate::set_families::{
    build_cff_with, build_ruff_with, to_query_bundle, FamilyConstants, FamilyError, FamilyKind,
    SetFamily,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OccError {
    #[error("C_h chain not nested at index {index}")]
    NonMonotone { index: usize },
    #[error("no CFF row isolates {set:?} within the union of supports")]
    CffDeficient { set: Vec<usize> },
    #[error("inconsistent counts at {set:?}: {value}")]
    Inconsistent { set: Vec<usize>, value: i64 },
    #[error("table holds tuples of size at most {s}, {asked} requested")]
    Incomplete { s: usize, asked: usize },
    #[error("union of supports has {0} indices, at most 64 are supported")]
    TooManyIndices(usize),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Nz(#[from] NzError),
    #[error("malformed table: {0}")]
    Format(String),
}

/// Counts of support patterns over tuples of size at most `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccTable {
    pub n: usize,
    pub ell: usize,
    pub s: usize,
    /// `|occ((i), 1)|` for every `i` in `[n]`.
    pub singleton: Vec<usize>,
    /// Union counts the table was derived from, when built from queries.
    pub union_counts: BTreeMap<Vec<usize>, i64>,
    universe: Vec<usize>,
    inter: HashMap<Vec<usize>, i64>,
    total: i64,
}

/// One stored `(C, a)` pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OccEntry {
    #[serde(rename = "C")]
    pub c: Vec<usize>,
    #[serde(with = "pattern")]
    pub a: Vec<bool>,
    pub count: i64,
}

mod pattern {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(a: &[bool], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&crate::model::bits_to_string(a))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let s = String::deserialize(d)?;
        Ok(crate::model::string_to_bits(&s))
    }
}

#[derive(Serialize, Deserialize)]
struct TableJson {
    n: usize,
    ell: usize,
    s: usize,
    singleton: Vec<usize>,
    entries: Vec<OccEntry>,
}

/// Reduces a tuple and pattern to sorted distinct indices.
///
/// Returns `None` when an index appears with conflicting bits or a one
/// falls outside `universe` (the count is then 0). Zeros outside the
/// universe are dropped.
fn canonical(universe: &[usize], c: &[usize], a: &[bool]) -> Option<(Vec<usize>, Vec<usize>)> {
    assert_eq!(c.len(), a.len(), "index tuple and pattern lengths differ");
    let mut pairs: Vec<(usize, bool)> = c.iter().copied().zip(a.iter().copied()).collect();
    pairs.sort_unstable();
    pairs.dedup();
    if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
        return None;
    }
    let mut ones = Vec::new();
    let mut zeros = Vec::new();
    for (i, b) in pairs {
        let inside = universe.binary_search(&i).is_ok();
        match (b, inside) {
            (true, true) => ones.push(i),
            (true, false) => return None,
            (false, true) => zeros.push(i),
            (false, false) => {}
        }
    }
    Some((ones, zeros))
}

/// `|∩_{C'} S ∩ ∩_{Z} S^c| = |∩_{C'}| - |∪_{i in Z} (∩_{C'} ∩ S_i)|`, with
/// the union expanded by inclusion-exclusion.
fn pattern_count(
    ones: &[usize],
    zeros: &[usize],
    inter: &mut dyn FnMut(&[usize]) -> Option<i64>,
) -> Option<i64> {
    let mut union = 0i64;
    for size in 1..=zeros.len() {
        let sign = if size % 2 == 1 { 1 } else { -1 };
        for j in zeros.iter().copied().combinations(size) {
            let mut key: Vec<usize> = ones.iter().copied().chain(j).collect();
            key.sort_unstable();
            union += sign * inter(&key)?;
        }
    }
    Some(inter(ones)? - union)
}

impl OccTable {
    /// `inter` maps sorted subsets of `universe` of size `1..=s` to the
    /// number of components containing them.
    pub fn from_intersections(
        n: usize,
        ell: usize,
        s: usize,
        singleton: Vec<usize>,
        universe: Vec<usize>,
        inter: HashMap<Vec<usize>, i64>,
    ) -> OccTable {
        OccTable {
            n,
            ell,
            s,
            singleton,
            union_counts: BTreeMap::new(),
            universe,
            inter,
            total: ell as i64,
        }
    }

    /// The union of supports `U`, ascending.
    pub fn universe(&self) -> &[usize] {
        &self.universe
    }

    /// Number of components still represented (`ell` minus removed weight).
    pub fn remaining(&self) -> i64 {
        self.total
    }

    /// `|∩_{i in set} S_i|` for a sorted set of distinct indices.
    pub fn intersection(&self, set: &[usize]) -> Result<i64, OccError> {
        if set.is_empty() {
            return Ok(self.total);
        }
        if set.iter().any(|i| self.universe.binary_search(i).is_err()) {
            return Ok(0);
        }
        if set.len() > self.s {
            return Err(OccError::Incomplete {
                s: self.s,
                asked: set.len(),
            });
        }
        Ok(*self.inter.get(set).unwrap_or(&0))
    }

    /// `|occ(C, a)|` for any tuple, order-insensitive. Repeated indices
    /// collapse; indices outside `U` are handled analytically.
    pub fn try_get(&self, c: &[usize], a: &[bool]) -> Result<i64, OccError> {
        let Some((ones, zeros)) = canonical(&self.universe, c, a) else {
            return Ok(0);
        };
        if ones.len() + zeros.len() > self.s {
            return Err(OccError::Incomplete {
                s: self.s,
                asked: ones.len() + zeros.len(),
            });
        }
        let mut f = |k: &[usize]| self.intersection(k).ok();
        Ok(pattern_count(&ones, &zeros, &mut f).expect("sizes checked"))
    }

    /// Like [`OccTable::try_get`], panicking on tuples longer than `s`.
    pub fn get(&self, c: &[usize], a: &[bool]) -> i64 {
        self.try_get(c, a).expect("tuple within table size")
    }

    /// Every stored pair: sorted `C` within `U`, `1 <= |C| <= s`, all `a`.
    pub fn entries(&self) -> Vec<OccEntry> {
        let mut out = Vec::new();
        for size in 1..=self.s.min(self.universe.len()) {
            for c in self.universe.iter().copied().combinations(size) {
                for bits in 0..1u32 << size {
                    let a: Vec<bool> = (0..size).map(|b| bits >> (size - 1 - b) & 1 == 1).collect();
                    let count = self.get(&c, &a);
                    out.push(OccEntry { c: c.clone(), a, count });
                }
            }
        }
        out
    }

    /// Checks every stored count lies in `[0, remaining]`.
    pub fn validate(&self) -> Result<(), OccError> {
        for e in self.entries() {
            if e.count < 0 || e.count > self.total {
                return Err(OccError::Inconsistent {
                    set: e.c,
                    value: e.count,
                });
            }
        }
        Ok(())
    }

    /// Removes `w` copies of the component with the given support (length
    /// `n`): every `|occ(C, a)|` drops by `w` where the support matches.
    pub fn subtract_support(&mut self, support: &[bool], w: i64) {
        for (key, v) in self.inter.iter_mut() {
            if key.iter().all(|&i| support[i]) {
                *v -= w;
            }
        }
        for (i, c) in self.singleton.iter_mut().enumerate() {
            if support[i] {
                *c = (*c as i64 - w).max(0) as usize;
            }
        }
        self.total -= w;
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&TableJson {
            n: self.n,
            ell: self.ell,
            s: self.s,
            singleton: self.singleton.clone(),
            entries: self.entries(),
        })
        .expect("table serializes")
    }

    /// Reads a table written by [`OccTable::to_json`]; the all-ones entries
    /// carry the intersections.
    pub fn from_json(text: &str) -> Result<OccTable, OccError> {
        let raw: TableJson = serde_json::from_str(text).map_err(|e| OccError::Format(e.to_string()))?;
        if raw.singleton.len() != raw.n {
            return Err(OccError::Format("singleton length differs from n".into()));
        }
        let universe: Vec<usize> = (0..raw.n).filter(|&i| raw.singleton[i] > 0).collect();
        let mut inter = HashMap::new();
        for e in raw.entries {
            if e.a.iter().all(|&b| b) {
                inter.insert(e.c, e.count);
            }
        }
        Ok(OccTable::from_intersections(
            raw.n,
            raw.ell,
            raw.s,
            raw.singleton,
            universe,
            inter,
        ))
    }
}

/// How the union stage chooses rows to query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowPolicy {
    /// Only the row selected for each target set is queried.
    #[default]
    Selected,
    /// Every row of the family is queried, as written in the algorithm.
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Batch {
    /// The batch-size formula of the stage.
    Auto,
    Fixed(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccParams {
    pub singleton_batch: Batch,
    pub union_batch: Batch,
    pub constants: FamilyConstants,
    /// Seed of the set families and their matrix values.
    pub seed: u64,
    pub row_policy: RowPolicy,
}

impl Default for OccParams {
    fn default() -> Self {
        OccParams {
            singleton_batch: Batch::Auto,
            union_batch: Batch::Auto,
            constants: FamilyConstants::default(),
            seed: 0,
            row_policy: RowPolicy::Selected,
        }
    }
}

impl OccParams {
    /// The same fixed batch size for every stage.
    pub fn fixed(t: u64, seed: u64) -> Self {
        OccParams {
            singleton_batch: Batch::Fixed(t),
            union_batch: Batch::Fixed(t),
            seed,
            ..Default::default()
        }
    }
}

/// `4 ell^2 ln(mn) / (1 - 2 eta)^2` (MLC) or `4 (36 pi) ell^2 ln(mn)` (MLR),
/// rounded up.
pub fn singleton_batch_auto(model: Model, ell: usize, eta: f64, m: usize, n: usize) -> u64 {
    batch_formula(4.0, model, ell, eta, m, n)
}

/// `10 ell^2 ln(nm) / (1 - 2 eta)^2` (MLC) or `10 (36 pi) ell^2 ln(nm)` (MLR),
/// rounded up.
pub fn union_batch_auto(model: Model, ell: usize, eta: f64, m: usize, n: usize) -> u64 {
    batch_formula(10.0, model, ell, eta, m, n)
}

fn batch_formula(c: f64, model: Model, ell: usize, eta: f64, m: usize, n: usize) -> u64 {
    let l2 = (ell * ell) as f64;
    let lg = ((m as f64) * (n as f64)).ln().max(1.0);
    let t = match model {
        Model::Mlc => c * l2 * lg / ((1.0 - 2.0 * eta) * (1.0 - 2.0 * eta)),
        Model::Mlr => c * 36.0 * std::f64::consts::PI * l2 * lg,
    };
    (t.ceil() as u64).max(1)
}

fn resolve(b: Batch, auto: impl FnOnce() -> u64) -> u64 {
    match b {
        Batch::Auto => auto(),
        Batch::Fixed(t) => t,
    }
}

/// Queries issued by one stage: `rows * estimates_per_row * calls_per_estimate`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCost {
    /// Tuple size of the stage, 1 for singletons.
    pub size: usize,
    /// Alphabet size of the family.
    pub m: usize,
    pub rows: u64,
    pub estimates_per_row: u64,
    pub batch: u64,
    pub calls_per_estimate: u64,
    /// Ledger difference measured around the stage.
    pub ledger: u64,
}

impl StageCost {
    pub fn closed_form(&self) -> u64 {
        self.rows * self.estimates_per_row * self.batch * self.calls_per_estimate
    }
}

fn calls_per_estimate(model: Model, t: u64) -> u64 {
    match model {
        Model::Mlc => 2 * t,
        Model::Mlr => t,
    }
}

fn mlr_params(h: &OracleHandle, t: u64) -> Result<NzParamsMlr, NzError> {
    let inst = h.instance();
    NzParamsMlr::new(inst.ell, inst.sigma, inst.delta, t)
}

/// `t = ell * k`, the number of sets the families must tolerate.
fn family_t(h: &OracleHandle) -> usize {
    (h.ell() * h.instance().k).max(1)
}

pub struct Singletons {
    pub counts: Vec<usize>,
    pub family: SetFamily,
    pub cost: StageCost,
}

/// `|occ((i), 1)|` for all `i` from a `(d, ell k, 0.5)`-RUFF.
pub fn compute_singletons(h: &mut OracleHandle, params: &OccParams) -> Result<Singletons, OccError> {
    let n = h.n();
    let ell = h.ell();
    let f = build_ruff_with(n, family_t(h), 0.5, derive_seed(params.seed, 1), &params.constants)?;
    let FamilyKind::Ruff { d, .. } = f.kind else {
        unreachable!()
    };
    let model = h.model();
    let t = resolve(params.singleton_batch, || {
        singleton_batch_auto(model, ell, h.instance().eta, f.m, n)
    });
    let nzp = match model {
        Model::Mlr => Some(mlr_params(h, t)?),
        Model::Mlc => None,
    };
    let before = h.ledger();
    let mut w = vec![0usize; f.m];
    for (p, wp) in w.iter_mut().enumerate() {
        let row = f.row(p);
        *wp = match model {
            Model::Mlc => {
                let x: Vec<(usize, f64)> = row.iter().map(|&j| (j, 1.0)).collect();
                nzcount_mlc_sparse(h, &x, t)?
            }
            Model::Mlr => nzcount_mlr_support(h, &row, nzp.as_ref().expect("mlr params"))?,
        };
    }
    let cost = StageCost {
        size: 1,
        m: f.m,
        rows: f.m as u64,
        estimates_per_row: 1,
        batch: t,
        calls_per_estimate: calls_per_estimate(model, t) / t,
        ledger: h.ledger() - before,
    };
    // i is in C_h when at least d/2 of its rows report nzcount >= h.
    let mut counts = vec![0usize; n];
    for (i, c) in counts.iter_mut().enumerate() {
        let set = f.set(i);
        let mut member = Vec::with_capacity(ell);
        for hh in 1..=ell {
            let hits = set.iter().filter(|&&p| w[p] >= hh).count();
            member.push(2 * hits >= d);
        }
        if member.windows(2).any(|m| m[1] && !m[0]) {
            return Err(OccError::NonMonotone { index: i });
        }
        *c = member.iter().filter(|&&b| b).count();
    }
    Ok(Singletons {
        counts,
        family: f,
        cost,
    })
}

fn mask_of(universe: &[usize], s: &[usize]) -> u64 {
    s.iter()
        .map(|i| 1u64 << universe.binary_search(i).expect("index in universe"))
        .fold(0, |a, b| a | b)
}

pub struct UnionCounts {
    pub counts: BTreeMap<Vec<usize>, i64>,
    pub cost: StageCost,
    pub family: SetFamily,
    /// The row read for each count, in the order of `counts`.
    pub selected: Vec<usize>,
}

/// `|U_{i in S} occ((i), 1)|` for every `S` within the union of supports
/// with `|S| = s`, from an `(s, ell k)`-CFF. Each count is the largest of
/// `ell + 1` nzcount estimates on the selected row.
pub fn compute_union_counts(
    h: &mut OracleHandle,
    s: usize,
    singletons: &[usize],
    params: &OccParams,
) -> Result<UnionCounts, OccError> {
    assert!(s >= 2, "unions of at least two indices");
    let n = h.n();
    let ell = h.ell();
    let model = h.model();
    let universe: Vec<usize> = (0..n).filter(|&i| singletons[i] > 0).collect();
    if universe.len() > 64 {
        return Err(OccError::TooManyIndices(universe.len()));
    }
    let fseed = derive_seed(params.seed, 100 + s as u64);
    let f = build_cff_with(n, s, family_t(h), fseed, &params.constants)?;
    let m = f.m;
    let bundle = to_query_bundle(f, model, ell, derive_seed(fseed, 7));
    let t = resolve(params.union_batch, || {
        union_batch_auto(model, ell, h.instance().eta, m, n)
    });
    let nzp = match model {
        Model::Mlr => Some(mlr_params(h, t)?),
        Model::Mlc => None,
    };
    let targets: Vec<Vec<usize>> = universe.iter().copied().combinations(s).collect();
    let masks: Vec<u64> = targets.iter().map(|c| mask_of(&universe, c)).collect();
    let rows = bundle.family.first_rows_with_patterns(&universe, &masks);
    for (c, r) in targets.iter().zip(&rows) {
        if r.is_none() {
            return Err(OccError::CffDeficient { set: c.clone() });
        }
    }
    let before = h.ledger();
    let count_row = |h: &mut OracleHandle, p: usize| -> Result<i64, OccError> {
        let mut best = 0;
        for w in 0..ell + 1 {
            let c = match model {
                Model::Mlc => nzcount_mlc_sparse(h, &bundle.row(w, p), t)?,
                Model::Mlr => {
                    let support: Vec<usize> = bundle.row(0, p).into_iter().map(|e| e.0).collect();
                    nzcount_mlr_support(h, &support, nzp.as_ref().expect("mlr params"))?
                }
            };
            best = best.max(c);
        }
        Ok(best as i64)
    };
    let mut counts = BTreeMap::new();
    let queried_rows = match params.row_policy {
        RowPolicy::Selected => {
            for (c, r) in targets.iter().zip(&rows) {
                counts.insert(c.clone(), count_row(h, r.expect("checked"))?);
            }
            targets.len() as u64
        }
        RowPolicy::All => {
            let mut all = Vec::with_capacity(m);
            for p in 0..m {
                all.push(count_row(h, p)?);
            }
            for (c, r) in targets.iter().zip(&rows) {
                counts.insert(c.clone(), all[r.expect("checked")]);
            }
            m as u64
        }
    };
    let cost = StageCost {
        size: s,
        m,
        rows: queried_rows,
        estimates_per_row: (ell + 1) as u64,
        batch: t,
        calls_per_estimate: calls_per_estimate(model, t) / t,
        ledger: h.ledger() - before,
    };
    let selected = rows.into_iter().map(|r| r.expect("checked")).collect();
    Ok(UnionCounts {
        counts,
        cost,
        family: bundle.family,
        selected,
    })
}

/// `|∩_{i in Y} S_i|` for every `Y` within `U` with `|Y| <= s`, from
/// union counts, via
/// `(-1)^{|Y|+1} |∩_Y| = |∪_Y| - sum_{∅ != J ⊊ Y} (-1)^{|J|+1} |∩_J|`.
///
/// `union_counts` must hold every subset of `U` of size `2..=s`; sizes
/// one come from `singletons`.
pub fn intersections_from_unions(
    union_counts: &BTreeMap<Vec<usize>, i64>,
    singletons: &[usize],
    s: usize,
) -> Result<HashMap<Vec<usize>, i64>, OccError> {
    let universe: Vec<usize> = (0..singletons.len()).filter(|&i| singletons[i] > 0).collect();
    let mut inter: HashMap<Vec<usize>, i64> = HashMap::new();
    for &i in &universe {
        inter.insert(vec![i], singletons[i] as i64);
    }
    for size in 2..=s.min(universe.len()) {
        for y in universe.iter().copied().combinations(size) {
            let union = *union_counts.get(&y).ok_or_else(|| OccError::Inconsistent {
                set: y.clone(),
                value: -1,
            })?;
            let mut rest = 0i64;
            for jsize in 1..size {
                let sign = if jsize % 2 == 1 { 1 } else { -1 };
                for j in y.iter().copied().combinations(jsize) {
                    rest += sign * inter[&j];
                }
            }
            let signed = union - rest;
            let value = if size % 2 == 1 { signed } else { -signed };
            if value < 0 {
                return Err(OccError::Inconsistent { set: y, value });
            }
            inter.insert(y, value);
        }
    }
    Ok(inter)
}

/// `|occ(C, a)|` from intersection counts, checked to lie in `[0, ell]`.
pub fn occ_from_intersections(
    intersections: &HashMap<Vec<usize>, i64>,
    singletons: &[usize],
    ell: usize,
    c: &[usize],
    a: &[bool],
) -> Result<i64, OccError> {
    let universe: Vec<usize> = (0..singletons.len()).filter(|&i| singletons[i] > 0).collect();
    let Some((ones, zeros)) = canonical(&universe, c, a) else {
        return Ok(0);
    };
    let mut f = |k: &[usize]| {
        if k.is_empty() {
            Some(ell as i64)
        } else {
            intersections.get(k).copied()
        }
    };
    let v = pattern_count(&ones, &zeros, &mut f).ok_or(OccError::Incomplete {
        s: 0,
        asked: ones.len() + zeros.len(),
    })?;
    if v < 0 || v > ell as i64 {
        return Err(OccError::Inconsistent {
            set: c.to_vec(),
            value: v,
        });
    }
    Ok(v)
}

/// A table built from oracle queries, with per-stage query costs.
pub struct OccBuild {
    pub table: OccTable,
    pub stages: Vec<StageCost>,
}

impl OccBuild {
    pub fn closed_form_queries(&self) -> u64 {
        self.stages.iter().map(|c| c.closed_form()).sum()
    }
}

/// The full table for tuples of size at most `s`.
pub fn build_occ_table(h: &mut OracleHandle, s: usize, params: &OccParams) -> Result<OccBuild, OccError> {
    assert!(s >= 1, "table size must be positive");
    let ell = h.ell();
    let n = h.n();
    let single = compute_singletons(h, params)?;
    let mut stages = vec![single.cost];
    let mut unions = BTreeMap::new();
    let usize_ = single.counts.iter().filter(|&&c| c > 0).count();
    for size in 2..=s.min(usize_) {
        let u = compute_union_counts(h, size, &single.counts, params)?;
        stages.push(u.cost);
        unions.extend(u.counts);
    }
    let inter = intersections_from_unions(&unions, &single.counts, s)?;
    let universe: Vec<usize> = (0..n).filter(|&i| single.counts[i] > 0).collect();
    let mut table = OccTable::from_intersections(n, ell, s, single.counts, universe, inter);
    table.union_counts = unions;
    table.validate()?;
    Ok(OccBuild { table, stages })
}
