//! Brute-force quantities computed directly from a known support matrix.
//!
//! These are the test oracles for the estimation pipeline and the checks
//! for the structural precondition of each recovery algorithm.

use itertools::Itertools;
use std::collections::HashMap;

use crate::exact;
use crate::model::{union_support, SupportMatrix};
use crate::occ_engine::OccTable;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum GroundTruthError {
    #[error("support matrix has duplicate columns")]
    DuplicateColumns,
    #[error("support matrix has no columns")]
    Empty,
}

/// Number of columns whose restriction to `c` equals `a`.
pub fn occ_bruteforce(m: &SupportMatrix, c: &[usize], a: &[bool]) -> usize {
    assert_eq!(c.len(), a.len(), "index tuple and pattern lengths differ");
    m.columns
        .iter()
        .filter(|col| c.iter().zip(a).all(|(&i, &b)| col[i] == b))
        .count()
}

/// Number of columns containing every index of `s`.
pub fn intersection_bruteforce(m: &SupportMatrix, s: &[usize]) -> usize {
    m.columns.iter().filter(|col| s.iter().all(|&i| col[i])).count()
}

/// Number of columns containing at least one index of `s`.
pub fn union_bruteforce(m: &SupportMatrix, s: &[usize]) -> usize {
    m.columns.iter().filter(|col| s.iter().any(|&i| col[i])).count()
}

/// Whether column `j` of `m` is identified by some pattern on `p` indices.
fn column_identifiable(m: &SupportMatrix, alive: &[usize], j: usize, p: usize) -> bool {
    let col = &m.columns[j];
    (0..m.n).combinations(p).any(|c| {
        alive
            .iter()
            .all(|&o| o == j || c.iter().any(|&i| m.columns[o][i] != col[i]))
    })
}

/// Whether the distinct-column matrix `m` is `p`-identifiable.
///
/// Deleting columns never destroys an identifying pattern, so eliminating
/// any identifiable column first loses nothing.
pub fn is_p_identifiable(m: &SupportMatrix, p: usize) -> bool {
    let p = p.min(m.n);
    let mut alive: Vec<usize> = (0..m.ell()).collect();
    while alive.len() > 1 {
        let Some(pos) = alive
            .iter()
            .position(|&j| column_identifiable(m, &alive, j, p))
        else {
            return false;
        };
        alive.remove(pos);
    }
    true
}

/// Smallest `p` for which `m` is `p`-identifiable.
///
/// A single column counts as 1-identifiable. Distinct columns are always
/// `n`-identifiable, so the search terminates.
pub fn minimal_p(m: &SupportMatrix) -> Result<usize, GroundTruthError> {
    if m.ell() == 0 {
        return Err(GroundTruthError::Empty);
    }
    if m.has_duplicates() {
        return Err(GroundTruthError::DuplicateColumns);
    }
    if m.ell() == 1 {
        return Ok(1);
    }
    Ok((1..=m.n)
        .find(|&p| is_p_identifiable(m, p))
        .expect("distinct columns are n-identifiable"))
}

/// The row set searched for flips: the union of supports plus the smallest
/// index outside it, when one exists.
pub fn flip_universe(m: &SupportMatrix) -> Vec<usize> {
    let mut u = union_support(m);
    if let Some(t) = (0..m.n).find(|i| u.binary_search(i).is_err()) {
        u.push(t);
        u.sort_unstable();
    }
    u
}

fn flipped_rank(m: &SupportMatrix, rows: &[usize], flip: &[usize]) -> usize {
    let cols: Vec<Vec<i64>> = m
        .columns
        .iter()
        .map(|col| {
            rows.iter()
                .map(|&i| (col[i] ^ flip.contains(&i)) as i64)
                .collect()
        })
        .collect();
    exact::rank(&cols)
}

/// Searches flip sets `F` within [`flip_universe`], by increasing size then
/// lexicographically, for one making all columns linearly independent.
///
/// Returns the first witness found.
pub fn is_flip_independent(m: &SupportMatrix) -> Result<Option<Vec<usize>>, GroundTruthError> {
    if m.has_duplicates() {
        return Err(GroundTruthError::DuplicateColumns);
    }
    let rows = flip_universe(m);
    let ell = m.ell();
    for size in 0..=rows.len() {
        for f in rows.iter().copied().combinations(size) {
            if flipped_rank(m, &rows, &f) == ell {
                return Ok(Some(f));
            }
        }
    }
    Ok(None)
}

/// Largest `r` such that every `r` columns are linearly independent.
/// Returns 0 when a zero column is present.
pub fn kruskal_rank(m: &SupportMatrix) -> Result<usize, GroundTruthError> {
    if m.has_duplicates() {
        return Err(GroundTruthError::DuplicateColumns);
    }
    if m.columns.iter().any(|c| c.iter().all(|&b| !b)) {
        return Ok(0);
    }
    let mut r = 0;
    for size in 1..=m.ell() {
        let all = (0..m.ell()).combinations(size).all(|js| {
            let cols: Vec<&[bool]> = js.iter().map(|&j| m.columns[j].as_slice()).collect();
            exact::column_rank(&cols) == size
        });
        if !all {
            break;
        }
        r = size;
    }
    Ok(r)
}

/// Multiset equality of binary vectors.
pub fn supports_equal_up_to_permutation(a: &[Vec<bool>], b: &[Vec<bool>]) -> bool {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort();
    y.sort();
    x == y
}

/// The occ-table of `m` for all tuples of size at most `s`, computed by
/// counting columns.
pub fn exact_occ_table(m: &SupportMatrix, s: usize) -> OccTable {
    let universe = union_support(m);
    let mut inter = HashMap::new();
    for size in 1..=s.min(universe.len()) {
        for c in universe.iter().copied().combinations(size) {
            inter.insert(c.clone(), intersection_bruteforce(m, &c) as i64);
        }
    }
    let singleton = (0..m.n)
        .map(|i| intersection_bruteforce(m, &[i]))
        .collect();
    OccTable::from_intersections(m.n, m.ell(), s, singleton, universe, inter)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sm(cols: &[&str]) -> SupportMatrix {
        SupportMatrix::from_strings(cols)
    }

    #[test]
    fn occ_examples() {
        // Supports {0,1} and {1,2} over n = 3.
        let m = sm(&["110", "011"]);
        assert_eq!(occ_bruteforce(&m, &[1], &[true]), 2);
        assert_eq!(occ_bruteforce(&m, &[0, 2], &[true, true]), 0);
        let z = sm(&["000", "000", "000", "000"]);
        assert_eq!(occ_bruteforce(&z, &[0, 1, 2], &[false, false, false]), 4);
    }

    #[test]
    fn minimal_p_examples() {
        assert_eq!(minimal_p(&sm(&["1100", "0110", "1110"])), Ok(1));
        assert_eq!(minimal_p(&sm(&["0000"])), Ok(1));
        assert_eq!(
            minimal_p(&sm(&["110", "110"])),
            Err(GroundTruthError::DuplicateColumns)
        );
        // All weight-2 columns over 4 rows: no single index singles one out.
        let m = sm(&["1100", "1010", "1001", "0110", "0101", "0011"]);
        assert_eq!(minimal_p(&m), Ok(2));
    }

    #[test]
    fn flip_examples() {
        let m = sm(&["0011", "1011", "0111", "1111"]);
        assert_eq!(is_flip_independent(&m), Ok(None));
        let e = sm(&["100", "010", "001"]);
        assert_eq!(is_flip_independent(&e), Ok(Some(vec![])));
    }

    #[test]
    fn flip_small_matrix_matches_enumeration() {
        // Columns (110), (011), (111) are already independent.
        let m = sm(&["110", "011", "111"]);
        assert_eq!(is_flip_independent(&m), Ok(Some(vec![])));
        // (100), (010), (110) are dependent; compare with a direct search.
        let d = sm(&["100", "010", "110"]);
        let w = is_flip_independent(&d).unwrap();
        let rows = flip_universe(&d);
        let mut brute = None;
        'outer: for size in 0..=rows.len() {
            for f in rows.iter().copied().combinations(size) {
                if flipped_rank(&d, &rows, &f) == 3 {
                    brute = Some(f);
                    break 'outer;
                }
            }
        }
        assert_eq!(w, brute);
        assert!(w.is_some());
    }

    #[test]
    fn kruskal_examples() {
        assert_eq!(kruskal_rank(&sm(&["100", "010", "001"])), Ok(3));
        assert_eq!(kruskal_rank(&sm(&["100", "010", "110"])), Ok(2));
        assert_eq!(kruskal_rank(&sm(&["100", "000"])), Ok(0));
        assert!(kruskal_rank(&sm(&["100", "100"])).is_err());
    }

    #[test]
    fn multiset_equality() {
        let a = vec![vec![true, true, false], vec![false, true, true]];
        let b = vec![vec![false, true, true], vec![true, true, false]];
        assert!(supports_equal_up_to_permutation(&a, &b));
        let c = vec![vec![true, true, false], vec![true, true, false]];
        let d = vec![vec![true, true, false]];
        assert!(!supports_equal_up_to_permutation(&c, &d));
    }

    #[test]
    fn exact_table_reads_back() {
        let m = sm(&["110", "011"]);
        let t = exact_occ_table(&m, 2);
        assert_eq!(t.get(&[0, 2], &[true, false]), 1);
        assert_eq!(t.get(&[1], &[false]), 0);
        assert_eq!(t.singleton, vec![1, 2, 1]);
    }
}
