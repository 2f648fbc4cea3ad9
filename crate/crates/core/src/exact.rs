//! Exact rank of small integer matrices.
//!
//! Fraction-free elimination on `i128` with every row divided by the gcd
//! of its entries after each step, so intermediate values stay small.

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn normalize(row: &mut [i128]) {
    let g = row.iter().fold(0, |g, &x| gcd(g, x));
    if g > 1 {
        for x in row.iter_mut() {
            *x /= g;
        }
    }
}

/// Rank over the rationals of the matrix given as rows.
pub fn rank(rows: &[Vec<i64>]) -> usize {
    let mut m: Vec<Vec<i128>> = rows
        .iter()
        .map(|r| r.iter().map(|&x| x as i128).collect())
        .collect();
    let ncols = m.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..ncols {
        let Some(p) = (rank..m.len()).find(|&i| m[i][col] != 0) else {
            continue;
        };
        m.swap(rank, p);
        let pivot = m[rank].clone();
        for row in m.iter_mut().skip(rank + 1) {
            let f = row[col];
            if f == 0 {
                continue;
            }
            for c in col..ncols {
                row[c] = row[c] * pivot[col] - pivot[c] * f;
            }
            normalize(row);
        }
        rank += 1;
        if rank == m.len() {
            break;
        }
    }
    rank
}

/// Rank of the binary columns `cols` (each of the same length).
pub fn column_rank(cols: &[&[bool]]) -> usize {
    if cols.is_empty() {
        return 0;
    }
    // Transposed: one row per column vector, the rank is the same.
    let rows: Vec<Vec<i64>> = cols
        .iter()
        .map(|c| c.iter().map(|&b| b as i64).collect())
        .collect();
    rank(&rows)
}
