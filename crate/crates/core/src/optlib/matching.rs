//! Maximum-weight bipartite matching by shortest augmenting paths with
//! vertex potentials (the Hungarian method).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// `(row, column)` pairs, sorted by row.
    pub pairs: Vec<(usize, usize)>,
    pub total: f64,
}

impl Matching {
    /// Column matched to each row.
    pub fn row_to_col(&self, rows: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; rows];
        for &(r, c) in &self.pairs {
            out[r] = Some(c);
        }
        out
    }
}

/// Min-cost assignment of every row to a distinct column, `rows <= cols`.
fn assign_rows(cost: &[Vec<f64>], cols: usize) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays with a virtual column 0.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_col = vec![0usize; n];
    for j in 1..=cols {
        if owner[j] != 0 {
            row_col[owner[j] - 1] = j - 1;
        }
    }
    row_col
}

/// Maximum-weight matching of an `r x c` weight matrix.
///
/// With `allow_unmatched` any node may stay single and zero-weight pairs are
/// left out of the result; otherwise the matching has `min(r, c)` pairs.
pub fn max_weight_matching(weights: &[Vec<f64>], allow_unmatched: bool) -> Result<Matching> {
    let r = weights.len();
    let c = weights.first().map_or(0, Vec::len);
    for (i, row) in weights.iter().enumerate() {
        if row.len() != c {
            return Err(Error::Parameter(format!(
                "matching row {i} has {} columns, expected {c}",
                row.len()
            )));
        }
        if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Parameter(format!(
                "matching row {i} has a negative or non-finite weight"
            )));
        }
    }
    if r == 0 || c == 0 {
        return Ok(Matching {
            pairs: Vec::new(),
            total: 0.0,
        });
    }

    let mut pairs: Vec<(usize, usize)> = if allow_unmatched {
        // Each row also owns a private zero-cost "stay single" column.
        let cost: Vec<Vec<f64>> = weights
            .iter()
            .map(|row| {
                let mut out: Vec<f64> = row.iter().map(|w| -w).collect();
                out.extend(std::iter::repeat(0.0).take(r));
                out
            })
            .collect();
        assign_rows(&cost, c + r)
            .into_iter()
            .enumerate()
            .filter(|&(i, j)| j < c && weights[i][j] > 0.0)
            .collect()
    } else if r <= c {
        let cost: Vec<Vec<f64>> = weights
            .iter()
            .map(|row| row.iter().map(|w| -w).collect())
            .collect();
        assign_rows(&cost, c).into_iter().enumerate().collect()
    } else {
        let cost: Vec<Vec<f64>> = (0..c)
            .map(|j| weights.iter().map(|row| -row[j]).collect())
            .collect();
        assign_rows(&cost, r)
            .into_iter()
            .enumerate()
            .map(|(j, i)| (i, j))
            .collect()
    };
    pairs.sort_unstable();
    let total = pairs.iter().map(|&(i, j)| weights[i][j]).sum();
    Ok(Matching { pairs, total })
}
