//! Minimum-cost rectangular assignment (Kuhn–Munkres with potentials,
//! O(n²m)).

use super::LateFusionError;

/// Row → column pairs, ascending by row.
pub type Assignment = Vec<(usize, usize)>;

fn solve_rows_le_cols(a: &[Vec<f64>], n: usize, m: usize) -> Vec<usize> {
    // 1-based potentials; column 0 is the virtual start.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    // row_of_col → col_of_row
    let mut col_of_row = vec![usize::MAX; n];
    for j in 1..=m {
        if p[j] != 0 {
            col_of_row[p[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// Minimum-cost assignment of rows to columns.
///
/// Every row (or column, whichever is fewer) is assigned, as if the matrix were
/// padded square with zeros. Entries above `forbid_above` are treated as
/// forbidden: the solver first maximizes the number of allowed pairs, then
/// minimizes their cost, and forbidden pairs are left out of the result. Pass
/// `f64::INFINITY` for an ungated assignment.
pub fn hungarian(cost: &[Vec<f64>], forbid_above: f64) -> Result<Assignment, LateFusionError> {
    let n = cost.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let m = cost[0].len();
    if let Some(r) = cost.iter().position(|row| row.len() != m) {
        return Err(LateFusionError::Ragged { row: r, expected: m, found: cost[r].len() });
    }
    if m == 0 {
        return Ok(Vec::new());
    }
    if let Some((r, c)) = (0..n).flat_map(|r| (0..m).map(move |c| (r, c))).find(|&(r, c)| !cost[r][c].is_finite()) {
        return Err(LateFusionError::NonFinite { row: r, col: c });
    }
    let allowed = |x: f64| x <= forbid_above;
    let max_abs = cost.iter().flatten().filter(|&&x| allowed(x)).fold(0.0f64, |acc, &x| acc.max(x.abs()));
    // Larger than any spread of allowed totals, so one more allowed pair
    // always wins.
    let big = (2.0 * max_abs + 1.0) * (n.min(m) as f64 + 1.0);
    let gated = |x: f64| if allowed(x) { x } else { big };

    let pairs: Vec<(usize, usize)> = if n <= m {
        let a: Vec<Vec<f64>> = cost.iter().map(|row| row.iter().map(|&x| gated(x)).collect()).collect();
        solve_rows_le_cols(&a, n, m).into_iter().enumerate().collect()
    } else {
        let t: Vec<Vec<f64>> = (0..m).map(|c| (0..n).map(|r| gated(cost[r][c])).collect()).collect();
        let mut p: Vec<(usize, usize)> =
            solve_rows_le_cols(&t, m, n).into_iter().enumerate().map(|(c, r)| (r, c)).collect();
        p.sort_unstable();
        p
    };
    Ok(pairs.into_iter().filter(|&(r, c)| allowed(cost[r][c])).collect())
}

/// Sum of `cost[r][c]` over the pairs, in row order.
pub fn assignment_cost(cost: &[Vec<f64>], pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(r, c)| cost[r][c]).sum()
}
