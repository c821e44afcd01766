//! Small dense linear systems over either backend.

use crate::scalar::Scalar;

/// Determinant by elimination with partial pivoting.
pub fn det<S: Scalar>(m: &[Vec<S>]) -> S {
    let n = m.len();
    let mut a: Vec<Vec<S>> = m.to_vec();
    let mut result = S::one();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .expect("non-empty");
        if a[pivot][col] == S::zero() {
            return S::zero();
        }
        if pivot != col {
            a.swap(pivot, col);
            result = -result;
        }
        result = result * a[col][col].clone();
        for row in col + 1..n {
            let factor = a[row][col].clone() / a[col][col].clone();
            for c in col..n {
                let v = a[row][c].clone() - factor.clone() * a[col][c].clone();
                a[row][c] = v;
            }
        }
    }
    result
}

/// |det| divided by the product of row norms, in [0, 1]. Exact zero
/// determinants map to exactly 0.
pub fn normalized_det<S: Scalar>(m: &[Vec<S>]) -> f64 {
    let exact = det(m);
    if exact == S::zero() {
        return 0.0;
    }
    let norms: f64 = m
        .iter()
        .map(|row| row.iter().map(|x| x.to_f64().powi(2)).sum::<f64>().sqrt())
        .product();
    if norms == 0.0 {
        return 0.0;
    }
    (exact.to_f64().abs() / norms).min(1.0)
}

/// Solves a square system; `None` when singular.
pub fn solve_square<S: Scalar>(m: &[Vec<S>], rhs: &[S]) -> Option<Vec<S>> {
    let n = m.len();
    let mut a: Vec<Vec<S>> = m
        .iter()
        .zip(rhs)
        .map(|(row, b)| {
            let mut r = row.clone();
            r.push(b.clone());
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
        if a[pivot][col] == S::zero() {
            return None;
        }
        a.swap(pivot, col);
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = a[row][col].clone() / a[col][col].clone();
            if factor == S::zero() {
                continue;
            }
            for c in col..=n {
                let v = a[row][c].clone() - factor.clone() * a[col][c].clone();
                a[row][c] = v;
            }
        }
    }
    Some((0..n).map(|i| a[i][n].clone() / a[i][i].clone()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub enum SystemError {
    /// Rank deficient; carries the best normalized determinant found.
    Singular { magnitude: f64 },
    /// Exact backend: an overdetermined system has no exact solution.
    Inconsistent { residual: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSolution<S> {
    pub values: Vec<S>,
    pub magnitude: f64,
}

fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if m < k {
        return vec![];
    }
    let mut out = Vec::new();
    for rest in subsets(m - 1, k) {
        out.push(rest);
    }
    for mut rest in subsets(m - 1, k - 1) {
        rest.push(m - 1);
        out.push(rest);
    }
    out
}

/// Solves `rows · x = rhs` for a system with at least as many equations as
/// unknowns.
///
/// Equations with all-zero coefficients must have a zero right-hand side and
/// are dropped; unknowns that appear in no equation are set to zero. The
/// rank magnitude is the largest normalized determinant over square row
/// subsets. Overdetermined systems are solved by least squares on the float
/// backend and by an exact subset solve plus a consistency check on the
/// exact backend.
pub fn solve_system<S: Scalar>(
    rows: &[Vec<S>],
    rhs: &[S],
    det_tol: f64,
    prob_tol: f64,
) -> Result<SystemSolution<S>, SystemError> {
    let width = rows.first().map_or(0, Vec::len);
    let mut kept_rows = Vec::new();
    let mut kept_rhs = Vec::new();
    for (row, b) in rows.iter().zip(rhs) {
        if row.iter().all(|x| x.near_zero(prob_tol)) {
            if !b.near_zero(prob_tol) {
                return Err(SystemError::Inconsistent { residual: b.to_f64().abs() });
            }
            continue;
        }
        kept_rows.push(row.clone());
        kept_rhs.push(b.clone());
    }
    let active: Vec<usize> = (0..width)
        .filter(|&c| kept_rows.iter().any(|r| !r[c].near_zero(prob_tol)))
        .collect();
    let k = active.len();
    let mut values = vec![S::zero(); width];
    if k == 0 {
        return Ok(SystemSolution { values, magnitude: 1.0 });
    }
    let a: Vec<Vec<S>> = kept_rows.iter().map(|r| active.iter().map(|&c| r[c].clone()).collect()).collect();
    let m = a.len();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for subset in subsets(m, k) {
        let sub: Vec<Vec<S>> = subset.iter().map(|&i| a[i].clone()).collect();
        let mag = normalized_det(&sub);
        if best.as_ref().is_none_or(|(b, _)| mag > *b) {
            best = Some((mag, subset));
        }
    }
    let Some((magnitude, subset)) = best else {
        return Err(SystemError::Singular { magnitude: 0.0 });
    };
    let singular = if S::is_exact() { magnitude == 0.0 } else { magnitude < det_tol };
    if singular {
        return Err(SystemError::Singular { magnitude });
    }
    let solution = if m == k || S::is_exact() {
        let sub: Vec<Vec<S>> = subset.iter().map(|&i| a[i].clone()).collect();
        let b: Vec<S> = subset.iter().map(|&i| kept_rhs[i].clone()).collect();
        let x = solve_square(&sub, &b).ok_or(SystemError::Singular { magnitude })?;
        if S::is_exact() {
            for (row, b) in a.iter().zip(&kept_rhs) {
                let lhs = row.iter().zip(&x).fold(S::zero(), |acc, (r, v)| acc + r.clone() * v.clone());
                if lhs != *b {
                    return Err(SystemError::Inconsistent { residual: (lhs - b.clone()).to_f64().abs() });
                }
            }
        }
        x
    } else {
        let gram: Vec<Vec<S>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| a.iter().fold(S::zero(), |acc, r| acc + r[i].clone() * r[j].clone()))
                    .collect()
            })
            .collect();
        let proj: Vec<S> = (0..k)
            .map(|i| a.iter().zip(&kept_rhs).fold(S::zero(), |acc, (r, b)| acc + r[i].clone() * b.clone()))
            .collect();
        solve_square(&gram, &proj).ok_or(SystemError::Singular { magnitude })?
    };
    for (slot, v) in active.iter().zip(solution) {
        values[*slot] = v;
    }
    Ok(SystemSolution { values, magnitude })
}
