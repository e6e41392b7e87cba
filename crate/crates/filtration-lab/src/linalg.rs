//! Small dense linear algebra over a [`Scalar`].
//!
//! Everything here runs at "desk scale" (a few hundred unknowns at most), so
//! plain Gaussian elimination with largest-pivot selection is used throughout.
//! With a rational backend the computations are exact; with floats, rank and
//! consistency decisions are made relative to `tol` times the largest entry.

use crate::num::{dot, near_zero, Scalar};

/// Row-major dense matrix.
pub type Mat<S> = Vec<Vec<S>>;

/// Largest absolute entry of a matrix (zero for empty input).
pub fn max_abs<S: Scalar>(m: &Mat<S>) -> S {
    let mut best = S::zero();
    for row in m {
        for v in row {
            if v.abs() > best {
                best = v.abs();
            }
        }
    }
    best
}

/// Matrix-vector product.
pub fn mat_vec<S: Scalar>(m: &Mat<S>, x: &[S]) -> Vec<S> {
    m.iter().map(|row| dot(row, x)).collect()
}

/// `a * b` for square-free shapes (rows(a) x cols(b)).
pub fn mat_mul<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> Mat<S> {
    let rows = a.len();
    let inner = b.len();
    let cols = if inner == 0 { 0 } else { b[0].len() };
    let mut out = vec![vec![S::zero(); cols]; rows];
    for i in 0..rows {
        for k in 0..inner {
            if a[i][k].is_zero() {
                continue;
            }
            for j in 0..cols {
                out[i][j] = out[i][j].clone() + a[i][k].clone() * b[k][j].clone();
            }
        }
    }
    out
}

/// One particular solution of `A x = b`, or `None` when the system is
/// inconsistent. Free variables are pinned to zero, which makes the returned
/// solution deterministic. Pivots smaller than `tol * max|A|` are treated as
/// zero.
pub fn solve_consistent<S: Scalar>(a: &Mat<S>, b: &[S], tol: &S) -> Option<Vec<S>> {
    let rows = a.len();
    assert_eq!(rows, b.len());
    let cols = if rows == 0 { 0 } else { a[0].len() };
    let mut m: Mat<S> = a.to_vec();
    let mut rhs: Vec<S> = b.to_vec();

    let scale = {
        let s = max_abs(&m);
        if s.is_zero() {
            S::one()
        } else {
            s
        }
    };
    let thresh = tol.clone() * scale;

    let mut pivot_cols: Vec<usize> = Vec::new();
    let mut row = 0usize;
    for col in 0..cols {
        // Largest pivot in this column at or below `row`.
        let mut best = row;
        for r in row + 1..rows {
            if m[r][col].abs() > m[best][col].abs() {
                best = r;
            }
        }
        if row >= rows || m[best][col].abs() <= thresh {
            continue;
        }
        m.swap(row, best);
        rhs.swap(row, best);
        let piv = m[row][col].clone();
        for r in 0..rows {
            if r == row || m[r][col].is_zero() {
                continue;
            }
            let factor = m[r][col].clone() / piv.clone();
            for c in col..cols {
                m[r][c] = m[r][c].clone() - factor.clone() * m[row][c].clone();
            }
            rhs[r] = rhs[r].clone() - factor * rhs[row].clone();
        }
        pivot_cols.push(col);
        row += 1;
        if row == rows {
            break;
        }
    }

    // Zero rows with a nonzero right-hand side mean the system is inconsistent.
    let rhs_scale = {
        let mut s = S::zero();
        for v in b {
            if v.abs() > s {
                s = v.abs();
            }
        }
        if s.is_zero() {
            S::one()
        } else {
            s
        }
    };
    for r in row..rows {
        if !near_zero(&rhs[r], &(tol.clone() * rhs_scale.clone())) {
            return None;
        }
    }

    let mut x = vec![S::zero(); cols];
    for (r, &col) in pivot_cols.iter().enumerate() {
        x[col] = rhs[r].clone() / m[r][col].clone();
    }
    Some(x)
}

/// Minimum-norm solution of the symmetric positive-semidefinite system
/// `A x = b`, or `None` when inconsistent.
///
/// Uses the identity: any solution `z` of `A^2 z = b` yields the (unique)
/// minimum-norm solution `x = A z`, because `x` then lies in `range(A)`.
pub fn min_norm_solve_psd<S: Scalar>(a: &Mat<S>, b: &[S], tol: &S) -> Option<Vec<S>> {
    let a2 = mat_mul(a, a);
    let z = solve_consistent(&a2, b, tol)?;
    let x = mat_vec(a, &z);
    // Guard against a spurious solve on a badly scaled float system.
    let residual = mat_vec(a, &x)
        .into_iter()
        .zip(b)
        .map(|(lhs, rhs)| (lhs - rhs.clone()).abs())
        .fold(S::zero(), |acc, v| if v > acc { v } else { acc });
    let scale = {
        let mut s = max_abs(a);
        for v in b {
            if v.abs() > s {
                s = v.abs();
            }
        }
        if s.is_zero() {
            S::one()
        } else {
            s
        }
    };
    if residual <= tol.clone() * scale + tol.clone() {
        Some(x)
    } else {
        None
    }
}

/// Rank of a family of row vectors, with pivots below `tol * max|entry|`
/// treated as zero.
pub fn rank<S: Scalar>(rows_in: &[Vec<S>], tol: &S) -> usize {
    let rows = rows_in.len();
    if rows == 0 {
        return 0;
    }
    let cols = rows_in[0].len();
    let mut m: Mat<S> = rows_in.to_vec();
    let scale = {
        let s = max_abs(&m);
        if s.is_zero() {
            return 0;
        }
        s
    };
    let thresh = tol.clone() * scale;

    let mut rank = 0usize;
    for col in 0..cols {
        let mut best = rank;
        for r in rank + 1..rows {
            if m[r][col].abs() > m[best][col].abs() {
                best = r;
            }
        }
        if rank >= rows || m[best][col].abs() <= thresh {
            continue;
        }
        m.swap(rank, best);
        let piv = m[rank][col].clone();
        for r in rank + 1..rows {
            if m[r][col].is_zero() {
                continue;
            }
            let factor = m[r][col].clone() / piv.clone();
            for c in col..cols {
                m[r][c] = m[r][c].clone() - factor.clone() * m[rank][c].clone();
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Weighted inner product `sum_i w_i a_i b_i`.
pub fn weighted_inner<S: Scalar>(w: &[S], a: &[S], b: &[S]) -> S {
    debug_assert_eq!(w.len(), a.len());
    debug_assert_eq!(w.len(), b.len());
    let mut acc = S::zero();
    for i in 0..w.len() {
        acc = acc + w[i].clone() * a[i].clone() * b[i].clone();
    }
    acc
}

/// An orthogonal (not normalized) basis produced by modified Gram-Schmidt,
/// together with the squared norms of its vectors and the expansion of each
/// basis vector over the input family.
///
/// Normalization is deliberately avoided: it would require square roots, which
/// do not exist in the rational backend. All downstream projections only need
/// squared norms.
pub struct OrthoBasis<S> {
    pub vectors: Vec<Vec<S>>,
    pub norms_sq: Vec<S>,
    /// `expansions[k][j]` is the coefficient of input vector `j` in basis
    /// vector `k`.
    pub expansions: Vec<Vec<S>>,
}

/// Modified Gram-Schmidt with one re-orthogonalization pass, under the
/// weighted inner product given by `weights`. Vectors whose residual squared
/// norm falls at or below `(tol * max_input_norm)^2` are dropped; the rank
/// decision is therefore relative to the largest input vector.
pub fn gram_schmidt<S: Scalar>(inputs: &[Vec<S>], weights: &[S], tol: &S) -> OrthoBasis<S> {
    let n_inputs = inputs.len();
    let mut basis: Vec<Vec<S>> = Vec::new();
    let mut norms_sq: Vec<S> = Vec::new();
    let mut expansions: Vec<Vec<S>> = Vec::new();

    let mut max_norm_sq = S::zero();
    for v in inputs {
        let n = weighted_inner(weights, v, v);
        if n > max_norm_sq {
            max_norm_sq = n;
        }
    }
    let thresh_sq = tol.clone() * tol.clone() * max_norm_sq;

    for (j, v) in inputs.iter().enumerate() {
        let mut w = v.clone();
        let mut coeffs = vec![S::zero(); n_inputs];
        coeffs[j] = S::one();
        // Two projection passes; the second mops up float cancellation and is
        // a no-op in exact arithmetic.
        for _pass in 0..2 {
            for (k, b) in basis.iter().enumerate() {
                let c = weighted_inner(weights, &w, b) / norms_sq[k].clone();
                if c.is_zero() {
                    continue;
                }
                for i in 0..w.len() {
                    w[i] = w[i].clone() - c.clone() * b[i].clone();
                }
                for i in 0..n_inputs {
                    let delta = c.clone() * expansions[k][i].clone();
                    coeffs[i] = coeffs[i].clone() - delta;
                }
            }
        }
        let nsq = weighted_inner(weights, &w, &w);
        if nsq > thresh_sq {
            basis.push(w);
            norms_sq.push(nsq);
            expansions.push(coeffs);
        }
    }

    OrthoBasis {
        vectors: basis,
        norms_sq,
        expansions,
    }
}
