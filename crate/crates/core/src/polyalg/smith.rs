use crate::error::{Error, Result};

use super::matrix::PolyMatrix;
use super::poly::Poly;

/// `q * h * v == d` with `q`, `v` unimodular and `d` diagonal with a monic
/// divisibility chain on its nonzero diagonal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmithDecomposition {
    pub q: PolyMatrix,
    pub d: PolyMatrix,
    pub v: PolyMatrix,
}

impl SmithDecomposition {
    /// Nonzero diagonal entries of `d`, in order.
    pub fn invariant_factors(&self) -> Vec<Poly> {
        let n = self.d.rows().min(self.d.cols());
        (0..n)
            .map(|i| self.d[(i, i)].clone())
            .take_while(|p| !p.is_zero())
            .collect()
    }

    pub fn rank(&self) -> usize {
        self.invariant_factors().len()
    }
}

/// Smallest-degree nonzero entry of the trailing block starting at `(k, k)`,
/// ties broken by lowest `(row, col)`.
fn find_pivot(d: &PolyMatrix, k: usize) -> Option<(usize, usize)> {
    let mut best: Option<(usize, (usize, usize))> = None;
    for i in k..d.rows() {
        for j in k..d.cols() {
            if let Some(deg) = d[(i, j)].degree() {
                if best.is_none_or(|(bd, _)| deg < bd) {
                    best = Some((deg, (i, j)));
                }
            }
        }
    }
    best.map(|(_, pos)| pos)
}

/// Smith normal form over the Euclidean domain `Q[d]` by elementary row and
/// column operations, accumulated into `q` (rows) and `v` (columns).
pub fn smith_normal_form(h: &PolyMatrix) -> Result<SmithDecomposition> {
    if h.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let (m, n) = (h.rows(), h.cols());
    let mut d = h.clone();
    let mut q = PolyMatrix::identity(m);
    let mut v = PolyMatrix::identity(n);

    'diag: for k in 0..m.min(n) {
        loop {
            let Some((pi, pj)) = find_pivot(&d, k) else {
                break 'diag;
            };
            d.swap_rows(k, pi);
            q.swap_rows(k, pi);
            d.swap_cols(k, pj);
            v.swap_cols(k, pj);

            let pivot = d[(k, k)].clone();
            let mut clean = true;
            for i in k + 1..m {
                if d[(i, k)].is_zero() {
                    continue;
                }
                let (quot, rem) = d[(i, k)].div_rem(&pivot)?;
                let neg = -quot;
                d.add_row_multiple(i, k, &neg);
                q.add_row_multiple(i, k, &neg);
                clean &= rem.is_zero();
            }
            for j in k + 1..n {
                if d[(k, j)].is_zero() {
                    continue;
                }
                let (quot, rem) = d[(k, j)].div_rem(&pivot)?;
                let neg = -quot;
                d.add_col_multiple(j, k, &neg);
                v.add_col_multiple(j, k, &neg);
                clean &= rem.is_zero();
            }
            if !clean {
                // a nonzero remainder has lower degree than the pivot; re-pivot on it
                continue;
            }

            let mut offender = None;
            'search: for i in k + 1..m {
                for j in k + 1..n {
                    if !d[(i, j)].div_rem(&pivot)?.1.is_zero() {
                        offender = Some(i);
                        break 'search;
                    }
                }
            }
            if let Some(i) = offender {
                d.add_row_multiple(k, i, &Poly::one());
                q.add_row_multiple(k, i, &Poly::one());
                continue;
            }

            let lc_inv = pivot
                .leading_coeff()
                .expect("pivot is nonzero")
                .recip();
            d.scale_row(k, &lc_inv);
            q.scale_row(k, &lc_inv);
            break;
        }
    }

    Ok(SmithDecomposition { q, d, v })
}

/// Columns of `v` beyond the rank of `d`; each one is annihilated by `h`.
pub fn right_nullspace_columns(h: &PolyMatrix, dec: &SmithDecomposition) -> PolyMatrix {
    let rank = dec.rank();
    let cols: Vec<usize> = (rank..dec.v.cols()).collect();
    let n = dec.v.select_columns(&cols);
    debug_assert!(h.mul(&n).map(|r| r.is_zero()).unwrap_or(false));
    n
}
