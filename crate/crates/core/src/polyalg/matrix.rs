use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::poly::Poly;

/// Dense row-major matrix of operator polynomials.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolyMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Poly>,
}

impl PolyMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        PolyMatrix {
            rows,
            cols,
            entries: vec![Poly::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Poly::one();
        }
        m
    }

    pub fn from_entries(rows: usize, cols: usize, entries: Vec<Poly>) -> Result<Self> {
        if entries.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                entries.len()
            )));
        }
        Ok(PolyMatrix { rows, cols, entries })
    }

    pub fn from_rows(rows: Vec<Vec<Poly>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_entries(n_rows, n_cols, rows.into_iter().flatten().collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.iter().all(Poly::is_zero)
    }

    pub fn column(&self, j: usize) -> Vec<Poly> {
        (0..self.rows).map(|i| self[(i, j)].clone()).collect()
    }

    /// New matrix made of the listed columns, in order.
    pub fn select_columns(&self, cols: &[usize]) -> PolyMatrix {
        let mut out = PolyMatrix::zeros(self.rows, cols.len());
        for i in 0..self.rows {
            for (k, &j) in cols.iter().enumerate() {
                out[(i, k)] = self[(i, j)].clone();
            }
        }
        out
    }

    pub fn mul(&self, rhs: &PolyMatrix) -> Result<PolyMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = PolyMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for j in 0..rhs.cols {
                let mut acc = Poly::zero();
                for k in 0..self.cols {
                    let a = &self[(i, k)];
                    let b = &rhs[(k, j)];
                    if !a.is_zero() && !b.is_zero() {
                        acc = acc + a * b;
                    }
                }
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    /// Exact determinant by cofactor expansion along the first row.
    pub fn determinant(&self) -> Result<Poly> {
        if self.rows != self.cols {
            return Err(Error::NotSquare {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let idx: Vec<usize> = (0..self.cols).collect();
        Ok(self.minor_det(0, &idx))
    }

    fn minor_det(&self, row: usize, cols: &[usize]) -> Poly {
        match cols.len() {
            0 => Poly::one(),
            1 => self[(row, cols[0])].clone(),
            _ => {
                let mut acc = Poly::zero();
                for (k, &c) in cols.iter().enumerate() {
                    let a = &self[(row, c)];
                    if a.is_zero() {
                        continue;
                    }
                    let rest: Vec<usize> = cols.iter().copied().filter(|&x| x != c).collect();
                    let term = a * &self.minor_det(row + 1, &rest);
                    acc = if k % 2 == 0 { acc + term } else { acc - term };
                }
                acc
            }
        }
    }

    pub(crate) fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.entries.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub(crate) fn swap_cols(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for i in 0..self.rows {
            self.entries.swap(i * self.cols + a, i * self.cols + b);
        }
    }

    /// row[target] += factor * row[source]
    pub(crate) fn add_row_multiple(&mut self, target: usize, source: usize, factor: &Poly) {
        for j in 0..self.cols {
            let s = &self[(source, j)];
            if s.is_zero() {
                continue;
            }
            let delta = factor * s;
            self[(target, j)] = &self[(target, j)] + &delta;
        }
    }

    /// col[target] += factor * col[source]
    pub(crate) fn add_col_multiple(&mut self, target: usize, source: usize, factor: &Poly) {
        for i in 0..self.rows {
            let s = &self[(i, source)];
            if s.is_zero() {
                continue;
            }
            let delta = s * factor;
            self[(i, target)] = &self[(i, target)] + &delta;
        }
    }

    pub(crate) fn scale_row(&mut self, row: usize, c: &super::Rational) {
        for j in 0..self.cols {
            self[(row, j)] = self[(row, j)].scale(c);
        }
    }
}

impl std::ops::Index<(usize, usize)> for PolyMatrix {
    type Output = Poly;
    fn index(&self, (i, j): (usize, usize)) -> &Poly {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        &self.entries[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for PolyMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Poly {
        assert!(i < self.rows && j < self.cols, "index ({i},{j}) out of bounds");
        &mut self.entries[i * self.cols + j]
    }
}

/// One row per line, entries separated by `;`.
impl fmt::Display for PolyMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|j| self[(i, j)].to_string()).collect();
            writeln!(f, "{}", row.join("; "))?;
        }
        Ok(())
    }
}

impl FromStr for PolyMatrix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let rows = s
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(|l| l.split(';').map(str::parse).collect::<Result<Vec<Poly>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(s: &str) -> PolyMatrix {
        s.parse().unwrap()
    }

    #[test]
    fn identity_is_neutral() {
        let a = m("1 - d; d^2; 3\n0; -d; 1/2");
        assert_eq!(PolyMatrix::identity(2).mul(&a).unwrap(), a);
        assert_eq!(a.mul(&PolyMatrix::identity(3)).unwrap(), a);
        assert_eq!(m("d").mul(&m("d")).unwrap(), m("d^2"));
    }

    #[test]
    fn mul_dimension_mismatch() {
        let a = m("1; 2");
        assert!(matches!(a.mul(&a), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn determinant_examples() {
        assert_eq!(PolyMatrix::identity(3).determinant().unwrap(), Poly::one());
        assert_eq!(m("d; 0\n0; d").determinant().unwrap(), "d^2".parse().unwrap());
        assert_eq!(m("1; d\nd; 1").determinant().unwrap(), "1 - d^2".parse().unwrap());
        assert!(matches!(m("1; 2").determinant(), Err(Error::NotSquare { .. })));
    }

    #[test]
    fn printed_v_determinant_is_constant() {
        // Hand expansion along the first row:
        // 1 * (-(d^2 + d - 1) + d(d + 1)) + 1 * (0 * (-d - 1) - (-1) * 0) = 1
        let v = m("1; 0; 1\n0; -1; d\n0; -d - 1; d^2 + d - 1");
        let det = v.determinant().unwrap();
        assert_eq!(det, Poly::one());
    }

    #[test]
    fn parse_rejects_ragged() {
        assert!("1; 2\n3".parse::<PolyMatrix>().is_err());
    }

    #[test]
    fn display_round_trips() {
        let a = m("-d; 1; 0\n1; 1 - d; 1");
        assert_eq!(a.to_string().parse::<PolyMatrix>().unwrap(), a);
    }
}
