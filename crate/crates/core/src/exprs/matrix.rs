use nalgebra::DMatrix;

use super::{parse, Expr, ExprError};

/// Dense matrix of expressions, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ExprMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Expr>,
}

impl ExprMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Expr) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        ExprMatrix { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |_, _| Expr::zero())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { Expr::one() } else { Expr::zero() })
    }

    pub fn diagonal(entries: &[Expr]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |i, j| if i == j { entries[i].clone() } else { Expr::zero() })
    }

    pub fn from_constant(m: &DMatrix<f64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| Expr::num(m[(i, j)]))
    }

    /// Builds from rows of source strings. Ragged input is a caller bug.
    pub fn parse_rows<S: AsRef<str>>(rows: &[Vec<S>]) -> Result<Self, ExprError> {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == m), "ragged matrix");
        let mut data = Vec::with_capacity(n * m);
        for row in rows {
            for s in row {
                data.push(parse(s.as_ref())?);
            }
        }
        Ok(ExprMatrix { rows: n, cols: m, data })
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Expr {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, e: Expr) {
        self.data[i * self.cols + j] = e;
    }

    pub fn entries(&self) -> &[Expr] {
        &self.data
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(Expr::is_zero)
    }

    pub fn max_var(&self) -> Option<usize> {
        self.data.iter().filter_map(Expr::max_var).max()
    }

    pub fn is_constant(&self) -> bool {
        self.max_var().is_none()
    }

    pub fn eval(&self, x: &[f64]) -> Result<DMatrix<f64>, ExprError> {
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(i, j)] = self.get(i, j).eval(x)?;
            }
        }
        Ok(out)
    }

    pub fn diff(&self, idx: usize) -> Self {
        ExprMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|e| e.diff(idx)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(&Expr) -> Expr) -> Self {
        ExprMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(f).collect() }
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).clone())
    }

    pub fn scale(&self, s: &Expr) -> Self {
        self.map(|e| Expr::mul(s.clone(), e.clone()))
    }

    pub fn neg(&self) -> Self {
        self.map(|e| Expr::neg(e.clone()))
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(self.rows, self.cols, |i, j| {
            Expr::add(self.get(i, j).clone(), other.get(i, j).clone())
        })
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_fn(self.rows, self.cols, |i, j| {
            Expr::sub(self.get(i, j).clone(), other.get(i, j).clone())
        })
    }

    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        Self::from_fn(self.rows, other.cols, |i, j| {
            Expr::sum((0..self.cols).map(|k| Expr::mul(self.get(i, k).clone(), other.get(k, j).clone())))
        })
    }

    fn minor(&self, skip_row: usize, skip_col: usize) -> Self {
        let n = self.rows;
        let mut data = Vec::with_capacity((n - 1) * (n - 1));
        for i in (0..n).filter(|&i| i != skip_row) {
            for j in (0..n).filter(|&j| j != skip_col) {
                data.push(self.get(i, j).clone());
            }
        }
        ExprMatrix { rows: n - 1, cols: n - 1, data }
    }

    /// Cofactor expansion; fine for the 2..4 dimensional charts used here.
    pub fn det(&self) -> Expr {
        assert_eq!(self.rows, self.cols);
        match self.rows {
            0 => Expr::one(),
            1 => self.get(0, 0).clone(),
            n => {
                let mut acc = Expr::zero();
                for j in 0..n {
                    let a = self.get(0, j);
                    if a.is_zero() {
                        continue;
                    }
                    let term = Expr::mul(a.clone(), self.minor(0, j).det());
                    acc = if j % 2 == 0 { Expr::add(acc, term) } else { Expr::sub(acc, term) };
                }
                acc
            }
        }
    }

    /// Adjugate over determinant.
    pub fn inverse(&self) -> Self {
        let n = self.rows;
        let det = self.det();
        if n == 1 {
            return Self::from_fn(1, 1, |_, _| Expr::div(Expr::one(), det.clone()));
        }
        Self::from_fn(n, n, |i, j| {
            let c = self.minor(j, i).det();
            let c = if (i + j) % 2 == 0 { c } else { Expr::neg(c) };
            Expr::div(c, det.clone())
        })
    }
}
