//! Small dense linear algebra: row-major square matrices and an LU
//! factorization with partial pivoting.
//!
//! The chains solved here have at most a few hundred states, so a dense
//! direct solve is all that is needed.

use std::fmt;
use std::ops::{Index, IndexMut};

/// Row-major dense square matrix.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from rows. Returns `None` if the rows are ragged or
    /// the matrix is not square.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        Some(Self {
            n,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data
            .chunks(self.n.max(1))
            .take(self.n)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `A x` for a column vector `x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `x A` for a row vector `x`.
    pub fn vec_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, xi) in x.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += xi * a;
            }
        }
        out
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.to_rows()).finish()
    }
}

/// Why a factorization was rejected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Singularity {
    /// An exactly zero pivot showed up in this column.
    ZeroPivot(usize),
    /// The reciprocal condition estimate fell below the threshold.
    IllConditioned { rcond: f64 },
}

/// `P A = L U` with unit lower-triangular `L`, stored in place.
#[derive(Debug, Clone)]
pub struct Lu {
    lu: Matrix,
    perm: Vec<usize>,
    norm_one: f64,
}

impl Lu {
    /// Factors `a` and rejects it when the reciprocal 1-norm condition
    /// estimate is below `n * f64::EPSILON`.
    pub fn factor(a: Matrix) -> Result<Self, Singularity> {
        let n = a.dim();
        let norm_one = a.norm_one();
        let mut lu = a;
        let mut perm: Vec<usize> = (0..n).collect();

        for k in 0..n {
            let p = (k..n)
                .max_by(|&x, &y| lu[(x, k)].abs().total_cmp(&lu[(y, k)].abs()))
                .unwrap_or(k);
            if lu[(p, k)] == 0.0 {
                return Err(Singularity::ZeroPivot(k));
            }
            if p != k {
                for j in 0..n {
                    lu.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let factor = lu[(i, k)] / pivot;
                lu[(i, k)] = factor;
                if factor != 0.0 {
                    for j in k + 1..n {
                        let u = lu[(k, j)];
                        lu[(i, j)] -= factor * u;
                    }
                }
            }
        }

        let out = Self { lu, perm, norm_one };
        let rcond = out.rcond_estimate();
        if !(rcond >= n as f64 * f64::EPSILON) {
            return Err(Singularity::IllConditioned { rcond });
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.lu.dim()
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[(i, j)] * x[j]).sum();
            x[i] = (x[i] - s) / self.lu[(i, i)];
        }
        x
    }

    /// Solves `A x = b`, then applies up to `steps` rounds of iterative
    /// refinement with residuals `b - A x` accumulated in compensated
    /// (roughly doubled) precision. `a` must be the matrix that was factored.
    ///
    /// This recovers full f64 accuracy for systems whose condition number
    /// is far above `1/ε^(1/2)`, which happens for heavily loaded chains.
    pub fn solve_refined(&self, a: &Matrix, b: &[f64], steps: usize) -> Vec<f64> {
        let mut x = self.solve(b);
        for _ in 0..steps {
            let r: Vec<f64> = (0..self.dim())
                .map(|i| residual_entry(b[i], a.row(i), &x))
                .collect();
            if r.iter().all(|&v| v == 0.0) {
                break;
            }
            let dx = self.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        }
        x
    }

    /// Solves `Aᵀ x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        // Aᵀ = Uᵀ Lᵀ P, so solve Uᵀ z = b, Lᵀ y = z, x = Pᵀ y.
        let mut z = b.to_vec();
        for i in 0..n {
            let s: f64 = (0..i).map(|j| self.lu[(j, i)] * z[j]).sum();
            z[i] = (z[i] - s) / self.lu[(i, i)];
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| self.lu[(j, i)] * z[j]).sum();
            z[i] -= s;
        }
        let mut x = vec![0.0; n];
        for (k, &p) in self.perm.iter().enumerate() {
            x[p] = z[k];
        }
        x
    }

    /// Hager's estimate of `1 / (‖A‖₁ ‖A⁻¹‖₁)`.
    pub fn rcond_estimate(&self) -> f64 {
        let n = self.dim();
        if n == 0 || self.norm_one == 0.0 {
            return 0.0;
        }
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            let y_norm: f64 = y.iter().map(|v| v.abs()).sum();
            if !y_norm.is_finite() {
                return 0.0;
            }
            if y_norm <= est {
                break;
            }
            est = y_norm;
            let sign: Vec<f64> = y
                .iter()
                .map(|&v| if v >= 0.0 { 1.0 } else { -1.0 })
                .collect();
            let z = self.solve_transpose(&sign);
            let (j, zmax) = z
                .iter()
                .map(|v| v.abs())
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            let zx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= zx {
                break;
            }
            x = vec![0.0; n];
            x[j] = 1.0;
        }
        1.0 / (self.norm_one * est)
    }
}

/// Solves `A x = b` after equilibrating rows and columns with powers of
/// two, so the scaling itself is exact and the condition check sees the
/// balanced matrix rather than one dominated by badly scaled states.
pub fn solve_equilibrated(a: &Matrix, b: &[f64], steps: usize) -> Result<Vec<f64>, Singularity> {
    let n = a.dim();
    let mut row = vec![1.0; n];
    let mut col = vec![1.0; n];
    let mut s = a.clone();
    // A few Ruiz sweeps: divide each row and column by the square root of
    // its largest entry, rounded to a power of two.
    for _ in 0..20 {
        let mut changed = false;
        for i in 0..n {
            let f = pow2_scale(s.row(i).iter().fold(0.0, |m, v| m.max(v.abs())));
            if f != 1.0 {
                changed = true;
                row[i] *= f;
                (0..n).for_each(|j| s[(i, j)] *= f);
            }
        }
        for j in 0..n {
            let f = pow2_scale((0..n).fold(0.0, |m, i| m.max(s[(i, j)].abs())));
            if f != 1.0 {
                changed = true;
                col[j] *= f;
                (0..n).for_each(|i| s[(i, j)] *= f);
            }
        }
        if !changed {
            break;
        }
    }
    let rhs: Vec<f64> = b.iter().zip(&row).map(|(v, r)| v * r).collect();
    let lu = Lu::factor(s.clone())?;
    let y = lu.solve_refined(&s, &rhs, steps);
    Ok(y.iter().zip(&col).map(|(v, c)| v * c).collect())
}

/// `2^-round(log2(max) / 2)`, or 1 for a zero or non-finite maximum.
fn pow2_scale(max: f64) -> f64 {
    if max == 0.0 || !max.is_finite() {
        return 1.0;
    }
    let e = (max.log2() / 2.0).round() as i32;
    2f64.powi(-e)
}

/// `b - row · x` with error-free transformations (TwoSum / TwoProduct), so
/// the result is as accurate as if computed in twice the working precision.
fn residual_entry(b: f64, row: &[f64], x: &[f64]) -> f64 {
    let (mut sum, mut comp) = (b, 0.0);
    for (a, xi) in row.iter().zip(x) {
        let p = -a * xi;
        let p_err = (-a).mul_add(*xi, -p);
        let t = sum + p;
        let z = t - sum;
        let s_err = (sum - (t - z)) + (p - z);
        sum = t;
        comp += s_err + p_err;
    }
    sum + comp
}
