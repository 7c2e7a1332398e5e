//! Dense symmetric linear algebra for the small `K x K` systems that appear in
//! covariate adjustment (K is the number of covariates, typically a handful).
//!
//! Inversion uses an LDLᵀ factorization with symmetric diagonal pivoting and a
//! relative pivot test; rank deficiency is an error unless the caller opts into
//! the spectral pseudo-inverse.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Default relative pivot tolerance used by [`SymMatrix::invert_spd`].
pub const DEFAULT_REL_TOL: f64 = 1e-10;

/// Square symmetric matrix stored densely in row-major order.
///
/// Entries are mirrored on construction so `m[(i, j)] == m[(j, i)]` holds bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    entries: Vec<f64>,
}

/// How singular or near-singular matrices are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InverseMode {
    /// Fail with [`Error::SingularMatrix`].
    #[default]
    Strict,
    /// Moore-Penrose inverse with eigenvalues below `rel_tol * max eigenvalue` dropped.
    Pseudo,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim >= 1, "SymMatrix dimension must be at least 1");
        Self {
            dim,
            entries: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.entries[i * dim + i] = 1.0;
        }
        m
    }

    /// Builds a matrix from the lower triangle produced by `f(i, j)` with `j <= i`.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..=i {
                let v = f(i, j);
                m.entries[i * dim + j] = v;
                m.entries[j * dim + i] = v;
            }
        }
        m
    }

    /// Builds a matrix from rows, requiring exact symmetry.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
        }
        for i in 0..dim {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::InvalidInput(format!(
                        "matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self::from_fn(dim, |i, j| rows[i][j]))
    }

    /// Symmetrizes an arbitrary square row-major buffer as `(A + Aᵀ) / 2`.
    pub fn symmetrized(dim: usize, entries: &[f64]) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        Self::from_fn(dim, |i, j| {
            0.5 * (entries[i * dim + j] + entries[j * dim + i])
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    /// Row-major view of all entries.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// Adds `alpha * v vᵀ` in place.
    pub fn rank_one_update(&mut self, alpha: f64, v: &[f64]) {
        debug_assert_eq!(v.len(), self.dim);
        let d = self.dim;
        for i in 0..d {
            for j in 0..=i {
                let val = self.entries[i * d + j] + alpha * v[i] * v[j];
                self.entries[i * d + j] = val;
                self.entries[j * d + i] = val;
            }
        }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self {
            dim: self.dim,
            entries: self.entries.iter().map(|x| alpha * x).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other.dim)?;
        Ok(Self {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .zip(&other.entries)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(v.len())?;
        Ok(self
            .entries
            .chunks(self.dim)
            .map(|row| dot(row, v))
            .collect())
    }

    /// Plain matrix product, returned row-major (the product of two symmetric
    /// matrices is not symmetric in general).
    pub fn matmul(&self, other: &Self) -> Result<Vec<f64>> {
        self.check_dim(other.dim)?;
        let d = self.dim;
        let mut out = vec![0.0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.entries[i * d + k];
                for j in 0..d {
                    out[i * d + j] += a * other.entries[k * d + j];
                }
            }
        }
        Ok(out)
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found,
            });
        }
        Ok(())
    }

    /// Inverts a symmetric positive-definite matrix.
    ///
    /// Factorizes `P M Pᵀ = L D Lᵀ` choosing the largest remaining diagonal as
    /// pivot at each step. Fails when the smallest pivot falls below
    /// `rel_tol` times the largest one.
    pub fn invert_spd(&self, rel_tol: f64) -> Result<Self> {
        if !(rel_tol > 0.0) {
            return Err(Error::InvalidInput(format!(
                "rel_tol must be > 0, got {rel_tol}"
            )));
        }
        let d = self.dim;
        let mut a = self.entries.clone();
        let mut perm: Vec<usize> = (0..d).collect();
        let mut pivots = vec![0.0; d];

        for k in 0..d {
            // Symmetric pivot: bring the largest remaining diagonal to position k.
            let mut best = k;
            for i in k + 1..d {
                if a[i * d + i] > a[best * d + best] {
                    best = i;
                }
            }
            if best != k {
                swap_sym(&mut a, d, k, best);
                perm.swap(k, best);
            }
            let pivot = a[k * d + k];
            pivots[k] = pivot;
            if pivot == 0.0 || !pivot.is_finite() {
                return Err(singular(&pivots[..=k]));
            }
            for i in k + 1..d {
                a[i * d + k] /= pivot;
            }
            for i in k + 1..d {
                let lik = a[i * d + k];
                for j in k + 1..=i {
                    let v = a[i * d + j] - lik * pivot * a[j * d + k];
                    a[i * d + j] = v;
                    a[j * d + i] = v;
                }
            }
        }

        let max_pivot = pivots.iter().fold(0.0_f64, |m, p| m.max(p.abs()));
        let min_pivot = pivots.iter().fold(f64::INFINITY, |m, &p| m.min(p));
        if min_pivot < rel_tol * max_pivot {
            return Err(Error::SingularMatrix {
                matrix: "matrix".into(),
                min_pivot,
                max_pivot,
            });
        }

        // Solve L D Lᵀ x = e_j column by column, in permuted coordinates.
        let mut inv_perm = vec![0.0; d * d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            col.iter_mut().for_each(|c| *c = 0.0);
            col[j] = 1.0;
            for i in 0..d {
                let mut s = col[i];
                for k in 0..i {
                    s -= a[i * d + k] * col[k];
                }
                col[i] = s;
            }
            for i in 0..d {
                col[i] /= pivots[i];
            }
            for i in (0..d).rev() {
                let mut s = col[i];
                for k in i + 1..d {
                    s -= a[k * d + i] * col[k];
                }
                col[i] = s;
            }
            for i in 0..d {
                inv_perm[i * d + j] = col[i];
            }
        }
        // Undo the permutation: M⁻¹[perm[i], perm[j]] = inv_perm[i, j].
        let mut inv = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                inv[perm[i] * d + perm[j]] = inv_perm[i * d + j];
            }
        }
        Ok(Self::symmetrized(d, &inv))
    }

    /// Moore-Penrose pseudo-inverse with a relative spectral cutoff.
    pub fn pseudo_inverse(&self, rel_tol: f64) -> Result<Self> {
        let (values, vectors) = self.eigen()?;
        let d = self.dim;
        let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let mut out = vec![0.0; d * d];
        for (k, &lambda) in values.iter().enumerate() {
            if lambda.abs() <= rel_tol * max || lambda == 0.0 {
                continue;
            }
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] += vectors[i * d + k] * vectors[j * d + k] / lambda;
                }
            }
        }
        Ok(Self::symmetrized(d, &out))
    }

    /// Inverts according to `mode`.
    pub fn inverse(&self, mode: InverseMode, rel_tol: f64) -> Result<Self> {
        match mode {
            InverseMode::Strict => self.invert_spd(rel_tol),
            InverseMode::Pseudo => self.pseudo_inverse(rel_tol),
        }
    }

    /// Cyclic Jacobi eigendecomposition. Returns eigenvalues and the row-major
    /// matrix whose columns are the matching eigenvectors.
    pub fn eigen(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.dim;
        let mut a = self.entries.clone();
        let mut v = Self::identity(d).entries;
        for _sweep in 0..100 {
            let off: f64 = (0..d)
                .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * d + j] * a[i * d + j])
                .sum();
            let scale: f64 = a.iter().map(|x| x * x).sum();
            if off <= f64::EPSILON * f64::EPSILON * scale || off == 0.0 {
                let values = (0..d).map(|i| a[i * d + i]).collect();
                return Ok((values, v));
            }
            for p in 0..d {
                for q in p + 1..d {
                    let apq = a[p * d + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..d {
                        let akp = a[k * d + p];
                        let akq = a[k * d + q];
                        a[k * d + p] = c * akp - s * akq;
                        a[k * d + q] = s * akp + c * akq;
                    }
                    for k in 0..d {
                        let apk = a[p * d + k];
                        let aqk = a[q * d + k];
                        a[p * d + k] = c * apk - s * aqk;
                        a[q * d + k] = s * apk + c * aqk;
                    }
                    for k in 0..d {
                        let vkp = v[k * d + p];
                        let vkq = v[k * d + q];
                        v[k * d + p] = c * vkp - s * vkq;
                        v[k * d + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        Err(Error::InvalidInput(
            "Jacobi eigensolver did not converge".into(),
        ))
    }
}

fn swap_sym(a: &mut [f64], d: usize, p: usize, q: usize) {
    for k in 0..d {
        a.swap(p * d + k, q * d + k);
    }
    for k in 0..d {
        a.swap(k * d + p, k * d + q);
    }
}

fn singular(pivots: &[f64]) -> Error {
    Error::SingularMatrix {
        matrix: "matrix".into(),
        min_pivot: pivots.iter().fold(f64::INFINITY, |m, &p| m.min(p)),
        max_pivot: pivots.iter().fold(0.0_f64, |m, p| m.max(p.abs())),
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `vᵀ M⁻¹ v` for a precomputed inverse.
pub fn quadratic_form(v: &[f64], m_inv: &SymMatrix) -> Result<f64> {
    if v.len() != m_inv.dim() {
        return Err(Error::DimensionMismatch {
            expected: m_inv.dim(),
            found: v.len(),
        });
    }
    Ok(bilinear(v, m_inv, v))
}

/// `uᵀ M v` without dimension checks.
#[inline]
pub fn bilinear(u: &[f64], m: &SymMatrix, v: &[f64]) -> f64 {
    let d = m.dim();
    let mut s = 0.0;
    for i in 0..d {
        let row = &m.entries[i * d..(i + 1) * d];
        s += u[i] * dot(row, v);
    }
    s
}
