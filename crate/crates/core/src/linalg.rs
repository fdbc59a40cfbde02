//! Dense symmetric matrices and the few factorizations the estimators need.
//!
//! Everything here operates on small matrices (tens of rows at most), so the
//! implementations favor clarity and explicit rank checks over speed.

use crate::error::{Error, Result};

/// Pivot magnitude below which a Cholesky factorization is declared rank
/// deficient.
pub const PIVOT_TOL: f64 = 1e-10;

/// Row-major dense symmetric matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SymMat {
    n: usize,
    data: Vec<f64>,
}

impl SymMat {
    pub fn zeros(n: usize) -> Self {
        SymMat {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let mut m = SymMat::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "matrix must be square");
            for (j, &v) in row.iter().enumerate() {
                m.data[i * n + j] = v;
            }
        }
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.data {
            *v *= a;
        }
    }

    pub fn add_mat(&mut self, other: &SymMat) {
        assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    /// Rank-one update `self += w * v v^T` restricted to the given sparse
    /// entries `(index, value)` of `v`.
    pub fn rank_one_sparse(&mut self, w: f64, entries: &[(usize, f64)]) {
        for &(i, vi) in entries {
            for &(j, vj) in entries {
                self.data[i * self.n + j] += w * vi * vj;
            }
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.matvec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    /// `self * other * self` (all symmetric, result symmetrized against
    /// round-off).
    pub fn sandwich(&self, inner: &SymMat) -> SymMat {
        assert_eq!(self.n, inner.n);
        let n = self.n;
        // t = inner * self
        let mut t = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += inner.get(i, k) * self.get(k, j);
                }
                t[i * n + j] = s;
            }
        }
        let mut out = SymMat::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += self.get(i, k) * t[k * n + j];
                }
                out.data[i * n + j] = s;
            }
        }
        out.symmetrize();
        out
    }

    pub fn symmetrize(&mut self) {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                let m = 0.5 * (self.data[i * n + j] + self.data[j * n + i]);
                self.data[i * n + j] = m;
                self.data[j * n + i] = m;
            }
        }
    }

    /// Cholesky factor `L` (lower triangular, `self = L L^T`).
    ///
    /// Fails with the offending row indices when a pivot drops below
    /// [`PIVOT_TOL`] relative to the largest diagonal entry.
    pub fn cholesky(&self) -> std::result::Result<Vec<f64>, Vec<usize>> {
        let n = self.n;
        let scale = self
            .diag()
            .iter()
            .cloned()
            .fold(0.0_f64, |a, b| a.max(b.abs()))
            .max(1.0);
        let tol = PIVOT_TOL * scale;
        let mut l = vec![0.0; n * n];
        let mut bad = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if s <= tol {
                        bad.push(i);
                        // keep factoring with a neutral pivot so every
                        // deficient coordinate gets reported
                        l[i * n + i] = tol.sqrt();
                    } else {
                        l[i * n + i] = s.sqrt();
                    }
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        if bad.is_empty() {
            Ok(l)
        } else {
            Err(bad)
        }
    }

    /// Inverse via Cholesky; errors name the rank-deficient coordinates using
    /// `coord_names` when provided.
    pub fn spd_inverse(&self, coord_names: Option<&[String]>) -> Result<SymMat> {
        let n = self.n;
        let l = self.cholesky().map_err(|bad| Error::RankDeficient {
            coords: bad
                .iter()
                .map(|&i| match coord_names {
                    Some(names) => names[i].clone(),
                    None => format!("#{i}"),
                })
                .collect(),
        })?;
        // Solve L L^T X = I column by column.
        let mut inv = SymMat::zeros(n);
        let mut col = vec![0.0; n];
        for c in 0..n {
            for v in col.iter_mut() {
                *v = 0.0;
            }
            col[c] = 1.0;
            // forward: L y = e_c
            for i in 0..n {
                let mut s = col[i];
                for k in 0..i {
                    s -= l[i * n + k] * col[k];
                }
                col[i] = s / l[i * n + i];
            }
            // backward: L^T x = y
            for i in (0..n).rev() {
                let mut s = col[i];
                for k in (i + 1)..n {
                    s -= l[k * n + i] * col[k];
                }
                col[i] = s / l[i * n + i];
            }
            for r in 0..n {
                inv.data[r * n + c] = col[r];
            }
        }
        inv.symmetrize();
        Ok(inv)
    }

    /// Largest eigenvalue by the cyclic Jacobi method. Intended for small
    /// symmetric positive semidefinite matrices.
    pub fn largest_eigenvalue(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 0.0;
        }
        if n == 1 {
            return self.get(0, 0);
        }
        let mut a = self.clone();
        for _sweep in 0..64 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a.get(p, q).abs();
                }
            }
            if off < 1e-14 * (1.0 + a.trace().abs()) {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a.get(p, q);
                    if apq.abs() < 1e-300 {
                        continue;
                    }
                    let app = a.get(p, p);
                    let aqq = a.get(q, q);
                    let theta = 0.5 * (aqq - app) / apq;
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a.get(k, p);
                        let akq = a.get(k, q);
                        a.set(k, p, c * akp - s * akq);
                        a.set(k, q, s * akp + c * akq);
                    }
                    for k in 0..n {
                        let apk = a.get(p, k);
                        let aqk = a.get(q, k);
                        a.set(p, k, c * apk - s * aqk);
                        a.set(q, k, s * apk + c * aqk);
                    }
                }
            }
        }
        a.diag().iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}
