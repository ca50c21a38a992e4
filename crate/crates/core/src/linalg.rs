//! Dense matrices at the sizes this engine meets in practice (a handful of
//! constraints, two or three parameter axes). Hand-rolled on purpose: the
//! determinant and eigen routines below are the exact algorithms named by
//! the numerical contracts, and at n <= 4 they are also the fastest thing
//! available.

/// Square matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    a: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            a: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// 1x1 convenience constructor.
    pub fn scalar(v: f64) -> Self {
        Matrix { n: 1, a: vec![v] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.n + j] = v;
    }

    pub fn row_major(&self) -> &[f64] {
        &self.a
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix {
            n: self.n,
            a: self.a.iter().map(|x| c * x).collect(),
        }
    }

    pub fn added(&self, other: &Matrix) -> Matrix {
        debug_assert_eq!(self.n, other.n);
        Matrix {
            n: self.n,
            a: self
                .a
                .iter()
                .zip(&other.a)
                .map(|(x, y)| x + y)
                .collect(),
        }
    }

    pub fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn quadratic_form(&self, v: &[f64]) -> f64 {
        self.mat_vec(v).iter().zip(v).map(|(x, y)| x * y).sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// max |a_ij - a_ji|, for symmetry assertions.
    pub fn symmetry_defect(&self) -> f64 {
        let mut d = 0.0f64;
        for i in 0..self.n {
            for j in i + 1..self.n {
                d = d.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        d
    }

    /// Determinant via Gaussian elimination with partial pivoting.
    pub fn det_pivoted(&self) -> f64 {
        let n = self.n;
        if n == 0 {
            return 1.0;
        }
        let mut a = self.a.clone();
        let mut det = 1.0f64;
        for col in 0..n {
            let mut pivot = col;
            for r in col + 1..n {
                if a[r * n + col].abs() > a[pivot * n + col].abs() {
                    pivot = r;
                }
            }
            if a[pivot * n + col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                for k in 0..n {
                    a.swap(col * n + k, pivot * n + k);
                }
                det = -det;
            }
            let p = a[col * n + col];
            det *= p;
            for r in col + 1..n {
                let factor = a[r * n + col] / p;
                if factor != 0.0 {
                    for k in col..n {
                        a[r * n + k] -= factor * a[col * n + k];
                    }
                }
            }
        }
        det
    }

    /// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
    /// Returns (eigenvalues, V) with eigenvectors in the columns of V, so
    /// that A = V diag(values) V^T up to roundoff.
    pub fn sym_eigen(&self) -> (Vec<f64>, Matrix) {
        let n = self.n;
        let mut a = self.clone();
        let mut v = Matrix::identity(n);
        if n <= 1 {
            return ((0..n).map(|i| a.get(i, i)).collect(), v);
        }
        let scale = a.max_abs().max(f64::MIN_POSITIVE);
        for _sweep in 0..100 {
            let mut off = 0.0f64;
            for i in 0..n {
                for j in i + 1..n {
                    off = off.max(a.get(i, j).abs());
                }
            }
            if off <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    let apq = a.get(p, q);
                    if apq.abs() <= 1e-18 * scale {
                        continue;
                    }
                    let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (theta * theta + 1.0).sqrt())
                    } else {
                        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                    };
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
                    for k in 0..n {
                        let vkp = v.get(k, p);
                        let vkq = v.get(k, q);
                        v.set(k, p, c * vkp - s * vkq);
                        v.set(k, q, s * vkp + c * vkq);
                    }
                }
            }
        }
        ((0..n).map(|i| a.get(i, i)).collect(), v)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let (vals, _) = self.sym_eigen();
        vals.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Solve A x = b for symmetric A through the eigenbasis, dropping modes
    /// with eigenvalue <= floor. Returns the solution and whether any mode
    /// was dropped (the system was treated as degenerate).
    pub fn solve_eigen_floored(&self, b: &[f64], floor: f64) -> (Vec<f64>, bool) {
        let n = self.n;
        let (vals, v) = self.sym_eigen();
        let mut x = vec![0.0; n];
        let mut dropped = false;
        for j in 0..n {
            if vals[j] <= floor {
                dropped = true;
                continue;
            }
            let proj: f64 = (0..n).map(|i| v.get(i, j) * b[i]).sum();
            let coeff = proj / vals[j];
            for i in 0..n {
                x[i] += coeff * v.get(i, j);
            }
        }
        (x, dropped)
    }

    /// Inverse of a symmetric positive-definite matrix via the eigenbasis.
    /// None when the smallest eigenvalue is <= rel_floor times the largest,
    /// i.e. the matrix is numerically singular.
    pub fn inverse_spd(&self, rel_floor: f64) -> Option<Matrix> {
        let n = self.n;
        let (vals, v) = self.sym_eigen();
        let max = vals.iter().cloned().fold(0.0f64, f64::max);
        if max <= 0.0 {
            return None;
        }
        if vals.iter().any(|&e| e <= rel_floor * max) {
            return None;
        }
        let mut inv = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for k in 0..n {
                    s += v.get(i, k) * v.get(j, k) / vals[k];
                }
                inv.set(i, j, s);
            }
        }
        Some(inv)
    }
}
