//! Small square integer matrices with exact arithmetic.
//!
//! Everything here works over `i64` with `i128` intermediates; sizes are the
//! torus dimension `d` (typically 2 or 3), so cofactor expansion is fine.

use std::fmt;

/// Row-major square integer matrix.
#[derive(Clone, PartialEq, Eq)]
pub struct IntMatrix {
    n: usize,
    a: Vec<i64>,
}

impl IntMatrix {
    pub fn zeros(n: usize) -> Self {
        IntMatrix {
            n,
            a: vec![0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "matrix must be square");
        IntMatrix {
            n,
            a: rows.iter().flatten().copied().collect(),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> Vec<Vec<i64>> {
        (0..self.n).map(|i| self.row(i).to_vec()).collect()
    }

    /// Determinant by cofactor expansion in `i128`.
    pub fn det(&self) -> i64 {
        fn det_rec(n: usize, a: &[i128]) -> i128 {
            if n == 1 {
                return a[0];
            }
            if n == 2 {
                return a[0] * a[3] - a[1] * a[2];
            }
            let mut acc: i128 = 0;
            let mut minor = vec![0i128; (n - 1) * (n - 1)];
            for col in 0..n {
                let mut idx = 0;
                for i in 1..n {
                    for j in 0..n {
                        if j != col {
                            minor[idx] = a[i * n + j];
                            idx += 1;
                        }
                    }
                }
                let sign = if col % 2 == 0 { 1 } else { -1 };
                acc += sign * a[col] * det_rec(n - 1, &minor);
            }
            acc
        }
        let wide: Vec<i128> = self.a.iter().map(|&x| x as i128).collect();
        let d = det_rec(self.n, &wide);
        i64::try_from(d).expect("determinant overflow")
    }

    /// Exact inverse; only valid for unimodular matrices (det = ±1).
    pub fn inverse_unimodular(&self) -> Option<IntMatrix> {
        let det = self.det();
        if det != 1 && det != -1 {
            return None;
        }
        let n = self.n;
        let mut inv = Self::zeros(n);
        // adjugate / det
        for i in 0..n {
            for j in 0..n {
                let mut minor = Vec::with_capacity((n - 1) * (n - 1));
                for r in 0..n {
                    if r == j {
                        continue;
                    }
                    for c in 0..n {
                        if c == i {
                            continue;
                        }
                        minor.push(self[(r, c)]);
                    }
                }
                let m = IntMatrix { n: n - 1, a: minor };
                let cof = if (i + j) % 2 == 0 { m.det() } else { -m.det() };
                inv[(i, j)] = cof * det; // det = ±1, so 1/det = det
            }
        }
        Some(inv)
    }

    pub fn transpose(&self) -> IntMatrix {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mat_mul(&self, other: &IntMatrix) -> IntMatrix {
        assert_eq!(self.n, other.n);
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let mut s: i128 = 0;
                for k in 0..self.n {
                    s += self[(i, k)] as i128 * other[(k, j)] as i128;
                }
                out[(i, j)] = i64::try_from(s).expect("matrix product overflow");
            }
        }
        out
    }

    pub fn mul_vec_i64(&self, v: &[i64]) -> Vec<i64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                let s: i128 = (0..self.n)
                    .map(|j| self[(i, j)] as i128 * v[j] as i128)
                    .sum();
                i64::try_from(s).expect("matrix-vector overflow")
            })
            .collect()
    }

    pub fn mul_vec_f64(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] as f64 * v[j]).sum())
            .collect()
    }
}

impl std::ops::Index<(usize, usize)> for IntMatrix {
    type Output = i64;
    fn index(&self, (i, j): (usize, usize)) -> &i64 {
        &self.a[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for IntMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut i64 {
        &mut self.a[i * self.n + j]
    }
}

impl fmt::Debug for IntMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for i in 0..self.n {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// Extended gcd: returns `(g, x, y)` with `g = a*x + b*y`, `g >= 0`.
pub fn extended_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a.abs(), a.signum(), 0)
    } else {
        let (g, x, y) = extended_gcd(b, a.rem_euclid(b));
        // a = q*b + r with r = a.rem_euclid(b), q = (a - r)/b
        let q = (a - a.rem_euclid(b)) / b;
        (g, y, x - q * y)
    }
}

pub fn gcd_slice(v: &[i64]) -> i64 {
    v.iter().fold(0i64, |g, &x| extended_gcd(g, x).0)
}
