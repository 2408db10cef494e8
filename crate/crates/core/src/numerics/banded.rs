//! Complex banded matrices and an LU factorisation with partial pivoting.
//!
//! Rows are stored with a column window `[i - kl, i + kl + ku]`, which leaves
//! room for the fill-in created by row interchanges.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// A square complex matrix with `kl` sub-diagonals and `ku` super-diagonals.
#[derive(Clone, Debug)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<Complex64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Self {
            n,
            kl,
            ku,
            data: vec![Complex64::new(0.0, 0.0); n * (kl + ku + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    fn offset(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.n || j >= self.n || j + self.kl < i || j > i + self.ku {
            None
        } else {
            Some(i * (self.kl + self.ku + 1) + (j + self.kl - i))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.offset(i, j)
            .map_or(Complex64::new(0.0, 0.0), |o| self.data[o])
    }

    /// Adds `v` to entry `(i, j)`; panics when the entry is outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: Complex64) {
        let o = self
            .offset(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside the band"));
        self.data[o] += v;
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n);
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.get(i, j).norm()).sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    pub fn factor(&self) -> Result<BandedLu> {
        BandedLu::new(self)
    }
}

/// LU factors of a banded matrix, `P A = L U`, with the row interchanges
/// applied in elimination order.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    width: usize,
    upper: Vec<Complex64>,
    mult: Vec<Complex64>,
    piv: Vec<usize>,
    min_pivot_ratio: f64,
}

impl BandedLu {
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    fn new(a: &BandedMatrix) -> Result<Self> {
        let (n, kl, ku) = (a.n, a.kl, a.ku);
        let width = 2 * kl + ku + 1;
        let mut lu = BandedLu {
            n,
            kl,
            width,
            upper: vec![Complex64::new(0.0, 0.0); n * width],
            mult: vec![Complex64::new(0.0, 0.0); n * kl],
            piv: vec![0; n],
            min_pivot_ratio: f64::INFINITY,
        };
        for i in 0..n {
            let lo = i.saturating_sub(kl);
            let hi = (i + ku).min(n.saturating_sub(1));
            for j in lo..=hi {
                let o = lu.idx(i, j);
                lu.upper[o] = a.get(i, j);
            }
        }
        let scale = a.norm_inf().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = lu.upper[lu.idx(k, k)].norm();
            for r in k + 1..=last {
                let v = lu.upper[lu.idx(r, k)].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            lu.piv[k] = p;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SolverBreakdown(format!(
                    "zero pivot in column {k} of a banded factorisation"
                )));
            }
            lu.min_pivot_ratio = lu.min_pivot_ratio.min(best / scale);
            let jmax = (k + kl + ku).min(n - 1);
            if p != k {
                for j in k..=jmax {
                    let (a_idx, b_idx) = (lu.idx(k, j), lu.idx(p, j));
                    lu.upper.swap(a_idx, b_idx);
                }
            }
            let pivot = lu.upper[lu.idx(k, k)];
            for r in k + 1..=last {
                let rk = lu.idx(r, k);
                let m = lu.upper[rk] / pivot;
                lu.mult[k * kl + (r - k - 1)] = m;
                lu.upper[rk] = Complex64::new(0.0, 0.0);
                if m == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in k + 1..=jmax {
                    let kj = lu.idx(k, j);
                    let rj = lu.idx(r, j);
                    let u = lu.upper[kj];
                    lu.upper[rj] -= m * u;
                }
            }
        }
        Ok(lu)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Smallest pivot magnitude relative to the infinity norm of the matrix.
    pub fn min_pivot_ratio(&self) -> f64 {
        self.min_pivot_ratio
    }

    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        assert_eq!(b.len(), self.n);
        let (n, kl) = (self.n, self.kl);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            let last = (k + kl).min(n - 1);
            for r in k + 1..=last {
                b[r] -= self.mult[k * kl + (r - k - 1)] * bk;
            }
        }
        let reach = self.width - 1 - kl;
        for k in (0..n).rev() {
            let mut s = b[k];
            let jmax = (k + reach).min(n - 1);
            for j in k + 1..=jmax {
                s -= self.upper[self.idx(k, j)] * b[j];
            }
            b[k] = s / self.upper[self.idx(k, k)];
        }
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
