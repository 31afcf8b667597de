//! Dense complex linear algebra and deterministic random streams.

use std::fmt;

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Dense, row-major complex matrix. Column vectors are `n × 1` matrices.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            write!(f, "  ")?;
            for c in 0..self.cols {
                let z = self[(r, c)];
                write!(f, "{:+.4e}{:+.4e}j ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Column vector from its entries.
    pub fn column(entries: Vec<C64>) -> Result<Self> {
        let n = entries.len();
        Self::new(n, 1, entries)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn is_vector(&self) -> bool {
        self.cols == 1
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols != rhs.rows {
            return Err(Error::Shape(format!(
                "matmul {}x{} by {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let mut out = ComplexMatrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let dst = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for (k, &a) in row.iter().enumerate() {
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let src = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (d, &b) in dst.iter_mut().zip(src) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> ComplexMatrix {
        ComplexMatrix::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Sum of squared moduli of all entries.
    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn scale(&self, s: C64) -> ComplexMatrix {
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn add(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.shape() != rhs.shape() {
            return Err(Error::Shape(format!(
                "add {:?} and {:?}",
                self.shape(),
                rhs.shape()
            )));
        }
        Ok(ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        &self.data[r * self.cols + c]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        assert!(r < self.rows && c < self.cols, "index ({r},{c}) out of bounds");
        &mut self.data[r * self.cols + c]
    }
}

pub fn matmul(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    a.matmul(b)
}

pub fn hermitian(a: &ComplexMatrix) -> ComplexMatrix {
    a.hermitian()
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.frobenius_norm()
}

/// Square matrix with `v` on the diagonal.
pub fn diag_from_vector(v: &[C64]) -> Result<ComplexMatrix> {
    if v.is_empty() {
        return Err(Error::Shape("diagonal of an empty vector".into()));
    }
    let mut m = ComplexMatrix::zeros(v.len(), v.len());
    for (i, &z) in v.iter().enumerate() {
        m[(i, i)] = z;
    }
    if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("diagonal entries"));
    }
    Ok(m)
}

/// `a^H b` for two vectors of equal length.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Seeded random stream. Identical seeds give bit-identical sequences;
/// child streams are derived from the seed, never from the stream state.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream keyed by `stream`.
    pub fn derive(&self, stream: u64) -> Rng {
        Rng::new(splitmix64(self.seed ^ splitmix64(stream.wrapping_add(1))))
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Circularly-symmetric complex normal with unit variance.
    pub fn cn01(&mut self) -> C64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        C64::new(self.standard_normal() * s, self.standard_normal() * s)
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0);
        (self.uniform() * n as f64) as usize % n
    }

    /// `k` distinct indices from `0..n`, in draw order.
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n);
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.index(n - i);
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}

/// Matrix of i.i.d. CN(0, 1) entries.
pub fn sample_cn01(rng: &mut Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| rng.cn01())
}
