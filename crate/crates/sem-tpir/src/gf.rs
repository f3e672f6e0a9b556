//! Prime-field arithmetic and exact linear algebra over GF(p).
//!
//! Elements are plain `u64` values reduced into `[0, p)`; every operation
//! goes through a [`PrimeField`] handle carrying the modulus, so one binary
//! can serve differently configured fields. The modulus is capped below
//! `2^31` so that any product of two reduced elements fits in a `u64` and
//! reduction stays single-width Barrett.

use crate::{Error, Result};
use rand::Rng;

/// Largest admissible modulus (exclusive).
pub const MAX_MODULUS: u64 = 1 << 31;

/// A prime field GF(p) with a word-sized modulus.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PrimeField {
    modulus: u64,
    /// Barrett constant `floor(2^64 / p)`.
    barrett: u64,
}

fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    if p.is_multiple_of(2) {
        return p == 2;
    }
    let mut d = 3u64;
    while d * d <= p {
        if p.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

impl PrimeField {
    /// Validates that `modulus` is prime and within `[2, 2^31)`.
    pub fn new(modulus: u64) -> Result<Self> {
        if modulus >= MAX_MODULUS {
            return Err(Error::InvalidSpec(format!(
                "field modulus {modulus} exceeds the supported bound {MAX_MODULUS}"
            )));
        }
        if !is_prime(modulus) {
            return Err(Error::InvalidSpec(format!(
                "field modulus {modulus} is not prime"
            )));
        }
        Ok(PrimeField {
            modulus,
            barrett: ((1u128 << 64) / modulus as u128) as u64,
        })
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Reduces an arbitrary `u64` into the field.
    pub fn element(&self, v: u64) -> u64 {
        v % self.modulus
    }

    /// Barrett reduction of `x < 2^62` (any sum/product of reduced values).
    #[inline]
    fn reduce(&self, x: u64) -> u64 {
        let q = ((x as u128 * self.barrett as u128) >> 64) as u64;
        let mut r = x - q * self.modulus;
        while r >= self.modulus {
            r -= self.modulus;
        }
        r
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.modulus {
            s - self.modulus
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.modulus - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.modulus - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        self.reduce(a * b)
    }

    /// Fused multiply-add `acc + a*b`, the inner step of every dot product.
    #[inline]
    pub fn mul_add(&self, acc: u64, a: u64, b: u64) -> u64 {
        self.reduce(acc + a * b)
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1u64 % self.modulus;
        base %= self.modulus;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; zero is an explicit error, never a sentinel.
    pub fn inv(&self, a: u64) -> Result<u64> {
        if a.is_multiple_of(self.modulus) {
            return Err(Error::DivisionByZero);
        }
        Ok(self.pow(a, self.modulus - 2))
    }

    pub fn div(&self, a: u64, b: u64) -> Result<u64> {
        Ok(self.mul(a % self.modulus, self.inv(b)?))
    }

    /// Uniform element drawn from the whole field.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.random_range(0..self.modulus)
    }

    /// Dot product of two equal-length slices of reduced elements.
    pub fn dot(&self, a: &[u64], b: &[u64]) -> u64 {
        debug_assert_eq!(a.len(), b.len());
        let mut acc = 0u64;
        for (&x, &y) in a.iter().zip(b) {
            acc = self.mul_add(acc, x, y);
        }
        acc
    }
}

/// Dense row-major matrix of reduced field elements.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1;
        }
        m
    }

    /// Builds a matrix from explicit rows; every row must have equal length.
    pub fn from_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(Matrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Uniformly random matrix over the field.
    pub fn random<R: Rng + ?Sized>(
        field: &PrimeField,
        rows: usize,
        cols: usize,
        rng: &mut R,
    ) -> Self {
        Matrix {
            rows,
            cols,
            data: (0..rows * cols).map(|_| field.sample(rng)).collect(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Selects a set of rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &r in idx {
            data.extend_from_slice(self.row(r));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Matrix product `self * other`.
    pub fn mul(&self, other: &Matrix, field: &PrimeField) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a == 0 {
                    continue;
                }
                let src = other.row(l);
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = field.mul_add(*d, a, s);
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    pub fn mat_vec(&self, v: &[u64], field: &PrimeField) -> Result<Vec<u64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} * vec[{}]",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        Ok((0..self.rows).map(|i| field.dot(self.row(i), v)).collect())
    }

    /// In-place forward elimination with partial pivoting by first nonzero
    /// row. Returns the pivot column list; `aug` extra columns on the right
    /// are carried along but never pivoted on.
    fn echelon(&mut self, aug: usize, field: &PrimeField) -> Vec<usize> {
        let n = self.cols - aug;
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..n {
            // First row at or below `r` with a nonzero entry in column c.
            let Some(p) = (r..self.rows).find(|&i| self.get(i, c) != 0) else {
                continue;
            };
            if p != r {
                for j in 0..self.cols {
                    let (a, b) = (self.get(r, j), self.get(p, j));
                    self.set(r, j, b);
                    self.set(p, j, a);
                }
            }
            let inv = field
                .inv(self.get(r, c))
                .expect("pivot is nonzero by selection");
            for j in c..self.cols {
                let v = field.mul(self.get(r, j), inv);
                self.set(r, j, v);
            }
            for i in 0..self.rows {
                if i == r {
                    continue;
                }
                let f = self.get(i, c);
                if f == 0 {
                    continue;
                }
                for j in c..self.cols {
                    let v = field.sub(self.get(i, j), field.mul(f, self.get(r, j)));
                    self.set(i, j, v);
                }
            }
            pivots.push(c);
            r += 1;
            if r == self.rows {
                break;
            }
        }
        pivots
    }

    /// Rank via exact elimination on a scratch copy.
    pub fn rank(&self, field: &PrimeField) -> usize {
        let mut work = self.clone();
        work.echelon(0, field).len()
    }

    /// Solves the square system `self * x = b` exactly.
    ///
    /// Rank-deficient systems return [`Error::Singular`] carrying the rank
    /// actually found.
    pub fn solve(&self, b: &[u64], field: &PrimeField) -> Result<Vec<u64>> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "solve needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        if b.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "rhs length {} != {}",
                b.len(),
                self.rows
            )));
        }
        let n = self.rows;
        let mut work = Matrix::zeros(n, n + 1);
        for (i, &rhs) in b.iter().enumerate() {
            work.data[i * (n + 1)..i * (n + 1) + n].copy_from_slice(self.row(i));
            work.data[i * (n + 1) + n] = rhs;
        }
        let pivots = work.echelon(1, field);
        if pivots.len() < n {
            return Err(Error::Singular {
                rank: pivots.len(),
                dim: n,
            });
        }
        Ok((0..n).map(|i| work.get(i, n)).collect())
    }

    /// Exact inverse of a square matrix.
    pub fn inverse(&self, field: &PrimeField) -> Result<Matrix> {
        if self.rows != self.cols {
            return Err(Error::DimensionMismatch(format!(
                "inverse needs a square matrix, got {}x{}",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut work = Matrix::zeros(n, 2 * n);
        for i in 0..n {
            work.data[i * 2 * n..i * 2 * n + n].copy_from_slice(self.row(i));
            work.data[i * 2 * n + n + i] = 1;
        }
        let pivots = work.echelon(n, field);
        if pivots.len() < n {
            return Err(Error::Singular {
                rank: pivots.len(),
                dim: n,
            });
        }
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, work.get(i, n + j));
            }
        }
        Ok(out)
    }

    /// True when elimination finds full rank, without allocating the inverse.
    pub fn is_invertible(&self, field: &PrimeField) -> bool {
        self.rows == self.cols && self.rank(field) == self.rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn modulus_validation() {
        assert!(PrimeField::new(2).is_ok());
        assert!(PrimeField::new(65537).is_ok());
        assert!(PrimeField::new(2147483647).is_ok());
        for bad in [0, 1, 4, 6, 65536, MAX_MODULUS, MAX_MODULUS + 7] {
            assert!(
                PrimeField::new(bad).is_err(),
                "modulus {bad} must be rejected"
            );
        }
    }

    #[test]
    fn small_products() {
        let f = PrimeField::new(7).unwrap();
        assert_eq!(f.mul(3, 5), 1);
        let f = PrimeField::new(65537).unwrap();
        // 65536 = -1, so its inverse is itself.
        assert_eq!(f.div(1, 65536).unwrap(), 65536);
    }

    #[test]
    fn division_by_zero_is_an_error() {
        let f = PrimeField::new(5).unwrap();
        assert!(matches!(f.inv(0), Err(Error::DivisionByZero)));
        assert!(matches!(f.div(3, 0), Err(Error::DivisionByZero)));
    }

    #[test]
    fn field_axioms_randomized() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for p in [2u64, 3, 5, 19, 65537, 2147483647] {
            let f = PrimeField::new(p).unwrap();
            for _ in 0..2500 {
                let (a, b, c) = (f.sample(&mut rng), f.sample(&mut rng), f.sample(&mut rng));
                assert_eq!(f.add(f.add(a, b), c), f.add(a, f.add(b, c)));
                assert_eq!(f.mul(f.mul(a, b), c), f.mul(a, f.mul(b, c)));
                assert_eq!(f.mul(a, f.add(b, c)), f.add(f.mul(a, b), f.mul(a, c)));
                assert_eq!(f.add(a, f.neg(a)), 0);
                assert_eq!(f.sub(f.add(a, b), b), a);
                if a != 0 {
                    assert_eq!(f.mul(a, f.inv(a).unwrap()), 1 % p);
                }
            }
        }
    }

    proptest! {
        #[test]
        fn barrett_reduction_matches_naive(
            a in 0u64..MAX_MODULUS,
            b in 0u64..MAX_MODULUS,
            p in proptest::sample::select(vec![2u64, 3, 5, 19, 251, 65537, 1_000_003, 2_147_483_647]),
        ) {
            let f = PrimeField::new(p).unwrap();
            let (a, b) = (a % p, b % p);
            prop_assert_eq!(f.mul(a, b), ((a as u128 * b as u128) % p as u128) as u64);
            prop_assert_eq!(f.add(a, b), (a + b) % p);
        }
    }

    #[test]
    fn hand_solved_two_by_two() {
        // Over GF(5): x1 + x2 = 0, x1 + 2*x2 = 1 has the unique solution (4, 1).
        let f = PrimeField::new(5).unwrap();
        let a = Matrix::from_rows(vec![vec![1, 1], vec![1, 2]]).unwrap();
        assert_eq!(a.solve(&[0, 1], &f).unwrap(), vec![4, 1]);
    }

    #[test]
    fn rank_detects_proportional_rows() {
        // Over GF(3), the second row is twice the first.
        let f = PrimeField::new(3).unwrap();
        let a = Matrix::from_rows(vec![vec![1, 2], vec![2, 1]]).unwrap();
        assert_eq!(a.rank(&f), 1);
        let err = a.solve(&[1, 2], &f).unwrap_err();
        assert!(matches!(err, Error::Singular { rank: 1, dim: 2 }));
    }

    #[test]
    fn solve_round_trips_random_systems() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let f = PrimeField::new(65537).unwrap();
        for n in [1usize, 2, 3, 8, 33, 200] {
            // Rejection-sample an invertible matrix, then check A^-1(Ax) = x.
            let a = loop {
                let cand = Matrix::random(&f, n, n, &mut rng);
                if cand.is_invertible(&f) {
                    break cand;
                }
            };
            let x: Vec<u64> = (0..n).map(|_| f.sample(&mut rng)).collect();
            let b = a.mat_vec(&x, &f).unwrap();
            assert_eq!(a.solve(&b, &f).unwrap(), x);
            let inv = a.inverse(&f).unwrap();
            assert_eq!(inv.mul(&a, &f).unwrap(), Matrix::identity(n));
        }
    }

    #[test]
    fn mat_mul_agrees_with_mat_vec() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let f = PrimeField::new(19).unwrap();
        let a = Matrix::random(&f, 5, 7, &mut rng);
        let b = Matrix::random(&f, 7, 4, &mut rng);
        let ab = a.mul(&b, &f).unwrap();
        for c in 0..4 {
            let col: Vec<u64> = (0..7).map(|r| b.get(r, c)).collect();
            let via_vec = a.mat_vec(&col, &f).unwrap();
            for (r, &v) in via_vec.iter().enumerate() {
                assert_eq!(ab.get(r, c), v);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let f = PrimeField::new(5).unwrap();
        let a = Matrix::zeros(2, 3);
        assert!(matches!(
            a.solve(&[0, 0], &f),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            a.mat_vec(&[1, 2], &f),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(Matrix::from_rows(vec![vec![1], vec![1, 2]]).is_err());
    }
}
