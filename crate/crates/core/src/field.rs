//! Prime-field arithmetic and dense linear algebra over `F_q`.
//!
//! Elements are stored as bare canonical residues ([`FieldElement`]) and all
//! arithmetic goes through a [`Field`] context holding the modulus. Keeping the
//! modulus out of the element halves the memory footprint of large storages;
//! residues entering from outside (user data, snapshots) are checked with
//! [`Field::element`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported modulus (exclusive). Products of two residues fit in `u64`.
pub const MAX_MODULUS: u64 = 1 << 31;

/// A canonical residue in `[0, q)`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct FieldElement(u32);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    #[inline]
    pub fn value(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    #[cfg(test)]
    pub(crate) fn from_test(v: u32) -> Self {
        FieldElement(v)
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Arithmetic context for the prime field `F_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Field {
    q: u32,
}

/// Trial-division primality test; moduli are desk scale.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Smallest prime `>= n`.
pub fn next_prime(n: u64) -> u64 {
    let mut c = n.max(2);
    while !is_prime(c) {
        c += 1;
    }
    c
}

impl Field {
    pub fn new(q: u64) -> Result<Self> {
        if q >= MAX_MODULUS {
            return Err(Error::ModulusTooLarge(q));
        }
        if !is_prime(q) {
            return Err(Error::NotPrime(q));
        }
        Ok(Field { q: q as u32 })
    }

    #[inline]
    pub fn modulus(&self) -> u32 {
        self.q
    }

    /// Accepts `value` only if it is already a canonical residue of this field.
    pub fn element(&self, value: u64) -> Result<FieldElement> {
        if value < self.q as u64 {
            Ok(FieldElement(value as u32))
        } else {
            Err(Error::ForeignElement {
                value,
                modulus: self.q,
            })
        }
    }

    /// Reduces an arbitrary unsigned integer.
    #[inline]
    pub fn reduce(&self, value: u64) -> FieldElement {
        FieldElement((value % self.q as u64) as u32)
    }

    /// Reduces a signed integer into `[0, q)`.
    #[inline]
    pub fn from_i64(&self, value: i64) -> FieldElement {
        FieldElement(value.rem_euclid(self.q as i64) as u32)
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        let s = a.0 as u64 + b.0 as u64;
        let q = self.q as u64;
        FieldElement(if s >= q { s - q } else { s } as u32)
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        if a.0 >= b.0 {
            FieldElement(a.0 - b.0)
        } else {
            FieldElement(self.q - (b.0 - a.0))
        }
    }

    #[inline]
    pub fn neg(&self, a: FieldElement) -> FieldElement {
        if a.0 == 0 {
            a
        } else {
            FieldElement(self.q - a.0)
        }
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(((a.0 as u64 * b.0 as u64) % self.q as u64) as u32)
    }

    /// `acc + a*b`.
    #[inline]
    pub fn mul_add(&self, acc: FieldElement, a: FieldElement, b: FieldElement) -> FieldElement {
        FieldElement(((acc.0 as u64 + a.0 as u64 * b.0 as u64) % self.q as u64) as u32)
    }

    /// Multiplicative inverse by the extended Euclidean algorithm.
    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        if a.0 == 0 {
            return Err(Error::DivisionByZero(self.q));
        }
        let (mut r0, mut r1) = (self.q as i64, a.0 as i64);
        let (mut t0, mut t1) = (0i64, 1i64);
        while r1 != 0 {
            let quot = r0 / r1;
            (r0, r1) = (r1, r0 - quot * r1);
            (t0, t1) = (t1, t0 - quot * t1);
        }
        debug_assert_eq!(r0, 1);
        Ok(self.from_i64(t0))
    }

    pub fn div(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, base: FieldElement, mut exp: u64) -> FieldElement {
        let mut acc = FieldElement::ONE;
        let mut b = base;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, b);
            }
            b = self.mul(b, b);
            exp >>= 1;
        }
        acc
    }

    /// `(1, a, a^2, ..., a^(count-1))`.
    pub fn powers(&self, a: FieldElement, count: usize) -> Vec<FieldElement> {
        let mut out = Vec::with_capacity(count);
        let mut p = FieldElement::ONE;
        for _ in 0..count {
            out.push(p);
            p = self.mul(p, a);
        }
        out
    }

    pub fn dot(&self, a: &[FieldElement], b: &[FieldElement]) -> FieldElement {
        debug_assert_eq!(a.len(), b.len());
        // Accumulate in u64 and reduce lazily; each product is < 2^62.
        let q = self.q as u64;
        let mut acc = 0u64;
        for (x, y) in a.iter().zip(b) {
            acc = (acc + x.0 as u64 * y.0 as u64) % q;
        }
        FieldElement(acc as u32)
    }

    /// `dst += scale * src`, elementwise.
    pub fn axpy(&self, dst: &mut [FieldElement], scale: FieldElement, src: &[FieldElement]) {
        debug_assert_eq!(dst.len(), src.len());
        if scale.is_zero() {
            return;
        }
        for (d, s) in dst.iter_mut().zip(src) {
            *d = self.mul_add(*d, scale, *s);
        }
    }

    /// `prod over b in others of (a - b)`; the empty product is one.
    pub fn prod_diff<I>(&self, a: FieldElement, others: I) -> FieldElement
    where
        I: IntoIterator<Item = FieldElement>,
    {
        others
            .into_iter()
            .fold(FieldElement::ONE, |acc, b| self.mul(acc, self.sub(a, b)))
    }
}

/// Dense row-major matrix over `F_q`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<FieldElement>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![FieldElement::ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, FieldElement::ONE);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<FieldElement>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Dimension("ragged matrix rows".into()));
        }
        Ok(Matrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> FieldElement {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: FieldElement) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[FieldElement] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn mul_vec(&self, field: &Field, x: &[FieldElement]) -> Result<Vec<FieldElement>> {
        if x.len() != self.cols {
            return Err(Error::Dimension(format!(
                "matrix has {} columns, vector has {} entries",
                self.cols,
                x.len()
            )));
        }
        Ok((0..self.rows).map(|r| field.dot(self.row(r), x)).collect())
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for c in 0..self.cols {
            self.data.swap(a * self.cols + c, b * self.cols + c);
        }
    }

    /// Reduces `self` to reduced row echelon form in place and returns its rank.
    pub fn row_reduce(&mut self, field: &Field) -> usize {
        let mut rank = 0;
        for col in 0..self.cols {
            if rank == self.rows {
                break;
            }
            let Some(pivot) = (rank..self.rows).find(|&r| !self.get(r, col).is_zero()) else {
                continue;
            };
            self.swap_rows(rank, pivot);
            let inv = field.inv(self.get(rank, col)).expect("pivot is nonzero");
            for c in 0..self.cols {
                let v = field.mul(self.get(rank, c), inv);
                self.set(rank, c, v);
            }
            for r in 0..self.rows {
                if r == rank {
                    continue;
                }
                let factor = self.get(r, col);
                if factor.is_zero() {
                    continue;
                }
                for c in 0..self.cols {
                    let v = field.sub(self.get(r, c), field.mul(factor, self.get(rank, c)));
                    self.set(r, c, v);
                }
            }
            rank += 1;
        }
        rank
    }

    pub fn rank(&self, field: &Field) -> usize {
        self.clone().row_reduce(field)
    }

    /// Inverse by Gauss-Jordan elimination with first-nonzero pivoting.
    pub fn inverse(&self, field: &Field) -> Result<Matrix> {
        if self.rows != self.cols {
            return Err(Error::Dimension(format!(
                "cannot invert a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let n = self.rows;
        let mut aug = Matrix::zeros(n, 2 * n);
        for r in 0..n {
            for c in 0..n {
                aug.set(r, c, self.get(r, c));
            }
            aug.set(r, n + r, FieldElement::ONE);
        }
        aug.row_reduce(field);
        for r in 0..n {
            if aug.get(r, r) != FieldElement::ONE {
                return Err(Error::Singular(n));
            }
        }
        let mut inv = Matrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                inv.set(r, c, aug.get(r, n + c));
            }
        }
        Ok(inv)
    }
}

/// Solves the square system `a * x = b`.
pub fn solve_linear(field: &Field, a: &Matrix, b: &[FieldElement]) -> Result<Vec<FieldElement>> {
    if a.rows != a.cols {
        return Err(Error::Dimension(format!(
            "system matrix is {}x{}, not square",
            a.rows, a.cols
        )));
    }
    if b.len() != a.rows {
        return Err(Error::Dimension(format!(
            "right-hand side has {} entries for a {}x{} system",
            b.len(),
            a.rows,
            a.cols
        )));
    }
    let n = a.rows;
    let mut aug = Matrix::zeros(n, n + 1);
    for (r, &rhs) in b.iter().enumerate() {
        for c in 0..n {
            aug.set(r, c, a.get(r, c));
        }
        aug.set(r, n, rhs);
    }
    aug.row_reduce(field);
    if (0..n).any(|r| aug.get(r, r) != FieldElement::ONE) {
        return Err(Error::Singular(n));
    }
    Ok((0..n).map(|r| aug.get(r, n)).collect())
}
