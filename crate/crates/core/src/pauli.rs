//! Phase-free n-qubit Pauli operators in symplectic form.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{dim_err, invalid, Error, Result};
use crate::linalg::CMatrix;
use crate::scalar::Real;

/// Largest register handled anywhere (bit vectors are u32, dense forms stop at 10).
pub const MAX_QUBITS: usize = 16;
/// Dense operators are refused above this size.
pub const MAX_DENSE_QUBITS: usize = 10;

/// An n-qubit Pauli error class. Bit q of `x`/`z` is the X/Z factor on qubit q.
///
/// The canonical index interleaves two bits per qubit (qubit q at bits 2q, 2q+1:
/// low bit X, high bit Z), so single-qubit I, X, Z, Y map to 0, 1, 2, 3.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PauliOp {
    n: u8,
    x: u32,
    z: u32,
}

#[inline]
fn spread(v: u32) -> usize {
    let mut out = 0usize;
    let mut v = v as usize;
    let mut q = 0;
    while v != 0 {
        out |= (v & 1) << (2 * q);
        v >>= 1;
        q += 1;
    }
    out
}

#[inline]
fn compact(idx: usize) -> u32 {
    let mut out = 0u32;
    let mut i = idx;
    let mut q = 0;
    while i != 0 {
        out |= ((i & 1) as u32) << q;
        i >>= 2;
        q += 1;
    }
    out
}

impl PauliOp {
    pub fn identity(n: usize) -> Self {
        assert!(n <= MAX_QUBITS, "{n} qubits exceeds {MAX_QUBITS}");
        Self { n: n as u8, x: 0, z: 0 }
    }

    pub fn from_bits(n: usize, x: u32, z: u32) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(Error::Capacity(format!("{n} qubits exceeds {MAX_QUBITS}")));
        }
        let mask = Self::full_mask(n);
        if x & !mask != 0 || z & !mask != 0 {
            return Err(dim_err!("bits set beyond qubit {n}"));
        }
        Ok(Self { n: n as u8, x, z })
    }

    pub fn from_index(n: usize, index: usize) -> Result<Self> {
        if n > MAX_QUBITS {
            return Err(Error::Capacity(format!("{n} qubits exceeds {MAX_QUBITS}")));
        }
        if index >= 1usize << (2 * n) {
            return Err(dim_err!("index {index} out of range for {n} qubits"));
        }
        Ok(Self { n: n as u8, x: compact(index), z: compact(index >> 1) })
    }

    /// Single-qubit factor `code` (0..4 in index order I, X, Z, Y) on `qubit`.
    pub fn single(n: usize, qubit: usize, code: usize) -> Result<Self> {
        if qubit >= n || code > 3 {
            return Err(dim_err!("qubit {qubit} / code {code} invalid for {n} qubits"));
        }
        Self::from_bits(n, ((code & 1) as u32) << qubit, ((code >> 1) as u32) << qubit)
    }

    #[inline]
    fn full_mask(n: usize) -> u32 {
        if n >= 32 {
            u32::MAX
        } else {
            (1u32 << n) - 1
        }
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn x_bits(&self) -> u32 {
        self.x
    }

    pub fn z_bits(&self) -> u32 {
        self.z
    }

    #[inline]
    pub fn index(&self) -> usize {
        spread(self.x) | (spread(self.z) << 1)
    }

    pub fn is_identity(&self) -> bool {
        self.x == 0 && self.z == 0
    }

    pub fn support_mask(&self) -> u32 {
        self.x | self.z
    }

    pub fn support(&self) -> Vec<usize> {
        (0..self.n()).filter(|&q| (self.support_mask() >> q) & 1 == 1).collect()
    }

    pub fn weight(&self) -> usize {
        self.support_mask().count_ones() as usize
    }

    /// Index-order code (I=0, X=1, Z=2, Y=3) of the factor on `qubit`.
    #[inline]
    pub fn factor(&self, qubit: usize) -> usize {
        (((self.x >> qubit) & 1) | (((self.z >> qubit) & 1) << 1)) as usize
    }

    /// Keep only the factors on qubits in `mask`.
    pub fn restrict(&self, mask: u32) -> Self {
        Self { n: self.n, x: self.x & mask, z: self.z & mask }
    }

    fn check_n(&self, other: &Self) -> Result<()> {
        if self.n != other.n {
            return Err(dim_err!("{}-qubit vs {}-qubit Pauli", self.n, other.n));
        }
        Ok(())
    }

    /// Phase-free product.
    pub fn multiply(&self, other: &Self) -> Result<Self> {
        self.check_n(other)?;
        Ok(*self * *other)
    }

    pub fn commutes(&self, other: &Self) -> Result<bool> {
        self.check_n(other)?;
        Ok(!self.anticommutes_with(other))
    }

    /// Symplectic form parity; does not check sizes.
    #[inline]
    pub fn anticommutes_with(&self, other: &Self) -> bool {
        ((self.x & other.z).count_ones() + (self.z & other.x).count_ones()) & 1 == 1
    }

    /// `i^{|x∧z|}`: the phase making the operator Hermitian when written as X^x Z^z.
    fn y_phase<T: Real>(&self) -> Complex<T> {
        match (self.x & self.z).count_ones() % 4 {
            0 => Complex::one(),
            1 => Complex::i(),
            2 => -Complex::<T>::one(),
            _ => -Complex::<T>::i(),
        }
    }

    /// Amplitude of `P|j⟩`, which equals this value times `|j ⊕ x⟩`.
    #[inline]
    pub fn amplitude<T: Real>(&self, j: usize) -> Complex<T> {
        let base = self.y_phase::<T>();
        if (j as u32 & self.z).count_ones() & 1 == 1 {
            -base
        } else {
            base
        }
    }

    pub fn to_matrix<T: Real>(&self) -> Result<CMatrix<T>> {
        let n = self.n();
        if n > MAX_DENSE_QUBITS {
            return Err(Error::Capacity(format!("dense {n}-qubit Pauli exceeds {MAX_DENSE_QUBITS}")));
        }
        let d = 1usize << n;
        let mut m = CMatrix::zeros(d, d);
        for j in 0..d {
            m.set(j ^ self.x as usize, j, self.amplitude(j));
        }
        Ok(m)
    }

    /// `P · M` for a matrix with 2^n rows, computed as a signed row permutation.
    pub fn left_apply<T: Real>(&self, m: &CMatrix<T>) -> Result<CMatrix<T>> {
        let d = 1usize << self.n();
        if m.rows() != d {
            return Err(dim_err!("operand has {} rows, Pauli acts on {d}", m.rows()));
        }
        let cols = m.cols();
        let mut out = CMatrix::zeros(d, cols);
        for j in 0..d {
            let a = self.amplitude::<T>(j);
            let r = j ^ self.x as usize;
            for c in 0..cols {
                out.set(r, c, a * m.at(j, c));
            }
        }
        Ok(out)
    }

    /// `Tr(P† M)` for a square 2^n matrix.
    pub fn trace_with<T: Real>(&self, m: &CMatrix<T>) -> Complex<T> {
        let d = 1usize << self.n();
        let mut acc = Complex::zero();
        for j in 0..d {
            acc += self.amplitude::<T>(j).conj() * m.at(j ^ self.x as usize, j);
        }
        acc
    }

    /// All 4^n Paulis in index order.
    pub fn all(n: usize) -> impl Iterator<Item = PauliOp> {
        (0..1usize << (2 * n)).map(move |i| PauliOp { n: n as u8, x: compact(i), z: compact(i >> 1) })
    }

    /// Concatenate registers: `self` occupies the low qubits, `other` the high ones.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        let n = self.n() + other.n();
        Self::from_bits(n, self.x | (other.x << self.n), self.z | (other.z << self.n))
    }
}

impl std::ops::Mul for PauliOp {
    type Output = PauliOp;

    /// Panics on size mismatch; use [`PauliOp::multiply`] for a checked product.
    fn mul(self, rhs: Self) -> Self {
        assert_eq!(self.n, rhs.n, "Pauli size mismatch");
        Self { n: self.n, x: self.x ^ rhs.x, z: self.z ^ rhs.z }
    }
}

impl PartialOrd for PauliOp {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PauliOp {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.n, self.index()).cmp(&(other.n, other.index()))
    }
}

const LETTERS: [char; 4] = ['I', 'X', 'Z', 'Y'];

impl fmt::Display for PauliOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.n() {
            write!(f, "{}", LETTERS[self.factor(q)])?;
        }
        Ok(())
    }
}

impl fmt::Debug for PauliOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PauliOp({self})")
    }
}

impl FromStr for PauliOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let n = s.chars().count();
        if n == 0 || n > MAX_QUBITS {
            return Err(invalid!("Pauli string of length {n}"));
        }
        let (mut x, mut z) = (0u32, 0u32);
        for (q, ch) in s.chars().enumerate() {
            let code = match ch.to_ascii_uppercase() {
                'I' | '_' => 0,
                'X' => 1,
                'Z' => 2,
                'Y' => 3,
                other => return Err(invalid!("bad Pauli letter {other:?} in {s:?}")),
            };
            x |= (code & 1) << q;
            z |= (code >> 1) << q;
        }
        Self::from_bits(n, x, z)
    }
}

impl Serialize for PauliOp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PauliOp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
