//! Small dense complex linear algebra: just enough for 2^7-dimensional operators.

use num_complex::Complex;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};
use crate::scalar::Real;

pub type C<T> = Complex<T>;

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CMatrix<T = f64> {
    rows: usize,
    cols: usize,
    data: Vec<C<T>>,
}

impl<T: Real> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C::zero(); rows * cols] }
    }

    pub fn identity(d: usize) -> Self {
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            m.data[i * d + i] = C::one();
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C<T>>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(dim_err!("{} entries for a {rows}x{cols} matrix", data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [C<T>] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> C<T> {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: C<T>) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut C<T> {
        &mut self.data[r * self.cols + c]
    }

    pub fn cast<U: Real>(&self) -> CMatrix<U> {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| C::new(U::of(z.re.f64()), U::of(z.im.f64()))).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(dim_err!(
                "cannot multiply {}x{} by {}x{}",
                self.rows,
                self.cols,
                other.rows,
                other.cols
            ));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        let oc = other.cols;
        for i in 0..self.rows {
            let orow = &mut out.data[i * oc..(i + 1) * oc];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.is_zero() {
                    continue;
                }
                let brow = &other.data[k * oc..(k + 1) * oc];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// `self† · other` without materializing the adjoint.
    pub fn adjoint_matmul(&self, other: &Self) -> Result<Self> {
        if self.rows != other.rows {
            return Err(dim_err!("adjoint product needs equal row counts"));
        }
        let mut out = Self::zeros(self.cols, other.cols);
        let oc = other.cols;
        for k in 0..self.rows {
            let brow = &other.data[k * oc..(k + 1) * oc];
            for i in 0..self.cols {
                let a = self.data[k * self.cols + i].conj();
                if a.is_zero() {
                    continue;
                }
                let orow = &mut out.data[i * oc..(i + 1) * oc];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.at(c, r).conj())
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| *z * s).collect() }
    }

    pub fn scale_real(&self, s: T) -> Self {
        self.scale(C::new(s, T::zero()))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(C<T>, C<T>) -> C<T>) -> Result<Self> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(dim_err!("shape {}x{} vs {}x{}", self.rows, self.cols, other.rows, other.cols));
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn trace(&self) -> C<T> {
        (0..self.rows.min(self.cols)).map(|i| self.at(i, i)).fold(C::zero(), |a, b| a + b)
    }

    pub fn frobenius_sqr(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Max-abs entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (*a - *b).norm()).fold(T::zero(), T::max)
    }

    /// Induced 1-norm (max column sum).
    pub fn norm1(&self) -> T {
        (0..self.cols)
            .map(|c| (0..self.rows).map(|r| self.at(r, c).norm()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let (r2, c2) = (other.rows, other.cols);
        Self::from_fn(self.rows * r2, self.cols * c2, |r, c| {
            self.at(r / r2, c / c2) * other.at(r % r2, c % c2)
        })
    }

    pub fn is_unitary(&self, tol: T) -> bool {
        if !self.is_square() {
            return false;
        }
        match self.adjoint_matmul(self) {
            Ok(g) => g.max_abs_diff(&Self::identity(self.rows)) <= tol,
            Err(_) => false,
        }
    }

    pub fn is_hermitian(&self, tol: T) -> bool {
        self.is_square() && self.max_abs_diff(&self.adjoint()) <= tol
    }

    /// `Tr(self† · other)`.
    pub fn hs_inner(&self, other: &Self) -> C<T> {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).fold(C::zero(), |acc, (a, b)| acc + a.conj() * b)
    }
}

/// Scatter the low `support.len()` bits of `local` onto the bit positions in `support`.
#[inline]
pub fn scatter_bits(local: usize, support: &[usize]) -> usize {
    support.iter().enumerate().fold(0, |acc, (k, &q)| acc | (((local >> k) & 1) << q))
}

/// Left-multiply `m` by a local operator `op` acting on `support` of an n-qubit register.
/// Local basis bit k corresponds to qubit `support[k]`; `m` has 2^n rows.
pub fn apply_local_left<T: Real>(op: &CMatrix<T>, support: &[usize], n: usize, m: &CMatrix<T>) -> Result<CMatrix<T>> {
    let k = support.len();
    let dl = 1usize << k;
    if op.rows != dl || op.cols != dl {
        return Err(dim_err!("local operator is {}x{}, support has {k} qubits", op.rows, op.cols));
    }
    if m.rows != 1 << n {
        return Err(dim_err!("operand has {} rows, expected {}", m.rows, 1usize << n));
    }
    if support.iter().any(|&q| q >= n) {
        return Err(dim_err!("support {support:?} exceeds {n} qubits"));
    }
    let mask = support.iter().fold(0usize, |a, &q| a | (1 << q));
    let offsets: Vec<usize> = (0..dl).map(|l| scatter_bits(l, support)).collect();
    let cols = m.cols;
    let mut out = CMatrix::zeros(m.rows, cols);
    let mut gathered = vec![C::<T>::zero(); dl];
    for base in 0..(1usize << n) {
        if base & mask != 0 {
            continue;
        }
        for c in 0..cols {
            for (l, off) in offsets.iter().enumerate() {
                gathered[l] = m.at(base | off, c);
            }
            for (a, off) in offsets.iter().enumerate() {
                let mut acc = C::zero();
                for (b, g) in gathered.iter().enumerate() {
                    acc += op.at(a, b) * g;
                }
                out.set(base | off, c, acc);
            }
        }
    }
    Ok(out)
}

/// Embed a local operator on `support` into the full 2^n space.
pub fn embed<T: Real>(op: &CMatrix<T>, support: &[usize], n: usize) -> Result<CMatrix<T>> {
    apply_local_left(op, support, n, &CMatrix::identity(1 << n))
}

/// Matrix exponential by scaling and squaring with a Taylor core.
pub fn expm<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    if !a.is_square() {
        return Err(dim_err!("expm of a non-square matrix"));
    }
    let d = a.rows;
    let norm = a.norm1();
    let mut s = 0i32;
    let half = T::of(0.5);
    let mut scaled_norm = norm;
    while scaled_norm > half {
        scaled_norm = scaled_norm * half;
        s += 1;
    }
    let a = a.scale_real(T::of(2f64.powi(-s)));
    let mut sum = CMatrix::identity(d);
    let mut term = CMatrix::identity(d);
    for k in 1..=40 {
        term = term.matmul(&a)?.scale_real(T::one() / T::of(k as f64));
        sum.add_assign(&term);
        if term.norm1() <= T::epsilon() * T::of(0.125) {
            break;
        }
    }
    for _ in 0..s {
        sum = sum.matmul(&sum)?;
    }
    Ok(sum)
}

/// Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi rotations.
/// Eigenvalues ascending; eigenvectors are the columns of the returned matrix.
pub fn eigh<T: Real>(h: &CMatrix<T>) -> Result<(Vec<T>, CMatrix<T>)> {
    if !h.is_square() {
        return Err(dim_err!("eigh of a non-square matrix"));
    }
    let n = h.rows;
    let mut a = h.clone();
    let mut v = CMatrix::identity(n);
    let scale = a.frobenius_sqr().sqrt().max(T::min_positive_value());
    for _sweep in 0..64 {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off += a.at(p, q).norm_sqr();
            }
        }
        if off.sqrt() <= T::epsilon() * scale * T::of(1e-2) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.at(p, q);
                let r = apq.norm();
                if r <= T::min_positive_value() {
                    continue;
                }
                let phase = apq / r;
                let app = a.at(p, p).re;
                let aqq = a.at(q, q).re;
                let tau = (aqq - app) / (T::of(2.0) * r);
                let t = if tau >= T::zero() {
                    T::one() / (tau + (T::one() + tau * tau).sqrt())
                } else {
                    -T::one() / (-tau + (T::one() + tau * tau).sqrt())
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                // J = D R with D = diag(1, conj(phase)); zeroes a[p][q].
                let jpp = C::new(c, T::zero());
                let jpq = C::new(s, T::zero());
                let jqp = phase.conj() * (-s);
                let jqq = phase.conj() * c;
                for k in 0..n {
                    let (x, y) = (a.at(k, p), a.at(k, q));
                    a.set(k, p, x * jpp + y * jqp);
                    a.set(k, q, x * jpq + y * jqq);
                }
                for k in 0..n {
                    let (x, y) = (a.at(p, k), a.at(q, k));
                    a.set(p, k, jpp.conj() * x + jqp.conj() * y);
                    a.set(q, k, jpq.conj() * x + jqq.conj() * y);
                }
                a.set(p, q, C::zero());
                a.set(q, p, C::zero());
                let (app, aqq) = (a.at(p, p).re, a.at(q, q).re);
                a.set(p, p, C::new(app, T::zero()));
                a.set(q, q, C::new(aqq, T::zero()));
                for k in 0..n {
                    let (x, y) = (v.at(k, p), v.at(k, q));
                    v.set(k, p, x * jpp + y * jqp);
                    v.set(k, q, x * jpq + y * jqq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.at(i, i).re.partial_cmp(&a.at(j, j).re).unwrap_or(std::cmp::Ordering::Equal));
    let vals = order.iter().map(|&i| a.at(i, i).re).collect();
    let vecs = CMatrix::from_fn(n, n, |r, c| v.at(r, order[c]));
    Ok((vals, vecs))
}
