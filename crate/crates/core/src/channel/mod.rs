//! CPTP maps in interchangeable forms, the Pauli twirl and the usual figures of merit.

pub mod json;
pub mod wht;

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{dim_err, invalid, Error, Result};
use crate::linalg::{apply_local_left, eigh, CMatrix, C};
use crate::pauli::{PauliOp, MAX_DENSE_QUBITS};
use crate::scalar::{KahanSum, Real};

pub use wht::{wht_chi_to_ptm, wht_ptm_to_chi};

/// Kraus-count ceiling for `compose` unless a caller asks for another.
pub const DEFAULT_MAX_KRAUS: usize = 256;
/// Dense channel arithmetic stops here.
pub const MAX_CHANNEL_QUBITS: usize = 7;

/// Pauli error probabilities `χ_{P,P}` indexed by [`PauliOp::index`].
#[derive(Clone, Debug, PartialEq)]
pub struct PauliDist<T = f64> {
    n: usize,
    probs: Vec<T>,
}

impl<T: Real> PauliDist<T> {
    /// Validates, clamping entries in `[-CLAMP_TOL, 0)` to zero.
    pub fn new(n: usize, mut probs: Vec<T>) -> Result<Self> {
        if probs.len() != 1usize << (2 * n) {
            return Err(dim_err!("{} probabilities for {n} qubits", probs.len()));
        }
        let clamp = T::of(T::CLAMP_TOL);
        for (i, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(invalid!("probability {i} is not finite"));
            }
            if *p < T::zero() {
                if *p < -clamp {
                    return Err(invalid!("probability {i} is {p}"));
                }
                *p = T::zero();
            }
        }
        let total = crate::scalar::kahan_sum(probs.iter().copied());
        if (total - T::one()).abs() > T::of(T::SUM_TOL) {
            return Err(invalid!("probabilities sum to {total}"));
        }
        Ok(Self { n, probs })
    }

    pub fn point_mass(p: PauliOp) -> Self {
        let mut probs = vec![T::zero(); 1 << (2 * p.n())];
        probs[p.index()] = T::one();
        Self { n: p.n(), probs }
    }

    pub fn uniform(n: usize) -> Self {
        let len = 1usize << (2 * n);
        Self { n, probs: vec![T::one() / T::of(len as f64); len] }
    }

    /// Product of single-qubit marginals, each in index order (I, X, Z, Y).
    pub fn from_marginals(marginals: &[[T; 4]]) -> Result<Self> {
        let n = marginals.len();
        let len = 1usize << (2 * n);
        let mut probs = Vec::with_capacity(len);
        for idx in 0..len {
            let mut p = T::one();
            for (q, m) in marginals.iter().enumerate() {
                p *= m[(idx >> (2 * q)) & 3];
            }
            probs.push(p);
        }
        Self::new(n, probs)
    }

    /// i.i.d. depolarizing noise with per-qubit error probability `p`.
    pub fn depolarizing(n: usize, p: T) -> Result<Self> {
        let third = p / T::of(3.0);
        Self::from_marginals(&vec![[T::one() - p, third, third, third]; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probs(&self) -> &[T] {
        &self.probs
    }

    pub fn into_probs(self) -> Vec<T> {
        self.probs
    }

    pub fn get(&self, p: &PauliOp) -> T {
        self.probs[p.index()]
    }

    pub fn identity_rate(&self) -> T {
        self.probs[0]
    }

    pub fn cast<U: Real>(&self) -> PauliDist<U> {
        PauliDist { n: self.n, probs: self.probs.iter().map(|p| U::of(p.f64())).collect() }
    }

    /// Single-qubit marginal on `qubit`, index order.
    pub fn marginal(&self, qubit: usize) -> [T; 4] {
        let mut m = [T::zero(); 4];
        for (idx, &p) in self.probs.iter().enumerate() {
            m[(idx >> (2 * qubit)) & 3] += p;
        }
        m
    }
}

/// Full Pauli transfer matrix: entry (Q, P) = Tr(Q ℰ(P)) / 2^n.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferMatrix<T = f64> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> TransferMatrix<T> {
    pub fn new(n: usize, data: Vec<T>) -> Result<Self> {
        let dim = 1usize << (2 * n);
        if data.len() != dim * dim {
            return Err(dim_err!("{} entries for a {dim}x{dim} transfer matrix", data.len()));
        }
        let tol = T::of(T::CPTP_TOL);
        if (data[0] - T::one()).abs() > tol || data[1..dim].iter().any(|x| x.abs() > tol) {
            return Err(invalid!("transfer matrix first row is not (1, 0, ..., 0)"));
        }
        Ok(Self { n, data })
    }

    pub fn identity(n: usize) -> Self {
        let dim = 1usize << (2 * n);
        let mut data = vec![T::zero(); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = T::one();
        }
        Self { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << (2 * self.n)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn at(&self, q: usize, p: usize) -> T {
        self.data[q * self.dim() + p]
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.at(i, i)).collect()
    }
}

/// A channel factor acting on `support` (local qubit k is global qubit `support[k]`).
#[derive(Clone, Debug, PartialEq)]
pub struct Factor<T = f64> {
    pub support: Vec<usize>,
    pub channel: Channel<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Channel<T = f64> {
    Unitary(CMatrix<T>),
    OperatorSum(Vec<CMatrix<T>>),
    Pauli(PauliDist<T>),
    /// Disjoint local factors on an `n`-qubit register; uncovered qubits are noiseless.
    Product { n: usize, factors: Vec<Factor<T>> },
    Transfer(TransferMatrix<T>),
}

fn qubits_of_dim(d: usize) -> Result<usize> {
    if d == 0 || !d.is_power_of_two() {
        return Err(dim_err!("dimension {d} is not a power of 2"));
    }
    Ok(d.trailing_zeros() as usize)
}

impl<T: Real> Channel<T> {
    pub fn identity(n: usize) -> Self {
        Channel::Unitary(CMatrix::identity(1 << n))
    }

    pub fn unitary(u: CMatrix<T>) -> Result<Self> {
        let ch = Channel::Unitary(u);
        ch.validate()?;
        Ok(ch)
    }

    pub fn operator_sum(kraus: Vec<CMatrix<T>>) -> Result<Self> {
        let ch = Channel::OperatorSum(kraus);
        ch.validate()?;
        Ok(ch)
    }

    pub fn product(n: usize, factors: Vec<Factor<T>>) -> Result<Self> {
        let ch = Channel::Product { n, factors };
        ch.validate()?;
        Ok(ch)
    }

    pub fn transfer(t: TransferMatrix<T>) -> Self {
        Channel::Transfer(t)
    }

    pub fn n(&self) -> usize {
        match self {
            Channel::Unitary(u) => u.rows().trailing_zeros() as usize,
            Channel::OperatorSum(k) => k.first().map_or(0, |m| m.rows().trailing_zeros() as usize),
            Channel::Pauli(d) => d.n(),
            Channel::Product { n, .. } => *n,
            Channel::Transfer(t) => t.n(),
        }
    }

    /// Full structural and CPTP validation.
    pub fn validate(&self) -> Result<()> {
        let tol = T::of(T::CPTP_TOL);
        match self {
            Channel::Unitary(u) => {
                qubits_of_dim(u.rows())?;
                if !u.is_square() {
                    return Err(dim_err!("unitary is {}x{}", u.rows(), u.cols()));
                }
                if !u.is_unitary(tol) {
                    return Err(invalid!("matrix is not unitary"));
                }
            }
            Channel::OperatorSum(ks) => {
                let first = ks.first().ok_or_else(|| invalid!("empty Kraus list"))?;
                let d = first.rows();
                qubits_of_dim(d)?;
                let mut acc = CMatrix::zeros(d, d);
                for k in ks {
                    if k.rows() != d || k.cols() != d {
                        return Err(dim_err!("Kraus operators of mixed shapes"));
                    }
                    acc.add_assign(&k.adjoint_matmul(k)?);
                }
                if acc.max_abs_diff(&CMatrix::identity(d)) > tol {
                    return Err(invalid!("Kraus completeness violated"));
                }
            }
            Channel::Pauli(_) => {}
            Channel::Product { n, factors } => {
                let mut used = 0u64;
                for f in factors {
                    if f.support.len() != f.channel.n() {
                        return Err(dim_err!(
                            "factor on {} qubits has support {:?}",
                            f.channel.n(),
                            f.support
                        ));
                    }
                    for &q in &f.support {
                        if q >= *n || used >> q & 1 == 1 {
                            return Err(invalid!("factor supports overlap or exceed {n} qubits"));
                        }
                        used |= 1 << q;
                    }
                    f.channel.validate()?;
                }
            }
            Channel::Transfer(t) => {
                TransferMatrix::new(t.n(), t.data().to_vec())?;
            }
        }
        Ok(())
    }

    fn check_dense(&self) -> Result<()> {
        if self.n() > MAX_CHANNEL_QUBITS {
            return Err(Error::Capacity(format!("{} qubits exceeds dense limit {MAX_CHANNEL_QUBITS}", self.n())));
        }
        Ok(())
    }

    /// `χ_{I,I}` without computing the whole diagonal.
    pub fn chi_identity(&self) -> Result<T> {
        self.check_dense()?;
        let d2 = T::of((1usize << (2 * self.n())) as f64);
        Ok(match self {
            Channel::Unitary(u) => u.trace().norm_sqr() / d2,
            Channel::OperatorSum(ks) => ks.iter().map(|k| k.trace().norm_sqr()).sum::<T>() / d2,
            Channel::Pauli(d) => d.identity_rate(),
            Channel::Product { factors, .. } => {
                let mut p = T::one();
                for f in factors {
                    p *= f.channel.chi_identity()?;
                }
                p
            }
            Channel::Transfer(t) => t.diagonal().into_iter().sum::<T>() / T::of(t.dim() as f64),
        })
    }

    /// Diagonal of the χ matrix, which is the Pauli twirl of the channel.
    pub fn chi_diagonal(&self) -> Result<PauliDist<T>> {
        self.check_dense()?;
        let n = self.n();
        let d = 1usize << n;
        let d2 = T::of((d * d) as f64);
        match self {
            Channel::Pauli(dist) => Ok(dist.clone()),
            Channel::Unitary(u) => {
                let probs = PauliOp::all(n).map(|p| p.trace_with(u).norm_sqr() / d2).collect();
                PauliDist::new(n, probs)
            }
            Channel::OperatorSum(ks) => {
                let probs = PauliOp::all(n)
                    .map(|p| {
                        let mut acc = KahanSum::new();
                        for k in ks {
                            acc.add(p.trace_with(k).norm_sqr());
                        }
                        acc.value() / d2
                    })
                    .collect();
                PauliDist::new(n, probs)
            }
            Channel::Product { n, factors } => {
                let mut probs = vec![T::zero(); 1 << (2 * n)];
                let mut partial: Vec<(usize, T)> = vec![(0, T::one())];
                for f in factors {
                    let local = f.channel.chi_diagonal()?;
                    let mut next = Vec::with_capacity(partial.len() * 4);
                    for &(g, pg) in &partial {
                        for (l, &pl) in local.probs().iter().enumerate() {
                            if pl > T::zero() {
                                next.push((g | embed_index(l, &f.support), pg * pl));
                            }
                        }
                    }
                    partial = next;
                }
                for (g, p) in partial {
                    probs[g] = p;
                }
                PauliDist::new(*n, probs)
            }
            Channel::Transfer(t) => wht::wht_ptm_to_chi(&t.diagonal()),
        }
    }

    /// Diagonal transfer-matrix entries `Tr(P ℰ(P))/2^n`, computed directly from the
    /// operator form (independent of the Walsh–Hadamard route).
    pub fn ptm_diagonal(&self) -> Result<Vec<T>> {
        self.check_dense()?;
        let n = self.n();
        let d = 1usize << n;
        let inv_d = T::one() / T::of(d as f64);
        let direct = |ks: &[&CMatrix<T>]| -> Vec<T> {
            PauliOp::all(n)
                .map(|p| {
                    let x = p.x_bits() as usize;
                    let mut acc = Complex::<T>::zero();
                    for k in ks {
                        for j in 0..d {
                            let aj = p.amplitude::<T>(j ^ x);
                            for c in 0..d {
                                let pkp = p.amplitude::<T>(c) * aj * k.at(j ^ x, c ^ x);
                                acc += pkp * k.at(j, c).conj();
                            }
                        }
                    }
                    acc.re * inv_d
                })
                .collect()
        };
        match self {
            Channel::Unitary(u) => Ok(direct(&[u])),
            Channel::OperatorSum(ks) => Ok(direct(&ks.iter().collect::<Vec<_>>())),
            Channel::Pauli(dist) => Ok(wht_chi_to_ptm(dist)),
            Channel::Product { n, factors } => {
                let mut out = vec![T::one(); 1 << (2 * n)];
                for f in factors {
                    let local = f.channel.ptm_diagonal()?;
                    for (g, v) in out.iter_mut().enumerate() {
                        *v *= local[gather_index(g, &f.support)];
                    }
                }
                Ok(out)
            }
            Channel::Transfer(t) => Ok(t.diagonal()),
        }
    }

    pub fn process_infidelity(&self) -> Result<T> {
        Ok(T::one() - self.chi_identity()?)
    }

    /// Average gate fidelity from `ε = (d+1)/d · (1 − F)`; for one qubit the factor is 3/2.
    pub fn average_gate_fidelity(&self) -> Result<T> {
        let d = T::of((1usize << self.n()) as f64);
        Ok(T::one() - self.process_infidelity()? * d / (d + T::one()))
    }

    /// Returns (Σ_{P,Q} Λ_{QP}², Σ_Q Λ_{QI}²) of the full transfer matrix.
    fn transfer_square_sums(&self) -> Result<(T, T)> {
        let n = self.n();
        let d = 1usize << n;
        match self {
            Channel::Pauli(dist) => {
                let s = wht_chi_to_ptm(dist).iter().map(|&l| l * l).sum();
                Ok((s, T::one()))
            }
            Channel::Transfer(t) => {
                let s = t.data().iter().map(|&x| x * x).sum();
                let u = (0..t.dim()).map(|q| t.at(q, 0) * t.at(q, 0)).sum();
                Ok((s, u))
            }
            Channel::Product { n, factors } => {
                let mut s = T::one();
                let mut u = T::one();
                let mut covered = 0;
                for f in factors {
                    let (fs, fu) = f.channel.transfer_square_sums()?;
                    s *= fs;
                    u *= fu;
                    covered += f.support.len();
                }
                Ok((s * T::of(4f64.powi((n - covered) as i32)), u))
            }
            Channel::Unitary(_) | Channel::OperatorSum(_) => {
                let ks = self.kraus()?;
                let mut gram = KahanSum::new();
                for (i, a) in ks.iter().enumerate() {
                    gram.add(a.hs_inner(a).norm_sqr());
                    for b in &ks[i + 1..] {
                        gram.add(T::of(2.0) * a.hs_inner(b).norm_sqr());
                    }
                }
                let mut e_i = CMatrix::zeros(d, d);
                for k in &ks {
                    e_i.add_assign(&k.matmul(&k.adjoint())?);
                }
                Ok((gram.value(), e_i.frobenius_sqr() / T::of(d as f64)))
            }
        }
    }

    /// `u = Σ_{P≠I, Q≠I} Λ_{QP}² / (4^n − 1)`.
    pub fn unitarity(&self) -> Result<T> {
        self.check_dense()?;
        let (s, u) = self.transfer_square_sums()?;
        let d2 = T::of((1usize << (2 * self.n())) as f64);
        Ok((s - u) / (d2 - T::one()))
    }

    /// Dense Kraus operators. Pauli and product channels are expanded explicitly.
    pub fn kraus(&self) -> Result<Vec<CMatrix<T>>> {
        self.check_dense()?;
        self.kraus_times(&CMatrix::identity(1 << self.n()))
    }

    /// `{K_i · m}` for every Kraus operator, without materializing `K_i` for product forms.
    pub fn kraus_times(&self, m: &CMatrix<T>) -> Result<Vec<CMatrix<T>>> {
        let n = self.n();
        if n > MAX_DENSE_QUBITS {
            return Err(Error::Capacity(format!("{n} qubits exceeds {MAX_DENSE_QUBITS}")));
        }
        if m.rows() != 1 << n {
            return Err(dim_err!("operand has {} rows for a {n}-qubit channel", m.rows()));
        }
        match self {
            Channel::Unitary(u) => Ok(vec![u.matmul(m)?]),
            Channel::OperatorSum(ks) => ks.iter().map(|k| k.matmul(m)).collect(),
            Channel::Pauli(dist) => dist
                .probs()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > T::zero())
                .map(|(i, &p)| {
                    let op = PauliOp::from_index(n, i)?;
                    Ok(op.left_apply(m)?.scale_real(p.sqrt()))
                })
                .collect(),
            Channel::Product { n, factors } => {
                let mut acc = vec![m.clone()];
                for f in factors {
                    let local = f.channel.kraus()?;
                    let mut next = Vec::with_capacity(acc.len() * local.len());
                    for x in &acc {
                        for k in &local {
                            next.push(apply_local_left(k, &f.support, *n, x)?);
                        }
                    }
                    acc = next;
                }
                Ok(acc)
            }
            Channel::Transfer(t) => transfer_to_kraus(t)?.iter().map(|k| k.matmul(m)).collect(),
        }
    }

    /// `ℰ(ρ)`.
    pub fn apply(&self, rho: &CMatrix<T>) -> Result<CMatrix<T>> {
        let n = self.n();
        let d = 1usize << n;
        if rho.rows() != d || rho.cols() != d {
            return Err(dim_err!("state is {}x{}, channel acts on dimension {d}", rho.rows(), rho.cols()));
        }
        match self {
            Channel::Product { n, factors } => {
                let mut cur = rho.clone();
                for f in factors {
                    let local = f.channel.kraus()?;
                    let mut next = CMatrix::zeros(d, d);
                    for k in &local {
                        let kr = apply_local_left(k, &f.support, *n, &cur)?;
                        let krk = apply_local_left(k, &f.support, *n, &kr.adjoint())?.adjoint();
                        next.add_assign(&krk);
                    }
                    cur = next;
                }
                Ok(cur)
            }
            Channel::Pauli(dist) => {
                let mut out = CMatrix::zeros(d, d);
                for (i, &p) in dist.probs().iter().enumerate() {
                    if p > T::zero() {
                        let op = PauliOp::from_index(n, i)?;
                        let pr = op.left_apply(rho)?;
                        let prp = op.left_apply(&pr.adjoint())?.adjoint();
                        out.add_assign(&prp.scale_real(p));
                    }
                }
                Ok(out)
            }
            _ => {
                let mut out = CMatrix::zeros(d, d);
                for k in self.kraus()? {
                    out.add_assign(&k.matmul(rho)?.matmul(&k.adjoint())?);
                }
                Ok(out)
            }
        }
    }

    /// Full transfer matrix by propagating the Pauli basis (small n only).
    pub fn transfer_matrix(&self) -> Result<TransferMatrix<T>> {
        let n = self.n();
        if n > 4 {
            return Err(Error::Capacity(format!("full transfer matrix on {n} qubits")));
        }
        if let Channel::Transfer(t) = self {
            return Ok(t.clone());
        }
        let dim = 1usize << (2 * n);
        let inv_d = T::one() / T::of((1usize << n) as f64);
        let mut data = vec![T::zero(); dim * dim];
        for p in PauliOp::all(n) {
            let out = self.apply(&p.to_matrix()?)?;
            for q in PauliOp::all(n) {
                data[q.index() * dim + p.index()] = q.trace_with(&out).re * inv_d;
            }
        }
        Ok(TransferMatrix { n, data })
    }
}

/// Place a local Pauli index (over `support.len()` qubits) onto global qubits.
pub fn embed_index(local: usize, support: &[usize]) -> usize {
    support.iter().enumerate().fold(0, |acc, (k, &q)| acc | (((local >> (2 * k)) & 3) << (2 * q)))
}

/// Inverse of [`embed_index`]: pick out the factors on `support`.
pub fn gather_index(global: usize, support: &[usize]) -> usize {
    support.iter().enumerate().fold(0, |acc, (k, &q)| acc | (((global >> (2 * q)) & 3) << (2 * k)))
}

/// Kraus operators of a transfer-matrix channel via its Choi matrix.
fn transfer_to_kraus<T: Real>(t: &TransferMatrix<T>) -> Result<Vec<CMatrix<T>>> {
    let n = t.n();
    let d = 1usize << n;
    let paulis: Vec<CMatrix<T>> = PauliOp::all(n).map(|p| p.to_matrix()).collect::<Result<_>>()?;
    let inv_d = T::one() / T::of(d as f64);
    // ℰ(P) = Σ_Q Λ_{QP} Q
    let images: Vec<CMatrix<T>> = (0..t.dim())
        .map(|p| {
            let mut acc = CMatrix::zeros(d, d);
            for (q, qm) in paulis.iter().enumerate() {
                let c = t.at(q, p);
                if c != T::zero() {
                    acc.add_assign(&qm.scale_real(c));
                }
            }
            acc
        })
        .collect();
    // Choi J[(j,a),(k,b)] = ⟨a|ℰ(|j⟩⟨k|)|b⟩ with |j⟩⟨k| = (1/d) Σ_P ⟨k|P|j⟩ P.
    let mut choi = CMatrix::zeros(d * d, d * d);
    for j in 0..d {
        for k in 0..d {
            let mut img = CMatrix::zeros(d, d);
            for (p, pm) in paulis.iter().enumerate() {
                let coeff = pm.at(k, j) * inv_d;
                if !coeff.is_zero() {
                    img.add_assign(&images[p].scale(coeff));
                }
            }
            for a in 0..d {
                for b in 0..d {
                    choi.set(j * d + a, k * d + b, img.at(a, b));
                }
            }
        }
    }
    let (vals, vecs) = eigh(&choi)?;
    let tol = T::of(T::CPTP_TOL);
    let mut out = Vec::new();
    for (i, &lam) in vals.iter().enumerate() {
        if lam < -tol {
            return Err(invalid!("transfer matrix is not completely positive (Choi eigenvalue {lam})"));
        }
        if lam <= tol {
            continue;
        }
        let s = lam.sqrt();
        out.push(CMatrix::from_fn(d, d, |a, j| vecs.at(j * d + a, i) * s));
    }
    Ok(out)
}

/// `outer ∘ inner` as an operator sum, refusing to exceed `DEFAULT_MAX_KRAUS` terms.
pub fn compose<T: Real>(outer: &Channel<T>, inner: &Channel<T>) -> Result<Channel<T>> {
    compose_with_cap(outer, inner, DEFAULT_MAX_KRAUS)
}

pub fn compose_with_cap<T: Real>(outer: &Channel<T>, inner: &Channel<T>, cap: usize) -> Result<Channel<T>> {
    if outer.n() != inner.n() {
        return Err(dim_err!("composing {}-qubit with {}-qubit channel", outer.n(), inner.n()));
    }
    let d = 1usize << outer.n();
    let floor = T::of(d as f64) * T::of(1e-15);
    let mut out = Vec::new();
    for b in inner.kraus()? {
        for k in outer.kraus_times(&b)? {
            if k.frobenius_sqr() <= floor {
                continue;
            }
            if out.len() == cap {
                return Err(Error::Capacity(format!("composition needs more than {cap} Kraus operators")));
            }
            out.push(k);
        }
    }
    if out.is_empty() {
        return Err(invalid!("composition has no surviving Kraus operators"));
    }
    Ok(Channel::OperatorSum(out))
}

/// Dense single-qubit rotation `exp(−iθ P)` for a Pauli `P` (handy in tests and examples).
pub fn pauli_rotation<T: Real>(p: &PauliOp, theta: T) -> Result<CMatrix<T>> {
    let d = 1usize << p.n();
    let pm = p.to_matrix::<T>()?;
    let id = CMatrix::<T>::identity(d);
    id.scale_real(theta.cos()).add(&pm.scale(C::new(T::zero(), -theta.sin())))
}
