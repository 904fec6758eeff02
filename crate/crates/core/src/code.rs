//! [[n,1]] stabilizer codes: syndromes, TLS decomposition, cosets, projectors, encoding.

use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, invalid, Error, Result};
use crate::linalg::CMatrix;
use crate::pauli::{PauliOp, MAX_DENSE_QUBITS};
use crate::scalar::Real;

pub const CODE_FORMAT: &str = "cerdec-code-1";
/// Lookup tables over all 4^n Paulis are built up to this size.
pub const MAX_TABLE_QUBITS: usize = 10;
/// Dense syndrome projectors are refused above this size.
pub const MAX_PROJECTOR_QUBITS: usize = 7;

/// Logical error class of a single encoded qubit, ordered I < X < Y < Z for tie-breaking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LogicalClass {
    I,
    X,
    Y,
    Z,
}

impl LogicalClass {
    pub const ALL: [LogicalClass; 4] = [LogicalClass::I, LogicalClass::X, LogicalClass::Y, LogicalClass::Z];

    pub fn from_xz(x: bool, z: bool) -> Self {
        match (x, z) {
            (false, false) => LogicalClass::I,
            (true, false) => LogicalClass::X,
            (true, true) => LogicalClass::Y,
            (false, true) => LogicalClass::Z,
        }
    }

    pub fn has_x(self) -> bool {
        matches!(self, LogicalClass::X | LogicalClass::Y)
    }

    pub fn has_z(self) -> bool {
        matches!(self, LogicalClass::Z | LogicalClass::Y)
    }

    /// Position in `ALL` (I, X, Y, Z).
    pub fn ord(self) -> usize {
        self as usize
    }

    /// Single-qubit Pauli index (I=0, X=1, Z=2, Y=3).
    pub fn pauli_index(self) -> usize {
        (self.has_x() as usize) | ((self.has_z() as usize) << 1)
    }

    pub fn from_pauli_index(i: usize) -> Self {
        Self::from_xz(i & 1 == 1, i & 2 == 2)
    }

    pub fn mul(self, other: Self) -> Self {
        Self::from_pauli_index(self.pauli_index() ^ other.pauli_index())
    }

    pub fn as_pauli(self) -> PauliOp {
        PauliOp::from_index(1, self.pauli_index()).expect("one-qubit index")
    }

    pub fn letter(self) -> char {
        ['I', 'X', 'Y', 'Z'][self.ord()]
    }
}

impl fmt::Display for LogicalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

/// Syndrome bits; bit i is set iff the error anticommutes with generator i.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Syndrome {
    bits: u32,
    len: u8,
}

impl Syndrome {
    pub fn new(bits: u32, len: usize) -> Result<Self> {
        if len > 31 || (bits >> len) != 0 {
            return Err(dim_err!("syndrome value {bits} does not fit in {len} bits"));
        }
        Ok(Self { bits, len: len as u8 })
    }

    pub fn zero(len: usize) -> Self {
        Self { bits: 0, len: len as u8 }
    }

    /// Little-endian integer form (generator 0 is bit 0).
    pub fn value(&self) -> usize {
        self.bits as usize
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> bool {
        (self.bits >> i) & 1 == 1
    }

    pub fn is_trivial(&self) -> bool {
        self.bits == 0
    }
}

impl fmt::Display for Syndrome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits)
    }
}

/// Error decomposed as T_s · L · S.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tls {
    pub pure_error: PauliOp,
    pub logical: LogicalClass,
    pub stabilizer: PauliOp,
    pub syndrome: Syndrome,
}

/// Per-Pauli lookups and the coset partition, computed on first use.
#[derive(Debug)]
pub struct CodeTables {
    syndrome: Vec<u32>,
    class: Vec<u8>,
    coset_offsets: Vec<u32>,
    coset_members: Vec<u32>,
    min_weight: Vec<LogicalClass>,
}

impl CodeTables {
    #[inline]
    pub fn syndrome_of(&self, idx: usize) -> usize {
        self.syndrome[idx] as usize
    }

    #[inline]
    pub fn class_of(&self, idx: usize) -> LogicalClass {
        LogicalClass::ALL[self.class[idx] as usize]
    }

    /// Indices in coset (s, L), ascending.
    #[inline]
    pub fn coset(&self, s: usize, l: LogicalClass) -> &[u32] {
        let k = 4 * s + l.ord();
        &self.coset_members[self.coset_offsets[k] as usize..self.coset_offsets[k + 1] as usize]
    }

    /// Minimum-weight decision for each syndrome.
    pub fn min_weight_class(&self, s: usize) -> LogicalClass {
        self.min_weight[s]
    }
}

#[derive(Debug)]
pub struct StabilizerCode {
    name: String,
    n: usize,
    generators: Vec<PauliOp>,
    logical_x: PauliOp,
    logical_z: PauliOp,
    pure_errors: Vec<PauliOp>,
    isometry: Option<CMatrix<f64>>,
    tables: OnceLock<CodeTables>,
}

impl Clone for StabilizerCode {
    fn clone(&self) -> Self {
        Self {
            name: self.name.clone(),
            n: self.n,
            generators: self.generators.clone(),
            logical_x: self.logical_x,
            logical_z: self.logical_z,
            pure_errors: self.pure_errors.clone(),
            isometry: self.isometry.clone(),
            tables: OnceLock::new(),
        }
    }
}

/// Symplectic row of `c` against an unknown (t_x | t_z) bit vector.
fn symplectic_row(c: &PauliOp, n: usize) -> u64 {
    (c.z_bits() as u64) | ((c.x_bits() as u64) << n)
}

fn gf2_rank(rows: &[u64]) -> usize {
    let mut rows = rows.to_vec();
    let mut rank = 0;
    for col in 0..64 {
        if let Some(p) = (rank..rows.len()).find(|&r| (rows[r] >> col) & 1 == 1) {
            rows.swap(rank, p);
            for r in 0..rows.len() {
                if r != rank && (rows[r] >> col) & 1 == 1 {
                    rows[r] ^= rows[rank];
                }
            }
            rank += 1;
        }
    }
    rank
}

/// Solve rows · u = rhs over GF(2); free variables are set to zero.
fn gf2_solve(rows: &[u64], rhs: &[bool], ncols: usize) -> Option<u64> {
    let mut a: Vec<(u64, bool)> = rows.iter().copied().zip(rhs.iter().copied()).collect();
    let mut pivots = Vec::new();
    let mut rank = 0;
    for col in 0..ncols {
        if let Some(p) = (rank..a.len()).find(|&r| (a[r].0 >> col) & 1 == 1) {
            a.swap(rank, p);
            for r in 0..a.len() {
                if r != rank && (a[r].0 >> col) & 1 == 1 {
                    a[r].0 ^= a[rank].0;
                    a[r].1 ^= a[rank].1;
                }
            }
            pivots.push(col);
            rank += 1;
        }
    }
    if a[rank..].iter().any(|&(_, b)| b) {
        return None;
    }
    let mut u = 0u64;
    for (r, &col) in pivots.iter().enumerate() {
        if a[r].1 {
            u |= 1 << col;
        }
    }
    Some(u)
}

#[derive(Serialize, Deserialize)]
struct CodeFile {
    version: String,
    name: String,
    generators: Vec<PauliOp>,
    logical_x: PauliOp,
    logical_z: PauliOp,
}

impl StabilizerCode {
    /// Validates the stabilizer data and derives pure errors and the encoding isometry.
    pub fn new(name: &str, generators: Vec<PauliOp>, logical_x: PauliOp, logical_z: PauliOp) -> Result<Self> {
        let n = logical_x.n();
        if n == 0 || 2 * n > 64 {
            return Err(Error::Capacity(format!("codes on {n} qubits are not supported")));
        }
        if generators.len() != n - 1 {
            return Err(invalid!("{} generators for an [[{n},1]] code", generators.len()));
        }
        if logical_z.n() != n || generators.iter().any(|g| g.n() != n) {
            return Err(dim_err!("generators and logicals must all act on {n} qubits"));
        }
        for (i, a) in generators.iter().enumerate() {
            for b in &generators[i + 1..] {
                if a.anticommutes_with(b) {
                    return Err(invalid!("generators {a} and {b} anticommute"));
                }
            }
            if a.anticommutes_with(&logical_x) || a.anticommutes_with(&logical_z) {
                return Err(invalid!("generator {a} anticommutes with a logical"));
            }
        }
        if !logical_x.anticommutes_with(&logical_z) {
            return Err(invalid!("logical X and Z must anticommute"));
        }
        let mut rows: Vec<u64> = generators.iter().map(|g| symplectic_row(g, n)).collect();
        if gf2_rank(&rows) != n - 1 {
            return Err(invalid!("generators are not independent"));
        }
        rows.push(symplectic_row(&logical_x, n));
        rows.push(symplectic_row(&logical_z, n));
        let mut pure_errors = Vec::with_capacity(n - 1);
        for i in 0..n - 1 {
            let mut rhs = vec![false; n + 1];
            rhs[i] = true;
            let u = gf2_solve(&rows, &rhs, 2 * n).ok_or_else(|| invalid!("no pure error for generator {i}"))?;
            let x = (u & ((1u64 << n) - 1)) as u32;
            let z = (u >> n) as u32;
            pure_errors.push(PauliOp::from_bits(n, x, z)?);
        }
        let mut code = Self {
            name: name.to_string(),
            n,
            generators,
            logical_x,
            logical_z,
            pure_errors,
            isometry: None,
            tables: OnceLock::new(),
        };
        if n <= MAX_DENSE_QUBITS {
            code.isometry = Some(code.build_isometry()?);
        }
        Ok(code)
    }

    /// The [[7,1,3]] Steane code.
    pub fn steane() -> Self {
        let p = |s: &str| s.parse::<PauliOp>().expect("literal");
        let supports = ["1111000", "0110110", "0011011"];
        let mut gens = Vec::new();
        for letter in ['X', 'Z'] {
            for s in supports {
                let word: String = s.chars().map(|c| if c == '1' { letter } else { 'I' }).collect();
                gens.push(p(&word));
            }
        }
        Self::new("steane", gens, p("XXIIXII"), p("ZZIIZII")).expect("Steane data is consistent")
    }

    /// [[3,1,1]] bit-flip repetition code (Z-checks only), used as a small test vehicle.
    pub fn repetition3() -> Self {
        let p = |s: &str| s.parse::<PauliOp>().expect("literal");
        Self::new("rep3", vec![p("ZZI"), p("IZZ")], p("XXX"), p("ZII")).expect("repetition data is consistent")
    }

    /// Concatenation: each outer qubit is replaced by an inner block (block b on qubits b·n_in..).
    /// Generators: inner generators per block, then outer generators with logical substitution.
    pub fn concatenate(outer: &StabilizerCode, inner: &StabilizerCode) -> Result<Self> {
        let (n_out, n_in) = (outer.n, inner.n);
        let n = n_out * n_in;
        let place = |p: &PauliOp, block: usize| -> Result<PauliOp> {
            let shift = block * n_in;
            PauliOp::from_bits(n, p.x_bits() << shift, p.z_bits() << shift)
        };
        let lift = |op: &PauliOp| -> Result<PauliOp> {
            let mut acc = PauliOp::identity(n);
            for b in 0..n_out {
                let f = op.factor(b);
                if f & 1 == 1 {
                    acc = acc * place(&inner.logical_x, b)?;
                }
                if f & 2 == 2 {
                    acc = acc * place(&inner.logical_z, b)?;
                }
            }
            Ok(acc)
        };
        let mut gens = Vec::with_capacity(n - 1);
        for b in 0..n_out {
            for g in &inner.generators {
                gens.push(place(g, b)?);
            }
        }
        for g in &outer.generators {
            gens.push(lift(g)?);
        }
        let name = format!("{}({})", outer.name, inner.name);
        Self::new(&name, gens, lift(&outer.logical_x)?, lift(&outer.logical_z)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: CodeFile = serde_json::from_str(s)?;
        if f.version != CODE_FORMAT {
            return Err(invalid!("code format {:?}, expected {CODE_FORMAT}", f.version));
        }
        Self::new(&f.name, f.generators, f.logical_x, f.logical_z)
    }

    pub fn to_json(&self) -> String {
        let f = CodeFile {
            version: CODE_FORMAT.into(),
            name: self.name.clone(),
            generators: self.generators.clone(),
            logical_x: self.logical_x,
            logical_z: self.logical_z,
        };
        serde_json::to_string_pretty(&f).expect("code serializes")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[PauliOp] {
        &self.generators
    }

    pub fn logical_x(&self) -> PauliOp {
        self.logical_x
    }

    pub fn logical_z(&self) -> PauliOp {
        self.logical_z
    }

    pub fn pure_errors(&self) -> &[PauliOp] {
        &self.pure_errors
    }

    pub fn num_syndromes(&self) -> usize {
        1 << (self.n - 1)
    }

    pub fn syndromes(&self) -> impl Iterator<Item = Syndrome> + '_ {
        (0..self.num_syndromes() as u32).map(move |b| Syndrome { bits: b, len: (self.n - 1) as u8 })
    }

    pub fn syndrome_from_value(&self, v: usize) -> Result<Syndrome> {
        Syndrome::new(v as u32, self.n - 1)
    }

    fn check(&self, e: &PauliOp) -> Result<()> {
        if e.n() != self.n {
            return Err(dim_err!("{}-qubit Pauli for a {}-qubit code", e.n(), self.n));
        }
        Ok(())
    }

    fn check_syndrome(&self, s: &Syndrome) -> Result<()> {
        if s.len() != self.n - 1 {
            return Err(dim_err!("{}-bit syndrome for a code with {} generators", s.len(), self.n - 1));
        }
        Ok(())
    }

    #[inline]
    fn syndrome_bits(&self, e: &PauliOp) -> u32 {
        self.generators
            .iter()
            .enumerate()
            .fold(0, |acc, (i, g)| acc | ((e.anticommutes_with(g) as u32) << i))
    }

    pub fn syndrome(&self, e: &PauliOp) -> Result<Syndrome> {
        self.check(e)?;
        Ok(Syndrome { bits: self.syndrome_bits(e), len: (self.n - 1) as u8 })
    }

    /// T_s = ∏ T_i^{s_i}.
    pub fn pure_error(&self, s: &Syndrome) -> Result<PauliOp> {
        self.check_syndrome(s)?;
        Ok(self.pure_error_bits(s.bits))
    }

    fn pure_error_bits(&self, bits: u32) -> PauliOp {
        self.pure_errors
            .iter()
            .enumerate()
            .filter(|(i, _)| (bits >> i) & 1 == 1)
            .fold(PauliOp::identity(self.n), |acc, (_, t)| acc * *t)
    }

    /// Class of E read off from its commutation with the logical representatives.
    pub fn logical_class(&self, e: &PauliOp) -> Result<LogicalClass> {
        self.check(e)?;
        Ok(self.class_unchecked(e))
    }

    #[inline]
    fn class_unchecked(&self, e: &PauliOp) -> LogicalClass {
        LogicalClass::from_xz(e.anticommutes_with(&self.logical_z), e.anticommutes_with(&self.logical_x))
    }

    pub fn logical_rep(&self, l: LogicalClass) -> PauliOp {
        let mut p = PauliOp::identity(self.n);
        if l.has_x() {
            p = p * self.logical_x;
        }
        if l.has_z() {
            p = p * self.logical_z;
        }
        p
    }

    /// Product of the generators selected by `mask`.
    pub fn stabilizer_element(&self, mask: u32) -> PauliOp {
        self.generators
            .iter()
            .enumerate()
            .filter(|(i, _)| (mask >> i) & 1 == 1)
            .fold(PauliOp::identity(self.n), |acc, (_, g)| acc * *g)
    }

    pub fn tls_decompose(&self, e: &PauliOp) -> Result<Tls> {
        let syndrome = self.syndrome(e)?;
        let t = self.pure_error_bits(syndrome.bits);
        let logical = self.class_unchecked(e);
        let stabilizer = *e * t * self.logical_rep(logical);
        Ok(Tls { pure_error: t, logical, stabilizer, syndrome })
    }

    /// The 2^{n-1} Paulis T_s · L · S, ordered by the generator mask of S.
    pub fn coset(&self, s: &Syndrome, l: LogicalClass) -> Result<impl Iterator<Item = PauliOp> + '_> {
        self.check_syndrome(s)?;
        let base = self.pure_error_bits(s.bits) * self.logical_rep(l);
        Ok((0..self.num_syndromes() as u32).map(move |m| base * self.stabilizer_element(m)))
    }

    /// Whether `e` lies in the stabilizer group (as a class).
    pub fn is_stabilizer(&self, e: &PauliOp) -> Result<bool> {
        let tls = self.tls_decompose(e)?;
        Ok(tls.syndrome.is_trivial() && tls.logical == LogicalClass::I)
    }

    pub fn tables(&self) -> Result<&CodeTables> {
        if self.n > MAX_TABLE_QUBITS {
            return Err(Error::Capacity(format!("lookup tables for {} qubits", self.n)));
        }
        Ok(self.tables.get_or_init(|| self.build_tables()))
    }

    fn build_tables(&self) -> CodeTables {
        let total = 1usize << (2 * self.n);
        let ns = self.num_syndromes();
        let mut syndrome = Vec::with_capacity(total);
        let mut class = Vec::with_capacity(total);
        let mut counts = vec![0u32; 4 * ns + 1];
        let mut best: Vec<Option<(usize, LogicalClass)>> = vec![None; ns];
        for e in PauliOp::all(self.n) {
            let s = self.syndrome_bits(&e);
            let l = self.class_unchecked(&e);
            syndrome.push(s);
            class.push(l.ord() as u8);
            counts[4 * s as usize + l.ord() + 1] += 1;
            let key = (e.weight(), l);
            let slot = &mut best[s as usize];
            if slot.is_none_or(|b| key < b) {
                *slot = Some(key);
            }
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let offsets = counts.clone();
        let mut cursor = counts;
        let mut members = vec![0u32; total];
        for idx in 0..total {
            let k = 4 * syndrome[idx] as usize + class[idx] as usize;
            members[cursor[k] as usize] = idx as u32;
            cursor[k] += 1;
        }
        CodeTables {
            syndrome,
            class,
            coset_offsets: offsets,
            coset_members: members,
            min_weight: best.into_iter().map(|b| b.expect("every syndrome is reachable").1).collect(),
        }
    }

    /// Π_s = ∏_i (I + (−1)^{s_i} g_i)/2.
    pub fn projector<T: Real>(&self, s: &Syndrome) -> Result<CMatrix<T>> {
        self.check_syndrome(s)?;
        if self.n > MAX_PROJECTOR_QUBITS {
            return Err(Error::Capacity(format!("dense projector on {} qubits", self.n)));
        }
        let mut m = CMatrix::identity(1 << self.n);
        let half = T::of(0.5);
        for (i, g) in self.generators.iter().enumerate() {
            let gm = g.left_apply(&m)?;
            m = if s.bit(i) { m.sub(&gm)? } else { m.add(&gm)? }.scale_real(half);
        }
        Ok(m)
    }

    fn build_isometry(&self) -> Result<CMatrix<f64>> {
        let d = 1usize << self.n;
        let mut ops = self.generators.clone();
        ops.push(self.logical_z);
        for b in 0..d {
            let mut v = CMatrix::<f64>::zeros(d, 1);
            v.set(b, 0, num_complex::Complex::new(1.0, 0.0));
            for g in &ops {
                let gv = g.left_apply(&v)?;
                v = v.add(&gv)?.scale_real(0.5);
            }
            let norm = v.frobenius_sqr();
            if norm > 1e-6 {
                let zero = v.scale_real(1.0 / norm.sqrt());
                let one = self.logical_x.left_apply(&zero)?;
                return Ok(CMatrix::from_fn(d, 2, |r, c| if c == 0 { zero.at(r, 0) } else { one.at(r, 0) }));
            }
        }
        Err(invalid!("empty code space"))
    }

    /// Encoding isometry V (2^n × 2), columns |0̄⟩, |1̄⟩.
    pub fn isometry<T: Real>(&self) -> Result<CMatrix<T>> {
        self.isometry
            .as_ref()
            .map(|v| v.cast())
            .ok_or_else(|| Error::Capacity(format!("isometry on {} qubits", self.n)))
    }
}
