//! Syndrome decoders: coset ML on a block, minimum weight, and soft message passing across levels.

use serde::{Deserialize, Serialize};

use crate::cer::CerDataset;
use crate::channel::PauliDist;
use crate::code::{LogicalClass, StabilizerCode, Syndrome};
use crate::error::{dim_err, invalid, Error, Result};
use crate::scalar::{KahanSum, Real};
use crate::uss::uss_complete;

/// Prob(L|s) for L in I, X, Y, Z order, and the argmax.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftDecision<T = f64> {
    pub syndrome: Syndrome,
    pub probs: [T; 4],
    pub chosen: LogicalClass,
    /// Unconditioned mass Σ_L (coset sums); the model's Prob(s).
    pub mass: T,
}

impl<T: Real> SoftDecision<T> {
    /// Normalize four coset sums; zero mass is a degenerate syndrome.
    pub fn from_coset_sums(syndrome: Syndrome, sums: [T; 4]) -> Result<Self> {
        let mass = sums[0] + sums[1] + sums[2] + sums[3];
        if !(mass > T::zero()) {
            return Err(Error::DegenerateSyndrome { syndrome: syndrome.bits() });
        }
        let probs = sums.map(|x| x / mass);
        Ok(Self { syndrome, probs, chosen: argmax_class(&probs), mass })
    }

    /// Certain decision for `chosen`.
    pub fn indicator(syndrome: Syndrome, chosen: LogicalClass) -> Self {
        let mut probs = [T::zero(); 4];
        probs[chosen.ord()] = T::one();
        Self { syndrome, probs, chosen, mass: T::one() }
    }

    pub fn prob(&self, l: LogicalClass) -> T {
        self.probs[l.ord()]
    }

    /// Distribution of the logical error left after applying `chosen`, as a one-qubit
    /// Pauli-index vector (I, X, Z, Y).
    pub fn residual(&self) -> [T; 4] {
        residual_after(&self.probs, self.chosen)
    }
}

/// Reindex class-ordered probabilities by a correction: out[L·C] = probs[L], in Pauli-index order.
pub fn residual_after<T: Real>(probs: &[T; 4], correction: LogicalClass) -> [T; 4] {
    let mut out = [T::zero(); 4];
    for l in LogicalClass::ALL {
        out[l.mul(correction).pauli_index()] = probs[l.ord()];
    }
    out
}

/// Relative gap below which two class probabilities count as tied.
pub fn tie_tolerance<T: Real>() -> T {
    T::epsilon() * T::of(1024.0)
}

/// First maximum in I, X, Y, Z order. Values within [`tie_tolerance`] of the maximum tie,
/// so exactly degenerate classes do not get separated by rounding.
pub fn argmax_class<T: Real>(probs: &[T; 4]) -> LogicalClass {
    let max = probs.iter().copied().fold(T::neg_infinity(), T::max);
    let floor = max - max.abs() * tie_tolerance::<T>();
    let best = probs.iter().position(|&p| p >= floor).unwrap_or(0);
    LogicalClass::ALL[best]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecoderKind {
    MlFull,
    MlUss,
    Mw,
    D1,
}

impl DecoderKind {
    pub fn label(self) -> &'static str {
        match self {
            DecoderKind::MlFull => "ml_full",
            DecoderKind::MlUss => "ml_uss",
            DecoderKind::Mw => "mw",
            DecoderKind::D1 => "d1",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoderSpec<T = f64> {
    pub kind: DecoderKind,
    pub dataset: Option<CerDataset<T>>,
    pub notes: String,
}

impl<T: Real> DecoderSpec<T> {
    pub fn new(kind: DecoderKind) -> Self {
        Self { kind, dataset: None, notes: String::new() }
    }

    pub fn ml_uss(dataset: CerDataset<T>) -> Self {
        Self { kind: DecoderKind::MlUss, dataset: Some(dataset), notes: String::new() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == DecoderKind::MlUss && self.dataset.is_none() {
            return Err(Error::Config("ml_uss decoder needs a CER dataset".into()));
        }
        Ok(())
    }
}

/// What a decoder believes about the noise.
#[derive(Clone, Debug, PartialEq)]
pub enum DecoderInput<T = f64> {
    Dist(PauliDist<T>),
    MinWeight,
}

/// The distribution each decoder kind works from. `eps` is the physical infidelity seen by D1.
pub fn build_decoder_input<T: Real>(spec: &DecoderSpec<T>, oracle: &PauliDist<T>, eps: T) -> Result<DecoderInput<T>> {
    spec.validate()?;
    Ok(match spec.kind {
        DecoderKind::MlFull => DecoderInput::Dist(oracle.clone()),
        DecoderKind::MlUss => {
            let ds = spec.dataset.as_ref().expect("validated");
            if ds.n() != oracle.n() {
                return Err(dim_err!("dataset on {} qubits, channel on {}", ds.n(), oracle.n()));
            }
            DecoderInput::Dist(uss_complete(ds)?.into_dist())
        }
        DecoderKind::D1 => {
            if !(eps >= T::zero() && eps <= T::one()) {
                return Err(invalid!("infidelity {eps} outside [0, 1]"));
            }
            let ds = CerDataset::identity_only(oracle.n(), T::one() - eps)?;
            DecoderInput::Dist(uss_complete(&ds)?.into_dist())
        }
        DecoderKind::Mw => DecoderInput::MinWeight,
    })
}

fn check_code<T: Real>(dist: &PauliDist<T>, code: &StabilizerCode) -> Result<()> {
    if dist.n() != code.n() {
        return Err(dim_err!("{}-qubit distribution for a {}-qubit code", dist.n(), code.n()));
    }
    Ok(())
}

/// Coset sums [s][L] for every syndrome in one pass over the distribution.
pub fn coset_sums<T: Real>(dist: &PauliDist<T>, code: &StabilizerCode) -> Result<Vec<[T; 4]>> {
    check_code(dist, code)?;
    let tables = code.tables()?;
    let mut acc = vec![[KahanSum::<T>::new(); 4]; code.num_syndromes()];
    for (idx, &p) in dist.probs().iter().enumerate() {
        if p != T::zero() {
            acc[tables.syndrome_of(idx)][tables.class_of(idx).ord()].add(p);
        }
    }
    Ok(acc.into_iter().map(|a| a.map(|k| k.value())).collect())
}

/// ML over the four cosets of `s`.
pub fn ml_decode_block<T: Real>(dist: &PauliDist<T>, s: &Syndrome, code: &StabilizerCode) -> Result<SoftDecision<T>> {
    check_code(dist, code)?;
    code.syndrome_from_value(s.value())?;
    let tables = code.tables()?;
    let probs = dist.probs();
    let sums = LogicalClass::ALL
        .map(|l| crate::scalar::kahan_sum(tables.coset(s.value(), l).iter().map(|&i| probs[i as usize])));
    SoftDecision::from_coset_sums(*s, sums)
}

/// Product-form coset sums for per-qubit marginals (Pauli-index order).
pub fn product_coset_sums<T: Real>(marginals: &[[T; 4]], s: usize, code: &StabilizerCode) -> Result<[T; 4]> {
    if marginals.len() != code.n() {
        return Err(dim_err!("{} marginals for a {}-qubit code", marginals.len(), code.n()));
    }
    let tables = code.tables()?;
    Ok(LogicalClass::ALL.map(|l| {
        let mut acc = T::zero();
        for &idx in tables.coset(s, l) {
            let mut prod = T::one();
            let mut bits = idx as usize;
            for m in marginals {
                prod *= m[bits & 3];
                bits >>= 2;
            }
            acc += prod;
        }
        acc
    }))
}

/// Product-form coset sums for every syndrome at once.
///
/// Syndrome and class are both linear in the error, so the joint law of (syndrome, class)
/// is an XOR-convolution of the per-qubit laws.
pub fn product_coset_sums_all<T: Real>(marginals: &[[T; 4]], code: &StabilizerCode) -> Result<Vec<[T; 4]>> {
    if marginals.len() != code.n() {
        return Err(dim_err!("{} marginals for a {}-qubit code", marginals.len(), code.n()));
    }
    let tables = code.tables()?;
    let width = 4 * code.num_syndromes();
    let mut acc = vec![T::zero(); width];
    acc[0] = T::one();
    let mut next = vec![T::zero(); width];
    for (q, m) in marginals.iter().enumerate() {
        let keys = [0usize, 1, 2, 3].map(|p| {
            let idx = p << (2 * q);
            (tables.syndrome_of(idx) << 2) | tables.class_of(idx).pauli_index()
        });
        next.iter_mut().for_each(|x| *x = T::zero());
        for (p, &key) in keys.iter().enumerate() {
            let w = m[p];
            if w == T::zero() {
                continue;
            }
            for (k, &a) in acc.iter().enumerate() {
                next[k ^ key] += a * w;
            }
        }
        std::mem::swap(&mut acc, &mut next);
    }
    Ok(acc
        .chunks_exact(4)
        .map(|c| LogicalClass::ALL.map(|l| c[l.pauli_index()]))
        .collect())
}

/// ML decoding when Prob(E) = ∏_q marginals[q][E_q].
pub fn ml_decode_product<T: Real>(marginals: &[[T; 4]], s: &Syndrome, code: &StabilizerCode) -> Result<SoftDecision<T>> {
    for m in marginals {
        let total = m[0] + m[1] + m[2] + m[3];
        if m.iter().any(|&x| x < T::zero()) || (total - T::one()).abs() > T::of(T::SUM_TOL) {
            return Err(invalid!("marginal {m:?} is not a distribution"));
        }
    }
    code.syndrome_from_value(s.value())?;
    SoftDecision::from_coset_sums(*s, product_coset_sums(marginals, s.value(), code)?)
}

/// Class of the lowest-weight error with syndrome `s`.
pub fn mw_decode<T: Real>(s: &Syndrome, code: &StabilizerCode) -> Result<SoftDecision<T>> {
    code.syndrome_from_value(s.value())?;
    Ok(SoftDecision::indicator(*s, code.tables()?.min_weight_class(s.value())))
}

/// Soft decisions for every syndrome of one block, precomputed.
///
/// Syndromes the model gives zero mass fall back to the minimum-weight class.
#[derive(Clone, Debug)]
pub struct BlockDecoder<T = f64> {
    decisions: Vec<SoftDecision<T>>,
    fallback: Vec<bool>,
}

impl<T: Real> BlockDecoder<T> {
    pub fn new(input: &DecoderInput<T>, code: &StabilizerCode) -> Result<Self> {
        let mut decisions = Vec::with_capacity(code.num_syndromes());
        let mut fallback = Vec::with_capacity(code.num_syndromes());
        let sums = match input {
            DecoderInput::Dist(d) => Some(coset_sums(d, code)?),
            DecoderInput::MinWeight => None,
        };
        for s in code.syndromes() {
            let soft = match &sums {
                Some(sums) => SoftDecision::from_coset_sums(s, sums[s.value()]).ok(),
                None => Some(mw_decode(&s, code)?),
            };
            fallback.push(soft.is_none() && sums.is_some());
            decisions.push(match soft {
                Some(d) => d,
                None => mw_decode(&s, code)?,
            });
        }
        Ok(Self { decisions, fallback })
    }

    pub fn decision(&self, s: usize) -> &SoftDecision<T> {
        &self.decisions[s]
    }

    pub fn decisions(&self) -> &[SoftDecision<T>] {
        &self.decisions
    }

    pub fn is_fallback(&self, s: usize) -> bool {
        self.fallback[s]
    }
}

/// Evidence for a level-1 block.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockEvidence<T = f64> {
    Joint { dist: PauliDist<T>, syndrome: Syndrome },
    Product { marginals: Vec<[T; 4]>, syndrome: Syndrome },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MessagePassingOutput<T = f64> {
    /// `levels[0]` holds the level-1 block decisions, the last entry the single top decision.
    pub levels: Vec<Vec<SoftDecision<T>>>,
    pub correction: LogicalClass,
}

impl<T: Real> MessagePassingOutput<T> {
    pub fn top(&self) -> &SoftDecision<T> {
        &self.levels.last().expect("at least one level")[0]
    }
}

/// Bottom-up ML message passing for `levels`-fold concatenation of `code` with itself.
///
/// `upper[k]` holds the syndromes of the level-(k+2) blocks, `n^{levels-k-2}` of them.
/// Soft four-vectors pass upward; each block's logical error is measured against its pure error.
pub fn message_passing_decode<T: Real>(
    levels: usize,
    blocks: &[BlockEvidence<T>],
    upper: &[Vec<Syndrome>],
    code: &StabilizerCode,
) -> Result<MessagePassingOutput<T>> {
    let n = code.n();
    if levels == 0 {
        return Err(invalid!("at least one level"));
    }
    let expected = n.checked_pow(levels as u32 - 1).ok_or_else(|| Error::Capacity("too many levels".into()))?;
    if blocks.len() != expected {
        return Err(dim_err!("{} level-1 blocks, expected {expected}", blocks.len()));
    }
    if upper.len() != levels - 1 {
        return Err(dim_err!("{} upper syndrome levels, expected {}", upper.len(), levels - 1));
    }
    let mut current = blocks
        .iter()
        .map(|b| match b {
            BlockEvidence::Joint { dist, syndrome } => ml_decode_block(dist, syndrome, code),
            BlockEvidence::Product { marginals, syndrome } => ml_decode_product(marginals, syndrome, code),
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![current.clone()];
    for (k, syns) in upper.iter().enumerate() {
        if syns.len() * n != current.len() {
            return Err(dim_err!("level {} has {} syndromes for {} children", k + 2, syns.len(), current.len()));
        }
        current = syns
            .iter()
            .zip(current.chunks(n))
            .map(|(s, kids)| {
                let marginals: Vec<[T; 4]> = kids.iter().map(|d| pauli_order(&d.probs)).collect();
                ml_decode_product(&marginals, s, code)
            })
            .collect::<Result<Vec<_>>>()?;
        out.push(current.clone());
    }
    let correction = current[0].chosen;
    Ok(MessagePassingOutput { levels: out, correction })
}

/// Class-ordered (I, X, Y, Z) to Pauli-index order (I, X, Z, Y).
pub fn pauli_order<T: Real>(probs: &[T; 4]) -> [T; 4] {
    residual_after(probs, LogicalClass::I)
}
