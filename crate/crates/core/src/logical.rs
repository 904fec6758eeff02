//! Logical error rates of concatenated codes: effective channels, syndrome sampling and the
//! level-by-level estimator (direct or importance sampled).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::wht::chi_to_ptm_raw;
use crate::channel::{Channel, PauliDist};
use crate::code::{LogicalClass, StabilizerCode, Syndrome};
use crate::decoder::{
    build_decoder_input, coset_sums, ml_decode_product, product_coset_sums, residual_after, BlockDecoder, DecoderInput,
    DecoderSpec, SoftDecision,
};
use crate::error::{dim_err, invalid, Error, Result};
use crate::linalg::CMatrix;
use crate::pauli::PauliOp;
use crate::rng::stream;
use crate::scalar::{KahanSum, Real};

/// Syndromes at or below this probability are treated as unreachable. Chosen near the
/// round-off floor of the dense arithmetic rather than higher, so that weak channels keep
/// their (tiny but decisive) high-weight syndromes.
pub const UNREACHABLE_PROB: f64 = 1e-28;
/// Grid searched by [`tune_alpha`], largest first.
pub const ALPHA_GRID: [f64; 10] = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];
pub const MAX_LEVELS: usize = 3;

/// Conditional one-qubit logical channel after decoding one syndrome.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveChannel<T = f64> {
    pub syndrome: Syndrome,
    /// Rows Q, columns P in Pauli-index order; row 0 is (1, 0, 0, 0).
    pub transfer: [[T; 4]; 4],
    /// Diagonal χ in Pauli-index order.
    pub chi: [T; 4],
    /// Prob(s).
    pub prob: T,
    pub infidelity: T,
}

impl<T: Real> EffectiveChannel<T> {
    fn from_parts(syndrome: Syndrome, mut transfer: [[T; 4]; 4], chi: [T; 4], prob: T) -> Self {
        transfer[0] = [T::one(), T::zero(), T::zero(), T::zero()];
        let infidelity = (chi[1] + chi[2] + chi[3]).max(T::zero()).min(T::one());
        Self { syndrome, transfer, chi, prob, infidelity }
    }

    /// Pauli channel with rates `chi`.
    pub fn pauli(syndrome: Syndrome, chi: [T; 4], prob: T) -> Self {
        let lam = chi_to_ptm_raw(&chi).expect("length 4");
        let mut transfer = [[T::zero(); 4]; 4];
        for q in 0..4 {
            transfer[q][q] = lam[q];
        }
        Self::from_parts(syndrome, transfer, chi, prob)
    }

    /// The same channel followed by the logical Pauli `c`.
    pub fn corrected(&self, c: LogicalClass) -> Self {
        let ci = c.pauli_index();
        let mut chi = [T::zero(); 4];
        for p in 0..4 {
            chi[p ^ ci] = self.chi[p];
        }
        let mut transfer = self.transfer;
        for (q, row) in transfer.iter_mut().enumerate() {
            if one_qubit_anticommute(q, ci) {
                row.iter_mut().for_each(|x| *x = -*x);
            }
        }
        Self::from_parts(self.syndrome, transfer, chi, self.prob)
    }

    /// ½ Tr of the transfer matrix in the Pauli basis; equals 1 − infidelity.
    pub fn chi_identity_from_transfer(&self) -> T {
        (self.transfer[0][0] + self.transfer[1][1] + self.transfer[2][2] + self.transfer[3][3]) / T::of(4.0)
    }
}

fn one_qubit_anticommute(a: usize, b: usize) -> bool {
    a != 0 && b != 0 && a != b
}

fn sigma<T: Real>(p: usize) -> CMatrix<T> {
    PauliOp::single(1, 0, p).expect("one-qubit Pauli").to_matrix().expect("2x2")
}

/// Prob(s) for every syndrome of a Pauli channel.
pub fn syndrome_distribution<T: Real>(dist: &PauliDist<T>, code: &StabilizerCode) -> Result<Vec<T>> {
    Ok(coset_sums(dist, code)?.into_iter().map(|s| s[0] + s[1] + s[2] + s[3]).collect())
}

/// The true conditional logical channels of one block, relative to each pure error T_s
/// (no logical correction applied).
#[derive(Clone, Debug)]
pub struct BlockTruth<T = f64> {
    prob: Vec<T>,
    channels: Vec<Option<EffectiveChannel<T>>>,
}

impl<T: Real> BlockTruth<T> {
    /// Coherent computation for dense channels; Pauli channels take the exact coset path.
    pub fn from_channel(ch: &Channel<T>, code: &StabilizerCode) -> Result<Self> {
        match ch {
            Channel::Pauli(d) => Self::from_pauli(d, code),
            _ => Self::coherent(ch, code),
        }
    }

    pub fn from_pauli(dist: &PauliDist<T>, code: &StabilizerCode) -> Result<Self> {
        let sums = coset_sums(dist, code)?;
        let floor = T::of(UNREACHABLE_PROB);
        let mut prob = Vec::with_capacity(sums.len());
        let mut channels = Vec::with_capacity(sums.len());
        for (s, c) in sums.iter().enumerate() {
            let syn = code.syndrome_from_value(s)?;
            let mass = c[0] + c[1] + c[2] + c[3];
            prob.push(mass);
            channels.push((mass > floor).then(|| {
                let d = SoftDecision::from_coset_sums(syn, *c).expect("positive mass");
                EffectiveChannel::pauli(syn, residual_after(&d.probs, LogicalClass::I), mass)
            }));
        }
        Ok(Self { prob, channels })
    }

    /// Propagate the Kraus operators through the encoder: A_i = (T_s V)† K_i V.
    pub fn coherent(ch: &Channel<T>, code: &StabilizerCode) -> Result<Self> {
        if ch.n() != code.n() {
            return Err(dim_err!("{}-qubit channel for a {}-qubit code", ch.n(), code.n()));
        }
        let v = code.isometry::<T>()?;
        let w = ch.kraus_times(&v)?;
        let sig: Vec<CMatrix<T>> = (0..4).map(sigma).collect();
        let floor = T::of(UNREACHABLE_PROB);
        let mut prob = Vec::with_capacity(code.num_syndromes());
        let mut channels = Vec::with_capacity(code.num_syndromes());
        for s in code.syndromes() {
            let tv = code.pure_error(&s)?.left_apply(&v)?;
            let a: Vec<CMatrix<T>> = w.iter().map(|wi| tv.adjoint_matmul(wi)).collect::<Result<_>>()?;
            let p = crate::scalar::kahan_sum(a.iter().map(|ai| ai.frobenius_sqr())) * T::of(0.5);
            prob.push(p);
            if !(p > floor) {
                channels.push(None);
                continue;
            }
            let mut chi = [T::zero(); 4];
            let mut transfer = [[T::zero(); 4]; 4];
            for ai in &a {
                for (pi, sp) in sig.iter().enumerate() {
                    chi[pi] += sp.hs_inner(ai).norm_sqr();
                    let b = ai.matmul(sp)?.matmul(&ai.adjoint())?;
                    for (qi, sq) in sig.iter().enumerate() {
                        transfer[qi][pi] += sq.hs_inner(&b).re;
                    }
                }
            }
            let cn = T::one() / (T::of(4.0) * p);
            let tn = T::one() / (T::of(2.0) * p);
            chi.iter_mut().for_each(|x| *x *= cn);
            transfer.iter_mut().flatten().for_each(|x| *x *= tn);
            channels.push(Some(EffectiveChannel::from_parts(s, transfer, chi, p)));
        }
        Ok(Self { prob, channels })
    }

    pub fn prob(&self) -> &[T] {
        &self.prob
    }

    pub fn channel(&self, s: usize) -> Option<&EffectiveChannel<T>> {
        self.channels[s].as_ref()
    }

    pub fn is_reachable(&self, s: usize) -> bool {
        self.channels[s].is_some()
    }

    /// Syndromes on which the best possible decision still fails more often than not.
    pub fn uncorrectable(&self) -> Vec<bool> {
        self.channels
            .iter()
            .map(|c| c.as_ref().is_some_and(|c| c.chi.iter().all(|&x| x < T::of(0.5))))
            .collect()
    }
}

/// Conditional effective channel of a dense channel for one syndrome, after `correction`
/// (a logical operator of the code) is applied on top of the pure error.
pub fn effective_channel_coherent<T: Real>(
    ch: &Channel<T>,
    code: &StabilizerCode,
    s: &Syndrome,
    correction: &PauliOp,
) -> Result<EffectiveChannel<T>> {
    let tls = code.tls_decompose(correction)?;
    if !tls.syndrome.is_trivial() {
        return Err(invalid!("correction {correction} is not a logical operator"));
    }
    code.syndrome_from_value(s.value())?;
    let truth = BlockTruth::coherent(ch, code)?;
    match truth.channel(s.value()) {
        Some(c) => Ok(c.corrected(tls.logical)),
        None => Err(Error::UnreachableSyndrome { syndrome: s.bits(), prob: truth.prob[s.value()].f64() }),
    }
}

/// Conditional effective channel of a Pauli channel for one syndrome after applying `correction`.
pub fn effective_channel_pauli<T: Real>(
    dist: &PauliDist<T>,
    code: &StabilizerCode,
    s: &Syndrome,
    correction: LogicalClass,
) -> Result<EffectiveChannel<T>> {
    let d = crate::decoder::ml_decode_block(dist, s, code)?;
    Ok(EffectiveChannel::pauli(*s, residual_after(&d.probs, correction), d.mass))
}

/// Exact level-1 average over all syndromes.
#[derive(Clone, Debug, PartialEq)]
pub struct Level1Exact<T = f64> {
    pub infidelity: T,
    pub transfer: [[T; 4]; 4],
    pub chi: [T; 4],
    /// Per-syndrome infidelities after decoding (zero where unreachable).
    pub per_syndrome: Vec<T>,
}

pub fn level1_exact<T: Real>(truth: &BlockTruth<T>, decoder: &BlockDecoder<T>) -> Level1Exact<T> {
    let mut transfer = [[KahanSum::<T>::new(); 4]; 4];
    let mut chi = [KahanSum::<T>::new(); 4];
    let mut r = KahanSum::new();
    let mut per = vec![T::zero(); truth.prob.len()];
    for (s, slot) in per.iter_mut().enumerate() {
        let Some(c) = truth.channel(s) else { continue };
        let e = c.corrected(decoder.decision(s).chosen);
        let p = truth.prob[s];
        for q in 0..4 {
            chi[q].add(p * e.chi[q]);
            for k in 0..4 {
                transfer[q][k].add(p * e.transfer[q][k]);
            }
        }
        r.add(p * e.infidelity);
        *slot = e.infidelity;
    }
    Level1Exact {
        infidelity: r.value(),
        transfer: transfer.map(|row| row.map(|k| k.value())),
        chi: chi.map(|k| k.value()),
        per_syndrome: per,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Direct,
    Importance,
}

fn default_threshold() -> f64 {
    0.005
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub mode: SamplingMode,
    /// Exponent of Q(s) ∝ Prob(s)^α; tuned from `outlier_threshold` when absent.
    #[serde(default)]
    pub alpha: Option<f64>,
    pub samples: usize,
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub outlier_threshold: f64,
}

impl SamplerConfig {
    pub fn direct(samples: usize, seed: u64) -> Self {
        Self { mode: SamplingMode::Direct, alpha: None, samples, seed, outlier_threshold: default_threshold() }
    }

    pub fn importance(alpha: f64, samples: usize, seed: u64) -> Self {
        Self { mode: SamplingMode::Importance, alpha: Some(alpha), samples, seed, outlier_threshold: default_threshold() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(invalid!("sample count must be at least 1"));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a <= 1.0) {
                return Err(invalid!("alpha = {a} outside (0, 1]"));
            }
        }
        if !(self.outlier_threshold > 0.0 && self.outlier_threshold < 1.0) {
            return Err(invalid!("outlier threshold {} outside (0, 1)", self.outlier_threshold));
        }
        Ok(())
    }
}

fn alpha_from<T: Real>(prob: &[T], uncorrectable: &[bool], threshold: f64) -> f64 {
    for &a in &ALPHA_GRID {
        let q: Vec<f64> = prob.iter().map(|p| if p.f64() > 0.0 { p.f64().powf(a) } else { 0.0 }).collect();
        let z: f64 = q.iter().sum();
        let bad: f64 = q.iter().zip(uncorrectable).filter(|(_, &u)| u).map(|(x, _)| x).sum();
        if z > 0.0 && bad / z >= threshold {
            return a;
        }
    }
    1.0
}

/// Largest α on the grid giving the uncorrectable syndromes at least `threshold` of Q's mass.
/// Returns 1.0 when no grid point gets there (including noiseless channels).
pub fn tune_alpha<T: Real>(dist: &PauliDist<T>, code: &StabilizerCode, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid!("threshold {threshold} outside (0, 1)"));
    }
    let truth = BlockTruth::from_pauli(dist, code)?;
    Ok(alpha_from(&truth.prob, &truth.uncorrectable(), threshold))
}

/// Result of one estimator run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
    pub alpha: f64,
    pub mean_weight: f64,
    pub weight_stderr: f64,
    pub skipped: usize,
    pub skipped_fraction: f64,
    /// Upper-level decisions that fell back to minimum weight (decoder gave zero mass).
    pub fallbacks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Clone, Copy, Debug, Default)]
struct Sample<T> {
    weight: T,
    value: T,
    skipped: bool,
    fallbacks: usize,
}

struct Children<T> {
    truth: Vec<[T; 4]>,
    belief: Vec<[T; 4]>,
    weight: T,
    skipped: bool,
    fallbacks: usize,
}

struct BlockOutcome<T> {
    truth: [T; 4],
    belief: [T; 4],
    weight: T,
    skipped: bool,
    fallbacks: usize,
}

/// One configured level-ℓ estimator: truth tables, decoder tables and the proposal Q.
pub struct Simulator<'a, T: Real = f64> {
    code: &'a StabilizerCode,
    truth: &'a BlockTruth<T>,
    decoder: &'a BlockDecoder<T>,
    hard: bool,
    levels: usize,
    cdf: Vec<T>,
    weights: Vec<T>,
    alpha: f64,
}

impl<'a, T: Real> Simulator<'a, T> {
    pub fn new(
        code: &'a StabilizerCode,
        truth: &'a BlockTruth<T>,
        decoder: &'a BlockDecoder<T>,
        input: &DecoderInput<T>,
        levels: usize,
        sampler: &SamplerConfig,
    ) -> Result<Self> {
        sampler.validate()?;
        if levels == 0 || levels > MAX_LEVELS {
            return Err(invalid!("levels = {levels} outside 1..={MAX_LEVELS}"));
        }
        let alpha = match sampler.mode {
            SamplingMode::Direct => 1.0,
            SamplingMode::Importance => match sampler.alpha {
                Some(a) => a,
                None => alpha_from(&truth.prob, &truth.uncorrectable(), sampler.outlier_threshold),
            },
        };
        let reach: Vec<T> = (0..truth.prob.len())
            .map(|s| if truth.is_reachable(s) { truth.prob[s] } else { T::zero() })
            .collect();
        let q: Vec<T> = if alpha == 1.0 { reach.clone() } else { reach.iter().map(|p| p.powf(T::of(alpha))).collect() };
        let zq = crate::scalar::kahan_sum(q.iter().copied());
        let zp = crate::scalar::kahan_sum(reach.iter().copied());
        if !(zq > T::zero()) {
            return Err(Error::Sampling("no reachable syndrome".into()));
        }
        let mut acc = T::zero();
        let cdf = q
            .iter()
            .map(|x| {
                acc += *x / zq;
                acc
            })
            .collect();
        // direct mode: weights exactly one
        let weights = q
            .iter()
            .zip(&reach)
            .map(|(qs, ps)| if alpha == 1.0 || *qs == T::zero() { T::one() } else { (*ps / zp) / (*qs / zq) })
            .collect();
        Ok(Self { code, truth, decoder, hard: matches!(input, DecoderInput::MinWeight), levels, cdf, weights, alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn draw_syndrome(&self, u: T) -> usize {
        // u above the rounded top of the CDF takes the last syndrome with mass
        self.cdf
            .iter()
            .position(|&c| u < c)
            .unwrap_or_else(|| (0..self.cdf.len()).rev().find(|&s| self.truth.is_reachable(s)).unwrap_or(0))
    }

    fn block(&self, level: usize, rng: &mut crate::rng::Rng) -> BlockOutcome<T> {
        if level == 1 {
            let s = self.draw_syndrome(T::of(rng.random::<f64>()));
            let decision = self.decoder.decision(s);
            return match self.truth.channel(s) {
                Some(c) => BlockOutcome {
                    truth: c.corrected(decision.chosen).chi,
                    belief: decision.residual(),
                    weight: self.weights[s],
                    skipped: false,
                    fallbacks: 0,
                },
                None => BlockOutcome {
                    truth: [T::one(), T::zero(), T::zero(), T::zero()],
                    belief: [T::one(), T::zero(), T::zero(), T::zero()],
                    weight: T::zero(),
                    skipped: true,
                    fallbacks: 0,
                },
            };
        }
        let mut kids = self.children(level, rng);
        // the syndrome comes from the true block channels
        let mut idx = 0usize;
        for (q, m) in kids.truth.iter().enumerate() {
            idx |= draw_pauli(m, T::of(rng.random::<f64>())) << (2 * q);
        }
        let tables = self.code.tables().expect("tables were built by the decoder");
        let s = tables.syndrome_of(idx);
        let syn = self.code.syndrome_from_value(s).expect("in range");
        let decision = if self.hard {
            SoftDecision::indicator(syn, tables.min_weight_class(s))
        } else {
            match ml_decode_product(&kids.belief, &syn, self.code) {
                Ok(d) => d,
                Err(_) => {
                    kids.fallbacks += 1;
                    SoftDecision::indicator(syn, tables.min_weight_class(s))
                }
            }
        };
        let sums = product_coset_sums(&kids.truth, s, self.code).expect("arity checked");
        let true_soft = SoftDecision::from_coset_sums(syn, sums).expect("drawn syndrome has mass");
        BlockOutcome {
            truth: residual_after(&true_soft.probs, decision.chosen),
            belief: decision.residual(),
            weight: kids.weight,
            skipped: kids.skipped,
            fallbacks: kids.fallbacks,
        }
    }

    /// The n sub-blocks of a level-`level` block, drawn in order.
    fn children(&self, level: usize, rng: &mut crate::rng::Rng) -> Children<T> {
        let n = self.code.n();
        let mut kids = Children {
            truth: Vec::with_capacity(n),
            belief: Vec::with_capacity(n),
            weight: T::one(),
            skipped: false,
            fallbacks: 0,
        };
        for _ in 0..n {
            let child = self.block(level - 1, rng);
            kids.truth.push(child.truth);
            kids.belief.push(child.belief);
            kids.weight *= child.weight;
            kids.skipped |= child.skipped;
            kids.fallbacks += child.fallbacks;
        }
        kids
    }

    /// E[r | children] at the top block: the top syndrome is summed out exactly instead of drawn.
    fn top_expectation(&self, kids: &Children<T>) -> (T, usize) {
        let tables = self.code.tables().expect("tables were built by the decoder");
        let truth = crate::decoder::product_coset_sums_all(&kids.truth, self.code).expect("arity checked");
        let belief = if self.hard {
            None
        } else {
            Some(crate::decoder::product_coset_sums_all(&kids.belief, self.code).expect("arity checked"))
        };
        let mut r = KahanSum::new();
        let mut fallbacks = 0;
        for (s, t) in truth.iter().enumerate() {
            let total = t[0] + t[1] + t[2] + t[3];
            if total == T::zero() {
                continue;
            }
            let chosen = match &belief {
                Some(b) if b[s].iter().any(|&x| x > T::zero()) => crate::decoder::argmax_class(&b[s]),
                Some(_) => {
                    fallbacks += 1;
                    tables.min_weight_class(s)
                }
                None => tables.min_weight_class(s),
            };
            for l in LogicalClass::ALL {
                if l != chosen {
                    r.add(t[l.ord()]);
                }
            }
        }
        (r.value(), fallbacks)
    }

    fn sample(&self, seed: u64, i: usize) -> Sample<T> {
        let mut rng = stream(seed, i as u64);
        if self.levels > 1 {
            let kids = self.children(self.levels, &mut rng);
            if kids.skipped {
                return Sample { weight: T::zero(), value: T::zero(), skipped: true, fallbacks: kids.fallbacks };
            }
            let (r, fb) = self.top_expectation(&kids);
            return Sample { weight: kids.weight, value: kids.weight * r, skipped: false, fallbacks: kids.fallbacks + fb };
        }
        let out = self.block(1, &mut rng);
        if out.skipped {
            return Sample { weight: T::zero(), value: T::zero(), skipped: true, fallbacks: out.fallbacks };
        }
        let r = out.truth[1] + out.truth[2] + out.truth[3];
        Sample { weight: out.weight, value: out.weight * r, skipped: false, fallbacks: out.fallbacks }
    }

    fn samples(&self, sampler: &SamplerConfig) -> Vec<Sample<T>> {
        (0..sampler.samples).into_par_iter().with_min_len(64).map(|i| self.sample(sampler.seed, i)).collect()
    }

    pub fn run(&self, sampler: &SamplerConfig) -> Estimate {
        summarize(&self.samples(sampler), self.alpha)
    }
}

fn draw_pauli<T: Real>(m: &[T; 4], u: T) -> usize {
    let mut acc = T::zero();
    let mut last = 0;
    for (i, &p) in m.iter().enumerate() {
        if p > T::zero() {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

fn mean_and_se<T: Real>(xs: impl Iterator<Item = T> + Clone, n: usize) -> (f64, f64) {
    let mean = crate::scalar::kahan_sum(xs.clone()) / T::of(n as f64);
    if n < 2 {
        return (mean.f64(), 0.0);
    }
    let ss = crate::scalar::kahan_sum(xs.map(|x| (x - mean) * (x - mean)));
    let var = ss / T::of((n - 1) as f64);
    (mean.f64(), (var / T::of(n as f64)).sqrt().f64())
}

fn summarize<T: Real>(samples: &[Sample<T>], alpha: f64) -> Estimate {
    let n = samples.len();
    let (mean, stderr) = mean_and_se(samples.iter().map(|s| s.value), n);
    let (mean_weight, weight_stderr) = mean_and_se(samples.iter().map(|s| s.weight), n);
    let skipped = samples.iter().filter(|s| s.skipped).count();
    let skipped_fraction = skipped as f64 / n as f64;
    let warning = (skipped_fraction > 0.01).then(|| format!("{:.2}% of samples hit unreachable syndromes", 100.0 * skipped_fraction));
    Estimate {
        mean,
        stderr,
        samples: n,
        alpha,
        mean_weight,
        weight_stderr,
        skipped,
        skipped_fraction,
        fallbacks: samples.iter().map(|s| s.fallbacks).sum(),
        warning,
    }
}

/// Two decoders run on identical random streams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedEstimate {
    pub a: Estimate,
    pub b: Estimate,
    /// Covariance of the two sample means.
    pub covariance: f64,
}

impl PairedEstimate {
    /// a / b with its delta-method standard error.
    pub fn ratio(&self) -> (f64, f64) {
        let (ma, mb) = (self.a.mean, self.b.mean);
        if ma == mb {
            // identical streams and identical decisions, or both zero
            return (if ma == 0.0 { f64::NAN } else { 1.0 }, 0.0);
        }
        let ratio = ma / mb;
        let rel = (self.a.stderr / ma).powi(2) + (self.b.stderr / mb).powi(2) - 2.0 * self.covariance / (ma * mb);
        (ratio, ratio.abs() * rel.max(0.0).sqrt())
    }
}

/// Simulate two decoders with common random numbers.
pub fn simulate_paired<T: Real>(a: &Simulator<'_, T>, b: &Simulator<'_, T>, sampler: &SamplerConfig) -> PairedEstimate {
    let sa = a.samples(sampler);
    let sb = b.samples(sampler);
    let n = sampler.samples;
    let ma = crate::scalar::kahan_sum(sa.iter().map(|s| s.value)) / T::of(n as f64);
    let mb = crate::scalar::kahan_sum(sb.iter().map(|s| s.value)) / T::of(n as f64);
    let covariance = if n < 2 {
        0.0
    } else {
        let c = crate::scalar::kahan_sum(sa.iter().zip(&sb).map(|(x, y)| (x.value - ma) * (y.value - mb)));
        (c / T::of(((n - 1) * n) as f64)).f64()
    };
    PairedEstimate { a: summarize(&sa, a.alpha), b: summarize(&sb, b.alpha), covariance }
}

/// Infidelity of a channel as seen by the D1 decoder, taken from the twirl so that the
/// identity-only dataset carries exactly the oracle's identity rate.
pub fn physical_infidelity<T: Real>(oracle: &PauliDist<T>) -> T {
    T::one() - oracle.probs()[0]
}

/// End-to-end estimate for a physical channel and a decoder specification.
pub fn simulate_concatenated<T: Real>(
    ch: &Channel<T>,
    code: &StabilizerCode,
    levels: usize,
    spec: &DecoderSpec<T>,
    sampler: &SamplerConfig,
) -> Result<Estimate> {
    let oracle = ch.chi_diagonal()?;
    let input = build_decoder_input(spec, &oracle, physical_infidelity(&oracle))?;
    let decoder = BlockDecoder::new(&input, code)?;
    let truth = BlockTruth::from_channel(ch, code)?;
    Ok(Simulator::new(code, &truth, &decoder, &input, levels, sampler)?.run(sampler))
}

/// One row of the sampler comparison: direct and importance estimates with the same N.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub samples: usize,
    pub direct_mean: f64,
    pub direct_stderr: f64,
    pub importance_mean: f64,
    pub importance_stderr: f64,
    pub alpha: f64,
}

/// Direct vs importance estimates for each sample count (seeds derived per row).
pub fn convergence_study<T: Real>(
    code: &StabilizerCode,
    truth: &BlockTruth<T>,
    decoder: &BlockDecoder<T>,
    input: &DecoderInput<T>,
    levels: usize,
    importance: &SamplerConfig,
    sample_counts: &[usize],
) -> Result<Vec<ConvergenceRow>> {
    sample_counts
        .iter()
        .enumerate()
        .map(|(row, &n)| {
            let seed = crate::rng::derive_seed(importance.seed, row as u64);
            let direct_cfg = SamplerConfig { mode: SamplingMode::Direct, samples: n, seed, ..importance.clone() };
            let is_cfg = SamplerConfig { mode: SamplingMode::Importance, samples: n, seed, ..importance.clone() };
            let d = Simulator::new(code, truth, decoder, input, levels, &direct_cfg)?.run(&direct_cfg);
            let sim = Simulator::new(code, truth, decoder, input, levels, &is_cfg)?;
            let i = sim.run(&is_cfg);
            Ok(ConvergenceRow {
                samples: n,
                direct_mean: d.mean,
                direct_stderr: d.stderr,
                importance_mean: i.mean,
                importance_stderr: i.stderr,
                alpha: sim.alpha(),
            })
        })
        .collect()
}
