//! Seeded random physical-noise generators for a single code block.

use num_complex::Complex;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{Channel, MAX_CHANNEL_QUBITS};
use crate::error::{invalid, Error, Result};
use crate::linalg::{apply_local_left, expm, CMatrix};
use crate::pauli::PauliOp;
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// exp(−iHt) for a sum of random local Hermitians.
    Cg1d,
    /// Product of random local gates exp(iH_i t).
    RandomCircuit,
    /// Composition of random local unitaries and random local Pauli channels.
    RandomCptp,
}

fn default_n() -> usize {
    7
}
fn default_max_kraus() -> usize {
    crate::channel::DEFAULT_MAX_KRAUS
}
fn default_attempts() -> usize {
    100
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModelConfig {
    pub kind: NoiseKind,
    #[serde(default = "default_n")]
    pub n: usize,
    /// Number of local terms (CG1D), circuit depth, or CPTP factors.
    pub num_terms: usize,
    /// Poisson mean of the support size.
    pub mean_support: f64,
    pub time: f64,
    /// Target infidelity of each random Pauli factor (RandomCptp only).
    #[serde(default)]
    pub pauli_infidelity: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_kraus")]
    pub max_kraus: usize,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

impl NoiseModelConfig {
    pub fn new(kind: NoiseKind, n: usize, num_terms: usize, mean_support: f64, time: f64) -> Self {
        Self {
            kind,
            n,
            num_terms,
            mean_support,
            time,
            pauli_infidelity: 0.0,
            seed: 0,
            max_kraus: default_max_kraus(),
            max_attempts: default_attempts(),
        }
    }

    pub fn cg1d(n: usize, num_terms: usize, mean_support: f64, time: f64) -> Self {
        Self::new(NoiseKind::Cg1d, n, num_terms, mean_support, time)
    }

    pub fn random_circuit(n: usize, depth: usize, mean_support: f64, time: f64) -> Self {
        Self::new(NoiseKind::RandomCircuit, n, depth, mean_support, time)
    }

    pub fn random_cptp(n: usize, factors: usize, mean_support: f64, time: f64, pauli_infidelity: f64) -> Self {
        Self { pauli_infidelity, ..Self::new(NoiseKind::RandomCptp, n, factors, mean_support, time) }
    }

    pub fn with_time(&self, time: f64) -> Self {
        Self { time, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n > MAX_CHANNEL_QUBITS {
            return Err(invalid!("noise model on {} qubits (1..={MAX_CHANNEL_QUBITS})", self.n));
        }
        if self.num_terms == 0 {
            return Err(invalid!("num_terms must be at least 1"));
        }
        if !(self.mean_support > 0.0 && self.mean_support.is_finite()) {
            return Err(invalid!("mean_support must be positive, got {}", self.mean_support));
        }
        // t = 0 is accepted so that the noiseless limit can be sampled.
        if !(self.time >= 0.0 && self.time.is_finite()) {
            return Err(invalid!("time must be non-negative, got {}", self.time));
        }
        if !(0.0..1.0).contains(&self.pauli_infidelity) {
            return Err(invalid!("pauli_infidelity must be in [0, 1), got {}", self.pauli_infidelity));
        }
        if self.max_attempts == 0 || self.max_kraus == 0 {
            return Err(invalid!("max_attempts and max_kraus must be positive"));
        }
        Ok(())
    }
}

/// Support size ~ Poisson(λ) redrawn until it lies in [1, n]; subset uniform, sorted.
pub fn sample_support(lambda: f64, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let pois = Poisson::new(lambda).map_err(|e| invalid!("Poisson mean {lambda}: {e}"))?;
    let k = loop {
        let k: f64 = pois.sample(rng);
        let k = k as usize;
        if (1..=n).contains(&k) {
            break k;
        }
    };
    let mut s = rand::seq::index::sample(rng, n, k).into_vec();
    s.sort_unstable();
    Ok(s)
}

/// GUE-distributed Hermitian on `m` qubits normalized to unit Frobenius norm.
pub fn random_hermitian<T: Real>(m: usize, rng: &mut ChaCha8Rng) -> CMatrix<T> {
    let d = 1usize << m;
    let mut h = CMatrix::<f64>::zeros(d, d);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..d {
        let a: f64 = StandardNormal.sample(rng);
        h.set(i, i, Complex::new(a, 0.0));
        for j in i + 1..d {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let z = Complex::new(re, im) * inv_sqrt2;
            h.set(i, j, z);
            h.set(j, i, z.conj());
        }
    }
    let norm = h.frobenius_sqr().sqrt();
    h.scale_real(1.0 / norm).cast()
}

/// Random simplex point scaled to `eps` on the non-identity Paulis of `m` qubits.
fn random_pauli_probs(m: usize, eps: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let len = 1usize << (2 * m);
    let draws: Vec<f64> = (1..len).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    std::iter::once(1.0 - eps).chain(draws.iter().map(|x| eps * x / total)).collect()
}

/// exp(s·i·t·H) for a local Hermitian.
fn local_unitary<T: Real>(h: &CMatrix<T>, t: f64, sign: f64) -> Result<CMatrix<T>> {
    expm(&h.scale(Complex::new(T::zero(), T::of(sign * t))))
}

pub fn sample_cg1d<T: Real>(cfg: &NoiseModelConfig, rng: &mut ChaCha8Rng) -> Result<Channel<T>> {
    cfg.validate()?;
    let n = cfg.n;
    let d = 1usize << n;
    let mut h = CMatrix::<T>::zeros(d, d);
    for _ in 0..cfg.num_terms {
        let support = sample_support(cfg.mean_support, n, rng)?;
        let local = random_hermitian::<T>(support.len(), rng);
        h.add_assign(&apply_local_left(&local, &support, n, &CMatrix::identity(d))?);
    }
    let u = local_unitary(&h, cfg.time, -1.0)?;
    Channel::unitary(u)
}

pub fn sample_random_circuit<T: Real>(cfg: &NoiseModelConfig, rng: &mut ChaCha8Rng) -> Result<Channel<T>> {
    cfg.validate()?;
    let n = cfg.n;
    let mut u = CMatrix::<T>::identity(1 << n);
    for _ in 0..cfg.num_terms {
        let support = sample_support(cfg.mean_support, n, rng)?;
        let gate = local_unitary(&random_hermitian::<T>(support.len(), rng), cfg.time, 1.0)?;
        u = apply_local_left(&gate, &support, n, &u)?;
    }
    Channel::unitary(u)
}

/// Why an attempt of [`sample_random_cptp`] was rejected.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FilterStats {
    pub attempts: usize,
    pub over_kraus_cap: usize,
    pub high_infidelity: usize,
    pub low_unitarity: usize,
}

pub fn sample_random_cptp<T: Real>(cfg: &NoiseModelConfig, rng: &mut ChaCha8Rng) -> Result<Channel<T>> {
    sample_random_cptp_with_stats(cfg, rng).map(|(ch, _)| ch)
}

pub fn sample_random_cptp_with_stats<T: Real>(
    cfg: &NoiseModelConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Channel<T>, FilterStats)> {
    cfg.validate()?;
    let n = cfg.n;
    let d = 1usize << n;
    let floor = T::of(d as f64 * 1e-15);
    let mut stats = FilterStats::default();
    for _ in 0..cfg.max_attempts {
        stats.attempts += 1;
        let mut kraus = vec![CMatrix::<T>::identity(d)];
        let mut over_cap = false;
        for _ in 0..cfg.num_terms {
            let support = sample_support(cfg.mean_support, n, rng)?;
            let m = support.len();
            let u_loc = local_unitary(&random_hermitian::<T>(m, rng), cfg.time, 1.0)?;
            let probs = random_pauli_probs(m, cfg.pauli_infidelity, rng);
            if over_cap {
                continue;
            }
            let mut local = Vec::new();
            for (i, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    let q = PauliOp::from_index(m, i)?;
                    local.push(q.left_apply(&u_loc)?.scale_real(T::of(p.sqrt())));
                }
            }
            let mut next = Vec::with_capacity(kraus.len() * local.len());
            'outer: for k in &kraus {
                for l in &local {
                    let prod = apply_local_left(l, &support, n, k)?;
                    if prod.frobenius_sqr() > floor {
                        if next.len() == cfg.max_kraus {
                            over_cap = true;
                            break 'outer;
                        }
                        next.push(prod);
                    }
                }
            }
            kraus = next;
        }
        if over_cap {
            stats.over_kraus_cap += 1;
            continue;
        }
        let ch = Channel::operator_sum(kraus)?;
        let eps = ch.process_infidelity()?.f64();
        if eps > 0.5 {
            stats.high_infidelity += 1;
            continue;
        }
        if ch.unitarity()?.f64() < 0.5 {
            stats.low_unitarity += 1;
            continue;
        }
        return Ok((ch, stats));
    }
    Err(Error::Sampling(format!(
        "no non-catastrophic channel in {} attempts ({} over the {}-operator Kraus cap, {} with infidelity > 1/2, {} with unitarity < 1/2)",
        stats.attempts, stats.over_kraus_cap, cfg.max_kraus, stats.high_infidelity, stats.low_unitarity
    )))
}

pub fn sample<T: Real>(cfg: &NoiseModelConfig, rng: &mut ChaCha8Rng) -> Result<Channel<T>> {
    match cfg.kind {
        NoiseKind::Cg1d => sample_cg1d(cfg, rng),
        NoiseKind::RandomCircuit => sample_random_circuit(cfg, rng),
        NoiseKind::RandomCptp => sample_random_cptp(cfg, rng),
    }
}

/// Uniform draw in [lo, hi) on a log scale.
pub fn log_uniform(lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn support_sizes_follow_truncated_poisson() {
        let mut rng = stream(12345, 0);
        let draws = 100_000;
        let mut hist = [0usize; 8];
        for _ in 0..draws {
            let s = sample_support(2.0, 7, &mut rng).unwrap();
            assert!(s.windows(2).all(|w| w[0] < w[1]));
            hist[s.len()] += 1;
        }
        assert_eq!(hist[0], 0);
        let pmf: Vec<f64> = (1..=7u32).map(|k| 2f64.powi(k as i32) / (1..=k).product::<u32>() as f64).collect();
        let z: f64 = pmf.iter().sum();
        let chi2: f64 = (1..=7)
            .map(|k| {
                let e = draws as f64 * pmf[k - 1] / z;
                (hist[k] as f64 - e).powi(2) / e
            })
            .sum();
        // 6 degrees of freedom, p = 0.001
        assert!(chi2 < 22.46, "chi2 = {chi2}");
    }

    #[test]
    fn single_qubit_support() {
        let mut rng = stream(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_support(3.0, 1, &mut rng).unwrap(), vec![0]);
        }
    }

    #[test]
    fn determinism() {
        let cfg = NoiseModelConfig::cg1d(5, 3, 2.0, 0.05);
        let a = sample_cg1d::<f64>(&cfg, &mut stream(9, 4)).unwrap();
        let b = sample_cg1d::<f64>(&cfg, &mut stream(9, 4)).unwrap();
        assert_eq!(a, b);
        let c = sample_cg1d::<f64>(&cfg, &mut stream(9, 5)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn gue_is_hermitian_and_normalized() {
        let h = random_hermitian::<f64>(3, &mut stream(2, 0));
        assert!(h.is_hermitian(0.0));
        assert!((h.frobenius_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_time_is_identity() {
        let cfg = NoiseModelConfig::cg1d(4, 3, 2.0, 0.0);
        let ch = sample_cg1d::<f64>(&cfg, &mut stream(3, 0)).unwrap();
        assert!(ch.process_infidelity().unwrap().abs() < 1e-15);
        let cfg = NoiseModelConfig::random_cptp(3, 2, 2.0, 0.0, 0.0);
        let ch = sample_random_cptp::<f64>(&cfg, &mut stream(3, 0)).unwrap();
        assert!(ch.process_infidelity().unwrap().abs() < 1e-14);
        if let Channel::OperatorSum(ks) = &ch {
            assert_eq!(ks.len(), 1);
        }
    }

    #[test]
    fn infidelity_quadratic_in_time() {
        let cfg = NoiseModelConfig::cg1d(7, 4, 2.0, 1e-3);
        let e1 = sample_cg1d::<f64>(&cfg, &mut stream(77, 0)).unwrap().process_infidelity().unwrap();
        let e2 = sample_cg1d::<f64>(&cfg.with_time(2e-3), &mut stream(77, 0)).unwrap().process_infidelity().unwrap();
        assert!(e1 > 0.0 && e2 > e1);
        assert!((e2 / e1 - 4.0).abs() < 0.05, "ratio {}", e2 / e1);
    }

    #[test]
    fn cg1d_is_unitary() {
        let cfg = NoiseModelConfig::cg1d(7, 4, 2.0, 0.08);
        let ch = sample_cg1d::<f64>(&cfg, &mut stream(5, 1)).unwrap();
        assert!((ch.unitarity().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn circuit_depth_one_matches_direct_exponential() {
        let n = 3;
        let cfg = NoiseModelConfig::random_circuit(n, 1, 2.0, 0.4);
        let ch = sample_random_circuit::<f64>(&cfg, &mut stream(6, 0)).unwrap();
        let mut rng = stream(6, 0);
        let support = sample_support(2.0, n, &mut rng).unwrap();
        let h = random_hermitian::<f64>(support.len(), &mut rng);
        let ih = apply_local_left(&h, &support, n, &CMatrix::identity(8)).unwrap().scale(Complex::new(0.0, 0.4));
        let u = expm(&ih).unwrap();
        if let Channel::Unitary(got) = ch {
            assert!(got.max_abs_diff(&u) < 1e-13);
        } else {
            panic!("expected a unitary");
        }
    }

    #[test]
    fn cptp_single_factor_one_qubit() {
        let cfg = NoiseModelConfig::random_cptp(1, 1, 2.0, 0.0, 0.03);
        let ch = sample_random_cptp::<f64>(&cfg, &mut stream(8, 0)).unwrap();
        assert!((ch.chi_diagonal().unwrap().probs()[0] - 0.97).abs() < 1e-12);
    }

    #[test]
    fn cptp_passes_filter_and_completeness() {
        let cfg = NoiseModelConfig::random_cptp(4, 2, 2.0, 0.3, 0.05);
        let (ch, stats) = sample_random_cptp_with_stats::<f64>(&cfg, &mut stream(10, 0)).unwrap();
        ch.validate().unwrap();
        assert!(stats.attempts >= 1);
        assert!(ch.process_infidelity().unwrap() <= 0.5);
        assert!(ch.unitarity().unwrap() >= 0.5);
    }

    #[test]
    fn cptp_filter_exhaustion_reports() {
        let mut cfg = NoiseModelConfig::random_cptp(2, 3, 2.0, 0.0, 0.9);
        cfg.max_attempts = 3;
        let err = sample_random_cptp::<f64>(&cfg, &mut stream(1, 0)).unwrap_err();
        assert!(matches!(err, Error::Sampling(_)));
        assert!(err.to_string().contains("3 attempts"));
    }

    #[test]
    fn config_validation() {
        assert!(NoiseModelConfig::cg1d(7, 0, 2.0, 0.1).validate().is_err());
        assert!(NoiseModelConfig::cg1d(7, 1, 0.0, 0.1).validate().is_err());
        assert!(NoiseModelConfig::cg1d(7, 1, 2.0, -0.1).validate().is_err());
        assert!(NoiseModelConfig::random_cptp(7, 1, 2.0, 0.1, 1.0).validate().is_err());
        assert!(NoiseModelConfig::cg1d(8, 1, 2.0, 0.1).validate().is_err());
    }
}
