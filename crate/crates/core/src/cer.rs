//! Partial Pauli error data handed to a decoder, and a shot-noise model of the decay experiment.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::channel::wht::eigenvalue;
use crate::channel::{Channel, PauliDist};
use crate::error::{dim_err, invalid, Error, Result};
use crate::pauli::PauliOp;
use crate::scalar::{kahan_sum, Real};

pub const DATASET_FORMAT: &str = "cerdec-cer-1";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionPolicy {
    /// Identity plus the K−1 largest non-identity rates.
    TopK { k: usize },
    /// Every Pauli of weight at most `w`.
    WeightAtMost { w: usize },
    Explicit,
}

impl SelectionPolicy {
    pub fn label(&self) -> String {
        match self {
            SelectionPolicy::TopK { k } => format!("top{k}"),
            SelectionPolicy::WeightAtMost { w } => format!("knr{w}"),
            SelectionPolicy::Explicit => "explicit".into(),
        }
    }
}

/// Known Pauli rates, always including the identity. Entries are kept sorted by index.
#[derive(Clone, Debug, PartialEq)]
pub struct CerDataset<T = f64> {
    n: usize,
    entries: Vec<(PauliOp, T)>,
    policy: SelectionPolicy,
    source_hash: Option<String>,
}

impl<T: Real> CerDataset<T> {
    pub fn new(n: usize, mut entries: Vec<(PauliOp, T)>, policy: SelectionPolicy) -> Result<Self> {
        entries.sort_by_key(|(p, _)| p.index());
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(invalid!("duplicate Pauli in CER dataset"));
        }
        if entries.iter().any(|(p, _)| p.n() != n) {
            return Err(dim_err!("CER entries must act on {n} qubits"));
        }
        if entries.first().is_none_or(|(p, _)| !p.is_identity()) {
            return Err(invalid!("CER dataset must contain the identity"));
        }
        for (p, r) in &entries {
            if !(*r >= T::zero() && *r <= T::one()) {
                return Err(invalid!("rate of {p} is {r}, outside [0, 1]"));
            }
        }
        let total = kahan_sum(entries.iter().map(|e| e.1));
        if total > T::one() + T::of(T::SUM_TOL) {
            return Err(invalid!("CER rates sum to {total} > 1"));
        }
        Ok(Self { n, entries, policy, source_hash: None })
    }

    /// The base case: only the identity rate (1 − ε) is known.
    pub fn identity_only(n: usize, identity_rate: T) -> Result<Self> {
        Self::new(n, vec![(PauliOp::identity(n), identity_rate)], SelectionPolicy::TopK { k: 1 })
    }

    pub fn with_source_hash(mut self, hash: impl Into<String>) -> Self {
        self.source_hash = Some(hash.into());
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &[(PauliOp, T)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn policy(&self) -> &SelectionPolicy {
        &self.policy
    }

    pub fn source_hash(&self) -> Option<&str> {
        self.source_hash.as_deref()
    }

    pub fn identity_rate(&self) -> T {
        self.entries[0].1
    }

    pub fn rate(&self, p: &PauliOp) -> Option<T> {
        self.entries.binary_search_by_key(&p.index(), |(q, _)| q.index()).ok().map(|i| self.entries[i].1)
    }

    /// Zero-padded dense vector (unnormalized).
    pub fn padded(&self) -> Vec<T> {
        let mut v = vec![T::zero(); 1 << (2 * self.n)];
        for (p, r) in &self.entries {
            v[p.index()] = *r;
        }
        v
    }

    pub fn to_json(&self) -> String {
        let file = DatasetFile {
            version: DATASET_FORMAT.into(),
            n: self.n,
            policy: self.policy.clone(),
            source_hash: self.source_hash.clone(),
            entries: self.entries.iter().map(|(p, r)| (*p, r.f64())).collect(),
        };
        serde_json::to_string_pretty(&file).expect("dataset serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: DatasetFile = serde_json::from_str(s)?;
        if f.version != DATASET_FORMAT {
            return Err(invalid!("dataset format {:?}, expected {DATASET_FORMAT}", f.version));
        }
        let ds = Self::new(f.n, f.entries.into_iter().map(|(p, r)| (p, T::of(r))).collect(), f.policy)?;
        Ok(match f.source_hash {
            Some(h) => ds.with_source_hash(h),
            None => ds,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    version: String,
    n: usize,
    policy: SelectionPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source_hash: Option<String>,
    entries: Vec<(PauliOp, f64)>,
}

/// Ground-truth Pauli rates of a channel (its twirl).
pub fn exact_rates<T: Real>(ch: &Channel<T>) -> Result<PauliDist<T>> {
    ch.chi_diagonal()
}

/// Identity plus the K−1 largest non-identity rates; ties go to the lower index.
pub fn select_top_k<T: Real>(dist: &PauliDist<T>, k: usize) -> Result<CerDataset<T>> {
    let len = dist.probs().len();
    if k == 0 || k > len {
        return Err(invalid!("K = {k} outside 1..={len}"));
    }
    let n = dist.n();
    let mut order: Vec<usize> = (1..len).collect();
    let probs = dist.probs();
    order.sort_by(|&a, &b| probs[b].partial_cmp(&probs[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let entries = std::iter::once(0)
        .chain(order.into_iter().take(k - 1))
        .map(|i| Ok((PauliOp::from_index(n, i)?, probs[i])))
        .collect::<Result<Vec<_>>>()?;
    CerDataset::new(n, entries, SelectionPolicy::TopK { k })
}

/// All rates of Paulis with weight at most `w`.
pub fn select_knr<T: Real>(dist: &PauliDist<T>, w: usize) -> Result<CerDataset<T>> {
    let n = dist.n();
    if w > n {
        return Err(invalid!("weight bound {w} exceeds {n} qubits"));
    }
    let entries = PauliOp::all(n).filter(|p| p.weight() <= w).map(|p| (p, dist.get(&p))).collect();
    CerDataset::new(n, entries, SelectionPolicy::WeightAtMost { w })
}

/// Number of Paulis on n qubits with weight ≤ w.
pub fn knr_count(n: usize, w: usize) -> usize {
    let mut binom = 1usize;
    let mut pow3 = 1usize;
    let mut total = 0;
    for j in 0..=w.min(n) {
        total += binom * pow3;
        binom = binom * (n - j) / (j + 1);
        pow3 *= 3;
    }
    total
}

/// Settings of an emulated decay experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayExperiment {
    pub depths: Vec<usize>,
    /// `None` uses the exact survival probabilities (infinite shots).
    pub shots: Option<u64>,
    /// State-preparation-and-measurement constant A₀.
    pub spam: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub pauli: PauliOp,
    pub eigenvalue: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points_used: usize,
    /// The exact eigenvalue the data were drawn from.
    pub exact: f64,
}

/// Emulate the decay `A₀ Λ^m` of Pauli `p` under `ch` and fit it log-linearly.
pub fn emulate_cer_decay<T: Real>(
    ch: &Channel<T>,
    p: &PauliOp,
    exp: &DecayExperiment,
    rng: &mut ChaCha8Rng,
) -> Result<DecayFit> {
    if p.n() != ch.n() {
        return Err(dim_err!("{}-qubit Pauli for a {}-qubit channel", p.n(), ch.n()));
    }
    let mut depths = exp.depths.clone();
    depths.sort_unstable();
    depths.dedup();
    if depths.len() < 2 {
        return Err(invalid!("need at least two distinct depths"));
    }
    if let Some(s) = exp.shots {
        if s < 100 {
            return Err(invalid!("{s} shots; at least 100 required"));
        }
    }
    if !(exp.spam > 0.0 && exp.spam <= 1.0) {
        return Err(invalid!("SPAM constant {} outside (0, 1]", exp.spam));
    }
    let lambda = eigenvalue(&ch.chi_diagonal()?, *p).f64();
    let mut points = Vec::new();
    for &m in &depths {
        let prob = (exp.spam * lambda.powi(m as i32)).clamp(0.0, 1.0);
        match exp.shots {
            None => {
                if prob > 0.0 {
                    points.push((m as f64, prob.ln(), 1.0));
                }
            }
            Some(shots) => {
                let k = Binomial::new(shots, prob).map_err(|e| Error::Fit(e.to_string()))?.sample(rng);
                if k == 0 {
                    continue;
                }
                let phat = k as f64 / shots as f64;
                // delta method: var(ln p̂) ≈ (1 − p̂)/(shots p̂), floored for p̂ = 1
                let var = ((1.0 - phat) / (shots as f64 * phat)).max(1.0 / (shots as f64 * shots as f64));
                points.push((m as f64, phat.ln(), 1.0 / var));
            }
        }
    }
    if points.len() < 2 {
        return Err(Error::Fit(format!("only {} usable depths", points.len())));
    }
    let sw: f64 = points.iter().map(|p| p.2).sum();
    let mx = points.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = points.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = points.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let eig = slope.exp();
    let stderr = match exp.shots {
        None => 0.0,
        Some(_) => eig * (1.0 / sxx).sqrt(),
    };
    Ok(DecayFit { pauli: *p, eigenvalue: eig, stderr, intercept: icpt.exp(), points_used: points.len(), exact: lambda })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn p(s: &str) -> PauliOp {
        s.parse().unwrap()
    }

    fn random_dist(n: usize, seed: u64) -> PauliDist<f64> {
        use rand::Rng;
        let mut rng = stream(seed, 0);
        let raw: Vec<f64> = (0..1 << (2 * n)).map(|i| if i == 0 { 50.0 } else { rng.random::<f64>() }).collect();
        let s: f64 = raw.iter().sum();
        PauliDist::new(n, raw.iter().map(|x| x / s).collect()).unwrap()
    }

    #[test]
    fn knr_counts() {
        assert_eq!(knr_count(7, 0), 1);
        assert_eq!(knr_count(7, 1), 22);
        assert_eq!(knr_count(7, 2), 211);
        assert_eq!(knr_count(7, 3), 1156);
        assert_eq!(knr_count(7, 7), 16384);
        let d = random_dist(7, 1);
        for w in 0..=3 {
            assert_eq!(select_knr(&d, w).unwrap().len(), knr_count(7, w));
        }
        let full = select_knr(&d, 7).unwrap();
        assert_eq!(full.padded(), d.probs());
    }

    #[test]
    fn top_k_edges() {
        let d = random_dist(3, 2);
        let one = select_top_k(&d, 1).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.identity_rate(), d.probs()[0]);
        let all = select_top_k(&d, 64).unwrap();
        assert_eq!(all.padded(), d.probs());
        assert!(select_top_k(&d, 0).is_err());
        assert!(select_top_k(&d, 65).is_err());
        let d7 = random_dist(7, 3);
        assert_eq!(select_top_k(&d7, 163).unwrap().len(), 163);
    }

    #[test]
    fn top_k_excluded_rates_are_smaller() {
        let d = random_dist(4, 4);
        let ds = select_top_k(&d, 20).unwrap();
        let min_in = ds.entries().iter().skip(1).map(|e| e.1).fold(f64::INFINITY, f64::min);
        for q in PauliOp::all(4) {
            if ds.rate(&q).is_none() {
                assert!(d.get(&q) <= min_in);
            }
        }
    }

    #[test]
    fn top_k_ties_by_index_and_monotone() {
        let d = PauliDist::<f64>::depolarizing(2, 0.1).unwrap();
        let ds = select_top_k(&d, 4).unwrap();
        // the six weight-1 entries tie; the lowest three indices win
        let idx: Vec<usize> = ds.entries().iter().map(|e| e.0.index()).collect();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        let small = select_top_k(&d, 5).unwrap();
        let large = select_top_k(&d, 9).unwrap();
        assert!(small.entries().iter().all(|e| large.rate(&e.0).is_some()));
    }

    #[test]
    fn dataset_validation() {
        let id = PauliOp::identity(1);
        assert!(CerDataset::new(1, vec![(p("X"), 0.1)], SelectionPolicy::Explicit).is_err());
        assert!(CerDataset::new(1, vec![(id, 0.9), (id, 0.1)], SelectionPolicy::Explicit).is_err());
        assert!(CerDataset::new(1, vec![(id, 0.9), (p("X"), 0.2)], SelectionPolicy::Explicit).is_err());
        assert!(CerDataset::new(1, vec![(id, 1.2)], SelectionPolicy::Explicit).is_err());
        let ok = CerDataset::new(1, vec![(p("Z"), 0.05), (id, 0.9)], SelectionPolicy::Explicit).unwrap();
        assert_eq!(ok.identity_rate(), 0.9);
        let back = CerDataset::<f64>::from_json(&ok.clone().with_source_hash("abc").to_json()).unwrap();
        assert_eq!(back.source_hash(), Some("abc"));
        assert_eq!(back.entries(), ok.entries());
    }

    #[test]
    fn exact_rates_is_twirl() {
        let d = random_dist(2, 5);
        assert_eq!(exact_rates(&Channel::Pauli(d.clone())).unwrap(), d);
        let id = exact_rates(&Channel::<f64>::identity(2)).unwrap();
        assert_eq!(id, PauliDist::point_mass(PauliOp::identity(2)));
    }

    fn depolarizing_channel() -> Channel<f64> {
        Channel::Pauli(PauliDist::new(1, vec![0.97, 0.01, 0.01, 0.01]).unwrap())
    }

    #[test]
    fn decay_noiseless_and_spam() {
        let exp = DecayExperiment { depths: vec![2, 4, 8, 16], shots: None, spam: 1.0 };
        let fit = emulate_cer_decay(&Channel::<f64>::identity(1), &p("Z"), &exp, &mut stream(1, 0)).unwrap();
        assert_eq!(fit.eigenvalue, 1.0);
        let ch = depolarizing_channel();
        let a = emulate_cer_decay(&ch, &p("Z"), &exp, &mut stream(1, 0)).unwrap();
        let b = emulate_cer_decay(&ch, &p("Z"), &DecayExperiment { spam: 0.98, ..exp }, &mut stream(1, 0)).unwrap();
        assert!((a.eigenvalue - 0.96).abs() < 1e-12);
        assert!((a.eigenvalue - b.eigenvalue).abs() < 1e-12);
        assert!((b.intercept - 0.98).abs() < 1e-12);
    }

    #[test]
    fn decay_with_shots() {
        let exp = DecayExperiment { depths: vec![2, 4, 8, 16], shots: Some(10_000), spam: 1.0 };
        let fit = emulate_cer_decay(&Channel::<f64>::identity(1), &p("X"), &exp, &mut stream(2, 0)).unwrap();
        assert!((fit.eigenvalue - 1.0).abs() <= 2.0 * fit.stderr + 1e-15);
        let fit = emulate_cer_decay(&depolarizing_channel(), &p("Z"), &exp, &mut stream(2, 1)).unwrap();
        assert!((fit.eigenvalue - 0.96).abs() <= 2.0 * fit.stderr, "{fit:?}");
    }

    #[test]
    fn decay_error_shrinks_with_shots() {
        let ch = depolarizing_channel();
        let mean_err = |shots: u64| {
            let exp = DecayExperiment { depths: vec![2, 4, 8, 16], shots: Some(shots), spam: 0.99 };
            (0..40)
                .map(|i| (emulate_cer_decay(&ch, &p("Y"), &exp, &mut stream(shots, i)).unwrap().eigenvalue - 0.96).abs())
                .sum::<f64>()
                / 40.0
        };
        let errs: Vec<f64> = [100, 1_000, 10_000, 100_000].iter().map(|&s| mean_err(s)).collect();
        assert!(errs[3] < errs[2] && errs[2] < errs[1] && errs[1] < errs[0], "{errs:?}");
    }

    #[test]
    fn decay_contract_errors() {
        let ch = depolarizing_channel();
        let one = DecayExperiment { depths: vec![4], shots: Some(1000), spam: 1.0 };
        assert!(emulate_cer_decay(&ch, &p("Z"), &one, &mut stream(0, 0)).is_err());
        let few = DecayExperiment { depths: vec![2, 4], shots: Some(10), spam: 1.0 };
        assert!(emulate_cer_decay(&ch, &p("Z"), &few, &mut stream(0, 0)).is_err());
        // completely depolarized: every count is zero
        let dead = Channel::Pauli(PauliDist::<f64>::uniform(1));
        let exp = DecayExperiment { depths: vec![2, 4, 8], shots: Some(1000), spam: 1.0 };
        assert!(matches!(emulate_cer_decay(&dead, &p("Z"), &exp, &mut stream(0, 0)), Err(Error::Fit(_))));
    }
}
