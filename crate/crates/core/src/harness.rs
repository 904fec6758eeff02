//! Ensembles, gain sweeps, binning and reports.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cer::{select_knr, select_top_k, CerDataset};
use crate::channel::json::sha256_hex;
use crate::channel::{Channel, PauliDist};
use crate::code::StabilizerCode;
use crate::decoder::{BlockDecoder, DecoderInput};
use crate::error::{invalid, Error, Result};
use crate::logical::{physical_infidelity, simulate_paired, BlockTruth, ConvergenceRow, SamplerConfig, SamplingMode, Simulator};
use crate::noise::{log_uniform, sample, NoiseModelConfig};
use crate::rng::{derive_seed, stream};
use crate::uss::{tvd, uss_complete};

pub const ENSEMBLE_FORMAT: &str = "cerdec-ensemble-1";
pub const RUN_FORMAT: &str = "cerdec-run-1";
pub const RECORDS_SCHEMA: &str = "cerdec-gain-1";
pub const BINS_SCHEMA: &str = "cerdec-bins-1";
pub const TVD_SCHEMA: &str = "cerdec-tvd-1";
pub const CONVERGENCE_SCHEMA: &str = "cerdec-convergence-1";

pub const BINS_HEADER: &str = "bin_lo,bin_hi,count,mean_eps,mean_logical,K,median_gain,q1,q3";

/// Version string recorded in every manifest.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn default_levels() -> usize {
    2
}
fn default_k_list() -> Vec<usize> {
    vec![1, 22, 163, 1156, 16384]
}
fn default_w_list() -> Vec<usize> {
    vec![0, 1, 2, 3, 7]
}
fn default_tvd_k() -> usize {
    163
}
fn default_per_decade() -> usize {
    4
}
fn default_sampler() -> SamplerConfig {
    SamplerConfig { mode: SamplingMode::Importance, samples: 2000, ..SamplerConfig::direct(2000, 0) }
}

/// A family of random channels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub noise: NoiseModelConfig,
    pub count: usize,
    /// Evolution times are drawn log-uniformly from this range; `noise.time` is used when absent.
    #[serde(default)]
    pub time_range: Option<[f64; 2]>,
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        if self.count == 0 {
            return Err(Error::Config("ensemble count must be at least 1".into()));
        }
        if let Some([lo, hi]) = self.time_range {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                return Err(Error::Config(format!("time range [{lo}, {hi}] is not a positive interval")));
            }
        }
        Ok(())
    }
}

/// The single JSON document driving every CLI stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnessConfig {
    /// Master seed; overrides the sampler seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ensemble: Option<EnsembleConfig>,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_sampler")]
    pub sampler: SamplerConfig,
    #[serde(default = "default_k_list")]
    pub k_list: Vec<usize>,
    #[serde(default = "default_w_list")]
    pub w_list: Vec<usize>,
    /// Explicit bin edges in ε; log edges at `bins_per_decade` are derived from the data otherwise.
    #[serde(default)]
    pub bin_edges: Option<Vec<f64>>,
    #[serde(default = "default_per_decade")]
    pub bins_per_decade: usize,
    #[serde(default = "default_tvd_k")]
    pub tvd_k: usize,
    #[serde(default)]
    pub convergence_counts: Vec<usize>,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl HarnessConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(e) = &self.ensemble {
            e.validate()?;
        }
        self.sampler.validate()?;
        if self.levels == 0 || self.levels > crate::logical::MAX_LEVELS {
            return Err(Error::Config(format!("levels = {} unsupported", self.levels)));
        }
        if self.k_list.is_empty() || self.k_list.contains(&0) {
            return Err(Error::Config("k_list must be nonempty and positive".into()));
        }
        if self.bins_per_decade == 0 {
            return Err(Error::Config("bins_per_decade must be positive".into()));
        }
        if let Some(edges) = &self.bin_edges {
            check_edges(edges)?;
        }
        Ok(())
    }

    /// Sampler with the master seed applied.
    pub fn seeded_sampler(&self) -> SamplerConfig {
        SamplerConfig { seed: self.seed, ..self.sampler.clone() }
    }

    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// Provenance written next to every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, cfg: &HarnessConfig) -> Self {
        Self {
            format: RUN_FORMAT.into(),
            command: command.into(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            version: VERSION.into(),
        }
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = dir.join(format!("manifest-{}.json", self.command));
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleEntry {
    pub id: String,
    pub hash: String,
    pub time: f64,
    pub infidelity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: EnsembleConfig,
    pub count: usize,
    pub channels: Vec<EnsembleEntry>,
}

/// A persisted ensemble: a manifest plus one channel file per member.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub dir: PathBuf,
    pub manifest: EnsembleManifest,
}

pub fn channel_id(i: usize) -> String {
    format!("ch{i:04}")
}

/// Member i uses stream (seed, i) for its time and its channel, independent of worker count.
pub fn generate_ensemble(cfg: &EnsembleConfig, seed: u64) -> Result<(EnsembleManifest, Vec<Channel<f64>>)> {
    cfg.validate()?;
    let members: Vec<(f64, Channel<f64>)> = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, i as u64);
            let t = match cfg.time_range {
                Some([lo, hi]) => log_uniform(lo, hi, &mut rng),
                None => cfg.noise.time,
            };
            Ok((t, sample::<f64>(&cfg.noise.with_time(t), &mut rng)?))
        })
        .collect::<Result<_>>()?;
    let mut channels = Vec::with_capacity(cfg.count);
    let mut entries = Vec::with_capacity(cfg.count);
    for (i, (time, ch)) in members.into_iter().enumerate() {
        let infidelity = physical_infidelity(&ch.chi_diagonal()?);
        entries.push(EnsembleEntry { id: channel_id(i), hash: ch.content_hash(), time, infidelity });
        channels.push(ch);
    }
    let manifest = EnsembleManifest {
        format: ENSEMBLE_FORMAT.into(),
        version: VERSION.into(),
        seed,
        config_hash: sha256_hex(serde_json::to_string(cfg)?.as_bytes()),
        config: cfg.clone(),
        count: cfg.count,
        channels: entries,
    };
    Ok((manifest, channels))
}

impl Ensemble {
    pub fn write(dir: &Path, manifest: EnsembleManifest, channels: &[Channel<f64>]) -> Result<Self> {
        if channels.len() != manifest.channels.len() {
            return Err(invalid!("{} channels for {} manifest entries", channels.len(), manifest.channels.len()));
        }
        fs::create_dir_all(dir.join("channels"))?;
        for (e, ch) in manifest.channels.iter().zip(channels) {
            fs::write(dir.join("channels").join(format!("{}.json", e.id)), ch.to_json())?;
        }
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join("manifest.json"))?;
        let manifest: EnsembleManifest = serde_json::from_str(&text)?;
        if manifest.format != ENSEMBLE_FORMAT {
            return Err(invalid!("ensemble format {:?}, expected {ENSEMBLE_FORMAT}", manifest.format));
        }
        if manifest.count != manifest.channels.len() {
            return Err(invalid!("manifest lists {} of {} channels", manifest.channels.len(), manifest.count));
        }
        Ok(Self { dir: dir.to_path_buf(), manifest })
    }

    pub fn entries(&self) -> &[EnsembleEntry] {
        &self.manifest.channels
    }

    /// Loads a member and checks its hash against the manifest.
    pub fn channel(&self, entry: &EnsembleEntry) -> Result<Channel<f64>> {
        let ch = Channel::from_json(&fs::read_to_string(self.dir.join("channels").join(format!("{}.json", entry.id)))?)?;
        if ch.content_hash() != entry.hash {
            return Err(invalid!("channel {} does not match its manifest hash", entry.id));
        }
        Ok(ch)
    }
}

/// Which partial-knowledge family a sweep walks through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Parameter is K.
    TopK,
    /// Parameter is the weight bound w.
    Knr,
}

impl Selection {
    pub fn dataset(self, oracle: &PauliDist<f64>, param: usize) -> Result<CerDataset<f64>> {
        match self {
            Selection::TopK => select_top_k(oracle, param),
            Selection::Knr => select_knr(oracle, param),
        }
    }
}

/// One (channel, parameter) row of a sweep. `gain` = rate_d1 / rate_dk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainRecord {
    pub channel_id: String,
    pub channel_hash: String,
    pub eps_physical: f64,
    pub selection: Selection,
    pub param: usize,
    /// Number of known rates.
    pub k: usize,
    pub rate_d1: f64,
    pub stderr_d1: f64,
    pub rate_dk: f64,
    pub stderr_dk: f64,
    pub gain: f64,
    pub gain_stderr: f64,
    pub alpha: f64,
    pub samples: usize,
}

/// Gains of one channel for every parameter, with 𝒟₁ and 𝒟_K on the same streams.
pub fn channel_gains(
    id: &str,
    ch: &Channel<f64>,
    code: &StabilizerCode,
    selection: Selection,
    params: &[usize],
    levels: usize,
    sampler: &SamplerConfig,
) -> Result<Vec<GainRecord>> {
    let oracle = ch.chi_diagonal()?;
    let truth = BlockTruth::from_channel(ch, code)?;
    let hash = ch.content_hash();
    let eps = physical_infidelity(&oracle);
    // 𝒟₁ goes through the same top-K path as every other row so K = 1 is bit-identical
    let base_input = DecoderInput::Dist(uss_complete(&select_top_k(&oracle, 1)?)?.into_dist());
    let base_dec = BlockDecoder::new(&base_input, code)?;
    let base = Simulator::new(code, &truth, &base_dec, &base_input, levels, sampler)?;
    params
        .iter()
        .map(|&param| {
            let ds = selection.dataset(&oracle, param)?;
            let input = DecoderInput::Dist(uss_complete(&ds)?.into_dist());
            let dec = BlockDecoder::new(&input, code)?;
            let sim = Simulator::new(code, &truth, &dec, &input, levels, sampler)?;
            let pair = simulate_paired(&base, &sim, sampler);
            let (gain, gain_stderr) = pair.ratio();
            Ok(GainRecord {
                channel_id: id.to_string(),
                channel_hash: hash.clone(),
                eps_physical: eps,
                selection,
                param,
                k: ds.len(),
                rate_d1: pair.a.mean,
                stderr_d1: pair.a.stderr,
                rate_dk: pair.b.mean,
                stderr_dk: pair.b.stderr,
                gain,
                gain_stderr,
                alpha: pair.a.alpha,
                samples: sampler.samples,
            })
        })
        .collect()
}

fn comment_line(schema: &str) -> String {
    format!("# schema: {schema}\n")
}

/// Reads a versioned CSV whose first line is `# schema: <schema>`.
fn read_versioned<R: for<'de> Deserialize<'de>>(path: &Path, schema: &str) -> Result<Vec<R>> {
    let text = fs::read_to_string(path)?;
    let first = text.lines().next().unwrap_or("");
    if first.trim() != comment_line(schema).trim() {
        return Err(invalid!("{} does not start with the {schema} schema line", path.display()));
    }
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    rdr.deserialize().map(|r| r.map_err(Error::from)).collect()
}

fn csv_rows<R: Serialize>(rows: &[R], header: bool) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn read_records(path: &Path) -> Result<Vec<GainRecord>> {
    read_versioned(path, RECORDS_SCHEMA)
}

pub fn write_records(path: &Path, records: &[GainRecord]) -> Result<()> {
    let mut out = comment_line(RECORDS_SCHEMA).into_bytes();
    let mut body = csv_rows(records, true)?;
    if records.is_empty() {
        body = format!("{}\n", record_header()).into_bytes();
    }
    out.extend(body);
    fs::write(path, out)?;
    Ok(())
}

fn record_header() -> &'static str {
    "channel_id,channel_hash,eps_physical,selection,param,k,rate_d1,stderr_d1,rate_dk,stderr_dk,gain,gain_stderr,alpha,samples"
}

/// Runs a sweep over the ensemble, appending each finished channel to `out`.
///
/// Channels already present in `out` are skipped, so an interrupted sweep resumes where it
/// stopped and a finished one is left byte-for-byte unchanged.
pub fn run_sweep(
    ensemble: &Ensemble,
    code: &StabilizerCode,
    selection: Selection,
    params: &[usize],
    levels: usize,
    sampler: &SamplerConfig,
    out: &Path,
) -> Result<Vec<GainRecord>> {
    if params.is_empty() {
        return Err(Error::Config("sweep needs at least one parameter".into()));
    }
    let mut records = if out.exists() { read_records(out)? } else { Vec::new() };
    if !out.exists() {
        if let Some(parent) = out.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(out, format!("{}{}\n", comment_line(RECORDS_SCHEMA), record_header()))?;
    }
    let done: BTreeSet<String> = records.iter().map(|r| r.channel_id.clone()).collect();
    let todo: Vec<(usize, &EnsembleEntry)> =
        ensemble.entries().iter().enumerate().filter(|(_, e)| !done.contains(&e.id)).collect();
    let chunk = rayon::current_num_threads().max(1);
    for batch in todo.chunks(chunk) {
        let results: Vec<Vec<GainRecord>> = batch
            .par_iter()
            .map(|(i, e)| {
                let ch = ensemble.channel(e)?;
                let s = SamplerConfig { seed: derive_seed(sampler.seed, *i as u64), ..sampler.clone() };
                channel_gains(&e.id, &ch, code, selection, params, levels, &s)
            })
            .collect::<Result<_>>()?;
        let mut f = fs::OpenOptions::new().append(true).open(out)?;
        for rows in results {
            f.write_all(&csv_rows(&rows, false)?)?;
            f.flush()?;
            records.extend(rows);
        }
    }
    Ok(records)
}

pub fn run_gain_sweep(
    ensemble: &Ensemble,
    code: &StabilizerCode,
    k_list: &[usize],
    levels: usize,
    sampler: &SamplerConfig,
    out: &Path,
) -> Result<Vec<GainRecord>> {
    run_sweep(ensemble, code, Selection::TopK, k_list, levels, sampler, out)
}

pub fn run_knr_sweep(
    ensemble: &Ensemble,
    code: &StabilizerCode,
    w_list: &[usize],
    levels: usize,
    sampler: &SamplerConfig,
    out: &Path,
) -> Result<Vec<GainRecord>> {
    run_sweep(ensemble, code, Selection::Knr, w_list, levels, sampler, out)
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    match sorted.len() {
        0 => f64::NAN,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
        }
    }
}

fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(invalid!("spearman needs two equal-length series of at least 2 points"));
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(f64::NAN);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) || edges.iter().any(|e| !e.is_finite()) {
        return Err(invalid!("bin edges must be finite and strictly increasing, got {edges:?}"));
    }
    Ok(())
}

/// Logarithmic edges on the 10^(j/per_decade) grid covering [lo, hi] with hi strictly inside.
pub fn log_edges(lo: f64, hi: f64, per_decade: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) || per_decade == 0 {
        return Err(invalid!("log edges need 0 < lo <= hi, got [{lo}, {hi}]"));
    }
    let pd = per_decade as f64;
    let edge = |j: i64| 10f64.powf(j as f64 / pd);
    let mut j = (lo.log10() * pd).floor() as i64;
    while edge(j) > lo {
        j -= 1;
    }
    let mut edges = vec![edge(j)];
    while *edges.last().expect("nonempty") <= hi {
        j += 1;
        edges.push(edge(j));
    }
    Ok(edges)
}

/// Channels whose physical infidelity lies in [lo, hi), for one parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub k: usize,
    pub members: Vec<String>,
    pub mean_eps: f64,
    pub mean_logical: f64,
    pub median_gain: f64,
    pub q1: f64,
    pub q3: f64,
}

fn sorted_mean(mut xs: Vec<f64>) -> f64 {
    // sorting first makes the sum independent of record order
    xs.sort_by(f64::total_cmp);
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Groups records by K and by ε bin. Empty bins are dropped; non-finite gains are left out of the quantiles.
pub fn bin_and_aggregate(records: &[GainRecord], edges: &[f64]) -> Result<Vec<Bin>> {
    if records.is_empty() {
        return Err(invalid!("no records to aggregate"));
    }
    check_edges(edges)?;
    let ks: BTreeSet<usize> = records.iter().map(|r| r.k).collect();
    let mut bins = Vec::new();
    for &k in &ks {
        for w in edges.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let mut members: Vec<&GainRecord> =
                records.iter().filter(|r| r.k == k && r.eps_physical >= lo && r.eps_physical < hi).collect();
            if members.is_empty() {
                continue;
            }
            members.sort_by(|a, b| a.channel_id.cmp(&b.channel_id));
            let mut gains: Vec<f64> = members.iter().map(|r| r.gain).filter(|g| g.is_finite()).collect();
            gains.sort_by(f64::total_cmp);
            bins.push(Bin {
                lo,
                hi,
                k,
                members: members.iter().map(|r| r.channel_id.clone()).collect(),
                mean_eps: sorted_mean(members.iter().map(|r| r.eps_physical).collect()),
                mean_logical: sorted_mean(members.iter().map(|r| r.rate_dk).collect()),
                median_gain: quantile(&gains, 0.5),
                q1: quantile(&gains, 0.25),
                q3: quantile(&gains, 0.75),
            });
        }
    }
    Ok(bins)
}

/// Edges from the config, or log edges spanning the records.
pub fn edges_for(records: &[GainRecord], explicit: Option<&[f64]>, per_decade: usize) -> Result<Vec<f64>> {
    if let Some(e) = explicit {
        check_edges(e)?;
        return Ok(e.to_vec());
    }
    let pos: Vec<f64> = records.iter().map(|r| r.eps_physical).filter(|&e| e > 0.0).collect();
    let lo = pos.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = pos.iter().copied().fold(0.0, f64::max);
    if pos.is_empty() {
        return Err(invalid!("no channel has positive infidelity"));
    }
    log_edges(lo, hi, per_decade)
}

#[derive(Serialize)]
struct BinRow {
    bin_lo: f64,
    bin_hi: f64,
    count: usize,
    mean_eps: f64,
    mean_logical: f64,
    #[serde(rename = "K")]
    k: usize,
    median_gain: f64,
    q1: f64,
    q3: f64,
}

pub fn bins_csv(bins: &[Bin]) -> Result<String> {
    let rows: Vec<BinRow> = bins
        .iter()
        .map(|b| BinRow {
            bin_lo: b.lo,
            bin_hi: b.hi,
            count: b.members.len(),
            mean_eps: b.mean_eps,
            mean_logical: b.mean_logical,
            k: b.k,
            median_gain: b.median_gain,
            q1: b.q1,
            q3: b.q3,
        })
        .collect();
    let body = if rows.is_empty() { format!("{BINS_HEADER}\n").into_bytes() } else { csv_rows(&rows, true)? };
    Ok(comment_line(BINS_SCHEMA) + &String::from_utf8(body).expect("csv is utf-8"))
}

/// Per-channel distances between the true rates and what the decoder is given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvdChannel {
    pub channel_id: String,
    pub eps_physical: f64,
    /// Against the known rates alone, zero-padded and not renormalized.
    pub tvd_truncated: f64,
    /// Against the completed distribution.
    pub tvd_completed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TvdRow {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
    pub mean_eps: f64,
    pub mean_tvd_truncated: f64,
    pub mean_tvd_completed: f64,
}

pub fn channel_tvd(id: &str, ch: &Channel<f64>, k: usize) -> Result<TvdChannel> {
    let oracle = ch.chi_diagonal()?;
    let ds = select_top_k(&oracle, k)?;
    let completed = uss_complete(&ds)?;
    Ok(TvdChannel {
        channel_id: id.to_string(),
        eps_physical: physical_infidelity(&oracle),
        tvd_truncated: tvd(oracle.probs(), &ds.padded())?,
        tvd_completed: tvd(oracle.probs(), completed.dist().probs())?,
    })
}

pub fn tvd_table(channels: &[TvdChannel], edges: &[f64]) -> Result<Vec<TvdRow>> {
    check_edges(edges)?;
    Ok(edges
        .windows(2)
        .filter_map(|w| {
            let m: Vec<&TvdChannel> = channels.iter().filter(|c| c.eps_physical >= w[0] && c.eps_physical < w[1]).collect();
            (!m.is_empty()).then(|| TvdRow {
                bin_lo: w[0],
                bin_hi: w[1],
                count: m.len(),
                mean_eps: sorted_mean(m.iter().map(|c| c.eps_physical).collect()),
                mean_tvd_truncated: sorted_mean(m.iter().map(|c| c.tvd_truncated).collect()),
                mean_tvd_completed: sorted_mean(m.iter().map(|c| c.tvd_completed).collect()),
            })
        })
        .collect())
}

/// Bin-averaged TVDs over the ensemble at fixed K.
pub fn tvd_report(ensemble: &Ensemble, k: usize, edges: Option<&[f64]>, per_decade: usize) -> Result<(Vec<TvdChannel>, Vec<TvdRow>)> {
    let channels: Vec<TvdChannel> = ensemble
        .entries()
        .par_iter()
        .map(|e| channel_tvd(&e.id, &ensemble.channel(e)?, k))
        .collect::<Result<_>>()?;
    let edges = match edges {
        Some(e) => e.to_vec(),
        None => {
            let pos: Vec<f64> = channels.iter().map(|c| c.eps_physical).filter(|&e| e > 0.0).collect();
            if pos.is_empty() {
                return Err(invalid!("no channel has positive infidelity"));
            }
            log_edges(pos.iter().copied().fold(f64::INFINITY, f64::min), pos.iter().copied().fold(0.0, f64::max), per_decade)?
        }
    };
    let rows = tvd_table(&channels, &edges)?;
    Ok((channels, rows))
}

pub const TVD_FOOTER: &str = "# note: mean_tvd_truncated compares against the known rates zero-padded without renormalization\n\
# note: no ordering between the two tvd columns is asserted; the reference table and its prose disagree on which is larger\n";

pub fn tvd_csv(rows: &[TvdRow], k: usize) -> Result<String> {
    let body = if rows.is_empty() {
        b"bin_lo,bin_hi,count,mean_eps,mean_tvd_truncated,mean_tvd_completed\n".to_vec()
    } else {
        csv_rows(rows, true)?
    };
    Ok(format!("{}# K: {k}\n{}{TVD_FOOTER}", comment_line(TVD_SCHEMA), String::from_utf8(body).expect("csv is utf-8")))
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> Result<String> {
    let body = if rows.is_empty() {
        b"samples,direct_mean,direct_stderr,importance_mean,importance_stderr,alpha\n".to_vec()
    } else {
        csv_rows(rows, true)?
    };
    Ok(comment_line(CONVERGENCE_SCHEMA) + &String::from_utf8(body).expect("csv is utf-8"))
}
