//! `cerdec` command-line driver.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use cerdec::cer::{emulate_cer_decay, select_knr, select_top_k, CerDataset, DecayExperiment};
use cerdec::code::StabilizerCode;
use cerdec::decoder::{build_decoder_input, BlockDecoder, DecoderInput, DecoderKind, DecoderSpec};
use cerdec::harness::{
    bin_and_aggregate, bins_csv, convergence_csv, edges_for, generate_ensemble, read_records, run_gain_sweep,
    run_knr_sweep, tvd_csv, tvd_report, Ensemble, HarnessConfig, RunManifest,
};
use cerdec::logical::{convergence_study, level1_exact, physical_infidelity, BlockTruth, SamplerConfig, SamplingMode, Simulator};
use cerdec::rng::{derive_seed, stream};
use cerdec::uss::{uss_complete, CompletedDist};
use cerdec::{Channel, Error, Result};

#[derive(Parser, Debug)]
#[command(name = "cerdec", version, about = "Decoding concatenated Steane codes from partial Pauli error rates")]
struct Cli {
    /// Harness configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample and persist the configured channel ensemble.
    Generate,
    /// Select the known Pauli rates of one channel.
    Cer(CerArgs),
    /// Complete a CER dataset into a full distribution.
    Uss {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Per-syndrome soft decisions, plus the exact level-1 rate when a channel is given.
    Decode(DecodeArgs),
    /// Monte Carlo estimate of the level-ℓ logical error rate.
    Simulate {
        #[command(flatten)]
        decoder: DecoderArgs,
        /// Also write direct vs importance estimates for the configured sample counts.
        #[arg(long)]
        convergence: bool,
    },
    /// Gain sweep over K on the persisted ensemble.
    Sweep {
        #[arg(long)]
        ensemble: Option<PathBuf>,
    },
    /// Gain sweep over the k-NR weight bound.
    KnrSweep {
        #[arg(long)]
        ensemble: Option<PathBuf>,
    },
    /// Bin sweep records, or tabulate TVDs with --tvd.
    Report {
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        tvd: bool,
        #[arg(long)]
        ensemble: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct CerArgs {
    #[arg(long)]
    channel: PathBuf,
    /// Top-K selection.
    #[arg(long, conflicts_with = "w")]
    k: Option<usize>,
    /// Every Pauli of weight at most w.
    #[arg(long)]
    w: Option<usize>,
    /// Also emulate the decay experiment for every selected Pauli with this many shots.
    #[arg(long)]
    decay_shots: Option<u64>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16")]
    depths: Vec<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DecoderChoice {
    MlFull,
    MlUss,
    Mw,
    D1,
}

impl From<DecoderChoice> for DecoderKind {
    fn from(d: DecoderChoice) -> Self {
        match d {
            DecoderChoice::MlFull => DecoderKind::MlFull,
            DecoderChoice::MlUss => DecoderKind::MlUss,
            DecoderChoice::Mw => DecoderKind::Mw,
            DecoderChoice::D1 => DecoderKind::D1,
        }
    }
}

#[derive(Args, Debug)]
struct DecodeArgs {
    /// Decode from a completed distribution instead of a channel.
    #[arg(long, conflicts_with_all = ["channel", "decoder", "k"])]
    completed: Option<PathBuf>,
    #[arg(long, required_unless_present = "completed")]
    channel: Option<PathBuf>,
    #[arg(long, value_enum)]
    decoder: Option<DecoderChoice>,
    #[arg(long)]
    k: Option<usize>,
    /// Syndrome values to decode (default: all).
    #[arg(long, value_delimiter = ',')]
    syndromes: Vec<usize>,
}

#[derive(Args, Debug)]
struct DecoderArgs {
    #[arg(long)]
    channel: PathBuf,
    #[arg(long, value_enum, default_value = "ml-full")]
    decoder: DecoderChoice,
    /// Known rates for ml-uss (top-K).
    #[arg(long)]
    k: Option<usize>,
    /// Concatenation level; defaults to the config.
    #[arg(long)]
    levels: Option<usize>,
}

fn read_channel(path: &Path) -> Result<Channel<f64>> {
    Channel::from_json(&fs::read_to_string(path)?)
}

fn write_out(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn load_config(cli: &Cli) -> Result<HarnessConfig> {
    let mut cfg = match &cli.config {
        Some(p) => HarnessConfig::from_json(&fs::read_to_string(p)?)?,
        None => HarnessConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn decoder_spec(choice: DecoderChoice, k: Option<usize>, oracle: &cerdec::PauliDist<f64>) -> Result<DecoderSpec<f64>> {
    let kind = DecoderKind::from(choice);
    if kind == DecoderKind::MlUss {
        let k = k.ok_or_else(|| Error::Config("--decoder ml-uss needs --k".into()))?;
        return Ok(DecoderSpec::ml_uss(select_top_k(oracle, k)?));
    }
    Ok(DecoderSpec::new(kind))
}

fn ensemble_dir(cli: &Cli, explicit: &Option<PathBuf>) -> PathBuf {
    explicit.clone().unwrap_or_else(|| cli.out_dir.join("ensemble"))
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let code = StabilizerCode::steane();
    let out = &cli.out_dir;
    let name = match &cli.command {
        Command::Generate => "generate",
        Command::Cer(_) => "cer",
        Command::Uss { .. } => "uss",
        Command::Decode(_) => "decode",
        Command::Simulate { .. } => "simulate",
        Command::Sweep { .. } => "sweep",
        Command::KnrSweep { .. } => "knr-sweep",
        Command::Report { .. } => "report",
    };
    match &cli.command {
        Command::Generate => {
            let ens = cfg.ensemble.as_ref().ok_or_else(|| Error::Config("generate needs an `ensemble` block".into()))?;
            let (manifest, channels) = generate_ensemble(ens, cfg.seed)?;
            let e = Ensemble::write(&out.join("ensemble"), manifest, &channels)?;
            println!("{}", e.dir.join("manifest.json").display());
        }
        Command::Cer(a) => {
            let ch = read_channel(&a.channel)?;
            let oracle = ch.chi_diagonal()?;
            let ds: CerDataset<f64> = match (a.k, a.w) {
                (Some(k), None) => select_top_k(&oracle, k)?,
                (None, Some(w)) => select_knr(&oracle, w)?,
                _ => return Err(Error::Config("cer needs exactly one of --k or --w".into())),
            };
            let ds = ds.with_source_hash(ch.content_hash());
            println!("{}", write_out(out, "cer.json", &ds.to_json())?.display());
            if let Some(shots) = a.decay_shots {
                let exp = DecayExperiment { depths: a.depths.clone(), shots: Some(shots), spam: 1.0 };
                let fits = ds
                    .entries()
                    .iter()
                    .filter(|(p, _)| !p.is_identity())
                    .enumerate()
                    .map(|(i, (p, _))| emulate_cer_decay(&ch, p, &exp, &mut stream(cfg.seed, i as u64)))
                    .collect::<Result<Vec<_>>>()?;
                println!("{}", write_out(out, "decay.json", &serde_json::to_string_pretty(&fits)?)?.display());
            }
        }
        Command::Uss { dataset } => {
            let ds = CerDataset::<f64>::from_json(&fs::read_to_string(dataset)?)?;
            println!("{}", write_out(out, "completed.json", &uss_complete(&ds)?.to_json())?.display());
        }
        Command::Decode(a) => {
            let (input, truth) = match (&a.completed, &a.channel) {
                (Some(p), _) => (DecoderInput::Dist(CompletedDist::<f64>::from_json(&fs::read_to_string(p)?)?.into_dist()), None),
                (None, Some(p)) => {
                    let ch = read_channel(p)?;
                    let oracle = ch.chi_diagonal()?;
                    let spec = decoder_spec(a.decoder.unwrap_or(DecoderChoice::MlFull), a.k, &oracle)?;
                    let input = build_decoder_input(&spec, &oracle, physical_infidelity(&oracle))?;
                    (input, Some((ch, oracle, spec)))
                }
                (None, None) => unreachable!("clap requires one of them"),
            };
            let dec = BlockDecoder::new(&input, &code)?;
            let syndromes: Vec<usize> = if a.syndromes.is_empty() { (0..code.num_syndromes()).collect() } else { a.syndromes.clone() };
            let mut csv = String::from("syndrome,p_I,p_X,p_Y,p_Z,chosen\n");
            for &s in &syndromes {
                code.syndrome_from_value(s)?;
                let d = dec.decision(s);
                csv += &format!("{s},{},{},{},{},{}\n", d.probs[0], d.probs[1], d.probs[2], d.probs[3], d.chosen);
            }
            println!("{}", write_out(out, "decode.csv", &csv)?.display());
            if let Some((ch, oracle, spec)) = truth {
                let exact = level1_exact(&BlockTruth::from_channel(&ch, &code)?, &dec);
                let doc = json!({
                    "channel_hash": ch.content_hash(),
                    "decoder": spec.kind.label(),
                    "k": a.k,
                    "eps_physical": physical_infidelity(&oracle),
                    "logical_infidelity": exact.infidelity,
                    "logical_chi": exact.chi,
                });
                println!("{}", write_out(out, "decode.json", &serde_json::to_string_pretty(&doc)?)?.display());
            }
        }
        Command::Simulate { decoder: a, convergence } => {
            let levels = a.levels.unwrap_or(cfg.levels);
            let sampler = cfg.seeded_sampler();
            let ch = read_channel(&a.channel)?;
            let oracle = ch.chi_diagonal()?;
            let spec = decoder_spec(a.decoder, a.k, &oracle)?;
            let input = build_decoder_input(&spec, &oracle, physical_infidelity(&oracle))?;
            let dec = BlockDecoder::new(&input, &code)?;
            let truth = BlockTruth::from_channel(&ch, &code)?;
            let est = Simulator::new(&code, &truth, &dec, &input, levels, &sampler)?.run(&sampler);
            let doc = json!({
                "channel_hash": ch.content_hash(),
                "decoder": spec.kind.label(),
                "k": a.k,
                "levels": levels,
                "samples": est.samples,
                "alpha": est.alpha,
                "mean": est.mean,
                "stderr": est.stderr,
                "skipped_fraction": est.skipped_fraction,
                "mean_weight": est.mean_weight,
                "fallbacks": est.fallbacks,
                "warning": est.warning,
            });
            println!("{}", write_out(out, "simulate.json", &serde_json::to_string_pretty(&doc)?)?.display());
            if *convergence {
                let counts = if cfg.convergence_counts.is_empty() { vec![100, 1000, 10000] } else { cfg.convergence_counts.clone() };
                let is_cfg = SamplerConfig { mode: SamplingMode::Importance, seed: derive_seed(cfg.seed, 1), ..sampler };
                let rows = convergence_study(&code, &truth, &dec, &input, levels, &is_cfg, &counts)?;
                println!("{}", write_out(out, "convergence.csv", &convergence_csv(&rows)?)?.display());
            }
        }
        Command::Sweep { ensemble } => {
            let e = Ensemble::load(&ensemble_dir(cli, ensemble))?;
            let path = out.join("records.csv");
            run_gain_sweep(&e, &code, &cfg.k_list, cfg.levels, &cfg.seeded_sampler(), &path)?;
            println!("{}", path.display());
        }
        Command::KnrSweep { ensemble } => {
            let e = Ensemble::load(&ensemble_dir(cli, ensemble))?;
            let path = out.join("knr_records.csv");
            run_knr_sweep(&e, &code, &cfg.w_list, cfg.levels, &cfg.seeded_sampler(), &path)?;
            println!("{}", path.display());
        }
        Command::Report { records, tvd, ensemble } => {
            if *tvd {
                let e = Ensemble::load(&ensemble_dir(cli, ensemble))?;
                let (_, rows) = tvd_report(&e, cfg.tvd_k, cfg.bin_edges.as_deref(), cfg.bins_per_decade)?;
                println!("{}", write_out(out, "tvd_report.csv", &tvd_csv(&rows, cfg.tvd_k)?)?.display());
            } else {
                let path = records.clone().unwrap_or_else(|| out.join("records.csv"));
                let recs = read_records(&path)?;
                let edges = edges_for(&recs, cfg.bin_edges.as_deref(), cfg.bins_per_decade)?;
                let bins = bin_and_aggregate(&recs, &edges)?;
                println!("{}", write_out(out, "report.csv", &bins_csv(&bins)?)?.display());
            }
        }
    }
    RunManifest::new(name, &cfg).write(out)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let start = Instant::now();
    let result = run(&cli);
    eprintln!("wall_time: {:.3}s", start.elapsed().as_secs_f64());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
