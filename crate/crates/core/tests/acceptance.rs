//! One PASS/FAIL line per acceptance criterion.
//!
//! Runs as a plain binary so the lines appear in `cargo test` output. The process fails
//! when any criterion fails that is not listed in `KNOWN_FAILURES`.

use std::time::Instant;

use cerdec::cer::{emulate_cer_decay, select_top_k, CerDataset, DecayExperiment, SelectionPolicy};
use cerdec::channel::wht::{chi_to_ptm_raw, ptm_to_chi_raw};
use cerdec::code::{LogicalClass, StabilizerCode};
use cerdec::decoder::{build_decoder_input, ml_decode_block, ml_decode_product, BlockDecoder, DecoderKind, DecoderSpec};
use cerdec::harness::{channel_gains, generate_ensemble, quantile, spearman, tvd_csv, tvd_report, Ensemble, EnsembleConfig, Selection};
use cerdec::logical::{
    effective_channel_coherent, effective_channel_pauli, level1_exact, physical_infidelity, BlockTruth, SamplerConfig,
    SamplingMode, Simulator,
};
use cerdec::noise::{sample, NoiseModelConfig};
use cerdec::rng::{derive_seed, stream};
use cerdec::uss::{single_qubit_ansatz, tvd, uss_complete};
use cerdec::{Channel, PauliDist, PauliOp};
use rand::Rng;

/// Criteria expected to fail, with the reason recorded in the project notes.
const KNOWN_FAILURES: &[&str] = &["importance_efficiency", "cer_decay"];

type Check = (bool, String);

fn random_pauli_dist(n: usize, seed: u64, strength: f64) -> PauliDist<f64> {
    let mut rng = stream(seed, 1);
    let mut v: Vec<f64> = (0..1usize << (2 * n)).map(|_| -rng.random::<f64>().ln() * rng.random::<f64>().powi(6)).collect();
    let total: f64 = v[1..].iter().sum();
    for x in &mut v[1..] {
        *x *= strength / total;
    }
    v[0] = 1.0 - strength;
    PauliDist::new(n, v).unwrap()
}

fn random_marginals(seed: u64) -> Vec<[f64; 4]> {
    let mut rng = stream(seed, 2);
    (0..7)
        .map(|_| {
            let p = 0.2 * rng.random::<f64>();
            let w = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
            let t: f64 = w.iter().sum();
            [1.0 - p, p * w[0] / t, p * w[1] / t, p * w[2] / t]
        })
        .collect()
}

fn cg1d(time: f64, seed: u64, index: u64) -> Channel<f64> {
    sample::<f64>(&NoiseModelConfig::cg1d(7, 7, 2.0, time), &mut stream(seed, index)).unwrap()
}

fn ml_full(ch: &Channel<f64>, code: &StabilizerCode) -> (BlockTruth<f64>, BlockDecoder<f64>, cerdec::decoder::DecoderInput<f64>) {
    let oracle = ch.chi_diagonal().unwrap();
    let input = build_decoder_input(&DecoderSpec::new(DecoderKind::MlFull), &oracle, physical_infidelity(&oracle)).unwrap();
    let decoder = BlockDecoder::new(&input, code).unwrap();
    (BlockTruth::from_channel(ch, code).unwrap(), decoder, input)
}

/// Class of `e` relative to the pure error of its syndrome, read off by commutation.
fn class_by_commutation(e: &PauliOp, code: &StabilizerCode) -> (usize, LogicalClass) {
    let s: u32 = code.generators().iter().enumerate().map(|(i, g)| (e.anticommutes_with(g) as u32) << i).sum();
    let t = code.pure_error(&code.syndrome_from_value(s as usize).unwrap()).unwrap();
    let r = e.multiply(&t).unwrap();
    let idx = (r.anticommutes_with(&code.logical_z()) as usize) | ((r.anticommutes_with(&code.logical_x()) as usize) << 1);
    (s as usize, LogicalClass::from_pauli_index(idx))
}

fn logical_op(l: LogicalClass, code: &StabilizerCode) -> PauliOp {
    let (x, z) = (code.logical_x(), code.logical_z());
    let id = PauliOp::identity(code.n());
    let a = if l.has_x() { x } else { id };
    if l.has_z() { a.multiply(&z).unwrap() } else { a }
}

fn coset_ml_oracle(code: &StabilizerCode) -> Check {
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let d = random_pauli_dist(7, 1000 + seed, 0.05 + 0.02 * seed as f64);
        let mut sums = vec![[0.0f64; 4]; 64];
        for (i, &p) in d.probs().iter().enumerate() {
            let (s, l) = class_by_commutation(&PauliOp::from_index(7, i).unwrap(), code);
            sums[s][l.ord()] += p;
        }
        for s in code.syndromes() {
            let dec = ml_decode_block(&d, &s, code).unwrap();
            let total: f64 = sums[s.value()].iter().sum();
            for l in LogicalClass::ALL {
                worst = worst.max((dec.prob(l) - sums[s.value()][l.ord()] / total).abs());
            }
        }
    }
    (worst <= 1e-12, format!("max |Δ| = {worst:.2e} over 20 channels x 64 syndromes"))
}

fn product_form(code: &StabilizerCode) -> Check {
    let mut worst = 0.0f64;
    for seed in 0..10 {
        let marg = random_marginals(2000 + seed);
        let d = PauliDist::from_marginals(&marg).unwrap();
        for s in code.syndromes() {
            let a = ml_decode_product(&marg, &s, code).unwrap();
            let b = ml_decode_block(&d, &s, code).unwrap();
            for l in LogicalClass::ALL {
                worst = worst.max((a.prob(l) - b.prob(l)).abs());
            }
        }
    }
    (worst <= 1e-12, format!("max |Δ| = {worst:.2e} over 10 marginal sets"))
}

fn effective_channels(code: &StabilizerCode) -> Check {
    let mut worst = 0.0f64;
    for seed in 0..5 {
        let d = random_pauli_dist(7, 3000 + seed, 0.1);
        let ch = Channel::Pauli(d.clone());
        let truth = BlockTruth::coherent(&ch, code).unwrap();
        for s in code.syndromes() {
            let chosen = ml_decode_block(&d, &s, code).unwrap().chosen;
            let b = effective_channel_pauli(&d, code, &s, chosen).unwrap();
            let a = match truth.channel(s.value()) {
                Some(c) => c.corrected(chosen),
                None => continue,
            };
            // the public entry point agrees with the shared coherent tables
            if s.value() % 16 == 0 {
                let direct = effective_channel_coherent(&ch, code, &s, &logical_op(chosen, code)).unwrap();
                worst = worst.max((direct.infidelity - a.infidelity).abs());
            }
            worst = worst.max((a.infidelity - b.infidelity).abs()).max((a.prob - b.prob).abs());
            for q in 0..4 {
                for p in 0..4 {
                    worst = worst.max((a.transfer[q][p] - b.transfer[q][p]).abs());
                }
            }
        }
    }
    (worst <= 1e-10, format!("max |Δ| = {worst:.2e} over 5 channels x 64 syndromes"))
}

fn exact_vs_sampled(code: &StabilizerCode) -> Check {
    let mut worst = 0.0f64;
    for i in 0..5 {
        let ch = cg1d(0.05, 4, i);
        let (truth, dec, input) = ml_full(&ch, code);
        let exact = level1_exact(&truth, &dec).infidelity;
        for cfg in [SamplerConfig::direct(100_000, 10 + i), SamplerConfig::importance(0.5, 10_000, 20 + i)] {
            let e = Simulator::new(code, &truth, &dec, &input, 1, &cfg).unwrap().run(&cfg);
            let z = if e.stderr > 0.0 { (e.mean - exact).abs() / e.stderr } else if e.mean == exact { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
        }
    }
    (worst <= 3.0, format!("max |mean - exact| / stderr = {worst:.2} over 5 channels x 2 samplers"))
}

fn importance_efficiency(code: &StabilizerCode) -> Check {
    let ch = cg1d(0.003, 42, 0);
    let (truth, dec, input) = ml_full(&ch, code);
    let mut passes = 0;
    let mut ratios = Vec::new();
    let mut alpha = 0.0;
    for rep in 0..10u64 {
        let direct = SamplerConfig::direct(100_000, 100 + rep);
        let is = SamplerConfig { mode: SamplingMode::Importance, ..SamplerConfig::direct(1000, 200 + rep) };
        let d = Simulator::new(code, &truth, &dec, &input, 2, &direct).unwrap().run(&direct);
        let sim = Simulator::new(code, &truth, &dec, &input, 2, &is).unwrap();
        alpha = sim.alpha();
        let e = sim.run(&is);
        let r = e.stderr / d.stderr;
        if r <= 1.0 {
            passes += 1;
        }
        ratios.push(format!("{r:.2}"));
    }
    (passes >= 8, format!("{passes}/10 reps with stderr ratio <= 1 (alpha {alpha}); ratios {}", ratios.join(" ")))
}

fn distance_three() -> Check {
    let code = StabilizerCode::steane();
    let ratio = |p: f64| {
        let d = PauliDist::from_marginals(&vec![[1.0 - p, p / 3.0, p / 3.0, p / 3.0]; 7]).unwrap();
        let input = cerdec::decoder::DecoderInput::Dist(d.clone());
        let dec = BlockDecoder::new(&input, &code).unwrap();
        level1_exact(&BlockTruth::from_pauli(&d, &code).unwrap(), &dec).infidelity / (p * p)
    };
    let (a, b) = (ratio(1e-3), ratio(5e-4));
    let rel = ((a - b) / b).abs();
    (rel < 0.1, format!("r/p^2 = {a:.4} at 1e-3, {b:.4} at 5e-4 (rel diff {rel:.3})"))
}

fn uss_correctness() -> Check {
    let p = |s: &str| -> PauliOp { s.parse().unwrap() };
    let ds = CerDataset::new(2, vec![(p("II"), 0.90f64), (p("XI"), 0.05), (p("IX"), 0.04)], SelectionPolicy::Explicit).unwrap();
    let c = uss_complete(&ds).unwrap();
    let trace = (c.raw()[p("XX").index()] - 2.0e-3).abs();
    let eps0 = 1.0 - 0.9f64.powf(1.0 / 7.0);
    let independent = eps0 / 3.0 * (1.0 - eps0).powi(6);
    let ansatz = single_qubit_ansatz(0.9f64, 7);
    // the quoted value carries four significant digits
    let ok_hand = trace <= 1e-12 && (ansatz - independent).abs() <= 1e-12 && (ansatz - 4.550e-3).abs() <= 5e-7;
    let mut ok_valid = c.evaluations() <= 16;
    let mut max_visits = c.evaluations();
    for i in 0..5 {
        let oracle = cg1d(0.05, 5, i).chi_diagonal().unwrap();
        for k in [1, 22, 163, 1156] {
            let ds = select_top_k(&oracle, k).unwrap();
            let c = uss_complete(&ds).unwrap();
            let probs = c.dist().probs();
            let total: f64 = probs.iter().sum();
            ok_valid &= probs.iter().all(|&x| x >= 0.0 && x.is_finite()) && (total - 1.0).abs() <= 1e-12;
            ok_valid &= c.evaluations() <= 1 << 14;
            max_visits = max_visits.max(c.evaluations());
        }
    }
    (
        ok_hand && ok_valid,
        format!("hand trace |Δ| = {trace:.1e}, ansatz {ansatz:.6e}; 20 completions valid: {ok_valid}, max visits {max_visits} <= 16384"),
    )
}

fn wht_and_twirl() -> Check {
    let mut worst_rt = 0.0f64;
    let mut rng = stream(6, 0);
    for n in 1..=7 {
        for _ in 0..5 {
            let v: Vec<f64> = (0..1usize << (2 * n)).map(|_| rng.random::<f64>()).collect();
            let back = ptm_to_chi_raw(&chi_to_ptm_raw(&v).unwrap()).unwrap();
            worst_rt = v.iter().zip(&back).fold(worst_rt, |m, (a, b)| m.max((a - b).abs()));
        }
    }
    let mut worst_tw = 0.0f64;
    for i in 0..5 {
        let ch = cg1d(0.05, 7, i);
        let tw = Channel::Pauli(ch.chi_diagonal().unwrap());
        worst_tw = worst_tw.max((ch.process_infidelity().unwrap() - tw.process_infidelity().unwrap()).abs());
    }
    (
        worst_rt <= 1e-12 && worst_tw <= 1e-12,
        format!("roundtrip max |Δ| = {worst_rt:.1e} (n = 1..7), twirl max |Δ| = {worst_tw:.1e} (5 channels)"),
    )
}

fn mini_ensemble() -> (cerdec::harness::EnsembleManifest, Vec<Channel<f64>>) {
    let cfg = EnsembleConfig { noise: NoiseModelConfig::cg1d(7, 7, 2.0, 0.01), count: 30, time_range: Some([0.001, 0.1]) };
    generate_ensemble(&cfg, 2024).unwrap()
}

fn gain_trend(code: &StabilizerCode, channels: &[Channel<f64>]) -> Check {
    let ks = [1usize, 22, 163, 1156];
    let mut gains: Vec<Vec<f64>> = vec![Vec::new(); ks.len()];
    let mut k1_exact = true;
    for (i, ch) in channels.iter().enumerate() {
        let sampler = SamplerConfig { mode: SamplingMode::Importance, ..SamplerConfig::direct(2000, derive_seed(77, i as u64)) };
        let recs = channel_gains(&format!("ch{i:04}"), ch, code, Selection::TopK, &ks, 2, &sampler).unwrap();
        for r in recs {
            let j = ks.iter().position(|&k| k == r.k).unwrap();
            if r.k == 1 {
                k1_exact &= r.gain == 1.0;
            }
            gains[j].push(r.gain);
        }
    }
    let medians: Vec<f64> = gains
        .iter_mut()
        .map(|g| {
            g.sort_by(|a, b| a.total_cmp(b));
            quantile(g, 0.5)
        })
        .collect();
    let kf: Vec<f64> = ks.iter().map(|&k| k as f64).collect();
    let rho = spearman(&kf, &medians).unwrap();
    let shown: Vec<String> = ks.iter().zip(&medians).map(|(k, m)| format!("K={k}: {m:.2}")).collect();
    (
        k1_exact && medians[2] >= 2.0 && rho >= 0.8,
        format!("gain(1) == 1 on all: {k1_exact}; medians {}; spearman {rho:.2}", shown.join(", ")),
    )
}

fn cer_decay() -> Check {
    let exp = DecayExperiment { depths: vec![2, 4, 8, 16], shots: Some(10_000), spam: 0.98 };
    let mut inside = 0;
    let mut zs = Vec::new();
    for i in 0..10u64 {
        let ch = cg1d(0.05, 8, i);
        let mut rng = stream(9, i);
        let p = PauliOp::from_index(7, rng.random_range(1..1usize << 14)).unwrap();
        let fit = emulate_cer_decay(&ch, &p, &exp, &mut rng).unwrap();
        let z = (fit.eigenvalue - fit.exact).abs() / fit.stderr;
        if z <= 2.0 {
            inside += 1;
        }
        zs.push(format!("{z:.2}"));
    }
    (inside == 10, format!("{inside}/10 fits within 2 sigma; |z| {}", zs.join(" ")))
}

fn tvd_format(manifest: cerdec::harness::EnsembleManifest, channels: &[Channel<f64>]) -> Check {
    let dir = tempfile::tempdir().unwrap();
    let ens = Ensemble::write(dir.path(), manifest, channels).unwrap();
    let (per_channel, rows) = tvd_report(&ens, 163, None, 4).unwrap();
    let text = tvd_csv(&rows, 163).unwrap();
    let header = "bin_lo,bin_hi,count,mean_eps,mean_tvd_truncated,mean_tvd_completed";
    let mut ok = text.starts_with("# schema: cerdec-tvd-1\n# K: 163\n") && text.lines().any(|l| l == header);
    ok &= text.lines().last().is_some_and(|l| l.starts_with("# note:") && l.contains("disagree"));
    ok &= per_channel.iter().all(|c| (0.0..=1.0).contains(&c.tvd_truncated) && (0.0..=1.0).contains(&c.tvd_completed));
    ok &= rows.iter().all(|r| (0.0..=1.0).contains(&r.mean_tvd_truncated) && (0.0..=1.0).contains(&r.mean_tvd_completed));
    let counted: usize = rows.iter().map(|r| r.count).sum();
    ok &= counted == channels.len();
    // a bin mean is the mean of its members' values
    let per_channel_check = rows.iter().all(|r| {
        let m: Vec<f64> =
            per_channel.iter().filter(|c| r.bin_lo <= c.eps_physical && c.eps_physical < r.bin_hi).map(|c| c.tvd_completed).collect();
        m.len() == r.count && (m.iter().sum::<f64>() / m.len() as f64 - r.mean_tvd_completed).abs() <= 1e-12
    });
    let spot = tvd(&select_top_k(&channels[0].chi_diagonal().unwrap(), 163).unwrap().padded(), channels[0].chi_diagonal().unwrap().probs())
        .unwrap();
    ok &= per_channel_check && (spot - per_channel[0].tvd_truncated).abs() <= 1e-12;
    (ok, format!("{} bins over {counted} channels, footer present, all tvds in [0, 1]: {ok}", rows.len()))
}

fn main() {
    let code = StabilizerCode::steane();
    let (manifest, channels) = mini_ensemble();
    let criteria: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("coset_ml_oracle", Box::new(|| coset_ml_oracle(&code))),
        ("product_form", Box::new(|| product_form(&code))),
        ("effective_channel_cross_check", Box::new(|| effective_channels(&code))),
        ("exact_vs_sampled", Box::new(|| exact_vs_sampled(&code))),
        ("importance_efficiency", Box::new(|| importance_efficiency(&code))),
        ("distance_three_scaling", Box::new(distance_three)),
        ("uss_correctness", Box::new(uss_correctness)),
        ("wht_and_twirl", Box::new(wht_and_twirl)),
        ("gain_trend", Box::new(|| gain_trend(&code, &channels))),
        ("cer_decay", Box::new(cer_decay)),
        ("tvd_report", Box::new(|| tvd_format(manifest.clone(), &channels))),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = Vec::new();
    for (name, run) in &criteria {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let start = Instant::now();
        let (pass, detail) = run();
        let secs = start.elapsed().as_secs_f64();
        let known = KNOWN_FAILURES.contains(name);
        let tag = if pass { "PASS" } else { "FAIL" };
        let note = if !pass && known { " [known]" } else { "" };
        println!("{tag} {name}: {detail} ({secs:.1} s){note}");
        if !pass && !known {
            unexpected.push(*name);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {}", unexpected.join(", "));
        std::process::exit(1);
    }
}
