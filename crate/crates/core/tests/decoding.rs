use cerdec::code::{LogicalClass, StabilizerCode, Syndrome};
use cerdec::decoder::{message_passing_decode, BlockDecoder, BlockEvidence, DecoderInput};
use cerdec::logical::level1_exact;
use cerdec::rng::stream;
use cerdec::{PauliDist, PauliOp};
use rand::Rng;

/// Pauli index (X = 1, Z = 2, Y = 3) of the logical part of `e`, read off by commutation.
fn class_index(e: &PauliOp, lx: &PauliOp, lz: &PauliOp) -> usize {
    (e.anticommutes_with(lz) as usize) | ((e.anticommutes_with(lx) as usize) << 1)
}

fn class_from_index(i: usize) -> LogicalClass {
    [LogicalClass::I, LogicalClass::X, LogicalClass::Z, LogicalClass::Y][i]
}

fn bits_against(e: &PauliOp, gens: &[PauliOp]) -> u32 {
    gens.iter().enumerate().map(|(i, g)| (e.anticommutes_with(g) as u32) << i).sum()
}

fn random_marginals(n: usize, seed: u64) -> Vec<[f64; 4]> {
    let mut rng = stream(seed, 0);
    (0..n)
        .map(|_| {
            let p: f64 = 0.3 * rng.random::<f64>();
            let w: [f64; 3] = [rng.random::<f64>() + 0.05, rng.random::<f64>() + 0.05, rng.random::<f64>() + 0.05];
            let t: f64 = w.iter().sum();
            [1.0 - p, p * w[0] / t, p * w[1] / t, p * w[2] / t]
        })
        .collect()
}

#[test]
fn two_level_repetition_toy_matches_flat_ml() {
    let inner = StabilizerCode::repetition3();
    let outer = StabilizerCode::repetition3();
    let flat = StabilizerCode::concatenate(&outer, &inner).unwrap();
    assert_eq!(flat.n(), 9);
    let (ilx, ilz) = (inner.logical_x(), inner.logical_z());
    let (flx, flz) = (flat.logical_x(), flat.logical_z());
    for seed in 0..5 {
        let marg = random_marginals(9, 100 + seed);
        // brute force over all 4^9 errors
        let mut sums = vec![[0.0f64; 4]; 256];
        let mut upper_of: Vec<Option<u32>> = vec![None; 256];
        for idx in 0..1usize << 18 {
            let e = PauliOp::from_index(9, idx).unwrap();
            let prob: f64 = (0..9).map(|q| marg[q][e.factor(q)]).product();
            let s = bits_against(&e, flat.generators()) as usize;
            sums[s][class_from_index(class_index(&e, &flx, &flz)).ord()] += prob;
            // logical content of each level-1 block, as an error on the outer code
            let mut outer_idx = 0;
            for b in 0..3 {
                let eb = PauliOp::from_bits(3, (e.x_bits() >> (3 * b)) & 7, (e.z_bits() >> (3 * b)) & 7).unwrap();
                outer_idx |= class_index(&eb, &ilx, &ilz) << (2 * b);
            }
            let u = bits_against(&PauliOp::from_index(3, outer_idx).unwrap(), outer.generators());
            match upper_of[s] {
                None => upper_of[s] = Some(u),
                Some(prev) => assert_eq!(prev, u, "upper syndrome must be a function of the full syndrome"),
            }
        }
        let mut checked = 0;
        for s in 0..256usize {
            let total: f64 = sums[s].iter().sum();
            if total < 1e-300 {
                continue;
            }
            let blocks: Vec<BlockEvidence<f64>> = (0..3)
                .map(|b| BlockEvidence::Product {
                    marginals: marg[3 * b..3 * b + 3].to_vec(),
                    syndrome: Syndrome::new(((s >> (2 * b)) & 3) as u32, 2).unwrap(),
                })
                .collect();
            let upper = vec![vec![Syndrome::new(upper_of[s].unwrap(), 2).unwrap()]];
            let out = message_passing_decode(2, &blocks, &upper, &inner).unwrap();
            for l in LogicalClass::ALL {
                let want = sums[s][l.ord()] / total;
                assert!((out.top().prob(l) - want).abs() < 1e-12, "seed {seed} s {s} {l}: {} vs {want}", out.top().prob(l));
            }
            checked += 1;
        }
        assert_eq!(checked, 256);
    }
}

fn depolarizing(p: f64) -> PauliDist<f64> {
    PauliDist::from_marginals(&vec![[1.0 - p, p / 3.0, p / 3.0, p / 3.0]; 7]).unwrap()
}

#[test]
fn minimum_weight_agrees_with_ml_on_weak_depolarizing_noise() {
    let code = StabilizerCode::steane();
    let mw = BlockDecoder::<f64>::new(&DecoderInput::MinWeight, &code).unwrap();
    for k in 3..=9 {
        let p = 10f64.powi(-k);
        let d = depolarizing(p);
        let ml = BlockDecoder::new(&DecoderInput::Dist(d.clone()), &code).unwrap();
        for s in 0..64 {
            assert_eq!(ml.decision(s).chosen, mw.decision(s).chosen, "p = {p}, s = {s}");
        }
        let truth = cerdec::logical::BlockTruth::from_pauli(&d, &code).unwrap();
        let (a, b) = (level1_exact(&truth, &ml).infidelity, level1_exact(&truth, &mw).infidelity);
        assert!((a - b).abs() <= 1e-12 * a.abs(), "p = {p}: {a} vs {b}");
    }
}

#[test]
fn distance_three_scaling() {
    let code = StabilizerCode::steane();
    let ratio = |p: f64| {
        let d = depolarizing(p);
        let dec = BlockDecoder::new(&DecoderInput::Dist(d.clone()), &code).unwrap();
        level1_exact(&cerdec::logical::BlockTruth::from_pauli(&d, &code).unwrap(), &dec).infidelity / (p * p)
    };
    let (a, b) = (ratio(1e-3), ratio(5e-4));
    assert!(((a - b) / b).abs() < 0.1, "{a} vs {b}");
}
