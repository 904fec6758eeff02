//! Walsh–Hadamard transforms between Pauli error rates and Pauli eigenvalues.
//!
//! `λ_Q = Σ_P (−1)^{⟨P,Q⟩} χ_P` and its inverse, with a factor 4^{-n} on the way back.

use crate::error::{dim_err, Result};
use crate::scalar::Real;

use super::PauliDist;

/// log4 of `len`, or an error if `len` is not a power of four.
pub fn qubits_for_len(len: usize) -> Result<usize> {
    if len == 0 || !len.is_power_of_two() || len.trailing_zeros() % 2 != 0 {
        return Err(dim_err!("length {len} is not a power of 4"));
    }
    Ok(len.trailing_zeros() as usize / 2)
}

/// Unnormalized in-place transform; applying it twice multiplies by 4^n.
pub fn wht_in_place<T: Real>(v: &mut [T]) -> Result<()> {
    let n = qubits_for_len(v.len())?;
    for q in 0..n {
        let s = 1usize << (2 * q);
        let block = 4 * s;
        for start in (0..v.len()).step_by(block) {
            for i in start..start + s {
                let (a, b, c, d) = (v[i], v[i + s], v[i + 2 * s], v[i + 3 * s]);
                // input order I, X, Z, Y; output rows I, X, Z, Y
                v[i] = a + b + c + d;
                v[i + s] = a + b - c - d;
                v[i + 2 * s] = a - b + c - d;
                v[i + 3 * s] = a - b - c + d;
            }
        }
    }
    Ok(())
}

/// Pauli eigenvalues from arbitrary (not necessarily normalized) rates.
pub fn chi_to_ptm_raw<T: Real>(chi: &[T]) -> Result<Vec<T>> {
    let mut v = chi.to_vec();
    wht_in_place(&mut v)?;
    Ok(v)
}

/// Rates from arbitrary eigenvalues.
pub fn ptm_to_chi_raw<T: Real>(lambda: &[T]) -> Result<Vec<T>> {
    let mut v = lambda.to_vec();
    wht_in_place(&mut v)?;
    let scale = T::one() / T::of(v.len() as f64);
    v.iter_mut().for_each(|x| *x *= scale);
    Ok(v)
}

pub fn wht_chi_to_ptm<T: Real>(chi: &PauliDist<T>) -> Vec<T> {
    chi_to_ptm_raw(chi.probs()).expect("PauliDist length is a power of 4")
}

/// Eigenvalues to a validated distribution (clamping tiny negatives).
pub fn wht_ptm_to_chi<T: Real>(lambda: &[T]) -> Result<PauliDist<T>> {
    let n = qubits_for_len(lambda.len())?;
    PauliDist::new(n, ptm_to_chi_raw(lambda)?)
}

/// Single eigenvalue `λ_Q` in O(4^n).
pub fn eigenvalue<T: Real>(chi: &PauliDist<T>, q: crate::pauli::PauliOp) -> T {
    let n = chi.n();
    let mut acc = crate::scalar::KahanSum::new();
    for (idx, &p) in chi.probs().iter().enumerate() {
        if p == T::zero() {
            continue;
        }
        let e = crate::pauli::PauliOp::from_index(n, idx).expect("index in range");
        acc.add(if e.anticommutes_with(&q) { -p } else { p });
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pauli::PauliOp;
    use proptest::prelude::*;

    #[test]
    fn depolarizing_example_both_ways() {
        let chi = PauliDist::new(1, vec![0.97f64, 0.01, 0.01, 0.01]).unwrap();
        let lam = wht_chi_to_ptm(&chi);
        for (got, want) in lam.iter().zip([1.0, 0.96, 0.96, 0.96]) {
            assert!((got - want).abs() < 1e-15);
        }
        let back = wht_ptm_to_chi(&[1.0f64, 0.96, 0.96, 0.96]).unwrap();
        for (got, want) in back.probs().iter().zip([0.97, 0.01, 0.01, 0.01]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn all_ones_is_point_mass() {
        let chi = wht_ptm_to_chi(&vec![1.0f64; 256]).unwrap();
        assert_eq!(chi.probs()[0], 1.0);
        assert!(chi.probs()[1..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn bad_lengths() {
        for len in [0, 2, 3, 8, 32, 17] {
            assert!(qubits_for_len(len).is_err());
        }
        assert_eq!(qubits_for_len(1).unwrap(), 0);
        assert_eq!(qubits_for_len(16384).unwrap(), 7);
    }

    #[test]
    fn butterfly_matches_character_sum() {
        // Independent O(16^n) character sum on 3 qubits.
        let n = 3;
        let chi: Vec<f64> = (0..64).map(|i| ((i * 37 % 11) as f64) / 300.0).collect();
        let fast = chi_to_ptm_raw(&chi).unwrap();
        for q in PauliOp::all(n) {
            let slow: f64 = PauliOp::all(n)
                .map(|p| if p.anticommutes_with(&q) { -chi[p.index()] } else { chi[p.index()] })
                .sum();
            assert!((fast[q.index()] - slow).abs() < 1e-14);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn roundtrip_random_vectors(n in 0usize..=7, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..1usize << (2 * n)).map(|_| rng.random_range(-1.0..1.0)).collect();
            let back = chi_to_ptm_raw(&ptm_to_chi_raw(&v).unwrap()).unwrap();
            for (a, b) in v.iter().zip(&back) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let back2 = ptm_to_chi_raw(&chi_to_ptm_raw(&v).unwrap()).unwrap();
            for (a, b) in v.iter().zip(&back2) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }
    }
}
