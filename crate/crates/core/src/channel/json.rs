//! JSON interchange for channels and Pauli distributions.

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::linalg::CMatrix;
use crate::scalar::Real;

use super::{Channel, Factor, PauliDist, TransferMatrix};

pub const CHANNEL_FORMAT: &str = "cerdec-chan-1";
pub const DIST_FORMAT: &str = "cerdec-dist-1";

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Repr {
    Unitary { dim: usize, matrix: Vec<[f64; 2]> },
    OperatorSum { dim: usize, kraus: Vec<Vec<[f64; 2]>> },
    Pauli { n: usize, probs: Vec<f64> },
    Product { n: usize, factors: Vec<FactorRepr> },
    Transfer { n: usize, matrix: Vec<f64> },
}

#[derive(Serialize, Deserialize)]
struct FactorRepr {
    support: Vec<usize>,
    channel: Repr,
}

#[derive(Serialize, Deserialize)]
struct ChannelFile {
    version: String,
    #[serde(flatten)]
    channel: Repr,
}

#[derive(Serialize, Deserialize)]
struct DistFile {
    version: String,
    n: usize,
    probs: Vec<f64>,
}

fn mat_out<T: Real>(m: &CMatrix<T>) -> Vec<[f64; 2]> {
    m.data().iter().map(|z| [z.re.f64(), z.im.f64()]).collect()
}

fn mat_in<T: Real>(dim: usize, v: &[[f64; 2]]) -> Result<CMatrix<T>> {
    CMatrix::from_vec(dim, dim, v.iter().map(|[re, im]| Complex::new(T::of(*re), T::of(*im))).collect())
}

fn to_repr<T: Real>(ch: &Channel<T>) -> Repr {
    match ch {
        Channel::Unitary(u) => Repr::Unitary { dim: u.rows(), matrix: mat_out(u) },
        Channel::OperatorSum(ks) => Repr::OperatorSum {
            dim: ks.first().map_or(0, CMatrix::rows),
            kraus: ks.iter().map(mat_out).collect(),
        },
        Channel::Pauli(d) => Repr::Pauli { n: d.n(), probs: d.probs().iter().map(|p| p.f64()).collect() },
        Channel::Product { n, factors } => Repr::Product {
            n: *n,
            factors: factors
                .iter()
                .map(|f| FactorRepr { support: f.support.clone(), channel: to_repr(&f.channel) })
                .collect(),
        },
        Channel::Transfer(t) => Repr::Transfer { n: t.n(), matrix: t.data().iter().map(|x| x.f64()).collect() },
    }
}

fn from_repr<T: Real>(r: Repr) -> Result<Channel<T>> {
    Ok(match r {
        Repr::Unitary { dim, matrix } => Channel::Unitary(mat_in(dim, &matrix)?),
        Repr::OperatorSum { dim, kraus } => {
            Channel::OperatorSum(kraus.iter().map(|k| mat_in(dim, k)).collect::<Result<_>>()?)
        }
        Repr::Pauli { n, probs } => Channel::Pauli(PauliDist::new(n, probs.into_iter().map(T::of).collect())?),
        Repr::Product { n, factors } => Channel::Product {
            n,
            factors: factors
                .into_iter()
                .map(|f| Ok(Factor { support: f.support, channel: from_repr(f.channel)? }))
                .collect::<Result<_>>()?,
        },
        Repr::Transfer { n, matrix } => {
            Channel::Transfer(TransferMatrix::new(n, matrix.into_iter().map(T::of).collect())?)
        }
    })
}

impl<T: Real> Channel<T> {
    pub fn to_json(&self) -> String {
        let file = ChannelFile { version: CHANNEL_FORMAT.into(), channel: to_repr(self) };
        serde_json::to_string(&file).expect("channel serializes")
    }

    /// Parses and fully validates.
    pub fn from_json(s: &str) -> Result<Self> {
        let file: ChannelFile = serde_json::from_str(s)?;
        if file.version != CHANNEL_FORMAT {
            return Err(invalid!("channel format {:?}, expected {CHANNEL_FORMAT}", file.version));
        }
        let ch = from_repr(file.channel)?;
        ch.validate()?;
        Ok(ch)
    }

    /// sha256 of the canonical JSON form.
    pub fn content_hash(&self) -> String {
        sha256_hex(self.to_json().as_bytes())
    }
}

impl<T: Real> PauliDist<T> {
    pub fn to_json(&self) -> String {
        let file = DistFile { version: DIST_FORMAT.into(), n: self.n(), probs: self.probs().iter().map(|p| p.f64()).collect() };
        serde_json::to_string(&file).expect("dist serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: DistFile = serde_json::from_str(s)?;
        if file.version != DIST_FORMAT {
            return Err(invalid!("distribution format {:?}, expected {DIST_FORMAT}", file.version));
        }
        PauliDist::new(file.n, file.probs.into_iter().map(T::of).collect())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::pauli_rotation;
    use crate::pauli::PauliOp;

    #[test]
    fn roundtrip_every_variant() {
        let z: PauliOp = "Z".parse().unwrap();
        let u = Channel::unitary(pauli_rotation::<f64>(&z, 0.1).unwrap()).unwrap();
        let p = Channel::Pauli(PauliDist::new(1, vec![0.9, 0.05, 0.03, 0.02]).unwrap());
        let ks = Channel::operator_sum(p.kraus().unwrap()).unwrap();
        let prod = Channel::product(3, vec![Factor { support: vec![2], channel: u.clone() }]).unwrap();
        let tr = Channel::Transfer(p.transfer_matrix().unwrap());
        for ch in [u, p, ks, prod, tr] {
            let s = ch.to_json();
            assert!(s.contains(CHANNEL_FORMAT));
            let back = Channel::<f64>::from_json(&s).unwrap();
            assert_eq!(back, ch);
            assert_eq!(back.content_hash(), ch.content_hash());
        }
    }

    #[test]
    fn wrong_version_rejected() {
        let s = Channel::<f64>::identity(1).to_json().replace(CHANNEL_FORMAT, "cerdec-chan-0");
        assert!(Channel::<f64>::from_json(&s).is_err());
    }

    #[test]
    fn invalid_unitary_rejected_on_load() {
        let s = r#"{"version":"cerdec-chan-1","kind":"unitary","dim":2,"matrix":[[2,0],[0,0],[0,0],[1,0]]}"#;
        assert!(Channel::<f64>::from_json(s).unwrap_err().is_validation());
    }

    #[test]
    fn dist_roundtrip() {
        let d = PauliDist::<f64>::depolarizing(2, 0.01).unwrap();
        assert_eq!(PauliDist::<f64>::from_json(&d.to_json()).unwrap(), d);
    }
}
