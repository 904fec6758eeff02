//! Decoding concatenated stabilizer codes with partial Pauli error information.
//!
//! The numeric core is generic over [`Real`] (f32 or f64); the aliases below pick f64.

pub mod cer;
pub mod channel;
pub mod code;
pub mod decoder;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod logical;
pub mod noise;
pub mod pauli;
pub mod rng;
pub mod scalar;
pub mod uss;

pub use channel::{Channel, PauliDist, TransferMatrix};
pub use error::{Error, Result};
pub use pauli::PauliOp;
pub use scalar::Real;

pub type Channel64 = Channel<f64>;
pub type Channel32 = Channel<f32>;
pub type PauliDist64 = PauliDist<f64>;
pub type PauliDist32 = PauliDist<f32>;
