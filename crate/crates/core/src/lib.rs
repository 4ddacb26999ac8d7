//! Simulation toolkit for two-stage carrier phase recovery (decision-directed
//! PLL followed by blind phase search) with Tx I/Q imbalance compensation at
//! the slicer inputs, superscalar parallelization of the PLL and receiver-side
//! I/Q skew equalization.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the `*F64`
//! aliases below fix the scalar for the common case.

pub mod bps;
pub mod constellation;
pub mod error;
pub mod harness;
pub mod impairments;
pub mod matrix;
pub mod pll;
pub mod rng;
pub mod ssp;
pub mod scalar;
pub mod selftest;
pub mod skew_eq;

pub use constellation::{Constellation, ErrorCount, PilotPlan};
pub use error::{Error, Result};
pub use impairments::{NoiseSpec, PhaseSpec, PulseSpec, TxImpairments};
pub use matrix::Matrix2;
pub use pll::{LmsMode, MimoTap, PllConfig, PllState};
pub use scalar::Real;

pub type Iq<T> = num_complex::Complex<T>;
pub type IqStream<T> = Vec<Iq<T>>;

pub type Matrix2F64 = Matrix2<f64>;
pub type Matrix2F32 = Matrix2<f32>;
pub type ConstellationF64 = Constellation<f64>;
pub type TxImpairmentsF64 = TxImpairments<f64>;
pub type PllConfigF64 = PllConfig<f64>;
pub type MimoTapF64 = MimoTap<f64>;
