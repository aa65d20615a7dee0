//! Simulation and analysis toolkit for autoparametrically stabilized cat
//! qubits: ring-circuit parameters, Lindblad dynamics of the memory–buffer
//! pair, Wigner functions, measurement-protocol emulation and transmon
//! spectra.
//!
//! Internal frequencies and rates are angular (rad/s), energies of circuit
//! elements are given as E/h in GHz, and flux is in units of the flux quantum.

pub mod circuit;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod io;
pub mod ode;
pub mod optimize;
pub mod par;
pub mod protocols;
pub mod sparse;
pub mod transmon;
pub mod wigner;

pub use error::{Error, Result};
pub use fock::{CMatrix, CVector, ModeSpace, Operator, QuantumState, Space, C64};
pub use par::Exec;

/// 2π.
pub const TAU: f64 = std::f64::consts::TAU;

/// Angular frequency (rad/s) from an ordinary frequency in MHz.
pub fn mhz(f: f64) -> f64 {
    TAU * f * 1e6
}

/// Angular frequency (rad/s) from an ordinary frequency in kHz.
pub fn khz(f: f64) -> f64 {
    TAU * f * 1e3
}

/// Angular frequency (rad/s) from an ordinary frequency in GHz.
pub fn ghz(f: f64) -> f64 {
    TAU * f * 1e9
}

/// Ordinary frequency in MHz from an angular frequency.
pub fn to_mhz(w: f64) -> f64 {
    w / TAU / 1e6
}
