//! Quantization of superconducting networks coupled to transmission lines
//! and to lossless impedances with infinitely many modes.
//!
//! The crate is organised around the pipeline used by the `cqed` binary:
//! describe a circuit, solve the boundary-value problem of the line with
//! eigenvalue-dependent boundary conditions, pick the dressing lengths that
//! remove mode-mode couplings, and emit frequencies, coupling constants and
//! spectral densities.
//!
//! ```
//! use cqed_core::hamiltonian_assembly::{charge_qubit_couplings_exact, ChargeQubitParams};
//!
//! let device = ChargeQubitParams::device_a();
//! let table = charge_qubit_couplings_exact(&device, 200).unwrap();
//! let peak = table.argmax();
//! assert!((80..=82).contains(&peak));
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod block_linalg;
pub mod circuit_model;
pub mod constants;
pub mod foster_synthesis;
pub mod hamiltonian_assembly;
pub mod mode_basis;
pub mod quadrature;
pub mod secular_solver;
pub mod spectral_density;
pub mod structured_eigen;
pub mod units;
pub mod validation;
