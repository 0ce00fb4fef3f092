//! Software twin of a dual-polarisation continuous-variable QKD link.
//!
//! The crate covers the whole chain from state preparation to the secret key
//! rate: probabilistically shaped QAM sources ([`constellation`]), the
//! transmit DSP ([`txdsp`]), a fiber plus coherent-receiver model
//! ([`channel`]), the receiver DSP ([`rxdsp`]), shot-noise calibration and
//! parameter estimation ([`calibration`]), the trusted-noise security bound
//! ([`security`]) and multidimensional LDPC reconciliation
//! ([`reconciliation`]).
//!
//! All quadrature quantities are in shot-noise units (SNU): the vacuum has
//! variance 1 per quadrature, a coherent state `|α⟩` has quadrature means
//! `(2 Re α, 2 Im α)`, and the modulation variance is `V_A = 2⟨n⟩`.
//!
//! Monte Carlo loops run on rayon when the `parallel` feature is enabled (the
//! default) and fall back to plain iterators otherwise; see [`par`].

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod channel;
pub mod constellation;
pub mod dsp;
pub mod par;
pub mod pipeline;
pub mod reconciliation;
pub mod rng;
pub mod rxdsp;
pub mod security;
pub mod txdsp;
pub mod types;
pub mod wavefile;

pub use num_complex::Complex64;
pub use types::DualPol;
