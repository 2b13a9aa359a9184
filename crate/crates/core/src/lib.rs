//! Bit-exact models of posit, floating point and fixed-point formats, exact
//! multiply-and-accumulate units for each, and a small harness that measures
//! how fully connected classifiers behave when quantized to those formats.
//!
//! ```
//! use emac_core::emac::QuireAccumulator;
//! use emac_core::formats::Format;
//! use emac_core::quantize::quantize_rne;
//!
//! let fmt: Format = "posit8es1".parse().unwrap();
//! let mut acc = QuireAccumulator::new(fmt, 16).unwrap();
//! let w = quantize_rne(0.75, fmt).unwrap();
//! let a = quantize_rne(-1.5, fmt).unwrap();
//! acc.accumulate(w, a).unwrap();
//! assert_eq!(acc.finalize().out.to_f64(), Some(-1.125));
//! ```

pub mod cli;
pub mod emac;
pub mod error;
pub mod exact;
pub mod formats;
pub mod network;
pub mod quantize;

pub use error::{Error, Result};
