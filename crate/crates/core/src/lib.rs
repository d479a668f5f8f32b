//! Toolkit for separating search errors from model errors in sequence-to-sequence
//! translation systems.
//!
//! The pieces compose into one protocol: decode a test set with several systems
//! into n-best lists ([`search`]), rescore every list with every model and with
//! the summed ensemble ([`analysis`]), compare against the oracle BLEU of each
//! list ([`metrics`]), and attribute each disagreement either to the search or to
//! the model. [`synthlab`] manufactures deterministic toy tasks on which the whole
//! pipeline runs in seconds, and [`formats`] holds the on-disk interchange forms.

pub mod analysis;
pub mod error;
pub mod formats;
pub mod metrics;
pub mod scorers;
pub mod search;
pub mod synthlab;
pub mod textcore;

pub use error::{Error, Result};
