//! Span-based semantic role labeling as latent-tree dependency parsing.

pub mod chart;
pub mod convert;
pub mod data;
pub mod decode;
#[cfg(feature = "oracle")]
#[doc(hidden)]
pub mod fuzzing;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod scoring;
pub mod synth;
pub mod train;
pub mod types;
