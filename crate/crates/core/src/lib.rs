//! Measures how far a fine-tuned model's representations have drifted from the
//! pre-trained model they started from.
//!
//! Everything works on model-agnostic dumps: per-layer feature arrays, logits
//! and labels stored as NPY files and tied together by a JSON run manifest
//! ([`tensor_io`]). On top of that sit centred kernel alignment
//! ([`similarity`]), expected calibration error ([`calibration`]), k-NN feature
//! probes ([`knn`]), similarity-space membership tests ([`simspace`]),
//! multi-run trajectories ([`trajectory`]) and similarity→metric line fits
//! ([`correlate`]).

pub mod calibration;
pub mod correlate;
pub mod error;
pub mod knn;
pub mod numfmt;
pub mod similarity;
pub mod simspace;
pub mod synthetic;
pub mod tensor_io;
pub mod trajectory;

pub use error::{Error, ErrorClass, Result};
