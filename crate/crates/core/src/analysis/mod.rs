//! Experiments and the measurements they report.

pub mod experiments;
pub mod phantom;
pub mod spectrum;
pub mod stats;
pub mod volume;

pub use phantom::{make_phantom, make_phantom_with, Pattern};
pub use spectrum::{spectrum_report, suppression, zero_pad_upsample, SpectrumReport};
pub use stats::wilcoxon_signed_rank;
pub use volume::{make_blob, probabilistic_volume, VolumeReport};
