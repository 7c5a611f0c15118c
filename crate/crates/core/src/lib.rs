//! Randomized two-microphone room impulse response corpora and online data
//! augmentation.
//!
//! The pipeline runs scene sampling ([`scene`]) into image-method simulation
//! ([`engine`]), then packaging into FLAC folds ([`packager`]). Training
//! examples are assembled from stored records and clean speech by
//! [`augment`].

pub mod acoustics;
pub mod augment;
pub mod clean;
pub mod convolve;
pub mod engine;
pub mod error;
pub mod packager;
pub mod rng;
pub mod scene;
pub mod stats;
pub mod stft;

pub use error::{Error, Result};
