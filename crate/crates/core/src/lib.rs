//! Desk-scale dual-branch transformer that couples learned image attention
//! with handcrafted radiomic texture features.
//!
//! The crate is organized around the feedback loop at the heart of the model:
//!
//! * [`autodiff`] — dense tensors with reverse-mode gradients, the substrate
//!   for everything learnable.
//! * [`nn`] — layers, initialization, AdamW and the warmup/cosine schedule.
//! * [`radiomics`] — the 107-feature extractor (shape, first-order and the
//!   five gray-level matrix families).
//! * [`byoa`] — turns a CLS self-attention map into bounding boxes.
//! * [`model`] — the two branches, cross-attention fusion, classifier and
//!   the training loop that closes the loop.
//! * [`losses`] — focal, cross-view NT-Xent and their convex combination.
//! * [`metrics`] — IoU accuracy and ROC AUC with report generation.
//! * [`data`] — synthetic corpus generation, grouped splits, preprocessing.
//! * [`io`] — the flat `RGT1` tensor container and checkpoint manifests.

pub mod autodiff;
pub mod byoa;
pub mod data;
pub mod error;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod radiomics;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
