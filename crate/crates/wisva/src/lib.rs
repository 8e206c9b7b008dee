//! Desk-scale laboratory for warehouse SINR heatmap prediction.
//!
//! The crate generates procedural warehouse layouts, computes ground-truth
//! SINR heatmaps with a deterministic multi-wall propagation oracle, builds
//! physics-informed input tensors, and trains a three-branch convolutional
//! VAE (plus a plain autoencoder baseline) to predict the heatmaps. Four
//! evaluation scenarios (validation, denoising, extrapolation, few-shot
//! adaptation) are reproduced with per-pixel error reports.

pub mod eval;
pub mod grid;
pub mod io;
pub mod models;
pub mod nn;
pub mod oracle;
pub mod scene;
pub mod tensors;
pub mod training;

pub use grid::Grid2;
