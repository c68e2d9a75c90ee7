//! retlab: a desk-scale laboratory for chained-retrieval tasks.
//!
//! The crate trains small decoder-style transformers on synthetic
//! "retrieval chains" (predict the end of a chain of paired symbols from a
//! query), inspects and ablates the attention circuits they learn, tracks
//! when circuit paths emerge across checkpoints, computes an information-
//! flow lower bound on the depth such models need, and generates/grades
//! natural-language versions of the same task for benchmarking chat LLMs.
//!
//! Modules:
//! - [`tensor`], [`graph`], [`optim`]: dense f32/f64 tensors, reverse-mode
//!   autodiff, Adam with decoupled weight decay.
//! - [`task`]: chain-instance generation and matrix encoding.
//! - [`model`], [`checkpoint`]: the transformer and its binary container.
//! - [`train`]: training loops, partial losses, layer sweeps.
//! - [`circuit`]: attention export, ablation, circuit validation, emergence.
//! - [`flow`]: the interval-merge information-flow model.
//! - [`bench`]: the five prompt formulations, graders, chat clients.
//! - [`plot`], [`manifest`], [`cli`]: SVG/CSV emission and the entry point.

pub mod bench;
pub mod checkpoint;
pub mod circuit;
pub mod cli;
pub mod flow;
pub mod graph;
pub mod manifest;
pub mod model;
pub mod optim;
pub mod plot;
pub mod seeds;
pub mod task;
pub mod tensor;
pub mod train;
