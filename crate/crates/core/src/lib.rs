//! Kernel-aware correlated topic modeling.
//!
//! Documents receive Gaussian-process-distributed prior means over topic
//! space, drawn row-wise from a document kernel; topic proportions follow a
//! logistic-normal with a shared topic covariance. Training runs variational
//! EM where the M-step for the mean matrix solves a Sylvester equation
//! coupling the topic covariance with the document kernel. Held-out
//! documents are handled by GP regression followed by the same variational
//! machinery.
//!
//! This crate is `no_std` (with `alloc`): it contains the numerics only.
//! File formats, checkpoints, threading, and the command-line front end live
//! in the companion `gptm` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod corpus;
pub mod exec;
pub mod kernel;
pub mod linalg;
pub mod mat;
pub mod predict;
pub mod train;

pub use corpus::{Corpus, Document};
pub use kernel::{ConstraintSet, KernelKind, KernelMatrix};
pub use linalg::{real_schur, solve_sylvester, spd_factorize, SchurFactor, SpdFactor};
pub use mat::Mat;
pub use predict::TestPosterior;
pub use train::{ModelParams, TrainConfig, VariationalState, Variant};
