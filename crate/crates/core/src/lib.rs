//! Inductive, multimodal, cross-domain recommendation.
//!
//! Users and items of two domains are represented through their connections
//! to learnable template entities, refined by aggregating their most similar
//! neighbors under fused text/visual similarity, propagated over the
//! interaction graph, and trained jointly with a ranking loss, a
//! self-enhanced template loss and a contrastive loss that aligns users
//! shared by both domains.
//!
//! The numeric core is generic over [`Scalar`]; [`Model64`] / [`Model32`] and
//! friends are the concrete instantiations.

pub mod app;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod numeric;
pub mod objective;
pub mod pipeline;
pub mod scalar;
pub mod selftest;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = numeric::DenseMatrix<f64>;
pub type Matrix32 = numeric::DenseMatrix<f32>;
pub type Model64 = encoder::ModelParams<f64>;
pub type Model32 = encoder::ModelParams<f32>;
pub type Encoder64 = encoder::DomainEncoder<f64>;
pub type Encoder32 = encoder::DomainEncoder<f32>;
