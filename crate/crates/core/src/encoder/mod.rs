//! Template-driven inductive representations, modality-based aggregation and
//! layer-averaged graph propagation, plus the checkpoint format.

mod checkpoint;
mod encode;
mod params;

pub use checkpoint::{Checkpoint, CHECKPOINT_HEADER};
pub use encode::{
    aggregate_modal, propagate, template_encode, DomainEncoder, EncodeMode, EncodeTrace, EncoderConfig,
    Representations,
};
pub use params::{DomainParams, ModelParams, Projection, ProjectionTrace};
