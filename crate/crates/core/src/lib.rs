//! Preference frame random graph models and normalized-Laplacian spectral
//! clustering, with evaluators for the recovery conditions that accompany them.

pub mod clustering;
pub mod config;
pub mod error;
pub mod frame;
pub mod harness;
pub mod linalg;
pub mod models;
pub mod par;
pub mod sampling;
pub mod spectral;
pub mod theory;

pub use error::{Error, Result};
pub use frame::{build_preference_frame, FrameOptions, FrameSpec, PreferenceFrame, Reversibility};
pub use models::{
    hpfm_matrix, pfm_from_degrees, sbm_model, sbm_pq_frame, verify_block_stochastic, DegreeSpec, ModelKind,
    ModelOptions, NodeWeights, Partition, PfmModel, Scale,
};
pub use par::Execution;
