//! Training-free retrieval and classification from multimodal model
//! descriptions: each sample becomes a set of sentence embeddings, samples are
//! compared by their maximum pairwise cosine similarity, and rankings are
//! scored with sample-level AP, mAP and Pair-mAP.

pub mod describer;
pub mod digest;
pub mod embedder;
pub mod endpoint;
pub mod manifest;
pub mod metrics;
pub mod mock;
pub mod pipeline;
pub mod retry;
pub mod simkernel;
pub mod textproc;
