//! Contrastive document clustering.
//!
//! A compact text encoder is trained with a temperature-scaled contrastive loss over
//! paired mini-batches, either label-paired on a fraction of the corpus (optionally
//! regularized by a consistency loss on augmented unlabeled documents) or
//! self-supervised with two back-translations of each document as the positive pair.
//! The learned representations are clustered with k-means and scored by accuracy under
//! the optimal cluster-to-class matching.

pub mod augment;
pub mod cli;
pub mod cluster_eval;
pub mod consistency;
pub mod contrastive;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod export;
pub mod sampler;
pub mod seeding;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
