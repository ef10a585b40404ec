//! Neighborhood collaborative filtering for explicit rating data.
//!
//! The crate is organized bottom-up:
//!
//! - [`ratings`]: the sparse rating matrix and its read trait,
//! - [`ingest`], [`stats`]: CSV loading and dataset overview figures,
//! - [`synthetic`]: seeded generators for benchmark matrices,
//! - [`view`]: hold-out views used by evaluation,
//! - [`similarity`]: Pearson weights, neighbor ranking, the lazy cache,
//! - [`predict`]: Random, Mean, User-User and Item-Item predictors,
//! - [`evaluation`]: NMAE and the AllButOne, GivenRandomX and Production
//!   protocols,
//! - [`manager`], [`protocol`], [`server`]: the data manager and the CCP
//!   binary RPC server and client,
//! - [`duel`]: the blind two-list comparison experiment.

pub mod duel;
pub mod ingest;
pub mod evaluation;
pub mod manager;
pub mod persist;
pub mod predict;
pub mod protocol;
pub mod ratings;
pub mod server;
pub mod similarity;
pub mod stats;
pub mod synthetic;
pub mod view;

pub use predict::{AlgorithmKind, AlgorithmSpec, Prediction, RecommendationList, SkipReason};
pub use ratings::{
    Attributes, Gender, ProfileId, Rating, RatingScale, RatingSource, RatingsMatrix, UserAttributes,
    UserId,
};
pub use similarity::{Mode, NeighborSet, SimilarityCache, SimilarityParams};
