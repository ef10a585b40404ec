//! Shared fixtures for the benchmarks.

use colfi_core::synthetic::{matrix, taste_clusters, TasteConfig};
use colfi_core::{AlgorithmSpec, RatingsMatrix, SimilarityParams};

/// 500 users by 300 profiles, about 12k ratings.
pub fn medium() -> RatingsMatrix {
    let cfg = TasteConfig {
        users: 500,
        profiles: 300,
        ratings_per_user: (10, 40),
        ..TasteConfig::standard()
    };
    matrix(cfg.scale, taste_clusters(&cfg, 42))
}

pub fn roster() -> Vec<AlgorithmSpec> {
    let p = SimilarityParams::new(10, 50).unwrap();
    vec![
        AlgorithmSpec::random(1),
        AlgorithmSpec::mean(),
        AlgorithmSpec::user_user(p),
        AlgorithmSpec::item_item(p),
    ]
}
