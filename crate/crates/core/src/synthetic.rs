//! Seeded synthetic rating matrices.
//!
//! # Taste-cluster model
//!
//! Each profile `p` has a global appeal `q_p ~ N(0, appeal_sd)` and a
//! popularity weight `1 / (rank_p + 10)^popularity_skew` over a random
//! ranking. Users belong to one of `clusters` taste groups uniformly at
//! random. Every group has its own view of every profile,
//! `o_{c,p} ~ N(0, taste_sd)`, and every user a personal bias
//! `b_u ~ N(0, bias_sd)`. A user rates `n_u` distinct profiles, `n_u` drawn
//! uniformly from `ratings_per_user`, sampled without replacement in
//! proportion to popularity. The rating is
//!
//! ```text
//! r = round(center + q_p + b_u + o_{c(u),p} + e),   e ~ N(0, noise_sd)
//! ```
//!
//! clamped to the scale, with `center` the scale midpoint. Item averages
//! recover `q_p`; user-user neighborhoods can also recover `b_u` and
//! `o_{c,p}`; pure guessing recovers nothing.
//!
//! # Uniform model
//!
//! [`uniform`] draws every value independently and uniformly from the
//! scale, which pins down the error of a uniform guesser analytically.

use rand::seq::index::sample_weighted;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::ratings::{Rating, RatingScale, RatingsMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct TasteConfig {
    pub users: u32,
    pub profiles: u32,
    pub clusters: u32,
    pub ratings_per_user: (u32, u32),
    pub popularity_skew: f64,
    pub appeal_sd: f64,
    pub taste_sd: f64,
    pub bias_sd: f64,
    pub noise_sd: f64,
    pub scale: RatingScale,
}

impl TasteConfig {
    /// 2,000 users, 1,000 profiles, about 60 ratings per user.
    pub fn standard() -> Self {
        TasteConfig {
            users: 2000,
            profiles: 1000,
            clusters: 6,
            ratings_per_user: (20, 100),
            popularity_skew: 0.8,
            appeal_sd: 1.5,
            taste_sd: 0.8,
            bias_sd: 1.0,
            noise_sd: 2.0,
            scale: RatingScale::DEFAULT,
        }
    }

    /// 200 users who all rate well over 100 profiles.
    pub fn cold_start() -> Self {
        TasteConfig {
            users: 200,
            profiles: 400,
            ratings_per_user: (130, 220),
            ..Self::standard()
        }
    }

    /// About 50,000 ratings over 1,000 users.
    pub fn production() -> Self {
        TasteConfig {
            users: 1000,
            profiles: 600,
            ratings_per_user: (25, 75),
            ..Self::standard()
        }
    }
}

impl Default for TasteConfig {
    fn default() -> Self {
        Self::standard()
    }
}

/// Ratings from the taste-cluster model. User ids are `0..users`, profile
/// ids `0..profiles`.
pub fn taste_clusters(cfg: &TasteConfig, seed: u64) -> Vec<Rating> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let appeal = Normal::new(0.0, cfg.appeal_sd).expect("finite sd");
    let taste = Normal::new(0.0, cfg.taste_sd).expect("finite sd");
    let bias = Normal::new(0.0, cfg.bias_sd).expect("finite sd");
    let noise = Normal::new(0.0, cfg.noise_sd).expect("finite sd");

    let np = cfg.profiles as usize;
    let q: Vec<f64> = (0..np).map(|_| appeal.sample(&mut rng)).collect();
    let mut rank: Vec<usize> = (0..np).collect();
    rank.shuffle(&mut rng);
    let weight: Vec<f64> = rank
        .iter()
        .map(|&r| 1.0 / (r as f64 + 10.0).powf(cfg.popularity_skew))
        .collect();
    let clusters = cfg.clusters.max(1) as usize;
    let offsets: Vec<Vec<f64>> = (0..clusters)
        .map(|_| (0..np).map(|_| taste.sample(&mut rng)).collect())
        .collect();

    let center = (cfg.scale.min() + cfg.scale.max()) as f64 / 2.0;
    let (lo, hi) = cfg.ratings_per_user;
    let mut out = Vec::new();
    for u in 0..cfg.users {
        let c = rng.gen_range(0..clusters);
        let b = bias.sample(&mut rng);
        let n = rng.gen_range(lo..=hi.max(lo)).min(cfg.profiles) as usize;
        let picked = sample_weighted(&mut rng, np, |p| weight[p], n).expect("positive weights");
        let mut picked: Vec<usize> = picked.into_iter().collect();
        picked.sort_unstable();
        for p in picked {
            let raw = center + q[p] + b + offsets[c][p] + noise.sample(&mut rng);
            let v = (raw.round() as i32).clamp(cfg.scale.min(), cfg.scale.max());
            out.push(Rating::new(u, p as u32, v));
        }
    }
    out
}

/// `per_user` ratings for each of `users` users over distinct random
/// profiles, values uniform on the scale.
pub fn uniform(users: u32, profiles: u32, per_user: u32, scale: RatingScale, seed: u64) -> Vec<Rating> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for u in 0..users {
        let picked = rand::seq::index::sample(&mut rng, profiles as usize, per_user.min(profiles) as usize);
        let mut picked = picked.into_vec();
        picked.sort_unstable();
        for p in picked {
            out.push(Rating::new(u, p as u32, rng.gen_range(scale.min()..=scale.max())));
        }
    }
    out
}

pub fn matrix(scale: RatingScale, ratings: Vec<Rating>) -> RatingsMatrix {
    RatingsMatrix::from_ratings(scale, ratings).expect("generated values lie on the scale")
}

/// Expected NMAE in percent of a uniform integer guess against a uniform
/// integer truth on a scale with `levels` values: `E|X - Y| = (n² - 1) / 3n`.
pub fn uniform_guess_nmae(levels: u32) -> f64 {
    let n = levels as f64;
    (n * n - 1.0) / (3.0 * n) / (n - 1.0) * 100.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_and_within_scale() {
        let mut cfg = TasteConfig::standard();
        cfg.users = 50;
        cfg.profiles = 80;
        let a = taste_clusters(&cfg, 9);
        assert_eq!(a, taste_clusters(&cfg, 9));
        assert_ne!(a, taste_clusters(&cfg, 10));
        assert!(a.iter().all(|r| cfg.scale.contains(r.value)));
        let m = matrix(cfg.scale, a.clone());
        assert_eq!(m.rating_count(), a.len());
    }

    #[test]
    fn uniform_expectation() {
        assert!((uniform_guess_nmae(10) - 36.666_666_666_666_664).abs() < 1e-9);
        // brute force over all level pairs
        let n = 10;
        let total: i32 = (0..n).flat_map(|x| (0..n).map(move |y| (x - y as i32).abs())).sum();
        let brute = total as f64 / (n * n) as f64 / 9.0 * 100.0;
        assert!((brute - uniform_guess_nmae(10)).abs() < 1e-9);
    }

    #[test]
    fn uniform_counts() {
        let r = uniform(10, 30, 7, RatingScale::DEFAULT, 1);
        assert_eq!(r.len(), 70);
        assert_eq!(matrix(RatingScale::DEFAULT, r).rating_count(), 70);
    }
}
