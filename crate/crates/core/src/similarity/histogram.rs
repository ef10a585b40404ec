use std::fmt;

use super::stats::{ProfileAnchor, UserAnchor};
use super::Mode;
use crate::ratings::RatingsMatrix;

pub const BUCKET_WIDTH: f64 = 0.02;
const BUCKETS: usize = 100;

/// Distribution of pairwise similarity weights over [-1, 1].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub mode: Mode,
    pub min_overlap: u32,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn bucket(weight: f64) -> usize {
        (((weight + 1.0) / BUCKET_WIDTH).floor() as usize).min(BUCKETS - 1)
    }
}

impl fmt::Display for Histogram {
    /// One `lower<TAB>upper<TAB>count` line per bucket.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.counts.iter().enumerate() {
            let lo = -1.0 + i as f64 * BUCKET_WIDTH;
            writeln!(f, "{:.2}\t{:.2}\t{}", lo, lo + BUCKET_WIDTH, c)?;
        }
        Ok(())
    }
}

/// Histogram of every defined similarity between distinct pairs with at
/// least `min_overlap` common ratings. Each unordered pair counts once.
pub fn similarity_histogram(m: &RatingsMatrix, mode: Mode, min_overlap: u32) -> Histogram {
    let mut counts = vec![0u64; BUCKETS];
    match mode {
        Mode::UserUser => {
            for a in 0..m.num_users() as u32 {
                let acc = UserAnchor::build(m, a);
                for &u in acc.candidates() {
                    if u <= a {
                        continue;
                    }
                    if let Some((w, n)) = acc.weight(m, u) {
                        if n >= min_overlap {
                            counts[Histogram::bucket(w)] += 1;
                        }
                    }
                }
            }
        }
        Mode::ItemItem => {
            for j in 0..m.num_profiles() as u32 {
                let acc = ProfileAnchor::build(m, j);
                for &l in acc.candidates() {
                    if l <= j {
                        continue;
                    }
                    if let Some((w, n)) = acc.weight(l) {
                        if n >= min_overlap {
                            counts[Histogram::bucket(w)] += 1;
                        }
                    }
                }
            }
        }
    }
    Histogram {
        mode,
        min_overlap,
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratings::{Rating, RatingScale};

    #[test]
    fn buckets_edges() {
        assert_eq!(Histogram::bucket(-1.0), 0);
        assert_eq!(Histogram::bucket(1.0), 99);
        assert_eq!(Histogram::bucket(0.0), 50);
        assert_eq!(Histogram::bucket(-0.01), 49);
    }

    #[test]
    fn counts_each_pair_once() {
        let m = RatingsMatrix::from_ratings(
            RatingScale::DEFAULT,
            vec![
                Rating::new(1, 1, 1),
                Rating::new(1, 2, 5),
                Rating::new(2, 1, 1),
                Rating::new(2, 2, 5),
                Rating::new(3, 1, 5),
                Rating::new(3, 2, 1),
            ],
        )
        .unwrap();
        let h = similarity_histogram(&m, Mode::UserUser, 1);
        assert_eq!(h.total(), 3);
        assert_eq!(h.counts[99], 1);
        assert_eq!(h.counts[0], 2);
        assert_eq!(h.to_string().lines().count(), 100);
        assert_eq!(similarity_histogram(&m, Mode::UserUser, 3).total(), 0);
    }
}
