//! Pearson (user-user) and adjusted Pearson (item-item) similarity, overlap
//! filtering and neighbor ranking.

mod cache;
mod histogram;
mod stats;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ratings::{ProfileId, ProfileIx, RatingSource, UserId, UserIx};

pub use cache::{CachedNeighbors, SimilarityCache};
pub use histogram::{similarity_histogram, Histogram};
pub use stats::{ProfileAnchor, UserAnchor};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("min_overlap and max_neighbors must both be at least 1")]
    InvalidParams,
    #[error("unknown anchor {0}")]
    UnknownAnchor(u32),
}

/// Which side of the matrix similarities are computed between.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    UserUser,
    ItemItem,
}

/// MinO / MaxN neighborhood parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SimilarityParams {
    /// Minimum number of common ratings before a similarity is used.
    pub min_overlap: u32,
    /// Maximum neighborhood size.
    pub max_neighbors: u32,
    /// Drop neighbors with non-positive weight. Off by default.
    #[serde(default)]
    pub positive_only: bool,
}

impl SimilarityParams {
    pub fn new(min_overlap: u32, max_neighbors: u32) -> Result<Self, SimilarityError> {
        if min_overlap == 0 || max_neighbors == 0 {
            return Err(SimilarityError::InvalidParams);
        }
        Ok(SimilarityParams {
            min_overlap,
            max_neighbors,
            positive_only: false,
        })
    }

    pub fn positive_only(mut self, on: bool) -> Self {
        self.positive_only = on;
        self
    }

    #[inline]
    pub(crate) fn admits(&self, weight: f64, overlap: u32) -> bool {
        overlap >= self.min_overlap && (!self.positive_only || weight > 0.0)
    }
}

/// One ranked neighbor. `id` is the external user or profile id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: u32,
    pub weight: f64,
    pub overlap: u32,
}

/// Neighbors of an anchor, by weight descending then id ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub anchor: u32,
    pub neighbors: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

/// A candidate during ranking, addressed by dense index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Ranked {
    pub ix: u32,
    pub id: u32,
    pub weight: f64,
    pub overlap: u32,
}

#[inline]
pub(crate) fn rank_order(a: &Ranked, b: &Ranked) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then_with(|| a.id.cmp(&b.id))
}

/// Sorts by weight descending, id ascending, and keeps at most `limit`.
pub(crate) fn rank_top(cands: &mut Vec<Ranked>, limit: usize) {
    if cands.len() > limit {
        cands.select_nth_unstable_by(limit, rank_order);
        cands.truncate(limit);
    }
    cands.sort_unstable_by(rank_order);
}

/// Pearson correlation between two users over the profiles both rated,
/// each centered by their mean over all their ratings. Absent when there is
/// no overlap or either side has zero deviation.
pub fn pearson_user<S: RatingSource>(src: &S, a: UserId, j: UserId) -> Option<(f64, u32)> {
    let m = src.matrix();
    let (a, j) = (m.user_index(a)?, m.user_index(j)?);
    user_weight(src, a, j)
}

pub(crate) fn user_weight<S: RatingSource>(src: &S, a: UserIx, j: UserIx) -> Option<(f64, u32)> {
    let s = stats::user_pair(src, a, j);
    s.weight(src.user_totals(a), src.user_totals(j))
        .map(|w| (w, s.n))
}

/// Adjusted Pearson correlation between two profiles over the users who
/// rated both, each rating centered by its rater's mean.
pub fn pearson_item_adjusted<S: RatingSource>(
    src: &S,
    j: ProfileId,
    l: ProfileId,
) -> Option<(f64, u32)> {
    let m = src.matrix();
    let (j, l) = (m.profile_index(j)?, m.profile_index(l)?);
    item_weight(src, j, l)
}

pub(crate) fn item_weight<S: RatingSource>(
    src: &S,
    j: ProfileIx,
    l: ProfileIx,
) -> Option<(f64, u32)> {
    let s = stats::item_pair(src, j, l);
    s.weight().map(|w| (w, s.n))
}

/// Ranked neighbors of `anchor` computed from scratch, without a cache.
///
/// `anchor` is a user id in [`Mode::UserUser`] and a profile id in
/// [`Mode::ItemItem`]; `filter` receives candidate external ids.
pub fn neighbor_set<S: RatingSource>(
    src: &S,
    mode: Mode,
    anchor: u32,
    params: &SimilarityParams,
    filter: impl Fn(u32) -> bool,
) -> Result<NeighborSet, SimilarityError> {
    let m = src.matrix();
    let mut cands = Vec::new();
    match mode {
        Mode::UserUser => {
            let a = m
                .user_index(UserId(anchor))
                .ok_or(SimilarityError::UnknownAnchor(anchor))?;
            let acc = UserAnchor::build(src, a);
            for &u in acc.candidates() {
                let id = m.user_id(u).0;
                if !filter(id) {
                    continue;
                }
                if let Some((weight, overlap)) = acc.weight(src, u) {
                    if params.admits(weight, overlap) {
                        cands.push(Ranked { ix: u, id, weight, overlap });
                    }
                }
            }
        }
        Mode::ItemItem => {
            let j = m
                .profile_index(ProfileId(anchor))
                .ok_or(SimilarityError::UnknownAnchor(anchor))?;
            let acc = ProfileAnchor::build(src, j);
            for &l in acc.candidates() {
                let id = m.profile_id(l).0;
                if !filter(id) {
                    continue;
                }
                if let Some((weight, overlap)) = acc.weight(l) {
                    if params.admits(weight, overlap) {
                        cands.push(Ranked { ix: l, id, weight, overlap });
                    }
                }
            }
        }
    }
    rank_top(&mut cands, params.max_neighbors as usize);
    Ok(NeighborSet {
        anchor,
        neighbors: cands
            .into_iter()
            .map(|r| Neighbor {
                id: r.id,
                weight: r.weight,
                overlap: r.overlap,
            })
            .collect(),
    })
}
