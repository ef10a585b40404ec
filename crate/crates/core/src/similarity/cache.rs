use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use lru::LruCache;
use parking_lot::Mutex;

use super::stats::{ProfileAnchor, UserAnchor};
use super::{rank_order, Mode, Neighbor, NeighborSet, Ranked, SimilarityError, SimilarityParams};
use crate::ratings::{ProfileId, RatingsMatrix, UserId};

/// Every neighbor of one anchor with overlap at least `min_overlap`, fully
/// ranked, computed at `epoch`.
#[derive(Debug)]
pub struct CachedNeighbors {
    epoch: u64,
    ranked: Vec<Ranked>,
    position: HashMap<u32, u32>,
}

impl CachedNeighbors {
    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn len(&self) -> usize {
        self.ranked.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranked.is_empty()
    }

    /// Weight and overlap of candidate index `ix`, if it is a neighbor.
    #[inline]
    pub fn get(&self, ix: u32) -> Option<(f64, u32)> {
        self.position.get(&ix).map(|&pos| {
            let r = &self.ranked[pos as usize];
            (r.weight, r.overlap)
        })
    }

    pub(crate) fn ranked(&self) -> &[Ranked] {
        &self.ranked
    }
}

/// Lazily filled similarity cache for one [`Mode`].
///
/// Entries are keyed by anchor index and MinO and stamped with the epoch
/// they were computed at. [`invalidate`](Self::invalidate) bumps the epoch,
/// which makes every older entry stale; stale entries are recomputed only
/// when next requested.
///
/// A cache must only be used with the matrix whose mutations it observes.
pub struct SimilarityCache {
    mode: Mode,
    entries: Mutex<LruCache<(u32, u32), Arc<CachedNeighbors>>>,
    epoch: AtomicU64,
    computations: AtomicU64,
}

impl SimilarityCache {
    pub fn new(mode: Mode) -> Self {
        SimilarityCache {
            mode,
            entries: Mutex::new(LruCache::unbounded()),
            epoch: AtomicU64::new(0),
            computations: AtomicU64::new(0),
        }
    }

    /// A cache holding at most `capacity` anchors, evicting least recently used.
    pub fn bounded(mode: Mode, capacity: NonZeroUsize) -> Self {
        SimilarityCache {
            mode,
            entries: Mutex::new(LruCache::new(capacity)),
            epoch: AtomicU64::new(0),
            computations: AtomicU64::new(0),
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn current_epoch(&self) -> u64 {
        self.epoch.load(Ordering::Acquire)
    }

    /// Number of anchor recomputations performed so far.
    pub fn computations(&self) -> u64 {
        self.computations.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.lock().is_empty()
    }

    /// Marks every cached entry stale after a mutation of the matrix.
    ///
    /// Any rating change moves its user's mean, which shifts that user's
    /// similarity to everyone, so the invalidation is coarse.
    pub fn invalidate(&self, _touched_user: UserId, _touched_profile: ProfileId) {
        self.epoch.fetch_add(1, Ordering::AcqRel);
    }

    pub fn clear(&self) {
        self.entries.lock().clear();
    }

    /// Full ranking for the anchor at dense index `anchor`, refreshed if
    /// stale.
    pub fn full(&self, m: &RatingsMatrix, anchor: u32, min_overlap: u32) -> Arc<CachedNeighbors> {
        let epoch = self.current_epoch();
        let key = (anchor, min_overlap);
        if let Some(hit) = self.entries.lock().get(&key) {
            if hit.epoch == epoch {
                return Arc::clone(hit);
            }
        }
        let fresh = Arc::new(self.compute(m, anchor, min_overlap, epoch));
        self.computations.fetch_add(1, Ordering::Relaxed);
        self.entries.lock().put(key, Arc::clone(&fresh));
        fresh
    }

    fn compute(&self, m: &RatingsMatrix, anchor: u32, min_overlap: u32, epoch: u64) -> CachedNeighbors {
        let mut ranked = Vec::new();
        match self.mode {
            Mode::UserUser => {
                let acc = UserAnchor::build(m, anchor);
                for &u in acc.candidates() {
                    if let Some((weight, overlap)) = acc.weight(m, u) {
                        if overlap >= min_overlap {
                            ranked.push(Ranked {
                                ix: u,
                                id: m.user_id(u).0,
                                weight,
                                overlap,
                            });
                        }
                    }
                }
            }
            Mode::ItemItem => {
                let acc = ProfileAnchor::build(m, anchor);
                for &l in acc.candidates() {
                    if let Some((weight, overlap)) = acc.weight(l) {
                        if overlap >= min_overlap {
                            ranked.push(Ranked {
                                ix: l,
                                id: m.profile_id(l).0,
                                weight,
                                overlap,
                            });
                        }
                    }
                }
            }
        }
        ranked.sort_unstable_by(rank_order);
        let position = ranked
            .iter()
            .enumerate()
            .map(|(pos, r)| (r.ix, pos as u32))
            .collect();
        CachedNeighbors {
            epoch,
            ranked,
            position,
        }
    }

    /// Ranked neighbors of an external anchor id passing `filter`, at most
    /// MaxN of them.
    pub fn neighbor_set(
        &self,
        m: &RatingsMatrix,
        anchor: u32,
        params: &SimilarityParams,
        filter: impl Fn(u32) -> bool,
    ) -> Result<NeighborSet, SimilarityError> {
        let ix = match self.mode {
            Mode::UserUser => m.user_index(UserId(anchor)),
            Mode::ItemItem => m.profile_index(ProfileId(anchor)),
        }
        .ok_or(SimilarityError::UnknownAnchor(anchor))?;
        let full = self.full(m, ix, params.min_overlap);
        let neighbors = full
            .ranked()
            .iter()
            .filter(|r| params.admits(r.weight, r.overlap) && filter(r.id))
            .take(params.max_neighbors as usize)
            .map(|r| Neighbor {
                id: r.id,
                weight: r.weight,
                overlap: r.overlap,
            })
            .collect();
        Ok(NeighborSet { anchor, neighbors })
    }
}
