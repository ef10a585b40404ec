//! Rating predictors (Random, Mean, User-User, Item-Item) and top-N lists.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ratings::{
    ProfileId, ProfileIx, RatingScale, RatingSource, RatingsMatrix, UserId, UserIx,
};
use crate::similarity::{
    rank_order, Mode, ProfileAnchor, Ranked, SimilarityCache, SimilarityParams, UserAnchor,
};
use crate::view::HoldOut;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Random,
    Mean,
    UserUser,
    ItemItem,
}

/// A configured algorithm. `params` only matters for the two CF kinds and
/// `seed` only for Random.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AlgorithmSpec {
    pub kind: AlgorithmKind,
    pub params: SimilarityParams,
    pub seed: u64,
}

pub const DEFAULT_RANDOM_SEED: u64 = 0x5eed_c01f;

const BASELINE_PARAMS: SimilarityParams = SimilarityParams {
    min_overlap: 1,
    max_neighbors: 1,
    positive_only: false,
};

impl AlgorithmSpec {
    pub fn random(seed: u64) -> Self {
        AlgorithmSpec {
            kind: AlgorithmKind::Random,
            params: BASELINE_PARAMS,
            seed,
        }
    }

    pub fn mean() -> Self {
        AlgorithmSpec {
            kind: AlgorithmKind::Mean,
            params: BASELINE_PARAMS,
            seed: 0,
        }
    }

    pub fn user_user(params: SimilarityParams) -> Self {
        AlgorithmSpec {
            kind: AlgorithmKind::UserUser,
            params,
            seed: 0,
        }
    }

    pub fn item_item(params: SimilarityParams) -> Self {
        AlgorithmSpec {
            kind: AlgorithmKind::ItemItem,
            params,
            seed: 0,
        }
    }

    pub fn mode(&self) -> Option<Mode> {
        match self.kind {
            AlgorithmKind::UserUser => Some(Mode::UserUser),
            AlgorithmKind::ItemItem => Some(Mode::ItemItem),
            _ => None,
        }
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        match self.kind {
            AlgorithmKind::Random => write!(f, "Random"),
            AlgorithmKind::Mean => write!(f, "Mean"),
            AlgorithmKind::UserUser => write!(f, "User-User ({},{})", p.min_overlap, p.max_neighbors),
            AlgorithmKind::ItemItem => write!(f, "Item-Item ({},{})", p.min_overlap, p.max_neighbors),
        }?;
        if self.mode().is_some() && p.positive_only {
            write!(f, " positive")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unrecognized algorithm {0:?} (expected random[:SEED], mean, user-user:MINO:MAXN, item-item:MINO:MAXN)")]
pub struct ParseAlgorithmError(pub String);

impl FromStr for AlgorithmSpec {
    type Err = ParseAlgorithmError;

    /// Accepts `random`, `random:SEED`, `mean`, `user-user:MINO:MAXN`,
    /// `item-item:MINO:MAXN` (optionally suffixed `:pos`), and the display
    /// form such as `User-User (10,50)`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseAlgorithmError(s.to_string());
        let t = s.trim();
        let lower = t.to_ascii_lowercase();
        if let Some(open) = lower.find('(') {
            // display form
            let name = lower[..open].trim();
            let inner = lower[open + 1..].trim_end_matches(|c: char| c == ')' || c.is_whitespace());
            let (mino, maxn) = inner.split_once(',').ok_or_else(err)?;
            let params = SimilarityParams::new(
                mino.trim().parse().map_err(|_| err())?,
                maxn.trim().parse().map_err(|_| err())?,
            )
            .map_err(|_| err())?;
            let positive = lower[open..].contains("positive");
            return match name {
                "user-user" => Ok(AlgorithmSpec::user_user(params.positive_only(positive))),
                "item-item" => Ok(AlgorithmSpec::item_item(params.positive_only(positive))),
                _ => Err(err()),
            };
        }
        let parts: Vec<&str> = lower.split(':').collect();
        match parts.as_slice() {
            ["random"] => Ok(AlgorithmSpec::random(DEFAULT_RANDOM_SEED)),
            ["random", seed] => Ok(AlgorithmSpec::random(seed.parse().map_err(|_| err())?)),
            ["mean"] => Ok(AlgorithmSpec::mean()),
            [kind, mino, maxn, rest @ ..] => {
                let positive = match rest {
                    [] => false,
                    ["pos"] => true,
                    _ => return Err(err()),
                };
                let params = SimilarityParams::new(
                    mino.parse().map_err(|_| err())?,
                    maxn.parse().map_err(|_| err())?,
                )
                .map_err(|_| err())?
                .positive_only(positive);
                match *kind {
                    "user-user" | "uu" => Ok(AlgorithmSpec::user_user(params)),
                    "item-item" | "ii" => Ok(AlgorithmSpec::item_item(params)),
                    _ => Err(err()),
                }
            }
            _ => Err(err()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SkipReason {
    NoData,
    NoNeighbors,
    UnknownEntity,
}

/// A predicted rating or an explicit refusal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    Value(f64),
    Skipped(SkipReason),
}

impl Prediction {
    pub fn value(&self) -> Option<f64> {
        match self {
            Prediction::Value(v) => Some(*v),
            Prediction::Skipped(_) => None,
        }
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self, Prediction::Skipped(_))
    }

    /// Clamps a raw estimate onto the scale.
    pub fn from_estimate(est: Estimate, scale: RatingScale) -> Self {
        match est {
            Ok(v) => Prediction::Value(scale.clamp(v)),
            Err(r) => Prediction::Skipped(r),
        }
    }
}

/// An unclamped prediction.
pub type Estimate = Result<f64, SkipReason>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PredictError {
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("list length must be at least 1")]
    EmptyList,
}

/// One similarity cache per CF mode.
pub struct Caches {
    pub user_user: SimilarityCache,
    pub item_item: SimilarityCache,
}

impl Caches {
    pub fn new() -> Self {
        Caches {
            user_user: SimilarityCache::new(Mode::UserUser),
            item_item: SimilarityCache::new(Mode::ItemItem),
        }
    }

    pub fn get(&self, mode: Mode) -> &SimilarityCache {
        match mode {
            Mode::UserUser => &self.user_user,
            Mode::ItemItem => &self.item_item,
        }
    }

    pub fn invalidate(&self, user: UserId, profile: ProfileId) {
        self.user_user.invalidate(user, profile);
        self.item_item.invalidate(user, profile);
    }
}

impl Default for Caches {
    fn default() -> Self {
        Self::new()
    }
}

#[inline]
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The same uniformly random integer rating for every call with the same
/// (seed, user, profile). Never skipped.
pub fn predict_random(spec: &AlgorithmSpec, scale: RatingScale, a: UserId, j: ProfileId) -> Prediction {
    Prediction::Value(random_value(spec.seed, scale, a, j))
}

pub(crate) fn random_value(seed: u64, scale: RatingScale, a: UserId, j: ProfileId) -> f64 {
    let key = ((a.0 as u64) << 32) | j.0 as u64;
    let h = mix64(mix64(seed.wrapping_add(0x9e37_79b9_7f4a_7c15)) ^ mix64(key));
    (scale.min() as i64 + (h % scale.levels() as u64) as i64) as f64
}

/// Mean of the profile's other ratings.
pub fn predict_mean(m: &RatingsMatrix, a: UserId, j: ProfileId) -> Prediction {
    let est = match (m.user_index(a), m.profile_index(j)) {
        (_, None) => Err(SkipReason::NoData),
        (Some(u), Some(p)) => mean_estimate(&HoldOut::cell(m, u, p), p),
        (None, Some(p)) => mean_estimate(m, p),
    };
    Prediction::from_estimate(est, m.scale())
}

pub(crate) fn mean_estimate<S: RatingSource>(src: &S, j: ProfileIx) -> Estimate {
    src.profile_totals(j).mean().ok_or(SkipReason::NoData)
}

fn pick_top<T>(cands: &mut Vec<(Ranked, T)>, limit: usize) {
    let ord = |x: &(Ranked, T), y: &(Ranked, T)| rank_order(&x.0, &y.0);
    if cands.len() > limit {
        cands.select_nth_unstable_by(limit, ord);
        cands.truncate(limit);
    }
    cands.sort_unstable_by(ord);
}

/// Mean-anchored weighted deviation sum over ranked neighbors.
fn combine(base: f64, terms: impl Iterator<Item = (f64, f64)>) -> Estimate {
    let (mut num, mut norm) = (0.0, 0.0);
    for (w, dev) in terms {
        num += w * dev;
        norm += w.abs();
    }
    if norm == 0.0 {
        return Err(SkipReason::NoNeighbors);
    }
    Ok(base + num / norm)
}

/// User-User estimate for dense indices with a pluggable weight lookup.
pub(crate) fn user_user_estimate<S, W>(
    src: &S,
    a: UserIx,
    j: ProfileIx,
    params: &SimilarityParams,
    weight_of: W,
) -> Estimate
where
    S: RatingSource,
    W: Fn(UserIx) -> Option<(f64, u32)>,
{
    let m = src.matrix();
    let mean_a = src.user_totals(a).mean().ok_or(SkipReason::UnknownEntity)?;
    let mut cands: Vec<(Ranked, i32)> = Vec::new();
    for (u, r) in src.profile_col(j) {
        if u == a {
            continue;
        }
        if let Some((weight, overlap)) = weight_of(u) {
            if params.admits(weight, overlap) {
                let id = m.user_id(u).0;
                cands.push((Ranked { ix: u, id, weight, overlap }, r));
            }
        }
    }
    if cands.is_empty() {
        return Err(SkipReason::NoNeighbors);
    }
    pick_top(&mut cands, params.max_neighbors as usize);
    combine(
        mean_a,
        cands.iter().map(|(n, r)| {
            let mean_n = src.user_totals(n.ix).mean().expect("neighbor has ratings");
            (n.weight, *r as f64 - mean_n)
        }),
    )
}

/// Item-Item estimate for dense indices with a pluggable weight lookup.
pub(crate) fn item_item_estimate<S, W>(
    src: &S,
    a: UserIx,
    j: ProfileIx,
    params: &SimilarityParams,
    weight_of: W,
) -> Estimate
where
    S: RatingSource,
    W: Fn(ProfileIx) -> Option<(f64, u32)>,
{
    let m = src.matrix();
    let mean_j = src.profile_totals(j).mean().ok_or(SkipReason::NoData)?;
    let mut cands: Vec<(Ranked, i32)> = Vec::new();
    for (l, r) in src.user_row(a) {
        if l == j {
            continue;
        }
        if let Some((weight, overlap)) = weight_of(l) {
            if params.admits(weight, overlap) {
                let id = m.profile_id(l).0;
                cands.push((Ranked { ix: l, id, weight, overlap }, r));
            }
        }
    }
    if cands.is_empty() {
        return Err(SkipReason::NoNeighbors);
    }
    pick_top(&mut cands, params.max_neighbors as usize);
    combine(
        mean_j,
        cands.iter().map(|(n, r)| {
            let mean_l = src.profile_totals(n.ix).mean().expect("neighbor has ratings");
            (n.weight, *r as f64 - mean_l)
        }),
    )
}

/// Unclamped estimate on any source, computing similarities from scratch.
///
/// No cell is hidden here: the caller decides what the source shows.
pub fn estimate<S: RatingSource>(src: &S, spec: &AlgorithmSpec, a: UserId, j: ProfileId) -> Estimate {
    let m = src.matrix();
    let (u, p) = (m.user_index(a), m.profile_index(j));
    match spec.kind {
        AlgorithmKind::Random => Ok(random_value(spec.seed, m.scale(), a, j)),
        AlgorithmKind::Mean => p.map_or(Err(SkipReason::NoData), |p| mean_estimate(src, p)),
        AlgorithmKind::UserUser => {
            let u = u.ok_or(SkipReason::UnknownEntity)?;
            let p = p.ok_or(SkipReason::NoNeighbors)?;
            let acc = UserAnchor::build(src, u);
            user_user_estimate(src, u, p, &spec.params, |c| acc.weight(src, c))
        }
        AlgorithmKind::ItemItem => {
            let p = p.ok_or(SkipReason::NoData)?;
            let Some(u) = u else {
                return mean_estimate(src, p).and(Err(SkipReason::NoNeighbors));
            };
            let acc = ProfileAnchor::build(src, p);
            item_item_estimate(src, u, p, &spec.params, |l| acc.weight(l))
        }
    }
}

/// Estimate against the live matrix using the similarity caches. The caller
/// guarantees the target cell is not stored.
fn cached_estimate(
    m: &RatingsMatrix,
    caches: &Caches,
    spec: &AlgorithmSpec,
    u: Option<UserIx>,
    p: Option<ProfileIx>,
    a: UserId,
    j: ProfileId,
) -> Estimate {
    match spec.kind {
        AlgorithmKind::Random => Ok(random_value(spec.seed, m.scale(), a, j)),
        AlgorithmKind::Mean => p.map_or(Err(SkipReason::NoData), |p| mean_estimate(m, p)),
        AlgorithmKind::UserUser => {
            let u = u.ok_or(SkipReason::UnknownEntity)?;
            let p = p.ok_or(SkipReason::NoNeighbors)?;
            let full = caches.user_user.full(m, u, spec.params.min_overlap);
            user_user_estimate(m, u, p, &spec.params, |c| full.get(c))
        }
        AlgorithmKind::ItemItem => {
            let p = p.ok_or(SkipReason::NoData)?;
            let Some(u) = u else {
                return mean_estimate(m, p).and(Err(SkipReason::NoNeighbors));
            };
            let full = caches.item_item.full(m, p, spec.params.min_overlap);
            item_item_estimate(m, u, p, &spec.params, |l| full.get(l))
        }
    }
}

/// Unclamped estimate for `(a, j)` with any stored rating of that cell
/// hidden. Uses the caches when given and the cell is absent.
pub fn estimate_excluding(
    m: &RatingsMatrix,
    caches: Option<&Caches>,
    spec: &AlgorithmSpec,
    a: UserId,
    j: ProfileId,
) -> Estimate {
    let (u, p) = (m.user_index(a), m.profile_index(j));
    if let (Some(ui), Some(pi)) = (u, p) {
        if m.cell(ui, pi).is_some() {
            return estimate(&HoldOut::cell(m, ui, pi), spec, a, j);
        }
    }
    match caches {
        Some(c) => cached_estimate(m, c, spec, u, p, a, j),
        None => estimate(m, spec, a, j),
    }
}

/// Prediction for `(a, j)`, excluding the target rating if it is stored.
pub fn predict(
    m: &RatingsMatrix,
    caches: Option<&Caches>,
    spec: &AlgorithmSpec,
    a: UserId,
    j: ProfileId,
) -> Prediction {
    Prediction::from_estimate(estimate_excluding(m, caches, spec, a, j), m.scale())
}

pub fn predict_user_user(
    m: &RatingsMatrix,
    cache: Option<&SimilarityCache>,
    spec: &AlgorithmSpec,
    a: UserId,
    j: ProfileId,
) -> Prediction {
    debug_assert_eq!(spec.kind, AlgorithmKind::UserUser);
    let est = match (cache, m.user_index(a), m.profile_index(j)) {
        (Some(cache), Some(u), Some(p)) if m.cell(u, p).is_none() => {
            let full = cache.full(m, u, spec.params.min_overlap);
            user_user_estimate(m, u, p, &spec.params, |c| full.get(c))
        }
        _ => estimate_excluding(m, None, spec, a, j),
    };
    Prediction::from_estimate(est, m.scale())
}

pub fn predict_item_item(
    m: &RatingsMatrix,
    cache: Option<&SimilarityCache>,
    spec: &AlgorithmSpec,
    a: UserId,
    j: ProfileId,
) -> Prediction {
    debug_assert_eq!(spec.kind, AlgorithmKind::ItemItem);
    let est = match (cache, m.user_index(a), m.profile_index(j)) {
        (Some(cache), Some(u), Some(p)) if m.cell(u, p).is_none() => {
            let full = cache.full(m, p, spec.params.min_overlap);
            item_item_estimate(m, u, p, &spec.params, |l| full.get(l))
        }
        _ => estimate_excluding(m, None, spec, a, j),
    };
    Prediction::from_estimate(est, m.scale())
}

/// Top-N unrated profiles for a user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationList {
    pub for_user: UserId,
    pub entries: Vec<(ProfileId, f64)>,
}

impl RecommendationList {
    pub fn profiles(&self) -> impl Iterator<Item = ProfileId> + '_ {
        self.entries.iter().map(|e| e.0)
    }
}

/// Scores every profile the user has not rated and that passes `filter`,
/// drops skipped predictions and keeps the `n` best by score descending,
/// profile id ascending.
pub fn recommend_top_n(
    m: &RatingsMatrix,
    caches: Option<&Caches>,
    spec: &AlgorithmSpec,
    a: UserId,
    n: usize,
    filter: impl Fn(ProfileId) -> bool,
) -> Result<RecommendationList, PredictError> {
    if n == 0 {
        return Err(PredictError::EmptyList);
    }
    let u = m.user_index(a).ok_or(PredictError::UnknownUser(a))?;
    let candidates = (0..m.num_profiles() as ProfileIx)
        .filter(|&p| m.cell(u, p).is_none() && filter(m.profile_id(p)));
    let params = &spec.params;
    let scored: Vec<(ProfileId, f64)> = match spec.kind {
        AlgorithmKind::Random | AlgorithmKind::Mean => candidates
            .filter_map(|p| {
                let j = m.profile_id(p);
                let est = if spec.kind == AlgorithmKind::Random {
                    Ok(random_value(spec.seed, m.scale(), a, j))
                } else {
                    mean_estimate(m, p)
                };
                est.ok().map(|v| (j, m.scale().clamp(v)))
            })
            .collect(),
        AlgorithmKind::UserUser => {
            let cached = caches.map(|c| c.user_user.full(m, u, params.min_overlap));
            let anchor = cached.is_none().then(|| UserAnchor::build(m, u));
            let weight = |c: UserIx| match (&cached, &anchor) {
                (Some(full), _) => full.get(c),
                (None, Some(acc)) => acc.weight(m, c),
                (None, None) => unreachable!(),
            };
            candidates
                .filter_map(|p| {
                    user_user_estimate(m, u, p, params, weight)
                        .ok()
                        .map(|v| (m.profile_id(p), m.scale().clamp(v)))
                })
                .collect()
        }
        AlgorithmKind::ItemItem => candidates
            .filter_map(|p| {
                let est = match caches {
                    Some(c) => {
                        let full = c.item_item.full(m, p, params.min_overlap);
                        item_item_estimate(m, u, p, params, |l| full.get(l))
                    }
                    None => {
                        let acc = ProfileAnchor::build(m, p);
                        item_item_estimate(m, u, p, params, |l| acc.weight(l))
                    }
                };
                est.ok().map(|v| (m.profile_id(p), m.scale().clamp(v)))
            })
            .collect(),
    };
    let mut entries = scored;
    entries.sort_unstable_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    entries.truncate(n);
    Ok(RecommendationList { for_user: a, entries })
}
