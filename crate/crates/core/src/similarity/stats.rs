//! Co-rating sufficient statistics.
//!
//! Similarities are computed from integer accumulators so that any route to
//! the same visible data (pairwise merge, anchor accumulation, incremental
//! add/remove) yields bit-identical weights. That keeps neighbor ranking
//! deterministic when weights tie and lets cached and uncached paths agree
//! exactly.

use crate::ratings::{ProfileIx, RatingSource, Totals, UserIx};

/// Statistics over the profiles rated by both an anchor user and a candidate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct UserPairStats {
    pub n: u32,
    sa: i64,
    saa: i64,
    su: i64,
    suu: i64,
    sau: i64,
}

impl UserPairStats {
    #[inline]
    pub fn push(&mut self, va: i32, vu: i32) {
        let (va, vu) = (va as i64, vu as i64);
        self.n += 1;
        self.sa += va;
        self.saa += va * va;
        self.su += vu;
        self.suu += vu * vu;
        self.sau += va * vu;
    }

    #[inline]
    pub fn pop(&mut self, va: i32, vu: i32) {
        let (va, vu) = (va as i64, vu as i64);
        self.n -= 1;
        self.sa -= va;
        self.saa -= va * va;
        self.su -= vu;
        self.suu -= vu * vu;
        self.sau -= va * vu;
    }

    /// Pearson correlation with each side centered by its mean over all of
    /// its visible ratings (`anchor`, `cand`). Scaling each deviation by the
    /// user's rating count keeps every intermediate an exact integer.
    pub fn weight(&self, anchor: Totals, cand: Totals) -> Option<f64> {
        if self.n == 0 || anchor.count == 0 || cand.count == 0 {
            return None;
        }
        let n = self.n as i128;
        let (a, b) = (anchor.count as i128, anchor.sum as i128);
        let (c, d) = (cand.count as i128, cand.sum as i128);
        let (sa, saa, su, suu, sau) = (
            self.sa as i128,
            self.saa as i128,
            self.su as i128,
            self.suu as i128,
            self.sau as i128,
        );
        // sum (a*ra - b)(c*ru - d), sum (a*ra - b)^2, sum (c*ru - d)^2
        let num = a * c * sau - a * d * sa - b * c * su + n * b * d;
        let den_a = a * a * saa - 2 * a * b * sa + n * b * b;
        let den_u = c * c * suu - 2 * c * d * su + n * d * d;
        if den_a == 0 || den_u == 0 {
            return None;
        }
        Some(snap(num as f64 / ((den_a as f64).sqrt() * (den_u as f64).sqrt())))
    }
}

/// Weight resolution, about 9e-13.
const GRID: f64 = (1u64 << 40) as f64;

/// Rounds a weight onto a fixed grid and into [-1, 1]. The last float
/// steps can leave mathematically equal weights a few ulps apart; on the
/// grid they compare equal and fall through to the id tie-break.
#[inline]
fn snap(w: f64) -> f64 {
    ((w * GRID).round() / GRID).clamp(-1.0, 1.0)
}

const FIXED_SHIFT: u32 = 64;

/// `num / den` in 64.64 fixed point, rounded half up. `den > 0`.
#[inline]
fn fixed(num: i128, den: i128) -> i128 {
    ((num << (FIXED_SHIFT + 1)) + den).div_euclid(2 * den)
}

/// Statistics over the users who rated both an anchor profile and a
/// candidate, each term centered by that user's mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct ItemPairStats {
    pub n: u32,
    sxy: i128,
    sxx: i128,
    syy: i128,
}

/// One co-rater's contribution, in fixed point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ItemTerm {
    xy: i128,
    xx: i128,
    yy: i128,
}

impl ItemTerm {
    /// Term for a rater with `totals` who gave `rj` to the anchor and `rl`
    /// to the candidate.
    #[inline]
    pub fn new(totals: Totals, rj: i32, rl: i32) -> ItemTerm {
        let c = totals.count as i128;
        let d = totals.sum as i128;
        let x = c * rj as i128 - d;
        let y = c * rl as i128 - d;
        let cc = c * c;
        ItemTerm {
            xy: fixed(x * y, cc),
            xx: fixed(x * x, cc),
            yy: fixed(y * y, cc),
        }
    }
}

impl ItemPairStats {
    #[inline]
    pub fn push(&mut self, t: ItemTerm) {
        self.n += 1;
        self.sxy += t.xy;
        self.sxx += t.xx;
        self.syy += t.yy;
    }

    #[inline]
    pub fn pop(&mut self, t: ItemTerm) {
        self.n -= 1;
        self.sxy -= t.xy;
        self.sxx -= t.xx;
        self.syy -= t.yy;
    }

    pub fn weight(&self) -> Option<f64> {
        if self.n == 0 || self.sxx == 0 || self.syy == 0 {
            return None;
        }
        Some(snap(self.sxy as f64 / ((self.sxx as f64).sqrt() * (self.syy as f64).sqrt())))
    }
}

/// Pairwise user statistics by merging two visible rows.
pub(crate) fn user_pair<S: RatingSource>(src: &S, a: UserIx, b: UserIx) -> UserPairStats {
    let mut stats = UserPairStats::default();
    let mut rb = src.user_row(b).peekable();
    for (p, va) in src.user_row(a) {
        while let Some(&(q, _)) = rb.peek() {
            if q < p {
                rb.next();
            } else {
                break;
            }
        }
        if let Some(&(q, vb)) = rb.peek() {
            if q == p {
                stats.push(va, vb);
            }
        }
    }
    stats
}

/// Pairwise item statistics by merging two visible columns.
pub(crate) fn item_pair<S: RatingSource>(src: &S, j: ProfileIx, l: ProfileIx) -> ItemPairStats {
    let mut stats = ItemPairStats::default();
    let mut cl = src.profile_col(l).peekable();
    for (i, rj) in src.profile_col(j) {
        while let Some(&(k, _)) = cl.peek() {
            if k < i {
                cl.next();
            } else {
                break;
            }
        }
        if let Some(&(k, rl)) = cl.peek() {
            if k == i {
                stats.push(ItemTerm::new(src.user_totals(i), rj, rl));
            }
        }
    }
    stats
}

/// Statistics of one anchor user against every co-rating candidate.
///
/// The anchor's visible row can be grown or shrunk one rating at a time,
/// which the evaluation protocols use to hide and reveal cells cheaply.
#[derive(Debug, Clone)]
pub struct UserAnchor {
    anchor: UserIx,
    totals: Totals,
    stats: Vec<UserPairStats>,
    seen: Vec<bool>,
    touched: Vec<UserIx>,
}

impl UserAnchor {
    pub fn empty<S: RatingSource>(src: &S, anchor: UserIx) -> Self {
        let n = src.matrix().num_users();
        UserAnchor {
            anchor,
            totals: Totals::default(),
            stats: vec![UserPairStats::default(); n],
            seen: vec![false; n],
            touched: Vec::new(),
        }
    }

    /// Accumulates the anchor's full visible row.
    pub fn build<S: RatingSource>(src: &S, anchor: UserIx) -> Self {
        let mut out = Self::empty(src, anchor);
        for (p, v) in src.user_row(anchor) {
            out.add(src, p, v);
        }
        out
    }

    pub fn anchor(&self) -> UserIx {
        self.anchor
    }

    /// Totals of the ratings currently accumulated for the anchor.
    pub fn totals(&self) -> Totals {
        self.totals
    }

    pub fn add<S: RatingSource>(&mut self, src: &S, p: ProfileIx, v: i32) {
        self.totals.add(v);
        for (u, vu) in src.profile_col(p) {
            if u == self.anchor {
                continue;
            }
            let ui = u as usize;
            if !self.seen[ui] {
                self.seen[ui] = true;
                self.touched.push(u);
            }
            self.stats[ui].push(v, vu);
        }
    }

    pub fn remove<S: RatingSource>(&mut self, src: &S, p: ProfileIx, v: i32) {
        self.totals = self.totals.without(v);
        for (u, vu) in src.profile_col(p) {
            if u == self.anchor {
                continue;
            }
            self.stats[u as usize].pop(v, vu);
        }
    }

    pub fn overlap(&self, u: UserIx) -> u32 {
        self.stats[u as usize].n
    }

    /// Weight and overlap against candidate `u`; candidate totals come from
    /// `src`.
    pub fn weight<S: RatingSource>(&self, src: &S, u: UserIx) -> Option<(f64, u32)> {
        let s = &self.stats[u as usize];
        s.weight(self.totals, src.user_totals(u)).map(|w| (w, s.n))
    }

    /// Every candidate that ever shared a profile with the anchor.
    pub fn candidates(&self) -> &[UserIx] {
        &self.touched
    }
}

/// Statistics of one anchor profile against every co-rated profile.
#[derive(Debug, Clone)]
pub struct ProfileAnchor {
    anchor: ProfileIx,
    stats: Vec<ItemPairStats>,
    seen: Vec<bool>,
    touched: Vec<ProfileIx>,
}

impl ProfileAnchor {
    pub fn empty<S: RatingSource>(src: &S, anchor: ProfileIx) -> Self {
        let n = src.matrix().num_profiles();
        ProfileAnchor {
            anchor,
            stats: vec![ItemPairStats::default(); n],
            seen: vec![false; n],
            touched: Vec::new(),
        }
    }

    pub fn build<S: RatingSource>(src: &S, anchor: ProfileIx) -> Self {
        let mut out = Self::empty(src, anchor);
        for (i, r) in src.profile_col(anchor) {
            out.add_rater(src, i, r);
        }
        out
    }

    pub fn anchor(&self) -> ProfileIx {
        self.anchor
    }

    /// Adds rater `i`, who gave `rj` to the anchor, against every other
    /// profile in their visible row.
    pub fn add_rater<S: RatingSource>(&mut self, src: &S, i: UserIx, rj: i32) {
        let totals = src.user_totals(i);
        for (l, rl) in src.user_row(i) {
            if l == self.anchor {
                continue;
            }
            let li = l as usize;
            if !self.seen[li] {
                self.seen[li] = true;
                self.touched.push(l);
            }
            self.stats[li].push(ItemTerm::new(totals, rj, rl));
        }
    }

    /// Exact inverse of [`add_rater`](Self::add_rater) given the same source.
    pub fn remove_rater<S: RatingSource>(&mut self, src: &S, i: UserIx, rj: i32) {
        let totals = src.user_totals(i);
        for (l, rl) in src.user_row(i) {
            if l == self.anchor {
                continue;
            }
            self.stats[l as usize].pop(ItemTerm::new(totals, rj, rl));
        }
    }

    pub fn overlap(&self, l: ProfileIx) -> u32 {
        self.stats[l as usize].n
    }

    pub fn weight(&self, l: ProfileIx) -> Option<(f64, u32)> {
        let s = &self.stats[l as usize];
        s.weight().map(|w| (w, s.n))
    }

    pub fn candidates(&self) -> &[ProfileIx] {
        &self.touched
    }
}
