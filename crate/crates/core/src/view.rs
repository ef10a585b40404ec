//! Read views that hide part of one user's row from a matrix.
//!
//! Evaluation protocols never mutate the matrix to hide test data. They wrap
//! it in a [`HoldOut`] view instead, which filters rows and columns and
//! adjusts the integer totals so means stay exact. [`Audited`] wraps any
//! source and counts every time a designated target cell is observed.

use std::sync::atomic::{AtomicUsize, Ordering};

use crate::ratings::{ProfileIx, RatingSource, RatingsMatrix, Totals, UserIx};

#[derive(Debug, Clone)]
enum Hidden {
    /// One cell of the user's row is invisible.
    Cell(ProfileIx),
    /// Only these profiles (sorted) of the user's row remain visible.
    KeepOnly(Vec<ProfileIx>),
}

/// A matrix with some of one user's ratings hidden.
#[derive(Debug, Clone)]
pub struct HoldOut<'m> {
    base: &'m RatingsMatrix,
    user: UserIx,
    hidden: Hidden,
    user_totals: Totals,
}

impl<'m> HoldOut<'m> {
    /// Hides the single cell `(user, profile)`; a no-op if it is not stored.
    pub fn cell(base: &'m RatingsMatrix, user: UserIx, profile: ProfileIx) -> Self {
        let mut user_totals = base.row_totals(user);
        if let Some(v) = base.cell(user, profile) {
            user_totals = user_totals.without(v);
        }
        HoldOut {
            base,
            user,
            hidden: Hidden::Cell(profile),
            user_totals,
        }
    }

    /// Keeps only `visible` of the user's ratings. Profiles the user never
    /// rated are ignored.
    pub fn keep_only(base: &'m RatingsMatrix, user: UserIx, visible: &[ProfileIx]) -> Self {
        let mut keep: Vec<ProfileIx> = visible
            .iter()
            .copied()
            .filter(|&p| base.cell(user, p).is_some())
            .collect();
        keep.sort_unstable();
        keep.dedup();
        let mut user_totals = Totals::default();
        for &p in &keep {
            user_totals.add(base.cell(user, p).unwrap());
        }
        HoldOut {
            base,
            user,
            hidden: Hidden::KeepOnly(keep),
            user_totals,
        }
    }

    pub fn base(&self) -> &'m RatingsMatrix {
        self.base
    }

    pub fn user(&self) -> UserIx {
        self.user
    }

    /// Whether the active user's rating of `p` (if any) is hidden.
    pub fn is_hidden(&self, p: ProfileIx) -> bool {
        match &self.hidden {
            Hidden::Cell(c) => *c == p,
            Hidden::KeepOnly(keep) => keep.binary_search(&p).is_err(),
        }
    }
}

impl RatingSource for HoldOut<'_> {
    fn matrix(&self) -> &RatingsMatrix {
        self.base
    }

    fn user_row(&self, u: UserIx) -> impl Iterator<Item = (ProfileIx, i32)> + '_ {
        let mask = u == self.user;
        self.base
            .row(u)
            .iter()
            .copied()
            .filter(move |&(p, _)| !(mask && self.is_hidden(p)))
    }

    fn profile_col(&self, p: ProfileIx) -> impl Iterator<Item = (UserIx, i32)> + '_ {
        let mask = self.is_hidden(p);
        let user = self.user;
        self.base
            .col(p)
            .iter()
            .copied()
            .filter(move |&(u, _)| !(mask && u == user))
    }

    fn user_totals(&self, u: UserIx) -> Totals {
        if u == self.user {
            self.user_totals
        } else {
            self.base.row_totals(u)
        }
    }

    fn profile_totals(&self, p: ProfileIx) -> Totals {
        let t = self.base.col_totals(p);
        if self.is_hidden(p) {
            if let Some(v) = self.base.cell(self.user, p) {
                return t.without(v);
            }
        }
        t
    }

    fn rating(&self, u: UserIx, p: ProfileIx) -> Option<i32> {
        if u == self.user && self.is_hidden(p) {
            None
        } else {
            self.base.cell(u, p)
        }
    }
}

/// Counts observations of a target cell through any access path.
///
/// Totals are recomputed from the wrapped source's own iterators and any
/// disagreement with its reported totals is counted as well, so a view that
/// leaks the target only through a mean is caught too.
pub struct Audited<'s, S> {
    inner: &'s S,
    target: (UserIx, ProfileIx),
    leaks: AtomicUsize,
}

impl<'s, S: RatingSource> Audited<'s, S> {
    pub fn new(inner: &'s S, user: UserIx, profile: ProfileIx) -> Self {
        Audited {
            inner,
            target: (user, profile),
            leaks: AtomicUsize::new(0),
        }
    }

    pub fn leaks(&self) -> usize {
        self.leaks.load(Ordering::Relaxed)
    }

    fn flag(&self) {
        self.leaks.fetch_add(1, Ordering::Relaxed);
    }
}

impl<S: RatingSource> RatingSource for Audited<'_, S> {
    fn matrix(&self) -> &RatingsMatrix {
        self.inner.matrix()
    }

    fn user_row(&self, u: UserIx) -> impl Iterator<Item = (ProfileIx, i32)> + '_ {
        let (tu, tp) = self.target;
        self.inner.user_row(u).inspect(move |&(p, _)| {
            if u == tu && p == tp {
                self.flag();
            }
        })
    }

    fn profile_col(&self, p: ProfileIx) -> impl Iterator<Item = (UserIx, i32)> + '_ {
        let (tu, tp) = self.target;
        self.inner.profile_col(p).inspect(move |&(u, _)| {
            if u == tu && p == tp {
                self.flag();
            }
        })
    }

    fn user_totals(&self, u: UserIx) -> Totals {
        let reported = self.inner.user_totals(u);
        let mut scanned = Totals::default();
        for (_, v) in self.user_row(u) {
            scanned.add(v);
        }
        if scanned != reported {
            self.flag();
        }
        reported
    }

    fn profile_totals(&self, p: ProfileIx) -> Totals {
        let reported = self.inner.profile_totals(p);
        let mut scanned = Totals::default();
        for (_, v) in self.profile_col(p) {
            scanned.add(v);
        }
        if scanned != reported {
            self.flag();
        }
        reported
    }

    fn rating(&self, u: UserIx, p: ProfileIx) -> Option<i32> {
        let r = self.inner.rating(u, p);
        if (u, p) == self.target && r.is_some() {
            self.flag();
        }
        r
    }
}
