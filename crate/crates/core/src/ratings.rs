//! Sparse rating storage addressable by rows (users) and columns (profiles).
//!
//! Ids coming from the outside world are mapped to dense indices on first
//! sight. Rows are kept sorted by profile index and columns by user index so
//! that both can be merged and binary searched. Per-row and per-column
//! integer totals are maintained on every mutation, which makes means exact
//! and cheap to adjust when a view hides some cells.

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A rater.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserId(pub u32);

/// A rated entity. In dating data a profile id is the owner's user id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProfileId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ProfileId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Dense row index of a user inside one [`RatingsMatrix`].
pub type UserIx = u32;
/// Dense column index of a profile inside one [`RatingsMatrix`].
pub type ProfileIx = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RatingError {
    #[error("invalid rating scale {min}..{max}: minimum must be below maximum")]
    InvalidScale { min: i32, max: i32 },
    #[error("rating value {value} outside scale {min}..{max}")]
    OutOfScale { value: i32, min: i32, max: i32 },
}

/// Inclusive integer rating range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingScale {
    min: i32,
    max: i32,
}

impl RatingScale {
    /// The 1..10 scale used by the Libimseti data.
    pub const DEFAULT: RatingScale = RatingScale { min: 1, max: 10 };

    pub fn new(min: i32, max: i32) -> Result<Self, RatingError> {
        if min >= max {
            return Err(RatingError::InvalidScale { min, max });
        }
        Ok(RatingScale { min, max })
    }

    pub fn min(&self) -> i32 {
        self.min
    }

    pub fn max(&self) -> i32 {
        self.max
    }

    /// `r_max - r_min`.
    pub fn width(&self) -> f64 {
        (self.max - self.min) as f64
    }

    pub fn contains(&self, value: i32) -> bool {
        (self.min..=self.max).contains(&value)
    }

    pub fn check(&self, value: i32) -> Result<(), RatingError> {
        if self.contains(value) {
            Ok(())
        } else {
            Err(RatingError::OutOfScale {
                value,
                min: self.min,
                max: self.max,
            })
        }
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min as f64, self.max as f64)
    }

    /// Maps a value onto 0..1.
    pub fn normalize(&self, value: f64) -> f64 {
        (value - self.min as f64) / self.width()
    }

    /// Number of distinct integer values in the scale.
    pub fn levels(&self) -> u32 {
        (self.max - self.min + 1) as u32
    }
}

impl Default for RatingScale {
    fn default() -> Self {
        RatingScale::DEFAULT
    }
}

impl fmt::Display for RatingScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.min, self.max)
    }
}

impl std::str::FromStr for RatingScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lo, hi) = s
            .split_once("..")
            .ok_or_else(|| format!("expected MIN..MAX, got {s:?}"))?;
        let lo = lo.trim().parse::<i32>().map_err(|e| e.to_string())?;
        let hi = hi.trim().parse::<i32>().map_err(|e| e.to_string())?;
        RatingScale::new(lo, hi).map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rating {
    pub user: UserId,
    pub profile: ProfileId,
    pub value: i32,
}

impl Rating {
    pub fn new(user: u32, profile: u32, value: i32) -> Self {
        Rating {
            user: UserId(user),
            profile: ProfileId(profile),
            value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Gender {
    #[serde(rename = "M")]
    Male,
    #[serde(rename = "F")]
    Female,
    #[default]
    #[serde(rename = "U")]
    Unknown,
}

impl Gender {
    pub fn parse(s: &str) -> Option<Gender> {
        match s.trim() {
            "M" | "m" => Some(Gender::Male),
            "F" | "f" => Some(Gender::Female),
            "U" | "u" => Some(Gender::Unknown),
            _ => None,
        }
    }

    pub fn code(&self) -> char {
        match self {
            Gender::Male => 'M',
            Gender::Female => 'F',
            Gender::Unknown => 'U',
        }
    }

    pub fn opposite(&self) -> Option<Gender> {
        match self {
            Gender::Male => Some(Gender::Female),
            Gender::Female => Some(Gender::Male),
            Gender::Unknown => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserAttributes {
    pub user: UserId,
    pub gender: Gender,
}

/// Per-user attribute records. Users without a record are [`Gender::Unknown`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Attributes {
    genders: HashMap<UserId, Gender>,
}

impl Attributes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, user: UserId, gender: Gender) {
        self.genders.insert(user, gender);
    }

    pub fn gender(&self, user: UserId) -> Gender {
        self.genders.get(&user).copied().unwrap_or_default()
    }

    pub fn get(&self, user: UserId) -> UserAttributes {
        UserAttributes {
            user,
            gender: self.gender(user),
        }
    }

    pub fn contains(&self, user: UserId) -> bool {
        self.genders.contains_key(&user)
    }

    pub fn len(&self) -> usize {
        self.genders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genders.is_empty()
    }

    /// Records sorted by user id.
    pub fn records(&self) -> Vec<UserAttributes> {
        let mut out: Vec<_> = self
            .genders
            .iter()
            .map(|(&user, &gender)| UserAttributes { user, gender })
            .collect();
        out.sort_by_key(|r| r.user);
        out
    }

    /// Gender of the owner of a profile.
    pub fn profile_gender(&self, profile: ProfileId) -> Gender {
        self.gender(UserId(profile.0))
    }
}

/// Count and integer sum of a set of ratings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Totals {
    pub count: u32,
    pub sum: i64,
}

impl Totals {
    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum as f64 / self.count as f64)
    }

    pub fn add(&mut self, value: i32) {
        self.count += 1;
        self.sum += value as i64;
    }

    pub fn without(&self, value: i32) -> Totals {
        Totals {
            count: self.count - 1,
            sum: self.sum - value as i64,
        }
    }
}

/// Bidirectional map between external ids and dense indices.
#[derive(Debug, Clone)]
pub struct IdIndex<Id> {
    ids: Vec<Id>,
    lookup: HashMap<Id, u32>,
}

impl<Id> Default for IdIndex<Id> {
    fn default() -> Self {
        IdIndex {
            ids: Vec::new(),
            lookup: HashMap::new(),
        }
    }
}

impl<Id: Copy + Eq + Hash> IdIndex<Id> {
    pub fn get(&self, id: Id) -> Option<u32> {
        self.lookup.get(&id).copied()
    }

    pub fn id(&self, ix: u32) -> Id {
        self.ids[ix as usize]
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[Id] {
        &self.ids
    }

    fn get_or_insert(&mut self, id: Id) -> (u32, bool) {
        if let Some(&ix) = self.lookup.get(&id) {
            return (ix, false);
        }
        let ix = self.ids.len() as u32;
        self.ids.push(id);
        self.lookup.insert(id, ix);
        (ix, true)
    }
}

/// Sparse user x profile rating matrix.
#[derive(Debug, Clone)]
pub struct RatingsMatrix {
    scale: RatingScale,
    users: IdIndex<UserId>,
    profiles: IdIndex<ProfileId>,
    rows: Vec<Vec<(ProfileIx, i32)>>,
    cols: Vec<Vec<(UserIx, i32)>>,
    row_totals: Vec<Totals>,
    col_totals: Vec<Totals>,
    rating_count: usize,
}

impl RatingsMatrix {
    pub fn new(scale: RatingScale) -> Self {
        RatingsMatrix {
            scale,
            users: IdIndex::default(),
            profiles: IdIndex::default(),
            rows: Vec::new(),
            cols: Vec::new(),
            row_totals: Vec::new(),
            col_totals: Vec::new(),
            rating_count: 0,
        }
    }

    /// Builds a matrix from ratings; later duplicates overwrite earlier ones.
    pub fn from_ratings<I>(scale: RatingScale, ratings: I) -> Result<Self, RatingError>
    where
        I: IntoIterator<Item = Rating>,
    {
        let mut m = RatingsMatrix::new(scale);
        for r in ratings {
            m.insert(r)?;
        }
        Ok(m)
    }

    pub fn scale(&self) -> RatingScale {
        self.scale
    }

    pub fn rating_count(&self) -> usize {
        self.rating_count
    }

    pub fn is_empty(&self) -> bool {
        self.rating_count == 0
    }

    pub fn users(&self) -> &IdIndex<UserId> {
        &self.users
    }

    pub fn profiles(&self) -> &IdIndex<ProfileId> {
        &self.profiles
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_profiles(&self) -> usize {
        self.profiles.len()
    }

    pub fn user_index(&self, user: UserId) -> Option<UserIx> {
        self.users.get(user)
    }

    pub fn profile_index(&self, profile: ProfileId) -> Option<ProfileIx> {
        self.profiles.get(profile)
    }

    pub fn user_id(&self, u: UserIx) -> UserId {
        self.users.id(u)
    }

    pub fn profile_id(&self, p: ProfileIx) -> ProfileId {
        self.profiles.id(p)
    }

    /// Inserts or overwrites a rating, returning the value it replaced.
    pub fn insert(&mut self, rating: Rating) -> Result<Option<i32>, RatingError> {
        self.scale.check(rating.value)?;
        let (u, new_user) = self.users.get_or_insert(rating.user);
        if new_user {
            self.rows.push(Vec::new());
            self.row_totals.push(Totals::default());
        }
        let (p, new_profile) = self.profiles.get_or_insert(rating.profile);
        if new_profile {
            self.cols.push(Vec::new());
            self.col_totals.push(Totals::default());
        }
        let value = rating.value;
        let row = &mut self.rows[u as usize];
        match row.binary_search_by_key(&p, |e| e.0) {
            Ok(pos) => {
                let old = std::mem::replace(&mut row[pos].1, value);
                let col = &mut self.cols[p as usize];
                let cpos = col
                    .binary_search_by_key(&u, |e| e.0)
                    .expect("column mirrors row");
                col[cpos].1 = value;
                let delta = (value - old) as i64;
                self.row_totals[u as usize].sum += delta;
                self.col_totals[p as usize].sum += delta;
                Ok(Some(old))
            }
            Err(pos) => {
                row.insert(pos, (p, value));
                let col = &mut self.cols[p as usize];
                let cpos = col
                    .binary_search_by_key(&u, |e| e.0)
                    .expect_err("column mirrors row");
                col.insert(cpos, (u, value));
                self.row_totals[u as usize].add(value);
                self.col_totals[p as usize].add(value);
                self.rating_count += 1;
                Ok(None)
            }
        }
    }

    pub fn get(&self, user: UserId, profile: ProfileId) -> Option<i32> {
        let u = self.user_index(user)?;
        let p = self.profile_index(profile)?;
        self.cell(u, p)
    }

    pub fn cell(&self, u: UserIx, p: ProfileIx) -> Option<i32> {
        let row = &self.rows[u as usize];
        row.binary_search_by_key(&p, |e| e.0).ok().map(|i| row[i].1)
    }

    pub fn row(&self, u: UserIx) -> &[(ProfileIx, i32)] {
        &self.rows[u as usize]
    }

    pub fn col(&self, p: ProfileIx) -> &[(UserIx, i32)] {
        &self.cols[p as usize]
    }

    pub fn row_totals(&self, u: UserIx) -> Totals {
        self.row_totals[u as usize]
    }

    pub fn col_totals(&self, p: ProfileIx) -> Totals {
        self.col_totals[p as usize]
    }

    /// Ratings given by a user, in internal column order.
    pub fn user_ratings(&self, user: UserId) -> impl Iterator<Item = (ProfileId, i32)> + '_ {
        let row: &[(ProfileIx, i32)] = match self.user_index(user) {
            Some(u) => self.row(u),
            None => &[],
        };
        row.iter().map(move |&(p, v)| (self.profile_id(p), v))
    }

    /// Ratings received by a profile, in internal row order.
    pub fn profile_ratings(&self, profile: ProfileId) -> impl Iterator<Item = (UserId, i32)> + '_ {
        let col: &[(UserIx, i32)] = match self.profile_index(profile) {
            Some(p) => self.col(p),
            None => &[],
        };
        col.iter().map(move |&(u, v)| (self.user_id(u), v))
    }

    pub fn user_mean(&self, user: UserId) -> Option<f64> {
        self.user_index(user).and_then(|u| self.row_totals(u).mean())
    }

    pub fn profile_mean(&self, profile: ProfileId) -> Option<f64> {
        self.profile_index(profile)
            .and_then(|p| self.col_totals(p).mean())
    }

    /// Every stored rating, row by row.
    pub fn iter(&self) -> impl Iterator<Item = Rating> + '_ {
        self.rows.iter().enumerate().flat_map(move |(u, row)| {
            let user = self.users.id(u as u32);
            row.iter().map(move |&(p, value)| Rating {
                user,
                profile: self.profiles.id(p),
                value,
            })
        })
    }

    /// Every stored rating, column by column.
    pub fn iter_by_profile(&self) -> impl Iterator<Item = Rating> + '_ {
        self.cols.iter().enumerate().flat_map(move |(p, col)| {
            let profile = self.profiles.id(p as u32);
            col.iter().map(move |&(u, value)| Rating {
                user: self.users.id(u),
                profile,
                value,
            })
        })
    }

    /// Verifies the transpose and totals invariants with a full scan.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut from_rows: Vec<(u32, u32, i32)> = Vec::with_capacity(self.rating_count);
        for (u, row) in self.rows.iter().enumerate() {
            if row.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(format!("row {u} not strictly sorted"));
            }
            let mut t = Totals::default();
            for &(p, v) in row {
                from_rows.push((u as u32, p, v));
                t.add(v);
            }
            if t != self.row_totals[u] {
                return Err(format!("row {u} totals drifted"));
            }
        }
        let mut from_cols: Vec<(u32, u32, i32)> = Vec::with_capacity(self.rating_count);
        for (p, col) in self.cols.iter().enumerate() {
            if col.windows(2).any(|w| w[0].0 >= w[1].0) {
                return Err(format!("column {p} not strictly sorted"));
            }
            let mut t = Totals::default();
            for &(u, v) in col {
                from_cols.push((u, p as u32, v));
                t.add(v);
            }
            if t != self.col_totals[p] {
                return Err(format!("column {p} totals drifted"));
            }
        }
        from_cols.sort_unstable();
        if from_rows.len() != self.rating_count {
            return Err(format!(
                "rating_count {} but {} stored entries",
                self.rating_count,
                from_rows.len()
            ));
        }
        if from_rows != from_cols {
            return Err("rows and columns are not transposes".into());
        }
        Ok(())
    }
}

impl PartialEq for RatingsMatrix {
    /// Content equality, independent of insertion order.
    fn eq(&self, other: &Self) -> bool {
        if self.scale != other.scale || self.rating_count != other.rating_count {
            return false;
        }
        let mut a: Vec<Rating> = self.iter().collect();
        let mut b: Vec<Rating> = other.iter().collect();
        let key = |r: &Rating| (r.user, r.profile);
        a.sort_unstable_by_key(key);
        b.sort_unstable_by_key(key);
        a == b
    }
}

/// Read access to a set of visible ratings over a matrix's index space.
///
/// Implemented by [`RatingsMatrix`] itself and by views that hide cells
/// from it. Predictors and similarity code only read through this trait.
pub trait RatingSource: Sync {
    /// The underlying matrix, for id mapping and the rating scale.
    fn matrix(&self) -> &RatingsMatrix;

    fn user_row(&self, u: UserIx) -> impl Iterator<Item = (ProfileIx, i32)> + '_;

    fn profile_col(&self, p: ProfileIx) -> impl Iterator<Item = (UserIx, i32)> + '_;

    fn user_totals(&self, u: UserIx) -> Totals;

    fn profile_totals(&self, p: ProfileIx) -> Totals;

    fn rating(&self, u: UserIx, p: ProfileIx) -> Option<i32>;

    fn scale(&self) -> RatingScale {
        self.matrix().scale()
    }
}

impl RatingSource for RatingsMatrix {
    fn matrix(&self) -> &RatingsMatrix {
        self
    }

    fn user_row(&self, u: UserIx) -> impl Iterator<Item = (ProfileIx, i32)> + '_ {
        self.row(u).iter().copied()
    }

    fn profile_col(&self, p: ProfileIx) -> impl Iterator<Item = (UserIx, i32)> + '_ {
        self.col(p).iter().copied()
    }

    fn user_totals(&self, u: UserIx) -> Totals {
        self.row_totals(u)
    }

    fn profile_totals(&self, p: ProfileIx) -> Totals {
        self.col_totals(p)
    }

    fn rating(&self, u: UserIx, p: ProfileIx) -> Option<i32> {
        self.cell(u, p)
    }
}
