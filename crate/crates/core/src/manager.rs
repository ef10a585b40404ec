//! The data manager: the one owner of a server's matrix, attributes,
//! similarity caches and algorithm roster.
//!
//! Reads run concurrently under a shared lock and see one consistent epoch.
//! Writes take the lock exclusively, apply the mutation, invalidate the
//! caches and bump the epoch before any reader can observe the new state.

use std::path::Path;

use parking_lot::{Mutex, RwLock, RwLockReadGuard};
use thiserror::Error;

use crate::persist::{self, InsertLog, PersistError};
use crate::predict::{self, AlgorithmSpec, Caches, PredictError, Prediction, RecommendationList};
use crate::ratings::{Attributes, Gender, ProfileId, Rating, RatingError, RatingScale, RatingsMatrix, UserId};
use crate::stats::{compute_stats, DatasetStats};

/// Index of an algorithm in the roster.
pub type AlgorithmId = u16;

#[derive(Debug, Error)]
pub enum ManagerError {
    #[error("unknown algorithm id {0}")]
    UnknownAlgorithm(AlgorithmId),
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("persistence: {0}")]
    Persist(#[from] PersistError),
}

impl From<PredictError> for ManagerError {
    fn from(e: PredictError) -> Self {
        match e {
            PredictError::UnknownUser(u) => ManagerError::UnknownUser(u),
            PredictError::EmptyList => ManagerError::InvalidArgument(e.to_string()),
        }
    }
}

pub struct State {
    pub matrix: RatingsMatrix,
    pub attrs: Attributes,
    /// Number of successful mutations so far.
    pub epoch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predicted {
    pub prediction: Prediction,
    pub epoch: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inserted {
    pub previous: Option<i32>,
    /// Epoch right after this insertion.
    pub epoch: u64,
}

/// Result of predicting a rating and then storing it in one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedInsert {
    pub prediction: Prediction,
    pub previous: Option<i32>,
    pub epoch: u64,
}

pub struct DataManager {
    state: RwLock<State>,
    caches: Caches,
    roster: Vec<AlgorithmSpec>,
    log: Option<Mutex<InsertLog>>,
}

impl DataManager {
    pub fn new(matrix: RatingsMatrix, attrs: Attributes, roster: Vec<AlgorithmSpec>) -> Self {
        DataManager {
            state: RwLock::new(State {
                matrix,
                attrs,
                epoch: 0,
            }),
            caches: Caches::new(),
            roster,
            log: None,
        }
    }

    pub fn empty(scale: RatingScale, roster: Vec<AlgorithmSpec>) -> Self {
        Self::new(RatingsMatrix::new(scale), Attributes::new(), roster)
    }

    /// Loads an optional snapshot, replays the insertion log at `log_path`
    /// if it exists, and appends every later insertion to it.
    pub fn open(
        snapshot: Option<&Path>,
        log_path: Option<&Path>,
        scale: RatingScale,
        roster: Vec<AlgorithmSpec>,
    ) -> Result<Self, ManagerError> {
        let (mut matrix, attrs) = match snapshot {
            Some(p) => persist::load_snapshot(p)?,
            None => (RatingsMatrix::new(scale), Attributes::new()),
        };
        let mut log = None;
        if let Some(p) = log_path {
            if p.exists() {
                for r in persist::load_log(p)?.ratings {
                    matrix.insert(r)?;
                }
            }
            log = Some(Mutex::new(InsertLog::open(p)?));
        }
        let mut dm = Self::new(matrix, attrs, roster);
        dm.log = log;
        Ok(dm)
    }

    pub fn roster(&self) -> &[AlgorithmSpec] {
        &self.roster
    }

    pub fn algorithm(&self, id: AlgorithmId) -> Result<&AlgorithmSpec, ManagerError> {
        self.roster.get(id as usize).ok_or(ManagerError::UnknownAlgorithm(id))
    }

    pub fn caches(&self) -> &Caches {
        &self.caches
    }

    /// A consistent read view. Holding it blocks writers.
    pub fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read()
    }

    pub fn epoch(&self) -> u64 {
        self.state.read().epoch
    }

    pub fn scale(&self) -> RatingScale {
        self.state.read().matrix.scale()
    }

    pub fn predict(&self, algo: AlgorithmId, a: UserId, j: ProfileId) -> Result<Predicted, ManagerError> {
        let spec = self.algorithm(algo)?;
        let st = self.state.read();
        Ok(Predicted {
            prediction: predict::predict(&st.matrix, Some(&self.caches), spec, a, j),
            epoch: st.epoch,
        })
    }

    /// Top-`n` list; with `opposite_sex_only` and a known gender for `a`,
    /// only profiles of the opposite gender qualify.
    pub fn recommend(
        &self,
        algo: AlgorithmId,
        a: UserId,
        n: usize,
        opposite_sex_only: bool,
    ) -> Result<(RecommendationList, u64), ManagerError> {
        let spec = self.algorithm(algo)?;
        let st = self.state.read();
        let want = if opposite_sex_only { st.attrs.gender(a).opposite() } else { None };
        let list = predict::recommend_top_n(&st.matrix, Some(&self.caches), spec, a, n, |p| {
            want.is_none_or(|g| st.attrs.profile_gender(p) == g)
        })?;
        Ok((list, st.epoch))
    }

    fn apply(&self, st: &mut State, r: Rating) -> Result<Option<i32>, ManagerError> {
        let previous = st.matrix.insert(r)?;
        if let Some(log) = &self.log {
            log.lock().append(&r)?;
        }
        self.caches.invalidate(r.user, r.profile);
        st.epoch += 1;
        Ok(previous)
    }

    pub fn insert(&self, r: Rating) -> Result<Inserted, ManagerError> {
        let mut st = self.state.write();
        let previous = self.apply(&mut st, r)?;
        Ok(Inserted {
            previous,
            epoch: st.epoch,
        })
    }

    /// Predicts `r` against the state just before it is stored, then stores
    /// it, atomically with respect to every other request.
    pub fn predict_then_insert(&self, algo: AlgorithmId, r: Rating) -> Result<PredictedInsert, ManagerError> {
        let spec = self.algorithm(algo)?;
        self.scale().check(r.value)?;
        let mut st = self.state.write();
        let prediction = predict::predict(&st.matrix, Some(&self.caches), spec, r.user, r.profile);
        let previous = self.apply(&mut st, r)?;
        Ok(PredictedInsert {
            prediction,
            previous,
            epoch: st.epoch,
        })
    }

    /// Stores every rating in order under one lock. Fails on the first
    /// out-of-scale value without applying anything.
    pub fn insert_batch(&self, rs: &[Rating]) -> Result<(usize, u64), ManagerError> {
        let mut st = self.state.write();
        let scale = st.matrix.scale();
        for r in rs {
            scale.check(r.value)?;
        }
        for r in rs {
            st.matrix.insert(*r)?;
            self.caches.invalidate(r.user, r.profile);
        }
        if let Some(log) = &self.log {
            log.lock().append_all(rs)?;
        }
        if !rs.is_empty() {
            st.epoch += 1;
        }
        Ok((rs.len(), st.epoch))
    }

    pub fn set_gender(&self, user: UserId, gender: Gender) {
        let mut st = self.state.write();
        st.attrs.set(user, gender);
        st.epoch += 1;
    }

    pub fn stats(&self) -> (DatasetStats, u64) {
        let st = self.state.read();
        (compute_stats(&st.matrix, Some(&st.attrs)), st.epoch)
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<(), ManagerError> {
        let st = self.state.read();
        persist::save_snapshot(path, &st.matrix, &st.attrs)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::similarity::SimilarityParams;

    fn roster() -> Vec<AlgorithmSpec> {
        vec![
            AlgorithmSpec::random(1),
            AlgorithmSpec::mean(),
            AlgorithmSpec::user_user(SimilarityParams::new(1, 5).unwrap()),
        ]
    }

    #[test]
    fn epoch_counts_mutations() {
        let dm = DataManager::empty(RatingScale::DEFAULT, roster());
        assert_eq!(dm.insert(Rating::new(1, 2, 3)).unwrap(), Inserted { previous: None, epoch: 1 });
        assert_eq!(dm.insert(Rating::new(1, 2, 5)).unwrap(), Inserted { previous: Some(3), epoch: 2 });
        assert!(dm.insert(Rating::new(1, 2, 11)).is_err());
        assert_eq!(dm.epoch(), 2);
    }

    #[test]
    fn predict_then_insert_predicts_first() {
        let dm = DataManager::empty(RatingScale::DEFAULT, roster());
        dm.insert_batch(&[Rating::new(1, 9, 4), Rating::new(2, 9, 6)]).unwrap();
        let got = dm.predict_then_insert(1, Rating::new(3, 9, 10)).unwrap();
        assert_eq!(got.prediction, Prediction::Value(5.0));
        assert_eq!(got.epoch, 2);
        let after = dm.predict(1, UserId(4), ProfileId(9)).unwrap();
        assert!((after.prediction.value().unwrap() - 20.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn batch_is_all_or_nothing() {
        let dm = DataManager::empty(RatingScale::DEFAULT, roster());
        assert!(dm.insert_batch(&[Rating::new(1, 2, 3), Rating::new(1, 3, 0)]).is_err());
        assert_eq!(dm.read().matrix.rating_count(), 0);
    }

    #[test]
    fn unknown_algorithm() {
        let dm = DataManager::empty(RatingScale::DEFAULT, roster());
        assert!(matches!(dm.predict(7, UserId(1), ProfileId(1)), Err(ManagerError::UnknownAlgorithm(7))));
    }

    #[test]
    fn opposite_sex_filter() {
        let dm = DataManager::empty(RatingScale::DEFAULT, roster());
        dm.insert_batch(&[Rating::new(1, 10, 4), Rating::new(2, 11, 9), Rating::new(2, 12, 8)]).unwrap();
        dm.set_gender(UserId(1), Gender::Male);
        dm.set_gender(UserId(11), Gender::Male);
        dm.set_gender(UserId(12), Gender::Female);
        let (all, _) = dm.recommend(1, UserId(1), 10, false).unwrap();
        assert_eq!(all.profiles().collect::<Vec<_>>(), vec![ProfileId(11), ProfileId(12)]);
        let (f, _) = dm.recommend(1, UserId(1), 10, true).unwrap();
        assert_eq!(f.profiles().collect::<Vec<_>>(), vec![ProfileId(12)]);
    }

    #[test]
    fn reopen_replays_log() {
        let dir = tempfile::tempdir().unwrap();
        let snap = dir.path().join("base.snap");
        let log = dir.path().join("ins.log");
        {
            let dm = DataManager::empty(RatingScale::DEFAULT, roster());
            dm.insert(Rating::new(1, 2, 3)).unwrap();
            dm.save_snapshot(&snap).unwrap();
        }
        {
            let dm = DataManager::open(Some(&snap), Some(&log), RatingScale::DEFAULT, roster()).unwrap();
            dm.insert(Rating::new(4, 5, 6)).unwrap();
            dm.insert(Rating::new(1, 2, 8)).unwrap();
        }
        let dm = DataManager::open(Some(&snap), Some(&log), RatingScale::DEFAULT, roster()).unwrap();
        let st = dm.read();
        assert_eq!(st.matrix.rating_count(), 2);
        assert_eq!(st.matrix.get(UserId(1), ProfileId(2)), Some(8));
    }
}
