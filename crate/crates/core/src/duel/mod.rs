//! Blind duels between recommenders.
//!
//! A participant rates a scheduled sequence of profiles. When the last one
//! is in, two algorithms each produce a top-N list of profiles the
//! participant has not rated. The lists are shown as "list 1" and "list 2"
//! in a random order, the participant picks one, and the pick counts as a
//! win for whichever algorithm produced it.
//!
//! Nothing the participant sees before choosing names an algorithm or
//! carries a score; the mapping from list to algorithm lives only in the
//! session and the event log.

mod events;
mod tally;

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manager::{AlgorithmId, DataManager, ManagerError};
use crate::predict::{mix64, RecommendationList};
use crate::ratings::{Gender, ProfileId, Rating, RatingError, UserId};

pub use events::{read_ndjson, replay, write_ndjson, DuelEvent, EventKind, ReplayError};
pub use tally::DuelTally;

/// Milliseconds since some fixed origin.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        ManualClock(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, by: Duration) {
        self.0.fetch_add(by.as_millis() as u64, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

impl<C: Clock + ?Sized> Clock for Arc<C> {
    fn now_ms(&self) -> u64 {
        (**self).now_ms()
    }
}

/// Opaque session token, printed as 16 hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct SessionId(pub u64);

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for SessionId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(SessionId)
    }
}

impl From<SessionId> for String {
    fn from(id: SessionId) -> String {
        id.to_string()
    }
}

impl TryFrom<String> for SessionId {
    type Error = std::num::ParseIntError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Which of the two presented lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "list1", alias = "left")]
    List1,
    #[serde(rename = "list2", alias = "right")]
    List2,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::List1 => 0,
            Side::List2 => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum Phase {
    Rating { remaining: usize },
    Choosing,
    Done,
    /// Abandoned past the idle timeout; never counted.
    Expired,
}

impl Phase {
    fn name(&self) -> &'static str {
        match self {
            Phase::Rating { .. } => "rating",
            Phase::Choosing => "choosing",
            Phase::Done => "done",
            Phase::Expired => "expired",
        }
    }
}

/// How each session's pair of algorithms is drawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PairPolicy {
    /// Uniform over the unordered pairs of contestants.
    AllPairs,
    Fixed(AlgorithmId, AlgorithmId),
}

#[derive(Debug, Clone)]
pub struct DuelConfig {
    /// Roster ids taking part.
    pub contestants: Vec<AlgorithmId>,
    pub policy: PairPolicy,
    pub rating_target: usize,
    pub list_len: usize,
    pub idle_timeout: Duration,
    pub seed: u64,
    /// `{id}` is replaced by the profile id.
    pub asset_template: String,
}

impl Default for DuelConfig {
    fn default() -> Self {
        DuelConfig {
            contestants: vec![0, 1, 2],
            policy: PairPolicy::AllPairs,
            rating_target: 150,
            list_len: 10,
            idle_timeout: Duration::from_secs(30 * 60),
            seed: 0x6475_656c,
            asset_template: "/assets/profiles/{id}.jpg".into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum DuelError {
    #[error("unknown session {0}")]
    UnknownSession(SessionId),
    #[error("session is in phase {found}, expected {expected}")]
    WrongPhase { expected: &'static str, found: &'static str },
    #[error("expected a rating for profile {expected}, got {got}")]
    OutOfOrder { expected: u32, got: u32 },
    #[error("only {available} eligible profiles for {needed} scheduled ratings")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Rating(#[from] RatingError),
    #[error(transparent)]
    Manager(#[from] ManagerError),
    #[error("event log: {0}")]
    Log(#[from] std::io::Error),
}

/// Full server-side state of one session, as also rebuilt from the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session: SessionId,
    pub participant: UserId,
    pub gender: Gender,
    pub phase: Phase,
    pub schedule: Vec<ProfileId>,
    pub ratings: Vec<(ProfileId, i32)>,
    /// Algorithms behind list 1 and list 2.
    pub algorithms: [AlgorithmId; 2],
    pub lists: Option<[Vec<ProfileId>; 2]>,
    pub choice: Option<Side>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileCard {
    pub profile: ProfileId,
    pub asset: String,
}

/// What the participant's browser is shown. Carries no algorithm identity
/// and no scores.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session: SessionId,
    #[serde(flatten)]
    pub phase: Phase,
    pub rated: usize,
    pub target: usize,
    pub next: Option<ProfileCard>,
    pub lists: Option<ListsView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ListsView {
    pub list1: Vec<ProfileCard>,
    pub list2: Vec<ProfileCard>,
}

/// Returned once the choice is in: the blind mapping revealed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChoiceOutcome {
    pub session: SessionId,
    pub picked: Side,
    pub winner: String,
    pub list1: String,
    pub list2: String,
}

struct Session {
    rec: SessionRecord,
    full_lists: Option<[RecommendationList; 2]>,
    last_active: u64,
}

struct EventSink {
    events: Vec<DuelEvent>,
    out: Option<Box<dyn Write + Send>>,
}

pub struct DuelService {
    dm: Arc<DataManager>,
    cfg: DuelConfig,
    clock: Box<dyn Clock>,
    names: Vec<(AlgorithmId, String)>,
    pairs: Vec<(AlgorithmId, AlgorithmId)>,
    first_participant: u32,
    started: AtomicU64,
    sessions: RwLock<HashMap<SessionId, Arc<Mutex<Session>>>>,
    log: Mutex<EventSink>,
    tally: Mutex<DuelTally>,
}

impl DuelService {
    /// `dm` holds the experiment matrix; participants' ratings go into it.
    pub fn new(dm: Arc<DataManager>, cfg: DuelConfig, clock: Box<dyn Clock>) -> Result<Self, DuelError> {
        let names = cfg
            .contestants
            .iter()
            .map(|&id| dm.algorithm(id).map(|s| (id, s.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        let pairs = match cfg.policy {
            PairPolicy::AllPairs => {
                let c = &cfg.contestants;
                let mut v = Vec::new();
                for i in 0..c.len() {
                    for j in i + 1..c.len() {
                        v.push((c[i], c[j]));
                    }
                }
                v
            }
            PairPolicy::Fixed(a, b) => {
                dm.algorithm(a)?;
                dm.algorithm(b)?;
                vec![(a, b)]
            }
        };
        if pairs.is_empty() || cfg.rating_target == 0 || cfg.list_len == 0 {
            return Err(DuelError::InvalidConfig(
                "need two contestants, a positive rating target and list length".into(),
            ));
        }
        let first_participant = {
            let st = dm.read();
            let top = st.matrix.users().ids().iter().map(|u| u.0);
            let top = top.chain(st.matrix.profiles().ids().iter().map(|p| p.0));
            let records = st.attrs.records();
            let top = top.chain(records.iter().map(|r| r.user.0));
            top.max().map_or(1, |m| m + 1)
        };
        let tally = DuelTally::new(names.clone());
        Ok(DuelService {
            dm,
            cfg,
            clock,
            names,
            pairs,
            first_participant,
            started: AtomicU64::new(0),
            sessions: RwLock::new(HashMap::new()),
            log: Mutex::new(EventSink {
                events: Vec::new(),
                out: None,
            }),
            tally: Mutex::new(tally),
        })
    }

    /// Also writes every event as one JSON line to `out`.
    pub fn with_log_writer(self, out: Box<dyn Write + Send>) -> Self {
        self.log.lock().out = Some(out);
        self
    }

    pub fn config(&self) -> &DuelConfig {
        &self.cfg
    }

    pub fn data(&self) -> &Arc<DataManager> {
        &self.dm
    }

    fn emit(&self, session: SessionId, kind: EventKind) -> Result<(), DuelError> {
        let e = DuelEvent {
            at_ms: self.clock.now_ms(),
            session,
            kind,
        };
        let mut sink = self.log.lock();
        if let Some(out) = &mut sink.out {
            serde_json::to_writer(&mut *out, &e).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
            out.flush()?;
        }
        sink.events.push(e);
        Ok(())
    }

    fn name(&self, id: AlgorithmId) -> String {
        self.names.iter().find(|n| n.0 == id).map_or_else(|| id.to_string(), |n| n.1.clone())
    }

    fn card(&self, p: ProfileId) -> ProfileCard {
        ProfileCard {
            profile: p,
            asset: self.cfg.asset_template.replace("{id}", &p.0.to_string()),
        }
    }

    fn view(&self, s: &Session) -> SessionView {
        let r = &s.rec;
        SessionView {
            session: r.session,
            phase: r.phase,
            rated: r.ratings.len(),
            target: r.schedule.len(),
            next: match r.phase {
                Phase::Rating { .. } => r.schedule.get(r.ratings.len()).map(|&p| self.card(p)),
                _ => None,
            },
            lists: match (r.phase, &r.lists) {
                (Phase::Choosing | Phase::Done, Some([a, b])) => Some(ListsView {
                    list1: a.iter().map(|&p| self.card(p)).collect(),
                    list2: b.iter().map(|&p| self.card(p)).collect(),
                }),
                _ => None,
            },
        }
    }

    /// Opens a session for a new participant. A declared gender limits the
    /// schedule, and later the lists, to the opposite gender.
    pub fn start_session(&self, gender: Gender) -> Result<SessionView, DuelError> {
        self.expire_idle()?;
        let pool = {
            let st = self.dm.read();
            let want = gender.opposite();
            let mut pool: Vec<ProfileId> = st
                .matrix
                .profiles()
                .ids()
                .iter()
                .copied()
                .filter(|&p| want.is_none_or(|g| st.attrs.profile_gender(p) == g))
                .collect();
            pool.sort_unstable();
            pool
        };
        let needed = self.cfg.rating_target;
        if pool.len() < needed {
            return Err(DuelError::PoolTooSmall {
                needed,
                available: pool.len(),
            });
        }
        let n = self.started.fetch_add(1, Ordering::SeqCst);
        let id = SessionId(mix64(self.cfg.seed ^ mix64(n)));
        let participant = UserId(self.first_participant + n as u32);
        let mut rng = ChaCha8Rng::seed_from_u64(id.0);
        let schedule: Vec<ProfileId> = sample(&mut rng, pool.len(), needed).into_iter().map(|i| pool[i]).collect();
        let (a, b) = self.pairs[rng.gen_range(0..self.pairs.len())];
        let algorithms = if rng.gen_bool(0.5) { [a, b] } else { [b, a] };
        if gender != Gender::Unknown {
            self.dm.set_gender(participant, gender);
        }
        let session = Session {
            rec: SessionRecord {
                session: id,
                participant,
                gender,
                phase: Phase::Rating { remaining: needed },
                schedule: schedule.clone(),
                ratings: Vec::new(),
                algorithms,
                lists: None,
                choice: None,
            },
            full_lists: None,
            last_active: self.clock.now_ms(),
        };
        let view = self.view(&session);
        let slot = Arc::new(Mutex::new(session));
        let guard = slot.lock();
        self.sessions.write().insert(id, slot.clone());
        self.emit(
            id,
            EventKind::Started {
                participant,
                gender,
                schedule,
                list1: algorithms[0],
                list2: algorithms[1],
            },
        )?;
        drop(guard);
        Ok(view)
    }

    fn slot(&self, id: SessionId) -> Result<Arc<Mutex<Session>>, DuelError> {
        self.sessions.read().get(&id).cloned().ok_or(DuelError::UnknownSession(id))
    }

    pub fn session(&self, id: SessionId) -> Result<SessionView, DuelError> {
        self.expire_idle()?;
        let slot = self.slot(id)?;
        let s = slot.lock();
        Ok(self.view(&s))
    }

    /// Profile the participant should rate next, if still rating.
    pub fn next_profile(&self, id: SessionId) -> Result<Option<ProfileCard>, DuelError> {
        Ok(self.session(id)?.next)
    }

    pub fn lists(&self, id: SessionId) -> Result<ListsView, DuelError> {
        let v = self.session(id)?;
        v.lists.ok_or(DuelError::WrongPhase {
            expected: "choosing",
            found: v.phase.name(),
        })
    }

    /// Stores the rating for the scheduled profile. The last one closes the
    /// rating phase and builds both lists.
    pub fn submit_rating(&self, id: SessionId, profile: ProfileId, value: i32) -> Result<SessionView, DuelError> {
        self.expire_idle()?;
        let slot = self.slot(id)?;
        let mut s = slot.lock();
        let Phase::Rating { remaining } = s.rec.phase else {
            return Err(DuelError::WrongPhase {
                expected: "rating",
                found: s.rec.phase.name(),
            });
        };
        let expected = s.rec.schedule[s.rec.ratings.len()];
        if expected != profile {
            return Err(DuelError::OutOfOrder {
                expected: expected.0,
                got: profile.0,
            });
        }
        self.dm.scale().check(value)?;
        self.dm.insert(Rating {
            user: s.rec.participant,
            profile,
            value,
        })?;
        s.rec.ratings.push((profile, value));
        s.last_active = self.clock.now_ms();
        s.rec.phase = Phase::Rating { remaining: remaining - 1 };
        self.emit(id, EventKind::Rated { profile, value })?;
        if remaining == 1 {
            let filter = s.rec.gender != Gender::Unknown;
            let [a, b] = s.rec.algorithms;
            let (l1, _) = self.dm.recommend(a, s.rec.participant, self.cfg.list_len, filter)?;
            let (l2, _) = self.dm.recommend(b, s.rec.participant, self.cfg.list_len, filter)?;
            let p1: Vec<ProfileId> = l1.profiles().collect();
            let p2: Vec<ProfileId> = l2.profiles().collect();
            let overlap = p1.iter().filter(|p| p2.contains(p)).count();
            s.rec.lists = Some([p1.clone(), p2.clone()]);
            s.full_lists = Some([l1, l2]);
            s.rec.phase = Phase::Choosing;
            self.emit(
                id,
                EventKind::ListsShown {
                    list1: p1,
                    list2: p2,
                    overlap,
                },
            )?;
        }
        Ok(self.view(&s))
    }

    pub fn submit_choice(&self, id: SessionId, picked: Side) -> Result<ChoiceOutcome, DuelError> {
        self.expire_idle()?;
        let slot = self.slot(id)?;
        let mut s = slot.lock();
        if s.rec.phase != Phase::Choosing {
            return Err(DuelError::WrongPhase {
                expected: "choosing",
                found: s.rec.phase.name(),
            });
        }
        let algos = s.rec.algorithms;
        let winner = algos[picked.index()];
        let loser = algos[1 - picked.index()];
        s.rec.choice = Some(picked);
        s.rec.phase = Phase::Done;
        s.last_active = self.clock.now_ms();
        self.tally.lock().record(winner, loser);
        self.emit(id, EventKind::Chosen { side: picked, winner, loser })?;
        Ok(ChoiceOutcome {
            session: id,
            picked,
            winner: self.name(winner),
            list1: self.name(algos[0]),
            list2: self.name(algos[1]),
        })
    }

    /// Marks sessions idle past the timeout as expired. Returns how many.
    pub fn expire_idle(&self) -> Result<usize, DuelError> {
        let now = self.clock.now_ms();
        let limit = self.cfg.idle_timeout.as_millis() as u64;
        let slots: Vec<_> = self.sessions.read().values().cloned().collect();
        let mut n = 0;
        for slot in slots {
            let Some(mut s) = slot.try_lock() else { continue };
            let open = matches!(s.rec.phase, Phase::Rating { .. } | Phase::Choosing);
            if open && now.saturating_sub(s.last_active) > limit {
                s.rec.phase = Phase::Expired;
                self.emit(s.rec.session, EventKind::Expired)?;
                n += 1;
            }
        }
        Ok(n)
    }

    /// Server-side state of a session, blind mapping included.
    pub fn record(&self, id: SessionId) -> Result<SessionRecord, DuelError> {
        Ok(self.slot(id)?.lock().rec.clone())
    }

    /// The two lists with their scores, for operators.
    pub fn scored_lists(&self, id: SessionId) -> Result<Option<[RecommendationList; 2]>, DuelError> {
        Ok(self.slot(id)?.lock().full_lists.clone())
    }

    pub fn records(&self) -> Vec<SessionRecord> {
        let slots: Vec<_> = self.sessions.read().values().cloned().collect();
        let mut out: Vec<SessionRecord> = slots.iter().map(|s| s.lock().rec.clone()).collect();
        out.sort_by_key(|r| r.session);
        out
    }

    pub fn tally(&self) -> DuelTally {
        self.tally.lock().clone()
    }

    pub fn events(&self) -> Vec<DuelEvent> {
        self.log.lock().events.clone()
    }

    pub fn contestants(&self) -> &[(AlgorithmId, String)] {
        &self.names
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::AlgorithmSpec;
    use crate::ratings::{Attributes, RatingScale, RatingsMatrix};
    use crate::similarity::SimilarityParams;

    fn service(target: usize) -> (DuelService, Arc<ManualClock>) {
        let mut ratings = Vec::new();
        for u in 0..40u32 {
            for p in 100..140u32 {
                if (u * 7 + p) % 3 != 0 {
                    ratings.push(Rating::new(u, p, ((u + p) % 10 + 1) as i32));
                }
            }
        }
        let m = RatingsMatrix::from_ratings(RatingScale::DEFAULT, ratings).unwrap();
        let mut attrs = Attributes::new();
        for p in 100..140u32 {
            attrs.set(UserId(p), if p % 2 == 0 { Gender::Female } else { Gender::Male });
        }
        let roster = vec![
            AlgorithmSpec::random(1),
            AlgorithmSpec::mean(),
            AlgorithmSpec::user_user(SimilarityParams::new(2, 10).unwrap()),
        ];
        let dm = Arc::new(DataManager::new(m, attrs, roster));
        let clock = Arc::new(ManualClock::new(1_000));
        let cfg = DuelConfig {
            rating_target: target,
            idle_timeout: Duration::from_secs(60),
            ..Default::default()
        };
        (DuelService::new(dm, cfg, Box::new(clock.clone())).unwrap(), clock)
    }

    fn rate_all(svc: &DuelService, id: SessionId) -> SessionView {
        let mut v = svc.session(id).unwrap();
        while let Some(card) = v.next.clone() {
            v = svc.submit_rating(id, card.profile, (card.profile.0 % 10 + 1) as i32).unwrap();
        }
        v
    }

    #[test]
    fn full_session() {
        let (svc, _) = service(12);
        let v = svc.start_session(Gender::Unknown).unwrap();
        assert_eq!(v.phase, Phase::Rating { remaining: 12 });
        let done = rate_all(&svc, v.session);
        assert_eq!(done.phase, Phase::Choosing);
        let lists = done.lists.unwrap();
        assert_eq!(lists.list1.len(), 10);
        let rec = svc.record(v.session).unwrap();
        let rated: Vec<ProfileId> = rec.ratings.iter().map(|r| r.0).collect();
        for card in lists.list1.iter().chain(&lists.list2) {
            assert!(!rated.contains(&card.profile));
        }
        let out = svc.submit_choice(v.session, Side::List1).unwrap();
        assert_eq!(out.winner, svc.name(rec.algorithms[0]));
        assert!(matches!(svc.submit_choice(v.session, Side::List2), Err(DuelError::WrongPhase { .. })));
        assert_eq!(svc.tally().total(), 1);
    }

    #[test]
    fn rejects_out_of_order_and_duplicates() {
        let (svc, _) = service(5);
        let v = svc.start_session(Gender::Unknown).unwrap();
        let first = v.next.unwrap().profile;
        let v2 = svc.submit_rating(v.session, first, 3).unwrap();
        assert!(matches!(svc.submit_rating(v.session, first, 3), Err(DuelError::OutOfOrder { .. })));
        let second = v2.next.unwrap().profile;
        assert!(matches!(svc.submit_rating(v.session, second, 11), Err(DuelError::Rating(_))));
        assert_eq!(svc.session(v.session).unwrap().rated, 1);
    }

    #[test]
    fn same_gender_pool_is_too_small() {
        let (svc, _) = service(30);
        assert!(matches!(svc.start_session(Gender::Male), Err(DuelError::PoolTooSmall { needed: 30, available: 20 })));
        let (svc, _) = service(20);
        let v = svc.start_session(Gender::Male).unwrap();
        let rec = svc.record(v.session).unwrap();
        assert!(rec.schedule.iter().all(|p| p.0 % 2 == 0));
    }

    #[test]
    fn idle_sessions_expire() {
        let (svc, clock) = service(5);
        let v = svc.start_session(Gender::Unknown).unwrap();
        clock.advance(Duration::from_secs(61));
        assert_eq!(svc.session(v.session).unwrap().phase, Phase::Expired);
        let card = v.next.unwrap();
        assert!(matches!(svc.submit_rating(v.session, card.profile, 4), Err(DuelError::WrongPhase { .. })));
    }

    #[test]
    fn log_replays_to_stored_state() {
        let (svc, _) = service(6);
        for _ in 0..4 {
            let v = svc.start_session(Gender::Female).unwrap();
            rate_all(&svc, v.session);
            svc.submit_choice(v.session, Side::List2).unwrap();
        }
        svc.start_session(Gender::Unknown).unwrap();
        let rebuilt = replay(&svc.events()).unwrap();
        assert_eq!(rebuilt.into_values().collect::<Vec<_>>(), svc.records());
        assert_eq!(DuelTally::from_events(svc.contestants().to_vec(), &svc.events()), svc.tally());
    }
}
