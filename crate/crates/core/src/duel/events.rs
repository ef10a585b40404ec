use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Phase, SessionId, SessionRecord, Side};
use crate::manager::AlgorithmId;
use crate::ratings::{Gender, ProfileId, UserId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DuelEvent {
    pub at_ms: u64,
    pub session: SessionId,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Started {
        participant: UserId,
        gender: Gender,
        schedule: Vec<ProfileId>,
        list1: AlgorithmId,
        list2: AlgorithmId,
    },
    Rated {
        profile: ProfileId,
        value: i32,
    },
    ListsShown {
        list1: Vec<ProfileId>,
        list2: Vec<ProfileId>,
        /// Profiles on both lists.
        overlap: usize,
    },
    Chosen {
        side: Side,
        winner: AlgorithmId,
        loser: AlgorithmId,
    },
    Expired,
}

pub fn write_ndjson<W: Write>(mut out: W, events: &[DuelEvent]) -> io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_ndjson<R: BufRead>(input: R) -> Result<Vec<DuelEvent>, ReplayError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| ReplayError::Parse {
            line: i as u64 + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("session {0}: event before start")]
    NotStarted(SessionId),
    #[error("session {0}: {1}")]
    Inconsistent(SessionId, String),
}

/// Rebuilds every session's final state from the event log alone.
pub fn replay<'e>(events: impl IntoIterator<Item = &'e DuelEvent>) -> Result<BTreeMap<SessionId, SessionRecord>, ReplayError> {
    let mut out: BTreeMap<SessionId, SessionRecord> = BTreeMap::new();
    for e in events {
        let id = e.session;
        let bad = |why: &str| ReplayError::Inconsistent(id, why.to_string());
        if let EventKind::Started {
            participant,
            gender,
            schedule,
            list1,
            list2,
        } = &e.kind
        {
            if out.contains_key(&id) {
                return Err(bad("started twice"));
            }
            out.insert(
                id,
                SessionRecord {
                    session: id,
                    participant: *participant,
                    gender: *gender,
                    phase: Phase::Rating {
                        remaining: schedule.len(),
                    },
                    schedule: schedule.clone(),
                    ratings: Vec::new(),
                    algorithms: [*list1, *list2],
                    lists: None,
                    choice: None,
                },
            );
            continue;
        }
        let s = out.get_mut(&id).ok_or(ReplayError::NotStarted(id))?;
        match &e.kind {
            EventKind::Started { .. } => unreachable!(),
            EventKind::Rated { profile, value } => {
                let expected = s.schedule.get(s.ratings.len()).ok_or_else(|| bad("rating past schedule"))?;
                if expected != profile {
                    return Err(bad("rating out of order"));
                }
                s.ratings.push((*profile, *value));
                s.phase = Phase::Rating {
                    remaining: s.schedule.len() - s.ratings.len(),
                };
            }
            EventKind::ListsShown { list1, list2, .. } => {
                if s.ratings.len() != s.schedule.len() {
                    return Err(bad("lists before rating phase ended"));
                }
                s.lists = Some([list1.clone(), list2.clone()]);
                s.phase = Phase::Choosing;
            }
            EventKind::Chosen { side, winner, .. } => {
                if s.phase != Phase::Choosing || s.algorithms[side.index()] != *winner {
                    return Err(bad("choice does not match session state"));
                }
                s.choice = Some(*side);
                s.phase = Phase::Done;
            }
            EventKind::Expired => s.phase = Phase::Expired,
        }
    }
    Ok(out)
}
