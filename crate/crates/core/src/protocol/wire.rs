//! Payload layouts for every CCP method.
//!
//! All integers are big-endian and fixed width; reals are IEEE-754 `f64`.
//! A prediction is `tag:u8` followed by `value:f64` (tag 0) or
//! `reason:u8` (tag 1; 0 no_data, 1 no_neighbors, 2 unknown_entity). A
//! previous-value marker is `present:u8 value:i32`, value 0 when absent.
//!
//! | id   | service     | method              | request                                   | response                                       |
//! |------|-------------|---------------------|-------------------------------------------|------------------------------------------------|
//! | 0x01 | any         | ping                | (empty)                                   | epoch:u64                                      |
//! | 0x02 | any         | list_algorithms     | (empty)                                   | n:u16 { id:u16 len:u16 label:utf8 }*           |
//! | 0x10 | recommender | predict             | algo:u16 user:u32 profile:u32             | prediction epoch:u64                           |
//! | 0x11 | recommender | recommend           | algo:u16 user:u32 n:u16 flags:u8          | user:u32 k:u16 { profile:u32 score:f64 }* epoch:u64 |
//! | 0x20 | data        | insert              | user:u32 profile:u32 value:i32            | previous epoch:u64                             |
//! | 0x21 | data        | predict_then_insert | algo:u16 user:u32 profile:u32 value:i32   | prediction previous epoch:u64                  |
//! | 0x22 | data        | insert_batch        | n:u32 { user:u32 profile:u32 value:i32 }* | inserted:u32 epoch:u64                         |
//! | 0x30 | stats       | stats               | (empty)                                   | see [`encode_stats`]                           |
//!
//! `recommend` flag bit 0 asks for opposite-sex profiles only.
//!
//! An error frame carries `code:u16 len:u16 message:utf8` and echoes the
//! request's method id.

use thiserror::Error;

use super::frame::{Frame, FrameKind};
use crate::predict::{Prediction, RecommendationList, SkipReason};
use crate::ratings::{ProfileId, Rating, UserId};
use crate::stats::DatasetStats;

pub mod method {
    pub const PING: u8 = 0x01;
    pub const LIST_ALGORITHMS: u8 = 0x02;
    pub const PREDICT: u8 = 0x10;
    pub const RECOMMEND: u8 = 0x11;
    pub const INSERT: u8 = 0x20;
    pub const PREDICT_THEN_INSERT: u8 = 0x21;
    pub const INSERT_BATCH: u8 = 0x22;
    pub const STATS: u8 = 0x30;
}

/// Largest list a recommend request may ask for.
pub const MAX_RECOMMEND: u16 = 1000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("payload too short")]
    Short,
    #[error("{0} unexpected trailing bytes")]
    Trailing(usize),
    #[error("invalid field: {0}")]
    Invalid(&'static str),
    #[error("unknown method {0:#04x}")]
    UnknownMethod(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u16)]
pub enum ErrorCode {
    Protocol = 1,
    UnknownMethod = 2,
    Malformed = 3,
    UnknownAlgorithm = 4,
    UnknownUser = 5,
    OutOfScale = 6,
    InvalidArgument = 7,
    Internal = 8,
}

impl ErrorCode {
    pub fn from_u16(v: u16) -> Option<ErrorCode> {
        use ErrorCode::*;
        [Protocol, UnknownMethod, Malformed, UnknownAlgorithm, UnknownUser, OutOfScale, InvalidArgument, Internal]
            .into_iter()
            .find(|c| *c as u16 == v)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N], WireError> {
        if self.buf.len() < N {
            return Err(WireError::Short);
        }
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        Ok(head.try_into().expect("length checked"))
    }

    fn bytes(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Short);
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_be_bytes(self.take()?))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_be_bytes(self.take()?))
    }

    fn i32(&mut self) -> Result<i32, WireError> {
        Ok(i32::from_be_bytes(self.take()?))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_be_bytes(self.take()?))
    }

    fn f64(&mut self) -> Result<f64, WireError> {
        Ok(f64::from_be_bytes(self.take()?))
    }

    fn finish(self) -> Result<(), WireError> {
        match self.buf.len() {
            0 => Ok(()),
            n => Err(WireError::Trailing(n)),
        }
    }
}

fn put_rating(out: &mut Vec<u8>, r: &Rating) {
    out.extend_from_slice(&r.user.0.to_be_bytes());
    out.extend_from_slice(&r.profile.0.to_be_bytes());
    out.extend_from_slice(&r.value.to_be_bytes());
}

fn get_rating(r: &mut Reader<'_>) -> Result<Rating, WireError> {
    Ok(Rating::new(r.u32()?, r.u32()?, r.i32()?))
}

fn put_prediction(out: &mut Vec<u8>, p: &Prediction) {
    match p {
        Prediction::Value(v) => {
            out.push(0);
            out.extend_from_slice(&v.to_be_bytes());
        }
        Prediction::Skipped(reason) => {
            out.push(1);
            out.push(match reason {
                SkipReason::NoData => 0,
                SkipReason::NoNeighbors => 1,
                SkipReason::UnknownEntity => 2,
            });
        }
    }
}

fn get_prediction(r: &mut Reader<'_>) -> Result<Prediction, WireError> {
    match r.u8()? {
        0 => Ok(Prediction::Value(r.f64()?)),
        1 => Ok(Prediction::Skipped(match r.u8()? {
            0 => SkipReason::NoData,
            1 => SkipReason::NoNeighbors,
            2 => SkipReason::UnknownEntity,
            _ => return Err(WireError::Invalid("skip reason")),
        })),
        _ => Err(WireError::Invalid("prediction tag")),
    }
}

fn put_previous(out: &mut Vec<u8>, prev: Option<i32>) {
    out.push(prev.is_some() as u8);
    out.extend_from_slice(&prev.unwrap_or(0).to_be_bytes());
}

fn get_previous(r: &mut Reader<'_>) -> Result<Option<i32>, WireError> {
    let present = r.u8()?;
    let v = r.i32()?;
    match present {
        0 => Ok(None),
        1 => Ok(Some(v)),
        _ => Err(WireError::Invalid("previous marker")),
    }
}

/// `total_users:u64 users_with:u64 items_with:u64 ratings:u64 density:f64
/// fill:f64 max_user:u64 max_profile:u64 defined:u8 mean:f64 median:f64
/// sd:f64 epoch:u64`. Undefined moments are sent as 0.0 with `defined` = 0.
pub fn encode_stats(out: &mut Vec<u8>, s: &DatasetStats) {
    for v in [s.total_users, s.users_with_ratings, s.items_with_ratings, s.rating_count] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&s.density.to_be_bytes());
    out.extend_from_slice(&s.fill.to_be_bytes());
    out.extend_from_slice(&s.max_ratings_one_user.to_be_bytes());
    out.extend_from_slice(&s.max_ratings_one_profile.to_be_bytes());
    let defined = s.mean.is_some() && s.median.is_some() && s.sd.is_some();
    out.push(defined as u8);
    for v in [s.mean, s.median, s.sd] {
        out.extend_from_slice(&v.unwrap_or(0.0).to_be_bytes());
    }
}

fn decode_stats(r: &mut Reader<'_>) -> Result<DatasetStats, WireError> {
    let total_users = r.u64()?;
    let users_with_ratings = r.u64()?;
    let items_with_ratings = r.u64()?;
    let rating_count = r.u64()?;
    let density = r.f64()?;
    let fill = r.f64()?;
    let max_ratings_one_user = r.u64()?;
    let max_ratings_one_profile = r.u64()?;
    let defined = r.u8()? == 1;
    let (mean, median, sd) = (r.f64()?, r.f64()?, r.f64()?);
    let opt = |v: f64| defined.then_some(v);
    Ok(DatasetStats {
        total_users,
        users_with_ratings,
        items_with_ratings,
        rating_count,
        density,
        fill,
        max_ratings_one_user,
        max_ratings_one_profile,
        mean: opt(mean),
        median: opt(median),
        sd: opt(sd),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Ping,
    ListAlgorithms,
    Predict {
        algorithm: u16,
        user: UserId,
        profile: ProfileId,
    },
    Recommend {
        algorithm: u16,
        user: UserId,
        n: u16,
        opposite_sex_only: bool,
    },
    Insert(Rating),
    PredictThenInsert {
        algorithm: u16,
        rating: Rating,
    },
    InsertBatch(Vec<Rating>),
    Stats,
}

impl Request {
    pub fn method(&self) -> u8 {
        match self {
            Request::Ping => method::PING,
            Request::ListAlgorithms => method::LIST_ALGORITHMS,
            Request::Predict { .. } => method::PREDICT,
            Request::Recommend { .. } => method::RECOMMEND,
            Request::Insert(_) => method::INSERT,
            Request::PredictThenInsert { .. } => method::PREDICT_THEN_INSERT,
            Request::InsertBatch(_) => method::INSERT_BATCH,
            Request::Stats => method::STATS,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        match self {
            Request::Ping | Request::ListAlgorithms | Request::Stats => {}
            Request::Predict { algorithm, user, profile } => {
                out.extend_from_slice(&algorithm.to_be_bytes());
                out.extend_from_slice(&user.0.to_be_bytes());
                out.extend_from_slice(&profile.0.to_be_bytes());
            }
            Request::Recommend {
                algorithm,
                user,
                n,
                opposite_sex_only,
            } => {
                out.extend_from_slice(&algorithm.to_be_bytes());
                out.extend_from_slice(&user.0.to_be_bytes());
                out.extend_from_slice(&n.to_be_bytes());
                out.push(*opposite_sex_only as u8);
            }
            Request::Insert(r) => put_rating(&mut out, r),
            Request::PredictThenInsert { algorithm, rating } => {
                out.extend_from_slice(&algorithm.to_be_bytes());
                put_rating(&mut out, rating);
            }
            Request::InsertBatch(rs) => {
                out.extend_from_slice(&(rs.len() as u32).to_be_bytes());
                for r in rs {
                    put_rating(&mut out, r);
                }
            }
        }
        out
    }

    pub fn to_frame(&self) -> Frame {
        Frame::request(self.method(), self.payload())
    }

    pub fn decode(method_id: u8, payload: &[u8]) -> Result<Request, WireError> {
        let mut r = Reader::new(payload);
        let req = match method_id {
            method::PING => Request::Ping,
            method::LIST_ALGORITHMS => Request::ListAlgorithms,
            method::STATS => Request::Stats,
            method::PREDICT => Request::Predict {
                algorithm: r.u16()?,
                user: UserId(r.u32()?),
                profile: ProfileId(r.u32()?),
            },
            method::RECOMMEND => {
                let algorithm = r.u16()?;
                let user = UserId(r.u32()?);
                let n = r.u16()?;
                let flags = r.u8()?;
                if flags & !1 != 0 {
                    return Err(WireError::Invalid("recommend flags"));
                }
                Request::Recommend {
                    algorithm,
                    user,
                    n,
                    opposite_sex_only: flags & 1 == 1,
                }
            }
            method::INSERT => Request::Insert(get_rating(&mut r)?),
            method::PREDICT_THEN_INSERT => Request::PredictThenInsert {
                algorithm: r.u16()?,
                rating: get_rating(&mut r)?,
            },
            method::INSERT_BATCH => {
                let n = r.u32()? as usize;
                if n.checked_mul(12) != Some(r.buf.len()) {
                    return Err(WireError::Invalid("batch length"));
                }
                Request::InsertBatch((0..n).map(|_| get_rating(&mut r)).collect::<Result<_, _>>()?)
            }
            other => return Err(WireError::UnknownMethod(other)),
        };
        r.finish()?;
        Ok(req)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Response {
    Pong {
        epoch: u64,
    },
    Algorithms(Vec<(u16, String)>),
    Predicted {
        prediction: Prediction,
        epoch: u64,
    },
    Recommended {
        list: RecommendationList,
        epoch: u64,
    },
    Inserted {
        previous: Option<i32>,
        epoch: u64,
    },
    PredictedInsert {
        prediction: Prediction,
        previous: Option<i32>,
        epoch: u64,
    },
    BatchInserted {
        count: u32,
        epoch: u64,
    },
    Stats {
        stats: DatasetStats,
        epoch: u64,
    },
}

impl Response {
    pub fn method(&self) -> u8 {
        match self {
            Response::Pong { .. } => method::PING,
            Response::Algorithms(_) => method::LIST_ALGORITHMS,
            Response::Predicted { .. } => method::PREDICT,
            Response::Recommended { .. } => method::RECOMMEND,
            Response::Inserted { .. } => method::INSERT,
            Response::PredictedInsert { .. } => method::PREDICT_THEN_INSERT,
            Response::BatchInserted { .. } => method::INSERT_BATCH,
            Response::Stats { .. } => method::STATS,
        }
    }

    pub fn payload(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let epoch = match self {
            Response::Pong { epoch } => *epoch,
            Response::Algorithms(list) => {
                out.extend_from_slice(&(list.len() as u16).to_be_bytes());
                for (id, label) in list {
                    out.extend_from_slice(&id.to_be_bytes());
                    out.extend_from_slice(&(label.len() as u16).to_be_bytes());
                    out.extend_from_slice(label.as_bytes());
                }
                return out;
            }
            Response::Predicted { prediction, epoch } => {
                put_prediction(&mut out, prediction);
                *epoch
            }
            Response::Recommended { list, epoch } => {
                out.extend_from_slice(&list.for_user.0.to_be_bytes());
                out.extend_from_slice(&(list.entries.len() as u16).to_be_bytes());
                for (p, score) in &list.entries {
                    out.extend_from_slice(&p.0.to_be_bytes());
                    out.extend_from_slice(&score.to_be_bytes());
                }
                *epoch
            }
            Response::Inserted { previous, epoch } => {
                put_previous(&mut out, *previous);
                *epoch
            }
            Response::PredictedInsert {
                prediction,
                previous,
                epoch,
            } => {
                put_prediction(&mut out, prediction);
                put_previous(&mut out, *previous);
                *epoch
            }
            Response::BatchInserted { count, epoch } => {
                out.extend_from_slice(&count.to_be_bytes());
                *epoch
            }
            Response::Stats { stats, epoch } => {
                encode_stats(&mut out, stats);
                *epoch
            }
        };
        out.extend_from_slice(&epoch.to_be_bytes());
        out
    }

    pub fn to_frame(&self) -> Frame {
        Frame::response(self.method(), self.payload())
    }

    pub fn decode(method_id: u8, payload: &[u8]) -> Result<Response, WireError> {
        let mut r = Reader::new(payload);
        let resp = match method_id {
            method::PING => Response::Pong { epoch: r.u64()? },
            method::LIST_ALGORITHMS => {
                let n = r.u16()?;
                let mut list = Vec::with_capacity(n as usize);
                for _ in 0..n {
                    let id = r.u16()?;
                    let len = r.u16()? as usize;
                    let label = std::str::from_utf8(r.bytes(len)?).map_err(|_| WireError::Invalid("utf-8 label"))?;
                    list.push((id, label.to_string()));
                }
                Response::Algorithms(list)
            }
            method::PREDICT => Response::Predicted {
                prediction: get_prediction(&mut r)?,
                epoch: r.u64()?,
            },
            method::RECOMMEND => {
                let for_user = UserId(r.u32()?);
                let k = r.u16()?;
                let mut entries = Vec::with_capacity(k as usize);
                for _ in 0..k {
                    entries.push((ProfileId(r.u32()?), r.f64()?));
                }
                Response::Recommended {
                    list: RecommendationList { for_user, entries },
                    epoch: r.u64()?,
                }
            }
            method::INSERT => Response::Inserted {
                previous: get_previous(&mut r)?,
                epoch: r.u64()?,
            },
            method::PREDICT_THEN_INSERT => Response::PredictedInsert {
                prediction: get_prediction(&mut r)?,
                previous: get_previous(&mut r)?,
                epoch: r.u64()?,
            },
            method::INSERT_BATCH => Response::BatchInserted {
                count: r.u32()?,
                epoch: r.u64()?,
            },
            method::STATS => Response::Stats {
                stats: decode_stats(&mut r)?,
                epoch: r.u64()?,
            },
            other => return Err(WireError::UnknownMethod(other)),
        };
        r.finish()?;
        Ok(resp)
    }
}

/// An error frame answering `method_id`. Messages longer than `u16::MAX`
/// bytes are cut at a character boundary.
pub fn error_frame(method_id: u8, code: ErrorCode, message: &str) -> Frame {
    let mut end = message.len().min(u16::MAX as usize);
    while !message.is_char_boundary(end) {
        end -= 1;
    }
    let msg = &message.as_bytes()[..end];
    let mut out = Vec::with_capacity(4 + msg.len());
    out.extend_from_slice(&(code as u16).to_be_bytes());
    out.extend_from_slice(&(msg.len() as u16).to_be_bytes());
    out.extend_from_slice(msg);
    Frame::new(FrameKind::Error, method_id, out)
}

/// `(code, message)` of an error payload. Unknown codes are reported as
/// their raw value.
pub fn decode_error(payload: &[u8]) -> Result<(u16, String), WireError> {
    let mut r = Reader::new(payload);
    let code = r.u16()?;
    let len = r.u16()? as usize;
    let msg = String::from_utf8_lossy(r.bytes(len)?).into_owned();
    r.finish()?;
    Ok((code, msg))
}
