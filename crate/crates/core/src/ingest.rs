//! CSV ingestion: `user_id,profile_id,value` rating files and
//! `user_id,{M|F|U}` gender files.

use std::io::Read;

use thiserror::Error;

use crate::ratings::{
    Attributes, Gender, Rating, RatingError, RatingScale, RatingsMatrix, UserId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnError {
    #[default]
    Abort,
    SkipAndCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub scale: RatingScale,
    pub has_header: bool,
    pub on_error: OnError,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            scale: RatingScale::DEFAULT,
            has_header: false,
            on_error: OnError::Abort,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("expected {expected} fields, found {found}")]
    FieldCount { expected: usize, found: usize },
    #[error("field {field} is not an integer: {text:?}")]
    NotInteger { field: usize, text: String },
    #[error("unknown gender code {0:?}")]
    BadGender(String),
    #[error(transparent)]
    Rating(#[from] RatingError),
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("line {line}: {error}")]
    Record { line: u64, error: RecordError },
    #[error("read failed: {0}")]
    Csv(#[from] csv::Error),
}

/// What happened to the input beyond the accepted records.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestSummary {
    pub accepted: u64,
    pub skipped: u64,
    /// The first few rejected lines, for diagnostics.
    pub first_errors: Vec<(u64, RecordError)>,
}

const KEPT_ERRORS: usize = 10;

impl IngestSummary {
    fn reject(&mut self, line: u64, error: RecordError, on_error: OnError) -> Result<(), IngestError> {
        match on_error {
            OnError::Abort => Err(IngestError::Record { line, error }),
            OnError::SkipAndCount => {
                self.skipped += 1;
                if self.first_errors.len() < KEPT_ERRORS {
                    self.first_errors.push((line, error));
                }
                Ok(())
            }
        }
    }
}

fn reader<R: Read>(source: R, has_header: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source)
}

fn int_field<T: std::str::FromStr>(rec: &csv::StringRecord, field: usize) -> Result<T, RecordError> {
    let text = &rec[field];
    text.parse().map_err(|_| RecordError::NotInteger {
        field: field + 1,
        text: text.to_string(),
    })
}

fn parse_rating(rec: &csv::StringRecord, scale: RatingScale) -> Result<Rating, RecordError> {
    if rec.len() != 3 {
        return Err(RecordError::FieldCount {
            expected: 3,
            found: rec.len(),
        });
    }
    let r = Rating::new(int_field(rec, 0)?, int_field(rec, 1)?, int_field(rec, 2)?);
    scale.check(r.value)?;
    Ok(r)
}

/// Reads a rating stream. Duplicate (user, profile) pairs keep the last value.
pub fn ingest_ratings<R: Read>(
    source: R,
    opts: &IngestOptions,
) -> Result<(RatingsMatrix, IngestSummary), IngestError> {
    let mut m = RatingsMatrix::new(opts.scale);
    let mut summary = IngestSummary::default();
    let mut rdr = reader(source, opts.has_header);
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec)? {
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match parse_rating(&rec, opts.scale) {
            Ok(r) => {
                m.insert(r).expect("value checked against scale");
                summary.accepted += 1;
            }
            Err(e) => summary.reject(line, e, opts.on_error)?,
        }
    }
    Ok((m, summary))
}

/// Reads a `user_id,gender` stream.
pub fn ingest_genders<R: Read>(
    source: R,
    opts: &IngestOptions,
) -> Result<(Attributes, IngestSummary), IngestError> {
    let mut attrs = Attributes::new();
    let mut summary = IngestSummary::default();
    let mut rdr = reader(source, opts.has_header);
    let mut rec = csv::StringRecord::new();
    while rdr.read_record(&mut rec)? {
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let parsed = if rec.len() != 2 {
            Err(RecordError::FieldCount {
                expected: 2,
                found: rec.len(),
            })
        } else {
            int_field::<u32>(&rec, 0).and_then(|u| {
                Gender::parse(&rec[1])
                    .map(|g| (UserId(u), g))
                    .ok_or_else(|| RecordError::BadGender(rec[1].to_string()))
            })
        };
        match parsed {
            Ok((u, g)) => {
                attrs.set(u, g);
                summary.accepted += 1;
            }
            Err(e) => summary.reject(line, e, opts.on_error)?,
        }
    }
    Ok((attrs, summary))
}
