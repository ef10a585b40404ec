//! File-backed storage: a full snapshot plus an append-only insertion log.
//!
//! Both formats are big-endian with a 4-byte magic and a `u16` version.
//!
//! ```text
//! snapshot   "CFSN" ver:u16 min:i32 max:i32
//!            n_attrs:u64 { user:u32 gender:u8 }*
//!            n_ratings:u64 { user:u32 profile:u32 value:i32 }*
//! log        "CFLG" ver:u16 { user:u32 profile:u32 value:i32 }*
//! ```
//!
//! Gender bytes are ASCII `M`, `F` or `U`. A log whose last record is cut
//! short (a torn write) loads every complete record and reports the tail.

use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::ratings::{Attributes, Gender, Rating, RatingError, RatingScale, RatingsMatrix, UserId};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"CFSN";
pub const LOG_MAGIC: [u8; 4] = *b"CFLG";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a {expected} file (bad magic)")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    BadVersion(u16),
    #[error("file is truncated")]
    Truncated,
    #[error("invalid gender byte {0:#04x}")]
    BadGender(u8),
    #[error(transparent)]
    Rating(#[from] RatingError),
}

fn read_exact_or_truncated<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<(), PersistError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        ErrorKind::UnexpectedEof => PersistError::Truncated,
        _ => PersistError::Io(e),
    })
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, PersistError> {
    let mut b = [0; 2];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u16::from_be_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, PersistError> {
    let mut b = [0; 8];
    read_exact_or_truncated(r, &mut b)?;
    Ok(u64::from_be_bytes(b))
}

fn read_i32<R: Read>(r: &mut R) -> Result<i32, PersistError> {
    let mut b = [0; 4];
    read_exact_or_truncated(r, &mut b)?;
    Ok(i32::from_be_bytes(b))
}

fn read_header<R: Read>(r: &mut R, magic: [u8; 4], expected: &'static str) -> Result<(), PersistError> {
    let mut m = [0; 4];
    read_exact_or_truncated(r, &mut m).map_err(|_| PersistError::BadMagic { expected })?;
    if m != magic {
        return Err(PersistError::BadMagic { expected });
    }
    let v = read_u16(r)?;
    if v != FORMAT_VERSION {
        return Err(PersistError::BadVersion(v));
    }
    Ok(())
}

fn encode_rating(r: &Rating) -> [u8; 12] {
    let mut b = [0; 12];
    b[..4].copy_from_slice(&r.user.0.to_be_bytes());
    b[4..8].copy_from_slice(&r.profile.0.to_be_bytes());
    b[8..].copy_from_slice(&r.value.to_be_bytes());
    b
}

fn decode_rating(b: &[u8; 12]) -> Rating {
    Rating::new(
        u32::from_be_bytes(b[..4].try_into().unwrap()),
        u32::from_be_bytes(b[4..8].try_into().unwrap()),
        i32::from_be_bytes(b[8..].try_into().unwrap()),
    )
}

pub fn write_snapshot<W: Write>(out: W, m: &RatingsMatrix, attrs: &Attributes) -> Result<(), PersistError> {
    let mut w = BufWriter::new(out);
    w.write_all(&SNAPSHOT_MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_be_bytes())?;
    w.write_all(&m.scale().min().to_be_bytes())?;
    w.write_all(&m.scale().max().to_be_bytes())?;
    let records = attrs.records();
    w.write_all(&(records.len() as u64).to_be_bytes())?;
    for rec in records {
        w.write_all(&rec.user.0.to_be_bytes())?;
        w.write_all(&[rec.gender.code() as u8])?;
    }
    w.write_all(&(m.rating_count() as u64).to_be_bytes())?;
    for r in m.iter() {
        w.write_all(&encode_rating(&r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_snapshot<R: Read>(input: R) -> Result<(RatingsMatrix, Attributes), PersistError> {
    let mut r = BufReader::new(input);
    read_header(&mut r, SNAPSHOT_MAGIC, "snapshot")?;
    let scale = RatingScale::new(read_i32(&mut r)?, read_i32(&mut r)?)?;
    let mut attrs = Attributes::new();
    for _ in 0..read_u64(&mut r)? {
        let mut b = [0; 5];
        read_exact_or_truncated(&mut r, &mut b)?;
        let code = b[4];
        let g = Gender::parse(std::str::from_utf8(&[code]).unwrap_or("?")).ok_or(PersistError::BadGender(code))?;
        attrs.set(UserId(u32::from_be_bytes(b[..4].try_into().unwrap())), g);
    }
    let mut m = RatingsMatrix::new(scale);
    for _ in 0..read_u64(&mut r)? {
        let mut b = [0; 12];
        read_exact_or_truncated(&mut r, &mut b)?;
        m.insert(decode_rating(&b))?;
    }
    Ok((m, attrs))
}

pub fn save_snapshot(path: &Path, m: &RatingsMatrix, attrs: &Attributes) -> Result<(), PersistError> {
    write_snapshot(File::create(path)?, m, attrs)
}

pub fn load_snapshot(path: &Path) -> Result<(RatingsMatrix, Attributes), PersistError> {
    read_snapshot(File::open(path)?)
}

/// Log contents: the complete records and the byte length of any torn tail.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LogContents {
    pub ratings: Vec<Rating>,
    pub torn_bytes: usize,
}

pub fn read_log<R: Read>(input: R) -> Result<LogContents, PersistError> {
    let mut r = BufReader::new(input);
    read_header(&mut r, LOG_MAGIC, "insertion log")?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    let chunks = rest.chunks_exact(12);
    let torn_bytes = chunks.remainder().len();
    let ratings = chunks.map(|c| decode_rating(c.try_into().unwrap())).collect();
    Ok(LogContents { ratings, torn_bytes })
}

/// Append handle on an insertion log file.
pub struct InsertLog {
    file: BufWriter<File>,
}

impl InsertLog {
    /// Opens `path` for appending, writing the header if the file is new
    /// or empty and checking it otherwise.
    pub fn open(path: &Path) -> Result<Self, PersistError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        if file.metadata()?.len() == 0 {
            file.write_all(&LOG_MAGIC)?;
            file.write_all(&FORMAT_VERSION.to_be_bytes())?;
            file.flush()?;
        } else {
            read_header(&mut File::open(path)?, LOG_MAGIC, "insertion log")?;
        }
        Ok(InsertLog {
            file: BufWriter::new(file),
        })
    }

    /// Appends and flushes one record.
    pub fn append(&mut self, r: &Rating) -> Result<(), PersistError> {
        self.file.write_all(&encode_rating(r))?;
        self.file.flush()?;
        Ok(())
    }

    pub fn append_all(&mut self, rs: &[Rating]) -> Result<(), PersistError> {
        for r in rs {
            self.file.write_all(&encode_rating(r))?;
        }
        self.file.flush()?;
        Ok(())
    }
}

pub fn load_log(path: &Path) -> Result<LogContents, PersistError> {
    read_log(File::open(path)?)
}
