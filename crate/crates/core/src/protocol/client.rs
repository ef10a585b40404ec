use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpStream, ToSocketAddrs};
use std::time::Duration;

use thiserror::Error;

use super::frame::{Frame, FrameDecoder, FrameError, FrameKind};
use super::wire::{decode_error, Request, Response, WireError};
use crate::predict::{Prediction, RecommendationList};
use crate::ratings::{ProfileId, Rating, UserId};
use crate::stats::DatasetStats;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("framing: {0}")]
    Frame(#[from] FrameError),
    #[error("payload: {0}")]
    Wire(#[from] WireError),
    #[error("server error {code}: {message}")]
    Remote { code: u16, message: String },
    #[error("connection closed by server")]
    Closed,
    #[error("unexpected reply for method {0:#04x}")]
    Unexpected(u8),
}

/// Blocking CCP client, one request in flight at a time.
pub struct CcpClient {
    stream: TcpStream,
    decoder: FrameDecoder,
    buf: Vec<u8>,
}

impl CcpClient {
    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self, ClientError> {
        let stream = TcpStream::connect(addr)?;
        Self::from_stream(stream)
    }

    pub fn connect_timeout(addr: &SocketAddr, timeout: Duration) -> Result<Self, ClientError> {
        let stream = TcpStream::connect_timeout(addr, timeout)?;
        Self::from_stream(stream)
    }

    fn from_stream(stream: TcpStream) -> Result<Self, ClientError> {
        stream.set_nodelay(true)?;
        Ok(CcpClient {
            stream,
            decoder: FrameDecoder::new(),
            buf: vec![0; 64 * 1024],
        })
    }

    /// Sends raw bytes, for tests that need malformed input.
    pub fn send_bytes(&mut self, bytes: &[u8]) -> Result<(), ClientError> {
        self.stream.write_all(bytes)?;
        Ok(())
    }

    /// Reads the next whole frame.
    pub fn read_frame(&mut self) -> Result<Frame, ClientError> {
        loop {
            if let Some(f) = self.decoder.next_frame()? {
                return Ok(f);
            }
            let n = self.stream.read(&mut self.buf)?;
            if n == 0 {
                return Err(ClientError::Closed);
            }
            self.decoder.push(&self.buf[..n]);
        }
    }

    /// Sends one frame and returns the reply frame whatever its kind.
    pub fn call_frame(&mut self, f: &Frame) -> Result<Frame, ClientError> {
        self.stream.write_all(&f.encode())?;
        self.read_frame()
    }

    pub fn call(&mut self, req: &Request) -> Result<Response, ClientError> {
        let reply = self.call_frame(&req.to_frame())?;
        match reply.kind {
            FrameKind::Response => Ok(Response::decode(reply.method, &reply.payload)?),
            FrameKind::Error => {
                let (code, message) = decode_error(&reply.payload)?;
                Err(ClientError::Remote { code, message })
            }
            FrameKind::Request => Err(ClientError::Unexpected(reply.method)),
        }
    }

    pub fn ping(&mut self) -> Result<u64, ClientError> {
        match self.call(&Request::Ping)? {
            Response::Pong { epoch } => Ok(epoch),
            other => Err(ClientError::Unexpected(other.method())),
        }
    }

    pub fn list_algorithms(&mut self) -> Result<Vec<(u16, String)>, ClientError> {
        match self.call(&Request::ListAlgorithms)? {
            Response::Algorithms(list) => Ok(list),
            other => Err(ClientError::Unexpected(other.method())),
        }
    }

    pub fn predict(&mut self, algorithm: u16, user: UserId, profile: ProfileId) -> Result<(Prediction, u64), ClientError> {
        match self.call(&Request::Predict { algorithm, user, profile })? {
            Response::Predicted { prediction, epoch } => Ok((prediction, epoch)),
            other => Err(ClientError::Unexpected(other.method())),
        }
    }

    pub fn recommend(
        &mut self,
        algorithm: u16,
        user: UserId,
        n: u16,
        opposite_sex_only: bool,
    ) -> Result<(RecommendationList, u64), ClientError> {
        match self.call(&Request::Recommend {
            algorithm,
            user,
            n,
            opposite_sex_only,
        })? {
            Response::Recommended { list, epoch } => Ok((list, epoch)),
            other => Err(ClientError::Unexpected(other.method())),
        }
    }

    pub fn insert(&mut self, r: Rating) -> Result<(Option<i32>, u64), ClientError> {
        match self.call(&Request::Insert(r))? {
            Response::Inserted { previous, epoch } => Ok((previous, epoch)),
            other => Err(ClientError::Unexpected(other.method())),
        }
    }

    pub fn predict_then_insert(&mut self, algorithm: u16, rating: Rating) -> Result<(Prediction, Option<i32>, u64), ClientError> {
        match self.call(&Request::PredictThenInsert { algorithm, rating })? {
            Response::PredictedInsert {
                prediction,
                previous,
                epoch,
            } => Ok((prediction, previous, epoch)),
            other => Err(ClientError::Unexpected(other.method())),
        }
    }

    pub fn insert_batch(&mut self, rs: Vec<Rating>) -> Result<(u32, u64), ClientError> {
        match self.call(&Request::InsertBatch(rs))? {
            Response::BatchInserted { count, epoch } => Ok((count, epoch)),
            other => Err(ClientError::Unexpected(other.method())),
        }
    }

    pub fn stats(&mut self) -> Result<(DatasetStats, u64), ClientError> {
        match self.call(&Request::Stats)? {
            Response::Stats { stats, epoch } => Ok((stats, epoch)),
            other => Err(ClientError::Unexpected(other.method())),
        }
    }
}
