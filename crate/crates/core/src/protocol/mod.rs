//! CCP, the compact binary request/response protocol of the server.

pub mod client;
pub mod frame;
pub mod wire;

pub use client::{CcpClient, ClientError};
pub use frame::{decode, Decoded, Frame, FrameDecoder, FrameError, FrameKind, HEADER_LEN, MAX_PAYLOAD};
pub use wire::{method, ErrorCode, Request, Response, WireError};
