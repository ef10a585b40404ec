//! The stateless TCP server. Each service listens on its own port and
//! answers only its own method range plus the common methods; every
//! connection gets a thread and carries one request at a time.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use parking_lot::Mutex;
use thiserror::Error;

use crate::manager::{DataManager, ManagerError};
use crate::protocol::frame::{Frame, FrameDecoder, FrameKind};
use crate::protocol::wire::{error_frame, method, ErrorCode, Request, Response, WireError, MAX_RECOMMEND};
use crate::ratings::RatingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Service {
    Recommender,
    Data,
    Stats,
}

impl Service {
    pub const ALL: [Service; 3] = [Service::Recommender, Service::Data, Service::Stats];

    pub fn name(&self) -> &'static str {
        match self {
            Service::Recommender => "recommender",
            Service::Data => "data",
            Service::Stats => "stats",
        }
    }

    /// Whether this service answers `method_id`.
    pub fn owns(&self, method_id: u8) -> bool {
        if matches!(method_id, method::PING | method::LIST_ALGORITHMS) {
            return true;
        }
        let range = match self {
            Service::Recommender => 0x10..=0x1f,
            Service::Data => 0x20..=0x2f,
            Service::Stats => 0x30..=0x3f,
        };
        range.contains(&method_id)
    }
}

impl fmt::Display for Service {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Service {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Service::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown service {s:?} (expected recommender, data or stats)"))
    }
}

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("service {0} registered twice")]
    DuplicateService(Service),
    #[error("port {0} assigned to more than one service")]
    DuplicatePort(u16),
    #[error("no service registered")]
    Empty,
    #[error("cannot bind {service} on {addr}: {source}")]
    Bind {
        service: Service,
        addr: SocketAddr,
        source: io::Error,
    },
}

/// Which address each service listens on. Port 0 picks a free port.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ServiceRegistry {
    services: Vec<(Service, SocketAddr)>,
}

impl ServiceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, service: Service, addr: SocketAddr) -> Result<Self, ServeError> {
        if self.services.iter().any(|(s, _)| *s == service) {
            return Err(ServeError::DuplicateService(service));
        }
        if addr.port() != 0 && self.services.iter().any(|(_, a)| a.port() == addr.port()) {
            return Err(ServeError::DuplicatePort(addr.port()));
        }
        self.services.push((service, addr));
        Ok(self)
    }

    /// Every service on an ephemeral loopback port.
    pub fn loopback() -> Self {
        ServiceRegistry {
            services: Service::ALL
                .into_iter()
                .map(|s| (s, SocketAddr::from(([127, 0, 0, 1], 0))))
                .collect(),
        }
    }

    pub fn services(&self) -> &[(Service, SocketAddr)] {
        &self.services
    }
}

fn manager_error(method_id: u8, e: &ManagerError) -> Frame {
    let code = match e {
        ManagerError::UnknownAlgorithm(_) => ErrorCode::UnknownAlgorithm,
        ManagerError::UnknownUser(_) => ErrorCode::UnknownUser,
        ManagerError::Rating(RatingError::OutOfScale { .. }) => ErrorCode::OutOfScale,
        ManagerError::InvalidArgument(_) => ErrorCode::InvalidArgument,
        ManagerError::Rating(_) | ManagerError::Persist(_) => ErrorCode::Internal,
    };
    error_frame(method_id, code, &e.to_string())
}

/// Answers one request frame. Never fails: every problem becomes an error
/// frame that echoes the request's method id.
pub fn dispatch(dm: &DataManager, service: Service, req: &Frame) -> Frame {
    let m = req.method;
    if req.kind != FrameKind::Request {
        return error_frame(m, ErrorCode::Protocol, "expected a request frame");
    }
    if !service.owns(m) {
        return error_frame(m, ErrorCode::UnknownMethod, &format!("method {m:#04x} not served by the {service} service"));
    }
    let request = match Request::decode(m, &req.payload) {
        Ok(r) => r,
        Err(e @ WireError::UnknownMethod(_)) => return error_frame(m, ErrorCode::UnknownMethod, &e.to_string()),
        Err(e) => return error_frame(m, ErrorCode::Malformed, &e.to_string()),
    };
    let result = match request {
        Request::Ping => Ok(Response::Pong { epoch: dm.epoch() }),
        Request::ListAlgorithms => Ok(Response::Algorithms(
            dm.roster()
                .iter()
                .enumerate()
                .map(|(i, s)| (i as u16, s.to_string()))
                .collect(),
        )),
        Request::Predict {
            algorithm,
            user,
            profile,
        } => dm
            .predict(algorithm, user, profile)
            .map(|p| Response::Predicted {
                prediction: p.prediction,
                epoch: p.epoch,
            }),
        Request::Recommend {
            algorithm,
            user,
            n,
            opposite_sex_only,
        } => {
            if n > MAX_RECOMMEND {
                Err(ManagerError::InvalidArgument(format!("list length {n} exceeds {MAX_RECOMMEND}")))
            } else {
                dm.recommend(algorithm, user, n as usize, opposite_sex_only)
                    .map(|(list, epoch)| Response::Recommended { list, epoch })
            }
        }
        Request::Insert(r) => dm.insert(r).map(|ins| Response::Inserted {
            previous: ins.previous,
            epoch: ins.epoch,
        }),
        Request::PredictThenInsert { algorithm, rating } => {
            dm.predict_then_insert(algorithm, rating)
                .map(|pi| Response::PredictedInsert {
                    prediction: pi.prediction,
                    previous: pi.previous,
                    epoch: pi.epoch,
                })
        }
        Request::InsertBatch(rs) => dm.insert_batch(&rs).map(|(count, epoch)| Response::BatchInserted {
            count: count as u32,
            epoch,
        }),
        Request::Stats => {
            let (stats, epoch) = dm.stats();
            Ok(Response::Stats { stats, epoch })
        }
    };
    match result {
        Ok(resp) => resp.to_frame(),
        Err(e) => manager_error(m, &e),
    }
}

type Connections = Arc<Mutex<HashMap<u64, TcpStream>>>;

/// A running server. Dropping it shuts it down.
pub struct ServerHandle {
    bound: Vec<(Service, SocketAddr)>,
    stop: Arc<AtomicBool>,
    conns: Connections,
    acceptors: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    pub fn addr(&self, service: Service) -> Option<SocketAddr> {
        self.bound.iter().find(|(s, _)| *s == service).map(|(_, a)| *a)
    }

    pub fn addrs(&self) -> &[(Service, SocketAddr)] {
        &self.bound
    }

    pub fn open_connections(&self) -> usize {
        self.conns.lock().len()
    }

    /// Stops accepting, closes every open connection and waits for the
    /// listener threads.
    pub fn shutdown(mut self) {
        self.stop_now();
    }

    fn stop_now(&mut self) {
        if self.stop.swap(true, Ordering::SeqCst) {
            return;
        }
        for (_, addr) in &self.bound {
            // Wake the blocking accept.
            let _ = TcpStream::connect(addr);
        }
        for (_, c) in self.conns.lock().drain() {
            let _ = c.shutdown(std::net::Shutdown::Both);
        }
        for h in self.acceptors.drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.stop_now();
    }
}

fn serve_connection(dm: &DataManager, service: Service, mut stream: TcpStream) -> io::Result<()> {
    stream.set_nodelay(true)?;
    let mut decoder = FrameDecoder::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        loop {
            match decoder.next_frame() {
                Ok(Some(req)) => {
                    let reply = dispatch(dm, service, &req);
                    stream.write_all(&reply.encode())?;
                }
                Ok(None) => break,
                Err(e) => {
                    let reply = error_frame(0, ErrorCode::Protocol, &e.to_string());
                    stream.write_all(&reply.encode())?;
                    return Ok(());
                }
            }
        }
        let n = stream.read(&mut buf)?;
        if n == 0 {
            return Ok(());
        }
        decoder.push(&buf[..n]);
    }
}

/// Binds every registered service and starts serving `dm`.
pub fn serve(registry: &ServiceRegistry, dm: Arc<DataManager>) -> Result<ServerHandle, ServeError> {
    if registry.services.is_empty() {
        return Err(ServeError::Empty);
    }
    let mut listeners = Vec::new();
    for &(service, addr) in &registry.services {
        let l = TcpListener::bind(addr).map_err(|source| ServeError::Bind { service, addr, source })?;
        let local = l.local_addr().map_err(|source| ServeError::Bind { service, addr, source })?;
        listeners.push((service, local, l));
    }
    let stop = Arc::new(AtomicBool::new(false));
    let conns: Connections = Arc::default();
    let next_id = Arc::new(AtomicU64::new(0));
    let mut bound = Vec::new();
    let mut acceptors = Vec::new();
    for (service, local, listener) in listeners {
        bound.push((service, local));
        let (stop, conns, dm, next_id) = (stop.clone(), conns.clone(), dm.clone(), next_id.clone());
        acceptors.push(std::thread::spawn(move || {
            for stream in listener.incoming() {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = stream else { continue };
                let id = next_id.fetch_add(1, Ordering::Relaxed);
                if let Ok(clone) = stream.try_clone() {
                    conns.lock().insert(id, clone);
                }
                let (dm, conns) = (dm.clone(), conns.clone());
                std::thread::spawn(move || {
                    let _ = serve_connection(&dm, service, stream);
                    conns.lock().remove(&id);
                });
            }
        }));
    }
    Ok(ServerHandle {
        bound,
        stop,
        conns,
        acceptors,
    })
}
