use std::net::SocketAddr;
use std::time::Duration;

use parking_lot::Mutex;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CurvePoint, EvalError, NmaeAccumulator, Protocol, ValidationReport};
use crate::manager::DataManager;
use crate::predict::{estimate, AlgorithmSpec, Prediction};
use crate::protocol::client::CcpClient;
use crate::ratings::{Rating, RatingScale, RatingsMatrix};
use crate::view::Audited;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProductionConfig {
    pub n_clients: u32,
    pub block_size: u32,
    pub split_seed: u64,
    pub order_seed: u64,
}

impl Default for ProductionConfig {
    fn default() -> Self {
        ProductionConfig {
            n_clients: 100,
            block_size: 10_000,
            split_seed: 1,
            order_seed: 2,
        }
    }
}

impl ProductionConfig {
    fn check(&self) -> Result<(), EvalError> {
        if self.n_clients == 0 || self.block_size == 0 {
            return Err(EvalError::InvalidConfig("n_clients and block_size must be at least 1".into()));
        }
        Ok(())
    }
}

/// One simulated insertion. `seq` is its position in the global order in
/// which the writer applied insertions, starting at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogEntry {
    pub seq: u64,
    pub client: u32,
    pub rating: Rating,
    pub prediction: Prediction,
}

#[derive(Debug, Clone)]
pub struct ProductionRun {
    pub report: ValidationReport,
    /// Insertion log sorted by `seq`.
    pub log: Vec<LogEntry>,
    /// The initial half, as loaded before the simulation.
    pub initial: Vec<Rating>,
    /// Predictions whose target was already stored when they were made.
    pub leaks: u64,
}

/// Splits the ratings 50/50 at random by `split_seed` into the initial set
/// and the simulation set, then orders the simulation set by `order_seed`.
pub fn split_for_production(m: &RatingsMatrix, cfg: &ProductionConfig) -> (Vec<Rating>, Vec<Rating>) {
    let mut all: Vec<Rating> = m.iter().collect();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.split_seed));
    let sim = all.split_off(all.len() / 2);
    let mut sim = sim;
    sim.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.order_seed));
    (all, sim)
}

/// Round-robin deal: client `c` gets entries `c, c + n, c + 2n, ...`.
fn deal(sim: &[Rating], n_clients: u32) -> Vec<Vec<Rating>> {
    let mut out = vec![Vec::new(); n_clients as usize];
    for (i, r) in sim.iter().enumerate() {
        out[i % n_clients as usize].push(*r);
    }
    out
}

/// Per-block NMAE over a log sorted by `seq`. Blocks hold `block_size`
/// consecutive insertions; a trailing partial block is kept.
pub fn block_curve(log: &[LogEntry], block_size: u32, scale: RatingScale) -> (Vec<CurvePoint>, NmaeAccumulator) {
    let mut total = NmaeAccumulator::default();
    let curve = log
        .chunks(block_size as usize)
        .enumerate()
        .map(|(b, chunk)| {
            let mut acc = NmaeAccumulator::default();
            for e in chunk {
                acc.add(&e.prediction, e.rating.value);
            }
            total.merge(&acc);
            CurvePoint::from_acc(b as u32 + 1, &acc, scale)
        })
        .collect();
    (curve, total)
}

fn finish(
    spec: AlgorithmSpec,
    cfg: &ProductionConfig,
    scale: RatingScale,
    initial: Vec<Rating>,
    mut log: Vec<LogEntry>,
    leaks: u64,
    valid: bool,
    mode: &str,
) -> ProductionRun {
    log.sort_by_key(|e| e.seq);
    let (curve, total) = block_curve(&log, cfg.block_size, scale);
    let mut report = ValidationReport::new(Protocol::Production, spec, &total, scale)
        .with_config("mode", mode)
        .with_config("n_clients", cfg.n_clients)
        .with_config("block_size", cfg.block_size)
        .with_config("split_seed", cfg.split_seed)
        .with_config("order_seed", cfg.order_seed)
        .with_config("initial", initial.len())
        .with_config("inserted", log.len());
    report.curve = curve;
    report.valid = valid;
    report.extra.push(("leaks".into(), leaks.to_string()));
    ProductionRun {
        report,
        log,
        initial,
        leaks,
    }
}

/// Runs the simulation in process: `n_clients` threads share one data
/// manager, each predicting and then inserting its ratings in turn.
pub fn run_production(m: &RatingsMatrix, spec: &AlgorithmSpec, cfg: ProductionConfig) -> Result<ProductionRun, EvalError> {
    cfg.check()?;
    let (initial, sim) = split_for_production(m, &cfg);
    let dm = DataManager::new(
        RatingsMatrix::from_ratings(m.scale(), initial.iter().copied()).expect("ratings from a valid matrix"),
        Default::default(),
        vec![*spec],
    );
    let leaks = Mutex::new(0u64);
    let log = Mutex::new(Vec::with_capacity(sim.len()));
    let base = dm.epoch();
    std::thread::scope(|s| {
        for (c, share) in deal(&sim, cfg.n_clients).into_iter().enumerate() {
            let (dm, log, leaks) = (&dm, &log, &leaks);
            s.spawn(move || {
                let mut mine = Vec::with_capacity(share.len());
                for r in share {
                    let out = dm.predict_then_insert(0, r).expect("simulated rating is valid");
                    if out.previous.is_some() {
                        *leaks.lock() += 1;
                    }
                    mine.push(LogEntry {
                        seq: out.epoch - base - 1,
                        client: c as u32,
                        rating: r,
                        prediction: out.prediction,
                    });
                }
                log.lock().extend(mine);
            });
        }
    });
    Ok(finish(*spec, &cfg, m.scale(), initial, log.into_inner(), leaks.into_inner(), true, "in_process"))
}

/// A live server to drive instead of an in-process manager.
#[derive(Debug, Clone, Copy)]
pub struct RemoteTarget {
    /// Address of the server's data service.
    pub data: SocketAddr,
    /// Roster id of the algorithm to evaluate.
    pub algorithm: u16,
    pub timeout: Duration,
}

const PRELOAD_CHUNK: usize = 100_000;

/// Runs the simulation against a server that starts out empty. The initial
/// half is preloaded in batches, then every client opens its own
/// connection. If the server becomes unreachable the report covers what
/// completed and is marked invalid.
pub fn run_production_remote(
    m: &RatingsMatrix,
    spec: &AlgorithmSpec,
    cfg: ProductionConfig,
    target: &RemoteTarget,
) -> Result<ProductionRun, EvalError> {
    cfg.check()?;
    let (initial, sim) = split_for_production(m, &cfg);
    let scale = m.scale();
    let bail = |initial, log, valid| Ok(finish(*spec, &cfg, scale, initial, log, 0, valid, "remote"));

    let base = {
        let Ok(mut c) = CcpClient::connect_timeout(&target.data, target.timeout) else {
            return bail(initial, Vec::new(), false);
        };
        let mut epoch = match c.ping() {
            Ok(e) => e,
            Err(_) => return bail(initial, Vec::new(), false),
        };
        for chunk in initial.chunks(PRELOAD_CHUNK) {
            match c.insert_batch(chunk.to_vec()) {
                Ok((_, e)) => epoch = e,
                Err(_) => return bail(initial, Vec::new(), false),
            }
        }
        epoch
    };

    let log = Mutex::new(Vec::with_capacity(sim.len()));
    let leaks = Mutex::new(0u64);
    let failed = std::sync::atomic::AtomicBool::new(false);
    std::thread::scope(|s| {
        for (c, share) in deal(&sim, cfg.n_clients).into_iter().enumerate() {
            let (log, leaks, failed) = (&log, &leaks, &failed);
            s.spawn(move || {
                let mut mine = Vec::with_capacity(share.len());
                let client = CcpClient::connect_timeout(&target.data, target.timeout);
                if let Ok(mut client) = client {
                    for r in share {
                        if failed.load(std::sync::atomic::Ordering::Relaxed) {
                            break;
                        }
                        match client.predict_then_insert(target.algorithm, r) {
                            Ok((prediction, previous, epoch)) => {
                                if previous.is_some() {
                                    *leaks.lock() += 1;
                                }
                                mine.push(LogEntry {
                                    seq: epoch - base - 1,
                                    client: c as u32,
                                    rating: r,
                                    prediction,
                                });
                            }
                            Err(_) => {
                                failed.store(true, std::sync::atomic::Ordering::Relaxed);
                                break;
                            }
                        }
                    }
                } else {
                    failed.store(true, std::sync::atomic::Ordering::Relaxed);
                }
                log.lock().extend(mine);
            });
        }
    });
    let valid = !failed.into_inner();
    let mut run = finish(*spec, &cfg, scale, initial, log.into_inner(), leaks.into_inner(), valid, "remote");
    run.report.config.push(("algorithm_id".into(), target.algorithm.to_string()));
    Ok(run)
}

/// Outcome of replaying a production log single-threaded.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayCheck {
    pub predictions: Vec<Prediction>,
    /// Log entries whose recorded prediction differs bitwise from the replay.
    pub mismatches: usize,
    /// Observations of a target cell during its own prediction.
    pub leaks: u64,
}

/// Replays `log` in `seq` order on a fresh matrix holding `initial`, with
/// plain from-scratch prediction behind a leak detector.
pub fn replay_production(scale: RatingScale, initial: &[Rating], spec: &AlgorithmSpec, log: &[LogEntry]) -> ReplayCheck {
    let mut m = RatingsMatrix::from_ratings(scale, initial.iter().copied()).expect("valid initial set");
    let mut predictions = Vec::with_capacity(log.len());
    let (mut mismatches, mut leaks) = (0, 0u64);
    for e in log {
        let r = e.rating;
        let p = match (m.user_index(r.user), m.profile_index(r.profile)) {
            (Some(u), Some(p)) => {
                let audited = Audited::new(&m, u, p);
                let est = estimate(&audited, spec, r.user, r.profile);
                leaks += audited.leaks() as u64;
                Prediction::from_estimate(est, scale)
            }
            _ => Prediction::from_estimate(estimate(&m, spec, r.user, r.profile), scale),
        };
        let same = match (p, e.prediction) {
            (Prediction::Value(a), Prediction::Value(b)) => a.to_bits() == b.to_bits(),
            (a, b) => a == b,
        };
        if !same {
            mismatches += 1;
        }
        predictions.push(p);
        m.insert(r).expect("valid rating");
    }
    ReplayCheck {
        predictions,
        mismatches,
        leaks,
    }
}
