use std::sync::Arc;
use std::time::Duration;

use colfi_core::evaluation::{replay_production, run_production_remote, ProductionConfig, RemoteTarget};
use colfi_core::manager::DataManager;
use colfi_core::predict::predict;
use colfi_core::protocol::{CcpClient, Request};
use colfi_core::server::{serve, Service, ServiceRegistry};
use colfi_core::synthetic::{matrix, taste_clusters, TasteConfig};
use colfi_core::*;

fn small() -> RatingsMatrix {
    let cfg = TasteConfig {
        users: 120,
        profiles: 80,
        ratings_per_user: (10, 30),
        ..TasteConfig::standard()
    };
    matrix(cfg.scale, taste_clusters(&cfg, 4))
}

fn roster() -> Vec<AlgorithmSpec> {
    let p = SimilarityParams::new(3, 10).unwrap();
    vec![AlgorithmSpec::random(7), AlgorithmSpec::mean(), AlgorithmSpec::user_user(p), AlgorithmSpec::item_item(p)]
}

#[test]
fn hundred_parallel_clients() {
    let m = small();
    let dm = Arc::new(DataManager::new(m.clone(), Attributes::new(), roster()));
    let server = serve(&ServiceRegistry::loopback(), dm).unwrap();
    let addr = server.addr(Service::Recommender).unwrap();
    let specs = roster();
    std::thread::scope(|s| {
        for c in 0..100u32 {
            let (m, specs) = (&m, &specs);
            s.spawn(move || {
                let mut client = CcpClient::connect(addr).unwrap();
                for k in 0..20u32 {
                    let algo = ((c + k) % 4) as u16;
                    let (a, j) = (UserId((c * 13 + k) % 120), ProfileId((c * 7 + k * 3) % 80));
                    let (got, _) = client.predict(algo, a, j).unwrap();
                    assert_eq!(got, predict(m, None, &specs[algo as usize], a, j));
                }
            });
        }
    });
}

#[test]
fn identical_requests_get_identical_bytes_across_connections_and_restarts() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("s.snap");
    let reqs: Vec<Request> = (0..50u32)
        .map(|i| match i % 3 {
            0 => Request::Predict { algorithm: (i % 4) as u16, user: UserId(i), profile: ProfileId(i + 1) },
            1 => Request::Recommend { algorithm: (i % 4) as u16, user: UserId(i), n: 5, opposite_sex_only: false },
            _ => Request::Predict { algorithm: 0, user: UserId(900), profile: ProfileId(i) },
        })
        .collect();
    let answer = |dm: Arc<DataManager>| {
        let server = serve(&ServiceRegistry::loopback(), dm).unwrap();
        let addr = server.addr(Service::Recommender).unwrap();
        let mut out = Vec::new();
        for r in &reqs {
            // a fresh connection per request
            let mut c = CcpClient::connect(addr).unwrap();
            out.push(c.call_frame(&r.to_frame()).unwrap().encode());
        }
        out
    };
    let dm = Arc::new(DataManager::new(small(), Attributes::new(), roster()));
    dm.save_snapshot(&snap).unwrap();
    let first = answer(dm.clone());
    assert_eq!(first, answer(dm));
    let reopened = Arc::new(DataManager::open(Some(&snap), None, RatingScale::DEFAULT, roster()).unwrap());
    assert_eq!(first, answer(reopened));
}

#[test]
fn concurrent_storm_is_linearizable() {
    let base = small();
    let dm = Arc::new(DataManager::new(base.clone(), Attributes::new(), roster()));
    let server = serve(&ServiceRegistry::loopback(), dm).unwrap();
    let (data, rec) = (server.addr(Service::Data).unwrap(), server.addr(Service::Recommender).unwrap());
    let writes: Vec<Rating> = (0..120u32).map(|i| Rating::new(i % 130, (i * 11) % 85, (i % 10) as i32 + 1)).collect();
    let observed = std::thread::scope(|s| {
        let w = s.spawn(|| {
            let mut c = CcpClient::connect(data).unwrap();
            for (i, r) in writes.iter().enumerate() {
                let (_, epoch) = c.insert(*r).unwrap();
                assert_eq!(epoch, i as u64 + 1);
            }
        });
        let readers: Vec<_> = (0..4u32)
            .map(|t| {
                s.spawn(move || {
                    let mut c = CcpClient::connect(rec).unwrap();
                    let mut seen = Vec::new();
                    for k in 0..60u32 {
                        let algo = ((t + k) % 4) as u16;
                        let (a, j) = (UserId((t * 31 + k) % 125), ProfileId((k * 7) % 85));
                        let before = c.ping().unwrap();
                        let (p, epoch) = c.predict(algo, a, j).unwrap();
                        let after = c.ping().unwrap();
                        seen.push((before, epoch, after, algo, a, j, p));
                    }
                    seen
                })
            })
            .collect();
        w.join().unwrap();
        readers.into_iter().flat_map(|r| r.join().unwrap()).collect::<Vec<_>>()
    });
    // the state at epoch e is the base plus the first e writes
    let mut states = vec![base];
    for r in &writes {
        let mut next = states.last().unwrap().clone();
        next.insert(*r).unwrap();
        states.push(next);
    }
    let specs = roster();
    for (before, epoch, after, algo, a, j, p) in observed {
        assert!(before <= epoch && epoch <= after);
        assert_eq!(p, predict(&states[epoch as usize], None, &specs[algo as usize], a, j));
    }
}

#[test]
fn readers_never_see_half_applied_inserts() {
    let dm = Arc::new(DataManager::new(small(), Attributes::new(), roster()));
    std::thread::scope(|s| {
        let dm2 = dm.clone();
        s.spawn(move || {
            for i in 0..300u32 {
                dm2.insert(Rating::new(200 + i % 17, i % 90, (i % 10) as i32 + 1)).unwrap();
            }
        });
        for _ in 0..3 {
            let dm = dm.clone();
            s.spawn(move || {
                for _ in 0..100 {
                    let st = dm.read();
                    assert!(st.matrix.check_invariants().is_ok());
                }
            });
        }
    });
}

#[test]
fn remote_production_matches_its_replay() {
    let cfg = TasteConfig {
        users: 200,
        profiles: 120,
        ratings_per_user: (15, 35),
        ..TasteConfig::standard()
    };
    let m = matrix(cfg.scale, taste_clusters(&cfg, 8));
    let spec = AlgorithmSpec::user_user(SimilarityParams::new(3, 20).unwrap());
    let dm = Arc::new(DataManager::empty(cfg.scale, vec![spec]));
    let server = serve(&ServiceRegistry::loopback(), dm).unwrap();
    let target = RemoteTarget {
        data: server.addr(Service::Data).unwrap(),
        algorithm: 0,
        timeout: Duration::from_secs(5),
    };
    let pc = ProductionConfig {
        n_clients: 16,
        block_size: 250,
        split_seed: 3,
        order_seed: 4,
    };
    let run = run_production_remote(&m, &spec, pc, &target).unwrap();
    assert!(run.report.valid);
    assert_eq!(run.log.len(), m.rating_count() - m.rating_count() / 2);
    assert!(run.log.iter().enumerate().all(|(i, e)| e.seq == i as u64));
    let check = replay_production(cfg.scale, &run.initial, &spec, &run.log);
    assert_eq!(check.mismatches, 0);
    assert_eq!(check.leaks, 0);
}

#[test]
fn unreachable_server_gives_an_invalid_report() {
    let m = small();
    let spec = AlgorithmSpec::mean();
    let addr = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap()
    };
    let target = RemoteTarget {
        data: addr,
        algorithm: 0,
        timeout: Duration::from_millis(200),
    };
    let run = run_production_remote(&m, &spec, ProductionConfig::default(), &target).unwrap();
    assert!(!run.report.valid);
}
