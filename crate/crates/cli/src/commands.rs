use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use colfi_core::duel::{read_ndjson, DuelConfig, DuelService, DuelTally, SystemClock};
use colfi_core::evaluation::{
    run_all_but_one, run_given_random_x, run_production, run_production_remote, AllButOneOptions, GivenRandomXConfig,
    ProductionConfig, RemoteTarget, Route, ValidationReport,
};
use colfi_core::ingest::{ingest_genders, ingest_ratings, IngestOptions, OnError};
use colfi_core::manager::DataManager;
use colfi_core::persist::{load_log, load_snapshot, save_snapshot};
use colfi_core::server::{serve as serve_ccp, Service, ServiceRegistry};
use colfi_core::similarity::similarity_histogram;
use colfi_core::stats::compute_stats;
use colfi_core::synthetic::{matrix, taste_clusters, uniform, TasteConfig};
use colfi_core::*;

use crate::config::*;
use crate::Usage;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| usage(format!("missing --{flag}")))
}

fn existing(p: &Path) -> Result<&Path> {
    if p.exists() {
        Ok(p)
    } else {
        Err(usage(format!("no such file: {}", p.display())))
    }
}

fn open(p: &Path) -> Result<File> {
    File::open(existing(p)?).with_context(|| format!("opening {}", p.display()))
}

fn scale(s: Option<&str>) -> Result<RatingScale> {
    s.map_or(Ok(RatingScale::DEFAULT), |s| s.parse().map_err(usage))
}

fn algorithms(names: &[String], default: &[&str]) -> Result<Vec<AlgorithmSpec>> {
    let names: Vec<&str> = if names.is_empty() {
        default.to_vec()
    } else {
        names.iter().map(String::as_str).collect()
    };
    names
        .iter()
        .map(|n| n.parse::<AlgorithmSpec>().map_err(|e| usage(e.to_string())))
        .collect()
}

fn addr(s: &str) -> Result<SocketAddr> {
    s.to_socket_addrs()
        .map_err(|e| usage(format!("bad address {s:?}: {e}")))?
        .next()
        .ok_or_else(|| usage(format!("address {s:?} resolves to nothing")))
}

fn load(path: &Path) -> Result<(RatingsMatrix, Attributes)> {
    load_snapshot(existing(path)?).with_context(|| format!("loading {}", path.display()))
}

pub fn ingest(a: IngestArgs) -> Result<()> {
    let ratings = need(a.ratings, "ratings")?;
    let out = need(a.out, "out")?;
    let opts = IngestOptions {
        scale: scale(a.scale.as_deref())?,
        has_header: a.header,
        on_error: if a.skip_bad { OnError::SkipAndCount } else { OnError::Abort },
    };
    let (m, summary) = ingest_ratings(BufReader::new(open(&ratings)?), &opts).context("reading ratings")?;
    println!("ratings: {} accepted, {} skipped", summary.accepted, summary.skipped);
    for (line, e) in &summary.first_errors {
        eprintln!("  line {line}: {e}");
    }
    let attrs = match &a.genders {
        Some(g) => {
            let (attrs, s) = ingest_genders(BufReader::new(open(g)?), &opts).context("reading genders")?;
            println!("genders: {} accepted, {} skipped", s.accepted, s.skipped);
            attrs
        }
        None => Attributes::new(),
    };
    save_snapshot(&out, &m, &attrs).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} ({} users, {} profiles)", out.display(), m.num_users(), m.num_profiles());
    Ok(())
}

pub fn stats(a: StatsArgs) -> Result<()> {
    let path = need(a.snapshot, "snapshot")?;
    let (mut m, attrs) = load(&path)?;
    if let Some(log) = &a.log {
        for r in load_log(existing(log)?)?.ratings {
            m.insert(r)?;
        }
    }
    let s = compute_stats(&m, Some(&attrs));
    if a.json {
        println!("{}", serde_json::to_string_pretty(&s)?);
    } else {
        println!("# snapshot\t{}", path.display());
        print!("{s}");
    }
    Ok(())
}

fn preset(name: &str, seed: u64) -> Result<RatingsMatrix> {
    let cfg = match name {
        "standard" => TasteConfig::standard(),
        "cold-start" => TasteConfig::cold_start(),
        "production" => TasteConfig::production(),
        "uniform" => return Ok(matrix(RatingScale::DEFAULT, uniform(1000, 500, 60, RatingScale::DEFAULT, seed))),
        other => bail!(Usage(format!("unknown preset {other:?} (standard, cold-start, production, uniform)"))),
    };
    Ok(matrix(cfg.scale, taste_clusters(&cfg, seed)))
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let out = need(a.out, "out")?;
    let name = a.preset.unwrap_or_else(|| "standard".into());
    let seed = a.seed.unwrap_or(0);
    let m = preset(&name, seed)?;
    let mut attrs = Attributes::new();
    if a.genders {
        // profiles are users too, so cover both id ranges
        let top = m.users().ids().iter().map(|u| u.0).chain(m.profiles().ids().iter().map(|p| p.0)).max().unwrap_or(0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6765_6e64);
        for id in 0..=top {
            attrs.set(UserId(id), if rng.gen_bool(0.5) { Gender::Male } else { Gender::Female });
        }
    }
    save_snapshot(&out, &m, &attrs)?;
    if let Some(csv) = &a.csv {
        let mut w = BufWriter::new(File::create(csv)?);
        for r in m.iter() {
            writeln!(w, "{},{},{}", r.user, r.profile, r.value)?;
        }
        w.flush()?;
    }
    println!("wrote {} ({name}, seed {seed}, {} ratings)", out.display(), m.rating_count());
    Ok(())
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

#[derive(Clone, Copy)]
enum Proto {
    AllButOne,
    GivenRandomX,
    Production,
}

pub fn bench(a: BenchArgs) -> Result<()> {
    let proto = match a.protocol.as_deref().unwrap_or("all-but-one") {
        "all-but-one" | "allbutone" => Proto::AllButOne,
        "given-random-x" | "givenrandomx" => Proto::GivenRandomX,
        "production" => Proto::Production,
        other => bail!(Usage(format!("unknown protocol {other:?} (all-but-one, given-random-x, production)"))),
    };
    let route = match a.route.as_deref().unwrap_or("fast") {
        "fast" => Route::Fast,
        "audited" => Route::Audited,
        other => bail!(Usage(format!("unknown route {other:?} (fast, audited)"))),
    };
    let specs = algorithms(&a.algorithm, &["random", "mean", "user-user:10:50"])?;
    let remote = match &a.server {
        Some(s) if matches!(proto, Proto::Production) => Some(addr(s)?),
        Some(_) => bail!(Usage("--server only applies to the production protocol".into())),
        None => None,
    };
    let threads = a.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        bail!(Usage("--threads must be positive".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().ok();
    let (m, source) = match (&a.snapshot, &a.preset) {
        (Some(p), _) => (load(p)?.0, format!("snapshot {}", p.display())),
        (None, p) => {
            let name = p.as_deref().unwrap_or("standard");
            let seed = a.seed.unwrap_or(0);
            (preset(name, seed)?, format!("preset {name} seed {seed}"))
        }
    };
    let defaults = ProductionConfig::default();
    let pc = ProductionConfig {
        n_clients: a.clients.unwrap_or(defaults.n_clients),
        block_size: a.block_size.unwrap_or(defaults.block_size),
        split_seed: a.split_seed.unwrap_or(defaults.split_seed),
        order_seed: a.order_seed.unwrap_or(defaults.order_seed),
    };
    if let Some(dir) = &a.out_dir {
        fs::create_dir_all(dir)?;
    }

    let mut rows = Vec::new();
    let mut protocol_name = String::new();
    for spec in &specs {
        let report: ValidationReport = match proto {
            Proto::AllButOne => run_all_but_one(&m, spec, AllButOneOptions { route })?,
            Proto::GivenRandomX => run_given_random_x(
                &m,
                spec,
                GivenRandomXConfig {
                    hold_seed: a.hold_seed.unwrap_or(0),
                    route,
                },
            )?,
            Proto::Production => match remote {
                Some(data) => {
                    let target = RemoteTarget {
                        data,
                        algorithm: a.remote_algorithm.unwrap_or(0),
                        timeout: Duration::from_secs(10),
                    };
                    run_production_remote(&m, spec, pc, &target)?.report
                }
                None => run_production(&m, spec, pc)?.report,
            },
        };
        let report = report.with_config("source", &source).with_config("threads", threads);
        protocol_name = report.protocol.to_string();
        if let Some(dir) = &a.out_dir {
            let path: PathBuf = dir.join(format!("{}_{}.tsv", report.protocol, slug(&spec.to_string())));
            fs::write(&path, report.to_string()).with_context(|| format!("writing {}", path.display()))?;
        }
        rows.push(report);
    }
    println!("# protocol\t{protocol_name}");
    println!("# source\t{source}");
    println!("# threads\t{threads}");
    if let Some(first) = rows.first() {
        for (k, v) in first.config.iter().filter(|(k, _)| !matches!(k.as_str(), "source" | "threads")) {
            println!("# {k}\t{v}");
        }
    }
    println!("algorithm\tnmae\tcounted\tskipped\tvalid");
    for r in &rows {
        let nmae = r.overall_nmae.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"));
        println!("{}\t{nmae}\t{}\t{}\t{}", r.algorithm, r.counted, r.skipped, r.valid);
    }
    if rows.iter().any(|r| !r.valid) {
        bail!("run cut short; see the reports");
    }
    Ok(())
}

pub fn histogram(a: HistogramArgs) -> Result<()> {
    let path = need(a.snapshot, "snapshot")?;
    let mode = match a.mode.as_deref().unwrap_or("user-user") {
        "user-user" => Mode::UserUser,
        "item-item" => Mode::ItemItem,
        other => bail!(Usage(format!("unknown mode {other:?} (user-user, item-item)"))),
    };
    let (m, _) = load(&path)?;
    let h = similarity_histogram(&m, mode, a.min_overlap.unwrap_or(1));
    println!("# snapshot\t{}", path.display());
    println!("# mode\t{mode:?}");
    println!("# min_overlap\t{}", h.min_overlap);
    println!("# pairs\t{}", h.total());
    print!("{h}");
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

async fn shutdown_signal() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        let mut term = signal(SignalKind::terminate()).expect("signal handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
    }
    #[cfg(not(unix))]
    let _ = tokio::signal::ctrl_c().await;
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let roster = algorithms(&a.algorithm, &["random", "mean", "user-user:10:50", "item-item:10:50"])?;
    let registry = ServiceRegistry::new()
        .with(Service::Recommender, addr(a.recommender.as_deref().unwrap_or("127.0.0.1:7401"))?)?
        .with(Service::Data, addr(a.data.as_deref().unwrap_or("127.0.0.1:7402"))?)?
        .with(Service::Stats, addr(a.stats.as_deref().unwrap_or("127.0.0.1:7403"))?)?;
    let snapshot = a.snapshot.as_deref().map(existing).transpose()?;
    let dm = DataManager::open(snapshot, a.log.as_deref(), scale(a.scale.as_deref())?, roster.clone())?;
    let handle = serve_ccp(&registry, Arc::new(dm)).context("starting services")?;
    for (i, spec) in roster.iter().enumerate() {
        println!("algorithm {i}\t{spec}");
    }
    for (service, addr) in handle.addrs() {
        println!("{service} listening on {addr}");
    }
    runtime()?.block_on(shutdown_signal());
    handle.shutdown();
    println!("shut down");
    Ok(())
}

pub fn experiment(a: ExperimentArgs) -> Result<()> {
    let roster = algorithms(&a.algorithm, &["random", "mean", "user-user:10:50"])?;
    let (m, attrs) = match &a.snapshot {
        Some(p) => load(p)?,
        None => (RatingsMatrix::new(RatingScale::DEFAULT), Attributes::new()),
    };
    let defaults = DuelConfig::default();
    let cfg = DuelConfig {
        contestants: (0..roster.len() as u16).collect(),
        rating_target: a.rating_target.unwrap_or(defaults.rating_target),
        list_len: a.list_len.unwrap_or(defaults.list_len),
        idle_timeout: a.idle_timeout_secs.map_or(defaults.idle_timeout, Duration::from_secs),
        seed: a.seed.unwrap_or(defaults.seed),
        asset_template: a.asset_template.unwrap_or(defaults.asset_template),
        ..defaults
    };
    let dm = Arc::new(DataManager::new(m, attrs, roster));
    let mut svc = DuelService::new(dm, cfg, Box::new(SystemClock)).map_err(|e| usage(e.to_string()))?;
    if let Some(p) = &a.event_log {
        let f = OpenOptions::new().create(true).append(true).open(p).with_context(|| format!("opening {}", p.display()))?;
        svc = svc.with_log_writer(Box::new(f));
    }
    let svc = Arc::new(svc);
    let listen = addr(a.listen.as_deref().unwrap_or("127.0.0.1:8080"))?;
    runtime()?.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen).await.with_context(|| format!("binding {listen}"))?;
        println!("experiment listening on http://{}", listener.local_addr()?);
        colfi_gateway::serve(listener, svc, Duration::from_secs(30), shutdown_signal()).await?;
        println!("shut down");
        anyhow::Ok(())
    })
}

pub fn tally(a: TallyArgs) -> Result<()> {
    let path = need(a.event_log, "event-log")?;
    let roster = algorithms(&a.algorithm, &["random", "mean", "user-user:10:50"])?;
    let events = read_ndjson(BufReader::new(open(&path)?))?;
    let names = roster.iter().enumerate().map(|(i, s)| (i as u16, s.to_string())).collect();
    print!("{}", DuelTally::from_events(names, &events).to_csv());
    Ok(())
}
