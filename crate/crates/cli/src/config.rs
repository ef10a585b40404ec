//! Optional TOML config file. Each subcommand reads the table of the same
//! name; a flag given on the command line wins over the file.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use serde::Deserialize;

use crate::Usage;

/// Fills every unset field of `$a` from `$b`. Vec fields count as unset
/// when empty.
macro_rules! fill {
    ($a:ident, $b:ident; $($f:ident),* $(,)?) => {
        $( fill!(@one $a, $b, $f); )*
    };
    (@one $a:ident, $b:ident, $f:ident) => {
        if IsUnset::is_unset(&$a.$f) {
            $a.$f = $b.$f;
        }
    };
}

trait IsUnset {
    fn is_unset(&self) -> bool;
}

impl<T> IsUnset for Option<T> {
    fn is_unset(&self) -> bool {
        self.is_none()
    }
}

impl<T> IsUnset for Vec<T> {
    fn is_unset(&self) -> bool {
        self.is_empty()
    }
}

impl IsUnset for bool {
    fn is_unset(&self) -> bool {
        !*self
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub ingest: IngestArgs,
    #[serde(default)]
    pub stats: StatsArgs,
    #[serde(default)]
    pub generate: GenerateArgs,
    #[serde(default)]
    pub bench: BenchArgs,
    #[serde(default)]
    pub histogram: HistogramArgs,
    #[serde(default)]
    pub serve: ServeArgs,
    #[serde(default)]
    pub experiment: ExperimentArgs,
    #[serde(default)]
    pub tally: TallyArgs,
}

impl ConfigFile {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Usage(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| Usage(format!("config {}: {e}", path.display())))
            .context("reading config")
    }
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestArgs {
    /// CSV of user_id,profile_id,value
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// CSV of user_id,gender with gender M, F or U
    #[arg(long)]
    pub genders: Option<PathBuf>,
    /// Snapshot file to write
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rating scale as MIN..MAX [default: 1..10]
    #[arg(long)]
    pub scale: Option<String>,
    /// Inputs start with a header line
    #[arg(long)]
    pub header: bool,
    /// Skip and count malformed lines instead of aborting
    #[arg(long)]
    pub skip_bad: bool,
}

impl IngestArgs {
    pub fn merged(mut self, f: Self) -> Self {
        fill!(self, f; ratings, genders, out, scale, header, skip_bad);
        self
    }
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsArgs {
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Insertion log replayed on top of the snapshot
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Print JSON instead of the table
    #[arg(long)]
    pub json: bool,
}

impl StatsArgs {
    pub fn merged(mut self, f: Self) -> Self {
        fill!(self, f; snapshot, log, json);
        self
    }
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateArgs {
    /// standard, cold-start, production or uniform [default: standard]
    #[arg(long)]
    pub preset: Option<String>,
    /// [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the ratings as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Assign every user a seeded random gender
    #[arg(long)]
    pub genders: bool,
}

impl GenerateArgs {
    pub fn merged(mut self, f: Self) -> Self {
        fill!(self, f; preset, seed, out, csv, genders);
        self
    }
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchArgs {
    /// Rating snapshot to evaluate on
    #[arg(long, conflicts_with = "preset")]
    pub snapshot: Option<PathBuf>,
    /// Synthetic preset to evaluate on instead of a snapshot
    #[arg(long)]
    pub preset: Option<String>,
    /// Generator seed for --preset [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// all-but-one, given-random-x or production [default: all-but-one]
    #[arg(long)]
    pub protocol: Option<String>,
    /// Repeatable: random[:SEED], mean, user-user:MINO:MAXN, item-item:MINO:MAXN
    /// or a label such as "User-User (10,50)"
    #[arg(long = "algorithm")]
    #[serde(rename = "algorithms")]
    pub algorithm: Vec<String>,
    /// fast or audited [default: fast]
    #[arg(long)]
    pub route: Option<String>,
    /// Production block size K [default: 10000]
    #[arg(long)]
    pub block_size: Option<u32>,
    /// Production client count [default: 100]
    #[arg(long)]
    pub clients: Option<u32>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub order_seed: Option<u64>,
    /// GivenRandomX training split seed [default: 0]
    #[arg(long)]
    pub hold_seed: Option<u64>,
    /// Data service address; runs production against a live server
    #[arg(long)]
    pub server: Option<String>,
    /// Roster id on that server [default: 0]
    #[arg(long)]
    pub remote_algorithm: Option<u16>,
    /// Directory for one report file per algorithm
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads [default: available parallelism]
    #[arg(long)]
    pub threads: Option<usize>,
}

impl BenchArgs {
    pub fn merged(mut self, f: Self) -> Self {
        fill!(self, f; snapshot, preset, seed, protocol, algorithm, route, block_size, clients,
            split_seed, order_seed, hold_seed, server, remote_algorithm, out_dir, threads);
        self
    }
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramArgs {
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// user-user or item-item [default: user-user]
    #[arg(long)]
    pub mode: Option<String>,
    /// [default: 1]
    #[arg(long)]
    pub min_overlap: Option<u32>,
}

impl HistogramArgs {
    pub fn merged(mut self, f: Self) -> Self {
        fill!(self, f; snapshot, mode, min_overlap);
        self
    }
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeArgs {
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Insertion log, replayed at startup and appended to
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Scale when starting without a snapshot [default: 1..10]
    #[arg(long)]
    pub scale: Option<String>,
    /// Repeatable; the roster in id order
    #[arg(long = "algorithm")]
    #[serde(rename = "algorithms")]
    pub algorithm: Vec<String>,
    /// [default: 127.0.0.1:7401]
    #[arg(long)]
    pub recommender: Option<String>,
    /// [default: 127.0.0.1:7402]
    #[arg(long)]
    pub data: Option<String>,
    /// [default: 127.0.0.1:7403]
    #[arg(long)]
    pub stats: Option<String>,
}

impl ServeArgs {
    pub fn merged(mut self, f: Self) -> Self {
        fill!(self, f; snapshot, log, scale, algorithm, recommender, data, stats);
        self
    }
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentArgs {
    /// Base snapshot copied into the experiment matrix
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    /// Repeatable; every listed algorithm takes part
    /// [default: random, mean, user-user:10:50]
    #[arg(long = "algorithm")]
    #[serde(rename = "algorithms")]
    pub algorithm: Vec<String>,
    /// [default: 127.0.0.1:8080]
    #[arg(long)]
    pub listen: Option<String>,
    /// NDJSON event log, appended to
    #[arg(long)]
    pub event_log: Option<PathBuf>,
    /// [default: 150]
    #[arg(long)]
    pub rating_target: Option<usize>,
    /// [default: 10]
    #[arg(long)]
    pub list_len: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 1800]
    #[arg(long)]
    pub idle_timeout_secs: Option<u64>,
    /// Asset reference per profile, `{id}` replaced
    #[arg(long)]
    pub asset_template: Option<String>,
}

impl ExperimentArgs {
    pub fn merged(mut self, f: Self) -> Self {
        fill!(self, f; snapshot, algorithm, listen, event_log, rating_target, list_len, seed,
            idle_timeout_secs, asset_template);
        self
    }
}

#[derive(Debug, Default, Clone, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TallyArgs {
    /// NDJSON event log written by `experiment`
    #[arg(long)]
    pub event_log: Option<PathBuf>,
    /// The experiment's roster, in the same order
    /// [default: random, mean, user-user:10:50]
    #[arg(long = "algorithm")]
    #[serde(rename = "algorithms")]
    pub algorithm: Vec<String>,
}

impl TallyArgs {
    pub fn merged(mut self, f: Self) -> Self {
        fill!(self, f; event_log, algorithm);
        self
    }
}
