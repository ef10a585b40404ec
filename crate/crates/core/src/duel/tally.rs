use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::events::{DuelEvent, EventKind};
use crate::manager::AlgorithmId;

/// Duel outcomes per ordered algorithm pair.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DuelTally {
    /// Contestants in display order, with their printed names.
    pub contestants: Vec<(AlgorithmId, String)>,
    /// `(winner, loser) -> count`.
    pub wins: BTreeMap<(AlgorithmId, AlgorithmId), u64>,
}

impl DuelTally {
    pub fn new(contestants: Vec<(AlgorithmId, String)>) -> Self {
        DuelTally {
            contestants,
            wins: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, winner: AlgorithmId, loser: AlgorithmId) {
        *self.wins.entry((winner, loser)).or_default() += 1;
    }

    pub fn wins(&self, a: AlgorithmId, b: AlgorithmId) -> u64 {
        self.wins.get(&(a, b)).copied().unwrap_or(0)
    }

    pub fn duels(&self, a: AlgorithmId, b: AlgorithmId) -> u64 {
        self.wins(a, b) + self.wins(b, a)
    }

    pub fn total(&self) -> u64 {
        self.wins.values().sum()
    }

    /// Share of the a-vs-b duels that `a` won, in percent.
    pub fn percent(&self, a: AlgorithmId, b: AlgorithmId) -> Option<f64> {
        let n = self.duels(a, b);
        (n > 0).then(|| self.wins(a, b) as f64 / n as f64 * 100.0)
    }

    /// Square matrix: the cell in row A, column B is A's win share against
    /// B. The diagonal is `-`; pairs that never met are empty.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let header = std::iter::once("algorithm").chain(self.contestants.iter().map(|c| c.1.as_str()));
        w.write_record(header).expect("in-memory write");
        for &(a, ref name) in &self.contestants {
            let mut row = vec![name.clone()];
            for &(b, _) in &self.contestants {
                row.push(match self.percent(a, b) {
                    _ if a == b => "-".into(),
                    Some(p) => format!("{p:.2}%"),
                    None => String::new(),
                });
            }
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
    }

    /// Recomputes the tally from a raw event log.
    pub fn from_events<'e>(contestants: Vec<(AlgorithmId, String)>, events: impl IntoIterator<Item = &'e DuelEvent>) -> Self {
        let mut t = DuelTally::new(contestants);
        for e in events {
            if let EventKind::Chosen { winner, loser, .. } = e.kind {
                t.record(winner, loser);
            }
        }
        t
    }
}
