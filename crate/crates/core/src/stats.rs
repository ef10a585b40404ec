//! Descriptive dataset statistics shaped like a data-set overview table.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ratings::{Attributes, RatingsMatrix};

/// Basic characteristics of a rating matrix.
///
/// Profiles are users in their rated role, so `total_users` counts every id
/// that appears as a rater, as a rated profile, or in the attribute table.
///
/// Two density figures are kept. `density` divides by `total_users`
/// squared, which is how commonly published overview figures for MovieLens
/// and Jester come out.
/// `fill` divides by `users_with_ratings × items_with_ratings`, the share of
/// the occupied sub-matrix that is filled. Both are per mille.
///
/// `mean`, `median` and `sd` are over ratings normalized to 0..1 and are
/// `None` for an empty matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub total_users: u64,
    pub users_with_ratings: u64,
    pub items_with_ratings: u64,
    pub rating_count: u64,
    pub density: f64,
    pub fill: f64,
    pub max_ratings_one_user: u64,
    pub max_ratings_one_profile: u64,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub sd: Option<f64>,
}

impl DatasetStats {
    pub fn is_defined(&self) -> bool {
        self.mean.is_some()
    }
}

fn per_mille(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64 * 1000.0
    }
}

pub fn compute_stats(m: &RatingsMatrix, attrs: Option<&Attributes>) -> DatasetStats {
    let mut ids: HashSet<u32> = m.users().ids().iter().map(|u| u.0).collect();
    ids.extend(m.profiles().ids().iter().map(|p| p.0));
    if let Some(a) = attrs {
        ids.extend(a.records().iter().map(|r| r.user.0));
    }
    let total_users = ids.len() as u64;

    let users_with = (0..m.num_users() as u32).filter(|&u| !m.row(u).is_empty()).count() as u64;
    let items_with = (0..m.num_profiles() as u32).filter(|&p| !m.col(p).is_empty()).count() as u64;
    let count = m.rating_count() as u64;
    let max_user = (0..m.num_users() as u32).map(|u| m.row(u).len()).max().unwrap_or(0) as u64;
    let max_profile = (0..m.num_profiles() as u32).map(|p| m.col(p).len()).max().unwrap_or(0) as u64;

    // Values are integers on a small scale, so a level histogram gives the
    // exact median and a numerically tame variance.
    let scale = m.scale();
    let mut hist = vec![0u64; scale.levels() as usize];
    for u in 0..m.num_users() as u32 {
        for &(_, v) in m.row(u) {
            hist[(v - scale.min()) as usize] += 1;
        }
    }
    let (mean, median, sd) = if count == 0 {
        (None, None, None)
    } else {
        let norm = |level: usize| scale.normalize((scale.min() + level as i32) as f64);
        let mean = hist.iter().enumerate().map(|(l, &c)| c as f64 * norm(l)).sum::<f64>() / count as f64;
        let var = hist
            .iter()
            .enumerate()
            .map(|(l, &c)| c as f64 * (norm(l) - mean).powi(2))
            .sum::<f64>()
            / count as f64;
        let nth = |k: u64| {
            let mut seen = 0;
            for (l, &c) in hist.iter().enumerate() {
                seen += c;
                if seen > k {
                    return norm(l);
                }
            }
            unreachable!("rank within count")
        };
        let median = if count % 2 == 1 {
            nth(count / 2)
        } else {
            (nth(count / 2 - 1) + nth(count / 2)) / 2.0
        };
        (Some(mean), Some(median), Some(var.sqrt()))
    };

    DatasetStats {
        total_users,
        users_with_ratings: users_with,
        items_with_ratings: items_with,
        rating_count: count,
        density: per_mille(count, total_users * total_users),
        fill: per_mille(count, users_with * items_with),
        max_ratings_one_user: max_user,
        max_ratings_one_profile: max_profile,
        mean,
        median,
        sd,
    }
}

fn thousands(n: u64) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let row = |f: &mut fmt::Formatter<'_>, label: &str, value: String| writeln!(f, "{label:<28}{value}");
        row(f, "total users", thousands(self.total_users))?;
        row(f, "users with ratings", thousands(self.users_with_ratings))?;
        row(f, "items with ratings", thousands(self.items_with_ratings))?;
        row(f, "ratings", thousands(self.rating_count))?;
        row(f, "density", format!("{:.4} per mille", self.density))?;
        row(f, "fill", format!("{:.4} per mille", self.fill))?;
        row(f, "max ratings from 1 user", thousands(self.max_ratings_one_user))?;
        row(f, "max ratings for 1 profile", thousands(self.max_ratings_one_profile))?;
        let msd = match (self.mean, self.median, self.sd) {
            (Some(a), Some(b), Some(c)) => format!("{a:.2}/{b:.2}/{c:.2}"),
            _ => "undefined (no ratings)".to_string(),
        };
        row(f, "rating (mean/med/sd)", msd)
    }
}
