//! Direct, unoptimized transcriptions of the similarity and prediction
//! formulas, written against a plain map. Shares no code with the library.

#![allow(dead_code)]

use std::collections::BTreeMap;

#[derive(Debug, Clone, Default)]
pub struct Naive {
    pub lo: i32,
    pub hi: i32,
    pub r: BTreeMap<(u32, u32), i32>,
    rows: BTreeMap<u32, BTreeMap<u32, i32>>,
    cols: BTreeMap<u32, BTreeMap<u32, i32>>,
    umean: BTreeMap<u32, f64>,
    pmean: BTreeMap<u32, f64>,
}

/// Prediction or skip; skips carry no reason here.
pub type Out = Option<f64>;

fn mean_of(m: &BTreeMap<u32, i32>) -> f64 {
    m.values().map(|&v| v as f64).sum::<f64>() / m.len() as f64
}

impl Naive {
    pub fn new(lo: i32, hi: i32, ratings: impl IntoIterator<Item = (u32, u32, i32)>) -> Self {
        let mut r = BTreeMap::new();
        for (u, p, v) in ratings {
            r.insert((u, p), v);
        }
        Self::index(lo, hi, r)
    }

    fn index(lo: i32, hi: i32, r: BTreeMap<(u32, u32), i32>) -> Self {
        let mut rows: BTreeMap<u32, BTreeMap<u32, i32>> = BTreeMap::new();
        let mut cols: BTreeMap<u32, BTreeMap<u32, i32>> = BTreeMap::new();
        for (&(u, p), &v) in &r {
            rows.entry(u).or_default().insert(p, v);
            cols.entry(p).or_default().insert(u, v);
        }
        let umean = rows.iter().map(|(&u, row)| (u, mean_of(row))).collect();
        let pmean = cols.iter().map(|(&p, col)| (p, mean_of(col))).collect();
        Naive {
            lo,
            hi,
            r,
            rows,
            cols,
            umean,
            pmean,
        }
    }

    pub fn without(&self, u: u32, p: u32) -> Self {
        let mut r = self.r.clone();
        r.remove(&(u, p));
        Self::index(self.lo, self.hi, r)
    }

    pub fn users(&self) -> Vec<u32> {
        self.rows.keys().copied().collect()
    }

    pub fn profiles(&self) -> Vec<u32> {
        self.cols.keys().copied().collect()
    }

    pub fn get(&self, u: u32, p: u32) -> Option<f64> {
        self.r.get(&(u, p)).map(|&v| v as f64)
    }

    pub fn user_mean(&self, u: u32) -> Option<f64> {
        self.umean.get(&u).copied()
    }

    pub fn profile_mean(&self, p: u32) -> Option<f64> {
        self.pmean.get(&p).copied()
    }

    fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo as f64).min(self.hi as f64)
    }

    /// Pearson over co-rated profiles, users centered on their overall mean.
    pub fn pearson(&self, a: u32, j: u32) -> Option<(f64, u32)> {
        let (ma, mj) = (self.user_mean(a)?, self.user_mean(j)?);
        let (mut num, mut da, mut dj, mut n) = (0.0, 0.0, 0.0, 0);
        for p in self.profiles() {
            if let (Some(x), Some(y)) = (self.get(a, p), self.get(j, p)) {
                num += (x - ma) * (y - mj);
                da += (x - ma) * (x - ma);
                dj += (y - mj) * (y - mj);
                n += 1;
            }
        }
        (n > 0 && da > 0.0 && dj > 0.0).then(|| (num / (da * dj).sqrt(), n))
    }

    /// Adjusted Pearson over co-raters, each centered on that rater's mean.
    pub fn adjusted(&self, j: u32, l: u32) -> Option<(f64, u32)> {
        let (mut num, mut dj, mut dl, mut n) = (0.0, 0.0, 0.0, 0);
        for u in self.users() {
            if let (Some(x), Some(y)) = (self.get(u, j), self.get(u, l)) {
                let m = self.user_mean(u).unwrap();
                num += (x - m) * (y - m);
                dj += (x - m) * (x - m);
                dl += (y - m) * (y - m);
                n += 1;
            }
        }
        (n > 0 && dj > 0.0 && dl > 0.0).then(|| (num / (dj * dl).sqrt(), n))
    }

    pub fn mean_predict(&self, p: u32) -> Out {
        self.profile_mean(p).map(|m| self.clamp(m))
    }

    /// Weighted deviation sum over the top `maxn` of `cands`
    /// `(id, weight, deviation)`, best weight first, ties on lower id.
    fn blend(cands: &mut Vec<(u32, f64, f64)>, maxn: u32) -> Option<f64> {
        // A 1e-12 grid keeps float noise from reordering exact ties.
        let key = |w: f64| (w * 1e12).round() as i64;
        cands.sort_by(|x, y| key(y.1).cmp(&key(x.1)).then(x.0.cmp(&y.0)));
        cands.truncate(maxn as usize);
        // below the grid a weight is float noise around an exact zero
        for c in cands.iter_mut() {
            if key(c.1) == 0 {
                c.1 = 0.0;
            }
        }
        let norm: f64 = cands.iter().map(|c| c.1.abs()).sum();
        (norm > 0.0).then(|| cands.iter().map(|c| c.1 * c.2).sum::<f64>() / norm)
    }

    pub fn user_user_raw(&self, a: u32, j: u32, mino: u32, maxn: u32, positive_only: bool) -> Out {
        let ma = self.user_mean(a)?;
        let mut cands = Vec::new();
        for n in self.users() {
            if n == a {
                continue;
            }
            let Some(r) = self.get(n, j) else { continue };
            let Some((w, o)) = self.pearson(a, n) else { continue };
            if o < mino || (positive_only && w <= 0.0) {
                continue;
            }
            cands.push((n, w, r - self.user_mean(n).unwrap()));
        }
        Self::blend(&mut cands, maxn).map(|d| ma + d)
    }

    pub fn user_user(&self, a: u32, j: u32, mino: u32, maxn: u32, positive_only: bool) -> Out {
        self.user_user_raw(a, j, mino, maxn, positive_only).map(|x| self.clamp(x))
    }

    pub fn item_item_raw(&self, a: u32, j: u32, mino: u32, maxn: u32, positive_only: bool) -> Out {
        let mj = self.profile_mean(j)?;
        self.user_mean(a)?;
        let mut cands = Vec::new();
        for l in self.profiles() {
            if l == j {
                continue;
            }
            let Some(r) = self.get(a, l) else { continue };
            let Some((w, o)) = self.adjusted(j, l) else { continue };
            if o < mino || (positive_only && w <= 0.0) {
                continue;
            }
            cands.push((l, w, r - self.profile_mean(l).unwrap()));
        }
        Self::blend(&mut cands, maxn).map(|d| mj + d)
    }

    pub fn item_item(&self, a: u32, j: u32, mino: u32, maxn: u32, positive_only: bool) -> Out {
        self.item_item_raw(a, j, mino, maxn, positive_only).map(|x| self.clamp(x))
    }

    /// Exhaustive neighbor ranking: every other user with a defined weight
    /// and enough overlap, best first.
    pub fn user_neighbors(&self, a: u32, mino: u32, maxn: u32) -> Vec<(u32, f64)> {
        let mut v: Vec<(u32, f64)> = self
            .users()
            .into_iter()
            .filter(|&n| n != a)
            .filter_map(|n| self.pearson(a, n).filter(|x| x.1 >= mino).map(|x| (n, x.0)))
            .collect();
        let key = |w: f64| (w * 1e12).round() as i64;
        v.sort_by(|x, y| key(y.1).cmp(&key(x.1)).then(x.0.cmp(&y.0)));
        v.truncate(maxn as usize);
        v
    }
}

/// Small random fixture with ids `0..users` and `100..100+profiles`.
pub fn random_fixture(seed: u64, users: u32, profiles: u32, fill: f64) -> Vec<(u32, u32, i32)> {
    // xorshift, so the fixture does not depend on the library's generators
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    let mut next = || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        s
    };
    let mut out = Vec::new();
    for u in 0..users {
        for p in 0..profiles {
            if (next() % 10_000) as f64 / 10_000.0 < fill {
                out.push((u, 100 + p, (next() % 10) as i32 + 1));
            }
        }
    }
    out
}
