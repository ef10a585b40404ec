use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{CurvePoint, EvalError, NmaeAccumulator, Protocol, Route, ValidationReport};
use crate::predict::{
    estimate, item_item_estimate, mean_estimate, mix64, random_value, user_user_estimate, AlgorithmKind,
    AlgorithmSpec, Prediction,
};
use crate::ratings::{ProfileIx, RatingsMatrix, UserIx};
use crate::similarity::{ProfileAnchor, UserAnchor};
use crate::view::{Audited, HoldOut};

/// Size of the training group drawn per user; the curve has this many points.
pub const TRAIN_SIZE: usize = 99;
/// Users need strictly more ratings than this to take part.
pub const MIN_RATINGS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct GivenRandomXConfig {
    pub hold_seed: u64,
    pub route: Route,
}

struct UserCurve {
    steps: Vec<NmaeAccumulator>,
    leaks: u64,
}

/// Training order for user `u`: a seeded shuffle of the row. The first
/// [`TRAIN_SIZE`] entries form the training group in prefix order, the rest
/// are test ratings.
fn split_user(m: &RatingsMatrix, u: UserIx, hold_seed: u64) -> Vec<(ProfileIx, i32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(hold_seed ^ mix64(m.user_id(u).0 as u64 + 1));
    let mut row = m.row(u).to_vec();
    row.shuffle(&mut rng);
    row
}

fn user_curve(m: &RatingsMatrix, spec: &AlgorithmSpec, u: UserIx, cfg: &GivenRandomXConfig) -> UserCurve {
    let scale = m.scale();
    let order = split_user(m, u, cfg.hold_seed);
    let (train, test) = order.split_at(TRAIN_SIZE);
    let visible: Vec<ProfileIx> = train.iter().map(|e| e.0).collect();
    let views: Vec<HoldOut<'_>> = (1..=TRAIN_SIZE).map(|i| HoldOut::keep_only(m, u, &visible[..i])).collect();
    let mut steps = vec![NmaeAccumulator::default(); TRAIN_SIZE];
    let a = m.user_id(u);
    let mut leaks = 0u64;
    let clamp = |e| Prediction::from_estimate(e, scale);

    if cfg.route == Route::Audited {
        for (i, view) in views.iter().enumerate() {
            for &(j, truth) in test {
                let audited = Audited::new(view, u, j);
                steps[i].add(&clamp(estimate(&audited, spec, a, m.profile_id(j))), truth);
                leaks += audited.leaks() as u64;
            }
        }
        return UserCurve { steps, leaks };
    }

    match spec.kind {
        AlgorithmKind::Random | AlgorithmKind::Mean => {
            // Neither depends on the active user's own ratings.
            for &(j, truth) in test {
                let p = if spec.kind == AlgorithmKind::Random {
                    Prediction::Value(random_value(spec.seed, scale, a, m.profile_id(j)))
                } else {
                    clamp(mean_estimate(&views[0], j))
                };
                for s in steps.iter_mut() {
                    s.add(&p, truth);
                }
            }
        }
        AlgorithmKind::UserUser => {
            let mut acc = UserAnchor::empty(m, u);
            for (i, view) in views.iter().enumerate() {
                let (p, v) = train[i];
                acc.add(m, p, v);
                for &(j, truth) in test {
                    let est = user_user_estimate(view, u, j, &spec.params, |c| acc.weight(view, c));
                    steps[i].add(&clamp(est), truth);
                }
            }
        }
        AlgorithmKind::ItemItem => {
            for &(j, truth) in test {
                // The active user never rates j in any view, so the pair
                // statistics of j are the same for every i.
                let mut acc = ProfileAnchor::build(m, j);
                acc.remove_rater(m, u, truth);
                for (i, view) in views.iter().enumerate() {
                    let est = item_item_estimate(view, u, j, &spec.params, |l| acc.weight(l));
                    steps[i].add(&clamp(est), truth);
                }
            }
        }
    }
    UserCurve { steps, leaks }
}

/// Per-step accumulators pooled over every qualifying user, and the leak
/// count (audited route only).
pub fn given_random_x_curve(
    m: &RatingsMatrix,
    spec: &AlgorithmSpec,
    cfg: &GivenRandomXConfig,
) -> Result<(Vec<NmaeAccumulator>, usize, u64), EvalError> {
    let users: Vec<UserIx> = (0..m.num_users() as UserIx)
        .filter(|&u| m.row(u).len() > MIN_RATINGS)
        .collect();
    if users.is_empty() {
        return Err(EvalError::NoQualifyingUser(MIN_RATINGS as u32));
    }
    let curves: Vec<UserCurve> = users.par_iter().map(|&u| user_curve(m, spec, u, cfg)).collect();
    let mut pooled = vec![NmaeAccumulator::default(); TRAIN_SIZE];
    let mut leaks = 0;
    for c in &curves {
        for (acc, s) in pooled.iter_mut().zip(&c.steps) {
            acc.merge(s);
        }
        leaks += c.leaks;
    }
    Ok((pooled, users.len(), leaks))
}

/// Cold-start curve: NMAE of each qualifying user's test ratings given only
/// the first i of their training ratings, i = 1..99, errors pooled per i.
pub fn run_given_random_x(
    m: &RatingsMatrix,
    spec: &AlgorithmSpec,
    cfg: GivenRandomXConfig,
) -> Result<ValidationReport, EvalError> {
    let (pooled, n_users, leaks) = given_random_x_curve(m, spec, &cfg)?;
    let scale = m.scale();
    let mut total = NmaeAccumulator::default();
    for acc in &pooled {
        total.merge(acc);
    }
    let mut report = ValidationReport::new(Protocol::GivenRandomX, *spec, &total, scale)
        .with_config("hold_seed", cfg.hold_seed)
        .with_config("route", format!("{:?}", cfg.route).to_lowercase())
        .with_config("qualifying_users", n_users);
    report.curve = pooled
        .iter()
        .enumerate()
        .map(|(i, acc)| CurvePoint::from_acc(i as u32 + 1, acc, scale))
        .collect();
    if cfg.route == Route::Audited {
        report.extra.push(("leaks".into(), leaks.to_string()));
    }
    Ok(report)
}
