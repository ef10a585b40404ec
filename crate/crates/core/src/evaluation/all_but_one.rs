use rayon::prelude::*;

use super::{EvalError, NmaeAccumulator, Protocol, ValidationReport};
use crate::predict::{
    estimate, item_item_estimate, random_value, user_user_estimate, AlgorithmKind, AlgorithmSpec, Prediction,
    SkipReason,
};
use crate::ratings::{ProfileIx, Rating, RatingsMatrix, UserIx};
use crate::similarity::{ProfileAnchor, UserAnchor};
use crate::view::{Audited, HoldOut};

/// How held-out predictions are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Route {
    /// One similarity accumulator per user (or profile) with the target
    /// removed and restored in place. Same results as `Audited`, much faster.
    #[default]
    Fast,
    /// A fresh hold-out view per target, wrapped in a leak detector.
    Audited,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AllButOneOptions {
    pub route: Route,
}

/// Every rating of `m` paired with its held-out prediction, in row order,
/// plus the number of target leaks seen (only counted on the audited route).
pub fn all_but_one_predictions(m: &RatingsMatrix, spec: &AlgorithmSpec, route: Route) -> (Vec<(Rating, Prediction)>, u64) {
    let scale = m.scale();
    let clamp = |e| Prediction::from_estimate(e, scale);
    let users: Vec<UserIx> = (0..m.num_users() as UserIx).collect();
    if route == Route::Audited {
        let per_user: Vec<(Vec<(Rating, Prediction)>, u64)> = users
            .par_iter()
            .map(|&u| {
                let a = m.user_id(u);
                let mut leaks = 0;
                let out = m
                    .row(u)
                    .iter()
                    .map(|&(p, v)| {
                        let view = HoldOut::cell(m, u, p);
                        let audited = Audited::new(&view, u, p);
                        let j = m.profile_id(p);
                        let pred = clamp(estimate(&audited, spec, a, j));
                        leaks += audited.leaks() as u64;
                        (Rating { user: a, profile: j, value: v }, pred)
                    })
                    .collect();
                (out, leaks)
            })
            .collect();
        let leaks = per_user.iter().map(|x| x.1).sum();
        return (per_user.into_iter().flat_map(|x| x.0).collect(), leaks);
    }

    let rating = |u: UserIx, p: ProfileIx, v: i32| Rating {
        user: m.user_id(u),
        profile: m.profile_id(p),
        value: v,
    };
    let out = match spec.kind {
        AlgorithmKind::Random => m
            .iter()
            .map(|r| (r, Prediction::Value(random_value(spec.seed, scale, r.user, r.profile))))
            .collect(),
        AlgorithmKind::Mean => users
            .iter()
            .flat_map(|&u| {
                m.row(u).iter().map(move |&(p, v)| {
                    let est = m.col_totals(p).without(v).mean().ok_or(SkipReason::NoData);
                    (rating(u, p, v), clamp(est))
                })
            })
            .collect(),
        AlgorithmKind::UserUser => {
            let per_user: Vec<Vec<(Rating, Prediction)>> = users
                .par_iter()
                .map(|&u| {
                    let mut acc = UserAnchor::build(m, u);
                    m.row(u)
                        .iter()
                        .map(|&(p, v)| {
                            acc.remove(m, p, v);
                            let view = HoldOut::cell(m, u, p);
                            let est = user_user_estimate(&view, u, p, &spec.params, |c| acc.weight(&view, c));
                            acc.add(m, p, v);
                            (rating(u, p, v), clamp(est))
                        })
                        .collect()
                })
                .collect();
            per_user.into_iter().flatten().collect()
        }
        AlgorithmKind::ItemItem => {
            let mut offsets = Vec::with_capacity(m.num_users() + 1);
            let mut total = 0usize;
            for &u in &users {
                offsets.push(total);
                total += m.row(u).len();
            }
            let profiles: Vec<ProfileIx> = (0..m.num_profiles() as ProfileIx).collect();
            let per_profile: Vec<Vec<(usize, Prediction)>> = profiles
                .par_iter()
                .map(|&p| {
                    let mut acc = ProfileAnchor::build(m, p);
                    m.col(p)
                        .iter()
                        .map(|&(u, v)| {
                            acc.remove_rater(m, u, v);
                            let view = HoldOut::cell(m, u, p);
                            let est = item_item_estimate(&view, u, p, &spec.params, |l| acc.weight(l));
                            acc.add_rater(m, u, v);
                            let pos = m.row(u).binary_search_by_key(&p, |e| e.0).expect("stored cell");
                            (offsets[u as usize] + pos, clamp(est))
                        })
                        .collect()
                })
                .collect();
            let mut slots: Vec<Option<Prediction>> = vec![None; total];
            for (pos, pred) in per_profile.into_iter().flatten() {
                slots[pos] = Some(pred);
            }
            m.iter().zip(slots).map(|(r, p)| (r, p.expect("every cell predicted"))).collect()
        }
    };
    (out, 0)
}

/// Hides each rating in turn, predicts it and reports pooled NMAE.
///
/// For Mean the report also carries `skipped_without_exclusion`, the skip
/// count had the target been left visible; that is zero by construction,
/// since every target's profile then has at least that rating.
pub fn run_all_but_one(m: &RatingsMatrix, spec: &AlgorithmSpec, opts: AllButOneOptions) -> Result<ValidationReport, EvalError> {
    if m.is_empty() {
        return Err(EvalError::EmptyMatrix);
    }
    let (preds, leaks) = all_but_one_predictions(m, spec, opts.route);
    let mut total = NmaeAccumulator::default();
    for (r, p) in &preds {
        total.add(p, r.value);
    }
    let mut report = ValidationReport::new(Protocol::AllButOne, *spec, &total, m.scale())
        .with_config("ratings", m.rating_count())
        .with_config("route", format!("{:?}", opts.route).to_lowercase());
    if opts.route == Route::Audited {
        report.extra.push(("leaks".into(), leaks.to_string()));
    }
    if spec.kind == AlgorithmKind::Mean {
        let without = preds
            .iter()
            .filter(|(r, _)| m.profile_ratings(r.profile).next().is_none())
            .count();
        report.extra.push(("skipped_without_exclusion".into(), without.to_string()));
    }
    Ok(report)
}
