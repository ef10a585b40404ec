mod support;

use colfi_core::evaluation::{
    all_but_one_predictions, given_random_x_curve, nmae, GivenRandomXConfig, NmaeAccumulator, Route,
};
use colfi_core::manager::DataManager;
use colfi_core::predict::{estimate, predict};
use colfi_core::similarity::{neighbor_set, pearson_item_adjusted, pearson_user};
use colfi_core::*;
use proptest::prelude::*;
use support::oracle::Naive;

fn ratings(users: u32, profiles: u32, lo: i32, hi: i32) -> impl Strategy<Value = Vec<(u32, u32, i32)>> {
    prop::collection::vec((0..users, 100..100 + profiles, lo..=hi), 1..(users * profiles) as usize)
}

fn matrix(lo: i32, hi: i32, rs: &[(u32, u32, i32)]) -> RatingsMatrix {
    RatingsMatrix::from_ratings(RatingScale::new(lo, hi).unwrap(), rs.iter().map(|&(u, p, v)| Rating::new(u, p, v))).unwrap()
}

fn bits(p: Prediction) -> Result<u64, SkipReason> {
    match p {
        Prediction::Value(v) => Ok(v.to_bits()),
        Prediction::Skipped(r) => Err(r),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rows_and_columns_stay_transposes(rs in ratings(15, 15, 1, 10)) {
        let m = matrix(1, 10, &rs);
        prop_assert!(m.check_invariants().is_ok());
        let n = Naive::new(1, 10, rs.iter().copied());
        prop_assert_eq!(m.rating_count(), n.r.len());
        for u in n.users() {
            let got = m.user_mean(UserId(u)).unwrap();
            prop_assert!((got - n.user_mean(u).unwrap()).abs() < 1e-9);
        }
        for p in n.profiles() {
            let got = m.profile_mean(ProfileId(p)).unwrap();
            prop_assert!((got - n.profile_mean(p).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn weights_are_symmetric_and_bounded(rs in ratings(10, 10, 1, 10)) {
        let m = matrix(1, 10, &rs);
        let users = m.users().ids().to_vec();
        for &a in &users {
            for &b in &users {
                let ab = pearson_user(&m, a, b);
                prop_assert_eq!(ab, pearson_user(&m, b, a));
                if let Some((w, _)) = ab {
                    prop_assert!((-1.0..=1.0).contains(&w));
                }
            }
        }
        let profiles = m.profiles().ids().to_vec();
        for &j in &profiles {
            for &l in &profiles {
                let jl = pearson_item_adjusted(&m, j, l);
                prop_assert_eq!(jl, pearson_item_adjusted(&m, l, j));
                if let Some((w, _)) = jl {
                    prop_assert!((-1.0..=1.0).contains(&w));
                }
            }
        }
    }

    #[test]
    fn shifting_one_user_keeps_their_weights(rs in ratings(10, 10, 1, 50), c in 1i32..50, who in 0u32..10) {
        let base = matrix(1, 100, &rs);
        let shifted: Vec<_> = rs.iter().map(|&(u, p, v)| (u, p, if u == who { v + c } else { v })).collect();
        let moved = matrix(1, 100, &shifted);
        if base.user_index(UserId(who)).is_none() {
            return Ok(());
        }
        for &o in base.users().ids() {
            let (x, y) = (pearson_user(&base, UserId(who), o), pearson_user(&moved, UserId(who), o));
            match (x, y) {
                (Some((a, n1)), Some((b, n2))) => {
                    prop_assert_eq!(n1, n2);
                    prop_assert!((a - b).abs() < 1e-9);
                }
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }

    #[test]
    fn smaller_neighborhood_is_a_prefix(rs in ratings(14, 12, 1, 10), mino in 1u32..4, k in 1u32..6) {
        let m = matrix(1, 10, &rs);
        for &a in m.users().ids() {
            let small = neighbor_set(&m, Mode::UserUser, a.0, &SimilarityParams::new(mino, k).unwrap(), |_| true).unwrap();
            let large = neighbor_set(&m, Mode::UserUser, a.0, &SimilarityParams::new(mino, k + 5).unwrap(), |_| true).unwrap();
            prop_assert!(small.len() <= large.len());
            prop_assert_eq!(&small.neighbors[..], &large.neighbors[..small.len()]);
            for w in large.neighbors.windows(2) {
                prop_assert!(w[0].weight > w[1].weight || (w[0].weight == w[1].weight && w[0].id < w[1].id));
            }
            prop_assert!(large.neighbors.iter().all(|x| x.overlap >= mino));
        }
    }

    #[test]
    fn shifting_everyone_shifts_predictions(rs in ratings(10, 10, 30, 40), c in 1i32..50) {
        let base = matrix(1, 100, &rs);
        let shifted: Vec<_> = rs.iter().map(|&(u, p, v)| (u, p, v + c)).collect();
        let moved = matrix(1, 100, &shifted);
        let params = SimilarityParams::new(2, 4).unwrap();
        for spec in [AlgorithmSpec::mean(), AlgorithmSpec::user_user(params), AlgorithmSpec::item_item(params)] {
            for &a in base.users().ids() {
                for &j in base.profiles().ids() {
                    match (estimate(&base, &spec, a, j), estimate(&moved, &spec, a, j)) {
                        (Ok(x), Ok(y)) => prop_assert!((y - x - c as f64).abs() < 1e-9, "{} {} vs {}", spec, x, y),
                        (x, y) => prop_assert_eq!(x.err(), y.err()),
                    }
                }
            }
        }
    }

    #[test]
    fn random_is_keyed_and_on_scale(seed in any::<u64>(), a in any::<u32>(), j in any::<u32>(), lo in -5i32..5, width in 1i32..20) {
        let scale = RatingScale::new(lo, lo + width).unwrap();
        let m = RatingsMatrix::new(scale);
        let spec = AlgorithmSpec::random(seed);
        let x = predict(&m, None, &spec, UserId(a), ProfileId(j));
        prop_assert_eq!(x, predict(&m, None, &spec, UserId(a), ProfileId(j)));
        let v = x.value().unwrap();
        prop_assert!(v.fract() == 0.0 && scale.contains(v as i32));
    }

    #[test]
    fn nmae_is_a_percentage(pairs in prop::collection::vec((1i32..=10, 1i32..=10), 1..50)) {
        let mut acc = NmaeAccumulator::default();
        for &(p, t) in &pairs {
            acc.add(&Prediction::Value(p as f64), t);
        }
        let x = nmae(&acc, RatingScale::DEFAULT).unwrap();
        prop_assert!((0.0..=100.0).contains(&x));
        let mut exact = NmaeAccumulator::default();
        for &(_, t) in &pairs {
            exact.add(&Prediction::Value(t as f64), t);
        }
        prop_assert_eq!(nmae(&exact, RatingScale::DEFAULT).unwrap(), 0.0);
    }

    #[test]
    fn cached_predictions_track_inserts(
        base in ratings(10, 10, 1, 10),
        extra in prop::collection::vec((0u32..12, 100u32..112, 1i32..=10), 1..30),
    ) {
        let p = SimilarityParams::new(2, 3).unwrap();
        let roster = vec![AlgorithmSpec::user_user(p), AlgorithmSpec::item_item(p), AlgorithmSpec::mean()];
        let dm = DataManager::new(matrix(1, 10, &base), Attributes::new(), roster.clone());
        for (i, &(u, j, v)) in extra.iter().enumerate() {
            // warm the caches, then mutate
            for algo in 0..3u16 {
                let _ = dm.predict(algo, UserId(u), ProfileId(j));
            }
            dm.insert(Rating::new(u, j, v)).unwrap();
            let st = dm.read();
            let (a, q) = (UserId(extra[(i * 7) % extra.len()].0), ProfileId(100 + (i as u32 * 5) % 12));
            for (algo, spec) in roster.iter().enumerate() {
                let cached = colfi_core::predict::predict(&st.matrix, Some(dm.caches()), spec, a, q);
                let fresh = predict(&st.matrix, None, spec, a, q);
                prop_assert_eq!(bits(cached), bits(fresh), "algo {}", algo);
            }
        }
    }

    #[test]
    fn fast_route_equals_audited_route(rs in ratings(12, 12, 1, 10), mino in 1u32..3, maxn in 1u32..6) {
        let m = matrix(1, 10, &rs);
        let p = SimilarityParams::new(mino, maxn).unwrap();
        for spec in [AlgorithmSpec::mean(), AlgorithmSpec::random(3), AlgorithmSpec::user_user(p), AlgorithmSpec::item_item(p)] {
            let (fast, _) = all_but_one_predictions(&m, &spec, Route::Fast);
            let (slow, leaks) = all_but_one_predictions(&m, &spec, Route::Audited);
            prop_assert_eq!(leaks, 0);
            prop_assert_eq!(fast.len(), slow.len());
            for (f, s) in fast.iter().zip(&slow) {
                prop_assert_eq!(f.0, s.0);
                prop_assert_eq!(bits(f.1), bits(s.1));
            }
        }
    }
}

#[test]
fn all_but_one_matches_oracle_hold_out() {
    let rs = support::oracle::random_fixture(41, 14, 14, 0.5);
    let m = matrix(1, 10, &rs);
    let n = Naive::new(1, 10, rs.iter().copied());
    let p = SimilarityParams::new(2, 3).unwrap();
    let (uu, _) = all_but_one_predictions(&m, &AlgorithmSpec::user_user(p), Route::Fast);
    let (ii, _) = all_but_one_predictions(&m, &AlgorithmSpec::item_item(p), Route::Fast);
    let (mean, _) = all_but_one_predictions(&m, &AlgorithmSpec::mean(), Route::Fast);
    for ((u, i), me) in uu.iter().zip(&ii).zip(&mean) {
        let r = u.0;
        let h = n.without(r.user.0, r.profile.0);
        let close = |x: Option<f64>, y: Option<f64>| match (x, y) {
            (Some(a), Some(b)) => (a - b).abs() < 1e-9,
            (a, b) => a == b,
        };
        assert!(close(u.1.value(), h.user_user(r.user.0, r.profile.0, 2, 3, false)));
        assert!(close(i.1.value(), h.item_item(r.user.0, r.profile.0, 2, 3, false)));
        assert!(close(me.1.value(), h.mean_predict(r.profile.0)));
    }
}

#[test]
fn given_random_x_routes_agree() {
    let cfg = synthetic::TasteConfig {
        users: 40,
        profiles: 150,
        ratings_per_user: (101, 120),
        ..synthetic::TasteConfig::cold_start()
    };
    let m = synthetic::matrix(cfg.scale, synthetic::taste_clusters(&cfg, 5));
    let p = SimilarityParams::new(3, 10).unwrap();
    for spec in [AlgorithmSpec::mean(), AlgorithmSpec::user_user(p), AlgorithmSpec::item_item(p)] {
        let fast = GivenRandomXConfig { hold_seed: 9, route: Route::Fast };
        let slow = GivenRandomXConfig { hold_seed: 9, route: Route::Audited };
        let (a, n1, _) = given_random_x_curve(&m, &spec, &fast).unwrap();
        let (b, n2, leaks) = given_random_x_curve(&m, &spec, &slow).unwrap();
        assert_eq!(n1, n2);
        assert_eq!(leaks, 0);
        assert_eq!(a, b, "{spec}");
    }
}

#[test]
fn skips_depend_only_on_min_overlap_on_the_benchmark_matrix() {
    let cfg = synthetic::TasteConfig {
        users: 400,
        profiles: 300,
        ..synthetic::TasteConfig::standard()
    };
    let m = synthetic::matrix(cfg.scale, synthetic::taste_clusters(&cfg, 2));
    for mino in [3, 5, 10] {
        let skips = |maxn| {
            let spec = AlgorithmSpec::user_user(SimilarityParams::new(mino, maxn).unwrap());
            all_but_one_predictions(&m, &spec, Route::Fast).0.iter().filter(|x| x.1.is_skipped()).count()
        };
        assert_eq!(skips(10), skips(50), "MinO {mino}");
    }
}

#[test]
fn zero_weight_neighbors_can_make_skips_depend_on_max_neighbors() {
    // User 1's only neighbors who rated 20 are user 2 (weight exactly 0)
    // and user 3 (weight -1). MaxN 1 keeps just the zero: no usable weight.
    let rs = [
        (1, 10, 1), (1, 11, 5), (1, 12, 9),
        (2, 10, 5), (2, 11, 1), (2, 12, 5), (2, 20, 3),
        (3, 10, 9), (3, 11, 5), (3, 12, 1), (3, 20, 7),
    ];
    let m = matrix(1, 10, &rs);
    assert_eq!(pearson_user(&m, UserId(1), UserId(2)).map(|x| x.0), Some(0.0));
    let one = AlgorithmSpec::user_user(SimilarityParams::new(3, 1).unwrap());
    let two = AlgorithmSpec::user_user(SimilarityParams::new(3, 2).unwrap());
    assert_eq!(predict(&m, None, &one, UserId(1), ProfileId(20)), Prediction::Skipped(SkipReason::NoNeighbors));
    assert!(!predict(&m, None, &two, UserId(1), ProfileId(20)).is_skipped());
}
