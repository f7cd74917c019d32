use alr::dataset::{
    drowsiness_index, encode_and_normalize, split_pool, synthetic_linear, Cell, Column, ColumnKind,
    PoolSpec, RawTable, SyntheticSpec,
};
use alr::harness::{aggregate, run_once, RunRecord, RunSpec};
use alr::model::{ridge_fit_rows, ModelConfig};
use alr::samplers::{
    min_input_distance, min_product_distance, next_gsx, next_igs, select_first_gsx, PoolState,
    StrategyConfig, StrategyKind,
};
use alr::stats::{dunn_pairwise, fdr_adjust, pair_indices};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn matrix(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-5.0..5.0))
}

fn gsx_trace(x: &Array2<f64>, steps: usize) -> Vec<usize> {
    let mut state = PoolState::new(x.clone(), 1);
    let mut out = vec![];
    for _ in 0..steps.min(x.nrows()) {
        let n = next_gsx(&state).unwrap();
        state.label(n, 0.0).unwrap();
        out.push(n);
    }
    out
}

fn spec(kind: StrategyKind, rep: usize, k0: usize, budget: usize) -> RunSpec {
    RunSpec {
        dataset: "syn".into(),
        repetition: rep,
        strategy: StrategyConfig::new(kind).with_seed(rep as u64 * 31 + 7),
        model: ModelConfig::default(),
        k0,
        budget,
        init_seed: rep as u64,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn normalization_is_idempotent(rows in 3usize..40, cols in 1usize..6, seed in any::<u64>()) {
        let x = matrix(rows, cols, seed);
        let names: Vec<String> = (0..cols).map(|j| format!("c{j}")).collect();
        let labels = vec![0.0; rows];
        let once = encode_and_normalize(&RawTable::from_numeric(&names, &x, "y", &labels)).unwrap();
        let twice = encode_and_normalize(&RawTable::from_numeric(
            &once.feature_names, &once.features, "y", &labels)).unwrap();
        for (a, b) in once.features.iter().zip(twice.features.iter()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn one_hot_has_single_active_level(levels in prop::collection::vec(0u8..4, 2..40)) {
        let table = RawTable {
            columns: vec![Column { name: "c".into(), kind: ColumnKind::Categorical }],
            rows: levels.iter().map(|l| vec![Cell::Cat(format!("L{l}"))]).collect(),
            label_name: "y".into(),
            labels: vec![0.0; levels.len()],
        };
        let distinct: std::collections::BTreeSet<_> = levels.iter().collect();
        prop_assume!(distinct.len() >= 2);
        let ds = encode_and_normalize(&table).unwrap();
        let map = &ds.encoding_map["c"];
        prop_assert_eq!(map.len(), distinct.len());
        // one-hot ones map to the positive side of each z-scored level column
        for (i, l) in levels.iter().enumerate() {
            let active: Vec<&String> = map
                .iter()
                .filter(|(_, &j)| ds.features[(i, j)] > 0.0)
                .map(|(lv, _)| lv)
                .collect();
            let want = format!("L{l}");
            prop_assert_eq!(active, vec![&want]);
        }
    }

    #[test]
    fn split_is_reproducible(n in 30usize..500, seed in any::<u64>()) {
        let s = PoolSpec { seed, ..PoolSpec::default() };
        let a = split_pool(n, &s, 2).unwrap();
        prop_assert_eq!(&a, &split_pool(n, &s, 2).unwrap());
        let other = split_pool(n, &PoolSpec { seed: seed.wrapping_add(1), ..s }, 2).unwrap();
        prop_assert_ne!(a.pool, other.pool);
    }

    #[test]
    fn drowsiness_is_monotone_and_bounded(a in -50.0f64..50.0, b in -50.0f64..50.0, t0 in -5.0f64..5.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (u, v) = (drowsiness_index(lo, t0), drowsiness_index(hi, t0));
        prop_assert!(u <= v);
        prop_assert!((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v));
    }

    #[test]
    fn gsx_follows_pool_permutation(rows in 4usize..25, cols in 1usize..5, seed in any::<u64>()) {
        let x = matrix(rows, cols, seed);
        let mut perm: Vec<usize> = (0..rows).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for i in (1..rows).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        // permuted row i is original row perm[i]
        let xp = x.select(Axis(0), &perm);
        let a = gsx_trace(&x, rows);
        let b: Vec<usize> = gsx_trace(&xp, rows).into_iter().map(|i| perm[i]).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn gsx_is_scale_covariant(rows in 4usize..25, cols in 1usize..5, seed in any::<u64>(), c in 0.01f64..100.0) {
        let x = matrix(rows, cols, seed);
        prop_assert_eq!(gsx_trace(&x, rows), gsx_trace(&(&x * c), rows));
    }

    #[test]
    fn gsx_coverage_shrinks(rows in 4usize..25, cols in 1usize..5, seed in any::<u64>()) {
        let x = matrix(rows, cols, seed);
        let mut state = PoolState::new(x.clone(), 1);
        state.label(select_first_gsx(x.view()), 0.0).unwrap();
        let mut last = f64::INFINITY;
        while state.n_unlabeled() > 0 {
            let cover = state.unlabeled().map(|n| min_input_distance(&state, n).unwrap())
                .fold(0.0, f64::max);
            prop_assert!(cover <= last);
            last = cover;
            let n = next_gsx(&state).unwrap();
            state.label(n, 0.0).unwrap();
        }
    }

    #[test]
    fn igs_never_picks_a_dominated_candidate(rows in 6usize..25, cols in 1usize..4, seed in any::<u64>()) {
        let x = matrix(rows, cols, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = (0..rows).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut state = PoolState::new(x.clone(), cols);
        for (i, &yi) in y.iter().enumerate().take(cols.max(2)) {
            state.label(i, yi).unwrap();
        }
        let yv = ndarray::Array1::from(y.clone());
        let model = ridge_fit_rows(x.view(), yv.view(), state.labeled(), &ModelConfig::default()).unwrap();
        let pick = next_igs(&state, &model).unwrap();
        let products = |n: usize| -> Vec<f64> {
            let p = model.predict_one(x.row(n));
            state.labeled().iter().map(|&m| {
                alr::samplers::euclidean(x.row(n), x.row(m)) * (p - y[m]).abs()
            }).collect()
        };
        let chosen = products(pick);
        for n in state.unlabeled() {
            let other = products(n);
            let dominates = other.iter().zip(&chosen).all(|(a, b)| a >= b);
            if dominates {
                prop_assert!(min_product_distance(&state, &model, n).unwrap()
                    <= min_product_distance(&state, &model, pick).unwrap());
            }
        }
    }

    #[test]
    fn fdr_is_monotone(p in prop::collection::vec(0.0f64..=1.0, 1..40)) {
        let adj = fdr_adjust(&p).unwrap();
        for i in 0..p.len() {
            prop_assert!(adj[i] >= p[i] && adj[i] <= 1.0);
            for j in 0..p.len() {
                if p[i] <= p[j] {
                    prop_assert!(adj[i] <= adj[j]);
                }
            }
        }
    }

    #[test]
    fn dunn_ignores_monotone_transforms(seed in any::<u64>(), g in 2usize..6, n in 2usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups: Vec<Vec<f64>> = (0..g)
            .map(|_| (0..n).map(|_| rng.random_range(0..20) as f64 / 4.0).collect())
            .collect();
        let moved: Vec<Vec<f64>> = groups
            .iter()
            .map(|v| v.iter().map(|x| (x * 0.7).exp() + 3.0 * x).collect())
            .collect();
        let a = dunn_pairwise(&groups).unwrap();
        let b = dunn_pairwise(&moved).unwrap();
        for (s, t) in a.iter().zip(&b) {
            prop_assert!((s.p - t.p).abs() < 1e-12);
        }
    }

    #[test]
    fn swapping_groups_transposes(seed in any::<u64>(), g in 3usize..6, n in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let groups: Vec<Vec<f64>> = (0..g)
            .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let (u, v) = (0, g - 1);
        let mut swapped = groups.clone();
        swapped.swap(u, v);
        let p = |res: &[alr::stats::PairTest], a: usize, b: usize| {
            res.iter().find(|t| (t.row, t.col) == (a.max(b), a.min(b))).unwrap().p
        };
        let a = dunn_pairwise(&groups).unwrap();
        let b = dunn_pairwise(&swapped).unwrap();
        let rename = |i: usize| if i == u { v } else if i == v { u } else { i };
        for (r, c) in pair_indices(g) {
            prop_assert!((p(&a, r, c) - p(&b, rename(r), rename(c))).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 16, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn traces_partition_the_pool(seed in any::<u64>(), d in 1usize..5) {
        let ds = synthetic_linear(&SyntheticSpec { n: 60, d, noise: 0.2, seed }).unwrap();
        let pool: Vec<usize> = (0..50).collect();
        for kind in StrategyKind::ALL {
            let r = run_once(&ds, &pool, &spec(kind, 0, d, 20)).unwrap();
            let mut seen = vec![false; pool.len()];
            for &i in &r.trace {
                prop_assert!(i < pool.len() && !seen[i]);
                seen[i] = true;
            }
            prop_assert_eq!(r.trace.len(), 20);
            prop_assert_eq!(&r, &run_once(&ds, &pool, &spec(kind, 0, d, 20)).unwrap());
        }
    }

    #[test]
    fn aggregate_ignores_record_order(seed in any::<u64>()) {
        let ds = synthetic_linear(&SyntheticSpec { n: 40, d: 2, noise: 0.5, seed: 3 }).unwrap();
        let pool: Vec<usize> = (0..32).collect();
        let mut records: Vec<RunRecord> = Vec::new();
        for rep in 0..3 {
            for kind in [StrategyKind::Bl, StrategyKind::Gsx, StrategyKind::Igs] {
                records.push(run_once(&ds, &pool, &spec(kind, rep, 2, 12)).unwrap());
            }
        }
        let base = aggregate(&records).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..records.len()).rev() {
            records.swap(i, rng.random_range(0..=i));
        }
        prop_assert_eq!(base, aggregate(&records).unwrap());
    }
}

#[test]
fn pool_rmse_counts_labeled_samples_as_exact() {
    let ds = synthetic_linear(&SyntheticSpec {
        n: 80,
        d: 3,
        noise: 0.4,
        seed: 9,
    })
    .unwrap();
    let pool: Vec<usize> = (0..64).collect();
    let r = run_once(&ds, &pool, &spec(StrategyKind::Gsx, 0, 3, 30)).unwrap();
    let n = pool.len() as f64;
    // rebuild each step and compare with the unlabeled-only RMSE
    for p in &r.points {
        let labeled = &r.trace[..p.k];
        let y = ds.labels.clone();
        let model = ridge_fit_rows(
            ds.features.view(),
            y.view(),
            labeled,
            &ModelConfig::default(),
        )
        .unwrap();
        let unl: Vec<usize> = pool
            .iter()
            .copied()
            .filter(|i| !labeled.contains(i))
            .collect();
        let sse: f64 = unl
            .iter()
            .map(|&i| (model.predict_one(ds.features.row(i)) - y[i]).powi(2))
            .sum();
        let unl_rmse = (sse / unl.len() as f64).sqrt();
        let scaled = unl_rmse * ((n - p.k as f64) / n).sqrt();
        assert!((p.rmse - scaled).abs() < 1e-12, "{} vs {}", p.rmse, scaled);
    }
}
