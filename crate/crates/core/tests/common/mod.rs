//! Brute-force reference implementations of every selection rule, written
//! without the library's distance caches, plus random instance generators.
#![allow(dead_code)]

use alr::model::{ridge_fit, ModelConfig, RidgeModel};
use alr::samplers::{FirstPick, PoolState, Sampler, StrategyConfig, StrategyKind};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// First index attaining the maximum.
pub fn argmax_first(scores: &[(usize, f64)]) -> usize {
    let best = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    scores.iter().find(|s| s.1 == best).expect("nonempty").0
}

pub struct Instance {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.x.len()
    }
    pub fn d(&self) -> usize {
        self.x[0].len()
    }
    pub fn features(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n(), self.d()), |(i, j)| self.x[i][j])
    }
}

/// Small random instance. Half the instances use integer coordinates on a
/// tiny grid and duplicated rows so exact ties are common.
pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let d = rng.random_range(1..=5);
    let n = rng.random_range((d + 4)..=30);
    let gridded = rng.random_bool(0.5);
    let mut x: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..d)
                .map(|_| {
                    if gridded {
                        rng.random_range(-2..=2) as f64
                    } else {
                        rng.random_range(-3.0..3.0)
                    }
                })
                .collect()
        })
        .collect();
    if gridded {
        for _ in 0..rng.random_range(0..4) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            x[b] = x[a].clone();
        }
    }
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = x
        .iter()
        .map(|r| {
            let clean: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 1.0;
            if gridded {
                clean.round()
            } else {
                clean + rng.random_range(-0.5..0.5)
            }
        })
        .collect();
    Instance { x, y }
}

/// Reference scorer over an explicit labeled list.
pub struct Reference<'a> {
    pub inst: &'a Instance,
    pub labeled: Vec<usize>,
}

impl<'a> Reference<'a> {
    pub fn unlabeled(&self) -> Vec<usize> {
        (0..self.inst.n())
            .filter(|i| !self.labeled.contains(i))
            .collect()
    }

    pub fn fit(&self, cfg: &ModelConfig, rows: &[usize]) -> RidgeModel {
        let d = self.inst.d();
        let x = Array2::from_shape_fn((rows.len(), d), |(i, j)| self.inst.x[rows[i]][j]);
        let y: Array1<f64> = rows.iter().map(|&r| self.inst.y[r]).collect();
        ridge_fit(x.view(), y.view(), cfg).expect("fit")
    }

    pub fn predict(&self, m: &RidgeModel, n: usize) -> f64 {
        m.predict_one(Array1::from(self.inst.x[n].clone()).view())
    }

    pub fn centroid_pick(&self) -> usize {
        let (n, d) = (self.inst.n(), self.inst.d());
        let c: Vec<f64> = (0..d)
            .map(|j| self.inst.x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
            .collect();
        let scores: Vec<(usize, f64)> = (0..n).map(|i| (i, -dist(&self.inst.x[i], &c))).collect();
        argmax_first(&scores)
    }

    pub fn gsx(&self) -> usize {
        let scores: Vec<(usize, f64)> = self
            .unlabeled()
            .into_iter()
            .map(|n| {
                let s = self
                    .labeled
                    .iter()
                    .map(|&m| dist(&self.inst.x[n], &self.inst.x[m]))
                    .fold(f64::INFINITY, f64::min);
                (n, s)
            })
            .collect();
        argmax_first(&scores)
    }

    pub fn gsy(&self, f: &RidgeModel) -> usize {
        let scores: Vec<(usize, f64)> = self
            .unlabeled()
            .into_iter()
            .map(|n| {
                let p = self.predict(f, n);
                let s = self
                    .labeled
                    .iter()
                    .map(|&m| (p - self.inst.y[m]).abs())
                    .fold(f64::INFINITY, f64::min);
                (n, s)
            })
            .collect();
        argmax_first(&scores)
    }

    pub fn igs(&self, f: &RidgeModel) -> usize {
        let scores: Vec<(usize, f64)> = self
            .unlabeled()
            .into_iter()
            .map(|n| {
                let p = self.predict(f, n);
                let s = self
                    .labeled
                    .iter()
                    .map(|&m| dist(&self.inst.x[n], &self.inst.x[m]) * (p - self.inst.y[m]).abs())
                    .fold(f64::INFINITY, f64::min);
                (n, s)
            })
            .collect();
        argmax_first(&scores)
    }

    pub fn qbc(&self, committee: &[RidgeModel]) -> usize {
        let scores: Vec<(usize, f64)> = self
            .unlabeled()
            .into_iter()
            .map(|n| {
                let preds: Vec<f64> = committee.iter().map(|m| self.predict(m, n)).collect();
                let mean = preds.iter().sum::<f64>() / preds.len() as f64;
                let var =
                    preds.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / preds.len() as f64;
                (n, var)
            })
            .collect();
        argmax_first(&scores)
    }

    pub fn emcm(&self, master: &RidgeModel, committee: &[RidgeModel]) -> usize {
        let scores: Vec<(usize, f64)> = self
            .unlabeled()
            .into_iter()
            .map(|n| {
                let x = &self.inst.x[n];
                let f = self.predict(master, n);
                let total: f64 = committee
                    .iter()
                    .map(|m| {
                        let r = self.predict(m, n) - f;
                        x.iter().map(|v| (r * v) * (r * v)).sum::<f64>().sqrt()
                    })
                    .sum();
                (n, total / committee.len() as f64)
            })
            .collect();
        argmax_first(&scores)
    }

    /// Bootstrap resamples drawn the documented way: k uniform draws with
    /// replacement from the labeled list, redrawn while only one distinct
    /// sample appears (k >= 2, at most 64 attempts).
    pub fn resamples(&self, rng: &mut ChaCha8Rng, p: usize) -> Vec<Vec<usize>> {
        let k = self.labeled.len();
        (0..p)
            .map(|_| {
                let mut r = Vec::new();
                for _ in 0..64 {
                    r = (0..k)
                        .map(|_| self.labeled[rng.random_range(0..k)])
                        .collect();
                    if k < 2 || r.iter().any(|&i| i != r[0]) {
                        break;
                    }
                }
                r
            })
            .collect()
    }
}

/// Drives the library sampler and the reference side by side for `steps`
/// selections; returns the number of selections compared.
pub fn compare_strategy(inst: &Instance, kind: StrategyKind, seed: u64, steps: usize) -> usize {
    let cfg = ModelConfig::default();
    let d = inst.d();
    let k0 = d;
    let mut state = PoolState::new(inst.features(), k0);
    let mut reference = Reference {
        inst,
        labeled: Vec::new(),
    };

    // initial labeled set
    if kind.random_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut order: Vec<usize> = (0..inst.n()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        for &i in order.iter().take(k0) {
            state.label(i, inst.y[i]).unwrap();
            reference.labeled.push(i);
        }
    } else {
        let first = reference.centroid_pick();
        assert_eq!(first, alr::samplers::select_first_gsx(state.features()));
        state.label(first, inst.y[first]).unwrap();
        reference.labeled.push(first);
        while reference.labeled.len() < k0 {
            let want = reference.gsx();
            assert_eq!(alr::samplers::next_gsx(&state).unwrap(), want, "GSx init");
            state.label(want, inst.y[want]).unwrap();
            reference.labeled.push(want);
        }
    }

    let strategy = StrategyConfig {
        kind,
        committee_size: 4,
        seed,
        first_pick: FirstPick::Centroid,
    };
    let mut sampler = Sampler::new(strategy, cfg);
    let mut ref_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut compared = 0;
    for _ in 0..steps {
        if state.n_unlabeled() == 0 {
            break;
        }
        let master = reference.fit(&cfg, &reference.labeled);
        let want = match kind {
            StrategyKind::Bl => {
                let cands = reference.unlabeled();
                cands[ref_rng.random_range(0..cands.len())]
            }
            StrategyKind::Gsx => reference.gsx(),
            StrategyKind::Gsy => reference.gsy(&master),
            StrategyKind::Igs => reference.igs(&master),
            StrategyKind::Qbc | StrategyKind::Emcm => {
                let committee: Vec<RidgeModel> = reference
                    .resamples(&mut ref_rng, 4)
                    .iter()
                    .map(|rows| reference.fit(&cfg, rows))
                    .collect();
                if kind == StrategyKind::Qbc {
                    reference.qbc(&committee)
                } else {
                    reference.emcm(&master, &committee)
                }
            }
        };
        let got = sampler.select(&state, Some(&master)).unwrap();
        assert_eq!(
            got, want,
            "{kind} step {compared}: library picked {got}, reference {want}"
        );
        state.label(got, inst.y[got]).unwrap();
        reference.labeled.push(got);
        compared += 1;
    }
    compared
}

/// Minimizes sum (y - Xb - c)^2 + lambda |b|^2 by Nesterov-accelerated
/// gradient descent with adaptive restart. Works on the precomputed
/// quadratic form; the step is 1/L with L from power iteration.
pub fn gradient_descent(x: &Array2<f64>, y: &Array1<f64>, lambda: f64) -> (Array1<f64>, f64) {
    let (k, d) = x.dim();
    let p = d + 1;
    let row = |i: usize, j: usize| if j < d { x[(i, j)] } else { 1.0 };
    // objective = w'Hw - 2 b'w + const
    let mut h = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for i in 0..k {
        for (a, ha) in h.iter_mut().enumerate() {
            b[a] += row(i, a) * y[i];
            for (c, hac) in ha.iter_mut().enumerate() {
                *hac += row(i, a) * row(i, c);
            }
        }
    }
    for (j, hj) in h.iter_mut().enumerate().take(d) {
        hj[j] += lambda;
    }
    let mul = |v: &[f64]| -> Vec<f64> {
        h.iter()
            .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    };
    let grad = |v: &[f64]| -> Vec<f64> {
        mul(v)
            .iter()
            .zip(&b)
            .map(|(hv, bi)| 2.0 * (hv - bi))
            .collect()
    };
    let objective = |v: &[f64]| -> f64 {
        let hv = mul(v);
        v.iter().zip(&hv).map(|(a, c)| a * c).sum::<f64>()
            - 2.0 * v.iter().zip(&b).map(|(a, c)| a * c).sum::<f64>()
    };
    let mut v = vec![1.0; p];
    let mut top = 0.0;
    for _ in 0..200 {
        let hv = mul(&v);
        top = hv.iter().map(|a| a * a).sum::<f64>().sqrt();
        v = hv.iter().map(|a| a / top).collect();
    }
    let step = 1.0 / (2.0 * top * 1.01);

    let mut w = vec![0.0; p];
    let mut prev = w.clone();
    let mut f_prev = objective(&w);
    let mut t = 0.0;
    for _ in 0..5_000_000 {
        let mom = t / (t + 3.0);
        let look: Vec<f64> = w
            .iter()
            .zip(&prev)
            .map(|(a, b)| a + mom * (a - b))
            .collect();
        let g = grad(&look);
        let next: Vec<f64> = look.iter().zip(&g).map(|(a, gi)| a - step * gi).collect();
        let f = objective(&next);
        t = if f > f_prev { 0.0 } else { t + 1.0 };
        prev = std::mem::replace(&mut w, next);
        f_prev = f;
        if grad(&w).iter().map(|a| a * a).sum::<f64>().sqrt() < 1e-11 {
            break;
        }
    }
    (Array1::from(w[..d].to_vec()), w[d])
}

pub fn random_problem(rng: &mut ChaCha8Rng) -> (Array2<f64>, Array1<f64>) {
    let k = rng.random_range(1..=10);
    let d = rng.random_range(1..=10);
    let x = Array2::from_shape_fn((k, d), |_| rng.random_range(-2.0..2.0));
    let y = Array1::from_shape_fn(k, |_| rng.random_range(-5.0..5.0));
    (x, y)
}
