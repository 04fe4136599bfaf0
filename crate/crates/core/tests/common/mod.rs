#![allow(dead_code)]

use emac::agent::{actor_loss, blended_critic_loss};
use emac::memory::MemoryTable;
use emac::nn::{Activation, Mlp};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
/// Below this magnitude both gradients count as zero and the absolute
/// difference is compared instead.
pub const FD_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < FD_FLOOR {
        (analytic - numeric).abs()
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Central differences of `f` around `net`'s parameters.
pub fn numeric_gradient(net: &Mlp, mut f: impl FnMut(&Mlp) -> f64) -> Vec<f64> {
    let base = net.flat_params();
    let mut probe = net.clone();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] = base[i] + FD_STEP;
            probe.set_flat_params(&p).unwrap();
            let up = f(&probe);
            p[i] = base[i] - FD_STEP;
            probe.set_flat_params(&p).unwrap();
            let down = f(&probe);
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| relative_error(*a, *n))
        .fold(0.0, f64::max)
}

/// Worst relative error of the blended critic loss and the actor loss over
/// one seeded random problem.
pub fn gradient_check(seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs = rng.random_range(1..4);
    let act = rng.random_range(1..3);
    let hidden = vec![rng.random_range(2..7), rng.random_range(2..7)];
    let bound = rng.random_range(0.5..3.0);
    let mut actor_sizes = vec![obs];
    actor_sizes.extend(&hidden);
    actor_sizes.push(act);
    let mut critic_sizes = vec![obs + act];
    critic_sizes.extend(&hidden);
    critic_sizes.push(1);
    let actor = Mlp::new(
        &actor_sizes,
        Activation::Relu,
        Activation::ScaledTanh(bound),
        &mut rng,
    )
    .unwrap();
    let critic = Mlp::new(
        &critic_sizes,
        Activation::Relu,
        Activation::Identity,
        &mut rng,
    )
    .unwrap();
    let n = rng.random_range(1..8);
    let states = Array2::from_shape_fn((n, obs), |_| rng.random_range(-2.0..2.0));
    let actions = Array2::from_shape_fn((n, act), |_| rng.random_range(-bound..bound));
    let td = Array1::from_shape_fn(n, |_| rng.random_range(-5.0..5.0));
    let mem = Array1::from_shape_fn(n, |_| rng.random_range(-5.0..5.0));
    let alpha = rng.random_range(0.0..1.0);

    let critic_loss = |c: &Mlp| {
        blended_critic_loss(
            c,
            states.view(),
            actions.view(),
            td.view(),
            mem.view(),
            alpha,
        )
        .unwrap()
        .loss
    };
    let analytic = blended_critic_loss(
        &critic,
        states.view(),
        actions.view(),
        td.view(),
        mem.view(),
        alpha,
    )
    .unwrap()
    .grads
    .flatten();
    let critic_err = max_relative_error(&analytic, &numeric_gradient(&critic, critic_loss));

    let analytic = actor_loss(&actor, &critic, states.view())
        .unwrap()
        .grads
        .flatten();
    let numeric = numeric_gradient(&actor, |a| {
        actor_loss(a, &critic, states.view()).unwrap().loss
    });
    let actor_err = max_relative_error(&analytic, &numeric);
    (critic_err, actor_err)
}

/// Brute-force nearest neighbours written independently of the table:
/// full sort by `(distance, index)`.
pub fn oracle_lookup(
    keys: &[Vec<f64>],
    values: &[f64],
    query: &[f64],
    k: usize,
    eps: f64,
) -> (Vec<usize>, Vec<f64>, f64) {
    let mut d: Vec<(f64, usize)> = keys
        .iter()
        .enumerate()
        .map(|(i, key)| {
            (
                key.iter()
                    .zip(query)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    + eps,
                i,
            )
        })
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let top = &d[..k];
    let z: f64 = top.iter().map(|(di, _)| (-di).exp()).sum();
    let weights: Vec<f64> = top.iter().map(|(di, _)| (-di).exp() / z).collect();
    let value = top
        .iter()
        .zip(&weights)
        .map(|((_, i), w)| w * values[*i])
        .sum();
    (top.iter().map(|t| t.1).collect(), weights, value)
}

/// Largest discrepancy between table lookups and the oracle; `None` when a
/// neighbour set differs.
pub fn knn_check(seed: u64, records: usize, queries: usize, dim: usize) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keys: Vec<Vec<f64>> = (0..records)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let values: Vec<f64> = (0..records)
        .map(|_| rng.random_range(-100.0..100.0))
        .collect();
    let mut table = MemoryTable::new(dim, records, 1e-3).unwrap();
    for (k, v) in keys.iter().zip(&values) {
        table.add(k, *v).unwrap();
    }
    let mut worst: f64 = 0.0;
    for _ in 0..queries {
        let q: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        for k in 1..=3 {
            let got = table.lookup(&q, k).unwrap();
            let (idx, w, v) = oracle_lookup(&keys, &values, &q, k, 1e-3);
            if got.indices != idx {
                return None;
            }
            for (a, b) in got.weights.iter().zip(&w) {
                worst = worst.max((a - b).abs());
            }
            worst = worst.max((got.value - v).abs());
        }
    }
    Some(worst)
}

/// Pearson correlation of squared pairwise distances before and after a
/// `u × v` projection, over `pairs` random pairs. Each pair is a point in
/// `[−1, 1]^v` and a second point at a uniform separation in `[0.1, 2]`
/// along a random direction.
pub fn jl_correlation(u: usize, v: usize, pairs: usize, seed: u64) -> f64 {
    let m = emac::memory::ProjectionMatrix::new(u, v, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut orig = Vec::with_capacity(pairs);
    let mut proj = Vec::with_capacity(pairs);
    let sq = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
    for _ in 0..pairs {
        let a: Vec<f64> = (0..v).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dir: Vec<f64> = (0..v).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        let sep = rng.random_range(0.1..2.0);
        let b: Vec<f64> = a
            .iter()
            .zip(&dir)
            .map(|(x, d)| x + sep * d / norm)
            .collect();
        orig.push(sq(&a, &b));
        proj.push(sq(&m.project(&a).unwrap(), &m.project(&b).unwrap()));
    }
    pearson(&orig, &proj)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Pearson chi-square statistic of `counts` against `probs`.
pub fn chi_square(counts: &[usize], probs: &[f64]) -> f64 {
    let n: usize = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = p * n as f64;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}
