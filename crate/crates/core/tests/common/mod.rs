//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use appeal_scope::corpus::{Period, Tweet};
use appeal_scope::synth::{sample_tweedie, stream_rng};
use chrono::{NaiveDate, TimeZone, Utc};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Nelder–Mead simplex minimisation with restarts around the incumbent
/// until a restart no longer moves it.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: F, x0: &[f64], step: f64, xtol: f64) -> Vec<f64> {
    let mut best = x0.to_vec();
    let mut scale = step;
    for _ in 0..200 {
        let next = nelder_mead_once(&f, &best, scale, xtol, 200_000);
        let moved = next.iter().zip(&best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        best = next;
        if moved < xtol {
            break;
        }
        scale = (moved * 10.0).clamp(xtol * 10.0, step);
    }
    best
}

fn nelder_mead_once<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], step: f64, xtol: f64, max_evals: usize) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let mut evals = n + 1;
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if size < xtol {
            break;
        }
        let centroid: Vec<f64> =
            (0..n).map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let towards = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (worst.0[j] - centroid[j])).collect() };
        let xr = towards(-1.0);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = towards(-2.0);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = towards(-0.5);
                let fx = f(&x);
                (x, fx)
            } else {
                let x = towards(0.5);
                let fx = f(&x);
                (x, fx)
            };
            evals += 1;
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for (x, fx) in simplex.iter_mut().skip(1) {
                    for j in 0..n {
                        x[j] = best[j] + 0.5 * (x[j] - best[j]);
                    }
                    *fx = f(x);
                    evals += 1;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0).0
}

/// Design with an intercept, a 25% binary column, further binary columns at
/// 40% and a standard-normal column; responses drawn from the Tweedie
/// sampler at `μ = exp(Xβ)`.
pub fn tweedie_problem(seed: u64, n: usize, beta: &[f64], p: f64, phi: f64) -> (DMatrix<f64>, Vec<f64>) {
    let k = beta.len();
    let mut rows = Vec::with_capacity(n * k);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = stream_rng(seed, 100, i as u64);
        let mut row = vec![1.0];
        for j in 1..k {
            let v = if j == k - 1 {
                StandardNormal.sample(&mut rng)
            } else if j == 1 {
                f64::from(u8::from(rng.random::<f64>() < 0.25))
            } else {
                f64::from(u8::from(rng.random::<f64>() < 0.4))
            };
            row.push(v);
        }
        let eta: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
        y.push(sample_tweedie(eta.exp(), p, phi, &mut rng).unwrap());
        rows.extend(row);
    }
    (DMatrix::from_row_slice(n, k, &rows), y)
}

/// Total Tweedie deviance written out directly from the unit-deviance
/// formula, independent of the library.
pub fn deviance_at(x: &DMatrix<f64>, y: &[f64], beta: &[f64], p: f64) -> f64 {
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let eta: f64 = (0..beta.len()).map(|j| x[(i, j)] * beta[j]).sum();
        let mu = eta.exp();
        let y_term = if yi > 0.0 { yi.powf(2.0 - p) / ((1.0 - p) * (2.0 - p)) } else { 0.0 };
        total += 2.0 * (y_term - yi * mu.powf(1.0 - p) / (1.0 - p) + mu.powf(2.0 - p) / (2.0 - p));
    }
    total
}

/// Degree table by direct enumeration: for each node, scan every tweet and
/// count the interactions it sends and receives.
pub fn naive_degrees(tweets: &[&Tweet]) -> BTreeMap<String, (u64, u64)> {
    let nodes: BTreeSet<&str> = tweets.iter().map(|t| t.author_id.as_str()).collect();
    let mut out = BTreeMap::new();
    for &u in &nodes {
        let (mut in_c, mut out_c) = (0u64, 0u64);
        for t in tweets {
            let mut targets: Vec<&str> = t.mentioned_author_ids.iter().map(String::as_str).collect();
            if t.is_retweet {
                targets.extend(t.retweeted_author_id.as_deref());
            }
            for target in targets {
                if target == t.author_id || !nodes.contains(target) {
                    continue;
                }
                if t.author_id == u {
                    out_c += 1;
                }
                if target == u {
                    in_c += 1;
                }
            }
        }
        out.insert(u.to_string(), (in_c, out_c));
    }
    out
}

/// The single period 2021-01-01 to 2021-01-07 used by [`random_tweets`].
pub fn week_period() -> Period {
    Period {
        label: "P".into(),
        start: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
        end: NaiveDate::from_ymd_opt(2021, 1, 7).unwrap(),
    }
}

/// Random corpus with repeated targets, self-references and targets outside
/// the author set.
pub fn random_tweets(seed: u64) -> Vec<Tweet> {
    let mut rng = stream_rng(seed, 200, 0);
    let n_users = rng.random_range(1..=50usize);
    let n_tweets = rng.random_range(1..=200usize);
    let user = |i: usize| format!("u{i:02}");
    (0..n_tweets)
        .map(|i| {
            let author = user(rng.random_range(0..n_users));
            // Indices past n_users name accounts that never post.
            let pick = |rng: &mut rand_chacha::ChaCha8Rng| user(rng.random_range(0..n_users + 5));
            let is_retweet = rng.random_bool(0.4);
            let retweeted_author_id = is_retweet.then(|| pick(&mut rng));
            let n_mentions = rng.random_range(0..4);
            let mentioned_author_ids = (0..n_mentions).map(|_| pick(&mut rng)).collect();
            Tweet {
                tweet_id: format!("t{i:03}"),
                author_id: author,
                created_at: Utc.with_ymd_and_hms(2021, 1, rng.random_range(1..=7), 12, 0, 0).unwrap(),
                is_retweet,
                retweeted_author_id,
                mentioned_author_ids,
                retweet_count: rng.random_range(0..50),
                embedding: None,
                misinfo_label: None,
            }
        })
        .collect()
}

