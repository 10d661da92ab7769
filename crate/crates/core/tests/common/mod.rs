//! Independent reference implementations used by the integration and
//! acceptance tests. None of them call into the library's algorithms.

#![allow(dead_code)]

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use tarsim_core::classifier::{LabeledSet, ScoreVector};
use tarsim_core::corpus::{Corpus, Document};

/// A random metric instance: corpus, scores, judgments and a labeled set.
pub struct Instance {
    pub corpus: Corpus,
    pub scores: ScoreVector,
    pub qrels: BTreeSet<String>,
    pub labeled: LabeledSet,
    pub target: f64,
}

/// N <= 200, R <= 40. Scores come from a coarse grid half of the time so
/// ties are common. Doc ids are shuffled relative to corpus order.
pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let n = rng.random_range(1..=200usize);
    let r = rng.random_range(1..=n.min(40));
    let mut ids: Vec<String> = (0..n).map(|i| format!("x{:03}", i)).collect();
    ids.shuffle(rng);
    let mut positions: Vec<usize> = (0..n).collect();
    positions.shuffle(rng);
    let relevant: BTreeSet<usize> = positions[..r].iter().copied().collect();
    let docs: Vec<Document> = ids
        .iter()
        .enumerate()
        .map(|(i, id)| {
            let cats: Vec<&str> = if relevant.contains(&i) { vec!["c"] } else { vec![] };
            Document::new(id.clone(), "text", cats)
        })
        .collect();
    let corpus = Corpus::from_documents(docs).unwrap();
    let grid = rng.random_bool(0.5);
    let scores: Vec<f64> = (0..n)
        .map(|_| {
            if grid {
                rng.random_range(0..=8) as f64 / 8.0
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    let qrels: BTreeSet<String> = relevant.iter().map(|&i| ids[i].clone()).collect();
    let n_labeled = rng.random_range(0..=n / 2);
    positions.shuffle(rng);
    let mut labeled = LabeledSet::new();
    for &i in &positions[..n_labeled] {
        labeled.insert(ids[i].clone(), relevant.contains(&i), 1).unwrap();
    }
    let target = match rng.random_range(0..5) {
        0 => 0.8,
        1 => 1.0,
        2 => 0.5,
        3 => 0.75,
        _ => rng.random_range(0.01..=1.0),
    };
    Instance {
        corpus,
        scores: ScoreVector::new(scores).unwrap(),
        qrels,
        labeled,
        target,
    }
}

/// Whether document `a` is ranked before `b`: higher score first, then
/// smaller doc id.
fn before(ids: &[&str], scores: &[f64], a: usize, b: usize) -> bool {
    scores[a] > scores[b] || (scores[a] == scores[b] && ids[a] < ids[b])
}

/// Ranking by counting, for each document, how many documents precede it.
pub fn brute_ranking(ids: &[&str], scores: &[f64]) -> Vec<usize> {
    let n = ids.len();
    let mut slots = vec![usize::MAX; n];
    for i in 0..n {
        let pos = (0..n).filter(|&j| j != i && before(ids, scores, j, i)).count();
        slots[pos] = i;
    }
    slots
}

fn reached(found: usize, relevant: usize, target: f64) -> bool {
    found as f64 / relevant as f64 >= target
}

/// Shortest ranked prefix reaching the target, found by trying every
/// length and recounting from scratch.
pub fn brute_dfr(inst: &Instance) -> f64 {
    let ids: Vec<&str> = inst.corpus.doc_ids().collect();
    let ranking = brute_ranking(&ids, inst.scores.values());
    let r = inst.qrels.len();
    let n = ids.len();
    for d in 1..=n {
        let found = ranking[..d].iter().filter(|&&i| inst.qrels.contains(ids[i])).count();
        if reached(found, r, inst.target) {
            return d as f64 / n as f64;
        }
    }
    unreachable!("the full ranking holds every relevant document")
}

pub fn brute_r_precision(inst: &Instance) -> f64 {
    let ids: Vec<&str> = inst.corpus.doc_ids().collect();
    let ranking = brute_ranking(&ids, inst.scores.values());
    let r = inst.qrels.len();
    let hits = ranking[..r].iter().filter(|&&i| inst.qrels.contains(ids[i])).count();
    hits as f64 / r as f64
}

/// Counts behind the optimal two-phase cost, by exhaustive search over
/// second-phase depths: (train_pos, train_neg, review_pos, review_neg).
pub fn brute_two_phase(inst: &Instance) -> (usize, usize, usize, usize) {
    let ids: Vec<&str> = inst.corpus.doc_ids().collect();
    let labeled: BTreeSet<&str> = inst.labeled.entries().iter().map(|e| e.doc_id.as_str()).collect();
    let train_pos = labeled.iter().filter(|id| inst.qrels.contains(**id)).count();
    let train_neg = labeled.len() - train_pos;
    let unlabeled_ids: Vec<&str> = ids.iter().copied().filter(|id| !labeled.contains(id)).collect();
    let unlabeled_scores: Vec<f64> = ids
        .iter()
        .enumerate()
        .filter(|(_, id)| !labeled.contains(*id))
        .map(|(i, _)| inst.scores.get(i))
        .collect();
    let order = brute_ranking(&unlabeled_ids, &unlabeled_scores);
    let r = inst.qrels.len();
    for d in 0..=order.len() {
        let review_pos = order[..d]
            .iter()
            .filter(|&&i| inst.qrels.contains(unlabeled_ids[i]))
            .count();
        if reached(train_pos + review_pos, r, inst.target) {
            return (train_pos, train_neg, review_pos, d - review_pos);
        }
    }
    unreachable!("reviewing everything reaches any target")
}

/// `C * sum softplus(-y z) + |w|^2 / 2` for dense rows, intercept last in
/// `theta`.
pub fn logreg_objective(x: &[Vec<f64>], y: &[bool], c: f64, theta: &[f64]) -> f64 {
    let p = theta.len() - 1;
    let mut loss = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + theta[p];
        let m = if label { -z } else { z };
        loss += if m > 0.0 { m + (-m).exp().ln_1p() } else { m.exp().ln_1p() };
    }
    c * loss + 0.5 * theta[..p].iter().map(|w| w * w).sum::<f64>()
}

/// Gradient of [`logreg_objective`] with respect to `[w..., b]`; the
/// intercept term is penalized only when `penalize_intercept` is set.
pub fn logreg_gradient(x: &[Vec<f64>], y: &[bool], c: f64, theta: &[f64], penalize_intercept: bool) -> Vec<f64> {
    let p = theta.len() - 1;
    let mut g = vec![0.0; p + 1];
    for (row, &label) in x.iter().zip(y) {
        let z: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() + theta[p];
        let residual = 1.0 / (1.0 + (-z).exp()) - if label { 1.0 } else { 0.0 };
        for j in 0..p {
            g[j] += c * residual * row[j];
        }
        g[p] += c * residual;
    }
    for j in 0..p {
        g[j] += theta[j];
    }
    if penalize_intercept {
        g[p] += theta[p];
    }
    g
}

/// Full-Hessian damped Newton method on the logistic objective with an
/// unpenalized intercept. Returns `[w..., b]`.
pub fn dense_newton_logreg(x: &[Vec<f64>], y: &[bool], c: f64) -> Vec<f64> {
    let n = x.len();
    let p = x.first().map_or(0, Vec::len);
    let a = DMatrix::from_fn(n, p + 1, |i, j| if j < p { x[i][j] } else { 1.0 });
    let t = DVector::from_iterator(n, y.iter().map(|&l| if l { 1.0 } else { 0.0 }));
    let mut reg = DMatrix::<f64>::identity(p + 1, p + 1);
    reg[(p, p)] = 0.0;
    let mut theta = DVector::<f64>::zeros(p + 1);
    for _ in 0..200 {
        let z = &a * &theta;
        let s = z.map(|v| 1.0 / (1.0 + (-v).exp()));
        let grad = a.transpose() * (&s - &t) * c + &reg * &theta;
        if grad.amax() < 1e-13 {
            break;
        }
        let wdiag = s.map(|v| v * (1.0 - v));
        let h = &reg + DMatrix::from_fn(p + 1, p + 1, |i, j| {
            c * (0..n).map(|k| a[(k, i)] * a[(k, j)] * wdiag[k]).sum::<f64>()
        });
        let step = h.cholesky().expect("Hessian is positive definite").solve(&grad);
        let f0 = logreg_objective(x, y, c, theta.as_slice());
        let slope = grad.dot(&step);
        let mut alpha = 1.0;
        loop {
            let cand = &theta - &step * alpha;
            if logreg_objective(x, y, c, cand.as_slice()) <= f0 - 1e-4 * alpha * slope || alpha < 1e-12 {
                theta = cand;
                break;
            }
            alpha *= 0.5;
        }
    }
    theta.as_slice().to_vec()
}

/// Ratio Gamma((v+1)/2) / Gamma(v/2) for a positive integer `v`, by the
/// recurrence Gamma(x+1) = x Gamma(x) from Gamma(1/2) = sqrt(pi), Gamma(1) = 1.
fn gamma_half_ratio(v: usize) -> f64 {
    let gamma_half = |k: usize| -> f64 {
        // Gamma(k/2)
        let (mut x, mut g) = if k.is_multiple_of(2) { (1.0, 1.0) } else { (0.5, std::f64::consts::PI.sqrt()) };
        while x < k as f64 / 2.0 - 1e-9 {
            g *= x;
            x += 1.0;
        }
        g
    };
    gamma_half(v + 1) / gamma_half(v)
}

/// Student t density with `v` degrees of freedom.
pub fn t_density(x: f64, v: usize) -> f64 {
    let v_f = v as f64;
    gamma_half_ratio(v) / (v_f * std::f64::consts::PI).sqrt() * (1.0 + x * x / v_f).powf(-(v_f + 1.0) / 2.0)
}

/// Two-sided p-value by composite Simpson quadrature of the density over
/// [0, |t|]: p = 1 - 2 * integral.
pub fn t_two_sided_p(t: f64, v: usize) -> f64 {
    let upper = t.abs();
    let m = 200_000; // even
    let h = upper / m as f64;
    let mut sum = t_density(0.0, v) + t_density(upper, v);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * t_density(i as f64 * h, v);
    }
    (1.0 - 2.0 * sum * h / 3.0).max(0.0)
}

/// Paired t statistic from raw sums: t = mean / sqrt(var / n) with
/// var = (sum d^2 - (sum d)^2 / n) / (n - 1).
pub fn paired_t(a: &[f64], b: &[f64]) -> (f64, usize) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let s1: f64 = d.iter().sum();
    let s2: f64 = d.iter().map(|v| v * v).sum();
    let var = (s2 - s1 * s1 / n) / (n - 1.0);
    (s1 / n / (var / n).sqrt(), d.len() - 1)
}

/// Expected number of documents reviewed in uniformly random order until
/// `k` of the `r` relevant documents among `n` are found, by summing the
/// negative hypergeometric distribution term by term.
pub fn random_order_expected_reviews(n: usize, r: usize, k: usize) -> f64 {
    assert!(k >= 1 && k <= r && r <= n);
    // P(the k-th relevant document is at position t)
    //   = C(t-1, k-1) C(n-t, r-k) / C(n, r)
    let ln_choose = |a: usize, b: usize| -> f64 {
        if b > a {
            return f64::NEG_INFINITY;
        }
        let b = b.min(a - b);
        (0..b).map(|i| ((a - i) as f64).ln() - ((i + 1) as f64).ln()).sum()
    };
    let total = ln_choose(n, r);
    let mut expectation = 0.0;
    let mut mass = 0.0;
    for t in k..=(n - r + k) {
        let p = (ln_choose(t - 1, k - 1) + ln_choose(n - t, r - k) - total).exp();
        mass += p;
        expectation += t as f64 * p;
    }
    assert!((mass - 1.0).abs() < 1e-9, "distribution mass {mass}");
    expectation
}

/// Dense dataset with at most 40 rows and 10 features, about a third of the
/// entries zero, labels drawn from a random linear model and both classes
/// present. Returns (rows, labels, penalty).
pub fn random_logreg_dataset<R: Rng>(rng: &mut R) -> (Vec<Vec<f64>>, Vec<bool>, f64) {
    let n = rng.random_range(2..=40usize);
    let p = rng.random_range(1..=10usize);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..p)
                .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() })
                .collect()
        })
        .collect();
    let w: Vec<f64> = (0..p).map(|_| rng.random_range(-4.0..4.0)).collect();
    let b = rng.random_range(-1.0..1.0);
    let mut y: Vec<bool> = x
        .iter()
        .map(|row| {
            let z: f64 = row.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b;
            rng.random::<f64>() < 1.0 / (1.0 + (-z).exp())
        })
        .collect();
    let i = rng.random_range(0..n);
    let j = (i + 1 + rng.random_range(0..n - 1)) % n;
    y[i] = true;
    y[j] = false;
    let penalty = 10f64.powf(rng.random_range(-1.0..1.0));
    (x, y, penalty)
}
