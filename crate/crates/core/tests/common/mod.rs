//! Brute-force scalar reference implementations of every loss, written with
//! plain loops over `Vec<f64>` and no shared code with the library.

#![allow(dead_code)]

use mmcl::data::SentimentClass;
use mmcl::losses::PairingPhase;
use mmcl::tensor::Matrix;

pub type Rows = Vec<Vec<f64>>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub fn normalize(v: &[f64]) -> Vec<f64> {
    let n = dot(v, v).sqrt();
    v.iter().map(|x| x / n).collect()
}

pub fn rows(m: &Matrix) -> Rows {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn matrix(r: &Rows) -> Matrix {
    Matrix::from_rows(r).unwrap()
}

/// InfoNCE where anchor i's positive is `positives[i]` and the other anchors are
/// its negatives. `literal` replaces the denominator with every anchor including i.
pub fn info_nce(anchors: &Rows, positives: &Rows, tau: f64, literal: bool) -> f64 {
    let n = anchors.len();
    let mut total = 0.0;
    for i in 0..n {
        let pos = dot(&anchors[i], &positives[i]) / tau;
        let mut den = 0.0;
        if !literal {
            den += pos.exp();
        }
        for j in 0..n {
            if j != i || literal {
                den += (dot(&anchors[i], &anchors[j]) / tau).exp();
            }
        }
        total += -(pos.exp() / den).ln();
    }
    total / n as f64
}

/// Uni-modal loss from per-sample sequences: mean pool, normalise, InfoNCE.
pub fn unimodal(seqs: &[Rows], augmented: &[Rows], tau: f64) -> f64 {
    let pool = |s: &Rows| {
        let d = s[0].len();
        let mut out = vec![0.0; d];
        for t in s {
            for j in 0..d {
                out[j] += t[j] / s.len() as f64;
            }
        }
        normalize(&out)
    };
    let q: Rows = seqs.iter().map(pool).collect();
    let k: Rows = augmented.iter().map(pool).collect();
    info_nce(&q, &k, tau, false)
}

/// Cross-modal instance loss; `branches[b] = (predictions, targets)`, unit rows.
pub fn cross(branches: &[(Rows, Rows)], phase: PairingPhase, tau: f64) -> f64 {
    let k = branches.len();
    let mut total = 0.0;
    for b in 0..k {
        let next = (b + 1) % k;
        total += match phase {
            PairingPhase::OriginOrigin => info_nce(&branches[b].1, &branches[next].1, tau, false),
            PairingPhase::PredictPredict => info_nce(&branches[b].0, &branches[next].0, tau, false),
            PairingPhase::OriginPredict => info_nce(&branches[b].1, &branches[b].0, tau, false),
        };
    }
    total
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s
}

pub fn alignment(p: &Rows, g: &Rows, lambda: u8) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += sq_dist(&p[i], &g[i]).sqrt().powi(lambda as i32);
    }
    s / p.len() as f64
}

pub fn uniformity(p: &Rows, g: &Rows, kappa: f64, all_pairs: bool) -> f64 {
    let mut s = 0.0;
    let mut count = 0.0;
    for i in 0..p.len() {
        for j in 0..g.len() {
            if all_pairs || i == j {
                s += (-kappa * sq_dist(&p[i], &g[j])).exp();
                count += 1.0;
            }
        }
    }
    (s / count).ln()
}

/// Supervised contrastive loss. `None` when no anchor has a same-class partner.
pub fn sentiment(reps: &Rows, classes: &[SentimentClass], tau: f64, log_in_sum: bool) -> Option<f64> {
    let m = reps.len();
    let mut total = 0.0;
    let mut anchors = 0usize;
    for i in 0..m {
        let partners: Vec<usize> = (0..m).filter(|&j| j != i && classes[j] == classes[i]).collect();
        if partners.is_empty() {
            continue;
        }
        anchors += 1;
        let mut den = 0.0;
        for j in 0..m {
            if j != i {
                den += (dot(&reps[i], &reps[j]) / tau).exp();
            }
        }
        if log_in_sum {
            let mut s = 0.0;
            for &j in &partners {
                s += -((dot(&reps[i], &reps[j]) / tau).exp() / den).ln();
            }
            total += s / partners.len() as f64;
        } else {
            let mut num = 0.0;
            for &j in &partners {
                num += (dot(&reps[i], &reps[j]) / tau).exp();
            }
            total += -(num / den).ln();
        }
    }
    (anchors > 0).then(|| total / anchors as f64)
}

pub fn regression(preds: &[f64], labels: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..preds.len() {
        s += (labels[i] - preds[i]).abs();
    }
    s / preds.len() as f64
}

pub fn class_of(y: f64) -> SentimentClass {
    if y > 0.0 {
        SentimentClass::Positive
    } else if y < 0.0 {
        SentimentClass::Negative
    } else {
        SentimentClass::Neutral
    }
}

/// Deterministic pseudo-random matrix for fixtures.
pub fn fixture(rows: usize, cols: usize, seed: u64) -> Matrix {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

pub fn unit_fixture(r: usize, c: usize, seed: u64) -> Matrix {
    let m = fixture(r, c, seed);
    matrix(&rows(&m).iter().map(|r| normalize(r)).collect())
}

/// Central difference of a scalar function of several matrices, entry by entry.
pub fn central_difference(inputs: &[Matrix], step: f64, f: impl Fn(&[Matrix]) -> f64) -> Vec<Matrix> {
    let mut work = inputs.to_vec();
    let mut out = Vec::new();
    for w in 0..inputs.len() {
        let mut g = Matrix::zeros(inputs[w].rows(), inputs[w].cols());
        for i in 0..inputs[w].len() {
            let orig = work[w].as_slice()[i];
            work[w].as_mut_slice()[i] = orig + step;
            let up = f(&work);
            work[w].as_mut_slice()[i] = orig - step;
            let down = f(&work);
            work[w].as_mut_slice()[i] = orig;
            g.as_mut_slice()[i] = (up - down) / (2.0 * step);
        }
        out.push(g);
    }
    out
}

/// Largest entry-wise `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &[Matrix], b: &[Matrix], floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        for (&u, &v) in x.as_slice().iter().zip(y.as_slice()) {
            worst = worst.max((u - v).abs() / u.abs().max(v.abs()).max(floor));
        }
    }
    worst
}
