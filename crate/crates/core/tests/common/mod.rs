#![allow(dead_code)]

use chrono::NaiveDate;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use saefire_core::actstore::{ActivationStream, SparseRow};
use saefire_core::pooling::DocumentVector;
use saefire_core::Matrix;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

pub fn random_date(r: &mut StdRng) -> NaiveDate {
    date(2012, 1, 1) + chrono::Duration::days(r.random_range(0..1096))
}

pub fn random_row(r: &mut StdRng, m: u32, density: f64) -> SparseRow {
    let mut idx = Vec::new();
    let mut val = Vec::new();
    for j in 0..m {
        if r.random_bool(density) {
            idx.push(j);
            val.push(r.random_range(0.0f32..10.0));
        }
    }
    SparseRow::new(idx, val).unwrap()
}

pub fn random_stream(r: &mut StdRng, id: &str, m: u32, max_tokens: usize) -> ActivationStream {
    let n = r.random_range(0..=max_tokens);
    let rows = (0..n).map(|_| random_row(r, m, 0.2)).collect();
    ActivationStream::new(id, random_date(r), m, rows).unwrap()
}

pub fn random_matrix(r: &mut StdRng, n: usize, m: usize) -> Matrix {
    let data = (0..n * m).map(|_| r.random_range(-3.0..3.0)).collect();
    Matrix::new(n, m, data).unwrap()
}

/// Labels with at least `min_each` members of each class.
pub fn random_labels(r: &mut StdRng, n: usize, min_each: usize) -> Vec<u8> {
    loop {
        let y: Vec<u8> = (0..n).map(|_| r.random_range(0..2)).collect();
        let pos = y.iter().filter(|&&v| v == 1).count();
        if pos >= min_each && n - pos >= min_each {
            return y;
        }
    }
}

pub fn doc(id: &str, d: NaiveDate, values: Vec<f64>, label: Option<u8>) -> DocumentVector {
    DocumentVector {
        doc_id: id.into(),
        date: d,
        values,
        label,
    }
}

/// Squared pooled two-sample t statistic, computed from scratch.
pub fn pooled_t_squared(x: &[f64], y: &[u8]) -> f64 {
    let a: Vec<f64> = x
        .iter()
        .zip(y)
        .filter(|p| *p.1 == 1)
        .map(|p| *p.0)
        .collect();
    let b: Vec<f64> = x
        .iter()
        .zip(y)
        .filter(|p| *p.1 == 0)
        .map(|p| *p.0)
        .collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let ss = |v: &[f64], mu: f64| v.iter().map(|t| (t - mu) * (t - mu)).sum::<f64>();
    let (ma, mb) = (mean(&a), mean(&b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let sp2 = (ss(&a, ma) + ss(&b, mb)) / (na + nb - 2.0);
    let t = (ma - mb) / (sp2 * (1.0 / na + 1.0 / nb)).sqrt();
    t * t
}

/// AUC by exhaustive comparison of every positive/negative pair.
pub fn pair_count_auc(scores: &[f64], y: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if y[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if y[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
