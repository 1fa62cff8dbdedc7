//! Invariants of encoding, pooling, labeling and splitting.

mod common;

use common::*;
use rand::rngs::StdRng;
use rand::Rng;
use saefire_core::actstore::{ActivationStream, EarningsRecord, SparseRow};
use saefire_core::labeling::{
    assign_label, chronological_split, compute_sue, Label, Partition, SplitSpec,
};
use saefire_core::pooling::sum_pool;
use saefire_core::sae::{Activation, SaeParams};

fn random_sae(r: &mut StdRng, activation: Activation, d: usize, m: usize) -> SaeParams {
    let mut v = |n: usize| {
        (0..n)
            .map(|_| r.random_range(-1.0f32..1.0))
            .collect::<Vec<_>>()
    };
    SaeParams::new(d, m, v(d * m), v(m), v(m * d), v(d), activation).unwrap()
}

#[test]
fn topk_rows_have_at_most_k_nonzeros() {
    let mut r = rng(10);
    for _ in 0..200 {
        let d = r.random_range(1..8);
        let m = r.random_range(1..40);
        let k = r.random_range(1..=m);
        let sae = random_sae(&mut r, Activation::TopKRelu { k }, d, m);
        for _ in 0..5 {
            let z: Vec<f32> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
            let h = sae.encode(&z).unwrap();
            assert!(h.nnz() <= k);
            // survivors are the largest non-negative pre-activations
            let pre = sae.pre_activation(&z).unwrap();
            let min_kept = h.values().iter().fold(f32::INFINITY, |a, &b| a.min(b));
            for (j, &p) in pre.iter().enumerate() {
                if !h.indices().contains(&(j as u32)) && h.nnz() == k {
                    assert!(p as f32 <= min_kept);
                }
            }
        }
    }
}

#[test]
fn relu_and_jumprelu_outputs_are_nonnegative_and_gated() {
    let mut r = rng(11);
    for _ in 0..100 {
        let d = r.random_range(1..6);
        let m = r.random_range(1..30);
        let thresholds: Vec<f32> = (0..m).map(|_| r.random_range(0.0..0.5)).collect();
        let relu = random_sae(&mut r, Activation::Relu, d, m);
        let z: Vec<f32> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        assert!(relu.encode(&z).unwrap().values().iter().all(|&v| v > 0.0));

        let jump = random_sae(
            &mut r,
            Activation::JumpRelu {
                thresholds: thresholds.clone(),
            },
            d,
            m,
        );
        let pre = jump.pre_activation(&z).unwrap();
        let h = jump.encode(&z).unwrap();
        for (j, v) in h.iter() {
            assert!(pre[j as usize] as f32 > thresholds[j as usize]);
            assert!(v > thresholds[j as usize]);
        }
    }
}

#[test]
fn decode_is_affine() {
    let mut r = rng(12);
    for _ in 0..100 {
        let d = r.random_range(1..6);
        let m = r.random_range(1..30);
        let sae = random_sae(&mut r, Activation::Relu, d, m);
        let dense = |r: &mut StdRng| -> Vec<f32> {
            (0..m)
                .map(|_| {
                    if r.random_bool(0.4) {
                        r.random_range(0.0..3.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let to_row = |v: &[f32]| {
            SparseRow::from_pairs(
                v.iter()
                    .enumerate()
                    .filter(|p| *p.1 > 0.0)
                    .map(|(i, &x)| (i as u32, x))
                    .collect(),
            )
            .unwrap()
        };
        let (h1, h2) = (dense(&mut r), dense(&mut r));
        let (a, b) = (r.random_range(0.0f32..2.0), r.random_range(0.0f32..2.0));
        let mix: Vec<f32> = h1.iter().zip(&h2).map(|(x, y)| a * x + b * y).collect();
        let zero = sae.decode(&SparseRow::empty()).unwrap();
        let d1 = sae.decode(&to_row(&h1)).unwrap();
        let d2 = sae.decode(&to_row(&h2)).unwrap();
        let dm = sae.decode(&to_row(&mix)).unwrap();
        for i in 0..d {
            let lhs = dm[i] - zero[i];
            let rhs = a as f64 * (d1[i] - zero[i]) + b as f64 * (d2[i] - zero[i]);
            assert!(
                (lhs - rhs).abs() <= 1e-6 * lhs.abs().max(rhs.abs()).max(1.0),
                "{lhs} vs {rhs}"
            );
        }
    }
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1.0))
}

#[test]
fn pooling_is_additive_and_order_free() {
    let mut r = rng(13);
    for case in 0..1000 {
        let m = r.random_range(1..30);
        let a = random_stream(&mut r, "a", m, 15);
        let b = random_stream(&mut r, "b", m, 15);
        let mut rows: Vec<SparseRow> = a.rows().to_vec();
        rows.extend_from_slice(b.rows());
        let joined = ActivationStream::new("ab", a.date, m, rows.clone()).unwrap();
        let pa = sum_pool(&a, usize::MAX).unwrap().values;
        let pb = sum_pool(&b, usize::MAX).unwrap().values;
        let sum: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x + y).collect();
        assert!(
            close(&sum_pool(&joined, usize::MAX).unwrap().values, &sum),
            "case {case}"
        );

        // Fisher-Yates with the test RNG
        for i in (1..rows.len()).rev() {
            rows.swap(i, r.random_range(0..=i));
        }
        let shuffled = ActivationStream::new("ab", a.date, m, rows).unwrap();
        assert!(
            close(&sum_pool(&shuffled, usize::MAX).unwrap().values, &sum),
            "case {case}"
        );
    }
}

#[test]
fn pooling_cap_is_monotone() {
    let mut r = rng(14);
    for _ in 0..200 {
        let s = random_stream(&mut r, "s", 10, 30);
        let mut prev = sum_pool(&s, 1).unwrap().values;
        for cap in 2..=(s.n_tokens() + 2) {
            let cur = sum_pool(&s, cap).unwrap().values;
            assert!(cur.iter().zip(&prev).all(|(c, p)| c >= p));
            prev = cur;
        }
        assert_eq!(prev, sum_pool(&s, usize::MAX).unwrap().values);
    }
}

fn random_record(r: &mut StdRng) -> EarningsRecord {
    let n = r.random_range(2..8);
    let mut est: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..3.0)).collect();
    est[0] += 0.5; // guarantee dispersion
    EarningsRecord {
        doc_id: "x".into(),
        date: date(2013, 1, 1),
        reported_eps: r.random_range(-3.0..4.0),
        analyst_estimates: est,
    }
}

#[test]
fn reflecting_the_surprise_flips_the_label() {
    let mut r = rng(15);
    for _ in 0..500 {
        let rec = random_record(&mut r);
        let mean = rec.analyst_estimates.iter().sum::<f64>() / rec.analyst_estimates.len() as f64;
        let mut mirrored = rec.clone();
        mirrored.reported_eps = 2.0 * mean - rec.reported_eps;
        let (s1, s2) = (compute_sue(&rec).unwrap(), compute_sue(&mirrored).unwrap());
        assert!((s1 + s2).abs() < 1e-9);
        let flip = |l: Label| match l {
            Label::Positive => Label::Negative,
            Label::Negative => Label::Positive,
            Label::Discarded => Label::Discarded,
        };
        // keep away from the boundary where rounding could decide
        if (s1.abs() - 0.5).abs() > 1e-9 {
            assert_eq!(
                assign_label(s2, 0.5).unwrap(),
                flip(assign_label(s1, 0.5).unwrap())
            );
        }
    }
}

#[test]
fn sue_ignores_units_and_offsets() {
    let mut r = rng(16);
    for _ in 0..500 {
        let rec = random_record(&mut r);
        let c = r.random_range(0.01..100.0);
        let shift = r.random_range(-10.0..10.0);
        let mut scaled = rec.clone();
        scaled.reported_eps = c * rec.reported_eps + shift;
        scaled.analyst_estimates = rec
            .analyst_estimates
            .iter()
            .map(|e| c * e + shift)
            .collect();
        let (a, b) = (compute_sue(&rec).unwrap(), compute_sue(&scaled).unwrap());
        assert!((a - b).abs() <= 1e-7 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn chronological_split_never_leaks() {
    let mut r = rng(17);
    for _ in 0..300 {
        let n = r.random_range(0..60);
        let docs: Vec<_> = (0..n)
            .map(|i| {
                doc(
                    &format!("d{i}"),
                    random_date(&mut r),
                    vec![i as f64],
                    Some(0),
                )
            })
            .collect();
        let a = random_date(&mut r);
        let b = a + chrono::Duration::days(r.random_range(1..400));
        let spec = SplitSpec::new(a, b).unwrap();
        let split = chronological_split(docs.clone(), &spec);
        assert_eq!(split.train.len() + split.val.len() + split.test.len(), n);
        assert!(split.train.iter().all(|d| d.date <= a));
        assert!(split.val.iter().all(|d| d.date > a && d.date <= b));
        assert!(split.test.iter().all(|d| d.date > b));
        let latest_train = split.train.iter().map(|d| d.date).max();
        let earliest_eval = split.val.iter().chain(&split.test).map(|d| d.date).min();
        if let (Some(t), Some(e)) = (latest_train, earliest_eval) {
            assert!(t < e);
        }
        for d in &docs {
            let expected = spec.partition_of(d.date);
            let part = match expected {
                Partition::Train => &split.train,
                Partition::Val => &split.val,
                Partition::Test => &split.test,
            };
            assert!(part.iter().any(|x| x.doc_id == d.doc_id));
        }
    }
    assert!(SplitSpec::new(date(2014, 1, 1), date(2014, 1, 1)).is_err());
}
