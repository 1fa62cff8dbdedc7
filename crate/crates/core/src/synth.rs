//! Synthetic corpora with planted discriminative SAE dimensions.
//!
//! Every token activates each feature independently with probability
//! `noise_activation_rate`, drawing an `Exp(1)` value. In positive documents
//! the active values of the planted dimensions are shifted up by
//! `signal_strength`. Earnings records are built backwards from the drawn
//! labels so that SUE labeling at delta = 0.5 reproduces them exactly.
//!
//! All randomness is a pure function of `(seed, stream tag, counters)`, so
//! generation can run in parallel across documents and still be bit-identical.

use chrono::NaiveDate;

use crate::actstore::{ActivationStream, EarningsRecord, SparseRow};
use crate::error::{Error, Result};
use crate::featsel::FeatureRanking;
use crate::{par, rng};

// stream tags, so different uses of the generator never share counters
const TAG_PLANT: u64 = 1;
const TAG_LABEL: u64 = 2;
const TAG_DATE: u64 = 3;
const TAG_LEN: u64 = 4;
const TAG_SKIP: u64 = 5;
const TAG_VALUE: u64 = 6;
const TAG_EPS: u64 = 7;

/// SUE magnitudes land in `[0.5 + SUE_MARGIN, 1.5 + SUE_MARGIN)`.
const SUE_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub m: usize,
    pub n_informative: usize,
    /// Inclusive range of tokens per document.
    pub tokens_per_doc: (usize, usize),
    pub signal_strength: f64,
    pub noise_activation_rate: f64,
    pub seed: u64,
    /// Inclusive date range.
    pub date_range: (NaiveDate, NaiveDate),
}

impl Default for SynthConfig {
    /// The reference benchmark: 400 documents, 2000 dimensions, 20 planted.
    fn default() -> Self {
        Self {
            n_docs: 400,
            m: 2000,
            n_informative: 20,
            tokens_per_doc: (60, 140),
            signal_strength: 0.75,
            noise_activation_rate: 0.05,
            seed: 42,
            date_range: (
                NaiveDate::from_ymd_opt(2012, 1, 1).expect("valid"),
                NaiveDate::from_ymd_opt(2014, 12, 31).expect("valid"),
            ),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.m == 0 || self.m > u32::MAX as usize {
            return fail(format!("m={} out of range", self.m));
        }
        if self.n_informative > self.m {
            return fail(format!(
                "n_informative={} exceeds m={}",
                self.n_informative, self.m
            ));
        }
        if self.tokens_per_doc.0 > self.tokens_per_doc.1 {
            return fail("tokens_per_doc range is reversed".into());
        }
        if !(self.signal_strength > 0.0) || !self.signal_strength.is_finite() {
            return fail("signal_strength must be positive".into());
        }
        if !(self.noise_activation_rate > 0.0 && self.noise_activation_rate < 1.0) {
            return fail("noise_activation_rate must be in (0, 1)".into());
        }
        if self.date_range.0 > self.date_range.1 {
            return fail("date_range is reversed".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub streams: Vec<ActivationStream>,
    pub records: Vec<EarningsRecord>,
    /// Drawn labels, aligned with `streams`.
    pub labels: Vec<u8>,
    /// Planted dimensions, ascending.
    pub planted: Vec<usize>,
}

/// Planted dimensions for a config: the `n_informative` features with the
/// smallest seed-keyed hash.
pub fn planted_dims(cfg: &SynthConfig) -> Vec<usize> {
    let mut keyed: Vec<(u64, usize)> = (0..cfg.m)
        .map(|j| (rng::hash(cfg.seed, &[TAG_PLANT, j as u64]), j))
        .collect();
    keyed.sort_unstable();
    let mut dims: Vec<usize> = keyed[..cfg.n_informative].iter().map(|p| p.1).collect();
    dims.sort_unstable();
    dims
}

/// Balanced labels: the first `n / 2` documents in hash order are positive.
fn draw_labels(cfg: &SynthConfig) -> Vec<u8> {
    let mut keyed: Vec<(u64, usize)> = (0..cfg.n_docs)
        .map(|d| (rng::hash(cfg.seed, &[TAG_LABEL, d as u64]), d))
        .collect();
    keyed.sort_unstable();
    let mut labels = vec![0u8; cfg.n_docs];
    for &(_, d) in &keyed[..cfg.n_docs / 2] {
        labels[d] = 1;
    }
    labels
}

fn doc_id(d: usize) -> String {
    format!("doc{d:05}")
}

fn generate_doc(
    cfg: &SynthConfig,
    d: usize,
    label: u8,
    is_planted: &[bool],
) -> (ActivationStream, EarningsRecord) {
    let seed = cfg.seed;
    let di = d as u64;
    let span = (cfg.date_range.1 - cfg.date_range.0).num_days() as u64 + 1;
    let offset = (rng::unit(seed, &[TAG_DATE, di]) * span as f64) as u64;
    let date = cfg.date_range.0 + chrono::Duration::days(offset.min(span - 1) as i64);

    let (lo, hi) = cfg.tokens_per_doc;
    let n_tokens =
        lo + ((rng::unit(seed, &[TAG_LEN, di]) * (hi - lo + 1) as f64) as usize).min(hi - lo);

    let log_miss = (1.0 - cfg.noise_activation_rate).ln();
    let mut rows = Vec::with_capacity(n_tokens);
    for t in 0..n_tokens as u64 {
        let mut indices = Vec::new();
        let mut values = Vec::new();
        let mut j: i64 = -1;
        let mut draw = 0u64;
        loop {
            // geometric gap to the next active feature
            let u = rng::unit_open(seed, &[TAG_SKIP, di, t, draw]);
            draw += 1;
            let gap = (u.ln() / log_miss).floor();
            if !gap.is_finite() || gap >= cfg.m as f64 {
                break;
            }
            j += gap as i64 + 1;
            if j >= cfg.m as i64 {
                break;
            }
            let mut v = -rng::unit_open(seed, &[TAG_VALUE, di, t, j as u64]).ln();
            if label == 1 && is_planted[j as usize] {
                v += cfg.signal_strength;
            }
            let v = v as f32;
            if v > 0.0 {
                indices.push(j as u32);
                values.push(v);
            }
        }
        rows.push(SparseRow::new(indices, values).expect("generated rows are valid"));
    }
    let stream = ActivationStream::new(doc_id(d), date, cfg.m as u32, rows).expect("valid stream");

    let base = 0.5 + 2.0 * rng::unit(seed, &[TAG_EPS, di, 0]);
    let spread = 0.05 + 0.2 * rng::unit(seed, &[TAG_EPS, di, 1]);
    let magnitude = 0.5 + SUE_MARGIN + rng::unit(seed, &[TAG_EPS, di, 2]);
    let sue = if label == 1 { magnitude } else { -magnitude };
    let record = EarningsRecord {
        doc_id: doc_id(d),
        date,
        reported_eps: base + sue * spread,
        // mean `base`, sample std `spread`
        analyst_estimates: vec![base - spread, base, base + spread],
    };
    (stream, record)
}

pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthCorpus> {
    cfg.validate()?;
    let planted = planted_dims(cfg);
    let mut is_planted = vec![false; cfg.m];
    for &j in &planted {
        is_planted[j] = true;
    }
    let labels = draw_labels(cfg);
    let docs = par::map_range(cfg.n_docs, |d| generate_doc(cfg, d, labels[d], &is_planted));
    let (streams, records) = docs.into_iter().unzip();
    Ok(SynthCorpus {
        streams,
        records,
        labels,
        planted,
    })
}

/// Fraction of planted dimensions among the ranking's top `k`. A config with
/// no planted dimensions has nothing to miss and scores 1.
pub fn planted_recovery_rate(ranking: &FeatureRanking, cfg: &SynthConfig, k: usize) -> f64 {
    recovery_rate(ranking, &planted_dims(cfg), k)
}

pub fn recovery_rate(ranking: &FeatureRanking, planted: &[usize], k: usize) -> f64 {
    if planted.is_empty() {
        return 1.0;
    }
    let top = ranking.top_k(k);
    let hits = planted
        .iter()
        .filter(|j| top.binary_search(j).is_ok())
        .count();
    hits as f64 / planted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featsel::Method;
    use crate::labeling::{assign_label, compute_sue, Label};

    fn small() -> SynthConfig {
        SynthConfig {
            n_docs: 41,
            m: 50,
            n_informative: 3,
            tokens_per_doc: (5, 9),
            ..Default::default()
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_corpus(&small()).unwrap();
        let b = generate_corpus(&small()).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&SynthConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a.streams, c.streams);
    }

    #[test]
    fn balanced_and_consistent() {
        let cfg = small();
        let c = generate_corpus(&cfg).unwrap();
        let pos = c.labels.iter().filter(|&&l| l == 1).count();
        assert!((pos as i64 - (cfg.n_docs - pos) as i64).abs() <= 1);
        for (rec, &label) in c.records.iter().zip(&c.labels) {
            let got = assign_label(compute_sue(rec).unwrap(), 0.5).unwrap();
            let want = if label == 1 {
                Label::Positive
            } else {
                Label::Negative
            };
            assert_eq!(got, want);
        }
        for s in &c.streams {
            assert!(s.date >= cfg.date_range.0 && s.date <= cfg.date_range.1);
            assert!((5..=9).contains(&s.n_tokens()));
            assert_eq!(s.n_features(), 50);
        }
        assert_eq!(c.planted.len(), 3);
    }

    #[test]
    fn config_validation() {
        assert!(SynthConfig {
            n_informative: 51,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            noise_activation_rate: 1.0,
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            tokens_per_doc: (3, 2),
            ..small()
        }
        .validate()
        .is_err());
        assert!(SynthConfig {
            n_informative: 0,
            ..small()
        }
        .validate()
        .is_ok());
    }

    #[test]
    fn recovery_edges() {
        let cfg = small();
        let planted = planted_dims(&cfg);
        let mut scores = vec![0.0; cfg.m];
        scores[planted[1]] = 10.0;
        let r = FeatureRanking::new(Method::FTest, scores);
        assert_eq!(planted_recovery_rate(&r, &cfg, cfg.m), 1.0);
        let single = SynthConfig {
            n_informative: 1,
            ..cfg.clone()
        };
        let p = planted_dims(&single);
        let mut scores = vec![0.0; cfg.m];
        scores[p[0]] = 1.0;
        let r = FeatureRanking::new(Method::FTest, scores);
        assert_eq!(planted_recovery_rate(&r, &single, 1), 1.0);
    }
}
