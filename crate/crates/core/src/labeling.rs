//! Standardized unexpected earnings, the surprise label with its discard
//! band, and chronological train/validation/test splits.

use std::collections::HashMap;

use chrono::NaiveDate;
use log::warn;

use crate::actstore::EarningsRecord;
use crate::error::{Error, Result};
use crate::pooling::DocumentVector;

pub const DEFAULT_DELTA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
    Discarded,
}

impl Label {
    /// 1 for positive, 0 for negative, `None` when discarded.
    pub fn as_class(self) -> Option<u8> {
        match self {
            Label::Positive => Some(1),
            Label::Negative => Some(0),
            Label::Discarded => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SueResult {
    pub doc_id: String,
    pub sue: f64,
    pub label: Label,
}

/// `(reported - mean(estimates)) / sample_std(estimates)`.
pub fn compute_sue(rec: &EarningsRecord) -> Result<f64> {
    let est = &rec.analyst_estimates;
    if est.len() < 2 {
        return Err(Error::InsufficientEstimates {
            doc_id: rec.doc_id.clone(),
            count: est.len(),
        });
    }
    let n = est.len() as f64;
    let mean = est.iter().sum::<f64>() / n;
    let ss = est.iter().map(|e| (e - mean).powi(2)).sum::<f64>();
    if est.iter().all(|&e| e == est[0]) || ss == 0.0 {
        return Err(Error::DegenerateDispersion {
            doc_id: rec.doc_id.clone(),
        });
    }
    let std = (ss / (n - 1.0)).sqrt();
    Ok((rec.reported_eps - mean) / std)
}

/// Positive if `sue >= delta`, negative if `sue <= -delta`, else discarded.
pub fn assign_label(sue: f64, delta: f64) -> Result<Label> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Config(format!(
            "delta must be a positive number, got {delta}"
        )));
    }
    if !sue.is_finite() {
        return Err(Error::Input(format!("SUE {sue} is not finite")));
    }
    Ok(if sue >= delta {
        Label::Positive
    } else if sue <= -delta {
        Label::Negative
    } else {
        Label::Discarded
    })
}

pub fn label_record(rec: &EarningsRecord, delta: f64) -> Result<SueResult> {
    let sue = compute_sue(rec)?;
    Ok(SueResult {
        doc_id: rec.doc_id.clone(),
        sue,
        label: assign_label(sue, delta)?,
    })
}

/// Counts from [`label_documents`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSummary {
    pub positive: usize,
    pub negative: usize,
    pub discarded: usize,
    pub missing_record: usize,
    pub invalid_record: usize,
}

impl LabelSummary {
    pub fn to_kv(&self) -> String {
        format!(
            "positive={}\nnegative={}\ndiscarded={}\nmissing_record={}\ninvalid_record={}\n",
            self.positive, self.negative, self.discarded, self.missing_record, self.invalid_record
        )
    }
}

/// Joins pooled documents with their earnings records by `doc_id` and keeps
/// the ones that receive a label. Documents without a usable record are
/// dropped with a warning.
pub fn label_documents(
    docs: Vec<DocumentVector>,
    records: &[EarningsRecord],
    delta: f64,
) -> Result<(Vec<DocumentVector>, LabelSummary)> {
    assign_label(0.0, delta)?;
    let by_id: HashMap<&str, &EarningsRecord> =
        records.iter().map(|r| (r.doc_id.as_str(), r)).collect();
    let mut summary = LabelSummary::default();
    let mut out = Vec::with_capacity(docs.len());
    for mut doc in docs {
        let Some(rec) = by_id.get(doc.doc_id.as_str()) else {
            warn!("document {} has no earnings record; dropped", doc.doc_id);
            summary.missing_record += 1;
            continue;
        };
        let res = match label_record(rec, delta) {
            Ok(r) => r,
            Err(e @ (Error::InsufficientEstimates { .. } | Error::DegenerateDispersion { .. })) => {
                warn!("{e}; dropped");
                summary.invalid_record += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        match res.label {
            Label::Positive => summary.positive += 1,
            Label::Negative => summary.negative += 1,
            Label::Discarded => {
                summary.discarded += 1;
                continue;
            }
        }
        doc.label = res.label.as_class();
        out.push(doc);
    }
    Ok((out, summary))
}

/// Cutoffs for a chronological split. Test is everything after `val_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    train_end: NaiveDate,
    val_end: NaiveDate,
}

impl SplitSpec {
    pub fn new(train_end: NaiveDate, val_end: NaiveDate) -> Result<Self> {
        if train_end >= val_end {
            return Err(Error::Config(format!(
                "train_end {train_end} must precede val_end {val_end}"
            )));
        }
        Ok(Self { train_end, val_end })
    }

    pub fn train_end(&self) -> NaiveDate {
        self.train_end
    }

    pub fn val_end(&self) -> NaiveDate {
        self.val_end
    }

    pub fn partition_of(&self, date: NaiveDate) -> Partition {
        if date <= self.train_end {
            Partition::Train
        } else if date <= self.val_end {
            Partition::Val
        } else {
            Partition::Test
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl Partition {
    pub fn name(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<DocumentVector>,
    pub val: Vec<DocumentVector>,
    pub test: Vec<DocumentVector>,
    /// Names of partitions that came out empty.
    pub warnings: Vec<String>,
}

/// Partitions documents by date; boundary dates go to the earlier partition.
/// Input order is preserved within each partition.
pub fn chronological_split(docs: Vec<DocumentVector>, spec: &SplitSpec) -> Split {
    let mut split = Split::default();
    for d in docs {
        match spec.partition_of(d.date) {
            Partition::Train => split.train.push(d),
            Partition::Val => split.val.push(d),
            Partition::Test => split.test.push(d),
        }
    }
    for (p, part) in [
        (Partition::Train, &split.train),
        (Partition::Val, &split.val),
        (Partition::Test, &split.test),
    ] {
        if part.is_empty() {
            let msg = format!("{} split is empty", p.name());
            warn!("{msg}");
            split.warnings.push(msg);
        }
    }
    split
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(reported: f64, est: Vec<f64>) -> EarningsRecord {
        EarningsRecord {
            doc_id: "d".into(),
            date: ymd(2014, 1, 1),
            reported_eps: reported,
            analyst_estimates: est,
        }
    }

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn doc(id: &str, date: NaiveDate) -> DocumentVector {
        DocumentVector {
            doc_id: id.into(),
            date,
            values: vec![1.0],
            label: None,
        }
    }

    #[test]
    fn sue_hand_arithmetic() {
        // mean 1.0, sample std sqrt((0.16 + 0 + 0.16) / 2) = 0.4
        let sue = compute_sue(&rec(1.2, vec![0.6, 1.0, 1.4])).unwrap();
        assert!((sue - 0.5).abs() < 1e-12, "{sue}");
        assert_eq!(compute_sue(&rec(1.0, vec![0.6, 1.0, 1.4])).unwrap(), 0.0);
    }

    #[test]
    fn sue_errors() {
        assert!(matches!(
            compute_sue(&rec(1.0, vec![1.0])),
            Err(Error::InsufficientEstimates { count: 1, .. })
        ));
        assert!(matches!(
            compute_sue(&rec(1.0, vec![0.9, 0.9, 0.9])),
            Err(Error::DegenerateDispersion { .. })
        ));
    }

    #[test]
    fn labels_at_boundaries() {
        assert_eq!(assign_label(0.5, 0.5).unwrap(), Label::Positive);
        assert_eq!(assign_label(-0.5, 0.5).unwrap(), Label::Negative);
        assert_eq!(assign_label(0.49, 0.5).unwrap(), Label::Discarded);
        assert_eq!(assign_label(-0.49, 0.5).unwrap(), Label::Discarded);
        assert!(assign_label(f64::NAN, 0.5).is_err());
        assert!(assign_label(f64::INFINITY, 0.5).is_err());
        assert!(assign_label(1.0, 0.0).is_err());
    }

    #[test]
    fn split_one_per_partition() {
        let spec = SplitSpec::new(ymd(2013, 12, 31), ymd(2014, 6, 30)).unwrap();
        let docs = vec![
            doc("a", ymd(2013, 1, 15)),
            doc("b", ymd(2014, 3, 15)),
            doc("c", ymd(2014, 10, 15)),
        ];
        let s = chronological_split(docs, &spec);
        assert_eq!(s.train[0].doc_id, "a");
        assert_eq!(s.val[0].doc_id, "b");
        assert_eq!(s.test[0].doc_id, "c");
        assert!(s.warnings.is_empty());
    }

    #[test]
    fn split_boundary_goes_left_and_empty_warns() {
        let spec = SplitSpec::new(ymd(2013, 12, 31), ymd(2014, 6, 30)).unwrap();
        let s = chronological_split(
            vec![doc("a", ymd(2013, 12, 31)), doc("b", ymd(2012, 5, 1))],
            &spec,
        );
        assert_eq!(s.train.len(), 2);
        assert_eq!(s.warnings.len(), 2);
        let s = chronological_split(vec![doc("v", ymd(2014, 6, 30))], &spec);
        assert_eq!(s.val.len(), 1);
        assert!(SplitSpec::new(ymd(2014, 1, 1), ymd(2014, 1, 1)).is_err());
    }

    #[test]
    fn labeling_join() {
        let docs = vec![
            doc("p", ymd(2014, 1, 1)),
            doc("n", ymd(2014, 1, 1)),
            doc("z", ymd(2014, 1, 1)),
            doc("missing", ymd(2014, 1, 1)),
            doc("bad", ymd(2014, 1, 1)),
        ];
        let mk = |id: &str, reported: f64, est: Vec<f64>| EarningsRecord {
            doc_id: id.into(),
            date: ymd(2014, 1, 1),
            reported_eps: reported,
            analyst_estimates: est,
        };
        let recs = vec![
            mk("p", 2.0, vec![0.9, 1.1]),
            mk("n", 0.0, vec![0.9, 1.1]),
            mk("z", 1.0, vec![0.9, 1.1]),
            mk("bad", 1.0, vec![1.0]),
        ];
        let (out, summary) = label_documents(docs, &recs, 0.5).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].label, Some(1));
        assert_eq!(out[1].label, Some(0));
        assert_eq!(
            summary,
            LabelSummary {
                positive: 1,
                negative: 1,
                discarded: 1,
                missing_record: 1,
                invalid_record: 1
            }
        );
    }
}
