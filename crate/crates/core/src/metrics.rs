//! Accuracy, weighted F1 and ROC AUC.
//!
//! AUC is the Mann-Whitney statistic with midranks for tied scores.

use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// 2x2 confusion counts, indexed `[actual][predicted]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tp: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tn + self.fp + self.fn_ + self.tp
    }

    /// F1 of class `c`, 0 when precision + recall is 0.
    pub fn f1(&self, class: u8) -> f64 {
        let (tp, fp, fn_) = if class == 1 {
            (self.tp, self.fp, self.fn_)
        } else {
            (self.tn, self.fn_, self.fp)
        };
        let precision = if tp + fp == 0 {
            0.0
        } else {
            tp as f64 / (tp + fp) as f64
        };
        let recall = if tp + fn_ == 0 {
            0.0
        } else {
            tp as f64 / (tp + fn_) as f64
        };
        if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        }
    }

    /// Support-weighted mean of the two per-class F1 scores.
    pub fn weighted_f1(&self) -> f64 {
        let n = self.total() as f64;
        if n == 0.0 {
            return 0.0;
        }
        let pos = (self.tp + self.fn_) as f64;
        let neg = (self.tn + self.fp) as f64;
        (neg / n) * self.f1(0) + (pos / n) * self.f1(1)
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn error_rate(&self) -> f64 {
        (self.fp + self.fn_) as f64 / self.total() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub accuracy: f64,
    pub weighted_f1: f64,
    /// `None` when only one class is present.
    pub roc_auc: Option<f64>,
    pub confusion: Confusion,
    pub n_pos: usize,
    pub n_neg: usize,
    pub threshold: f64,
}

impl EvalReport {
    /// Line-oriented `key=value` rendering. Floats use a fixed 6-digit format
    /// so identical runs produce identical bytes.
    pub fn to_kv(&self) -> String {
        let auc = self
            .roc_auc
            .map(|a| format!("{a:.6}"))
            .unwrap_or_else(|| "undefined".into());
        format!(
            "accuracy={:.6}\nweighted_f1={:.6}\nroc_auc={}\nn_pos={}\nn_neg={}\nthreshold={}\ntn={}\nfp={}\nfn={}\ntp={}\n",
            self.accuracy,
            self.weighted_f1,
            auc,
            self.n_pos,
            self.n_neg,
            self.threshold,
            self.confusion.tn,
            self.confusion.fp,
            self.confusion.fn_,
            self.confusion.tp
        )
    }

    pub const CSV_HEADER: &'static str = "accuracy,weighted_f1,roc_auc,n_pos,n_neg,threshold";

    pub fn to_csv_row(&self) -> String {
        let auc = self.roc_auc.map(|a| format!("{a:.6}")).unwrap_or_default();
        format!(
            "{:.6},{:.6},{},{},{},{}",
            self.accuracy, self.weighted_f1, auc, self.n_pos, self.n_neg, self.threshold
        )
    }
}

fn check_inputs(scores: &[f64], y: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != y.len() {
        return Err(Error::Shape(format!(
            "{} scores but {} labels",
            scores.len(),
            y.len()
        )));
    }
    if scores.is_empty() {
        return Err(Error::Input(
            "cannot evaluate an empty prediction set".into(),
        ));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::Input(format!("score {s} is NaN")));
    }
    let mut pos = 0;
    for &l in y {
        match l {
            0 => {}
            1 => pos += 1,
            other => return Err(Error::Input(format!("label {other} is not 0/1"))),
        }
    }
    Ok((pos, y.len() - pos))
}

/// Thresholded metrics plus rank AUC. Scores `>= threshold` predict class 1.
pub fn evaluate(scores: &[f64], y: &[u8], threshold: f64) -> Result<EvalReport> {
    let (n_pos, n_neg) = check_inputs(scores, y)?;
    let mut c = Confusion::default();
    for (&s, &l) in scores.iter().zip(y) {
        match (l, s >= threshold) {
            (1, true) => c.tp += 1,
            (1, false) => c.fn_ += 1,
            (_, true) => c.fp += 1,
            (_, false) => c.tn += 1,
        }
    }
    Ok(EvalReport {
        accuracy: c.accuracy(),
        weighted_f1: c.weighted_f1(),
        roc_auc: roc_auc(scores, y)?,
        confusion: c,
        n_pos,
        n_neg,
        threshold,
    })
}

/// Mann-Whitney AUC with midranks; `None` if a class is absent.
pub fn roc_auc(scores: &[f64], y: &[u8]) -> Result<Option<f64>> {
    let (n_pos, n_neg) = check_inputs(scores, y)?;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| y[k] == 1).count();
        rank_sum_pos += mid * pos_in_group as f64;
        i = j;
    }
    let p = n_pos as f64;
    let u = rank_sum_pos - p * (p + 1.0) / 2.0;
    Ok(Some(u / (p * n_neg as f64)))
}

/// ROC staircase from (0,0) to (1,1), one vertex per distinct score.
pub fn roc_points(scores: &[f64], y: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (n_pos, n_neg) = check_inputs(scores, y)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::ClassDegenerate(
            "ROC curve needs both classes".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if y[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / n_neg as f64, tp as f64 / n_pos as f64));
    }
    Ok(points)
}

/// Trapezoidal area under a polyline of `(x, y)` points.
pub fn trapezoid_area(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

pub fn roc_points_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("fpr,tpr\n");
    for (x, y) in points {
        out.push_str(&format!("{x:.6},{y:.6}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_separation() {
        let r = evaluate(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0], 0.5).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.weighted_f1, 1.0);
        assert_eq!(r.roc_auc, Some(1.0));
        assert_eq!(r.confusion.total(), 4);
    }

    #[test]
    fn all_tied_is_half() {
        assert_eq!(roc_auc(&[0.3; 6], &[1, 0, 1, 0, 1, 0]).unwrap(), Some(0.5));
    }

    #[test]
    fn mixed_pairs() {
        // pairs (0.9,0.4) (0.9,0.6) concordant, (0.2,0.4) (0.2,0.6) discordant
        assert_eq!(
            roc_auc(&[0.9, 0.4, 0.6, 0.2], &[1, 0, 0, 1]).unwrap(),
            Some(0.5)
        );
    }

    #[test]
    fn single_class_auc_undefined() {
        let r = evaluate(&[0.9, 0.1], &[1, 1], 0.5).unwrap();
        assert_eq!(r.roc_auc, None);
        assert_eq!(r.accuracy, 0.5);
        assert!(r.to_kv().contains("roc_auc=undefined"));
        assert!(roc_points(&[0.9, 0.1], &[1, 1]).is_err());
    }

    #[test]
    fn input_errors() {
        assert!(evaluate(&[], &[], 0.5).is_err());
        assert!(evaluate(&[0.1], &[1, 0], 0.5).is_err());
        assert!(evaluate(&[f64::NAN], &[1], 0.5).is_err());
        assert!(evaluate(&[0.1], &[2], 0.5).is_err());
    }

    #[test]
    fn f1_zero_when_class_never_predicted() {
        let r = evaluate(&[0.9, 0.9, 0.9, 0.9], &[1, 1, 0, 0], 0.5).unwrap();
        assert_eq!(r.confusion.f1(0), 0.0);
        // class 1: p=0.5 r=1 -> 2/3, weighted by 0.5
        assert!((r.weighted_f1 - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.accuracy + r.confusion.error_rate(), 1.0);
    }

    #[test]
    fn roc_perfect_passes_top_left() {
        let pts = roc_points(&[0.9, 0.8, 0.1, 0.2], &[1, 1, 0, 0]).unwrap();
        assert!(pts.contains(&(0.0, 1.0)));
        assert_eq!(pts.first(), Some(&(0.0, 0.0)));
        assert_eq!(pts.last(), Some(&(1.0, 1.0)));
        assert_eq!(trapezoid_area(&pts), 1.0);
    }

    #[test]
    fn reversed_scores_complement() {
        let s = [0.9, 0.3, 0.6, 0.2, 0.75];
        let y = [1, 0, 1, 0, 0];
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let a = roc_auc(&s, &y).unwrap().unwrap();
        let b = trapezoid_area(&roc_points(&neg, &y).unwrap());
        assert!((a + b - 1.0).abs() < 1e-12);
        assert!(b < 0.5);
    }
}
