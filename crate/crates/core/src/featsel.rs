//! Per-dimension class-separation scores and top-k selection.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gbdt::{self, GbdtConfig};
use crate::matrix::Matrix;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    FTest,
    TreeImportance,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::FTest => "ftest",
            Method::TreeImportance => "tree",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ftest" | "f-test" | "anova" => Ok(Method::FTest),
            "tree" | "tree-importance" => Ok(Method::TreeImportance),
            other => Err(Error::Config(format!("unknown selection method {other:?}"))),
        }
    }
}

/// Orders scores descending with +inf first; equal scores by ascending index.
/// NaN sorts last.
fn rank_cmp(scores: &[f64], a: usize, b: usize) -> Ordering {
    let (sa, sb) = (scores[a], scores[b]);
    match (sa.is_nan(), sb.is_nan()) {
        (true, true) => a.cmp(&b),
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ => sb.partial_cmp(&sa).expect("not NaN").then(a.cmp(&b)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRanking {
    pub method: Method,
    scores: Vec<f64>,
    order: Vec<usize>,
}

impl FeatureRanking {
    pub fn new(method: Method, scores: Vec<f64>) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| rank_cmp(&scores, a, b));
        Self {
            method,
            scores,
            order,
        }
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Feature indices from best to worst.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn n_features(&self) -> usize {
        self.scores.len()
    }

    /// The best `min(k, m)` features, as an ascending index set.
    pub fn top_k(&self, k: usize) -> Vec<usize> {
        let mut sel = self.order[..k.min(self.order.len())].to_vec();
        sel.sort_unstable();
        sel
    }

    /// `feature_index,score,rank` rows in rank order; rank is 1-based.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "feature_index,score,rank")?;
        for (rank, &j) in self.order.iter().enumerate() {
            writeln!(w, "{},{},{}", j, self.scores[j], rank + 1)?;
        }
        w.flush()
    }

    pub fn read_csv<R: Read>(method: Method, src: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(src);
        let headers = rdr
            .headers()
            .map_err(|e| Error::Format(format!("ranking header: {e}")))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema {
                    column: name.into(),
                    line: Some(1),
                })
        };
        let (ci, cs) = (col("feature_index")?, col("score")?);
        let mut pairs = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Format(format!("ranking CSV: {e}")))?;
            let line = rec.position().map(|p| p.line()).unwrap_or(0);
            let parse_err = |what: &str| Error::Parse {
                line,
                message: format!("bad {what}"),
            };
            let idx: usize = rec
                .get(ci)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("feature_index"))?;
            let score: f64 = rec
                .get(cs)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| parse_err("score"))?;
            pairs.push((idx, score));
        }
        let m = pairs.len();
        let mut scores = vec![f64::NAN; m];
        for (idx, score) in pairs {
            if idx >= m || !scores[idx].is_nan() {
                return Err(Error::Format(format!(
                    "feature index {idx} duplicated or out of range for {m} rows"
                )));
            }
            scores[idx] = score;
        }
        Ok(Self::new(method, scores))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(method: Method, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(method, BufReader::new(f)).map_err(|e| e.in_file(path))
    }
}

/// Ranks `scores` and returns the ranking with its top-`k` index set.
pub fn rank_and_select(
    method: Method,
    scores: Vec<f64>,
    k: usize,
) -> Result<(FeatureRanking, Vec<usize>)> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let ranking = FeatureRanking::new(method, scores);
    let sel = ranking.top_k(k);
    Ok((ranking, sel))
}

fn check_two_groups(x: &Matrix, y: &[u8]) -> Result<(usize, usize)> {
    if y.len() != x.rows() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    let pos = gbdt::check_binary(y)?;
    let neg = y.len() - pos;
    if pos < 2 || neg < 2 {
        return Err(Error::ClassDegenerate(format!(
            "F-test needs at least 2 members per class, got {pos} positive and {neg} negative"
        )));
    }
    Ok((pos, neg))
}

/// One-way ANOVA F statistic for a single dimension split into two groups.
///
/// A dimension with zero within-group variance scores +inf when the group
/// means differ and 0 when they coincide.
pub fn f_statistic(values: impl Iterator<Item = f64> + Clone, y: &[u8]) -> f64 {
    let mut n = [0usize; 2];
    let mut sum = [0.0f64; 2];
    let mut first = [None::<f64>; 2];
    let mut constant = [true; 2];
    for (v, &l) in values.clone().zip(y) {
        let g = l as usize;
        n[g] += 1;
        sum[g] += v;
        match first[g] {
            None => first[g] = Some(v),
            Some(f) if f != v => constant[g] = false,
            _ => {}
        }
    }
    if constant[0] && constant[1] {
        return if first[0] == first[1] {
            0.0
        } else {
            f64::INFINITY
        };
    }
    let mean = [sum[0] / n[0] as f64, sum[1] / n[1] as f64];
    let total = (n[0] + n[1]) as f64;
    let grand = (sum[0] + sum[1]) / total;
    let mut ssw = 0.0;
    for (v, &l) in values.zip(y) {
        let d = v - mean[l as usize];
        ssw += d * d;
    }
    let ssb = n[0] as f64 * (mean[0] - grand).powi(2) + n[1] as f64 * (mean[1] - grand).powi(2);
    // between df = 1
    ssb / (ssw / (total - 2.0))
}

/// F statistic of every column. Each column is reduced sequentially, so the
/// result does not depend on the thread schedule.
pub fn f_test_scores(x: &Matrix, y: &[u8]) -> Result<Vec<f64>> {
    check_two_groups(x, y)?;
    Ok(par::map_range(x.cols(), |j| f_statistic(x.column(j), y)))
}

/// Normalized total impurity decrease per feature from a boosted ensemble
/// trained on `(x, y)`. Sums to 1 unless no split was ever made.
pub fn tree_importance_scores(x: &Matrix, y: &[u8], cfg: &GbdtConfig) -> Result<Vec<f64>> {
    let model = gbdt::train_gbdt(x, y, cfg, None)?;
    let raw = model.impurity_decrease();
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        Ok(raw.iter().map(|v| v / total).collect())
    } else {
        Ok(vec![0.0; raw.len()])
    }
}

/// Scores every dimension with the requested method.
pub fn score(method: Method, x: &Matrix, y: &[u8], cfg: &GbdtConfig) -> Result<FeatureRanking> {
    let scores = match method {
        Method::FTest => f_test_scores(x, y)?,
        Method::TreeImportance => tree_importance_scores(x, y, cfg)?,
    };
    Ok(FeatureRanking::new(method, scores))
}
