//! Gradient-boosted decision trees for binary classification.
//!
//! Each round fits a regression tree to the residuals `y - p` of the logistic
//! loss. Splits are chosen by exact greedy search over sorted unique feature
//! values, maximizing the reduction in residual sum of squares; leaves take
//! the Newton step `sum(r) / (sum(h) + 1)` scaled by the learning rate.
//!
//! Trees grow level by level. For each feature the rows are visited once in
//! presorted order and routed to their current node, so a level costs
//! `O(n * m)` regardless of how many nodes it has. Split search runs across
//! features in parallel; the winner is reduced in feature order so the result
//! matches the serial path exactly (ties: lower feature, then lower threshold).
//!
//! # Model file (`GBT1`)
//!
//! ```text
//! "GBT1"  n_features:u32  base_score:f64  n_trees:u32
//! per tree: n_nodes:u32, then per node
//!     tag:u8 = 0 (leaf):  value:f64  n_samples:u32
//!     tag:u8 = 1 (split): feature:u32  threshold:f64  left:u32  right:u32
//!                         gain:f64  n_samples:u32
//! ```
//! Leaf values already include the learning rate.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use log::warn;

use crate::binio::OffsetReader;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics;
use crate::{par, rng};

pub const GBT_MAGIC: &[u8; 4] = b"GBT1";

/// L2 smoothing added to the hessian sum in every leaf.
pub const LEAF_L2: f64 = 1.0;

/// Splits must reduce the residual sum of squares by more than this.
const MIN_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtConfig {
    pub n_rounds: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub subsample: f64,
    pub early_stop_patience: Option<usize>,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for GbdtConfig {
    /// 1000 rounds, learning rate 0.1, depth 6, subsample 0.8, patience 20.
    fn default() -> Self {
        Self {
            n_rounds: 1000,
            learning_rate: 0.1,
            max_depth: 6,
            subsample: 0.8,
            early_stop_patience: Some(20),
            min_samples_leaf: 1,
            seed: 42,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rounds == 0 {
            return Err(Error::Config("gbdt n_rounds must be >= 1".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("gbdt max_depth must be >= 1".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("gbdt min_samples_leaf must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("gbdt learning_rate must be positive".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config("gbdt subsample must be in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        gain: f64,
        n_samples: usize,
    },
    Leaf {
        value: f64,
        n_samples: usize,
    },
}

/// Regression tree; node 0 is the root. Rows with `x <= threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    /// Depth of the deepest leaf (a lone root leaf has depth 0).
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Per-round training trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundStats {
    pub train_loss: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GbdtModel {
    n_features: usize,
    base_score: f64,
    trees: Vec<Tree>,
    importance: Vec<f64>,
    history: Vec<RoundStats>,
}

impl PartialEq for GbdtModel {
    fn eq(&self, other: &Self) -> bool {
        self.n_features == other.n_features
            && self.base_score.to_bits() == other.base_score.to_bits()
            && self.trees == other.trees
    }
}

impl GbdtModel {
    fn from_parts(n_features: usize, base_score: f64, trees: Vec<Tree>) -> Self {
        let mut importance = vec![0.0; n_features];
        for tree in &trees {
            for node in &tree.nodes {
                if let Node::Split { feature, gain, .. } = node {
                    importance[*feature] += gain;
                }
            }
        }
        Self {
            n_features,
            base_score,
            trees,
            importance,
            history: Vec::new(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Total split gain attributed to each feature over all kept trees.
    pub fn impurity_decrease(&self) -> &[f64] {
        &self.importance
    }

    /// Training trace, one entry per boosting round actually run (including
    /// rounds later discarded by early stopping). Empty for loaded models.
    pub fn history(&self) -> &[RoundStats] {
        &self.history
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(x)).sum::<f64>()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.n_features {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.cols()
            )));
        }
        Ok(par::map_range(x.rows(), |r| sigmoid(self.margin(x.row(r)))))
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(GBT_MAGIC)?;
        w.write_u32::<LittleEndian>(self.n_features as u32)?;
        w.write_f64::<LittleEndian>(self.base_score)?;
        w.write_u32::<LittleEndian>(self.trees.len() as u32)?;
        for t in &self.trees {
            w.write_u32::<LittleEndian>(t.nodes.len() as u32)?;
            for n in &t.nodes {
                match n {
                    Node::Leaf { value, n_samples } => {
                        w.write_u8(0)?;
                        w.write_f64::<LittleEndian>(*value)?;
                        w.write_u32::<LittleEndian>(*n_samples as u32)?;
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        gain,
                        n_samples,
                    } => {
                        w.write_u8(1)?;
                        w.write_u32::<LittleEndian>(*feature as u32)?;
                        w.write_f64::<LittleEndian>(*threshold)?;
                        w.write_u32::<LittleEndian>(*left as u32)?;
                        w.write_u32::<LittleEndian>(*right as u32)?;
                        w.write_f64::<LittleEndian>(*gain)?;
                        w.write_u32::<LittleEndian>(*n_samples as u32)?;
                    }
                }
            }
        }
        w.flush()
    }

    pub fn read<R: Read>(src: R) -> Result<Self> {
        let mut r = OffsetReader::new(src);
        r.magic(GBT_MAGIC)?;
        let m = r.u32("n_features")? as usize;
        let base = r.f64("base_score")?;
        let n_trees = r.u32("tree count")?;
        let mut trees = Vec::new();
        for _ in 0..n_trees {
            let n_nodes = r.u32("node count")? as usize;
            let mut nodes = Vec::new();
            for i in 0..n_nodes {
                let at = r.offset();
                let node = match r.u8("node tag")? {
                    0 => Node::Leaf {
                        value: r.f64("leaf value")?,
                        n_samples: r.u32("leaf size")? as usize,
                    },
                    1 => {
                        let feature = r.u32("split feature")? as usize;
                        let threshold = r.f64("threshold")?;
                        let left = r.u32("left child")? as usize;
                        let right = r.u32("right child")? as usize;
                        let gain = r.f64("gain")?;
                        let n_samples = r.u32("node size")? as usize;
                        if feature >= m
                            || left <= i
                            || right <= i
                            || left >= n_nodes
                            || right >= n_nodes
                        {
                            return Err(Error::Corruption {
                                offset: at,
                                reason: "split references invalid feature or child".into(),
                            });
                        }
                        Node::Split {
                            feature,
                            threshold,
                            left,
                            right,
                            gain,
                            n_samples,
                        }
                    }
                    t => {
                        return Err(Error::Corruption {
                            offset: at,
                            reason: format!("unknown node tag {t}"),
                        })
                    }
                };
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(Error::Corruption {
                    offset: r.offset(),
                    reason: "tree without nodes".into(),
                });
            }
            trees.push(Tree { nodes });
        }
        r.at_eof()?;
        Ok(Self::from_parts(m, base, trees))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(f)).map_err(|e| e.in_file(path))
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn check_binary(y: &[u8]) -> Result<usize> {
    let mut pos = 0;
    for &l in y {
        match l {
            0 => {}
            1 => pos += 1,
            other => return Err(Error::Input(format!("label {other} is not 0/1"))),
        }
    }
    if pos == 0 || pos == y.len() {
        return Err(Error::ClassDegenerate(format!(
            "need both classes, got {pos} positive of {}",
            y.len()
        )));
    }
    Ok(pos)
}

fn logistic_loss(margins: &[f64], y: &[u8]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(y)
        .map(|(&f, &l)| {
            // log(1 + exp(f)) - y f, computed stably
            let softplus = if f > 0.0 {
                f + (-f).exp().ln_1p()
            } else {
                f.exp().ln_1p()
            };
            softplus - l as f64 * f
        })
        .sum();
    total / y.len() as f64
}

#[derive(Clone, Copy, Default)]
struct NodeStats {
    count: usize,
    sum_r: f64,
    sum_h: f64,
}

#[derive(Clone, Copy)]
struct Candidate {
    gain: f64,
    threshold: f64,
    feature: usize,
}

/// Best split per active node for one feature.
fn scan_feature(
    x: &Matrix,
    order: &[u32],
    feature: usize,
    slot_of: &[u32],
    resid: &[f64],
    totals: &[NodeStats],
    min_leaf: usize,
) -> Vec<Option<Candidate>> {
    #[derive(Clone, Copy)]
    struct Run {
        count: usize,
        sum: f64,
        last: f64,
    }
    let mut runs = vec![
        Run {
            count: 0,
            sum: 0.0,
            last: f64::NEG_INFINITY
        };
        totals.len()
    ];
    let mut best: Vec<Option<Candidate>> = vec![None; totals.len()];
    for &row in order {
        let row = row as usize;
        let slot = slot_of[row];
        if slot == u32::MAX {
            continue;
        }
        let slot = slot as usize;
        let v = x.get(row, feature);
        let run = &mut runs[slot];
        if run.count > 0 && v > run.last {
            let tot = totals[slot];
            let n_left = run.count;
            let n_right = tot.count - n_left;
            if n_left >= min_leaf && n_right >= min_leaf {
                let s_right = tot.sum_r - run.sum;
                let gain = run.sum * run.sum / n_left as f64 + s_right * s_right / n_right as f64
                    - tot.sum_r * tot.sum_r / tot.count as f64;
                if gain > MIN_GAIN && best[slot].is_none_or(|b| gain > b.gain) {
                    let mut threshold = run.last + (v - run.last) / 2.0;
                    if threshold >= v || threshold < run.last {
                        threshold = run.last;
                    }
                    best[slot] = Some(Candidate {
                        gain,
                        threshold,
                        feature,
                    });
                }
            }
        }
        run.count += 1;
        run.sum += resid[row];
        run.last = v;
    }
    best
}

/// Rows kept in round `round`: the `ceil(n * subsample)` rows with the
/// smallest counter hash.
fn sample_rows(n: usize, subsample: f64, seed: u64, round: usize) -> Vec<bool> {
    if subsample >= 1.0 {
        return vec![true; n];
    }
    let keep = ((n as f64 * subsample).ceil() as usize).clamp(1, n);
    let mut keyed: Vec<(u64, usize)> = (0..n)
        .map(|i| (rng::hash(seed, &[round as u64, i as u64]), i))
        .collect();
    keyed.sort_unstable();
    let mut mask = vec![false; n];
    for &(_, i) in &keyed[..keep] {
        mask[i] = true;
    }
    mask
}

fn grow_tree(
    x: &Matrix,
    orders: &[Vec<u32>],
    resid: &[f64],
    hess: &[f64],
    in_sample: &[bool],
    cfg: &GbdtConfig,
) -> Tree {
    let n = x.rows();
    let mut nodes = Vec::new();
    // node id per row; usize::MAX for rows outside the sample
    let mut node_of: Vec<usize> = in_sample
        .iter()
        .map(|&s| if s { 0 } else { usize::MAX })
        .collect();
    let mut root = NodeStats::default();
    for i in (0..n).filter(|&i| in_sample[i]) {
        root.count += 1;
        root.sum_r += resid[i];
        root.sum_h += hess[i];
    }
    let leaf = |s: NodeStats| Node::Leaf {
        value: cfg.learning_rate * s.sum_r / (s.sum_h + LEAF_L2),
        n_samples: s.count,
    };
    nodes.push(leaf(root));
    let mut active: Vec<(usize, NodeStats)> = vec![(0, root)];

    for _depth in 0..cfg.max_depth {
        if active.is_empty() {
            break;
        }
        let mut slot_of_node = vec![u32::MAX; nodes.len()];
        for (slot, (id, _)) in active.iter().enumerate() {
            slot_of_node[*id] = slot as u32;
        }
        let slot_of: Vec<u32> = node_of
            .iter()
            .map(|&id| {
                if id == usize::MAX {
                    u32::MAX
                } else {
                    slot_of_node[id]
                }
            })
            .collect();
        let totals: Vec<NodeStats> = active.iter().map(|a| a.1).collect();

        let per_feature = par::map_range(x.cols(), |f| {
            scan_feature(
                x,
                &orders[f],
                f,
                &slot_of,
                resid,
                &totals,
                cfg.min_samples_leaf,
            )
        });
        let mut best: Vec<Option<Candidate>> = vec![None; active.len()];
        for cands in &per_feature {
            for (b, c) in best.iter_mut().zip(cands) {
                if let Some(c) = c {
                    if b.is_none_or(|cur| c.gain > cur.gain) {
                        *b = Some(*c);
                    }
                }
            }
        }

        let mut next_active = Vec::new();
        let mut child_of = vec![None; nodes.len()];
        for ((id, stats), cand) in active.iter().zip(&best) {
            let Some(c) = cand else { continue };
            let left = nodes.len();
            let right = left + 1;
            nodes.push(leaf(NodeStats::default()));
            nodes.push(leaf(NodeStats::default()));
            nodes[*id] = Node::Split {
                feature: c.feature,
                threshold: c.threshold,
                left,
                right,
                gain: c.gain,
                n_samples: stats.count,
            };
            child_of[*id] = Some((c.feature, c.threshold, left, right));
        }
        child_of.resize(nodes.len(), None);
        let mut child_stats = vec![NodeStats::default(); nodes.len()];
        for i in 0..n {
            let id = node_of[i];
            if id == usize::MAX {
                continue;
            }
            if let Some((f, t, l, r)) = child_of[id] {
                let c = if x.get(i, f) <= t { l } else { r };
                node_of[i] = c;
                let s = &mut child_stats[c];
                s.count += 1;
                s.sum_r += resid[i];
                s.sum_h += hess[i];
            }
        }
        for (id, _) in &active {
            if let Some((_, _, l, r)) = child_of[*id] {
                for c in [l, r] {
                    nodes[c] = leaf(child_stats[c]);
                    next_active.push((c, child_stats[c]));
                }
            }
        }
        active = next_active;
    }
    Tree { nodes }
}

/// Trains a boosted logistic ensemble. With `val` and a patience configured,
/// training stops once validation AUC has not improved for `patience` rounds
/// and the ensemble is cut back to the best round.
pub fn train_gbdt(
    x: &Matrix,
    y: &[u8],
    cfg: &GbdtConfig,
    val: Option<(&Matrix, &[u8])>,
) -> Result<GbdtModel> {
    cfg.validate()?;
    let n = x.rows();
    if y.len() != n {
        return Err(Error::Shape(format!("{n} rows but {} labels", y.len())));
    }
    let n_pos = check_binary(y)?;
    if n < 2 * cfg.min_samples_leaf {
        return Err(Error::Input(format!(
            "{n} rows is fewer than 2 * min_samples_leaf = {}",
            2 * cfg.min_samples_leaf
        )));
    }
    if x.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(
            "feature matrix contains non-finite values".into(),
        ));
    }
    let mut val = val;
    if let Some((vx, vy)) = val {
        if vx.cols() != x.cols() || vx.rows() != vy.len() {
            return Err(Error::Shape(
                "validation set shape does not match training".into(),
            ));
        }
        if cfg.early_stop_patience.is_some() && check_binary(vy).is_err() {
            warn!("validation set lacks one class; early stopping disabled");
            val = None;
        }
    }
    let patience = cfg.early_stop_patience.filter(|_| val.is_some());

    let m = x.cols();
    let orders: Vec<Vec<u32>> = par::map_range(m, |f| {
        let mut idx: Vec<u32> = (0..n as u32).collect();
        idx.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)));
        idx
    });

    let prior = n_pos as f64 / n as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let mut margins = vec![base_score; n];
    let mut val_margins = val.map(|(vx, _)| vec![base_score; vx.rows()]);
    let mut trees = Vec::new();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize)> = None;

    for round in 0..cfg.n_rounds {
        let mut resid = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for i in 0..n {
            let p = sigmoid(margins[i]);
            resid[i] = y[i] as f64 - p;
            hess[i] = p * (1.0 - p);
        }
        let mask = sample_rows(n, cfg.subsample, cfg.seed, round);
        let tree = grow_tree(x, &orders, &resid, &hess, &mask, cfg);
        for (i, f) in margins.iter_mut().enumerate() {
            *f += tree.predict(x.row(i));
        }
        let mut val_auc = None;
        if let (Some((vx, vy)), Some(vm)) = (val, val_margins.as_mut()) {
            for (i, f) in vm.iter_mut().enumerate() {
                *f += tree.predict(vx.row(i));
            }
            val_auc = metrics::roc_auc(vm, vy)?;
        }
        trees.push(tree);
        history.push(RoundStats {
            train_loss: logistic_loss(&margins, y),
            val_auc,
        });

        if let (Some(p), Some(auc)) = (patience, val_auc) {
            match best {
                Some((b, _)) if auc <= b => {}
                _ => best = Some((auc, trees.len())),
            }
            let (_, at) = best.expect("set above");
            if trees.len() - at >= p {
                break;
            }
        }
    }
    if let Some((_, at)) = best {
        trees.truncate(at);
    }
    let mut model = GbdtModel::from_parts(m, base_score, trees);
    model.history = history;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn threshold_data(n: usize) -> (Matrix, Vec<u8>) {
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let x0 = i as f64 / n as f64;
            let x1 = ((i * 7919) % n) as f64 / n as f64;
            data.extend([x0, x1]);
            y.push(u8::from(x0 > 0.5));
        }
        (Matrix::new(n, 2, data).unwrap(), y)
    }

    #[test]
    fn planted_threshold_fits_perfectly() {
        let (x, y) = threshold_data(60);
        let cfg = GbdtConfig {
            n_rounds: 10,
            max_depth: 1,
            subsample: 1.0,
            early_stop_patience: None,
            ..Default::default()
        };
        let model = train_gbdt(&x, &y, &cfg, None).unwrap();
        let p = model.predict_proba(&x).unwrap();
        let acc = p
            .iter()
            .zip(&y)
            .filter(|(p, &l)| (**p >= 0.5) == (l == 1))
            .count() as f64
            / y.len() as f64;
        assert_eq!(acc, 1.0);
        assert!(model.impurity_decrease()[1] == 0.0);
        assert!(model.impurity_decrease()[0] > 0.0);
    }

    #[test]
    fn constant_features_give_prior() {
        let x = Matrix::new(10, 3, vec![1.0; 30]).unwrap();
        let y = vec![1, 0, 1, 0, 1, 0, 1, 1, 0, 1];
        let cfg = GbdtConfig {
            n_rounds: 5,
            early_stop_patience: None,
            ..Default::default()
        };
        let model = train_gbdt(&x, &y, &cfg, None).unwrap();
        assert!(model.impurity_decrease().iter().all(|&v| v == 0.0));
        assert!(model.trees().iter().all(|t| t.nodes().len() == 1));
        let p = model.predict_proba(&x).unwrap()[0];
        assert!((p - 0.6).abs() < 0.05, "{p}");
    }

    #[test]
    fn errors() {
        let x = Matrix::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(matches!(
            train_gbdt(&x, &[1, 1, 1, 1], &GbdtConfig::default(), None),
            Err(Error::ClassDegenerate(_))
        ));
        let bad = GbdtConfig {
            max_depth: 0,
            ..Default::default()
        };
        assert!(matches!(
            train_gbdt(&x, &[1, 0, 1, 0], &bad, None),
            Err(Error::Config(_))
        ));
        let big_leaf = GbdtConfig {
            min_samples_leaf: 3,
            ..Default::default()
        };
        assert!(train_gbdt(&x, &[1, 0, 1, 0], &big_leaf, None).is_err());
        let model = train_gbdt(
            &x,
            &[1, 0, 1, 0],
            &GbdtConfig {
                n_rounds: 2,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert!(matches!(
            model.predict_proba(&Matrix::zeros(1, 2)),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn paper_config_accepted_and_early_stops() {
        let (x, y) = threshold_data(80);
        let (vx, vy) = threshold_data(40);
        let cfg = GbdtConfig::default();
        assert_eq!(cfg.n_rounds, 1000);
        assert_eq!(cfg.early_stop_patience, Some(20));
        let model = train_gbdt(&x, &y, &cfg, Some((&vx, &vy))).unwrap();
        // validation AUC saturates at 1.0 almost immediately
        assert!(model.history().len() < 1000);
        assert!(model.trees().len() + 20 <= model.history().len());
        assert!(model.trees().iter().all(|t| t.depth() <= 6));
    }

    #[test]
    fn model_file_roundtrip() {
        let (x, y) = threshold_data(40);
        let cfg = GbdtConfig {
            n_rounds: 5,
            max_depth: 3,
            early_stop_patience: None,
            ..Default::default()
        };
        let model = train_gbdt(&x, &y, &cfg, None).unwrap();
        let mut buf = Vec::new();
        model.write(&mut buf).unwrap();
        let back = GbdtModel::read(&buf[..]).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.impurity_decrease(), model.impurity_decrease());
        buf[0] = b'X';
        assert!(matches!(GbdtModel::read(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn sampling_is_keyed() {
        let a = sample_rows(100, 0.8, 42, 3);
        assert_eq!(a, sample_rows(100, 0.8, 42, 3));
        assert_ne!(a, sample_rows(100, 0.8, 42, 4));
        assert_eq!(a.iter().filter(|&&b| b).count(), 80);
    }
}
