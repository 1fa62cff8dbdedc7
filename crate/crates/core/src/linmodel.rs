//! L2-regularized logistic regression on a selected feature subset.
//!
//! Minimizes
//!
//! ```text
//! L(w, b) = -(1/N) sum [y log p + (1 - y) log(1 - p)] + (lambda / 2) |w|^2
//! ```
//!
//! with `p = sigmoid(w . z + b)` over features standardized with training
//! statistics. The bias is not penalized. Optimization is full-batch gradient
//! descent with Armijo backtracking from `w = 0, b = 0`.
//!
//! # Model file (`LIN1`)
//!
//! ```text
//! "LIN1"  full_width:u32  k:u32
//! k x u32 feature indices (ascending)
//! k x (mean:f64, std:f64)      std = 0 marks a constant column
//! k x f64 weights   bias:f64   lambda:f64
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, WriteBytesExt};
use log::warn;

use crate::binio::OffsetReader;
use crate::error::{Error, Result};
use crate::gbdt::{check_binary, sigmoid};
use crate::matrix::Matrix;
use crate::{metrics, par};

pub const LIN_MAGIC: &[u8; 4] = b"LIN1";
pub const GRAD_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 10_000;

/// Inverse penalties searched by default; the grid is `lambda = 1 / C`.
pub const DEFAULT_C_GRID: [f64; 5] = [0.0001, 0.001, 0.01, 0.1, 1.0];

pub fn default_lambda_grid() -> Vec<f64> {
    DEFAULT_C_GRID.iter().map(|c| 1.0 / c).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedLinearModel {
    full_width: usize,
    feature_indices: Vec<usize>,
    means: Vec<f64>,
    stds: Vec<f64>,
    weights: Vec<f64>,
    bias: f64,
    lambda: f64,
    iterations: usize,
    grad_norm: f64,
}

/// Mean and population std of each column. Constant columns get std 0.
fn column_stats(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = x.rows() as f64;
    let mut means = Vec::with_capacity(x.cols());
    let mut stds = Vec::with_capacity(x.cols());
    for j in 0..x.cols() {
        let first = x.get(0, j);
        let mean = x.column(j).sum::<f64>() / n;
        if x.column(j).all(|v| v == first) {
            means.push(first);
            stds.push(0.0);
            continue;
        }
        let var = x.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        means.push(mean);
        stds.push(var.sqrt());
    }
    (means, stds)
}

fn standardize_row(row: &[f64], means: &[f64], stds: &[f64], out: &mut [f64]) {
    for (((o, &v), &mu), &sd) in out.iter_mut().zip(row).zip(means).zip(stds) {
        *o = if sd > 0.0 { (v - mu) / sd } else { 0.0 };
    }
}

/// Value of the regularized logistic objective at `(w, b)`.
pub fn objective(x: &Matrix, y: &[u8], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = x.rows() as f64;
    let mut loss = 0.0;
    for (r, &label) in y.iter().enumerate() {
        let z = dot(x.row(r), w) + b;
        // -[y log p + (1-y) log(1-p)] = softplus(z) - y z
        loss += softplus(z) - label as f64 * z;
    }
    loss / n + 0.5 * lambda * dot(w, w)
}

/// Analytic gradient: `(1/N) X^T (p - y) + lambda w` and `mean(p - y)`.
pub fn gradient(x: &Matrix, y: &[u8], w: &[f64], b: f64, lambda: f64) -> (Vec<f64>, f64) {
    let n = x.rows() as f64;
    let mut gw = vec![0.0; w.len()];
    let mut gb = 0.0;
    for (r, &label) in y.iter().enumerate() {
        let row = x.row(r);
        let e = sigmoid(dot(row, w) + b) - label as f64;
        gb += e;
        for (g, &v) in gw.iter_mut().zip(row) {
            *g += e * v;
        }
    }
    for (g, &wi) in gw.iter_mut().zip(w) {
        *g = *g / n + lambda * wi;
    }
    (gw, gb / n)
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Fit {
    weights: Vec<f64>,
    bias: f64,
    iterations: usize,
    grad_norm: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Diagonally preconditioned gradient descent with Armijo backtracking.
///
/// The preconditioner is the inverse of an upper bound on the Hessian
/// diagonal (`lambda + mean(x_j^2) / 4` for weights, `1/4` for the
/// unpenalized bias), which keeps large-lambda fits from crawling along the
/// bias. Each trial step starts from the Barzilai-Borwein estimate of the
/// previous iteration, and line-search trials reuse cached margins so they
/// cost O(n) instead of a full pass.
fn minimize(z: &Matrix, y: &[u8], lambda: f64) -> Fit {
    let n = z.rows();
    let k = z.cols();
    let nf = n as f64;
    let precond: Vec<f64> = (0..k)
        .map(|j| {
            let h = lambda + 0.25 * z.column(j).map(|v| v * v).sum::<f64>() / nf;
            if h > 0.0 {
                1.0 / h
            } else {
                1.0
            }
        })
        .collect();
    let precond_b = 4.0;

    let mut w = vec![0.0; k];
    let mut b = 0.0;
    let mut margin = vec![0.0; n];
    // Change in mean loss when every margin moves by -t * shift, computed
    // without cancellation so Armijo tests stay meaningful near the optimum.
    let loss_delta = |margin: &[f64], shift: &[f64], t: f64| -> f64 {
        margin
            .iter()
            .zip(shift)
            .zip(y)
            .map(|((&m, &s), &l)| {
                let step = -t * s;
                let d = if step.abs() < 30.0 {
                    (sigmoid(m) * step.exp_m1()).ln_1p()
                } else {
                    softplus(m + step) - softplus(m)
                };
                d - l as f64 * step
            })
            .sum::<f64>()
            / nf
    };
    let mut ww = 0.0;
    let mut step = 1.0;
    let mut iterations = 0;
    let (mut gw, mut gb) = gradient(z, y, &w, b, lambda);
    let mut gnorm2 = dot(&gw, &gw) + gb * gb;
    let mut dw = vec![0.0; k];
    let mut shift = vec![0.0; n];
    while iterations < MAX_ITERATIONS && gnorm2.sqrt() > GRAD_TOLERANCE {
        iterations += 1;
        for ((d, &g), &p) in dw.iter_mut().zip(&gw).zip(&precond) {
            *d = p * g;
        }
        let db = precond_b * gb;
        for (r, s) in shift.iter_mut().enumerate() {
            *s = dot(z.row(r), &dw) + db;
        }
        let gd = dot(&gw, &dw) + gb * db;
        let wd = dot(&w, &dw);
        let dd = dot(&dw, &dw);
        let mut accepted = None;
        let mut t = step;
        for _ in 0..60 {
            let delta = loss_delta(&margin, &shift, t) + 0.5 * lambda * (t * t * dd - 2.0 * t * wd);
            if delta <= -0.5 * t * gd {
                accepted = Some((t, ww - 2.0 * t * wd + t * t * dd));
                break;
            }
            t *= 0.5;
        }
        let Some((t, new_ww)) = accepted else {
            // no representable descent left along the direction
            break;
        };
        for (wi, &d) in w.iter_mut().zip(&dw) {
            *wi -= t * d;
        }
        b -= t * db;
        for (m, &s) in margin.iter_mut().zip(&shift) {
            *m -= t * s;
        }
        ww = new_ww;
        let (new_gw, new_gb) = gradient(z, y, &w, b, lambda);
        // with s = -t d and q = g_new - g_old, the scaled BB step is
        // (s . P^-1 s) / (s . q) = t (g . d) / (d . (g_old - g_new))
        let mut dq = 0.0;
        for ((a, o), &d) in new_gw.iter().zip(&gw).zip(&dw) {
            dq += d * (o - a);
        }
        dq += db * (gb - new_gb);
        step = if dq > 0.0 {
            (t * gd / dq).min(1e6)
        } else {
            (t * 2.0).min(1e6)
        };
        gw = new_gw;
        gb = new_gb;
        gnorm2 = dot(&gw, &gw) + gb * gb;
    }
    Fit {
        weights: w,
        bias: b,
        iterations,
        grad_norm: gnorm2.sqrt(),
    }
}

/// Trains on all columns of `x`.
pub fn train_logistic(x: &Matrix, y: &[u8], lambda: f64) -> Result<TrainedLinearModel> {
    let all: Vec<usize> = (0..x.cols()).collect();
    train_logistic_on(x, y, &all, lambda)
}

/// Trains on the listed columns of a full-width matrix. The model remembers
/// both the index set and the full width.
pub fn train_logistic_on(
    x: &Matrix,
    y: &[u8],
    feature_indices: &[usize],
    lambda: f64,
) -> Result<TrainedLinearModel> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if feature_indices.is_empty() {
        return Err(Error::Input(
            "logistic regression needs at least one feature".into(),
        ));
    }
    if y.len() != x.rows() {
        return Err(Error::Shape(format!(
            "{} rows but {} labels",
            x.rows(),
            y.len()
        )));
    }
    check_binary(y)?;
    let mut indices = feature_indices.to_vec();
    indices.sort_unstable();
    indices.dedup();
    let sub = x.select_columns(&indices)?;
    if sub.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::Input(
            "feature matrix contains non-finite values".into(),
        ));
    }
    let (means, stds) = column_stats(&sub);
    let mut z = Matrix::zeros(sub.rows(), sub.cols());
    let mut buf = vec![0.0; sub.cols()];
    for r in 0..sub.rows() {
        standardize_row(sub.row(r), &means, &stds, &mut buf);
        for (c, &v) in buf.iter().enumerate() {
            z.set(r, c, v);
        }
    }
    let fit = minimize(&z, y, lambda);
    let mut weights = fit.weights;
    for (w, &sd) in weights.iter_mut().zip(&stds) {
        if sd == 0.0 {
            *w = 0.0;
        }
    }
    Ok(TrainedLinearModel {
        full_width: x.cols(),
        feature_indices: indices,
        means,
        stds,
        weights,
        bias: fit.bias,
        lambda,
        iterations: fit.iterations,
        grad_norm: fit.grad_norm,
    })
}

impl TrainedLinearModel {
    pub fn feature_indices(&self) -> &[usize] {
        &self.feature_indices
    }

    pub fn full_width(&self) -> usize {
        self.full_width
    }

    /// Weights in standardized feature space.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn grad_norm(&self) -> f64 {
        self.grad_norm
    }

    pub fn weight_norm(&self) -> f64 {
        dot(&self.weights, &self.weights).sqrt()
    }

    /// Probability for a full-width vector; projection happens internally.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.full_width {
            return Err(Error::Shape(format!(
                "expected a vector of length {}, got {}",
                self.full_width,
                x.len()
            )));
        }
        let projected: Vec<f64> = self.feature_indices.iter().map(|&j| x[j]).collect();
        Ok(self.score_projected(&projected))
    }

    /// Probability for a vector already restricted to the selected features.
    pub fn predict_proba_projected(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_indices.len() {
            return Err(Error::Shape(format!(
                "expected a projected vector of length {}, got {}",
                self.feature_indices.len(),
                x.len()
            )));
        }
        Ok(self.score_projected(x))
    }

    fn score_projected(&self, x: &[f64]) -> f64 {
        let mut z = 0.0;
        for (((&v, &mu), &sd), &w) in x.iter().zip(&self.means).zip(&self.stds).zip(&self.weights) {
            if sd > 0.0 {
                z += w * (v - mu) / sd;
            }
        }
        sigmoid(z + self.bias)
    }

    /// Probabilities for every row of a full-width matrix.
    pub fn predict_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        (0..x.rows())
            .map(|r| self.predict_proba(x.row(r)))
            .collect()
    }

    pub fn write<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(LIN_MAGIC)?;
        w.write_u32::<LittleEndian>(self.full_width as u32)?;
        w.write_u32::<LittleEndian>(self.feature_indices.len() as u32)?;
        for &j in &self.feature_indices {
            w.write_u32::<LittleEndian>(j as u32)?;
        }
        for (&mu, &sd) in self.means.iter().zip(&self.stds) {
            w.write_f64::<LittleEndian>(mu)?;
            w.write_f64::<LittleEndian>(sd)?;
        }
        for &wi in &self.weights {
            w.write_f64::<LittleEndian>(wi)?;
        }
        w.write_f64::<LittleEndian>(self.bias)?;
        w.write_f64::<LittleEndian>(self.lambda)?;
        w.flush()
    }

    pub fn read<R: Read>(src: R) -> Result<Self> {
        let mut r = OffsetReader::new(src);
        r.magic(LIN_MAGIC)?;
        let full_width = r.u32("full width")? as usize;
        let k = r.u32("k")? as usize;
        if k == 0 || k > full_width {
            return Err(Error::Format(format!(
                "k={k} invalid for width {full_width}"
            )));
        }
        let mut feature_indices = Vec::with_capacity(k);
        for _ in 0..k {
            let at = r.offset();
            let j = r.u32("feature index")? as usize;
            if j >= full_width || feature_indices.last().is_some_and(|&p| p >= j) {
                return Err(Error::Corruption {
                    offset: at,
                    reason: format!("feature index {j} out of order or range"),
                });
            }
            feature_indices.push(j);
        }
        let mut means = Vec::with_capacity(k);
        let mut stds = Vec::with_capacity(k);
        for _ in 0..k {
            means.push(r.f64("mean")?);
            stds.push(r.f64("std")?);
        }
        let weights = (0..k)
            .map(|_| r.f64("weight"))
            .collect::<Result<Vec<_>>>()?;
        let bias = r.f64("bias")?;
        let lambda = r.f64("lambda")?;
        r.at_eof()?;
        Ok(Self {
            full_width,
            feature_indices,
            means,
            stds,
            weights,
            bias,
            lambda,
            iterations: 0,
            grad_norm: f64::NAN,
        })
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

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub lambda: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub best_lambda: f64,
    pub best_val_auc: f64,
    pub model: TrainedLinearModel,
    pub points: Vec<GridPoint>,
}

/// Fits one model per lambda and keeps the best validation AUC; ties go to
/// the larger lambda. Grid points that fail to train are skipped.
pub fn grid_search(
    train: (&Matrix, &[u8]),
    val: (&Matrix, &[u8]),
    feature_indices: &[usize],
    grid: &[f64],
) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::Config("lambda grid is empty".into()));
    }
    let (vx, vy) = val;
    if check_binary(vy).is_err() {
        return Err(Error::ClassDegenerate(
            "validation split needs both classes to compute AUC".into(),
        ));
    }
    let fits = par::map_slice(grid, |&lambda| -> Result<(TrainedLinearModel, f64)> {
        let model = train_logistic_on(train.0, train.1, feature_indices, lambda)?;
        let p = model.predict_matrix(vx)?;
        let auc = metrics::roc_auc(&p, vy)?.expect("both classes checked");
        Ok((model, auc))
    });

    let mut points = Vec::with_capacity(grid.len());
    let mut best: Option<(TrainedLinearModel, f64)> = None;
    let mut last_err = None;
    for (&lambda, fit) in grid.iter().zip(fits) {
        match fit {
            Ok((model, auc)) => {
                points.push(GridPoint {
                    lambda,
                    val_auc: Some(auc),
                });
                let better = match &best {
                    None => true,
                    Some((m, b)) => auc > *b || (auc == *b && lambda > m.lambda),
                };
                if better {
                    best = Some((model, auc));
                }
            }
            Err(e) => {
                warn!("lambda={lambda}: {e}; skipped");
                points.push(GridPoint {
                    lambda,
                    val_auc: None,
                });
                last_err = Some(e);
            }
        }
    }
    match best {
        Some((model, auc)) => Ok(GridResult {
            best_lambda: model.lambda,
            best_val_auc: auc,
            model,
            points,
        }),
        None => Err(last_err.expect("grid non-empty")),
    }
}
