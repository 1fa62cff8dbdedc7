//! End-to-end orchestration behind the command-line subcommands.
//!
//! Stages talk through files in `out_dir`:
//!
//! | stage  | reads                           | writes                                   |
//! |--------|---------------------------------|------------------------------------------|
//! | pool   | SAEF activation files           | `pooled.saep2`, `pool_summary.txt`       |
//! | label  | pooled file, earnings CSV       | `labeled.saep2`, `label_summary.txt`     |
//! | split  | `labeled.saep2`                 | `{train,val,test}.saep2`, `split_summary.txt` |
//! | select | `train.saep2`                   | `ranking_<method>.csv`                   |
//! | train  | train/val splits, ranking       | `model_<tag>.lin` or `.gbt`              |
//! | eval   | model, `test.saep2`             | `report_<tag>.txt`, `roc_<tag>.csv`      |
//! | run    | everything above in one go      | all of the above plus `best.txt`         |
//! | sweep  | as `run`, over methods x k      | `sweep.csv`                              |
//!
//! Feature scores and standardization statistics are computed from the
//! training split only.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use log::{info, warn};

use crate::actstore::{read_earnings_table, write_activation_file, write_earnings_table};
use crate::error::{Error, Result, StageExt};
use crate::featsel::{self, FeatureRanking, Method};
use crate::gbdt::{self, GbdtConfig, GbdtModel};
use crate::labeling::{self, chronological_split, Split, SplitSpec};
use crate::linmodel::{self, TrainedLinearModel};
use crate::matrix::Matrix;
use crate::metrics::{self, EvalReport};
use crate::par;
use crate::pooling::{self, DocumentVector, PoolSummary};
use crate::synth::{self, SynthConfig};

/// Feature selection applied before the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Selection {
    Method(Method),
    /// Use every pooled dimension.
    None,
}

impl Selection {
    pub fn name(self) -> &'static str {
        match self {
            Selection::Method(m) => m.name(),
            Selection::None => "none",
        }
    }
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" | "full" => Ok(Selection::None),
            other => Ok(Selection::Method(other.parse()?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Classifier {
    Logistic,
    Gbdt,
}

impl Classifier {
    pub fn name(self) -> &'static str {
        match self {
            Classifier::Logistic => "logistic",
            Classifier::Gbdt => "gbdt",
        }
    }
}

impl FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "logistic" | "lr" => Ok(Classifier::Logistic),
            "gbdt" | "xgboost" => Ok(Classifier::Gbdt),
            other => Err(Error::Config(format!("unknown classifier {other:?}"))),
        }
    }
}

/// Every knob of the pipeline. Built from `key = value` text; see
/// [`PipelineConfig::KEYS`] for the accepted keys.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub activations: Vec<PathBuf>,
    pub earnings: Option<PathBuf>,
    pub pooled: Option<PathBuf>,
    pub ranking: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub token_cap: usize,
    pub delta: f64,
    pub train_end: Option<NaiveDate>,
    pub val_end: Option<NaiveDate>,
    pub method: Selection,
    pub methods: Vec<Selection>,
    pub classifier: Classifier,
    pub k: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub threshold: f64,
    pub gbdt: GbdtConfig,
    pub importance: GbdtConfig,
    pub synth: SynthConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            activations: Vec::new(),
            earnings: None,
            pooled: None,
            ranking: None,
            model: None,
            out_dir: PathBuf::from("out"),
            token_cap: pooling::DEFAULT_TOKEN_CAP,
            delta: labeling::DEFAULT_DELTA,
            train_end: None,
            val_end: None,
            method: Selection::Method(Method::TreeImportance),
            methods: vec![
                Selection::Method(Method::FTest),
                Selection::Method(Method::TreeImportance),
            ],
            classifier: Classifier::Logistic,
            k: vec![1500],
            lambda_grid: linmodel::default_lambda_grid(),
            threshold: metrics::DEFAULT_THRESHOLD,
            gbdt: GbdtConfig::default(),
            importance: default_importance_config(),
            synth: SynthConfig::default(),
        }
    }
}

/// Ensemble used for tree-importance scoring. It never sees validation data,
/// so it runs a fixed number of rounds instead of early stopping.
pub fn default_importance_config() -> GbdtConfig {
    GbdtConfig {
        n_rounds: 300,
        learning_rate: 0.05,
        max_depth: 3,
        subsample: 0.5,
        early_stop_patience: None,
        min_samples_leaf: 10,
        seed: 42,
    }
}

fn parse_val<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    let v = v.trim().trim_start_matches('[').trim_end_matches(']');
    let out: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_val(key, s))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::Config(format!("{key}: empty list")));
    }
    Ok(out)
}

fn parse_date(key: &str, v: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(v, "%Y-%m-%d")
        .map_err(|_| Error::Config(format!("{key}: {v:?} is not an ISO-8601 date")))
}

fn parse_opt_count(key: &str, v: &str) -> Result<Option<usize>> {
    if v == "none" {
        Ok(None)
    } else {
        parse_val(key, v).map(Some)
    }
}

/// Parses `key = value` lines. Blank lines and `#` comments are skipped;
/// values may be quoted.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!("config line {}: expected `key = value`", i + 1))
        })?;
        let v = v.trim().trim_matches('"');
        out.push((k.trim().to_string(), v.to_string()));
    }
    Ok(out)
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "activations",
        "earnings",
        "pooled",
        "ranking",
        "model",
        "out_dir",
        "token_cap",
        "delta",
        "train_end",
        "val_end",
        "method",
        "methods",
        "classifier",
        "k",
        "lambda_grid",
        "c_grid",
        "threshold",
        "seed",
        "gbdt_rounds",
        "gbdt_learning_rate",
        "gbdt_max_depth",
        "gbdt_subsample",
        "gbdt_patience",
        "gbdt_min_samples_leaf",
        "importance_rounds",
        "importance_learning_rate",
        "importance_max_depth",
        "importance_subsample",
        "importance_min_samples_leaf",
        "synth_n_docs",
        "synth_m",
        "synth_informative",
        "synth_min_tokens",
        "synth_max_tokens",
        "synth_signal",
        "synth_noise_rate",
        "synth_start",
        "synth_end",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "activations" => {
                self.activations = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(PathBuf::from)
                    .collect()
            }
            "earnings" => self.earnings = Some(v.into()),
            "pooled" => self.pooled = Some(v.into()),
            "ranking" => self.ranking = Some(v.into()),
            "model" => self.model = Some(v.into()),
            "out_dir" => self.out_dir = v.into(),
            "token_cap" => self.token_cap = parse_val(key, v)?,
            "delta" => self.delta = parse_val(key, v)?,
            "train_end" => self.train_end = Some(parse_date(key, v)?),
            "val_end" => self.val_end = Some(parse_date(key, v)?),
            "method" => self.method = v.parse()?,
            "methods" => {
                self.methods = v
                    .trim_matches(|c| c == '[' || c == ']')
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "classifier" => self.classifier = v.parse()?,
            "k" => self.k = parse_list(key, v)?,
            "lambda_grid" => self.lambda_grid = parse_list(key, v)?,
            "c_grid" => {
                let cs: Vec<f64> = parse_list(key, v)?;
                if cs.iter().any(|c| !(*c > 0.0)) {
                    return Err(Error::Config("c_grid entries must be positive".into()));
                }
                self.lambda_grid = cs.iter().map(|c| 1.0 / c).collect();
            }
            "threshold" => self.threshold = parse_val(key, v)?,
            "seed" => {
                let s: u64 = parse_val(key, v)?;
                self.gbdt.seed = s;
                self.importance.seed = s;
                self.synth.seed = s;
            }
            "gbdt_rounds" => self.gbdt.n_rounds = parse_val(key, v)?,
            "gbdt_learning_rate" => self.gbdt.learning_rate = parse_val(key, v)?,
            "gbdt_max_depth" => self.gbdt.max_depth = parse_val(key, v)?,
            "gbdt_subsample" => self.gbdt.subsample = parse_val(key, v)?,
            "gbdt_patience" => self.gbdt.early_stop_patience = parse_opt_count(key, v)?,
            "gbdt_min_samples_leaf" => self.gbdt.min_samples_leaf = parse_val(key, v)?,
            "importance_rounds" => self.importance.n_rounds = parse_val(key, v)?,
            "importance_learning_rate" => self.importance.learning_rate = parse_val(key, v)?,
            "importance_max_depth" => self.importance.max_depth = parse_val(key, v)?,
            "importance_subsample" => self.importance.subsample = parse_val(key, v)?,
            "importance_min_samples_leaf" => self.importance.min_samples_leaf = parse_val(key, v)?,
            "synth_n_docs" => self.synth.n_docs = parse_val(key, v)?,
            "synth_m" => self.synth.m = parse_val(key, v)?,
            "synth_informative" => self.synth.n_informative = parse_val(key, v)?,
            "synth_min_tokens" => self.synth.tokens_per_doc.0 = parse_val(key, v)?,
            "synth_max_tokens" => self.synth.tokens_per_doc.1 = parse_val(key, v)?,
            "synth_signal" => self.synth.signal_strength = parse_val(key, v)?,
            "synth_noise_rate" => self.synth.noise_activation_rate = parse_val(key, v)?,
            "synth_start" => self.synth.date_range.0 = parse_date(key, v)?,
            "synth_end" => self.synth.date_range.1 = parse_date(key, v)?,
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let pairs = parse_kv(text)?;
        Self::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        match (self.train_end, self.val_end) {
            (Some(t), Some(v)) => SplitSpec::new(t, v),
            _ => Err(Error::Config(
                "train_end and val_end must both be set".into(),
            )),
        }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn ensure_out_dir(&self) -> Result<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| Error::io(&self.out_dir, e))
    }

    fn validate_ks(&self) -> Result<()> {
        if self.k.contains(&0) {
            return Err(Error::Config("k values must be >= 1".into()));
        }
        Ok(())
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Report tag for one (selection, k, classifier) combination.
pub fn tag(selection: Selection, k: usize, classifier: Classifier) -> String {
    match (selection, classifier) {
        (Selection::None, c) => format!("full_{}", c.name()),
        (Selection::Method(m), Classifier::Logistic) => format!("{}_k{k}", m.name()),
        (Selection::Method(m), c) => format!("{}_k{k}_{}", m.name(), c.name()),
    }
}

/// `pool`: pools every activation file into `pooled.saep2`.
pub fn cmd_pool(cfg: &PipelineConfig) -> Result<PoolSummary> {
    if cfg.activations.is_empty() {
        return Err(Error::Config(
            "no activation files given (key `activations`)".into(),
        ));
    }
    cfg.ensure_out_dir()?;
    let (docs, summary) = pooling::pool_files(&cfg.activations, cfg.token_cap).stage("pool")?;
    pooling::write_pooled_file(&docs, cfg.out("pooled.saep2"))?;
    write_text(&cfg.out("pool_summary.txt"), &summary.to_kv())?;
    info!(
        "pooled {} documents of width {}",
        summary.doc_count, summary.n_features
    );
    Ok(summary)
}

fn label_docs(cfg: &PipelineConfig, docs: Vec<DocumentVector>) -> Result<Vec<DocumentVector>> {
    let Some(earnings) = &cfg.earnings else {
        if docs.iter().all(|d| d.label.is_some()) {
            return Ok(docs);
        }
        return Err(Error::Config(
            "no earnings table given (key `earnings`)".into(),
        ));
    };
    let records = read_earnings_table(earnings)?;
    let (labeled, summary) = labeling::label_documents(docs, &records, cfg.delta)?;
    cfg.ensure_out_dir()?;
    write_text(&cfg.out("label_summary.txt"), &summary.to_kv())?;
    Ok(labeled)
}

/// `label`: attaches SUE labels to a pooled corpus, dropping the discard band.
pub fn cmd_label(cfg: &PipelineConfig) -> Result<usize> {
    let input = cfg
        .pooled
        .clone()
        .unwrap_or_else(|| cfg.out("pooled.saep2"));
    let docs = pooling::read_pooled_file(&input).stage("label")?;
    let labeled = label_docs(cfg, docs).stage("label")?;
    cfg.ensure_out_dir()?;
    pooling::write_pooled_file(&labeled, cfg.out("labeled.saep2"))?;
    Ok(labeled.len())
}

fn split_summary(split: &Split) -> String {
    let mut s = String::new();
    for (name, part) in [
        ("train", &split.train),
        ("val", &split.val),
        ("test", &split.test),
    ] {
        let pos = part.iter().filter(|d| d.label == Some(1)).count();
        let _ = writeln!(s, "{name}_docs={}", part.len());
        let _ = writeln!(s, "{name}_pos={pos}");
        if let (Some(a), Some(b)) = (
            part.iter().map(|d| d.date).min(),
            part.iter().map(|d| d.date).max(),
        ) {
            let _ = writeln!(s, "{name}_dates={a}..{b}");
        }
    }
    for w in &split.warnings {
        let _ = writeln!(s, "warning={w}");
    }
    s
}

fn write_split(cfg: &PipelineConfig, split: &Split) -> Result<()> {
    cfg.ensure_out_dir()?;
    pooling::write_pooled_file(&split.train, cfg.out("train.saep2"))?;
    pooling::write_pooled_file(&split.val, cfg.out("val.saep2"))?;
    pooling::write_pooled_file(&split.test, cfg.out("test.saep2"))?;
    write_text(&cfg.out("split_summary.txt"), &split_summary(split))
}

/// `split`: chronological train/validation/test partition of `labeled.saep2`.
pub fn cmd_split(cfg: &PipelineConfig) -> Result<Split> {
    let spec = cfg.split_spec()?;
    let docs = pooling::read_pooled_file(cfg.out("labeled.saep2")).stage("split")?;
    let split = chronological_split(docs, &spec);
    write_split(cfg, &split)?;
    Ok(split)
}

/// A labeled partition as a matrix plus labels.
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<u8>,
}

impl Dataset {
    pub fn from_docs(docs: &[DocumentVector]) -> Result<Self> {
        Ok(Self {
            x: pooling::to_matrix(docs)?,
            y: pooling::labels(docs)?,
        })
    }
}

/// Scores features on the training documents only.
pub fn select_features(
    train: &[DocumentVector],
    method: Method,
    cfg: &PipelineConfig,
) -> Result<FeatureRanking> {
    let data = Dataset::from_docs(train)?;
    featsel::score(method, &data.x, &data.y, &cfg.importance)
}

fn selection_method(cfg: &PipelineConfig) -> Result<Method> {
    match cfg.method {
        Selection::Method(m) => Ok(m),
        Selection::None => Err(Error::Config(
            "method=none has no ranking to compute".into(),
        )),
    }
}

fn ranking_path(cfg: &PipelineConfig, method: Method) -> PathBuf {
    cfg.ranking
        .clone()
        .unwrap_or_else(|| cfg.out(&format!("ranking_{}.csv", method.name())))
}

/// `select`: ranks features on `train.saep2`.
pub fn cmd_select(cfg: &PipelineConfig) -> Result<FeatureRanking> {
    let method = selection_method(cfg)?;
    let train = pooling::read_pooled_file(cfg.out("train.saep2")).stage("select")?;
    let ranking = select_features(&train, method, cfg).stage("select")?;
    ranking.save(ranking_path(cfg, method))?;
    Ok(ranking)
}

/// A fitted classifier of either kind.
#[derive(Debug, Clone)]
pub enum Model {
    Linear(TrainedLinearModel),
    Gbdt(GbdtModel),
}

impl Model {
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        match self {
            Model::Linear(m) => m.predict_matrix(x),
            Model::Gbdt(m) => m.predict_proba(x),
        }
    }

    pub fn file_name(&self, tag: &str) -> String {
        match self {
            Model::Linear(_) => format!("model_{tag}.lin"),
            Model::Gbdt(_) => format!("model_{tag}.gbt"),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Model::Linear(m) => m.save(path),
            Model::Gbdt(m) => m.save(path),
        }
    }

    /// Loads a `LIN1` or `GBT1` file, whichever the magic says.
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        match bytes.get(..4) {
            Some(b"LIN1") => Ok(Model::Linear(
                TrainedLinearModel::read(&bytes[..]).map_err(|e| e.in_file(path))?,
            )),
            Some(b"GBT1") => Ok(Model::Gbdt(
                GbdtModel::read(&bytes[..]).map_err(|e| e.in_file(path))?,
            )),
            _ => Err(Error::Format(format!(
                "{}: not a LIN1 or GBT1 model",
                path.display()
            ))),
        }
    }
}

/// Classifier fitted on train (tuned on val) for one selection setting.
#[derive(Debug, Clone)]
pub struct Trained {
    pub tag: String,
    pub selection: Selection,
    pub classifier: Classifier,
    pub k: usize,
    pub lambda: Option<f64>,
    pub val_auc: f64,
    pub model: Model,
}

fn non_empty(split: &Split) -> Result<()> {
    for (name, part) in [
        ("train", &split.train),
        ("val", &split.val),
        ("test", &split.test),
    ] {
        if part.is_empty() {
            return Err(Error::Input(format!("{name} split is empty")));
        }
    }
    Ok(())
}

/// Fits the configured classifier for one selection and k.
pub fn train_one(
    train: &Dataset,
    val: &Dataset,
    ranking: Option<&FeatureRanking>,
    selection: Selection,
    k: usize,
    cfg: &PipelineConfig,
) -> Result<Trained> {
    let m = train.x.cols();
    let (indices, k_eff) = match (selection, ranking) {
        (Selection::None, _) => ((0..m).collect::<Vec<_>>(), m),
        (Selection::Method(_), Some(r)) => {
            if r.n_features() != m {
                return Err(Error::Shape(format!(
                    "ranking covers {} features, data has {m}",
                    r.n_features()
                )));
            }
            if k > m {
                warn!("k={k} exceeds m={m}; using all features");
            }
            let sel = r.top_k(k);
            let n = sel.len();
            (sel, n)
        }
        (Selection::Method(m), None) => {
            return Err(Error::Input(format!("no {} ranking available", m.name())))
        }
    };
    let tag = tag(selection, k_eff, cfg.classifier);
    match cfg.classifier {
        Classifier::Logistic => {
            let res = linmodel::grid_search(
                (&train.x, &train.y),
                (&val.x, &val.y),
                &indices,
                &cfg.lambda_grid,
            )?;
            Ok(Trained {
                tag,
                selection,
                classifier: cfg.classifier,
                k: k_eff,
                lambda: Some(res.best_lambda),
                val_auc: res.best_val_auc,
                model: Model::Linear(res.model),
            })
        }
        Classifier::Gbdt => {
            if selection != Selection::None {
                return Err(Error::Config(
                    "the gbdt classifier is the no-selection baseline; use method=none".into(),
                ));
            }
            let model = gbdt::train_gbdt(&train.x, &train.y, &cfg.gbdt, Some((&val.x, &val.y)))?;
            let p = model.predict_proba(&val.x)?;
            let val_auc = metrics::roc_auc(&p, &val.y)?.ok_or_else(|| {
                Error::ClassDegenerate("validation split needs both classes".into())
            })?;
            Ok(Trained {
                tag,
                selection,
                classifier: cfg.classifier,
                k: k_eff,
                lambda: None,
                val_auc,
                model: Model::Gbdt(model),
            })
        }
    }
}

/// Test-set evaluation of one trained model.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub trained: Trained,
    pub report: EvalReport,
    pub roc: Option<Vec<(f64, f64)>>,
    pub n_train: usize,
    pub n_val: usize,
}

impl Outcome {
    pub fn report_text(&self) -> String {
        let t = &self.trained;
        let mut s = String::new();
        let _ = writeln!(s, "tag={}", t.tag);
        let _ = writeln!(s, "method={}", t.selection.name());
        let _ = writeln!(s, "classifier={}", t.classifier.name());
        let _ = writeln!(s, "k={}", t.k);
        match t.lambda {
            Some(l) => {
                let _ = writeln!(s, "lambda={l}");
            }
            None => {
                let _ = writeln!(s, "lambda=none");
            }
        }
        let _ = writeln!(s, "val_auc={:.6}", t.val_auc);
        let _ = writeln!(s, "n_train={}", self.n_train);
        let _ = writeln!(s, "n_val={}", self.n_val);
        let _ = writeln!(s, "n_test={}", self.report.n_pos + self.report.n_neg);
        s.push_str(&self.report.to_kv());
        s
    }
}

/// Test report plus ROC points (absent when the test split has one class).
pub type Evaluation = (EvalReport, Option<Vec<(f64, f64)>>);

pub fn evaluate_model(model: &Model, test: &Dataset, threshold: f64) -> Result<Evaluation> {
    let p = model.predict(&test.x)?;
    let report = metrics::evaluate(&p, &test.y, threshold)?;
    let roc = if report.roc_auc.is_some() {
        Some(metrics::roc_points(&p, &test.y)?)
    } else {
        None
    };
    Ok((report, roc))
}

fn write_outcome(cfg: &PipelineConfig, o: &Outcome) -> Result<()> {
    let tag = &o.trained.tag;
    o.trained
        .model
        .save(&cfg.out(&o.trained.model.file_name(tag)))?;
    write_text(&cfg.out(&format!("report_{tag}.txt")), &o.report_text())?;
    if let Some(roc) = &o.roc {
        write_text(
            &cfg.out(&format!("roc_{tag}.csv")),
            &metrics::roc_points_csv(roc),
        )?;
    }
    Ok(())
}

fn load_splits(cfg: &PipelineConfig) -> Result<Split> {
    Ok(Split {
        train: pooling::read_pooled_file(cfg.out("train.saep2"))?,
        val: pooling::read_pooled_file(cfg.out("val.saep2"))?,
        test: pooling::read_pooled_file(cfg.out("test.saep2"))?,
        warnings: Vec::new(),
    })
}

/// `train`: grid-searched classifier per configured k, saved as model files.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<Vec<Trained>> {
    cfg.validate_ks()?;
    let split = load_splits(cfg).stage("train")?;
    let train = Dataset::from_docs(&split.train).stage("train")?;
    let val = Dataset::from_docs(&split.val).stage("train")?;
    let ranking = match cfg.method {
        Selection::Method(m) => Some(FeatureRanking::load(m, ranking_path(cfg, m)).stage("train")?),
        Selection::None => None,
    };
    let ks = if cfg.method == Selection::None {
        vec![train.x.cols()]
    } else {
        cfg.k.clone()
    };
    let mut out = Vec::new();
    for k in ks {
        let t = train_one(&train, &val, ranking.as_ref(), cfg.method, k, cfg).stage("train")?;
        t.model.save(&cfg.out(&t.model.file_name(&t.tag)))?;
        write_text(
            &cfg.out(&format!("train_{}.txt", t.tag)),
            &format!(
                "tag={}\nk={}\nlambda={}\nval_auc={:.6}\n",
                t.tag,
                t.k,
                t.lambda
                    .map(|l| l.to_string())
                    .unwrap_or_else(|| "none".into()),
                t.val_auc
            ),
        )?;
        out.push(t);
    }
    Ok(out)
}

/// `eval`: scores a saved model on `test.saep2` and writes its report.
/// Uses `model` when set, otherwise every model written by `train` for the
/// configured method and k values.
pub fn cmd_eval(cfg: &PipelineConfig) -> Result<Vec<(String, EvalReport)>> {
    let test_docs = pooling::read_pooled_file(cfg.out("test.saep2")).stage("eval")?;
    let test = Dataset::from_docs(&test_docs).stage("eval")?;
    let models: Vec<(String, PathBuf)> = match &cfg.model {
        Some(p) => {
            let stem = p
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("model")
                .trim_start_matches("model_")
                .to_string();
            vec![(stem, p.clone())]
        }
        None => {
            let m = test.x.cols();
            let ks = if cfg.method == Selection::None {
                vec![m]
            } else {
                cfg.k.iter().map(|&k| k.min(m)).collect()
            };
            ks.into_iter()
                .map(|k| {
                    let t = tag(cfg.method, k, cfg.classifier);
                    let ext = if cfg.classifier == Classifier::Gbdt {
                        "gbt"
                    } else {
                        "lin"
                    };
                    let p = cfg.out(&format!("model_{t}.{ext}"));
                    (t, p)
                })
                .collect()
        }
    };
    let mut out = Vec::new();
    for (t, path) in models {
        let model = Model::load(&path).stage("eval")?;
        let (report, roc) = evaluate_model(&model, &test, cfg.threshold).stage("eval")?;
        let mut text = format!("tag={t}\n");
        text.push_str(&report.to_kv());
        write_text(&cfg.out(&format!("report_{t}.txt")), &text)?;
        if let Some(roc) = roc {
            write_text(
                &cfg.out(&format!("roc_{t}.csv")),
                &metrics::roc_points_csv(&roc),
            )?;
        }
        out.push((t, report));
    }
    Ok(out)
}

/// Loads (or pools) the corpus, labels it and splits it. Intermediate files
/// are written to `out_dir`.
pub fn prepare(cfg: &PipelineConfig) -> Result<Split> {
    cfg.ensure_out_dir()?;
    let docs = match &cfg.pooled {
        Some(p) => pooling::read_pooled_file(p).stage("pool")?,
        None => {
            if cfg.activations.is_empty() {
                return Err(Error::Config("set `activations` or `pooled`".into()));
            }
            let (docs, summary) =
                pooling::pool_files(&cfg.activations, cfg.token_cap).stage("pool")?;
            pooling::write_pooled_file(&docs, cfg.out("pooled.saep2"))?;
            write_text(&cfg.out("pool_summary.txt"), &summary.to_kv())?;
            docs
        }
    };
    let labeled = label_docs(cfg, docs).stage("label")?;
    pooling::write_pooled_file(&labeled, cfg.out("labeled.saep2"))?;
    let spec = cfg.split_spec()?;
    let split = chronological_split(labeled, &spec);
    write_split(cfg, &split)?;
    non_empty(&split).stage("split")?;
    Ok(split)
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub outcomes: Vec<Outcome>,
    pub ranking: Option<FeatureRanking>,
    /// Index into `outcomes` of the best validation AUC (first wins ties).
    pub best: usize,
}

impl RunSummary {
    pub fn best(&self) -> &Outcome {
        &self.outcomes[self.best]
    }
}

/// Everything after `prepare` for one selection setting, on in-memory splits.
pub fn run_on_split(
    split: &Split,
    selection: Selection,
    ks: &[usize],
    cfg: &PipelineConfig,
) -> Result<RunSummary> {
    non_empty(split).stage("split")?;
    let train = Dataset::from_docs(&split.train).stage("train")?;
    let val = Dataset::from_docs(&split.val).stage("train")?;
    let test = Dataset::from_docs(&split.test).stage("eval")?;
    let ranking = match selection {
        Selection::Method(m) => Some(select_features(&split.train, m, cfg).stage("select")?),
        Selection::None => None,
    };
    let ks: Vec<usize> = if selection == Selection::None {
        vec![train.x.cols()]
    } else {
        ks.to_vec()
    };
    let mut outcomes = Vec::new();
    for k in ks {
        let trained =
            train_one(&train, &val, ranking.as_ref(), selection, k, cfg).stage("train")?;
        let (report, roc) = evaluate_model(&trained.model, &test, cfg.threshold).stage("eval")?;
        outcomes.push(Outcome {
            trained,
            report,
            roc,
            n_train: train.y.len(),
            n_val: val.y.len(),
        });
    }
    let mut best = 0;
    for (i, o) in outcomes.iter().enumerate() {
        if o.trained.val_auc > outcomes[best].trained.val_auc {
            best = i;
        }
    }
    Ok(RunSummary {
        outcomes,
        ranking,
        best,
    })
}

/// `run`: label, split, select on train, grid-search on val, evaluate on
/// test. Writes one report per k and `best.txt`.
pub fn cmd_run(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate_ks()?;
    let split = prepare(cfg)?;
    let summary = run_on_split(&split, cfg.method, &cfg.k, cfg)?;
    if let (Some(r), Selection::Method(m)) = (&summary.ranking, cfg.method) {
        r.save(ranking_path(cfg, m))?;
    }
    for o in &summary.outcomes {
        write_outcome(cfg, o)?;
    }
    let best = summary.best();
    write_text(
        &cfg.out("best.txt"),
        &format!(
            "tag={}\nk={}\nval_auc={:.6}\n",
            best.trained.tag, best.trained.k, best.trained.val_auc
        ),
    )?;
    Ok(summary)
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: String,
    pub k: usize,
    pub lambda: Option<f64>,
    pub val_auc: Option<f64>,
    pub report: Option<EvalReport>,
    pub status: String,
}

pub const SWEEP_HEADER: &str = "method,k,accuracy,weighted_f1,auc,lambda,val_auc,status";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let (acc, f1, auc) = match &self.report {
            Some(r) => (Some(r.accuracy), Some(r.weighted_f1), r.roc_auc),
            None => (None, None, None),
        };
        format!(
            "{},{},{},{},{},{},{},{}",
            self.method,
            self.k,
            f(acc),
            f(f1),
            f(auc),
            self.lambda.map(|l| l.to_string()).unwrap_or_default(),
            f(self.val_auc),
            self.status.replace(',', ";")
        )
    }
}

/// Sweep over `methods x k` on an already prepared split. Rows come out in
/// (method, k) order; a failing row is recorded and the sweep continues.
pub fn sweep_on_split(split: &Split, cfg: &PipelineConfig) -> Result<Vec<SweepRow>> {
    if cfg.methods.is_empty() || cfg.k.is_empty() {
        return Err(Error::Config(
            "sweep needs non-empty `methods` and `k`".into(),
        ));
    }
    cfg.validate_ks()?;
    non_empty(split).stage("split")?;
    let train = Dataset::from_docs(&split.train).stage("train")?;
    let val = Dataset::from_docs(&split.val).stage("train")?;
    let test = Dataset::from_docs(&split.test).stage("eval")?;
    let m = train.x.cols();

    let rankings: Vec<Result<Option<FeatureRanking>>> = cfg
        .methods
        .iter()
        .map(|s| match s {
            Selection::Method(method) => select_features(&split.train, *method, cfg).map(Some),
            Selection::None => Ok(None),
        })
        .collect();

    let mut jobs = Vec::new();
    for (mi, s) in cfg.methods.iter().enumerate() {
        match s {
            Selection::None => jobs.push((mi, m)),
            Selection::Method(_) => jobs.extend(cfg.k.iter().map(|&k| (mi, k))),
        }
    }
    let rows = par::map_slice(&jobs, |&(mi, k)| {
        let selection = cfg.methods[mi];
        let res = match &rankings[mi] {
            Err(e) => Err(Error::Input(format!("select: {e}"))),
            Ok(r) => train_one(&train, &val, r.as_ref(), selection, k, cfg).and_then(|t| {
                evaluate_model(&t.model, &test, cfg.threshold).map(|(rep, _)| (t, rep))
            }),
        };
        match res {
            Ok((t, rep)) => SweepRow {
                method: selection.name().into(),
                k: t.k,
                lambda: t.lambda,
                val_auc: Some(t.val_auc),
                report: Some(rep),
                status: "ok".into(),
            },
            Err(e) => SweepRow {
                method: selection.name().into(),
                k,
                lambda: None,
                val_auc: None,
                report: None,
                status: format!("error: {e}"),
            },
        }
    });
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv());
        s.push('\n');
    }
    s
}

/// `sweep`: writes `sweep.csv`.
pub fn cmd_sweep(cfg: &PipelineConfig) -> Result<Vec<SweepRow>> {
    let split = prepare(cfg)?;
    let rows = sweep_on_split(&split, cfg)?;
    write_text(&cfg.out("sweep.csv"), &sweep_csv(&rows))?;
    Ok(rows)
}

/// `top-features`: `rank,index,score` lines for the best `k` features.
pub fn top_features(ranking: &FeatureRanking, k: usize) -> String {
    let m = ranking.n_features();
    if k > m {
        warn!("k={k} exceeds the {m} ranked features; showing all");
    }
    let mut s = String::new();
    for (rank, &j) in ranking.order().iter().take(k).enumerate() {
        let _ = writeln!(s, "{},{},{}", rank + 1, j, ranking.scores()[j]);
    }
    s
}

pub fn cmd_top_features(cfg: &PipelineConfig) -> Result<String> {
    let method = selection_method(cfg).unwrap_or(Method::TreeImportance);
    let path = ranking_path(cfg, method);
    let ranking = FeatureRanking::load(method, &path).stage("top-features")?;
    let k = cfg.k.first().copied().unwrap_or(10);
    Ok(top_features(&ranking, k))
}

/// Cutoffs for a date range: train covers the first two thirds, validation
/// and test a sixth each. Each cutoff snaps back to the nearest month end
/// on or before it, so 2012-01-01..2014-12-31 gives 2013-12-31 and
/// 2014-06-30.
pub fn default_cutoffs(range: (NaiveDate, NaiveDate)) -> (NaiveDate, NaiveDate) {
    let span = (range.1 - range.0).num_days();
    let at = |frac: f64| {
        let d = range.0 + chrono::Duration::days((span as f64 * frac).round() as i64 + 1);
        let month_end = d.with_day(1).expect("day 1 exists") - chrono::Duration::days(1);
        month_end.max(range.0)
    };
    (at(2.0 / 3.0), at(5.0 / 6.0))
}

/// Files written by [`cmd_synth`].
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub activations: PathBuf,
    pub earnings: PathBuf,
    pub config: PathBuf,
    pub planted: Vec<usize>,
}

/// `synth`: writes a synthetic SAEF corpus, its earnings table, the planted
/// dimensions and a ready-to-run config into `out_dir`.
pub fn cmd_synth(cfg: &PipelineConfig) -> Result<SynthOutput> {
    cfg.ensure_out_dir()?;
    let corpus = synth::generate_corpus(&cfg.synth)?;
    let activations = cfg.out("activations.saef");
    let earnings = cfg.out("earnings.csv");
    write_activation_file(&corpus.streams, &activations)?;
    write_earnings_table(&corpus.records, &earnings)?;
    let planted_text: String = corpus.planted.iter().map(|j| format!("{j}\n")).collect();
    write_text(&cfg.out("planted.txt"), &planted_text)?;

    let (train_end, val_end) = match (cfg.train_end, cfg.val_end) {
        (Some(t), Some(v)) => (t, v),
        _ => default_cutoffs(cfg.synth.date_range),
    };
    let mut conf = BTreeMap::new();
    conf.insert("activations", activations.display().to_string());
    conf.insert("earnings", earnings.display().to_string());
    conf.insert("out_dir", cfg.out_dir.join("run").display().to_string());
    conf.insert("train_end", train_end.to_string());
    conf.insert("val_end", val_end.to_string());
    conf.insert("method", "tree".into());
    conf.insert("k", "10,50,200,1000".into());
    conf.insert("seed", cfg.synth.seed.to_string());
    let mut text = String::from("# generated by `saefire synth`\n");
    for (k, v) in conf {
        let _ = writeln!(text, "{k} = {v}");
    }
    let config = cfg.out("saefire.conf");
    write_text(&config, &text)?;
    Ok(SynthOutput {
        activations,
        earnings,
        config,
        planted: corpus.planted,
    })
}
