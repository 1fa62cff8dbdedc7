//! `saefire` command-line driver.
//!
//! Every subcommand takes `--config FILE` (a `key = value` file) plus one
//! `--<key> VALUE` flag per config key; flags override the file.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or format error.

use std::process::ExitCode;

use clap::{Arg, ArgMatches, Command};
use log::warn;
use saefire_core::pipeline::{self, PipelineConfig};
use saefire_core::Error;

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("pool", "Sum-pool SAEF activation files into pooled.saep2"),
    (
        "label",
        "Attach earnings-surprise labels to a pooled corpus",
    ),
    ("split", "Chronological train/validation/test split"),
    ("select", "Rank features on the training split"),
    ("train", "Grid-search the classifier for each k"),
    ("eval", "Evaluate saved models on the test split"),
    ("run", "Label, split, select, train and evaluate in one go"),
    (
        "sweep",
        "Evaluate every method x k combination into sweep.csv",
    ),
    (
        "top-features",
        "Print the top-k ranked features as rank,index,score",
    ),
    ("synth", "Write a synthetic corpus and a matching config"),
];

fn cli() -> Command {
    let mut args = vec![Arg::new("config")
        .long("config")
        .short('c')
        .value_name("FILE")
        .help("key = value configuration file")];
    for &key in PipelineConfig::KEYS {
        args.push(Arg::new(key).long(key).value_name("VALUE"));
    }
    Command::new("saefire")
        .about("Sparse-autoencoder feature pipeline for earnings-surprise prediction")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommands(
            SUBCOMMANDS
                .iter()
                .map(|&(name, about)| Command::new(name).about(about).args(args.clone())),
        )
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

fn load_config(m: &ArgMatches) -> Result<PipelineConfig, Failure> {
    let mut cfg = match m.get_one::<String>("config") {
        Some(path) => PipelineConfig::load(path).map_err(|e| match e {
            Error::Io { .. } => Failure::Usage(e.to_string()),
            other => other.into(),
        })?,
        None => PipelineConfig::default(),
    };
    for &key in PipelineConfig::KEYS {
        if let Some(v) = m.get_one::<String>(key) {
            cfg.set(key, v)?;
        }
    }
    Ok(cfg)
}

fn dispatch(name: &str, cfg: &PipelineConfig) -> Result<String, Error> {
    let out = match name {
        "pool" => pipeline::cmd_pool(cfg)?.to_kv(),
        "label" => format!("labeled_docs={}\n", pipeline::cmd_label(cfg)?),
        "split" => {
            let split = pipeline::cmd_split(cfg)?;
            for w in &split.warnings {
                warn!("{w}");
            }
            format!(
                "train_docs={}\nval_docs={}\ntest_docs={}\n",
                split.train.len(),
                split.val.len(),
                split.test.len()
            )
        }
        "select" => {
            let r = pipeline::cmd_select(cfg)?;
            format!("ranked_features={}\n", r.n_features())
        }
        "train" => pipeline::cmd_train(cfg)?
            .iter()
            .map(|t| format!("{} val_auc={:.6}\n", t.tag, t.val_auc))
            .collect(),
        "eval" => pipeline::cmd_eval(cfg)?
            .iter()
            .map(|(tag, r)| format!("tag={tag}\n{}", r.to_kv()))
            .collect(),
        "run" => pipeline::cmd_run(cfg)?.best().report_text(),
        "sweep" => pipeline::sweep_csv(&pipeline::cmd_sweep(cfg)?),
        "top-features" => pipeline::cmd_top_features(cfg)?,
        "synth" => {
            let o = pipeline::cmd_synth(cfg)?;
            format!(
                "activations={}\nearnings={}\nconfig={}\nplanted={}\n",
                o.activations.display(),
                o.earnings.display(),
                o.config.display(),
                o.planted.len()
            )
        }
        other => unreachable!("unknown subcommand {other}"),
    };
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let result = load_config(sub).and_then(|cfg| dispatch(name, &cfg).map_err(Failure::from));
    match result {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("saefire {name}: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("saefire {name}: {msg}");
            ExitCode::from(2)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_valid() {
        cli().debug_assert();
    }

    #[test]
    fn flags_override_config() {
        let m = cli()
            .try_get_matches_from(["saefire", "pool", "--token_cap", "7", "--k", "3,4"])
            .unwrap();
        let cfg = load_config(m.subcommand().unwrap().1).ok().unwrap();
        assert_eq!(cfg.token_cap, 7);
        assert_eq!(cfg.k, vec![3, 4]);
    }
}
