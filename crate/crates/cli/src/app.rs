//! Argument parsing for the `hinembed` binary.

use std::path::PathBuf;

use anyhow::Result;
use clap::parser::ValueSource;
use clap::{Arg, ArgMatches, Command};

use crate::config::{flag_name, key_listing, Config, KEYS, THREADS_ENV};
use crate::pipeline::{run_pipeline, synthesize};

const SUBCOMMANDS: &[(&str, &str)] = &[
    ("analyze", "Measure every relation and categorize it as AR or IR"),
    ("extract", "Write the node-relation triples (and the link split, if any)"),
    ("train", "Train embeddings; writes a checkpoint and per-epoch losses"),
    ("eval", "Evaluate embeddings on clustering, classification and link prediction"),
    ("variants", "Train and evaluate each model variant on the same data"),
    ("export", "Write node and relation embedding TSV files"),
    ("run", "Run the stages listed under the `stages` key"),
    ("synth", "Write a synthetic planted-community network with labels"),
];

fn leak(s: String) -> &'static str {
    Box::leak(s.into_boxed_str())
}

fn subcommand(name: &'static str, about: &'static str) -> Command {
    let mut cmd = Command::new(name).about(about).arg(
        Arg::new("config")
            .long("config")
            .short('c')
            .value_name("FILE")
            .value_parser(clap::value_parser!(PathBuf))
            .help("flat key = value config file; flags override it"),
    );
    for k in KEYS {
        cmd = cmd.arg(
            Arg::new(k.name)
                .long(leak(flag_name(k.name)))
                .value_name("VALUE")
                .help(k.help)
                .help_heading("Config keys"),
        );
    }
    cmd
}

pub fn command() -> Command {
    let epilog = leak(format!(
        "{}\nThe {THREADS_ENV} environment variable sets the default for `threads`.",
        key_listing()
    ));
    let mut cmd = Command::new("hinembed")
        .version(env!("CARGO_PKG_VERSION"))
        .about("Heterogeneous network embedding with separate affiliation and interaction scores")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .after_help(epilog);
    for (name, about) in SUBCOMMANDS {
        cmd = cmd.subcommand(subcommand(name, about));
    }
    cmd
}

/// Defaults, then the thread variable, then the config file, then flags.
pub fn resolve_config(m: &ArgMatches) -> Result<Config> {
    let mut cfg = Config::default();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        if !v.trim().is_empty() {
            cfg.set("threads", &v)?;
        }
    }
    if let Some(path) = m.get_one::<PathBuf>("config") {
        cfg.merge_file(path)?;
    }
    for k in KEYS {
        if m.value_source(k.name) == Some(ValueSource::CommandLine) {
            if let Some(v) = m.get_one::<String>(k.name) {
                cfg.set(k.name, v)?;
            }
        }
    }
    Ok(cfg)
}

pub fn dispatch(m: &ArgMatches) -> Result<()> {
    let (name, sub) = m.subcommand().expect("subcommand required");
    let cfg = resolve_config(sub)?;
    match name {
        "synth" => {
            for p in synthesize(&cfg)? {
                println!("{}", p.display());
            }
        }
        "run" => {
            run_pipeline(&cfg, &cfg.list("stages"), false)?;
        }
        stage => {
            run_pipeline(&cfg, &[stage.to_string()], true)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_is_well_formed() {
        command().debug_assert();
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "dim = 8\nepochs = 3\n").unwrap();
        let m = command()
            .try_get_matches_from(["hinembed", "train", "--config", path.to_str().unwrap(), "--dim", "4"])
            .unwrap();
        let cfg = resolve_config(m.subcommand().unwrap().1).unwrap();
        assert_eq!(cfg.get("dim"), "4");
        assert_eq!(cfg.get("epochs"), "3");
    }

    #[test]
    fn every_key_has_a_flag() {
        let cmd = command();
        let train = cmd.find_subcommand("train").unwrap();
        for k in KEYS {
            let long = flag_name(k.name);
            assert!(train.get_arguments().any(|a| a.get_long() == Some(long.as_str())), "{long}");
        }
    }
}
