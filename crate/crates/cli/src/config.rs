//! `key = value` config files merged into the argument list.
//!
//! Lines are `key = value`; blank lines and lines starting with `#` are
//! ignored. Keys are long flag names, with `_` and `-` interchangeable. A
//! value of `true` or `false` sets or leaves unset a switch. The file's
//! values are inserted right after the subcommand, so flags given on the
//! command line override them.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use clap::{ArgAction, Command};

/// Flags whose value names a config file for the given subcommand.
const FILE_FLAGS: [(&str, &str); 2] = [("config", ""), ("plan", "simulate")];

pub fn parse_config(text: &str, origin: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("{}:{}: expected `key = value`", origin.display(), no + 1))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        if key.is_empty() {
            bail!("{}:{}: empty key", origin.display(), no + 1);
        }
        out.push((key, value.trim().to_string()));
    }
    Ok(out)
}

fn flag_value(args: &[String], flag: &str) -> Option<String> {
    let long = format!("--{flag}");
    let prefixed = format!("--{flag}=");
    let mut found = None;
    for (i, a) in args.iter().enumerate() {
        if a == &long {
            found = args.get(i + 1).cloned();
        } else if let Some(v) = a.strip_prefix(&prefixed) {
            found = Some(v.to_string());
        }
    }
    found
}

/// Returns `argv` with the values of `--config` (and `--plan` for
/// `simulate`) inserted after the subcommand name.
pub fn merge_config(cmd: &Command, argv: Vec<String>) -> Result<Vec<String>> {
    let sub_names: Vec<&str> = cmd.get_subcommands().map(|c| c.get_name()).collect();
    let Some(pos) = argv
        .iter()
        .enumerate()
        .skip(1)
        .position(|(i, a)| sub_names.contains(&a.as_str()) && argv[i - 1] != "--config")
    else {
        return Ok(argv);
    };
    let pos = pos + 1;
    let sub = cmd.find_subcommand(&argv[pos]).expect("known subcommand");
    let mut settings = Vec::new();
    for (flag, only) in FILE_FLAGS {
        if !only.is_empty() && only != sub.get_name() {
            continue;
        }
        if let Some(path) = flag_value(&argv, flag) {
            let path = Path::new(&path);
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            settings.extend(parse_config(&text, path)?);
        }
    }
    let mut injected = Vec::new();
    for (key, value) in settings {
        if FILE_FLAGS.iter().any(|(f, _)| *f == key) {
            bail!("`{key}` cannot be set from a config file");
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| anyhow!("config key `{key}` is not a flag of `{}`", sub.get_name()))?;
        if matches!(arg.get_action(), ArgAction::SetTrue) {
            match value.as_str() {
                "true" => injected.push(format!("--{key}")),
                "false" => {}
                other => bail!("config key `{key}` takes true or false, got `{other}`"),
            }
        } else {
            injected.push(format!("--{key}={value}"));
        }
    }
    let mut out = argv;
    out.splice(pos + 1..pos + 1, injected);
    Ok(out)
}
