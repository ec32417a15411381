//! `--config file.toml` support. Top-level scalar keys feed the global
//! flags; a table named after a subcommand path (`[eval.psds]`) feeds that
//! subcommand. Keys use the long flag names. The values are injected as
//! ordinary flags ahead of the user's own, so explicit flags win.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::formats::read_text;

/// Subcommands that take a nested subcommand of their own.
const NESTED: &[&str] = &["eval"];

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
        if s == "--" {
            break;
        }
    }
    None
}

fn value_args(path: &Path, key: &str, value: &Value, out: &mut Vec<OsString>) -> Result<()> {
    let flag = OsString::from(format!("--{key}"));
    let scalar = |v: &Value| -> Result<String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Integer(i) => Ok(i.to_string()),
            Value::Float(f) => Ok(f.to_string()),
            _ => Err(Error::format(path, format!("`{key}` must be a string, number, boolean or array"))),
        }
    };
    match value {
        Value::Boolean(true) => out.push(flag),
        Value::Boolean(false) => {}
        Value::Array(items) => {
            out.push(flag);
            for v in items {
                out.push(scalar(v)?.into());
            }
        }
        v => {
            out.push(flag);
            out.push(scalar(v)?.into());
        }
    }
    Ok(())
}

fn table_args(path: &Path, table: &Table) -> Result<Vec<OsString>> {
    let mut out = Vec::new();
    for (k, v) in table {
        if !v.is_table() {
            value_args(path, k, v, &mut out)?;
        }
    }
    Ok(out)
}

/// Positions of the subcommand tokens (`features`, or `eval` + `psds`).
fn subcommand_positions(args: &[OsString]) -> Vec<usize> {
    let mut pos = Vec::new();
    let mut i = 1;
    while i < args.len() {
        let s = args[i].to_string_lossy();
        if s == "--" {
            break;
        }
        if s.starts_with('-') {
            // Global flags that take a value.
            if (s == "--config" || s == "--jobs") && i + 1 < args.len() {
                i += 1;
            }
        } else {
            pos.push(i);
            if !NESTED.contains(&s.as_ref()) {
                break;
            }
        }
        i += 1;
    }
    pos
}

/// Returns `args` with the config file's flags spliced in.
pub fn expand_args(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let root: Table = toml::from_str(&read_text(&path)?).map_err(|e| Error::format(&path, e.to_string()))?;
    let positions = subcommand_positions(&args);
    let mut out = Vec::with_capacity(args.len() + 16);
    let mut table = Some(&root);
    let mut inserts: Vec<(usize, Vec<OsString>)> = vec![(0, table_args(&path, &root)?)];
    for &p in &positions {
        let name = args[p].to_string_lossy().into_owned();
        table = table.and_then(|t| t.get(&name)).and_then(Value::as_table);
        if let Some(t) = table {
            inserts.push((p, table_args(&path, t)?));
        }
    }
    for (i, a) in args.into_iter().enumerate() {
        out.push(a);
        if let Some((_, extra)) = inserts.iter().find(|(p, _)| *p == i) {
            out.extend(extra.iter().cloned());
        }
    }
    Ok(out)
}
