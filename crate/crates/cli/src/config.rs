//! `--config FILE` support: each `key = value` line becomes `--key value`,
//! spliced in right after the subcommand so later command-line flags win.

use std::ffi::OsString;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parses `key=value` lines. Blank lines and `#` comments are skipped;
/// `key=true` becomes a bare flag and `key=false` is dropped.
pub fn parse_config(text: &str) -> Result<Vec<String>> {
    let mut args = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected key=value, got {line:?}", n + 1);
        };
        let key = key.trim().trim_start_matches("--");
        let value = value.trim();
        if key.is_empty() || key == "config" {
            bail!("line {}: invalid key {key:?}", n + 1);
        }
        match value {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            _ => {
                args.push(format!("--{key}"));
                args.push(value.to_string());
            }
        }
    }
    Ok(args)
}

/// Removes `--config FILE` from `argv` and splices the file's flags in after
/// the subcommand. Returns `argv` untouched when there is no `--config`.
pub fn expand(mut argv: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    let mut i = 1;
    while i < argv.len() {
        let arg = argv[i].to_string_lossy().into_owned();
        if arg == "--" {
            break;
        }
        if arg == "--config" {
            if i + 1 >= argv.len() {
                // let clap report the missing value
                return Ok(argv);
            }
            path = Some(argv.remove(i + 1));
            argv.remove(i);
            continue;
        }
        if let Some(p) = arg.strip_prefix("--config=") {
            path = Some(OsString::from(p));
            argv.remove(i);
            continue;
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let path = Path::new(&path);
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config file {}", path.display()))?;
    let extra = parse_config(&text).with_context(|| format!("in config file {}", path.display()))?;
    let at = subcommand_position(&argv).map_or(argv.len(), |p| p + 1);
    argv.splice(at..at, extra.into_iter().map(OsString::from));
    Ok(argv)
}

/// Index of the first argument that looks like a subcommand name.
fn subcommand_position(argv: &[OsString]) -> Option<usize> {
    const VALUED: [&str; 1] = ["--data-dir"];
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if VALUED.contains(&a.as_ref()) {
            i += 2;
            continue;
        }
        if !a.starts_with('-') {
            return Some(i);
        }
        i += 1;
    }
    None
}
