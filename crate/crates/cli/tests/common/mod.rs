#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name).canonicalize().unwrap()
}

/// The shipped example config with data paths made absolute, output sent to
/// `out`, and `extra` TOML lines overriding earlier keys.
pub fn write_config(dir: &Path, out: &Path, extra: &[(&str, &str)]) -> PathBuf {
    let text = std::fs::read_to_string(data("ieee13.toml")).unwrap();
    let mut table: toml::Table = text.parse().unwrap();
    for key in ["network", "scenario_file", "history"] {
        let rel = table[key].as_str().unwrap().to_string();
        table.insert(key.into(), data(&rel).display().to_string().into());
    }
    table.insert("output_dir".into(), out.display().to_string().into());
    for (k, v) in extra {
        let parsed: toml::Table = format!("{k} = {v}").parse().unwrap();
        table.insert(k.to_string(), parsed[*k].clone());
    }
    let path = dir.join("run.toml");
    std::fs::write(&path, toml::to_string(&table).unwrap()).unwrap();
    path
}

pub fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spar-opf")).args(args).output().unwrap()
}

pub fn run(cmd: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![cmd, "--config", config.to_str().unwrap()];
    args.extend_from_slice(extra);
    cli(&args)
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
