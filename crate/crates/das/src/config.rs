//! Line-based `key = value` run configuration with `[section]` headers, plus
//! the manifest records every command appends next to its outputs.

use crate::error::{DasError, Result};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

/// Parsed configuration: section -> key -> value, everything a string until
/// a typed accessor asks for it. BTreeMap keeps serialization canonical so
/// the config hash is stable.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut section = String::from("global");
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                section = line[1..line.len() - 1].trim().to_string();
                cfg.sections.entry(section.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(DasError::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            cfg.sections
                .entry(section.clone())
                .or_default()
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        RunConfig::parse(&std::fs::read_to_string(path)?)
    }

    pub fn set(&mut self, section: &str, key: &str, value: impl ToString) {
        self.sections
            .entry(section.to_string())
            .or_default()
            .insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(|s| s.as_str())
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| {
                DasError::Config(format!("[{section}] {key} = '{v}' is not a valid value"))
            }),
        }
    }

    /// Canonical text form (sorted sections and keys).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (section, kv) in &self.sections {
            let _ = writeln!(out, "[{section}]");
            for (k, v) in kv {
                let _ = writeln!(out, "{k} = {v}");
            }
            let _ = writeln!(out);
        }
        out
    }

    pub fn hash(&self) -> String {
        hex_digest(self.to_text().as_bytes())
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(hex_digest(&std::fs::read(path)?))
}

/// One manifest line per command run: what ran, with which config, on which
/// inputs, producing which outputs, in how long.
pub struct ManifestEntry {
    pub command: String,
    pub config_hash: String,
    pub input_hashes: Vec<(String, String)>,
    pub output: String,
    pub wall_seconds: f64,
}

impl ManifestEntry {
    fn line(&self) -> String {
        let inputs: Vec<String> =
            self.input_hashes.iter().map(|(name, h)| format!("{name}:{h}")).collect();
        format!(
            "command={} config={} inputs={} output={} wall_s={:.3}",
            self.command,
            self.config_hash,
            inputs.join("+"),
            self.output,
            self.wall_seconds
        )
    }
}

pub fn append_manifest(dir: &Path, entry: &ManifestEntry) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join("manifest.txt");
    let mut existing = if path.exists() {
        std::fs::read_to_string(&path)?
    } else {
        String::new()
    };
    existing.push_str(&entry.line());
    existing.push('\n');
    std::fs::write(&path, existing)?;
    Ok(())
}

/// True when the manifest already records this exact (command, config,
/// inputs) combination and the output file still exists — the no-op test.
pub fn manifest_hit(dir: &Path, entry: &ManifestEntry) -> bool {
    let path = dir.join("manifest.txt");
    let Ok(text) = std::fs::read_to_string(&path) else {
        return false;
    };
    let needle = {
        let inputs: Vec<String> =
            entry.input_hashes.iter().map(|(n, h)| format!("{n}:{h}")).collect();
        format!(
            "command={} config={} inputs={} output={}",
            entry.command,
            entry.config_hash,
            inputs.join("+"),
            entry.output
        )
    };
    text.lines().any(|l| l.starts_with(&needle)) && Path::new(&entry.output).exists()
}
