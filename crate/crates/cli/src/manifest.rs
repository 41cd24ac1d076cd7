use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::{SecondsFormat, Utc};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::settings::Settings;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

/// Record of one run, written beside its output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub config_file: Option<String>,
    pub config_digest: String,
    pub settings: Settings,
    pub translation_tables: BTreeMap<String, String>,
    pub news_lists: BTreeMap<String, String>,
    pub threshold: Option<f64>,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub counts: BTreeMap<String, Value>,
    pub status: String,
    pub error: Option<String>,
}

pub fn timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut hasher = Sha256::new();
    std::io::copy(&mut BufReader::new(File::open(path)?), &mut hasher)?;
    Ok(hex::encode(hasher.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(command: &str, settings: &Settings, config_file: Option<&Path>) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: std::env::args().collect(),
            config_file: config_file.map(|p| p.display().to_string()),
            config_digest: settings.digest(),
            settings: settings.clone(),
            translation_tables: BTreeMap::new(),
            news_lists: BTreeMap::new(),
            threshold: None,
            started_at: timestamp(),
            finished_at: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            counts: BTreeMap::new(),
            status: "running".into(),
            error: None,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> std::io::Result<()> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256,
        });
        Ok(())
    }

    pub fn count(&mut self, stage: &str, value: impl Serialize) {
        self.counts
            .insert(stage.to_string(), serde_json::to_value(value).expect("counts serialize"));
    }

    pub fn write(&mut self, dir: &Path) -> std::io::Result<()> {
        self.finished_at = Some(timestamp());
        std::fs::create_dir_all(dir)?;
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_NAME), text)
    }
}
