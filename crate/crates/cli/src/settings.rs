use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::{CliResult, OrExit};

/// Every tunable of a run. The same keys are accepted in the JSON config
/// file; a flag given on the command line wins over the file.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    /// Language of the dump, or "auto" to use the one it declares.
    #[arg(long, global = true, help_heading = "Extraction")]
    pub language: Option<String>,
    /// Directory with <lang>.json translation tables overriding the shipped ones.
    #[arg(long, global = true, help_heading = "Extraction")]
    pub tables_dir: Option<PathBuf>,
    /// Dump compression: auto, bz2 or none.
    #[arg(long, global = true, help_heading = "Extraction")]
    pub compression: Option<String>,
    /// Drop malformed pages with a warning instead of failing.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", help_heading = "Extraction")]
    pub skip_bad_pages: Option<bool>,
    /// Keep only citation templates inside <ref> elements.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", help_heading = "Extraction")]
    pub refs_only: Option<bool>,
    /// Worker threads; 0 means one per core.
    #[arg(long, global = true, help_heading = "Extraction")]
    pub jobs: Option<usize>,
    /// Pages handed to the workers at once.
    #[arg(long, global = true, help_heading = "Extraction")]
    pub chunk_pages: Option<usize>,
    /// Rows in the per-language template frequency table.
    #[arg(long, global = true, help_heading = "Extraction")]
    pub top: Option<usize>,

    /// Output format: csv or jsonl.
    #[arg(long, global = true, help_heading = "Output")]
    pub format: Option<String>,
    /// Start a new part file after this many rows.
    #[arg(long, global = true, help_heading = "Output")]
    pub rows_per_file: Option<usize>,
    /// Include the extra property map in JSONL output.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true", help_heading = "Output")]
    pub extended: Option<bool>,

    /// News-domain list files (repeatable). Replaces the shipped lists.
    #[arg(long, global = true, num_args = 1.., help_heading = "Classification")]
    pub news_domains: Option<Vec<PathBuf>>,
    /// Language label for the metrics report.
    #[arg(long, global = true, help_heading = "Classification")]
    pub metrics_language: Option<String>,
    /// Snapshot label for the metrics report.
    #[arg(long, global = true, help_heading = "Classification")]
    pub snapshot: Option<String>,

    /// Lookup endpoint: live, crossref, books or mock.
    #[arg(long, global = true, help_heading = "Lookup")]
    pub endpoint: Option<String>,
    /// JSON array of records served by the mock endpoint.
    #[arg(long, global = true, help_heading = "Lookup")]
    pub mock_db: Option<PathBuf>,
    /// Largest normalized edit distance accepted as a match.
    #[arg(long, global = true, help_heading = "Lookup")]
    pub threshold: Option<f64>,
    #[arg(long, global = true, help_heading = "Lookup")]
    pub batch_size: Option<usize>,
    #[arg(long, global = true, help_heading = "Lookup")]
    pub checkpoint_dir: Option<PathBuf>,
    /// Give up once more requests than this failed in transport.
    #[arg(long, global = true, help_heading = "Lookup")]
    pub failure_budget: Option<u64>,
    /// Stop after this many batches; rerun to continue.
    #[arg(long, global = true, help_heading = "Lookup")]
    pub max_batches: Option<usize>,
    /// Concurrent requests.
    #[arg(long, global = true, help_heading = "Lookup")]
    pub in_flight: Option<usize>,
    /// Minimum milliseconds between requests to one endpoint.
    #[arg(long, global = true, help_heading = "Lookup")]
    pub min_interval_ms: Option<u64>,
    #[arg(long, global = true, help_heading = "Lookup")]
    pub max_retries: Option<u32>,
    #[arg(long, global = true, help_heading = "Lookup")]
    pub timeout_secs: Option<u64>,
    /// Contact address sent to the endpoints [env: WIKICITE_CONTACT].
    #[arg(long, global = true, help_heading = "Lookup")]
    pub contact: Option<String>,
    #[arg(long, global = true, help_heading = "Lookup")]
    pub crossref_url: Option<String>,
    #[arg(long, global = true, help_heading = "Lookup")]
    pub books_url: Option<String>,
}

macro_rules! overlay {
    ($flags:ident, $file:ident, $($field:ident),* $(,)?) => {
        Settings { $($field: $flags.$field.or($file.$field)),* }
    };
}

impl Settings {
    /// Flags layered over the config file.
    pub fn over(self, file: Settings) -> Settings {
        let flags = self;
        overlay!(
            flags, file, language, tables_dir, compression, skip_bad_pages, refs_only, jobs, chunk_pages, top, format,
            rows_per_file, extended, news_domains, metrics_language, snapshot, endpoint, mock_db, threshold,
            batch_size, checkpoint_dir, failure_budget, max_batches, in_flight, min_interval_ms, max_retries,
            timeout_secs, contact, crossref_url, books_url,
        )
    }

    pub fn load(path: &Path) -> CliResult<Settings> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))
            .or_config()?;
        serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("config {} is invalid: {e}", path.display()))
            .or_config()
    }

    /// SHA-256 of the effective settings as JSON.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("settings serialize");
        hex::encode(Sha256::digest(json))
    }
}
