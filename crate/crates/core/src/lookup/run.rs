use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::client::{BibliographicSearch, SearchError};
use super::{assess, LookupRequest, LookupResult, Outcome, Target};
use crate::exec::Executor;
use crate::output::DatasetRow;

pub struct Endpoints<'a> {
    pub crossref: &'a dyn BibliographicSearch,
    pub books: &'a dyn BibliographicSearch,
}

impl Endpoints<'_> {
    fn for_target(&self, target: Target) -> &dyn BibliographicSearch {
        match target {
            Target::Crossref => self.crossref,
            Target::Books => self.books,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LookupConfig {
    pub batch_size: usize,
    pub threshold: f64,
    pub checkpoint_dir: PathBuf,
    /// Concurrent requests in flight.
    pub in_flight: usize,
    /// Minimum spacing between requests to the same endpoint.
    pub min_interval: Duration,
    /// Retries after the first attempt for transient failures.
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub backoff_max: Duration,
    /// Stop once more than this many requests ended in transport errors.
    pub failure_budget: Option<u64>,
    /// Stop after this many batches in this run.
    pub max_batches: Option<usize>,
}

impl LookupConfig {
    pub fn new(checkpoint_dir: impl Into<PathBuf>) -> Self {
        LookupConfig {
            batch_size: 1000,
            threshold: super::DEFAULT_THRESHOLD,
            checkpoint_dir: checkpoint_dir.into(),
            in_flight: 4,
            min_interval: Duration::from_secs(1),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
            backoff_max: Duration::from_secs(30),
            failure_budget: None,
            max_batches: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub accepted: u64,
    pub rejected: u64,
    pub no_result: u64,
    pub transport_error: u64,
}

impl OutcomeCounts {
    pub fn add(&mut self, outcome: &Outcome) {
        match outcome {
            Outcome::Accepted(_) => self.accepted += 1,
            Outcome::Rejected(_) => self.rejected += 1,
            Outcome::NoResult => self.no_result += 1,
            Outcome::TransportError { .. } => self.transport_error += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.accepted + self.rejected + self.no_result + self.transport_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub batch_index: usize,
    pub batch_size: usize,
    pub threshold: f64,
    /// SHA-256 over the completed citation keys, ascending, one per line.
    pub completed_keys_digest: String,
    pub completed: u64,
    pub counts: OutcomeCounts,
    pub output_path: String,
}

#[derive(Debug, Clone, Default)]
pub struct LookupRun {
    /// Every result so far, from this run and earlier ones, by citation key.
    pub results: Vec<LookupResult>,
    pub counts: OutcomeCounts,
    pub batches_total: usize,
    pub batches_this_run: usize,
    pub resumed_batches: usize,
    pub requests_sent: u64,
    pub complete: bool,
    pub budget_exceeded: bool,
}

#[derive(Debug, Error)]
pub enum LookupError {
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("checkpoint data in {path} is unusable: {message}")]
    Corrupt { path: String, message: String },
    #[error("checkpoint does not match this run: {0}")]
    Mismatch(String),
    #[error("invalid lookup configuration: {0}")]
    InvalidConfig(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> LookupError + '_ {
    move |source| LookupError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn batch_name(index: usize) -> String {
    format!("batch-{index:05}.jsonl")
}

fn checkpoint_name(index: usize) -> String {
    format!("checkpoint-{index:05}.json")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), LookupError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(bytes).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn keys_digest<'a>(keys: impl IntoIterator<Item = &'a u64>) -> String {
    let mut hasher = Sha256::new();
    for key in keys {
        hasher.update(key.to_string().as_bytes());
        hasher.update(b"\n");
    }
    hex::encode(hasher.finalize())
}

/// Numbered files named `<prefix>NNNNN<suffix>` in `dir`.
fn numbered_files(dir: &Path, prefix: &str, suffix: &str) -> Result<Vec<(usize, PathBuf)>, LookupError> {
    let mut found = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(index) = name
            .strip_prefix(prefix)
            .and_then(|rest| rest.strip_suffix(suffix))
            .and_then(|n| n.parse::<usize>().ok())
        {
            found.push((index, path));
        }
    }
    found.sort();
    Ok(found)
}

fn read_batch(path: &Path) -> Result<Vec<LookupResult>, LookupError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut results = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.is_empty() {
            continue;
        }
        results.push(serde_json::from_str(&line).map_err(|e| LookupError::Corrupt {
            path: path.display().to_string(),
            message: e.to_string(),
        })?);
    }
    Ok(results)
}

fn latest_checkpoint(dir: &Path) -> Result<Option<Checkpoint>, LookupError> {
    let Some((_, path)) = numbered_files(dir, "checkpoint-", ".json")?.pop() else {
        return Ok(None);
    };
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map(Some).map_err(|e| LookupError::Corrupt {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Results recorded by the latest checkpoint in `dir`, by citation key.
pub fn load_results(dir: impl AsRef<Path>) -> Result<Vec<LookupResult>, LookupError> {
    let dir = dir.as_ref();
    let Some(checkpoint) = latest_checkpoint(dir)? else {
        return Ok(Vec::new());
    };
    let mut results = Vec::new();
    for index in 0..=checkpoint.batch_index {
        results.extend(read_batch(&dir.join(batch_name(index)))?);
    }
    let keys: Vec<u64> = results.iter().map(|r| r.citation_key).collect();
    if keys_digest(&keys) != checkpoint.completed_keys_digest {
        return Err(LookupError::Corrupt {
            path: dir.display().to_string(),
            message: "batch files do not match the checkpoint digest".into(),
        });
    }
    Ok(results)
}

struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(interval: Duration) -> Self {
        RateLimiter {
            interval,
            next: Mutex::new(None),
        }
    }

    fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let delay = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !delay.is_zero() {
            std::thread::sleep(delay);
        }
    }
}

fn backoff(config: &LookupConfig, attempt: u32) -> Duration {
    let exp = config.backoff_base.saturating_mul(1u32 << attempt.min(16));
    let capped = exp.min(config.backoff_max);
    if capped.is_zero() {
        return capped;
    }
    let factor: f64 = rand::rng().random_range(0.5..1.0);
    capped.mul_f64(factor)
}

fn fetch(request: &LookupRequest, endpoints: &Endpoints, limiter: &RateLimiter, config: &LookupConfig) -> Outcome {
    let client = endpoints.for_target(request.target);
    let mut attempt = 0;
    loop {
        limiter.wait();
        attempt += 1;
        match client.search(request) {
            Ok(Some(candidate)) => return assess(request, candidate, config.threshold),
            Ok(None) => return Outcome::NoResult,
            Err(SearchError::Transient(message)) if attempt <= config.max_retries => {
                log::debug!("{} request {} failed ({message}); retrying", client.name(), request.citation_key);
                std::thread::sleep(backoff(config, attempt - 1));
            }
            Err(SearchError::Transient(message) | SearchError::Permanent(message)) => {
                log::warn!("{} request {} failed: {message}", client.name(), request.citation_key);
                return Outcome::TransportError { message, attempts: attempt };
            }
        }
    }
}

/// Look up every request, in citation-key order, one batch at a time.
///
/// After each batch its results and a checkpoint are written to the
/// checkpoint directory. A later call with the same requests and settings
/// continues after the last checkpoint without repeating finished keys.
pub fn run_lookup(
    requests: &[LookupRequest],
    endpoints: &Endpoints,
    config: &LookupConfig,
) -> Result<LookupRun, LookupError> {
    if config.batch_size == 0 {
        return Err(LookupError::InvalidConfig("batch size must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&config.threshold) {
        return Err(LookupError::InvalidConfig(format!("threshold {} outside [0, 1]", config.threshold)));
    }
    let dir = &config.checkpoint_dir;
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let mut ordered: Vec<LookupRequest> = requests.to_vec();
    ordered.sort_by_key(|r| r.citation_key);
    ordered.dedup_by_key(|r| r.citation_key);

    let mut run = LookupRun::default();
    let checkpoint = latest_checkpoint(dir)?;
    let next_batch = match &checkpoint {
        Some(cp) => {
            if cp.batch_size != config.batch_size {
                return Err(LookupError::Mismatch(format!(
                    "batch size {} was used before, now {}",
                    cp.batch_size, config.batch_size
                )));
            }
            if cp.threshold != config.threshold {
                return Err(LookupError::Mismatch(format!(
                    "threshold {} was used before, now {}",
                    cp.threshold, config.threshold
                )));
            }
            run.results = load_results(dir)?;
            let done: Vec<u64> = run.results.iter().map(|r| r.citation_key).collect();
            let expected: Vec<u64> = ordered.iter().take(done.len()).map(|r| r.citation_key).collect();
            if done != expected {
                return Err(LookupError::Mismatch("completed keys are not a prefix of the requests".into()));
            }
            run.counts = cp.counts;
            run.resumed_batches = cp.batch_index + 1;
            cp.batch_index + 1
        }
        None => 0,
    };
    for (index, path) in numbered_files(dir, "batch-", ".jsonl")? {
        if index >= next_batch {
            fs::remove_file(&path).map_err(io_err(&path))?;
        }
    }
    run.batches_total = next_batch;

    let done: BTreeSet<u64> = run.results.iter().map(|r| r.citation_key).collect();
    let pending: Vec<LookupRequest> = ordered.into_iter().filter(|r| !done.contains(&r.citation_key)).collect();
    let executor = Executor::new(config.in_flight.max(1));
    let crossref_limit = RateLimiter::new(config.min_interval);
    let books_limit = RateLimiter::new(config.min_interval);

    for batch in pending.chunks(config.batch_size) {
        if config.max_batches.is_some_and(|m| run.batches_this_run >= m) {
            return Ok(run);
        }
        let outcomes = executor.map(batch, |request| {
            let limiter = match request.target {
                Target::Crossref => &crossref_limit,
                Target::Books => &books_limit,
            };
            fetch(request, endpoints, limiter, config)
        });
        let mut lines = String::new();
        for (request, outcome) in batch.iter().zip(outcomes) {
            run.counts.add(&outcome);
            let result = LookupResult {
                citation_key: request.citation_key,
                target: request.target,
                outcome,
            };
            lines.push_str(&serde_json::to_string(&result).expect("result serializes"));
            lines.push('\n');
            run.results.push(result);
        }
        run.requests_sent += batch.len() as u64;

        let index = run.batches_total;
        let batch_path = dir.join(batch_name(index));
        write_atomic(&batch_path, lines.as_bytes())?;
        let checkpoint = Checkpoint {
            batch_index: index,
            batch_size: config.batch_size,
            threshold: config.threshold,
            completed_keys_digest: keys_digest(run.results.iter().map(|r| &r.citation_key)),
            completed: run.results.len() as u64,
            counts: run.counts,
            output_path: batch_name(index),
        };
        let json = serde_json::to_string_pretty(&checkpoint).expect("checkpoint serializes");
        write_atomic(&dir.join(checkpoint_name(index)), json.as_bytes())?;
        run.batches_total += 1;
        run.batches_this_run += 1;

        if config.failure_budget.is_some_and(|budget| run.counts.transport_error > budget) {
            log::error!("{} lookups failed; stopping", run.counts.transport_error);
            run.budget_exceeded = true;
            return Ok(run);
        }
    }
    run.complete = true;
    Ok(run)
}

/// Attach accepted identifiers to rows; the citation key is the row index.
/// Returns the number of rows augmented.
pub fn apply_results(rows: &mut [DatasetRow], results: &[LookupResult]) -> usize {
    let mut augmented = 0;
    for result in results {
        if let Outcome::Accepted(m) = &result.outcome {
            if let Some(row) = rows.get_mut(result.citation_key as usize) {
                row.acquired_id_list = m.acquired_ids.clone();
                augmented += 1;
            }
        }
    }
    augmented
}
