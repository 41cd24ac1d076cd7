use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde_json::json;
use wikicite::classify::{load_news_domains, NewsDomainSet};
use wikicite::dump::{filter_articles, open_dump, Compression, DumpOptions, DumpStats, RedirectMatcher};
use wikicite::exec::Executor;
use wikicite::lookup::{
    apply_results, run_lookup, select_row_candidates, BibliographicSearch, BooksClient, CrossrefClient, Endpoints,
    HttpConfig, LookupConfig, LookupError, MockEndpoint, Target, DEFAULT_THRESHOLD,
};
use wikicite::metrics::{compare_snapshots, compute_metrics, render_table, MetricsReport};
use wikicite::output::{dataset_files, read_rows, DatasetRow, DatasetWriter, Format, WriterOptions};
use wikicite::pipeline::{relabel, ExtractOptions, ExtractSummary, Extractor, PipelineError, TableSet};

use crate::failure::{config_error, input_error, CliResult, Failure, OrExit, EXIT_BUDGET, EXIT_INPUT, EXIT_OTHER};
use crate::manifest::{sha256_bytes, RunManifest};
use crate::settings::Settings;

pub const METRICS_NAME: &str = "metrics.json";
pub const CONTACT_ENV: &str = "WIKICITE_CONTACT";
pub const BOOKS_KEY_ENV: &str = "WIKICITE_BOOKS_API_KEY";

/// How a command that did not fail ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finish {
    Complete,
    /// Lookup stopped early on request; rerunning continues it.
    Incomplete,
}

fn executor(settings: &Settings) -> Executor {
    Executor::new(settings.jobs.unwrap_or(0))
}

fn language(settings: &Settings) -> Option<String> {
    settings
        .language
        .as_deref()
        .filter(|l| !l.eq_ignore_ascii_case("auto"))
        .map(str::to_ascii_lowercase)
}

fn load_tables(settings: &Settings, manifest: &mut RunManifest) -> CliResult<TableSet> {
    let tables = match &settings.tables_dir {
        Some(dir) if !dir.is_dir() => return Err(config_error(format!("tables directory {} does not exist", dir.display()))),
        Some(dir) => TableSet::with_overrides(dir).or_config()?,
        None => TableSet::shipped(),
    };
    if let Some(lang) = language(settings) {
        if tables.get(&lang).is_none() {
            return Err(config_error(format!("no translation table for language {lang:?}")));
        }
    }
    manifest.translation_tables = tables.digests().clone();
    Ok(tables)
}

fn load_news(settings: &Settings, manifest: &mut RunManifest) -> CliResult<NewsDomainSet> {
    match settings.news_domains.as_deref() {
        Some(paths) if !paths.is_empty() => {
            for path in paths {
                let digest = crate::manifest::sha256_file(path)
                    .map_err(|e| anyhow::anyhow!("cannot read news-domain list {}: {e}", path.display()))
                    .or_config()?;
                manifest.news_lists.insert(path.display().to_string(), digest);
            }
            load_news_domains(paths).or_config()
        }
        _ => {
            let set = NewsDomainSet::shipped();
            let listing: Vec<&str> = set.domains().collect();
            manifest
                .news_lists
                .insert("shipped".into(), sha256_bytes(listing.join("\n").as_bytes()));
            Ok(set)
        }
    }
}

fn output_format(settings: &Settings, fallback: Format) -> CliResult<Format> {
    match &settings.format {
        Some(name) => name.parse().map_err(config_error),
        None => Ok(fallback),
    }
}

fn writer_options(settings: &Settings, fallback: Format) -> CliResult<WriterOptions> {
    Ok(WriterOptions {
        format: output_format(settings, fallback)?,
        rows_per_file: settings.rows_per_file,
        extended: settings.extended.unwrap_or(false),
    })
}

/// Format of a dataset file, or of the part files in a directory.
pub fn detect_format(path: &Path) -> CliResult<Format> {
    if path.is_file() {
        return Format::from_path(path)
            .ok_or_else(|| input_error(format!("{}: unknown dataset format, expected .csv or .jsonl", path.display())));
    }
    if !path.is_dir() {
        return Err(input_error(format!("{} does not exist", path.display())));
    }
    for format in [Format::Csv, Format::Jsonl] {
        if dataset_files(path, format).is_ok() {
            return Ok(format);
        }
    }
    Err(input_error(format!("no dataset part files in {}", path.display())))
}

fn read_dataset(path: &Path, manifest: &mut RunManifest) -> CliResult<(Vec<DatasetRow>, Format)> {
    let format = detect_format(path)?;
    for file in dataset_files(path, format).or_input()? {
        manifest.add_input(&file).or_input()?;
    }
    let rows = read_rows(path, format).or_input()?;
    Ok((rows, format))
}

/// Remove part files of an earlier run that this run did not produce.
fn remove_stale_parts(dir: &Path, keep: &[PathBuf]) -> CliResult<()> {
    let keep: BTreeSet<&Path> = keep.iter().map(PathBuf::as_path).collect();
    let entries = std::fs::read_dir(dir).or_other()?;
    for entry in entries {
        let path = entry.or_other()?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
        let is_part = name.starts_with("part-") && (name.ends_with(".csv") || name.ends_with(".jsonl"));
        if is_part && !keep.contains(path.as_path()) {
            std::fs::remove_file(&path).or_other()?;
        }
    }
    Ok(())
}

fn write_dataset(rows: &[DatasetRow], out: &Path, options: WriterOptions, manifest: &mut RunManifest) -> CliResult<()> {
    let mut writer = DatasetWriter::create(out, options).or_other()?;
    for row in rows {
        writer.write(row).or_other()?;
    }
    finish_writer(writer, out, manifest)
}

fn finish_writer(writer: DatasetWriter, out: &Path, manifest: &mut RunManifest) -> CliResult<()> {
    let parts = writer.finish().or_other()?;
    remove_stale_parts(out, &parts)?;
    manifest.outputs.extend(parts.iter().map(|p| p.display().to_string()));
    Ok(())
}

fn pipeline_failure(err: PipelineError) -> Failure {
    let code = match err {
        PipelineError::Output(_) => EXIT_OTHER,
        PipelineError::Dump(_) | PipelineError::UnsupportedLanguage { .. } | PipelineError::UnknownLanguage(_) => EXIT_INPUT,
    };
    Failure::new(code, err)
}

fn print_dump_report(stats: &DumpStats, redirects: u64, summary: &ExtractSummary, top: usize) {
    println!(
        "pages read: {} ({} in the article namespace, {} redirects dropped, {} malformed skipped), {} bytes of XML",
        stats.pages_seen, stats.pages_in_article_namespace, redirects, stats.pages_skipped, stats.bytes_read
    );
    println!(
        "articles: {}, templates: {}, citations: {}, unmapped keys: {}",
        summary.pages, summary.templates, summary.rows, summary.unmapped_keys
    );
    println!(
        "ref diagnostics: {} unterminated, {} reused, {} malformed",
        summary.unterminated_refs, summary.reused_refs, summary.malformed_refs
    );
    if top == 0 || summary.languages.is_empty() {
        return;
    }
    let mut lines = vec![("language".to_string(), "template".to_string(), "count".to_string())];
    for (lang, per) in &summary.languages {
        for (name, count) in per.top_templates(top) {
            lines.push((lang.clone(), name.to_string(), count.to_string()));
        }
    }
    let w0 = lines.iter().map(|l| l.0.chars().count()).max().unwrap_or(0);
    let w1 = lines.iter().map(|l| l.1.chars().count()).max().unwrap_or(0);
    for (lang, name, count) in lines {
        let pad0 = w0 - lang.chars().count();
        let pad1 = w1 - name.chars().count();
        println!("{lang}{}  {name}{}  {count}", " ".repeat(pad0), " ".repeat(pad1));
    }
}

fn dump_counts(stats: &DumpStats, redirects: u64) -> serde_json::Value {
    json!({
        "pages_seen": stats.pages_seen,
        "pages_in_article_namespace": stats.pages_in_article_namespace,
        "redirects_dropped": redirects,
        "pages_skipped": stats.pages_skipped,
        "bytes_read": stats.bytes_read,
    })
}

pub fn extract(dump: &Path, out: &Path, all: bool, settings: &Settings, manifest: &mut RunManifest) -> CliResult<Finish> {
    let tables = load_tables(settings, manifest)?;
    let news = load_news(settings, manifest)?;
    let compression: Compression = match &settings.compression {
        Some(name) => name.parse().map_err(config_error)?,
        None => Compression::Auto,
    };
    let options = writer_options(settings, Format::Csv)?;
    let exec = executor(settings);
    if all {
        manifest.threshold = Some(settings.threshold.unwrap_or(DEFAULT_THRESHOLD));
    }

    let stream = open_dump(
        dump,
        DumpOptions {
            compression,
            skip_bad_pages: settings.skip_bad_pages.unwrap_or(false),
        },
    )
    .or_input()?;
    manifest.add_input(dump).or_input()?;
    let mut articles = filter_articles(stream, RedirectMatcher::default());
    let extractor = Extractor {
        tables: &tables,
        news: &news,
        executor: &exec,
        options: ExtractOptions {
            language: language(settings),
            chunk_pages: settings.chunk_pages.unwrap_or(ExtractOptions::default().chunk_pages),
            refs_only: settings.refs_only.unwrap_or(false),
        },
    };
    log::info!("extracting {} with {} worker(s)", dump.display(), exec.jobs());

    let mut collected = Vec::new();
    let summary = if all {
        extractor
            .run(articles.by_ref(), |row| {
                collected.push(row);
                Ok(())
            })
            .map_err(pipeline_failure)?
    } else {
        let mut writer = DatasetWriter::create(out, options).or_other()?;
        let summary = extractor
            .run(articles.by_ref(), |row| writer.write(&row))
            .map_err(pipeline_failure)?;
        finish_writer(writer, out, manifest)?;
        summary
    };
    let stats = articles.inner().stats();
    let redirects = articles.redirects_dropped;
    print_dump_report(&stats, redirects, &summary, settings.top.unwrap_or(10));
    manifest.count("dump", dump_counts(&stats, redirects));
    manifest.count("extract", &summary);

    if !all {
        return Ok(Finish::Complete);
    }
    classify_stage(&mut collected, &news, &exec, settings, out, manifest)?;
    if settings.endpoint.is_none() {
        log::info!("no lookup endpoint configured; skipping identifier lookup");
        write_dataset(&collected, out, options, manifest)?;
        return Ok(Finish::Complete);
    }
    let finish = lookup_stage(&mut collected, out, settings, manifest)?;
    if finish == Finish::Complete {
        write_dataset(&collected, out, options, manifest)?;
    }
    Ok(finish)
}

fn metrics_labels(settings: &Settings) -> (String, String) {
    let lang = settings
        .metrics_language
        .clone()
        .or_else(|| language(settings))
        .unwrap_or_else(|| "all".to_string());
    (lang, settings.snapshot.clone().unwrap_or_default())
}

fn classify_stage(
    rows: &mut [DatasetRow],
    news: &NewsDomainSet,
    exec: &Executor,
    settings: &Settings,
    out: &Path,
    manifest: &mut RunManifest,
) -> CliResult<MetricsReport> {
    relabel(rows, news, exec);
    let (lang, snapshot) = metrics_labels(settings);
    let report = compute_metrics(rows.iter().map(|r| r.actual_label), &lang, &snapshot);
    print!("{}", render_table(std::slice::from_ref(&report), None));
    std::fs::create_dir_all(out).or_other()?;
    let path = out.join(METRICS_NAME);
    let mut text = serde_json::to_string_pretty(&report.to_json()).expect("report serializes");
    text.push('\n');
    std::fs::write(&path, text).or_other()?;
    manifest.outputs.push(path.display().to_string());
    manifest.count("classify", report.counts());
    Ok(report)
}

pub fn classify(input: &Path, out: &Path, settings: &Settings, manifest: &mut RunManifest) -> CliResult<Finish> {
    let news = load_news(settings, manifest)?;
    let (mut rows, format) = read_dataset(input, manifest)?;
    let options = writer_options(settings, format)?;
    classify_stage(&mut rows, &news, &executor(settings), settings, out, manifest)?;
    write_dataset(&rows, out, options, manifest)?;
    Ok(Finish::Complete)
}

struct Clients {
    crossref: Arc<dyn BibliographicSearch>,
    books: Arc<dyn BibliographicSearch>,
    only: Option<Target>,
}

fn http_config(settings: &Settings, base_url: Option<&String>, api_key: Option<String>) -> HttpConfig {
    let defaults = HttpConfig::default();
    HttpConfig {
        contact: settings.contact.clone().or_else(|| std::env::var(CONTACT_ENV).ok()),
        api_key,
        timeout: settings.timeout_secs.map_or(defaults.timeout, Duration::from_secs),
        base_url: base_url.cloned(),
    }
}

fn clients(settings: &Settings, manifest: &mut RunManifest) -> CliResult<Clients> {
    let endpoint = settings.endpoint.as_deref().unwrap_or("live");
    if endpoint == "mock" {
        let path = settings
            .mock_db
            .as_deref()
            .ok_or_else(|| config_error("the mock endpoint needs --mock-db"))?;
        let mock = MockEndpoint::load(path)
            .map_err(|e| anyhow::anyhow!("cannot load mock database {}: {e}", path.display()))
            .or_config()?;
        manifest.add_input(path).or_config()?;
        let mock: Arc<dyn BibliographicSearch> = Arc::new(mock);
        return Ok(Clients {
            crossref: mock.clone(),
            books: mock,
            only: None,
        });
    }
    let only = match endpoint {
        "live" => None,
        "crossref" => Some(Target::Crossref),
        "books" => Some(Target::Books),
        other => return Err(config_error(format!("unknown endpoint {other:?}, expected live, crossref, books or mock"))),
    };
    let books_key = std::env::var(BOOKS_KEY_ENV).ok();
    Ok(Clients {
        crossref: Arc::new(CrossrefClient::new(http_config(settings, settings.crossref_url.as_ref(), None))),
        books: Arc::new(BooksClient::new(http_config(settings, settings.books_url.as_ref(), books_key))),
        only,
    })
}

fn lookup_config(settings: &Settings, out: &Path) -> CliResult<LookupConfig> {
    let dir = settings.checkpoint_dir.clone().unwrap_or_else(|| out.join("checkpoint"));
    let mut config = LookupConfig::new(dir);
    if let Some(t) = settings.threshold {
        if !(0.0..=1.0).contains(&t) {
            return Err(config_error(format!("threshold {t} is outside [0, 1]")));
        }
        config.threshold = t;
    }
    if let Some(n) = settings.batch_size {
        config.batch_size = n;
    }
    if let Some(n) = settings.in_flight {
        config.in_flight = n.max(1);
    }
    if let Some(n) = settings.max_retries {
        config.max_retries = n;
    }
    config.failure_budget = settings.failure_budget;
    config.max_batches = settings.max_batches;
    let mock = settings.endpoint.as_deref() == Some("mock");
    config.min_interval = match settings.min_interval_ms {
        Some(ms) => Duration::from_millis(ms),
        None if mock => Duration::ZERO,
        None => config.min_interval,
    };
    if mock {
        config.backoff_base = Duration::ZERO;
        config.backoff_max = Duration::ZERO;
    }
    Ok(config)
}

fn lookup_failure(err: LookupError) -> Failure {
    let code = match err {
        LookupError::Mismatch(_) | LookupError::InvalidConfig(_) => crate::failure::EXIT_CONFIG,
        LookupError::Corrupt { .. } => EXIT_INPUT,
        LookupError::Io { .. } => EXIT_OTHER,
    };
    Failure::new(code, err)
}

fn lookup_stage(rows: &mut [DatasetRow], out: &Path, settings: &Settings, manifest: &mut RunManifest) -> CliResult<Finish> {
    let config = lookup_config(settings, out)?;
    manifest.threshold = Some(config.threshold);
    let clients = clients(settings, manifest)?;
    let mut requests = select_row_candidates(rows);
    if let Some(target) = clients.only {
        requests.retain(|r| r.target == target);
    }
    let endpoints = Endpoints {
        crossref: clients.crossref.as_ref(),
        books: clients.books.as_ref(),
    };
    log::info!("looking up {} citations in batches of {}", requests.len(), config.batch_size);
    let run = run_lookup(&requests, &endpoints, &config).map_err(lookup_failure)?;
    let augmented = if run.complete { apply_results(rows, &run.results) } else { 0 };
    println!(
        "lookup: {} requests, {} accepted, {} rejected, {} without result, {} transport errors; batch {}/{}",
        requests.len(),
        run.counts.accepted,
        run.counts.rejected,
        run.counts.no_result,
        run.counts.transport_error,
        run.resumed_batches + run.batches_this_run,
        run.batches_total
    );
    manifest.count(
        "lookup",
        json!({
            "requests": requests.len(),
            "outcomes": run.counts,
            "requests_sent": run.requests_sent,
            "batches_total": run.batches_total,
            "batches_this_run": run.batches_this_run,
            "resumed_batches": run.resumed_batches,
            "augmented_rows": augmented,
            "checkpoint_dir": config.checkpoint_dir.display().to_string(),
        }),
    );
    if run.budget_exceeded {
        return Err(Failure::new(
            EXIT_BUDGET,
            anyhow::anyhow!(
                "endpoint failure budget exceeded after {} transport errors; progress is checkpointed in {}",
                run.counts.transport_error,
                config.checkpoint_dir.display()
            ),
        ));
    }
    if !run.complete {
        println!("lookup stopped early; rerun the same command to continue from the checkpoint");
        return Ok(Finish::Incomplete);
    }
    Ok(Finish::Complete)
}

pub fn lookup(input: &Path, out: &Path, settings: &Settings, manifest: &mut RunManifest) -> CliResult<Finish> {
    let (mut rows, format) = read_dataset(input, manifest)?;
    let options = writer_options(settings, format)?;
    let finish = lookup_stage(&mut rows, out, settings, manifest)?;
    if finish == Finish::Complete {
        write_dataset(&rows, out, options, manifest)?;
    }
    Ok(finish)
}

fn report_for(path: &Path, label: &str, settings: &Settings, manifest: &mut RunManifest) -> CliResult<MetricsReport> {
    let is_json = path.is_file() && path.extension().is_some_and(|e| e == "json");
    if is_json {
        manifest.add_input(path).or_input()?;
        let text = std::fs::read_to_string(path).or_input()?;
        let mut report: MetricsReport = serde_json::from_str(&text)
            .map_err(|e| anyhow::anyhow!("{} is not a metrics report: {e}", path.display()))
            .or_input()?;
        if !label.is_empty() {
            report.snapshot = label.to_string();
        }
        return Ok(report);
    }
    let (rows, _) = read_dataset(path, manifest)?;
    let (lang, _) = metrics_labels(settings);
    Ok(compute_metrics(rows.iter().map(|r| r.actual_label), &lang, label))
}

fn default_label(path: &Path) -> String {
    let path = if path.file_name().is_some_and(|n| n == METRICS_NAME) { path.parent().unwrap_or(path) } else { path };
    path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string()
}

pub fn stats(
    inputs: &[PathBuf],
    labels: &[String],
    out: Option<&Path>,
    as_json: bool,
    settings: &Settings,
    manifest: &mut RunManifest,
) -> CliResult<Finish> {
    if !labels.is_empty() && labels.len() != inputs.len() {
        return Err(config_error(format!("{} labels given for {} inputs", labels.len(), inputs.len())));
    }
    let mut reports = Vec::with_capacity(inputs.len());
    for (i, path) in inputs.iter().enumerate() {
        let label = labels.get(i).cloned().unwrap_or_else(|| default_label(path));
        reports.push(report_for(path, &label, settings, manifest)?);
    }
    let delta = match reports.as_slice() {
        [a, b] => Some(compare_snapshots(a, b).or_input()?),
        _ => None,
    };
    let document = json!({
        "reports": reports.iter().map(MetricsReport::to_json).collect::<Vec<_>>(),
        "delta": delta,
    });
    if as_json {
        println!("{}", serde_json::to_string_pretty(&document).expect("stats serialize"));
    } else {
        print!("{}", render_table(&reports, delta.as_ref()));
    }
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).or_other()?;
        let path = dir.join("stats.json");
        let mut text = serde_json::to_string_pretty(&document).expect("stats serialize");
        text.push('\n');
        std::fs::write(&path, text).or_other()?;
        manifest.outputs.push(path.display().to_string());
    }
    manifest.count("stats", json!({ "inputs": reports.len() }));
    Ok(Finish::Complete)
}
