//! Page-level extraction: dump pages in, labeled dataset rows out.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::classify::{classify, classify_parts, NewsDomainSet};
use crate::dump::{DumpError, WikiPage};
use crate::exec::Executor;
use crate::harmonize::{is_citation_template, translate_with_report, TableError, TranslationTable, SUPPORTED_LANGUAGES};
use crate::metrics::LabelCounts;
use crate::output::{DatasetRow, OutputError};
use crate::wikicode::{scan_page, RefDiagnostics};

/// Translation tables for every supported language.
#[derive(Debug, Clone)]
pub struct TableSet {
    tables: BTreeMap<String, TranslationTable>,
    digests: BTreeMap<String, String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl TableSet {
    pub fn shipped() -> Self {
        let mut set = TableSet {
            tables: BTreeMap::new(),
            digests: BTreeMap::new(),
        };
        for lang in SUPPORTED_LANGUAGES {
            let table = TranslationTable::shipped(lang).expect("shipped tables are valid");
            set.digests.insert(lang.to_string(), format!("shipped:{}", crate::harmonize::ENGLISH_SET_VERSION));
            set.tables.insert(lang.to_string(), table);
        }
        set
    }

    /// Shipped tables, replaced by any `<lang>.json` found in `dir`.
    pub fn with_overrides(dir: impl AsRef<Path>) -> Result<Self, TableError> {
        let dir = dir.as_ref();
        let mut set = Self::shipped();
        for lang in SUPPORTED_LANGUAGES {
            let path = dir.join(format!("{lang}.json"));
            if !path.is_file() {
                continue;
            }
            let bytes = std::fs::read(&path).map_err(|source| TableError::Io {
                path: path.display().to_string(),
                source,
            })?;
            let text = String::from_utf8_lossy(&bytes);
            set.tables.insert(lang.to_string(), TranslationTable::from_json(lang, &text)?);
            set.digests.insert(lang.to_string(), sha256_hex(&bytes));
        }
        Ok(set)
    }

    pub fn get(&self, language: &str) -> Option<&TranslationTable> {
        self.tables.get(language)
    }

    /// Per-language content digest, or `shipped:<version>` for built-in tables.
    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.digests
    }
}

/// What one page contributed.
#[derive(Debug, Clone, Default)]
pub struct PageOutput {
    pub rows: Vec<DatasetRow>,
    pub templates_seen: u64,
    /// Local citation template name to occurrences.
    pub citation_templates: BTreeMap<String, u64>,
    pub diagnostics: RefDiagnostics,
    pub unmapped_keys: u64,
}

/// Citations of one page as labeled rows, in source order.
pub fn process_page(page: &WikiPage, table: &TranslationTable, news: &NewsDomainSet, refs_only: bool) -> PageOutput {
    let scan = scan_page(&page.wikitext);
    let mut out = PageOutput {
        templates_seen: scan.templates.len() as u64,
        diagnostics: scan.diagnostics,
        ..Default::default()
    };
    for template in &scan.templates {
        if !is_citation_template(template, table) || (refs_only && !template.inside_ref) {
            continue;
        }
        let (citation, report) = translate_with_report(template, page, table);
        *out.citation_templates.entry(template.name.clone()).or_default() += 1;
        out.unmapped_keys += report.unmapped_keys.len() as u64;
        let label = classify(&citation, news);
        out.rows.push(DatasetRow::from_citation(&citation, label.label));
    }
    out
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LanguageSummary {
    pub pages: u64,
    pub templates: u64,
    pub citations: u64,
    pub template_frequency: BTreeMap<String, u64>,
}

impl LanguageSummary {
    /// The `n` most used citation templates, ties broken by name.
    pub fn top_templates(&self, n: usize) -> Vec<(&str, u64)> {
        let mut all: Vec<(&str, u64)> = self.template_frequency.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        all.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        all.truncate(n);
        all
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ExtractSummary {
    pub pages: u64,
    pub templates: u64,
    pub rows: u64,
    pub unmapped_keys: u64,
    pub unterminated_refs: u64,
    pub reused_refs: u64,
    pub malformed_refs: u64,
    pub labels: LabelCounts,
    pub languages: BTreeMap<String, LanguageSummary>,
}

impl ExtractSummary {
    fn absorb(&mut self, language: &str, page: &PageOutput) {
        self.pages += 1;
        self.templates += page.templates_seen;
        self.rows += page.rows.len() as u64;
        self.unmapped_keys += page.unmapped_keys;
        self.unterminated_refs += page.diagnostics.unterminated as u64;
        self.reused_refs += page.diagnostics.reused as u64;
        self.malformed_refs += page.diagnostics.malformed as u64;
        page.rows.iter().for_each(|r| self.labels.add(r.actual_label));
        let lang = self.languages.entry(language.to_string()).or_default();
        lang.pages += 1;
        lang.templates += page.templates_seen;
        lang.citations += page.rows.len() as u64;
        for (name, count) in &page.citation_templates {
            *lang.template_frequency.entry(name.clone()).or_default() += count;
        }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Dump(#[from] DumpError),
    #[error("page {title:?}: no translation table for language {language:?}")]
    UnsupportedLanguage { title: String, language: String },
    #[error("page {0:?}: language unknown; set it explicitly")]
    UnknownLanguage(String),
    #[error(transparent)]
    Output(#[from] OutputError),
}

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    /// Language of every page, overriding what the dump declares.
    pub language: Option<String>,
    /// Pages handed to the executor at once.
    pub chunk_pages: usize,
    /// Keep only templates inside `<ref>` elements.
    pub refs_only: bool,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            language: None,
            chunk_pages: 256,
            refs_only: false,
        }
    }
}

pub struct Extractor<'a> {
    pub tables: &'a TableSet,
    pub news: &'a NewsDomainSet,
    pub executor: &'a Executor,
    pub options: ExtractOptions,
}

impl Extractor<'_> {
    fn table_for(&self, page: &WikiPage) -> Result<&TranslationTable, PipelineError> {
        let language = self
            .options
            .language
            .as_deref()
            .or(page.language.as_deref())
            .ok_or_else(|| PipelineError::UnknownLanguage(page.title.clone()))?;
        self.tables.get(language).ok_or_else(|| PipelineError::UnsupportedLanguage {
            title: page.title.clone(),
            language: language.to_string(),
        })
    }

    fn flush<F>(&self, chunk: &mut Vec<WikiPage>, summary: &mut ExtractSummary, sink: &mut F) -> Result<(), PipelineError>
    where
        F: FnMut(DatasetRow) -> Result<(), OutputError>,
    {
        let tables = chunk
            .iter()
            .map(|page| self.table_for(page))
            .collect::<Result<Vec<_>, _>>()?;
        let work: Vec<(&WikiPage, &TranslationTable)> = chunk.iter().zip(tables).collect();
        let outputs = self
            .executor
            .map(&work, |(page, table)| process_page(page, table, self.news, self.options.refs_only));
        for ((_, table), output) in work.iter().zip(outputs) {
            summary.absorb(&table.language, &output);
            for row in output.rows {
                sink(row)?;
            }
        }
        chunk.clear();
        Ok(())
    }

    /// Process pages in order, handing every row to `sink` in page order.
    pub fn run<I, F>(&self, pages: I, mut sink: F) -> Result<ExtractSummary, PipelineError>
    where
        I: IntoIterator<Item = Result<WikiPage, DumpError>>,
        F: FnMut(DatasetRow) -> Result<(), OutputError>,
    {
        let chunk_size = self.options.chunk_pages.max(1);
        let mut summary = ExtractSummary::default();
        let mut chunk = Vec::with_capacity(chunk_size);
        for page in pages {
            chunk.push(page?);
            if chunk.len() >= chunk_size {
                self.flush(&mut chunk, &mut summary, &mut sink)?;
            }
        }
        self.flush(&mut chunk, &mut summary, &mut sink)?;
        Ok(summary)
    }
}

/// Recompute labels of existing rows. Applying it twice changes nothing.
pub fn relabel(rows: &mut [DatasetRow], news: &NewsDomainSet, executor: &Executor) {
    let labels = executor.map(rows, |r| {
        classify_parts(&r.type_of_citation, r.url.as_deref(), &r.id_list, news).label
    });
    for (row, label) in rows.iter_mut().zip(labels) {
        row.actual_label = label;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::Label;

    fn page(lang: &str, title: &str, text: &str) -> WikiPage {
        WikiPage {
            title: title.into(),
            namespace: 0,
            page_id: 1,
            wikitext: text.into(),
            language: Some(lang.into()),
        }
    }

    #[test]
    fn mixed_page_keeps_only_citations() {
        let text = "{{Infobox person|name=A}} x<ref>{{cite web|url=https://www.bbc.co.uk/a|title=A}}</ref> \
                    {{cite book|title=B|isbn=978-3-16-148410-0}} {{reflist}} {{cite journal|title=C|pmid=1}}";
        let tables = TableSet::shipped();
        let out = process_page(&page("en", "P", text), tables.get("en").unwrap(), &NewsDomainSet::shipped(), false);
        assert_eq!(out.templates_seen, 5);
        let labels: Vec<Label> = out.rows.iter().map(|r| r.actual_label).collect();
        assert_eq!(labels, [Label::News, Label::Book, Label::Journal]);
        assert_eq!(out.rows[0].tld.as_deref(), Some("bbc"));
    }

    #[test]
    fn language_must_be_known() {
        let tables = TableSet::shipped();
        let news = NewsDomainSet::new();
        let exec = Executor::sequential();
        let ex = Extractor {
            tables: &tables,
            news: &news,
            executor: &exec,
            options: ExtractOptions::default(),
        };
        let mut p = page("xx", "P", "");
        assert!(matches!(
            ex.run([Ok(p.clone())], |_| Ok(())),
            Err(PipelineError::UnsupportedLanguage { .. })
        ));
        p.language = None;
        assert!(matches!(ex.run([Ok(p)], |_| Ok(())), Err(PipelineError::UnknownLanguage(_))));
    }

    #[test]
    fn relabel_is_idempotent() {
        let tables = TableSet::shipped();
        let news = NewsDomainSet::shipped();
        let text = "{{cite news|url=https://www.lemonde.fr/x|title=T}}{{cite web|url=https://example.org|title=U}}";
        let mut rows = process_page(&page("en", "P", text), tables.get("en").unwrap(), &news, false).rows;
        let before = rows.clone();
        relabel(&mut rows, &news, &Executor::sequential());
        assert_eq!(rows, before);
    }
}
