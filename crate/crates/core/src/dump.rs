//! Streaming reader for MediaWiki `pages-articles` XML exports.
//!
//! Pages are pulled one at a time; the reader never holds more than the
//! current page's text. Plain and bzip2 input (including multistream files)
//! is supported. Several `<mediawiki>` documents concatenated into one stream
//! are read in sequence, each page tagged with the `xml:lang` of its document.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;

use bzip2::bufread::MultiBzDecoder;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use thiserror::Error;

/// One article from the dump. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WikiPage {
    pub title: String,
    pub namespace: i64,
    pub page_id: u64,
    /// Raw Wikicode of the revision in the dump. May be empty.
    pub wikitext: String,
    /// Language of the enclosing `<mediawiki>` document, if declared.
    pub language: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DumpStats {
    pub pages_seen: u64,
    pub pages_in_article_namespace: u64,
    /// Uncompressed XML bytes consumed so far.
    pub bytes_read: u64,
    /// Malformed pages dropped in skip mode.
    pub pages_skipped: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Compression {
    None,
    Bz2,
    #[default]
    Auto,
}

impl std::str::FromStr for Compression {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Compression::None),
            "bz2" => Ok(Compression::Bz2),
            "auto" => Ok(Compression::Auto),
            other => Err(format!("unknown compression {other:?} (expected none, bz2 or auto)")),
        }
    }
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("cannot read dump {path}: {source}")]
    Open { path: String, source: io::Error },
    #[error("malformed XML at byte {offset} in {element}: {message}")]
    Xml {
        offset: u64,
        element: String,
        message: String,
    },
    #[error("malformed page at byte {offset} in {element}: {message}")]
    Page {
        offset: u64,
        element: String,
        message: String,
    },
    #[error("page {title:?} has more than one revision; full-history dumps are not supported, use a pages-articles dump")]
    FullHistory { title: String },
}

#[derive(Debug, Clone, Copy, Default)]
pub struct DumpOptions {
    pub compression: Compression,
    /// Log and drop malformed pages instead of failing.
    pub skip_bad_pages: bool,
}

pub type PageStream = DumpReader<Box<dyn BufRead + Send>>;

/// Open a dump file for streaming.
pub fn open_dump(path: impl AsRef<Path>, options: DumpOptions) -> Result<PageStream, DumpError> {
    let path = path.as_ref();
    let open_err = |source| DumpError::Open {
        path: path.display().to_string(),
        source,
    };
    let file = File::open(path).map_err(open_err)?;
    let mut buffered = BufReader::with_capacity(1 << 16, file);
    let compression = match options.compression {
        Compression::Auto => {
            let head = buffered.fill_buf().map_err(open_err)?;
            if head.starts_with(b"BZh") || path.extension().is_some_and(|e| e == "bz2") {
                Compression::Bz2
            } else {
                Compression::None
            }
        }
        explicit => explicit,
    };
    let source: Box<dyn BufRead + Send> = match compression {
        Compression::Bz2 => Box::new(BufReader::with_capacity(1 << 16, MultiBzDecoder::new(buffered))),
        _ => Box::new(buffered),
    };
    Ok(DumpReader::new(source, options.skip_bad_pages))
}

#[derive(Debug, Default)]
struct PartialPage {
    title: Option<String>,
    namespace: Option<String>,
    id: Option<String>,
    text: Option<String>,
    revisions: u32,
}

/// Pull-based page iterator over any buffered XML source.
pub struct DumpReader<R: BufRead> {
    reader: Reader<R>,
    buf: Vec<u8>,
    path: Vec<String>,
    language: Option<String>,
    stats: DumpStats,
    skip_bad_pages: bool,
    done: bool,
}

enum Capture {
    Title,
    Namespace,
    Id,
    Text,
    DbName,
}

impl<R: BufRead> DumpReader<R> {
    pub fn new(source: R, skip_bad_pages: bool) -> Self {
        let mut reader = Reader::from_reader(source);
        reader.config_mut().trim_text(false);
        DumpReader {
            reader,
            buf: Vec::with_capacity(1 << 14),
            path: Vec::new(),
            language: None,
            stats: DumpStats::default(),
            skip_bad_pages,
            done: false,
        }
    }

    pub fn stats(&self) -> DumpStats {
        let mut stats = self.stats;
        stats.bytes_read = self.reader.buffer_position();
        stats
    }

    fn element_path(&self) -> String {
        if self.path.is_empty() {
            "/".to_string()
        } else {
            self.path.join("/")
        }
    }

    fn xml_error(&self, message: impl ToString) -> DumpError {
        DumpError::Xml {
            offset: self.reader.error_position(),
            element: self.element_path(),
            message: message.to_string(),
        }
    }

    fn page_error(&self, message: impl ToString) -> DumpError {
        DumpError::Page {
            offset: self.reader.buffer_position(),
            element: self.element_path(),
            message: message.to_string(),
        }
    }

    fn language_attr(start: &BytesStart) -> Option<String> {
        start
            .try_get_attribute("xml:lang")
            .ok()
            .flatten()
            .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
            .filter(|v| !v.is_empty())
    }

    /// Reads events until a complete page is assembled or the input ends.
    /// With `resumed`, the `<page>` start tag has already been consumed.
    fn read_page(&mut self, resumed: bool) -> Result<Option<WikiPage>, DumpError> {
        let mut page: Option<PartialPage> = resumed.then(PartialPage::default);
        let mut capture: Option<Capture> = None;
        let mut text = String::new();
        loop {
            self.buf.clear();
            let event = match self.reader.read_event_into(&mut self.buf) {
                Ok(event) => event,
                Err(e) => return Err(self.xml_error(e)),
            };
            match event {
                Event::Start(start) => {
                    let name = String::from_utf8_lossy(start.name().as_ref()).into_owned();
                    let parent = self.path.last().map(String::as_str);
                    match (parent, name.as_str()) {
                        (_, "mediawiki") => {
                            self.language = Self::language_attr(&start);
                        }
                        (Some("mediawiki"), "page") => page = Some(PartialPage::default()),
                        (Some("page"), "title") => capture = Some(Capture::Title),
                        (Some("page"), "ns") => capture = Some(Capture::Namespace),
                        (Some("page"), "id") => capture = Some(Capture::Id),
                        (Some("page"), "revision") => {
                            if let Some(p) = page.as_mut() {
                                p.revisions += 1;
                                if p.revisions > 1 {
                                    return Err(DumpError::FullHistory {
                                        title: p.title.clone().unwrap_or_default(),
                                    });
                                }
                            }
                        }
                        (Some("revision"), "text") => capture = Some(Capture::Text),
                        (Some("siteinfo"), "dbname") => capture = Some(Capture::DbName),
                        _ => {}
                    }
                    text.clear();
                    self.path.push(name);
                }
                Event::Empty(start) => {
                    let parent = self.path.last().map(String::as_str);
                    if parent == Some("revision") && start.name().as_ref() == b"text" {
                        if let Some(p) = page.as_mut() {
                            p.text = Some(String::new());
                        }
                    }
                }
                Event::Text(t) => {
                    if capture.is_some() {
                        match t.unescape() {
                            Ok(s) => text.push_str(&s),
                            Err(e) => return Err(self.xml_error(e)),
                        }
                    }
                }
                Event::CData(c) => {
                    if capture.is_some() {
                        text.push_str(&String::from_utf8_lossy(&c.into_inner()));
                    }
                }
                Event::End(end) => {
                    let name = end.name();
                    if let Some(what) = capture.take() {
                        let value = std::mem::take(&mut text);
                        match what {
                            Capture::DbName => {
                                if self.language.is_none() {
                                    self.language = value.strip_suffix("wiki").map(str::to_string);
                                }
                            }
                            other => {
                                if let Some(p) = page.as_mut() {
                                    match other {
                                        Capture::Title => p.title = Some(value),
                                        Capture::Namespace => p.namespace = Some(value),
                                        Capture::Id => p.id = Some(value),
                                        Capture::Text => p.text = Some(value),
                                        Capture::DbName => unreachable!(),
                                    }
                                }
                            }
                        }
                    }
                    let is_page = name.as_ref() == b"page" && self.path.len() == 2;
                    self.path.pop();
                    if is_page {
                        if let Some(partial) = page.take() {
                            self.path.push("page".to_string());
                            let built = self.finish_page(partial);
                            self.path.pop();
                            return built.map(Some);
                        }
                    }
                }
                Event::Eof => {
                    if page.is_some() || !self.path.is_empty() {
                        return Err(self.xml_error("unexpected end of input"));
                    }
                    return Ok(None);
                }
                _ => {}
            }
        }
    }

    fn finish_page(&mut self, partial: PartialPage) -> Result<WikiPage, DumpError> {
        self.stats.pages_seen += 1;
        let title = partial.title.unwrap_or_default();
        if title.trim().is_empty() {
            return Err(self.page_error("page has no title"));
        }
        let namespace = match partial.namespace.as_deref().map(str::trim) {
            Some(ns) => ns
                .parse::<i64>()
                .map_err(|_| self.page_error(format!("page {title:?} has non-integer namespace {ns:?}")))?,
            None => return Err(self.page_error(format!("page {title:?} has no namespace"))),
        };
        let page_id = match partial.id.as_deref().map(str::trim) {
            Some(id) => id
                .parse::<u64>()
                .map_err(|_| self.page_error(format!("page {title:?} has non-integer id {id:?}")))?,
            None => return Err(self.page_error(format!("page {title:?} has no id"))),
        };
        if namespace == 0 {
            self.stats.pages_in_article_namespace += 1;
        }
        Ok(WikiPage {
            title,
            namespace,
            page_id,
            wikitext: partial.text.unwrap_or_default(),
            language: self.language.clone(),
        })
    }

    /// Drops events until the next `<page>` start after a syntax error.
    /// Returns false when the input ended first.
    fn resync(&mut self) -> Result<bool, DumpError> {
        let mut last_position = self.reader.buffer_position();
        let mut stalled = 0;
        loop {
            self.buf.clear();
            match self.reader.read_event_into(&mut self.buf) {
                Ok(Event::Start(start)) if start.name().as_ref() == b"page" => {
                    self.path = vec!["mediawiki".to_string(), "page".to_string()];
                    return Ok(true);
                }
                Ok(Event::Eof) => {
                    self.path.clear();
                    return Ok(false);
                }
                Ok(_) => {}
                Err(e) => {
                    let position = self.reader.buffer_position();
                    if position == last_position {
                        stalled += 1;
                        if stalled > 8 {
                            return Err(self.xml_error(e));
                        }
                    }
                    last_position = position;
                }
            }
        }
    }
}

impl<R: BufRead> Iterator for DumpReader<R> {
    type Item = Result<WikiPage, DumpError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut resumed = false;
        while !self.done {
            match self.read_page(resumed) {
                Ok(Some(page)) => return Some(Ok(page)),
                Ok(None) => self.done = true,
                Err(err @ DumpError::FullHistory { .. }) => {
                    self.done = true;
                    return Some(Err(err));
                }
                Err(err) if self.skip_bad_pages => {
                    log::warn!("skipping malformed page: {err}");
                    self.stats.pages_skipped += 1;
                    resumed = false;
                    if matches!(err, DumpError::Xml { .. }) {
                        match self.resync() {
                            Ok(true) => resumed = true,
                            Ok(false) => self.done = true,
                            Err(fatal) => {
                                self.done = true;
                                return Some(Err(fatal));
                            }
                        }
                    }
                }
                Err(err) => {
                    self.done = true;
                    return Some(Err(err));
                }
            }
        }
        None
    }
}

/// Redirect directives, compared case-insensitively at the start of a body.
#[derive(Debug, Clone)]
pub struct RedirectMatcher {
    keywords: Vec<String>,
}

/// Redirect magic words of the supported editions.
pub const DEFAULT_REDIRECT_KEYWORDS: &[&str] = &[
    "#redirect",
    "#weiterleitung",
    "#redirection",
    "#перенаправление",
    "#перенапр",
    "#redirección",
    "#rinvia",
    "#rinvio",
    "#przekieruj",
    "#tam",
    "#patrz",
    "#redirecionamento",
    "#redir",
    "#doorverwijzing",
    "#omdirigering",
    "#redirecció",
    "#uudelleenohjaus",
    "#ohjaus",
    "#yönlendirme",
    "#yönlendi̇rme",
    "#yönlendir",
    "#viderestilling",
];

impl Default for RedirectMatcher {
    fn default() -> Self {
        RedirectMatcher::new(DEFAULT_REDIRECT_KEYWORDS.iter().copied())
    }
}

impl RedirectMatcher {
    pub fn new<S: AsRef<str>>(keywords: impl IntoIterator<Item = S>) -> Self {
        RedirectMatcher {
            keywords: keywords.into_iter().map(|k| k.as_ref().to_lowercase()).collect(),
        }
    }

    pub fn is_redirect(&self, wikitext: &str) -> bool {
        let body = wikitext.trim_start();
        self.keywords.iter().any(|keyword| {
            let n = keyword.chars().count();
            let head: String = body.chars().take(n).collect();
            head.to_lowercase() == *keyword
        })
    }
}

/// Passes only namespace-0 pages that are not redirects. Errors pass through.
pub struct ArticleFilter<I> {
    inner: I,
    redirects: RedirectMatcher,
    pub redirects_dropped: u64,
}

pub fn filter_articles<I>(pages: I, redirects: RedirectMatcher) -> ArticleFilter<I>
where
    I: Iterator<Item = Result<WikiPage, DumpError>>,
{
    ArticleFilter {
        inner: pages,
        redirects,
        redirects_dropped: 0,
    }
}

impl<I> ArticleFilter<I> {
    pub fn inner(&self) -> &I {
        &self.inner
    }
}

impl<I> Iterator for ArticleFilter<I>
where
    I: Iterator<Item = Result<WikiPage, DumpError>>,
{
    type Item = Result<WikiPage, DumpError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.inner.next()? {
                Ok(page) if page.namespace != 0 => continue,
                Ok(page) if self.redirects.is_redirect(&page.wikitext) => {
                    self.redirects_dropped += 1;
                    continue;
                }
                other => return Some(other),
            }
        }
    }
}

/// Plain reader helper for callers holding XML in memory.
pub fn read_pages<R: Read>(source: R) -> DumpReader<BufReader<R>> {
    DumpReader::new(BufReader::new(source), false)
}
