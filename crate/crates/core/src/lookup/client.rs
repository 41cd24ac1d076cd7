use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{normalize_title, Candidate, LookupRequest};
use crate::harmonize::Identifier;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SearchError {
    /// Worth retrying: timeouts, rate limiting, server errors.
    #[error("transient: {0}")]
    Transient(String),
    #[error("permanent: {0}")]
    Permanent(String),
}

/// A title search against one bibliographic database.
pub trait BibliographicSearch: Send + Sync {
    fn name(&self) -> &str;
    /// Best match for the request, if the endpoint returned anything.
    fn search(&self, request: &LookupRequest) -> Result<Option<Candidate>, SearchError>;
}

/// One record of a mock database. `query` is the title the record answers
/// to; it defaults to the record's own title.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRecord {
    #[serde(default)]
    pub query: Option<String>,
    pub title: String,
    #[serde(default)]
    pub ids: Vec<Identifier>,
}

/// Deterministic in-memory endpoint for tests and dry runs.
///
/// Every request is logged. Failures can be injected per citation key,
/// either for a number of attempts or permanently.
#[derive(Debug, Default)]
pub struct MockEndpoint {
    name: String,
    records: BTreeMap<String, Candidate>,
    log: Mutex<Vec<u64>>,
    flaky: Mutex<BTreeMap<u64, u32>>,
    broken: BTreeSet<u64>,
}

impl MockEndpoint {
    pub fn new(records: impl IntoIterator<Item = MockRecord>) -> Self {
        let records = records
            .into_iter()
            .map(|r| {
                let query = normalize_title(r.query.as_deref().unwrap_or(&r.title));
                (query, Candidate { title: r.title, ids: r.ids })
            })
            .collect();
        MockEndpoint {
            name: "mock".to_string(),
            records,
            ..Default::default()
        }
    }

    /// Load records from a JSON array file.
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let records: Vec<MockRecord> =
            serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        Ok(Self::new(records))
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    /// Fail the first `attempts` requests for `key` with a transient error.
    pub fn fail_first(self, key: u64, attempts: u32) -> Self {
        self.flaky.lock().expect("mock lock").insert(key, attempts);
        self
    }

    /// Fail every request for `key`.
    pub fn always_fail(mut self, key: u64) -> Self {
        self.broken.insert(key);
        self
    }

    /// Citation keys in the order they were requested.
    pub fn request_log(&self) -> Vec<u64> {
        self.log.lock().expect("mock lock").clone()
    }

    pub fn clear_log(&self) {
        self.log.lock().expect("mock lock").clear();
    }
}

impl BibliographicSearch for MockEndpoint {
    fn name(&self) -> &str {
        &self.name
    }

    fn search(&self, request: &LookupRequest) -> Result<Option<Candidate>, SearchError> {
        self.log.lock().expect("mock lock").push(request.citation_key);
        if self.broken.contains(&request.citation_key) {
            return Err(SearchError::Transient(format!("injected failure for {}", request.citation_key)));
        }
        if let Some(left) = self.flaky.lock().expect("mock lock").get_mut(&request.citation_key) {
            if *left > 0 {
                *left -= 1;
                return Err(SearchError::Transient(format!("injected failure for {}", request.citation_key)));
            }
        }
        Ok(self.records.get(&normalize_title(&request.title)).cloned())
    }
}

#[cfg(feature = "http")]
pub use http::{BooksClient, CrossrefClient, HttpConfig};

#[cfg(feature = "http")]
mod http {
    use std::time::Duration;

    use serde_json::Value;

    use super::{BibliographicSearch, SearchError};
    use crate::harmonize::{normalize_identifier, IdScheme, Identifier};
    use crate::lookup::{Candidate, LookupRequest};

    #[derive(Debug, Clone)]
    pub struct HttpConfig {
        /// Contact address sent to endpoints that ask for one.
        pub contact: Option<String>,
        pub api_key: Option<String>,
        pub timeout: Duration,
        pub base_url: Option<String>,
    }

    impl Default for HttpConfig {
        fn default() -> Self {
            HttpConfig {
                contact: None,
                api_key: None,
                timeout: Duration::from_secs(30),
                base_url: None,
            }
        }
    }

    fn agent(config: &HttpConfig) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .build()
            .into()
    }

    fn user_agent(config: &HttpConfig) -> String {
        match &config.contact {
            Some(contact) => format!("wikicite/{} (mailto:{contact})", env!("CARGO_PKG_VERSION")),
            None => format!("wikicite/{}", env!("CARGO_PKG_VERSION")),
        }
    }

    fn classify_error(err: ureq::Error) -> SearchError {
        match err {
            ureq::Error::StatusCode(code) if code == 429 || code >= 500 => SearchError::Transient(format!("http status {code}")),
            ureq::Error::StatusCode(code) => SearchError::Permanent(format!("http status {code}")),
            ureq::Error::Json(e) => SearchError::Permanent(format!("bad response body: {e}")),
            other => SearchError::Transient(other.to_string()),
        }
    }

    fn get_json(request: ureq::RequestBuilder<ureq::typestate::WithoutBody>) -> Result<Value, SearchError> {
        let mut response = request.call().map_err(classify_error)?;
        response.body_mut().read_json::<Value>().map_err(classify_error)
    }

    /// Crossref works search.
    pub struct CrossrefClient {
        agent: ureq::Agent,
        config: HttpConfig,
    }

    impl CrossrefClient {
        pub fn new(config: HttpConfig) -> Self {
            CrossrefClient {
                agent: agent(&config),
                config,
            }
        }
    }

    impl BibliographicSearch for CrossrefClient {
        fn name(&self) -> &str {
            "crossref"
        }

        fn search(&self, request: &LookupRequest) -> Result<Option<Candidate>, SearchError> {
            let base = self.config.base_url.as_deref().unwrap_or("https://api.crossref.org");
            let mut query = request.title.clone();
            if let Some(author) = request.authors.first() {
                query.push(' ');
                query.push_str(author);
            }
            let mut req = self
                .agent
                .get(format!("{base}/works"))
                .header("User-Agent", &user_agent(&self.config))
                .query("query.bibliographic", &query)
                .query("rows", "1")
                .query("select", "DOI,title,ISSN");
            if let Some(contact) = &self.config.contact {
                req = req.query("mailto", contact);
            }
            let body = get_json(req)?;
            let Some(item) = body.pointer("/message/items/0") else {
                return Ok(None);
            };
            let title = item.pointer("/title/0").and_then(Value::as_str).unwrap_or_default().to_string();
            let mut ids = Vec::new();
            if let Some(doi) = item.get("DOI").and_then(Value::as_str) {
                ids.push(Identifier::new(IdScheme::Doi, normalize_identifier(IdScheme::Doi, doi).value));
            }
            if let Some(issn) = item.pointer("/ISSN/0").and_then(Value::as_str) {
                ids.push(Identifier::new(IdScheme::Issn, normalize_identifier(IdScheme::Issn, issn).value));
            }
            Ok(Some(Candidate { title, ids }))
        }
    }

    /// Google Books volumes search.
    pub struct BooksClient {
        agent: ureq::Agent,
        config: HttpConfig,
    }

    impl BooksClient {
        pub fn new(config: HttpConfig) -> Self {
            BooksClient {
                agent: agent(&config),
                config,
            }
        }
    }

    impl BibliographicSearch for BooksClient {
        fn name(&self) -> &str {
            "books"
        }

        fn search(&self, request: &LookupRequest) -> Result<Option<Candidate>, SearchError> {
            let base = self.config.base_url.as_deref().unwrap_or("https://www.googleapis.com/books/v1");
            let mut q = format!("intitle:{}", request.title);
            if let Some(author) = request.authors.first() {
                q.push_str(&format!(" inauthor:{author}"));
            }
            let mut req = self
                .agent
                .get(format!("{base}/volumes"))
                .header("User-Agent", &user_agent(&self.config))
                .query("q", &q)
                .query("maxResults", "1");
            if let Some(key) = &self.config.api_key {
                req = req.query("key", key);
            }
            let body = get_json(req)?;
            let Some(info) = body.pointer("/items/0/volumeInfo") else {
                return Ok(None);
            };
            let title = info.get("title").and_then(Value::as_str).unwrap_or_default().to_string();
            let identifiers = info.get("industryIdentifiers").and_then(Value::as_array).cloned().unwrap_or_default();
            let pick = |kind: &str| {
                identifiers
                    .iter()
                    .find(|i| i.get("type").and_then(Value::as_str) == Some(kind))
                    .and_then(|i| i.get("identifier").and_then(Value::as_str))
                    .map(str::to_string)
            };
            let ids = pick("ISBN_13")
                .or_else(|| pick("ISBN_10"))
                .map(|isbn| vec![Identifier::new(IdScheme::Isbn, normalize_identifier(IdScheme::Isbn, &isbn).value)])
                .unwrap_or_default();
            Ok(Some(Candidate { title, ids }))
        }
    }
}
