//! Deterministic citation labels and the news-domain set behind them.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{parse_host, PublicSuffixList};
use crate::harmonize::{Citation, IdScheme, Identifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Journal,
    Book,
    News,
    Other,
}

impl Label {
    pub const ALL: [Label; 4] = [Label::Journal, Label::Book, Label::News, Label::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Journal => "journal",
            Label::Book => "book",
            Label::News => "news",
            Label::Other => "other",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Label::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown label {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    PmcPmid,
    DoiJournalTemplate,
    Isbn,
    NewsTld,
    None,
}

impl Rule {
    pub fn label(self) -> Label {
        match self {
            Rule::PmcPmid | Rule::DoiJournalTemplate => Label::Journal,
            Rule::Isbn => Label::Book,
            Rule::NewsTld => Label::News,
            Rule::None => Label::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassLabel {
    pub label: Label,
    pub rule_fired: Rule,
}

impl From<Rule> for ClassLabel {
    fn from(rule: Rule) -> Self {
        ClassLabel {
            label: rule.label(),
            rule_fired: rule,
        }
    }
}

/// Templates whose DOI marks a journal article.
pub const DOI_JOURNAL_TEMPLATES: [&str; 3] = ["cite journal", "cite conference", "cite proceedings"];

/// Categories of a categorized list that are not news outlets.
pub const EXCLUDED_CATEGORIES: [&str; 4] = ["conspiracy-pseudo", "questionable", "satire", "science"];

/// Platforms whose list entries name an outlet's page rather than the site.
pub const SOCIAL_MEDIA_DOMAINS: [&str; 9] = [
    "facebook.com",
    "instagram.com",
    "twitter.com",
    "x.com",
    "pinterest.com",
    "youtube.com",
    "vk.com",
    "tiktok.com",
    "linkedin.com",
];

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("cannot read news-domain list {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Registrable domains of news outlets, plus page prefixes on social platforms.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NewsDomainSet {
    /// Domain to the lists it came from.
    domains: BTreeMap<String, BTreeSet<String>>,
    /// Social platform domain to lowercased page paths (no trailing slash).
    pages: BTreeMap<String, BTreeMap<String, BTreeSet<String>>>,
}

const SHIPPED_LISTS: [(&str, &str); 4] = [
    ("mediabiasfactcheck", include_str!("../data/news/mediabiasfactcheck.txt")),
    ("newspaperindex", include_str!("../data/news/newspaperindex.txt")),
    ("newsmedialists", include_str!("../data/news/newsmedialists.txt")),
    ("news_domain_labeled", include_str!("../data/news/news_domain_labeled.txt")),
];

impl NewsDomainSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Union of the snapshot lists bundled with the crate.
    pub fn shipped() -> Self {
        let mut set = Self::new();
        for (name, text) in SHIPPED_LISTS {
            set.add_list(text, name);
        }
        set
    }

    /// Add every entry of a list. A `source=` header line (optionally behind
    /// `#`) overrides `default_source`. Entries may carry a category after a
    /// tab or comma; excluded categories are skipped. Returns the number of
    /// entries accepted.
    pub fn add_list(&mut self, text: &str, default_source: &str) -> usize {
        let mut source = default_source.to_string();
        let mut accepted = 0;
        for line in text.lines() {
            let line = line.trim();
            let header = line.trim_start_matches('#').trim();
            if let Some(name) = header.strip_prefix("source=") {
                source = name.trim().to_string();
                continue;
            }
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(['\t', ',']).map(str::trim);
            let entry = fields.next().unwrap_or_default();
            if let Some(category) = fields.next() {
                if EXCLUDED_CATEGORIES.contains(&category.to_ascii_lowercase().as_str()) {
                    continue;
                }
            }
            if self.insert(entry, &source) {
                accepted += 1;
            } else {
                log::debug!("ignoring news-list entry {entry:?} from {source}");
            }
        }
        accepted
    }

    /// Normalize and insert one entry. Returns false when the entry has no
    /// registrable domain.
    pub fn insert(&mut self, entry: &str, source: &str) -> bool {
        let Some((host, path)) = parse_host(&entry.to_lowercase()) else {
            return false;
        };
        let host = host.strip_prefix("www.").unwrap_or(&host);
        let Some(domain) = PublicSuffixList::shipped().registrable_domain(host) else {
            return false;
        };
        let path = path.trim_end_matches('/');
        if SOCIAL_MEDIA_DOMAINS.contains(&domain.as_str()) && !path.is_empty() {
            self.pages
                .entry(domain)
                .or_default()
                .entry(path.to_string())
                .or_default()
                .insert(source.to_string());
        } else {
            self.domains.entry(domain).or_default().insert(source.to_string());
        }
        true
    }

    pub fn len(&self) -> usize {
        self.domains.len() + self.pages.values().map(BTreeMap::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn domain_count(&self) -> usize {
        self.domains.len()
    }

    pub fn contains_domain(&self, domain: &str) -> bool {
        self.domains.contains_key(domain)
    }

    /// Lists that contributed `domain`.
    pub fn sources_of(&self, domain: &str) -> Option<&BTreeSet<String>> {
        self.domains.get(domain)
    }

    /// All distinct list names.
    pub fn sources(&self) -> BTreeSet<&str> {
        let bare = self.domains.values().flatten();
        let paged = self.pages.values().flat_map(BTreeMap::values).flatten();
        bare.chain(paged).map(String::as_str).collect()
    }

    pub fn domains(&self) -> impl Iterator<Item = &str> {
        self.domains.keys().map(String::as_str)
    }

    /// Whether a citation URL points at a listed outlet.
    pub fn matches_url(&self, url: &str) -> bool {
        let Some((host, path)) = parse_host(url) else {
            return false;
        };
        let host = host.strip_prefix("www.").unwrap_or(&host);
        let Some(domain) = PublicSuffixList::shipped().registrable_domain(host) else {
            return false;
        };
        if self.domains.contains_key(&domain) {
            return true;
        }
        let Some(pages) = self.pages.get(&domain) else {
            return false;
        };
        let path = path.to_lowercase();
        pages.keys().any(|prefix| {
            path.strip_prefix(prefix.as_str())
                .is_some_and(|rest| rest.is_empty() || rest.starts_with('/'))
        })
    }
}

/// Union of the given list files; each file's stem is its default source name.
pub fn load_news_domains<P: AsRef<Path>>(paths: &[P]) -> Result<NewsDomainSet, ClassifyError> {
    let mut set = NewsDomainSet::new();
    for path in paths {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ClassifyError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("unnamed");
        set.add_list(&text, stem);
    }
    if set.is_empty() {
        log::warn!("news-domain set is empty; no citation will be labeled news");
    }
    Ok(set)
}

/// Label from the fields the rules look at.
pub fn classify_parts(type_of_citation: &str, url: Option<&str>, ids: &[Identifier], news: &NewsDomainSet) -> ClassLabel {
    let has = |scheme: IdScheme| ids.iter().any(|id| id.scheme == scheme);
    let rule = if has(IdScheme::Pmc) || has(IdScheme::Pmid) {
        Rule::PmcPmid
    } else if has(IdScheme::Doi) && DOI_JOURNAL_TEMPLATES.contains(&type_of_citation) {
        Rule::DoiJournalTemplate
    } else if has(IdScheme::Isbn) {
        Rule::Isbn
    } else if url.is_some_and(|u| news.matches_url(u)) {
        Rule::NewsTld
    } else {
        Rule::None
    };
    rule.into()
}

pub fn classify(c: &Citation, news: &NewsDomainSet) -> ClassLabel {
    classify_parts(&c.type_of_citation, c.url.as_deref(), &c.id_list, news)
}
