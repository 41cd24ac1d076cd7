//! Host parsing and registrable-domain lookup against the public suffix list.

use std::collections::HashSet;
use std::path::Path;
use std::sync::OnceLock;

use url::{Host, Url};

const SHIPPED_LIST: &str = include_str!("../data/public_suffix_list.dat");

/// ICANN section of the public suffix list.
#[derive(Debug, Default)]
pub struct PublicSuffixList {
    normal: HashSet<String>,
    /// Base of `*.base` rules.
    wildcard: HashSet<String>,
    /// Rule text of `!rule` entries.
    exception: HashSet<String>,
}

impl PublicSuffixList {
    /// Parse list text. Reading stops at the end of the ICANN section when
    /// the section markers are present.
    pub fn parse(text: &str) -> Self {
        let mut list = PublicSuffixList::default();
        for line in text.lines() {
            let line = line.trim();
            if line.contains("===END ICANN DOMAINS===") {
                break;
            }
            if line.is_empty() || line.starts_with("//") {
                continue;
            }
            let rule = line.split_whitespace().next().unwrap_or_default();
            if let Some(rest) = rule.strip_prefix('!') {
                if let Some(ascii) = to_ascii(rest) {
                    list.exception.insert(ascii);
                }
            } else if let Some(rest) = rule.strip_prefix("*.") {
                if let Some(ascii) = to_ascii(rest) {
                    list.wildcard.insert(ascii);
                }
            } else if let Some(ascii) = to_ascii(rule) {
                list.normal.insert(ascii);
            }
        }
        list
    }

    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn shipped() -> &'static PublicSuffixList {
        static LIST: OnceLock<PublicSuffixList> = OnceLock::new();
        LIST.get_or_init(|| PublicSuffixList::parse(SHIPPED_LIST))
    }

    pub fn rule_count(&self) -> usize {
        self.normal.len() + self.wildcard.len() + self.exception.len()
    }

    /// Number of trailing labels forming the public suffix of `labels`.
    fn suffix_len(&self, labels: &[&str]) -> usize {
        let n = labels.len();
        for i in 0..n {
            if self.exception.contains(&labels[i..].join(".")) {
                return n - i - 1;
            }
        }
        for i in 0..n {
            if self.normal.contains(&labels[i..].join(".")) {
                return n - i;
            }
            if i + 1 < n && self.wildcard.contains(&labels[i + 1..].join(".")) {
                return n - i;
            }
        }
        1
    }

    /// Registrable domain (public suffix plus one label) of an ASCII host.
    pub fn registrable_domain(&self, host: &str) -> Option<String> {
        let host = host.trim_end_matches('.').to_ascii_lowercase();
        if host.is_empty() {
            return None;
        }
        let labels: Vec<&str> = host.split('.').collect();
        if labels.iter().any(|l| l.is_empty()) {
            return None;
        }
        let suffix = self.suffix_len(&labels);
        if labels.len() <= suffix {
            return None;
        }
        Some(labels[labels.len() - suffix - 1..].join("."))
    }
}

fn to_ascii(domain: &str) -> Option<String> {
    if domain.is_ascii() {
        return Some(domain.to_ascii_lowercase());
    }
    idna::domain_to_ascii(domain).ok()
}

/// Host and path of a URL-ish string. Accepts scheme-less (`bbc.co.uk/news`)
/// and protocol-relative (`//bbc.co.uk`) forms; rejects IP hosts.
pub fn parse_host(text: &str) -> Option<(String, String)> {
    let text = text.trim();
    if text.is_empty() || text.chars().any(char::is_whitespace) {
        return None;
    }
    let url = match Url::parse(text) {
        Ok(url) => url,
        Err(url::ParseError::RelativeUrlWithoutBase) => {
            if let Some(rest) = text.strip_prefix("//") {
                Url::parse(&format!("https://{rest}")).ok()?
            } else {
                let first = text.split('/').next().unwrap_or_default();
                if !first.contains('.') {
                    return None;
                }
                Url::parse(&format!("http://{text}")).ok()?
            }
        }
        Err(_) => return None,
    };
    match url.host()? {
        Host::Domain(domain) => Some((domain.to_ascii_lowercase(), url.path().to_string())),
        _ => None,
    }
}

/// Registrable domain of a URL, `www.` ignored.
pub fn registrable_domain_of_url(url: &str, psl: &PublicSuffixList) -> Option<String> {
    let (host, _) = parse_host(url)?;
    let host = host.strip_prefix("www.").unwrap_or(&host);
    psl.registrable_domain(host)
}

/// Label immediately left of the public suffix, e.g. `bbc` for
/// `https://www.bbc.co.uk/`. Internationalized labels come back in Unicode.
pub fn extract_tld(url: &str) -> Option<String> {
    extract_tld_with(url, PublicSuffixList::shipped())
}

pub fn extract_tld_with(url: &str, psl: &PublicSuffixList) -> Option<String> {
    let domain = registrable_domain_of_url(url, psl)?;
    let label = domain.split('.').next()?;
    let (unicode, result) = idna::domain_to_unicode(label);
    Some(if result.is_ok() { unicode } else { label.to_string() })
}
