use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Persistent identifier schemes recognized in citation templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum IdScheme {
    Doi,
    Pmid,
    Pmc,
    Isbn,
    Issn,
    Jstor,
    Bibcode,
    Arxiv,
    Oclc,
    Lccn,
    Ssrn,
    Ol,
    Osti,
    Mr,
    Zbl,
    Asin,
    Rfc,
    Ismn,
    Jfm,
    Usenetid,
    Sici,
}

impl IdScheme {
    pub const ALL: [IdScheme; 21] = [
        IdScheme::Doi,
        IdScheme::Pmid,
        IdScheme::Pmc,
        IdScheme::Isbn,
        IdScheme::Issn,
        IdScheme::Jstor,
        IdScheme::Bibcode,
        IdScheme::Arxiv,
        IdScheme::Oclc,
        IdScheme::Lccn,
        IdScheme::Ssrn,
        IdScheme::Ol,
        IdScheme::Osti,
        IdScheme::Mr,
        IdScheme::Zbl,
        IdScheme::Asin,
        IdScheme::Rfc,
        IdScheme::Ismn,
        IdScheme::Jfm,
        IdScheme::Usenetid,
        IdScheme::Sici,
    ];

    /// Lowercase template parameter name carrying this identifier.
    pub fn key(self) -> &'static str {
        match self {
            IdScheme::Doi => "doi",
            IdScheme::Pmid => "pmid",
            IdScheme::Pmc => "pmc",
            IdScheme::Isbn => "isbn",
            IdScheme::Issn => "issn",
            IdScheme::Jstor => "jstor",
            IdScheme::Bibcode => "bibcode",
            IdScheme::Arxiv => "arxiv",
            IdScheme::Oclc => "oclc",
            IdScheme::Lccn => "lccn",
            IdScheme::Ssrn => "ssrn",
            IdScheme::Ol => "ol",
            IdScheme::Osti => "osti",
            IdScheme::Mr => "mr",
            IdScheme::Zbl => "zbl",
            IdScheme::Asin => "asin",
            IdScheme::Rfc => "rfc",
            IdScheme::Ismn => "ismn",
            IdScheme::Jfm => "jfm",
            IdScheme::Usenetid => "usenetid",
            IdScheme::Sici => "sici",
        }
    }

    pub fn from_key(key: &str) -> Option<IdScheme> {
        IdScheme::ALL.into_iter().find(|s| s.key() == key)
    }

    pub fn label(self) -> &'static str {
        match self {
            IdScheme::Doi => "DOI",
            IdScheme::Pmid => "PMID",
            IdScheme::Pmc => "PMC",
            IdScheme::Isbn => "ISBN",
            IdScheme::Issn => "ISSN",
            IdScheme::Jstor => "JSTOR",
            IdScheme::Bibcode => "BIBCODE",
            IdScheme::Arxiv => "ARXIV",
            IdScheme::Oclc => "OCLC",
            IdScheme::Lccn => "LCCN",
            IdScheme::Ssrn => "SSRN",
            IdScheme::Ol => "OL",
            IdScheme::Osti => "OSTI",
            IdScheme::Mr => "MR",
            IdScheme::Zbl => "ZBL",
            IdScheme::Asin => "ASIN",
            IdScheme::Rfc => "RFC",
            IdScheme::Ismn => "ISMN",
            IdScheme::Jfm => "JFM",
            IdScheme::Usenetid => "USENETID",
            IdScheme::Sici => "SICI",
        }
    }
}

impl fmt::Display for IdScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for IdScheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        IdScheme::from_key(&s.to_ascii_lowercase()).ok_or_else(|| format!("unknown identifier scheme {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Identifier {
    pub scheme: IdScheme,
    pub value: String,
}

impl Identifier {
    pub fn new(scheme: IdScheme, value: impl Into<String>) -> Self {
        Identifier {
            scheme,
            value: value.into(),
        }
    }
}

/// Result of identifier normalization. Invalid values are kept, only flagged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizedId {
    pub value: String,
    pub valid: bool,
}

fn strip_prefix_ignore_case<'a>(s: &'a str, prefix: &str) -> Option<&'a str> {
    let head = s.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| &s[prefix.len()..])
}

pub fn normalize_identifier(scheme: IdScheme, raw: &str) -> NormalizedId {
    let raw = raw.trim();
    match scheme {
        IdScheme::Isbn => {
            let body = strip_prefix_ignore_case(raw, "isbn").map_or(raw, |r| r.trim_start_matches([':', ' ']));
            let value: String = body
                .chars()
                .filter(|c| !matches!(c, '-' | ' ' | '\u{2010}' | '\u{2011}' | '\u{2013}'))
                .map(|c| c.to_ascii_uppercase())
                .collect();
            let valid = isbn_checksum_ok(&value);
            NormalizedId { value, valid }
        }
        IdScheme::Doi => {
            let mut body = raw;
            for prefix in ["https://doi.org/", "http://doi.org/", "https://dx.doi.org/", "http://dx.doi.org/", "doi:"] {
                if let Some(rest) = strip_prefix_ignore_case(body, prefix) {
                    body = rest.trim_start();
                    break;
                }
            }
            let value = body.to_lowercase();
            let valid = value.starts_with("10.") && value.contains('/');
            NormalizedId { value, valid }
        }
        IdScheme::Pmid => digits_only(raw),
        IdScheme::Pmc => digits_only(strip_prefix_ignore_case(raw, "pmc").unwrap_or(raw)),
        IdScheme::Issn => {
            let value = raw.replace(' ', "").to_ascii_uppercase();
            let valid = issn_checksum_ok(&value);
            NormalizedId { value, valid }
        }
        IdScheme::Arxiv => {
            let value = strip_prefix_ignore_case(raw, "arxiv:").unwrap_or(raw).trim().to_string();
            let valid = !value.is_empty();
            NormalizedId { value, valid }
        }
        _ => NormalizedId {
            value: raw.to_string(),
            valid: !raw.is_empty(),
        },
    }
}

fn digits_only(raw: &str) -> NormalizedId {
    let value: String = raw.chars().filter(char::is_ascii_digit).collect();
    let valid = !value.is_empty() && raw.trim().chars().all(|c| c.is_ascii_digit());
    NormalizedId { value, valid }
}

fn isbn_checksum_ok(isbn: &str) -> bool {
    let chars: Vec<char> = isbn.chars().collect();
    match chars.len() {
        10 => {
            let mut sum = 0u32;
            for (i, &c) in chars.iter().enumerate() {
                let digit = match c {
                    '0'..='9' => c as u32 - '0' as u32,
                    'X' if i == 9 => 10,
                    _ => return false,
                };
                sum += (10 - i as u32) * digit;
            }
            sum.is_multiple_of(11)
        }
        13 => {
            let mut sum = 0u32;
            for (i, &c) in chars.iter().enumerate() {
                let Some(digit) = c.to_digit(10) else {
                    return false;
                };
                sum += if i % 2 == 0 { digit } else { 3 * digit };
            }
            sum.is_multiple_of(10)
        }
        _ => false,
    }
}

fn issn_checksum_ok(issn: &str) -> bool {
    let compact: Vec<char> = issn.chars().filter(|&c| c != '-').collect();
    if compact.len() != 8 {
        return false;
    }
    let mut sum = 0u32;
    for (i, &c) in compact.iter().enumerate() {
        let digit = match c {
            '0'..='9' => c as u32 - '0' as u32,
            'X' if i == 7 => 10,
            _ => return false,
        };
        sum += (8 - i as u32) * digit;
    }
    sum.is_multiple_of(11)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Check digit computed from scratch for the first 12 digits.
    fn isbn13_check_digit(first12: &str) -> u32 {
        let weighted: u32 = first12
            .bytes()
            .enumerate()
            .map(|(i, b)| (b - b'0') as u32 * if i % 2 == 0 { 1 } else { 3 })
            .sum();
        (10 - weighted % 10) % 10
    }

    #[test]
    fn isbn_hyphens_stripped_and_checked() {
        assert_eq!(isbn13_check_digit("978316148410"), 0);
        let n = normalize_identifier(IdScheme::Isbn, "978-3-16-148410-0");
        assert_eq!(n.value, "9783161484100");
        assert!(n.valid);
    }

    #[test]
    fn isbn10_with_x() {
        let n = normalize_identifier(IdScheme::Isbn, "0-8044-2957-x");
        assert_eq!(n.value, "080442957X");
        assert!(n.valid);
    }

    #[test]
    fn invalid_isbn_kept_but_flagged() {
        let n = normalize_identifier(IdScheme::Isbn, "978-3-16-148410-1");
        assert_eq!(n.value, "9783161484101");
        assert!(!n.valid);
    }

    #[test]
    fn doi_prefixes() {
        assert_eq!(normalize_identifier(IdScheme::Doi, "https://doi.org/10.1000/182").value, "10.1000/182");
        assert_eq!(normalize_identifier(IdScheme::Doi, "doi:10.1000/ABC").value, "10.1000/abc");
        assert!(normalize_identifier(IdScheme::Doi, "10.1000/182").valid);
        assert!(!normalize_identifier(IdScheme::Doi, "junk").valid);
    }

    #[test]
    fn pubmed_ids() {
        assert_eq!(normalize_identifier(IdScheme::Pmc, "PMC1234567").value, "1234567");
        assert_eq!(normalize_identifier(IdScheme::Pmid, " 123 ").value, "123");
        assert!(!normalize_identifier(IdScheme::Pmid, "12a3").valid);
    }

    #[test]
    fn issn_checksum() {
        assert!(normalize_identifier(IdScheme::Issn, "0378-5955").valid);
        assert!(!normalize_identifier(IdScheme::Issn, "0378-5954").valid);
    }

    #[test]
    fn scheme_keys_round_trip() {
        for scheme in IdScheme::ALL {
            assert_eq!(IdScheme::from_key(scheme.key()), Some(scheme));
            assert_eq!(scheme.label().parse::<IdScheme>().unwrap(), scheme);
        }
    }
}
