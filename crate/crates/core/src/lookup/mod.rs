//! Identifier acquisition for book and journal citations that have none.
//!
//! Candidates are sent to a bibliographic search endpoint by title. A
//! returned record is accepted only when its title is close to the requested
//! one under a normalized Levenshtein distance.

mod client;
mod run;

use serde::{Deserialize, Serialize};

use crate::harmonize::{Citation, Identifier};
use crate::output::DatasetRow;

pub use client::{BibliographicSearch, MockEndpoint, MockRecord, SearchError};
#[cfg(feature = "http")]
pub use client::{BooksClient, CrossrefClient, HttpConfig};
pub use run::{
    apply_results, load_results, run_lookup, Checkpoint, Endpoints, LookupConfig, LookupError, LookupRun, OutcomeCounts,
};

pub const DEFAULT_THRESHOLD: f64 = 0.1;

/// Templates worth looking up.
pub const LOOKUP_TEMPLATES: [&str; 4] = ["cite book", "cite journal", "cite encyclopedia", "cite proceedings"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Crossref,
    Books,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LookupRequest {
    pub citation_key: u64,
    pub title: String,
    pub authors: Vec<String>,
    pub target: Target,
}

/// Best record an endpoint returned for a query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub title: String,
    pub ids: Vec<Identifier>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupMatch {
    pub acquired_ids: Vec<Identifier>,
    pub matched_title: String,
    pub distance: usize,
    pub normalized_distance: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Accepted(LookupMatch),
    Rejected(LookupMatch),
    NoResult,
    TransportError { message: String, attempts: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupResult {
    pub citation_key: u64,
    pub target: Target,
    #[serde(flatten)]
    pub outcome: Outcome,
}

fn request_for(key: u64, type_of_citation: &str, title: Option<&str>, ids_present: bool, authors: &[String]) -> Option<LookupRequest> {
    if ids_present || !LOOKUP_TEMPLATES.contains(&type_of_citation) {
        return None;
    }
    let title = title?.trim();
    if title.is_empty() {
        return None;
    }
    let target = if type_of_citation == "cite book" { Target::Books } else { Target::Crossref };
    Some(LookupRequest {
        citation_key: key,
        title: title.to_string(),
        authors: authors.to_vec(),
        target,
    })
}

/// Requests for citations without identifiers; the key is the position in
/// the input.
pub fn select_lookup_candidates<'a, I>(citations: I) -> Vec<LookupRequest>
where
    I: IntoIterator<Item = &'a Citation>,
{
    citations
        .into_iter()
        .enumerate()
        .filter_map(|(i, c)| request_for(i as u64, &c.type_of_citation, c.title.as_deref(), !c.id_list.is_empty(), &c.authors))
        .collect()
}

/// Same selection over dataset rows, skipping rows that already acquired ids.
pub fn select_row_candidates(rows: &[DatasetRow]) -> Vec<LookupRequest> {
    rows.iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let has_ids = !r.id_list.is_empty() || !r.acquired_id_list.is_empty();
            request_for(i as u64, &r.type_of_citation, r.title.as_deref(), has_ids, &r.authors)
        })
        .collect()
}

const EXTRA_PUNCTUATION: &[char] = &[
    '‘', '’', '‚', '‛', '“', '”', '„', '‟', '«', '»', '‹', '›', '–', '—', '―', '‐', '‑', '…', '·', '•', '¿', '¡', '。',
    '、', '「', '」', '『', '』', '《', '》', '〈', '〉', '（', '）', '：', '；', '，', '！', '？', '§', '¶', '′', '″',
];

/// Case-folded title with punctuation removed and whitespace collapsed.
pub fn normalize_title(s: &str) -> String {
    let stripped: String = s
        .chars()
        .filter(|c| !c.is_ascii_punctuation() && !EXTRA_PUNCTUATION.contains(c))
        .collect::<String>()
        .to_lowercase();
    stripped.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn levenshtein(a: &[char], b: &[char]) -> usize {
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let substitute = prev[j] + usize::from(ca != cb);
            cur[j + 1] = substitute.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance between the normalized forms of two titles, counted
/// in Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = normalize_title(a).chars().collect();
    let b: Vec<char> = normalize_title(b).chars().collect();
    levenshtein(&a, &b)
}

/// Distance, distance relative to the longer normalized title, and whether
/// that ratio is within `threshold`.
pub fn validate_match(requested: &str, returned: &str, threshold: f64) -> (usize, f64, bool) {
    let a: Vec<char> = normalize_title(requested).chars().collect();
    let b: Vec<char> = normalize_title(returned).chars().collect();
    let distance = levenshtein(&a, &b);
    let normalized = distance as f64 / a.len().max(b.len()).max(1) as f64;
    (distance, normalized, normalized <= threshold)
}

/// Judge a candidate. Candidates without identifiers are never accepted.
pub fn assess(request: &LookupRequest, candidate: Candidate, threshold: f64) -> Outcome {
    let (distance, normalized_distance, close) = validate_match(&request.title, &candidate.title, threshold);
    let accepted = close && !candidate.ids.is_empty();
    let m = LookupMatch {
        acquired_ids: if accepted { candidate.ids } else { Vec::new() },
        matched_title: candidate.title,
        distance,
        normalized_distance,
        accepted,
    };
    if accepted {
        Outcome::Accepted(m)
    } else {
        Outcome::Rejected(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonize::IdScheme;

    #[test]
    fn distance_examples() {
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("kitten", "sitting"), 3);
        assert_eq!(edit_distance("Moby-Dick!", "moby dick"), 1);
        assert_eq!(edit_distance("Ünïcode  Title", "ünïcode title"), 0);
    }

    #[test]
    fn validate_examples() {
        let (d, n, ok) = validate_match("History of Rome", "A History of Rome", 0.2);
        assert_eq!(d, 2);
        assert!((n - 2.0 / 17.0).abs() < 1e-12);
        assert!(ok);
        assert!(!validate_match("History of Rome", "Quantum Field Theory", 0.1).2);
        assert_eq!(validate_match("", "", 0.0), (0, 0.0, true));
    }

    #[test]
    fn candidate_selection() {
        let base = Citation {
            type_of_citation: "cite journal".into(),
            page_title: "P".into(),
            title: Some("T".into()),
            url: None,
            tld: None,
            authors: vec![],
            id_list: vec![],
            citation_text: "{{cite journal|title=T}}".into(),
            extra: Default::default(),
            source_language: "en".into(),
            local_template: "cite journal".into(),
            inside_ref: true,
        };
        let book_with_isbn = Citation {
            type_of_citation: "cite book".into(),
            id_list: vec![Identifier::new(IdScheme::Isbn, "9783161484100")],
            ..base.clone()
        };
        let web = Citation { type_of_citation: "cite web".into(), ..base.clone() };
        let book = Citation { type_of_citation: "cite book".into(), ..base.clone() };
        let untitled = Citation { title: Some("  ".into()), ..base.clone() };
        let reqs = select_lookup_candidates([&base, &book_with_isbn, &web, &book, &untitled]);
        assert_eq!(reqs.len(), 2);
        assert_eq!((reqs[0].citation_key, reqs[0].target), (0, Target::Crossref));
        assert_eq!((reqs[1].citation_key, reqs[1].target), (3, Target::Books));
    }

    #[test]
    fn no_ids_means_no_acceptance() {
        let req = LookupRequest { citation_key: 0, title: "T".into(), authors: vec![], target: Target::Books };
        let out = assess(&req, Candidate { title: "T".into(), ids: vec![] }, 0.1);
        assert!(matches!(out, Outcome::Rejected(_)));
    }
}
