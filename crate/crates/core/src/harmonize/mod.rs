//! Mapping of language-specific citation templates onto the English schema.
//!
//! Only template names and parameter keys are rewritten. Every parameter
//! value ends up somewhere in the resulting [`Citation`] exactly as it
//! appeared in the source, and [`translate_with_report`] says where.

pub mod ids;
pub mod table;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::extract_tld;
use crate::dump::WikiPage;
use crate::wikicode::RawTemplate;

pub use ids::{normalize_identifier, IdScheme, Identifier, NormalizedId};
pub use table::{
    is_english_key, is_english_template, TableError, TranslationTable, ENGLISH_KEYS, ENGLISH_SET_VERSION,
    ENGLISH_TEMPLATES,
    SUPPORTED_LANGUAGES,
};

/// A citation in the common English schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Citation {
    pub type_of_citation: String,
    pub page_title: String,
    pub title: Option<String>,
    pub url: Option<String>,
    pub tld: Option<String>,
    pub authors: Vec<String>,
    pub id_list: Vec<Identifier>,
    /// Verbatim source of the template, braces included.
    pub citation_text: String,
    /// Remaining parameters under their English keys. Keys that could not be
    /// mapped, and values displaced by a later duplicate, are stored under
    /// `lang:local-key`.
    pub extra: BTreeMap<String, String>,
    pub source_language: String,
    /// Canonical template name as written on the page.
    pub local_template: String,
    pub inside_ref: bool,
}

impl Citation {
    pub fn has_id(&self, scheme: IdScheme) -> bool {
        self.id_list.iter().any(|id| id.scheme == scheme)
    }

    pub fn id(&self, scheme: IdScheme) -> Option<&str> {
        self.id_list.iter().find(|id| id.scheme == scheme).map(|id| id.value.as_str())
    }

    /// The stored value at a placement reported by [`translate_with_report`].
    pub fn value_at(&self, placement: &Placement) -> Option<&str> {
        match placement {
            Placement::Title => self.title.as_deref(),
            Placement::Url => self.url.as_deref(),
            Placement::Extra(key) => self.extra.get(key).map(String::as_str),
        }
    }
}

/// Where a source parameter value was stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Placement {
    Title,
    Url,
    Extra(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranslationReport {
    /// One entry per source parameter, in source order:
    /// (source key, positional keys numbered from 1; placement).
    pub placements: Vec<(String, Placement)>,
    pub unmapped_keys: Vec<String>,
    pub duplicate_ids: Vec<Identifier>,
    pub invalid_ids: Vec<Identifier>,
}

pub fn is_citation_template(t: &RawTemplate, table: &TranslationTable) -> bool {
    table.english_template(&t.name).is_some()
}

/// Translate a recognized citation template. Templates the table does not
/// recognize are translated as if they were `citation`.
pub fn translate(t: &RawTemplate, page: &WikiPage, table: &TranslationTable) -> Citation {
    translate_with_report(t, page, table).0
}

struct Slot {
    value: String,
    source_key: String,
    param_index: usize,
}

pub fn translate_with_report(
    t: &RawTemplate,
    page: &WikiPage,
    table: &TranslationTable,
) -> (Citation, TranslationReport) {
    let english = table.english_template(&t.name).unwrap_or("citation").to_string();
    let passthrough = table.is_passthrough(&t.name);
    let lang = table.language.as_str();

    let params = t.keyed_params();
    let mut report = TranslationReport {
        placements: Vec::with_capacity(params.len()),
        ..Default::default()
    };
    let mut slots: BTreeMap<String, Slot> = BTreeMap::new();
    let mut extra: BTreeMap<String, String> = BTreeMap::new();
    let mut mapped_in_order: Vec<(String, &str)> = Vec::new();

    for (index, (key, value)) in params.iter().enumerate() {
        report.placements.push((key.clone(), Placement::Extra(String::new())));
        let mapped = if passthrough {
            Some(if is_english_key(key) {
                key.clone()
            } else {
                table.map_key(&t.name, key).unwrap_or_else(|| key.clone())
            })
        } else {
            table.map_key(&t.name, key)
        };
        let Some(mapped) = mapped else {
            log::debug!("unmapped key {key:?} in {lang}:{}", t.name);
            report.unmapped_keys.push(key.clone());
            let slot = store_aside(&mut extra, lang, key, value);
            report.placements[index].1 = Placement::Extra(slot);
            continue;
        };
        mapped_in_order.push((mapped.clone(), value));
        let new = Slot {
            value: value.to_string(),
            source_key: key.clone(),
            param_index: index,
        };
        if let Some(old) = slots.insert(mapped, new) {
            let slot = store_aside(&mut extra, lang, &old.source_key, &old.value);
            report.placements[old.param_index].1 = Placement::Extra(slot);
        }
    }

    let mut id_list: Vec<Identifier> = Vec::new();
    for (key, value) in &mapped_in_order {
        let Some(scheme) = IdScheme::from_key(key) else {
            continue;
        };
        if value.trim().is_empty() {
            continue;
        }
        let normalized = normalize_identifier(scheme, value);
        let id = Identifier::new(scheme, normalized.value);
        if !normalized.valid {
            report.invalid_ids.push(id.clone());
        }
        if id_list.iter().any(|existing| existing.scheme == scheme) {
            report.duplicate_ids.push(id);
        } else {
            id_list.push(id);
        }
    }
    id_list.sort_by_key(|id| id.scheme);

    let authors = assemble_authors(&slots);

    let mut take_field = |name: &str, placement: Placement| -> Option<String> {
        let present = slots.get(name).is_some_and(|s| !s.value.is_empty());
        if !present {
            return None;
        }
        let slot = slots.remove(name)?;
        report.placements[slot.param_index].1 = placement;
        Some(slot.value)
    };
    let title = take_field("title", Placement::Title);
    let url = take_field("url", Placement::Url);

    for (key, slot) in slots {
        let stored = if extra.contains_key(&key) {
            store_aside(&mut extra, lang, &slot.source_key, &slot.value)
        } else {
            extra.insert(key.clone(), slot.value);
            key
        };
        report.placements[slot.param_index].1 = Placement::Extra(stored);
    }

    let tld = url.as_deref().and_then(extract_tld);
    let citation = Citation {
        type_of_citation: english,
        page_title: page.title.clone(),
        title,
        url,
        tld,
        authors,
        id_list,
        citation_text: citation_source(t, page),
        extra,
        source_language: lang.to_string(),
        local_template: t.name.clone(),
        inside_ref: t.inside_ref,
    };
    (citation, report)
}

fn citation_source(t: &RawTemplate, page: &WikiPage) -> String {
    page.wikitext.get(t.span.clone()).unwrap_or_default().to_string()
}

/// Put a value under `lang:key`, adding `#2`, `#3`, ... when taken.
fn store_aside(extra: &mut BTreeMap<String, String>, lang: &str, key: &str, value: &str) -> String {
    let base = format!("{lang}:{key}");
    let mut slot = base.clone();
    let mut n = 2;
    while extra.contains_key(&slot) {
        slot = format!("{base}#{n}");
        n += 1;
    }
    extra.insert(slot.clone(), value.to_string());
    slot
}

fn numbered<'a>(key: &'a str, bases: &[&str]) -> Option<(&'a str, u32)> {
    let (base, digits) = table::split_numbered(key);
    if !bases.contains(&base) {
        return None;
    }
    let n = if digits.is_empty() { 1 } else { digits.parse().ok()? };
    Some((base, n))
}

fn assemble_authors(slots: &BTreeMap<String, Slot>) -> Vec<String> {
    let mut pairs: BTreeMap<u32, (Option<&str>, Option<&str>)> = BTreeMap::new();
    let mut plain: BTreeMap<u32, &str> = BTreeMap::new();
    let mut vauthors: Option<&str> = None;

    for (key, slot) in slots {
        let value = slot.value.trim();
        if value.is_empty() {
            continue;
        }
        if let Some((_, n)) = numbered(key, &["last", "surname"]) {
            pairs.entry(n).or_default().0.get_or_insert(value);
        } else if let Some((_, n)) = numbered(key, &["first", "given"]) {
            pairs.entry(n).or_default().1.get_or_insert(value);
        } else if let Some((_, n)) = numbered(key, &["author"]) {
            plain.entry(n).or_insert(value);
        } else if key == "vauthors" {
            vauthors = Some(value);
        }
    }

    let mut authors: Vec<String> = pairs
        .into_values()
        .map(|pair| match pair {
            (Some(last), Some(first)) => format!("{last}, {first}"),
            (Some(last), None) => last.to_string(),
            (None, Some(first)) => first.to_string(),
            (None, None) => unreachable!(),
        })
        .collect();
    authors.extend(plain.into_values().map(str::to_string));
    if let Some(list) = vauthors {
        authors.extend(list.split(',').map(str::trim).filter(|a| !a.is_empty()).map(str::to_string));
    }
    authors
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wikicode::extract_templates;

    fn page(text: &str) -> WikiPage {
        WikiPage {
            title: "Page".into(),
            namespace: 0,
            page_id: 1,
            wikitext: text.into(),
            language: None,
        }
    }

    fn one(text: &str, lang: &str) -> (Citation, TranslationReport) {
        let p = page(text);
        let t = extract_templates(text).remove(0);
        let table = TranslationTable::shipped(lang).unwrap();
        assert!(is_citation_template(&t, &table));
        translate_with_report(&t, &p, &table)
    }

    #[test]
    fn german_internetquelle() {
        let (c, _) = one("{{Internetquelle|titel=X|url=https://example.org/a}}", "de");
        assert_eq!(c.type_of_citation, "cite web");
        assert_eq!(c.title.as_deref(), Some("X"));
        assert_eq!(c.url.as_deref(), Some("https://example.org/a"));
        assert_eq!(c.tld.as_deref(), Some("example"));
        assert_eq!(c.source_language, "de");
    }

    #[test]
    fn english_journal_with_doi() {
        let (c, _) = one("{{cite journal|title=T|doi=10.1000/182}}", "en");
        assert_eq!(c.type_of_citation, "cite journal");
        assert_eq!(c.id_list, [Identifier::new(IdScheme::Doi, "10.1000/182")]);
        assert_eq!(c.extra.get("doi").map(String::as_str), Some("10.1000/182"));
    }

    #[test]
    fn nested_value_kept_verbatim() {
        let (c, _) = one("{{cite book|title=T|publisher={{lang|en|Penguin}} Books}}", "en");
        assert_eq!(c.extra["publisher"], "{{lang|en|Penguin}} Books");
    }

    #[test]
    fn recognition() {
        let ru = TranslationTable::shipped("ru").unwrap();
        let da = TranslationTable::shipped("da").unwrap();
        let t = |s: &str| extract_templates(s).remove(0);
        assert!(is_citation_template(&t("{{wayback|url=x}}"), &ru));
        assert!(!is_citation_template(&t("{{Infobox person|name=x}}"), &ru));
        assert!(is_citation_template(&t("{{cite web|url=x}}"), &da));
    }

    #[test]
    fn authors_in_order() {
        let (c, _) = one(
            "{{cite book|last2=B|first2=Bb|last1=A|first1=Aa|author3=C|vauthors=Smith J, Doe K|title=x}}",
            "en",
        );
        assert_eq!(c.authors, ["A, Aa", "B, Bb", "C", "Smith J", "Doe K"]);
    }

    #[test]
    fn unmapped_and_duplicate_keys_are_kept() {
        let text = "{{literatur|titel=A|unbekannt=q|titel=B|title=C}}";
        let (c, report) = one(text, "de");
        assert_eq!(c.type_of_citation, "cite book");
        assert_eq!(c.title.as_deref(), Some("C"));
        assert_eq!(report.unmapped_keys, ["unbekannt"]);
        assert_eq!(c.extra["de:unbekannt"], "q");
        let values: Vec<&str> = report.placements.iter().map(|(_, p)| c.value_at(p).unwrap()).collect();
        assert_eq!(values, ["A", "q", "B", "C"]);
    }

    #[test]
    fn first_identifier_wins() {
        let (c, report) = one("{{cite book|isbn=978-3-16-148410-0|title=x|isbn=0-8044-2957-X}}", "en");
        assert_eq!(c.id(IdScheme::Isbn), Some("9783161484100"));
        assert_eq!(report.duplicate_ids, [Identifier::new(IdScheme::Isbn, "080442957X")]);
        assert!(report.invalid_ids.is_empty());
    }

    #[test]
    fn portuguese_link_positional() {
        let (c, _) = one("{{link|pt|https://www.publico.pt/x|Título}}", "pt");
        assert_eq!(c.type_of_citation, "cite web");
        assert_eq!(c.url.as_deref(), Some("https://www.publico.pt/x"));
        assert_eq!(c.title.as_deref(), Some("Título"));
        assert_eq!(c.extra["language"], "pt");
    }

    #[test]
    fn empty_url_means_no_tld() {
        let (c, _) = one("{{cite web|url=|title=x}}", "en");
        assert_eq!(c.url, None);
        assert_eq!(c.tld, None);
        assert_eq!(c.extra["url"], "");
    }
}
