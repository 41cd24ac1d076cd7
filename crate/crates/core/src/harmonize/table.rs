use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wikicode::normalize_template_name;

use super::ids::IdScheme;

/// Language editions with shipped tables, as ISO 639-1 codes.
pub const SUPPORTED_LANGUAGES: [&str; 15] = [
    "en", "de", "fr", "ru", "es", "it", "pl", "pt", "nl", "sv", "ca", "fi", "tr", "no", "da",
];

/// English citation templates accepted as translation targets.
///
/// Reconstructed from the English citation-template family; the list is
/// versioned with [`ENGLISH_SET_VERSION`].
pub const ENGLISH_TEMPLATES: [&str; 31] = [
    "citation",
    "cite arxiv",
    "cite av media",
    "cite av media notes",
    "cite biorxiv",
    "cite book",
    "cite citeseerx",
    "cite conference",
    "cite court",
    "cite encyclopedia",
    "cite episode",
    "cite interview",
    "cite journal",
    "cite magazine",
    "cite mailing list",
    "cite map",
    "cite medrxiv",
    "cite news",
    "cite newsgroup",
    "cite podcast",
    "cite press release",
    "cite proceedings",
    "cite report",
    "cite serial",
    "cite sign",
    "cite speech",
    "cite ssrn",
    "cite tech report",
    "cite thesis",
    "cite tweet",
    "cite web",
];

pub const ENGLISH_SET_VERSION: &str = "2024.1";

/// Target keys a table may map to, besides identifier keys and the numbered
/// forms of [`NUMBERED_KEYS`].
pub const ENGLISH_KEYS: &[&str] = &[
    "title",
    "trans-title",
    "script-title",
    "url",
    "archive-url",
    "archive-date",
    "url-status",
    "access-date",
    "date",
    "year",
    "orig-date",
    "publication-date",
    "publisher",
    "location",
    "publication-place",
    "place",
    "work",
    "website",
    "journal",
    "newspaper",
    "magazine",
    "periodical",
    "encyclopedia",
    "conference",
    "volume",
    "issue",
    "number",
    "pages",
    "page",
    "at",
    "chapter",
    "chapter-url",
    "contribution",
    "edition",
    "series",
    "language",
    "format",
    "type",
    "via",
    "agency",
    "department",
    "quote",
    "others",
    "id",
    "vauthors",
    "veditors",
    "authors",
    "no-pp",
    "lay-url",
    "medium",
    "time",
];

/// Keys that take a numeric suffix (`last2`, `author3`, ...).
pub const NUMBERED_KEYS: &[&str] = &[
    "last",
    "first",
    "author",
    "author-link",
    "surname",
    "given",
    "editor",
    "editor-last",
    "editor-first",
    "editor-link",
    "translator",
];

pub fn is_english_template(name: &str) -> bool {
    ENGLISH_TEMPLATES.contains(&name)
}

/// Splits `last12` into (`last`, `12`). The suffix may be empty.
pub(crate) fn split_numbered(key: &str) -> (&str, &str) {
    let base = key.trim_end_matches(|c: char| c.is_ascii_digit());
    (base, &key[base.len()..])
}

pub fn is_english_key(key: &str) -> bool {
    if ENGLISH_KEYS.contains(&key) || IdScheme::from_key(key).is_some() {
        return true;
    }
    let (base, _) = split_numbered(key);
    NUMBERED_KEYS.contains(&base)
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read translation table {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("translation table for {language} is not valid JSON: {source}")]
    Parse {
        language: String,
        source: serde_json::Error,
    },
    #[error("unsupported language {0:?}")]
    UnsupportedLanguage(String),
    #[error("table declares language {found:?} but was loaded as {expected:?}")]
    LanguageMismatch { expected: String, found: String },
    #[error("translation table for {language} has unknown English targets: templates {templates:?}, keys {keys:?}")]
    UnknownTargets {
        language: String,
        templates: Vec<String>,
        keys: Vec<String>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableFile {
    language: String,
    #[serde(default = "default_true")]
    passthrough_english: bool,
    #[serde(default)]
    templates: Vec<TemplateEntry>,
    #[serde(default)]
    default_keys: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TemplateEntry {
    local: String,
    english: String,
    #[serde(default)]
    keys: BTreeMap<String, String>,
}

fn default_true() -> bool {
    true
}

/// Per-language mapping of template names and parameter keys to English.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranslationTable {
    pub language: String,
    /// Canonical local template name to English template name.
    pub template_map: BTreeMap<String, String>,
    template_keys: BTreeMap<String, BTreeMap<String, String>>,
    default_keys: BTreeMap<String, String>,
    pub passthrough_english: bool,
}

fn normalize_key(key: &str) -> String {
    key.trim().to_lowercase()
}

impl TranslationTable {
    /// Table with no mappings that accepts English templates verbatim.
    pub fn english() -> Self {
        TranslationTable {
            language: "en".to_string(),
            template_map: BTreeMap::new(),
            template_keys: BTreeMap::new(),
            default_keys: BTreeMap::new(),
            passthrough_english: true,
        }
    }

    pub fn load(language: &str, path: impl AsRef<Path>) -> Result<Self, TableError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TableError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(language, &text)
    }

    pub fn from_json(language: &str, text: &str) -> Result<Self, TableError> {
        if !SUPPORTED_LANGUAGES.contains(&language) {
            return Err(TableError::UnsupportedLanguage(language.to_string()));
        }
        let file: TableFile = serde_json::from_str(text).map_err(|source| TableError::Parse {
            language: language.to_string(),
            source,
        })?;
        if file.language != language {
            return Err(TableError::LanguageMismatch {
                expected: language.to_string(),
                found: file.language,
            });
        }

        let mut bad_templates = BTreeSet::new();
        let mut bad_keys = BTreeSet::new();
        let mut check_key = |target: &str| {
            if !is_english_key(target) {
                bad_keys.insert(target.to_string());
            }
        };

        let mut template_map = BTreeMap::new();
        let mut template_keys = BTreeMap::new();
        for entry in file.templates {
            let local = normalize_template_name(&entry.local);
            let english = normalize_template_name(&entry.english);
            if !is_english_template(&english) {
                bad_templates.insert(english.clone());
            }
            let keys: BTreeMap<String, String> = entry
                .keys
                .iter()
                .map(|(k, v)| (normalize_key(k), normalize_key(v)))
                .collect();
            keys.values().for_each(|v| check_key(v));
            template_map.insert(local.clone(), english);
            if !keys.is_empty() {
                template_keys.insert(local, keys);
            }
        }
        let default_keys: BTreeMap<String, String> = file
            .default_keys
            .iter()
            .map(|(k, v)| (normalize_key(k), normalize_key(v)))
            .collect();
        default_keys.values().for_each(|v| check_key(v));

        if !bad_templates.is_empty() || !bad_keys.is_empty() {
            return Err(TableError::UnknownTargets {
                language: language.to_string(),
                templates: bad_templates.into_iter().collect(),
                keys: bad_keys.into_iter().collect(),
            });
        }
        Ok(TranslationTable {
            language: language.to_string(),
            template_map,
            template_keys,
            default_keys,
            passthrough_english: file.passthrough_english,
        })
    }

    /// The table shipped with the crate for `language`.
    pub fn shipped(language: &str) -> Result<Self, TableError> {
        let text = shipped_table_source(language).ok_or_else(|| TableError::UnsupportedLanguage(language.to_string()))?;
        Self::from_json(language, text)
    }

    /// English template a canonical local name maps to, if it is a citation
    /// template for this language.
    pub fn english_template(&self, name: &str) -> Option<&str> {
        if let Some(english) = self.template_map.get(name) {
            return Some(english);
        }
        if self.passthrough_english {
            return ENGLISH_TEMPLATES.iter().copied().find(|t| *t == name);
        }
        None
    }

    /// Whether `name` is handled as an English template. Such templates keep
/// English and unknown keys as written and map local keys that the
/// language defaults know.
    pub fn is_passthrough(&self, name: &str) -> bool {
        self.passthrough_english && is_english_template(name) && !self.template_keys.contains_key(name)
    }

    fn lookup(&self, template: &str, key: &str) -> Option<&String> {
        self.template_keys
            .get(template)
            .and_then(|keys| keys.get(key))
            .or_else(|| self.default_keys.get(key))
    }

    /// English key for a local parameter key of a local template.
    ///
    /// Template-specific entries win over the language defaults. Numbered
    /// keys map through their base (`nachname2` via `nachname`). Keys that
    /// are already English pass through.
    pub fn map_key(&self, template: &str, key: &str) -> Option<String> {
        if let Some(target) = self.lookup(template, key) {
            return Some(target.clone());
        }
        let (base, digits) = split_numbered(key);
        if !digits.is_empty() && !base.is_empty() {
            if let Some(target) = self.lookup(template, base) {
                return Some(format!("{target}{digits}"));
            }
        }
        is_english_key(key).then(|| key.to_string())
    }
}

fn shipped_table_source(language: &str) -> Option<&'static str> {
    Some(match language {
        "en" => include_str!("../../data/tables/en.json"),
        "de" => include_str!("../../data/tables/de.json"),
        "fr" => include_str!("../../data/tables/fr.json"),
        "ru" => include_str!("../../data/tables/ru.json"),
        "es" => include_str!("../../data/tables/es.json"),
        "it" => include_str!("../../data/tables/it.json"),
        "pl" => include_str!("../../data/tables/pl.json"),
        "pt" => include_str!("../../data/tables/pt.json"),
        "nl" => include_str!("../../data/tables/nl.json"),
        "sv" => include_str!("../../data/tables/sv.json"),
        "ca" => include_str!("../../data/tables/ca.json"),
        "fi" => include_str!("../../data/tables/fi.json"),
        "tr" => include_str!("../../data/tables/tr.json"),
        "no" => include_str!("../../data/tables/no.json"),
        "da" => include_str!("../../data/tables/da.json"),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_shipped_tables_load() {
        for lang in SUPPORTED_LANGUAGES {
            let table = TranslationTable::shipped(lang).unwrap_or_else(|e| panic!("{lang}: {e}"));
            assert_eq!(table.language, lang);
            assert!(table.passthrough_english);
        }
    }

    #[test]
    fn spanish_cita_libro() {
        let es = TranslationTable::shipped("es").unwrap();
        assert_eq!(es.english_template("cita libro"), Some("cite book"));
    }

    #[test]
    fn german_internetquelle() {
        let de = TranslationTable::shipped("de").unwrap();
        assert_eq!(de.english_template("internetquelle"), Some("cite web"));
        assert_eq!(de.map_key("internetquelle", "titel").as_deref(), Some("title"));
        assert_eq!(de.map_key("literatur", "nachname2").as_deref(), Some("last2"));
    }

    #[test]
    fn english_table_is_identity() {
        let en = TranslationTable::shipped("en").unwrap();
        assert_eq!(en, TranslationTable::english());
        assert!(en.template_map.is_empty());
        assert_eq!(en.english_template("cite journal"), Some("cite journal"));
        assert_eq!(en.english_template("infobox person"), None);
    }

    #[test]
    fn unknown_targets_rejected_with_offenders() {
        let json = r#"{"language":"de","templates":[{"local":"x","english":"cite nothing","keys":{"a":"bogus"}}],
            "default_keys":{"b":"also-bogus","c":"title"}}"#;
        match TranslationTable::from_json("de", json) {
            Err(TableError::UnknownTargets { templates, keys, .. }) => {
                assert_eq!(templates, ["cite nothing"]);
                assert_eq!(keys, ["also-bogus", "bogus"]);
            }
            other => panic!("expected UnknownTargets, got {other:?}"),
        }
    }

    #[test]
    fn language_checks() {
        assert!(matches!(
            TranslationTable::from_json("xx", r#"{"language":"xx"}"#),
            Err(TableError::UnsupportedLanguage(_))
        ));
        assert!(matches!(
            TranslationTable::from_json("de", r#"{"language":"fr"}"#),
            Err(TableError::LanguageMismatch { .. })
        ));
        assert!(matches!(
            TranslationTable::from_json("de", "{not json"),
            Err(TableError::Parse { .. })
        ));
        assert!(matches!(
            TranslationTable::load("de", "/nonexistent/de.json"),
            Err(TableError::Io { .. })
        ));
    }

    #[test]
    fn english_target_sets_are_consistent() {
        assert!(ENGLISH_TEMPLATES.windows(2).all(|w| w[0] < w[1]));
        for key in ["last1", "first12", "author3", "doi", "isbn", "access-date"] {
            assert!(is_english_key(key), "{key}");
        }
        assert!(!is_english_key("titel"));
        assert!(!is_english_key("lastx"));
    }
}
