//! Corpus-level counts and reliability scores.
//!
//! Scores are kept as exact ratios of integer counts. Rounding only happens
//! for display, with round-half-to-even on the exact rational value.

use std::fmt;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::Label;

/// A decimal number stored as `units / 10^decimals`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rounded {
    pub units: i128,
    pub decimals: u32,
}

impl Rounded {
    pub fn to_f64(self) -> f64 {
        self.units as f64 / 10f64.powi(self.decimals as i32)
    }
}

impl fmt::Display for Rounded {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scale = 10i128.pow(self.decimals);
        let sign = if self.units < 0 { "-" } else { "" };
        let abs = self.units.unsigned_abs();
        let whole = abs / scale as u128;
        if self.decimals == 0 {
            return write!(f, "{sign}{whole}");
        }
        let frac = abs % scale as u128;
        write!(f, "{sign}{whole}.{frac:0width$}", width = self.decimals as usize)
    }
}

/// `num / den * 10^shift`, rounded half-even to `decimals` places.
/// `None` when `den` is zero.
pub fn round_ratio(num: i128, den: i128, shift: u32, decimals: u32) -> Option<Rounded> {
    if den == 0 {
        return None;
    }
    let negative = (num < 0) != (den < 0) && num != 0;
    let num = num.unsigned_abs() * 10u128.pow(shift + decimals);
    let den = den.unsigned_abs();
    let mut q = num / den;
    let r = num % den;
    if 2 * r > den || (2 * r == den && q % 2 == 1) {
        q += 1;
    }
    let units = q as i128;
    Some(Rounded {
        units: if negative { -units } else { units },
        decimals,
    })
}

/// Percentage `num / den * 100`, rounded half-even.
pub fn percent(num: u64, den: u64, decimals: u32) -> Option<Rounded> {
    round_ratio(num as i128, den as i128, 2, decimals)
}

/// Per-label tallies. Shards can be counted separately and added together.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub journals: u64,
    pub books: u64,
    pub news: u64,
    pub other: u64,
}

impl LabelCounts {
    pub fn add(&mut self, label: Label) {
        match label {
            Label::Journal => self.journals += 1,
            Label::Book => self.books += 1,
            Label::News => self.news += 1,
            Label::Other => self.other += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.journals + self.books + self.news + self.other
    }
}

impl AddAssign for LabelCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.journals += rhs.journals;
        self.books += rhs.books;
        self.news += rhs.news;
        self.other += rhs.other;
    }
}

impl FromIterator<Label> for LabelCounts {
    fn from_iter<T: IntoIterator<Item = Label>>(iter: T) -> Self {
        let mut counts = LabelCounts::default();
        iter.into_iter().for_each(|l| counts.add(l));
        counts
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("class counts exceed the total ({sum} > {total})")]
    CountsExceedTotal { sum: u64, total: u64 },
    #[error("cannot compare snapshots of different languages ({0} vs {1})")]
    LanguageMismatch(String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub language: String,
    pub snapshot: String,
    pub total: u64,
    pub journals: u64,
    pub books: u64,
    pub news: u64,
    pub other: u64,
    pub scientific: u64,
    pub reliable: u64,
    /// Exact percentages; absent for an empty corpus.
    pub sci_score: Option<f64>,
    pub sci_score2: Option<f64>,
    pub rel_score: Option<f64>,
}

impl MetricsReport {
    pub fn from_counts(language: &str, snapshot: &str, counts: LabelCounts) -> Self {
        let total = counts.total();
        let scientific = counts.journals + counts.books;
        let reliable = scientific + counts.news;
        let pct = |n: u64| (total > 0).then(|| n as f64 / total as f64 * 100.0);
        MetricsReport {
            language: language.to_string(),
            snapshot: snapshot.to_string(),
            total,
            journals: counts.journals,
            books: counts.books,
            news: counts.news,
            other: counts.other,
            scientific,
            reliable,
            sci_score: pct(counts.journals),
            sci_score2: pct(scientific),
            rel_score: pct(reliable),
        }
    }

    /// Report from published totals, where `other` is whatever remains.
    pub fn from_totals(
        language: &str,
        snapshot: &str,
        total: u64,
        journals: u64,
        books: u64,
        news: u64,
    ) -> Result<Self, MetricsError> {
        let sum = journals + books + news;
        if sum > total {
            return Err(MetricsError::CountsExceedTotal { sum, total });
        }
        Ok(Self::from_counts(
            language,
            snapshot,
            LabelCounts {
                journals,
                books,
                news,
                other: total - sum,
            },
        ))
    }

    pub fn counts(&self) -> LabelCounts {
        LabelCounts {
            journals: self.journals,
            books: self.books,
            news: self.news,
            other: self.other,
        }
    }

    pub fn sci_display(&self, decimals: u32) -> Option<Rounded> {
        percent(self.journals, self.total, decimals)
    }

    pub fn sci2_display(&self, decimals: u32) -> Option<Rounded> {
        percent(self.scientific, self.total, decimals)
    }

    pub fn rel_display(&self, decimals: u32) -> Option<Rounded> {
        percent(self.reliable, self.total, decimals)
    }

    /// Summary as JSON, with the display-rounded scores alongside the exact ones.
    pub fn to_json(&self) -> serde_json::Value {
        let show = |r: Option<Rounded>| r.map(|r| r.to_string());
        let mut value = serde_json::to_value(self).expect("report serializes");
        value["display"] = serde_json::json!({
            "sci_score": show(self.sci_display(2)),
            "sci_score2": show(self.sci2_display(2)),
            "rel_score": show(self.rel_display(2)),
        });
        value
    }
}

/// Count labels in one pass.
pub fn compute_metrics<I: IntoIterator<Item = Label>>(labels: I, language: &str, snapshot: &str) -> MetricsReport {
    MetricsReport::from_counts(language, snapshot, labels.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDelta {
    pub field: String,
    pub from: u64,
    pub to: u64,
    /// Relative change in percent, one decimal. Absent when `from` is zero.
    pub change: Option<Rounded>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreDelta {
    pub score: String,
    pub from: Option<Rounded>,
    pub to: Option<Rounded>,
    /// Difference of the two displayed (two-decimal) scores.
    pub diff: Option<Rounded>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotDelta {
    pub language: String,
    pub from_snapshot: String,
    pub to_snapshot: String,
    pub fields: Vec<FieldDelta>,
    pub scores: Vec<ScoreDelta>,
}

impl SnapshotDelta {
    pub fn field(&self, name: &str) -> Option<&FieldDelta> {
        self.fields.iter().find(|f| f.field == name)
    }

    pub fn score(&self, name: &str) -> Option<&ScoreDelta> {
        self.scores.iter().find(|s| s.score == name)
    }
}

pub fn compare_snapshots(a: &MetricsReport, b: &MetricsReport) -> Result<SnapshotDelta, MetricsError> {
    if a.language != b.language {
        return Err(MetricsError::LanguageMismatch(a.language.clone(), b.language.clone()));
    }
    let fields = [
        ("citations", a.total, b.total),
        ("journals", a.journals, b.journals),
        ("books", a.books, b.books),
        ("news", a.news, b.news),
        ("scientific", a.scientific, b.scientific),
        ("reliable", a.reliable, b.reliable),
    ]
    .into_iter()
    .map(|(field, from, to)| FieldDelta {
        field: field.to_string(),
        from,
        to,
        change: round_ratio(to as i128 - from as i128, from as i128, 2, 1),
    })
    .collect();

    let score = |name: &str, from: Option<Rounded>, to: Option<Rounded>| ScoreDelta {
        score: name.to_string(),
        from,
        to,
        diff: from.zip(to).map(|(x, y)| Rounded {
            units: y.units - x.units,
            decimals: x.decimals,
        }),
    };
    let scores = vec![
        score("sci_score", a.sci_display(2), b.sci_display(2)),
        score("sci_score2", a.sci2_display(2), b.sci2_display(2)),
        score("rel_score", a.rel_display(2), b.rel_display(2)),
    ];
    Ok(SnapshotDelta {
        language: a.language.clone(),
        from_snapshot: a.snapshot.clone(),
        to_snapshot: b.snapshot.clone(),
        fields,
        scores,
    })
}

const HEADER: [&str; 10] = [
    "Snapshot",
    "Citations",
    "Journals",
    "Books",
    "News",
    "Scientific",
    "Reliable",
    "Sci score",
    "Sci score 2",
    "Rel score",
];

fn render(rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..HEADER.len())
        .map(|i| rows.iter().map(|r| r[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (cell, w))| if i == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn dash(r: Option<Rounded>) -> String {
    r.map_or_else(|| "-".to_string(), |r| r.to_string())
}

/// Aligned plain-text table of reports, optionally followed by a delta row.
pub fn render_table(reports: &[MetricsReport], delta: Option<&SnapshotDelta>) -> String {
    let mut rows = vec![HEADER.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for r in reports {
        let label = if r.snapshot.is_empty() { r.language.clone() } else { format!("{} {}", r.language, r.snapshot) };
        rows.push(vec![
            label,
            r.total.to_string(),
            r.journals.to_string(),
            r.books.to_string(),
            r.news.to_string(),
            r.scientific.to_string(),
            r.reliable.to_string(),
            dash(r.sci_display(2)),
            dash(r.sci2_display(2)),
            dash(r.rel_display(2)),
        ]);
    }
    if let Some(d) = delta {
        let pct = |name: &str| {
            d.field(name)
                .and_then(|f| f.change)
                .map_or_else(|| "-".to_string(), |c| format!("{}{c}%", if c.units >= 0 { "+" } else { "" }))
        };
        let diff = |name: &str| dash(d.score(name).and_then(|s| s.diff));
        rows.push(vec![
            "change".to_string(),
            pct("citations"),
            pct("journals"),
            pct("books"),
            pct("news"),
            pct("scientific"),
            pct("reliable"),
            diff("sci_score"),
            diff("sci_score2"),
            diff("rel_score"),
        ]);
    }
    render(&rows)
}
