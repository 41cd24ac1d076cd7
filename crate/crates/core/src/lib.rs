//! Citation extraction from MediaWiki XML dumps.
//!
//! The crate is organised as a chain of stages:
//!
//! 1. [`dump`] streams pages out of a pages-articles XML dump,
//! 2. [`wikicode`] finds templates and `<ref>` elements in each page,
//! 3. [`harmonize`] maps language-specific citation templates to English,
//! 4. [`classify`] labels citations as journal, book, news or other,
//! 5. [`lookup`] augments unidentified book and journal citations,
//! 6. [`metrics`] aggregates labels into corpus scores,
//! 7. [`output`] reads and writes the tabular dataset.
//!
//! [`pipeline`] wires the first stages together with page-level parallelism.

pub mod classify;
pub mod domain;
pub mod dump;
pub mod exec;
pub mod harmonize;
pub mod lookup;
pub mod metrics;
pub mod output;
pub mod pipeline;
pub mod wikicode;
