use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use wikicite::classify::Label;
use wikicite::harmonize::{IdScheme, Identifier};
use wikicite::output::{read_rows, write_rows, DatasetRow, Format, WriterOptions};

fn wikicite(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wikicite"))
        .args(args)
        .env_remove("WIKICITE_CONTACT")
        .env_remove("WIKICITE_BOOKS_API_KEY")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = wikicite(args);
    assert!(
        out.status.success(),
        "wikicite {args:?} failed with {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str]) -> i32 {
    wikicite(args).status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn page(title: &str, id: u64, text: &str) -> String {
    let text = text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
    format!("<page><title>{title}</title><ns>0</ns><id>{id}</id><revision><id>{}</id><text xml:space=\"preserve\">{text}</text></revision></page>\n", id + 100)
}

fn dump(dir: &Path, name: &str, lang: &str, pages: &[String]) -> PathBuf {
    let path = dir.join(name);
    let xml = format!("<mediawiki xml:lang=\"{lang}\">\n{}</mediawiki>\n", pages.concat());
    std::fs::write(&path, xml).unwrap();
    path
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/multilingual.xml")
}

/// Contents of every part file in a directory, by file name.
fn parts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_str().unwrap().starts_with("part-"))
        .map(|p| (p.file_name().unwrap().to_str().unwrap().to_string(), std::fs::read(&p).unwrap()))
        .collect()
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn spanish_book_template_becomes_cite_book() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "Texto.<ref>{{cita libro|título=Cien años de soledad|apellido=García Márquez|nombre=Gabriel|año=1967|editorial=Sudamericana}}</ref>";
    let dump = dump(tmp.path(), "es.xml", "es", &[page("Novela", 1, text)]);
    let out = tmp.path().join("out");
    ok(&["extract", s(&dump), "--out", s(&out)]);
    let rows = read_rows(&out, Format::Csv).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].type_of_citation, "cite book");
    assert_eq!(rows[0].title.as_deref(), Some("Cien años de soledad"));
    assert_eq!(rows[0].page_title, "Novela");
}

#[test]
fn empty_dump_still_gets_a_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let dump = dump(tmp.path(), "empty.xml", "en", &[]);
    let out = tmp.path().join("out");
    ok(&["extract", s(&dump), "--out", s(&out)]);
    assert!(read_rows(&out, Format::Csv).unwrap().is_empty());
    let m = manifest(&out);
    assert_eq!(m["status"], "complete");
    assert_eq!(m["counts"]["extract"]["rows"], 0);
    assert_eq!(m["counts"]["dump"]["pages_seen"], 0);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
    assert!(m["started_at"].is_string() && m["finished_at"].is_string());
}

#[test]
fn only_citation_templates_become_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "{{Infobox person|name=X|birth_date={{birth date|1900|1|1}}}}\n\
                A.<ref>{{cite web|url=https://example.org/a|title=A}}</ref>\n\
                B.<ref>{{cite book|title=B|isbn=978-0-306-40615-7}}</ref>\n\
                C.<ref>{{cite journal|title=C|journal=J|doi=10.1000/xyz}}</ref>\n\
                {{reflist}}";
    let dump = dump(tmp.path(), "mixed.xml", "en", &[page("Mixed", 1, text)]);
    let out = tmp.path().join("out");
    let run = ok(&["extract", s(&dump), "--out", s(&out)]);
    let rows = read_rows(&out, Format::Csv).unwrap();
    let types: Vec<&str> = rows.iter().map(|r| r.type_of_citation.as_str()).collect();
    assert_eq!(types, ["cite web", "cite book", "cite journal"]);
    let labels: Vec<Label> = rows.iter().map(|r| r.actual_label).collect();
    assert_eq!(labels, [Label::Other, Label::Book, Label::Journal]);
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("pages read: 1"), "{stdout}");
    assert!(stdout.contains("cite journal"), "{stdout}");
}

#[test]
fn extraction_is_identical_at_any_parallelism() {
    let tmp = tempfile::tempdir().unwrap();
    for format in ["csv", "jsonl"] {
        let one = tmp.path().join(format!("one-{format}"));
        let eight = tmp.path().join(format!("eight-{format}"));
        let fixture = fixture();
        let common = ["--format", format, "--extended", "--chunk-pages", "3", "--rows-per-file", "10"];
        let mut a = vec!["extract", s(&fixture), "--out", s(&one), "--jobs", "1"];
        a.extend(common);
        let mut b = vec!["extract", s(&fixture), "--out", s(&eight), "--jobs", "8"];
        b.extend(common);
        ok(&a);
        ok(&b);
        let (pa, pb) = (parts(&one), parts(&eight));
        assert_eq!(pa.len(), 5, "49 rows in parts of 10");
        assert_eq!(pa, pb);
    }
}

#[test]
fn rerun_replaces_stale_parts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let fixture = fixture();
    ok(&["extract", s(&fixture), "--out", s(&out), "--rows-per-file", "5"]);
    assert_eq!(parts(&out).len(), 10);
    ok(&["extract", s(&fixture), "--out", s(&out)]);
    assert_eq!(parts(&out).len(), 1);
    assert_eq!(read_rows(&out, Format::Csv).unwrap().len(), 49);
}

fn ids(list: &[(IdScheme, &str)]) -> Vec<Identifier> {
    list.iter().map(|(k, v)| Identifier::new(*k, *v)).collect()
}

fn row(kind: &str, url: Option<&str>, id_list: Vec<Identifier>) -> DatasetRow {
    DatasetRow {
        type_of_citation: kind.into(),
        page_title: "Fixture".into(),
        title: Some("Some title".into()),
        url: url.map(str::to_string),
        tld: None,
        authors: vec![],
        id_list,
        citation: format!("{{{{{kind}}}}}"),
        actual_label: Label::Other,
        acquired_id_list: vec![],
        extra: BTreeMap::new(),
    }
}

/// Twelve rows covering every rule and their priorities, with the label the
/// rules give and all input labels deliberately wrong.
fn rule_fixture() -> Vec<(DatasetRow, Label)> {
    use IdScheme::*;
    vec![
        (row("cite web", None, ids(&[(Pmc, "PMC123")])), Label::Journal),
        (row("cite book", None, ids(&[(Pmid, "42"), (Isbn, "9780306406157")])), Label::Journal),
        (row("cite journal", None, ids(&[(Doi, "10.1/a")])), Label::Journal),
        (row("cite conference", None, ids(&[(Doi, "10.1/b")])), Label::Journal),
        (row("cite book", None, ids(&[(Doi, "10.1/c")])), Label::Other),
        (row("cite book", None, ids(&[(Isbn, "9780306406157")])), Label::Book),
        (row("cite web", Some("https://www.bbc.co.uk/x"), ids(&[(Isbn, "9780306406157")])), Label::Book),
        (row("cite web", Some("https://news.bbc.co.uk/2/hi/1.stm"), vec![]), Label::News),
        (row("cite web", Some("https://www.facebook.com/bbcnews/posts/1"), vec![]), Label::News),
        (row("cite web", Some("https://www.facebook.com/someone"), vec![]), Label::Other),
        (row("cite web", Some("https://example.org/"), vec![]), Label::Other),
        (row("cite news", None, vec![]), Label::Other),
    ]
    .into_iter()
    .map(|(mut r, l)| {
        r.actual_label = if l == Label::Other { Label::News } else { Label::Other };
        (r, l)
    })
    .collect()
}

#[test]
fn classify_applies_the_rules_and_reports_scores() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    let fixture = rule_fixture();
    let rows: Vec<DatasetRow> = fixture.iter().map(|(r, _)| r.clone()).collect();
    write_rows(&rows, &input, WriterOptions::default()).unwrap();
    let news = tmp.path().join("news.txt");
    std::fs::write(&news, "# source=test\nbbc.co.uk\nfacebook.com/bbcnews\n").unwrap();

    let out = tmp.path().join("out");
    ok(&["classify", s(&input), "--out", s(&out), "--news-domains", s(&news)]);
    let got: Vec<Label> = read_rows(&out, Format::Csv).unwrap().iter().map(|r| r.actual_label).collect();
    let want: Vec<Label> = fixture.iter().map(|(_, l)| *l).collect();
    assert_eq!(got, want);

    let metrics: Value = serde_json::from_str(&std::fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["total"], 12);
    assert_eq!((metrics["journals"].as_u64(), metrics["books"].as_u64(), metrics["news"].as_u64()), (Some(4), Some(2), Some(2)));
    assert_eq!(metrics["scientific"], 6);
    assert_eq!(metrics["reliable"], 8);
    assert!((metrics["sci_score"].as_f64().unwrap() - 100.0 * 4.0 / 12.0).abs() < 1e-9);
    assert_eq!(metrics["sci_score2"].as_f64(), Some(50.0));
    assert_eq!(metrics["display"]["rel_score"], "66.67");
    assert_eq!(manifest(&out)["news_lists"].as_object().unwrap().len(), 1);
}

#[test]
fn relabeling_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = fixture();
    let (ex, a, b) = (tmp.path().join("ex"), tmp.path().join("a"), tmp.path().join("b"));
    ok(&["extract", s(&fixture), "--out", s(&ex)]);
    ok(&["classify", s(&ex), "--out", s(&a)]);
    ok(&["classify", s(&a), "--out", s(&b)]);
    assert_eq!(parts(&ex), parts(&a));
    assert_eq!(parts(&a), parts(&b));
}

const LOOKUP_PAGE_A: &str = "One.<ref>{{cite book|title=The Art of Computer Programming|last=Knuth|first=Donald}}</ref>\n\
     Two.<ref>{{cite journal|title=A Relational Model of Data|journal=CACM}}</ref>\n\
     Three.<ref>{{cite book|title=Unknown Tome}}</ref>\n\
     Four.<ref>{{cite web|url=https://www.bbc.co.uk/news/1|title=News item}}</ref>";
const LOOKUP_PAGE_B: &str = "{{cite journal|title=Gene Expression Atlas|journal=Nature}}\n\
     {{cite book|title=Structure and Interpretation of Computer Programs}}\n\
     {{cite book|title=Has an ISBN|isbn=978-0-306-40615-7}}";

fn lookup_setup(dir: &Path) -> (PathBuf, PathBuf) {
    let dump = dump(dir, "lookup.xml", "en", &[page("A", 1, LOOKUP_PAGE_A), page("B", 2, LOOKUP_PAGE_B)]);
    let db = dir.join("mock.json");
    let records = serde_json::json!([
        {"title": "The Art of Computer Programming", "ids": [{"scheme": "ISBN", "value": "9780201896831"}]},
        {"query": "A Relational Model of Data", "title": "A relational model of data for large shared data banks",
         "ids": [{"scheme": "DOI", "value": "10.1145/362384.362685"}]},
        {"title": "Structure and interpretation of computer programs",
         "ids": [{"scheme": "ISBN", "value": "9780262510875"}]}
    ]);
    std::fs::write(&db, records.to_string()).unwrap();
    (dump, db)
}

#[test]
fn mock_lookup_augments_matching_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let (dump, db) = lookup_setup(tmp.path());
    let (ex, lk) = (tmp.path().join("ex"), tmp.path().join("lk"));
    ok(&["extract", s(&dump), "--out", s(&ex)]);
    ok(&["lookup", s(&ex), "--out", s(&lk), "--endpoint", "mock", "--mock-db", s(&db), "--batch-size", "2"]);
    let rows = read_rows(&lk, Format::Csv).unwrap();
    let acquired: Vec<(String, Vec<Identifier>)> = rows
        .iter()
        .filter(|r| !r.acquired_id_list.is_empty())
        .map(|r| (r.title.clone().unwrap(), r.acquired_id_list.clone()))
        .collect();
    assert_eq!(
        acquired,
        [
            ("The Art of Computer Programming".to_string(), ids(&[(IdScheme::Isbn, "9780201896831")])),
            (
                "Structure and Interpretation of Computer Programs".to_string(),
                ids(&[(IdScheme::Isbn, "9780262510875")])
            ),
        ]
    );
    let m = manifest(&lk);
    assert_eq!(m["counts"]["lookup"]["requests"], 5);
    assert_eq!(m["counts"]["lookup"]["outcomes"]["accepted"], 2);
    assert_eq!(m["counts"]["lookup"]["outcomes"]["rejected"], 1);
    assert_eq!(m["threshold"], 0.1);
}

#[test]
fn interrupted_lookup_resumes_to_the_same_result() {
    let tmp = tempfile::tempdir().unwrap();
    let (dump, db) = lookup_setup(tmp.path());
    let (ex, whole, stepwise) = (tmp.path().join("ex"), tmp.path().join("whole"), tmp.path().join("steps"));
    ok(&["extract", s(&dump), "--out", s(&ex)]);
    let base = ["--endpoint", "mock", "--mock-db", s(&db), "--batch-size", "2"];
    let mut args = vec!["lookup", s(&ex), "--out", s(&whole)];
    args.extend(base);
    ok(&args);

    let mut args = vec!["lookup", s(&ex), "--out", s(&stepwise), "--max-batches", "1"];
    args.extend(base);
    for _ in 0..2 {
        ok(&args);
        assert!(parts(&stepwise).is_empty());
        assert_eq!(manifest(&stepwise)["status"], "incomplete");
    }
    ok(&args);
    assert_eq!(manifest(&stepwise)["status"], "complete");
    assert_eq!(parts(&stepwise), parts(&whole));
}

#[test]
fn chained_stages_equal_a_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let (dump, db) = lookup_setup(tmp.path());
    let d = |n: &str| tmp.path().join(n);
    let lookup_flags = ["--endpoint", "mock", "--mock-db", s(&db), "--batch-size", "2"];

    for format in ["csv", "jsonl"] {
        let (ex, cl, lk, all) = (d(&format!("ex-{format}")), d(&format!("cl-{format}")), d(&format!("lk-{format}")), d(&format!("all-{format}")));
        ok(&["extract", s(&dump), "--out", s(&ex), "--format", format]);
        ok(&["classify", s(&ex), "--out", s(&cl)]);
        let mut args = vec!["lookup", s(&cl), "--out", s(&lk)];
        args.extend(lookup_flags);
        ok(&args);

        let mut args = vec!["extract", s(&dump), "--out", s(&all), "--all", "--format", format];
        args.extend(lookup_flags);
        ok(&args);

        assert!(!parts(&all).is_empty());
        assert_eq!(parts(&lk), parts(&all));
        assert_eq!(
            std::fs::read(cl.join("metrics.json")).unwrap(),
            std::fs::read(all.join("metrics.json")).unwrap()
        );
        let m = manifest(&all);
        for stage in ["dump", "extract", "classify", "lookup"] {
            assert!(m["counts"][stage].is_object(), "missing {stage} counts");
        }
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    std::fs::write(&config, r#"{"format": "jsonl", "jobs": 2}"#).unwrap();
    let fixture = fixture();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["--config", s(&config), "extract", s(&fixture), "--out", s(&a)]);
    assert!(a.join("part-00000.jsonl").is_file());
    ok(&["extract", s(&fixture), "--out", s(&b), "--config", s(&config), "--format", "csv"]);
    assert!(b.join("part-00000.csv").is_file());
    let m = manifest(&b);
    assert_eq!(m["settings"]["jobs"], 2);
    assert_eq!(m["settings"]["format"], "csv");
    assert_ne!(m["config_digest"], manifest(&a)["config_digest"]);
}

#[test]
fn input_errors_exit_with_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(code(&["extract", "/nonexistent/dump.xml", "--out", s(&out)]), 2);
    assert_eq!(manifest(&out)["status"], "failed");

    let broken = tmp.path().join("broken.xml");
    std::fs::write(&broken, "<mediawiki><page><title>A</title><ns>0</ns><id>1</id><revision><text>x</oops>").unwrap();
    assert_eq!(code(&["extract", s(&broken), "--out", s(&out)]), 2);

    let unlabeled = dump(tmp.path(), "nolang.xml", "", &[]);
    std::fs::write(&unlabeled, "<mediawiki><page><title>A</title><ns>0</ns><id>1</id><revision><text>t</text></revision></page></mediawiki>").unwrap();
    assert_eq!(code(&["extract", s(&unlabeled), "--out", s(&out)]), 2);
    ok(&["extract", s(&unlabeled), "--out", s(&out), "--language", "en"]);

    let empty_dir = tmp.path().join("nothing");
    std::fs::create_dir(&empty_dir).unwrap();
    assert_eq!(code(&["classify", s(&empty_dir), "--out", s(&out)]), 2);
}

#[test]
fn config_errors_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let fixture = fixture();
    let out = tmp.path().join("out");
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"jobz": 2}"#).unwrap();
    assert_eq!(code(&["--config", s(&bad), "extract", s(&fixture), "--out", s(&out)]), 3);
    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(code(&["--config", s(&bad), "extract", s(&fixture), "--out", s(&out)]), 3);
    assert_eq!(code(&["extract", s(&fixture), "--out", s(&out), "--language", "xx"]), 3);
    assert_eq!(code(&["extract", s(&fixture), "--out", s(&out), "--tables-dir", "/nonexistent"]), 3);
    assert_eq!(code(&["extract", s(&fixture), "--out", s(&out), "--news-domains", "/nonexistent.txt"]), 3);

    ok(&["extract", s(&fixture), "--out", s(&out)]);
    let lk = tmp.path().join("lk");
    assert_eq!(code(&["lookup", s(&out), "--out", s(&lk), "--endpoint", "mock"]), 3);
    assert_eq!(code(&["lookup", s(&out), "--out", s(&lk), "--endpoint", "carrier-pigeon"]), 3);
    assert_eq!(code(&["lookup", s(&out), "--out", s(&lk), "--threshold", "2"]), 3);
}

#[test]
fn exhausted_failure_budget_exits_with_4() {
    let tmp = tempfile::tempdir().unwrap();
    let (dump, _) = lookup_setup(tmp.path());
    let (ex, lk) = (tmp.path().join("ex"), tmp.path().join("lk"));
    ok(&["extract", s(&dump), "--out", s(&ex)]);
    let status = code(&[
        "lookup", s(&ex), "--out", s(&lk),
        "--endpoint", "crossref", "--crossref-url", "http://127.0.0.1:9",
        "--failure-budget", "0", "--max-retries", "0", "--min-interval-ms", "0", "--timeout-secs", "5",
    ]);
    assert_eq!(status, 4);
    assert_eq!(manifest(&lk)["status"], "budget_exceeded");
    assert!(parts(&lk).is_empty());
}

#[test]
fn stats_compares_two_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let write = |name: &str, labels: &[(Label, usize)]| {
        let rows: Vec<DatasetRow> = labels
            .iter()
            .flat_map(|(l, n)| std::iter::repeat_n(DatasetRow { actual_label: *l, ..row("cite web", None, vec![]) }, *n))
            .collect();
        let dir = tmp.path().join(name);
        write_rows(&rows, &dir, WriterOptions::default()).unwrap();
        dir
    };
    let old = write("old", &[(Label::Journal, 10), (Label::Other, 90)]);
    let new = write("new", &[(Label::Journal, 11), (Label::Other, 99)]);
    let out = tmp.path().join("stats");
    let run = ok(&["stats", s(&old), s(&new), "--out", s(&out), "--metrics-language", "xx"]);
    let table = String::from_utf8(run.stdout).unwrap();
    assert!(table.contains("xx old") && table.contains("xx new"), "{table}");
    assert!(table.contains("+10.0%"), "{table}");
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(doc["reports"].as_array().unwrap().len(), 2);
    assert_eq!(doc["delta"]["fields"][0]["field"], "citations");
    assert!(out.join("manifest.json").is_file());
}
