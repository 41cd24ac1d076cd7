//! Template and `<ref>` extraction from raw Wikicode.
//!
//! This is not a full Wikicode parser. It recognizes exactly the structure
//! needed to pull citation templates out of a page body:
//!
//! * `{{ ... }}` template invocations, matched as balanced brace pairs,
//! * `<ref>` elements (paired and self-closing),
//! * `[[ ... ]]` links, which only matter as nesting when splitting parameters,
//! * HTML comments and `<nowiki>` regions, which are opaque.
//!
//! Opaque regions are masked rather than removed, so every span reported here
//! indexes into the original page text.

use std::ops::Range;

/// One template invocation found at the top level of a page.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawTemplate {
    /// Canonical name, see [`normalize_template_name`].
    pub name: String,
    /// Parameters in source order. Positional parameters have no key.
    pub params: Vec<(Option<String>, String)>,
    /// Byte range of the whole `{{ ... }}` region in the page.
    pub span: Range<usize>,
    pub inside_ref: bool,
    pub ref_name: Option<String>,
}

impl RawTemplate {
    /// Parameters with positional ones keyed by their 1-based position,
    /// the way MediaWiki numbers them.
    pub fn keyed_params(&self) -> Vec<(String, &str)> {
        let mut position = 0usize;
        self.params
            .iter()
            .map(|(key, value)| match key {
                Some(k) => (k.clone(), value.as_str()),
                None => {
                    position += 1;
                    (position.to_string(), value.as_str())
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefTag {
    pub name: Option<String>,
    pub content: String,
    pub self_closing: bool,
    /// Byte range of the whole element, tags included.
    pub span: Range<usize>,
    /// Byte range of `content` within the page. Empty for self-closing tags.
    pub content_span: Range<usize>,
}

/// Counters for ref-level irregularities seen while scanning a page.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RefDiagnostics {
    /// `<ref>` with no closing tag; its content runs to the end of the page.
    pub unterminated: usize,
    /// Self-closing `<ref name=.../>` reuses of an earlier definition.
    pub reused: usize,
    /// Self-closing refs without a name, which carry nothing.
    pub malformed: usize,
}

impl RefDiagnostics {
    pub fn merge(&mut self, other: &RefDiagnostics) {
        self.unterminated += other.unterminated;
        self.reused += other.reused;
        self.malformed += other.malformed;
    }
}

#[derive(Debug, Clone, Default)]
pub struct RefScan {
    pub refs: Vec<RefTag>,
    pub diagnostics: RefDiagnostics,
}

/// Everything extracted from one page body.
#[derive(Debug, Clone, Default)]
pub struct PageScan {
    pub templates: Vec<RawTemplate>,
    pub refs: Vec<RefTag>,
    pub diagnostics: RefDiagnostics,
}

/// Regions in which no markup is recognized: comments and `<nowiki>`.
#[derive(Debug, Default)]
struct OpaqueMask {
    regions: Vec<Range<usize>>,
}

impl OpaqueMask {
    fn build(text: &str) -> Self {
        let bytes = text.as_bytes();
        let mut regions = Vec::new();
        let mut i = 0;
        while i < bytes.len() {
            if bytes[i] != b'<' {
                i += 1;
                continue;
            }
            if bytes[i..].starts_with(b"<!--") {
                let end = find(bytes, b"-->", i + 4).map_or(bytes.len(), |p| p + 3);
                regions.push(i..end);
                i = end;
            } else if starts_with_ignore_case(&bytes[i..], b"<nowiki") {
                let Some(tag_end) = find(bytes, b">", i) else {
                    break;
                };
                if bytes[tag_end - 1] == b'/' {
                    regions.push(i..tag_end + 1);
                    i = tag_end + 1;
                    continue;
                }
                let end = find_ignore_case(bytes, b"</nowiki>", tag_end + 1)
                    .map_or(bytes.len(), |p| p + b"</nowiki>".len());
                regions.push(i..end);
                i = end;
            } else {
                i += 1;
            }
        }
        OpaqueMask { regions }
    }

    /// If `pos` starts an opaque region, the end of that region.
    fn skip_at(&self, pos: usize) -> Option<usize> {
        self.regions
            .binary_search_by(|r| r.start.cmp(&pos))
            .ok()
            .map(|idx| self.regions[idx].end)
    }

    fn contains(&self, pos: usize) -> bool {
        let idx = self.regions.partition_point(|r| r.start <= pos);
        idx > 0 && self.regions[idx - 1].end > pos
    }
}

fn find(hay: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if from > hay.len() {
        return None;
    }
    hay[from..]
        .windows(needle.len())
        .position(|w| w == needle)
        .map(|p| p + from)
}

fn find_ignore_case(hay: &[u8], needle: &[u8], from: usize) -> Option<usize> {
    if from > hay.len() {
        return None;
    }
    hay[from..]
        .windows(needle.len())
        .position(|w| w.eq_ignore_ascii_case(needle))
        .map(|p| p + from)
}

fn starts_with_ignore_case(hay: &[u8], prefix: &[u8]) -> bool {
    hay.len() >= prefix.len() && hay[..prefix.len()].eq_ignore_ascii_case(prefix)
}

/// Balanced `{{ ... }}` regions that are not enclosed by another balanced
/// region. Braces pair greedily left to right; a closer with nothing open is
/// literal text, and an opener that is never closed is literal text too.
fn top_level_brace_spans(text: &str, mask: &OpaqueMask) -> Vec<Range<usize>> {
    let bytes = text.as_bytes();
    let mut open: Vec<usize> = Vec::new();
    let mut pairs: Vec<Range<usize>> = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        if let Some(end) = mask.skip_at(i) {
            i = end;
            continue;
        }
        if bytes[i..].starts_with(b"{{") {
            open.push(i);
            i += 2;
        } else if bytes[i..].starts_with(b"}}") {
            if let Some(start) = open.pop() {
                pairs.push(start..i + 2);
            }
            i += 2;
        } else {
            i += 1;
        }
    }
    pairs.sort_by_key(|r| r.start);
    let mut top = Vec::new();
    let mut covered_to = 0usize;
    for pair in pairs {
        if pair.start >= covered_to {
            covered_to = pair.end;
            top.push(pair);
        }
    }
    top
}

/// Split `text` at every depth-0 occurrence of `sep`. Depth counts `{{ }}`
/// and `[[ ]]`; opaque regions never split.
fn split_depth0(text: &str, sep: u8, mask: &OpaqueMask, base: usize, limit: usize) -> Vec<Range<usize>> {
    let bytes = text.as_bytes();
    let mut parts = Vec::new();
    let mut braces = 0usize;
    let mut links = 0usize;
    let mut seg_start = 0usize;
    let mut i = 0;
    while i < bytes.len() {
        if let Some(end) = mask.skip_at(base + i) {
            i = (end - base).min(bytes.len());
            continue;
        }
        let rest = &bytes[i..];
        if rest.starts_with(b"{{") {
            braces += 1;
            i += 2;
        } else if rest.starts_with(b"}}") {
            braces = braces.saturating_sub(1);
            i += 2;
        } else if rest.starts_with(b"[[") {
            links += 1;
            i += 2;
        } else if rest.starts_with(b"]]") {
            links = links.saturating_sub(1);
            i += 2;
        } else if bytes[i] == sep && braces == 0 && links == 0 && parts.len() + 1 < limit {
            parts.push(seg_start..i);
            seg_start = i + 1;
            i += 1;
        } else {
            i += 1;
        }
    }
    parts.push(seg_start..bytes.len());
    parts
}

fn strip_comments(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("<!--") {
        out.push_str(&rest[..start]);
        match rest[start + 4..].find("-->") {
            Some(end) => rest = &rest[start + 4 + end + 3..],
            None => {
                rest = "";
                break;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Split a template body (the text after the name's `|`) into parameters.
///
/// Segments split on `|` at nesting depth 0; each segment splits on its first
/// depth-0 `=`. Keys are trimmed and lowercased, values are only trimmed.
pub fn parse_params(inner: &str) -> Vec<(Option<String>, String)> {
    let mask = OpaqueMask::build(inner);
    parse_params_masked(inner, &mask, 0)
}

fn parse_params_masked(inner: &str, mask: &OpaqueMask, base: usize) -> Vec<(Option<String>, String)> {
    split_depth0(inner, b'|', mask, base, usize::MAX)
        .into_iter()
        .map(|seg| {
            let segment = &inner[seg.clone()];
            let kv = split_depth0(segment, b'=', mask, base + seg.start, 2);
            if kv.len() == 2 {
                let key = strip_comments(&segment[kv[0].clone()]).trim().to_lowercase();
                let value = segment[kv[1].clone()].trim().to_string();
                (Some(key), value)
            } else {
                (None, segment.trim().to_string())
            }
        })
        .collect()
}

/// Canonical template name: trimmed, runs of whitespace and underscores
/// collapsed to one space, first character lowercased.
pub fn normalize_template_name(raw: &str) -> String {
    let cleaned = strip_comments(raw);
    let mut collapsed = String::with_capacity(cleaned.len());
    let mut pending_space = false;
    for ch in cleaned.chars() {
        if ch.is_whitespace() || ch == '_' {
            pending_space = !collapsed.is_empty();
        } else {
            if pending_space {
                collapsed.push(' ');
                pending_space = false;
            }
            collapsed.push(ch);
        }
    }
    let mut chars = collapsed.chars();
    match chars.next() {
        Some(first) => first.to_lowercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn templates_with_mask(text: &str, mask: &OpaqueMask) -> Vec<RawTemplate> {
    top_level_brace_spans(text, mask)
        .into_iter()
        .map(|span| {
            let body_range = span.start + 2..span.end - 2;
            let body = &text[body_range.clone()];
            let head = split_depth0(body, b'|', mask, body_range.start, 2);
            let name = normalize_template_name(&body[head[0].clone()]);
            let params = match head.get(1) {
                Some(rest) => parse_params_masked(&body[rest.clone()], mask, body_range.start + rest.start),
                None => Vec::new(),
            };
            RawTemplate {
                name,
                params,
                span,
                inside_ref: false,
                ref_name: None,
            }
        })
        .collect()
}

/// Every top-level template in source order. Templates nested in a parameter
/// value stay verbatim inside that value.
pub fn extract_templates(wikitext: &str) -> Vec<RawTemplate> {
    scan_page(wikitext).templates
}

/// Every `<ref>` element in source order.
pub fn extract_refs(wikitext: &str) -> Vec<RefTag> {
    scan_refs(wikitext).refs
}

pub fn scan_refs(wikitext: &str) -> RefScan {
    let mask = OpaqueMask::build(wikitext);
    scan_refs_masked(wikitext, &mask)
}

fn scan_refs_masked(text: &str, mask: &OpaqueMask) -> RefScan {
    let bytes = text.as_bytes();
    let mut scan = RefScan::default();
    let mut i = 0;
    while let Some(pos) = find_ignore_case(bytes, b"<ref", i) {
        if mask.contains(pos) {
            i = pos + 1;
            continue;
        }
        let after = pos + 4;
        match bytes.get(after) {
            Some(b'>') | Some(b'/') => {}
            Some(c) if c.is_ascii_whitespace() => {}
            _ => {
                i = after;
                continue;
            }
        }
        let Some(tag_end) = find(bytes, b">", after) else {
            break;
        };
        let self_closing = bytes[tag_end - 1] == b'/';
        let attr_end = if self_closing { tag_end - 1 } else { tag_end };
        let name = parse_name_attribute(&text[after..attr_end.max(after)]);
        if self_closing {
            if name.is_some() {
                scan.diagnostics.reused += 1;
                scan.refs.push(RefTag {
                    name,
                    content: String::new(),
                    self_closing: true,
                    span: pos..tag_end + 1,
                    content_span: tag_end + 1..tag_end + 1,
                });
            } else {
                scan.diagnostics.malformed += 1;
            }
            i = tag_end + 1;
            continue;
        }
        let content_start = tag_end + 1;
        let (content_end, elem_end) = match find_closing_ref(bytes, content_start, mask) {
            Some((c_end, e_end)) => (c_end, e_end),
            None => {
                scan.diagnostics.unterminated += 1;
                (bytes.len(), bytes.len())
            }
        };
        scan.refs.push(RefTag {
            name,
            content: text[content_start..content_end].to_string(),
            self_closing: false,
            span: pos..elem_end,
            content_span: content_start..content_end,
        });
        i = elem_end;
    }
    scan
}

/// Start of `</ref ... >` and the index just past it.
fn find_closing_ref(bytes: &[u8], from: usize, mask: &OpaqueMask) -> Option<(usize, usize)> {
    let mut i = from;
    while let Some(pos) = find_ignore_case(bytes, b"</ref", i) {
        if mask.contains(pos) {
            i = pos + 1;
            continue;
        }
        let mut j = pos + 5;
        while j < bytes.len() && bytes[j].is_ascii_whitespace() {
            j += 1;
        }
        if bytes.get(j) == Some(&b'>') {
            return Some((pos, j + 1));
        }
        i = pos + 1;
    }
    None
}

/// Value of the `name` attribute in the inside of a tag, in double-quoted,
/// single-quoted or bare form.
fn parse_name_attribute(attrs: &str) -> Option<String> {
    let mut rest = attrs;
    loop {
        rest = rest.trim_start();
        if rest.is_empty() {
            return None;
        }
        let key_len = rest
            .find(|c: char| c == '=' || c.is_whitespace())
            .unwrap_or(rest.len());
        let key = &rest[..key_len];
        let mut after = rest[key_len..].trim_start();
        if !after.starts_with('=') {
            // valueless attribute
            rest = after;
            if key_len == 0 {
                rest = &rest[rest.chars().next().map_or(0, char::len_utf8)..];
            }
            continue;
        }
        after = after[1..].trim_start();
        let (value, remaining) = match after.chars().next() {
            Some(q @ ('"' | '\'')) => match after[1..].find(q) {
                Some(end) => (&after[1..1 + end], &after[2 + end..]),
                None => (&after[1..], ""),
            },
            _ => {
                let end = after.find(char::is_whitespace).unwrap_or(after.len());
                (&after[..end], &after[end..])
            }
        };
        if key.eq_ignore_ascii_case("name") {
            let value = value.trim();
            return (!value.is_empty()).then(|| value.to_string());
        }
        rest = remaining;
    }
}

/// Templates and refs of a page, with each template marked when its span lies
/// inside a ref's content.
pub fn scan_page(wikitext: &str) -> PageScan {
    let mask = OpaqueMask::build(wikitext);
    let mut templates = templates_with_mask(wikitext, &mask);
    let RefScan { refs, diagnostics } = scan_refs_masked(wikitext, &mask);
    let mut ref_iter = refs.iter().filter(|r| !r.self_closing).peekable();
    for template in &mut templates {
        while ref_iter
            .peek()
            .is_some_and(|r| r.content_span.end < template.span.end)
        {
            ref_iter.next();
        }
        if let Some(r) = ref_iter.peek() {
            if r.content_span.start <= template.span.start && template.span.end <= r.content_span.end {
                template.inside_ref = true;
                template.ref_name = r.name.clone();
            }
        }
    }
    PageScan {
        templates,
        refs,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(k: &str, v: &str) -> (Option<String>, String) {
        (Some(k.to_string()), v.to_string())
    }

    #[test]
    fn empty_text_has_no_templates() {
        assert!(extract_templates("").is_empty());
        assert!(extract_refs("").is_empty());
    }

    #[test]
    fn cite_web_params() {
        let t = extract_templates("{{cite web|url=https://www.bbc.co.uk/|title=News}}");
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].name, "cite web");
        assert_eq!(t[0].params, vec![kv("url", "https://www.bbc.co.uk/"), kv("title", "News")]);
        assert_eq!(t[0].span, 0..50);
    }

    #[test]
    fn nested_template_stays_verbatim() {
        let t = extract_templates("{{cite book|title={{lang|en|Moby Dick}}|year=1851}}");
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].name, "cite book");
        assert_eq!(t[0].params, vec![kv("title", "{{lang|en|Moby Dick}}"), kv("year", "1851")]);
    }

    #[test]
    fn sibling_templates_in_order() {
        let src = "a {{A}} b {{B|x=1}} c";
        let t = extract_templates(src);
        let names: Vec<_> = t.iter().map(|t| t.name.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
        assert_eq!(&src[t[0].span.clone()], "{{A}}");
        assert_eq!(&src[t[1].span.clone()], "{{B|x=1}}");
        assert_eq!(t[1].params, vec![kv("x", "1")]);
    }

    #[test]
    fn dangling_opener_is_ignored() {
        let src = "{{ a {{b}} c";
        let t = extract_templates(src);
        assert_eq!(t.len(), 1);
        assert_eq!(&src[t[0].span.clone()], "{{b}}");
        assert!(extract_templates("{{never closed").is_empty());
        assert!(extract_templates("}} stray {{").is_empty());
    }

    #[test]
    fn params_definitions() {
        assert_eq!(parse_params("url=a|title=b"), vec![kv("url", "a"), kv("title", "b")]);
        assert_eq!(parse_params("first|last=x"), vec![(None, "first".into()), kv("last", "x")]);
        assert_eq!(parse_params("title=a=b"), vec![kv("title", "a=b")]);
        assert_eq!(parse_params(" URL = x "), vec![kv("url", "x")]);
    }

    #[test]
    fn params_respect_links_and_nowiki() {
        assert_eq!(
            parse_params("title=[[Foo|bar]]|x=<nowiki>a|b=c</nowiki>"),
            vec![kv("title", "[[Foo|bar]]"), kv("x", "<nowiki>a|b=c</nowiki>")]
        );
        assert_eq!(parse_params("q={{x|y=z}}"), vec![kv("q", "{{x|y=z}}")]);
    }

    #[test]
    fn keyed_params_number_positionals() {
        let t = &extract_templates("{{link|en|2=http://a|Title}}")[0];
        let keyed = t.keyed_params();
        assert_eq!(keyed, vec![("1".to_string(), "en"), ("2".to_string(), "http://a"), ("2".to_string(), "Title")]);
    }

    #[test]
    fn name_normalization() {
        assert_eq!(normalize_template_name("Cite_web "), "cite web");
        assert_eq!(normalize_template_name("cita libro"), "cita libro");
        assert_eq!(normalize_template_name("  Internetquelle"), "internetquelle");
        assert_eq!(normalize_template_name("Книга"), "книга");
        assert_eq!(normalize_template_name("Cite__ \n web"), "cite web");
        assert_eq!(normalize_template_name("Cite web<!-- x -->"), "cite web");
        assert_eq!(normalize_template_name(""), "");
    }

    #[test]
    fn comments_and_nowiki_are_opaque() {
        let src = "<!-- {{cite web|url=x}} --> <nowiki>{{cite book}}</nowiki> {{real}}";
        let t = extract_templates(src);
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].name, "real");
        // a comment inside a template hides its braces
        let t = extract_templates("{{cite web|title=a <!-- }} --> b}}");
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].params, vec![kv("title", "a <!-- }} --> b")]);
    }

    #[test]
    fn self_closing_ref() {
        let refs = extract_refs(r#"<ref name="a"/>"#);
        assert_eq!(refs.len(), 1);
        assert_eq!(refs[0].name.as_deref(), Some("a"));
        assert_eq!(refs[0].content, "");
        assert!(refs[0].self_closing);
    }

    #[test]
    fn paired_ref_content() {
        let refs = extract_refs("<ref>{{cite web|url=u}}</ref>");
        assert_eq!(refs.len(), 1);
        assert_eq!(refs[0].content, "{{cite web|url=u}}");
        assert!(!refs[0].self_closing);
        assert_eq!(refs[0].name, None);
    }

    #[test]
    fn three_refs_in_order() {
        let src = "A<ref name=x>one</ref> B<REF name='y' /> C<Ref group=n name = \"z\" >three</ref >";
        let scan = scan_refs(src);
        let names: Vec<_> = scan.refs.iter().map(|r| r.name.clone().unwrap()).collect();
        assert_eq!(names, ["x", "y", "z"]);
        assert_eq!(scan.refs[0].content, "one");
        assert!(scan.refs[1].self_closing);
        assert_eq!(scan.refs[2].content, "three");
        assert_eq!(scan.diagnostics.reused, 1);
    }

    #[test]
    fn unterminated_ref_runs_to_end() {
        let scan = scan_refs("x <ref>{{cite web|url=u}} tail");
        assert_eq!(scan.refs.len(), 1);
        assert_eq!(scan.refs[0].content, "{{cite web|url=u}} tail");
        assert_eq!(scan.diagnostics.unterminated, 1);
    }

    #[test]
    fn references_tag_is_not_a_ref() {
        assert!(extract_refs("<references/> <references>x</references>").is_empty());
        let scan = scan_refs("<ref/>");
        assert!(scan.refs.is_empty());
        assert_eq!(scan.diagnostics.malformed, 1);
    }

    #[test]
    fn bare_name_before_slash() {
        let refs = extract_refs("<ref name=foo/>");
        assert_eq!(refs[0].name.as_deref(), Some("foo"));
    }

    #[test]
    fn templates_marked_inside_ref() {
        let src = "Text{{citation needed}}.<ref name=\"r1\">{{cite book|title=T}}</ref> {{cite web|url=u}}";
        let scan = scan_page(src);
        assert_eq!(scan.templates.len(), 3);
        assert!(!scan.templates[0].inside_ref);
        assert!(scan.templates[1].inside_ref);
        assert_eq!(scan.templates[1].ref_name.as_deref(), Some("r1"));
        assert!(!scan.templates[2].inside_ref);
    }

    #[test]
    fn ref_inside_comment_ignored() {
        assert!(extract_refs("<!-- <ref>x</ref> -->").is_empty());
    }
}
