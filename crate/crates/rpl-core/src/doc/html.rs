//! HTML subset parser: a fixed tag set with inline styles only.
//!
//! Allowed tags: `p div span h1..h6 pre code a`. An element hides itself and
//! its whole subtree when its inline style sets `display:none`,
//! `visibility:hidden`, or `font-size:0`, or when it carries the `hidden`
//! attribute. Comments are skipped; entities are not decoded.

use super::{DocError, DocFormat, Section, Span, SpanKind};

fn tag_allowed(tag: &str) -> bool {
    matches!(
        tag,
        "p" | "div" | "span" | "h1" | "h2" | "h3" | "h4" | "h5" | "h6" | "pre" | "code" | "a"
    )
}

fn is_heading_tag(tag: &str) -> bool {
    matches!(tag, "h1" | "h2" | "h3" | "h4" | "h5" | "h6")
}

struct OpenElement {
    tag: String,
    hidden: bool,
}

pub(super) fn parse(source: &str) -> Result<(Vec<Span>, Vec<Section>), DocError> {
    let mut spans: Vec<Span> = Vec::new();
    let mut sections: Vec<Section> = Vec::new();
    let mut stack: Vec<OpenElement> = Vec::new();

    let mut section_start = 0usize;
    let mut section_title = String::new();
    // Set while a heading element is open: (stack depth, span index at open).
    let mut heading_depth: Option<(usize, usize)> = None;
    let mut heading_text = String::new();

    let err = |reason: &str| DocError::new(DocFormat::Html, reason.to_string());

    let bytes = source.as_bytes();
    let mut pos = 0usize;
    while pos < bytes.len() {
        if bytes[pos] == b'<' {
            if source[pos..].starts_with("<!--") {
                let close = source[pos..]
                    .find("-->")
                    .ok_or_else(|| err("unterminated comment"))?;
                pos += close + 3;
                continue;
            }
            let end = source[pos..]
                .find('>')
                .ok_or_else(|| err("unterminated tag"))?;
            let inner = &source[pos + 1..pos + end];
            if let Some(name) = inner.strip_prefix('/') {
                let name = name.trim().to_ascii_lowercase();
                let open = stack.pop().ok_or_else(|| err("close tag without open"))?;
                if open.tag != name {
                    return Err(err(&format!(
                        "mismatched close tag </{name}> for <{}>",
                        open.tag
                    )));
                }
                if let Some((depth, first_span)) = heading_depth {
                    if depth == stack.len() {
                        // heading element closed: section boundary
                        push_section(&mut sections, &section_title, section_start, first_span);
                        section_title = heading_text.trim().to_string();
                        section_start = spans.len();
                        heading_depth = None;
                        heading_text.clear();
                    }
                }
            } else {
                let (name, attrs) = split_tag(inner);
                let name = name.to_ascii_lowercase();
                if !tag_allowed(&name) {
                    return Err(err(&format!("tag <{name}> outside subset")));
                }
                let hidden = element_hidden(attrs);
                if is_heading_tag(&name) && heading_depth.is_none() {
                    heading_depth = Some((stack.len(), spans.len()));
                    heading_text.clear();
                }
                stack.push(OpenElement { tag: name, hidden });
            }
            pos += end + 1;
        } else {
            let next_tag = source[pos..]
                .find('<')
                .map(|i| pos + i)
                .unwrap_or(bytes.len());
            let raw = &source[pos..next_tag];
            if !raw.trim().is_empty() {
                if stack.is_empty() {
                    return Err(err("text outside any element"));
                }
                let lead = raw.len() - raw.trim_start().len();
                let text = raw.trim();
                let start = pos + lead;
                let visible = !stack.iter().any(|e| e.hidden);
                let in_heading = heading_depth
                    .map(|(depth, _)| stack.len() > depth)
                    .unwrap_or(false);
                if in_heading {
                    if !heading_text.is_empty() {
                        heading_text.push(' ');
                    }
                    heading_text.push_str(text);
                }
                let kind = if !visible {
                    SpanKind::HiddenElement
                } else if in_heading {
                    SpanKind::Heading
                } else {
                    SpanKind::Body
                };
                spans.push(Span {
                    text: text.to_string(),
                    visible,
                    origin: start..start + text.len(),
                    kind,
                });
            }
            pos = next_tag;
        }
    }
    if let Some(open) = stack.last() {
        return Err(err(&format!("unclosed <{}>", open.tag)));
    }
    push_section(&mut sections, &section_title, section_start, spans.len());
    Ok((spans, sections))
}

fn push_section(sections: &mut Vec<Section>, title: &str, start: usize, end: usize) {
    if start < end || !title.is_empty() {
        sections.push(Section {
            title: title.to_string(),
            span_range: start..end,
        });
    }
}

fn split_tag(inner: &str) -> (&str, &str) {
    match inner.find(char::is_whitespace) {
        Some(i) => (&inner[..i], &inner[i..]),
        None => (inner, ""),
    }
}

/// The four invisibility conditions this subset recognizes.
fn element_hidden(attrs: &str) -> bool {
    if attr_present(attrs, "hidden") {
        return true;
    }
    let Some(style) = attr_value(attrs, "style") else {
        return false;
    };
    style.split(';').any(|decl| {
        let mut parts = decl.splitn(2, ':');
        let prop = parts.next().unwrap_or("").trim().to_ascii_lowercase();
        let value = parts.next().unwrap_or("").trim().to_ascii_lowercase();
        match prop.as_str() {
            "display" => value == "none",
            "visibility" => value == "hidden",
            "font-size" => {
                let num: String = value
                    .chars()
                    .take_while(|c| c.is_ascii_digit() || *c == '.')
                    .collect();
                !num.is_empty() && num.parse::<f64>() == Ok(0.0)
            }
            _ => false,
        }
    })
}

fn attr_present(attrs: &str, name: &str) -> bool {
    attrs
        .split_whitespace()
        .any(|a| a.eq_ignore_ascii_case(name) || a.to_ascii_lowercase().starts_with(&format!("{name}=")))
}

fn attr_value<'a>(attrs: &'a str, name: &str) -> Option<&'a str> {
    let lower = attrs.to_ascii_lowercase();
    let key = format!("{name}=\"");
    let start = lower.find(&key)? + key.len();
    let end = attrs[start..].find('"')? + start;
    Some(&attrs[start..end])
}
