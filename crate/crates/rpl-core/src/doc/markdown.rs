//! Markdown subset parser: ATX headings, paragraphs, fenced code blocks.
//!
//! The fence info string is the remainder of the opening ``` line; its first
//! whitespace-delimited word is the language and stays out of both views,
//! while anything after the language becomes an invisible `FenceInfo` span.

use super::{DocError, DocFormat, Section, Span, SpanKind};

const FENCE: &str = "```";

pub(super) fn parse(source: &str) -> Result<(Vec<Span>, Vec<Section>), DocError> {
    let mut spans: Vec<Span> = Vec::new();
    let mut sections: Vec<Section> = Vec::new();
    let mut section_start = 0usize; // first body span index of the open section
    let mut section_title = String::new();

    let mut para_start: Option<usize> = None; // byte offset of open paragraph
    let mut para_end = 0usize;

    let mut offset = 0usize;
    let mut lines = LineIter::new(source);

    macro_rules! flush_para {
        () => {
            if let Some(start) = para_start.take() {
                spans.push(Span {
                    text: source[start..para_end].to_string(),
                    visible: true,
                    origin: start..para_end,
                    kind: SpanKind::Body,
                });
            }
        };
    }

    while let Some(line) = lines.next_line() {
        let line_start = offset;
        offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);

        if let Some(info) = content.strip_prefix(FENCE) {
            flush_para!();
            parse_fence(source, line_start, info, &mut lines, &mut offset, &mut spans)?;
        } else if let Some((level, text_off)) = heading_prefix(content) {
            flush_para!();
            // close the open section before starting the new one
            push_section(&mut sections, &section_title, section_start, spans.len());
            let text = content[text_off..].trim_end();
            let start = line_start + text_off;
            spans.push(Span {
                text: text.to_string(),
                visible: true,
                origin: start..start + text.len(),
                kind: SpanKind::Heading,
            });
            section_title = text.to_string();
            section_start = spans.len();
            let _ = level;
        } else if content.trim().is_empty() {
            flush_para!();
        } else {
            if para_start.is_none() {
                para_start = Some(line_start);
            }
            para_end = line_start + content.len();
        }
    }
    flush_para!();
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

/// Returns `(level, byte offset of heading text)` for an ATX heading line.
fn heading_prefix(line: &str) -> Option<(usize, usize)> {
    let level = line.bytes().take_while(|&b| b == b'#').count();
    if !(1..=6).contains(&level) {
        return None;
    }
    let rest = &line[level..];
    let trimmed = rest.trim_start();
    if trimmed.is_empty() || rest.len() == trimmed.len() {
        return None; // "#foo" or a bare "#" is a paragraph in this subset
    }
    Some((level, line.len() - trimmed.len()))
}

fn parse_fence(
    source: &str,
    fence_start: usize,
    info: &str,
    lines: &mut LineIter<'_>,
    offset: &mut usize,
    spans: &mut Vec<Span>,
) -> Result<(), DocError> {
    // Info string: first word is the language, the rest is hidden freight.
    let info_base = fence_start + FENCE.len();
    let lang_len = info.find(char::is_whitespace).unwrap_or(info.len());
    let extra_raw = &info[lang_len..];
    let extra = extra_raw.trim();
    if !extra.is_empty() {
        let pad = extra_raw.len() - extra_raw.trim_start().len();
        let start = info_base + lang_len + pad;
        spans.push(Span {
            text: extra.to_string(),
            visible: false,
            origin: start..start + extra.len(),
            kind: SpanKind::FenceInfo,
        });
    }

    let body_start = *offset;
    let mut body_end = body_start;
    loop {
        let Some(line) = lines.next_line() else {
            return Err(DocError::new(DocFormat::Markdown, "unclosed code fence"));
        };
        let line_start = *offset;
        *offset += line.len();
        let content = line.trim_end_matches(['\n', '\r']);
        if content.trim() == FENCE {
            break;
        }
        body_end = line_start + content.len();
    }
    if body_end > body_start {
        spans.push(Span {
            text: source[body_start..body_end].to_string(),
            visible: true,
            origin: body_start..body_end,
            kind: SpanKind::CodeBody,
        });
    }
    Ok(())
}

/// Iterator over lines that keeps their terminators, so byte offsets add up.
struct LineIter<'a> {
    rest: &'a str,
}

impl<'a> LineIter<'a> {
    fn new(s: &'a str) -> Self {
        Self { rest: s }
    }

    fn next_line(&mut self) -> Option<&'a str> {
        if self.rest.is_empty() {
            return None;
        }
        let end = self
            .rest
            .find('\n')
            .map(|i| i + 1)
            .unwrap_or(self.rest.len());
        let (line, rest) = self.rest.split_at(end);
        self.rest = rest;
        Some(line)
    }
}
