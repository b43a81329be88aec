//! Dual-view document model for Markdown, HTML, and a small PDF subset.
//!
//! Every parsed [`Document`] is a flat list of text [`Span`]s, each flagged
//! with whether a human would see it after rendering. The *parser view* is
//! what a naive RAG loader extracts (all spans); the *render view* is what a
//! reader sees (visible spans only). Content that appears in the first but
//! not the second is the injection surface this lab studies.
//!
//! The exact format subsets are specified in `docs/formats.md`.

mod html;
mod markdown;
mod pdf;
pub mod write;

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Document format of a fixture or attack target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocFormat {
    Markdown,
    Html,
    Pdf,
}

impl DocFormat {
    /// Stable short name used in CLI flags, file extensions, and reports.
    pub fn name(self) -> &'static str {
        match self {
            DocFormat::Markdown => "md",
            DocFormat::Html => "html",
            DocFormat::Pdf => "pdf",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "md" | "markdown" => Some(DocFormat::Markdown),
            "html" | "htm" => Some(DocFormat::Html),
            "pdf" => Some(DocFormat::Pdf),
            _ => None,
        }
    }

    /// Infer the format from a file path extension.
    pub fn from_path(path: &std::path::Path) -> Option<Self> {
        path.extension()
            .and_then(|e| e.to_str())
            .and_then(Self::from_name)
    }
}

impl fmt::Display for DocFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// What a span of extracted text is, structurally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanKind {
    /// Ordinary paragraph or free text.
    Body,
    /// Extra words on a fenced code block's info line (after the language).
    FenceInfo,
    /// Text inside an HTML element hidden by style or attribute.
    HiddenElement,
    /// PDF text drawn with render mode 3 (neither filled nor stroked).
    InvisiblePdfText,
    /// Heading text (Markdown ATX or HTML h1..h6).
    Heading,
    /// Body of a fenced code block.
    CodeBody,
}

/// One extracted text run with its visibility and source location.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub text: String,
    /// Whether a rendered view shows this text.
    pub visible: bool,
    /// Byte range of the text inside the source document.
    pub origin: Range<usize>,
    pub kind: SpanKind,
}

/// A section: heading title plus the range of body span indices it owns.
///
/// The title is empty for an implicit preamble section (content before the
/// first heading). PDF documents have no sections at all.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub title: String,
    /// Indices into [`Document::spans`], heading span excluded.
    pub span_range: Range<usize>,
}

/// Byte range inserted by the inject engine, kept so an injection can be
/// stripped to recover the original source exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectedRegion {
    pub byte_range: Range<usize>,
    pub payload: String,
}

/// A parsed document: source bytes plus the ordered span list and section map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub format: DocFormat,
    pub source: String,
    pub spans: Vec<Span>,
    pub sections: Vec<Section>,
    /// Set when this document was produced by the inject engine.
    pub injected: Option<InjectedRegion>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DocError {
    #[error("malformed {format} document: {reason}")]
    MalformedDocument { format: DocFormat, reason: String },
}

impl DocError {
    fn new(format: DocFormat, reason: impl Into<String>) -> Self {
        DocError::MalformedDocument {
            format,
            reason: reason.into(),
        }
    }
}

/// Parse a source document into its span/section representation.
///
/// Visibility flags follow the per-format rules: Markdown fence info tokens
/// after the language word are invisible; HTML elements styled with
/// `display:none`, `visibility:hidden`, `font-size:0`, or carrying the
/// `hidden` attribute are invisible (including their descendants); PDF text
/// shown with render mode 3 is invisible.
pub fn parse_document(source: &str, format: DocFormat) -> Result<Document, DocError> {
    let (spans, sections) = match format {
        DocFormat::Markdown => markdown::parse(source)?,
        DocFormat::Html => html::parse(source)?,
        DocFormat::Pdf => pdf::parse(source)?,
    };
    debug_assert!(spans_ordered(&spans), "span origins must be ordered");
    Ok(Document {
        format,
        source: source.to_string(),
        spans,
        sections,
        injected: None,
    })
}

fn spans_ordered(spans: &[Span]) -> bool {
    spans
        .windows(2)
        .all(|w| w[0].origin.end <= w[1].origin.start)
}

fn join_views<'a>(texts: impl Iterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for (i, t) in texts.enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(t.trim_end());
    }
    out
}

/// The text a naive loader extracts: every span, visible or not, joined by
/// single newlines with trailing whitespace trimmed per span.
pub fn parser_view(doc: &Document) -> String {
    join_views(doc.spans.iter().map(|s| s.text.as_str()))
}

/// The text a human sees after rendering: visible spans only, same joining
/// rule as [`parser_view`].
pub fn render_view(doc: &Document) -> String {
    join_views(
        doc.spans
            .iter()
            .filter(|s| s.visible)
            .map(|s| s.text.as_str()),
    )
}

impl Document {
    pub fn parser_view(&self) -> String {
        parser_view(self)
    }

    pub fn render_view(&self) -> String {
        render_view(self)
    }

    /// Character range of each span's (trimmed) text inside the parser view.
    pub fn span_view_ranges(&self) -> Vec<Range<usize>> {
        let mut ranges = Vec::with_capacity(self.spans.len());
        let mut pos = 0usize;
        for (i, s) in self.spans.iter().enumerate() {
            if i > 0 {
                pos += 1; // separator
            }
            let len = s.text.trim_end().len();
            ranges.push(pos..pos + len);
            pos += len;
        }
        ranges
    }

    /// Section map in parser-view character coordinates, for the chunker.
    ///
    /// Returns one `(title, range)` per section with a non-empty body. A
    /// document without sections (PDF) yields an empty map, which the
    /// section splitter treats as a single implicit section.
    pub fn section_char_ranges(&self) -> Vec<(String, Range<usize>)> {
        let view_ranges = self.span_view_ranges();
        self.sections
            .iter()
            .filter(|sec| !sec.span_range.is_empty())
            .map(|sec| {
                let start = view_ranges[sec.span_range.start].start;
                let end = view_ranges[sec.span_range.end - 1].end;
                (sec.title.clone(), start..end)
            })
            .collect()
    }

    /// Map a parser-view character offset to `(span index, offset in span)`.
    ///
    /// Offsets that land on a separator snap to the start of the following
    /// span. Returns `None` only for an offset past the end of the view.
    pub fn locate_view_offset(&self, offset: usize) -> Option<(usize, usize)> {
        let ranges = self.span_view_ranges();
        for (i, r) in ranges.iter().enumerate() {
            if offset < r.start {
                return Some((i, 0));
            }
            if offset <= r.end {
                return Some((i, offset - r.start));
            }
        }
        None
    }
}
