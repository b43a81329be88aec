//! Invisible payload injection.
//!
//! Each document format has one invisible carrier feature. Injection splices
//! the payload into the source bytes as a single new invisible span, leaving
//! the render view byte-identical; the inserted byte range is recorded on the
//! returned document so the edit can be undone exactly.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc::{parse_document, DocError, DocFormat, Document, InjectedRegion, SpanKind};

/// A format feature that carries parser-visible but render-invisible text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvisibleFeature {
    /// Extra words on a fenced code block's info line.
    MdFenceInfo,
    /// A `<span style="display:none">` element.
    HtmlHiddenSpan,
    /// A text object drawn with render mode 3.
    PdfInvisibleText,
}

impl InvisibleFeature {
    pub fn format(self) -> DocFormat {
        match self {
            InvisibleFeature::MdFenceInfo => DocFormat::Markdown,
            InvisibleFeature::HtmlHiddenSpan => DocFormat::Html,
            InvisibleFeature::PdfInvisibleText => DocFormat::Pdf,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InvisibleFeature::MdFenceInfo => "md-fence-info",
            InvisibleFeature::HtmlHiddenSpan => "html-hidden-span",
            InvisibleFeature::PdfInvisibleText => "pdf-invisible-text",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "md-fence-info" => Some(InvisibleFeature::MdFenceInfo),
            "html-hidden-span" => Some(InvisibleFeature::HtmlHiddenSpan),
            "pdf-invisible-text" => Some(InvisibleFeature::PdfInvisibleText),
            _ => None,
        }
    }
}

/// Where to place a payload, expressed against a document's span list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionPoint {
    pub span_index: usize,
    /// Character offset within the span's text. `0` means before the span's
    /// carrier; anything else means after it (text spans cannot be split
    /// without changing the render view).
    pub offset: usize,
    /// Span index of the crucial content this point was planned against.
    pub anchor: Option<usize>,
}

impl InjectionPoint {
    pub fn new(span_index: usize, offset: usize) -> Self {
        Self {
            span_index,
            offset,
            anchor: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum InjectError {
    #[error("feature {feature:?} does not apply to {format} documents")]
    FeatureFormatMismatch {
        feature: InvisibleFeature,
        format: DocFormat,
    },
    #[error("no carrier for {feature:?} at span {span_index}: {reason}")]
    NoCarrierAtPoint {
        feature: InvisibleFeature,
        span_index: usize,
        reason: String,
    },
    #[error("payload would escape its invisible container: {0}")]
    PayloadBreaksCarrier(String),
    #[error(transparent)]
    Doc(#[from] DocError),
}

/// The invisible features applicable to a format. Non-empty for every
/// supported format.
pub fn list_features(format: DocFormat) -> Vec<InvisibleFeature> {
    match format {
        DocFormat::Markdown => vec![InvisibleFeature::MdFenceInfo],
        DocFormat::Html => vec![InvisibleFeature::HtmlHiddenSpan],
        DocFormat::Pdf => vec![InvisibleFeature::PdfInvisibleText],
    }
}

/// Hide `payload` inside `doc` at `point` using `feature`.
///
/// The render view of the result is byte-identical to the original's and the
/// parser view contains the payload. An empty payload returns the document
/// unchanged.
pub fn inject(
    doc: &Document,
    payload: &str,
    point: &InjectionPoint,
    feature: InvisibleFeature,
) -> Result<Document, InjectError> {
    if feature.format() != doc.format {
        return Err(InjectError::FeatureFormatMismatch {
            feature,
            format: doc.format,
        });
    }
    if payload.is_empty() {
        return Ok(doc.clone());
    }
    check_payload(payload, feature)?;

    let (insert_at, inserted) = match feature {
        InvisibleFeature::MdFenceInfo => md_fence_insertion(doc, payload, point)?,
        InvisibleFeature::HtmlHiddenSpan => html_insertion(doc, payload, point)?,
        InvisibleFeature::PdfInvisibleText => pdf_insertion(doc, payload, point)?,
    };

    let mut source = String::with_capacity(doc.source.len() + inserted.len());
    source.push_str(&doc.source[..insert_at]);
    source.push_str(&inserted);
    source.push_str(&doc.source[insert_at..]);

    let mut injected = parse_document(&source, doc.format)?;
    injected.injected = Some(InjectedRegion {
        byte_range: insert_at..insert_at + inserted.len(),
        payload: payload.to_string(),
    });
    Ok(injected)
}

fn check_payload(payload: &str, feature: InvisibleFeature) -> Result<(), InjectError> {
    if payload.contains("```") {
        return Err(InjectError::PayloadBreaksCarrier(
            "payload contains a fence marker".into(),
        ));
    }
    if payload.contains("</") || payload.contains('<') {
        return Err(InjectError::PayloadBreaksCarrier(
            "payload contains markup".into(),
        ));
    }
    if payload.contains('\n') && feature != InvisibleFeature::PdfInvisibleText {
        return Err(InjectError::PayloadBreaksCarrier(
            "payload contains a line break".into(),
        ));
    }
    Ok(())
}

/// Insert after the language word of the fence owning the pointed-at span.
fn md_fence_insertion(
    doc: &Document,
    payload: &str,
    point: &InjectionPoint,
) -> Result<(usize, String), InjectError> {
    let span = doc.spans.get(point.span_index).ok_or_else(|| {
        InjectError::NoCarrierAtPoint {
            feature: InvisibleFeature::MdFenceInfo,
            span_index: point.span_index,
            reason: "span index out of bounds".into(),
        }
    })?;
    if !matches!(span.kind, SpanKind::CodeBody | SpanKind::FenceInfo) {
        return Err(InjectError::NoCarrierAtPoint {
            feature: InvisibleFeature::MdFenceInfo,
            span_index: point.span_index,
            reason: format!("span is {:?}, not a fenced code block", span.kind),
        });
    }
    // Walk back from the span to its opening fence line.
    let fence_line_start = doc.source[..span.origin.start]
        .rfind("```")
        .ok_or_else(|| InjectError::NoCarrierAtPoint {
            feature: InvisibleFeature::MdFenceInfo,
            span_index: point.span_index,
            reason: "opening fence not found".into(),
        })?;
    let info_start = fence_line_start + 3;
    let line_end = doc.source[info_start..]
        .find('\n')
        .map(|i| info_start + i)
        .unwrap_or(doc.source.len());
    let info = &doc.source[info_start..line_end];
    let lang_len = info
        .find(char::is_whitespace)
        .unwrap_or(info.len());
    // After the language word, separated by a single space.
    Ok((info_start + lang_len, format!(" {payload}")))
}

/// Insert a hidden span element before or after the host span's position.
fn html_insertion(
    doc: &Document,
    payload: &str,
    point: &InjectionPoint,
) -> Result<(usize, String), InjectError> {
    let span = doc.spans.get(point.span_index).ok_or_else(|| {
        InjectError::NoCarrierAtPoint {
            feature: InvisibleFeature::HtmlHiddenSpan,
            span_index: point.span_index,
            reason: "span index out of bounds".into(),
        }
    })?;
    let element = format!("<span style=\"display:none\">{payload}</span>");
    let insert_at = if point.offset == 0 {
        // before the host element's opening tag
        doc.source[..span.origin.start]
            .rfind('<')
            .unwrap_or(span.origin.start)
    } else {
        // after the host element's closing tag
        doc.source[span.origin.end..]
            .find('>')
            .map(|i| span.origin.end + i + 1)
            .unwrap_or(doc.source.len())
    };
    Ok((insert_at, element))
}

/// Insert a render-mode-3 text object after the carrier text object.
fn pdf_insertion(
    doc: &Document,
    payload: &str,
    point: &InjectionPoint,
) -> Result<(usize, String), InjectError> {
    let span = doc.spans.get(point.span_index).ok_or_else(|| {
        InjectError::NoCarrierAtPoint {
            feature: InvisibleFeature::PdfInvisibleText,
            span_index: point.span_index,
            reason: "span index out of bounds".into(),
        }
    })?;
    let et_at = doc.source[span.origin.end..]
        .find("ET")
        .map(|i| span.origin.end + i + 2)
        .ok_or_else(|| InjectError::NoCarrierAtPoint {
            feature: InvisibleFeature::PdfInvisibleText,
            span_index: point.span_index,
            reason: "carrier text object has no ET".into(),
        })?;
    let block = format!(
        "\nBT /F1 12 Tf 72 0 Td 3 Tr ({}) Tj 0 Tr ET",
        crate::doc::write::pdf_escape(payload)
    );
    Ok((et_at, block))
}

/// True iff the injected document renders identically to the original while
/// its parser view carries the payload.
pub fn verify_invisibility(original: &Document, injected: &Document, payload: &str) -> bool {
    original.format == injected.format
        && original.render_view() == injected.render_view()
        && injected.parser_view().contains(payload)
}

/// Remove the recorded injected bytes, returning the original source.
pub fn strip_injection(doc: &Document) -> Option<String> {
    let region = doc.injected.as_ref()?;
    let mut source = String::with_capacity(doc.source.len());
    source.push_str(&doc.source[..region.byte_range.start]);
    source.push_str(&doc.source[region.byte_range.end..]);
    Some(source)
}
