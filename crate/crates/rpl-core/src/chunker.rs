//! Framework-style text splitters and injection position planning.
//!
//! The length splitter produces fixed-size chunks at stride
//! `chunk_size - overlap`; the section splitter produces one chunk per
//! section of the document's heading map. [`plan_position`] picks an
//! injection offset that keeps the payload and the crucial content inside a
//! single chunk, validating candidates by actually re-splitting.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::doc::Document;
use crate::inject::InjectionPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitterKind {
    LengthBased,
    SectionBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitterConfig {
    pub kind: SplitterKind,
    /// Chunk length in characters (length-based only).
    pub chunk_size: usize,
    /// Characters shared between consecutive chunks (length-based only).
    pub overlap: usize,
}

impl SplitterConfig {
    pub fn length(chunk_size: usize, overlap: usize) -> Self {
        Self {
            kind: SplitterKind::LengthBased,
            chunk_size,
            overlap,
        }
    }

    pub fn sections() -> Self {
        Self {
            kind: SplitterKind::SectionBased,
            chunk_size: 0,
            overlap: 0,
        }
    }

    fn validate(&self) -> Result<(), ChunkError> {
        if self.kind == SplitterKind::LengthBased
            && (self.chunk_size == 0 || self.overlap >= self.chunk_size)
        {
            return Err(ChunkError::InvalidConfig {
                chunk_size: self.chunk_size,
                overlap: self.overlap,
            });
        }
        Ok(())
    }
}

/// One retrievable unit of text with its position in the parser view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub text: String,
    pub range: Range<usize>,
    /// Index of the owning section, for section-based splits.
    pub section: Option<usize>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChunkError {
    #[error("invalid splitter config: chunk_size {chunk_size}, overlap {overlap}")]
    InvalidConfig { chunk_size: usize, overlap: usize },
    #[error("no feasible injection position: {0}")]
    NoFeasiblePosition(String),
    #[error("crucial range {0:?} outside parser view of length {1}")]
    CrucialOutOfBounds(Range<usize>, usize),
}

/// Section map type: `(title, parser-view char range)` per section.
pub type SectionMap = [(String, Range<usize>)];

/// Split `text` into chunks. Empty input yields an empty list.
///
/// Length-based chunks start at multiples of the stride and the last chunk
/// may be short; section-based splitting emits one chunk per section body,
/// with the whole text as a single implicit section when the map is empty.
pub fn split(
    text: &str,
    config: &SplitterConfig,
    sections: &SectionMap,
) -> Result<Vec<Chunk>, ChunkError> {
    config.validate()?;
    if text.is_empty() {
        return Ok(Vec::new());
    }
    match config.kind {
        SplitterKind::LengthBased => {
            let stride = config.chunk_size - config.overlap;
            let mut chunks = Vec::new();
            let mut start = 0usize;
            loop {
                let end = (start + config.chunk_size).min(text.len());
                chunks.push(Chunk {
                    text: text[start..end].to_string(),
                    range: start..end,
                    section: None,
                });
                if end == text.len() {
                    break;
                }
                start += stride;
            }
            Ok(chunks)
        }
        SplitterKind::SectionBased => {
            if sections.is_empty() {
                return Ok(vec![Chunk {
                    text: text.to_string(),
                    range: 0..text.len(),
                    section: Some(0),
                }]);
            }
            Ok(sections
                .iter()
                .enumerate()
                .filter(|(_, (_, r))| !r.is_empty())
                .map(|(i, (_, r))| Chunk {
                    text: text[r.clone()].to_string(),
                    range: r.clone(),
                    section: Some(i),
                })
                .collect())
        }
    }
}

/// Result of planning: the span-level point plus its parser-view offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlannedPosition {
    pub point: InjectionPoint,
    /// Insertion offset in parser-view characters.
    pub view_offset: usize,
}

/// Find an injection offset such that, after inserting `payload_len`
/// characters there, some chunk of the re-split text contains both the whole
/// payload and the whole (shifted) crucial range.
///
/// Candidates are tried nearest to the crucial span first, alternating after
/// and before it; each is validated against an actual re-split of the
/// post-injection text.
pub fn plan_position(
    doc: &Document,
    crucial: Range<usize>,
    config: &SplitterConfig,
    payload_len: usize,
) -> Result<PlannedPosition, ChunkError> {
    config.validate()?;
    let text = doc.parser_view();
    if crucial.start >= crucial.end || crucial.end > text.len() {
        return Err(ChunkError::CrucialOutOfBounds(crucial, text.len()));
    }
    assert!(payload_len > 0, "payload length must be positive");

    match config.kind {
        SplitterKind::SectionBased => {
            let sections = doc.section_char_ranges();
            if sections.is_empty() {
                // single implicit section: anywhere co-locates; use the start
                return Ok(make_planned(doc, 0, &crucial));
            }
            let section = sections
                .iter()
                .find(|(_, r)| r.start <= crucial.start && crucial.end <= r.end)
                .ok_or_else(|| {
                    ChunkError::NoFeasiblePosition(
                        "crucial content spans a section boundary".into(),
                    )
                })?;
            Ok(make_planned(doc, section.1.start, &crucial))
        }
        SplitterKind::LengthBased => {
            let crucial_len = crucial.end - crucial.start;
            if config.chunk_size < payload_len + crucial_len {
                return Err(ChunkError::NoFeasiblePosition(format!(
                    "chunk size {} cannot hold payload {} plus crucial {}",
                    config.chunk_size, payload_len, crucial_len
                )));
            }
            // Chunk ranges depend only on the post-injection length; split a
            // placeholder of that length once and test candidates against it.
            let placeholder = "x".repeat(text.len() + payload_len);
            let chunks = split(&placeholder, config, &[])?;
            for offset in candidate_offsets(&crucial, text.len()) {
                let payload_range = offset..offset + payload_len;
                let shifted = if offset <= crucial.start {
                    crucial.start + payload_len..crucial.end + payload_len
                } else {
                    crucial.clone()
                };
                let hit = chunks.iter().any(|c| {
                    c.range.start <= payload_range.start
                        && payload_range.end <= c.range.end
                        && c.range.start <= shifted.start
                        && shifted.end <= c.range.end
                });
                if hit {
                    return Ok(make_planned(doc, offset, &crucial));
                }
            }
            Err(ChunkError::NoFeasiblePosition(
                "no offset keeps payload and crucial content in one chunk".into(),
            ))
        }
    }
}

fn make_planned(doc: &Document, view_offset: usize, crucial: &Range<usize>) -> PlannedPosition {
    let (span_index, offset) = doc
        .locate_view_offset(view_offset)
        .unwrap_or((doc.spans.len().saturating_sub(1), 0));
    let anchor = doc.locate_view_offset(crucial.start).map(|(s, _)| s);
    PlannedPosition {
        point: InjectionPoint {
            span_index,
            offset,
            anchor,
        },
        view_offset,
    }
}

/// Offsets ordered by distance from the crucial range, nearest first,
/// alternating the after-side and before-side. Offsets strictly inside the
/// crucial range would split it and are never yielded.
fn candidate_offsets(crucial: &Range<usize>, len: usize) -> impl Iterator<Item = usize> {
    let after_max = len - crucial.end;
    let before_max = crucial.start;
    let (start, end) = (crucial.start, crucial.end);
    (0..=after_max.max(before_max)).flat_map(move |d| {
        let after = (d <= after_max).then_some(end + d);
        let before = (d <= before_max).then(|| start - d);
        after.into_iter().chain(before)
    })
}

/// Reconstruct the original text from length-based chunks by dropping each
/// successive chunk's overlapping prefix. Used by tests as a coverage oracle.
pub fn reassemble_length_chunks(chunks: &[Chunk]) -> String {
    let mut out = String::new();
    for (i, c) in chunks.iter().enumerate() {
        if i == 0 {
            out.push_str(&c.text);
        } else {
            let prev_end = chunks[i - 1].range.end;
            let skip = prev_end.saturating_sub(c.range.start).min(c.text.len());
            out.push_str(&c.text[skip..]);
        }
    }
    out
}
