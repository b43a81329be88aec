//! PDF subset parser: uncompressed content streams with text operators only.
//!
//! Recognized operators are `BT`/`ET`, `Tf`, `Td`, `Tj`, and `Tr`. Text drawn
//! while the render mode is 3 is invisible. The `/Length` entry of stream
//! dictionaries is informative; streams are delimited by the `stream` and
//! `endstream` keywords. Anything else in the file (object dictionaries,
//! xref, trailer) is carried but not interpreted.

use super::{DocError, DocFormat, Section, Span, SpanKind};

pub(super) fn parse(source: &str) -> Result<(Vec<Span>, Vec<Section>), DocError> {
    let mut spans = Vec::new();
    for range in stream_ranges(source)? {
        parse_stream(source, range, &mut spans)?;
    }
    // PDF documents carry no section structure in this subset.
    Ok((spans, Vec::new()))
}

fn err(reason: impl Into<String>) -> DocError {
    DocError::new(DocFormat::Pdf, reason.into())
}

/// Byte ranges of the content between each `stream`/`endstream` pair.
fn stream_ranges(source: &str) -> Result<Vec<std::ops::Range<usize>>, DocError> {
    let mut ranges = Vec::new();
    let mut pos = 0usize;
    while let Some(found) = source[pos..].find("stream") {
        let kw = pos + found;
        // skip matches that are the tail of "endstream"
        if kw >= 3 && &source[kw - 3..kw] == "end" {
            pos = kw + "stream".len();
            continue;
        }
        let mut start = kw + "stream".len();
        if source[start..].starts_with("\r\n") {
            start += 2;
        } else if source[start..].starts_with('\n') {
            start += 1;
        }
        let end = source[start..]
            .find("endstream")
            .map(|i| start + i)
            .ok_or_else(|| err("stream without endstream"))?;
        ranges.push(start..end);
        pos = end + "endstream".len();
    }
    Ok(ranges)
}

#[derive(Debug)]
enum Operand {
    Number(f64),
    Name,
    Str { text: String, origin: std::ops::Range<usize> },
}

fn parse_stream(
    source: &str,
    range: std::ops::Range<usize>,
    spans: &mut Vec<Span>,
) -> Result<(), DocError> {
    let bytes = source.as_bytes();
    let mut pos = range.start;
    let mut stack: Vec<Operand> = Vec::new();
    let mut in_text = false;
    let mut render_mode = 0i64;

    while pos < range.end {
        let b = bytes[pos];
        if b.is_ascii_whitespace() {
            pos += 1;
        } else if b == b'(' {
            let (text, content, next) = parse_string(source, pos, range.end)?;
            stack.push(Operand::Str {
                text,
                origin: content,
            });
            pos = next;
        } else if b == b'/' {
            let end = scan_token(bytes, pos + 1, range.end);
            stack.push(Operand::Name);
            pos = end;
        } else if b == b'-' || b == b'.' || b.is_ascii_digit() {
            let end = scan_token(bytes, pos, range.end);
            let n: f64 = source[pos..end]
                .parse()
                .map_err(|_| err(format!("bad number {:?}", &source[pos..end])))?;
            stack.push(Operand::Number(n));
            pos = end;
        } else if b.is_ascii_alphabetic() {
            let end = scan_token(bytes, pos, range.end);
            let op = &source[pos..end];
            apply_operator(op, &mut stack, &mut in_text, &mut render_mode, spans)?;
            pos = end;
        } else {
            return Err(err(format!("unexpected byte {:?} in stream", b as char)));
        }
    }
    if in_text {
        return Err(err("BT without matching ET"));
    }
    if !stack.is_empty() {
        return Err(err("dangling operands at end of stream"));
    }
    Ok(())
}

fn apply_operator(
    op: &str,
    stack: &mut Vec<Operand>,
    in_text: &mut bool,
    render_mode: &mut i64,
    spans: &mut Vec<Span>,
) -> Result<(), DocError> {
    match op {
        "BT" => {
            if *in_text {
                return Err(err("nested BT"));
            }
            if !stack.is_empty() {
                return Err(err("operands before BT"));
            }
            *in_text = true;
        }
        "ET" => {
            if !*in_text {
                return Err(err("ET without BT"));
            }
            if !stack.is_empty() {
                return Err(err("operands left before ET"));
            }
            *in_text = false;
        }
        "Tf" => {
            require_text(*in_text, op)?;
            let size = pop_number(stack, op)?;
            match stack.pop() {
                Some(Operand::Name) => {}
                _ => return Err(err("Tf expects a font name")),
            }
            let _ = size;
        }
        "Td" => {
            require_text(*in_text, op)?;
            pop_number(stack, op)?;
            pop_number(stack, op)?;
        }
        "Tr" => {
            require_text(*in_text, op)?;
            let mode = pop_number(stack, op)? as i64;
            if !(0..=7).contains(&mode) {
                return Err(err(format!("render mode {mode} out of range")));
            }
            *render_mode = mode;
        }
        "Tj" => {
            require_text(*in_text, op)?;
            let Some(Operand::Str { text, origin }) = stack.pop() else {
                return Err(err("Tj expects a string"));
            };
            let invisible = *render_mode == 3;
            if !text.is_empty() {
                spans.push(Span {
                    text,
                    visible: !invisible,
                    origin,
                    kind: if invisible {
                        SpanKind::InvisiblePdfText
                    } else {
                        SpanKind::Body
                    },
                });
            }
        }
        other => return Err(err(format!("unknown operator {other:?}"))),
    }
    Ok(())
}

fn require_text(in_text: bool, op: &str) -> Result<(), DocError> {
    if in_text {
        Ok(())
    } else {
        Err(err(format!("{op} outside BT/ET")))
    }
}

fn pop_number(stack: &mut Vec<Operand>, op: &str) -> Result<f64, DocError> {
    match stack.pop() {
        Some(Operand::Number(n)) => Ok(n),
        _ => Err(err(format!("{op} expects a number"))),
    }
}

fn scan_token(bytes: &[u8], mut pos: usize, end: usize) -> usize {
    while pos < end {
        let b = bytes[pos];
        if b.is_ascii_whitespace() || b == b'(' || b == b'/' || b == b')' {
            break;
        }
        pos += 1;
    }
    pos
}

/// Parse a `(...)` string literal starting at `open`. Returns the unescaped
/// text, the byte range of the content between the parentheses, and the
/// position just past the closing parenthesis.
fn parse_string(
    source: &str,
    open: usize,
    end: usize,
) -> Result<(String, std::ops::Range<usize>, usize), DocError> {
    let bytes = source.as_bytes();
    let mut text = String::new();
    let mut depth = 1usize;
    let mut pos = open + 1;
    while pos < end {
        match bytes[pos] {
            b'\\' => {
                let esc = *bytes
                    .get(pos + 1)
                    .ok_or_else(|| err("dangling escape in string"))?;
                match esc {
                    b'\\' => text.push('\\'),
                    b'(' => text.push('('),
                    b')' => text.push(')'),
                    b'n' => text.push('\n'),
                    other => {
                        return Err(err(format!("unsupported escape \\{}", other as char)))
                    }
                }
                pos += 2;
            }
            b'(' => {
                depth += 1;
                text.push('(');
                pos += 1;
            }
            b')' => {
                depth -= 1;
                if depth == 0 {
                    return Ok((text, open + 1..pos, pos + 1));
                }
                text.push(')');
                pos += 1;
            }
            _ => {
                let ch_len = source[pos..].chars().next().map(char::len_utf8).unwrap_or(1);
                text.push_str(&source[pos..pos + ch_len]);
                pos += ch_len;
            }
        }
    }
    Err(err("unbalanced parenthesis in string"))
}
