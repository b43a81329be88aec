//! Writers emitting documents in the exact subsets the parsers accept.
//!
//! The fixture corpus is produced by these builders, so the round-trip
//! guarantee (parse of a written document reproduces the intended spans and
//! visibility flags) holds for everything shipped in-repo.

use std::fmt::Write as _;

/// One logical block of a document to write.
#[derive(Debug, Clone)]
pub enum Block {
    Heading { level: usize, text: String },
    Paragraph(String),
    /// Fenced code block (Markdown) / preformatted block (HTML) / plain
    /// text lines (PDF).
    Code { lang: String, lines: Vec<String> },
}

impl Block {
    pub fn heading(level: usize, text: impl Into<String>) -> Self {
        Block::Heading {
            level,
            text: text.into(),
        }
    }

    pub fn para(text: impl Into<String>) -> Self {
        Block::Paragraph(text.into())
    }

    pub fn code(lang: impl Into<String>, lines: &[&str]) -> Self {
        Block::Code {
            lang: lang.into(),
            lines: lines.iter().map(|s| s.to_string()).collect(),
        }
    }
}

pub fn markdown(blocks: &[Block]) -> String {
    let mut out = String::new();
    for (i, block) in blocks.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        match block {
            Block::Heading { level, text } => {
                let _ = writeln!(out, "{} {}", "#".repeat(*level), text);
            }
            Block::Paragraph(text) => {
                let _ = writeln!(out, "{text}");
            }
            Block::Code { lang, lines } => {
                let _ = writeln!(out, "```{lang}");
                for line in lines {
                    let _ = writeln!(out, "{line}");
                }
                out.push_str("```\n");
            }
        }
    }
    out
}

pub fn html(blocks: &[Block]) -> String {
    let mut out = String::new();
    for block in blocks {
        match block {
            Block::Heading { level, text } => {
                let _ = writeln!(out, "<h{level}>{text}</h{level}>");
            }
            Block::Paragraph(text) => {
                let _ = writeln!(out, "<p>{text}</p>");
            }
            Block::Code { lines, .. } => {
                let _ = writeln!(out, "<pre><code>{}</code></pre>", lines.join("\n"));
            }
        }
    }
    out
}

/// Escape a string for a PDF `(...)` literal.
pub fn pdf_escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '(' => out.push_str("\\("),
            ')' => out.push_str("\\)"),
            '\n' => out.push_str("\\n"),
            other => out.push(other),
        }
    }
    out
}

/// Emit a one-page PDF whose content stream draws each text line with `Tj`.
///
/// Headings and paragraphs alike become plain text lines; PDF has no section
/// structure in this subset. The xref table carries correct byte offsets.
pub fn pdf(blocks: &[Block]) -> String {
    let mut lines: Vec<String> = Vec::new();
    for block in blocks {
        match block {
            Block::Heading { text, .. } => lines.push(text.clone()),
            Block::Paragraph(text) => lines.push(text.clone()),
            Block::Code { lines: code, .. } => lines.extend(code.iter().cloned()),
        }
    }
    pdf_from_lines(&lines)
}

pub fn pdf_from_lines(lines: &[String]) -> String {
    let mut stream = String::new();
    let mut y = 720i64;
    for line in lines {
        let _ = writeln!(
            stream,
            "BT /F1 12 Tf 72 {y} Td ({}) Tj ET",
            pdf_escape(line)
        );
        y -= 18;
    }
    let stream = stream.trim_end().to_string();

    let objects = [
        "<< /Type /Catalog /Pages 2 0 R >>".to_string(),
        "<< /Type /Pages /Kids [3 0 R] /Count 1 >>".to_string(),
        "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 612 792] /Resources << /Font << /F1 5 0 R >> >> /Contents 4 0 R >>"
            .to_string(),
        format!("<< /Length {} >>\nstream\n{}\nendstream", stream.len(), stream),
        "<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica >>".to_string(),
    ];

    let mut out = String::from("%PDF-1.4\n");
    let mut offsets = Vec::with_capacity(objects.len());
    for (i, body) in objects.iter().enumerate() {
        offsets.push(out.len());
        let _ = writeln!(out, "{} 0 obj\n{}\nendobj", i + 1, body);
    }
    let xref_at = out.len();
    let _ = writeln!(out, "xref\n0 {}", objects.len() + 1);
    out.push_str("0000000000 65535 f \n");
    for off in &offsets {
        let _ = writeln!(out, "{off:010} 00000 n ");
    }
    let _ = writeln!(
        out,
        "trailer\n<< /Size {} /Root 1 0 R >>\nstartxref\n{}\n%%EOF",
        objects.len() + 1,
        xref_at
    );
    out
}
