//! Retrieval poisoning lab.
//!
//! A self-contained red-team laboratory for studying retrieval poisoning of
//! retrieval-augmented-generation (RAG) pipelines. The crate covers the whole
//! attack surface end to end:
//!
//! - [`doc`] — a dual-view document model for Markdown, HTML and a small PDF
//!   subset. Every document exposes a *parser view* (what a naive RAG loader
//!   extracts) and a *render view* (what a human sees); their divergence is
//!   the injection surface.
//! - [`inject`] — hides a payload inside a benign document using a
//!   format-specific invisible feature, leaving the render view byte-identical.
//! - [`chunker`] — framework-style text splitters plus injection-position
//!   planning that keeps payload and crucial content in one chunk.
//! - [`retriever`] — a deterministic hashed-trigram embedder and an exact
//!   cosine top-k vector store.
//! - [`prompter`] — prompt-template assembly of augmented requests.
//! - [`oracle`] — tokenizer, a small trainable feed-forward language model,
//!   teacher-forced logits, and exact loss gradients w.r.t. one-hot token
//!   indicators.
//! - [`attack`] — the gradient-guided token mutation loop that crafts attack
//!   sequences and poisoned documents.
//! - [`eval`] — an end-to-end harness producing attack-success-rate reports
//!   and cross-template transfer numbers.
//! - [`scanner`] — the defense side: a differential detector flagging content
//!   a loader extracts but a reader never sees.
//! - [`corpus`] — the built-in synthetic fixture corpus (30 documents with
//!   questions, answers, and attack targets) used by the harness and tests.

pub mod attack;
pub mod chunker;
pub mod corpus;
pub mod doc;
pub mod eval;
pub mod inject;
pub mod oracle;
pub mod prompter;
pub mod retriever;
pub mod scanner;
