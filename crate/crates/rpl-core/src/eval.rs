//! End-to-end evaluation harness.
//!
//! Each case runs the whole poisoning workflow: parse the clean document,
//! check injection feasibility, simulate the victim pipeline to build the
//! augmented request, optimize the attack sequence, craft the poisoned
//! document, then re-ingest it the way the victim would (split, embed,
//! retrieve, assemble, generate) and score the outcome. Reports aggregate
//! attack success rate, iteration counts, token lengths, retrieval
//! preservation, and per-format injection/success tables.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::{
    craft_document, optimize_sequence, success_check, AttackConfig, AttackError, TargetResponse,
};
use crate::chunker::{plan_position, split, Chunk, ChunkError, SplitterConfig};
use crate::corpus::CorpusCase;
use crate::doc::{parse_document, DocFormat, Document, SpanKind};
use crate::inject::{InjectionPoint, InvisibleFeature};
use crate::oracle::{derive_seed, GenerationConfig, ModelOracle};
use crate::prompter::{assemble, PromptTemplate};
use crate::retriever::{index, retrieve};

/// How the simulated victim application ingests documents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub splitter: SplitterConfig,
    pub template: PromptTemplate,
    pub top_k: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            splitter: SplitterConfig::sections(),
            template: PromptTemplate::direct(),
            top_k: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub attack: AttackConfig,
    pub pipeline: PipelineConfig,
    pub temperatures: Vec<f64>,
    pub max_new_tokens: usize,
    /// Base seed for generation; per-case seeds are derived from it.
    pub gen_seed: u64,
    /// Worker threads for running cases; results are ordered by case index
    /// regardless.
    pub jobs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            attack: AttackConfig::default(),
            pipeline: PipelineConfig::default(),
            temperatures: vec![0.7],
            max_new_tokens: 24,
            gen_seed: 17,
            jobs: 1,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no chunk contains the crucial range")]
    CrucialOutsideChunks,
    #[error("no injection carrier available: {0}")]
    NoCarrier(String),
    #[error(transparent)]
    Chunk(#[from] ChunkError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Inject(#[from] crate::inject::InjectError),
    #[error(transparent)]
    Doc(#[from] crate::doc::DocError),
}

/// One evaluated case row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub doc: String,
    pub format: DocFormat,
    pub temperature: f64,
    pub success: bool,
    /// Payload present in the victim's retrieved content.
    pub conveyed: bool,
    /// Rank-1 retrieval unchanged by the injection.
    pub retrieval_preserved: bool,
    pub iterations: usize,
    pub seq_tokens: usize,
    pub request_tokens: usize,
    pub response_tokens: usize,
    pub final_loss: Option<f64>,
    pub loss_trace: Vec<f64>,
    pub response: String,
    pub failure_reason: Option<String>,
}

/// Everything needed to re-score a successful case under another template.
#[derive(Debug, Clone)]
pub struct TransferInput {
    pub question: String,
    pub chunks: Vec<Chunk>,
    pub target: TargetResponse,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub gen_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregates {
    pub asr_percent: f64,
    pub mean_iterations: f64,
    pub mean_seq_tokens: f64,
    pub mean_request_tokens: f64,
    pub mean_response_tokens: f64,
    pub retrieval_preservation_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormatAggregates {
    pub format: DocFormat,
    pub count: usize,
    pub injected: usize,
    pub injection_percent: f64,
    pub success: usize,
    pub asr_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureRun {
    pub temperature: f64,
    pub aggregates: RunAggregates,
    pub per_format: Vec<FormatAggregates>,
    pub rows: Vec<CaseOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub template: String,
    pub evaluated: usize,
    pub still_successful: usize,
    pub transfer_asr_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: usize,
    pub runs: Vec<TemperatureRun>,
    /// Over every row of every temperature run.
    pub average: RunAggregates,
    pub per_format: Vec<FormatAggregates>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferReport>,
}

/// Select the invisible carrier for a document, preferring the latest legal
/// position inside the chunk that holds the crucial content (payload
/// influence on generation grows toward the end of the assembled request).
pub fn plan_carrier(
    doc: &Document,
    crucial_chunk: &Chunk,
) -> Result<(InvisibleFeature, InjectionPoint), EvalError> {
    let ranges = doc.span_view_ranges();
    let in_chunk = |i: usize| {
        crucial_chunk.range.start <= ranges[i].start && ranges[i].end <= crucial_chunk.range.end
    };
    match doc.format {
        DocFormat::Markdown => {
            let fence = (0..doc.spans.len())
                .rev()
                .find(|&i| doc.spans[i].kind == SpanKind::CodeBody && in_chunk(i))
                .ok_or_else(|| {
                    EvalError::NoCarrier("no fenced code block in the crucial chunk".into())
                })?;
            Ok((InvisibleFeature::MdFenceInfo, InjectionPoint::new(fence, 0)))
        }
        DocFormat::Html => {
            let last = (0..doc.spans.len())
                .rev()
                .find(|&i| in_chunk(i))
                .ok_or_else(|| EvalError::NoCarrier("empty crucial chunk".into()))?;
            Ok((
                InvisibleFeature::HtmlHiddenSpan,
                InjectionPoint::new(last, doc.spans[last].text.len().max(1)),
            ))
        }
        DocFormat::Pdf => {
            if doc.spans.is_empty() {
                return Err(EvalError::NoCarrier("document has no text objects".into()));
            }
            Ok((
                InvisibleFeature::PdfInvisibleText,
                InjectionPoint::new(doc.spans.len() - 1, 1),
            ))
        }
    }
}

/// A case row plus the material needed for transfer evaluation and the
/// crafted document itself (absent when the case failed before crafting).
pub struct CaseRun {
    pub outcome: CaseOutcome,
    pub transfer: Option<TransferInput>,
    pub crafted: Option<Document>,
}

/// The configured filler token, unless it cannot survive injection (reserved
/// markers detokenize to `<...>`, which every carrier rejects); then a plain
/// in-vocab word.
pub fn effective_filler(vocab: &crate::oracle::Vocab, requested: crate::oracle::TokenId) -> crate::oracle::TokenId {
    let safe = |id: crate::oracle::TokenId| {
        let word = vocab.word(id);
        !crate::oracle::Vocab::is_reserved(id)
            && !word.contains('<')
            && !word.contains("```")
            && !word.contains('\n')
    };
    if safe(requested) {
        return requested;
    }
    vocab
        .id("the")
        .filter(|&id| safe(id))
        .or_else(|| (0..vocab.len()).find(|&id| safe(id)))
        .unwrap_or(requested)
}

fn failed_case(case: &CorpusCase, temperature: f64, reason: String) -> CaseRun {
    CaseRun {
        outcome: CaseOutcome {
            doc: case.manifest.doc.clone(),
            format: case.manifest.format,
            temperature,
            success: false,
            conveyed: false,
            retrieval_preserved: false,
            iterations: 0,
            seq_tokens: 0,
            request_tokens: 0,
            response_tokens: 0,
            final_loss: None,
            loss_trace: Vec::new(),
            response: String::new(),
            failure_reason: Some(reason),
        },
        transfer: None,
        crafted: None,
    }
}

/// Run one attack case end to end at one temperature. Per-stage errors are
/// recorded as failure reasons, never panics.
pub fn run_case(
    oracle: &dyn ModelOracle,
    case: &CorpusCase,
    config: &EvalConfig,
    temperature: f64,
    case_seed: u64,
) -> CaseRun {
    match run_case_inner(oracle, case, config, temperature, case_seed) {
        Ok(run) => run,
        Err(e) => failed_case(case, temperature, e.to_string()),
    }
}

fn run_case_inner(
    oracle: &dyn ModelOracle,
    case: &CorpusCase,
    config: &EvalConfig,
    temperature: f64,
    case_seed: u64,
) -> Result<CaseRun, EvalError> {
    let vocab = oracle.vocab();
    let doc = &case.document;
    let crucial = case.crucial_range();
    if case.manifest.crucial.trim().is_empty() {
        return Ok(failed_case(case, temperature, "empty crucial string".into()));
    }
    let target =
        TargetResponse::from_text(vocab, &case.manifest.target_response, &case.manifest.crucial)?;

    // Clean victim pipeline: split, index, retrieve.
    let view = doc.parser_view();
    let sections = doc.section_char_ranges();
    let chunks = split(&view, &config.pipeline.splitter, &sections)?;
    let clean_store = index(&chunks);
    let clean_hits = retrieve(&clean_store, &case.manifest.question, config.pipeline.top_k);
    let clean_rank1 = clean_hits.first().map(|h| h.id);

    // Feasibility gate, then snap to the format's invisible carrier.
    let attack_cfg = AttackConfig {
        seed: derive_seed(config.attack.seed, case_seed),
        filler_token: effective_filler(vocab, config.attack.filler_token),
        ..config.attack
    };
    let placeholder = vocab.detokenize(&vec![attack_cfg.filler_token; attack_cfg.init_length]);
    plan_position(doc, crucial.clone(), &config.pipeline.splitter, placeholder.len())?;
    let crucial_chunk = chunks
        .iter()
        .find(|c| c.range.start <= crucial.start && crucial.end <= c.range.end)
        .ok_or(EvalError::CrucialOutsideChunks)?
        .clone();
    let (feature, point) = plan_carrier(doc, &crucial_chunk)?;

    // Attacker-side simulation: inject a placeholder of the sequence's
    // initial shape, rebuild the augmented request the victim would see, and
    // locate the sequence slot inside it.
    let simulated = crate::inject::inject(doc, &placeholder, &point, feature)?;
    let sim_view = simulated.parser_view();
    let sim_sections = simulated.section_char_ranges();
    let sim_chunks = split(&sim_view, &config.pipeline.splitter, &sim_sections)?;
    let sim_store = index(&sim_chunks);
    let sim_hits = retrieve(&sim_store, &case.manifest.question, config.pipeline.top_k);
    let sim_retrieved: Vec<Chunk> = sim_hits.iter().map(|h| sim_chunks[h.id].clone()).collect();
    let sim_areq = assemble(
        &config.pipeline.template,
        &sim_retrieved,
        &case.manifest.question,
    );
    let Some(slot) = sim_areq.text.find(&placeholder) else {
        // The placeholder was not retrieved: the injection already fails to
        // reach the model, so optimization has nothing to attack.
        return Ok(failed_case(
            case,
            temperature,
            "payload chunk not retrieved during attack simulation".into(),
        ));
    };
    let prefix = vocab.tokenize(&sim_areq.text[..slot]);
    let suffix = vocab.tokenize(&sim_areq.text[slot + placeholder.len()..]);

    // Optimize the sequence in the simulated request.
    let gen = GenerationConfig::new(
        temperature,
        config.max_new_tokens,
        derive_seed(config.gen_seed, case_seed),
    );
    let result = optimize_sequence(oracle, &prefix, &suffix, &target, &attack_cfg, &gen);

    // Craft the poisoned document and run the victim on it.
    let crafted = craft_document(doc, &result.seq, vocab, feature, &point)?;
    let victim_doc = parse_document(&crafted.source, crafted.format)?;
    let victim_view = victim_doc.parser_view();
    let victim_sections = victim_doc.section_char_ranges();
    let victim_chunks = split(&victim_view, &config.pipeline.splitter, &victim_sections)?;
    let victim_store = index(&victim_chunks);
    let victim_hits = retrieve(&victim_store, &case.manifest.question, config.pipeline.top_k);
    let victim_retrieved: Vec<Chunk> = victim_hits
        .iter()
        .map(|h| victim_chunks[h.id].clone())
        .collect();
    let conveyed = victim_retrieved
        .iter()
        .any(|c| c.text.contains(&result.seq_text));
    let retrieval_preserved = victim_hits.first().map(|h| h.id) == clean_rank1;

    let victim_areq = assemble(
        &config.pipeline.template,
        &victim_retrieved,
        &case.manifest.question,
    );
    let request_tokens = vocab.tokenize(&victim_areq.text);
    let victim_gen = gen.with_seed(derive_seed(gen.seed, 0xE2E));
    let response_tokens = oracle.generate(&request_tokens, &victim_gen);
    let response = vocab.detokenize(&response_tokens);
    // Success requires the payload to actually reach the model.
    let success = conveyed && success_check(&response, &target);

    let transfer = success.then(|| TransferInput {
        question: case.manifest.question.clone(),
        chunks: victim_retrieved.clone(),
        target: target.clone(),
        temperature,
        max_new_tokens: config.max_new_tokens,
        gen_seed: victim_gen.seed,
    });

    Ok(CaseRun {
        outcome: CaseOutcome {
            doc: case.manifest.doc.clone(),
            format: case.manifest.format,
            temperature,
            success,
            conveyed,
            retrieval_preserved,
            iterations: result.iterations,
            seq_tokens: result.seq.len(),
            request_tokens: request_tokens.len(),
            response_tokens: response_tokens.len(),
            final_loss: result.loss_trace.last().copied(),
            loss_trace: result.loss_trace,
            response,
            failure_reason: None,
        },
        transfer,
        crafted: Some(crafted),
    })
}

fn aggregate_rows(rows: &[CaseOutcome]) -> RunAggregates {
    let n = rows.len().max(1) as f64;
    let pct = |count: usize| 100.0 * count as f64 / n;
    RunAggregates {
        asr_percent: pct(rows.iter().filter(|r| r.success).count()),
        mean_iterations: rows.iter().map(|r| r.iterations as f64).sum::<f64>() / n,
        mean_seq_tokens: rows.iter().map(|r| r.seq_tokens as f64).sum::<f64>() / n,
        mean_request_tokens: rows.iter().map(|r| r.request_tokens as f64).sum::<f64>() / n,
        mean_response_tokens: rows.iter().map(|r| r.response_tokens as f64).sum::<f64>() / n,
        retrieval_preservation_percent: pct(rows.iter().filter(|r| r.retrieval_preserved).count()),
    }
}

fn aggregate_formats(rows: &[CaseOutcome]) -> Vec<FormatAggregates> {
    [DocFormat::Pdf, DocFormat::Markdown, DocFormat::Html]
        .into_iter()
        .map(|format| {
            let of_format: Vec<&CaseOutcome> = rows.iter().filter(|r| r.format == format).collect();
            let count = of_format.len();
            let injected = of_format.iter().filter(|r| r.conveyed).count();
            let success = of_format.iter().filter(|r| r.success).count();
            let pct = |c: usize| {
                if count == 0 {
                    0.0
                } else {
                    100.0 * c as f64 / count as f64
                }
            };
            FormatAggregates {
                format,
                count,
                injected,
                injection_percent: pct(injected),
                success,
                asr_percent: pct(success),
            }
        })
        .collect()
}

/// Run the whole suite: every case at every configured temperature.
///
/// Returns the report and the transfer inputs of successful rows (in row
/// order) for [`transfer_eval`].
pub fn run_suite(
    oracle: &dyn ModelOracle,
    cases: &[CorpusCase],
    config: &EvalConfig,
) -> (EvalReport, Vec<TransferInput>) {
    assert!(!cases.is_empty(), "suite needs at least one case");
    let mut runs = Vec::new();
    let mut transfers = Vec::new();
    for (temp_index, &temperature) in config.temperatures.iter().enumerate() {
        let case_runs = run_cases_indexed(oracle, cases, config, temperature, temp_index);
        let mut rows = Vec::with_capacity(cases.len());
        for run in case_runs {
            rows.push(run.outcome);
            transfers.extend(run.transfer);
        }
        runs.push(TemperatureRun {
            temperature,
            aggregates: aggregate_rows(&rows),
            per_format: aggregate_formats(&rows),
            rows,
        });
    }
    let all_rows: Vec<CaseOutcome> = runs.iter().flat_map(|r| r.rows.clone()).collect();
    let report = EvalReport {
        cases: cases.len(),
        average: aggregate_rows(&all_rows),
        per_format: aggregate_formats(&all_rows),
        runs,
        transfer: None,
    };
    (report, transfers)
}

/// Cases are independent; run them across `config.jobs` threads, collecting
/// results by case index so the row order (and every seed) is unchanged.
fn run_cases_indexed(
    oracle: &dyn ModelOracle,
    cases: &[CorpusCase],
    config: &EvalConfig,
    temperature: f64,
    temp_index: usize,
) -> Vec<CaseRun> {
    let seed_of = |case_index: usize| ((temp_index as u64) << 32) | case_index as u64;
    if config.jobs <= 1 || cases.len() <= 1 {
        return cases
            .iter()
            .enumerate()
            .map(|(i, case)| run_case(oracle, case, config, temperature, seed_of(i)))
            .collect();
    }
    let chunk = cases.len().div_ceil(config.jobs);
    let mut slots: Vec<Option<CaseRun>> = Vec::new();
    slots.resize_with(cases.len(), || None);
    std::thread::scope(|scope| {
        for (chunk_index, (case_chunk, slot_chunk)) in
            cases.chunks(chunk).zip(slots.chunks_mut(chunk)).enumerate()
        {
            scope.spawn(move || {
                for (offset, (case, slot)) in case_chunk.iter().zip(slot_chunk).enumerate() {
                    let case_index = chunk_index * chunk + offset;
                    *slot = Some(run_case(oracle, case, config, temperature, seed_of(case_index)));
                }
            });
        }
    });
    slots.into_iter().map(|s| s.expect("all cases ran")).collect()
}

/// Re-assemble each successful case under an alternate template and re-run
/// generation plus the success check, without re-optimizing. An empty input
/// set yields 0% (the caller should warn).
pub fn transfer_eval(
    oracle: &dyn ModelOracle,
    inputs: &[TransferInput],
    template: &PromptTemplate,
) -> TransferReport {
    let mut still = 0usize;
    for input in inputs {
        let areq = assemble(template, &input.chunks, &input.question);
        let gen = GenerationConfig::new(
            input.temperature,
            input.max_new_tokens,
            derive_seed(input.gen_seed, 0x7274),
        );
        let response_tokens = oracle.generate(&oracle.vocab().tokenize(&areq.text), &gen);
        let response = oracle.vocab().detokenize(&response_tokens);
        if success_check(&response, &input.target) {
            still += 1;
        }
    }
    let evaluated = inputs.len();
    TransferReport {
        template: template.name.clone(),
        evaluated,
        still_successful: still,
        transfer_asr_percent: if evaluated == 0 {
            0.0
        } else {
            100.0 * still as f64 / evaluated as f64
        },
    }
}

/// Aligned-column text rendering of a report (per-temperature metrics plus
/// the per-format injection/ASR table).
pub fn render_table(report: &EvalReport) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:<6} {:>8} {:>8} {:>7} {:>8} {:>7}",
        "Temp", "Model", "ASR", "Iter", "Seq", "Req", "Res"
    );
    {
        let out = &mut out;
        let mut write_row = |label: &str, a: &RunAggregates| {
            let _ = writeln!(
                out,
                "{:<6} {:<6} {:>7.2}% {:>8.2} {:>7.2} {:>8.2} {:>7.2}",
                label,
                "toy",
                a.asr_percent,
                a.mean_iterations,
                a.mean_seq_tokens,
                a.mean_request_tokens,
                a.mean_response_tokens
            );
        };
        for run in &report.runs {
            write_row(&format!("{}", run.temperature), &run.aggregates);
        }
        write_row("Avg", &report.average);
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<8} {:>6} {:>16} {:>16} {:>10}",
        "Format", "Count", "Injection", "ASR", "Preserved"
    );
    for f in &report.per_format {
        let preserved = report
            .runs
            .iter()
            .flat_map(|r| r.rows.iter())
            .filter(|row| row.format == f.format && row.retrieval_preserved)
            .count();
        let _ = writeln!(
            out,
            "{:<8} {:>6} {:>9.2}% ({:>2}) {:>9.2}% ({:>2}) {:>10}",
            f.format.name(),
            f.count,
            f.injection_percent,
            f.injected,
            f.asr_percent,
            f.success,
            preserved
        );
    }
    if let Some(t) = &report.transfer {
        let _ = writeln!(
            out,
            "\nTransfer to {}: {:.2}% ({}/{})",
            t.template, t.transfer_asr_percent, t.still_successful, t.evaluated
        );
    }
    out
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
