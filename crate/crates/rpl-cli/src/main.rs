//! `rpl` — retrieval poisoning lab command line.
//!
//! Machine-readable output (JSON) goes to stdout; human diagnostics go to
//! stderr. Exit codes: 0 success, 1 operational error, 2 scanner found
//! suspicious hidden content.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rpl_core::attack::AttackConfig;
use rpl_core::chunker::{split, SplitterConfig};
use rpl_core::corpus::{self, AttackCase, CorpusCase, TrainSpec};
use rpl_core::doc::{parse_document, DocFormat, Document};
use rpl_core::eval::{self, EvalConfig, PipelineConfig};
use rpl_core::inject::{inject, verify_invisibility, InjectionPoint, InvisibleFeature};
use rpl_core::oracle::{train_toy, ToyOracle, TrainConfig};
use rpl_core::prompter::PromptTemplate;
use rpl_core::retriever::{index, retrieve, VectorStore};
use rpl_core::scanner::{scan_with, ScanConfig, Severity};

#[derive(Parser)]
#[command(
    name = "rpl",
    about = "Retrieval poisoning lab: invisible injection, RAG simulation, gradient-guided attacks, and a defense scanner",
    version
)]
struct Cli {
    /// Seed for every random choice (attack mutations, sampling).
    #[arg(long, global = true, env = "RPL_SEED", default_value_t = 0)]
    seed: u64,
    /// Worker threads for candidate scoring; 1 is fully sequential.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Prompt template definitions (JSON array of {name, order, scenario});
    /// names resolve here first, then among the built-ins.
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a document and print its spans, sections, and both views.
    Parse {
        #[arg(long)]
        input: PathBuf,
        /// Override the format inferred from the extension.
        #[arg(long)]
        format: Option<String>,
    },
    /// Hide a payload in a document using an invisible feature.
    Inject {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        payload: String,
        /// md-fence-info, html-hidden-span, or pdf-invisible-text.
        #[arg(long)]
        feature: String,
        #[arg(long, default_value_t = 0)]
        span_index: usize,
        #[arg(long, default_value_t = 0)]
        offset: usize,
        #[arg(long)]
        format: Option<String>,
    },
    /// Split a document and print chunk boundaries as JSON lines.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: Option<String>,
        /// length or section.
        #[arg(long, default_value = "length")]
        kind: String,
        #[arg(long, default_value_t = 256)]
        chunk_size: usize,
        #[arg(long, default_value_t = 32)]
        overlap: usize,
    },
    /// Index a document (or load a store) and run a cosine top-k query.
    Retrieve {
        /// Document to split and index.
        #[arg(long, conflicts_with = "store", required_unless_present = "store")]
        input: Option<PathBuf>,
        /// Previously saved store JSON.
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 3)]
        top_k: usize,
        #[arg(long)]
        format: Option<String>,
        #[arg(long, default_value = "section")]
        kind: String,
        #[arg(long, default_value_t = 256)]
        chunk_size: usize,
        #[arg(long, default_value_t = 32)]
        overlap: usize,
        /// Save the built store as JSON.
        #[arg(long)]
        store_out: Option<PathBuf>,
    },
    /// Craft an attack sequence against a document and question.
    Attack {
        #[arg(long)]
        doc: PathBuf,
        #[arg(long)]
        question: String,
        /// Full targeted response sentence.
        #[arg(long)]
        target: String,
        /// Crucial substring marking success.
        #[arg(long)]
        crucial: String,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        format: Option<String>,
        #[arg(long, default_value = "DIRECT")]
        template: String,
        /// Candidates per iteration.
        #[arg(long, default_value_t = 32)]
        k: usize,
        /// Crucial loss weight in [0, 1].
        #[arg(long, default_value_t = 0.5)]
        w: f64,
        #[arg(long, default_value_t = 500)]
        max_step: usize,
        #[arg(long, default_value_t = 64)]
        top_b: usize,
        #[arg(long, default_value_t = 32)]
        init_length: usize,
        #[arg(long, default_value_t = 0.7)]
        temperature: f64,
        #[arg(long, default_value_t = 24)]
        max_new: usize,
        #[arg(long, default_value_t = 1)]
        top_k: usize,
        /// Write the crafted (poisoned) document here.
        #[arg(long)]
        out_doc: Option<PathBuf>,
    },
    /// Run the full evaluation suite over a corpus directory.
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Comma-separated temperatures, e.g. "0.7,1.0".
        #[arg(long, default_value = "0.7")]
        temperatures: String,
        #[arg(long, default_value = "DIRECT")]
        template: String,
        /// Re-score successful sequences under this template.
        #[arg(long)]
        transfer_template: Option<String>,
        #[arg(long, default_value_t = 500)]
        max_step: usize,
        #[arg(long, default_value_t = 1)]
        top_k: usize,
        #[arg(long, default_value_t = 24)]
        max_new: usize,
        /// Write report.json and report.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Flag loader-visible but human-invisible content. Exit 2 if suspicious.
    Scan {
        /// File or directory.
        #[arg(long)]
        input: PathBuf,
        /// Word count at which hidden text is suspicious.
        #[arg(long, default_value_t = 5)]
        threshold: usize,
    },
    /// Train the built-in toy model on a corpus directory.
    TrainToy {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        out_vocab: PathBuf,
        #[arg(long, default_value_t = 400)]
        epochs: usize,
        #[arg(long, default_value_t = 2.5)]
        lr: f64,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Toy model weights (binary).
    #[arg(long)]
    model: PathBuf,
    /// Vocabulary JSON.
    #[arg(long)]
    vocab: PathBuf,
}

impl ModelArgs {
    fn load(&self) -> Result<ToyOracle> {
        ToyOracle::load(&self.model, &self.vocab)
            .with_context(|| format!("loading model {}", self.model.display()))
    }
}

fn main() -> ExitCode {
    // Exit code 2 is reserved for suspicious scanner findings, so argument
    // errors must exit 1 instead of clap's default 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
        Err(help_or_version) => {
            print!("{help_or_version}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn doc_format(path: &Path, explicit: &Option<String>) -> Result<DocFormat> {
    if let Some(name) = explicit {
        return DocFormat::from_name(name).ok_or_else(|| anyhow!("unknown format {name:?}"));
    }
    DocFormat::from_path(path)
        .ok_or_else(|| anyhow!("cannot infer format from {}; pass --format", path.display()))
}

fn load_doc(path: &Path, explicit: &Option<String>) -> Result<Document> {
    let format = doc_format(path, explicit)?;
    let source =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(parse_document(&source, format)?)
}

fn splitter(kind: &str, chunk_size: usize, overlap: usize) -> Result<SplitterConfig> {
    match kind {
        "length" => Ok(SplitterConfig::length(chunk_size, overlap)),
        "section" => Ok(SplitterConfig::sections()),
        other => bail!("unknown splitter kind {other:?} (length or section)"),
    }
}

struct TemplateSource {
    from_file: Vec<PromptTemplate>,
}

impl TemplateSource {
    fn load(path: &Option<PathBuf>) -> Result<Self> {
        let from_file = match path {
            Some(p) => {
                let json = std::fs::read_to_string(p)
                    .with_context(|| format!("reading templates {}", p.display()))?;
                let templates = PromptTemplate::load_json(&json)?;
                for t in &templates {
                    t.validate().map_err(|e| anyhow!(e))?;
                }
                templates
            }
            None => Vec::new(),
        };
        Ok(TemplateSource { from_file })
    }

    fn by_name(&self, name: &str) -> Result<PromptTemplate> {
        self.from_file
            .iter()
            .find(|t| t.name == name)
            .cloned()
            .or_else(|| PromptTemplate::builtin(name))
            .ok_or_else(|| anyhow!("unknown template {name:?} (QA_SCENARIO or DIRECT)"))
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let seed = cli.seed;
    let jobs = cli.jobs.max(1);
    let templates = TemplateSource::load(&cli.templates)?;
    match cli.command {
        Command::Parse { input, format } => {
            let doc = load_doc(&input, &format)?;
            let out = serde_json::json!({
                "format": doc.format,
                "spans": doc.spans,
                "sections": doc.sections,
                "parser_view": doc.parser_view(),
                "render_view": doc.render_view(),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }

        Command::Inject {
            input,
            output,
            payload,
            feature,
            span_index,
            offset,
            format,
        } => {
            let feature = InvisibleFeature::from_name(&feature)
                .ok_or_else(|| anyhow!("unknown feature {feature:?}"))?;
            let doc = load_doc(&input, &format)?;
            let injected = inject(&doc, &payload, &InjectionPoint::new(span_index, offset), feature)?;
            std::fs::write(&output, &injected.source)
                .with_context(|| format!("writing {}", output.display()))?;
            // verify the bytes actually written, not just the in-memory doc
            let written = std::fs::read_to_string(&output)?;
            let reparsed = parse_document(&written, doc.format)?;
            let verified = verify_invisibility(&doc, &reparsed, &payload);
            let out = serde_json::json!({
                "output": output.display().to_string(),
                "feature": feature.name(),
                "injected_bytes": injected.injected.as_ref().map(|r| [r.byte_range.start, r.byte_range.end]),
                "verified_invisible": verified,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            if verified {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("injection failed post-write verification");
                Ok(ExitCode::from(1))
            }
        }

        Command::Split {
            input,
            format,
            kind,
            chunk_size,
            overlap,
        } => {
            let doc = load_doc(&input, &format)?;
            let config = splitter(&kind, chunk_size, overlap)?;
            let view = doc.parser_view();
            let chunks = split(&view, &config, &doc.section_char_ranges())?;
            for (i, chunk) in chunks.iter().enumerate() {
                println!(
                    "{}",
                    serde_json::json!({
                        "index": i,
                        "start": chunk.range.start,
                        "end": chunk.range.end,
                        "section": chunk.section,
                    })
                );
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Retrieve {
            input,
            store,
            query,
            top_k,
            format,
            kind,
            chunk_size,
            overlap,
            store_out,
        } => {
            let store = if let Some(path) = store {
                VectorStore::from_json(&std::fs::read_to_string(&path)?)?
            } else {
                let doc = load_doc(input.as_ref().expect("clap enforces input|store"), &format)?;
                let config = splitter(&kind, chunk_size, overlap)?;
                let view = doc.parser_view();
                index(&split(&view, &config, &doc.section_char_ranges())?)
            };
            if let Some(path) = store_out {
                std::fs::write(&path, store.to_json())?;
                eprintln!("store saved to {}", path.display());
            }
            let hits = retrieve(&store, &query, top_k);
            println!("{}", serde_json::to_string_pretty(&hits)?);
            Ok(ExitCode::SUCCESS)
        }

        Command::Attack {
            doc,
            question,
            target,
            crucial,
            model,
            format,
            template,
            k,
            w,
            max_step,
            top_b,
            init_length,
            temperature,
            max_new,
            top_k,
            out_doc,
        } => {
            let oracle = model.load()?;
            let document = load_doc(&doc, &format)?;
            let pipeline = PipelineConfig {
                template: templates.by_name(&template)?,
                top_k,
                ..PipelineConfig::default()
            };
            // The attack targets the content the question retrieves: anchor
            // the crucial range to the rank-1 chunk of the clean document.
            let view = document.parser_view();
            let chunks = split(&view, &pipeline.splitter, &document.section_char_ranges())?;
            let hits = retrieve(&index(&chunks), &question, 1);
            let anchor = hits
                .first()
                .map(|h| chunks[h.id].range.clone())
                .ok_or_else(|| anyhow!("document produced no chunks to attack"))?;

            let case = CorpusCase {
                manifest: AttackCase {
                    doc: doc.display().to_string(),
                    format: document.format,
                    question,
                    correct_answer: String::new(),
                    crucial,
                    target_response: target,
                    crucial_range: (anchor.start, anchor.end),
                    train: TrainSpec {
                        qa_prompts: vec![],
                        qa_completion: String::new(),
                        mirror_prompts: vec![],
                        mirror_completion: String::new(),
                    },
                },
                source: document.source.clone(),
                document,
            };
            let config = EvalConfig {
                attack: AttackConfig {
                    k,
                    crucial_weight: w,
                    max_step,
                    top_b,
                    init_length,
                    seed,
                    jobs,
                    ..AttackConfig::default()
                },
                pipeline,
                temperatures: vec![temperature],
                max_new_tokens: max_new,
                gen_seed: seed,
                jobs,
            };
            let run = eval::run_case(&oracle, &case, &config, temperature, 0);
            if let (Some(path), Some(crafted)) = (&out_doc, &run.crafted) {
                std::fs::write(path, &crafted.source)
                    .with_context(|| format!("writing {}", path.display()))?;
                eprintln!("crafted document written to {}", path.display());
            }
            println!("{}", serde_json::to_string_pretty(&run.outcome)?);
            Ok(ExitCode::SUCCESS)
        }

        Command::Evaluate {
            corpus: corpus_dir,
            model,
            temperatures,
            template,
            transfer_template,
            max_step,
            top_k,
            max_new,
            out,
        } => {
            let oracle = model.load()?;
            let cases = corpus::load_from_dir(&corpus_dir)?;
            let temperatures: Vec<f64> = temperatures
                .split(',')
                .map(|t| t.trim().parse::<f64>().map_err(|e| anyhow!("bad temperature {t:?}: {e}")))
                .collect::<Result<_>>()?;
            let config = EvalConfig {
                attack: AttackConfig {
                    max_step,
                    seed,
                    jobs,
                    ..AttackConfig::default()
                },
                pipeline: PipelineConfig {
                    template: templates.by_name(&template)?,
                    top_k,
                    ..PipelineConfig::default()
                },
                temperatures,
                max_new_tokens: max_new,
                gen_seed: seed,
                jobs,
            };
            let (mut report, transfers) = eval::run_suite(&oracle, &cases, &config);
            if let Some(name) = transfer_template {
                let alt = templates.by_name(&name)?;
                if transfers.is_empty() {
                    eprintln!("warning: no successful sequences to transfer; reporting 0%");
                }
                report.transfer = Some(eval::transfer_eval(&oracle, &transfers, &alt));
            }
            eprintln!("{}", eval::render_table(&report));
            let json = report.to_json();
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("report.json"), &json)?;
                std::fs::write(dir.join("report.txt"), eval::render_table(&report))?;
                eprintln!("report written to {}", dir.display());
            }
            println!("{json}");
            Ok(ExitCode::SUCCESS)
        }

        Command::Scan { input, threshold } => {
            let config = ScanConfig {
                suspicious_token_count: threshold,
            };
            let mut paths = Vec::new();
            if input.is_dir() {
                for entry in std::fs::read_dir(&input)? {
                    let path = entry?.path();
                    if DocFormat::from_path(&path).is_some() {
                        paths.push(path);
                    }
                }
                paths.sort();
            } else {
                paths.push(input.clone());
            }
            if paths.is_empty() {
                bail!("no scannable documents under {}", input.display());
            }
            let mut suspicious = false;
            for path in &paths {
                let doc = load_doc(path, &None)?;
                for finding in scan_with(&doc, &path.display().to_string(), &config) {
                    suspicious |= finding.severity == Severity::Suspicious;
                    println!("{}", serde_json::to_string(&finding)?);
                }
            }
            Ok(if suspicious {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }

        Command::TrainToy {
            corpus: corpus_dir,
            out_model,
            out_vocab,
            epochs,
            lr,
        } => {
            let cases = corpus::load_from_dir(&corpus_dir)?;
            let vocab = corpus::build_vocab(&cases);
            let pairs = corpus::training_pairs(&cases, &vocab);
            let config = TrainConfig {
                epochs,
                learning_rate: lr,
                seed,
                ..TrainConfig::default()
            };
            let started = std::time::Instant::now();
            let (model, losses) = train_toy(vocab.len(), &pairs, &config)?;
            let seconds = started.elapsed().as_secs_f64();
            model.save(&out_model)?;
            std::fs::write(&out_vocab, vocab.to_json())?;
            let params = model.embedding.len() + model.w_hidden.len() + model.w_out.len();
            let out = serde_json::json!({
                "vocab_size": vocab.len(),
                "parameters": params,
                "epochs": epochs,
                "initial_loss": losses.first(),
                "final_loss": losses.last(),
                "train_seconds": seconds,
                "model": out_model.display().to_string(),
                "vocab": out_vocab.display().to_string(),
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
