use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use rmcd::backend::GroundedWorldModel;
use rmcd::bench::{
    parse_config, render_csv, render_json, run_ablation_suite, run_benchmark, run_context_sweep,
    run_cost_accounting, run_oracle_experiment, ExperimentSpec, Report,
};
use rmcd::decoder::{generate, Method};
use rmcd::kb::{emit_kb, ingest_kb, read_queries, retrieve, synthesize_world, write_queries, Bm25, SyntheticWorldSpec};
use rmcd::seed::stream;
use rmcd::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "rmcd", version, about = "Relevance-aware multi-context contrastive decoding benchmarks")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat `key = value` experiment file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    method: Option<Method>,
    /// Number of retrieved contexts.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    tau1: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    tau2: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    gamma: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    max_weight: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    min_weight: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    beta: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic knowledge base and its queries as JSON lines.
    Synth {
        /// Total documents; defaults to the first benchmark tier.
        #[arg(long)]
        kb_size: Option<usize>,
        #[arg(long)]
        queries: Option<PathBuf>,
    },
    /// Validate a JSON-lines knowledge base and summarize it.
    Ingest { kb: PathBuf },
    /// BM25 top-n contexts for one question or a query file.
    Retrieve {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long, conflicts_with = "queries")]
        question: Option<String>,
        #[arg(long)]
        queries: Option<PathBuf>,
    },
    /// Retrieve and decode an answer to one question.
    Generate {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        question: String,
        /// Query file whose answers extend the backend vocabulary.
        #[arg(long)]
        queries: Option<PathBuf>,
    },
    /// Run a benchmark protocol over the knowledge-base tiers.
    Bench {
        #[arg(long, value_enum, default_value_t = Protocol::KbSize)]
        protocol: Protocol,
    },
    /// Benchmark with each query's oracle document injected at rank 1.
    Oracle,
    /// Full RMCD against its single-switch variants.
    Ablate,
    /// Re-render a JSON report.
    Report {
        input: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Protocol {
    KbSize,
    ContextSweep,
    Cost,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Json,
    Csv,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn experiment(g: &Global) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::default();
    if let Some(path) = &g.config {
        spec.apply_config(&parse_config(&read(path)?)?)?;
    }
    let overrides = [
        ("seed", g.seed.map(|v| v.to_string())),
        ("n_contexts", g.n.map(|v| v.to_string())),
        ("tau1", g.tau1.map(|v| v.to_string())),
        ("tau2", g.tau2.map(|v| v.to_string())),
        ("gamma", g.gamma.map(|v| v.to_string())),
        ("max_weight", g.max_weight.map(|v| v.to_string())),
        ("min_weight", g.min_weight.map(|v| v.to_string())),
        ("beta", g.beta.map(|v| v.to_string())),
    ];
    for (key, value) in overrides {
        if let Some(v) = value {
            spec.set(key, &v)?;
        }
    }
    if let Some(m) = g.method {
        spec.methods = vec![m];
    }
    spec.validate()?;
    Ok(spec)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Error::Io {
                path: PathBuf::from("<stdout>"),
                source: e,
            })
        }
    }
}

fn emit_report(out: Option<&Path>, report: &Report, format: Option<Format>) -> Result<()> {
    let csv = match format {
        Some(f) => matches!(f, Format::Csv),
        None => out.and_then(Path::extension).is_some_and(|e| e.eq_ignore_ascii_case("csv")),
    };
    emit(out, &if csv { render_csv(report) } else { render_json(report) })
}

fn lines<T: serde::Serialize>(rows: &[T]) -> String {
    rows.iter()
        .map(|r| serde_json::to_string(r).expect("serializable") + "\n")
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    let spec = experiment(g)?;
    let out = g.out.as_deref();
    let bm25 = Bm25::new(spec.bm25);
    match cli.command {
        Command::Synth { kb_size, queries } => {
            let size = kb_size.unwrap_or(spec.tiers[0]);
            if size < spec.world.num_entities {
                return Err(Error::Config(format!(
                    "kb size {size} is smaller than the {} oracle documents",
                    spec.world.num_entities
                )));
            }
            let world = synthesize_world(
                &SyntheticWorldSpec {
                    num_distractor_docs: size - spec.world.num_entities,
                    ..spec.world.clone()
                },
                spec.seed,
            )?;
            match out {
                Some(path) => emit_kb(path, &world.kb)?,
                None => emit(None, &lines(world.kb.documents()))?,
            }
            if let Some(path) = queries {
                write_queries(&path, &world.queries)?;
            }
        }
        Command::Ingest { kb } => {
            let kb = ingest_kb(&kb)?;
            let stats = kb.stats();
            let summary = json!({
                "documents": kb.len(),
                "terms": stats.doc_freq.len(),
                "avg_len": stats.avg_len,
            });
            emit(out, &format!("{summary}\n"))?;
        }
        Command::Retrieve { kb, question, queries } => {
            let kb = ingest_kb(&kb)?;
            let n = spec.decoder.n_contexts;
            let asked: Vec<(String, String)> = match (question, queries) {
                (Some(q), _) => vec![(String::new(), q)],
                (None, Some(path)) => read_queries(&path)?.into_iter().map(|q| (q.qid, q.question)).collect(),
                (None, None) => return Err(Error::Config("retrieve needs --question or --queries".into())),
            };
            let mut rows = Vec::with_capacity(asked.len());
            for (qid, q) in asked {
                let set = retrieve(&kb, &bm25, &q, n)?;
                let contexts: Vec<_> = set.iter().map(|c| json!({"doc_id": c.doc_id, "score": c.score})).collect();
                rows.push(json!({"qid": qid, "question": q, "contexts": contexts}));
            }
            emit(out, &lines(&rows))?;
        }
        Command::Generate { kb, question, queries } => {
            let kb = ingest_kb(&kb)?;
            let queries = match queries {
                Some(path) => read_queries(&path)?,
                None => Vec::new(),
            };
            let backend = GroundedWorldModel::from_documents(kb.documents(), &queries, spec.backend)?;
            let method = g.method.unwrap_or(Method::Rmcd);
            let config = spec.config_for(method);
            let set = retrieve(&kb, &bm25, &question, config.n_contexts)?;
            let mut rng = stream(spec.seed, &[question.as_bytes(), method.name().as_bytes()]);
            let record = generate(method, &backend, &question, &set, &config, &mut rng)?;
            let contexts: Vec<_> = set.iter().map(|c| json!({"doc_id": c.doc_id, "score": c.score})).collect();
            let row = json!({
                "question": question,
                "method": method,
                "answer": record.answer,
                "tokens": record.tokens,
                "token_probs": record.token_probs,
                "forward_calls": record.forward_calls,
                "streams": record.streams,
                "contexts": contexts,
            });
            emit(out, &(serde_json::to_string_pretty(&row).expect("serializable") + "\n"))?;
        }
        Command::Bench { protocol } => {
            let report = match protocol {
                Protocol::KbSize => run_benchmark(&spec)?,
                Protocol::ContextSweep => run_context_sweep(&spec)?,
                Protocol::Cost => run_cost_accounting(&spec, &[1, 3, 5])?,
            };
            emit_report(out, &report, None)?;
        }
        Command::Oracle => emit_report(out, &run_oracle_experiment(&spec)?, None)?,
        Command::Ablate => emit_report(out, &run_ablation_suite(&spec)?, None)?,
        Command::Report { input, format } => {
            let report = Report::from_json(&read(&input)?)?;
            emit_report(out, &report, format)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
