use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sciqa_workbench::config::{RerankerKind, RunManifest, WorkbenchConfig};
use sciqa_workbench::corpus::{self, QAInstance};
use sciqa_workbench::embed::{embed_text, VectorIndex};
use sciqa_workbench::eval::{self, ReportFormat};
use sciqa_workbench::forge::run_forge;
use sciqa_workbench::gateway::{FixtureBook, Gateway, GatewayError, ProviderKind};
use sciqa_workbench::metrics::MetricsReport;

#[derive(Parser)]
#[command(name = "workbench", about = "Scientific QA retrieval workbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config file; omitted fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Provider override: http or mock.
    #[arg(long)]
    provider: Option<String>,
    /// Fixture book (JSON list of {tag, probe, content}) for the mock
    /// provider; defaults to label-faithful fixtures built from the dataset.
    #[arg(long)]
    fixtures: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build base and distractor-injected datasets from a corpus of
    /// abstracts (JSONL).
    Forge {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        corpus: PathBuf,
        /// Output directory for base.jsonl, ssli.jsonl, and forge.log.
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed a corpus and write a binary vector index.
    Index {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerank a single instance's context pool and print the result (debug).
    Rerank {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        /// Instance id; defaults to the first instance.
        #[arg(long)]
        instance: Option<String>,
        #[arg(long)]
        reranker: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        top: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        /// Comma-separated ablations: v1 (no intent), v2 (no filter),
        /// v3 (no summarization).
        #[arg(long)]
        ablate: Option<String>,
    },
    /// Evaluate a dataset end to end and write a metrics report.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        reranker: Option<String>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        top: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        ablate: Option<String>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluate a random subsample of this many instances (seeded).
        #[arg(long)]
        sample: Option<usize>,
        /// Report path; the manifest lands next to it.
        #[arg(long)]
        out: PathBuf,
        /// Report format: json (canonical) or csv (aggregate only).
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Re-emit an existing JSON report, e.g. as CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
    },
}

#[derive(Debug)]
enum CliError {
    /// Exit code 1: bad flags or config.
    Usage(String),
    /// Exit code 2: provider or auth failure.
    Provider(String),
    /// Exit code 3: dataset failed to parse or validate.
    Dataset(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Provider(_) => 2,
            CliError::Dataset(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Provider(m) | CliError::Dataset(m) => m,
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        CliError::Provider(e.to_string())
    }
}

impl From<eval::EvalError> for CliError {
    fn from(e: eval::EvalError) -> Self {
        match e {
            eval::EvalError::Gateway(g) => CliError::Provider(g.to_string()),
            eval::EvalError::Metrics(m) => CliError::Usage(m.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

fn now_unix() -> String {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0).to_string()
}

fn load_config(common: &CommonArgs) -> Result<WorkbenchConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => WorkbenchConfig::load(path).map_err(|e| CliError::Usage(e.to_string()))?,
        None => WorkbenchConfig::default(),
    };
    if let Some(provider) = &common.provider {
        cfg.provider.kind = match provider.as_str() {
            "http" => ProviderKind::Http,
            "mock" => ProviderKind::Mock,
            other => return Err(CliError::Usage(format!("unknown provider `{other}`"))),
        };
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn apply_pipeline_flags(
    cfg: &mut WorkbenchConfig,
    reranker: &Option<String>,
    tau: Option<f64>,
    top: Option<usize>,
    k: Option<usize>,
    ablate: &Option<String>,
) -> Result<(), CliError> {
    if let Some(r) = reranker {
        cfg.eval.reranker = RerankerKind::parse(r)
            .ok_or_else(|| CliError::Usage(format!("unknown reranker `{r}`")))?;
    }
    if let Some(tau) = tau {
        cfg.pipeline.tau = tau;
    }
    if let Some(top) = top {
        cfg.pipeline.top_n = top;
    }
    if let Some(k) = k {
        cfg.pipeline.k_out = k;
    }
    if let Some(ablate) = ablate {
        for item in ablate.split(',').filter(|s| !s.is_empty()) {
            match item.trim() {
                "v1" => cfg.pipeline.ablate_intent = true,
                "v2" => cfg.pipeline.ablate_filter = true,
                "v3" => cfg.pipeline.ablate_summarize = true,
                other => return Err(CliError::Usage(format!("unknown ablation `{other}`"))),
            }
        }
    }
    cfg.pipeline.validate().map_err(CliError::Usage)?;
    Ok(())
}

fn load_dataset(path: &Path) -> Result<Vec<QAInstance>, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    corpus::parse_dataset(std::io::BufReader::new(file))
        .map_err(|e| CliError::Dataset(e.to_string()))
}

fn build_gateway(
    cfg: &WorkbenchConfig,
    common: &CommonArgs,
    instances: &[QAInstance],
) -> Result<Gateway, CliError> {
    let gateway = if cfg.provider.kind == ProviderKind::Mock {
        let book = match &common.fixtures {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read fixtures: {e}")))?;
                FixtureBook::from_json(&text)
                    .map_err(|e| CliError::Usage(format!("bad fixture file: {e}")))?
            }
            None => eval::faithful_fixtures(instances),
        };
        Gateway::with_fixtures(cfg.provider.clone(), book)
    } else {
        Gateway::new(cfg.provider.clone())
    };
    gateway.map_err(CliError::from)
}

/// Generic mock fixtures so `forge --provider mock` works without a
/// fixture file: structurally valid but content-free stage outputs.
fn generic_forge_fixtures(cfg: &WorkbenchConfig) -> FixtureBook {
    let mut book = FixtureBook::new();
    book.register(
        "extract",
        "",
        r#"{"methods": "observational study", "results": "an effect was measured", "significance": "relevant to the field"}"#,
    );
    book.register(
        "generate_qa",
        "",
        r#"{"pairs": [{"question": "What effect was measured in this study?", "answer": "A measurable effect was observed.", "qtype": "result"}]}"#,
    );
    book.register(
        "guidance",
        "",
        r#"{"doc_id": "unresolved", "target_type": "background", "main_idea": "general study context", "answer_avoidance": "the measured effect"}"#,
    );
    let distractors: Vec<String> = (0..cfg.forge.distractor_count)
        .map(|i| format!("\"Background note {i} describes unrelated procedures without stating findings.\""))
        .collect();
    book.register("distract", "", &format!(r#"{{"distractors": [{}]}}"#, distractors.join(", ")));
    book
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Forge { common, corpus: corpus_path, out } => {
            let cfg = load_config(&common)?;
            let file = std::fs::File::open(&corpus_path)
                .map_err(|e| CliError::Usage(format!("cannot open corpus: {e}")))?;
            let docs = corpus::parse_corpus(std::io::BufReader::new(file))
                .map_err(|e| CliError::Dataset(e.to_string()))?;
            let gateway = if cfg.provider.kind == ProviderKind::Mock && common.fixtures.is_none() {
                Gateway::with_fixtures(cfg.provider.clone(), generic_forge_fixtures(&cfg))
                    .map_err(CliError::from)?
            } else {
                build_gateway(&cfg, &common, &[])?
            };
            let output = run_forge(&docs, &cfg.forge, &cfg.embedder, &gateway).map_err(|e| {
                match e {
                    sciqa_workbench::forge::ForgeError::Gateway(g) => {
                        CliError::Provider(g.to_string())
                    }
                    other => CliError::Usage(other.to_string()),
                }
            })?;
            std::fs::create_dir_all(&out)
                .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
            let write = |name: &str, text: String| -> Result<(), CliError> {
                std::fs::write(out.join(name), text)
                    .map_err(|e| CliError::Usage(format!("cannot write {name}: {e}")))
            };
            write("base.jsonl", corpus::serialize_dataset_to_string(&output.base))?;
            write("ssli.jsonl", corpus::serialize_dataset_to_string(&output.ssli))?;
            let log: String = output
                .log
                .iter()
                .map(|e| format!("{}\t{}\t{}\n", e.subject, e.event, e.detail))
                .collect();
            write("forge.log", log)?;
            println!(
                "forged {} base and {} distractor-injected instances from {} documents",
                output.base.len(),
                output.ssli.len(),
                docs.len()
            );
            Ok(())
        }
        Command::Index { common, corpus: corpus_path, out } => {
            let cfg = load_config(&common)?;
            let file = std::fs::File::open(&corpus_path)
                .map_err(|e| CliError::Usage(format!("cannot open corpus: {e}")))?;
            let docs = corpus::parse_corpus(std::io::BufReader::new(file))
                .map_err(|e| CliError::Dataset(e.to_string()))?;
            let mut index = VectorIndex::new(cfg.embedder.dim);
            let mut count = 0usize;
            for doc in &docs {
                let chunks = sciqa_workbench::forge::segment_abstract(doc, cfg.forge.max_chunk_chars)
                    .map_err(|e| CliError::Dataset(e.to_string()))?;
                for chunk in chunks {
                    let vector = embed_text(&chunk.text, &cfg.embedder)
                        .map_err(|e| CliError::Provider(e.to_string()))?;
                    index
                        .insert(chunk.passage_id(), vector)
                        .map_err(|e| CliError::Usage(e.to_string()))?;
                    count += 1;
                }
            }
            index.save(&out).map_err(|e| CliError::Usage(e.to_string()))?;
            println!("indexed {count} chunks from {} documents into {}", docs.len(), out.display());
            Ok(())
        }
        Command::Rerank { common, dataset, instance, reranker, tau, top, k, ablate } => {
            let mut cfg = load_config(&common)?;
            apply_pipeline_flags(&mut cfg, &reranker, tau, top, k, &ablate)?;
            let instances = load_dataset(&dataset)?;
            let inst = match &instance {
                Some(id) => instances
                    .iter()
                    .find(|i| &i.id == id)
                    .ok_or_else(|| CliError::Usage(format!("no instance `{id}` in dataset")))?,
                None => instances
                    .first()
                    .ok_or_else(|| CliError::Dataset("dataset is empty".into()))?,
            };
            let gateway = build_gateway(&cfg, &common, &instances)?;
            let ranked = eval::rank_instance(
                inst,
                cfg.eval.reranker,
                &cfg.pipeline,
                &cfg.embedder,
                &gateway,
            )?;
            println!("instance {} — question: {}", inst.id, inst.question);
            for sp in &ranked.ranked {
                println!("  {:>2}. {:.3}  [{:?}] {}", sp.rank, sp.score, sp.passage.label, sp.passage.id);
            }
            for ev in &ranked.evidence {
                println!("  evidence [{}]: {}", ev.passage_id, ev.summary);
            }
            Ok(())
        }
        Command::Eval {
            common,
            dataset,
            reranker,
            tau,
            top,
            k,
            ablate,
            runs,
            seed,
            sample,
            out,
            format,
        } => {
            let mut cfg = load_config(&common)?;
            apply_pipeline_flags(&mut cfg, &reranker, tau, top, k, &ablate)?;
            if let Some(runs) = runs {
                cfg.eval.runs = runs;
            }
            if let Some(seed) = seed {
                cfg.eval.seed = seed;
            }
            cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let format = parse_format(&format)?;

            let mut instances = load_dataset(&dataset)?;
            if instances.is_empty() {
                return Err(CliError::Dataset("dataset is empty".into()));
            }
            if let Some(n) = sample {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.eval.seed);
                instances.shuffle(&mut rng);
                instances.truncate(n);
                instances.sort_by(|a, b| a.id.cmp(&b.id));
                if instances.is_empty() {
                    return Err(CliError::Usage("--sample must be >= 1".into()));
                }
            }

            let gateway = build_gateway(&cfg, &common, &instances)?;
            let started_at = now_unix();
            let report = eval::run_eval(&cfg, &instances, &gateway)?;
            let finished_at = now_unix();

            eval::emit_report(&report, format, &out)
                .map_err(|e| CliError::Usage(format!("cannot write report: {e}")))?;
            let manifest = RunManifest {
                config_hash: cfg.config_hash(),
                dataset_path: dataset.display().to_string(),
                started_at,
                finished_at,
                seed: cfg.eval.seed,
            };
            let manifest_path = out.with_extension("manifest.json");
            std::fs::write(
                &manifest_path,
                serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n",
            )
            .map_err(|e| CliError::Usage(format!("cannot write manifest: {e}")))?;

            for (name, stat) in &report.aggregate {
                println!("{name}: {:.4} ± {:.4} (n={})", stat.mean, stat.std, stat.n_runs);
            }
            println!("report: {} — manifest: {}", out.display(), manifest_path.display());
            Ok(())
        }
        Command::Report { input, out, format } => {
            let format = parse_format(&format)?;
            let text = std::fs::read_to_string(&input)
                .map_err(|e| CliError::Usage(format!("cannot read report: {e}")))?;
            let report: MetricsReport = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("not a valid report: {e}")))?;
            eval::emit_report(&report, format, &out)
                .map_err(|e| CliError::Usage(format!("cannot write report: {e}")))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn parse_format(s: &str) -> Result<ReportFormat, CliError> {
    match s {
        "json" => Ok(ReportFormat::Json),
        "csv" => Ok(ReportFormat::Csv),
        other => Err(CliError::Usage(format!("unknown format `{other}`"))),
    }
}

fn main() -> ExitCode {
    env_logger::init();
    // Flag errors are usage errors (exit 1); clap's default exit code 2 is
    // reserved here for provider failures.
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
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
