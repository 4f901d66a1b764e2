//! `topicscale` — two-stage document scaling from the command line.
//!
//! Every subcommand reads an optional `--config <file>` (TOML mirroring the
//! pipeline configuration) and applies per-flag overrides on top. Exit code
//! is 0 on success; failures print a stage-tagged message to stderr and exit
//! nonzero.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use topicscale::corpus::DocumentTermMatrix;
use topicscale::error::Error;
use topicscale::lda;
use topicscale::pipeline::{self, PipelineConfig};
use topicscale::renyi::{self, RenyiVariant, SelectionRule};
use topicscale::sim;
use topicscale::slda;
use topicscale::wordfish;

#[derive(Parser)]
#[command(
    name = "topicscale",
    version,
    about = "Two-stage document scaling: Poisson text scaling, then supervised topics ranked on the learned scale"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a corpus and report the document-term matrix it produces.
    Ingest(IngestArgs),
    /// Fit the stage-1 Poisson scaling model and write document/word positions.
    Wordfish(WordfishArgs),
    /// Fit the stage-2 supervised topic model (responses = scaled positions).
    Slda(SldaArgs),
    /// Fit the unsupervised topic-model baseline.
    Lda(LdaArgs),
    /// Scan a range of topic counts and report the entropy criterion.
    Scan(ScanArgs),
    /// Run both stages end to end (and export artifacts if configured).
    Run(RunArgs),
    /// Run both stages and export all artifacts (output directory required).
    Export(RunArgs),
    /// Generate a seeded synthetic corpus to experiment with.
    Simulate(SimulateArgs),
}

/// Options shared by every corpus-consuming subcommand.
#[derive(Args)]
struct CommonArgs {
    /// TOML config file; flags below override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Token source (JSONL with doc_id/text, or CSV/TSV).
    #[arg(long, value_name = "FILE")]
    docs: Option<PathBuf>,
    /// Metadata table (doc_id, year, optional party/speaker).
    #[arg(long, value_name = "FILE")]
    meta: Option<PathBuf>,
    /// Keep only documents from this year on.
    #[arg(long)]
    year_from: Option<i32>,
    /// Keep only documents up to this year.
    #[arg(long)]
    year_to: Option<i32>,
    /// Minimum corpus-wide count for a term to enter the vocabulary.
    #[arg(long)]
    min_count: Option<u32>,
    /// Output directory for artifacts.
    #[arg(long, short = 'o', value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed for the whole run.
    #[arg(long)]
    seed: Option<u64>,
}

impl CommonArgs {
    fn to_config(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_toml_file(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = &self.docs {
            cfg.docs_path = v.clone();
        }
        if let Some(v) = &self.meta {
            cfg.meta_path = v.clone();
        }
        if let Some(v) = self.year_from {
            cfg.year_from = Some(v);
        }
        if let Some(v) = self.year_to {
            cfg.year_to = Some(v);
        }
        if let Some(v) = self.min_count {
            cfg.min_count = v;
        }
        if let Some(v) = &self.out {
            cfg.export_dir = Some(v.clone());
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        Ok(cfg)
    }
}

/// Topic-model hyperparameter overrides.
#[derive(Args)]
struct TopicArgs {
    /// Number of topics.
    #[arg(long)]
    k: Option<usize>,
    /// Symmetric Dirichlet prior on topic proportions.
    #[arg(long)]
    alpha: Option<f64>,
    /// Dirichlet smoothing of topic-word rows.
    #[arg(long)]
    eta_dir: Option<f64>,
    /// Ridge strength on the response coefficients.
    #[arg(long)]
    lambda: Option<f64>,
    /// Maximum EM rounds.
    #[arg(long)]
    em_iters: Option<usize>,
}

impl TopicArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(v) = self.k {
            cfg.slda.k = v;
        }
        if let Some(v) = self.alpha {
            cfg.slda.alpha = v;
        }
        if let Some(v) = self.eta_dir {
            cfg.slda.eta_dir = v;
        }
        if let Some(v) = self.lambda {
            cfg.slda.lambda = v;
        }
        if let Some(v) = self.em_iters {
            cfg.slda.em_iters = v;
        }
    }
}

/// Direction-anchor overrides for the scale's sign.
#[derive(Args)]
struct AnchorArgs {
    /// doc_id pinned to the low end of the scale.
    #[arg(long, requires = "anchor_high", value_name = "DOC_ID")]
    anchor_low: Option<String>,
    /// doc_id pinned to the high end of the scale.
    #[arg(long, requires = "anchor_low", value_name = "DOC_ID")]
    anchor_high: Option<String>,
}

impl AnchorArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let (Some(lo), Some(hi)) = (&self.anchor_low, &self.anchor_high) {
            cfg.wordfish.direction_anchor = Some((lo.clone(), hi.clone()));
        }
    }
}

#[derive(Args)]
struct IngestArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct WordfishArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    anchor: AnchorArgs,
    /// Maximum EM (block-ascent) iterations.
    #[arg(long)]
    max_em_iters: Option<usize>,
    /// Relative log-likelihood convergence tolerance.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct SldaArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    anchor: AnchorArgs,
    #[command(flatten)]
    topics: TopicArgs,
    /// CSV with doc_id and a psi (or y) column to use as responses instead
    /// of fitting stage 1.
    #[arg(long, value_name = "FILE")]
    responses: Option<PathBuf>,
}

#[derive(Args)]
struct LdaArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    topics: TopicArgs,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    anchor: AnchorArgs,
    #[command(flatten)]
    topics: TopicArgs,
    /// Smallest topic count to try (≥ 2).
    #[arg(long, default_value_t = 2)]
    k_min: usize,
    /// Largest topic count to try.
    #[arg(long, default_value_t = 20)]
    k_max: usize,
    /// Pick the topic count with the largest or smallest entropy.
    #[arg(long, value_enum, default_value_t = RuleArg::Max)]
    rule: RuleArg,
    /// Entropy formula variant.
    #[arg(long, value_enum, default_value_t = VariantArg::Expanded)]
    variant: VariantArg,
}

#[derive(Copy, Clone, ValueEnum)]
enum RuleArg {
    Max,
    Min,
}

#[derive(Copy, Clone, ValueEnum)]
enum VariantArg {
    Paper,
    Expanded,
}

impl From<RuleArg> for SelectionRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Max => SelectionRule::MaxEntropy,
            RuleArg::Min => SelectionRule::MinEntropy,
        }
    }
}

impl From<VariantArg> for RenyiVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Paper => RenyiVariant::Paper,
            VariantArg::Expanded => RenyiVariant::Expanded,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    anchor: AnchorArgs,
    #[command(flatten)]
    topics: TopicArgs,
}

#[derive(Args)]
struct SimulateArgs {
    /// Which corpus to generate.
    #[arg(long, value_enum, default_value_t = SimKind::Demo)]
    kind: SimKind,
    /// Output directory for docs.jsonl and meta.csv.
    #[arg(long, short = 'o', value_name = "DIR", default_value = "sim-corpus")]
    out: PathBuf,
    /// RNG seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Documents (demo kind only).
    #[arg(long, default_value_t = 24)]
    docs: usize,
    /// Vocabulary size (demo kind only).
    #[arg(long, default_value_t = 60)]
    vocab: usize,
    /// Planted topic count (demo kind only).
    #[arg(long, default_value_t = 3)]
    topics: usize,
    /// Tokens per document (demo kind only).
    #[arg(long, default_value_t = 400)]
    tokens: usize,
}

#[derive(Copy, Clone, ValueEnum)]
enum SimKind {
    /// A small corpus drifting along a latent scale.
    Demo,
    /// The 180-document annual-address fixture (1849–2019).
    Sotu,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Wordfish(args) => cmd_wordfish(args),
        Command::Slda(args) => cmd_slda(args),
        Command::Lda(args) => cmd_lda(args),
        Command::Scan(args) => cmd_scan(args),
        Command::Run(args) => cmd_run(args, false),
        Command::Export(args) => cmd_run(args, true),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Ingest per config and warn about dropped documents.
fn ingest(cfg: &PipelineConfig) -> Result<DocumentTermMatrix, Error> {
    let dtm = pipeline::ingest(cfg).map_err(|e| e.in_stage("ingest"))?;
    if !dtm.dropped_docs.is_empty() {
        let shown: Vec<&str> = dtm
            .dropped_docs
            .iter()
            .take(5)
            .map(String::as_str)
            .collect();
        let more = dtm.dropped_docs.len().saturating_sub(shown.len());
        let suffix = if more > 0 {
            format!(" (+{more} more)")
        } else {
            String::new()
        };
        eprintln!(
            "warning: dropped {} document(s) emptied by min_count={}: {}{}",
            dtm.dropped_docs.len(),
            dtm.min_count,
            shown.join(", "),
            suffix
        );
    }
    Ok(dtm)
}

fn cmd_ingest(args: IngestArgs) -> Result<(), Error> {
    let cfg = args.common.to_config()?;
    let dtm = ingest(&cfg)?;
    println!("documents  {}", dtm.n_docs());
    println!("vocabulary {}", dtm.n_terms());
    println!("tokens     {}", dtm.total_count());
    println!("dropped    {}", dtm.dropped_docs.len());
    if let Some(dir) = &cfg.export_dir {
        let path = write_text(dir, "counts.csv", dtm.dump_csv())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_wordfish(args: WordfishArgs) -> Result<(), Error> {
    let mut cfg = args.common.to_config()?;
    args.anchor.apply(&mut cfg);
    if let Some(v) = args.max_em_iters {
        cfg.wordfish.max_em_iters = v;
    }
    if let Some(v) = args.tol {
        cfg.wordfish.tol = v;
    }
    cfg.wordfish.seed = cfg.seed;

    let dtm = ingest(&cfg)?;
    let model = wordfish::fit(&dtm, &cfg.wordfish)
        .and_then(|m| wordfish::identify(m, &dtm.meta, cfg.wordfish.direction_anchor.as_ref()))
        .map_err(|e| e.in_stage("wordfish"))?;

    println!(
        "converged  {} after {} iterations",
        model.converged, model.n_iters
    );
    println!(
        "loglik     {}",
        model.loglik.last().copied().unwrap_or(f64::NAN)
    );
    let words = wordfish::word_positions(&model, &dtm.vocab, 5)?;
    let summary: Vec<String> = words
        .iter()
        .map(|w| format!("{} ({:+.2})", w.term, w.beta))
        .collect();
    println!("top |β|    {}", summary.join(", "));

    if let Some(dir) = &cfg.export_dir {
        let mut csv = String::from("doc_id,year,party,speaker,psi,alpha\n");
        for row in wordfish::doc_positions(&model, &dtm.meta)? {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{}",
                row.doc_id,
                row.year,
                row.party.as_deref().unwrap_or(""),
                row.speaker.as_deref().unwrap_or(""),
                row.psi,
                row.alpha
            );
        }
        println!(
            "wrote {}",
            write_text(dir, "doc_positions.csv", csv)?.display()
        );

        let mut csv = String::from("term,beta,nu\n");
        for row in wordfish::word_positions(&model, &dtm.vocab, dtm.n_terms())? {
            let _ = writeln!(csv, "{},{},{}", row.term, row.beta, row.nu);
        }
        println!(
            "wrote {}",
            write_text(dir, "word_positions.csv", csv)?.display()
        );
        let json = serde_json::to_string_pretty(&model).map_err(Error::from)?;
        println!(
            "wrote {}",
            write_text(dir, "wordfish_model.json", json)?.display()
        );
    }
    Ok(())
}

fn cmd_slda(args: SldaArgs) -> Result<(), Error> {
    let mut cfg = args.common.to_config()?;
    args.anchor.apply(&mut cfg);
    args.topics.apply(&mut cfg);
    cfg.slda.seed = cfg.seed;

    let dtm = ingest(&cfg)?;
    let responses = match &args.responses {
        Some(path) => read_responses(path, &dtm)?,
        None => {
            eprintln!("note: no --responses given; fitting the stage-1 scale first");
            let mut wf = cfg.wordfish.clone();
            wf.seed = cfg.seed;
            let model = wordfish::fit(&dtm, &wf)
                .and_then(|m| wordfish::identify(m, &dtm.meta, wf.direction_anchor.as_ref()))
                .map_err(|e| e.in_stage("wordfish"))?;
            model.psi
        }
    };

    let (model, state) = slda::fit(&dtm, &responses, &cfg.slda).map_err(|e| e.in_stage("slda"))?;
    println!("k          {}", cfg.slda.k);
    println!("rounds     {}", model.elbo_trace.len());
    println!("r_squared  {}", model.r_squared(&state, &responses)?);
    println!("sigma2     {}", model.sigma2);
    let order = pipeline::rank_topics(&model);
    println!(
        "topics by η {}",
        order
            .iter()
            .map(|t| format!("{t}({:+.2})", model.eta[t - 1]))
            .collect::<Vec<_>>()
            .join(" ")
    );

    if let Some(dir) = &cfg.export_dir {
        let json = serde_json::to_string_pretty(&model).map_err(Error::from)?;
        println!(
            "wrote {}",
            write_text(dir, "slda_model.json", json)?.display()
        );
        let csv = topic_words_csv(&model.top_words(&dtm.vocab, 10)?, &model, &dtm)?;
        println!(
            "wrote {}",
            write_text(dir, "topic_words.csv", csv)?.display()
        );
    }
    Ok(())
}

fn cmd_lda(args: LdaArgs) -> Result<(), Error> {
    let mut cfg = args.common.to_config()?;
    args.topics.apply(&mut cfg);

    let dtm = ingest(&cfg)?;
    let lda_cfg = lda::LdaConfig {
        k: cfg.slda.k,
        alpha: cfg.slda.alpha,
        eta_dir: cfg.slda.eta_dir,
        em_iters: cfg.slda.em_iters,
        e_inner_iters: cfg.slda.e_inner_iters,
        seed: cfg.seed,
    };
    let (model, _state) = lda::fit_lda(&dtm, &lda_cfg).map_err(|e| e.in_stage("lda"))?;
    println!("k          {}", lda_cfg.k);
    println!("rounds     {}", model.elbo_trace.len());
    let top = model.top_words(&dtm.vocab, 10)?;
    for (t, words) in top.iter().enumerate() {
        println!("topic {:>2}   {}", t + 1, words.join(" "));
    }

    if let Some(dir) = &cfg.export_dir {
        let json = serde_json::to_string_pretty(&model).map_err(Error::from)?;
        println!(
            "wrote {}",
            write_text(dir, "lda_model.json", json)?.display()
        );
    }
    Ok(())
}

fn cmd_scan(args: ScanArgs) -> Result<(), Error> {
    let mut cfg = args.common.to_config()?;
    args.anchor.apply(&mut cfg);
    args.topics.apply(&mut cfg);
    cfg.slda.seed = cfg.seed;
    cfg.wordfish.seed = cfg.seed;

    let dtm = ingest(&cfg)?;
    let model = wordfish::fit(&dtm, &cfg.wordfish)
        .and_then(|m| wordfish::identify(m, &dtm.meta, cfg.wordfish.direction_anchor.as_ref()))
        .map_err(|e| e.in_stage("wordfish"))?;

    let report = renyi::scan_topics(
        &dtm,
        &model.psi,
        args.k_min,
        args.k_max,
        &cfg.slda,
        args.rule.into(),
        args.variant.into(),
    )
    .map_err(|e| e.in_stage("scan"))?;

    println!(
        "{:>4}  {:>10}  {:>14}  {:>14}",
        "k", "r_squared", "loglik", "entropy"
    );
    for row in &report.rows {
        println!(
            "{:>4}  {:>10.4}  {:>14.4}  {:>14.6}",
            row.k, row.r_squared, row.response_loglik, row.renyi_entropy
        );
    }
    println!("selected k = {}", report.selected_k);

    if let Some(dir) = &cfg.export_dir {
        let mut csv = String::from("k,r_squared,response_loglik,renyi_entropy\n");
        for row in &report.rows {
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                row.k, row.r_squared, row.response_loglik, row.renyi_entropy
            );
        }
        println!("wrote {}", write_text(dir, "scan.csv", csv)?.display());
    }
    Ok(())
}

fn cmd_run(args: RunArgs, require_export: bool) -> Result<(), Error> {
    let mut cfg = args.common.to_config()?;
    args.anchor.apply(&mut cfg);
    args.topics.apply(&mut cfg);
    if require_export && cfg.export_dir.is_none() {
        return Err(Error::InvalidConfig(
            "export needs an output directory (--out or export_dir in the config)".into(),
        ));
    }

    // Reuse the CLI's dropped-doc warning path, then run the library driver
    // on the same config (it re-ingests deterministically).
    let _ = ingest(&cfg)?;
    let result = pipeline::run_topic_scaling(&cfg)?;

    println!("documents    {}", result.wordfish.psi.len());
    println!("r_squared    {}", result.metrics.r_squared);
    println!("loglik       {}", result.metrics.response_loglik);
    println!("entropy      {}", result.metrics.renyi_entropy);
    println!(
        "topic order  {}",
        result
            .topic_order
            .iter()
            .map(|t| t.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    if let Some(dir) = &cfg.export_dir {
        println!("exported to  {}", dir.display());
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let corpus = match args.kind {
        SimKind::Demo => {
            sim::ScaledCorpusSim::builder()
                .docs(args.docs)
                .vocab(args.vocab)
                .topics(args.topics)
                .tokens_per_doc(args.tokens)
                .seed(args.seed)
                .build()
                .generate()
                .corpus
        }
        SimKind::Sotu => sim::sotu_corpus(args.seed).corpus,
    };
    let (docs_path, meta_path) = sim::write_corpus(&corpus, &args.out)?;
    println!("wrote {}", docs_path.display());
    println!("wrote {}", meta_path.display());
    println!("documents {}", corpus.len());
    Ok(())
}

/// Write `contents` to `dir/name`, creating `dir` if needed.
fn write_text(dir: &std::path::Path, name: &str, contents: String) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path)
}

/// Top-words table with weights, shared by the slda subcommand.
fn topic_words_csv(
    top: &[Vec<String>],
    model: &slda::SldaModel,
    dtm: &DocumentTermMatrix,
) -> Result<String, Error> {
    let mut csv = String::from("topic_id,rank,term,weight\n");
    for (t, words) in top.iter().enumerate() {
        for (r, word) in words.iter().enumerate() {
            let id = dtm
                .vocab
                .id(word)
                .ok_or_else(|| Error::BadMetadata(format!("term {word} not in vocabulary")))?;
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                t + 1,
                r + 1,
                word,
                model.log_beta[(t, id)].exp()
            );
        }
    }
    Ok(csv)
}

/// Read a doc_id → response table and align it with the matrix rows.
fn read_responses(path: &std::path::Path, dtm: &DocumentTermMatrix) -> Result<Vec<f64>, Error> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(Error::from)?;
    let headers = reader.headers().map_err(Error::from)?.clone();
    let id_col = headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case("doc_id"))
        .ok_or_else(|| Error::BadMetadata("responses file needs a doc_id column".into()))?;
    let y_col = headers
        .iter()
        .position(|h| {
            let h = h.trim();
            h.eq_ignore_ascii_case("psi") || h.eq_ignore_ascii_case("y")
        })
        .ok_or_else(|| Error::BadMetadata("responses file needs a psi or y column".into()))?;

    let mut by_id: HashMap<String, f64> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(Error::from)?;
        let doc_id = record
            .get(id_col)
            .ok_or_else(|| Error::BadMetadata("short row in responses file".into()))?
            .trim()
            .to_string();
        let value: f64 = record
            .get(y_col)
            .ok_or_else(|| Error::BadMetadata("short row in responses file".into()))?
            .trim()
            .parse()
            .map_err(|_| Error::BadMetadata(format!("row {doc_id}: response is not a number")))?;
        by_id.insert(doc_id, value);
    }

    dtm.meta
        .iter()
        .map(|m| {
            by_id
                .get(&m.doc_id)
                .copied()
                .ok_or_else(|| Error::MissingMetadata {
                    doc_id: m.doc_id.clone(),
                })
        })
        .collect()
}
