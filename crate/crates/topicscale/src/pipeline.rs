//! End-to-end driver: corpus → document scale → supervised topics → ranking.
//!
//! [`run_topic_scaling`] executes the full two-stage protocol from files on
//! disk; [`run_topic_scaling_on`] runs the same stages on an already-built
//! document-term matrix. The second stage's responses are exactly the
//! identified positions ψ̂ from the first stage — no re-standardization
//! happens in between, so the fitted coefficients η live on the same scale
//! as the documents.
//!
//! A topic's *position on the scale* is defined as its response coefficient
//! η_k: since the model reconstructs a document's position as η⊤z̄, the
//! coefficient is where a document consisting purely of that topic would
//! land. [`rank_topics`] is the ascending argsort of η, which is invariant
//! under adding a constant to every coefficient.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{
    build_dtm, csv_field, load_documents, subset_by_year, DocumentMeta, DocumentTermMatrix,
};
use crate::error::Error;
use crate::renyi::{renyi_entropy, RenyiVariant};
use crate::slda::{self, SldaConfig, SldaModel, VariationalState};
use crate::wordfish::{self, WordfishConfig, WordfishModel};
use crate::Result;

pub use crate::kde::{density_by_group, DensityCurve, GroupDensities};

/// Summary metrics of a finished run, recomputable from the stored models.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    /// In-sample R² of the response fit (stage 2 predicting ψ̂).
    pub r_squared: f64,
    /// Gaussian response log-likelihood at the point predictions.
    pub response_loglik: f64,
    /// Entropy of the fitted topic-word matrix (see `renyi`).
    pub renyi_entropy: f64,
}

/// Everything a full run produces.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicScalingResult {
    /// Stage 1: the fitted, identified document-scaling model.
    pub wordfish: WordfishModel,
    /// Stage 2: the supervised topic model with responses ψ̂.
    pub slda: SldaModel,
    /// Converged variational quantities (γ, expected counts, z̄).
    pub state: VariationalState,
    /// 1-based topic indices sorted by η ascending (ties by index).
    pub topic_order: Vec<usize>,
    /// Fit metrics.
    pub metrics: Metrics,
}

/// Full-run configuration. Deserializes from a TOML document of the same
/// shape; every field has a default, so a config file may set only the
/// fields it cares about:
///
/// ```toml
/// docs_path = "corpus/docs.jsonl"
/// meta_path = "corpus/meta.csv"
/// year_from = 1853
/// year_to = 2019
/// min_count = 3
/// export_dir = "out"
/// seed = 42
///
/// [wordfish]
/// direction_anchor = ["1981-Carter", "1981-Reagan"]
///
/// [slda]
/// k = 15
/// alpha = 1.0
/// eta_dir = 0.1
/// lambda = 0.01
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Token source: JSONL (`{"doc_id", "text"}` per line) or CSV/TSV.
    pub docs_path: PathBuf,
    /// Metadata table with at least `doc_id` and `year` columns.
    pub meta_path: PathBuf,
    /// Keep only documents with year ≥ this, if set.
    pub year_from: Option<i32>,
    /// Keep only documents with year ≤ this, if set.
    pub year_to: Option<i32>,
    /// Minimum corpus-wide term count for a word to enter the vocabulary.
    pub min_count: u32,
    /// Stage-1 settings (including the optional direction anchor).
    pub wordfish: WordfishConfig,
    /// Stage-2 settings.
    pub slda: SldaConfig,
    /// Entropy formula used for the reported metric.
    pub renyi_variant: RenyiVariant,
    /// Where to write artifacts; `None` skips the export step.
    pub export_dir: Option<PathBuf>,
    /// Master seed; stamped into both stage configs at run time so one value
    /// pins the whole run.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            docs_path: PathBuf::from("docs.jsonl"),
            meta_path: PathBuf::from("meta.csv"),
            year_from: None,
            year_to: None,
            min_count: 1,
            wordfish: WordfishConfig::default(),
            slda: SldaConfig::default(),
            renyi_variant: RenyiVariant::Expanded,
            export_dir: None,
            seed: 42,
        }
    }
}

impl PipelineConfig {
    /// Parse a TOML config file.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Ok(toml::from_str(&text)?)
    }

    /// The stage configs with the master seed applied.
    fn seeded(&self) -> (WordfishConfig, SldaConfig) {
        let mut wf = self.wordfish.clone();
        let mut sl = self.slda.clone();
        wf.seed = self.seed;
        sl.seed = self.seed;
        (wf, sl)
    }
}

/// Run both stages from files on disk, per `config`; artifacts are written
/// to `config.export_dir` when set. Any stage failure is tagged with the
/// stage name (`ingest`, `wordfish`, `slda`, `metrics`, `export`).
pub fn run_topic_scaling(config: &PipelineConfig) -> Result<TopicScalingResult> {
    let dtm = ingest(config).map_err(|e| e.in_stage("ingest"))?;
    let result = run_topic_scaling_on(&dtm, config)?;
    if let Some(dir) = &config.export_dir {
        export(&result, &dtm, dir).map_err(|e| e.in_stage("export"))?;
    }
    Ok(result)
}

/// Load, year-filter, and count the corpus.
pub fn ingest(config: &PipelineConfig) -> Result<DocumentTermMatrix> {
    let mut corpus = load_documents(&config.docs_path, &config.meta_path)?;
    if config.year_from.is_some() || config.year_to.is_some() {
        corpus = subset_by_year(
            &corpus,
            config.year_from.unwrap_or(i32::MIN),
            config.year_to.unwrap_or(i32::MAX),
        )?;
    }
    build_dtm(&corpus, config.min_count)
}

/// Run both stages on an already-built matrix (no file IO). Deterministic
/// given `config.seed`.
pub fn run_topic_scaling_on(
    dtm: &DocumentTermMatrix,
    config: &PipelineConfig,
) -> Result<TopicScalingResult> {
    let (wf_cfg, slda_cfg) = config.seeded();

    let raw = wordfish::fit(dtm, &wf_cfg).map_err(|e| e.in_stage("wordfish"))?;
    let wordfish = wordfish::identify(raw, &dtm.meta, wf_cfg.direction_anchor.as_ref())
        .map_err(|e| e.in_stage("wordfish"))?;

    let (slda, state) = slda::fit(dtm, &wordfish.psi, &slda_cfg).map_err(|e| e.in_stage("slda"))?;

    let topic_order = rank_topics(&slda);
    let metrics = compute_metrics(&wordfish, &slda, &state, config.renyi_variant)
        .map_err(|e| e.in_stage("metrics"))?;

    Ok(TopicScalingResult {
        wordfish,
        slda,
        state,
        topic_order,
        metrics,
    })
}

fn compute_metrics(
    wordfish: &WordfishModel,
    slda: &SldaModel,
    state: &VariationalState,
    variant: RenyiVariant,
) -> Result<Metrics> {
    let beta = slda.log_beta.mapv(f64::exp);
    Ok(Metrics {
        r_squared: slda.r_squared(state, &wordfish.psi)?,
        response_loglik: slda.response_loglik(state, &wordfish.psi)?,
        renyi_entropy: renyi_entropy(&beta.view(), variant)?,
    })
}

/// 1-based topic indices sorted by η ascending, ties broken by index.
pub fn rank_topics(model: &SldaModel) -> Vec<usize> {
    let mut order: Vec<usize> = (0..model.eta.len()).collect();
    order.sort_by(|&a, &b| model.eta[a].total_cmp(&model.eta[b]).then(a.cmp(&b)));
    order.into_iter().map(|i| i + 1).collect()
}

/// One row of the long-format topic-proportion table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSeriesRow {
    pub year: i32,
    pub doc_id: String,
    /// 1-based topic index.
    pub topic_id: usize,
    /// The document's z̄ entry for this topic.
    pub proportion: f64,
}

/// Per-document topic proportions joined with document metadata: one row per
/// (document, topic), document-major, topics ascending. Each document's
/// proportions sum to 1 (up to the converged E-step's arithmetic).
pub fn topic_series(
    state: &VariationalState,
    meta: &[DocumentMeta],
) -> Result<Vec<TopicSeriesRow>> {
    let (d, k) = state.zbar.dim();
    if meta.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "{} metadata rows for {} documents",
            meta.len(),
            d
        )));
    }
    let mut rows = Vec::with_capacity(d * k);
    for (i, m) in meta.iter().enumerate() {
        for t in 0..k {
            rows.push(TopicSeriesRow {
                year: m.year,
                doc_id: m.doc_id.clone(),
                topic_id: t + 1,
                proportion: state.zbar[(i, t)],
            });
        }
    }
    Ok(rows)
}

/// One exported file and the SHA-256 of its contents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

/// The export manifest: every written file with a content checksum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub files: Vec<ManifestEntry>,
}

/// Number of top terms written per topic in `topic_words.csv`.
const EXPORT_TOP_WORDS: usize = 10;

/// Write every artifact of a finished run into `dir` (created if missing;
/// existing files are overwritten, so re-export is idempotent):
///
/// * `doc_positions.csv` — doc_id, year, party, speaker, ψ̂, α
/// * `word_positions.csv` — term, β, ν (all terms, |β| descending)
/// * `wordfish_model.json`, `slda_model.json` — full fitted models
/// * `topic_words.csv` — top terms per topic with weights
/// * `topic_order.csv` — topics sorted along the scale by η
/// * `topic_series.csv` — long-format per-document topic proportions
/// * `density_by_party.csv` — kernel density of ψ̂ per party (parties with
///   at least two documents; header-only if no such party exists)
/// * `metrics.csv` — run metrics
/// * `manifest.csv` — every file above with its SHA-256
pub fn export(
    result: &TopicScalingResult,
    dtm: &DocumentTermMatrix,
    dir: &Path,
) -> Result<ExportManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let mut entries = Vec::new();
    let mut put = |name: &str, contents: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, &contents).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut hasher = Sha256::new();
        hasher.update(contents.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for byte in digest {
            let _ = write!(hex, "{byte:02x}");
        }
        entries.push(ManifestEntry {
            file: name.to_string(),
            sha256: hex,
        });
        Ok(())
    };

    // Document positions.
    let mut csv = String::from("doc_id,year,party,speaker,psi,alpha\n");
    for row in wordfish::doc_positions(&result.wordfish, &dtm.meta)? {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            csv_field(&row.doc_id),
            row.year,
            csv_field(row.party.as_deref().unwrap_or("")),
            csv_field(row.speaker.as_deref().unwrap_or("")),
            row.psi,
            row.alpha
        );
    }
    put("doc_positions.csv", csv)?;

    // Word positions, most discriminating first.
    let mut csv = String::from("term,beta,nu\n");
    for row in wordfish::word_positions(&result.wordfish, &dtm.vocab, dtm.n_terms())? {
        let _ = writeln!(csv, "{},{},{}", csv_field(&row.term), row.beta, row.nu);
    }
    put("word_positions.csv", csv)?;

    put(
        "wordfish_model.json",
        serde_json::to_string_pretty(&result.wordfish)?,
    )?;
    put(
        "slda_model.json",
        serde_json::to_string_pretty(&result.slda)?,
    )?;

    // Top terms per topic.
    let mut csv = String::from("topic_id,rank,term,weight\n");
    let top = result.slda.top_words(&dtm.vocab, EXPORT_TOP_WORDS)?;
    for (t, words) in top.iter().enumerate() {
        for (r, word) in words.iter().enumerate() {
            let id = dtm.vocab.id(word).expect("top word is in the vocabulary");
            let _ = writeln!(
                csv,
                "{},{},{},{}",
                t + 1,
                r + 1,
                csv_field(word),
                result.slda.log_beta[(t, id)].exp()
            );
        }
    }
    put("topic_words.csv", csv)?;

    // Topics along the scale.
    let mut csv = String::from("rank,topic_id,eta\n");
    for (rank, &topic_id) in result.topic_order.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{}",
            rank + 1,
            topic_id,
            result.slda.eta[topic_id - 1]
        );
    }
    put("topic_order.csv", csv)?;

    // Long-format topic proportions.
    let mut csv = String::from("year,doc_id,topic_id,proportion\n");
    for row in topic_series(&result.state, &dtm.meta)? {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            row.year,
            csv_field(&row.doc_id),
            row.topic_id,
            row.proportion
        );
    }
    put("topic_series.csv", csv)?;

    // Density of positions by party, for parties with enough documents.
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, m) in dtm.meta.iter().enumerate() {
        if let Some(party) = &m.party {
            if dtm
                .meta
                .iter()
                .filter(|o| o.party.as_ref() == Some(party))
                .count()
                >= 2
            {
                values.push(result.wordfish.psi[i]);
                labels.push(party.clone());
            }
        }
    }
    let mut csv = String::from("party,grid,density\n");
    if !values.is_empty() {
        let densities = density_by_group(&values, &labels, None)?;
        for curve in &densities.curves {
            for (g, d) in densities.grid.iter().zip(&curve.density) {
                let _ = writeln!(csv, "{},{},{}", csv_field(&curve.label), g, d);
            }
        }
    }
    put("density_by_party.csv", csv)?;

    // Metrics.
    let m = &result.metrics;
    let csv = format!(
        "metric,value\nr_squared,{}\nresponse_loglik,{}\nrenyi_entropy,{}\n",
        m.r_squared, m.response_loglik, m.renyi_entropy
    );
    put("metrics.csv", csv)?;

    // Manifest last, listing everything above.
    entries.sort_by(|a, b| a.file.cmp(&b.file));
    let manifest = ExportManifest { files: entries };
    let mut csv = String::from("file,sha256\n");
    for e in &manifest.files {
        let _ = writeln!(csv, "{},{}", csv_field(&e.file), e.sha256);
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, &csv).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(manifest)
}
