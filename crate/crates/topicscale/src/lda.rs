//! Unsupervised topic baseline.
//!
//! Plain latent Dirichlet allocation fitted with the same variational engine
//! as the supervised model, minus every response term. It exists as the
//! comparison point: its topics organize by co-occurrence alone, so broadly
//! shared rhetorical vocabulary bleeds into many topics, while the supervised
//! model concentrates such terms into the few topics that carry the scale.

use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentTermMatrix, Vocabulary};
use crate::error::Error;
use crate::slda::{self, SldaConfig, VariationalState};
use crate::Result;

/// Estimation settings for the baseline (a subset of the supervised ones).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    /// Number of topics (≥ 1; a single topic is the degenerate unigram fit).
    pub k: usize,
    /// Symmetric Dirichlet prior on topic proportions.
    pub alpha: f64,
    /// Dirichlet smoothing of topic-word rows.
    pub eta_dir: f64,
    /// Outer EM rounds.
    pub em_iters: usize,
    /// Coordinate-ascent sweeps per document per E-step.
    pub e_inner_iters: usize,
    /// RNG seed.
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        let s = SldaConfig::default();
        LdaConfig {
            k: s.k,
            alpha: s.alpha,
            eta_dir: s.eta_dir,
            em_iters: s.em_iters,
            e_inner_iters: s.e_inner_iters,
            seed: s.seed,
        }
    }
}

impl LdaConfig {
    fn to_slda(&self) -> SldaConfig {
        SldaConfig {
            k: self.k,
            alpha: self.alpha,
            eta_dir: self.eta_dir,
            lambda: 0.0,
            em_iters: self.em_iters,
            e_inner_iters: self.e_inner_iters,
            m_inner_iters: 1,
            seed: self.seed,
        }
    }
}

/// A fitted unsupervised topic model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaModel {
    /// Log topic-word distributions, K×W.
    pub log_beta: ndarray::Array2<f64>,
    /// The configuration the model was fitted with.
    pub config: LdaConfig,
    /// Objective trace, one entry per EM round.
    pub elbo_trace: Vec<f64>,
}

impl LdaModel {
    /// Top `n` terms of every topic, ties broken by term order.
    pub fn top_words(&self, vocab: &Vocabulary, n: usize) -> Result<Vec<Vec<String>>> {
        slda::top_words_from(&self.log_beta.view(), vocab, n)
    }
}

/// Fit the baseline topic model.
pub fn fit_lda(
    dtm: &DocumentTermMatrix,
    config: &LdaConfig,
) -> Result<(LdaModel, VariationalState)> {
    if config.k < 1 {
        return Err(Error::InvalidConfig("k must be ≥ 1".into()));
    }
    let (model, state) = slda::fit_engine(dtm, None, &config.to_slda(), false, false)?;
    Ok((
        LdaModel {
            log_beta: model.log_beta,
            config: config.clone(),
            elbo_trace: model.elbo_trace,
        },
        state,
    ))
}
