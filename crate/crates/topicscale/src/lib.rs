//! Two-stage document scaling ("topic scaling").
//!
//! Stage one places every document of a corpus on a one-dimensional scale with a
//! Poisson count model ([`wordfish`]). Stage two decomposes that scale with a
//! supervised topic model whose Gaussian response *is* the learned position
//! ([`slda`]), so each topic picks up the share of the scale it explains and
//! topics can be ranked along it. A Rényi-entropy criterion over fitted
//! topic-word distributions chooses the number of topics ([`renyi`]), and an
//! unsupervised baseline ([`lda`]) is included for comparison. The [`pipeline`]
//! module wires the stages together behind one config and exports deterministic,
//! checksummed artifacts; [`sim`] generates seeded synthetic corpora for
//! demos and validation.
//!
//! ```
//! use topicscale::{corpus, pipeline, sim};
//!
//! // A tiny synthetic corpus: positions drift over time, topics follow.
//! let sim = sim::ScaledCorpusSim::builder()
//!     .docs(24)
//!     .vocab(60)
//!     .topics(3)
//!     .tokens_per_doc(400)
//!     .seed(7)
//!     .build();
//! let gen = sim.generate();
//! let dtm = corpus::build_dtm(&gen.corpus, 1).unwrap();
//!
//! let cfg = pipeline::PipelineConfig {
//!     slda: topicscale::slda::SldaConfig { k: 3, em_iters: 30, ..Default::default() },
//!     ..Default::default()
//! };
//! let result = pipeline::run_topic_scaling_on(&dtm, &cfg).unwrap();
//! assert_eq!(result.topic_order.len(), 3);
//! assert!(result.metrics.r_squared > 0.5);
//! ```

pub mod corpus;
pub mod error;
pub mod kde;
pub mod lda;
pub mod pipeline;
pub mod renyi;
pub mod sim;
pub mod slda;
pub mod wordfish;

pub(crate) mod math;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
