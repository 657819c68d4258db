//! Knowledge-graph driven book cover generation.
//!
//! A title is expanded into related candidate titles through a WordNet
//! graph ([`wndb`], [`augment`]), each candidate is rendered and scored by a
//! generator/discriminator backend ([`genai`]), and the covers are ranked
//! with the original title pinned first ([`pipeline`]). [`metrics`] holds
//! FID and Inception Score, [`train`] the training schedule helpers.

pub mod augment;
pub mod genai;
pub mod metrics;
pub mod pipeline;
pub mod train;
pub mod wndb;

pub use augment::{generate_new_titles, get_related_words, CandidateTitle, Provenance, Sampling, Vocabulary};
pub use genai::{CoverBackend, CoverImage, ScoreReport, StubBackend};
pub use pipeline::{rank_covers, run_pipeline, RunContext, RunManifest, RunParams};
pub use wndb::{fixture_lexicon, load_lexicon, Lexicon, LoadMode, Pos, Synset, SynsetId};
