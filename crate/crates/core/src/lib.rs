//! Corpus engineering and evaluation engine for multi-speaker spoken-dialogue TTS.
//!
//! - [`script`]: speaker-tagged dialogue scripts, fragments, WER normalization, augmentation
//! - [`delay_codec`]: RVQ delay pattern and token-grid files
//! - [`corpus_pipeline`]: merging, filtering, synthetic interleaving, curriculum stages
//! - [`prompting`]: chat-template rendering for training and inference
//! - [`adapters`]: external-model protocol and backends
//! - [`ttsd_eval`]: alignment-based ACC / SIM / WER evaluation
//! - [`subjective`]: rating clips, win rates and Elo from pairwise judgments

pub mod adapters;
pub mod corpus_pipeline;
pub mod delay_codec;
pub mod prompting;
pub mod script;
pub mod subjective;
pub mod ttsd_eval;
