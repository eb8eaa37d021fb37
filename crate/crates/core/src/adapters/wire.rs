//! Request and artifact schemas for every adapter role.
//!
//! Field names are part of the wire contract with external backends and
//! must not change.

use serde::{Deserialize, Serialize};

use super::{AdapterError, AdapterRole};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start_s: f64,
    pub end_s: f64,
}

impl Span {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        Self { start_s, end_s }
    }

    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start_s < other.end_s && other.start_s < self.end_s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignRequest {
    pub audio_path: String,
    pub words: Vec<String>,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordAlignment {
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignArtifact {
    pub alignments: Vec<WordAlignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub audio_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingArtifact {
    pub vector: Vec<f64>,
    pub dim: usize,
}

impl EmbeddingArtifact {
    pub fn new(vector: Vec<f64>) -> Self {
        let dim = vector.len();
        Self { vector, dim }
    }

    pub fn norm(&self) -> f64 {
        self.vector.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrRequest {
    pub audio_path: String,
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrArtifact {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioRequest {
    pub audio_path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QscoreArtifact {
    pub dnsmos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LangidRequest {
    Text { text: String },
    Audio { audio_path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangidArtifact {
    pub language: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrateArtifact {
    pub true_sample_rate_hz: u32,
}

/// Request for the `denoise` and `audio_cut` roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioEditRequest {
    pub audio_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spans: Option<Vec<Span>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputArtifact {
    pub output_path: String,
}

fn violation(role: AdapterRole, detail: impl Into<String>) -> AdapterError {
    AdapterError::SchemaViolation {
        role,
        detail: detail.into(),
    }
}

fn parse<T: serde::de::DeserializeOwned>(role: AdapterRole, value: &serde_json::Value) -> Result<T, AdapterError> {
    serde_json::from_value(value.clone()).map_err(|e| violation(role, e.to_string()))
}

/// Checks an artifact against the schema of `role`.
pub fn validate_artifact(role: AdapterRole, artifact: &serde_json::Value) -> Result<(), AdapterError> {
    match role {
        AdapterRole::Aligner => {
            let a: AlignArtifact = parse(role, artifact)?;
            let mut prev_end = f64::NEG_INFINITY;
            for (i, w) in a.alignments.iter().enumerate() {
                if !(w.start_s.is_finite() && w.end_s.is_finite()) || w.end_s <= w.start_s {
                    return Err(violation(role, format!("alignment {i} has end_s <= start_s")));
                }
                if w.start_s < prev_end {
                    return Err(violation(role, format!("alignment {i} overlaps its predecessor")));
                }
                if !(0.0..=1.0).contains(&w.score) {
                    return Err(violation(role, format!("alignment {i} score outside [0, 1]")));
                }
                prev_end = w.end_s;
            }
        }
        AdapterRole::Embedder => {
            let e: EmbeddingArtifact = parse(role, artifact)?;
            if e.dim == 0 {
                return Err(violation(role, "dim must be positive"));
            }
            if e.vector.len() != e.dim {
                return Err(violation(
                    role,
                    format!("vector has {} entries but dim is {}", e.vector.len(), e.dim),
                ));
            }
            if e.vector.iter().any(|x| !x.is_finite()) {
                return Err(violation(role, "vector contains non-finite values"));
            }
        }
        AdapterRole::Asr | AdapterRole::AsrDiarize => {
            parse::<AsrArtifact>(role, artifact)?;
        }
        AdapterRole::Qscore => {
            let q: QscoreArtifact = parse(role, artifact)?;
            if !(1.0..=5.0).contains(&q.dnsmos) {
                return Err(violation(role, format!("dnsmos {} outside [1, 5]", q.dnsmos)));
            }
        }
        AdapterRole::Langid => {
            let l: LangidArtifact = parse(role, artifact)?;
            if l.language.trim().is_empty() {
                return Err(violation(role, "empty language code"));
            }
        }
        AdapterRole::Srate => {
            let s: SrateArtifact = parse(role, artifact)?;
            if s.true_sample_rate_hz == 0 {
                return Err(violation(role, "sample rate must be positive"));
            }
        }
        AdapterRole::Denoise | AdapterRole::AudioCut => {
            let o: OutputArtifact = parse(role, artifact)?;
            if o.output_path.is_empty() {
                return Err(violation(role, "empty output_path"));
            }
        }
    }
    Ok(())
}
