//! External-model adapter protocol.
//!
//! Every ML dependency (aligner, speaker embedder, ASR, quality scorer, ...)
//! sits behind a role. A backend receives one JSON request and returns one
//! JSON artifact; the engine validates the artifact against the role schema
//! before using it. Backends:
//!
//! - [`SubprocessBackend`]: one process per request, JSON on stdin/stdout.
//! - [`ReplayBackend`]: serves artifacts recorded by [`RecordingBackend`].
//! - [`MockBackend`]: deterministic stand-ins driven by JSON mock-audio files.

mod mock;
mod replay;
mod subprocess;
pub mod wire;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use mock::{mock_embedding, MockAudio, MockBackend, MockConfig, MockWord};
pub use replay::{RecordingBackend, ReplayBackend, ReplayStore};
pub use subprocess::SubprocessBackend;
pub use wire::*;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdapterRole {
    Aligner,
    Embedder,
    Asr,
    /// Speaker-tagged transcription used by the corpus pipeline.
    AsrDiarize,
    Qscore,
    Langid,
    Srate,
    Denoise,
    AudioCut,
}

impl AdapterRole {
    pub const ALL: [AdapterRole; 9] = [
        AdapterRole::Aligner,
        AdapterRole::Embedder,
        AdapterRole::Asr,
        AdapterRole::AsrDiarize,
        AdapterRole::Qscore,
        AdapterRole::Langid,
        AdapterRole::Srate,
        AdapterRole::Denoise,
        AdapterRole::AudioCut,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AdapterRole::Aligner => "aligner",
            AdapterRole::Embedder => "embedder",
            AdapterRole::Asr => "asr",
            AdapterRole::AsrDiarize => "asr_diarize",
            AdapterRole::Qscore => "qscore",
            AdapterRole::Langid => "langid",
            AdapterRole::Srate => "srate",
            AdapterRole::Denoise => "denoise",
            AdapterRole::AudioCut => "audio_cut",
        }
    }

    /// `ADAPTER_<ROLE>_CMD`
    pub fn env_var(self) -> String {
        format!("ADAPTER_{}_CMD", self.as_str().to_ascii_uppercase())
    }
}

impl fmt::Display for AdapterRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AdapterRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AdapterRole::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown adapter role {s:?}"))
    }
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("no backend registered for role {0}")]
    NotRegistered(AdapterRole),
    #[error("{role} backend failed (exit code {exit_code:?}): {stderr_tail}")]
    Failure {
        role: AdapterRole,
        exit_code: Option<i32>,
        stderr_tail: String,
    },
    #[error("{role} artifact violates schema: {detail}")]
    SchemaViolation { role: AdapterRole, detail: String },
    #[error("{role} backend timed out after {after:?}")]
    Timeout { role: AdapterRole, after: Duration },
    #[error("no recorded {role} artifact for request key {key}")]
    ReplayMiss { role: AdapterRole, key: String },
    #[error("{role} adapter I/O error: {source}")]
    Io {
        role: AdapterRole,
        #[source]
        source: std::io::Error,
    },
}

impl AdapterError {
    pub fn role(&self) -> AdapterRole {
        match self {
            AdapterError::NotRegistered(role) => *role,
            AdapterError::Failure { role, .. }
            | AdapterError::SchemaViolation { role, .. }
            | AdapterError::Timeout { role, .. }
            | AdapterError::ReplayMiss { role, .. }
            | AdapterError::Io { role, .. } => *role,
        }
    }

    pub(crate) fn failure(role: AdapterRole, message: impl Into<String>) -> Self {
        AdapterError::Failure {
            role,
            exit_code: None,
            stderr_tail: message.into(),
        }
    }
}

/// Something that turns a role request into a raw artifact.
///
/// Implementations must be stateless with respect to the request: the same
/// request yields the same artifact.
pub trait Backend: Send + Sync {
    fn invoke(&self, role: AdapterRole, request: &Value) -> Result<Value, AdapterError>;

    fn describe(&self) -> String;
}

/// Role → backend registry. Artifacts are schema-checked on the way out.
#[derive(Clone, Default)]
pub struct AdapterSet {
    backends: BTreeMap<AdapterRole, Arc<dyn Backend>>,
}

impl fmt::Debug for AdapterSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map()
            .entries(self.backends.iter().map(|(r, b)| (r, b.describe())))
            .finish()
    }
}

impl AdapterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Uses one backend for every role.
    pub fn uniform(backend: Arc<dyn Backend>) -> Self {
        let mut set = Self::new();
        for role in AdapterRole::ALL {
            set.register(role, Arc::clone(&backend));
        }
        set
    }

    /// Registers a subprocess backend for each role whose
    /// `ADAPTER_<ROLE>_CMD` variable is set.
    pub fn from_env(timeout: Duration) -> Self {
        let mut set = Self::new();
        for role in AdapterRole::ALL {
            if let Ok(cmd) = std::env::var(role.env_var()) {
                if !cmd.trim().is_empty() {
                    set.register(role, Arc::new(SubprocessBackend::new(cmd, timeout)));
                }
            }
        }
        set
    }

    pub fn register(&mut self, role: AdapterRole, backend: Arc<dyn Backend>) -> &mut Self {
        self.backends.insert(role, backend);
        self
    }

    pub fn has(&self, role: AdapterRole) -> bool {
        self.backends.contains_key(&role)
    }

    pub fn roles(&self) -> impl Iterator<Item = AdapterRole> + '_ {
        self.backends.keys().copied()
    }

    /// Fails with the first missing role.
    pub fn require(&self, roles: &[AdapterRole]) -> Result<(), AdapterError> {
        match roles.iter().find(|r| !self.has(**r)) {
            Some(role) => Err(AdapterError::NotRegistered(*role)),
            None => Ok(()),
        }
    }

    /// Wraps every registered backend so its artifacts are also written to `store`.
    pub fn recording(&self, store: ReplayStore) -> Self {
        let store = Arc::new(store);
        let backends = self
            .backends
            .iter()
            .map(|(role, b)| {
                let rec: Arc<dyn Backend> = Arc::new(RecordingBackend::new(Arc::clone(b), Arc::clone(&store)));
                (*role, rec)
            })
            .collect();
        Self { backends }
    }

    pub fn invoke(&self, role: AdapterRole, request: &Value) -> Result<Value, AdapterError> {
        let backend = self.backends.get(&role).ok_or(AdapterError::NotRegistered(role))?;
        let artifact = backend.invoke(role, request)?;
        validate_artifact(role, &artifact)?;
        Ok(artifact)
    }

    fn call<Req: Serialize, Art: serde::de::DeserializeOwned>(
        &self,
        role: AdapterRole,
        request: &Req,
    ) -> Result<Art, AdapterError> {
        let request = serde_json::to_value(request).map_err(|e| AdapterError::SchemaViolation {
            role,
            detail: format!("unserializable request: {e}"),
        })?;
        let artifact = self.invoke(role, &request)?;
        serde_json::from_value(artifact).map_err(|e| AdapterError::SchemaViolation {
            role,
            detail: e.to_string(),
        })
    }

    pub fn align(&self, req: &AlignRequest) -> Result<AlignArtifact, AdapterError> {
        self.call(AdapterRole::Aligner, req)
    }

    pub fn embed(&self, req: &EmbedRequest) -> Result<EmbeddingArtifact, AdapterError> {
        self.call(AdapterRole::Embedder, req)
    }

    pub fn transcribe(&self, req: &AsrRequest) -> Result<AsrArtifact, AdapterError> {
        self.call(AdapterRole::Asr, req)
    }

    pub fn transcribe_tagged(&self, req: &AsrRequest) -> Result<AsrArtifact, AdapterError> {
        self.call(AdapterRole::AsrDiarize, req)
    }

    pub fn quality(&self, req: &AudioRequest) -> Result<QscoreArtifact, AdapterError> {
        self.call(AdapterRole::Qscore, req)
    }

    pub fn language(&self, req: &LangidRequest) -> Result<LangidArtifact, AdapterError> {
        self.call(AdapterRole::Langid, req)
    }

    pub fn sample_rate(&self, req: &AudioRequest) -> Result<SrateArtifact, AdapterError> {
        self.call(AdapterRole::Srate, req)
    }

    pub fn denoise(&self, req: &AudioEditRequest) -> Result<OutputArtifact, AdapterError> {
        self.call(AdapterRole::Denoise, req)
    }

    pub fn cut(&self, req: &AudioEditRequest) -> Result<OutputArtifact, AdapterError> {
        self.call(AdapterRole::AudioCut, req)
    }
}
