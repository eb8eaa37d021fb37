//! Recorded-artifact cache.
//!
//! Artifacts live at `<dir>/<role>/<key>.json` as `{"request": ..., "artifact": ...}`,
//! where `key` is a SHA-256 prefix of the role name and the canonical request
//! JSON. Paths under an optional root are made relative before hashing so a
//! cache recorded in one checkout replays in another.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{AdapterError, AdapterRole, Backend};

#[derive(Debug, Clone)]
pub struct ReplayStore {
    dir: PathBuf,
    path_root: Option<PathBuf>,
}

impl ReplayStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: dir.into(),
            path_root: None,
        }
    }

    pub fn with_path_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.path_root = Some(root.into());
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn relativize(&self, value: &Value) -> Value {
        match value {
            Value::Object(map) => Value::Object(
                map.iter()
                    .map(|(k, v)| {
                        let v = match (k.as_str(), v) {
                            ("audio_path", Value::String(p)) => Value::String(self.relative_path(p)),
                            _ => self.relativize(v),
                        };
                        (k.clone(), v)
                    })
                    .collect(),
            ),
            Value::Array(items) => Value::Array(items.iter().map(|v| self.relativize(v)).collect()),
            other => other.clone(),
        }
    }

    fn relative_path(&self, path: &str) -> String {
        let rel = self
            .path_root
            .as_ref()
            .and_then(|root| Path::new(path).strip_prefix(root).ok())
            .map(|p| p.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.to_string());
        rel.replace('\\', "/")
    }

    /// Request as it is stored and hashed.
    pub fn canonical_request(&self, request: &Value) -> Value {
        self.relativize(request)
    }

    pub fn key(&self, role: AdapterRole, request: &Value) -> String {
        let canonical = serde_json::to_string(&self.canonical_request(request)).expect("JSON values always serialize");
        let mut hasher = Sha256::new();
        hasher.update(role.as_str().as_bytes());
        hasher.update(b"\n");
        hasher.update(canonical.as_bytes());
        hex::encode(&hasher.finalize()[..16])
    }

    fn entry_path(&self, role: AdapterRole, key: &str) -> PathBuf {
        self.dir.join(role.as_str()).join(format!("{key}.json"))
    }

    pub fn load(&self, role: AdapterRole, request: &Value) -> Result<Value, AdapterError> {
        let key = self.key(role, request);
        let path = self.entry_path(role, &key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(AdapterError::ReplayMiss { role, key });
            }
            Err(source) => return Err(AdapterError::Io { role, source }),
        };
        let mut entry: Value = serde_json::from_slice(&bytes).map_err(|e| AdapterError::SchemaViolation {
            role,
            detail: format!("corrupt replay entry {}: {e}", path.display()),
        })?;
        entry
            .get_mut("artifact")
            .map(Value::take)
            .ok_or_else(|| AdapterError::SchemaViolation {
                role,
                detail: format!("replay entry {} has no artifact", path.display()),
            })
    }

    pub fn save(&self, role: AdapterRole, request: &Value, artifact: &Value) -> Result<(), AdapterError> {
        let key = self.key(role, request);
        let path = self.entry_path(role, &key);
        let io = |source| AdapterError::Io { role, source };
        fs::create_dir_all(path.parent().expect("entry path has a parent")).map_err(io)?;
        let entry = json!({
            "request": self.canonical_request(request),
            "artifact": artifact,
        });
        let mut text = serde_json::to_string_pretty(&entry).expect("JSON values always serialize");
        text.push('\n');
        fs::write(&path, text).map_err(io)
    }
}

/// Serves artifacts from a [`ReplayStore`]; misses are errors.
#[derive(Debug, Clone)]
pub struct ReplayBackend {
    store: ReplayStore,
}

impl ReplayBackend {
    pub fn new(store: ReplayStore) -> Self {
        Self { store }
    }
}

impl Backend for ReplayBackend {
    fn invoke(&self, role: AdapterRole, request: &Value) -> Result<Value, AdapterError> {
        self.store.load(role, request)
    }

    fn describe(&self) -> String {
        format!("replay {}", self.store.dir.display())
    }
}

/// Forwards to an inner backend and records every successful artifact.
pub struct RecordingBackend {
    inner: Arc<dyn Backend>,
    store: Arc<ReplayStore>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn Backend>, store: Arc<ReplayStore>) -> Self {
        Self { inner, store }
    }
}

impl Backend for RecordingBackend {
    fn invoke(&self, role: AdapterRole, request: &Value) -> Result<Value, AdapterError> {
        let artifact = self.inner.invoke(role, request)?;
        self.store.save(role, request, &artifact)?;
        Ok(artifact)
    }

    fn describe(&self) -> String {
        format!("recording({}) -> {}", self.inner.describe(), self.store.dir.display())
    }
}
