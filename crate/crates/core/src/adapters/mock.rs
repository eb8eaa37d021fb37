//! Deterministic mock backends.
//!
//! A mock "audio file" is a JSON document ([`MockAudio`]) describing who says
//! what and when. Paths may carry virtual suffixes: `file.json#0-12.5,20-31`
//! selects spans (as produced by the mock `audio_cut`), `#denoised` is ignored.
//!
//! The mock embedder returns the speaker's one-hot basis vector plus seeded
//! Gaussian noise, so evaluation runs have a known ACC/SIM ground truth.

use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::wire::*;
use super::{AdapterError, AdapterRole, Backend};
use crate::script::{primary_language, SpeakerTag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MockConfig {
    /// Noise standard deviation added to every embedding component.
    pub sigma: f64,
    pub dim: usize,
    pub seed: u64,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            sigma: 0.0,
            dim: 8,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockWord {
    pub word: String,
    pub start_s: f64,
    pub end_s: f64,
    /// Basis index of the voice speaking this word.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voice: Option<usize>,
    /// `false` makes the mock aligner drop this word.
    #[serde(default = "default_true", skip_serializing_if = "is_true")]
    pub aligned: bool,
}

fn default_true() -> bool {
    true
}

fn is_true(b: &bool) -> bool {
    *b
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockAudio {
    pub duration_s: f64,
    /// Voice of the whole file, for single-speaker prompts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voice: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub words: Vec<MockWord>,
    /// ASR output; defaults to the spoken words.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dnsmos: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_sample_rate_hz: Option<u32>,
}

impl MockAudio {
    fn words_in(&self, spans: Option<&[Span]>) -> Vec<&MockWord> {
        self.words
            .iter()
            .filter(|w| match spans {
                None => true,
                Some(spans) => spans
                    .iter()
                    .any(|s| w.start_s >= s.start_s && w.end_s <= s.end_s),
            })
            .collect()
    }

    /// Voice with the largest overlap with `[start, end]`; ties go to the lower index.
    fn dominant_voice(&self, start: f64, end: f64) -> Option<usize> {
        let mut overlap: Vec<(usize, f64)> = Vec::new();
        for w in &self.words {
            let Some(v) = w.voice.or(self.voice) else { continue };
            let o = w.end_s.min(end) - w.start_s.max(start);
            if o <= 0.0 {
                continue;
            }
            match overlap.iter_mut().find(|(voice, _)| *voice == v) {
                Some(entry) => entry.1 += o,
                None => overlap.push((v, o)),
            }
        }
        overlap.sort_by_key(|(v, _)| *v);
        overlap
            .into_iter()
            .fold(None, |best: Option<(usize, f64)>, (v, o)| match best {
                Some((_, bo)) if bo >= o => best,
                _ => Some((v, o)),
            })
            .map(|(v, _)| v)
            .or(self.voice)
    }
}

/// Basis vector `e_voice` plus `N(0, sigma^2)` noise drawn from `seed`.
pub fn mock_embedding(voice: usize, dim: usize, sigma: f64, seed: u64) -> EmbeddingArtifact {
    let mut vector = vec![0.0; dim];
    if voice < dim {
        vector[voice] = 1.0;
    }
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for x in &mut vector {
            let z: f64 = StandardNormal.sample(&mut rng);
            *x += sigma * z;
        }
    }
    EmbeddingArtifact::new(vector)
}

#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    config: MockConfig,
}

struct VirtualPath {
    file: String,
    spans: Option<Vec<Span>>,
}

fn parse_virtual_path(path: &str) -> VirtualPath {
    let mut parts = path.split('#');
    let file = parts.next().unwrap_or_default().to_string();
    let mut spans = None;
    for part in parts {
        let parsed: Option<Vec<Span>> = part
            .split(',')
            .map(|s| {
                let (a, b) = s.split_once('-')?;
                Some(Span::new(a.parse().ok()?, b.parse().ok()?))
            })
            .collect();
        if let Some(p) = parsed {
            spans = Some(p);
        }
    }
    VirtualPath { file, spans }
}

fn format_spans(spans: &[Span]) -> String {
    spans
        .iter()
        .map(|s| format!("{}-{}", s.start_s, s.end_s))
        .collect::<Vec<_>>()
        .join(",")
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32, 0x3400..=0x4DBF | 0x4E00..=0x9FFF | 0xF900..=0xFAFF)
}

fn joiner(language: &str) -> &'static str {
    match primary_language(language).as_str() {
        "zh" | "ja" | "yue" => "",
        _ => " ",
    }
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Self {
        Self { config }
    }

    fn load(&self, role: AdapterRole, path: &str) -> Result<(MockAudio, Option<Vec<Span>>), AdapterError> {
        let vp = parse_virtual_path(path);
        let bytes = fs::read(&vp.file)
            .map_err(|e| AdapterError::failure(role, format!("cannot read mock audio {}: {e}", vp.file)))?;
        let audio: MockAudio = serde_json::from_slice(&bytes)
            .map_err(|e| AdapterError::failure(role, format!("invalid mock audio {}: {e}", vp.file)))?;
        Ok((audio, vp.spans))
    }

    fn request<T: serde::de::DeserializeOwned>(role: AdapterRole, request: &Value) -> Result<T, AdapterError> {
        serde_json::from_value(request.clone())
            .map_err(|e| AdapterError::failure(role, format!("bad request: {e}")))
    }

    fn noise_seed(&self, path: &str, start: Option<f64>, end: Option<f64>) -> u64 {
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update(path.as_bytes());
        h.update(start.unwrap_or(f64::NAN).to_bits().to_le_bytes());
        h.update(end.unwrap_or(f64::NAN).to_bits().to_le_bytes());
        let digest = h.finalize();
        u64::from_le_bytes(digest[..8].try_into().unwrap())
    }

    fn tagged_transcript(audio: &MockAudio, spans: Option<&[Span]>, language: &str) -> String {
        let sep = joiner(language);
        let mut order: Vec<usize> = Vec::new();
        let mut out = String::new();
        let mut current: Option<usize> = None;
        for w in audio.words_in(spans) {
            let voice = w.voice.or(audio.voice).unwrap_or(0);
            let pos = match order.iter().position(|v| *v == voice) {
                Some(p) => p,
                None => {
                    order.push(voice);
                    order.len() - 1
                }
            };
            if current != Some(voice) {
                // voices past the fifth share S5
                let tag = SpeakerTag::new((pos + 1).min(5) as u8).unwrap();
                out.push_str(&tag.to_string());
                current = Some(voice);
            } else {
                out.push_str(sep);
            }
            out.push_str(&w.word);
        }
        out
    }
}

impl Backend for MockBackend {
    fn invoke(&self, role: AdapterRole, request: &Value) -> Result<Value, AdapterError> {
        match role {
            AdapterRole::Aligner => {
                let req: AlignRequest = Self::request(role, request)?;
                let (audio, spans) = self.load(role, &req.audio_path)?;
                let spoken = audio.words_in(spans.as_deref());
                let alignments: Vec<WordAlignment> = req
                    .words
                    .iter()
                    .zip(spoken)
                    .filter(|(_, w)| w.aligned)
                    .map(|(word, w)| WordAlignment {
                        word: word.clone(),
                        start_s: w.start_s,
                        end_s: w.end_s,
                        score: 1.0,
                    })
                    .collect();
                Ok(json!({ "alignments": alignments }))
            }
            AdapterRole::Embedder => {
                let req: EmbedRequest = Self::request(role, request)?;
                let (audio, _) = self.load(role, &req.audio_path)?;
                let start = req.start_s.unwrap_or(0.0);
                let end = req.end_s.unwrap_or(audio.duration_s);
                let voice = audio
                    .dominant_voice(start, end)
                    .ok_or_else(|| AdapterError::failure(role, "no voice in requested range"))?;
                if voice >= self.config.dim {
                    return Err(AdapterError::failure(
                        role,
                        format!("voice {voice} exceeds embedding dim {}", self.config.dim),
                    ));
                }
                let seed = self.noise_seed(&req.audio_path, req.start_s, req.end_s);
                let e = mock_embedding(voice, self.config.dim, self.config.sigma, seed);
                Ok(serde_json::to_value(e).unwrap())
            }
            AdapterRole::Asr => {
                let req: AsrRequest = Self::request(role, request)?;
                let (audio, spans) = self.load(role, &req.audio_path)?;
                let text = match &audio.transcript {
                    Some(t) => t.clone(),
                    None => audio
                        .words_in(spans.as_deref())
                        .iter()
                        .map(|w| w.word.as_str())
                        .collect::<Vec<_>>()
                        .join(joiner(&req.language)),
                };
                Ok(json!({ "text": text }))
            }
            AdapterRole::AsrDiarize => {
                let req: AsrRequest = Self::request(role, request)?;
                let (audio, spans) = self.load(role, &req.audio_path)?;
                let text = Self::tagged_transcript(&audio, spans.as_deref(), &req.language);
                Ok(json!({ "text": text }))
            }
            AdapterRole::Qscore => {
                let req: AudioRequest = Self::request(role, request)?;
                let (audio, _) = self.load(role, &req.audio_path)?;
                Ok(json!({ "dnsmos": audio.dnsmos.unwrap_or(3.5) }))
            }
            AdapterRole::Srate => {
                let req: AudioRequest = Self::request(role, request)?;
                let (audio, _) = self.load(role, &req.audio_path)?;
                Ok(json!({ "true_sample_rate_hz": audio.true_sample_rate_hz.unwrap_or(24_000) }))
            }
            AdapterRole::Langid => match Self::request::<LangidRequest>(role, request)? {
                LangidRequest::Text { text } => {
                    let cjk = text.chars().filter(|c| is_cjk(*c)).count();
                    let alpha = text.chars().filter(|c| c.is_alphabetic()).count();
                    let lang = if alpha > 0 && cjk * 2 >= alpha { "zh" } else { "en" };
                    Ok(json!({ "language": lang }))
                }
                LangidRequest::Audio { audio_path } => {
                    let (audio, _) = self.load(role, &audio_path)?;
                    Ok(json!({ "language": audio.language.unwrap_or_else(|| "en".into()) }))
                }
            },
            AdapterRole::AudioCut => {
                let req: AudioEditRequest = Self::request(role, request)?;
                let spans = req
                    .spans
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| AdapterError::failure(role, "audio_cut needs spans"))?;
                Ok(json!({ "output_path": format!("{}#{}", req.audio_path, format_spans(&spans)) }))
            }
            AdapterRole::Denoise => {
                let req: AudioEditRequest = Self::request(role, request)?;
                Ok(json!({ "output_path": format!("{}#denoised", req.audio_path) }))
            }
        }
    }

    fn describe(&self) -> String {
        format!(
            "mock(sigma={}, dim={}, seed={})",
            self.config.sigma, self.config.dim, self.config.seed
        )
    }
}
