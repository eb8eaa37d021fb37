//! Turning diarized recordings into training-ready clips.
//!
//! The flow is merge → cut → annotate → transcribe → filter → denoise routing
//! → stage selection. Audio itself is never decoded here; every signal-level
//! step is an adapter call and clips are described by metadata and spans.

mod run;
mod stages;
mod synthetic;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AdapterError, AdapterRole, AdapterSet, AsrRequest, AudioEditRequest, AudioRequest, LangidRequest, Span};
use crate::script::{self, primary_language, strip_tags, TokenUnit, MAX_SPEAKERS};

pub use run::{run_pipeline, ClipFailure, PipelineConfig, PipelineOutput, RejectRecord};
pub use stages::{
    build_voice_clone_sample, stage_select, PlanItem, ReferenceSegment, SampleKind, SamplePlan, Stage, StageConfig,
    StageInputs, VoiceCloneSample,
};
pub use synthetic::{
    build_synthetic_multispeaker, plan_synthetic_samples, PlanEntry, SpeakerGroup, SyntheticError, SyntheticSample,
    SyntheticSpeaker,
};

pub const MAX_CLIP_DURATION_S: f64 = 3600.0;
pub const DEFAULT_MAX_GAP_S: f64 = 10.0;
/// Base DNSMOS gate of the training set (stage 1).
pub const BASE_MIN_DNSMOS: f64 = 2.8;
/// DNSMOS gate of the high-quality subset (stages 2 and 3, synthetic material).
pub const HIGH_QUALITY_MIN_DNSMOS: f64 = 3.4;
pub const HIGH_QUALITY_MIN_SAMPLE_RATE_HZ: u32 = 24_000;

/// Chinese speaking-rate bounds, characters per second.
pub const ZH_CHAR_RATE: (f64, f64) = (1.0, 35.0);
/// English speaking-rate bounds, words per second.
pub const EN_WORD_RATE: (f64, f64) = (0.3, 6.0);
/// A 3-gram occurring more than this many times back to back is a hallucination loop.
pub const MAX_NGRAM_REPEATS: usize = 8;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("segment {index} starts before its predecessor")]
    UnsortedInput { index: usize },
    #[error("segment {index} belongs to recording {found:?}, expected {expected:?}")]
    MixedRecordings {
        index: usize,
        expected: String,
        found: String,
    },
    #[error("segment {index} has end_s <= start_s")]
    InvalidSegment { index: usize },
    #[error("adapter failure ({role}): {source}")]
    AdapterFailure {
        role: AdapterRole,
        #[source]
        source: AdapterError,
    },
    #[error("clip {clip_id} has no audio path")]
    MissingAudio { clip_id: String },
    #[error("invalid stage configuration: {0}")]
    InvalidStageConfig(String),
}

impl From<AdapterError> for PipelineError {
    fn from(source: AdapterError) -> Self {
        PipelineError::AdapterFailure {
            role: source.role(),
            source,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    Podcast,
    Movie,
    Tv,
    SportsCommentary,
    EsportsCommentary,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiarizationSegment {
    pub recording_id: String,
    /// Recording-local speaker label.
    pub speaker_label: String,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_tag: Option<DomainTag>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipFlag {
    OverlappingSameSpeaker,
    Denoised,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioClipMeta {
    pub clip_id: String,
    pub recording_id: String,
    pub spans: Vec<Span>,
    /// Extent from the first span start to the last span end.
    pub duration_s: f64,
    pub speaker_count: u8,
    /// Diarization labels in order of first appearance.
    #[serde(default)]
    pub speakers: Vec<String>,
    pub dnsmos: Option<f64>,
    pub language: Option<String>,
    pub true_sample_rate_hz: Option<u32>,
    #[serde(default)]
    pub domain_tag: DomainTag,
    pub transcript: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio_path: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<ClipFlag>,
}

impl AudioClipMeta {
    pub fn covered_s(&self) -> f64 {
        self.spans.iter().map(Span::duration_s).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    DurationExceeded,
    TooManySpeakers,
    NotAnnotated,
    Dnsmos,
    SampleRate,
    LanguageMismatch,
    EmptyTranscript,
    Repetition,
    SpeakingRate,
    AdapterFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeConfig {
    pub max_gap_s: f64,
    pub max_duration_s: f64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            max_gap_s: DEFAULT_MAX_GAP_S,
            max_duration_s: MAX_CLIP_DURATION_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedClip {
    pub clip_id: String,
    pub reason: RejectReason,
    pub speaker_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MergeOutcome {
    pub clips: Vec<AudioClipMeta>,
    pub rejected: Vec<RejectedClip>,
}

struct ClipBuilder {
    start: f64,
    end: f64,
    spans: Vec<(Span, String)>,
    overlapping_same_speaker: bool,
}

impl ClipBuilder {
    fn new(span: Span, label: String) -> Self {
        Self {
            start: span.start_s,
            end: span.end_s,
            spans: vec![(span, label)],
            overlapping_same_speaker: false,
        }
    }

    fn push(&mut self, span: Span, label: String) {
        if self
            .spans
            .iter()
            .any(|(s, l)| *l == label && s.overlaps(&span))
        {
            self.overlapping_same_speaker = true;
        }
        self.end = self.end.max(span.end_s);
        self.spans.push((span, label));
    }
}

/// Greedily merges one recording's sorted diarization segments into clips.
///
/// A clip is closed when the next segment starts more than `max_gap_s` after
/// the clip's end or would stretch the clip beyond `max_duration_s`. Segments
/// longer than `max_duration_s` are first cut into equal pieces. Clips with
/// more than five speakers are rejected.
pub fn merge_segments(segments: &[DiarizationSegment], config: &MergeConfig) -> Result<MergeOutcome, PipelineError> {
    let Some(first) = segments.first() else {
        return Ok(MergeOutcome::default());
    };
    for (index, seg) in segments.iter().enumerate() {
        if seg.recording_id != first.recording_id {
            return Err(PipelineError::MixedRecordings {
                index,
                expected: first.recording_id.clone(),
                found: seg.recording_id.clone(),
            });
        }
        if !(seg.start_s.is_finite() && seg.end_s.is_finite()) || seg.end_s <= seg.start_s {
            return Err(PipelineError::InvalidSegment { index });
        }
        if index > 0 && seg.start_s < segments[index - 1].start_s {
            return Err(PipelineError::UnsortedInput { index });
        }
    }

    let mut pieces = Vec::with_capacity(segments.len());
    for seg in segments {
        let span = Span::new(seg.start_s, seg.end_s);
        let duration = span.duration_s();
        if duration > config.max_duration_s {
            let n = (duration / config.max_duration_s).ceil() as usize;
            let step = duration / n as f64;
            for i in 0..n {
                let start = seg.start_s + step * i as f64;
                let end = if i + 1 == n { seg.end_s } else { seg.start_s + step * (i + 1) as f64 };
                pieces.push((Span::new(start, end), seg.speaker_label.clone()));
            }
        } else {
            pieces.push((span, seg.speaker_label.clone()));
        }
    }

    let recording_id = &first.recording_id;
    let domain_tag = segments.iter().find_map(|s| s.domain_tag).unwrap_or_default();
    let audio_path = segments.iter().find_map(|s| s.audio_path.clone());
    let mut outcome = MergeOutcome::default();
    let mut index = 0usize;
    let mut close = |b: ClipBuilder, outcome: &mut MergeOutcome| {
        let clip_id = format!("{recording_id}_{index:04}");
        index += 1;
        let mut speakers: Vec<String> = Vec::new();
        for (_, label) in &b.spans {
            if !speakers.contains(label) {
                speakers.push(label.clone());
            }
        }
        if speakers.len() > MAX_SPEAKERS as usize {
            log::warn!("rejecting clip {clip_id}: {} speakers", speakers.len());
            outcome.rejected.push(RejectedClip {
                clip_id,
                reason: RejectReason::TooManySpeakers,
                speaker_count: speakers.len(),
            });
            return;
        }
        let mut flags = Vec::new();
        if b.overlapping_same_speaker {
            log::warn!("clip {clip_id}: overlapping segments from the same speaker");
            flags.push(ClipFlag::OverlappingSameSpeaker);
        }
        outcome.clips.push(AudioClipMeta {
            clip_id,
            recording_id: recording_id.clone(),
            spans: b.spans.iter().map(|(s, _)| *s).collect(),
            duration_s: b.end - b.start,
            speaker_count: speakers.len() as u8,
            speakers,
            dnsmos: None,
            language: None,
            true_sample_rate_hz: None,
            domain_tag,
            transcript: None,
            audio_path: audio_path.clone(),
            flags,
        });
    };

    let mut current: Option<ClipBuilder> = None;
    for (span, label) in pieces {
        current = Some(match current.take() {
            None => ClipBuilder::new(span, label),
            Some(mut b) => {
                let gap = span.start_s - b.end;
                let extent = b.end.max(span.end_s) - b.start;
                if gap > config.max_gap_s || extent > config.max_duration_s {
                    close(b, &mut outcome);
                    ClipBuilder::new(span, label)
                } else {
                    b.push(span, label);
                    b
                }
            }
        });
    }
    if let Some(b) = current {
        close(b, &mut outcome);
    }
    Ok(outcome)
}

/// Cuts the clip's spans out of its recording through the `audio_cut` role.
pub fn cut_clip(mut clip: AudioClipMeta, adapters: &AdapterSet) -> Result<AudioClipMeta, PipelineError> {
    let source = clip.audio_path.clone().ok_or_else(|| PipelineError::MissingAudio {
        clip_id: clip.clip_id.clone(),
    })?;
    let out = adapters.cut(&AudioEditRequest {
        audio_path: source,
        spans: Some(clip.spans.clone()),
    })?;
    clip.audio_path = Some(out.output_path);
    Ok(clip)
}

/// Fills DNSMOS, audio language and true sample rate from adapters.
pub fn annotate(mut clip: AudioClipMeta, adapters: &AdapterSet) -> Result<AudioClipMeta, PipelineError> {
    let audio_path = clip.audio_path.clone().ok_or_else(|| PipelineError::MissingAudio {
        clip_id: clip.clip_id.clone(),
    })?;
    let req = AudioRequest {
        audio_path: audio_path.clone(),
    };
    clip.dnsmos = Some(adapters.quality(&req)?.dnsmos);
    clip.language = Some(adapters.language(&LangidRequest::Audio { audio_path })?.language);
    clip.true_sample_rate_hz = Some(adapters.sample_rate(&req)?.true_sample_rate_hz);
    Ok(clip)
}

/// Speaker-tagged transcription through the `asr_diarize` role.
pub fn transcribe(mut clip: AudioClipMeta, adapters: &AdapterSet) -> Result<AudioClipMeta, PipelineError> {
    let audio_path = clip.audio_path.clone().ok_or_else(|| PipelineError::MissingAudio {
        clip_id: clip.clip_id.clone(),
    })?;
    let language = clip.language.clone().unwrap_or_else(|| "und".into());
    clip.transcript = Some(adapters.transcribe_tagged(&AsrRequest { audio_path, language })?.text);
    Ok(clip)
}

/// Language category of a transcript through the text form of `langid`.
pub fn transcript_language(transcript: &str, adapters: &AdapterSet) -> Result<String, PipelineError> {
    Ok(adapters
        .language(&LangidRequest::Text {
            text: strip_tags(transcript),
        })?
        .language)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub keep: bool,
    pub reject_reason: Option<RejectReason>,
}

impl FilterDecision {
    fn keep() -> Self {
        Self {
            keep: true,
            reject_reason: None,
        }
    }

    fn reject(reason: RejectReason) -> Self {
        Self {
            keep: false,
            reject_reason: Some(reason),
        }
    }
}

/// Applies every gate in order and reports the first one that fails.
pub fn filter_clip(meta: &AudioClipMeta, stage: &StageConfig, transcript_language: &str) -> FilterDecision {
    if meta.duration_s > MAX_CLIP_DURATION_S {
        return FilterDecision::reject(RejectReason::DurationExceeded);
    }
    if meta.speaker_count > MAX_SPEAKERS {
        return FilterDecision::reject(RejectReason::TooManySpeakers);
    }
    let (Some(dnsmos), Some(rate), Some(language)) = (meta.dnsmos, meta.true_sample_rate_hz, meta.language.as_deref())
    else {
        return FilterDecision::reject(RejectReason::NotAnnotated);
    };
    if dnsmos < stage.min_dnsmos {
        return FilterDecision::reject(RejectReason::Dnsmos);
    }
    if rate < stage.min_sample_rate_hz {
        return FilterDecision::reject(RejectReason::SampleRate);
    }
    if primary_language(language) != primary_language(transcript_language) {
        return FilterDecision::reject(RejectReason::LanguageMismatch);
    }
    let transcript = meta.transcript.as_deref().unwrap_or("");
    match heuristic_check(transcript, meta.duration_s, language) {
        Ok(()) => FilterDecision::keep(),
        Err(reason) => FilterDecision::reject(reason),
    }
}

/// `true` when the transcript passes the quality heuristics.
pub fn heuristic_ok(transcript: &str, duration_s: f64, language: &str) -> bool {
    heuristic_check(transcript, duration_s, language).is_ok()
}

/// Rejects empty transcripts, ASR repetition loops and implausible speaking rates.
///
/// Units are characters for Chinese and words otherwise. A loop is a stretch
/// of more than `3 * MAX_NGRAM_REPEATS` tokens that is periodic with period
/// 1, 2 or 3; this covers any 3-gram repeated more than eight times in a row.
/// Speaking-rate bounds only apply to Chinese and English.
pub fn heuristic_check(transcript: &str, duration_s: f64, language: &str) -> Result<(), RejectReason> {
    let text = strip_tags(transcript);
    let unit = script::token_unit(language).unwrap_or(TokenUnit::Word);
    let tokens = script::tokenize(&text, unit);
    if tokens.is_empty() {
        return Err(RejectReason::EmptyTranscript);
    }
    if has_repetition_loop(&tokens) {
        return Err(RejectReason::Repetition);
    }
    let bounds = match primary_language(language).as_str() {
        "zh" => Some(ZH_CHAR_RATE),
        "en" => Some(EN_WORD_RATE),
        _ => None,
    };
    if let Some((lo, hi)) = bounds {
        if duration_s.is_nan() || duration_s <= 0.0 {
            return Err(RejectReason::SpeakingRate);
        }
        let rate = tokens.len() as f64 / duration_s;
        if rate < lo || rate > hi {
            return Err(RejectReason::SpeakingRate);
        }
    }
    Ok(())
}

fn has_repetition_loop(tokens: &[String]) -> bool {
    let needed = 3 * MAX_NGRAM_REPEATS;
    (1..=3).any(|period| {
        let mut run = 0;
        for j in period..tokens.len() {
            if tokens[j] == tokens[j - period] {
                run += 1;
                if run >= needed {
                    return true;
                }
            } else {
                run = 0;
            }
        }
        false
    })
}

/// Noise-heavy domains go through the denoiser.
pub fn route_denoise(meta: &AudioClipMeta) -> bool {
    matches!(
        meta.domain_tag,
        DomainTag::Movie | DomainTag::Tv | DomainTag::SportsCommentary | DomainTag::EsportsCommentary
    )
}

/// Distinct speaker labels across a set of segments.
pub fn distinct_speakers(segments: &[DiarizationSegment]) -> BTreeSet<&str> {
    segments.iter().map(|s| s.speaker_label.as_str()).collect()
}
