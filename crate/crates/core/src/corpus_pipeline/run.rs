//! End-to-end corpus run over a batch of diarization segments.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    annotate, build_voice_clone_sample, cut_clip, filter_clip, merge_segments, plan_synthetic_samples, route_denoise,
    stage_select, transcribe, transcript_language, AudioClipMeta, ClipFlag, DiarizationSegment, MergeConfig,
    PipelineError, RejectReason, SamplePlan, StageConfig, StageInputs, SyntheticSample, VoiceCloneSample,
};
use crate::adapters::{AdapterRole, AdapterSet, AudioEditRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub merge: MergeConfig,
    pub stage: StageConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_max_synthetic")]
    pub max_synthetic: usize,
}

fn default_max_synthetic() -> usize {
    100
}

impl PipelineConfig {
    pub fn new(stage: StageConfig) -> Self {
        Self {
            merge: MergeConfig::default(),
            stage,
            seed: 0,
            max_synthetic: default_max_synthetic(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectRecord {
    pub clip_id: String,
    pub reject_reason: RejectReason,
}

/// A clip that could not be processed because an adapter failed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipFailure {
    pub clip_id: String,
    pub role: Option<AdapterRole>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub clips: Vec<AudioClipMeta>,
    pub rejects: Vec<RejectRecord>,
    pub voice_clone: Vec<VoiceCloneSample>,
    pub synthetic: Vec<SyntheticSample>,
    pub plan: SamplePlan,
    pub failures: Vec<ClipFailure>,
}

enum ClipOutcome {
    Kept(AudioClipMeta),
    Rejected(RejectRecord),
    Failed(ClipFailure),
}

fn process_clip(clip: AudioClipMeta, stage: &StageConfig, adapters: &AdapterSet) -> Result<ClipOutcome, PipelineError> {
    let clip = cut_clip(clip, adapters)?;
    let clip = annotate(clip, adapters)?;
    let mut clip = transcribe(clip, adapters)?;
    let text_language = transcript_language(clip.transcript.as_deref().unwrap_or(""), adapters)?;
    let decision = filter_clip(&clip, stage, &text_language);
    if let Some(reject_reason) = decision.reject_reason {
        return Ok(ClipOutcome::Rejected(RejectRecord {
            clip_id: clip.clip_id,
            reject_reason,
        }));
    }
    if route_denoise(&clip) {
        let out = adapters.denoise(&AudioEditRequest {
            audio_path: clip.audio_path.clone().unwrap_or_default(),
            spans: None,
        })?;
        clip.audio_path = Some(out.output_path);
        clip.flags.push(ClipFlag::Denoised);
    }
    Ok(ClipOutcome::Kept(clip))
}

/// Runs every recording in `segments` through the pipeline.
///
/// Segments are grouped by recording; each group must be sorted by start time.
/// Clips are processed in parallel. Adapter failures on one clip are recorded
/// in `failures` and do not stop the run; malformed input does.
pub fn run_pipeline(
    segments: &[DiarizationSegment],
    config: &PipelineConfig,
    adapters: &AdapterSet,
) -> Result<PipelineOutput, PipelineError> {
    config.stage.validate()?;
    let mut recordings: BTreeMap<&str, Vec<DiarizationSegment>> = BTreeMap::new();
    for seg in segments {
        recordings.entry(seg.recording_id.as_str()).or_default().push(seg.clone());
    }

    let mut merged = Vec::new();
    let mut rejects = Vec::new();
    for segs in recordings.values() {
        let outcome = merge_segments(segs, &config.merge)?;
        rejects.extend(outcome.rejected.into_iter().map(|r| RejectRecord {
            clip_id: r.clip_id,
            reject_reason: r.reason,
        }));
        merged.extend(outcome.clips);
    }

    let outcomes: Vec<ClipOutcome> = merged
        .into_par_iter()
        .map(|clip| {
            let clip_id = clip.clip_id.clone();
            process_clip(clip, &config.stage, adapters).unwrap_or_else(|e| {
                log::warn!("clip {clip_id} failed: {e}");
                let role = match &e {
                    PipelineError::AdapterFailure { role, .. } => Some(*role),
                    _ => None,
                };
                ClipOutcome::Failed(ClipFailure {
                    clip_id,
                    role,
                    message: e.to_string(),
                })
            })
        })
        .collect();

    let mut clips = Vec::new();
    let mut failures = Vec::new();
    for outcome in outcomes {
        match outcome {
            ClipOutcome::Kept(c) => clips.push(c),
            ClipOutcome::Rejected(r) => rejects.push(r),
            ClipOutcome::Failed(f) => {
                rejects.push(RejectRecord {
                    clip_id: f.clip_id.clone(),
                    reject_reason: RejectReason::AdapterFailure,
                });
                failures.push(f);
            }
        }
    }

    let voice_clone: Vec<VoiceCloneSample> = clips
        .iter()
        .filter_map(|c| build_voice_clone_sample(c, &recordings[c.recording_id.as_str()]))
        .collect();
    let synthetic = plan_synthetic_samples(&clips, config.seed, config.max_synthetic);
    let inputs = StageInputs {
        clips,
        voice_clone,
        synthetic,
    };
    let plan = stage_select(&inputs, &config.stage, config.seed);
    Ok(PipelineOutput {
        clips: inputs.clips,
        rejects,
        voice_clone: inputs.voice_clone,
        synthetic: inputs.synthetic,
        plan,
        failures,
    })
}
