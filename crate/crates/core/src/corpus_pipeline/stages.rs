//! Curriculum stage configuration and data selection.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    AudioClipMeta, DiarizationSegment, PipelineError, SyntheticSample, BASE_MIN_DNSMOS, HIGH_QUALITY_MIN_DNSMOS,
    HIGH_QUALITY_MIN_SAMPLE_RATE_HZ, MAX_CLIP_DURATION_S,
};
use crate::adapters::Span;
use crate::script::{SpeakerTag, MAX_SPEAKERS};

/// Stage-2/3 sampling weight of single-speaker clips.
pub const DEFAULT_SINGLE_SPEAKER_WEIGHT: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Stage {
    One,
    Two,
    Three,
}

impl TryFrom<u8> for Stage {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Stage::One),
            2 => Ok(Stage::Two),
            3 => Ok(Stage::Three),
            _ => Err(format!("stage must be 1, 2 or 3, got {v}")),
        }
    }
}

impl From<Stage> for u8 {
    fn from(s: Stage) -> u8 {
        match s {
            Stage::One => 1,
            Stage::Two => 2,
            Stage::Three => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub stage: Stage,
    pub min_dnsmos: f64,
    pub min_sample_rate_hz: u32,
    pub single_speaker_weight: f64,
    pub include_multi_speaker: bool,
    pub include_synthetic: bool,
    /// Extra DNSMOS gate for real 3-5 speaker clips; unset means stage thresholds only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multi_speaker_min_dnsmos: Option<f64>,
}

impl StageConfig {
    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::One => Self {
                stage,
                min_dnsmos: BASE_MIN_DNSMOS,
                min_sample_rate_hz: 0,
                single_speaker_weight: 1.0,
                include_multi_speaker: false,
                include_synthetic: false,
                multi_speaker_min_dnsmos: None,
            },
            Stage::Two | Stage::Three => Self {
                stage,
                min_dnsmos: HIGH_QUALITY_MIN_DNSMOS,
                min_sample_rate_hz: HIGH_QUALITY_MIN_SAMPLE_RATE_HZ,
                single_speaker_weight: DEFAULT_SINGLE_SPEAKER_WEIGHT,
                include_multi_speaker: stage == Stage::Three,
                include_synthetic: stage == Stage::Three,
                multi_speaker_min_dnsmos: None,
            },
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |msg: String| Err(PipelineError::InvalidStageConfig(msg));
        match self.stage {
            Stage::One if self.min_dnsmos != BASE_MIN_DNSMOS => {
                return bad(format!("stage 1 requires min_dnsmos {BASE_MIN_DNSMOS}"));
            }
            Stage::Two | Stage::Three
                if self.min_dnsmos != HIGH_QUALITY_MIN_DNSMOS
                    || self.min_sample_rate_hz != HIGH_QUALITY_MIN_SAMPLE_RATE_HZ =>
            {
                return bad(format!(
                    "stages 2 and 3 require min_dnsmos {HIGH_QUALITY_MIN_DNSMOS} and min_sample_rate_hz {HIGH_QUALITY_MIN_SAMPLE_RATE_HZ}"
                ));
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.single_speaker_weight) {
            return bad("single_speaker_weight must lie in [0, 1]".into());
        }
        Ok(())
    }

    fn passes_quality(&self, clip: &AudioClipMeta) -> bool {
        clip.duration_s <= MAX_CLIP_DURATION_S
            && clip.speaker_count <= MAX_SPEAKERS
            && clip.dnsmos.is_some_and(|d| d >= self.min_dnsmos)
            && clip.true_sample_rate_hz.is_some_and(|r| r >= self.min_sample_rate_hz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSegment {
    pub speaker_label: String,
    pub span: Span,
}

/// A multi-speaker clip paired with one single-speaker reference per speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoiceCloneSample {
    pub sample_id: String,
    pub clip_id: String,
    pub references: BTreeMap<SpeakerTag, ReferenceSegment>,
}

/// Picks, for every speaker of `clip`, the longest segment of that speaker in
/// the same recording that lies outside the clip and overlaps no other
/// segment. Speakers are tagged `S1..Sn` in order of first appearance.
///
/// Returns `None` for single-speaker clips or when some speaker has no
/// usable reference.
pub fn build_voice_clone_sample(clip: &AudioClipMeta, recording: &[DiarizationSegment]) -> Option<VoiceCloneSample> {
    if clip.speaker_count < 2 {
        return None;
    }
    let extent = Span::new(
        clip.spans.first()?.start_s,
        clip.spans.iter().map(|s| s.end_s).fold(f64::NEG_INFINITY, f64::max),
    );
    let mut references = BTreeMap::new();
    for (i, label) in clip.speakers.iter().enumerate() {
        let best = recording
            .iter()
            .enumerate()
            .filter(|(_, s)| s.recording_id == clip.recording_id && &s.speaker_label == label)
            .map(|(j, s)| (j, Span::new(s.start_s, s.end_s)))
            .filter(|(_, span)| !span.overlaps(&extent))
            .filter(|(j, span)| {
                recording
                    .iter()
                    .enumerate()
                    .all(|(k, o)| k == *j || !span.overlaps(&Span::new(o.start_s, o.end_s)))
            })
            .max_by(|a, b| a.1.duration_s().total_cmp(&b.1.duration_s()).then(b.0.cmp(&a.0)))?;
        let tag = SpeakerTag::new(i as u8 + 1).ok()?;
        references.insert(
            tag,
            ReferenceSegment {
                speaker_label: label.clone(),
                span: best.1,
            },
        );
    }
    Some(VoiceCloneSample {
        sample_id: format!("vc_{}", clip.clip_id),
        clip_id: clip.clip_id.clone(),
        references,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageInputs {
    pub clips: Vec<AudioClipMeta>,
    pub voice_clone: Vec<VoiceCloneSample>,
    pub synthetic: Vec<SyntheticSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Clip,
    VoiceClone,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanItem {
    pub sample_id: String,
    pub kind: SampleKind,
    pub speaker_count: u8,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub stage: Stage,
    pub seed: u64,
    pub items: Vec<PlanItem>,
}

impl SamplePlan {
    pub fn contains(&self, sample_id: &str) -> bool {
        self.items.iter().any(|i| i.sample_id == sample_id)
    }
}

/// Selects and weights the training material of one curriculum stage.
///
/// - stage 1: 1-2 speaker clips passing the base gate, plus voice-clone samples
/// - stage 2: the same under the high-quality gate, single-speaker clips down-weighted
/// - stage 3: stage 2 plus real 3-5 speaker clips and synthetic samples
///
/// Items are sorted by id and then shuffled with `seed`.
pub fn stage_select(inputs: &StageInputs, stage: &StageConfig, seed: u64) -> SamplePlan {
    let mut items = Vec::new();
    let by_id: HashMap<&str, &AudioClipMeta> = inputs.clips.iter().map(|c| (c.clip_id.as_str(), c)).collect();

    for clip in &inputs.clips {
        if !stage.passes_quality(clip) {
            continue;
        }
        let weight = match clip.speaker_count {
            1 => stage.single_speaker_weight,
            2 => 1.0,
            _ if stage.include_multi_speaker
                && stage.multi_speaker_min_dnsmos.is_none_or(|m| clip.dnsmos.is_some_and(|d| d >= m)) =>
            {
                1.0
            }
            _ => continue,
        };
        items.push(PlanItem {
            sample_id: clip.clip_id.clone(),
            kind: SampleKind::Clip,
            speaker_count: clip.speaker_count,
            weight,
        });
    }

    for vc in &inputs.voice_clone {
        let Some(clip) = by_id.get(vc.clip_id.as_str()) else {
            log::warn!("voice-clone sample {} references unknown clip {}", vc.sample_id, vc.clip_id);
            continue;
        };
        if stage.passes_quality(clip) && (clip.speaker_count <= 2 || stage.include_multi_speaker) {
            items.push(PlanItem {
                sample_id: vc.sample_id.clone(),
                kind: SampleKind::VoiceClone,
                speaker_count: clip.speaker_count,
                weight: 1.0,
            });
        }
    }

    if stage.include_synthetic {
        for s in &inputs.synthetic {
            if s.sample_rate_hz >= stage.min_sample_rate_hz && s.duration_s <= MAX_CLIP_DURATION_S {
                items.push(PlanItem {
                    sample_id: s.sample_id.clone(),
                    kind: SampleKind::Synthetic,
                    speaker_count: s.speakers.len() as u8,
                    weight: 1.0,
                });
            }
        }
    }

    items.sort_by(|a, b| a.sample_id.cmp(&b.sample_id).then(a.kind.cmp(&b.kind)));
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    SamplePlan {
        stage: stage.stage,
        seed,
        items,
    }
}
