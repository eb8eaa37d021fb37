//! Synthetic multi-speaker samples built by interleaving single-speaker clips.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{AudioClipMeta, HIGH_QUALITY_MIN_DNSMOS, MAX_CLIP_DURATION_S};
use crate::script::{primary_language, strip_speaker_tags, SpeakerTag};

pub const MIN_SYNTHETIC_SPEAKERS: usize = 3;
pub const MAX_SYNTHETIC_SPEAKERS: usize = 5;
/// Longest run of consecutive clips one speaker gets in a turn.
pub const MAX_RUN_LENGTH: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyntheticError {
    #[error("synthetic samples need 3 to 5 speakers, got {0}")]
    InvalidSpeakerCount(usize),
    #[error("need {needed} speaker groups, got {available}")]
    NotEnoughGroups { needed: usize, available: usize },
    #[error("clip {clip_id} has sample rate {found} Hz, expected {expected} Hz")]
    SampleRateMismatch { clip_id: String, expected: u32, found: u32 },
    #[error("clip {clip_id} has DNSMOS {dnsmos}, below {HIGH_QUALITY_MIN_DNSMOS}")]
    QualityBelowThreshold { clip_id: String, dnsmos: f64 },
    #[error("clip {clip_id} is missing {field}")]
    MissingAnnotation { clip_id: String, field: &'static str },
    #[error("group {group_id} ran out of material before every speaker had a turn")]
    InsufficientMaterial { group_id: String },
}

/// Single-speaker clips attributed to one diarized speaker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerGroup {
    pub group_id: String,
    pub clips: Vec<AudioClipMeta>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpeaker {
    pub tag: SpeakerTag,
    pub group_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub speaker: SpeakerTag,
    pub clip_id: String,
}

/// Concatenation plan plus the merged tagged transcript.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSample {
    pub sample_id: String,
    pub sample_rate_hz: u32,
    pub language: String,
    pub speakers: Vec<SyntheticSpeaker>,
    pub plan: Vec<PlanEntry>,
    pub transcript: String,
    pub duration_s: f64,
}

fn text_joiner(language: &str) -> &'static str {
    match primary_language(language).as_str() {
        "zh" | "ja" | "yue" => "",
        _ => " ",
    }
}

/// Interleaves the first `n_speakers` groups into one dialogue.
///
/// Groups are tagged `S1..Sn` in order. Turns rotate round-robin; each turn
/// takes a seeded run of 1-3 consecutive clips from its speaker's group.
/// Generation stops when the scheduled speaker has no clips left or the next
/// clip would push the sample past the duration cap.
pub fn build_synthetic_multispeaker(
    groups: &[SpeakerGroup],
    n_speakers: usize,
    seed: u64,
) -> Result<SyntheticSample, SyntheticError> {
    if !(MIN_SYNTHETIC_SPEAKERS..=MAX_SYNTHETIC_SPEAKERS).contains(&n_speakers) {
        return Err(SyntheticError::InvalidSpeakerCount(n_speakers));
    }
    if groups.len() < n_speakers {
        return Err(SyntheticError::NotEnoughGroups {
            needed: n_speakers,
            available: groups.len(),
        });
    }
    let groups = &groups[..n_speakers];

    let mut sample_rate = None;
    for clip in groups.iter().flat_map(|g| &g.clips) {
        let dnsmos = clip.dnsmos.ok_or_else(|| SyntheticError::MissingAnnotation {
            clip_id: clip.clip_id.clone(),
            field: "dnsmos",
        })?;
        if dnsmos < HIGH_QUALITY_MIN_DNSMOS {
            return Err(SyntheticError::QualityBelowThreshold {
                clip_id: clip.clip_id.clone(),
                dnsmos,
            });
        }
        let rate = clip
            .true_sample_rate_hz
            .ok_or_else(|| SyntheticError::MissingAnnotation {
                clip_id: clip.clip_id.clone(),
                field: "true_sample_rate_hz",
            })?;
        match sample_rate {
            None => sample_rate = Some(rate),
            Some(expected) if expected != rate => {
                return Err(SyntheticError::SampleRateMismatch {
                    clip_id: clip.clip_id.clone(),
                    expected,
                    found: rate,
                });
            }
            _ => {}
        }
        if clip.transcript.is_none() {
            return Err(SyntheticError::MissingAnnotation {
                clip_id: clip.clip_id.clone(),
                field: "transcript",
            });
        }
    }
    if let Some(empty) = groups.iter().find(|g| g.clips.is_empty()) {
        return Err(SyntheticError::InsufficientMaterial {
            group_id: empty.group_id.clone(),
        });
    }

    let language = groups[0].clips[0].language.clone().unwrap_or_else(|| "und".into());
    let joiner = text_joiner(&language);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cursors = vec![0usize; n_speakers];
    let mut spoke = vec![false; n_speakers];
    let mut plan = Vec::new();
    let mut transcript = String::new();
    let mut duration = 0.0;

    'turns: for turn in 0.. {
        let who = turn % n_speakers;
        let group = &groups[who];
        if cursors[who] >= group.clips.len() {
            break;
        }
        let run = rng.random_range(1..=MAX_RUN_LENGTH);
        let tag = SpeakerTag::new(who as u8 + 1).expect("at most five speakers");
        let mut texts = Vec::new();
        for _ in 0..run {
            let Some(clip) = group.clips.get(cursors[who]) else { break };
            if duration + clip.duration_s > MAX_CLIP_DURATION_S {
                if !texts.is_empty() {
                    push_turn(&mut transcript, tag, &texts, joiner);
                }
                break 'turns;
            }
            cursors[who] += 1;
            duration += clip.duration_s;
            plan.push(PlanEntry {
                speaker: tag,
                clip_id: clip.clip_id.clone(),
            });
            texts.push(strip_speaker_tags(clip.transcript.as_deref().unwrap_or("")));
        }
        if !texts.is_empty() {
            spoke[who] = true;
            push_turn(&mut transcript, tag, &texts, joiner);
        }
    }

    if let Some(silent) = spoke.iter().position(|s| !s) {
        return Err(SyntheticError::InsufficientMaterial {
            group_id: groups[silent].group_id.clone(),
        });
    }

    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    for g in groups {
        h.update(g.group_id.as_bytes());
        h.update([0]);
    }
    let sample_id = format!("synth_{}", hex::encode(&h.finalize()[..6]));

    Ok(SyntheticSample {
        sample_id,
        sample_rate_hz: sample_rate.expect("groups are non-empty"),
        language,
        speakers: groups
            .iter()
            .enumerate()
            .map(|(i, g)| SyntheticSpeaker {
                tag: SpeakerTag::new(i as u8 + 1).unwrap(),
                group_id: g.group_id.clone(),
            })
            .collect(),
        plan,
        transcript,
        duration_s: duration,
    })
}

fn push_turn(out: &mut String, tag: SpeakerTag, texts: &[String], joiner: &str) {
    out.push_str(&tag.to_string());
    out.push_str(&texts.join(joiner));
}

/// Builds synthetic samples from a pool of annotated clips.
///
/// Eligible clips are single-speaker, at or above the synthetic DNSMOS gate
/// and transcribed. They are grouped by `(recording, diarization label)` and
/// bucketed by sample rate; each bucket is consumed in windows of a seeded
/// 3-5 groups, so one sample never mixes sample rates.
pub fn plan_synthetic_samples(clips: &[AudioClipMeta], seed: u64, max_samples: usize) -> Vec<SyntheticSample> {
    let mut buckets: BTreeMap<u32, BTreeMap<String, Vec<AudioClipMeta>>> = BTreeMap::new();
    for clip in clips {
        let eligible = clip.speaker_count == 1
            && clip.dnsmos.is_some_and(|d| d >= HIGH_QUALITY_MIN_DNSMOS)
            && clip.transcript.is_some();
        let (true, Some(rate), Some(label)) = (eligible, clip.true_sample_rate_hz, clip.speakers.first()) else {
            continue;
        };
        buckets
            .entry(rate)
            .or_default()
            .entry(format!("{}:{}", clip.recording_id, label))
            .or_default()
            .push(clip.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for groups in buckets.into_values() {
        let groups: Vec<SpeakerGroup> = groups
            .into_iter()
            .map(|(group_id, mut clips)| {
                clips.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
                SpeakerGroup { group_id, clips }
            })
            .collect();
        let mut start = 0;
        while out.len() < max_samples && groups.len() - start >= MIN_SYNTHETIC_SPEAKERS {
            let n = rng
                .random_range(MIN_SYNTHETIC_SPEAKERS..=MAX_SYNTHETIC_SPEAKERS)
                .min(groups.len() - start);
            let sample_seed = rng.random();
            match build_synthetic_multispeaker(&groups[start..start + n], n, sample_seed) {
                Ok(sample) => out.push(sample),
                Err(e) => log::warn!("skipping synthetic sample: {e}"),
            }
            start += n;
        }
    }
    out
}
