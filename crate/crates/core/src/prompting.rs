//! Chat-template rendering for training samples and inference prompts.
//!
//! Audio never appears in the text. Slots are symbolic markers (`<audio_k>`,
//! `<prefix_audio>`, `<generated_audio>`) listed in the prompt's placeholder
//! map, and the consumer substitutes audio tokens for them. Lines are joined
//! with LF and the prompt has no trailing newline. Canonical renderings for
//! 1, 2 and 5 speakers ship in `templates/`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::script::{check_contiguous, DialogueScript, ScriptError, SpeakerTag, MAX_SPEAKERS};

pub const GENERATED_AUDIO_MARKER: &str = "<generated_audio>";
pub const PREFIX_AUDIO_MARKER: &str = "<prefix_audio>";
const REFERENCE_INDENT: &str = "    ";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("script speaker {0} has no reference audio")]
    MissingReference(SpeakerTag),
    #[error("mode {0} requires reference audio")]
    NoReferences(InferenceMode),
    #[error("mode {0} requires a prefix")]
    MissingPrefix(InferenceMode),
    #[error("mode {0} does not take a prefix")]
    UnexpectedPrefix(InferenceMode),
    #[error("mode {0} does not take reference audio")]
    UnexpectedReferences(InferenceMode),
    #[error("invalid reference set: {0}")]
    InvalidReferences(#[from] ScriptError),
    #[error("reference set holds {0} entries, at most {MAX_SPEAKERS} allowed")]
    TooManyReferences(usize),
}

/// Opaque handle to an audio file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AudioRef {
    pub id: String,
    pub duration_s: f64,
}

impl AudioRef {
    pub fn new(id: impl Into<String>, duration_s: f64) -> Self {
        Self {
            id: id.into(),
            duration_s,
        }
    }
}

/// Reference audio per speaker, tags contiguous from `S1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<SpeakerTag, AudioRef>", into = "BTreeMap<SpeakerTag, AudioRef>")]
pub struct ReferenceSet {
    entries: BTreeMap<SpeakerTag, AudioRef>,
}

impl ReferenceSet {
    pub fn new(entries: BTreeMap<SpeakerTag, AudioRef>) -> Result<Self, PromptError> {
        if entries.len() > MAX_SPEAKERS as usize {
            return Err(PromptError::TooManyReferences(entries.len()));
        }
        check_contiguous(&entries.keys().copied().collect())?;
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &BTreeMap<SpeakerTag, AudioRef> {
        &self.entries
    }

    pub fn get(&self, tag: SpeakerTag) -> Option<&AudioRef> {
        self.entries.get(&tag)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl TryFrom<BTreeMap<SpeakerTag, AudioRef>> for ReferenceSet {
    type Error = PromptError;

    fn try_from(entries: BTreeMap<SpeakerTag, AudioRef>) -> Result<Self, Self::Error> {
        Self::new(entries)
    }
}

impl From<ReferenceSet> for BTreeMap<SpeakerTag, AudioRef> {
    fn from(r: ReferenceSet) -> Self {
        r.entries
    }
}

/// Audio already spoken, which generation continues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prefix {
    /// Speaker-tagged transcript of the prefix audio.
    pub transcript: String,
    pub audio: AudioRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placeholder {
    Reference { speaker: SpeakerTag, audio: AudioRef },
    Prefix { transcript: String, audio: AudioRef },
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptWarning {
    OrphanReference(SpeakerTag),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub text: String,
    pub placeholders: BTreeMap<String, Placeholder>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<PromptWarning>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferenceMode {
    VoiceClone,
    Continuation,
    #[default]
    VoiceCloneAndContinuation,
}

impl InferenceMode {
    pub const ALL: [InferenceMode; 3] = [
        InferenceMode::VoiceClone,
        InferenceMode::Continuation,
        InferenceMode::VoiceCloneAndContinuation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InferenceMode::VoiceClone => "voice_clone",
            InferenceMode::Continuation => "continuation",
            InferenceMode::VoiceCloneAndContinuation => "voice_clone_and_continuation",
        }
    }

    pub fn uses_references(self) -> bool {
        self != InferenceMode::Continuation
    }

    pub fn uses_prefix(self) -> bool {
        self != InferenceMode::VoiceClone
    }
}

impl fmt::Display for InferenceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InferenceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown inference mode {s:?}"))
    }
}

pub fn audio_marker(tag: SpeakerTag) -> String {
    format!("<audio_{}>", tag.index())
}

fn assemble(reference_block: &[String], text: &str, assistant: &str) -> String {
    let mut lines: Vec<&str> = vec!["<|im_start|>user", "<user_inst>"];
    lines.extend(reference_block.iter().map(String::as_str));
    lines.extend(["{other fields: None}", "Text:", text, "</user_inst><|im_end|>", "<|im_start|>assistant", assistant, "<|im_end|>"]);
    lines.join("\n")
}

fn reference_block(
    script: &DialogueScript,
    refs: &ReferenceSet,
    placeholders: &mut BTreeMap<String, Placeholder>,
) -> Result<(Vec<String>, Vec<PromptWarning>), PromptError> {
    let speakers = script.speakers();
    if let Some(missing) = speakers.iter().find(|t| refs.get(**t).is_none()) {
        return Err(PromptError::MissingReference(*missing));
    }
    let mut warnings = Vec::new();
    let mut block = vec!["Reference(s):".to_string()];
    for (tag, audio) in &refs.entries {
        if !speakers.contains(tag) {
            log::warn!("reference for {tag} is not used by the script");
            warnings.push(PromptWarning::OrphanReference(*tag));
        }
        let marker = audio_marker(*tag);
        block.push(format!("{REFERENCE_INDENT}{tag}: {marker}"));
        placeholders.insert(
            marker,
            Placeholder::Reference {
                speaker: *tag,
                audio: audio.clone(),
            },
        );
    }
    Ok((block, warnings))
}

/// Training template with one reference slot per speaker.
pub fn render_voice_clone_prompt(script: &DialogueScript, refs: &ReferenceSet) -> Result<RenderedPrompt, PromptError> {
    if refs.is_empty() {
        return Err(PromptError::NoReferences(InferenceMode::VoiceClone));
    }
    let mut placeholders = BTreeMap::new();
    let (block, warnings) = reference_block(script, refs, &mut placeholders)?;
    placeholders.insert(GENERATED_AUDIO_MARKER.into(), Placeholder::Generated);
    Ok(RenderedPrompt {
        text: assemble(&block, &script.render(), GENERATED_AUDIO_MARKER),
        placeholders,
        warnings,
    })
}

/// Training template without reference audio.
pub fn render_common_tts_prompt(script: &DialogueScript) -> RenderedPrompt {
    RenderedPrompt {
        text: assemble(&["Reference(s): None".into()], &script.render(), GENERATED_AUDIO_MARKER),
        placeholders: BTreeMap::from([(GENERATED_AUDIO_MARKER.into(), Placeholder::Generated)]),
        warnings: Vec::new(),
    }
}

/// Inference prompt for one of the three cloning paradigms.
///
/// Continuation modes prepend the prefix transcript to the text and start the
/// assistant turn with `<prefix_audio>`, so generation picks up where the
/// prefix ends. Passing references to `continuation` or a prefix to
/// `voice_clone` is an error rather than being silently dropped.
pub fn build_inference_prompt(
    mode: InferenceMode,
    script: &DialogueScript,
    refs: Option<&ReferenceSet>,
    prefix: Option<&Prefix>,
) -> Result<RenderedPrompt, PromptError> {
    let refs = refs.filter(|r| !r.is_empty());
    match (mode.uses_references(), refs) {
        (true, None) => return Err(PromptError::NoReferences(mode)),
        (false, Some(_)) => return Err(PromptError::UnexpectedReferences(mode)),
        _ => {}
    }
    match (mode.uses_prefix(), prefix) {
        (true, None) => return Err(PromptError::MissingPrefix(mode)),
        (false, Some(_)) => return Err(PromptError::UnexpectedPrefix(mode)),
        _ => {}
    }

    let mut placeholders = BTreeMap::new();
    let (block, warnings) = match refs {
        Some(refs) => reference_block(script, refs, &mut placeholders)?,
        None => (vec!["Reference(s): None".to_string()], Vec::new()),
    };
    let mut text = String::new();
    let mut assistant = String::new();
    if let Some(p) = prefix {
        text.push_str(&p.transcript);
        assistant.push_str(PREFIX_AUDIO_MARKER);
        placeholders.insert(
            PREFIX_AUDIO_MARKER.into(),
            Placeholder::Prefix {
                transcript: p.transcript.clone(),
                audio: p.audio.clone(),
            },
        );
    }
    text.push_str(&script.render());
    assistant.push_str(GENERATED_AUDIO_MARKER);
    placeholders.insert(GENERATED_AUDIO_MARKER.into(), Placeholder::Generated);
    Ok(RenderedPrompt {
        text: assemble(&block, &text, &assistant),
        placeholders,
        warnings,
    })
}
