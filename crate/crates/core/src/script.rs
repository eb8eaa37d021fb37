//! Speaker-tagged dialogue scripts.
//!
//! A script is plain UTF-8 text with inline speaker tags, `[S1]Hello.[S2]Hi!`.
//! Any other bracketed span (`[laugh]`, `[breath]`) is a sound-event tag: it
//! stays inside the turn text and is removed by [`strip_tags`].

use std::collections::BTreeSet;
use std::fmt;
use std::num::NonZeroUsize;
use std::str::FromStr;
use std::sync::LazyLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Maximum number of distinct speakers in one dialogue.
pub const MAX_SPEAKERS: u8 = 5;

/// Characters that end a sentence fragment. Commas deliberately do not split.
pub const SENTENCE_DELIMITERS: &[char] = &['.', '?', '!', '…', '。', '？', '！', '；', ';', '\n'];

/// Replacement probability for comma tokens during punctuation augmentation.
pub const COMMA_REPLACE_PROB: f64 = 0.10;
/// Replacement probability for period tokens during punctuation augmentation.
pub const PERIOD_REPLACE_PROB: f64 = 0.05;

/// Tokens a comma (`,` / `，`) may be replaced with.
pub const COMMA_REPLACEMENTS: &[&str] = &[
    "、", ";", "；", "：", ":", "-", "_", "---", "--", "―", "\n", " ",
];
/// Tokens a period (`.` / `。`) may be replaced with.
pub const PERIOD_REPLACEMENTS: &[&str] = &["……", "......", "…", "...", "～", "~", "\n", " "];

static SPEAKER_TAG_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[S(\d+)\]").unwrap());
static BRACKET_SPAN_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[[^\[\]]*\]").unwrap());
static WHITESPACE_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\s+").unwrap());

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScriptError {
    #[error("no speaker tag found in script")]
    NoSpeakerTag,
    #[error("speaker index {0} out of range 1..={MAX_SPEAKERS}")]
    SpeakerIndexOutOfRange(u64),
    #[error("speaker set has a gap: S{missing} is absent but S{present} is used")]
    GappedSpeakerSet { missing: u8, present: u8 },
    #[error("turn {index} ({speaker}) is empty")]
    EmptyTurn { index: usize, speaker: SpeakerTag },
    #[error("text before the first speaker tag: {0:?}")]
    UntaggedPrefix(String),
    #[error("invalid speaker tag {0:?}")]
    InvalidTag(String),
    #[error("unsupported language for text normalization: {0:?}")]
    UnsupportedLanguage(String),
}

/// A speaker index in `1..=5`, rendered as `[S<index>]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpeakerTag(u8);

impl SpeakerTag {
    pub fn new(index: u8) -> Result<Self, ScriptError> {
        if (1..=MAX_SPEAKERS).contains(&index) {
            Ok(Self(index))
        } else {
            Err(ScriptError::SpeakerIndexOutOfRange(index as u64))
        }
    }

    pub fn index(self) -> u8 {
        self.0
    }

    /// Zero-based position, handy for indexing per-speaker tables.
    pub fn ordinal(self) -> usize {
        self.0 as usize - 1
    }

    /// Short key form, `S1`.
    pub fn key(self) -> String {
        format!("S{}", self.0)
    }

    pub fn all() -> impl Iterator<Item = SpeakerTag> {
        (1..=MAX_SPEAKERS).map(SpeakerTag)
    }
}

impl fmt::Display for SpeakerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[S{}]", self.0)
    }
}

impl FromStr for SpeakerTag {
    type Err = ScriptError;

    /// Accepts `S3`, `[S3]` or a bare `3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
        let digits = inner.strip_prefix('S').unwrap_or(inner);
        let index: u64 = digits
            .parse()
            .map_err(|_| ScriptError::InvalidTag(s.to_string()))?;
        if index == 0 || index > MAX_SPEAKERS as u64 {
            return Err(ScriptError::SpeakerIndexOutOfRange(index));
        }
        Ok(Self(index as u8))
    }
}

impl Serialize for SpeakerTag {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for SpeakerTag {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: SpeakerTag,
    /// Text exactly as it appeared between this tag and the next one.
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueScript {
    pub turns: Vec<Turn>,
    /// Primary language subtag; `und` when unknown.
    pub language: String,
}

impl DialogueScript {
    /// Parses and validates a tagged script. See [`parse_script`].
    pub fn parse(raw: &str) -> Result<Self, ScriptError> {
        parse_script(raw)
    }

    pub fn with_language(mut self, language: impl Into<String>) -> Self {
        self.language = language.into();
        self
    }

    /// Distinct speakers in ascending tag order.
    pub fn speakers(&self) -> BTreeSet<SpeakerTag> {
        self.turns.iter().map(|t| t.speaker).collect()
    }

    /// Canonical tagged text; the inverse of parsing for canonical inputs.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for turn in &self.turns {
            out.push_str(&turn.speaker.to_string());
            out.push_str(&turn.text);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

/// Splits a tagged script into turns.
///
/// Text between two tags belongs to the preceding tag. Tags may repeat freely,
/// but the set of speakers used must be `S1..Sn` without gaps.
pub fn parse_script(raw: &str) -> Result<DialogueScript, ScriptError> {
    let tags: Vec<_> = SPEAKER_TAG_RE.captures_iter(raw).collect();
    if tags.is_empty() {
        return Err(ScriptError::NoSpeakerTag);
    }

    let first = tags[0].get(0).unwrap();
    let prefix = &raw[..first.start()];
    if !prefix.trim().is_empty() {
        return Err(ScriptError::UntaggedPrefix(prefix.to_string()));
    }

    let mut turns = Vec::with_capacity(tags.len());
    for (i, cap) in tags.iter().enumerate() {
        let whole = cap.get(0).unwrap();
        let index: u64 = cap[1]
            .parse()
            .map_err(|_| ScriptError::SpeakerIndexOutOfRange(u64::MAX))?;
        if index == 0 || index > MAX_SPEAKERS as u64 {
            return Err(ScriptError::SpeakerIndexOutOfRange(index));
        }
        let speaker = SpeakerTag(index as u8);
        let end = tags
            .get(i + 1)
            .map(|next| next.get(0).unwrap().start())
            .unwrap_or(raw.len());
        let text = &raw[whole.end()..end];
        if text.trim().is_empty() {
            return Err(ScriptError::EmptyTurn { index: i, speaker });
        }
        turns.push(Turn {
            speaker,
            text: text.to_string(),
        });
    }

    let script = DialogueScript {
        turns,
        language: "und".to_string(),
    };
    check_contiguous(&script.speakers())?;
    Ok(script)
}

pub(crate) fn check_contiguous(speakers: &BTreeSet<SpeakerTag>) -> Result<(), ScriptError> {
    if let Some(max) = speakers.iter().next_back() {
        for index in 1..max.index() {
            if !speakers.contains(&SpeakerTag(index)) {
                return Err(ScriptError::GappedSpeakerSet {
                    missing: index,
                    present: max.index(),
                });
            }
        }
    }
    Ok(())
}

/// Removes speaker tags and sound-event tags, collapsing whitespace.
///
/// Every innermost `[...]` span is removed repeatedly until none is left, so
/// the function is idempotent even for nested brackets.
pub fn strip_tags(raw: &str) -> String {
    let mut text = raw.to_string();
    loop {
        let next = BRACKET_SPAN_RE.replace_all(&text, " ");
        if next == text {
            break;
        }
        text = next.into_owned();
    }
    WHITESPACE_RE.replace_all(&text, " ").trim().to_string()
}

/// Removes only `[S<k>]` tags, leaving sound events in place.
pub fn strip_speaker_tags(raw: &str) -> String {
    SPEAKER_TAG_RE.replace_all(raw, "").trim().to_string()
}

/// Tokenization units used for scoring a language.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenUnit {
    Word,
    Character,
}

/// Primary subtag of a BCP-47 code, lowercased: `zh-CN` → `zh`.
pub fn primary_language(code: &str) -> String {
    code.split(['-', '_'])
        .next()
        .unwrap_or("")
        .trim()
        .to_ascii_lowercase()
}

pub fn token_unit(language: &str) -> Result<TokenUnit, ScriptError> {
    match primary_language(language).as_str() {
        "en" => Ok(TokenUnit::Word),
        "zh" => Ok(TokenUnit::Character),
        _ => Err(ScriptError::UnsupportedLanguage(language.to_string())),
    }
}

/// Lowercases, removes punctuation and tokenizes for WER scoring.
///
/// English yields whitespace-separated words; Chinese yields single
/// characters with whitespace dropped. Digits are kept literally.
pub fn normalize_for_wer(text: &str, language: &str) -> Result<Vec<String>, ScriptError> {
    let unit = token_unit(language)?;
    Ok(tokenize(text, unit))
}

pub(crate) fn tokenize(text: &str, unit: TokenUnit) -> Vec<String> {
    let mut cleaned = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_alphanumeric() {
            cleaned.extend(c.to_lowercase());
        } else {
            // punctuation, symbols and whitespace all act as separators
            cleaned.push(' ');
        }
    }
    match unit {
        TokenUnit::Word => cleaned.split_whitespace().map(str::to_string).collect(),
        TokenUnit::Character => cleaned
            .chars()
            .filter(|c| !c.is_whitespace())
            .map(String::from)
            .collect(),
    }
}

/// A punctuation-delimited piece of one turn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fragment {
    pub text: String,
    pub turn_index: usize,
    #[serde(rename = "speaker")]
    pub gt_speaker: SpeakerTag,
    pub start_s: Option<f64>,
    pub end_s: Option<f64>,
}

impl Fragment {
    pub fn duration_s(&self) -> Option<f64> {
        Some(self.end_s? - self.start_s?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentList {
    pub fragments: Vec<Fragment>,
}

/// Splits every turn at sentence-final punctuation.
///
/// A fragment keeps its trailing delimiter run (`"Hi."`, `"Really?!"`), is
/// trimmed, and inherits its turn's speaker. Pieces with no content beyond
/// delimiters and whitespace are dropped.
pub fn split_fragments(script: &DialogueScript) -> Vec<Fragment> {
    let mut out = Vec::new();
    for (turn_index, turn) in script.turns.iter().enumerate() {
        for piece in split_sentences(&turn.text) {
            out.push(Fragment {
                text: piece.to_string(),
                turn_index,
                gt_speaker: turn.speaker,
                start_s: None,
                end_s: None,
            });
        }
    }
    out
}

fn is_delimiter(c: char) -> bool {
    SENTENCE_DELIMITERS.contains(&c)
}

fn split_sentences(text: &str) -> Vec<&str> {
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !is_delimiter(c) {
            continue;
        }
        // swallow the rest of the delimiter run
        let mut end = i + c.len_utf8();
        while let Some(&(j, d)) = chars.peek() {
            if !is_delimiter(d) {
                break;
            }
            end = j + d.len_utf8();
            chars.next();
        }
        pieces.push(&text[start..end]);
        start = end;
    }
    pieces.push(&text[start..]);
    pieces
        .into_iter()
        .map(str::trim)
        .filter(|p| p.chars().any(|c| !c.is_whitespace() && !is_delimiter(c)))
        .collect()
}

/// Splits a script into consecutive chunks of `turns_per_chunk` turns.
///
/// Speaker indices are left as-is, so a chunk may use e.g. only `S2`.
pub fn chunk_turns(script: &DialogueScript, turns_per_chunk: NonZeroUsize) -> Vec<DialogueScript> {
    script
        .turns
        .chunks(turns_per_chunk.get())
        .map(|turns| DialogueScript {
            turns: turns.to_vec(),
            language: script.language.clone(),
        })
        .collect()
}

/// One substitution made by [`augment_punctuation_traced`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PunctuationEdit {
    /// Byte offset of the replaced character in the input.
    pub offset: usize,
    pub original: char,
    pub replacement: &'static str,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Augmentation {
    pub text: String,
    pub edits: Vec<PunctuationEdit>,
    pub commas_seen: usize,
    pub periods_seen: usize,
}

impl Augmentation {
    pub fn commas_replaced(&self) -> usize {
        self.edits
            .iter()
            .filter(|e| matches!(e.original, ',' | '，'))
            .count()
    }

    pub fn periods_replaced(&self) -> usize {
        self.edits
            .iter()
            .filter(|e| matches!(e.original, '.' | '。'))
            .count()
    }
}

/// Randomly diversifies commas and periods. Deterministic for a given seed.
pub fn augment_punctuation(text: &str, seed: u64) -> String {
    augment_punctuation_traced(text, seed).text
}

/// [`augment_punctuation`] plus a log of every substitution made.
pub fn augment_punctuation_traced(text: &str, seed: u64) -> Augmentation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::with_capacity(text.len() + text.len() / 8);
    let mut edits = Vec::new();
    let (mut commas_seen, mut periods_seen) = (0, 0);

    for (offset, c) in text.char_indices() {
        let rule = match c {
            ',' | '，' => {
                commas_seen += 1;
                Some((COMMA_REPLACE_PROB, COMMA_REPLACEMENTS))
            }
            '.' | '。' => {
                periods_seen += 1;
                Some((PERIOD_REPLACE_PROB, PERIOD_REPLACEMENTS))
            }
            _ => None,
        };
        match rule {
            Some((prob, set)) if rng.random_bool(prob) => {
                let replacement = set[rng.random_range(0..set.len())];
                out.push_str(replacement);
                edits.push(PunctuationEdit {
                    offset,
                    original: c,
                    replacement,
                });
            }
            _ => out.push(c),
        }
    }

    Augmentation {
        text: out,
        edits,
        commas_seen,
        periods_seen,
    }
}
