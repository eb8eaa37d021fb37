//! Alignment-based objective evaluation of generated dialogue.
//!
//! Per case: the tagged script is stripped and tokenized into aligner units,
//! force-aligned against the generated audio, and split into sentence
//! fragments whose speaker comes straight from the script tags. Each
//! fragment is embedded and compared with every speaker's prompt audio; the
//! most similar prompt is the predicted speaker (ACC), and the similarity to
//! the scripted speaker's prompt is SIM. WER compares the stripped script
//! with an ASR transcript of the whole generated file.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::{AdapterError, AdapterSet, AlignRequest, AsrRequest, EmbedRequest, WordAlignment};
use crate::script::{
    self, normalize_for_wer, split_fragments, strip_tags, DialogueScript, Fragment, ScriptError, SpeakerTag, TokenUnit,
};

/// Fragments shorter than this are merged into a neighbour before embedding.
pub const MIN_FRAGMENT_S: f64 = 0.5;
/// A case with a larger share of unaligned words is excluded from ACC and SIM.
pub const MAX_UNALIGNED_FRACTION: f64 = 0.2;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("nothing to evaluate")]
    EmptyEval,
    #[error("reference text is empty after normalization")]
    EmptyReference,
    #[error("case {case_id}: speaker {speaker} has no prompt audio")]
    MissingReference { case_id: String, speaker: SpeakerTag },
    #[error("case {case_id}: {missing} of {total} words unaligned")]
    AlignmentGap { case_id: String, missing: usize, total: usize },
    #[error("predictions ({predictions}) and ground truth ({truth}) differ in length")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("audio file not found: {0}")]
    MissingAudio(PathBuf),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Script(#[from] ScriptError),
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalCase {
    pub case_id: String,
    pub script: DialogueScript,
    pub generated_audio: String,
    pub prompt_audio: BTreeMap<SpeakerTag, String>,
    pub language: String,
}

impl EvalCase {
    pub fn validate(&self) -> Result<(), EvalError> {
        match self.script.speakers().into_iter().find(|s| !self.prompt_audio.contains_key(s)) {
            Some(speaker) => Err(EvalError::MissingReference {
                case_id: self.case_id.clone(),
                speaker,
            }),
            None => Ok(()),
        }
    }
}

/// One aligner unit of the script and where the aligner put it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedToken {
    pub word: String,
    pub fragment_index: usize,
    pub alignment: Option<WordAlignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseAlignment {
    pub fragments: Vec<Fragment>,
    pub tokens: Vec<AlignedToken>,
}

impl CaseAlignment {
    pub fn missing(&self) -> usize {
        self.tokens.iter().filter(|t| t.alignment.is_none()).count()
    }
}

fn aligner_units(text: &str, language: &str) -> Vec<String> {
    let unit = script::token_unit(language).unwrap_or(TokenUnit::Word);
    script::tokenize(&strip_tags(text), unit)
}

/// Matches aligner output to the requested words greedily, in order.
fn match_alignments(words: &[String], alignments: Vec<WordAlignment>) -> Vec<Option<WordAlignment>> {
    let mut out = vec![None; words.len()];
    let mut cursor = 0;
    for a in alignments {
        if let Some(offset) = words[cursor..].iter().position(|w| *w == a.word) {
            out[cursor + offset] = Some(a);
            cursor += offset + 1;
        }
    }
    out
}

/// Force-aligns the case's script against its generated audio.
///
/// Fails with `AlignmentGap` when more than 20% of the words are missing
/// from the aligner output, or when there is nothing to align.
pub fn align_case(case: &EvalCase, adapters: &AdapterSet) -> Result<CaseAlignment, EvalError> {
    let fragments = split_fragments(&case.script);
    let mut tokens = Vec::new();
    for (fragment_index, f) in fragments.iter().enumerate() {
        tokens.extend(aligner_units(&f.text, &case.language).into_iter().map(|word| AlignedToken {
            word,
            fragment_index,
            alignment: None,
        }));
    }
    let words: Vec<String> = tokens.iter().map(|t| t.word.clone()).collect();
    let gap = |missing| EvalError::AlignmentGap {
        case_id: case.case_id.clone(),
        missing,
        total: words.len(),
    };
    if words.is_empty() {
        return Err(gap(0));
    }
    let artifact = adapters.align(&AlignRequest {
        audio_path: case.generated_audio.clone(),
        words: words.clone(),
        language: case.language.clone(),
    })?;
    for (token, a) in tokens.iter_mut().zip(match_alignments(&words, artifact.alignments)) {
        token.alignment = a;
    }
    let alignment = CaseAlignment { fragments, tokens };
    let missing = alignment.missing();
    if missing as f64 > MAX_UNALIGNED_FRACTION * words.len() as f64 {
        return Err(gap(missing));
    }
    Ok(alignment)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FragmentSpans {
    pub fragments: Vec<Fragment>,
    /// Indices of input fragments with no aligned word.
    pub dropped: Vec<usize>,
}

/// Timestamps each fragment from its first and last aligned word.
pub fn fragment_spans(fragments: &[Fragment], tokens: &[AlignedToken]) -> FragmentSpans {
    let mut bounds: Vec<Option<(f64, f64)>> = vec![None; fragments.len()];
    for t in tokens {
        let (Some(a), Some(slot)) = (&t.alignment, bounds.get_mut(t.fragment_index)) else {
            continue;
        };
        *slot = Some(match *slot {
            None => (a.start_s, a.end_s),
            Some((s, _)) => (s, a.end_s),
        });
    }
    let mut out = FragmentSpans::default();
    for (i, (f, b)) in fragments.iter().zip(bounds).enumerate() {
        match b {
            Some((start, end)) => out.fragments.push(Fragment {
                start_s: Some(start),
                end_s: Some(end),
                ..f.clone()
            }),
            None => out.dropped.push(i),
        }
    }
    out
}

/// Folds fragments shorter than `min_s` into an adjacent fragment of the same
/// speaker, preferring the preceding one. A short fragment with no
/// same-speaker neighbour is kept as is.
pub fn merge_short_fragments(fragments: Vec<Fragment>, min_s: f64) -> Vec<Fragment> {
    let short = |f: &Fragment| f.duration_s().is_some_and(|d| d < min_s);
    let mut out: Vec<Fragment> = Vec::with_capacity(fragments.len());
    let mut pending: Option<Fragment> = None;
    for f in fragments {
        if let Some(p) = pending.take() {
            if p.gt_speaker == f.gt_speaker {
                out.push(join(p, f));
                continue;
            }
            out.push(p);
        }
        if short(&f) {
            if let Some(prev) = out.last_mut().filter(|p| p.gt_speaker == f.gt_speaker) {
                *prev = join(prev.clone(), f);
            } else {
                pending = Some(f);
            }
        } else {
            out.push(f);
        }
    }
    out.extend(pending);
    out
}

fn join(a: Fragment, b: Fragment) -> Fragment {
    Fragment {
        text: format!("{} {}", a.text, b.text),
        start_s: opt_fold(a.start_s, b.start_s, f64::min),
        end_s: opt_fold(a.end_s, b.end_s, f64::max),
        ..a
    }
}

fn opt_fold(a: Option<f64>, b: Option<f64>, f: fn(f64, f64) -> f64) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(f(x, y)),
        (x, y) => x.or(y),
    }
}

/// Cosine similarity; zero when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Speaker whose prompt embedding is most similar; ties go to the lowest tag.
pub fn attribute_speaker(fragment: &[f64], prompts: &BTreeMap<SpeakerTag, Vec<f64>>) -> Option<SpeakerTag> {
    let mut best: Option<(SpeakerTag, f64)> = None;
    for (tag, p) in prompts {
        let s = cosine(fragment, p);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((*tag, s));
        }
    }
    best.map(|(t, _)| t)
}

pub fn compute_acc(predictions: &[SpeakerTag], truth: &[SpeakerTag]) -> Result<f64, EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::EmptyEval);
    }
    let correct = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Mean cosine similarity of each fragment to its scripted speaker's prompt.
pub fn compute_sim(
    fragments: &[(SpeakerTag, Vec<f64>)],
    prompts: &BTreeMap<SpeakerTag, Vec<f64>>,
) -> Result<f64, EvalError> {
    if fragments.is_empty() {
        return Err(EvalError::EmptyEval);
    }
    let mut total = 0.0;
    for (tag, v) in fragments {
        let p = prompts.get(tag).ok_or_else(|| EvalError::MissingReference {
            case_id: String::new(),
            speaker: *tag,
        })?;
        total += cosine(v, p);
    }
    Ok(total / fragments.len() as f64)
}

/// Levenshtein distance with unit costs, two-row dynamic programme.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=hypothesis.len()).collect();
    let mut cur = vec![0; hypothesis.len() + 1];
    for (i, r) in reference.iter().enumerate() {
        cur[0] = i + 1;
        for (j, h) in hypothesis.iter().enumerate() {
            let sub = prev[j] + usize::from(r != h);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[hypothesis.len()]
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WerCounts {
    pub edits: usize,
    pub reference_tokens: usize,
}

impl WerCounts {
    pub fn wer(&self) -> Option<f64> {
        (self.reference_tokens > 0).then(|| self.edits as f64 / self.reference_tokens as f64)
    }
}

impl std::ops::Add for WerCounts {
    type Output = WerCounts;

    fn add(self, o: WerCounts) -> WerCounts {
        WerCounts {
            edits: self.edits + o.edits,
            reference_tokens: self.reference_tokens + o.reference_tokens,
        }
    }
}

/// Edits and reference length after stripping tags and normalizing.
pub fn wer_counts(reference: &str, hypothesis: &str, language: &str) -> Result<WerCounts, EvalError> {
    let r = normalize_for_wer(&strip_tags(reference), language)?;
    let h = normalize_for_wer(&strip_tags(hypothesis), language)?;
    if r.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    Ok(WerCounts {
        edits: edit_distance(&r, &h),
        reference_tokens: r.len(),
    })
}

/// Word error rate; character error rate for Chinese.
pub fn compute_wer(reference: &str, hypothesis: &str, language: &str) -> Result<f64, EvalError> {
    Ok(wer_counts(reference, hypothesis, language)?
        .wer()
        .expect("reference is non-empty"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FragmentResult {
    pub text: String,
    pub speaker: SpeakerTag,
    pub predicted: SpeakerTag,
    pub start_s: f64,
    pub end_s: f64,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub language: String,
    pub fragments: Vec<FragmentResult>,
    pub correct_fragments: usize,
    pub dropped_fragments: usize,
    pub acc: Option<f64>,
    pub sim: Option<f64>,
    pub wer: Option<f64>,
    pub wer_counts: Option<WerCounts>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub case_id: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LanguageSummary {
    pub cases: usize,
    pub scored_fragments: usize,
    pub correct_fragments: usize,
    pub acc: Option<f64>,
    pub sim: Option<f64>,
    pub wer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub acc: Option<f64>,
    pub sim: Option<f64>,
    pub wer: Option<f64>,
    pub fragment_count: usize,
    pub scored_fragments: usize,
    pub correct_fragments: usize,
    /// Cases left out of ACC/SIM because alignment or embedding failed.
    pub excluded_cases: usize,
    pub by_language: BTreeMap<String, LanguageSummary>,
    pub per_case: Vec<CaseResult>,
    pub diagnostics: Vec<Diagnostic>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub min_fragment_s: f64,
    /// Fail a case early when its audio files do not exist on disk.
    pub require_audio_files: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            min_fragment_s: MIN_FRAGMENT_S,
            require_audio_files: false,
        }
    }
}

fn check_file(handle: &str) -> Result<(), EvalError> {
    let file = handle.split('#').next().unwrap_or(handle);
    if Path::new(file).exists() {
        Ok(())
    } else {
        Err(EvalError::MissingAudio(file.into()))
    }
}

fn score_speakers(
    case: &EvalCase,
    adapters: &AdapterSet,
    options: &EvalOptions,
) -> Result<(Vec<FragmentResult>, usize), EvalError> {
    let alignment = align_case(case, adapters)?;
    let spans = fragment_spans(&alignment.fragments, &alignment.tokens);
    let fragments = merge_short_fragments(spans.fragments, options.min_fragment_s);

    let mut prompts = BTreeMap::new();
    for (tag, path) in &case.prompt_audio {
        let e = adapters.embed(&EmbedRequest {
            audio_path: path.clone(),
            start_s: None,
            end_s: None,
        })?;
        prompts.insert(*tag, e.vector);
    }

    let mut results = Vec::with_capacity(fragments.len());
    for f in fragments {
        let (start_s, end_s) = (f.start_s.unwrap_or(0.0), f.end_s.unwrap_or(0.0));
        let e = adapters.embed(&EmbedRequest {
            audio_path: case.generated_audio.clone(),
            start_s: Some(start_s),
            end_s: Some(end_s),
        })?;
        let predicted = attribute_speaker(&e.vector, &prompts).expect("validated cases have prompts");
        results.push(FragmentResult {
            similarity: cosine(&e.vector, &prompts[&f.gt_speaker]),
            text: f.text,
            speaker: f.gt_speaker,
            predicted,
            start_s,
            end_s,
        });
    }
    Ok((results, spans.dropped.len()))
}

fn evaluate_case(case: &EvalCase, adapters: &AdapterSet, options: &EvalOptions) -> CaseResult {
    let mut result = CaseResult {
        case_id: case.case_id.clone(),
        language: script::primary_language(&case.language),
        fragments: Vec::new(),
        correct_fragments: 0,
        dropped_fragments: 0,
        acc: None,
        sim: None,
        wer: None,
        wer_counts: None,
        errors: Vec::new(),
    };
    if options.require_audio_files {
        let mut files = std::iter::once(&case.generated_audio).chain(case.prompt_audio.values());
        if let Err(e) = files.try_for_each(|f| check_file(f)) {
            result.errors.push(e.to_string());
            return result;
        }
    }

    match score_speakers(case, adapters, options) {
        Ok((fragments, dropped)) => {
            result.correct_fragments = fragments.iter().filter(|f| f.predicted == f.speaker).count();
            result.dropped_fragments = dropped;
            if !fragments.is_empty() {
                let n = fragments.len() as f64;
                result.acc = Some(result.correct_fragments as f64 / n);
                result.sim = Some(fragments.iter().map(|f| f.similarity).sum::<f64>() / n);
            }
            result.fragments = fragments;
        }
        Err(e) => result.errors.push(e.to_string()),
    }

    let asr = adapters.transcribe(&AsrRequest {
        audio_path: case.generated_audio.clone(),
        language: case.language.clone(),
    });
    match asr.map_err(EvalError::from).and_then(|a| wer_counts(&case.script.render(), &a.text, &case.language)) {
        Ok(counts) => {
            result.wer = counts.wer();
            result.wer_counts = Some(counts);
        }
        Err(e) => result.errors.push(e.to_string()),
    }
    result
}

pub fn run_eval(cases: &[EvalCase], adapters: &AdapterSet) -> Result<EvalReport, EvalError> {
    run_eval_with(cases, adapters, &EvalOptions::default())
}

/// Evaluates every case and aggregates the report.
///
/// All cases are validated up front, so a missing prompt fails the batch
/// before any adapter is called. Per-case failures after that land in
/// `diagnostics` and never abort the run. ACC is pooled over fragments, SIM
/// is the mean of per-case means, WER is pooled over reference tokens.
pub fn run_eval_with(cases: &[EvalCase], adapters: &AdapterSet, options: &EvalOptions) -> Result<EvalReport, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::EmptyEval);
    }
    for case in cases {
        case.validate()?;
    }
    let mut per_case: Vec<CaseResult> = cases.par_iter().map(|c| evaluate_case(c, adapters, options)).collect();
    per_case.sort_by(|a, b| a.case_id.cmp(&b.case_id));

    let diagnostics = per_case
        .iter()
        .flat_map(|c| {
            c.errors.iter().map(|m| Diagnostic {
                case_id: c.case_id.clone(),
                message: m.clone(),
            })
        })
        .collect();
    let overall = summarize(per_case.iter());
    let languages: BTreeSet<&str> = per_case.iter().map(|c| c.language.as_str()).collect();
    let by_language = languages
        .into_iter()
        .map(|l| (l.to_string(), summarize(per_case.iter().filter(|c| c.language == l))))
        .collect();
    Ok(EvalReport {
        acc: overall.acc,
        sim: overall.sim,
        wer: overall.wer,
        fragment_count: per_case.iter().map(|c| c.fragments.len() + c.dropped_fragments).sum(),
        scored_fragments: overall.scored_fragments,
        correct_fragments: overall.correct_fragments,
        excluded_cases: per_case.iter().filter(|c| c.sim.is_none()).count(),
        by_language,
        per_case,
        diagnostics,
    })
}

fn summarize<'a>(cases: impl Iterator<Item = &'a CaseResult>) -> LanguageSummary {
    let mut s = LanguageSummary::default();
    let mut sims = Vec::new();
    let mut wer = WerCounts::default();
    for c in cases {
        s.cases += 1;
        s.scored_fragments += c.fragments.len();
        s.correct_fragments += c.correct_fragments;
        sims.extend(c.sim);
        if let Some(w) = c.wer_counts {
            wer = wer + w;
        }
    }
    s.acc = (s.scored_fragments > 0).then(|| s.correct_fragments as f64 / s.scored_fragments as f64);
    s.sim = (!sims.is_empty()).then(|| sims.iter().sum::<f64>() / sims.len() as f64);
    s.wer = wer.wer();
    s
}

fn language_order(a: &str) -> (u8, &str) {
    match a {
        "zh" => (0, a),
        "en" => (1, a),
        _ => (2, a),
    }
}

/// Fixed-width table: one row per system, ACC/SIM/WER per language.
pub fn render_table(rows: &[(&str, &EvalReport)]) -> String {
    let mut languages: Vec<&str> = rows
        .iter()
        .flat_map(|(_, r)| r.by_language.keys().map(String::as_str))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    languages.sort_by_key(|l| language_order(l));
    let name_width = rows.iter().map(|(n, _)| n.chars().count()).max().unwrap_or(0).max(5);
    let cell = 8;
    let group = cell * 3 + 2;

    let mut out = String::new();
    let _ = write!(out, "{:<name_width$}", "Model");
    for l in &languages {
        let _ = write!(out, " | {:^group$}", l.to_uppercase());
    }
    out.push('\n');
    let _ = write!(out, "{:<name_width$}", "");
    for _ in &languages {
        let _ = write!(out, " | {:>cell$} {:>cell$} {:>cell$}", "ACC↑", "SIM↑", "WER↓");
    }
    out.push('\n');
    out.push_str(&"-".repeat(name_width + languages.len() * (group + 3)));
    out.push('\n');
    let fmt4 = |v: Option<f64>| v.map_or("-".into(), |v| format!("{v:.4}"));
    for (name, report) in rows {
        let _ = write!(out, "{name:<name_width$}");
        for l in &languages {
            let s = report.by_language.get(*l);
            let _ = write!(
                out,
                " | {:>cell$} {:>cell$} {:>cell$}",
                fmt4(s.and_then(|s| s.acc)),
                fmt4(s.and_then(|s| s.sim)),
                s.and_then(|s| s.wer).map_or("-".into(), |w| format!("{:.2}%", w * 100.0)),
            );
        }
        out.push('\n');
    }
    out
}

/// One line of a test-set manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub case_id: String,
    pub script_path: String,
    pub prompt_audio: BTreeMap<SpeakerTag, String>,
    pub language: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generated_audio: Option<String>,
}

/// Reads a JSON-lines manifest and the scripts it points to.
///
/// Relative paths resolve against the manifest's directory. Without a
/// `generated_audio` field the case's audio is `<outputs_dir>/<case_id>.wav`.
pub fn load_manifest(path: &Path, outputs_dir: Option<&Path>) -> Result<Vec<EvalCase>, EvalError> {
    let io = |p: &Path| {
        let path = p.to_path_buf();
        move |source| EvalError::Io { path, source }
    };
    let base = path.parent().unwrap_or(Path::new("."));
    let file = std::fs::File::open(path).map_err(io(path))?;
    let resolve = |p: &str| base.join(p).to_string_lossy().into_owned();
    let mut cases = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| EvalError::Manifest { line: i + 1, message };
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        let script_path = base.join(&entry.script_path);
        let raw = std::fs::read_to_string(&script_path).map_err(io(&script_path))?;
        let script = DialogueScript::parse(raw.trim_end()).map_err(|e| bad(format!("{}: {e}", entry.script_path)))?;
        let generated_audio = match (&entry.generated_audio, outputs_dir) {
            (Some(p), _) => resolve(p),
            (None, Some(dir)) => dir.join(format!("{}.wav", entry.case_id)).to_string_lossy().into_owned(),
            (None, None) => return Err(bad("no generated_audio and no outputs directory".into())),
        };
        cases.push(EvalCase {
            case_id: entry.case_id,
            script: script.with_language(script::primary_language(&entry.language)),
            generated_audio,
            prompt_audio: entry.prompt_audio.iter().map(|(t, p)| (*t, resolve(p))).collect(),
            language: entry.language,
        });
    }
    Ok(cases)
}
