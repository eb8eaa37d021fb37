use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Subcommand, ValueEnum};
use serde::Serialize;
use ttsd_core::adapters::AdapterRole;
use ttsd_core::corpus_pipeline::{run_pipeline, DiarizationSegment, PipelineConfig};
use ttsd_core::delay_codec::{apply_delay, revert_delay, select_layers, DelayedGrid, TokenGrid};
use ttsd_core::prompting::{
    build_inference_prompt, render_common_tts_prompt, AudioRef, InferenceMode, Prefix, ReferenceSet,
};
use ttsd_core::script::{augment_punctuation_traced, DialogueScript, SpeakerTag};
use ttsd_core::subjective::{compute_elo, compute_win_rates, read_judgments, render_elo_table, Dimension, DEFAULT_BOOTSTRAP};
use ttsd_core::ttsd_eval::{load_manifest, render_table, run_eval_with, EvalOptions};

use crate::config::BackendArgs;
use crate::{Globals, Outcome};

#[derive(Subcommand)]
pub enum PipelineAction {
    /// Merge, annotate, filter and stage-select clips.
    Run {
        /// Diarization segments, one JSON object per line.
        #[arg(long)]
        segments: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Curriculum stage (1, 2 or 3); overrides the config file.
        #[arg(long)]
        stage: Option<u8>,
        /// Upper bound on synthetic multi-speaker samples.
        #[arg(long, default_value_t = 100)]
        max_synthetic: usize,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

#[derive(Subcommand)]
pub enum EvalAction {
    /// Score generated audio for a test-set manifest.
    Run {
        /// JSON-lines manifest of test cases.
        #[arg(long)]
        manifest: PathBuf,
        /// Directory holding `<case_id>.wav` for cases without `generated_audio`.
        #[arg(long)]
        outputs: Option<PathBuf>,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
        /// Row label in the text table.
        #[arg(long, default_value = "system")]
        label: String,
        /// Skip the on-disk existence check of audio handles.
        #[arg(long)]
        no_audio_check: bool,
        #[command(flatten)]
        backend: BackendArgs,
    },
}

#[derive(Subcommand)]
pub enum EloAction {
    /// Bradley-Terry Elo with bootstrap intervals.
    Compute {
        /// CSV with header `item_id,system_a,system_b,dimension,outcome`.
        #[arg(long)]
        judgments: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Dimensions to rate; default is every dimension present.
        #[arg(long, value_delimiter = ',')]
        dimension: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_BOOTSTRAP)]
        bootstrap: usize,
        /// Also report win/tie/lose rates of this system.
        #[arg(long)]
        reference: Option<String>,
    },
}

#[derive(Subcommand)]
pub enum AugmentAction {
    /// Randomly diversify commas and periods.
    Text {
        /// Input file; standard input when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Output file; standard output when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Write the list of edits as JSON to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
pub enum CodecAction {
    /// Apply the delay pattern to a TGRD grid.
    Encode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Padding token; defaults to the vocabulary size.
        #[arg(long)]
        pad: Option<u32>,
        /// Keep only the first N codebooks.
        #[arg(long)]
        layers: Option<usize>,
    },
    /// Revert a delayed grid to TGRD.
    Decode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PromptMode {
    VoiceClone,
    Continuation,
    VoiceCloneAndContinuation,
    /// Training template without reference audio.
    Common,
}

#[derive(Subcommand)]
pub enum PromptAction {
    /// Render a chat-template prompt for a tagged script.
    Render {
        /// Tagged script file.
        #[arg(long)]
        script: PathBuf,
        #[arg(long, value_enum, default_value = "voice-clone-and-continuation")]
        mode: PromptMode,
        /// Reference audio as `S1=ID` or `S1=ID:DURATION_S`; repeatable.
        #[arg(long = "ref", value_name = "TAG=ID[:DUR]")]
        refs: Vec<String>,
        /// File with the tagged transcript of the prefix audio.
        #[arg(long)]
        prefix_transcript: Option<PathBuf>,
        /// Prefix audio as `ID` or `ID:DURATION_S`.
        #[arg(long)]
        prefix_audio: Option<String>,
        /// Prompt text output; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Placeholder map output (JSON).
        #[arg(long)]
        placeholders: Option<PathBuf>,
    },
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

pub fn pipeline(action: PipelineAction, g: &Globals) -> Result<Outcome> {
    let PipelineAction::Run {
        segments,
        out,
        stage,
        max_synthetic,
        backend,
    } = action;
    let segments = fs::canonicalize(&segments).with_context(|| format!("opening {}", segments.display()))?;
    let file = File::open(&segments)?;
    let mut input = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut seg: DiarizationSegment =
            serde_json::from_str(&line).with_context(|| format!("{}:{}", segments.display(), i + 1))?;
        if let Some(p) = &seg.audio_path {
            seg.audio_path = Some(parent_dir(&segments).join(p).to_string_lossy().into_owned());
        }
        input.push(seg);
    }

    let adapters = backend.adapters(&g.config, g.seed, parent_dir(&segments))?;
    adapters.require(&[
        AdapterRole::AudioCut,
        AdapterRole::Qscore,
        AdapterRole::Langid,
        AdapterRole::Srate,
        AdapterRole::AsrDiarize,
        AdapterRole::Denoise,
    ])?;
    let config = PipelineConfig {
        seed: g.seed,
        max_synthetic,
        ..PipelineConfig::new(g.config.stage_config(stage)?)
    };
    let output = run_pipeline(&input, &config, &adapters)?;

    fs::create_dir_all(&out)?;
    write_jsonl(&out.join("clips.jsonl"), &output.clips)?;
    write_jsonl(&out.join("rejects.jsonl"), &output.rejects)?;
    write_jsonl(&out.join("voice_clone.jsonl"), &output.voice_clone)?;
    write_jsonl(&out.join("synthetic.jsonl"), &output.synthetic)?;
    write_jsonl(&out.join("failures.jsonl"), &output.failures)?;
    write_json(&out.join("plan.json"), &output.plan)?;
    eprintln!(
        "{} clips kept, {} rejected, {} failed, {} plan items",
        output.clips.len(),
        output.rejects.len() - output.failures.len(),
        output.failures.len(),
        output.plan.items.len()
    );
    Ok(if output.failures.is_empty() {
        Outcome::Success
    } else {
        Outcome::Partial
    })
}

pub fn eval(action: EvalAction, g: &Globals) -> Result<Outcome> {
    let EvalAction::Run {
        manifest,
        outputs,
        out,
        label,
        no_audio_check,
        backend,
    } = action;
    let manifest = fs::canonicalize(&manifest).with_context(|| format!("opening {}", manifest.display()))?;
    let cases = load_manifest(&manifest, outputs.as_deref())?;
    let adapters = backend.adapters(&g.config, g.seed, parent_dir(&manifest))?;
    adapters.require(&[AdapterRole::Aligner, AdapterRole::Embedder, AdapterRole::Asr])?;
    let options = EvalOptions {
        require_audio_files: !no_audio_check,
        ..EvalOptions::default()
    };
    let report = run_eval_with(&cases, &adapters, &options)?;

    fs::create_dir_all(&out)?;
    write_json(&out.join("report.json"), &report)?;
    let mut table = render_table(&[(label.as_str(), &report)]);
    for d in &report.diagnostics {
        table.push_str(&format!("{}: {}\n", d.case_id, d.message));
    }
    fs::write(out.join("report.txt"), &table)?;
    print!("{table}");
    Ok(if report.diagnostics.is_empty() {
        Outcome::Success
    } else {
        Outcome::Partial
    })
}

pub fn elo(action: EloAction, g: &Globals) -> Result<Outcome> {
    let EloAction::Compute {
        judgments,
        out,
        dimension,
        bootstrap,
        reference,
    } = action;
    let file = File::open(&judgments).with_context(|| format!("opening {}", judgments.display()))?;
    let all = read_judgments(file).with_context(|| format!("reading {}", judgments.display()))?;
    let dimensions: Vec<Dimension> = if dimension.is_empty() {
        Dimension::ALL
            .into_iter()
            .filter(|d| all.iter().any(|j| j.dimension == *d))
            .collect()
    } else {
        dimension
            .iter()
            .map(|d| d.parse().map_err(anyhow::Error::msg))
            .collect::<Result<_>>()?
    };
    if dimensions.is_empty() {
        bail!("no judgments in {}", judgments.display());
    }

    let mut results = BTreeMap::new();
    let mut table = String::new();
    for d in dimensions {
        let r = compute_elo(&all, d, bootstrap, g.seed).with_context(|| format!("dimension {d}"))?;
        table.push_str(&render_elo_table(&r));
        table.push('\n');
        results.insert(d, r);
    }
    fs::create_dir_all(&out)?;
    write_json(&out.join("elo.json"), &results)?;
    fs::write(out.join("elo.txt"), &table)?;
    if let Some(reference) = reference {
        write_json(&out.join("win_rates.json"), &compute_win_rates(&all, &reference)?)?;
    }
    print!("{table}");
    let degenerate = results.values().any(|r| !r.warnings.is_empty());
    Ok(if degenerate { Outcome::Partial } else { Outcome::Success })
}

pub fn augment(action: AugmentAction, g: &Globals) -> Result<Outcome> {
    let AugmentAction::Text { input, output, trace } = action;
    let text = match &input {
        Some(p) => fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s)?;
            s
        }
    };
    let aug = augment_punctuation_traced(&text, g.seed);
    match &output {
        Some(p) => fs::write(p, &aug.text)?,
        None => io::stdout().write_all(aug.text.as_bytes())?,
    }
    if let Some(p) = trace {
        write_json(&p, &aug)?;
    }
    Ok(Outcome::Success)
}

pub fn codec(action: CodecAction) -> Result<Outcome> {
    match action {
        CodecAction::Encode {
            input,
            output,
            pad,
            layers,
        } => {
            let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let mut grid = TokenGrid::read_from(BufReader::new(file)).with_context(|| format!("reading {}", input.display()))?;
            if let Some(n) = layers {
                grid = select_layers(&grid, n)?;
            }
            let delayed = apply_delay(&grid, pad.unwrap_or(grid.vocab_size()))?;
            fs::write(&output, delayed.to_bytes()).with_context(|| format!("writing {}", output.display()))?;
        }
        CodecAction::Decode { input, output } => {
            let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let delayed =
                DelayedGrid::read_from(BufReader::new(file)).with_context(|| format!("reading {}", input.display()))?;
            let grid = revert_delay(&delayed)?;
            fs::write(&output, grid.to_bytes()).with_context(|| format!("writing {}", output.display()))?;
        }
    }
    Ok(Outcome::Success)
}

fn parse_audio_ref(spec: &str) -> Result<AudioRef> {
    match spec.rsplit_once(':') {
        Some((id, dur)) if dur.parse::<f64>().is_ok() => Ok(AudioRef::new(id, dur.parse()?)),
        _ => Ok(AudioRef::new(spec, 0.0)),
    }
}

pub fn prompt(action: PromptAction) -> Result<Outcome> {
    let PromptAction::Render {
        script,
        mode,
        refs,
        prefix_transcript,
        prefix_audio,
        out,
        placeholders,
    } = action;
    let raw = fs::read_to_string(&script).with_context(|| format!("reading {}", script.display()))?;
    let parsed = DialogueScript::parse(raw.trim_end()).with_context(|| format!("parsing {}", script.display()))?;

    let mut entries = BTreeMap::new();
    for r in &refs {
        let (tag, audio) = r.split_once('=').with_context(|| format!("--ref {r:?} is not TAG=ID"))?;
        let tag: SpeakerTag = tag.parse().map_err(|e| anyhow::anyhow!("--ref {r:?}: {e}"))?;
        entries.insert(tag, parse_audio_ref(audio)?);
    }
    let refs = ReferenceSet::new(entries)?;
    let prefix = match (prefix_transcript, prefix_audio) {
        (Some(t), Some(a)) => Some(Prefix {
            transcript: fs::read_to_string(&t)
                .with_context(|| format!("reading {}", t.display()))?
                .trim_end()
                .to_string(),
            audio: parse_audio_ref(&a)?,
        }),
        (None, None) => None,
        _ => bail!("--prefix-transcript and --prefix-audio go together"),
    };

    let rendered = match mode {
        PromptMode::Common => {
            if !refs.is_empty() || prefix.is_some() {
                bail!("common mode takes neither references nor a prefix");
            }
            render_common_tts_prompt(&parsed)
        }
        m => {
            let mode = match m {
                PromptMode::VoiceClone => InferenceMode::VoiceClone,
                PromptMode::Continuation => InferenceMode::Continuation,
                _ => InferenceMode::VoiceCloneAndContinuation,
            };
            build_inference_prompt(mode, &parsed, Some(&refs), prefix.as_ref())?
        }
    };
    for w in &rendered.warnings {
        log::warn!("{w:?}");
    }
    match out {
        Some(p) => fs::write(&p, &rendered.text).with_context(|| format!("writing {}", p.display()))?,
        None => println!("{}", rendered.text),
    }
    if let Some(p) = placeholders {
        write_json(&p, &rendered.placeholders)?;
    }
    Ok(Outcome::Success)
}
