//! Acceptance checks, one line per criterion. Exits non-zero if any fails.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttsd_core::adapters::{AdapterSet, MockAudio, MockBackend, MockConfig, MockWord, Span};
use ttsd_core::corpus_pipeline::*;
use ttsd_core::delay_codec::*;
use ttsd_core::prompting::*;
use ttsd_core::script::*;
use ttsd_core::subjective::*;
use ttsd_core::ttsd_eval::*;

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn codec_roundtrip() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tokens = 0usize;
    for i in 0..10_000 {
        let k = rng.random_range(1..=16);
        let t = rng.random_range(0..=1024);
        let v: u32 = rng.random_range(1..=4096);
        let values: Vec<u32> = (0..k * t).map(|_| rng.random_range(0..v)).collect();
        tokens += values.len();
        let grid = TokenGrid::new(k, t, v, DEFAULT_FRAME_RATE_HZ, values).map_err(|e| e.to_string())?;
        let pad = v + rng.random_range(0..4);
        let delayed = apply_delay(&grid, pad).map_err(|e| e.to_string())?;
        ensure!(delayed.width() == t + k - 1, "grid {i}: width {} for K={k} T={t}", delayed.width());
        let pads = delayed.values().iter().filter(|&&x| x == pad).count();
        ensure!(pads == k * (k - 1) && delayed.pad_count() == pads, "grid {i}: {pads} pads for K={k}");
        ensure!(revert_delay(&delayed).map_err(|e| e.to_string())? == grid, "grid {i}: roundtrip differs");
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.2} s");
    Ok(format!("10000 grids, {tokens} tokens, {secs:.2} s"))
}

fn bitrate() -> Check {
    let b = frame_accounting(45_000, 16, 1024, 12.5);
    ensure!(b.bits_per_second == 2000.0, "bitrate {}", b.bits_per_second);
    ensure!(b.duration_s == 3600.0, "duration {}", b.duration_s);
    let d = frame_accounting(45_000, DEFAULT_LAYERS as u64, DEFAULT_VOCAB_SIZE as u64, DEFAULT_FRAME_RATE_HZ);
    ensure!(d == b, "defaults differ: {d:?}");
    Ok("16 x 12.5 Hz x 10 bit = 2000 bit/s; 45000 frames = 3600 s".into())
}

fn clip_meta(dnsmos: f64, rate: u32, speakers: u8, duration_s: f64) -> AudioClipMeta {
    let words = (duration_s * 0.8).ceil() as usize;
    AudioClipMeta {
        clip_id: "c".into(),
        recording_id: "r".into(),
        spans: vec![Span::new(0.0, duration_s)],
        duration_s,
        speaker_count: speakers,
        speakers: (0..speakers).map(|i| format!("spk{i}")).collect(),
        dnsmos: Some(dnsmos),
        language: Some("en".into()),
        true_sample_rate_hz: Some(rate),
        domain_tag: DomainTag::Podcast,
        transcript: Some(format!("[S1]{}", (0..words).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" "))),
        audio_path: None,
        flags: vec![],
    }
}

fn pipeline_gates() -> Check {
    let one = StageConfig::for_stage(Stage::One);
    let two = StageConfig::for_stage(Stage::Two);
    let cases: [(&str, &StageConfig, AudioClipMeta, Option<RejectReason>); 10] = [
        ("dnsmos 2.79 stage 1", &one, clip_meta(2.79, 48_000, 2, 60.0), Some(RejectReason::Dnsmos)),
        ("dnsmos 2.80 stage 1", &one, clip_meta(2.80, 48_000, 2, 60.0), None),
        ("dnsmos 3.39 stage 2", &two, clip_meta(3.39, 48_000, 2, 60.0), Some(RejectReason::Dnsmos)),
        ("dnsmos 3.40 stage 2", &two, clip_meta(3.40, 48_000, 2, 60.0), None),
        ("23999 Hz stage 2", &two, clip_meta(3.5, 23_999, 2, 60.0), Some(RejectReason::SampleRate)),
        ("24000 Hz stage 2", &two, clip_meta(3.5, 24_000, 2, 60.0), None),
        ("3600 s", &one, clip_meta(3.5, 48_000, 2, 3600.0), None),
        ("3600 s + eps", &one, clip_meta(3.5, 48_000, 2, 3600.0 + 1e-6), Some(RejectReason::DurationExceeded)),
        ("5 speakers", &one, clip_meta(3.5, 48_000, 5, 60.0), None),
        ("6 speakers", &one, clip_meta(3.5, 48_000, 6, 60.0), Some(RejectReason::TooManySpeakers)),
    ];
    for (name, stage, meta, expected) in &cases {
        let d = filter_clip(meta, stage, "en");
        ensure!(d.reject_reason == *expected && d.keep == expected.is_none(), "{name}: got {d:?}");
    }
    for (n, rejected) in [(5, false), (6, true)] {
        let segs: Vec<DiarizationSegment> = (0..n)
            .map(|i| DiarizationSegment {
                recording_id: "r".into(),
                speaker_label: format!("p{i}"),
                start_s: i as f64 * 3.0,
                end_s: i as f64 * 3.0 + 2.5,
                audio_path: None,
                domain_tag: None,
            })
            .collect();
        let out = merge_segments(&segs, &MergeConfig::default()).map_err(|e| e.to_string())?;
        ensure!(out.rejected.is_empty() != rejected, "merge with {n} speakers: {out:?}");
    }
    let long = [DiarizationSegment {
        recording_id: "r".into(),
        speaker_label: "a".into(),
        start_s: 0.0,
        end_s: 9000.0,
        audio_path: None,
        domain_tag: None,
    }];
    let out = merge_segments(&long, &MergeConfig::default()).map_err(|e| e.to_string())?;
    ensure!(out.clips.iter().all(|c| c.duration_s <= MAX_CLIP_DURATION_S), "merge emitted an over-long clip");
    Ok(format!("{} boundary pairs flip exactly at the thresholds", cases.len() / 2))
}

fn groups(rng: &mut ChaCha8Rng, n: usize, rate: u32) -> Vec<SpeakerGroup> {
    (0..n)
        .map(|g| SpeakerGroup {
            group_id: format!("g{g}"),
            clips: (0..rng.random_range(2..5))
                .map(|c| {
                    let mut m = clip_meta(rng.random_range(3.4..5.0), rate, 1, rng.random_range(2.0..20.0));
                    m.clip_id = format!("g{g}c{c}");
                    m.recording_id = format!("rec{g}");
                    m.transcript = Some(format!("line {g} {c}"));
                    m
                })
                .collect(),
        })
        .collect()
}

fn synthetic() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let trials = 500;
    for trial in 0..trials {
        let n = rng.random_range(3..=5);
        let rate = [16_000, 24_000, 44_100, 48_000][rng.random_range(0..4)];
        let clean = groups(&mut rng, n, rate);
        ensure!(build_synthetic_multispeaker(&clean, n, trial).is_ok(), "trial {trial}: clean input rejected");

        let mut mixed = clean.clone();
        let g = rng.random_range(0..n);
        let c = rng.random_range(0..mixed[g].clips.len());
        mixed[g].clips[c].true_sample_rate_hz = Some(rate + rng.random_range(1..8000));
        ensure!(
            matches!(build_synthetic_multispeaker(&mixed, n, trial), Err(SyntheticError::SampleRateMismatch { .. })),
            "trial {trial}: mixed rates accepted"
        );

        let mut noisy = clean.clone();
        noisy[g].clips[c].dnsmos = Some(rng.random_range(1.0..3.4));
        ensure!(
            matches!(build_synthetic_multispeaker(&noisy, n, trial), Err(SyntheticError::QualityBelowThreshold { .. })),
            "trial {trial}: low-quality clip accepted"
        );
    }
    let base = groups(&mut rng, 5, 24_000);
    let reference = serde_json::to_vec(&build_synthetic_multispeaker(&base, 5, 42).map_err(|e| e.to_string())?).unwrap();
    let pool: Vec<AudioClipMeta> = base.iter().flat_map(|g| g.clips.clone()).collect();
    let planned = plan_synthetic_samples(&pool, 42, 10);
    ensure!(!planned.is_empty(), "pool of {} clips planned nothing", pool.len());
    let pool_ref = serde_json::to_vec(&planned).unwrap();
    for run in 0..100 {
        let again = serde_json::to_vec(&build_synthetic_multispeaker(&base, 5, 42).unwrap()).unwrap();
        ensure!(again == reference, "run {run}: interleaving plan differs");
        ensure!(serde_json::to_vec(&plan_synthetic_samples(&pool, 42, 10)).unwrap() == pool_ref, "run {run}: pool plan differs");
    }
    Ok(format!("{trials} mixed-rate and {trials} low-DNSMOS inputs rejected; 100 identical runs"))
}

fn augmentation() -> Check {
    let unit = "Hello, world. 你好，世界。 ok? yes! a;b: [laugh] x，y。\n";
    let text = unit.repeat(40_000);
    let a = augment_punctuation_traced(&text, 11);
    let (nc, np) = (a.commas_seen as f64, a.periods_seen as f64);
    ensure!(nc >= 1e5 && np >= 1e5, "only {nc} commas and {np} periods");
    let band = |p: f64, n: f64, k: usize| {
        let rate = k as f64 / n;
        let sigma = (p * (1.0 - p) / n).sqrt();
        ((rate - p).abs() <= 3.0 * sigma, rate, sigma)
    };
    let (ok_c, rc, sc) = band(COMMA_REPLACE_PROB, nc, a.commas_replaced());
    let (ok_p, rp, sp) = band(PERIOD_REPLACE_PROB, np, a.periods_replaced());
    ensure!(ok_c, "comma rate {rc:.5} outside 0.10 +- 3 x {sc:.5}");
    ensure!(ok_p, "period rate {rp:.5} outside 0.05 +- 3 x {sp:.5}");

    let mut rebuilt = String::with_capacity(text.len());
    let mut src = 0;
    let mut out = 0;
    for e in &a.edits {
        let set = if matches!(e.original, ',' | '，') { COMMA_REPLACEMENTS } else { PERIOD_REPLACEMENTS };
        ensure!(matches!(e.original, ',' | '，' | '.' | '。'), "edited {:?}", e.original);
        ensure!(set.contains(&e.replacement), "replacement {:?} not listed", e.replacement);
        let keep = e.offset - src;
        ensure!(a.text[out..out + keep] == text[src..e.offset], "text changed before offset {}", e.offset);
        rebuilt.push_str(&text[src..e.offset]);
        rebuilt.push(e.original);
        out += keep + e.replacement.len();
        src = e.offset + e.original.len_utf8();
    }
    ensure!(a.text[out..] == text[src..], "text changed after last edit");
    rebuilt.push_str(&text[src..]);
    ensure!(rebuilt == text, "undoing the edits does not restore the input");
    Ok(format!("comma {rc:.4} (sd {sc:.4}), period {rp:.4} (sd {sp:.4}) over {nc} / {np}"))
}

fn templates() -> Check {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/templates");
    for n in [1u8, 2, 5] {
        let raw: String = (1..=n).map(|k| format!("[S{k}]{{text_{k}}}")).collect();
        let script = DialogueScript::parse(&raw).map_err(|e| e.to_string())?;
        let refs = ReferenceSet::new(
            (1..=n)
                .map(|k| (SpeakerTag::new(k).unwrap(), AudioRef::new(format!("spk{k}.wav"), 4.0)))
                .collect(),
        )
        .map_err(|e| e.to_string())?;
        let vc = render_voice_clone_prompt(&script, &refs).map_err(|e| e.to_string())?;
        let golden = fs::read_to_string(dir.join(format!("voice_clone_n{n}.txt"))).map_err(|e| e.to_string())?;
        ensure!(vc.text == golden, "voice clone n={n}:\n{}\n---\n{golden}", vc.text);
        let common = render_common_tts_prompt(&script);
        let golden = fs::read_to_string(dir.join(format!("common_tts_n{n}.txt"))).map_err(|e| e.to_string())?;
        ensure!(common.text == golden, "common n={n}:\n{}\n---\n{golden}", common.text);
    }
    Ok("6 golden files byte-equal".into())
}

/// Dialogue where fragment `i` is spoken by `speakers[i]` but voiced by `voices[i]`; `Sk` owns voice `k - 1`.
fn write_case(dir: &Path, id: &str, speakers: &[u8], voices: &[usize]) -> EvalCase {
    let mut raw = String::new();
    let mut words = Vec::new();
    let mut t = 0.2;
    for (i, (&s, &v)) in speakers.iter().zip(voices).enumerate() {
        let frag: Vec<String> = (0..3).map(|j| format!("f{i}w{j}")).collect();
        raw.push_str(&format!("[S{s}]{}. ", frag.join(" ")));
        for w in frag {
            words.push(MockWord { word: w, start_s: t, end_s: t + 0.35, voice: Some(v), aligned: true });
            t += 0.4;
        }
        t += 0.3;
    }
    let gen = dir.join(format!("{id}.json"));
    fs::write(&gen, serde_json::to_vec(&MockAudio { duration_s: t, words, ..Default::default() }).unwrap()).unwrap();
    let script = DialogueScript::parse(raw.trim_end()).unwrap().with_language("en");
    let prompt_audio = script
        .speakers()
        .into_iter()
        .map(|s| {
            let p = dir.join(format!("{id}_{s}.json"));
            let a = MockAudio { duration_s: 5.0, voice: Some(s.ordinal()), ..Default::default() };
            fs::write(&p, serde_json::to_vec(&a).unwrap()).unwrap();
            (s, p.to_string_lossy().into_owned())
        })
        .collect();
    EvalCase {
        case_id: id.into(),
        script,
        generated_audio: gen.to_string_lossy().into_owned(),
        prompt_audio,
        language: "en".into(),
    }
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn eval_oracles() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let clean = AdapterSet::uniform(Arc::new(MockBackend::new(MockConfig { sigma: 0.0, dim: 8, seed: 0 })));
    let mut flip_cases = 0;
    for trial in 0..40 {
        let n_spk = rng.random_range(2..=5u8);
        let n = rng.random_range(n_spk as usize..=16);
        let mut speakers: Vec<u8> = (1..=n_spk).collect();
        speakers.extend((n_spk as usize..n).map(|_| rng.random_range(1..=n_spk)));
        let truth: Vec<usize> = speakers.iter().map(|s| *s as usize - 1).collect();
        let id = format!("t{trial}");
        let case = write_case(dir.path(), &id, &speakers, &truth);
        let r = run_eval(std::slice::from_ref(&case), &clean).map_err(|e| e.to_string())?;
        ensure!(r.acc == Some(1.0) && r.sim == Some(1.0), "{id}: sigma 0 gave acc {:?} sim {:?}", r.acc, r.sim);

        let k = rng.random_range(0..=n);
        let mut order: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = rng.random_range(i..n);
            order.swap(i, j);
        }
        let mut voices = truth.clone();
        for &i in &order[..k] {
            voices[i] = (truth[i] + rng.random_range(1..n_spk as usize)) % n_spk as usize;
        }
        let case = write_case(dir.path(), &format!("{id}_flip"), &speakers, &voices);
        let r = run_eval(&[case], &clean).map_err(|e| e.to_string())?;
        let expected = (n - k) as f64 / n as f64;
        ensure!(r.acc == Some(expected), "{id}: {k} of {n} flipped gave acc {:?}, expected {expected}", r.acc);
        flip_cases += 1;
    }

    for i in 0..10_000 {
        let dim = rng.random_range(1..10);
        let n = rng.random_range(1..=5u8);
        let frag: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut prompts: BTreeMap<SpeakerTag, Vec<f64>> = BTreeMap::new();
        for k in 1..=n {
            let v = if k > 1 && rng.random_bool(0.2) {
                prompts[&SpeakerTag::new(rng.random_range(1..k)).unwrap()].clone()
            } else {
                (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            prompts.insert(SpeakerTag::new(k).unwrap(), v);
        }
        let scores: Vec<(SpeakerTag, f64)> = prompts.iter().map(|(t, p)| (*t, oracle_cosine(&frag, p))).collect();
        let best = scores.iter().map(|(_, s)| *s).fold(f64::NEG_INFINITY, f64::max);
        let oracle = scores.iter().find(|(_, s)| *s == best).map(|(t, _)| *t);
        ensure!(attribute_speaker(&frag, &prompts) == oracle, "instance {i}: disagrees with oracle");
    }
    Ok(format!("sigma 0 perfect; {flip_cases} flip cases exact; 10000 attributions match"))
}

fn oracle_edits(r: &[String], h: &[String]) -> usize {
    let mut d = vec![vec![0usize; h.len() + 1]; r.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    d[0] = (0..=h.len()).collect();
    for i in 1..=r.len() {
        for j in 1..=h.len() {
            let sub = d[i - 1][j - 1] + usize::from(r[i - 1] != h[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[r.len()][h.len()]
}

fn wer() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let en = ["the", "cat", "sat", "on", "a", "mat", "and", "dog"];
    let zh = ["你", "好", "世", "界", "我", "们", "是", "的"];
    for i in 0..1000 {
        for (vocab, sep, lang) in [(&en, " ", "en"), (&zh, "", "zh")] {
            let mut draw = |min: usize| -> Vec<String> {
                (0..rng.random_range(min..20)).map(|_| vocab[rng.random_range(0..vocab.len())].to_string()).collect()
            };
            let (r, h) = (draw(1), draw(0));
            let expected = oracle_edits(&r, &h) as f64 / r.len() as f64;
            let got = compute_wer(&r.join(sep), &h.join(sep), lang).map_err(|e| e.to_string())?;
            ensure!(got == expected, "pair {i} ({lang}): {got} vs oracle {expected}");
        }
    }
    let exact = [
        ("the cat sat", "the cat sat", "en", 0.0),
        ("你好世界", "你好世界", "zh", 0.0),
        ("good day", "good night", "en", 0.5),
        ("你好", "你们", "zh", 0.5),
    ];
    for (r, h, lang, want) in exact {
        let got = compute_wer(r, h, lang).map_err(|e| e.to_string())?;
        ensure!(got == want, "{r:?} vs {h:?}: {got}");
    }
    Ok("2000 random pairs match the DP oracle; identity 0, one substitution in two 0.5".into())
}

fn judgment(i: usize, a: &str, b: &str, outcome: Outcome) -> PairwiseJudgment {
    PairwiseJudgment {
        item_id: format!("i{i}"),
        system_a: a.into(),
        system_b: b.into(),
        dimension: Dimension::Overall,
        outcome,
    }
}

fn elo() -> Check {
    let target = 400.0 * 3f64.log10();
    let js: Vec<PairwiseJudgment> = (0..400)
        .map(|i| judgment(i, "a", "b", if i % 4 == 3 { Outcome::BWins } else { Outcome::AWins }))
        .collect();
    let r = compute_elo(&js, Dimension::Overall, DEFAULT_BOOTSTRAP, 9).map_err(|e| e.to_string())?;
    let gap = r.ratings["a"] - r.ratings["b"];
    let (lo, hi) = (2.0 * (r.ci_low["a"] - ELO_ANCHOR), 2.0 * (r.ci_high["a"] - ELO_ANCHOR));
    ensure!(lo <= target && target <= hi, "gap CI [{lo:.1}, {hi:.1}] misses {target:.1}");

    let mut sym = Vec::new();
    for i in 0..30 {
        for (x, y) in [("a", "b"), ("b", "c"), ("c", "a")] {
            sym.push(judgment(i, x, y, Outcome::AWins));
            sym.push(judgment(i, y, x, Outcome::AWins));
        }
        sym.push(judgment(i, "a", "c", Outcome::Tie));
    }
    let s = compute_elo(&sym, Dimension::Overall, 0, 0).map_err(|e| e.to_string())?;
    ensure!(
        s.ratings.values().all(|v| (v - ELO_ANCHOR).abs() < 1e-9),
        "symmetric ratings {:?}",
        s.ratings
    );

    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let once = pool(1).install(|| compute_elo(&js, Dimension::Overall, 500, 77)).map_err(|e| e.to_string())?;
    let again = pool(4).install(|| compute_elo(&js, Dimension::Overall, 500, 77)).map_err(|e| e.to_string())?;
    ensure!(once == again, "seeded CIs differ across runs");
    Ok(format!("gap {gap:.1}, CI [{lo:.1}, {hi:.1}] contains {target:.1}; symmetric equal; seeded CIs identical"))
}

fn clipping() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut flagged = 0;
    let mut clips_seen = 0;
    for trial in 0..2000 {
        let n = rng.random_range(1..60);
        let make = |rng: &mut ChaCha8Rng| {
            let mut t = 0.0;
            (0..n)
                .map(|i| {
                    let d = if rng.random_bool(0.05) { rng.random_range(90.0..200.0) } else { rng.random_range(0.3..30.0) };
                    let f = Fragment {
                        text: format!("f{i}"),
                        turn_index: i,
                        gt_speaker: SpeakerTag::new(1).unwrap(),
                        start_s: Some(t),
                        end_s: Some(t + d),
                    };
                    t += d + rng.random_range(0.0..2.0);
                    f
                })
                .collect::<Vec<_>>()
        };
        let (a, b) = (make(&mut rng), make(&mut rng));
        let check = |clips: &[&RatingClip], frags: &[Fragment]| -> Result<usize, String> {
            let mut next = 0;
            let mut flags = 0;
            for c in clips {
                ensure!(c.first_fragment == next, "trial {trial}: gap before fragment {}", c.first_fragment);
                ensure!(
                    c.start_s == frags[c.first_fragment].start_s.unwrap() && c.end_s == frags[c.last_fragment].end_s.unwrap(),
                    "trial {trial}: cut inside a fragment"
                );
                if c.duration_s() > DEFAULT_MAX_CLIP_S {
                    ensure!(c.first_fragment == c.last_fragment, "trial {trial}: {:.1} s multi-fragment clip", c.duration_s());
                    ensure!(c.flags.contains(&RatingFlag::FragmentTooLong), "trial {trial}: oversized clip not flagged");
                    flags += 1;
                } else {
                    ensure!(c.flags.is_empty(), "trial {trial}: spurious flag");
                }
                next = c.last_fragment + 1;
            }
            ensure!(next == frags.len(), "trial {trial}: fragments left over");
            Ok(flags)
        };
        let single = segment_for_rating(&a, DEFAULT_MAX_CLIP_S).map_err(|e| e.to_string())?;
        flagged += check(&single.iter().collect::<Vec<_>>(), &a)?;
        clips_seen += single.len();
        let b: Vec<Fragment> = b.into_iter().zip(&a).map(|(mut f, x)| { f.text = x.text.clone(); f }).collect();
        let pairs = segment_pair_for_rating(&a, &b, DEFAULT_MAX_CLIP_S).map_err(|e| e.to_string())?;
        check(&pairs.iter().map(|p| &p.0).collect::<Vec<_>>(), &a)?;
        check(&pairs.iter().map(|p| &p.1).collect::<Vec<_>>(), &b)?;
    }
    Ok(format!("{clips_seen} clips, {flagged} flagged single-fragment overruns"))
}

fn replay_fixture() -> Check {
    let fixture = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/eval");
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in 0..3 {
        let out = work.path().join(format!("run{run}"));
        let o = Command::new(env!("CARGO_BIN_EXE_ttsd"))
            .args(["eval", "run", "--manifest"])
            .arg(fixture.join("manifest.jsonl"))
            .arg("--replay")
            .arg(fixture.join("replay"))
            .arg("--out")
            .arg(&out)
            .env_clear()
            .current_dir(work.path())
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(o.status.code() == Some(0), "run {run} exited {:?}: {}", o.status, String::from_utf8_lossy(&o.stderr));
        let json = fs::read(out.join("report.json")).map_err(|e| e.to_string())?;
        let txt = fs::read(out.join("report.txt")).map_err(|e| e.to_string())?;
        outputs.push((json, txt, o.stdout));
    }
    ensure!(outputs.windows(2).all(|w| w[0] == w[1]), "reports differ between runs");
    let report: serde_json::Value = serde_json::from_slice(&outputs[0].0).unwrap();
    let cases = report["per_case"].as_array().map_or(0, Vec::len);
    ensure!(cases == 5, "{cases} cases in report");
    Ok(format!("3 runs, {} + {} bytes identical", outputs[0].0.len(), outputs[0].1.len()))
}

fn main() {
    let checks: [Criterion; 11] = [
        ("delay codec roundtrip", codec_roundtrip),
        ("bitrate identity", bitrate),
        ("pipeline gates", pipeline_gates),
        ("synthetic construction", synthetic),
        ("augmentation statistics", augmentation),
        ("templates", templates),
        ("ttsd-eval oracle equivalence", eval_oracles),
        ("wer", wer),
        ("elo", elo),
        ("90 s clipping", clipping),
        ("end-to-end replay", replay_fixture),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
