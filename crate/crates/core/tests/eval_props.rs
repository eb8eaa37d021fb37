use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use proptest::prelude::*;
use ttsd_core::adapters::*;
use ttsd_core::script::{DialogueScript, SpeakerTag};
use ttsd_core::ttsd_eval::*;

fn tag(k: u8) -> SpeakerTag {
    SpeakerTag::new(k).unwrap()
}

fn prompts(vs: Vec<Vec<f64>>) -> BTreeMap<SpeakerTag, Vec<f64>> {
    vs.into_iter().enumerate().map(|(i, v)| (tag(i as u8 + 1), v)).collect()
}

fn vectors(n: usize, dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), n)
}

/// Writes a dialogue whose fragment `i` is voiced by `voices[i]`; speaker `Sk` has voice `k - 1`.
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
    let audio = MockAudio { duration_s: t, words, ..Default::default() };
    let gen = dir.join(format!("{id}.json"));
    std::fs::write(&gen, serde_json::to_vec(&audio).unwrap()).unwrap();
    let script = DialogueScript::parse(raw.trim_end()).unwrap().with_language("en");
    let prompt_audio = script
        .speakers()
        .into_iter()
        .map(|s| {
            let p = dir.join(format!("{id}_{s}.json"));
            let a = MockAudio { duration_s: 5.0, voice: Some(s.ordinal()), ..Default::default() };
            std::fs::write(&p, serde_json::to_vec(&a).unwrap()).unwrap();
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

fn mock(sigma: f64) -> AdapterSet {
    AdapterSet::uniform(Arc::new(MockBackend::new(MockConfig { sigma, dim: 8, seed: 3 })))
}

proptest! {
    #[test]
    fn attribution_survives_monotone_transforms(frag in prop::collection::vec(-1.0f64..1.0, 6), ps in vectors(4, 6)) {
        let p = prompts(ps);
        let expected = attribute_speaker(&frag, &p);
        let transformed = p
            .iter()
            .map(|(t, v)| (*t, (3.0 * cosine(&frag, v)).exp() + 7.0))
            .fold(None, |best: Option<(SpeakerTag, f64)>, (t, s)| match best {
                Some((_, b)) if b >= s => best,
                _ => Some((t, s)),
            })
            .map(|(t, _)| t);
        prop_assert_eq!(expected, transformed);
    }

    #[test]
    fn sim_ignores_positive_rescaling(frags in vectors(5, 4), ps in vectors(2, 4), scales in prop::collection::vec(0.01f64..100.0, 7)) {
        let p = prompts(ps);
        let labeled: Vec<(SpeakerTag, Vec<f64>)> = frags.iter().enumerate().map(|(i, v)| (tag(1 + (i % 2) as u8), v.clone())).collect();
        let base = compute_sim(&labeled, &p).unwrap();
        let scaled_frags: Vec<(SpeakerTag, Vec<f64>)> = labeled
            .iter()
            .zip(&scales)
            .map(|((t, v), s)| (*t, v.iter().map(|x| x * s).collect()))
            .collect();
        let scaled_prompts = p.iter().zip(&scales[5..]).map(|((t, v), s)| (*t, v.iter().map(|x| x * s).collect())).collect();
        let scaled = compute_sim(&scaled_frags, &scaled_prompts).unwrap();
        prop_assert!((base - scaled).abs() < 1e-9);
    }

    #[test]
    fn wer_identity_and_symmetry(a in "[a-e ]{1,40}", b in "[a-e ]{1,40}") {
        prop_assume!(!a.trim().is_empty());
        prop_assert_eq!(compute_wer(&a, &a, "en").unwrap(), 0.0);
        prop_assert_eq!(compute_wer(&a, &a, "zh").unwrap(), 0.0);
        let (x, y): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
        prop_assert_eq!(edit_distance(&x, &y), edit_distance(&y, &x));
    }
}

#[test]
fn replayed_reports_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cases = vec![
        write_case(dir.path(), "a", &[1, 2, 1, 2], &[0, 1, 0, 1]),
        write_case(dir.path(), "b", &[1, 2, 3], &[0, 2, 2]),
    ];
    let store = || ReplayStore::new(dir.path().join("replay")).with_path_root(dir.path());
    let live = run_eval(&cases, &mock(0.3).recording(store())).unwrap();
    let replay = AdapterSet::uniform(Arc::new(ReplayBackend::new(store())));
    let first = serde_json::to_vec(&run_eval(&cases, &replay).unwrap()).unwrap();
    let second = serde_json::to_vec(&run_eval(&cases, &replay).unwrap()).unwrap();
    assert_eq!(first, second);
    assert_eq!(first, serde_json::to_vec(&live).unwrap());
}

#[test]
fn clean_mock_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let cases = vec![write_case(dir.path(), "a", &[1, 2, 1, 3, 2], &[0, 1, 0, 2, 1])];
    let report = run_eval(&cases, &mock(0.0)).unwrap();
    assert_eq!(report.acc, Some(1.0));
    assert_eq!(report.sim, Some(1.0));
    assert_eq!(report.wer, Some(0.0));
}

#[test]
fn missing_prompt_fails_before_scoring() {
    let dir = tempfile::tempdir().unwrap();
    let mut case = write_case(dir.path(), "a", &[1, 2], &[0, 1]);
    case.prompt_audio.remove(&tag(2));
    let err = run_eval(&[case], &AdapterSet::new()).unwrap_err();
    assert!(matches!(err, EvalError::MissingReference { speaker, .. } if speaker == tag(2)));
}
