use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ttsd_core::script::{Fragment, SpeakerTag};
use ttsd_core::subjective::*;

fn judgment(i: usize, a: &str, b: &str, outcome: Outcome) -> PairwiseJudgment {
    PairwiseJudgment {
        item_id: format!("i{i}"),
        system_a: a.into(),
        system_b: b.into(),
        dimension: Dimension::Overall,
        outcome,
    }
}

fn judgments(n_systems: usize) -> impl Strategy<Value = Vec<PairwiseJudgment>> {
    prop::collection::vec((0..n_systems, 1..n_systems, 0u8..3), 1..60).prop_map(move |raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (a, off, o))| {
                let b = (a + off) % n_systems;
                let outcome = [Outcome::AWins, Outcome::BWins, Outcome::Tie][o as usize];
                judgment(i, &format!("sys{a}"), &format!("sys{b}"), outcome)
            })
            .collect()
    })
}

fn fragments(durations: &[f64]) -> Vec<Fragment> {
    let mut t = 0.0;
    durations
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let f = Fragment {
                text: format!("f{i}"),
                turn_index: i,
                gt_speaker: SpeakerTag::new(1 + (i % 2) as u8).unwrap(),
                start_s: Some(t),
                end_s: Some(t + d),
            };
            t += d + 0.2;
            f
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ratings_anchored_per_component(js in judgments(4)) {
        let r = compute_elo(&js, Dimension::Overall, 0, 1).unwrap();
        for comp in &r.components {
            let mean = comp.iter().map(|s| r.ratings[s]).sum::<f64>() / comp.len() as f64;
            prop_assert!((mean - ELO_ANCHOR).abs() < 1e-6);
        }
    }

    #[test]
    fn relabeling_permutes_ratings(js in judgments(4)) {
        let rename = |s: &str| format!("z{}", 9 - s[3..].parse::<u32>().unwrap());
        let relabeled: Vec<PairwiseJudgment> = js
            .iter()
            .map(|j| PairwiseJudgment { system_a: rename(&j.system_a), system_b: rename(&j.system_b), ..j.clone() })
            .collect();
        let a = compute_elo(&js, Dimension::Overall, 0, 1).unwrap();
        let b = compute_elo(&relabeled, Dimension::Overall, 0, 1).unwrap();
        for (s, r) in &a.ratings {
            prop_assert!((b.ratings[&rename(s)] - r).abs() < 1e-6, "{} {} vs {}", s, r, b.ratings[&rename(s)]);
        }
    }

    #[test]
    fn win_rates_ignore_order(js in judgments(3), seed in any::<u64>()) {
        let mut shuffled = js.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        match compute_win_rates(&js, "sys0") {
            Ok(rates) => prop_assert_eq!(rates, compute_win_rates(&shuffled, "sys0").unwrap()),
            Err(_) => prop_assert!(compute_win_rates(&shuffled, "sys0").is_err()),
        }
    }

    #[test]
    fn ci_contains_point(js in judgments(3), seed in any::<u64>()) {
        let r = compute_elo(&js, Dimension::Overall, 50, seed).unwrap();
        for (s, x) in &r.ratings {
            prop_assert!(r.ci_low[s] <= *x && *x <= r.ci_high[s]);
        }
    }

    #[test]
    fn rating_clips_cut_at_boundaries(durs in prop::collection::vec(0.5f64..120.0, 1..40)) {
        let frags = fragments(&durs);
        let clips = segment_for_rating(&frags, DEFAULT_MAX_CLIP_S).unwrap();
        let mut next = 0;
        for c in &clips {
            prop_assert_eq!(c.first_fragment, next);
            prop_assert!(c.last_fragment >= c.first_fragment);
            prop_assert_eq!(c.start_s, frags[c.first_fragment].start_s.unwrap());
            prop_assert_eq!(c.end_s, frags[c.last_fragment].end_s.unwrap());
            if c.duration_s() > DEFAULT_MAX_CLIP_S {
                prop_assert_eq!(c.first_fragment, c.last_fragment);
                prop_assert!(c.flags.contains(&RatingFlag::FragmentTooLong));
            } else {
                prop_assert!(c.flags.is_empty());
            }
            next = c.last_fragment + 1;
        }
        prop_assert_eq!(next, frags.len());
    }
}

fn mean_ci_width(n: usize, seeds: std::ops::Range<u64>) -> f64 {
    let mut total = 0.0;
    for seed in seeds.clone() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut js = Vec::new();
        for i in 0..n {
            let mut pair = ["a", "b", "c"];
            pair.shuffle(&mut rng);
            let outcome = [Outcome::AWins, Outcome::BWins, Outcome::Tie][i % 3];
            js.push(judgment(i, pair[0], pair[1], outcome));
        }
        let r = compute_elo(&js, Dimension::Overall, 200, seed).unwrap();
        total += r.ratings.keys().map(|s| r.ci_high[s] - r.ci_low[s]).sum::<f64>();
    }
    total / seeds.count() as f64
}

#[test]
fn intervals_shrink_with_more_judgments() {
    let small = mean_ci_width(30, 0..8);
    let large = mean_ci_width(300, 0..8);
    assert!(large < small, "{large} vs {small}");
}

#[test]
fn symmetric_records_tie() {
    let mut js = Vec::new();
    for i in 0..10 {
        js.push(judgment(i, "a", "b", Outcome::AWins));
        js.push(judgment(i, "b", "a", Outcome::AWins));
        js.push(judgment(i, "a", "b", Outcome::Tie));
    }
    let r = compute_elo(&js, Dimension::Overall, 0, 0).unwrap();
    assert!((r.ratings["a"] - r.ratings["b"]).abs() < 1e-9);
}

#[test]
fn disconnected_graph_warns() {
    let js = vec![
        judgment(0, "a", "b", Outcome::AWins),
        judgment(1, "c", "d", Outcome::BWins),
    ];
    let r = compute_elo(&js, Dimension::Overall, 10, 0).unwrap();
    assert_eq!(r.components.len(), 2);
    assert_eq!(r.warnings.len(), 1);
}
