//! Subjective evaluation: rating clips, win rates and Elo ratings.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::Read;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::script::Fragment;

pub const DEFAULT_MAX_CLIP_S: f64 = 90.0;
pub const DEFAULT_BOOTSTRAP: usize = 1000;
/// L2 penalty on natural-log strengths.
pub const ELO_L2: f64 = 0.01;
pub const ELO_ANCHOR: f64 = 1000.0;
pub const ELO_SCALE: f64 = 400.0;

#[derive(Debug, Error)]
pub enum SubjectiveError {
    #[error("no judgments")]
    NoJudgments,
    #[error("need at least two systems, found {0}")]
    TooFewSystems(usize),
    #[error("judgment {0} compares a system with itself")]
    SameSystem(String),
    #[error("paired fragment lists differ: {0}")]
    FragmentMismatch(String),
    #[error("fragment {0} has no timestamps")]
    UntimedFragment(usize),
    #[error("judgment file: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Acc,
    Sim,
    Rhythm,
    Overall,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Dimension::Acc, Dimension::Sim, Dimension::Rhythm, Dimension::Overall];

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Acc => "acc",
            Dimension::Sim => "sim",
            Dimension::Rhythm => "rhythm",
            Dimension::Overall => "overall",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| format!("unknown dimension {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    AWins,
    BWins,
    Tie,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairwiseJudgment {
    pub item_id: String,
    pub system_a: String,
    pub system_b: String,
    pub dimension: Dimension,
    pub outcome: Outcome,
}

/// Reads `item_id,system_a,system_b,dimension,outcome` CSV.
pub fn read_judgments(reader: impl Read) -> Result<Vec<PairwiseJudgment>, SubjectiveError> {
    let mut out = Vec::new();
    for record in csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader).deserialize() {
        let j: PairwiseJudgment = record?;
        if j.system_a == j.system_b {
            return Err(SubjectiveError::SameSystem(j.item_id));
        }
        out.push(j);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatingFlag {
    FragmentTooLong,
}

/// A contiguous run of fragments to be rated as one clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingClip {
    pub first_fragment: usize,
    pub last_fragment: usize,
    pub start_s: f64,
    pub end_s: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<RatingFlag>,
}

impl RatingClip {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }
}

fn timed(fragments: &[Fragment]) -> Result<Vec<(f64, f64)>, SubjectiveError> {
    fragments
        .iter()
        .enumerate()
        .map(|(i, f)| match (f.start_s, f.end_s) {
            (Some(s), Some(e)) => Ok((s, e)),
            _ => Err(SubjectiveError::UntimedFragment(i)),
        })
        .collect()
}

/// Greedy packing of consecutive fragments into cut groups.
///
/// `extent(first, last)` returns the longest duration across all sides of a
/// candidate group; a group is extended while that stays within `max_s`.
fn pack(n: usize, max_s: f64, extent: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize, bool)> {
    let mut groups = Vec::new();
    let mut first = 0;
    while first < n {
        let mut last = first;
        while last + 1 < n && extent(first, last + 1) <= max_s {
            last += 1;
        }
        groups.push((first, last, extent(first, last) > max_s));
        first = last + 1;
    }
    groups
}

fn clip(times: &[(f64, f64)], first: usize, last: usize, too_long: bool) -> RatingClip {
    RatingClip {
        first_fragment: first,
        last_fragment: last,
        start_s: times[first].0,
        end_s: times[last].1,
        flags: if too_long { vec![RatingFlag::FragmentTooLong] } else { vec![] },
    }
}

/// Cuts timed fragments into clips of at most `max_clip_s`, only at fragment
/// boundaries. A single fragment longer than the limit becomes its own
/// clip flagged `FragmentTooLong`.
pub fn segment_for_rating(fragments: &[Fragment], max_clip_s: f64) -> Result<Vec<RatingClip>, SubjectiveError> {
    let times = timed(fragments)?;
    Ok(pack(times.len(), max_clip_s, |a, b| times[b].1 - times[a].0)
        .into_iter()
        .map(|(a, b, long)| clip(&times, a, b, long))
        .collect())
}

/// Like [`segment_for_rating`] for two renditions of the same script: both
/// sides are cut after the same fragments, so every clip pair covers the
/// same text, and neither side exceeds `max_clip_s`.
pub fn segment_pair_for_rating(
    a: &[Fragment],
    b: &[Fragment],
    max_clip_s: f64,
) -> Result<Vec<(RatingClip, RatingClip)>, SubjectiveError> {
    if a.len() != b.len() {
        return Err(SubjectiveError::FragmentMismatch(format!("{} vs {} fragments", a.len(), b.len())));
    }
    if let Some(i) = a.iter().zip(b).position(|(x, y)| x.text != y.text || x.gt_speaker != y.gt_speaker) {
        return Err(SubjectiveError::FragmentMismatch(format!("fragment {i} differs")));
    }
    let (ta, tb) = (timed(a)?, timed(b)?);
    let extent = |f: usize, l: usize| (ta[l].1 - ta[f].0).max(tb[l].1 - tb[f].0);
    Ok(pack(ta.len(), max_clip_s, extent)
        .into_iter()
        .map(|(f, l, _)| {
            (
                clip(&ta, f, l, ta[l].1 - ta[f].0 > max_clip_s),
                clip(&tb, f, l, tb[l].1 - tb[f].0 > max_clip_s),
            )
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WinRate {
    pub win: f64,
    pub tie: f64,
    pub lose: f64,
    pub n: usize,
}

/// Win/tie/lose rates of `reference` against every opponent, per dimension.
pub fn compute_win_rates(
    judgments: &[PairwiseJudgment],
    reference: &str,
) -> Result<BTreeMap<String, BTreeMap<Dimension, WinRate>>, SubjectiveError> {
    let mut counts: BTreeMap<String, BTreeMap<Dimension, [usize; 3]>> = BTreeMap::new();
    for j in judgments {
        let (opponent, ref_is_a) = if j.system_a == reference {
            (&j.system_b, true)
        } else if j.system_b == reference {
            (&j.system_a, false)
        } else {
            continue;
        };
        let slot = match (j.outcome, ref_is_a) {
            (Outcome::Tie, _) => 1,
            (Outcome::AWins, true) | (Outcome::BWins, false) => 0,
            _ => 2,
        };
        counts.entry(opponent.clone()).or_default().entry(j.dimension).or_default()[slot] += 1;
    }
    if counts.is_empty() {
        return Err(SubjectiveError::NoJudgments);
    }
    Ok(counts
        .into_iter()
        .map(|(opp, dims)| {
            let dims = dims
                .into_iter()
                .map(|(d, [w, t, l])| {
                    let n = w + t + l;
                    let r = |x: usize| x as f64 / n as f64;
                    (d, WinRate { win: r(w), tie: r(t), lose: r(l), n })
                })
                .collect();
            (opp, dims)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EloResult {
    pub dimension: Dimension,
    pub ratings: BTreeMap<String, f64>,
    pub ci_low: BTreeMap<String, f64>,
    pub ci_high: BTreeMap<String, f64>,
    pub n_bootstrap: usize,
    pub n_judgments: usize,
    /// Connected components of the comparison graph; ratings are only
    /// comparable within one component.
    pub components: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EloResult {
    /// Systems by descending rating.
    pub fn ranking(&self) -> Vec<(&str, f64)> {
        let mut v: Vec<(&str, f64)> = self.ratings.iter().map(|(s, r)| (s.as_str(), *r)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        v
    }
}

/// Pairwise totals: `wins[i][j]` counts i over j with ties as half-wins.
struct Tally {
    wins: DMatrix<f64>,
}

impl Tally {
    fn new(n: usize, index: &BTreeMap<&str, usize>, judgments: &[&PairwiseJudgment]) -> Self {
        let mut wins = DMatrix::zeros(n, n);
        for j in judgments {
            let (a, b) = (index[j.system_a.as_str()], index[j.system_b.as_str()]);
            match j.outcome {
                Outcome::AWins => wins[(a, b)] += 1.0,
                Outcome::BWins => wins[(b, a)] += 1.0,
                Outcome::Tie => {
                    wins[(a, b)] += 0.5;
                    wins[(b, a)] += 0.5;
                }
            }
        }
        Self { wins }
    }

    fn log_likelihood(&self, theta: &DVector<f64>) -> f64 {
        let n = theta.len();
        let mut ll = -0.5 * ELO_L2 * theta.norm_squared();
        for i in 0..n {
            for j in 0..n {
                let w = self.wins[(i, j)];
                if w > 0.0 {
                    // log sigmoid(theta_i - theta_j), computed stably
                    let d = theta[i] - theta[j];
                    ll -= w * (if d > 0.0 { (-d).exp().ln_1p() } else { -d + d.exp().ln_1p() });
                }
            }
        }
        ll
    }

    /// Regularized Bradley-Terry MLE of natural-log strengths by damped Newton.
    fn fit(&self) -> DVector<f64> {
        let n = self.wins.nrows();
        let mut theta = DVector::zeros(n);
        let mut ll = self.log_likelihood(&theta);
        for _ in 0..200 {
            let mut grad = -ELO_L2 * &theta;
            let mut neg_hess = DMatrix::from_diagonal_element(n, n, ELO_L2);
            for i in 0..n {
                for j in 0..n {
                    let games = self.wins[(i, j)] + self.wins[(j, i)];
                    if i == j || games == 0.0 {
                        continue;
                    }
                    let p = 1.0 / (1.0 + (theta[j] - theta[i]).exp());
                    grad[i] += self.wins[(i, j)] - games * p;
                    let c = games * p * (1.0 - p);
                    neg_hess[(i, i)] += c;
                    neg_hess[(i, j)] -= c;
                }
            }
            let step = neg_hess
                .cholesky()
                .expect("regularized Hessian is positive definite")
                .solve(&grad);
            let mut t = 1.0;
            let mut next = &theta + &step;
            let mut next_ll = self.log_likelihood(&next);
            let polish = step.amax() < 1e-4;
            while !polish && next_ll < ll && t > 1e-8 {
                t *= 0.5;
                next = &theta + t * &step;
                next_ll = self.log_likelihood(&next);
            }
            let moved = (t * step.amax()).abs();
            theta = next;
            ll = next_ll;
            if moved < 1e-12 {
                break;
            }
        }
        theta
    }
}

fn components(n: usize, wins: &DMatrix<f64>) -> Vec<usize> {
    let mut comp: Vec<usize> = (0..n).collect();
    fn find(comp: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while comp[r] != r {
            r = comp[r];
        }
        comp[x] = r;
        r
    }
    for i in 0..n {
        for j in 0..n {
            if wins[(i, j)] > 0.0 {
                let (a, b) = (find(&mut comp, i), find(&mut comp, j));
                comp[a.max(b)] = a.min(b);
            }
        }
    }
    (0..n).map(|i| find(&mut comp, i)).collect()
}

/// Log-strengths to Elo, centred on 1000 within each component.
fn to_elo(theta: &DVector<f64>, comp: &[usize]) -> Vec<f64> {
    let scale = ELO_SCALE / std::f64::consts::LN_10;
    let mut sums: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (i, c) in comp.iter().enumerate() {
        let e = sums.entry(*c).or_default();
        e.0 += theta[i];
        e.1 += 1;
    }
    comp.iter()
        .enumerate()
        .map(|(i, c)| {
            let (s, k) = sums[c];
            ELO_ANCHOR + scale * (theta[i] - s / k as f64)
        })
        .collect()
}

/// Linear-interpolated percentile of sorted data, `q` in `[0, 1]`.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bradley-Terry Elo ratings with bootstrap confidence intervals.
///
/// Ties count half a win for each side. Log-strengths carry an L2 penalty of
/// 0.01 so clean sweeps stay finite. Ratings are `1000 + 400 * log10` odds
/// units around each connected component's mean. CIs are the 2.5th and
/// 97.5th percentiles over `n_bootstrap` resamples of the judgments, widened
/// if needed to contain the point estimate; resample `b` uses stream `b` of
/// a ChaCha8 generator seeded with `seed`.
pub fn compute_elo(
    judgments: &[PairwiseJudgment],
    dimension: Dimension,
    n_bootstrap: usize,
    seed: u64,
) -> Result<EloResult, SubjectiveError> {
    let selected: Vec<&PairwiseJudgment> = judgments.iter().filter(|j| j.dimension == dimension).collect();
    if selected.is_empty() {
        return Err(SubjectiveError::NoJudgments);
    }
    if let Some(j) = selected.iter().find(|j| j.system_a == j.system_b) {
        return Err(SubjectiveError::SameSystem(j.item_id.clone()));
    }
    let systems: BTreeSet<&str> = selected
        .iter()
        .flat_map(|j| [j.system_a.as_str(), j.system_b.as_str()])
        .collect();
    if systems.len() < 2 {
        return Err(SubjectiveError::TooFewSystems(systems.len()));
    }
    let names: Vec<&str> = systems.into_iter().collect();
    let index: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, s)| (*s, i)).collect();
    let n = names.len();

    let tally = Tally::new(n, &index, &selected);
    let comp = components(n, &tally.wins);
    let point = to_elo(&tally.fit(), &comp);

    let samples: Vec<Vec<f64>> = (0..n_bootstrap)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let resample: Vec<&PairwiseJudgment> =
                (0..selected.len()).map(|_| selected[rng.random_range(0..selected.len())]).collect();
            to_elo(&Tally::new(n, &index, &resample).fit(), &comp)
        })
        .collect();

    let mut ratings = BTreeMap::new();
    let mut ci_low = BTreeMap::new();
    let mut ci_high = BTreeMap::new();
    for (i, name) in names.iter().enumerate() {
        let (lo, hi) = if samples.is_empty() {
            (point[i], point[i])
        } else {
            let mut col: Vec<f64> = samples.iter().map(|s| s[i]).collect();
            col.sort_by(f64::total_cmp);
            (percentile(&col, 0.025).min(point[i]), percentile(&col, 0.975).max(point[i]))
        };
        ratings.insert(name.to_string(), point[i]);
        ci_low.insert(name.to_string(), lo);
        ci_high.insert(name.to_string(), hi);
    }

    let mut groups: BTreeMap<usize, Vec<String>> = BTreeMap::new();
    for (i, c) in comp.iter().enumerate() {
        groups.entry(*c).or_default().push(names[i].to_string());
    }
    let components: Vec<Vec<String>> = groups.into_values().collect();
    let mut warnings = Vec::new();
    if components.len() > 1 {
        let msg = format!(
            "degenerate comparison graph: {} disconnected components; ratings are anchored per component",
            components.len()
        );
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(EloResult {
        dimension,
        ratings,
        ci_low,
        ci_high,
        n_bootstrap,
        n_judgments: selected.len(),
        components,
        warnings,
    })
}

/// Rank-ordered table with a CI bar per system on a shared axis.
pub fn render_elo_table(result: &EloResult) -> String {
    const BAR: usize = 32;
    let ranking = result.ranking();
    let width = ranking.iter().map(|(s, _)| s.chars().count()).max().unwrap_or(6).max(6);
    let lo = result.ci_low.values().copied().fold(f64::INFINITY, f64::min);
    let hi = result.ci_high.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let pos = |x: f64| {
        if hi > lo {
            (((x - lo) / (hi - lo)) * (BAR - 1) as f64).round() as usize
        } else {
            BAR / 2
        }
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        "{} ({} judgments, {} bootstrap resamples)",
        result.dimension, result.n_judgments, result.n_bootstrap
    );
    let _ = writeln!(out, "{:>4}  {:<width$}  {:>8}  {:>21}", "rank", "system", "elo", "95% ci");
    for (rank, (system, rating)) in ranking.iter().enumerate() {
        let (l, h) = (result.ci_low[*system], result.ci_high[*system]);
        let mut bar = vec![' '; BAR];
        for c in bar.iter_mut().take(pos(h) + 1).skip(pos(l)) {
            *c = '-';
        }
        bar[pos(l)] = '|';
        bar[pos(h)] = '|';
        bar[pos(*rating)] = '*';
        let _ = writeln!(
            out,
            "{:>4}  {:<width$}  {:>8.1}  [{:>8.1}, {:>8.1}]  {}",
            rank + 1,
            system,
            rating,
            l,
            h,
            bar.into_iter().collect::<String>().trim_end()
        );
    }
    for w in &result.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
