//! Rater quality assurance: quadratic weighted kappa, intra- and inter-rater
//! consistency on control questions, and two-step rater selection.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::RaterRecord;

pub const CONTROL_COUNT: usize = 15;
pub const REPEATED_COUNT: usize = 5;
/// Control-set file name at a dataset root.
pub const CONTROLS_FILE: &str = "controls.json";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QaError {
    #[error("score {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("sequences differ in length ({0} vs {1}) or are empty")]
    LengthMismatch(usize, usize),
    #[error("bin {bin} is outside [0, {max}]")]
    BinOutOfRange { bin: usize, max: usize },
    #[error("expected agreement is zero and the sequences differ")]
    DegenerateMarginals,
    #[error("rater {rater} is missing an answer for control {trajectory_id}")]
    IncompleteControls { rater: String, trajectory_id: String },
    #[error("no rater has intra-rater consistency above {0}")]
    EmptyReferencePopulation(f64),
    #[error("invalid control set: {0}")]
    InvalidControlSet(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KappaConfig {
    pub n_bins: usize,
    pub mu_intra_high: f64,
    pub mu_intra_low: f64,
    pub mu_inter: f64,
}

impl Default for KappaConfig {
    fn default() -> Self {
        Self { n_bins: 11, mu_intra_high: 0.4, mu_intra_low: 0.1, mu_inter: 0.2 }
    }
}

impl KappaConfig {
    pub fn validate(&self) -> Result<(), QaError> {
        if self.n_bins < 2 {
            return Err(QaError::InvalidConfig(format!("n_bins = {} < 2", self.n_bins)));
        }
        for (name, v) in [
            ("mu_intra_high", self.mu_intra_high),
            ("mu_intra_low", self.mu_intra_low),
            ("mu_inter", self.mu_inter),
        ] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(QaError::InvalidConfig(format!("{name} = {v} is outside [-1, 1]")));
            }
        }
        Ok(())
    }
}

/// The control questions of a survey. `repeated` ids were shown twice.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSet {
    control: Vec<String>,
    repeated: Vec<String>,
}

impl ControlSet {
    pub fn new(control: Vec<String>, repeated: Vec<String>) -> Result<Self, QaError> {
        let set = Self { control, repeated };
        set.check()?;
        Ok(set)
    }

    fn check(&self) -> Result<(), QaError> {
        let unique: BTreeSet<&String> = self.control.iter().collect();
        if self.control.len() != CONTROL_COUNT || unique.len() != CONTROL_COUNT {
            return Err(QaError::InvalidControlSet(format!("need {CONTROL_COUNT} distinct control ids, got {}", unique.len())));
        }
        let rep: BTreeSet<&String> = self.repeated.iter().collect();
        if self.repeated.len() != REPEATED_COUNT || rep.len() != REPEATED_COUNT {
            return Err(QaError::InvalidControlSet(format!("need {REPEATED_COUNT} distinct repeated ids")));
        }
        if let Some(id) = rep.iter().find(|id| !unique.contains(*id)) {
            return Err(QaError::InvalidControlSet(format!("repeated id {id} is not a control")));
        }
        Ok(())
    }

    pub fn control(&self) -> &[String] {
        &self.control
    }

    pub fn repeated(&self) -> &[String] {
        &self.repeated
    }

    pub fn contains(&self, trajectory_id: &str) -> bool {
        self.control.iter().any(|c| c == trajectory_id)
    }

    /// Reads a `{"control": [...], "repeated": [...]}` file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Box<dyn std::error::Error + Send + Sync>> {
        let set: Self = serde_json::from_slice(&std::fs::read(path)?)?;
        set.check()?;
        Ok(set)
    }

    /// Recovers the control set from the ratings alone: controls are the
    /// trajectories every rater scored, repeated ones were scored twice by
    /// every rater.
    pub fn infer(raters: &[RaterRecord]) -> Result<Self, QaError> {
        if raters.is_empty() {
            return Err(QaError::InvalidControlSet("no raters".into()));
        }
        let mut common: Option<BTreeMap<&str, usize>> = None;
        for r in raters {
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for rating in &r.ratings {
                *counts.entry(rating.trajectory_id.as_str()).or_default() += 1;
            }
            common = Some(match common {
                None => counts,
                Some(prev) => prev
                    .into_iter()
                    .filter_map(|(id, n)| counts.get(id).map(|m| (id, n.min(*m))))
                    .collect(),
            });
        }
        let common = common.unwrap_or_default();
        let control: Vec<String> = common.keys().map(|s| s.to_string()).collect();
        let repeated: Vec<String> = common.iter().filter(|(_, n)| **n >= 2).map(|(id, _)| id.to_string()).collect();
        Self::new(control, repeated)
    }
}

/// Uniform binning of `[0, 1]` into `n_bins` levels; 1.0 lands in the top bin.
pub fn quantize(score: f64, n_bins: usize) -> Result<usize, QaError> {
    if n_bins < 2 {
        return Err(QaError::InvalidConfig(format!("n_bins = {n_bins} < 2")));
    }
    if !(0.0..=1.0).contains(&score) {
        return Err(QaError::OutOfRange(score));
    }
    Ok(((score * n_bins as f64).floor() as usize).min(n_bins - 1))
}

/// Quadratic weighted Cohen's kappa between two bin sequences.
pub fn kappa_quadratic(a: &[usize], b: &[usize], n_bins: usize) -> Result<f64, QaError> {
    if n_bins < 2 {
        return Err(QaError::InvalidConfig(format!("n_bins = {n_bins} < 2")));
    }
    if a.len() != b.len() || a.is_empty() {
        return Err(QaError::LengthMismatch(a.len(), b.len()));
    }
    if let Some(&bin) = a.iter().chain(b).find(|&&x| x >= n_bins) {
        return Err(QaError::BinOutOfRange { bin, max: n_bins - 1 });
    }
    let n = a.len() as f64;
    let mut observed = vec![0.0; n_bins * n_bins];
    let mut row = vec![0.0; n_bins];
    let mut col = vec![0.0; n_bins];
    for (&i, &j) in a.iter().zip(b) {
        observed[i * n_bins + j] += 1.0 / n;
        row[i] += 1.0 / n;
        col[j] += 1.0 / n;
    }
    let norm = ((n_bins - 1) * (n_bins - 1)) as f64;
    let (mut wo, mut we) = (0.0, 0.0);
    for i in 0..n_bins {
        for j in 0..n_bins {
            let w = ((i as f64 - j as f64).powi(2)) / norm;
            wo += w * observed[i * n_bins + j];
            we += w * row[i] * col[j];
        }
    }
    if we == 0.0 {
        return if a == b { Ok(1.0) } else { Err(QaError::DegenerateMarginals) };
    }
    Ok((1.0 - wo / we).clamp(-1.0, 1.0))
}

/// Scores of one rater on the controls: first presentation of every control
/// (in control-set order) and second presentation of every repeated one.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlAnswers {
    pub first: Vec<f64>,
    pub repeat_first: Vec<f64>,
    pub repeat_second: Vec<f64>,
}

pub fn control_answers(r: &RaterRecord, control: &ControlSet) -> Result<ControlAnswers, QaError> {
    let mut seen: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for rating in &r.ratings {
        seen.entry(rating.trajectory_id.as_str()).or_default().push(rating.score);
    }
    let missing = |id: &String| QaError::IncompleteControls { rater: r.id.clone(), trajectory_id: id.clone() };
    let first = control
        .control
        .iter()
        .map(|id| seen.get(id.as_str()).and_then(|s| s.first().copied()).ok_or_else(|| missing(id)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut repeat_first = Vec::with_capacity(REPEATED_COUNT);
    let mut repeat_second = Vec::with_capacity(REPEATED_COUNT);
    for id in &control.repeated {
        match seen.get(id.as_str()).map(Vec::as_slice) {
            Some([a, b, ..]) => {
                repeat_first.push(*a);
                repeat_second.push(*b);
            }
            _ => return Err(missing(id)),
        }
    }
    Ok(ControlAnswers { first, repeat_first, repeat_second })
}

fn bins(scores: &[f64], n_bins: usize) -> Result<Vec<usize>, QaError> {
    scores.iter().map(|&s| quantize(s, n_bins)).collect()
}

/// Kappa between a rater's first and second answers to the repeated controls.
pub fn intra_consistency(r: &RaterRecord, control: &ControlSet, n_bins: usize) -> Result<f64, QaError> {
    let ans = control_answers(r, control)?;
    kappa_quadratic(&bins(&ans.repeat_first, n_bins)?, &bins(&ans.repeat_second, n_bins)?, n_bins)
}

/// Splits raters into those who answered every control presentation and the ids of the rest.
pub fn partition_complete(raters: &[RaterRecord], control: &ControlSet) -> (Vec<RaterRecord>, Vec<String>) {
    let (complete, incomplete): (Vec<_>, Vec<_>) =
        raters.iter().cloned().partition(|r| control_answers(r, control).is_ok());
    (complete, incomplete.into_iter().map(|r| r.id).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaterReport {
    pub rater: String,
    pub intra: f64,
    pub inter: f64,
    pub in_reference: bool,
    pub selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub config: KappaConfig,
    /// Selected rater ids, sorted.
    pub selected: Vec<String>,
    /// Mean first-presentation score per control, in control-set order,
    /// over the reference population.
    pub reference_means: Vec<f64>,
    /// One entry per input rater, sorted by id.
    pub reports: Vec<RaterReport>,
}

/// Two-step selection: reference means from raters with intra > `mu_intra_high`,
/// then keep raters with intra ≥ `mu_intra_low` and kappa against the
/// quantized reference means ≥ `mu_inter`.
pub fn select_raters(raters: &[RaterRecord], control: &ControlSet, cfg: &KappaConfig) -> Result<Selection, QaError> {
    cfg.validate()?;
    let mut rows = raters
        .iter()
        .map(|r| {
            let ans = control_answers(r, control)?;
            let intra = kappa_quadratic(&bins(&ans.repeat_first, cfg.n_bins)?, &bins(&ans.repeat_second, cfg.n_bins)?, cfg.n_bins)?;
            Ok((r.id.clone(), ans, intra))
        })
        .collect::<Result<Vec<_>, QaError>>()?;
    // Fixed summation order keeps the means independent of input order.
    rows.sort_by(|a, b| a.0.cmp(&b.0));

    let reference: Vec<&(String, ControlAnswers, f64)> = rows.iter().filter(|(_, _, intra)| *intra > cfg.mu_intra_high).collect();
    if reference.is_empty() {
        return Err(QaError::EmptyReferencePopulation(cfg.mu_intra_high));
    }
    let reference_means: Vec<f64> = (0..CONTROL_COUNT)
        .map(|k| reference.iter().map(|(_, a, _)| a.first[k]).sum::<f64>() / reference.len() as f64)
        .collect();
    let reference_bins = bins(&reference_means, cfg.n_bins)?;

    let mut reports = Vec::with_capacity(rows.len());
    for (id, ans, intra) in &rows {
        let inter = kappa_quadratic(&bins(&ans.first, cfg.n_bins)?, &reference_bins, cfg.n_bins)?;
        let selected = *intra >= cfg.mu_intra_low && inter >= cfg.mu_inter;
        reports.push(RaterReport {
            rater: id.clone(),
            intra: *intra,
            inter,
            in_reference: *intra > cfg.mu_intra_high,
            selected,
        });
    }
    let selected = reports.iter().filter(|r| r.selected).map(|r| r.rater.clone()).collect();
    Ok(Selection { config: *cfg, selected, reference_means, reports })
}

/// Number of selected raters for each bin count; other thresholds from `cfg`.
pub fn selection_sensitivity(
    raters: &[RaterRecord],
    control: &ControlSet,
    cfg: &KappaConfig,
    bin_counts: &[usize],
) -> Vec<(usize, Result<usize, QaError>)> {
    bin_counts
        .iter()
        .map(|&n_bins| {
            let c = KappaConfig { n_bins, ..*cfg };
            (n_bins, select_raters(raters, control, &c).map(|s| s.selected.len()))
        })
        .collect()
}

/// Pairwise kappa on first-presentation control answers. Symmetric with unit diagonal.
pub fn consistency_matrix(raters: &[RaterRecord], control: &ControlSet, n_bins: usize) -> Result<Vec<Vec<f64>>, QaError> {
    let answer_bins = raters
        .iter()
        .map(|r| bins(&control_answers(r, control)?.first, n_bins))
        .collect::<Result<Vec<_>, _>>()?;
    let n = raters.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| kappa_quadratic(&answer_bins[i], &answer_bins[j], n_bins))
        .collect::<Result<Vec<_>, _>>()?;
    let mut m = vec![vec![1.0; n]; n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        m[i][j] = v;
        m[j][i] = v;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlStat {
    pub trajectory_id: String,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub count: usize,
}

/// Mean and spread of first-presentation scores per control, in control-set order.
pub fn control_stats(raters: &[RaterRecord], control: &ControlSet) -> Result<Vec<ControlStat>, QaError> {
    let answers = raters.iter().map(|r| control_answers(r, control)).collect::<Result<Vec<_>, _>>()?;
    Ok(control
        .control
        .iter()
        .enumerate()
        .map(|(k, id)| {
            let xs: Vec<f64> = answers.iter().map(|a| a.first[k]).collect();
            let count = xs.len();
            let mean = if count == 0 { f64::NAN } else { xs.iter().sum::<f64>() / count as f64 };
            let var = if count == 0 { f64::NAN } else { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / count as f64 };
            ControlStat { trajectory_id: id.clone(), mean, std: var.sqrt(), count }
        })
        .collect())
}


#[cfg(test)]
mod tests {
    use super::testutil::*;
    use super::*;
    use proptest::prelude::*;

    /// Item-pair formulation, no contingency table.
    fn kappa_oracle(a: &[usize], b: &[usize], n_bins: usize) -> f64 {
        let w = |i: usize, j: usize| ((i as f64 - j as f64) / (n_bins - 1) as f64).powi(2);
        let n = a.len() as f64;
        let observed: f64 = a.iter().zip(b).map(|(&i, &j)| w(i, j)).sum::<f64>() / n;
        let mut expected = 0.0;
        for &i in a {
            for &j in b {
                expected += w(i, j);
            }
        }
        1.0 - observed / (expected / (n * n))
    }

    const SPREAD: [f64; CONTROL_COUNT] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.15, 0.35, 0.55, 0.75];

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.0, 11).unwrap(), 0);
        assert_eq!(quantize(1.0, 11).unwrap(), 10);
        assert_eq!(quantize(0.5, 11).unwrap(), 5);
        assert_eq!(quantize(1.1, 11), Err(QaError::OutOfRange(1.1)));
        assert!(quantize(f64::NAN, 11).is_err());
        assert!(quantize(0.3, 1).is_err());
    }

    #[test]
    fn kappa_identity_and_reversal() {
        assert_eq!(kappa_quadratic(&[0, 3, 5, 10], &[0, 3, 5, 10], 11).unwrap(), 1.0);
        // O = [[0,.5],[.5,0]], E = .25 everywhere: 1 - 1/0.5 = -1.
        assert_eq!(kappa_quadratic(&[0, 1], &[1, 0], 2).unwrap(), -1.0);
    }

    #[test]
    fn kappa_degenerate_identical_constants() {
        assert_eq!(kappa_quadratic(&[4, 4, 4], &[4, 4, 4], 11).unwrap(), 1.0);
    }

    #[test]
    fn kappa_input_errors() {
        assert!(matches!(kappa_quadratic(&[1], &[1, 2], 11), Err(QaError::LengthMismatch(1, 2))));
        assert!(matches!(kappa_quadratic(&[], &[], 11), Err(QaError::LengthMismatch(0, 0))));
        assert!(matches!(kappa_quadratic(&[11], &[0], 11), Err(QaError::BinOutOfRange { bin: 11, max: 10 })));
    }

    #[test]
    fn kappa_against_hand_table() {
        // a = [0,1,2,2], b = [0,2,1,2] on 3 bins, weights (i-j)^2/4.
        // Observed disagreement: two items at distance 1 -> 2 * 0.25 / 4 = 0.125.
        // Marginals a: (1/4, 1/4, 1/2), b: (1/4, 1/4, 1/2).
        // Expected: sum p_i q_j w_ij = 2*(1/16*0.25 + 1/8*1 + 1/8*0.25) = 0.34375.
        let k = kappa_quadratic(&[0, 1, 2, 2], &[0, 2, 1, 2], 3).unwrap();
        assert!((k - (1.0 - 0.125 / 0.34375)).abs() < 1e-15);
    }

    #[test]
    fn intra_identical_is_one() {
        let r = rater("r", &SPREAD, &[0.0, 0.1, 0.2, 0.3, 0.4]);
        assert_eq!(intra_consistency(&r, &control_set(), 11).unwrap(), 1.0);
    }

    #[test]
    fn intra_missing_repeat() {
        let mut r = rater("r", &SPREAD, &[0.0, 0.1, 0.2, 0.3, 0.4]);
        r.ratings.pop();
        assert_eq!(
            intra_consistency(&r, &control_set(), 11),
            Err(QaError::IncompleteControls { rater: "r".into(), trajectory_id: "c04".into() })
        );
    }

    #[test]
    fn intra_one_bin_drift_matches_oracle() {
        let r = rater("r", &SPREAD, &[0.1, 0.2, 0.3, 0.4, 0.5]);
        let k = intra_consistency(&r, &control_set(), 11).unwrap();
        let oracle = kappa_oracle(&[0, 1, 2, 3, 4], &[1, 2, 3, 4, 5], 11);
        assert!((k - oracle).abs() < 1e-12);
        assert!(k < 1.0 && k > 0.0);
    }

    #[test]
    fn single_consistent_rater_is_reference() {
        let r = rater("only", &SPREAD, &[0.0, 0.1, 0.2, 0.3, 0.4]);
        let sel = select_raters(&[r], &control_set(), &KappaConfig::default()).unwrap();
        assert_eq!(sel.selected, vec!["only".to_string()]);
        assert_eq!(sel.reference_means, SPREAD.to_vec());
    }

    #[test]
    fn low_intra_rater_is_discarded() {
        let good = rater("good", &SPREAD, &[0.0, 0.1, 0.2, 0.3, 0.4]);
        // Repeats reshuffled: intra well below 0.1.
        let bad = rater("bad", &SPREAD, &[0.4, 0.0, 0.3, 0.1, 0.2]);
        let cs = control_set();
        let intra_bad = intra_consistency(&bad, &cs, 11).unwrap();
        assert!(intra_bad < 0.1, "{intra_bad}");
        let sel = select_raters(&[good, bad], &cs, &KappaConfig::default()).unwrap();
        assert_eq!(sel.selected, vec!["good".to_string()]);
        let bad_report = sel.reports.iter().find(|r| r.rater == "bad").unwrap();
        assert!(!bad_report.selected && !bad_report.in_reference);
    }

    #[test]
    fn equality_at_threshold_passes() {
        let good = rater("a", &SPREAD, &[0.0, 0.1, 0.2, 0.3, 0.4]);
        let drift = rater("b", &SPREAD, &[0.1, 0.2, 0.3, 0.4, 0.5]);
        let cs = control_set();
        let intra = intra_consistency(&drift, &cs, 11).unwrap();
        let cfg = KappaConfig { mu_intra_low: intra, ..Default::default() };
        let sel = select_raters(&[good, drift], &cs, &cfg).unwrap();
        assert!(sel.selected.contains(&"b".to_string()));
    }

    #[test]
    fn empty_reference_population() {
        let bad = rater("bad", &SPREAD, &[0.4, 0.0, 0.3, 0.1, 0.2]);
        assert!(matches!(
            select_raters(&[bad], &control_set(), &KappaConfig::default()),
            Err(QaError::EmptyReferencePopulation(_))
        ));
    }

    #[test]
    fn identical_raters_matrix() {
        let a = rater("a", &SPREAD, &[0.0, 0.1, 0.2, 0.3, 0.4]);
        let b = rater("b", &SPREAD, &[0.0, 0.1, 0.2, 0.3, 0.4]);
        assert_eq!(consistency_matrix(&[a, b], &control_set(), 11).unwrap(), vec![vec![1.0, 1.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn control_set_invariants() {
        let ids: Vec<String> = (0..CONTROL_COUNT).map(|k| k.to_string()).collect();
        assert!(ControlSet::new(ids.clone(), ids[..4].to_vec()).is_err());
        assert!(ControlSet::new(ids[..14].to_vec(), ids[..5].to_vec()).is_err());
        assert!(ControlSet::new(ids.clone(), vec!["x".into(), "1".into(), "2".into(), "3".into(), "4".into()]).is_err());
        assert!(ControlSet::new(ids.clone(), ids[10..].to_vec()).is_ok());
    }

    #[test]
    fn infer_recovers_control_set() {
        let raters = vec![
            rater("a", &SPREAD, &[0.0, 0.1, 0.2, 0.3, 0.4]),
            rater("b", &SPREAD, &[0.1, 0.1, 0.2, 0.3, 0.4]),
        ];
        // "regular" is rated by both, so drop it from one rater to make it non-common.
        let mut raters = raters;
        raters[1].ratings.retain(|r| r.trajectory_id != "regular");
        assert_eq!(ControlSet::infer(&raters).unwrap(), control_set());
    }

    #[test]
    fn control_stats_zero_std_when_agreeing() {
        let a = rater("a", &SPREAD, &[0.0, 0.1, 0.2, 0.3, 0.4]);
        let b = rater("b", &SPREAD, &[0.0, 0.1, 0.2, 0.3, 0.4]);
        let stats = control_stats(&[a, b], &control_set()).unwrap();
        assert_eq!(stats.len(), CONTROL_COUNT);
        assert!(stats.iter().all(|s| s.std == 0.0 && s.count == 2));
    }

    fn bin_pair(max_len: usize) -> impl Strategy<Value = (usize, Vec<usize>, Vec<usize>)> {
        (2usize..=21).prop_flat_map(move |n| {
            (1usize..=max_len).prop_flat_map(move |len| {
                (Just(n), prop::collection::vec(0..n, len), prop::collection::vec(0..n, len))
            })
        })
    }

    fn score() -> impl Strategy<Value = f64> {
        (0u32..=20).prop_map(|k| k as f64 / 20.0)
    }

    fn random_rater(id: usize) -> impl Strategy<Value = RaterRecord> {
        (prop::array::uniform15(score()), prop::array::uniform5(score()))
            .prop_map(move |(first, second)| rater(&format!("r{id:02}"), &first, &second))
    }

    fn population() -> impl Strategy<Value = Vec<RaterRecord>> {
        (2usize..8).prop_flat_map(|n| (0..n).map(random_rater).collect::<Vec<_>>())
    }

    proptest! {
        #[test]
        fn kappa_matches_oracle((n, a, b) in bin_pair(40)) {
            match kappa_quadratic(&a, &b, n) {
                Ok(k) => {
                    prop_assert!((-1.0..=1.0).contains(&k));
                    let o = kappa_oracle(&a, &b, n);
                    if o.is_finite() {
                        prop_assert!((k - o).abs() < 1e-12, "{k} vs {o}");
                    } else {
                        prop_assert_eq!(&a, &b);
                    }
                }
                Err(e) => prop_assert!(false, "{e}"),
            }
        }

        #[test]
        fn kappa_symmetric((n, a, b) in bin_pair(40)) {
            let ab = kappa_quadratic(&a, &b, n).unwrap();
            let ba = kappa_quadratic(&b, &a, n).unwrap();
            prop_assert!((ab - ba).abs() < 1e-12);
        }

        #[test]
        fn kappa_self_is_one((n, a, _) in bin_pair(40)) {
            prop_assert_eq!(kappa_quadratic(&a, &a, n).unwrap(), 1.0);
        }

        #[test]
        fn quantize_in_range(s in 0.0f64..=1.0, n in 2usize..50) {
            let q = quantize(s, n).unwrap();
            prop_assert!(q < n);
            prop_assert!(s * n as f64 >= q as f64 - 1e-9);
        }

        #[test]
        fn raising_low_thresholds_never_adds(raters in population(), d_low in 0.0f64..0.5, d_inter in 0.0f64..0.5) {
            let cs = control_set();
            let base = KappaConfig { mu_intra_high: -1.0, mu_intra_low: -0.5, mu_inter: -0.5, n_bins: 11 };
            let raised = KappaConfig { mu_intra_low: base.mu_intra_low + d_low, mu_inter: base.mu_inter + d_inter, ..base };
            if let (Ok(a), Ok(b)) = (select_raters(&raters, &cs, &base), select_raters(&raters, &cs, &raised)) {
                prop_assert!(b.selected.iter().all(|id| a.selected.contains(id)));
            }
        }

        #[test]
        fn selection_is_order_invariant(raters in population(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let cs = control_set();
            let cfg = KappaConfig { mu_intra_high: 0.0, ..Default::default() };
            let mut shuffled = raters.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = select_raters(&raters, &cs, &cfg);
            let b = select_raters(&shuffled, &cs, &cfg);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn matrix_symmetric_and_matches_oracle(raters in population()) {
            let cs = control_set();
            let m = consistency_matrix(&raters, &cs, 11).unwrap();
            for i in 0..raters.len() {
                prop_assert_eq!(m[i][i], 1.0);
                for j in 0..raters.len() {
                    prop_assert_eq!(m[i][j], m[j][i]);
                    if i != j {
                        let bi = bins(&control_answers(&raters[i], &cs).unwrap().first, 11).unwrap();
                        let bj = bins(&control_answers(&raters[j], &cs).unwrap().first, 11).unwrap();
                        let o = kappa_oracle(&bi, &bj, 11);
                        if o.is_finite() {
                            prop_assert!((m[i][j] - o).abs() < 1e-12);
                        }
                    }
                }
            }
        }
    }
}
