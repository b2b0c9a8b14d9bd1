//! Dataset summary: trajectories by source, rated trajectories, score
//! distribution and rater demographics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write;

use serde::{Deserialize, Serialize};
use socnav_core::dataset::{Dataset, Gender};

pub const HISTOGRAM_BINS: usize = 10;

const AGE_BANDS: [(u32, u32, &str); 7] = [
    (0, 17, "<18"),
    (18, 24, "18-24"),
    (25, 34, "25-34"),
    (35, 44, "35-44"),
    (45, 54, "45-54"),
    (55, 64, "55-64"),
    (65, u32::MAX, "65+"),
];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub trajectories: usize,
    pub by_source: BTreeMap<String, usize>,
    pub frames: usize,
    pub duration_s: f64,
    pub raters: usize,
    /// Raters counted for ratings, histogram and demographics.
    pub raters_included: usize,
    pub ratings: usize,
    /// Distinct trajectories with at least one included rating.
    pub rated_trajectories: usize,
    pub score_histogram: [usize; HISTOGRAM_BINS],
    pub gender: BTreeMap<String, usize>,
    pub age: BTreeMap<String, usize>,
    pub country: BTreeMap<String, usize>,
}

fn bin(score: f64) -> usize {
    ((score * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

/// Summary of `dataset`. With `selected`, only those raters contribute to the
/// rating-derived fields.
pub fn dataset_stats(dataset: &Dataset, selected: Option<&[String]>) -> DatasetStats {
    let mut s = DatasetStats {
        trajectories: dataset.trajectories.len(),
        raters: dataset.raters.len(),
        ..Default::default()
    };
    for t in &dataset.trajectories {
        *s.by_source.entry(t.source().to_string()).or_default() += 1;
        s.frames += t.frames.len();
        s.duration_s += t.duration();
    }
    let keep: Option<BTreeSet<&str>> = selected.map(|ids| ids.iter().map(String::as_str).collect());
    let mut rated = BTreeSet::new();
    for g in Gender::ALL {
        s.gender.insert(g.as_str().into(), 0);
    }
    for (_, _, band) in AGE_BANDS {
        s.age.insert(band.into(), 0);
    }
    for r in dataset.raters.iter().filter(|r| keep.as_ref().is_none_or(|k| k.contains(r.id.as_str()))) {
        s.raters_included += 1;
        *s.gender.entry(r.gender.as_str().into()).or_default() += 1;
        let band = AGE_BANDS.iter().find(|(lo, hi, _)| (*lo..=*hi).contains(&r.age)).map(|b| b.2).unwrap_or("65+");
        *s.age.entry(band.into()).or_default() += 1;
        *s.country.entry(r.country.clone()).or_default() += 1;
        for rating in &r.ratings {
            s.ratings += 1;
            s.score_histogram[bin(rating.score)] += 1;
            rated.insert(rating.trajectory_id.as_str());
        }
    }
    s.rated_trajectories = rated.len();
    s
}

impl DatasetStats {
    /// Plain-text report with aligned tables.
    pub fn report(&self) -> String {
        let mut o = String::new();
        let _ = writeln!(o, "trajectories        {}", self.trajectories);
        for (src, n) in &self.by_source {
            let _ = writeln!(o, "  {src:<18}{n}");
        }
        let _ = writeln!(o, "frames              {}", self.frames);
        let _ = writeln!(o, "duration            {:.1} s", self.duration_s);
        let _ = writeln!(o, "raters              {} ({} included)", self.raters, self.raters_included);
        let _ = writeln!(o, "ratings             {}", self.ratings);
        let _ = writeln!(o, "rated trajectories  {}", self.rated_trajectories);
        let _ = writeln!(o, "score histogram");
        for (k, n) in self.score_histogram.iter().enumerate() {
            let lo = k as f64 / HISTOGRAM_BINS as f64;
            let _ = writeln!(o, "  [{:.1}, {:.1}{}  {n}", lo, lo + 0.1, if k + 1 == HISTOGRAM_BINS { "]" } else { ")" });
        }
        for (title, table) in [("gender", &self.gender), ("age", &self.age), ("country", &self.country)] {
            let _ = writeln!(o, "{title}");
            for (k, n) in table {
                let _ = writeln!(o, "  {k:<18}{n}");
            }
        }
        o
    }
}
