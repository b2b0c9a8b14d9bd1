use std::path::PathBuf;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use socnav_core::qa::{CONTROL_COUNT, REPEATED_COUNT};

/// Where rating contexts come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContextPool {
    /// A context is drawn uniformly from the list.
    Texts { texts: Vec<String> },
    /// A context is `"{robot} {situation}"` with both parts drawn uniformly.
    Generator { robots: Vec<String>, situations: Vec<String> },
}

impl ContextPool {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> String {
        match self {
            ContextPool::Texts { texts } => texts.choose(rng).cloned().unwrap_or_default(),
            ContextPool::Generator { robots, situations } => {
                let r = robots.choose(rng).map(String::as_str).unwrap_or_default();
                let s = situations.choose(rng).map(String::as_str).unwrap_or_default();
                format!("{r} {s}")
            }
        }
    }

    fn validate(&self) -> Result<(), String> {
        let ok = |v: &[String]| !v.is_empty() && v.iter().all(|s| !s.trim().is_empty());
        match self {
            ContextPool::Texts { texts } if ok(texts) => Ok(()),
            ContextPool::Generator { robots, situations } if ok(robots) && ok(situations) => Ok(()),
            _ => Err("context pool needs non-empty, non-blank entries".into()),
        }
    }
}

/// The `survey` configuration section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyConfig {
    /// Dataset root holding `trajectories/`; completed questionnaires go to
    /// its `ratings/` directory unless `ratings_dir` is set.
    pub dataset: PathBuf,
    pub ratings_dir: Option<PathBuf>,
    /// Session store directory.
    pub state_dir: PathBuf,
    /// Survey UI bundle served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Trajectory ids handed out as ordinary items. Empty means every
    /// trajectory in the dataset that is not a control.
    #[serde(default)]
    pub pool: Vec<String>,
    pub contexts: ContextPool,
    /// Total presentations per questionnaire, controls and repeats included.
    pub max_scores_per_rater: usize,
    /// Control trajectories, each with the fixed context it is always shown under.
    pub control: Vec<ControlItem>,
    /// Controls (by id) shown a second time.
    pub repeated: Vec<String>,
    /// How many completed or in-progress questionnaires may include a pool item.
    #[serde(default = "one")]
    pub ratings_per_trajectory: usize,
    pub session_timeout_s: u64,
    /// Playback frame-rate ceiling.
    #[serde(default = "ten")]
    pub playback_hz: f64,
    /// Environment variable holding the admin bearer token.
    #[serde(default = "token_var")]
    pub admin_token_env: String,
    /// Fixed seed for assignment randomization; entropy when absent.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlItem {
    pub trajectory: String,
    pub context: String,
}

fn one() -> usize {
    1
}

fn ten() -> f64 {
    10.0
}

fn token_var() -> String {
    "SOCNAV_ADMIN_TOKEN".into()
}

impl SurveyConfig {
    pub fn ratings_dir(&self) -> PathBuf {
        self.ratings_dir.clone().unwrap_or_else(|| self.dataset.join(socnav_core::dataset::RATINGS_DIR))
    }

    /// Pool items per questionnaire.
    pub fn regular_count(&self) -> usize {
        self.max_scores_per_rater.saturating_sub(CONTROL_COUNT + REPEATED_COUNT)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.control.len() != CONTROL_COUNT {
            return Err(format!("expected {CONTROL_COUNT} control items, found {}", self.control.len()));
        }
        if self.repeated.len() != REPEATED_COUNT {
            return Err(format!("expected {REPEATED_COUNT} repeated controls, found {}", self.repeated.len()));
        }
        let mut ids: Vec<&str> = self.control.iter().map(|c| c.trajectory.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err("control trajectories must be distinct".into());
        }
        if let Some(r) = self.repeated.iter().find(|r| ids.binary_search(&r.as_str()).is_err()) {
            return Err(format!("repeated item {r:?} is not a control"));
        }
        let mut rep = self.repeated.clone();
        rep.sort_unstable();
        rep.dedup();
        if rep.len() != REPEATED_COUNT {
            return Err("repeated controls must be distinct".into());
        }
        if self.control.iter().any(|c| c.context.trim().is_empty()) {
            return Err("control contexts must be non-blank".into());
        }
        if self.max_scores_per_rater < CONTROL_COUNT + REPEATED_COUNT {
            return Err(format!("max_scores_per_rater must be at least {}", CONTROL_COUNT + REPEATED_COUNT));
        }
        if !self.pool.is_empty() {
            if let Some(c) = ids.iter().find(|c| !self.pool.iter().any(|p| p == *c)) {
                return Err(format!("control {c:?} is not in the pool"));
            }
        }
        if self.ratings_per_trajectory == 0 {
            return Err("ratings_per_trajectory must be positive".into());
        }
        if self.session_timeout_s == 0 {
            return Err("session_timeout_s must be positive".into());
        }
        if !(self.playback_hz > 0.0 && self.playback_hz.is_finite()) {
            return Err("playback_hz must be positive".into());
        }
        self.contexts.validate()
    }
}
