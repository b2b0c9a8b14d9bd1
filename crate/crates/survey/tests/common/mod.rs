#![allow(dead_code)]

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use socnav_core::dataset::{serialize_trajectory, TRAJECTORIES_DIR};
use socnav_core::synth::{sweep_trajectory, SweepScenario, SweepSpec};
use socnav_survey::{Clock, ContextPool, ControlItem, SurveyConfig};

pub const TOKEN: &str = "secret-token";

/// Writes `n` sweep trajectories sampled at 20 Hz and returns their ids.
pub fn write_dataset(root: &Path, n: usize) -> Vec<String> {
    let spec = SweepSpec { dt: 0.05, ..SweepSpec::new(SweepScenario::OneStaticHuman) };
    (0..n)
        .map(|k| {
            let d = -2.0 + 4.0 * k as f64 / n as f64;
            let t = sweep_trajectory(&spec, d, 1.0);
            let id = format!("sim/item_{k:03}.json");
            let path = root.join(TRAJECTORIES_DIR).join(&id);
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            std::fs::write(&path, serialize_trajectory(&t)).unwrap();
            id
        })
        .collect()
}

pub fn config(root: &Path, ids: &[String], max_scores: usize) -> SurveyConfig {
    SurveyConfig {
        dataset: root.join("data"),
        ratings_dir: None,
        state_dir: root.join("state"),
        static_dir: None,
        pool: vec![],
        contexts: ContextPool::Texts { texts: vec!["guide a visitor".into(), "carry hot coffee".into(), "patrol at night".into()] },
        max_scores_per_rater: max_scores,
        control: ids[..15].iter().enumerate().map(|(k, id)| ControlItem { trajectory: id.clone(), context: format!("control context {k}") }).collect(),
        repeated: ids[..5].to_vec(),
        ratings_per_trajectory: 1,
        session_timeout_s: 3600,
        playback_hz: 10.0,
        admin_token_env: "UNUSED_TOKEN_VAR".into(),
        seed: Some(11),
    }
}

/// A dataset under `root/data` with `n` trajectories and a matching config.
pub fn setup(root: &Path, n: usize, max_scores: usize) -> SurveyConfig {
    let ids = write_dataset(&root.join("data"), n);
    config(root, &ids, max_scores)
}

pub struct FakeClock(pub Arc<AtomicU64>);

impl FakeClock {
    pub fn new(t: u64) -> Self {
        FakeClock(Arc::new(AtomicU64::new(t)))
    }
    pub fn clock(&self) -> Clock {
        let t = self.0.clone();
        Arc::new(move || t.load(Ordering::SeqCst))
    }
    pub fn advance(&self, dt: u64) {
        self.0.fetch_add(dt, Ordering::SeqCst);
    }
}
