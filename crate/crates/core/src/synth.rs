//! Synthetic trajectories: the deviation/speed sweep used to probe a trained
//! metric, and a small rated corpus with a known scoring rule for exercising
//! the pipeline end to end when no recorded dataset is available.
//!
//! Sweep geometry, in metres with the robot starting at the origin facing +y:
//!
//! ```text
//! goal      (0, L)                 L = length (default 6)
//! path      p(s) = (d · sin(π s / L), s),  s ∈ [0, L]
//! walls     closed rectangle x ∈ [-4, 4], y ∈ [-1, L + 1]
//! humans    one_static:          (0, L/2)
//!           three_static:        (0, L/2), (-1, L/2 + 0.8), (1, L/2 + 0.8)
//!           approaching_human:   starts at (0, L), walks toward (0, 0) at
//!                                `human_speed` and stops there
//! ```
//!
//! `d` is the signed maximum lateral deviation (positive to the robot's
//! right, i.e. +x). The robot moves at constant speed along the arc and faces
//! along the path tangent. Frames are `dt` apart, with one final frame on the
//! goal.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::context::ContextVector;
use crate::dataset::{
    serialize_rater_record, serialize_trajectory, Drive, Environment, Extra, Frame, Gender, HumanState, Pose2D, RaterRecord,
    Rating, RobotSpec, Shape2D, Task, TaskType, Trajectory, Twist2D, RATINGS_DIR, TRAJECTORIES_DIR,
};
use crate::features::{trajectory_metrics, FeatureParams};
use crate::geometry::{normalize_angle, Point2};
use crate::qa::{ControlSet, CONTROL_COUNT, CONTROLS_FILE, REPEATED_COUNT};

pub const SWEEP_SPEEDS: [f64; 4] = [0.2, 0.4, 0.8, 1.6];

/// Labelled task descriptions the sweep is scored under.
pub const SWEEP_CONTEXTS: [(&str, &str); 4] = [
    ("lab", "A robot is working with lab samples. The samples contain a deadly virus"),
    ("fire", "A restaurant robot is looking for a fire extinguisher, as it just detected a fire"),
    ("office", "An office assistant robot keeps track of who is in the office today"),
    ("fragile", "A delivery robot is navigating in a hospital. It works with fragile objects"),
];
const ROBOT_RADIUS: f64 = 0.25;
const ARC_SAMPLES: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepScenario {
    OneStaticHuman,
    ThreeStaticHumans,
    ApproachingHuman,
}

impl SweepScenario {
    pub const ALL: [SweepScenario; 3] =
        [SweepScenario::OneStaticHuman, SweepScenario::ThreeStaticHumans, SweepScenario::ApproachingHuman];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepScenario::OneStaticHuman => "one_static_human",
            SweepScenario::ThreeStaticHumans => "three_static_humans",
            SweepScenario::ApproachingHuman => "approaching_human",
        }
    }
}

impl std::str::FromStr for SweepScenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Self::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub scenario: SweepScenario,
    pub n_trajectories: usize,
    /// Deviations run evenly from `-max_deviation` to `max_deviation`.
    pub max_deviation: f64,
    pub speeds: Vec<f64>,
    pub length: f64,
    pub dt: f64,
    pub human_speed: f64,
}

impl SweepSpec {
    pub fn new(scenario: SweepScenario) -> Self {
        Self {
            scenario,
            n_trajectories: 101,
            max_deviation: 2.5,
            speeds: SWEEP_SPEEDS.to_vec(),
            length: 6.0,
            dt: 0.2,
            human_speed: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_trajectories < 2 {
            return Err("n_trajectories must be at least 2".into());
        }
        if !(self.max_deviation >= 0.0 && self.max_deviation.is_finite()) {
            return Err(format!("max_deviation = {}", self.max_deviation));
        }
        if self.speeds.is_empty() || self.speeds.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err("speeds must be positive".into());
        }
        if !(self.length > 0.0 && self.dt > 0.0 && self.human_speed >= 0.0) {
            return Err("length and dt must be positive, human_speed non-negative".into());
        }
        Ok(())
    }

    pub fn deviations(&self) -> Vec<f64> {
        let n = self.n_trajectories;
        (0..n)
            .map(|k| {
                if 2 * k + 1 == n {
                    0.0
                } else {
                    -self.max_deviation + 2.0 * self.max_deviation * k as f64 / (n - 1) as f64
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SweepItem {
    pub scenario: SweepScenario,
    pub deviation: f64,
    pub speed: f64,
    pub trajectory: Trajectory,
}

/// Lateral offset of the sweep path at progress `s` along the straight line.
pub fn lateral_offset(deviation: f64, s: f64, length: f64) -> f64 {
    deviation * (PI * s / length).sin()
}

/// Arc-length table of a sine-lobe path, for constant-speed sampling.
struct ArcTable {
    s: Vec<f64>,
    arc: Vec<f64>,
    deviation: f64,
    length: f64,
}

impl ArcTable {
    fn new(deviation: f64, length: f64) -> Self {
        let mut s = Vec::with_capacity(ARC_SAMPLES + 1);
        let mut arc = Vec::with_capacity(ARC_SAMPLES + 1);
        let mut prev = Point2::new(0.0, 0.0);
        let mut total = 0.0;
        for k in 0..=ARC_SAMPLES {
            let sk = length * k as f64 / ARC_SAMPLES as f64;
            let p = Point2::new(lateral_offset(deviation, sk, length), sk);
            total += p.distance(prev);
            prev = p;
            s.push(sk);
            arc.push(total);
        }
        Self { s, arc, deviation, length }
    }

    fn total(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    /// Line parameter `s` at arc length `a`.
    fn s_at(&self, a: f64) -> f64 {
        let a = a.clamp(0.0, self.total());
        let k = self.arc.partition_point(|&x| x < a).clamp(1, self.arc.len() - 1);
        let (a0, a1) = (self.arc[k - 1], self.arc[k]);
        let w = if a1 > a0 { (a - a0) / (a1 - a0) } else { 0.0 };
        self.s[k - 1] + w * (self.s[k] - self.s[k - 1])
    }

    fn point(&self, s: f64) -> Point2 {
        Point2::new(lateral_offset(self.deviation, s, self.length), s)
    }

    fn heading(&self, s: f64) -> f64 {
        let dx = self.deviation * PI / self.length * (PI * s / self.length).cos();
        1.0f64.atan2(dx)
    }
}

/// Constant-speed robot states along the path up to `stop_fraction` of its length.
fn robot_states(deviation: f64, length: f64, speed: f64, dt: f64, stop_fraction: f64) -> Vec<(f64, Pose2D, Point2)> {
    let table = ArcTable::new(deviation, length);
    let end = table.total() * stop_fraction.clamp(0.0, 1.0);
    let t_end = end / speed;
    let mut times: Vec<f64> = (0..).map(|k| k as f64 * dt).take_while(|t| *t < t_end - 1e-9).collect();
    times.push(t_end);
    times
        .into_iter()
        .map(|t| {
            let s = table.s_at(speed * t);
            let theta = table.heading(s);
            let p = table.point(s);
            let v = Point2::new(theta.cos(), theta.sin()).scale(speed);
            (t, Pose2D::new(p.x, p.y, theta), v)
        })
        .collect()
}

fn room(length: f64) -> Environment {
    let (x0, x1, y0, y1) = (-4.0, 4.0, -1.0, length + 1.0);
    Environment {
        walls: vec![vec![
            Point2::new(x0, y0),
            Point2::new(x1, y0),
            Point2::new(x1, y1),
            Point2::new(x0, y1),
            Point2::new(x0, y0),
        ]],
        grid: None,
        area_semantics: "room".into(),
        extra: Extra::new(),
    }
}

/// Positions of humans at time `t`: static ones, or a walker from `from`
/// along `dir` at `speed` for at most `range` metres.
#[derive(Debug, Clone, Copy)]
struct HumanPlan {
    from: Point2,
    dir: Point2,
    speed: f64,
    range: f64,
}

impl HumanPlan {
    fn fixed(x: f64, y: f64) -> Self {
        Self { from: Point2::new(x, y), dir: Point2::new(0.0, -1.0), speed: 0.0, range: 0.0 }
    }

    fn state(&self, id: i64, t: f64) -> HumanState {
        let p = self.from + self.dir.scale((self.speed * t).min(self.range));
        HumanState { id, pose: Pose2D::new(p.x, p.y, self.dir.y.atan2(self.dir.x)), keypoints: None, extra: Extra::new() }
    }
}

fn assemble(id: String, length: f64, states: Vec<(f64, Pose2D, Point2)>, humans: &[HumanPlan]) -> Trajectory {
    let n = states.len();
    let frames = (0..n)
        .map(|i| {
            let (t, pose, v) = states[i];
            let (a, b) = match (i.checked_sub(1), i + 1 < n) {
                (Some(p), true) => (p, i + 1),
                (None, true) => (i, i + 1),
                (Some(p), false) => (p, i),
                (None, false) => (i, i),
            };
            let span = states[b].0 - states[a].0;
            let angular = if span > 0.0 { normalize_angle(states[b].1.theta - states[a].1.theta) / span } else { 0.0 };
            Frame {
                timestamp: t,
                robot_pose: pose,
                robot_speed: Twist2D { linear_x: v.x, linear_y: v.y, angular },
                humans: humans.iter().enumerate().map(|(k, h)| h.state(k as i64 + 1, t)).collect(),
                objects: vec![],
                extra: Extra::new(),
            }
        })
        .collect();
    Trajectory {
        id,
        robot: RobotSpec { drive: Drive::Differential, shape: Shape2D::circle(ROBOT_RADIUS), extra: Extra::new() },
        task: Task {
            task_type: TaskType::GoTo,
            target_position: Some(Point2::new(0.0, length)),
            position_threshold: Some(0.3),
            target_orientation: Some(FRAC_PI_2),
            orientation_threshold: Some(1.0),
            human_id: None,
            context: String::new(),
            extra: Extra::new(),
        },
        environment: room(length),
        frames,
        extra: Extra::new(),
    }
}

fn scenario_humans(scenario: SweepScenario, length: f64, human_speed: f64) -> Vec<HumanPlan> {
    let mid = length / 2.0;
    match scenario {
        SweepScenario::OneStaticHuman => vec![HumanPlan::fixed(0.0, mid)],
        SweepScenario::ThreeStaticHumans => {
            vec![HumanPlan::fixed(0.0, mid), HumanPlan::fixed(-1.0, mid + 0.8), HumanPlan::fixed(1.0, mid + 0.8)]
        }
        SweepScenario::ApproachingHuman => vec![HumanPlan {
            from: Point2::new(0.0, length),
            dir: Point2::new(0.0, -1.0),
            speed: human_speed,
            range: length,
        }],
    }
}

/// One sweep trajectory.
pub fn sweep_trajectory(spec: &SweepSpec, deviation: f64, speed: f64) -> Trajectory {
    let id = format!("sweep/{}/v{:.2}/d{:+.3}.json", spec.scenario.as_str(), speed, deviation);
    let states = robot_states(deviation, spec.length, speed, spec.dt, 1.0);
    assemble(id, spec.length, states, &scenario_humans(spec.scenario, spec.length, spec.human_speed))
}

/// All sweep trajectories, speed-major then deviation in increasing order.
pub fn generate_sweep(spec: &SweepSpec) -> Result<Vec<SweepItem>, String> {
    spec.validate()?;
    let deviations = spec.deviations();
    Ok(spec
        .speeds
        .iter()
        .flat_map(|&speed| {
            deviations.iter().map(move |&deviation| SweepItem {
                scenario: spec.scenario,
                deviation,
                speed,
                trajectory: sweep_trajectory(spec, deviation, speed),
            })
        })
        .collect())
}

/// The reference rule behind the synthetic corpus: a deterministic score in
/// `[0, 1]` for a trajectory under a context. A preferred speed and comfort
/// distance follow from the context; the score multiplies a speed match,
/// a clearance term, a detour penalty whose strength grows with urgency, and
/// penalties for collisions and for not reaching the goal.
pub fn synthetic_score(t: &Trajectory, c: &ContextVector, params: &FeatureParams) -> f64 {
    let get = |name: &str| c.get(name).unwrap_or(0.5);
    let (urgency, risk, keep_h, speed_pref, bump_h) = (
        get("ctx_urgency"),
        get("ctx_risk"),
        get("ctx_distance_humans"),
        get("ctx_speed"),
        get("ctx_bump_human_justified"),
    );
    let metrics = trajectory_metrics(t, params);
    let last = metrics.last().copied().unwrap_or_default();
    let path: f64 = t
        .frames
        .windows(2)
        .map(|w| w[1].robot_pose.position().distance(w[0].robot_pose.position()))
        .sum();
    let v = if t.duration() > 0.0 { path / t.duration() } else { 0.0 };

    let v_pref = 0.15 + 0.9 * speed_pref + 0.3 * urgency - 0.2 * risk;
    let v_tol = 0.15 + 0.25 * v_pref;
    let speed_term = (-(v - v_pref).powi(2) / (2.0 * v_tol * v_tol)).exp();

    let comfort = 0.3 + keep_h;
    let d_min = last.min_human_dist_so_far;
    let x = (d_min / comfort).clamp(0.0, 1.0);
    let mut safety = x * x * (3.0 - 2.0 * x);
    if metrics.iter().any(|m| m.collided_human) {
        safety *= 0.05 + 0.3 * bump_h;
    }
    let safety = 0.1 + 0.9 * safety;

    let detour = last.path_efficiency.powf(1.0 + 3.0 * urgency);
    let goal = if metrics.iter().any(|m| m.goal_reached) { 1.0 } else { 0.25 };
    let wall = if metrics.iter().any(|m| m.collided_wall || m.collided_object) { 0.3 } else { 1.0 };
    (0.02 + 0.96 * speed_term * safety * detour * goal * wall).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub trajectories: usize,
    pub raters: usize,
    /// Raters who follow the reference rule with small noise; the rest answer mostly at random.
    pub consistent_raters: usize,
    /// Raters (counted in `raters`) who skip one repeated control.
    pub incomplete_raters: usize,
    /// Non-control ratings per rater.
    pub ratings_per_rater: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            trajectories: 300,
            raters: 36,
            consistent_raters: 22,
            incomplete_raters: 2,
            ratings_per_rater: 60,
            dt: 0.5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub trajectories: Vec<Trajectory>,
    pub raters: Vec<RaterRecord>,
    pub control: ControlSet,
    /// Context assigned to each control trajectory, in control order.
    pub control_contexts: Vec<String>,
}

fn corpus_trajectory(i: usize, dt: f64, rng: &mut ChaCha8Rng) -> Trajectory {
    let length = rng.random_range(4.0..8.0);
    let deviation = rng.random_range(-2.5..2.5);
    let speed = (rng.random_range(0.15f64.ln()..1.8f64.ln())).exp();
    let stop = if rng.random_bool(0.1) { rng.random_range(0.5..0.9) } else { 1.0 };
    let humans = match rng.random_range(0..4) {
        0 => vec![],
        1 => vec![HumanPlan::fixed(rng.random_range(-0.6..0.6), length * rng.random_range(0.3..0.7))],
        2 => {
            let y = length * rng.random_range(0.4..0.6);
            let spread = rng.random_range(0.8..1.4);
            vec![HumanPlan::fixed(0.0, y), HumanPlan::fixed(-spread, y + 0.8), HumanPlan::fixed(spread, y + 0.8)]
        }
        _ => vec![HumanPlan {
            from: Point2::new(rng.random_range(-0.5..0.5), length),
            dir: Point2::new(0.0, -1.0),
            speed: rng.random_range(0.3..0.9),
            range: length,
        }],
    };
    let states = robot_states(deviation, length, speed, dt, stop);
    assemble(format!("synthetic/{i:04}.json"), length, states, &humans)
}

/// Generates trajectories, a control set and raters scoring them under the
/// given contexts with [`synthetic_score`] plus per-rater noise.
pub fn synthetic_corpus(cfg: &CorpusConfig, contexts: &[(String, ContextVector)]) -> Result<Corpus, String> {
    if contexts.is_empty() {
        return Err("at least one context is required".into());
    }
    if cfg.trajectories <= CONTROL_COUNT || cfg.consistent_raters > cfg.raters || cfg.incomplete_raters > cfg.raters {
        return Err(format!("inconsistent corpus configuration {cfg:?}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let trajectories: Vec<Trajectory> = (0..cfg.trajectories).map(|i| corpus_trajectory(i, cfg.dt, &mut rng)).collect();
    let params = FeatureParams::default();

    let control_ids: Vec<String> = trajectories[..CONTROL_COUNT].iter().map(|t| t.id.clone()).collect();
    let control = ControlSet::new(control_ids.clone(), control_ids[..REPEATED_COUNT].to_vec()).map_err(|e| e.to_string())?;
    let control_ctx: Vec<usize> = (0..CONTROL_COUNT).map(|k| k % contexts.len()).collect();
    let truth = |t: usize, c: usize| synthetic_score(&trajectories[t], &contexts[c].1, &params);
    let control_truth: Vec<f64> = (0..CONTROL_COUNT).map(|k| truth(k, control_ctx[k])).collect();

    let genders = Gender::ALL;
    let mut raters = Vec::with_capacity(cfg.raters);
    for r in 0..cfg.raters {
        let consistent = r < cfg.consistent_raters;
        let bias = Normal::new(0.0, 0.03).unwrap().sample(&mut rng);
        let noise = Normal::new(0.0, rng.random_range(0.02..0.07)).unwrap();
        let answer = |truth: f64, rng: &mut ChaCha8Rng| -> f64 {
            let s = if consistent {
                truth + bias + noise.sample(rng)
            } else {
                0.2 * truth + 0.8 * rng.random::<f64>()
            };
            s.clamp(0.0, 1.0)
        };
        // Presentation order: controls, repeats and regular items shuffled,
        // with each repeat after its first presentation.
        let mut slots: Vec<(usize, usize, f64)> = Vec::new();
        for k in 0..CONTROL_COUNT {
            slots.push((k, control_ctx[k], control_truth[k]));
        }
        for _ in 0..cfg.ratings_per_rater {
            let t = rng.random_range(CONTROL_COUNT..trajectories.len());
            let c = rng.random_range(0..contexts.len());
            slots.push((t, c, truth(t, c)));
        }
        slots.shuffle(&mut rng);
        for k in 0..REPEATED_COUNT {
            let first = slots.iter().position(|s| s.0 == k).unwrap();
            let at = rng.random_range(first + 1..=slots.len());
            slots.insert(at, (k, control_ctx[k], control_truth[k]));
        }
        let mut ratings: Vec<Rating> = slots
            .into_iter()
            .map(|(t, c, s)| Rating { trajectory_id: trajectories[t].id.clone(), context: contexts[c].0.clone(), score: answer(s, &mut rng) })
            .collect();
        if r >= cfg.raters - cfg.incomplete_raters {
            let last_repeat = ratings.iter().rposition(|x| x.trajectory_id == control.repeated()[0]).unwrap();
            ratings.remove(last_repeat);
        }
        raters.push(RaterRecord {
            id: format!("rater_{r:03}"),
            age: rng.random_range(18..70),
            gender: genders[rng.random_range(0..genders.len())],
            country: ["ES", "GB", "US", "DE", "IN"][rng.random_range(0..5)].into(),
            ratings,
            extra: Extra::new(),
        });
    }
    let control_contexts = control_ctx.iter().map(|&c| contexts[c].0.clone()).collect();
    Ok(Corpus { trajectories, raters, control, control_contexts })
}

/// Writes a corpus in the dataset directory layout, plus `controls.json`.
pub fn write_corpus(root: impl AsRef<Path>, corpus: &Corpus) -> std::io::Result<()> {
    let root = root.as_ref();
    for t in &corpus.trajectories {
        let path = root.join(TRAJECTORIES_DIR).join(&t.id);
        std::fs::create_dir_all(path.parent().unwrap())?;
        std::fs::write(path, serialize_trajectory(t))?;
    }
    std::fs::create_dir_all(root.join(RATINGS_DIR))?;
    for r in &corpus.raters {
        std::fs::write(root.join(RATINGS_DIR).join(format!("{}.json", r.id)), serialize_rater_record(r))?;
    }
    let mut controls = serde_json::to_vec(&corpus.control).map_err(std::io::Error::other)?;
    controls.push(b'\n');
    std::fs::write(root.join(CONTROLS_FILE), controls)
}
