use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use socnav_core::dataset::{load_trajectory_file, serialize_rater_record, trajectory_files, TRAJECTORIES_DIR};
use socnav_core::qa::{ControlSet, CONTROLS_FILE};

use crate::assign::{build_assignments, downsample, ItemKind};
use crate::config::SurveyConfig;
use crate::session::{write_atomic, Demographics, SessionState, SurveySession};

/// Unix seconds.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

#[derive(Debug, thiserror::Error)]
pub enum SurveyError {
    #[error("invalid survey configuration: {0}")]
    Config(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("unknown session")]
    NotFound,
    #[error("session is complete")]
    Gone,
    #[error("no pending item")]
    Conflict,
    #[error("trajectory pool exhausted")]
    PoolExhausted,
    #[error("unauthorized")]
    Unauthorized,
    #[error("{0}")]
    Internal(String),
}

impl SurveyError {
    fn internal(e: impl std::fmt::Display) -> Self {
        SurveyError::Internal(e.to_string())
    }
}

type Shared = Arc<tokio::sync::Mutex<SurveySession>>;

pub struct Survey {
    cfg: SurveyConfig,
    pool: Vec<String>,
    sessions_dir: PathBuf,
    ratings_dir: PathBuf,
    sessions: RwLock<HashMap<String, Shared>>,
    /// Questionnaires (active or complete) that include each pool item.
    usage: Mutex<HashMap<String, usize>>,
    rng: Mutex<ChaCha8Rng>,
    clock: Clock,
    expired: AtomicUsize,
    admin_token: Option<String>,
}

impl Survey {
    /// Opens the survey, reading the admin token from the configured
    /// environment variable.
    pub fn open(cfg: SurveyConfig) -> Result<Arc<Self>, SurveyError> {
        let token = std::env::var(&cfg.admin_token_env).ok().filter(|t| !t.is_empty());
        Self::open_with(cfg, system_clock(), token)
    }

    pub fn open_with(cfg: SurveyConfig, clock: Clock, admin_token: Option<String>) -> Result<Arc<Self>, SurveyError> {
        cfg.validate().map_err(SurveyError::Config)?;
        let known: BTreeSet<String> =
            trajectory_files(&cfg.dataset).map_err(|e| SurveyError::Config(e.to_string()))?.into_iter().map(|(id, _)| id).collect();
        let control_ids: BTreeSet<&str> = cfg.control.iter().map(|c| c.trajectory.as_str()).collect();
        if let Some(c) = control_ids.iter().find(|c| !known.contains(**c)) {
            return Err(SurveyError::Config(format!("control trajectory {c:?} not found in the dataset")));
        }
        let pool: Vec<String> = if cfg.pool.is_empty() { known.iter().cloned().collect() } else { cfg.pool.clone() };
        if let Some(p) = pool.iter().find(|p| !known.contains(*p)) {
            return Err(SurveyError::Config(format!("pool trajectory {p:?} not found in the dataset")));
        }
        let pool: Vec<String> = pool.into_iter().filter(|p| !control_ids.contains(p.as_str())).collect();

        let control = ControlSet::new(cfg.control.iter().map(|c| c.trajectory.clone()).collect(), cfg.repeated.clone())
            .map_err(|e| SurveyError::Config(e.to_string()))?;
        let controls_path = cfg.dataset.join(CONTROLS_FILE);
        if controls_path.exists() {
            let on_disk = ControlSet::load(&controls_path).map_err(|e| SurveyError::Config(e.to_string()))?;
            if on_disk != control {
                return Err(SurveyError::Config(format!("{} lists a different control set", controls_path.display())));
            }
        } else {
            let bytes = serde_json::to_vec_pretty(&control).map_err(SurveyError::internal)?;
            write_atomic(&controls_path, &bytes).map_err(SurveyError::internal)?;
        }

        let sessions_dir = cfg.state_dir.join("sessions");
        let ratings_dir = cfg.ratings_dir();
        std::fs::create_dir_all(&sessions_dir).map_err(SurveyError::internal)?;
        std::fs::create_dir_all(&ratings_dir).map_err(SurveyError::internal)?;
        let rng = match cfg.seed {
            Some(s) => ChaCha8Rng::seed_from_u64(s),
            None => ChaCha8Rng::from_os_rng(),
        };
        let survey = Survey {
            pool,
            sessions_dir,
            ratings_dir,
            sessions: RwLock::new(HashMap::new()),
            usage: Mutex::new(HashMap::new()),
            rng: Mutex::new(rng),
            clock,
            expired: AtomicUsize::new(0),
            admin_token,
            cfg,
        };
        survey.restore()?;
        Ok(Arc::new(survey))
    }

    pub fn config(&self) -> &SurveyConfig {
        &self.cfg
    }

    /// Reloads persisted sessions: finishes any whose last score was stored
    /// but whose ratings file was not, drops expired ones.
    fn restore(&self) -> Result<(), SurveyError> {
        let now = (self.clock)();
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&self.sessions_dir)
            .map_err(SurveyError::internal)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        entries.sort();
        let mut sessions = self.sessions.write().unwrap();
        let mut usage = self.usage.lock().unwrap();
        for path in entries {
            let bytes = std::fs::read(&path).map_err(SurveyError::internal)?;
            let mut s: SurveySession = serde_json::from_slice(&bytes)
                .map_err(|e| SurveyError::Internal(format!("{}: {e}", path.display())))?;
            if s.state == SessionState::Rating && s.all_answered() {
                self.finalize(&mut s)?;
            }
            if s.state == SessionState::Rating && self.is_stale(&s, now) {
                std::fs::remove_file(&path).map_err(SurveyError::internal)?;
                self.expired.fetch_add(1, Ordering::Relaxed);
                continue;
            }
            for a in s.assignments.iter().filter(|a| a.kind == ItemKind::Regular) {
                *usage.entry(a.trajectory.clone()).or_default() += 1;
            }
            sessions.insert(s.id.clone(), Arc::new(tokio::sync::Mutex::new(s)));
        }
        Ok(())
    }

    fn is_stale(&self, s: &SurveySession, now: u64) -> bool {
        s.state == SessionState::Rating && now.saturating_sub(s.updated_at) > self.cfg.session_timeout_s
    }

    fn session_path(&self, id: &str) -> PathBuf {
        self.sessions_dir.join(format!("{id}.json"))
    }

    pub fn ratings_path(&self, id: &str) -> PathBuf {
        self.ratings_dir.join(format!("{id}.json"))
    }

    fn persist(&self, s: &SurveySession) -> Result<(), SurveyError> {
        let bytes = serde_json::to_vec(s).map_err(SurveyError::internal)?;
        write_atomic(&self.session_path(&s.id), &bytes).map_err(SurveyError::internal)
    }

    fn finalize(&self, s: &mut SurveySession) -> Result<(), SurveyError> {
        let mut bytes = serialize_rater_record(&s.rater_record());
        bytes.push(b'\n');
        write_atomic(&self.ratings_path(&s.id), &bytes).map_err(SurveyError::internal)?;
        s.state = SessionState::Complete;
        self.persist(s)
    }

    fn release(&self, s: &SurveySession) {
        let mut usage = self.usage.lock().unwrap();
        for a in s.assignments.iter().filter(|a| a.kind == ItemKind::Regular) {
            if let Some(n) = usage.get_mut(&a.trajectory) {
                *n = n.saturating_sub(1);
            }
        }
    }

    /// Drops in-progress sessions idle for longer than the timeout and frees
    /// their pool items. Returns how many expired.
    pub async fn expire_stale(&self) -> usize {
        let now = (self.clock)();
        let all: Vec<(String, Shared)> = self.sessions.read().unwrap().iter().map(|(k, v)| (k.clone(), v.clone())).collect();
        let mut n = 0;
        for (id, shared) in all {
            let s = shared.lock().await;
            if self.is_stale(&s, now) {
                self.drop_session(&id, &s);
                n += 1;
            }
        }
        n
    }

    fn drop_session(&self, id: &str, s: &SurveySession) {
        if self.sessions.write().unwrap().remove(id).is_some() {
            self.release(s);
            let _ = std::fs::remove_file(self.session_path(id));
            self.expired.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn get(&self, id: &str) -> Result<Shared, SurveyError> {
        self.sessions.read().unwrap().get(id).cloned().ok_or(SurveyError::NotFound)
    }

    /// Creates a session and returns its id and first playback bundle.
    pub async fn create(&self, demographics: Demographics) -> Result<(String, Value), SurveyError> {
        self.expire_stale().await;
        let need = self.cfg.regular_count();
        let (regular, assignments) = {
            let mut usage = self.usage.lock().unwrap();
            let mut rng = self.rng.lock().unwrap();
            let mut free: Vec<&String> =
                self.pool.iter().filter(|p| usage.get(*p).copied().unwrap_or(0) < self.cfg.ratings_per_trajectory).collect();
            if free.len() < need {
                return Err(SurveyError::PoolExhausted);
            }
            free.shuffle(&mut *rng);
            free.sort_by_key(|p| usage.get(*p).copied().unwrap_or(0));
            let regular: Vec<(String, String)> =
                free[..need].iter().map(|p| ((*p).clone(), self.cfg.contexts.draw(&mut *rng))).collect();
            for (p, _) in &regular {
                *usage.entry(p.clone()).or_default() += 1;
            }
            let assignments = build_assignments(regular.clone(), &self.cfg.control, &self.cfg.repeated, &mut *rng);
            (regular, assignments)
        };
        let now = (self.clock)();
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = SurveySession {
            id: id.clone(),
            demographics,
            assignments,
            scores: vec![],
            state: SessionState::Rating,
            created_at: now,
            updated_at: now,
        };
        if let Err(e) = self.persist(&session) {
            let mut usage = self.usage.lock().unwrap();
            for (p, _) in &regular {
                if let Some(n) = usage.get_mut(p) {
                    *n -= 1;
                }
            }
            return Err(e);
        }
        let bundle = self.bundle(&session)?;
        self.sessions.write().unwrap().insert(id.clone(), Arc::new(tokio::sync::Mutex::new(session)));
        Ok((id, bundle))
    }

    /// Playback bundle for the current item.
    pub async fn next(&self, id: &str) -> Result<Value, SurveyError> {
        let shared = self.get(id)?;
        let s = shared.lock().await;
        if s.state == SessionState::Complete {
            return Err(SurveyError::Gone);
        }
        if self.is_stale(&s, (self.clock)()) {
            self.drop_session(id, &s);
            return Err(SurveyError::NotFound);
        }
        self.bundle(&s)
    }

    /// Records a score for the current item. `item`, when given, must equal
    /// the current cursor.
    pub async fn score(&self, id: &str, score: f64, item: Option<usize>) -> Result<Value, SurveyError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(SurveyError::BadRequest("score must be within [0, 1]".into()));
        }
        let shared = self.get(id)?;
        let mut s = shared.lock().await;
        if s.state == SessionState::Complete {
            return Err(SurveyError::Conflict);
        }
        if self.is_stale(&s, (self.clock)()) {
            self.drop_session(id, &s);
            return Err(SurveyError::NotFound);
        }
        if item.is_some_and(|i| i != s.cursor()) {
            return Err(SurveyError::Conflict);
        }
        let before = s.clone();
        s.scores.push(score);
        s.updated_at = (self.clock)();
        let stored = if s.all_answered() { self.finalize(&mut s) } else { self.persist(&s) };
        if let Err(e) = stored {
            *s = before;
            return Err(e);
        }
        Ok(json!({
            "progress": {"done": s.cursor(), "total": s.assignments.len()},
            "complete": s.state == SessionState::Complete,
        }))
    }

    fn bundle(&self, s: &SurveySession) -> Result<Value, SurveyError> {
        let a = &s.assignments[s.cursor()];
        let path = self.cfg.dataset.join(TRAJECTORIES_DIR).join(&a.trajectory);
        let t = load_trajectory_file(&a.trajectory, &path).map_err(SurveyError::internal)?;
        let frames: Vec<Value> = downsample(&t.frames, self.cfg.playback_hz)
            .into_iter()
            .map(|f| {
                json!({
                    "timestamp": f.timestamp,
                    "robot_pose": f.robot_pose,
                    "humans": f.humans.iter().map(|h| json!({"id": h.id, "pose": h.pose})).collect::<Vec<_>>(),
                    "objects": f.objects.iter().map(|o| json!({"id": o.id, "type": o.type_text, "pose": o.pose, "shape": o.shape})).collect::<Vec<_>>(),
                })
            })
            .collect();
        Ok(json!({
            "session_id": s.id,
            "item": s.cursor(),
            "progress": {"done": s.cursor(), "total": s.assignments.len()},
            "context": a.context,
            "playback": {
                "robot": {"shape": t.robot.shape},
                "task": {
                    "type": t.task.task_type,
                    "target_position": t.task.target_position,
                    "position_threshold": t.task.position_threshold,
                    "target_orientation": t.task.target_orientation,
                    "orientation_threshold": t.task.orientation_threshold,
                    "human_id": t.task.human_id,
                },
                "environment": {"walls": t.environment.walls, "grid": t.environment.grid},
                "frames": frames,
            },
        }))
    }

    pub fn authorize(&self, header: Option<&str>) -> Result<(), SurveyError> {
        match (&self.admin_token, header.and_then(|h| h.strip_prefix("Bearer "))) {
            (Some(token), Some(given)) if given == token => Ok(()),
            _ => Err(SurveyError::Unauthorized),
        }
    }

    /// Counts, completion rate and the ratings files written by this survey.
    pub async fn export(&self) -> Value {
        let all: Vec<Shared> = self.sessions.read().unwrap().values().cloned().collect();
        let (mut active, mut files) = (0usize, Vec::new());
        for shared in all {
            let s = shared.lock().await;
            match s.state {
                SessionState::Complete => files.push(format!("{}.json", s.id)),
                SessionState::Rating => active += 1,
            }
        }
        files.sort();
        let expired = self.expired.load(Ordering::Relaxed);
        let completed = files.len();
        let started = active + completed + expired;
        let free = {
            let usage = self.usage.lock().unwrap();
            self.pool.iter().filter(|p| usage.get(*p).copied().unwrap_or(0) < self.cfg.ratings_per_trajectory).count()
        };
        json!({
            "sessions": {"active": active, "completed": completed, "expired": expired},
            "completion_rate": if started == 0 { 0.0 } else { completed as f64 / started as f64 },
            "pool": {"items": self.pool.len(), "available": free},
            "ratings_dir": self.ratings_dir,
            "files": files,
        })
    }
}
