use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use socnav_core::dataset::{Gender, RaterRecord, Rating};

use crate::assign::Assignment;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demographics {
    pub age: u32,
    pub gender: Gender,
    pub country: String,
}

const MAX_COUNTRY_LEN: usize = 100;

impl Demographics {
    /// Validates a request body. Errors are messages for a 400 response.
    pub fn from_json(v: &Value) -> Result<Self, String> {
        let obj = v.as_object().ok_or("expected a JSON object")?;
        let age = obj.get("age").and_then(Value::as_u64).ok_or("age must be a positive integer")?;
        if !(1..=130).contains(&age) {
            return Err("age must be within [1, 130]".into());
        }
        let gender = obj
            .get("gender")
            .and_then(Value::as_str)
            .and_then(|g| Gender::ALL.into_iter().find(|x| x.as_str() == g))
            .ok_or_else(|| format!("gender must be one of {:?}", Gender::ALL.map(Gender::as_str)))?;
        let country = obj.get("country").and_then(Value::as_str).map(str::trim).unwrap_or_default();
        if country.is_empty() || country.chars().count() > MAX_COUNTRY_LEN {
            return Err("country must be a non-empty string".into());
        }
        Ok(Self { age: age as u32, gender, country: country.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Rating,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySession {
    pub id: String,
    pub demographics: Demographics,
    pub assignments: Vec<Assignment>,
    pub scores: Vec<f64>,
    pub state: SessionState,
    /// Unix seconds.
    pub created_at: u64,
    pub updated_at: u64,
}

impl SurveySession {
    pub fn cursor(&self) -> usize {
        self.scores.len()
    }

    pub fn all_answered(&self) -> bool {
        self.scores.len() == self.assignments.len()
    }

    pub fn rater_record(&self) -> RaterRecord {
        RaterRecord {
            id: self.id.clone(),
            age: self.demographics.age,
            gender: self.demographics.gender,
            country: self.demographics.country.clone(),
            ratings: self
                .assignments
                .iter()
                .zip(&self.scores)
                .map(|(a, s)| Rating { trajectory_id: a.trajectory.clone(), context: a.context.clone(), score: *s })
                .collect(),
            extra: Default::default(),
        }
    }
}

/// Write-to-temp then rename, so readers see the old file or the new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    use std::io::Write;
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("file");
    let tmp = dir.join(format!(".{name}.{}.tmp", uuid::Uuid::new_v4().simple()));
    let result = (|| {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = std::fs::remove_file(&tmp);
    }
    result
}
