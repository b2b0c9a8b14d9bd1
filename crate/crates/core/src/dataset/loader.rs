//! Dataset directory layout: `<root>/trajectories/<source>/<name>.json` and
//! `<root>/ratings/<rater>.json`.

use std::collections::HashSet;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use walkdir::WalkDir;

use super::codec::{parse_rater_record, parse_trajectory, FormatError};
use super::types::{RaterRecord, Trajectory};

pub const TRAJECTORIES_DIR: &str = "trajectories";
pub const RATINGS_DIR: &str = "ratings";

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Format {
        path: PathBuf,
        #[source]
        source: FormatError,
    },
}

/// A rating whose trajectory identifier does not resolve to a loaded file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DanglingReference {
    pub rater_id: String,
    pub rating_index: usize,
    pub trajectory_id: String,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub trajectories: Vec<Trajectory>,
    pub raters: Vec<RaterRecord>,
    pub dangling: Vec<DanglingReference>,
}

impl Dataset {
    pub fn trajectory(&self, id: &str) -> Option<&Trajectory> {
        self.trajectories
            .binary_search_by(|t| t.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.trajectories[i])
    }
}

fn relative_id(base: &Path, path: &Path, strip_ext: bool) -> String {
    let rel = path.strip_prefix(base).unwrap_or(path);
    let rel = if strip_ext { rel.with_extension("") } else { rel.to_path_buf() };
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

fn json_files(dir: &Path, strip_ext: bool) -> Result<Vec<(String, PathBuf)>, LoadError> {
    if !dir.is_dir() {
        return Err(LoadError::Io {
            path: dir.to_path_buf(),
            source: io::Error::new(io::ErrorKind::NotFound, "directory not found"),
        });
    }
    let mut out = Vec::new();
    for entry in WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| LoadError::Io {
            path: e.path().map(Path::to_path_buf).unwrap_or_else(|| dir.to_path_buf()),
            source: e.into_io_error().unwrap_or_else(|| io::Error::other("walk error")),
        })?;
        let path = entry.path();
        if entry.file_type().is_file() && path.extension().is_some_and(|e| e == "json") {
            out.push((relative_id(dir, path, strip_ext), path.to_path_buf()));
        }
    }
    Ok(out)
}

/// `(identifier, path)` for every trajectory file, sorted by identifier.
pub fn trajectory_files(root: &Path) -> Result<Vec<(String, PathBuf)>, LoadError> {
    json_files(&root.join(TRAJECTORIES_DIR), false)
}

/// `(rater id, path)` for every ratings file, sorted by id.
pub fn rating_files(root: &Path) -> Result<Vec<(String, PathBuf)>, LoadError> {
    json_files(&root.join(RATINGS_DIR), true)
}

fn read(path: &Path) -> Result<Vec<u8>, LoadError> {
    std::fs::read(path).map_err(|source| LoadError::Io { path: path.to_path_buf(), source })
}

pub fn load_trajectory_file(id: &str, path: &Path) -> Result<Trajectory, LoadError> {
    let mut t = parse_trajectory(&read(path)?).map_err(|source| LoadError::Format { path: path.to_path_buf(), source })?;
    t.id = id.to_string();
    Ok(t)
}

pub fn load_rater_file(id: &str, path: &Path) -> Result<RaterRecord, LoadError> {
    let mut r = parse_rater_record(&read(path)?).map_err(|source| LoadError::Format { path: path.to_path_buf(), source })?;
    r.id = id.to_string();
    Ok(r)
}

/// Loads every trajectory and ratings file under `root`. Files are parsed in
/// parallel; the first malformed file aborts the load. Ratings that point at
/// missing trajectories are reported in [`Dataset::dangling`], not rejected.
pub fn load_dataset(root: &Path) -> Result<Dataset, LoadError> {
    let trajectories = trajectory_files(root)?
        .par_iter()
        .map(|(id, path)| load_trajectory_file(id, path))
        .collect::<Result<Vec<_>, _>>()?;
    let raters = rating_files(root)?
        .par_iter()
        .map(|(id, path)| load_rater_file(id, path))
        .collect::<Result<Vec<_>, _>>()?;

    let known: HashSet<&str> = trajectories.iter().map(|t| t.id.as_str()).collect();
    let dangling = raters
        .iter()
        .flat_map(|r| {
            r.ratings.iter().enumerate().filter_map(|(i, rating)| {
                (!known.contains(rating.trajectory_id.as_str())).then(|| DanglingReference {
                    rater_id: r.id.clone(),
                    rating_index: i,
                    trajectory_id: rating.trajectory_id.clone(),
                })
            })
        })
        .collect();
    Ok(Dataset { trajectories, raters, dangling })
}
