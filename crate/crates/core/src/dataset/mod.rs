//! Rated trajectory dataset: domain types, file codec and directory loader.

mod codec;
mod loader;
mod types;

pub use codec::{
    parse_rater_record, parse_trajectory, serialize_rater_record, serialize_trajectory, validate_rater_record,
    validate_trajectory, FormatError,
};
pub use loader::{
    load_dataset, load_rater_file, load_trajectory_file, rating_files, trajectory_files, DanglingReference, Dataset,
    LoadError, RATINGS_DIR, TRAJECTORIES_DIR,
};
pub use types::*;
