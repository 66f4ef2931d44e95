//! Synthetic grasp scenes: a posed capsule hand holding an analytic
//! primitive, exact signed-distance labels, depth renders and the dataset
//! files they are stored in.

mod format;
mod generate;
mod primitive;


use std::path::PathBuf;

pub use format::*;
pub use generate::*;
pub use primitive::*;

pub const MAGIC: &[u8; 4] = b"ASDF";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("scene seed {seed}: no valid placement after {retries} attempts")]
    RetriesExhausted { seed: u64, retries: usize },
    #[error("scene seed {seed}: object centroid {t_o:?} outside the heatmap cube of half width {half_width}")]
    Unreachable { seed: u64, t_o: [f64; 3], half_width: f64 },
    #[error("{}: {msg}", file.display())]
    Format { file: PathBuf, msg: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest lists {expected} samples but {found} are present")]
    Count { expected: usize, found: usize },
    #[error("invalid generation config: {0}")]
    Config(String),
}
