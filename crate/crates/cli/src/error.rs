use std::path::{Path, PathBuf};
use thiserror::Error;
use tiptail::detection::DetectionError;
use tiptail::eval::EvalError;
use tiptail::nn::checkpoint::CheckpointError;
use tiptail::nn::NnError;
use tiptail::stereo::StereoError;
use tiptail::synth::SynthError;
use tiptail::trajectory::TrajectoryError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("{}: {source}", path.display())]
    Data {
        path: PathBuf,
        #[source]
        source: TrajectoryError,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Detection(#[from] DetectionError),
    #[error(transparent)]
    Stereo(#[from] StereoError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Model(#[from] NnError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{0}")]
    Invalid(String),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl CliError {
    /// Process exit status. 2 is left to argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Image { .. } | CliError::Data { .. } | CliError::Format { .. } => 5,
            CliError::Detection(_) | CliError::Stereo(_) => 6,
            CliError::Model(_) | CliError::Checkpoint(_) => 7,
            CliError::Synth(_) | CliError::Eval(_) | CliError::Invalid(_) => 8,
            CliError::GradCheck(_) => 9,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn data_err(path: &Path) -> impl FnOnce(TrajectoryError) -> CliError + '_ {
    move |source| CliError::Data {
        path: path.to_path_buf(),
        source,
    }
}

pub fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> CliError + '_ {
    move |source| CliError::Image {
        path: path.to_path_buf(),
        source,
    }
}
