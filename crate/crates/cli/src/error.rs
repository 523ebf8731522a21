use std::fmt;

use posegate_core::db::DbError;
use posegate_core::eval::{BenchError, EvalError};
use posegate_core::features::FeatureError;
use posegate_core::gate::{GateError, PredictError};
use posegate_core::synth::SynthError;
use posegate_core::tune::TuneError;

/// A failure with its process exit code: 2 for bad input or configuration,
/// 3 for data that is missing.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    MissingData(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::MissingData(_) => 3,
        }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        Self::Config(msg.to_string())
    }

    pub fn missing(msg: impl fmt::Display) -> Self {
        Self::MissingData(msg.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) | Self::MissingData(m) => f.write_str(m),
        }
    }
}

fn io_kind_missing(e: &std::io::Error) -> bool {
    e.kind() == std::io::ErrorKind::NotFound
}

impl From<DbError> for CliError {
    fn from(e: DbError) -> Self {
        match &e {
            DbError::Io { source, .. } if io_kind_missing(source) => Self::missing(e),
            DbError::UnknownImage(_) | DbError::UnknownEntry(_) => Self::missing(e),
            DbError::Feature(f) => f_to_cli(f, e.to_string()),
            _ => Self::config(e),
        }
    }
}

fn f_to_cli(e: &FeatureError, msg: String) -> CliError {
    match e {
        FeatureError::MissingDescriptors(_) => CliError::MissingData(msg),
        FeatureError::Io { source, .. } if io_kind_missing(source) => CliError::MissingData(msg),
        _ => CliError::Config(msg),
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        let msg = e.to_string();
        f_to_cli(&e, msg)
    }
}

impl From<GateError> for CliError {
    fn from(e: GateError) -> Self {
        match e {
            GateError::MissingDescriptors(_) => Self::missing(e),
            GateError::PredictionFailure {
                source: PredictError::UnknownImage(_),
                ..
            } => Self::missing(e),
            GateError::Db(d) => d.into(),
            GateError::Feature(f) => f.into(),
            _ => Self::config(e),
        }
    }
}

impl From<TuneError> for CliError {
    fn from(e: TuneError) -> Self {
        match e {
            TuneError::MissingDescriptors(_) | TuneError::UnknownAnchor(_) => Self::missing(e),
            TuneError::Db(d) => d.into(),
            TuneError::Feature(f) => f.into(),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::MissingGroundTruth(_) => Self::missing(e),
            _ => Self::config(e),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Db(d) => d.into(),
            SynthError::Feature(f) => f.into(),
            _ => Self::config(e),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        Self::config(e)
    }
}
