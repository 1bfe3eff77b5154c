use std::process::ExitCode;

use fourns::bitree::BiTreeError;
use fourns::dynamics::DynamicsError;
use fourns::measure::MeasureError;
use fourns::normal_form::NormalFormError;
use fourns::spectral::SpectralError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("numerical guard tripped: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Io(_) => 3,
        })
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::PhaseOverflow | SpectralError::NonFinite(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<BiTreeError> for CliError {
    fn from(e: BiTreeError) -> Self {
        match e {
            BiTreeError::Spectral(inner) => inner.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<DynamicsError> for CliError {
    fn from(e: DynamicsError) -> Self {
        match e {
            DynamicsError::BlowUp { .. } => CliError::Numerical(e.to_string()),
            DynamicsError::Spectral(inner) => inner.into(),
            DynamicsError::Io(_) | DynamicsError::Csv(_) => CliError::Io(e.to_string()),
            DynamicsError::InvalidConfig(_) => CliError::Validation(e.to_string()),
        }
    }
}

impl From<NormalFormError> for CliError {
    fn from(e: NormalFormError) -> Self {
        match e {
            NormalFormError::ZeroDenominator { .. } | NormalFormError::PhaseBound { .. } => {
                CliError::Numerical(e.to_string())
            }
            NormalFormError::BiTree(inner) => inner.into(),
            NormalFormError::Dynamics(inner) => inner.into(),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<MeasureError> for CliError {
    fn from(e: MeasureError) -> Self {
        match e {
            MeasureError::Dynamics(inner) => inner.into(),
            MeasureError::NormalForm(inner) => inner.into(),
            MeasureError::InvalidConfig(_) => CliError::Validation(e.to_string()),
        }
    }
}
