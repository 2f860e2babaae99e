use std::path::PathBuf;

use thiserror::Error;

use crate::rng::RngError;
use crate::world::{AgentId, AgeGroup, LocationId, LocationType};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("agent has no home assignment")]
    MissingHome,
    #[error("unknown location id {0}")]
    UnknownLocation(LocationId),
    #[error("unknown agent id {0}")]
    UnknownAgent(AgentId),
    #[error("location {id} is {actual}, expected {expected}")]
    WrongVenueKind {
        id: LocationId,
        expected: LocationType,
        actual: LocationType,
    },
    #[error("living agent {0} cannot be moved to the cemetery")]
    LivingAgentToCemetery(AgentId),
    #[error("dead agent {0} cannot leave the cemetery")]
    DeadAgentLeavingCemetery(AgentId),
    #[error("agent {0} is already infected")]
    AlreadyInfected(AgentId),
    #[error("time {t} days precedes the transmission time {transmission} days")]
    BeforeTransmission { t: f64, transmission: f64 },
    #[error("invalid age group index {0}, expected 0..=5")]
    InvalidAgeGroup(usize),
    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParameter { name: String, detail: String },
    #[error("schedule conflict: {0}")]
    ScheduleConflict(String),
    #[error("{file}, row {row}: {detail}")]
    Schema {
        file: String,
        row: usize,
        detail: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("series `{series}` has length {simulated}, reported has {reported}")]
    LengthMismatch {
        series: &'static str,
        simulated: usize,
        reported: usize,
    },
    #[error("infeasible population: {0}")]
    Infeasible(String),
    #[error("age group {group} needs {required} initial infections but only {available} agents are susceptible")]
    InsufficientSusceptibles {
        group: AgeGroup,
        required: usize,
        available: usize,
    },
    #[error("run {run} failed: {detail}")]
    RunFailed { run: usize, detail: String },
    #[error(transparent)]
    Rng(#[from] RngError),
}

impl Error {
    pub(crate) fn param(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name: name.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
