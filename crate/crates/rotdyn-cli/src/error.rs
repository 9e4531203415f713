use rotdyn::branches::BranchError;
use rotdyn::cover::CoverError;
use rotdyn::invsets::InvError;
use rotdyn::mapzoo::ZooError;
use rotdyn::rotset::RotError;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const INTERNAL: i32 = 1;
    pub const SCHEMA: i32 = 2;
    pub const REFUSED: i32 = 3;
    pub const INCONCLUSIVE: i32 = 4;
    pub const ASSERTION: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    /// Config does not match the schema or is semantically invalid.
    #[error("invalid config {0}")]
    Schema(String),
    /// A numerical precondition of the operation does not hold.
    #[error("refused: {0}")]
    Refused(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => exit::SCHEMA,
            CliError::Refused(_) => exit::REFUSED,
            CliError::Io(_) | CliError::Internal(_) => exit::INTERNAL,
        }
    }
}

impl From<ZooError> for CliError {
    fn from(e: ZooError) -> Self {
        match e {
            ZooError::Precondition(_) | ZooError::FixedPoint { .. } | ZooError::NotMonotone { .. } => {
                CliError::Refused(e.to_string())
            }
            ZooError::NonFinite { .. } => CliError::Internal(e.to_string()),
        }
    }
}

impl From<InvError> for CliError {
    fn from(e: InvError) -> Self {
        match e {
            InvError::InvalidGrid(_) | InvError::ZeroHorizon | InvError::CurvesCross => CliError::Schema(e.to_string()),
            InvError::NotAttracting { .. } | InvError::Classification(_) => CliError::Refused(e.to_string()),
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<CoverError> for CliError {
    fn from(e: CoverError) -> Self {
        match e {
            CoverError::ZeroHorizon | CoverError::HorizonTooLarge { .. } | CoverError::EmptyWindow => {
                CliError::Schema(e.to_string())
            }
            _ => CliError::Refused(e.to_string()),
        }
    }
}

impl From<RotError> for CliError {
    fn from(e: RotError) -> Self {
        match e {
            RotError::Horizon { .. } | RotError::Schedule(_) => CliError::Schema(e.to_string()),
            RotError::Cover(c) => c.into(),
            RotError::Region(r) => r.into(),
            RotError::Zoo(z) => z.into(),
            RotError::NoReturningOrbits | RotError::NoInvariantMass => CliError::Refused(e.to_string()),
        }
    }
}

impl From<BranchError> for CliError {
    fn from(e: BranchError) -> Self {
        match e {
            BranchError::Region(r) => r.into(),
            BranchError::Rotation(r) => r.into(),
            BranchError::Config(_) => CliError::Schema(e.to_string()),
            BranchError::Refused(_) | BranchError::NotInSet { .. } | BranchError::WindowOverflow { .. } => {
                CliError::Refused(e.to_string())
            }
            BranchError::NonFinite => CliError::Internal(e.to_string()),
        }
    }
}
