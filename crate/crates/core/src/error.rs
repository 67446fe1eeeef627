use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("lattice contains no occupied cell")]
    EmptyMask,

    #[error("infeasible geometry: {0}")]
    InfeasibleGeometry(String),

    #[error("bad dimensions: {0}")]
    DimensionError(String),

    #[error("malformed file: {0}")]
    FormatError(String),

    #[error("unsupported format version {found} (supported: {supported})")]
    VersionError { found: u32, supported: u32 },

    #[error("time step too coarse: gamma*max|dB|*dt = {phase:.3} rad exceeds 0.5 rad")]
    StepTooCoarse { phase: f64 },

    #[error("signal is identically zero, cannot normalize")]
    ZeroSignal,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("degenerate mixture component {component}: responsibility mass {mass:.3e}")]
    DegenerateComponent { component: usize, mass: f64 },

    #[error("degenerate sample: all values identical in both samples")]
    DegenerateSample,

    #[error("empty ROI")]
    EmptyRoi,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("entry {index}: {source}")]
    Entry {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("voxel ({x},{y},{z}): {source}")]
    Voxel {
        x: usize,
        y: usize,
        z: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_entry(self, index: usize) -> Error {
        Error::Entry {
            index,
            source: Box::new(self),
        }
    }

    pub fn at_voxel(self, x: usize, y: usize, z: usize) -> Error {
        Error::Voxel {
            x,
            y,
            z,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
