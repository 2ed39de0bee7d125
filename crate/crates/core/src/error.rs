use thiserror::Error;

/// Error taxonomy shared by every module.  The CLI maps these onto exit
/// codes: config/domain problems are caller errors, accuracy failures mean a
/// tolerance could not be certified, resource failures mean a dimension cap
/// was exceeded.
#[derive(Debug, Error)]
pub enum FluxError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate ground state: {0}")]
    Degeneracy(String),

    #[error("accuracy not certified: {0}")]
    Accuracy(String),

    #[error("resource cap exceeded: {0}")]
    Resource(String),

    #[error("operation needs a full spectrum: {0}")]
    Capability(String),

    #[error("path passes through a closing gap at parameter {at}: gap {gap:.3e} below floor {floor:.3e}")]
    PathDegeneracy { at: f64, gap: f64, floor: f64 },

    #[error("loop too large for the gap margin: {0}")]
    LoopTooLarge(String),

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, FluxError>;
