use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} {what}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("grid of {count} postures exceeds cap {cap}; use fewer divisions")]
    GridTooLarge { count: u128, cap: usize },
    #[error("perturbation rejected after {attempts} resamples: {reason}")]
    PerturbationRejected { attempts: usize, reason: String },
    #[error("quasi-static settle did not converge after {iterations} iterations (residual {residual:.3e} N·mm)")]
    SettleDiverged { iterations: usize, residual: f64 },
    #[error("model file: unsupported format version {0}")]
    Version(u32),
    #[error("model file: shape mismatch: {0}")]
    Shape(String),
    #[error("model file: corrupt: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}

pub(crate) fn check_finite(what: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
