use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("resource cap exceeded: {what} needs {size:.0} > cap {cap}")]
    Resource { what: String, size: f64, cap: u64 },
    #[error("positivity violated: {0}")]
    Positivity(String),
    #[error("degenerate model: {0}")]
    Degenerate(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("divergence at iteration {iteration}: |lambda|_inf = {norm}")]
    Divergence { iteration: usize, norm: f64 },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
