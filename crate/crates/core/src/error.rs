use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("association failed for UE {ue}: {reason}")]
    Association { ue: usize, reason: String },
    #[error("invalid route table: {0}")]
    Route(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("lp solver: {0}")]
    Lp(#[from] crate::lp::LpError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub(crate) fn param<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Param(msg.into()))
}
