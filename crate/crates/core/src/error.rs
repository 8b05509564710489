use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("x = {x} is outside the domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("invalid map definition: {0}")]
    Spec(String),
    #[error("expression error: {0}")]
    Expr(String),
    #[error("nothing to stabilize: found {found} equilibria")]
    NothingToStabilize { found: usize },
    #[error("equilibrium K{index} = {value} has infinite one-sided constants on both sides")]
    Uncontrollable { index: usize, value: f64 },
    #[error("analysis failed: {0}")]
    Analysis(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
