use thiserror::Error;

use crate::expr::ExprError;
use crate::operator::ValidationError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("singular tridiagonal system at row {row}")]
    SingularMatrix { row: usize },
}
