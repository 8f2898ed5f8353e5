//! Exit-code classification: 1 for bad input or usage, 2 for failures while
//! computing (non-convergence, non-finite values, write errors).

use std::fmt::Display;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(msg: impl Display) -> Self {
        Failure { code: 1, error: anyhow::anyhow!("{msg}") }
    }

    pub fn runtime(msg: impl Display) -> Self {
        Failure { code: 2, error: anyhow::anyhow!("{msg}") }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub trait ResultExt<T> {
    fn usage(self) -> CmdResult<T>;
    fn runtime(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> ResultExt<T> for Result<T, E> {
    fn usage(self) -> CmdResult<T> {
        self.map_err(|e| Failure { code: 1, error: e.into() })
    }

    fn runtime(self) -> CmdResult<T> {
        self.map_err(|e| Failure { code: 2, error: e.into() })
    }
}

impl From<aq_core::eval::ExperimentError> for Failure {
    fn from(e: aq_core::eval::ExperimentError) -> Self {
        let code = if e.is_validation() { 1 } else { 2 };
        Failure { code, error: e.into() }
    }
}
