use std::fmt;

/// Process exit codes.
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_REPLAY_MISMATCH: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub source: anyhow::Error,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn input(msg: impl fmt::Display) -> Self {
        CliError { code: EXIT_INPUT, source: anyhow::anyhow!("{msg}") }
    }

    pub fn diverged(msg: impl fmt::Display) -> Self {
        CliError { code: EXIT_DIVERGED, source: anyhow::anyhow!("{msg}") }
    }

    pub fn mismatch(msg: impl fmt::Display) -> Self {
        CliError { code: EXIT_REPLAY_MISMATCH, source: anyhow::anyhow!("{msg}") }
    }

    pub fn context(self, ctx: impl fmt::Display) -> Self {
        CliError { code: self.code, source: self.source.context(ctx.to_string()) }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

impl From<iblab::Error> for CliError {
    fn from(e: iblab::Error) -> Self {
        let code = match e {
            iblab::Error::Diverged { .. } => EXIT_DIVERGED,
            _ => EXIT_INPUT,
        };
        CliError { code, source: e.into() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError { code: EXIT_INPUT, source: e.into() }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError { code: EXIT_INPUT, source: e.into() }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError { code: EXIT_INPUT, source: e.into() }
    }
}

pub trait Context<T> {
    fn ctx(self, what: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for std::result::Result<T, E> {
    fn ctx(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| e.into().context(what))
    }
}
