use std::fmt;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_BUDGET: u8 = 4;

/// An error together with the process exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(code: u8, error: impl Into<anyhow::Error>) -> Self {
        Failure {
            code,
            error: error.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.error)
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub trait OrExit<T> {
    fn or_exit(self, code: u8) -> CliResult<T>;

    fn or_input(self) -> CliResult<T>
    where
        Self: Sized,
    {
        self.or_exit(EXIT_INPUT)
    }

    fn or_config(self) -> CliResult<T>
    where
        Self: Sized,
    {
        self.or_exit(EXIT_CONFIG)
    }

    fn or_other(self) -> CliResult<T>
    where
        Self: Sized,
    {
        self.or_exit(EXIT_OTHER)
    }
}

impl<T, E: Into<anyhow::Error>> OrExit<T> for Result<T, E> {
    fn or_exit(self, code: u8) -> CliResult<T> {
        self.map_err(|e| Failure::new(code, e))
    }
}

pub fn config_error(message: impl fmt::Display) -> Failure {
    Failure::new(EXIT_CONFIG, anyhow::anyhow!("{message}"))
}

pub fn input_error(message: impl fmt::Display) -> Failure {
    Failure::new(EXIT_INPUT, anyhow::anyhow!("{message}"))
}
