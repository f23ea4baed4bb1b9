use std::fmt;

/// Command-line failure with a stable machine-readable code.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    UnknownKey(String),
    Validation(String),
    Io(String),
    /// Numerical failure during a run (solver divergence, no crossings,
    /// every sweep row failed).
    Solver(String),
    /// A result file would have no data rows.
    EmptyResults(String),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Syntax { .. } => "SYNTAX_ERROR",
            CliError::UnknownKey(_) => "UNKNOWN_KEY",
            CliError::Validation(_) => "VALIDATION_ERROR",
            CliError::Io(_) => "IO_ERROR",
            CliError::Solver(_) => "SOLVER_ERROR",
            CliError::EmptyResults(_) => "EMPTY_RESULTS",
        }
    }

    /// Process exit status: 2 for numerical failures, 1 for everything the
    /// user can fix in the input.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(_) | CliError::EmptyResults(_) => 2,
            _ => 1,
        }
    }

    pub fn from_json(e: serde_json::Error) -> Self {
        use serde_json::error::Category;
        let msg = e.to_string();
        match e.classify() {
            Category::Syntax | Category::Eof => CliError::Syntax {
                line: e.line(),
                column: e.column(),
                message: msg,
            },
            Category::Io => CliError::Io(msg),
            Category::Data => match unknown_field(&msg) {
                Some(k) => CliError::UnknownKey(k),
                None => CliError::Validation(msg),
            },
        }
    }
}

fn unknown_field(msg: &str) -> Option<String> {
    let rest = msg.strip_prefix("unknown field `")?;
    Some(rest[..rest.find('`')?].to_string())
}

impl From<focusim_core::Error> for CliError {
    fn from(e: focusim_core::Error) -> Self {
        use focusim_core::Error as E;
        match e {
            E::SolverDiverged { .. }
            | E::NoCrossings
            | E::AllRowsFailed
            | E::StepUnstable { .. } => CliError::Solver(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Syntax {
                line,
                column,
                message,
            } => write!(
                f,
                "{}: line {line}, column {column}: {message}",
                self.code()
            ),
            CliError::UnknownKey(k) => write!(f, "{}: {k}", self.code()),
            CliError::Validation(m)
            | CliError::Io(m)
            | CliError::Solver(m)
            | CliError::EmptyResults(m) => {
                write!(f, "{}: {m}", self.code())
            }
        }
    }
}

impl std::error::Error for CliError {}
