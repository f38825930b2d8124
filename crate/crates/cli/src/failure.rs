use std::fmt;

/// Process exit statuses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Usage = 1,
    Data = 2,
    Internal = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            exit: Exit::Usage,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            exit: Exit::Data,
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::from(spanparse::Error::io(path, e))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<spanparse::Error> for CliError {
    fn from(e: spanparse::Error) -> Self {
        use spanparse::Error as E;
        let exit = match e {
            E::Usage(_) | E::Config(_) => Exit::Usage,
            E::Parse { .. } | E::Serialization { .. } | E::Io { .. } => Exit::Data,
            E::Shape(_) => Exit::Internal,
        };
        CliError {
            exit,
            message: e.to_string(),
        }
    }
}
