use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("design error: {0}")]
    Design(String),
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Design(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }

    /// Classifies a library error raised while designing or running a
    /// controller.
    pub fn from_library(e: &wec_mpc::Error) -> Self {
        use wec_mpc::Error as E;
        match e {
            E::NotConvex { .. }
            | E::RankDeficient { .. }
            | E::Certification { .. }
            | E::SizeLimit { .. } => CliError::Design(e.to_string()),
            E::InvalidModel(_) | E::InvalidParameter(_) | E::Dimension(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}
