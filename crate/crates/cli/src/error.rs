use polygan_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// 0 success, 1 validation, 2 I/O, 3 numeric abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Core(e) => match e {
                CoreError::Io { .. }
                | CoreError::Decode { .. }
                | CoreError::Format(_)
                | CoreError::Corrupt(_)
                | CoreError::Unsupported(_) => 2,
                CoreError::Numeric(_) | CoreError::NonFiniteLoss { .. } | CoreError::Degenerate(_) => 3,
                _ => 1,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::Path;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        let io = CoreError::io(Path::new("a"), std::io::Error::other("gone"));
        assert_eq!(CliError::from(io).exit_code(), 2);
        let nan = CoreError::NonFiniteLoss { step: 3, loss: "d_loss" };
        assert_eq!(CliError::from(nan).exit_code(), 3);
        assert_eq!(CliError::from(CoreError::Pairing("orphan".into())).exit_code(), 1);
    }
}
