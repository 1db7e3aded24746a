use std::io::Write;
use std::process::{Command, Stdio};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HookError {
    #[error("narrative hook has no program")]
    Empty,
    #[error("narrative hook failed to run: {0}")]
    Io(#[from] std::io::Error),
    #[error("narrative hook exited with {0}")]
    Failed(std::process::ExitStatus),
    #[error("narrative hook produced non-UTF-8 output")]
    Encoding,
}

/// External command that turns member statements into narrative text for a
/// hybrid hypothesis. Statements arrive on stdin, one per line; stdout is the
/// narrative. Off unless configured.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NarrativeHook {
    pub program: String,
    pub args: Vec<String>,
}

impl NarrativeHook {
    /// Splits a command template on whitespace: `"llm-cli --style brief"`.
    pub fn from_template(template: &str) -> Result<Self, HookError> {
        let mut parts = template.split_whitespace().map(str::to_string);
        let program = parts.next().ok_or(HookError::Empty)?;
        Ok(Self {
            program,
            args: parts.collect(),
        })
    }

    pub fn generate(&self, statements: &[&str]) -> Result<String, HookError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        {
            let mut stdin = child.stdin.take().expect("stdin piped");
            for s in statements {
                writeln!(stdin, "{s}")?;
            }
        }
        let output = child.wait_with_output()?;
        if !output.status.success() {
            return Err(HookError::Failed(output.status));
        }
        String::from_utf8(output.stdout).map_err(|_| HookError::Encoding)
    }
}
