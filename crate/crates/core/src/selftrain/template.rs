//! Command templates for the external predict / train / augment contracts.

use std::path::PathBuf;
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::SelfTrainError;

/// Shell command with `{placeholder}` slots, executed via `sh -c` after
/// substitution. Substituted values are single-quoted, so paths with spaces
/// are safe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CommandTemplate(String);

impl CommandTemplate {
    pub fn new(template: impl Into<String>) -> Self {
        Self(template.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Checks that each required placeholder occurs exactly once.
    pub fn require(&self, placeholders: &[&str]) -> Result<(), SelfTrainError> {
        for name in placeholders {
            let token = format!("{{{name}}}");
            let count = self.0.matches(&token).count();
            if count != 1 {
                return Err(SelfTrainError::Template(format!(
                    "`{}` must contain {token} exactly once (found {count})",
                    self.0
                )));
            }
        }
        Ok(())
    }

    /// Substitutes placeholders and returns the shell command line. Slots
    /// not present in the template are ignored, so optional placeholders
    /// like `{model}` cost nothing.
    pub fn render(&self, substitutions: &[(&str, &str)]) -> String {
        let mut cmd = self.0.clone();
        for (name, value) in substitutions {
            cmd = cmd.replace(&format!("{{{name}}}"), &shell_quote(value));
        }
        cmd
    }
}

fn shell_quote(value: &str) -> String {
    format!("'{}'", value.replace('\'', r"'\''"))
}

/// Runs a rendered command line through `sh -c`, capturing output.
pub(crate) fn run_shell(phase: &str, command: &str) -> Result<(), SelfTrainError> {
    let output = Command::new("sh").arg("-c").arg(command).output()?;
    if !output.status.success() {
        let mut stderr = String::from_utf8_lossy(&output.stderr).into_owned();
        if stderr.len() > 2000 {
            stderr.truncate(2000);
            stderr.push_str("...");
        }
        return Err(SelfTrainError::CommandFailed {
            phase: phase.to_string(),
            command: command.to_string(),
            status: output.status.to_string(),
            stderr,
        });
    }
    Ok(())
}

/// External model behind the predict/train contracts.
///
/// `predict_command` needs `{input_list}` and `{output_dir}` and may use
/// `{model}`; `train_command` (absent for predict-only models such as the
/// initial pitch estimator) needs `{label_manifest}`, `{output_model}`, and
/// `{seed}`. `model_artifact` is the opaque model path substituted for
/// `{model}` when this spec itself predicts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalModelSpec {
    pub predict_command: CommandTemplate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_command: Option<CommandTemplate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_artifact: Option<PathBuf>,
}

impl ExternalModelSpec {
    pub fn validate(&self) -> Result<(), SelfTrainError> {
        self.predict_command.require(&["input_list", "output_dir"])?;
        if let Some(train) = &self.train_command {
            train.require(&["label_manifest", "output_model", "seed"])?;
        }
        Ok(())
    }
}

/// Audio augmenter behind the augment contract; used by noisy-student mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmenterSpec {
    pub command: CommandTemplate,
    pub enabled: bool,
}

impl AugmenterSpec {
    pub fn validate(&self) -> Result<(), SelfTrainError> {
        if self.enabled {
            self.command.require(&["input_audio", "output_audio", "seed"])?;
        }
        Ok(())
    }
}
