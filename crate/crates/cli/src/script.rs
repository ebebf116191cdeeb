//! Script files for the offline `scripted` backend.
//!
//! Either a JSON array of responses consumed in call order:
//!
//! ```json
//! ["Looks authentic. IS THIS MISINFORMATION? NO", "..."]
//! ```
//!
//! or a rule table matched against the full request text, first match wins:
//!
//! ```json
//! {"rules": [{"contains": "flooded street", "response": "... YES"}],
//!  "default": "A short summary."}
//! ```

use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result, bail};
use ooc_core::backend::{BackendError, ChatBackend, FnBackend, ScriptedBackend};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rule {
    pub contains: String,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum Script {
    Sequence(Vec<String>),
    Rules {
        rules: Vec<Rule>,
        #[serde(default)]
        default: Option<String>,
    },
}

impl Script {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read script {}", path.display()))?;
        let script: Script = serde_json::from_str(&text).with_context(|| {
            format!(
                "{}: expected a JSON array of responses or a rules object",
                path.display()
            )
        })?;
        match &script {
            Script::Sequence(list) if list.is_empty() => bail!("{}: script has no responses", path.display()),
            Script::Rules { rules, .. } if rules.iter().any(|r| r.contains.is_empty()) => {
                bail!("{}: rule with an empty `contains`", path.display())
            }
            _ => Ok(script),
        }
    }

    pub fn into_backend(self) -> Result<Arc<dyn ChatBackend>> {
        Ok(match self {
            Script::Sequence(list) => Arc::new(ScriptedBackend::new(list)?),
            Script::Rules { rules, default } => Arc::new(FnBackend::new("scripted-rules", move |request| {
                let text = request.all_text();
                rules
                    .iter()
                    .find(|r| text.contains(&r.contains))
                    .map(|r| r.response.clone())
                    .or_else(|| default.clone())
                    .ok_or_else(|| BackendError::Other("no script rule matched the request".into()))
            })),
        })
    }
}
