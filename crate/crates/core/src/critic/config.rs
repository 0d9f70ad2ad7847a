//! TOML run configuration.
//!
//! ```toml
//! workers = 4
//! dice_space = "projected"
//! # shots = 1
//! class_agnostic = false
//! # templates_dir = "prompts"
//! # profiles = "profiles.toml"
//! # examples = "examples.jsonl"
//! # threshold_table = "thresholds.csv"
//!
//! [endpoint]
//! url = "http://127.0.0.1:8000/v1/chat/completions"
//! model = "llava"
//! token_env = "LVLM_TOKEN"
//!
//! [review]
//! bind = "127.0.0.1:8080"
//! token_env = "REVIEW_TOKEN"
//! ```
//!
//! Relative paths resolve against the config file's directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dsc::DiceSpace;
use crate::gateway::{ChatBackend, EndpointConfig, Gateway};
use crate::prompt::{
    ExampleLibrary, ProfileTable, PromptForge, TemplateSet, DEFAULT_GENERIC_PHRASE,
};

use super::{Critic, CriticError, Workspace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReviewConfig {
    pub bind: String,
    pub token_env: Option<String>,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        ReviewConfig {
            bind: "127.0.0.1:8080".into(),
            token_env: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub workers: usize,
    pub dice_space: DiceSpace,
    /// In-context examples per prompt; each class profile's default if unset.
    pub shots: Option<usize>,
    pub class_agnostic: bool,
    pub generic_phrase: String,
    pub templates_dir: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub examples: Option<PathBuf>,
    pub threshold_table: Option<PathBuf>,
    pub endpoint: EndpointConfig,
    pub review: ReviewConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            workers: 4,
            dice_space: DiceSpace::Projected,
            shots: None,
            class_agnostic: false,
            generic_phrase: DEFAULT_GENERIC_PHRASE.into(),
            templates_dir: None,
            profiles: None,
            examples: None,
            threshold_table: None,
            endpoint: EndpointConfig::default(),
            review: ReviewConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CriticError> {
        let text = fs::read_to_string(path)?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| CriticError::Precondition(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.templates_dir,
            &mut config.profiles,
            &mut config.examples,
            &mut config.threshold_table,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn forge(&self) -> Result<PromptForge, CriticError> {
        let templates = match &self.templates_dir {
            Some(dir) => TemplateSet::load_dir(dir)?,
            None => TemplateSet::builtin(),
        };
        let forge = PromptForge::new(templates);
        Ok(if self.class_agnostic {
            forge.class_agnostic(&self.generic_phrase)
        } else {
            forge
        })
    }

    /// A critic wired to `backend`, logging to the workspace transcript and
    /// enqueueing flagged cases in the workspace review store.
    pub fn critic(
        &self,
        backend: Arc<dyn ChatBackend>,
        workspace: &Workspace,
    ) -> Result<Critic, CriticError> {
        let gateway = Gateway::new(backend, self.endpoint.clone())
            .with_transcript(&workspace.transcript_path())?;
        let profiles = match &self.profiles {
            Some(p) => ProfileTable::load(p)?,
            None => ProfileTable::builtin(),
        };
        let examples = match &self.examples {
            Some(p) => ExampleLibrary::load(p)?,
            None => ExampleLibrary::default(),
        };
        let mut critic = Critic::new(gateway)
            .with_forge(self.forge()?)
            .with_profiles(profiles)
            .with_examples(examples)
            .with_dice_space(self.dice_space)
            .with_review(workspace.review.clone());
        if let Some(n) = self.shots {
            critic = critic.with_shots(n);
        }
        Ok(critic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_uses_defaults() {
        let c: RunConfig = toml::from_str("workers = 2\n[endpoint]\nmodel = \"m\"\n").unwrap();
        assert_eq!(c.workers, 2);
        assert_eq!(c.endpoint.model, "m");
        assert_eq!(
            c.endpoint.max_attempts,
            EndpointConfig::default().max_attempts
        );
        assert!(toml::from_str::<RunConfig>("wokers = 2").is_err());
    }
}
