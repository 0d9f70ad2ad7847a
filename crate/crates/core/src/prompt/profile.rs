//! Per-class prompt profiles.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::class::OrganClass;

use super::PromptError;

pub const MAX_SHOTS: usize = 10;

/// How much general background knowledge a vision-language model tends to
/// have about a structure; selects the guidance style.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Familiarity {
    /// Shape references and several landmarks.
    Familiar,
    /// Simple description, strict checks on linear shape and continuity.
    Unfamiliar,
    /// Loosely defined shape; check location and gross errors.
    Amorphous,
}

impl Familiarity {
    pub fn template_key(self) -> &'static str {
        match self {
            Familiarity::Familiar => "guidance/familiar",
            Familiarity::Unfamiliar => "guidance/unfamiliar",
            Familiarity::Amorphous => "guidance/amorphous",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    Lenient,
    Moderate,
    Strict,
}

impl Strictness {
    pub fn template_key(self) -> &'static str {
        match self {
            Strictness::Lenient => "strictness/lenient",
            Strictness::Moderate => "strictness/moderate",
            Strictness::Strict => "strictness/strict",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassProfile {
    pub class: OrganClass,
    pub familiarity: Familiarity,
    pub strictness: Strictness,
    pub default_shots: usize,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProfileTable {
    #[serde(rename = "profile")]
    profiles: Vec<ClassProfile>,
}

const BUILTIN_PROFILES: &str = include_str!("../../templates/profiles.toml");

impl ProfileTable {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_PROFILES).expect("builtin profile table is valid")
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PromptError::Config(format!("profile table {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let table: ProfileTable =
            toml::from_str(text).map_err(|e| PromptError::Config(format!("profile table: {e}")))?;
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<(), PromptError> {
        for class in OrganClass::ALL {
            let n = self.profiles.iter().filter(|p| p.class == class).count();
            if n != 1 {
                return Err(PromptError::Config(format!(
                    "profile table needs exactly one profile for {class}, found {n}"
                )));
            }
        }
        if let Some(p) = self.profiles.iter().find(|p| p.default_shots > MAX_SHOTS) {
            return Err(PromptError::Config(format!(
                "{}: default_shots {} exceeds {MAX_SHOTS}",
                p.class, p.default_shots
            )));
        }
        Ok(())
    }

    pub fn get(&self, class: OrganClass) -> &ClassProfile {
        self.profiles
            .iter()
            .find(|p| p.class == class)
            .expect("validated table covers every class")
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassProfile> {
        self.profiles.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_tiers() {
        let t = ProfileTable::builtin();
        let tier = |c| t.get(c).familiarity;
        for c in [
            OrganClass::Liver,
            OrganClass::Spleen,
            OrganClass::Kidneys,
            OrganClass::Pancreas,
        ] {
            assert_eq!(tier(c), Familiarity::Familiar);
        }
        for c in [OrganClass::Aorta, OrganClass::Postcava] {
            assert_eq!(tier(c), Familiarity::Unfamiliar);
        }
        for c in [OrganClass::Stomach, OrganClass::Gallbladder] {
            assert_eq!(tier(c), Familiarity::Amorphous);
        }
        for p in t.iter() {
            let want = if p.class == OrganClass::Stomach { 1 } else { 0 };
            assert_eq!(p.default_shots, want, "{}", p.class);
        }
    }

    #[test]
    fn duplicate_or_missing_class_rejected() {
        let one = r#"
[[profile]]
class = "liver"
familiarity = "familiar"
strictness = "lenient"
default_shots = 0
description = "x"
"#;
        assert!(ProfileTable::parse(one).is_err());
    }
}
