use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Abdominal structures the pipeline knows how to critique.
///
/// Variant order is alphabetical so `Ord` matches report ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrganClass {
    Aorta,
    Gallbladder,
    Kidneys,
    Liver,
    Pancreas,
    Postcava,
    Spleen,
    Stomach,
}

impl OrganClass {
    pub const ALL: [OrganClass; 8] = [
        OrganClass::Aorta,
        OrganClass::Gallbladder,
        OrganClass::Kidneys,
        OrganClass::Liver,
        OrganClass::Pancreas,
        OrganClass::Postcava,
        OrganClass::Spleen,
        OrganClass::Stomach,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OrganClass::Aorta => "aorta",
            OrganClass::Gallbladder => "gallbladder",
            OrganClass::Kidneys => "kidneys",
            OrganClass::Liver => "liver",
            OrganClass::Pancreas => "pancreas",
            OrganClass::Postcava => "postcava",
            OrganClass::Spleen => "spleen",
            OrganClass::Stomach => "stomach",
        }
    }
}

impl fmt::Display for OrganClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown organ class {0:?}")]
pub struct UnknownClass(pub String);

impl FromStr for OrganClass {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        OrganClass::ALL
            .into_iter()
            .find(|c| c.as_str() == lower)
            .ok_or_else(|| UnknownClass(s.to_string()))
    }
}

/// Which of the two candidate labels of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Candidate {
    First,
    Second,
}

impl Candidate {
    pub fn other(self) -> Candidate {
        match self {
            Candidate::First => Candidate::Second,
            Candidate::Second => Candidate::First,
        }
    }
}
