use std::fmt;

use serde::{Deserialize, Serialize};

use super::names::fold_label;
use super::ModelError;

/// The closed list of implicit (emotional / conflict) relation terms.
pub const IMPLICIT_TERMS: [&str; 27] = [
    "Conflict",
    "Betrayal",
    "Affair",
    "Help/Aid",
    "Sacrifice",
    "Dependency",
    "Revenge",
    "Resentment",
    "Dislike",
    "Worry/concern",
    "One-sided love",
    "Crush",
    "Love",
    "Longing",
    "Love-hate relationship",
    "Collaboration",
    "Regret",
    "Exploitation",
    "Lie/Deception",
    "Trust",
    "Watching over/Protecting",
    "Pressure",
    "Conspiracy",
    "Support",
    "Friendliness",
    "Hostility",
    "Wariness",
];

/// Membership test for implicit relation terms.
#[derive(Debug, Clone, Copy, Default)]
pub struct ImplicitVocabulary;

impl ImplicitVocabulary {
    pub fn terms() -> &'static [&'static str] {
        &IMPLICIT_TERMS
    }

    /// Returns the canonical spelling of `raw` if it names a vocabulary term.
    /// Comparison is on the folded label, so `"wariness"` and `"**Wariness**"`
    /// both resolve to `"Wariness"`.
    pub fn lookup(raw: &str) -> Option<&'static str> {
        let folded = fold_label(raw);
        IMPLICIT_TERMS.iter().copied().find(|term| fold_label(term) == folded)
    }

    pub fn contains(raw: &str) -> bool {
        Self::lookup(raw).is_some()
    }
}

/// An implicit relation term guaranteed to be a vocabulary member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(into = "String")]
pub struct ImplicitRelation(&'static str);

impl<'de> Deserialize<'de> for ImplicitRelation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Self::parse(&raw).map_err(serde::de::Error::custom)
    }
}

impl ImplicitRelation {
    pub fn parse(raw: &str) -> Result<Self, ModelError> {
        ImplicitVocabulary::lookup(raw)
            .map(ImplicitRelation)
            .ok_or_else(|| ModelError::NotInVocabulary(raw.to_owned()))
    }

    pub fn as_str(&self) -> &'static str {
        self.0
    }
}

impl TryFrom<String> for ImplicitRelation {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::parse(&value)
    }
}

impl From<ImplicitRelation> for String {
    fn from(value: ImplicitRelation) -> Self {
        value.0.to_owned()
    }
}

impl fmt::Display for ImplicitRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_is_closed() {
        assert_eq!(ImplicitVocabulary::terms().len(), 27);
        assert_eq!(ImplicitVocabulary::lookup("wariness"), Some("Wariness"));
        assert_eq!(ImplicitVocabulary::lookup(" Help/Aid "), Some("Help/Aid"));
        assert_eq!(ImplicitVocabulary::lookup("jealous-ish"), None);
        assert_eq!(ImplicitVocabulary::lookup(""), None);
        assert!(ImplicitRelation::parse("Jealousy").is_err());
    }

    #[test]
    fn serde_rejects_outsiders() {
        let ok: ImplicitRelation = serde_json::from_str("\"Love\"").unwrap();
        assert_eq!(ok.as_str(), "Love");
        assert!(serde_json::from_str::<ImplicitRelation>("\"Envy\"").is_err());
    }
}
