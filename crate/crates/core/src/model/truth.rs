use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Deserializer, Serialize};

use super::names::normalize_name;
use super::ModelError;

/// Expert annotation for one drama.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GroundTruthRepr", into = "GroundTruthRepr")]
pub struct GroundTruth {
    pub characters: Vec<GtCharacter>,
    /// character name -> acceptable roles
    pub roles: BTreeMap<String, Vec<String>>,
    /// character name -> group name
    pub groups: BTreeMap<String, String>,
    pub key_relations: Vec<KeyRelation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GtCharacter {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<String>,
}

impl GtCharacter {
    /// Normalized name together with every alias.
    pub fn alias_set(&self) -> BTreeSet<String> {
        std::iter::once(&self.name)
            .chain(&self.aliases)
            .map(|s| normalize_name(s))
            .filter(|s| !s.is_empty())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyRelation {
    pub subject: String,
    pub object: String,
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub explicit: Vec<String>,
    #[serde(default, deserialize_with = "one_or_many", skip_serializing_if = "Vec::is_empty")]
    pub implicit: Vec<String>,
}

impl GroundTruth {
    /// Canonical character name for any name or alias.
    pub fn lookup(&self, name: &str) -> Option<&str> {
        let name = normalize_name(name);
        self.characters
            .iter()
            .find(|c| c.alias_set().contains(&name))
            .map(|c| c.name.as_str())
    }

    pub fn roles_of(&self, character: &str) -> &[String] {
        self.roles.get(character).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn group_of(&self, character: &str) -> Option<&str> {
        self.groups.get(character).map(String::as_str)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut owners: HashMap<String, &str> = HashMap::new();
        for c in &self.characters {
            if normalize_name(&c.name).is_empty() {
                return Err(ModelError::InvalidGroundTruth("empty character name".into()));
            }
            for alias in c.alias_set() {
                if let Some(prev) = owners.insert(alias.clone(), &c.name) {
                    if prev != c.name {
                        return Err(ModelError::InvalidGroundTruth(format!(
                            "alias {alias:?} shared by {prev:?} and {:?}",
                            c.name
                        )));
                    }
                    return Err(ModelError::InvalidGroundTruth(format!(
                        "character {:?} listed twice",
                        c.name
                    )));
                }
            }
        }
        let known = |n: &str, what: &str| -> Result<(), ModelError> {
            if self.characters.iter().any(|c| c.name == n) {
                Ok(())
            } else {
                Err(ModelError::InvalidGroundTruth(format!(
                    "{what} references unknown character {n:?}"
                )))
            }
        };
        for name in self.roles.keys() {
            known(name, "roles")?;
        }
        for name in self.groups.keys() {
            known(name, "groups")?;
        }
        for rel in &self.key_relations {
            known(&rel.subject, "key_relations")?;
            known(&rel.object, "key_relations")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct GroundTruthRepr {
    characters: Vec<GtCharacter>,
    #[serde(default, deserialize_with = "map_one_or_many")]
    roles: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    groups: BTreeMap<String, String>,
    #[serde(default)]
    key_relations: Vec<KeyRelation>,
}

impl From<GroundTruth> for GroundTruthRepr {
    fn from(g: GroundTruth) -> Self {
        GroundTruthRepr {
            characters: g.characters,
            roles: g.roles,
            groups: g.groups,
            key_relations: g.key_relations,
        }
    }
}

impl TryFrom<GroundTruthRepr> for GroundTruth {
    type Error = ModelError;

    fn try_from(r: GroundTruthRepr) -> Result<Self, Self::Error> {
        let gt = GroundTruth {
            characters: r.characters,
            roles: r.roles,
            groups: r.groups,
            key_relations: r.key_relations,
        };
        gt.validate()?;
        Ok(gt)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl From<OneOrMany> for Vec<String> {
    fn from(v: OneOrMany) -> Self {
        match v {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
    Option::<OneOrMany>::deserialize(d).map(|v| v.map(Into::into).unwrap_or_default())
}

fn map_one_or_many<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, Vec<String>>, D::Error> {
    let raw = BTreeMap::<String, OneOrMany>::deserialize(d)?;
    Ok(raw.into_iter().map(|(k, v)| (k, v.into())).collect())
}
