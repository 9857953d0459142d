//! Prompt templates with named `{slot}` placeholders.
//!
//! The defaults are compiled in; [`PromptSet::load_dir`] overrides any of
//! them from `<dir>/<name>.txt` so operators can localize prompts without
//! rebuilding.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;
use std::{fs, io};

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("template {template:?} needs slot {{{slot}}} but no value was given")]
    MissingSlot { template: String, slot: String },
    #[error("reading template {path}: {source}")]
    Io { path: String, source: io::Error },
}

fn slot_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\}").expect("valid regex"))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    text: String,
}

impl PromptTemplate {
    pub fn new(name: &str, text: &str) -> Self {
        PromptTemplate {
            name: name.to_owned(),
            text: text.to_owned(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn slots(&self) -> BTreeSet<String> {
        slot_pattern()
            .captures_iter(&self.text)
            .map(|c| c[1].to_owned())
            .collect()
    }

    /// Substitutes every `{slot}` in a single pass; substituted values are
    /// not rescanned. Extra values are ignored.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let mut out = String::with_capacity(self.text.len());
        let mut last = 0;
        for cap in slot_pattern().captures_iter(&self.text) {
            let whole = cap.get(0).expect("group 0");
            let slot = &cap[1];
            let value = values
                .iter()
                .find(|(k, _)| *k == slot)
                .map(|(_, v)| *v)
                .ok_or_else(|| PromptError::MissingSlot {
                    template: self.name.clone(),
                    slot: slot.to_owned(),
                })?;
            out.push_str(&self.text[last..whole.start()]);
            out.push_str(value);
            last = whole.end();
        }
        out.push_str(&self.text[last..]);
        Ok(out)
    }
}

/// The six templates used by the pipeline.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSet {
    pub triplets: PromptTemplate,
    pub merge: PromptTemplate,
    pub relations: PromptTemplate,
    pub filter: PromptTemplate,
    pub roles: PromptTemplate,
    pub groups: PromptTemplate,
}

impl Default for PromptSet {
    fn default() -> Self {
        PromptSet {
            triplets: PromptTemplate::new("triplets", include_str!("../prompts/triplets.txt")),
            merge: PromptTemplate::new("merge", include_str!("../prompts/merge.txt")),
            relations: PromptTemplate::new("relations", include_str!("../prompts/relations.txt")),
            filter: PromptTemplate::new("filter", include_str!("../prompts/filter.txt")),
            roles: PromptTemplate::new("roles", include_str!("../prompts/roles.txt")),
            groups: PromptTemplate::new("groups", include_str!("../prompts/groups.txt")),
        }
    }
}

impl PromptSet {
    /// Defaults, with any `<name>.txt` present in `dir` taking precedence.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = PromptSet::default();
        for tpl in [
            &mut set.triplets,
            &mut set.merge,
            &mut set.relations,
            &mut set.filter,
            &mut set.roles,
            &mut set.groups,
        ] {
            let path = dir.join(format!("{}.txt", tpl.name));
            match fs::read_to_string(&path) {
                Ok(text) => tpl.text = text,
                Err(e) if e.kind() == io::ErrorKind::NotFound => {}
                Err(source) => {
                    return Err(PromptError::Io {
                        path: path.display().to_string(),
                        source,
                    })
                }
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_fills_slots_once() {
        let t = PromptTemplate::new("t", "A {x} B {y} {x}");
        assert_eq!(t.render(&[("x", "{y}"), ("y", "2")]).unwrap(), "A {y} B 2 {y}");
        assert!(matches!(t.render(&[("x", "1")]), Err(PromptError::MissingSlot { .. })));
    }

    #[test]
    fn default_templates_declare_expected_slots() {
        let set = PromptSet::default();
        let slots = |t: &PromptTemplate| t.slots().into_iter().collect::<Vec<_>>();
        assert_eq!(slots(&set.triplets), ["chunk", "delimiter"]);
        assert_eq!(slots(&set.merge), ["character_list", "summary", "treatment"]);
        assert_eq!(slots(&set.relations), ["pair_list", "summary", "treatment"]);
        assert_eq!(
            slots(&set.filter),
            ["character_list", "identity_list", "relationship_list"]
        );
        assert_eq!(slots(&set.roles), ["character_list", "summary", "treatment"]);
        assert_eq!(slots(&set.groups), ["character_list", "summary", "treatment"]);
    }

    #[test]
    fn directory_overrides() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("roles.txt"), "역할: {character_list}").unwrap();
        let set = PromptSet::load_dir(dir.path()).unwrap();
        assert_eq!(set.roles.text(), "역할: {character_list}");
        assert_eq!(set.merge, PromptSet::default().merge);
    }
}
