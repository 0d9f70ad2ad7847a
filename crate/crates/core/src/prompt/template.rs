//! Plain `{name}` placeholder substitution and the template registry.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::class::OrganClass;

use super::PromptError;

/// Marker for an attached image inside turn text.
pub const IMAGE_MARKER: &str = "<image>";

/// Names of the `{placeholder}`s in a template, in order of appearance.
///
/// A placeholder is `{` followed by one or more `[a-z0-9_]` and `}`; any
/// other brace is literal text.
pub fn placeholders(template: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        let len = after
            .bytes()
            .take_while(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_')
            .count();
        if len > 0 && after.as_bytes().get(len) == Some(&b'}') {
            out.push(&after[..len]);
            rest = &after[len + 1..];
        } else {
            rest = after;
        }
    }
    out
}

/// Substitute every placeholder with its binding. Bound values are inserted
/// verbatim and never expanded again.
pub fn render_template(
    template: &str,
    bindings: &BTreeMap<&str, String>,
) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        let len = after
            .bytes()
            .take_while(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || *b == b'_')
            .count();
        if len > 0 && after.as_bytes().get(len) == Some(&b'}') {
            let name = &after[..len];
            let value = bindings
                .get(name)
                .ok_or_else(|| PromptError::Unbound(name.to_string()))?;
            out.push_str(value);
            rest = &after[len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}

pub fn count_images(text: &str) -> usize {
    text.matches(IMAGE_MARKER).count()
}

struct Rule {
    key: &'static str,
    allowed: &'static [&'static str],
    images: usize,
}

const RULES: &[Rule] = &[
    Rule {
        key: "system",
        allowed: &[],
        images: 0,
    },
    Rule {
        key: "presence/default",
        allowed: &["organ"],
        images: 1,
    },
    Rule {
        key: "presence/agnostic",
        allowed: &["organ"],
        images: 1,
    },
    Rule {
        key: "compare/default",
        allowed: &["organ", "guidance", "shots_block"],
        images: 2,
    },
    Rule {
        key: "compare/agnostic",
        allowed: &["organ", "guidance", "shots_block"],
        images: 2,
    },
    Rule {
        key: "single/default",
        allowed: &["organ", "guidance", "shots_block"],
        images: 1,
    },
    Rule {
        key: "single/agnostic",
        allowed: &["organ", "guidance", "shots_block"],
        images: 1,
    },
    Rule {
        key: "summary/compare",
        allowed: &["organ"],
        images: 0,
    },
    Rule {
        key: "summary/single",
        allowed: &["organ"],
        images: 0,
    },
    Rule {
        key: "shot",
        allowed: &["index", "verdict", "reason"],
        images: 1,
    },
    Rule {
        key: "guidance/familiar",
        allowed: &["organ", "description", "strictness"],
        images: 0,
    },
    Rule {
        key: "guidance/unfamiliar",
        allowed: &["organ", "description", "strictness"],
        images: 0,
    },
    Rule {
        key: "guidance/amorphous",
        allowed: &["organ", "description", "strictness"],
        images: 0,
    },
    Rule {
        key: "guidance/agnostic",
        allowed: &["organ"],
        images: 0,
    },
    Rule {
        key: "strictness/lenient",
        allowed: &[],
        images: 0,
    },
    Rule {
        key: "strictness/moderate",
        allowed: &[],
        images: 0,
    },
    Rule {
        key: "strictness/strict",
        allowed: &[],
        images: 0,
    },
];

/// Steps that accept per-class override files (`<step>/<class>.txt`).
const OVERRIDABLE: &[&str] = &["presence", "compare", "single"];

macro_rules! builtin {
    ($($key:literal),* $(,)?) => {
        &[$(($key, include_str!(concat!("../../templates/", $key, ".txt")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin![
    "system",
    "presence/default",
    "presence/agnostic",
    "compare/default",
    "compare/agnostic",
    "single/default",
    "single/agnostic",
    "summary/compare",
    "summary/single",
    "shot",
    "guidance/familiar",
    "guidance/unfamiliar",
    "guidance/amorphous",
    "guidance/agnostic",
    "strictness/lenient",
    "strictness/moderate",
    "strictness/strict",
];

/// Prompt wording, keyed by relative path without `.txt`
/// (`compare/default`, `guidance/unfamiliar`, `compare/liver`, ...).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    files: BTreeMap<String, String>,
}

impl TemplateSet {
    /// Templates shipped with the crate.
    pub fn builtin() -> Self {
        let files = BUILTIN
            .iter()
            .map(|(k, v)| (k.to_string(), v.trim_end().to_string()))
            .collect();
        let set = TemplateSet { files };
        set.validate().expect("builtin templates are valid");
        set
    }

    /// Load a complete template directory. Every required file must be
    /// present; `<step>/<class>.txt` files override the default wording of
    /// that step for one class.
    pub fn load_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut files = BTreeMap::new();
        for rule in RULES {
            let path = dir.join(format!("{}.txt", rule.key));
            let text = fs::read_to_string(&path)
                .map_err(|e| PromptError::Config(format!("template {}: {e}", path.display())))?;
            files.insert(rule.key.to_string(), text.trim_end().to_string());
        }
        for step in OVERRIDABLE {
            for class in OrganClass::ALL {
                let path = dir.join(step).join(format!("{class}.txt"));
                if path.is_file() {
                    let text = fs::read_to_string(&path).map_err(|e| {
                        PromptError::Config(format!("template {}: {e}", path.display()))
                    })?;
                    files.insert(format!("{step}/{class}"), text.trim_end().to_string());
                }
            }
        }
        let set = TemplateSet { files };
        set.validate()?;
        Ok(set)
    }

    /// Write every template to `dir` in the layout `load_dir` expects.
    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        for (key, text) in &self.files {
            let path = dir.join(format!("{key}.txt"));
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::write(path, format!("{text}\n"))?;
        }
        Ok(())
    }

    pub fn insert(&mut self, key: &str, text: &str) -> Result<(), PromptError> {
        let previous = self.files.insert(key.to_string(), text.to_string());
        if let Err(e) = self.validate() {
            match previous {
                Some(p) => self.files.insert(key.to_string(), p),
                None => self.files.remove(key),
            };
            return Err(e);
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.files.get(key).map(String::as_str)
    }

    pub(crate) fn required(&self, key: &str) -> &str {
        self.get(key)
            .expect("validated template set has every required key")
    }

    /// Wording for a step: per-class override, else the default, or the
    /// class-agnostic variant.
    pub(crate) fn step(&self, step: &str, class: OrganClass, agnostic: bool) -> &str {
        if agnostic {
            return self.required(&format!("{step}/agnostic"));
        }
        self.get(&format!("{step}/{class}"))
            .unwrap_or_else(|| self.required(&format!("{step}/default")))
    }

    fn rule_for(key: &str) -> Option<&'static Rule> {
        if let Some(rule) = RULES.iter().find(|r| r.key == key) {
            return Some(rule);
        }
        let (step, class) = key.split_once('/')?;
        if !OVERRIDABLE.contains(&step) || class.parse::<OrganClass>().is_err() {
            return None;
        }
        let base = format!("{step}/default");
        RULES.iter().find(|r| r.key == base)
    }

    fn validate(&self) -> Result<(), PromptError> {
        for rule in RULES {
            if !self.files.contains_key(rule.key) {
                return Err(PromptError::Config(format!(
                    "missing template {}",
                    rule.key
                )));
            }
        }
        for (key, text) in &self.files {
            let rule = Self::rule_for(key)
                .ok_or_else(|| PromptError::Config(format!("unknown template {key}")))?;
            let names: BTreeSet<&str> = placeholders(text).into_iter().collect();
            if let Some(bad) = names.iter().find(|n| !rule.allowed.contains(n)) {
                return Err(PromptError::Config(format!(
                    "template {key}: placeholder {{{bad}}} is not one of {:?}",
                    rule.allowed
                )));
            }
            let n = count_images(text);
            if n != rule.images {
                return Err(PromptError::Config(format!(
                    "template {key}: expected {} {IMAGE_MARKER} marker(s), found {n}",
                    rule.images
                )));
            }
            if let Some(pos) = text.find("{shots_block}") {
                if text.find(IMAGE_MARKER).is_some_and(|img| img < pos) {
                    return Err(PromptError::Config(format!(
                        "template {key}: {{shots_block}} must precede the candidate images"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(pairs: &[(&'static str, &str)]) -> BTreeMap<&'static str, String> {
        pairs.iter().map(|(k, v)| (*k, v.to_string())).collect()
    }

    #[test]
    fn substitutes_bound_names() {
        let out = render_template("Compare the {organ} labels", &b(&[("organ", "liver")])).unwrap();
        assert_eq!(out, "Compare the liver labels");
    }

    #[test]
    fn no_placeholders_is_verbatim() {
        let t = "nothing {Here} or { } to {}";
        assert_eq!(render_template(t, &BTreeMap::new()).unwrap(), t);
    }

    #[test]
    fn unbound_name_is_reported() {
        match render_template("the {organ}", &BTreeMap::new()) {
            Err(PromptError::Unbound(name)) => assert_eq!(name, "organ"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn no_recursive_expansion() {
        let out = render_template("{a}", &b(&[("a", "{b}"), ("b", "x")])).unwrap();
        assert_eq!(out, "{b}");
    }

    #[test]
    fn missing_file_fails_at_load() {
        let dir = tempfile::tempdir().unwrap();
        TemplateSet::builtin().write_dir(dir.path()).unwrap();
        assert!(TemplateSet::load_dir(dir.path()).is_ok());
        fs::remove_file(dir.path().join("compare/default.txt")).unwrap();
        assert!(matches!(
            TemplateSet::load_dir(dir.path()),
            Err(PromptError::Config(_))
        ));
    }

    #[test]
    fn class_override_is_picked_up() {
        let dir = tempfile::tempdir().unwrap();
        TemplateSet::builtin().write_dir(dir.path()).unwrap();
        fs::write(
            dir.path().join("presence/liver.txt"),
            "<image> Liver here, {organ}?",
        )
        .unwrap();
        let set = TemplateSet::load_dir(dir.path()).unwrap();
        assert_eq!(
            set.step("presence", OrganClass::Liver, false),
            "<image> Liver here, {organ}?"
        );
        assert_ne!(
            set.step("presence", OrganClass::Spleen, false),
            "<image> Liver here, {organ}?"
        );
    }

    #[test]
    fn rejects_bad_markers_and_names() {
        let mut set = TemplateSet::builtin();
        assert!(set.insert("compare/default", "only <image> one").is_err());
        assert!(set.insert("shot", "<image> {unknown}").is_err());
        assert!(set
            .insert("compare/default", "<image> {shots_block} <image>")
            .is_err());
        // failed inserts leave the set untouched
        assert_eq!(set, TemplateSet::builtin());
    }
}
