//! Prompt template storage.
//!
//! Every piece of fixed prompt wording lives in a resource file, not in code,
//! so wording changes never need a recompile. A [`TemplateSet`] starts from
//! the embedded defaults and can override any file from a directory.
//! Placeholders are written `{{name}}`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;

use super::PromptError;

/// One worked example: an input snippet, optional reasoning steps, and the
/// structured answer the model should produce. In-context (ICL) examples
/// carry no steps; chain-of-thought examples carry at least one.
#[derive(Debug, Clone, Deserialize)]
pub struct CotExample {
    pub input: String,
    #[serde(default)]
    pub steps: Vec<String>,
    pub answer: serde_json::Value,
}

const TEXT_NAMES: [&str; 6] = [
    "detection_task",
    "detection_rules",
    "detection_output",
    "argument_task",
    "argument_rules",
    "argument_output",
];

const EXAMPLE_NAMES: [&str; 4] = [
    "icl_detection",
    "icl_argument",
    "cot_detection",
    "cot_argument",
];

/// The complete set of templates and worked examples a run prompts with.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    texts: BTreeMap<String, String>,
    examples: BTreeMap<String, Vec<CotExample>>,
}

impl TemplateSet {
    /// The templates compiled into the binary.
    pub fn embedded() -> TemplateSet {
        let texts = BTreeMap::from(
            [
                ("detection_task", include_str!("../../resources/prompts/detection_task.txt")),
                ("detection_rules", include_str!("../../resources/prompts/detection_rules.txt")),
                ("detection_output", include_str!("../../resources/prompts/detection_output.txt")),
                ("argument_task", include_str!("../../resources/prompts/argument_task.txt")),
                ("argument_rules", include_str!("../../resources/prompts/argument_rules.txt")),
                ("argument_output", include_str!("../../resources/prompts/argument_output.txt")),
            ]
            .map(|(k, v)| (k.to_string(), v.to_string())),
        );
        let examples = BTreeMap::from(
            [
                ("icl_detection", include_str!("../../resources/examples/icl_detection.json")),
                ("icl_argument", include_str!("../../resources/examples/icl_argument.json")),
                ("cot_detection", include_str!("../../resources/examples/cot_detection.json")),
                ("cot_argument", include_str!("../../resources/examples/cot_argument.json")),
            ]
            .map(|(k, v)| {
                let parsed: Vec<CotExample> =
                    serde_json::from_str(v).expect("embedded example file is valid");
                (k.to_string(), parsed)
            }),
        );
        TemplateSet { texts, examples }
    }

    /// The embedded set with any files present in `dir` overriding it:
    /// `<name>.txt` for templates, `<name>.json` for example sets.
    pub fn from_dir(dir: &Path) -> Result<TemplateSet, PromptError> {
        let mut set = TemplateSet::embedded();
        for name in TEXT_NAMES {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                set.texts.insert(name.to_string(), text);
            }
        }
        for name in EXAMPLE_NAMES {
            let path = dir.join(format!("{name}.json"));
            if path.is_file() {
                let text = std::fs::read_to_string(&path).map_err(|source| PromptError::Io {
                    path: path.display().to_string(),
                    source,
                })?;
                let parsed: Vec<CotExample> =
                    serde_json::from_str(&text).map_err(|e| PromptError::Template {
                        name: name.to_string(),
                        detail: format!("{}: {e}", path.display()),
                    })?;
                set.examples.insert(name.to_string(), parsed);
            }
        }
        Ok(set)
    }

    pub fn examples(&self, name: &str) -> &[CotExample] {
        self.examples
            .get(name)
            .map(Vec::as_slice)
            .unwrap_or_default()
    }

    /// Fill a template's `{{placeholders}}`. Leaving one unfilled is an
    /// error: it means the caller and the template disagree about names.
    pub fn render(
        &self,
        name: &str,
        substitutions: &[(&str, &str)],
    ) -> Result<String, PromptError> {
        let template = self.texts.get(name).ok_or_else(|| PromptError::Template {
            name: name.to_string(),
            detail: "no such template".to_string(),
        })?;
        let mut text = template.clone();
        for (key, value) in substitutions {
            text = text.replace(&format!("{{{{{key}}}}}"), value);
        }
        if let Some(pos) = text.find("{{") {
            let tail: String = text[pos..].chars().take(30).collect();
            return Err(PromptError::Template {
                name: name.to_string(),
                detail: format!("unfilled placeholder at {tail:?}"),
            });
        }
        Ok(text.trim_end().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_set_is_complete() {
        let set = TemplateSet::embedded();
        for name in TEXT_NAMES {
            assert!(set.texts.contains_key(name), "{name} missing");
        }
        for name in EXAMPLE_NAMES {
            assert!(!set.examples(name).is_empty(), "{name} empty");
        }
        // cot examples reason, icl examples do not
        assert!(set.examples("cot_detection").iter().all(|e| !e.steps.is_empty()));
        assert!(set.examples("icl_detection").iter().all(|e| e.steps.is_empty()));
    }

    #[test]
    fn render_substitutes_and_flags_leftovers() {
        let set = TemplateSet::embedded();
        let text = set
            .render(
                "detection_output",
                &[("doc_id", "doc-9"), ("type_names", "A.B, C.D")],
            )
            .unwrap();
        assert!(text.contains("\"doc_id\": \"doc-9\""));
        assert!(text.contains("Valid event types: A.B, C.D"));

        match set.render("detection_output", &[("doc_id", "doc-9")]) {
            Err(PromptError::Template { name, detail }) => {
                assert_eq!(name, "detection_output");
                assert!(detail.contains("type_names"));
            }
            other => panic!("expected template error, got {other:?}"),
        }
    }

    #[test]
    fn directory_overrides_replace_embedded_wording() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("detection_task.txt"), "Custom task wording.\n").unwrap();
        std::fs::write(
            dir.path().join("icl_detection.json"),
            r#"[{"input":"x","answer":[]}]"#,
        )
        .unwrap();
        let set = TemplateSet::from_dir(dir.path()).unwrap();
        assert_eq!(set.render("detection_task", &[]).unwrap(), "Custom task wording.");
        assert_eq!(set.examples("icl_detection").len(), 1);
        assert_eq!(set.examples("icl_detection")[0].input, "x");
        // untouched names keep the embedded content
        assert!(set.render("argument_task", &[]).unwrap().contains("argument"));
    }

    #[test]
    fn malformed_example_override_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("cot_detection.json"), "not json").unwrap();
        assert!(matches!(
            TemplateSet::from_dir(dir.path()),
            Err(PromptError::Template { .. })
        ));
    }
}
