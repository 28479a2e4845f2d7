//! Prompt template catalog.
//!
//! Templates are plain text files with `{placeholder}` slots, keyed by
//! name. The built-in catalog is compiled into the binary; a directory
//! of `<name>.txt` files can override it so operators can tune prompts
//! without rebuilding.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Template names every catalog must provide.
pub const TEMPLATE_NAMES: [&str; 5] = ["policy", "agent", "sampler", "evaluator", "refiner"];

const BUILTIN_POLICY: &str = include_str!("../prompts/policy.txt");
const BUILTIN_AGENT: &str = include_str!("../prompts/agent.txt");
const BUILTIN_SAMPLER: &str = include_str!("../prompts/sampler.txt");
const BUILTIN_EVALUATOR: &str = include_str!("../prompts/evaluator.txt");
const BUILTIN_REFINER: &str = include_str!("../prompts/refiner.txt");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("unknown prompt template {0:?}")]
    UnknownTemplate(String),
    #[error("catalog dir {dir} is missing template file {name}.txt")]
    MissingTemplate { dir: PathBuf, name: String },
    #[error("failed reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Named prompt templates with `{placeholder}` substitution.
#[derive(Debug, Clone)]
pub struct PromptCatalog {
    templates: BTreeMap<String, String>,
}

impl PromptCatalog {
    /// The catalog compiled into the binary.
    pub fn builtin() -> Self {
        let mut templates = BTreeMap::new();
        templates.insert("policy".to_string(), BUILTIN_POLICY.to_string());
        templates.insert("agent".to_string(), BUILTIN_AGENT.to_string());
        templates.insert("sampler".to_string(), BUILTIN_SAMPLER.to_string());
        templates.insert("evaluator".to_string(), BUILTIN_EVALUATOR.to_string());
        templates.insert("refiner".to_string(), BUILTIN_REFINER.to_string());
        PromptCatalog { templates }
    }

    /// Load `<name>.txt` for every required template from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self, CatalogError> {
        let mut templates = BTreeMap::new();
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                return Err(CatalogError::MissingTemplate {
                    dir: dir.to_path_buf(),
                    name: name.to_string(),
                });
            }
            let text =
                std::fs::read_to_string(&path).map_err(|e| CatalogError::Io { path, source: e })?;
            templates.insert(name.to_string(), text);
        }
        Ok(PromptCatalog { templates })
    }

    pub fn get(&self, name: &str) -> Result<&str, CatalogError> {
        self.templates
            .get(name)
            .map(String::as_str)
            .ok_or_else(|| CatalogError::UnknownTemplate(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }

    /// Render a template, replacing each `{key}` with its value.
    /// Placeholders without a supplied value are left untouched.
    pub fn render(&self, name: &str, vars: &[(&str, String)]) -> Result<String, CatalogError> {
        let mut text = self.get(name)?.to_string();
        for (key, value) in vars {
            text = text.replace(&format!("{{{key}}}"), value);
        }
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_has_all_templates() {
        let catalog = PromptCatalog::builtin();
        for name in TEMPLATE_NAMES {
            assert!(catalog.get(name).is_ok(), "missing builtin {name}");
        }
        assert!(catalog.get("nope").is_err());
    }

    #[test]
    fn render_substitutes_placeholders() {
        let catalog = PromptCatalog::builtin();
        let text = catalog
            .render(
                "agent",
                &[
                    ("total_frames", "5400".to_string()),
                    ("tool_names", "video_caption".to_string()),
                ],
            )
            .unwrap();
        assert!(text.contains("Total Frames: 5400 frames."));
        assert!(text.contains("[video_caption]"));
        // Unsupplied placeholders survive verbatim.
        assert!(text.contains("{scene_list}"));
    }

    #[test]
    fn dir_catalog_overrides_builtin() {
        let dir = tempfile::tempdir().unwrap();
        for name in TEMPLATE_NAMES {
            std::fs::write(dir.path().join(format!("{name}.txt")), format!("{name} v2")).unwrap();
        }
        let catalog = PromptCatalog::from_dir(dir.path()).unwrap();
        assert_eq!(catalog.get("policy").unwrap(), "policy v2");
    }

    #[test]
    fn dir_catalog_requires_every_template() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("policy.txt"), "p").unwrap();
        assert!(matches!(
            PromptCatalog::from_dir(dir.path()),
            Err(CatalogError::MissingTemplate { .. })
        ));
    }
}
