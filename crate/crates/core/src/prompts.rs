//! Minimal eliciting prompts.
//!
//! A template is a short sentence with exactly one `{}` slot. Rendering is
//! plain substitution: no articles, inflection or spacing adjustments.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::concepts::ConceptRow;
use crate::lang::Lang;

pub const SLOT: &str = "{}";
pub const DEFAULT_VARIANT: &str = "default";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("template {language}/{variant_id} must contain exactly one {{}} slot, found {found}")]
    SlotCount {
        language: Lang,
        variant_id: String,
        found: usize,
    },
    #[error("missing default template for: {}", .0.iter().map(Lang::as_str).collect::<Vec<_>>().join(", "))]
    MissingDefault(Vec<Lang>),
    #[error("no template {variant_id:?} for {language}")]
    NoTemplate { language: Lang, variant_id: String },
    #[error("concept {concept_id} has no {language} surface")]
    MissingSurface { concept_id: String, language: Lang },
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("invalid language key: {0}")]
    Lang(#[from] crate::lang::InvalidLang),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub language: Lang,
    pub variant_id: String,
    pub pattern: String,
    /// Not a vetted translation; shipped as an editable default.
    #[serde(default)]
    pub unofficial: bool,
}

impl PromptTemplate {
    pub fn new(language: Lang, variant_id: &str, pattern: &str) -> Result<Self, PromptError> {
        let found = pattern.matches(SLOT).count();
        if found != 1 || pattern.trim().is_empty() {
            return Err(PromptError::SlotCount {
                language,
                variant_id: variant_id.to_string(),
                found,
            });
        }
        Ok(Self {
            language,
            variant_id: variant_id.to_string(),
            pattern: pattern.to_string(),
            unofficial: false,
        })
    }

    pub fn fill(&self, surface: &str) -> String {
        self.pattern.replacen(SLOT, surface, 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub concept_id: String,
    pub language: Lang,
    pub variant_id: String,
    pub text: String,
}

pub fn render_prompt(template: &PromptTemplate, row: &ConceptRow) -> Result<RenderedPrompt, PromptError> {
    let surface = row
        .surface(&template.language)
        .ok_or_else(|| PromptError::MissingSurface {
            concept_id: row.concept_id.clone(),
            language: template.language.clone(),
        })?;
    Ok(RenderedPrompt {
        concept_id: row.concept_id.clone(),
        language: template.language.clone(),
        variant_id: template.variant_id.clone(),
        text: template.fill(surface),
    })
}

/// All templates, keyed by `(language, variant_id)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TemplateSet {
    templates: BTreeMap<(Lang, String), PromptTemplate>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PatternEntry {
    Plain(String),
    Annotated {
        pattern: String,
        #[serde(default)]
        unofficial: bool,
    },
}

impl TemplateSet {
    pub fn insert(&mut self, t: PromptTemplate) {
        self.templates
            .insert((t.language.clone(), t.variant_id.clone()), t);
    }

    pub fn get(&self, language: &Lang, variant_id: &str) -> Option<&PromptTemplate> {
        self.templates.get(&(language.clone(), variant_id.to_string()))
    }

    pub fn require(&self, language: &Lang, variant_id: &str) -> Result<&PromptTemplate, PromptError> {
        self.get(language, variant_id)
            .ok_or_else(|| PromptError::NoTemplate {
                language: language.clone(),
                variant_id: variant_id.to_string(),
            })
    }

    /// Variants for one language in variant-id order.
    pub fn variants(&self, language: &Lang) -> Vec<&PromptTemplate> {
        self.templates
            .iter()
            .filter(|((l, _), _)| l == language)
            .map(|(_, t)| t)
            .collect()
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }

    /// Parse `{"<lang>": {"<variant>": "pattern" | {"pattern", "unofficial"}}}`.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, PromptError> {
        let raw: BTreeMap<String, BTreeMap<String, PatternEntry>> =
            serde_json::from_str(text).map_err(|source| PromptError::Json {
                path: origin.to_string(),
                source,
            })?;
        let mut set = Self::default();
        for (lang, variants) in raw {
            let lang = Lang::new(&lang)?;
            for (variant, entry) in variants {
                let (pattern, unofficial) = match entry {
                    PatternEntry::Plain(p) => (p, false),
                    PatternEntry::Annotated {
                        pattern,
                        unofficial,
                    } => (pattern, unofficial),
                };
                let mut t = PromptTemplate::new(lang.clone(), &variant, &pattern)?;
                t.unofficial = unofficial;
                set.insert(t);
            }
        }
        Ok(set)
    }

    /// The shipped defaults: one `default` variant per benchmark language.
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TEMPLATES, "<builtin>").expect("builtin templates are valid")
    }

    /// Load a template file and check every configured language has a
    /// `default` variant.
    pub fn load(path: &Path, languages: &[Lang]) -> Result<Self, PromptError> {
        let text = fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let set = Self::from_json(&text, &path.display().to_string())?;
        set.check_defaults(languages)?;
        Ok(set)
    }

    pub fn check_defaults(&self, languages: &[Lang]) -> Result<(), PromptError> {
        let missing: Vec<Lang> = languages
            .iter()
            .filter(|l| self.get(l, DEFAULT_VARIANT).is_none())
            .cloned()
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(PromptError::MissingDefault(missing))
        }
    }
}

pub const BUILTIN_TEMPLATES: &str = r#"{
  "en": {"default": "a photograph of {}"},
  "es": {"default": "un foto de {}"},
  "de": {"default": {"pattern": "ein Foto von {}", "unofficial": true}},
  "zh": {"default": "一张{}的照片"},
  "ja": {"default": {"pattern": "{}の写真", "unofficial": true}},
  "he": {"default": {"pattern": "תצלום של {}", "unofficial": true}},
  "id": {"default": {"pattern": "sebuah foto {}", "unofficial": true}}
}"#;

/// Every variant × concept for one language, ordered by variant then concept.
pub fn enumerate_variants(
    language: &Lang,
    rows: &[ConceptRow],
    templates: &TemplateSet,
) -> Result<Vec<RenderedPrompt>, PromptError> {
    let mut out = Vec::new();
    for t in templates.variants(language) {
        for row in rows {
            out.push(render_prompt(t, row)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l(c: &str) -> Lang {
        Lang::new(c).unwrap()
    }

    fn row(id: &str, pairs: &[(&str, &str)]) -> ConceptRow {
        ConceptRow {
            concept_id: id.into(),
            surfaces: pairs.iter().map(|(k, v)| (l(k), v.to_string())).collect(),
            provenance: BTreeMap::new(),
        }
    }

    #[test]
    fn builtin_defaults() {
        let set = TemplateSet::builtin();
        assert_eq!(set.get(&l("en"), "default").unwrap().pattern, "a photograph of {}");
        assert_eq!(set.get(&l("es"), "default").unwrap().pattern, "un foto de {}");
        assert!(set.get(&l("de"), "default").unwrap().unofficial);
        let seven: Vec<Lang> = ["en", "es", "de", "zh", "ja", "he", "id"].map(l).to_vec();
        set.check_defaults(&seven).unwrap();
    }

    #[test]
    fn two_slots_rejected() {
        assert!(matches!(
            PromptTemplate::new(l("en"), "x", "{} and {}"),
            Err(PromptError::SlotCount { found: 2, .. })
        ));
        assert!(matches!(
            PromptTemplate::new(l("en"), "x", "no slot"),
            Err(PromptError::SlotCount { found: 0, .. })
        ));
    }

    #[test]
    fn missing_default_lists_languages() {
        let set = TemplateSet::from_json(r#"{"en": {"default": "a {}"}, "es": {"v2": "el {}"}}"#, "t").unwrap();
        let err = set.check_defaults(&[l("en"), l("es"), l("he")]).unwrap_err();
        assert_eq!(err.to_string(), "missing default template for: es, he");
    }

    #[test]
    fn render_cases() {
        let dog = row("dog", &[("en", "dog"), ("es", "perro"), ("ja", "犬")]);
        let en = PromptTemplate::new(l("en"), "default", "a photograph of {}").unwrap();
        assert_eq!(render_prompt(&en, &dog).unwrap().text, "a photograph of dog");
        let es = PromptTemplate::new(l("es"), "default", "un foto de {}").unwrap();
        assert_eq!(render_prompt(&es, &dog).unwrap().text, "un foto de perro");
        let ja = PromptTemplate::new(l("ja"), "default", "{}の写真").unwrap();
        assert_eq!(render_prompt(&ja, &dog).unwrap().text, "犬の写真");
        let he = PromptTemplate::new(l("he"), "default", "תצלום של {}").unwrap();
        assert!(matches!(
            render_prompt(&he, &dog),
            Err(PromptError::MissingSurface { .. })
        ));
    }

    #[test]
    fn variants_cross_product_order() {
        let set = TemplateSet::from_json(
            r#"{"en": {"a": "a photo of {}", "b": "the image of {}"}}"#,
            "t",
        )
        .unwrap();
        let rows = vec![
            row("dog", &[("en", "dog")]),
            row("sea", &[("en", "sea")]),
            row("ship", &[("en", "ship")]),
        ];
        let out = enumerate_variants(&l("en"), &rows, &set).unwrap();
        assert_eq!(out.len(), 6);
        assert_eq!(out[0].text, "a photo of dog");
        assert_eq!(out[2].text, "a photo of ship");
        assert_eq!(out[3].text, "the image of dog");
    }

    #[test]
    fn single_variant_matches_render() {
        let set = TemplateSet::builtin();
        let rows = vec![row("dog", &[("en", "dog")]), row("sea", &[("en", "sea")])];
        let t = set.get(&l("en"), "default").unwrap();
        let direct: Vec<_> = rows.iter().map(|r| render_prompt(t, r).unwrap()).collect();
        assert_eq!(enumerate_variants(&l("en"), &rows, &set).unwrap(), direct);
    }

    proptest! {
        #[test]
        fn render_is_injective(a in "[a-z\u{4e00}-\u{4e10}]{1,8}", b in "[a-z\u{4e00}-\u{4e10}]{1,8}") {
            prop_assume!(a != b);
            let t = PromptTemplate::new(l("zh"), "default", "一张{}的照片").unwrap();
            prop_assert_ne!(t.fill(&a), t.fill(&b));
            prop_assert!(!t.fill(&a).contains(SLOT));
        }
    }
}
