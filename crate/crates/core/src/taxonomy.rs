//! Keyword taxonomy that maps call sites to leakage-relevant roles.

use std::path::Path;

use thiserror::Error;

use crate::syntax::CallSite;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CallRole {
    Split,
    Sample,
    Fit,
    Transform,
    FitTransform,
    Evaluate,
    Other,
}

/// Order in which role keyword lists are tried; the first match wins.
const PRECEDENCE: [CallRole; 6] = [
    CallRole::FitTransform,
    CallRole::Split,
    CallRole::Sample,
    CallRole::Evaluate,
    CallRole::Fit,
    CallRole::Transform,
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Taxonomy {
    pub split: Vec<String>,
    pub sample: Vec<String>,
    pub fit: Vec<String>,
    pub transform: Vec<String>,
    pub fit_transform: Vec<String>,
    pub evaluate: Vec<String>,
    /// Constructor keywords that identify preprocessing objects.
    pub transformer_markers: Vec<String>,
    /// Name keywords that identify test data.
    pub test_name_markers: Vec<String>,
}

fn words(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

impl Default for Taxonomy {
    fn default() -> Self {
        Taxonomy {
            split: words(&["split"]),
            sample: words(&["sample", "resample"]),
            fit: words(&["fit"]),
            transform: words(&["transform"]),
            fit_transform: words(&["fit_transform"]),
            evaluate: words(&[
                "score",
                "evaluate",
                "predict",
                "cross_val",
                "classification_report",
                "accuracy",
                "auc",
            ]),
            transformer_markers: words(&[
                "vectorizer",
                "scaler",
                "encoder",
                "selector",
                "pca",
                "imputer",
                "selectkbest",
                "normalizer",
                "tfidf",
            ]),
            test_name_markers: words(&["test"]),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read taxonomy config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("taxonomy config line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl Taxonomy {
    pub fn keywords(&self, role: CallRole) -> &[String] {
        match role {
            CallRole::Split => &self.split,
            CallRole::Sample => &self.sample,
            CallRole::Fit => &self.fit,
            CallRole::Transform => &self.transform,
            CallRole::FitTransform => &self.fit_transform,
            CallRole::Evaluate => &self.evaluate,
            CallRole::Other => &[],
        }
    }

    /// Classifies a call by its final name segment.
    pub fn classify(&self, call: &CallSite) -> CallRole {
        self.classify_name(&call.callee_tail)
    }

    pub fn classify_name(&self, callee_tail: &str) -> CallRole {
        let tail = callee_tail.to_lowercase();
        PRECEDENCE
            .into_iter()
            .find(|&role| {
                self.keywords(role)
                    .iter()
                    .any(|kw| tail.contains(kw.as_str()))
            })
            .unwrap_or(CallRole::Other)
    }

    pub fn is_transformer(&self, callee_tail: &str) -> bool {
        let tail = callee_tail.to_lowercase();
        self.transformer_markers
            .iter()
            .any(|m| tail.contains(m.as_str()))
    }

    pub fn is_test_name(&self, name: &str) -> bool {
        let name = name.to_lowercase();
        self.test_name_markers
            .iter()
            .any(|m| name.contains(m.as_str()))
    }

    /// Overlays `role: kw1, kw2` lines on the defaults. A role listed in the
    /// file replaces its default list.
    pub fn parse_config(text: &str) -> Result<Self, ConfigError> {
        let mut tax = Taxonomy::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| ConfigError::Parse {
                line: line_no,
                message,
            };
            let (role, list) = line
                .split_once(':')
                .ok_or_else(|| err(format!("expected `role: keyword, ...`, found `{line}`")))?;
            let keywords: Vec<String> = list
                .split(',')
                .map(|k| k.trim().to_lowercase())
                .filter(|k| !k.is_empty())
                .collect();
            if keywords.is_empty() {
                return Err(err(format!("role `{}` has no keywords", role.trim())));
            }
            let slot = match role.trim() {
                "split" => &mut tax.split,
                "sample" => &mut tax.sample,
                "fit" => &mut tax.fit,
                "transform" => &mut tax.transform,
                "fit_transform" => &mut tax.fit_transform,
                "evaluate" => &mut tax.evaluate,
                "transformer_markers" => &mut tax.transformer_markers,
                "test_name_markers" => &mut tax.test_name_markers,
                other => return Err(err(format!("unknown role `{other}`"))),
            };
            *slot = keywords;
        }
        Ok(tax)
    }
}

/// Loads the taxonomy from `path`, or the built-in defaults when absent.
pub fn load_taxonomy(path: Option<&Path>) -> Result<Taxonomy, ConfigError> {
    let Some(path) = path else {
        return Ok(Taxonomy::default());
    };
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Taxonomy::parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_roles() {
        let tax = Taxonomy::default();
        assert_eq!(tax.classify_name("train_test_split"), CallRole::Split);
        assert_eq!(tax.classify_name("fit_resample"), CallRole::Sample);
        assert_eq!(tax.classify_name("foo"), CallRole::Other);
        assert_eq!(tax.classify_name("fit_transform"), CallRole::FitTransform);
        assert_eq!(tax.classify_name("fit"), CallRole::Fit);
        assert_eq!(tax.classify_name("transform"), CallRole::Transform);
        assert_eq!(tax.classify_name("accuracy_score"), CallRole::Evaluate);
        assert_eq!(tax.classify_name("split"), CallRole::Split);
    }

    #[test]
    fn defaults_contain_keywords() {
        let tax = load_taxonomy(None).unwrap();
        assert!(tax.split.contains(&"split".to_string()));
        assert!(tax.sample.contains(&"sample".to_string()));
        assert!(tax.sample.contains(&"resample".to_string()));
    }

    #[test]
    fn config_replaces_role_list() {
        let tax = Taxonomy::parse_config("# custom\nsplit: my_partition\n\n").unwrap();
        assert_eq!(tax.split, vec!["my_partition"]);
        assert_eq!(tax.sample, Taxonomy::default().sample);
        assert_eq!(tax.classify_name("train_test_split"), CallRole::Other);
        assert_eq!(tax.classify_name("my_partition"), CallRole::Split);
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        match Taxonomy::parse_config("sample: smote\nsplit") {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            Taxonomy::parse_config("colour: red"),
            Err(ConfigError::Parse { line: 1, .. })
        ));
    }

    proptest! {
        #[test]
        fn classification_ignores_case(name in "[a-zA-Z_]{1,20}") {
            let tax = Taxonomy::default();
            prop_assert_eq!(tax.classify_name(&name), tax.classify_name(&name.to_uppercase()));
        }

        #[test]
        fn fit_transform_wins_over_transform(prefix in "[a-z]{0,5}", suffix in "[a-z]{0,5}") {
            let tax = Taxonomy::default();
            let name = format!("{prefix}fit_transform{suffix}");
            prop_assert_eq!(tax.classify_name(&name), CallRole::FitTransform);
        }
    }
}
