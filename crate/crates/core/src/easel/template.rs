//! Versioned workflow templates with `{{name}}` placeholders.
//!
//! A placeholder is a JSON string whose entire content is `{{name}}`; it is
//! replaced by a typed value (number, string, bool). Instantiation is strict:
//! every placeholder must be bound and every binding must be used.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;

use super::graph::{GraphError, WorkflowGraph};

/// Version of the template set compiled into this crate. Bump whenever a
/// shipped template changes; compiled graphs are a pure function of
/// `(spec, TEMPLATE_SET_VERSION)`.
pub const TEMPLATE_SET_VERSION: u32 = 1;

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../templates/", $name, ".json")))),*]
    };
}

static BUILTIN: &[(&str, &str)] = builtin!(
    "draw_flux",
    "draw_sdxl",
    "draw_wan22",
    "paint_flux",
    "paint_flux_uso",
    "trace_flux",
    "trace_flux_uso",
    "trace_wan22",
    "modify_flux_kontext",
    "animate_wan22",
    "quick_remove_background",
    "quick_extract_element",
    "quick_stencil",
    "quick_upscale",
    "quick_extend",
    "quick_sculpt",
    "preprocess_metadata",
);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TemplateError {
    #[error("template {0:?} not found")]
    Missing(String),
    #[error("template {name}: {message}")]
    Malformed { name: String, message: String },
    #[error("template {name}: placeholder {{{{{key}}}}} has no value")]
    Unbound { name: String, key: String },
    #[error("template {name}: parameter {key:?} is not used")]
    Unused { name: String, key: String },
    #[error("template {name}: {source}")]
    Graph { name: String, source: GraphError },
    #[error("template io: {0}")]
    Io(String),
}

#[derive(Debug, Deserialize)]
struct TemplateFile {
    name: String,
    version: u32,
    #[serde(default)]
    description: String,
    prompt: Value,
}

#[derive(Debug, Clone)]
pub struct Template {
    pub name: String,
    pub version: u32,
    pub description: String,
    body: Value,
}

/// Typed parameter bindings for one instantiation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params(BTreeMap<String, Value>);

impl Params {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<Value>) -> &mut Self {
        self.0.insert(key.into(), value.into());
        self
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }
}

fn placeholder(s: &str) -> Option<&str> {
    s.strip_prefix("{{")?.strip_suffix("}}")
}

impl Template {
    pub fn parse(text: &str) -> Result<Self, TemplateError> {
        let file: TemplateFile = serde_json::from_str(text).map_err(|e| TemplateError::Malformed {
            name: "<unnamed>".into(),
            message: e.to_string(),
        })?;
        if !file.prompt.is_object() {
            return Err(TemplateError::Malformed {
                name: file.name,
                message: "prompt must be an object".into(),
            });
        }
        Ok(Self {
            name: file.name,
            version: file.version,
            description: file.description,
            body: file.prompt,
        })
    }

    /// All placeholder names the template expects.
    pub fn placeholders(&self) -> BTreeSet<String> {
        fn walk(v: &Value, out: &mut BTreeSet<String>) {
            match v {
                Value::String(s) => {
                    if let Some(k) = placeholder(s) {
                        out.insert(k.to_owned());
                    }
                }
                Value::Array(items) => items.iter().for_each(|i| walk(i, out)),
                Value::Object(map) => map.values().for_each(|i| walk(i, out)),
                _ => {}
            }
        }
        let mut out = BTreeSet::new();
        walk(&self.body, &mut out);
        out
    }

    pub fn instantiate(&self, params: &Params) -> Result<WorkflowGraph, TemplateError> {
        let mut used = BTreeSet::new();
        let body = self.fill(&self.body, params, &mut used)?;
        if let Some(extra) = params.keys().find(|k| !used.contains(*k)) {
            return Err(TemplateError::Unused {
                name: self.name.clone(),
                key: extra.to_owned(),
            });
        }
        let graph = WorkflowGraph::from_value(body).map_err(|source| TemplateError::Graph {
            name: self.name.clone(),
            source,
        })?;
        graph.validate().map_err(|source| TemplateError::Graph {
            name: self.name.clone(),
            source,
        })?;
        Ok(graph)
    }

    fn fill(&self, v: &Value, params: &Params, used: &mut BTreeSet<String>) -> Result<Value, TemplateError> {
        Ok(match v {
            Value::String(s) => match placeholder(s) {
                Some(key) => {
                    let value = params.get(key).ok_or_else(|| TemplateError::Unbound {
                        name: self.name.clone(),
                        key: key.to_owned(),
                    })?;
                    used.insert(key.to_owned());
                    value.clone()
                }
                None => v.clone(),
            },
            Value::Array(items) => Value::Array(
                items
                    .iter()
                    .map(|i| self.fill(i, params, used))
                    .collect::<Result<_, _>>()?,
            ),
            Value::Object(map) => {
                let mut out = serde_json::Map::new();
                for (k, i) in map {
                    out.insert(k.clone(), self.fill(i, params, used)?);
                }
                Value::Object(out)
            }
            other => other.clone(),
        })
    }
}

/// An immutable collection of templates, shared freely across threads.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, Template>,
}

impl TemplateSet {
    /// The templates shipped with this crate.
    pub fn builtin() -> &'static TemplateSet {
        static SET: std::sync::OnceLock<TemplateSet> = std::sync::OnceLock::new();
        SET.get_or_init(|| {
            let templates = BUILTIN
                .iter()
                .map(|(name, text)| {
                    let t = Template::parse(text).unwrap_or_else(|e| panic!("builtin template {name}: {e}"));
                    assert_eq!(t.name, *name, "template file name and name field disagree");
                    (t.name.clone(), t)
                })
                .collect();
            TemplateSet { templates }
        })
    }

    /// Loads every `*.json` file in `dir` as a template.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut templates = BTreeMap::new();
        let entries = std::fs::read_dir(dir).map_err(|e| TemplateError::Io(e.to_string()))?;
        for entry in entries {
            let path = entry.map_err(|e| TemplateError::Io(e.to_string()))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io(e.to_string()))?;
            let t = Template::parse(&text)?;
            templates.insert(t.name.clone(), t);
        }
        Ok(Self { templates })
    }

    pub fn get(&self, name: &str) -> Result<&Template, TemplateError> {
        self.templates
            .get(name)
            .ok_or_else(|| TemplateError::Missing(name.to_owned()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.templates.keys().map(String::as_str)
    }
}
