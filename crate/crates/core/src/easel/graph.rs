//! Backend-executable workflow graphs and their canonical JSON form.
//!
//! The wire format is the prompt-API object: node id to
//! `{"class_type": .., "inputs": {..}}`, where an input is either a literal
//! or a `[node_id, output_index]` link. Canonical bytes use sorted keys,
//! two-space indentation and shortest round-trip float formatting, so two
//! graphs are equal exactly when their bytes are.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::media::AssetKind;

#[derive(Debug, Clone, PartialEq)]
pub enum Input {
    Link { node: String, output: u32 },
    Literal(Value),
}

impl Input {
    pub fn link(node: impl Into<String>, output: u32) -> Self {
        Input::Link {
            node: node.into(),
            output,
        }
    }

    pub fn as_literal(&self) -> Option<&Value> {
        match self {
            Input::Literal(v) => Some(v),
            Input::Link { .. } => None,
        }
    }

    fn to_value(&self) -> Value {
        match self {
            Input::Link { node, output } => Value::from(vec![Value::from(node.clone()), Value::from(*output)]),
            Input::Literal(v) => v.clone(),
        }
    }

    fn from_value(v: Value) -> Self {
        if let Value::Array(items) = &v {
            if let [Value::String(node), Value::Number(n)] = items.as_slice() {
                if let Some(output) = n.as_u64().and_then(|o| u32::try_from(o).ok()) {
                    return Input::link(node.clone(), output);
                }
            }
        }
        Input::Literal(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub class_type: String,
    pub inputs: BTreeMap<String, Input>,
}

impl Node {
    pub fn literal(&self, name: &str) -> Option<&Value> {
        self.inputs.get(name).and_then(Input::as_literal)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    #[error("workflow JSON: {0}")]
    Json(String),
    #[error("node {node}: {problem}")]
    BadNode { node: String, problem: String },
    #[error("node {node} input {input} links to missing node {target}")]
    DanglingLink {
        node: String,
        input: String,
        target: String,
    },
    #[error("workflow has a cycle through node {0}")]
    Cycle(String),
    #[error("workflow has no output node")]
    NoOutputs,
    #[error("node {node} input {input} still holds placeholder {text}")]
    UnfilledPlaceholder {
        node: String,
        input: String,
        text: String,
    },
}

/// Output node classes and the kind of asset each produces.
pub fn output_kind(class_type: &str) -> Option<AssetKind> {
    match class_type {
        "SaveImage" => Some(AssetKind::Image),
        "SaveVideo" | "SaveAnimatedWEBP" | "VHS_VideoCombine" => Some(AssetKind::Video),
        "Hy3DExportMesh" => Some(AssetKind::Model3d),
        "ShowText|pysssss" => Some(AssetKind::Text),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WorkflowGraph {
    pub nodes: BTreeMap<String, Node>,
}

fn numeric_then_lexical(a: &str, b: &str) -> std::cmp::Ordering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

impl WorkflowGraph {
    pub fn from_value(value: Value) -> Result<Self, GraphError> {
        let Value::Object(map) = value else {
            return Err(GraphError::Json("workflow must be a JSON object".into()));
        };
        let mut nodes = BTreeMap::new();
        for (id, raw) in map {
            let bad = |problem: &str| GraphError::BadNode {
                node: id.clone(),
                problem: problem.to_owned(),
            };
            let Value::Object(mut fields) = raw else {
                return Err(bad("node must be an object"));
            };
            let class_type = match fields.remove("class_type") {
                Some(Value::String(s)) if !s.is_empty() => s,
                _ => return Err(bad("missing class_type")),
            };
            let inputs = match fields.remove("inputs") {
                Some(Value::Object(inputs)) => inputs
                    .into_iter()
                    .map(|(k, v)| (k, Input::from_value(v)))
                    .collect(),
                None => BTreeMap::new(),
                Some(_) => return Err(bad("inputs must be an object")),
            };
            nodes.insert(id, Node { class_type, inputs });
        }
        Ok(Self { nodes })
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, GraphError> {
        let v: Value = serde_json::from_slice(bytes).map_err(|e| GraphError::Json(e.to_string()))?;
        Self::from_value(v)
    }

    pub fn to_value(&self) -> Value {
        let mut out = serde_json::Map::new();
        for (id, node) in &self.nodes {
            let inputs: serde_json::Map<String, Value> = node
                .inputs
                .iter()
                .map(|(k, v)| (k.clone(), v.to_value()))
                .collect();
            let mut n = serde_json::Map::new();
            n.insert("class_type".into(), Value::from(node.class_type.clone()));
            n.insert("inputs".into(), Value::Object(inputs));
            out.insert(id.clone(), Value::Object(n));
        }
        Value::Object(out)
    }

    /// Canonical bytes: sorted keys, two-space indent, trailing newline.
    pub fn canonical_json(&self) -> Vec<u8> {
        let mut s = String::new();
        write_canonical(&self.to_value(), 0, &mut s);
        s.push('\n');
        s.into_bytes()
    }

    /// Compact canonical bytes for embedding in request bodies.
    pub fn compact_json(&self) -> Vec<u8> {
        let mut s = String::new();
        write_compact(&self.to_value(), &mut s);
        s.into_bytes()
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json()))
    }

    /// Output node ids in numeric order.
    pub fn output_nodes(&self) -> Vec<(&str, AssetKind)> {
        let mut out: Vec<(&str, AssetKind)> = self
            .nodes
            .iter()
            .filter_map(|(id, n)| output_kind(&n.class_type).map(|k| (id.as_str(), k)))
            .collect();
        out.sort_by(|a, b| numeric_then_lexical(a.0, b.0));
        out
    }

    pub fn nodes_of_class<'a>(&'a self, class_type: &'a str) -> impl Iterator<Item = (&'a str, &'a Node)> + 'a {
        self.nodes
            .iter()
            .filter(move |(_, n)| n.class_type == class_type)
            .map(|(id, n)| (id.as_str(), n))
    }

    /// Checks that the graph is submittable: every link resolves, there are
    /// no cycles, no template placeholder survived, and at least one output
    /// node exists.
    pub fn validate(&self) -> Result<(), GraphError> {
        for (id, node) in &self.nodes {
            for (name, input) in &node.inputs {
                match input {
                    Input::Link { node: target, .. } if !self.nodes.contains_key(target) => {
                        return Err(GraphError::DanglingLink {
                            node: id.clone(),
                            input: name.clone(),
                            target: target.clone(),
                        });
                    }
                    Input::Literal(Value::String(s)) if s.contains("{{") => {
                        return Err(GraphError::UnfilledPlaceholder {
                            node: id.clone(),
                            input: name.clone(),
                            text: s.clone(),
                        });
                    }
                    _ => {}
                }
            }
        }
        self.check_acyclic()?;
        if self.output_nodes().is_empty() {
            return Err(GraphError::NoOutputs);
        }
        Ok(())
    }

    fn check_acyclic(&self) -> Result<(), GraphError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Fresh,
            Active,
            Done,
        }
        let mut marks: BTreeMap<&str, Mark> =
            self.nodes.keys().map(|k| (k.as_str(), Mark::Fresh)).collect();
        for start in self.nodes.keys() {
            if marks[start.as_str()] != Mark::Fresh {
                continue;
            }
            // Iterative DFS: (node, next input index to visit)
            let mut stack: Vec<(&str, Vec<&str>)> = vec![(start.as_str(), self.deps(start))];
            marks.insert(start.as_str(), Mark::Active);
            while let Some((node, pending)) = stack.last_mut() {
                if let Some(dep) = pending.pop() {
                    match marks[dep] {
                        Mark::Active => return Err(GraphError::Cycle(dep.to_owned())),
                        Mark::Fresh => {
                            marks.insert(dep, Mark::Active);
                            let deps = self.deps(dep);
                            stack.push((dep, deps));
                        }
                        Mark::Done => {}
                    }
                } else {
                    let node = *node;
                    marks.insert(node, Mark::Done);
                    stack.pop();
                }
            }
        }
        Ok(())
    }

    fn deps(&self, id: &str) -> Vec<&str> {
        let mut out: BTreeSet<&str> = BTreeSet::new();
        if let Some(n) = self.nodes.get(id) {
            for input in n.inputs.values() {
                if let Input::Link { node, .. } = input {
                    if let Some((k, _)) = self.nodes.get_key_value(node) {
                        out.insert(k.as_str());
                    }
                }
            }
        }
        out.into_iter().collect()
    }
}

impl Serialize for WorkflowGraph {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_value().serialize(s)
    }
}

impl<'de> Deserialize<'de> for WorkflowGraph {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Self::from_value(v).map_err(serde::de::Error::custom)
    }
}

fn write_scalar(v: &Value, out: &mut String) {
    // serde_json renders strings with escapes and numbers in shortest
    // round-trip form; neither depends on map ordering.
    out.push_str(&serde_json::to_string(v).expect("scalar serializes"));
}

fn sorted(map: &serde_json::Map<String, Value>) -> Vec<(&String, &Value)> {
    let mut entries: Vec<_> = map.iter().collect();
    entries.sort_by(|a, b| a.0.cmp(b.0));
    entries
}

fn write_canonical(v: &Value, depth: usize, out: &mut String) {
    let pad = |d: usize, out: &mut String| {
        for _ in 0..d {
            out.push_str("  ");
        }
    };
    match v {
        Value::Object(map) if map.is_empty() => out.push_str("{}"),
        Value::Object(map) => {
            out.push_str("{\n");
            let entries = sorted(map);
            for (i, (k, val)) in entries.iter().enumerate() {
                pad(depth + 1, out);
                write_scalar(&Value::String((*k).clone()), out);
                out.push_str(": ");
                write_canonical(val, depth + 1, out);
                if i + 1 < entries.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(depth, out);
            out.push('}');
        }
        Value::Array(items) if items.is_empty() => out.push_str("[]"),
        Value::Array(items) if items.iter().all(|i| !i.is_object() && !i.is_array()) => {
            // Links and other scalar lists stay on one line.
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_scalar(item, out);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(depth + 1, out);
                write_canonical(item, depth + 1, out);
                if i + 1 < items.len() {
                    out.push(',');
                }
                out.push('\n');
            }
            pad(depth, out);
            out.push(']');
        }
        scalar => write_scalar(scalar, out),
    }
}

fn write_compact(v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            out.push('{');
            for (i, (k, val)) in sorted(map).into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_scalar(&Value::String(k.clone()), out);
                out.push(':');
                write_compact(val, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_compact(item, out);
            }
            out.push(']');
        }
        scalar => write_scalar(scalar, out),
    }
}

/// Renders any JSON value with the same canonical layout as graphs.
pub fn canonical_value_json(v: &Value) -> String {
    let mut s = String::new();
    write_canonical(v, 0, &mut s);
    s
}

/// Compact sorted-key rendering of any JSON value.
pub fn compact_value_json(v: &Value) -> String {
    let mut s = String::new();
    write_compact(v, &mut s);
    s
}
