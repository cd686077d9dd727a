//! Response trees, per-field records and document rendering.
//!
//! A command returns a tree of typed variables. Each node of that tree
//! becomes one [`FieldRecord`] carrying six textual features: the command,
//! its module, the field name and type, and the name and type of the
//! immediate parent. Variable values are kept on the tree only so that the
//! redactor can mask them; they never become features.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tokenizer::Tokenizer;

pub const DEFAULT_MAX_DEPTH: usize = 64;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed response tree: {0}")]
    Structure(String),
    #[error("response tree deeper than the configured maximum of {max}")]
    Depth { max: usize },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One variable of a command response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseNode {
    #[serde(default)]
    pub name: String,
    #[serde(rename = "type", default)]
    pub type_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<ResponseNode>,
}

impl ResponseNode {
    pub fn leaf(name: &str, type_name: &str, value: Option<serde_json::Value>) -> Self {
        Self {
            name: name.to_string(),
            type_name: type_name.to_string(),
            value,
            children: Vec::new(),
        }
    }

    pub fn object(name: &str, type_name: &str, children: Vec<ResponseNode>) -> Self {
        Self {
            name: name.to_string(),
            type_name: type_name.to_string(),
            value: None,
            children,
        }
    }

    /// Number of nodes in the tree, root included.
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(Self::node_count).sum::<usize>()
    }
}

/// The six textual features of a record, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    Command,
    Module,
    FieldName,
    FieldType,
    ParentName,
    ParentType,
}

impl Feature {
    pub const ALL: [Feature; 6] = [
        Feature::Command,
        Feature::Module,
        Feature::FieldName,
        Feature::FieldType,
        Feature::ParentName,
        Feature::ParentType,
    ];

    pub const COUNT: usize = Self::ALL.len();

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Feature::Command => "Command",
            Feature::Module => "Module",
            Feature::FieldName => "Field Name",
            Feature::FieldType => "Field Type",
            Feature::ParentName => "Parent Name",
            Feature::ParentType => "Parent Type",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// One response field as a labeled training example.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FieldRecord {
    pub command: String,
    pub module: String,
    pub field_name: String,
    pub field_type: String,
    pub parent_name: String,
    pub parent_type: String,
    /// `true` when the field holds sensitive data and must be redacted.
    #[serde(with = "label_bit")]
    pub label: bool,
}

impl FieldRecord {
    pub fn feature(&self, feature: Feature) -> &str {
        match feature {
            Feature::Command => &self.command,
            Feature::Module => &self.module,
            Feature::FieldName => &self.field_name,
            Feature::FieldType => &self.field_type,
            Feature::ParentName => &self.parent_name,
            Feature::ParentType => &self.parent_type,
        }
    }

    pub fn features(&self) -> [&str; 6] {
        Feature::ALL.map(|f| self.feature(f))
    }
}

mod label_bit {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(label: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*label))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(de::Error::custom(format!("label must be 0 or 1, got {other}"))),
        }
    }
}

/// An ordered list of normalized words.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Document {
    pub tokens: Vec<String>,
}

impl Document {
    pub fn new(tokens: Vec<String>) -> Self {
        Self { tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Document {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self::new(iter.into_iter().map(Into::into).collect())
    }
}

/// Tokenizes each of the six features separately, in canonical order.
pub fn tokenize_record(record: &FieldRecord, tokenizer: &Tokenizer) -> [Document; 6] {
    Feature::ALL.map(|f| Document::new(tokenizer.tokenize(record.feature(f))))
}

/// The whole record as one document: the six feature token lists concatenated.
pub fn record_document(record: &FieldRecord, tokenizer: &Tokenizer) -> Document {
    let tokens = Feature::ALL
        .iter()
        .flat_map(|&f| tokenizer.tokenize(record.feature(f)))
        .collect();
    Document::new(tokens)
}

/// Renders a record as `command;module;field name;field type;parent name;parent type`,
/// with the words of each feature separated by single spaces.
pub fn render_document(record: &FieldRecord, tokenizer: &Tokenizer) -> String {
    Feature::ALL
        .iter()
        .map(|&f| tokenizer.tokenize(record.feature(f)).join(" "))
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlattenOptions {
    pub max_depth: usize,
}

impl Default for FlattenOptions {
    fn default() -> Self {
        Self {
            max_depth: DEFAULT_MAX_DEPTH,
        }
    }
}

/// A record together with the position of its node in the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatField {
    /// Child indices from the root down to the node. Empty for the root.
    pub indices: Vec<usize>,
    /// Slash-separated field names, `$` standing for the root.
    pub path: String,
    pub record: FieldRecord,
}

/// Flattens a response into one record per node, in depth-first preorder.
pub fn flatten_response(
    command: &str,
    module: &str,
    root: &ResponseNode,
) -> Result<Vec<FieldRecord>, SchemaError> {
    flatten_with_options(command, module, root, FlattenOptions::default())
}

pub fn flatten_with_options(
    command: &str,
    module: &str,
    root: &ResponseNode,
    options: FlattenOptions,
) -> Result<Vec<FieldRecord>, SchemaError> {
    Ok(flatten_with_paths(command, module, root, options)?
        .into_iter()
        .map(|f| f.record)
        .collect())
}

pub fn flatten_with_paths(
    command: &str,
    module: &str,
    root: &ResponseNode,
    options: FlattenOptions,
) -> Result<Vec<FlatField>, SchemaError> {
    if command.is_empty() {
        return Err(SchemaError::Structure("command name is empty".into()));
    }
    let mut out = Vec::new();
    let root_record = FieldRecord {
        command: command.to_string(),
        module: module.to_string(),
        field_name: root.name.clone(),
        field_type: root.type_name.clone(),
        parent_name: String::new(),
        parent_type: String::new(),
        label: false,
    };
    out.push(FlatField {
        indices: Vec::new(),
        path: "$".to_string(),
        record: root_record,
    });
    let mut indices = Vec::new();
    walk(command, module, root, "$", &mut indices, 0, options, &mut out)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk(
    command: &str,
    module: &str,
    parent: &ResponseNode,
    parent_path: &str,
    indices: &mut Vec<usize>,
    depth: usize,
    options: FlattenOptions,
    out: &mut Vec<FlatField>,
) -> Result<(), SchemaError> {
    if parent.children.is_empty() {
        return Ok(());
    }
    if depth + 1 > options.max_depth {
        return Err(SchemaError::Depth {
            max: options.max_depth,
        });
    }
    for (i, child) in parent.children.iter().enumerate() {
        if child.name.is_empty() || child.type_name.is_empty() {
            return Err(SchemaError::Structure(format!(
                "child {i} of {parent_path} has an empty name or type"
            )));
        }
        indices.push(i);
        let path = format!("{parent_path}/{}", child.name);
        out.push(FlatField {
            indices: indices.clone(),
            path: path.clone(),
            record: FieldRecord {
                command: command.to_string(),
                module: module.to_string(),
                field_name: child.name.clone(),
                field_type: child.type_name.clone(),
                parent_name: parent.name.clone(),
                parent_type: parent.type_name.clone(),
                label: false,
            },
        });
        walk(command, module, child, &path, indices, depth + 1, options, out)?;
        indices.pop();
    }
    Ok(())
}

/// A response as stored on disk, optionally carrying the command that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseEnvelope {
    pub command: String,
    pub module: String,
    pub response: ResponseNode,
}

/// Reads a response file: either a bare tree or an envelope with
/// `command`, `module` and `response` keys.
pub fn read_response(path: &Path) -> Result<(Option<(String, String)>, ResponseNode), SchemaError> {
    let value: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if value.get("response").is_some() {
        let env: ResponseEnvelope = serde_json::from_value(value)?;
        Ok((Some((env.command, env.module)), env.response))
    } else {
        Ok((None, serde_json::from_value(value)?))
    }
}

pub fn read_corpus(path: &Path) -> Result<Vec<FieldRecord>, SchemaError> {
    let reader = BufReader::new(File::open(path)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: FieldRecord = serde_json::from_str(&line).map_err(|e| SchemaError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if record.command.is_empty() {
            return Err(SchemaError::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: "empty command".into(),
            });
        }
        records.push(record);
    }
    Ok(records)
}

pub fn write_corpus(path: &Path, records: &[FieldRecord]) -> Result<(), SchemaError> {
    let mut w = BufWriter::new(File::create(path)?);
    for record in records {
        serde_json::to_writer(&mut w, record)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn get_az_location() -> ResponseNode {
        ResponseNode::object(
            "",
            "PSResourceProviderLocation",
            vec![
                ResponseNode::leaf("Location", "string", Some(json!("eastasia"))),
                ResponseNode::leaf("DisplayName", "string", Some(json!("East Asia"))),
                ResponseNode::leaf(
                    "Providers",
                    "System.Collections.Generic.List<string>",
                    Some(json!(["Microsoft.Devices", "Microsoft.Cache"])),
                ),
            ],
        )
    }

    fn row(field: &str, ty: &str, parent: &str, parent_ty: &str) -> FieldRecord {
        FieldRecord {
            command: "Get-AzLocation".into(),
            module: "Resources".into(),
            field_name: field.into(),
            field_type: ty.into(),
            parent_name: parent.into(),
            parent_type: parent_ty.into(),
            label: false,
        }
    }

    #[test]
    fn flatten_matches_location_table() {
        let records = flatten_response("Get-AzLocation", "Resources", &get_az_location()).unwrap();
        let root_type = "PSResourceProviderLocation";
        assert_eq!(
            records,
            vec![
                row("", root_type, "", ""),
                row("Location", "string", "", root_type),
                row("DisplayName", "string", "", root_type),
                row("Providers", "System.Collections.Generic.List<string>", "", root_type),
            ]
        );
    }

    #[test]
    fn single_leaf_has_empty_parent() {
        let leaf = ResponseNode::leaf("Name", "string", None);
        let records = flatten_response("cmd", "mod", &leaf).unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].parent_name, "");
        assert_eq!(records[0].parent_type, "");
    }

    #[test]
    fn nested_tree_preorder() {
        // root(R:TR) -> [A:TA -> [C:TC -> [D:TD]], B:TB]
        let tree = ResponseNode::object(
            "R",
            "TR",
            vec![
                ResponseNode::object(
                    "A",
                    "TA",
                    vec![ResponseNode::object("C", "TC", vec![ResponseNode::leaf("D", "TD", None)])],
                ),
                ResponseNode::leaf("B", "TB", None),
            ],
        );
        let got: Vec<_> = flatten_response("cmd", "mod", &tree)
            .unwrap()
            .into_iter()
            .map(|r| (r.field_name, r.field_type, r.parent_name, r.parent_type))
            .collect();
        let s = |a: &str| a.to_string();
        let expected = vec![
            (s("R"), s("TR"), s(""), s("")),
            (s("A"), s("TA"), s("R"), s("TR")),
            (s("C"), s("TC"), s("A"), s("TA")),
            (s("D"), s("TD"), s("C"), s("TC")),
            (s("B"), s("TB"), s("R"), s("TR")),
        ];
        assert_eq!(got, expected);
    }

    #[test]
    fn depth_limit() {
        let mut node = ResponseNode::leaf("Leaf", "string", None);
        for i in 0..10 {
            node = ResponseNode::object(&format!("N{i}"), "Obj", vec![node]);
        }
        let opts = FlattenOptions { max_depth: 5 };
        assert!(matches!(
            flatten_with_options("cmd", "mod", &node, opts),
            Err(SchemaError::Depth { max: 5 })
        ));
        let opts = FlattenOptions { max_depth: 10 };
        assert_eq!(flatten_with_options("cmd", "mod", &node, opts).unwrap().len(), 11);
    }

    #[test]
    fn unnamed_child_is_structural_error() {
        let tree = ResponseNode::object("", "Root", vec![ResponseNode::leaf("", "string", None)]);
        assert!(matches!(
            flatten_response("cmd", "mod", &tree),
            Err(SchemaError::Structure(_))
        ));
        assert!(matches!(
            flatten_response("", "mod", &get_az_location()),
            Err(SchemaError::Structure(_))
        ));
    }

    #[test]
    fn paths_follow_names() {
        let fields =
            flatten_with_paths("Get-AzLocation", "Resources", &get_az_location(), FlattenOptions::default())
                .unwrap();
        let paths: Vec<_> = fields.iter().map(|f| f.path.as_str()).collect();
        assert_eq!(paths, ["$", "$/Location", "$/DisplayName", "$/Providers"]);
        assert_eq!(fields[3].indices, vec![2]);
    }

    #[test]
    fn render_location_documents() {
        let records = flatten_response("Get-AzLocation", "Resources", &get_az_location()).unwrap();
        let t = Tokenizer::case_preserving();
        let rendered: Vec<_> = records.iter().map(|r| render_document(r, &t)).collect();
        assert_eq!(
            rendered,
            [
                "Get Az Location;Resources;;PS Resource Provider Location;;",
                "Get Az Location;Resources;Location;string;;PS Resource Provider Location",
                "Get Az Location;Resources;Display Name;string;;PS Resource Provider Location",
                "Get Az Location;Resources;Providers;System Collections Generic List string;;PS Resource Provider Location",
            ]
        );
    }

    #[test]
    fn empty_record_renders_separators_only() {
        let r = FieldRecord {
            command: String::new(),
            module: String::new(),
            field_name: String::new(),
            field_type: String::new(),
            parent_name: String::new(),
            parent_type: String::new(),
            label: false,
        };
        assert_eq!(render_document(&r, &Tokenizer::default()), ";;;;;");
        assert!(tokenize_record(&r, &Tokenizer::default()).iter().all(Document::is_empty));
    }

    #[test]
    fn tokenize_record_matches_rendered_segments() {
        let records = flatten_response("Get-AzLocation", "Resources", &get_az_location()).unwrap();
        let t = Tokenizer::case_preserving();
        let docs = tokenize_record(&records[3], &t);
        let segments: Vec<String> = docs.iter().map(|d| d.tokens.join(" ")).collect();
        assert_eq!(
            segments,
            [
                "Get Az Location",
                "Resources",
                "Providers",
                "System Collections Generic List string",
                "",
                "PS Resource Provider Location"
            ]
        );
    }

    #[test]
    fn label_serializes_as_bit() {
        let mut r = row("Key", "string", "", "");
        r.label = true;
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.ends_with("\"label\":1}"));
        let back: FieldRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
        let bad = line.replace("\"label\":1", "\"label\":2");
        assert!(serde_json::from_str::<FieldRecord>(&bad).is_err());
    }

    #[test]
    fn corpus_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let records = flatten_response("Get-AzLocation", "Resources", &get_az_location()).unwrap();
        write_corpus(&path, &records).unwrap();
        assert_eq!(read_corpus(&path).unwrap(), records);
        std::fs::write(&path, "{\"command\":\"x\"}\n").unwrap();
        assert!(matches!(read_corpus(&path), Err(SchemaError::Parse { line: 1, .. })));
    }
}
