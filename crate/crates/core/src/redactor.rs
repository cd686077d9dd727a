//! Masks the values of fields a trained model scores as sensitive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::{ModelError, TrainedModel};
use crate::schema::{flatten_with_paths, FlattenOptions, ResponseNode, SchemaError};

pub const PLACEHOLDER: &str = "[REDACTED]";

#[derive(Debug, Error)]
pub enum RedactError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid redaction setup: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Redacted,
    Allowed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub path: String,
    /// Child indices from the root to the field.
    pub indices: Vec<usize>,
    pub field_name: String,
    pub field_type: String,
    pub score: f64,
    pub threshold: f64,
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedactionResult {
    pub response: ResponseNode,
    pub audit: Vec<AuditEntry>,
}

impl RedactionResult {
    pub fn redacted_count(&self) -> usize {
        self.audit.iter().filter(|a| a.action == Action::Redacted).count()
    }
}

/// Scores every field of the response and replaces the value of each field
/// scoring at or above the threshold with [`PLACEHOLDER`]. Names, types and
/// structure are untouched; children of a redacted object are scored on
/// their own.
pub fn redact(
    response: &ResponseNode,
    command: &str,
    module: &str,
    model: &TrainedModel,
    threshold_override: Option<f64>,
) -> Result<RedactionResult, RedactError> {
    let threshold = threshold_override.unwrap_or(model.threshold);
    if threshold.is_nan() {
        return Err(RedactError::Config("threshold is not a number".into()));
    }
    let transform = model
        .transform
        .as_ref()
        .ok_or_else(|| RedactError::Config("model artifact has no bound transform".into()))?;
    let featurizer = transform
        .featurizer()
        .map_err(|e| RedactError::Config(format!("cannot load the model's transform: {e}")))?;

    let fields = flatten_with_paths(command, module, response, FlattenOptions::default())?;
    let mut redacted = response.clone();
    let mut audit = Vec::with_capacity(fields.len());
    for field in fields {
        let score = model.predict_proba(&featurizer.transform(&field.record).values)?;
        let action = if score >= threshold {
            let node = field
                .indices
                .iter()
                .fold(&mut redacted, |node, &i| &mut node.children[i]);
            if node.value.is_some() {
                node.value = Some(serde_json::Value::String(PLACEHOLDER.to_string()));
            }
            Action::Redacted
        } else {
            Action::Allowed
        };
        audit.push(AuditEntry {
            path: field.path,
            indices: field.indices,
            field_name: field.record.field_name,
            field_type: field.record.field_type,
            score,
            threshold,
            action,
        });
    }
    Ok(RedactionResult {
        response: redacted,
        audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{train, FeatureMatrix, ModelKind, ModelSpec};
    use crate::schema::FieldRecord;
    use crate::tokenizer::TokenizerConfig;
    use crate::transforms::{FittedTransform, TransformConfig, TransformKind};
    use serde_json::json;

    fn record(field: &str, ty: &str, label: bool) -> FieldRecord {
        FieldRecord {
            command: "Get-AzThing".into(),
            module: "Things".into(),
            field_name: field.into(),
            field_type: ty.into(),
            parent_name: String::new(),
            parent_type: "PSThing".into(),
            label,
        }
    }

    fn password_model() -> TrainedModel {
        let mut records = Vec::new();
        for _ in 0..5 {
            records.push(record("AdminPassword", "string", true));
            records.push(record("Password", "SecureString", true));
            for name in ["Location", "Name", "Id", "Status", "Tier", "Owner"] {
                records.push(record(name, "string", false));
            }
        }
        let fitted = FittedTransform::fit(
            TransformConfig::new(TransformKind::BowPf),
            TokenizerConfig::default(),
            &records,
            None,
        )
        .unwrap();
        let featurizer = fitted.featurizer().unwrap();
        let mut x = FeatureMatrix::new(fitted.dimension());
        for r in &records {
            x.push_dense(&featurizer.transform(r).values).unwrap();
        }
        let y: Vec<bool> = records.iter().map(|r| r.label).collect();
        train(&x, &y, &ModelSpec::new(ModelKind::Lr, 0))
            .unwrap()
            .with_transform(fitted)
            .unwrap()
    }

    fn response() -> ResponseNode {
        ResponseNode::object(
            "",
            "PSThing",
            vec![
                ResponseNode::leaf("AdminPassword", "string", Some(json!("hunter2"))),
                ResponseNode::leaf("Location", "string", Some(json!("westus"))),
                ResponseNode::object(
                    "Profile",
                    "PSProfile",
                    vec![ResponseNode::leaf("Name", "string", Some(json!("p1")))],
                ),
            ],
        )
    }

    #[test]
    fn masks_password_but_not_location() {
        let model = password_model();
        let out = redact(&response(), "Get-AzThing", "Things", &model, None).unwrap();
        assert_eq!(out.audit.len(), 5);
        assert_eq!(out.response.children[0].value, Some(json!(PLACEHOLDER)));
        assert_eq!(out.response.children[0].name, "AdminPassword");
        assert_eq!(out.response.children[1].value, Some(json!("westus")));
        let entry = out.audit.iter().find(|a| a.path == "$/AdminPassword").unwrap();
        assert_eq!(entry.action, Action::Redacted);
    }

    #[test]
    fn degenerate_thresholds() {
        let model = password_model();
        let all = redact(&response(), "Get-AzThing", "Things", &model, Some(0.0)).unwrap();
        assert_eq!(all.redacted_count(), 5);
        assert_eq!(all.response.children[2].children[0].value, Some(json!(PLACEHOLDER)));
        let none = redact(&response(), "Get-AzThing", "Things", &model, Some(1.5)).unwrap();
        assert_eq!(none.redacted_count(), 0);
        assert_eq!(none.audit.len(), 5);
        assert_eq!(none.response, response());
    }

    #[test]
    fn redaction_is_idempotent() {
        let model = password_model();
        let once = redact(&response(), "Get-AzThing", "Things", &model, None).unwrap();
        let twice = redact(&once.response, "Get-AzThing", "Things", &model, None).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn missing_embedding_file_is_a_config_error() {
        let mut model = password_model();
        let mut t = model.transform.take().unwrap();
        t.config = TransformConfig::new(TransformKind::We);
        t.embeddings = Some(crate::transforms::EmbeddingSource::File("/nonexistent/vectors.txt".into()));
        model.n_features = t.dimension();
        model.transform = Some(t);
        let err = redact(&response(), "Get-AzThing", "Things", &model, None).unwrap_err();
        assert!(matches!(err, RedactError::Config(_)));
    }
}
