//! Content registry: documents describing models, apps, workflows and
//! assets, each holding a pointer URI to where the content actually lives.
//!
//! The registry never stores content bytes. Documents are validated on the
//! way in ([`parse_document`] for the JSON interchange format, then
//! [`ContentDocument::validate`]) and indexed for [`Registry::search`].

mod search;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};
use thiserror::Error;

use crate::workflow::WorkflowSpec;

pub use search::{document_tokens, tokenize, InvertedIndex, SearchHit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContentType {
    Model,
    App,
    Workflow,
    Asset,
}

impl ContentType {
    pub const ALL: [ContentType; 4] = [Self::Model, Self::App, Self::Workflow, Self::Asset];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Model => "model",
            Self::App => "app",
            Self::Workflow => "workflow",
            Self::Asset => "asset",
        }
    }

    pub fn parse(s: &str) -> Result<Self, RegistryError> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| RegistryError::UnknownContentType(s.into()))
    }
}

impl fmt::Display for ContentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Widget {
    IntSlider,
    FloatSlider,
    Dropdown,
    Radio,
    Checkbox,
    Text,
    Number,
}

impl Widget {
    pub const ALL: [Widget; 7] = [
        Self::IntSlider,
        Self::FloatSlider,
        Self::Dropdown,
        Self::Radio,
        Self::Checkbox,
        Self::Text,
        Self::Number,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::IntSlider => "int_slider",
            Self::FloatSlider => "float_slider",
            Self::Dropdown => "dropdown",
            Self::Radio => "radio",
            Self::Checkbox => "checkbox",
            Self::Text => "text",
            Self::Number => "number",
        }
    }

    fn is_range(self) -> bool {
        matches!(self, Self::IntSlider | Self::FloatSlider | Self::Number)
    }

    fn is_choice(self) -> bool {
        matches!(self, Self::Dropdown | Self::Radio)
    }
}

/// One input widget of an auto-generated parameter form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamSpec {
    pub param_name: String,
    #[serde(default)]
    pub title: String,
    pub widget: Widget,
    pub default: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<Number>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<Vec<Value>>,
    #[serde(default)]
    pub description: String,
}

impl ParamSpec {
    /// Checks widget constraints, returning the offending key on failure.
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        if self.param_name.is_empty() {
            return Err(("param_name", "must not be empty".into()));
        }
        if self.widget.is_range() {
            if self.options.is_some() {
                return Err(("options", "only dropdown and radio widgets take options".into()));
            }
            self.validate_range()?;
        } else {
            for (key, value) in [("min", &self.min), ("max", &self.max), ("step", &self.step)] {
                if value.is_some() {
                    return Err((key, "only slider and number widgets take a range".into()));
                }
            }
        }
        match self.widget {
            Widget::Dropdown | Widget::Radio => {
                let options = match &self.options {
                    Some(options) if !options.is_empty() => options,
                    _ => return Err(("options", "choice widgets need at least one option".into())),
                };
                if !options.contains(&self.default) {
                    return Err(("default", format!("{} is not one of the options", self.default)));
                }
            }
            Widget::Checkbox if !self.default.is_boolean() => {
                return Err(("default", "checkbox default must be a boolean".into()));
            }
            Widget::Text if !self.default.is_string() => {
                return Err(("default", "text default must be a string".into()));
            }
            _ if !self.widget.is_choice() && self.options.is_some() => {
                return Err(("options", "only dropdown and radio widgets take options".into()));
            }
            _ => {}
        }
        Ok(())
    }

    fn validate_range(&self) -> Result<(), (&'static str, String)> {
        let default = self
            .default
            .as_f64()
            .ok_or(("default", String::from("default must be numeric")))?;
        if self.widget == Widget::IntSlider && !(self.default.is_i64() || self.default.is_u64()) {
            return Err(("default", "int_slider default must be an integer".into()));
        }
        let slider = self.widget != Widget::Number;
        let min = self.min.as_ref().and_then(Number::as_f64);
        let max = self.max.as_ref().and_then(Number::as_f64);
        if slider && min.is_none() {
            return Err(("min", "sliders need a minimum".into()));
        }
        if slider && max.is_none() {
            return Err(("max", "sliders need a maximum".into()));
        }
        if let (Some(lo), Some(hi)) = (min, max) {
            if lo > hi {
                return Err(("min", "min exceeds max".into()));
            }
        }
        if min.is_some_and(|lo| default < lo) || max.is_some_and(|hi| default > hi) {
            return Err(("default", "default lies outside [min, max]".into()));
        }
        if let Some(step) = self.step.as_ref().and_then(Number::as_f64) {
            if step <= 0.0 {
                return Err(("step", "step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// How to start a launchable app.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSpec {
    pub command: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContentDocument {
    /// Assigned on registration.
    #[serde(default)]
    pub content_id: String,
    pub content_type: ContentType,
    pub name: String,
    pub version: String,
    /// Set to the registering principal.
    #[serde(default)]
    pub owner: String,
    pub uri: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub public: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub service: Option<ServiceSpec>,
    #[serde(default)]
    pub parameters: Vec<ParamSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workflow_template: Option<WorkflowSpec>,
}

const DOCUMENT_KEYS: &[&str] = &[
    "content_id",
    "content_type",
    "name",
    "version",
    "owner",
    "uri",
    "description",
    "tags",
    "public",
    "service",
    "parameters",
    "workflow_template",
];
const PARAM_KEYS: &[&str] = &[
    "param_name",
    "title",
    "widget",
    "default",
    "min",
    "max",
    "step",
    "options",
    "description",
];
const SERVICE_KEYS: &[&str] = &["command", "port"];

impl ContentDocument {
    pub fn validate(&self) -> Result<(), RegistryError> {
        for (key, value) in [("name", &self.name), ("version", &self.version), ("uri", &self.uri)] {
            if value.trim().is_empty() {
                return Err(RegistryError::schema(key, "must not be empty"));
            }
        }
        let takes_parameters = matches!(self.content_type, ContentType::Model | ContentType::App);
        if !takes_parameters && !self.parameters.is_empty() {
            return Err(RegistryError::schema(
                "parameters",
                format!("{} documents take no parameters", self.content_type),
            ));
        }
        if let Some(template) = &self.workflow_template {
            if self.content_type != ContentType::Workflow {
                return Err(RegistryError::schema(
                    "workflow_template",
                    "only workflow documents carry a template",
                ));
            }
            template
                .validate()
                .map_err(|e| RegistryError::schema("workflow_template", e.to_string()))?;
        }
        if let Some(service) = &self.service {
            if service.command.is_empty() {
                return Err(RegistryError::schema("service.command", "must not be empty"));
            }
        }
        for (i, param) in self.parameters.iter().enumerate() {
            param
                .validate()
                .map_err(|(key, reason)| RegistryError::schema(format!("parameters[{i}].{key}"), reason))?;
            if self.parameters[..i].iter().any(|p| p.param_name == param.param_name) {
                return Err(RegistryError::schema(
                    format!("parameters[{i}].param_name"),
                    format!("duplicate parameter {}", param.param_name),
                ));
            }
        }
        Ok(())
    }

    pub fn is_launchable(&self) -> bool {
        self.content_type == ContentType::App && self.service.is_some()
    }
}

/// Parses the JSON content-document format strictly: any key outside the
/// schema is a [`RegistryError::SchemaViolation`] naming that key.
pub fn parse_document(json: &str) -> Result<ContentDocument, RegistryError> {
    let value: Value =
        serde_json::from_str(json).map_err(|e| RegistryError::schema("document", e.to_string()))?;
    parse_document_value(value)
}

pub fn parse_document_value(value: Value) -> Result<ContentDocument, RegistryError> {
    let object = value
        .as_object()
        .ok_or_else(|| RegistryError::schema("document", "expected a JSON object"))?;
    reject_unknown_keys(object, DOCUMENT_KEYS, "")?;
    match object.get("content_type") {
        Some(Value::String(kind)) => {
            ContentType::parse(kind)?;
        }
        Some(_) => return Err(RegistryError::schema("content_type", "expected a string")),
        None => return Err(RegistryError::schema("content_type", "missing")),
    }
    if let Some(Value::Object(service)) = object.get("service") {
        reject_unknown_keys(service, SERVICE_KEYS, "service.")?;
    }
    if let Some(Value::Array(params)) = object.get("parameters") {
        for (i, param) in params.iter().enumerate() {
            let Value::Object(param) = param else {
                return Err(RegistryError::schema(format!("parameters[{i}]"), "expected an object"));
            };
            reject_unknown_keys(param, PARAM_KEYS, &format!("parameters[{i}]."))?;
            if let Some(widget) = param.get("widget") {
                let known = widget
                    .as_str()
                    .is_some_and(|w| Widget::ALL.iter().any(|k| k.as_str() == w));
                if !known {
                    return Err(RegistryError::schema(
                        format!("parameters[{i}].widget"),
                        format!("unsupported widget {widget}"),
                    ));
                }
            }
        }
    }
    for key in DOCUMENT_KEYS {
        if let Some(field) = object.get(*key) {
            if let Err(e) = check_field(key, field) {
                return Err(RegistryError::schema(*key, e));
            }
        }
    }
    let doc: ContentDocument = serde_json::from_value(value)
        .map_err(|e| RegistryError::schema("document", e.to_string()))?;
    doc.validate()?;
    Ok(doc)
}

fn reject_unknown_keys(object: &Map<String, Value>, allowed: &[&str], prefix: &str) -> Result<(), RegistryError> {
    match object.keys().find(|k| !allowed.contains(&k.as_str())) {
        Some(key) => Err(RegistryError::schema(format!("{prefix}{key}"), "unknown key")),
        None => Ok(()),
    }
}

/// Type-checks a single top-level field so serde errors name the key.
fn check_field(key: &str, field: &Value) -> Result<(), String> {
    let result = match key {
        "content_id" | "name" | "version" | "owner" | "uri" | "description" => {
            serde_json::from_value::<String>(field.clone()).map(drop)
        }
        "tags" => serde_json::from_value::<Vec<String>>(field.clone()).map(drop),
        "public" => serde_json::from_value::<bool>(field.clone()).map(drop),
        "service" => serde_json::from_value::<Option<ServiceSpec>>(field.clone()).map(drop),
        "parameters" => serde_json::from_value::<Vec<ParamSpec>>(field.clone()).map(drop),
        "workflow_template" => serde_json::from_value::<Option<WorkflowSpec>>(field.clone()).map(drop),
        _ => Ok(()),
    };
    result.map_err(|e| e.to_string())
}

/// Metadata for an artifact such as a trained model file. API-only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetRecord {
    #[serde(default)]
    pub asset_id: String,
    #[serde(default)]
    pub owner: String,
    #[serde(default)]
    pub kind: String,
    pub uri: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_job_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("{content_type} {name} version {version} by {owner} already exists")]
    DuplicateContent {
        content_type: ContentType,
        owner: String,
        name: String,
        version: String,
    },
    #[error("schema violation at {field}: {reason}")]
    SchemaViolation { field: String, reason: String },
    #[error("unknown content type {0:?}; expected model, app, workflow or asset")]
    UnknownContentType(String),
    #[error("unknown content {0}")]
    UnknownContent(String),
    #[error("unknown asset {0}")]
    UnknownAsset(String),
    #[error("content {0} is not a launchable app")]
    NotLaunchable(String),
}

impl RegistryError {
    pub fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::SchemaViolation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    contents: BTreeMap<String, ContentDocument>,
    assets: BTreeMap<String, AssetRecord>,
    index: InvertedIndex,
    content_counter: u64,
    asset_counter: u64,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_content(&mut self, mut doc: ContentDocument, owner: &str) -> Result<String, RegistryError> {
        doc.validate()?;
        doc.owner = owner.into();
        let clash = self.contents.values().any(|existing| {
            existing.content_type == doc.content_type
                && existing.owner == doc.owner
                && existing.name == doc.name
                && existing.version == doc.version
        });
        if clash {
            return Err(RegistryError::DuplicateContent {
                content_type: doc.content_type,
                owner: doc.owner,
                name: doc.name,
                version: doc.version,
            });
        }
        self.content_counter += 1;
        let id = format!("ct-{:06}", self.content_counter);
        doc.content_id = id.clone();
        self.index.insert(&id, &document_tokens(&doc));
        self.contents.insert(id.clone(), doc);
        Ok(id)
    }

    pub fn content(&self, content_id: &str) -> Result<&ContentDocument, RegistryError> {
        self.contents
            .get(content_id)
            .ok_or_else(|| RegistryError::UnknownContent(content_id.into()))
    }

    pub fn contents<'a>(&'a self, content_type: Option<ContentType>, owner: Option<&'a str>) -> impl Iterator<Item = &'a ContentDocument> + 'a {
        self.contents.values().filter(move |doc| {
            content_type.is_none_or(|t| doc.content_type == t) && owner.is_none_or(|o| doc.owner == o)
        })
    }

    pub fn delete_content(&mut self, content_id: &str) -> Result<ContentDocument, RegistryError> {
        let doc = self
            .contents
            .remove(content_id)
            .ok_or_else(|| RegistryError::UnknownContent(content_id.into()))?;
        self.index.remove(content_id, &document_tokens(&doc));
        Ok(doc)
    }

    pub fn register_asset(&mut self, mut asset: AssetRecord, owner: &str) -> Result<String, RegistryError> {
        if asset.uri.trim().is_empty() {
            return Err(RegistryError::schema("uri", "must not be empty"));
        }
        self.asset_counter += 1;
        let id = format!("as-{:06}", self.asset_counter);
        asset.asset_id = id.clone();
        asset.owner = owner.into();
        self.assets.insert(id.clone(), asset);
        Ok(id)
    }

    pub fn asset(&self, asset_id: &str) -> Result<&AssetRecord, RegistryError> {
        self.assets
            .get(asset_id)
            .ok_or_else(|| RegistryError::UnknownAsset(asset_id.into()))
    }

    pub fn assets(&self) -> impl Iterator<Item = &AssetRecord> {
        self.assets.values()
    }

    pub fn delete_asset(&mut self, asset_id: &str) -> Result<AssetRecord, RegistryError> {
        self.assets
            .remove(asset_id)
            .ok_or_else(|| RegistryError::UnknownAsset(asset_id.into()))
    }

    /// Ranked hits: score descending, then name, then id. Documents with no
    /// matching token, of another type, or rejected by `visible` are omitted.
    pub fn search(&self, query: &str, content_type: Option<ContentType>, visible: impl Fn(&ContentDocument) -> bool) -> Vec<SearchHit> {
        let mut hits: Vec<(&ContentDocument, usize)> = self
            .index
            .score(query)
            .into_iter()
            .map(|(id, score)| (&self.contents[id], score))
            .filter(|(doc, _)| content_type.is_none_or(|t| doc.content_type == t))
            .filter(|(doc, _)| visible(doc))
            .collect();
        hits.sort_by(|(a, sa), (b, sb)| {
            sb.cmp(sa)
                .then_with(|| a.name.cmp(&b.name))
                .then_with(|| a.content_id.cmp(&b.content_id))
        });
        hits.into_iter()
            .map(|(doc, score)| SearchHit {
                content_id: doc.content_id.clone(),
                score,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use serde_json::json;

    fn model(name: &str) -> ContentDocument {
        parse_document_value(json!({
            "content_type": "model",
            "name": name,
            "version": "1.0",
            "uri": "docker://example/model:1.0",
            "parameters": [{
                "param_name": "epochs",
                "title": "Epochs",
                "widget": "int_slider",
                "min": 1, "max": 100, "default": 10
            }]
        }))
        .unwrap()
    }

    fn schema_field(err: RegistryError) -> String {
        match err {
            RegistryError::SchemaViolation { field, .. } => field,
            other => panic!("expected schema violation, got {other:?}"),
        }
    }

    #[test]
    fn int_slider_model_accepted() {
        let mut registry = Registry::new();
        let id = registry.register_content(model("seg"), "alice").unwrap();
        let doc = registry.content(&id).unwrap();
        assert_eq!(doc.owner, "alice");
        assert_eq!(doc.content_id, id);
        assert_eq!(doc.parameters[0].default, json!(10));
    }

    #[test]
    fn unknown_content_type() {
        let err = parse_document(r#"{"content_type":"dataset","name":"x","version":"1","uri":"s3://x"}"#)
            .unwrap_err();
        assert_eq!(err, RegistryError::UnknownContentType("dataset".into()));
    }

    #[test]
    fn dropdown_default_must_be_an_option() {
        let err = parse_document_value(json!({
            "content_type": "app", "name": "a", "version": "1", "uri": "x://",
            "parameters": [{"param_name": "mode", "widget": "dropdown", "default": "c", "options": ["a", "b"]}]
        }))
        .unwrap_err();
        assert_eq!(schema_field(err), "parameters[0].default");
    }

    #[test]
    fn unknown_keys_are_named() {
        let err = parse_document(r#"{"content_type":"model","name":"x","version":"1","uri":"u","colour":"red"}"#)
            .unwrap_err();
        assert_eq!(schema_field(err), "colour");
        let err = parse_document_value(json!({
            "content_type": "model", "name": "x", "version": "1", "uri": "u",
            "parameters": [{"param_name": "p", "widget": "text", "default": "", "placeholder": "?"}]
        }))
        .unwrap_err();
        assert_eq!(schema_field(err), "parameters[0].placeholder");
        let err = parse_document_value(json!({
            "content_type": "app", "name": "x", "version": "1", "uri": "u",
            "service": {"command": ["run"], "host": "0.0.0.0"}
        }))
        .unwrap_err();
        assert_eq!(schema_field(err), "service.host");
    }

    #[test]
    fn wrong_field_types_name_the_key() {
        let err = parse_document(r#"{"content_type":"model","name":"x","version":"1","uri":"u","tags":"a,b"}"#)
            .unwrap_err();
        assert_eq!(schema_field(err), "tags");
        let err = parse_document(r#"{"content_type":"model","name":"x","uri":"u"}"#).unwrap_err();
        assert_eq!(schema_field(err), "document");
        assert_eq!(schema_field(parse_document("[1]").unwrap_err()), "document");
    }

    #[test]
    fn unsupported_widget() {
        let err = parse_document_value(json!({
            "content_type": "model", "name": "x", "version": "1", "uri": "u",
            "parameters": [{"param_name": "p", "widget": "color_picker", "default": "red"}]
        }))
        .unwrap_err();
        assert_eq!(schema_field(err), "parameters[0].widget");
    }

    #[test]
    fn param_constraints() {
        let base = ParamSpec {
            param_name: "p".into(),
            title: String::new(),
            widget: Widget::FloatSlider,
            default: json!(0.5),
            min: Some(Number::from(0)),
            max: Some(Number::from(1)),
            step: None,
            options: None,
            description: String::new(),
        };
        assert!(base.validate().is_ok());
        let mut p = base.clone();
        p.default = json!(2);
        assert_eq!(p.validate().unwrap_err().0, "default");
        let mut p = base.clone();
        p.max = None;
        assert_eq!(p.validate().unwrap_err().0, "max");
        let mut p = base.clone();
        p.step = Some(Number::from(0));
        assert_eq!(p.validate().unwrap_err().0, "step");
        let mut p = base.clone();
        p.widget = Widget::IntSlider;
        assert_eq!(p.validate().unwrap_err().0, "default");
        let mut p = base.clone();
        p.widget = Widget::Number;
        p.min = None;
        p.max = None;
        assert!(p.validate().is_ok());
        let mut p = base.clone();
        p.widget = Widget::Checkbox;
        p.min = None;
        p.max = None;
        assert_eq!(p.validate().unwrap_err().0, "default");
        p.default = json!(true);
        assert!(p.validate().is_ok());
        p.options = Some(vec![json!(true)]);
        assert_eq!(p.validate().unwrap_err().0, "options");
    }

    #[test]
    fn parameters_only_on_models_and_apps() {
        let mut doc = model("m");
        doc.content_type = ContentType::Workflow;
        assert_eq!(schema_field(doc.validate().unwrap_err()), "parameters");
    }

    #[test]
    fn duplicate_content_per_owner_and_type() {
        let mut registry = Registry::new();
        registry.register_content(model("seg"), "alice").unwrap();
        assert!(matches!(
            registry.register_content(model("seg"), "alice"),
            Err(RegistryError::DuplicateContent { .. })
        ));
        registry.register_content(model("seg"), "bob").unwrap();
        let mut app = model("seg");
        app.content_type = ContentType::App;
        registry.register_content(app, "alice").unwrap();
    }

    #[test]
    fn delete_removes_from_store_and_index() {
        let mut registry = Registry::new();
        let id = registry.register_content(model("seg"), "alice").unwrap();
        assert_eq!(registry.search("seg", None, |_| true).len(), 1);
        registry.delete_content(&id).unwrap();
        assert!(matches!(registry.content(&id), Err(RegistryError::UnknownContent(_))));
        assert!(matches!(registry.delete_content(&id), Err(RegistryError::UnknownContent(_))));
        assert!(registry.search("seg", None, |_| true).is_empty());
    }

    #[test]
    fn search_ranks_by_score_then_name() {
        let mut registry = Registry::new();
        let mut a = model("MSDNet segmentation");
        a.description = "mixed-scale dense network".into();
        let a = registry.register_content(a, "alice").unwrap();
        let b = registry.register_content(model("K-means segmentation"), "alice").unwrap();
        let c = registry.register_content(model("Another segmentation"), "alice").unwrap();

        let hits = registry.search("segmentation", None, |_| true);
        let order: Vec<_> = hits.iter().map(|h| h.content_id.as_str()).collect();
        assert_eq!(order, [c.as_str(), b.as_str(), a.as_str()]);
        assert!(hits.iter().all(|h| h.score == 1));

        let hits = registry.search("msdnet segmentation", None, |_| true);
        assert_eq!(hits[0], SearchHit { content_id: a.clone(), score: 2 });
        assert_eq!(hits.len(), 3);

        assert!(registry.search("φφφ", None, |_| true).is_empty());
        assert!(registry.search("", None, |_| true).is_empty());
        assert!(registry.search("segmentation", Some(ContentType::App), |_| true).is_empty());
        assert_eq!(registry.search("segmentation", None, |d| d.content_id == b).len(), 1);
    }

    #[test]
    fn assets_are_api_only_records() {
        let mut registry = Registry::new();
        let asset = AssetRecord {
            asset_id: String::new(),
            owner: String::new(),
            kind: "trained-model".into(),
            uri: "file:///tmp/model.bin".into(),
            metadata: BTreeMap::new(),
            source_job_id: Some("wf-000001.train".into()),
        };
        let id = registry.register_asset(asset.clone(), "alice").unwrap();
        assert_eq!(registry.asset(&id).unwrap().source_job_id.as_deref(), Some("wf-000001.train"));
        assert!(registry.search("trained model", None, |_| true).is_empty());
        assert!(matches!(registry.asset("as-9"), Err(RegistryError::UnknownAsset(_))));
        let mut empty = asset;
        empty.uri.clear();
        assert_eq!(schema_field(registry.register_asset(empty, "alice").unwrap_err()), "uri");
        registry.delete_asset(&id).unwrap();
        assert!(registry.delete_asset(&id).is_err());
    }
}
