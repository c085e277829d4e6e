//! Task configuration: parsing, validation, and task-profile rendering.
//!
//! A task is described by a single JSON document with sections `task`,
//! `inputs`, `output`, `hint`, `examples`, `tools`, and `optimizer`.
//! Unknown keys are rejected. The parsed [`TaskSpec`] is immutable and
//! safe to share across threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::value::{Record, Value};

/// What kind of values a field holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Text,
    Number,
    Categorical(Vec<String>),
}

/// One declared input or output field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    pub kind: ValueKind,
    pub description: String,
}

/// A user-supplied example, optionally annotated with the expected output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleRecord {
    pub inputs: Record,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<Value>,
}

/// Which metric scores the task on validation data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Accuracy,
    F1,
}

/// The learning-problem family implied by the output field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Seq2Seq,
    Classification,
    Regression,
}

/// A validated task description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub description: String,
    pub inputs: Vec<FieldSpec>,
    pub output: FieldSpec,
    pub hint: Option<String>,
    pub examples: Vec<ExampleRecord>,
    pub metric: MetricKind,
    pub tools: Vec<String>,
}

// Raw document shapes. Kept separate from TaskSpec so the on-disk schema
// can reject unknown keys section by section.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    task: RawTask,
    inputs: Vec<FieldSpec>,
    output: FieldSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    hint: Option<String>,
    #[serde(default)]
    examples: Vec<ExampleRecord>,
    #[serde(default)]
    tools: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    optimizer: Option<serde_json::Value>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    name: String,
    description: String,
    #[serde(default = "default_metric")]
    metric: MetricKind,
}

fn default_metric() -> MetricKind {
    MetricKind::Accuracy
}

/// Parse and validate a configuration document.
pub fn parse_config(document: &str) -> Result<TaskSpec> {
    let raw: RawDocument = serde_json::from_str(document)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let spec = TaskSpec {
        name: raw.task.name,
        description: raw.task.description,
        inputs: raw.inputs,
        output: raw.output,
        hint: raw.hint,
        examples: raw.examples,
        metric: raw.task.metric,
        tools: raw.tools,
    };
    validate(&spec)?;
    Ok(spec)
}

/// Optimizer overrides carried in the `optimizer` section, if any.
pub fn parse_optimizer_section(document: &str) -> Result<Option<serde_json::Value>> {
    let raw: RawDocument = serde_json::from_str(document)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(raw.optimizer)
}

/// Serialize a spec back into the canonical document form.
pub fn render_config(spec: &TaskSpec) -> String {
    let raw = RawDocument {
        task: RawTask {
            name: spec.name.clone(),
            description: spec.description.clone(),
            metric: spec.metric,
        },
        inputs: spec.inputs.clone(),
        output: spec.output.clone(),
        hint: spec.hint.clone(),
        examples: spec.examples.clone(),
        tools: spec.tools.clone(),
        optimizer: None,
    };
    serde_json::to_string_pretty(&raw).expect("config serialization cannot fail")
}

fn validate(spec: &TaskSpec) -> Result<()> {
    if spec.inputs.is_empty() {
        return Err(Error::EmptyInputs);
    }
    if spec.name.is_empty() {
        return Err(Error::MissingField("task.name".into()));
    }
    for field in spec.inputs.iter().chain(std::iter::once(&spec.output)) {
        if field.name.is_empty() {
            return Err(Error::MissingField("field name".into()));
        }
        if let ValueKind::Categorical(labels) = &field.kind {
            let mut distinct = labels.clone();
            distinct.sort();
            distinct.dedup();
            if distinct.len() < 2 {
                return Err(Error::InvalidConfig(format!(
                    "categorical field {:?} needs at least 2 distinct labels",
                    field.name
                )));
            }
        }
    }
    for (i, example) in spec.examples.iter().enumerate() {
        for input in &spec.inputs {
            if example.inputs.get(&input.name).is_none() {
                return Err(Error::MissingField(format!(
                    "examples[{i}] lacks input {:?}",
                    input.name
                )));
            }
        }
        if let Some(label) = &example.output {
            check_label_kind(label, &spec.output.kind)
                .map_err(|reason| Error::KindMismatch(format!("examples[{i}]: {reason}")))?;
        }
    }
    Ok(())
}

fn check_label_kind(label: &Value, kind: &ValueKind) -> std::result::Result<(), String> {
    match kind {
        ValueKind::Text => Ok(()),
        ValueKind::Number => match label {
            Value::Number(_) => Ok(()),
            Value::Text(s) if s.trim().parse::<f64>().is_ok() => Ok(()),
            other => Err(format!("{other} is not a number")),
        },
        ValueKind::Categorical(labels) => {
            let text = label.as_text();
            if labels.iter().any(|l| *l == text) {
                Ok(())
            } else {
                Err(format!("{text:?} is not one of {labels:?}"))
            }
        }
    }
}

/// Coerce a raw response string into the output kind.
pub fn parse_output_value(text: &str, kind: &ValueKind) -> Result<Value> {
    let trimmed = text.trim();
    match kind {
        ValueKind::Text => Ok(Value::Text(trimmed.to_string())),
        ValueKind::Number => trimmed
            .parse::<f64>()
            .map(Value::Number)
            .map_err(|_| Error::ParseFailure {
                response: trimmed.to_string(),
                kind: "number".into(),
            }),
        ValueKind::Categorical(labels) => {
            if labels.iter().any(|l| l == trimmed) {
                Ok(Value::Text(trimmed.to_string()))
            } else {
                Err(Error::ParseFailure {
                    response: trimmed.to_string(),
                    kind: format!("categorical{labels:?}"),
                })
            }
        }
    }
}

/// Deduce the task kind from the output field. Pure and total.
pub fn infer_task_kind(spec: &TaskSpec) -> TaskKind {
    match spec.output.kind {
        ValueKind::Text => TaskKind::Seq2Seq,
        ValueKind::Categorical(_) => TaskKind::Classification,
        ValueKind::Number => TaskKind::Regression,
    }
}

impl TaskSpec {
    /// Functional API signature, e.g. `entity_resolution(entity1, entity2) -> is_same`.
    pub fn task_api(&self) -> String {
        let args: Vec<&str> = self.inputs.iter().map(|f| f.name.as_str()).collect();
        format!("{}({}) -> {}", self.name, args.join(", "), self.output.name)
    }

    pub fn task_kind(&self) -> TaskKind {
        infer_task_kind(self)
    }

    /// Labeled examples only, as (record, label) pairs.
    pub fn labeled_examples(&self) -> Vec<(Record, Value)> {
        self.examples
            .iter()
            .filter_map(|e| e.output.clone().map(|l| (e.inputs.clone(), l)))
            .collect()
    }
}

/// Render the instance attribute block used inside prompts: one
/// `- name: value` line per declared input, in spec order.
pub fn render_instance(spec: &TaskSpec, record: &Record) -> String {
    let mut out = String::new();
    for input in &spec.inputs {
        let value = record
            .get(&input.name)
            .map(|v| v.as_text())
            .unwrap_or_default();
        out.push_str(&format!("- {}: {}\n", input.name, value));
    }
    out
}

/// Render the task profile: description, per-field descriptions, and
/// numbered examples. Deterministic; identical inputs yield identical
/// bytes.
pub fn render_task_profile(spec: &TaskSpec, shots: &[ExampleRecord]) -> String {
    let mut out = String::new();
    out.push_str(&spec.description);
    out.push('\n');
    if let Some(hint) = &spec.hint {
        out.push_str("Hint: ");
        out.push_str(hint);
        out.push('\n');
    }
    out.push_str("The input contains the following attributes:\n");
    for input in &spec.inputs {
        out.push_str(&format!("- {}: {}\n", input.name, input.description));
    }
    out.push_str("You are expected to output:\n");
    out.push_str(&format!("- {}\n", spec.output.description));
    if !shots.is_empty() {
        out.push_str("Examples:\n");
        for (i, shot) in shots.iter().enumerate() {
            out.push_str(&format!("Example #{i}:\nInputs:\n"));
            out.push_str(&render_instance(spec, &shot.inputs));
            if let Some(label) = &shot.output {
                out.push_str(&format!("Output:\n- {}\n", label.as_text()));
            }
        }
    }
    out
}
