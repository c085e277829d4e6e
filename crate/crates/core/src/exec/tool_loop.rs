//! Multi-step tool interaction with a language model.
//!
//! The model is prompted to alternate `Thought:` and `Action:` lines;
//! each action is executed against a registry and its observation is
//! appended to the transcript before the next turn. `SUBMIT(answer)`
//! ends the session. Unknown or malformed actions inject an error
//! observation and the session continues, still counting toward the
//! step budget.

use std::collections::BTreeMap;

use regex::Regex;

use crate::config::TaskSpec;
use crate::error::{Error, Result};
use crate::exec::ModuleVerdict;
use crate::prompts::render_tool_loop_prompt;
use crate::provider::LanguageModel;
use crate::value::{Record, Value};

/// The action name that ends a tool session with an answer.
pub const SUBMIT_ACTION: &str = "SUBMIT";

type ToolFn = Box<dyn Fn(&str) -> Result<String> + Send + Sync>;

/// Named tools callable from a session. `SUBMIT` is always available
/// and needs no registration.
#[derive(Default)]
pub struct ToolRegistry {
    tools: BTreeMap<String, ToolFn>,
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(
        &mut self,
        name: &str,
        tool: impl Fn(&str) -> Result<String> + Send + Sync + 'static,
    ) {
        self.tools.insert(name.to_string(), Box::new(tool));
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools.keys().map(String::as_str).collect()
    }

    fn invoke(&self, name: &str, args: &str) -> Result<String> {
        let tool = self
            .tools
            .get(name)
            .ok_or_else(|| Error::MissingTool(name.to_string()))?;
        tool(args)
    }
}

/// One step of a recorded session.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolLoopStep {
    pub response: String,
    pub action: Option<(String, String)>,
    pub observation: String,
}

fn parse_action(response: &str) -> Option<(String, String)> {
    let re = Regex::new(r"(?m)^Action:\s*([A-Za-z_0-9]+)\((?s)(.*)\)\s*$").unwrap();
    let caps = re.captures(response)?;
    Some((caps[1].to_string(), caps[2].trim().to_string()))
}

fn parse_submitted(args: &str) -> Value {
    let trimmed = args.trim().trim_matches('"').trim();
    if trimmed.starts_with('[') && trimmed.ends_with(']') {
        let items = trimmed[1..trimmed.len() - 1]
            .split(',')
            .map(|s| s.trim().trim_matches('"').to_string())
            .filter(|s| !s.is_empty())
            .collect();
        Value::List(items)
    } else {
        Value::Text(trimmed.to_string())
    }
}

/// Run one tool session for a record.
///
/// Returns the verdict plus the full step trace. Exhausting `max_steps`
/// without a `SUBMIT` yields a fallback.
pub fn tool_loop_execute(
    record: &Record,
    spec: &TaskSpec,
    tools_profile: &str,
    interaction_examples: &str,
    registry: &ToolRegistry,
    llm: &dyn LanguageModel,
    max_steps: usize,
) -> Result<(ModuleVerdict, Vec<ToolLoopStep>)> {
    let mut transcript = render_tool_loop_prompt(spec, tools_profile, interaction_examples, record);
    let mut steps = Vec::new();
    for _ in 0..max_steps {
        let exchange = llm.complete(&transcript)?;
        let response = exchange.response;
        let action = parse_action(&response);
        let observation = match &action {
            Some((name, args)) if name == SUBMIT_ACTION => {
                steps.push(ToolLoopStep {
                    response: response.clone(),
                    action: action.clone(),
                    observation: String::new(),
                });
                let value = parse_submitted(args);
                return Ok((ModuleVerdict::Answered { value, confidence: 1.0 }, steps));
            }
            Some((name, args)) => match registry.invoke(name, args) {
                Ok(obs) => obs,
                Err(Error::MissingTool(_)) => {
                    format!("Error: unknown action `{name}`. Please choose one of the actions mentioned above.")
                }
                Err(e) => format!("Error: action `{name}` failed: {e}"),
            },
            None => {
                "Error: your response did not contain a valid `Action:` line. Please follow the required format.".to_string()
            }
        };
        transcript.push('\n');
        transcript.push_str(&response);
        transcript.push_str("\nObservation: ");
        transcript.push_str(&observation);
        steps.push(ToolLoopStep {
            response,
            action,
            observation,
        });
    }
    Ok((ModuleVerdict::Fallback, steps))
}
