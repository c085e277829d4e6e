//! Prompt composition from the template data files in `templates/`.
//!
//! Templates are plain text with `<placeholder>` slots. Rendering is a
//! literal substitution, so tests can assert template fidelity
//! byte-wise.

use crate::config::{render_instance, render_task_profile, ExampleRecord, TaskSpec};
use crate::value::Record;

pub const LLM_QUERY: &str = include_str!("../templates/llm_query.txt");
pub const BATCHED_QUERY: &str = include_str!("../templates/batched_query.txt");
pub const ADVICE_GENERATION: &str = include_str!("../templates/advice_generation.txt");
pub const CODE_GENERATION: &str = include_str!("../templates/code_generation.txt");
pub const CODE_FIXING_ADVICE: &str = include_str!("../templates/code_fixing_advice.txt");
pub const CODE_FIXING: &str = include_str!("../templates/code_fixing.txt");
pub const TOOL_LOOP: &str = include_str!("../templates/tool_loop.txt");

/// Fill `<name>` slots in a template.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in slots {
        out = out.replace(&format!("<{name}>"), value);
    }
    out
}

/// Single-instance query prompt: task profile plus one instance.
pub fn render_llm_query(spec: &TaskSpec, shots: &[ExampleRecord], record: &Record) -> String {
    let profile = render_task_profile(spec, shots);
    let instance = render_instance(spec, record);
    fill(
        LLM_QUERY,
        &[
            ("task_profile", profile.trim_end()),
            ("instance", instance.trim_end()),
        ],
    )
}

/// Batched query prompt over pre-rendered `Instance #i` blocks.
pub fn render_batched_query(spec: &TaskSpec, shots: &[ExampleRecord], instances: &str) -> String {
    let profile = render_task_profile(spec, shots);
    fill(
        BATCHED_QUERY,
        &[
            ("task_profile", profile.trim_end()),
            ("instances", instances.trim_end()),
        ],
    )
}

pub fn render_advice_prompt(task_profile: &str, tools_profile: &str) -> String {
    fill(
        ADVICE_GENERATION,
        &[
            ("task_profile", task_profile.trim_end()),
            ("tools_profile", tools_profile.trim_end()),
        ],
    )
}

pub fn render_code_prompt(
    task_api: &str,
    task_profile: &str,
    tools_profile: &str,
    advice: &str,
) -> String {
    fill(
        CODE_GENERATION,
        &[
            ("task_api", task_api),
            ("task_profile", task_profile.trim_end()),
            ("tools_profile", tools_profile.trim_end()),
            ("advice", advice.trim_end()),
        ],
    )
}

pub fn render_fix_advice_prompt(
    task_api: &str,
    task_profile: &str,
    code: &str,
    error_info: &str,
) -> String {
    fill(
        CODE_FIXING_ADVICE,
        &[
            ("task_api", task_api),
            ("task_profile", task_profile.trim_end()),
            ("code", code.trim_end()),
            ("error_info", error_info.trim_end()),
        ],
    )
}

pub fn render_fix_prompt(
    task_api: &str,
    task_profile: &str,
    code: &str,
    error_info: &str,
    advice: &str,
) -> String {
    fill(
        CODE_FIXING,
        &[
            ("task_api", task_api),
            ("task_profile", task_profile.trim_end()),
            ("code", code.trim_end()),
            ("error_info", error_info.trim_end()),
            ("advice", advice.trim_end()),
        ],
    )
}

pub fn render_tool_loop_prompt(
    spec: &TaskSpec,
    tools_profile: &str,
    interaction_examples: &str,
    record: &Record,
) -> String {
    let profile = render_task_profile(spec, &[]);
    let instance = render_instance(spec, record);
    fill(
        TOOL_LOOP,
        &[
            ("task_profile", profile.trim_end()),
            ("tools_profile", tools_profile.trim_end()),
            ("interaction_examples", interaction_examples.trim_end()),
            ("instance", instance.trim_end()),
        ],
    )
}
