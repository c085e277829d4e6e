//! The snippet rule mini-language.
//!
//! A program is a list of ordered rules, one per line:
//!
//! ```text
//! field ~ contains(pattern) : output text
//! field ~ equals(pattern) : abstain
//! field ~ regex(pattern) : output
//! !spin 200
//! ```
//!
//! Rules are tried top-down; the first match wins. `abstain` declines
//! the record. `!spin n` burns `n` interpreter steps, which is how
//! fixtures simulate slow code against the per-run step budget. A record
//! no rule matches is abstained.

use regex::Regex;

use crate::value::{Record, Value};

/// Default per-run step budget, the desk analogue of a wall-clock
/// timeout.
pub const DEFAULT_STEP_BUDGET: usize = 1_000;

/// Result of one snippet run.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Answered(Value),
    Abstain,
    Timeout,
}

#[derive(Debug, Clone)]
enum Matcher {
    Equals(String),
    Contains(String),
    Regex(Regex),
}

#[derive(Debug, Clone)]
enum Line {
    Rule {
        field: String,
        matcher: Matcher,
        output: Option<String>,
    },
    Spin(usize),
}

/// A parsed, executable rule program.
#[derive(Debug, Clone, Default)]
pub struct RuleProgram {
    lines: Vec<Line>,
}

impl RuleProgram {
    /// Parse a program. Returns `None` when any line is malformed, so
    /// callers can quarantine unparseable provider output as an
    /// always-abstaining snippet.
    pub fn parse(source: &str) -> Option<RuleProgram> {
        let mut lines = Vec::new();
        for raw in source.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("!spin") {
                lines.push(Line::Spin(rest.trim().parse().ok()?));
                continue;
            }
            let (head, output) = line.split_once(" : ")?;
            let (field, matcher_text) = head.split_once(" ~ ")?;
            let matcher_text = matcher_text.trim();
            let open = matcher_text.find('(')?;
            if !matcher_text.ends_with(')') {
                return None;
            }
            let pattern = &matcher_text[open + 1..matcher_text.len() - 1];
            let matcher = match &matcher_text[..open] {
                "equals" => Matcher::Equals(pattern.to_string()),
                "contains" => Matcher::Contains(pattern.to_string()),
                "regex" => Matcher::Regex(Regex::new(pattern).ok()?),
                _ => return None,
            };
            let output = match output.trim() {
                "abstain" => None,
                text => Some(text.to_string()),
            };
            lines.push(Line::Rule {
                field: field.trim().to_string(),
                matcher,
                output,
            });
        }
        Some(RuleProgram { lines })
    }

    /// Run the program on one record under a step budget.
    pub fn run(&self, record: &Record, step_budget: usize) -> RunOutcome {
        let mut steps = 0usize;
        for line in &self.lines {
            match line {
                Line::Spin(n) => {
                    steps = steps.saturating_add(*n);
                    if steps > step_budget {
                        return RunOutcome::Timeout;
                    }
                }
                Line::Rule {
                    field,
                    matcher,
                    output,
                } => {
                    steps += 1;
                    if steps > step_budget {
                        return RunOutcome::Timeout;
                    }
                    let text = match record.get(field) {
                        Some(v) => v.as_text(),
                        None => continue,
                    };
                    let hit = match matcher {
                        Matcher::Equals(p) => text == *p,
                        Matcher::Contains(p) => text.contains(p.as_str()),
                        Matcher::Regex(re) => re.is_match(&text),
                    };
                    if hit {
                        return match output {
                            Some(value) => RunOutcome::Answered(Value::Text(value.clone())),
                            None => RunOutcome::Abstain,
                        };
                    }
                }
            }
        }
        RunOutcome::Abstain
    }
}
