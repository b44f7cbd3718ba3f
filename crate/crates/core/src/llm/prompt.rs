use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

const SCORE_ALPHAS: &str = include_str!("../../data/prompts/score_alphas.txt");
const PROPOSE_ALPHAS: &str = include_str!("../../data/prompts/propose_alphas.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    ProposeAlphas,
    ScoreAlphas,
}

impl Task {
    pub fn template_id(self) -> &'static str {
        match self {
            Task::ProposeAlphas => "propose_alphas",
            Task::ScoreAlphas => "score_alphas",
        }
    }

    /// Task named on a prompt's first line, if any.
    pub fn from_prompt(prompt: &str) -> Option<Task> {
        match prompt.lines().next()?.trim().strip_prefix("TASK:")?.trim() {
            "score_alphas" => Some(Task::ScoreAlphas),
            "propose_alphas" => Some(Task::ProposeAlphas),
            _ => None,
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.template_id())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptContext {
    pub market_summary: String,
    pub report_excerpts: Vec<String>,
    /// (alpha name, IC) rows.
    pub factor_history: Vec<(String, f64)>,
    pub task: Task,
}

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("unknown template {0:?}")]
    UnknownTemplate(String),
    #[error("template slot {{{{{0}}}}} was not filled")]
    UnresolvedSlot(String),
    #[error("factor history is empty")]
    NoFactors,
}

pub fn template(id: &str) -> Result<&'static str, PromptError> {
    match id {
        "score_alphas" => Ok(SCORE_ALPHAS),
        "propose_alphas" => Ok(PROPOSE_ALPHAS),
        other => Err(PromptError::UnknownTemplate(other.to_string())),
    }
}

/// One factor-history line; the stub provider reads alpha names back from these.
pub fn factor_row(name: &str, ic: f64) -> String {
    format!("| {name} | {ic:.6} |")
}

/// Replaces every `{{slot}}` in `text`. Slots without a value are an error.
pub fn fill(text: &str, slots: &BTreeMap<&str, String>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        let close = after.find("}}").ok_or_else(|| PromptError::UnresolvedSlot(after.chars().take(20).collect()))?;
        let name = after[..close].trim();
        let value = slots.get(name).ok_or_else(|| PromptError::UnresolvedSlot(name.to_string()))?;
        out.push_str(value);
        rest = &after[close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn render_prompt(ctx: &PromptContext, template_id: &str) -> Result<String, PromptError> {
    let text = template(template_id)?;
    if ctx.factor_history.is_empty() && ctx.task == Task::ScoreAlphas {
        return Err(PromptError::NoFactors);
    }
    let excerpts = if ctx.report_excerpts.is_empty() {
        "(none)".to_string()
    } else {
        ctx.report_excerpts.iter().map(|e| format!("> {}", e.replace('\n', "\n> "))).collect::<Vec<_>>().join("\n")
    };
    let history = ctx.factor_history.iter().map(|(n, ic)| factor_row(n, *ic)).collect::<Vec<_>>().join("\n");
    let slots = BTreeMap::from([
        ("market_summary", ctx.market_summary.clone()),
        ("report_excerpts", excerpts),
        ("factor_history", history),
    ]);
    fill(text, &slots)
}

/// Alpha names listed in a prompt's factor-history rows.
pub fn factor_names(prompt: &str) -> Vec<String> {
    prompt
        .lines()
        .filter_map(|l| {
            let inner = l.trim().strip_prefix("| ")?.strip_suffix(" |")?;
            let (name, ic) = inner.rsplit_once(" | ")?;
            ic.parse::<f64>().ok()?;
            Some(name.to_string())
        })
        .collect()
}
