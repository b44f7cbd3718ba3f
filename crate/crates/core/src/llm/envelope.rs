use log::warn;
use serde::Deserialize;
use thiserror::Error;

use super::prompt::Task;
use crate::dsl::parse;

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreItem {
    pub name: String,
    pub confidence: f64,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub category: String,
    pub name: String,
    pub expression: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Scores(Vec<ScoreItem>),
    Proposals(Vec<Proposal>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmResponse {
    pub payload: Payload,
    pub raw: String,
    /// Proposals dropped because their expression does not parse.
    pub rejected: Vec<(Proposal, String)>,
    /// Notes about clamped values.
    pub warnings: Vec<String>,
}

impl LlmResponse {
    pub fn scores(&self) -> &[ScoreItem] {
        match &self.payload {
            Payload::Scores(s) => s,
            Payload::Proposals(_) => &[],
        }
    }

    pub fn proposals(&self) -> &[Proposal] {
        match &self.payload {
            Payload::Proposals(p) => p,
            Payload::Scores(_) => &[],
        }
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("response does not match the {task} envelope: {message}")]
pub struct SchemaError {
    pub task: Task,
    pub message: String,
    pub raw: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoresEnvelope {
    scores: Vec<RawScore>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScore {
    name: String,
    confidence: f64,
    risk: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposalsEnvelope {
    proposals: Vec<RawProposal>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProposal {
    category: String,
    name: String,
    expression: String,
}

/// Drops one surrounding Markdown code fence, if present.
fn unfence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(body) = t.strip_prefix("```") else {
        return t;
    };
    let body = body.strip_prefix("json").unwrap_or(body);
    body.strip_suffix("```").map(str::trim).unwrap_or(t)
}

fn clamp_unit(v: f64, what: &str, name: &str, warnings: &mut Vec<String>) -> f64 {
    let c = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    if c != v {
        let msg = format!("{name}: {what} {v} clamped to {c}");
        warn!("{msg}");
        warnings.push(msg);
    }
    c
}

/// Parses a provider answer for `task`.
pub fn parse_response(raw: &str, task: Task) -> Result<LlmResponse, SchemaError> {
    let body = unfence(raw);
    let err = |message: String| SchemaError { task, message, raw: raw.to_string() };
    let mut warnings = Vec::new();
    let mut rejected = Vec::new();
    let payload = match task {
        Task::ScoreAlphas => {
            let env: ScoresEnvelope = serde_json::from_str(body).map_err(|e| err(e.to_string()))?;
            let mut items = Vec::with_capacity(env.scores.len());
            for s in env.scores {
                if s.name.trim().is_empty() {
                    return Err(err("score with empty name".into()));
                }
                let confidence = clamp_unit(s.confidence, "confidence", &s.name, &mut warnings);
                let risk = clamp_unit(s.risk, "risk", &s.name, &mut warnings);
                items.push(ScoreItem { name: s.name, confidence, risk });
            }
            Payload::Scores(items)
        }
        Task::ProposeAlphas => {
            let env: ProposalsEnvelope = serde_json::from_str(body).map_err(|e| err(e.to_string()))?;
            let mut items = Vec::new();
            for p in env.proposals {
                let prop = Proposal { category: p.category, name: p.name, expression: p.expression };
                if prop.category.trim().is_empty() || prop.name.trim().is_empty() {
                    rejected.push((prop, "empty category or name".into()));
                    continue;
                }
                match parse(&prop.expression) {
                    Ok(_) => items.push(prop),
                    Err(e) => rejected.push((prop, e.to_string())),
                }
            }
            Payload::Proposals(items)
        }
    };
    Ok(LlmResponse { payload, raw: raw.to_string(), rejected, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_are_clamped_with_warning() {
        let r = parse_response(r#"{"scores":[{"name":"a","confidence":1.4,"risk":-0.2}]}"#, Task::ScoreAlphas).unwrap();
        assert_eq!(r.scores()[0], ScoreItem { name: "a".into(), confidence: 1.0, risk: 0.0 });
        assert_eq!(r.warnings.len(), 2);
    }

    #[test]
    fn malformed_json_keeps_raw() {
        let e = parse_response("{\"scores\": [", Task::ScoreAlphas).unwrap_err();
        assert_eq!(e.raw, "{\"scores\": [");
        let e = parse_response(r#"{"proposals":[]}"#, Task::ScoreAlphas).unwrap_err();
        assert_eq!(e.task, Task::ScoreAlphas);
    }

    #[test]
    fn bad_proposal_rejected_individually() {
        let raw = r#"```json
{"proposals":[
 {"category":"Momentum","name":"a","expression":"CLOSE - DELAY(CLOSE, 3)"},
 {"category":"Momentum","name":"b","expression":"SMA(CLOSE"},
 {"category":"Volatility","name":"c","expression":"STD(CLOSE, 5)"},
 {"category":"Volatility","name":"d","expression":"ATR(7)"}]}
```"#;
        let r = parse_response(raw, Task::ProposeAlphas).unwrap();
        assert_eq!(r.proposals().len(), 3);
        assert_eq!(r.rejected.len(), 1);
        assert_eq!(r.rejected[0].0.name, "b");
    }
}
