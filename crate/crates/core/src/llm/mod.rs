//! Provider abstraction for the language-model stages.
//!
//! Answers must be one JSON envelope per task. The stub provider is seeded and
//! does no I/O; the HTTP provider is only built when explicitly configured.

mod envelope;
mod http;
mod prompt;
mod stub;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use log::warn;
use thiserror::Error;

pub use envelope::{parse_response, LlmResponse, Payload, Proposal, SchemaError, ScoreItem};
pub use http::HttpProvider;
pub use prompt::{factor_names, factor_row, fill, render_prompt, template, PromptContext, PromptError, Task};
pub use stub::StubProvider;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum TransportError {
    #[error("transient transport failure: {0}")]
    Retryable(String),
    #[error("transport failure: {0}")]
    Fatal(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum LlmError {
    #[error("{provider}: gave up after {attempts} attempts: {last}")]
    Transport { provider: String, attempts: u32, last: TransportError },
    #[error("prompt does not name a known task on its first line")]
    UnknownTask,
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

/// A chat backend. Implementations must be reentrant.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn send(&self, prompt: &str) -> Result<String, TransportError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Extra attempts after the first.
    pub max_retries: u32,
    /// Delay before retry `i` is `base_delay * 2^i`.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base_delay: Duration::from_millis(500) }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << retry.min(16))
    }
}

/// Sends `prompt`, retrying transient failures, and parses the envelope for
/// the task named on the prompt's first line.
pub fn complete(provider: &dyn Provider, prompt: &str, retry: RetryPolicy) -> Result<LlmResponse, LlmError> {
    let task = Task::from_prompt(prompt).ok_or(LlmError::UnknownTask)?;
    let mut attempt = 0;
    let raw = loop {
        match provider.send(prompt) {
            Ok(raw) => break raw,
            Err(TransportError::Retryable(msg)) if attempt < retry.max_retries => {
                let wait = retry.delay(attempt);
                warn!("{}: attempt {} failed ({msg}); retrying in {wait:?}", provider.name(), attempt + 1);
                std::thread::sleep(wait);
                attempt += 1;
            }
            Err(last) => {
                return Err(LlmError::Transport { provider: provider.name().to_string(), attempts: attempt + 1, last })
            }
        }
    };
    Ok(parse_response(&raw, task)?)
}

/// Runs `complete` over `prompts` with at most `max_in_flight` concurrent
/// requests. Results come back in input order.
pub fn complete_many(
    provider: &dyn Provider,
    prompts: &[String],
    retry: RetryPolicy,
    max_in_flight: usize,
) -> Vec<Result<LlmResponse, LlmError>> {
    let workers = max_in_flight.max(1).min(prompts.len());
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<LlmResponse, LlmError>>>> = prompts.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= prompts.len() {
                    break;
                }
                let r = complete(provider, &prompts[i], retry);
                *slots[i].lock().expect("result slot poisoned") = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot poisoned").expect("every prompt is answered"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU32;

    fn score_prompt(names: &[&str]) -> String {
        let ctx = PromptContext {
            market_summary: "flat".into(),
            report_excerpts: vec![],
            factor_history: names.iter().map(|n| (n.to_string(), 0.01)).collect(),
            task: Task::ScoreAlphas,
        };
        render_prompt(&ctx, "score_alphas").unwrap()
    }

    struct Flaky {
        fails: u32,
        calls: AtomicU32,
        inner: StubProvider,
    }

    impl Provider for Flaky {
        fn name(&self) -> &str {
            "flaky"
        }
        fn send(&self, prompt: &str) -> Result<String, TransportError> {
            if self.calls.fetch_add(1, Ordering::SeqCst) < self.fails {
                return Err(TransportError::Retryable("boom".into()));
            }
            self.inner.send(prompt)
        }
    }

    const FAST: RetryPolicy = RetryPolicy { max_retries: 2, base_delay: Duration::from_millis(1) };

    #[test]
    fn stub_scores_every_listed_alpha_reproducibly() {
        let p = score_prompt(&["A", "B", "C"]);
        let a = complete(&StubProvider::new(1), &p, FAST).unwrap();
        let b = complete(&StubProvider::new(1), &p, FAST).unwrap();
        assert_eq!(a, b);
        let names: Vec<_> = a.scores().iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["A", "B", "C"]);
        assert!(a.scores().iter().all(|s| (0.0..=1.0).contains(&s.confidence) && (0.0..=1.0).contains(&s.risk)));
        assert_ne!(a, complete(&StubProvider::new(2), &p, FAST).unwrap());
    }

    #[test]
    fn stub_proposals_all_parse() {
        let ctx = PromptContext {
            market_summary: "up".into(),
            report_excerpts: vec!["guidance raised".into()],
            factor_history: vec![],
            task: Task::ProposeAlphas,
        };
        let p = render_prompt(&ctx, "propose_alphas").unwrap();
        let r = complete(&StubProvider::new(9), &p, FAST).unwrap();
        assert!(!r.proposals().is_empty());
        assert!(r.rejected.is_empty());
    }

    #[test]
    fn retries_then_succeeds_or_gives_up() {
        let p = score_prompt(&["A"]);
        let ok = Flaky { fails: 2, calls: AtomicU32::new(0), inner: StubProvider::new(0) };
        assert!(complete(&ok, &p, FAST).is_ok());
        assert_eq!(ok.calls.load(Ordering::SeqCst), 3);
        let bad = Flaky { fails: 3, calls: AtomicU32::new(0), inner: StubProvider::new(0) };
        match complete(&bad, &p, FAST) {
            Err(LlmError::Transport { attempts, .. }) => assert_eq!(attempts, 3),
            other => panic!("expected transport error, got {other:?}"),
        }
    }

    #[test]
    fn backoff_doubles() {
        let r = RetryPolicy { max_retries: 3, base_delay: Duration::from_millis(10) };
        assert_eq!(r.delay(0), Duration::from_millis(10));
        assert_eq!(r.delay(3), Duration::from_millis(80));
    }

    #[test]
    fn concurrent_results_keep_input_order() {
        let prompts: Vec<String> = (0..12).map(|i| score_prompt(&[&format!("alpha{i}")])).collect();
        let stub = StubProvider::new(4);
        let many = complete_many(&stub, &prompts, FAST, 4);
        for (i, r) in many.iter().enumerate() {
            let r = r.as_ref().unwrap();
            assert_eq!(r.scores()[0].name, format!("alpha{i}"));
            assert_eq!(*r, complete(&stub, &prompts[i], FAST).unwrap());
        }
    }

    #[test]
    fn prompt_without_task_is_rejected() {
        assert_eq!(complete(&StubProvider::new(0), "hello", FAST), Err(LlmError::UnknownTask));
    }
}
