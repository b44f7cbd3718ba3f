use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::sync::mpsc;
use std::time::Duration;

use alphaforge::llm::{
    complete, render_prompt, HttpProvider, LlmError, PromptContext, RetryPolicy, Task, TransportError,
};

fn golden_ctx() -> PromptContext {
    PromptContext {
        market_summary: "Equal-weight benchmark: -6.20% over the last 60 sessions (Bear).".into(),
        report_excerpts: vec![
            "Margins compressed across the sector.".into(),
            "Two issuers cut guidance.\nCapex unchanged.".into(),
        ],
        factor_history: vec![
            ("Price Momentum".into(), 0.0213),
            ("Bollinger Band Width".into(), -0.0041),
            ("Volume Surge".into(), 0.0107),
        ],
        task: Task::ScoreAlphas,
    }
}

/// Set `ALPHAFORGE_BLESS=1` to rewrite the checked-in rendering.
#[test]
fn score_alphas_template_matches_golden_file() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/score_alphas.txt");
    let rendered = render_prompt(&golden_ctx(), "score_alphas").unwrap();
    if std::env::var_os("ALPHAFORGE_BLESS").is_some() {
        std::fs::write(&path, &rendered).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(rendered, expected);
}

/// Serves one canned HTTP response per entry, returning each request body.
fn mock_server(responses: Vec<(u16, String)>) -> (String, mpsc::Receiver<String>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        for (status, body) in responses {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream);
            let mut len = 0usize;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if line == "\r\n" || line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut req = vec![0u8; len];
            reader.read_exact(&mut req).unwrap();
            tx.send(String::from_utf8(req).unwrap()).unwrap();
            let mut stream = reader.into_inner();
            write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (url, rx)
}

fn chat_body(content: &str) -> String {
    serde_json::json!({"choices": [{"message": {"role": "assistant", "content": content}}]}).to_string()
}

const FAST: RetryPolicy = RetryPolicy { max_retries: 2, base_delay: Duration::from_millis(5) };

#[test]
fn http_provider_retries_server_errors_and_parses_envelope() {
    let content = r#"{"scores":[{"name":"Price Momentum","confidence":0.7,"risk":0.4}]}"#;
    let (url, rx) = mock_server(vec![(503, "{}".into()), (429, "{}".into()), (200, chat_body(content))]);
    let provider = HttpProvider::new(&url, "test-model", "ALPHAFORGE_TEST_UNSET_KEY", Duration::from_secs(5)).unwrap();
    let prompt = render_prompt(&golden_ctx(), "score_alphas").unwrap();
    let r = complete(&provider, &prompt, FAST).unwrap();
    assert_eq!(r.scores().len(), 1);
    assert_eq!(r.scores()[0].confidence, 0.7);
    let bodies: Vec<serde_json::Value> = rx.try_iter().map(|b| serde_json::from_str(&b).unwrap()).collect();
    assert_eq!(bodies.len(), 3);
    assert_eq!(bodies[2]["model"], "test-model");
    assert_eq!(bodies[2]["messages"][0]["content"], prompt.as_str());
}

#[test]
fn http_provider_gives_up_after_retry_budget() {
    let (url, _rx) = mock_server(vec![(500, "{}".into()), (500, "{}".into()), (500, "{}".into())]);
    let provider = HttpProvider::new(&url, "m", "ALPHAFORGE_TEST_UNSET_KEY", Duration::from_secs(5)).unwrap();
    let prompt = render_prompt(&golden_ctx(), "score_alphas").unwrap();
    match complete(&provider, &prompt, FAST) {
        Err(LlmError::Transport { attempts: 3, last: TransportError::Retryable(_), .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn http_provider_schema_error_keeps_raw_text() {
    let (url, _rx) = mock_server(vec![(200, chat_body("I think momentum looks good."))]);
    let provider = HttpProvider::new(&url, "m", "ALPHAFORGE_TEST_UNSET_KEY", Duration::from_secs(5)).unwrap();
    let prompt = render_prompt(&golden_ctx(), "score_alphas").unwrap();
    match complete(&provider, &prompt, FAST) {
        Err(LlmError::Schema(e)) => assert_eq!(e.raw, "I think momentum looks good."),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn client_errors_are_not_retried() {
    let (url, rx) = mock_server(vec![(401, "{\"error\":\"bad key\"}".into())]);
    let provider = HttpProvider::new(&url, "m", "ALPHAFORGE_TEST_UNSET_KEY", Duration::from_secs(5)).unwrap();
    let prompt = render_prompt(&golden_ctx(), "score_alphas").unwrap();
    assert!(matches!(
        complete(&provider, &prompt, FAST),
        Err(LlmError::Transport { attempts: 1, last: TransportError::Fatal(_), .. })
    ));
    assert_eq!(rx.try_iter().count(), 1);
}
