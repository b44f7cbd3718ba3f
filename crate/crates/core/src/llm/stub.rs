use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use super::prompt::{factor_names, Task};
use super::{Provider, TransportError};

const CANNED_PROPOSALS: &[(&str, &str, &str)] = &[
    ("Momentum", "Five Day Momentum", "(CLOSE - DELAY(CLOSE, 5)) / DELAY(CLOSE, 5)"),
    ("Momentum", "Ranked Twenty Day Return", "CS_RANK(CLOSE / DELAY(CLOSE, 20) - 1)"),
    ("Mean Reversion", "VWAP Gap", "(VWAP - CLOSE) / CLOSE"),
    ("Mean Reversion", "Short Z-Score", "(MEAN(CLOSE, 5) - CLOSE) / STD(CLOSE, 5)"),
    ("Volatility", "Range Ratio", "MEAN(HIGH - LOW, 5) / MEAN(HIGH - LOW, 20)"),
    ("Liquidity", "Volume Surge", "VOLUME / MEAN(VOLUME, 20) - 1"),
    ("Technical", "EMA Crossover", "EMA(CLOSE, 5) - EMA(CLOSE, 20)"),
    ("Technical", "Ranked RSI", "CS_RANK(RSI(7))"),
];

/// Offline provider: answers are a pure function of (prompt, seed).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StubProvider {
    pub seed: u64,
}

impl StubProvider {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn rng(&self, prompt: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(prompt.as_bytes());
        h.update(self.seed.to_le_bytes());
        ChaCha8Rng::from_seed(h.finalize().into())
    }
}

impl Provider for StubProvider {
    fn name(&self) -> &str {
        "stub"
    }

    fn send(&self, prompt: &str) -> Result<String, TransportError> {
        let mut rng = self.rng(prompt);
        let body = match Task::from_prompt(prompt) {
            Some(Task::ProposeAlphas) => {
                let count = rng.gen_range(2..=4);
                let start = rng.gen_range(0..CANNED_PROPOSALS.len());
                let proposals: Vec<_> = (0..count)
                    .map(|k| {
                        let (c, n, e) = CANNED_PROPOSALS[(start + k) % CANNED_PROPOSALS.len()];
                        json!({"category": c, "name": n, "expression": e})
                    })
                    .collect();
                json!({ "proposals": proposals })
            }
            _ => {
                let scores: Vec<_> = factor_names(prompt)
                    .into_iter()
                    .map(|name| {
                        let confidence: f64 = rng.gen();
                        let risk: f64 = rng.gen();
                        json!({"name": name, "confidence": confidence, "risk": risk})
                    })
                    .collect();
                json!({ "scores": scores })
            }
        };
        Ok(body.to_string())
    }
}
