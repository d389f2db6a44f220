//! Shared helpers for integration tests: a local chat-completion endpoint
//! and small corpus builders.
#![allow(dead_code)]

pub mod refs;

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::{Arc, Mutex};
use std::thread;

use serde_json::{json, Value};
use social_rl::episode::Episode;
use social_rl::sim::{simulate, Scenario, ScriptedNegotiator};
use social_rl::trainer::evaluation_seeds;

#[derive(Debug, Clone)]
pub struct SeenRequest {
    pub authorization: Option<String>,
    pub body: Value,
}

impl SeenRequest {
    /// The user message of a chat-completion request.
    pub fn prompt(&self) -> &str {
        self.body["messages"][0]["content"].as_str().unwrap_or("")
    }
}

type Handler = dyn Fn(&SeenRequest, usize) -> (u16, String) + Send + Sync;

/// HTTP/1.1 server on a loopback port. Each connection carries one request.
pub struct MockEndpoint {
    pub url: String,
    pub seen: Arc<Mutex<Vec<SeenRequest>>>,
}

impl MockEndpoint {
    /// `handler` gets the request and its 0-based arrival index and returns
    /// `(status, body)`.
    pub fn start(handler: impl Fn(&SeenRequest, usize) -> (u16, String) + Send + Sync + 'static) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").expect("bind loopback");
        let url = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let handler: Arc<Handler> = Arc::new(handler);
        let seen_bg = Arc::clone(&seen);
        thread::spawn(move || {
            for stream in listener.incoming() {
                let Ok(stream) = stream else { continue };
                let handler = Arc::clone(&handler);
                let seen = Arc::clone(&seen_bg);
                thread::spawn(move || serve(stream, handler.as_ref(), &seen));
            }
        });
        Self { url, seen }
    }

    /// Replies with `content` as the assistant message, whatever the prompt.
    pub fn fixed(content: &str) -> Self {
        let body = chat_response(content);
        Self::start(move |_, _| (200, body.clone()))
    }

    pub fn requests(&self) -> Vec<SeenRequest> {
        self.seen.lock().unwrap().clone()
    }
}

fn serve(stream: TcpStream, handler: &Handler, seen: &Mutex<Vec<SeenRequest>>) {
    let mut reader = BufReader::new(stream.try_clone().expect("clone stream"));
    let mut content_length = 0usize;
    let mut authorization = None;
    let mut line = String::new();
    if reader.read_line(&mut line).unwrap_or(0) == 0 {
        return;
    }
    loop {
        line.clear();
        if reader.read_line(&mut line).unwrap_or(0) == 0 {
            return;
        }
        let trimmed = line.trim_end();
        if trimmed.is_empty() {
            break;
        }
        if let Some((name, value)) = trimmed.split_once(':') {
            let value = value.trim().to_string();
            match name.to_ascii_lowercase().as_str() {
                "content-length" => content_length = value.parse().unwrap_or(0),
                "authorization" => authorization = Some(value),
                _ => {}
            }
        }
    }
    let mut body = vec![0u8; content_length];
    if reader.read_exact(&mut body).is_err() {
        return;
    }
    let request = SeenRequest {
        authorization,
        body: serde_json::from_slice(&body).unwrap_or(Value::Null),
    };
    let index = {
        let mut seen = seen.lock().unwrap();
        seen.push(request.clone());
        seen.len() - 1
    };
    let (status, reply) = handler(&request, index);
    let mut stream = stream;
    let _ = write!(
        stream,
        "HTTP/1.1 {status} MOCK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
        reply.len()
    );
    let _ = stream.flush();
}

/// Chat-completion response body carrying `content`.
pub fn chat_response(content: &str) -> String {
    json!({
        "id": "mock",
        "object": "chat.completion",
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
    })
    .to_string()
}

/// `n` demonstrator episodes on `scenario`.
pub fn corpus(scenario: &Scenario, n: usize, seed: u64) -> Vec<Episode> {
    evaluation_seeds(seed, n)
        .into_iter()
        .map(|s| simulate(scenario, &ScriptedNegotiator::default(), &scenario.partner.policy, s).unwrap())
        .collect()
}

/// Random regression problem with dense features in `[-1, 1]`.
pub fn random_regression(
    seed: u64,
    n: usize,
    dim: usize,
) -> Vec<social_rl::reward_model::RegressionExample> {
    use rand::Rng;
    let mut rng = social_rl::seed::rng(seed);
    (0..n)
        .map(|_| social_rl::reward_model::RegressionExample {
            features: social_rl::reward_model::FeatureVector((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()),
            target: rng.random_range(-1.0..1.0),
        })
        .collect()
}

/// `‖analytic − central difference‖ / max(‖analytic‖, ‖central difference‖)`.
pub fn gradient_relative_error(
    params: &social_rl::reward_model::RewardModelParameters,
    data: &[social_rl::reward_model::RegressionExample],
) -> f64 {
    let analytic = params.gradient(data).unwrap().to_flat();
    let flat = params.to_flat();
    let h = 1e-6;
    let mut numeric = Vec::with_capacity(flat.len());
    for i in 0..flat.len() {
        let mut plus = flat.clone();
        let mut minus = flat.clone();
        plus[i] += h;
        minus[i] -= h;
        let lp = params.with_flat(&plus).mse_loss(data).unwrap();
        let lm = params.with_flat(&minus).mse_loss(data).unwrap();
        numeric.push((lp - lm) / (2.0 * h));
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(&analytic).max(norm(&numeric)).max(1e-300)
}

/// Two-arm single-state bandit (arm 0 pays 1, arm 1 pays 0) trained with
/// GRPO at `kl_beta = 0`. Returns the first step after which `P(arm 0) >
/// 0.99`, if reached within `max_steps`.
pub fn bandit_steps_to_converge(learning_rate: f64, max_steps: usize, seed: u64) -> Option<usize> {
    use social_rl::trainer::{grpo_step, GrpoStepConfig, PolicyParameters};
    let mut policy = PolicyParameters::zeros(1, 2);
    let reference = policy.clone();
    let contexts = vec![vec![1.0]];
    let config = GrpoStepConfig { group_size: 16, learning_rate, kl_beta: 0.0, epsilon: 1e-8 };
    for step in 1..=max_steps {
        grpo_step(&mut policy, &reference, &contexts, |_, a| if a == 0 { 1.0 } else { 0.0 }, &config, social_rl::seed::derive(seed, step as u64)).unwrap();
        if policy.probabilities(&contexts[0])[0] > 0.99 {
            return Some(step);
        }
    }
    None
}

/// Largest `|mean|` and, over non-degenerate groups, largest `|std − 1|` of
/// the advantages (population std).
pub fn advantage_deviation(groups: &[social_rl::trainer::GroupSample]) -> (f64, f64, usize) {
    let mut worst_mean: f64 = 0.0;
    let mut worst_std: f64 = 0.0;
    let mut degenerate = 0;
    for g in groups {
        let n = g.advantages.len() as f64;
        let m = g.advantages.iter().sum::<f64>() / n;
        worst_mean = worst_mean.max(m.abs());
        if g.advantages.iter().all(|a| *a == 0.0) {
            degenerate += 1;
            continue;
        }
        let s = (g.advantages.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n).sqrt();
        worst_std = worst_std.max((s - 1.0).abs());
    }
    (worst_mean, worst_std, degenerate)
}
