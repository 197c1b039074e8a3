use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::SelectionResult;

/// Quality question appended after each candidate text.
pub const ASK_LLM_PROMPT: &str = "Does the previous paragraph contain informative signal for fine-tuning a large-language model?\nAn informative datapoint should be well-formatted, contain some usable knowledge of the world, and strictly NOT have any harmful, racist, sexist, etc. content. OPTIONS: yes, no";

/// The full prompt sent for one candidate.
pub fn wrap_prompt(text: &str) -> String {
    format!("{text}\n\n{ASK_LLM_PROMPT}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub yes_probability: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum ScorerError {
    #[error("scorer timed out after {0:?}")]
    Timeout(Duration),
    #[error("scorer transport failed: {0}")]
    Transport(String),
    #[error("malformed scorer response: {0}")]
    Response(String),
}

/// A judge that returns `P("yes")` for a prompt.
pub trait Scorer: Sync {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError>;
}

/// Wraps a closure; used as the offline stub.
pub struct FnScorer<F>(pub F);

impl<F> Scorer for FnScorer<F>
where
    F: Fn(&ScoreRequest) -> Result<ScoreResponse, ScorerError> + Sync,
{
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        (self.0)(request)
    }
}

fn parse_response(body: &str) -> Result<ScoreResponse, ScorerError> {
    let r: ScoreResponse =
        serde_json::from_str(body.trim()).map_err(|e| ScorerError::Response(e.to_string()))?;
    if !(0.0..=1.0).contains(&r.yes_probability) {
        return Err(ScorerError::Response(format!(
            "yes_probability {} outside [0, 1]",
            r.yes_probability
        )));
    }
    Ok(r)
}

/// Runs a local program once per request: the request JSON goes to its
/// stdin, a response JSON is read from its stdout.
#[derive(Debug, Clone)]
pub struct ProcessScorer {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl Scorer for ProcessScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let transport = |e: std::io::Error| ScorerError::Transport(e.to_string());
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(transport)?;
        let body = serde_json::to_string(request).expect("request serializes");
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            stdin.write_all(body.as_bytes()).map_err(transport)?;
            stdin.write_all(b"\n").map_err(transport)?;
        }
        let deadline = Instant::now() + self.timeout;
        let status = loop {
            if let Some(status) = child.try_wait().map_err(transport)? {
                break status;
            }
            if Instant::now() >= deadline {
                let _ = child.kill();
                let _ = child.wait();
                return Err(ScorerError::Timeout(self.timeout));
            }
            std::thread::sleep(Duration::from_millis(5));
        };
        let mut out = String::new();
        child
            .stdout
            .take()
            .expect("piped stdout")
            .read_to_string(&mut out)
            .map_err(transport)?;
        if !status.success() {
            return Err(ScorerError::Transport(format!("scorer exited with {status}")));
        }
        parse_response(&out)
    }
}

/// POSTs the request JSON to an HTTP endpoint.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    pub endpoint: String,
    pub timeout: Duration,
}

impl Scorer for HttpScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let agent = ureq::AgentBuilder::new().timeout(self.timeout).build();
        let body = serde_json::to_string(request).expect("request serializes");
        let response = agent
            .post(&self.endpoint)
            .set("Content-Type", "application/json")
            .send_string(&body)
            .map_err(|e| match e {
                ureq::Error::Transport(t) if t.kind() == ureq::ErrorKind::Io => {
                    ScorerError::Timeout(self.timeout)
                }
                other => ScorerError::Transport(other.to_string()),
            })?;
        let text = response
            .into_string()
            .map_err(|e| ScorerError::Transport(e.to_string()))?;
        parse_response(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AskLlmOptions {
    pub attempts: usize,
    /// Delay before the first retry; doubled for each further retry.
    pub backoff: Duration,
    pub max_in_flight: usize,
    /// Abort when more than this fraction of items fail every attempt.
    pub max_failure_fraction: f64,
}

impl Default for AskLlmOptions {
    fn default() -> Self {
        Self {
            attempts: 3,
            backoff: Duration::from_secs(1),
            max_in_flight: 4,
            max_failure_fraction: 0.1,
        }
    }
}

fn score_one(scorer: &dyn Scorer, text: &str, opts: &AskLlmOptions) -> Option<f64> {
    let request = ScoreRequest {
        prompt: wrap_prompt(text),
    };
    let mut delay = opts.backoff;
    for attempt in 0..opts.attempts.max(1) {
        if attempt > 0 {
            std::thread::sleep(delay);
            delay *= 2;
        }
        if let Ok(r) = scorer.score(&request) {
            if (0.0..=1.0).contains(&r.yes_probability) {
                return Some(r.yes_probability);
            }
        }
    }
    None
}

/// Scores every text, at most `max_in_flight` requests at a time.
///
/// Items that fail every attempt are `None`. When more than
/// `max_failure_fraction` of the items fail, returns
/// [`Error::PartialResults`] carrying the scores that did arrive.
pub fn score_all(texts: &[String], scorer: &dyn Scorer, opts: &AskLlmOptions) -> Result<Vec<Option<f64>>> {
    let scores = Mutex::new(vec![None; texts.len()]);
    let next = AtomicUsize::new(0);
    let workers = opts.max_in_flight.clamp(1, texts.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= texts.len() {
                    break;
                }
                let s = score_one(scorer, &texts[i], opts);
                scores.lock().expect("no worker panics while holding the lock")[i] = s;
            });
        }
    });
    let scores = scores.into_inner().expect("workers joined");
    let failed = scores.iter().filter(|s| s.is_none()).count();
    if failed as f64 > opts.max_failure_fraction * texts.len() as f64 {
        return Err(Error::PartialResults {
            failed,
            total: texts.len(),
            scores,
        });
    }
    Ok(scores)
}

/// Top `n` texts by `P("yes")`, ties to the lowest index. Items whose
/// scoring failed rank below every scored item.
pub fn ask_llm_select(
    texts: &[String],
    n: usize,
    scorer: &dyn Scorer,
    opts: &AskLlmOptions,
) -> Result<SelectionResult> {
    if n > texts.len() {
        return Err(Error::invalid(format!(
            "budget {n} exceeds the {} available texts",
            texts.len()
        )));
    }
    let start = Instant::now();
    let scores = score_all(texts, scorer, opts)?;
    let mut order: Vec<usize> = (0..texts.len()).collect();
    let key = |i: usize| scores[i].unwrap_or(f64::NEG_INFINITY);
    order.sort_by(|&a, &b| key(b).total_cmp(&key(a)).then(a.cmp(&b)));
    order.truncate(n);
    Ok(SelectionResult {
        method: "ask-llm".into(),
        seed: 0,
        n,
        sigma0: None,
        batch_size: None,
        chosen: order,
        round_gains: Vec::new(),
        gain_evaluations: 0,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        weights: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicU64;

    fn quick() -> AskLlmOptions {
        AskLlmOptions {
            backoff: Duration::ZERO,
            ..AskLlmOptions::default()
        }
    }

    fn texts(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("item {i}")).collect()
    }

    fn index_of(prompt: &str) -> usize {
        prompt
            .strip_prefix("item ")
            .and_then(|r| r.split('\n').next())
            .and_then(|i| i.parse().ok())
            .expect("stub prompt")
    }

    #[test]
    fn stub_scores_pick_highest_indices() {
        let stub = FnScorer(|r: &ScoreRequest| {
            Ok(ScoreResponse {
                yes_probability: index_of(&r.prompt) as f64 / 10.0,
            })
        });
        let r = ask_llm_select(&texts(10), 3, &stub, &quick()).unwrap();
        assert_eq!(r.chosen, [9, 8, 7]);
    }

    #[test]
    fn equal_scores_pick_first_indices() {
        let stub = FnScorer(|_: &ScoreRequest| Ok(ScoreResponse { yes_probability: 0.5 }));
        let r = ask_llm_select(&texts(10), 4, &stub, &quick()).unwrap();
        assert_eq!(r.chosen, [0, 1, 2, 3]);
    }

    #[test]
    fn prompt_wraps_text() {
        let p = wrap_prompt("abc");
        assert!(p.starts_with("abc\n\nDoes the previous paragraph"));
        assert!(p.ends_with("OPTIONS: yes, no"));
    }

    #[test]
    fn transient_failures_are_retried() {
        let calls = AtomicU64::new(0);
        let flaky = FnScorer(|r: &ScoreRequest| {
            let i = index_of(&r.prompt);
            if i == 2 && calls.fetch_add(1, Ordering::SeqCst) < 2 {
                return Err(ScorerError::Timeout(Duration::ZERO));
            }
            Ok(ScoreResponse {
                yes_probability: if i == 2 { 1.0 } else { 0.0 },
            })
        });
        let r = ask_llm_select(&texts(5), 1, &flaky, &quick()).unwrap();
        assert_eq!(r.chosen, [2]);
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn too_many_failures_abort_with_partial_results() {
        let broken = FnScorer(|r: &ScoreRequest| {
            if index_of(&r.prompt) < 2 {
                Err(ScorerError::Transport("down".into()))
            } else {
                Ok(ScoreResponse { yes_probability: 0.3 })
            }
        });
        // 2 of 10 failing is above the 10% limit.
        match ask_llm_select(&texts(10), 1, &broken, &quick()) {
            Err(Error::PartialResults { failed, total, scores }) => {
                assert_eq!((failed, total), (2, 10));
                assert_eq!(scores[5], Some(0.3));
                assert_eq!(scores[0], None);
            }
            other => panic!("{other:?}"),
        }
        // 1 of 10 is tolerated and ranks last.
        let one = FnScorer(|r: &ScoreRequest| {
            if index_of(&r.prompt) == 0 {
                Err(ScorerError::Transport("down".into()))
            } else {
                Ok(ScoreResponse { yes_probability: 0.3 })
            }
        });
        let r = ask_llm_select(&texts(10), 10, &one, &quick()).unwrap();
        assert_eq!(r.chosen[9], 0);
    }

    #[test]
    fn out_of_range_probability_is_a_failure() {
        assert!(parse_response("{\"yes_probability\": 1.5}").is_err());
        assert!(parse_response("{\"no\": 1}").is_err());
        assert_eq!(parse_response(" {\"yes_probability\": 0.25}\n").unwrap().yes_probability, 0.25);
    }
}
