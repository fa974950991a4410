//! Turning narration tracks into procedure steps via an LLM endpoint.
//!
//! Narrations are chunked, each chunk is wrapped in a summarization prompt
//! and sent to a completion endpoint, and the replies are parsed back into
//! one step per line. A precomputed steps file can stand in for the
//! endpoint entirely.

use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, CorpusError, NarrationTrack, StepRecord};

/// Instruction prepended to every narration chunk.
pub const DEFAULT_INSTRUCTION: &str = "I will give you the text narrations extracted from an \
instruction video. Your task is to summarize the procedure steps that are relevant to the task \
of the video from the inputs. Please filter colloquial sentences in the speech.";

pub const DEFAULT_CHUNK_SIZE: usize = 10;

#[derive(Debug, Error)]
pub enum StepSourceError {
    #[error("chunk size must be >= 1")]
    BadChunkSize,
    #[error("completion endpoint unavailable after {attempts} attempts: {last_error}")]
    EndpointUnavailable { attempts: usize, last_error: String },
    #[error("completion request failed: {0}")]
    Transport(String),
    #[error("malformed completion response: {0}")]
    BadResponse(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Prompt wrapper for one narration chunk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub instruction_text: String,
    pub chunk_size: usize,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            instruction_text: DEFAULT_INSTRUCTION.to_string(),
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmClientConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub timeout_sec: f64,
    pub max_retries: usize,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8080/complete".to_string(),
            model_name: "llama-2-7b".to_string(),
            timeout_sec: 30.0,
            max_retries: 2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub model: String,
    pub prompt: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
}

/// A completion transport. Implementations must be safe to call repeatedly
/// with the same request.
pub trait LlmClient: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, StepSourceError>;
}

/// Deterministic in-process client for tests and offline runs.
pub struct MockClient<F>
where
    F: Fn(&CompletionRequest) -> Result<CompletionResponse, StepSourceError> + Send + Sync,
{
    respond: F,
}

impl<F> MockClient<F>
where
    F: Fn(&CompletionRequest) -> Result<CompletionResponse, StepSourceError> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        Self { respond }
    }
}

impl<F> LlmClient for MockClient<F>
where
    F: Fn(&CompletionRequest) -> Result<CompletionResponse, StepSourceError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, StepSourceError> {
        (self.respond)(request)
    }
}

/// Plain-HTTP transport posting `{"model", "prompt"}` and expecting `{"text"}`.
pub struct HttpClient {
    config: LlmClientConfig,
    agent: ureq::Agent,
}

impl HttpClient {
    pub fn new(config: LlmClientConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs_f64(config.timeout_sec.max(0.001)))
            .build();
        Self { config, agent }
    }
}

impl LlmClient for HttpClient {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, StepSourceError> {
        let response = self
            .agent
            .post(&self.config.endpoint_url)
            .send_json(serde_json::json!({
                "model": request.model,
                "prompt": request.prompt,
            }))
            .map_err(|e| StepSourceError::Transport(e.to_string()))?;
        response
            .into_json::<CompletionResponse>()
            .map_err(|e| StepSourceError::BadResponse(e.to_string()))
    }
}

/// Partitions the track into consecutive chunks of `chunk_size` narrations;
/// only the last chunk may be shorter.
pub fn chunk_narrations(
    track: &NarrationTrack,
    chunk_size: usize,
) -> Result<Vec<Vec<StepRecord>>, StepSourceError> {
    if chunk_size == 0 {
        return Err(StepSourceError::BadChunkSize);
    }
    Ok(track
        .items
        .chunks(chunk_size)
        .map(|c| c.to_vec())
        .collect())
}

/// Instruction text followed by the chunk's sentences, one per line.
pub fn build_prompt(template: &PromptTemplate, chunk: &[StepRecord]) -> String {
    let mut out = String::with_capacity(
        template.instruction_text.len() + chunk.iter().map(|r| r.text.len() + 1).sum::<usize>() + 1,
    );
    out.push_str(&template.instruction_text);
    for rec in chunk {
        out.push('\n');
        out.push_str(&rec.text);
    }
    out
}

/// Splits a completion into step texts: one per line, leading enumeration
/// markers ("1.", "-", "*") stripped, empty lines dropped.
pub fn parse_llm_output(raw: &str) -> Vec<String> {
    raw.lines()
        .map(strip_enumeration)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn strip_enumeration(line: &str) -> &str {
    let s = line.trim();
    let stripped = if let Some(rest) = s.strip_prefix('-').or_else(|| s.strip_prefix('*')) {
        rest
    } else {
        let digits = s.chars().take_while(|c| c.is_ascii_digit()).count();
        match s[digits..].strip_prefix('.') {
            Some(rest) if digits > 0 => rest,
            _ => s,
        }
    };
    stripped.trim()
}

/// Summarizes a narration track into steps, chunk by chunk, in chunk order.
///
/// Each chunk is retried up to `config.max_retries` extra times; if every
/// attempt on any chunk fails, the whole track falls back to
/// `fallback_steps_file` when one is configured.
pub fn extract_steps(
    track: &NarrationTrack,
    template: &PromptTemplate,
    client: &dyn LlmClient,
    config: &LlmClientConfig,
    fallback_steps_file: Option<&Path>,
) -> Result<Vec<StepRecord>, StepSourceError> {
    match extract_via_client(track, template, client, config) {
        Ok(steps) => Ok(steps),
        Err(err) => match fallback_steps_file {
            Some(path) => {
                log::warn!("completion endpoint failed ({err}); using steps file {path:?}");
                load_steps_file(path)
            }
            None => Err(err),
        },
    }
}

fn extract_via_client(
    track: &NarrationTrack,
    template: &PromptTemplate,
    client: &dyn LlmClient,
    config: &LlmClientConfig,
) -> Result<Vec<StepRecord>, StepSourceError> {
    let mut steps = Vec::new();
    for chunk in chunk_narrations(track, template.chunk_size)? {
        let request = CompletionRequest {
            model: config.model_name.clone(),
            prompt: build_prompt(template, &chunk),
        };
        let attempts = config.max_retries + 1;
        let mut last_error = String::new();
        let mut response = None;
        for _ in 0..attempts {
            match client.complete(&request) {
                Ok(r) => {
                    response = Some(r);
                    break;
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        let response = response.ok_or(StepSourceError::EndpointUnavailable {
            attempts,
            last_error,
        })?;
        steps.extend(parse_llm_output(&response.text).into_iter().map(StepRecord::from_text));
    }
    Ok(steps)
}

/// Reads precomputed steps from a JSONL track, dropping any timestamps so the
/// result matches what the endpoint path produces.
pub fn load_steps_file(path: &Path) -> Result<Vec<StepRecord>, StepSourceError> {
    let recs = corpus::load_track(path)?;
    Ok(recs
        .into_iter()
        .map(|r| StepRecord {
            start_sec: None,
            end_sec: None,
            ..r
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn narr(texts: &[&str]) -> NarrationTrack {
        let items = texts
            .iter()
            .enumerate()
            .map(|(i, t)| StepRecord {
                text: t.to_string(),
                start_sec: Some(i as f64),
                end_sec: Some(i as f64 + 1.0),
                gt_start_sec: None,
                gt_end_sec: None,
                task_id: None,
            })
            .collect();
        NarrationTrack::new(items).unwrap()
    }

    #[test]
    fn chunking_partitions_in_order() {
        let texts: Vec<String> = (0..23).map(|i| format!("n{}", i)).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let track = narr(&refs);
        let chunks = chunk_narrations(&track, 10).unwrap();
        assert_eq!(
            chunks.iter().map(Vec::len).collect::<Vec<_>>(),
            vec![10, 10, 3]
        );
        let flat: Vec<&str> = chunks
            .iter()
            .flatten()
            .map(|r| r.text.as_str())
            .collect();
        assert_eq!(flat, refs);
    }

    #[test]
    fn chunking_exact_and_empty() {
        let texts: Vec<String> = (0..10).map(|i| format!("n{}", i)).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        assert_eq!(chunk_narrations(&narr(&refs), 10).unwrap().len(), 1);
        assert!(chunk_narrations(&NarrationTrack::default(), 10)
            .unwrap()
            .is_empty());
        assert!(chunk_narrations(&NarrationTrack::default(), 0).is_err());
    }

    #[test]
    fn prompt_contains_instruction_then_sentences() {
        let template = PromptTemplate::default();
        let chunk = [
            StepRecord::from_text("pour oil"),
            StepRecord::from_text("chop the onion"),
            StepRecord::from_text("stir well"),
        ];
        let p = build_prompt(&template, &chunk);
        assert!(p.starts_with(DEFAULT_INSTRUCTION));
        let i1 = p.find("pour oil").unwrap();
        let i2 = p.find("chop the onion").unwrap();
        let i3 = p.find("stir well").unwrap();
        assert!(i1 < i2 && i2 < i3);
        assert_eq!(p, build_prompt(&template, &chunk));
    }

    #[test]
    fn parse_strips_enumeration_markers() {
        assert_eq!(
            parse_llm_output("1. Cut tomato\n2. Add oil"),
            vec!["Cut tomato", "Add oil"]
        );
        assert_eq!(parse_llm_output("- step a\n\n- step b"), vec!["step a", "step b"]);
        assert_eq!(parse_llm_output(""), Vec::<String>::new());
        assert_eq!(parse_llm_output("* 12. mixed"), vec!["12. mixed"]);
        assert_eq!(parse_llm_output("10. tenth step"), vec!["tenth step"]);
        assert_eq!(parse_llm_output("   \n\t\n"), Vec::<String>::new());
    }

    #[test]
    fn extract_concatenates_chunks_in_order() {
        let texts: Vec<String> = (0..20).map(|i| format!("n{}", i)).collect();
        let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
        let track = narr(&refs);
        let client = MockClient::new(|_req: &CompletionRequest| {
            Ok(CompletionResponse {
                text: "1. A".to_string(),
            })
        });
        let config = LlmClientConfig::default();
        let steps =
            extract_steps(&track, &PromptTemplate::default(), &client, &config, None).unwrap();
        assert_eq!(steps.len(), 2);
        assert!(steps.iter().all(|s| s.text == "A"));
        assert!(steps.iter().all(|s| s.start_sec.is_none() && s.end_sec.is_none()));

        // determinism under re-run
        let again =
            extract_steps(&track, &PromptTemplate::default(), &client, &config, None).unwrap();
        assert_eq!(steps, again);
    }

    #[test]
    fn extract_falls_back_to_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("steps.jsonl");
        corpus::save_track(
            &[
                StepRecord::from_text("a"),
                StepRecord::from_text("b"),
                StepRecord::from_text("c"),
            ],
            &path,
        )
        .unwrap();
        let failing = MockClient::new(|_req: &CompletionRequest| {
            Err(StepSourceError::Transport("connection refused".into()))
        });
        let track = narr(&["x"]);
        let config = LlmClientConfig::default();
        let steps = extract_steps(
            &track,
            &PromptTemplate::default(),
            &failing,
            &config,
            Some(&path),
        )
        .unwrap();
        assert_eq!(
            steps.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(),
            vec!["a", "b", "c"]
        );
    }

    #[test]
    fn extract_unreachable_without_fallback_errors() {
        let failing = MockClient::new(|_req: &CompletionRequest| {
            Err(StepSourceError::Transport("connection refused".into()))
        });
        let track = narr(&["x"]);
        let config = LlmClientConfig {
            max_retries: 1,
            ..Default::default()
        };
        match extract_steps(&track, &PromptTemplate::default(), &failing, &config, None) {
            Err(StepSourceError::EndpointUnavailable { attempts, .. }) => assert_eq!(attempts, 2),
            other => panic!("expected EndpointUnavailable, got {:?}", other),
        }
    }

    #[test]
    fn http_client_round_trip() {
        use std::io::{Read, Write};
        use std::net::TcpListener;

        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            // read until headers plus the content-length body have arrived
            let mut raw = Vec::new();
            let mut buf = [0u8; 4096];
            let request = loop {
                let n = stream.read(&mut buf).unwrap();
                raw.extend_from_slice(&buf[..n]);
                let text = String::from_utf8_lossy(&raw).to_string();
                if let Some(header_end) = text.find("\r\n\r\n") {
                    let content_length = text
                        .lines()
                        .find_map(|l| l.to_ascii_lowercase().strip_prefix("content-length:").map(str::trim).map(str::to_string))
                        .and_then(|v| v.parse::<usize>().ok())
                        .unwrap_or(0);
                    if raw.len() >= header_end + 4 + content_length {
                        break text;
                    }
                }
                if n == 0 {
                    break text;
                }
            };
            let body = r#"{"text":"1. boil water\n2. add pasta"}"#;
            let reply = format!(
                "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\n\r\n{}",
                body.len(),
                body
            );
            stream.write_all(reply.as_bytes()).unwrap();
            request
        });

        let config = LlmClientConfig {
            endpoint_url: format!("http://{}/complete", addr),
            model_name: "test-model".into(),
            timeout_sec: 5.0,
            max_retries: 0,
        };
        let client = HttpClient::new(config.clone());
        let response = client
            .complete(&CompletionRequest {
                model: config.model_name.clone(),
                prompt: "hello".into(),
            })
            .unwrap();
        assert_eq!(parse_llm_output(&response.text), vec!["boil water", "add pasta"]);

        let raw = handle.join().unwrap();
        assert!(raw.contains(r#""model":"test-model""#));
        assert!(raw.contains(r#""prompt":"hello""#));
    }
}
