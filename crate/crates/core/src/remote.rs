//! HTTP JSON model providers.
//!
//! Every endpoint takes `POST {"texts": [...]}` and answers with one of
//! `{"embeddings": [[...]], "dim": D}`, `{"scores": [...]}` or
//! `{"labels": [...]}` (language ID sends both `labels` and `scores`).
//! Transport errors, 429 and 5xx responses are retryable; other 4xx and
//! malformed bodies are not.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::document::Document;
use crate::error::ProviderError;
use crate::langid::{LangPrediction, LanguageIdProvider};
use crate::quality::{CategoryClassifier, LineScorer, QualityScorer, WebTypeProvider};
use crate::semantic::EmbeddingProvider;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub url: String,
    pub timeout_ms: u64,
    pub max_batch: usize,
    /// Declared label set for label endpoints.
    pub labels: Vec<String>,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            url: String::new(),
            timeout_ms: 30_000,
            max_batch: 32,
            labels: Vec::new(),
        }
    }
}

#[derive(Serialize)]
struct TextsRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    embeddings: Vec<Vec<f32>>,
    dim: usize,
}

#[derive(Deserialize)]
struct ScoresResponse {
    scores: Vec<f64>,
}

#[derive(Deserialize)]
struct LabelsResponse {
    labels: Vec<String>,
}

#[derive(Deserialize)]
struct LangResponse {
    labels: Vec<String>,
    scores: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct HttpJsonClient {
    agent: ureq::Agent,
    cfg: RemoteConfig,
}

impl HttpJsonClient {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, cfg }
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    pub fn post<T: DeserializeOwned>(&self, texts: &[&str]) -> Result<T, ProviderError> {
        let mut resp = self
            .agent
            .post(&self.cfg.url)
            .send_json(TextsRequest { texts })
            .map_err(|e| ProviderError::retryable(format!("{}: {e}", self.cfg.url)))?;
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Err(ProviderError::retryable(format!("{}: HTTP {status}", self.cfg.url)));
        }
        if status >= 400 {
            return Err(ProviderError::fatal(format!("{}: HTTP {status}", self.cfg.url)));
        }
        resp.body_mut()
            .read_json()
            .map_err(|e| ProviderError::fatal(format!("{}: bad response body: {e}", self.cfg.url)))
    }

    fn expect_len(&self, got: usize, want: usize) -> Result<(), ProviderError> {
        if got == want {
            Ok(())
        } else {
            Err(ProviderError::fatal(format!("{}: {got} results for {want} texts", self.cfg.url)))
        }
    }

    fn scores(&self, texts: &[&str]) -> Result<Vec<f64>, ProviderError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.cfg.max_batch.max(1)) {
            let r: ScoresResponse = self.post(chunk)?;
            self.expect_len(r.scores.len(), chunk.len())?;
            out.extend(r.scores);
        }
        Ok(out)
    }

    fn label(&self, text: &str) -> Result<String, ProviderError> {
        let r: LabelsResponse = self.post(&[text])?;
        self.expect_len(r.labels.len(), 1)?;
        Ok(r.labels.into_iter().next().expect("one label"))
    }
}

/// Embedding model behind an HTTP endpoint.
#[derive(Debug, Clone)]
pub struct RemoteEmbeddingProvider(pub HttpJsonClient);

impl EmbeddingProvider for RemoteEmbeddingProvider {
    fn max_batch(&self) -> usize {
        self.0.cfg.max_batch.max(1)
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f32>>, ProviderError> {
        let r: EmbeddingsResponse = self.0.post(texts)?;
        self.0.expect_len(r.embeddings.len(), texts.len())?;
        if let Some(v) = r.embeddings.iter().find(|v| v.len() != r.dim) {
            return Err(ProviderError::fatal(format!(
                "embedding of length {} but dim {}",
                v.len(),
                r.dim
            )));
        }
        Ok(r.embeddings)
    }
}

#[derive(Debug, Clone)]
pub struct RemoteLanguageId(pub HttpJsonClient);

impl LanguageIdProvider for RemoteLanguageId {
    fn predict(&self, text: &str) -> Result<LangPrediction, ProviderError> {
        let r: LangResponse = self.0.post(&[text])?;
        self.0.expect_len(r.labels.len().min(r.scores.len()), 1)?;
        Ok(LangPrediction::new(r.labels[0].clone(), r.scores[0]))
    }
}

/// Score endpoint usable as a quality scorer or a per-line clutter scorer.
#[derive(Debug, Clone)]
pub struct RemoteScorer(pub HttpJsonClient);

impl QualityScorer for RemoteScorer {
    fn score(&self, text: &str) -> Result<f64, ProviderError> {
        Ok(self.0.scores(&[text])?[0])
    }
}

impl LineScorer for RemoteScorer {
    fn score_lines(&self, lines: &[&str]) -> Result<Vec<f64>, ProviderError> {
        self.0.scores(lines)
    }
}

/// Label endpoint usable as a web-type or category classifier.
#[derive(Debug, Clone)]
pub struct RemoteLabeler(pub HttpJsonClient);

impl WebTypeProvider for RemoteLabeler {
    fn classify(&self, doc: &Document) -> Result<String, ProviderError> {
        self.0.label(&doc.text)
    }
}

impl CategoryClassifier for RemoteLabeler {
    fn labels(&self) -> Vec<String> {
        self.0.cfg.labels.clone()
    }

    fn classify(&self, doc: &Document) -> Result<String, ProviderError> {
        self.0.label(&doc.text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::RetryPolicy;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;
    use std::sync::{Arc, Mutex};
    use std::thread;

    /// Serves the scripted `(status, body)` replies in order, one per
    /// connection, and records request bodies.
    fn serve(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<String>>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/v1", listener.local_addr().unwrap());
        let seen = Arc::new(Mutex::new(Vec::new()));
        let log = Arc::clone(&seen);
        thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0;
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
                let mut req = vec![0; len];
                reader.read_exact(&mut req).unwrap();
                log.lock().unwrap().push(String::from_utf8(req).unwrap());
                let mut stream = stream;
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
        });
        (url, seen)
    }

    fn client(url: String) -> HttpJsonClient {
        HttpJsonClient::new(RemoteConfig { url, timeout_ms: 5_000, max_batch: 2, labels: vec!["detail_page".into()] })
    }

    #[test]
    fn embeddings_round_trip() {
        let (url, seen) = serve(vec![(200, r#"{"embeddings":[[1,0],[0,2]],"dim":2}"#.into())]);
        let p = RemoteEmbeddingProvider(client(url));
        let v = p.embed(&["a", "b"]).unwrap();
        assert_eq!(v, vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
        let sent: serde_json::Value = serde_json::from_str(&seen.lock().unwrap()[0]).unwrap();
        assert_eq!(sent, serde_json::json!({"texts": ["a", "b"]}));
    }

    #[test]
    fn server_errors_are_retried_client_errors_are_not() {
        let (url, _) = serve(vec![(503, "{}".into()), (200, r#"{"scores":[0.75]}"#.into())]);
        let p = RemoteScorer(client(url));
        let got = RetryPolicy::no_wait(3).run(|| p.score("x")).unwrap();
        assert_eq!(got, 0.75);

        let (url, _) = serve(vec![(400, "{}".into())]);
        let err = RemoteScorer(client(url)).score("x").unwrap_err();
        assert!(!err.retryable);
    }

    #[test]
    fn line_scores_are_batched() {
        let (url, seen) = serve(vec![
            (200, r#"{"scores":[0.1,0.9]}"#.into()),
            (200, r#"{"scores":[0.5]}"#.into()),
        ]);
        let got = RemoteScorer(client(url)).score_lines(&["a", "b", "c"]).unwrap();
        assert_eq!(got, vec![0.1, 0.9, 0.5]);
        assert_eq!(seen.lock().unwrap().len(), 2);
    }

    #[test]
    fn labels_and_language() {
        let (url, _) = serve(vec![(200, r#"{"labels":["forum"]}"#.into())]);
        let d = Document::new("d", 0, "text");
        assert_eq!(WebTypeProvider::classify(&RemoteLabeler(client(url)), &d).unwrap(), "forum");
        let (url, _) = serve(vec![(200, r#"{"labels":["zh"],"scores":[0.8]}"#.into())]);
        let pred = RemoteLanguageId(client(url)).predict("你好").unwrap();
        assert_eq!(pred, LangPrediction::new("zh", 0.8));
    }

    #[test]
    fn mismatched_dim_and_unreachable_host() {
        let (url, _) = serve(vec![(200, r#"{"embeddings":[[1,0,0]],"dim":2}"#.into())]);
        assert!(!RemoteEmbeddingProvider(client(url)).embed(&["a"]).unwrap_err().retryable);
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        drop(listener);
        assert!(RemoteScorer(client(url)).score("x").unwrap_err().retryable);
    }
}
