use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{check_saliency_alignment, Prediction, Provider, ProviderDescriptor, ProviderKind};
use crate::corpus::{Example, Side};
use crate::error::{Error, Result};
use crate::xform::gradient::SaliencyScores;

pub const TIMEOUT_ENV: &str = "SALADBENCH_HTTP_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;
pub const DEFAULT_BATCH_SIZE: usize = 32;
const EXCERPT_LEN: usize = 200;

#[derive(Serialize)]
struct WireInput<'a> {
    id: &'a str,
    text_a: &'a str,
    text_b: Option<&'a str>,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    inputs: Vec<WireInput<'a>>,
    want_saliency: bool,
    loss_labels: Option<&'a [usize]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    saliency_side: Option<Side>,
}

#[derive(Deserialize)]
struct WireResponse {
    probs: Vec<Vec<f64>>,
    #[serde(default)]
    saliency: Option<Vec<Vec<f64>>>,
}

/// Client for a remote classifier speaking the `/v1/predict` JSON protocol.
#[derive(Debug, Clone)]
pub struct HttpProvider {
    endpoint: String,
    n_classes: usize,
    supports_saliency: bool,
    max_in_flight: usize,
    batch_size: usize,
    agent: ureq::Agent,
}

fn excerpt(s: &str) -> String {
    s.chars().take(EXCERPT_LEN).collect()
}

/// Request timeout from the environment, falling back to the default.
pub fn timeout_from_env() -> Duration {
    let ms = std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<u64>().ok())
        .unwrap_or(DEFAULT_TIMEOUT_MS);
    Duration::from_millis(ms)
}

impl HttpProvider {
    /// `base_url` is the server root; requests go to `{base_url}/v1/predict`.
    pub fn new(base_url: &str, n_classes: usize) -> Self {
        let endpoint = format!("{}/v1/predict", base_url.trim_end_matches('/'));
        HttpProvider {
            endpoint,
            n_classes,
            supports_saliency: true,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            batch_size: DEFAULT_BATCH_SIZE,
            agent: ureq::AgentBuilder::new().timeout(timeout_from_env()).build(),
        }
    }

    pub fn with_saliency(mut self, supported: bool) -> Self {
        self.supports_saliency = supported;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    pub fn with_batch_size(mut self, n: usize) -> Self {
        self.batch_size = n.max(1);
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = ureq::AgentBuilder::new().timeout(timeout).build();
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn post(&self, req: &WireRequest<'_>, expected: usize) -> Result<WireResponse> {
        let body = serde_json::to_string(req)?;
        let resp = self
            .agent
            .post(&self.endpoint)
            .set("Content-Type", "application/json")
            .send_string(&body);
        let text = match resp {
            Ok(r) => {
                let status = r.status();
                let text = r
                    .into_string()
                    .map_err(|e| Error::Transport(format!("{}: {e}", self.endpoint)))?;
                if status != 200 {
                    return Err(Error::Transport(format!(
                        "{} returned {status}: {}",
                        self.endpoint,
                        excerpt(&text)
                    )));
                }
                text
            }
            Err(ureq::Error::Status(code, r)) => {
                let text = r.into_string().unwrap_or_default();
                return Err(Error::Transport(format!(
                    "{} returned {code}: {}",
                    self.endpoint,
                    excerpt(&text)
                )));
            }
            Err(e) => return Err(Error::Transport(format!("{}: {e}", self.endpoint))),
        };
        let parsed: WireResponse = serde_json::from_str(&text).map_err(|e| {
            Error::Transport(format!("malformed response ({e}): {}", excerpt(&text)))
        })?;
        if parsed.probs.len() != expected {
            return Err(Error::Contract(format!(
                "{} probability rows for {expected} inputs",
                parsed.probs.len()
            )));
        }
        Ok(parsed)
    }

    /// Runs `f` over batches with at most `max_in_flight` concurrent calls,
    /// concatenating results in input order.
    fn batched<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(std::ops::Range<usize>) -> Result<Vec<T>> + Sync,
    {
        let ranges: Vec<_> = (0..n)
            .step_by(self.batch_size)
            .map(|s| s..(s + self.batch_size).min(n))
            .collect();
        let slots: Vec<Mutex<Option<Result<Vec<T>>>>> =
            ranges.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = self.max_in_flight.min(ranges.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= ranges.len() {
                        break;
                    }
                    let r = f(ranges[i].clone());
                    let failed = r.is_err();
                    *slots[i].lock().expect("slot lock") = Some(r);
                    if failed {
                        next.store(ranges.len(), Ordering::SeqCst);
                    }
                });
            }
        });
        let mut out = Vec::with_capacity(n);
        for slot in slots {
            if let Some(r) = slot.into_inner().expect("slot lock") {
                out.extend(r?);
            }
        }
        if out.len() != n {
            return Err(Error::Transport("request batch abandoned after earlier failure".into()));
        }
        Ok(out)
    }
}

fn wire_inputs(inputs: &[Example]) -> Vec<WireInput<'_>> {
    inputs
        .iter()
        .map(|e| WireInput {
            id: &e.id,
            text_a: &e.input.text_a,
            text_b: e.input.text_b.as_deref(),
        })
        .collect()
}

impl Provider for HttpProvider {
    fn descriptor(&self) -> ProviderDescriptor {
        ProviderDescriptor {
            kind: ProviderKind::Http,
            location: self.endpoint.clone(),
            supports_saliency: self.supports_saliency,
        }
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_batch(&self, inputs: &[Example]) -> Result<Vec<Prediction>> {
        self.batched(inputs.len(), |range| {
            let chunk = &inputs[range];
            let req = WireRequest {
                inputs: wire_inputs(chunk),
                want_saliency: false,
                loss_labels: None,
                saliency_side: None,
            };
            let resp = self.post(&req, chunk.len())?;
            chunk
                .iter()
                .zip(resp.probs)
                .map(|(ex, p)| Prediction::from_probs(ex.id.clone(), p, self.n_classes))
                .collect()
        })
    }

    fn saliency_batch(
        &self,
        inputs: &[Example],
        loss_labels: &[usize],
        side: Side,
    ) -> Result<Vec<SaliencyScores>> {
        if !self.supports_saliency {
            return Err(Error::Capability(format!(
                "{} configured without saliency",
                self.endpoint
            )));
        }
        if inputs.len() != loss_labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} inputs but {} loss labels",
                inputs.len(),
                loss_labels.len()
            )));
        }
        self.batched(inputs.len(), |range| {
            let chunk = &inputs[range.clone()];
            let labels = &loss_labels[range];
            let req = WireRequest {
                inputs: wire_inputs(chunk),
                want_saliency: true,
                loss_labels: Some(labels),
                saliency_side: Some(side),
            };
            let resp = self.post(&req, chunk.len())?;
            let rows = resp.saliency.ok_or_else(|| {
                Error::Capability(format!("{} returned no saliency", self.endpoint))
            })?;
            if rows.len() != chunk.len() {
                return Err(Error::Contract(format!(
                    "{} saliency rows for {} inputs",
                    rows.len(),
                    chunk.len()
                )));
            }
            chunk
                .iter()
                .zip(rows)
                .zip(labels)
                .map(|((ex, scores), &y)| {
                    let s = SaliencyScores::new(scores, y)
                        .map_err(|e| Error::Contract(format!("`{}`: {e}", ex.id)))?;
                    check_saliency_alignment(ex, side, &s)?;
                    Ok(s)
                })
                .collect()
        })
    }
}
