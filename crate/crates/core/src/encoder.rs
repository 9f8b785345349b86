//! Client side of the encoder service: text and frame embeddings, speech
//! transcription and health. Every response is checked against the wire
//! contract before it reaches the engine.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::client::ModelClient;
use crate::{Error, Result};

/// Largest batch the text endpoint accepts.
pub const MAX_TEXT_BATCH: usize = 64;
/// Allowed deviation of embedding norms from 1.
pub const NORM_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub count: usize,
    pub embeddings: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamps: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSegment {
    pub start_s: f64,
    pub end_s: f64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub text: String,
    #[serde(default)]
    pub segments: Vec<TranscriptSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub encoder_id: String,
    pub dim: usize,
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidResponse(msg.into())
}

/// Checks shape, finiteness, unit norm and timestamp order.
pub fn validate_embed_response(r: &EmbedResponse, expected_dim: Option<usize>) -> Result<()> {
    if r.dim == 0 {
        return Err(invalid("dim is 0"));
    }
    if let Some(d) = expected_dim {
        if d != r.dim {
            return Err(invalid(format!("dim {} but the corpus uses {d}", r.dim)));
        }
    }
    if r.count != r.embeddings.len() {
        return Err(invalid(format!("count {} but {} embeddings", r.count, r.embeddings.len())));
    }
    for (i, e) in r.embeddings.iter().enumerate() {
        if e.len() != r.dim {
            return Err(invalid(format!("embedding {i} has length {}, dim is {}", e.len(), r.dim)));
        }
        if e.iter().any(|v| !v.is_finite()) {
            return Err(invalid(format!("embedding {i} has a non-finite value")));
        }
        let norm = e.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(invalid(format!("embedding {i} has norm {norm}")));
        }
    }
    if let Some(ts) = &r.timestamps {
        if ts.len() != r.count {
            return Err(invalid(format!("{} timestamps for {} embeddings", ts.len(), r.count)));
        }
        if ts.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(invalid("timestamps must be finite and non-negative"));
        }
        if ts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("timestamps are not strictly increasing"));
        }
    }
    Ok(())
}

/// Segments ordered by start, each well-formed, none overlapping the next.
pub fn validate_transcript(t: &Transcript) -> Result<()> {
    for (i, s) in t.segments.iter().enumerate() {
        if !(s.start_s.is_finite() && s.end_s.is_finite() && s.start_s >= 0.0 && s.start_s <= s.end_s) {
            return Err(invalid(format!("segment {i} has bounds {}..{}", s.start_s, s.end_s)));
        }
    }
    if let Some(i) = t.segments.windows(2).position(|w| w[1].start_s < w[0].end_s) {
        return Err(invalid(format!("segments {i} and {} overlap", i + 1)));
    }
    Ok(())
}

fn parse<T: serde::de::DeserializeOwned>(v: serde_json::Value, what: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| invalid(format!("{what}: {e}")))
}

pub struct EncoderClient<'a> {
    client: &'a dyn ModelClient,
}

impl<'a> EncoderClient<'a> {
    pub fn new(client: &'a dyn ModelClient) -> Self {
        EncoderClient { client }
    }

    /// One unit vector per text, in input order. Batches larger than the
    /// endpoint limit are split.
    pub fn embed_text(&self, texts: &[String], expected_dim: Option<usize>) -> Result<EmbedResponse> {
        if texts.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut out: Option<EmbedResponse> = None;
        for batch in texts.chunks(MAX_TEXT_BATCH) {
            let reply = self.client.post_json("/v1/embed/text", &json!({ "texts": batch }))?;
            let r: EmbedResponse = parse(reply, "embed/text")?;
            validate_embed_response(&r, expected_dim.or(out.as_ref().map(|o| o.dim)))?;
            if r.count != batch.len() {
                return Err(invalid(format!("{} texts sent, {} embeddings returned", batch.len(), r.count)));
            }
            match out.as_mut() {
                None => out = Some(r),
                Some(acc) => {
                    acc.count += r.count;
                    acc.embeddings.extend(r.embeddings);
                }
            }
        }
        Ok(out.expect("at least one batch"))
    }

    pub fn embed_frames(&self, video_path: &str, fps: f64, expected_dim: Option<usize>) -> Result<EmbedResponse> {
        let reply = self
            .client
            .post_json("/v1/embed/frames", &json!({ "video_path": video_path, "fps": fps }))?;
        let r: EmbedResponse = parse(reply, "embed/frames")?;
        validate_embed_response(&r, expected_dim)?;
        if r.count == 0 {
            return Err(invalid("no frames returned"));
        }
        Ok(r)
    }

    pub fn transcribe(&self, video_path: &str) -> Result<Transcript> {
        let reply = self
            .client
            .post_json("/v1/transcribe", &json!({ "video_path": video_path }))
            .map_err(|e| match e {
                Error::GeneratorError { status, body } => Error::AsrError(format!("HTTP {status}: {body}")),
                other => other,
            })?;
        let t: Transcript = parse(reply, "transcribe")?;
        validate_transcript(&t)?;
        Ok(t)
    }

    pub fn health(&self) -> Result<Health> {
        let h: Health = parse(self.client.get_json("/healthz")?, "healthz")?;
        if h.status != "ok" {
            return Err(invalid(format!("service status `{}`", h.status)));
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::{builtin_stub, StubClient};

    fn resp(embeddings: Vec<Vec<f64>>, timestamps: Option<Vec<f64>>) -> EmbedResponse {
        EmbedResponse {
            dim: embeddings[0].len(),
            count: embeddings.len(),
            embeddings,
            timestamps,
        }
    }

    #[test]
    fn validation_rules() {
        assert!(validate_embed_response(&resp(vec![vec![1.0, 0.0]], None), Some(2)).is_ok());
        assert!(validate_embed_response(&resp(vec![vec![1.0, 0.0]], None), Some(3)).is_err());
        assert!(validate_embed_response(&resp(vec![vec![1.0, 0.1]], None), None).is_err());
        assert!(validate_embed_response(&resp(vec![vec![1.0, 0.0], vec![0.0, 1.0]], Some(vec![1.0, 1.0])), None).is_err());
        assert!(validate_embed_response(&resp(vec![vec![1.0, 0.0], vec![0.0, 1.0]], Some(vec![0.0, 1.0])), None).is_ok());
        let mut bad = resp(vec![vec![1.0, 0.0]], None);
        bad.count = 2;
        assert!(validate_embed_response(&bad, None).is_err());
    }

    #[test]
    fn transcript_rules() {
        let seg = |a, b| TranscriptSegment {
            start_s: a,
            end_s: b,
            text: "x".into(),
        };
        let ok = Transcript {
            text: "x x".into(),
            segments: vec![seg(0.0, 1.0), seg(1.0, 2.5)],
        };
        assert!(validate_transcript(&ok).is_ok());
        let overlap = Transcript {
            text: "x x".into(),
            segments: vec![seg(0.0, 1.5), seg(1.0, 2.5)],
        };
        assert!(validate_transcript(&overlap).is_err());
        let empty = Transcript {
            text: String::new(),
            segments: vec![],
        };
        assert!(validate_transcript(&empty).is_ok());
    }

    #[test]
    fn stub_round_trips_and_batches() {
        let stub = builtin_stub(16, 5);
        let enc = EncoderClient::new(&stub);
        let texts: Vec<String> = (0..130).map(|i| format!("t{i}")).collect();
        let r = enc.embed_text(&texts, Some(16)).unwrap();
        assert_eq!(r.count, 130);
        assert_eq!(stub.calls(), 3);
        let frames = enc.embed_frames("clip.mp4", 1.0, Some(16)).unwrap();
        assert_eq!(frames.timestamps.unwrap(), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(enc.health().unwrap().dim, 16);
        assert!(enc.transcribe("clip.mp4").unwrap().text.contains("clip.mp4"));
    }

    #[test]
    fn asr_failures_map_to_asr_error() {
        let stub = StubClient::new("asr", |_, _, _| {
            Err(Error::GeneratorError {
                status: 422,
                body: "no audio track".into(),
            })
        });
        assert!(matches!(EncoderClient::new(&stub).transcribe("x"), Err(Error::AsrError(_))));
    }
}
