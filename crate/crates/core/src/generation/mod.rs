//! Multimodal context assembly and answer generation.
//!
//! A context is the retrieved videos in rank order, each as its selected
//! frames followed by optional transcript text, with the question last.

mod qa;

use std::path::{Path, PathBuf};

use base64::Engine as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

pub use qa::{
    ensure_transcript, extract_json_array, fill_template, geval_judge, geval_prompt, parse_score,
    synthesize_qa, QaExample, QaOrigin, RougeSignal, GEVAL_TEMPLATE, SYNTHETIC_QA_TEMPLATE,
};

use crate::client::ModelClient;
use crate::corpus::Corpus;
use crate::retrieval::RetrievalResult;
use crate::selector::{uniform_stride, CandidateFrames, SelectorMode, SelectorModel};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    #[default]
    VideoOnly,
    VideoPlusText,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    pub index: usize,
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub video_id: String,
    pub frames: Vec<FrameRef>,
    pub transcript: Option<String>,
    #[serde(default)]
    pub transcript_truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationContext {
    pub query_id: String,
    pub question: String,
    pub segments: Vec<Segment>,
    pub mode: ContextMode,
}

impl GenerationContext {
    pub fn truncated(&self) -> bool {
        self.segments.iter().any(|s| s.transcript_truncated)
    }
}

#[derive(Debug, Clone)]
pub struct ContextConfig<'a> {
    pub mode: ContextMode,
    pub frames_per_video: usize,
    pub candidates: usize,
    pub n_subsets: usize,
    pub max_transcript_chars: usize,
    pub selector: Option<&'a SelectorModel>,
    pub seed: u64,
}

impl Default for ContextConfig<'_> {
    fn default() -> Self {
        ContextConfig {
            mode: ContextMode::VideoOnly,
            frames_per_video: 32,
            candidates: 64,
            n_subsets: 40,
            max_transcript_chars: 8000,
            selector: None,
            seed: 0,
        }
    }
}

fn truncate_chars(text: &str, max: usize) -> (String, bool) {
    match text.char_indices().nth(max) {
        Some((cut, _)) => (text[..cut].to_string(), true),
        None => (text.to_string(), false),
    }
}

/// Builds `[V1, t1, ..., Vk, tk, q]` for the retrieved videos.
///
/// Videos with at most `frames_per_video` frames contribute every frame.
/// Longer ones are reduced to `candidates` frames and the selector picks a
/// query-conditioned subset; without a selector frames are taken at a
/// uniform stride.
pub fn assemble_context(
    query_id: &str,
    question: &str,
    query: Option<&[f64]>,
    retrieved: &RetrievalResult,
    corpus: &Corpus,
    cfg: &ContextConfig<'_>,
) -> Result<GenerationContext> {
    if retrieved.ranked.is_empty() {
        return Err(Error::EmptyRetrieval);
    }
    if cfg.frames_per_video == 0 {
        return Err(Error::config("generation.frames_per_video", "must be >= 1"));
    }
    if let Some(sel) = cfg.selector {
        if sel.mode != SelectorMode::Generation {
            return Err(Error::WrongMode {
                expected: SelectorMode::Generation,
                found: sel.mode,
            });
        }
    }
    let mut segments = Vec::with_capacity(retrieved.ranked.len());
    for hit in &retrieved.ranked {
        let id = &hit.video_id;
        let build = || -> Result<Segment> {
            let record = corpus.record(id)?;
            let visual = corpus.load_visual(id)?;
            let mut picked = if visual.count <= cfg.frames_per_video {
                (0..visual.count).collect()
            } else if let Some(sel) = cfg.selector {
                let video_seed = seed::derive(cfg.seed, &format!("context/{id}"));
                let candidates =
                    CandidateFrames::reduce(&visual, cfg.candidates, seed::derive(video_seed, "reduce"))?;
                let pick = sel.select_frames(
                    &candidates,
                    Some(query.ok_or(Error::MissingQuery)?),
                    cfg.n_subsets,
                    seed::derive(video_seed, "select"),
                )?;
                candidates.original_indices(&pick.frame_indices)
            } else {
                uniform_stride(visual.count, cfg.frames_per_video)
            };
            picked.sort_by(|&a, &b| visual.timestamp(a).total_cmp(&visual.timestamp(b)).then(a.cmp(&b)));
            let frames = picked
                .into_iter()
                .map(|index| FrameRef {
                    index,
                    timestamp: visual.timestamp(index),
                })
                .collect();
            let (transcript, transcript_truncated) = match cfg.mode {
                ContextMode::VideoOnly => (None, false),
                ContextMode::VideoPlusText => {
                    let text = record.text().ok_or_else(|| Error::MissingTranscript(id.clone()))?;
                    let (t, cut) = truncate_chars(text, cfg.max_transcript_chars);
                    (Some(t), cut)
                }
            };
            Ok(Segment {
                video_id: id.clone(),
                frames,
                transcript,
                transcript_truncated,
            })
        };
        segments.push(build().map_err(|e| match e {
            Error::MissingTranscript(_) | Error::MissingQuery => e,
            other => other.for_video(id),
        })?);
    }
    Ok(GenerationContext {
        query_id: query_id.to_string(),
        question: question.to_string(),
        segments,
        mode: cfg.mode,
    })
}

/// Where frame images live: `<root>/<video_id>/<index>.jpg`.
pub fn frame_path(root: &Path, video_id: &str, index: usize) -> PathBuf {
    root.join(video_id).join(format!("{index}.jpg"))
}

/// A base64 JPEG content part for one exported frame.
pub fn image_part(root: &Path, video_id: &str, index: usize) -> Result<Value> {
    let path = frame_path(root, video_id, index);
    let bytes = std::fs::read(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFrame(path.clone()),
        _ => Error::io(&path, e),
    })?;
    Ok(json!({
        "type": "image",
        "data": base64::engine::general_purpose::STANDARD.encode(bytes),
        "mime": "image/jpeg",
    }))
}

fn text_part(text: &str) -> Value {
    json!({ "type": "text", "text": text })
}

/// Chat payload: per segment its frames as images then its transcript as
/// text, and the question as the final part. Without a frame directory no
/// image parts are sent.
pub fn build_chat_request(ctx: &GenerationContext, model: &str, frame_dir: Option<&Path>) -> Result<Value> {
    let mut parts = Vec::new();
    for seg in &ctx.segments {
        if let Some(root) = frame_dir {
            for f in &seg.frames {
                parts.push(image_part(root, &seg.video_id, f.index)?);
            }
        }
        if let Some(t) = &seg.transcript {
            parts.push(text_part(t));
        }
    }
    parts.push(text_part(&ctx.question));
    Ok(json!({
        "model": model,
        "messages": [{ "role": "user", "content": parts }],
    }))
}

/// A single-prompt chat request with optional images.
pub fn prompt_request(model: &str, images: Vec<Value>, prompt: &str) -> Value {
    let mut parts = images;
    parts.push(text_part(prompt));
    json!({
        "model": model,
        "messages": [{ "role": "user", "content": parts }],
    })
}

/// Hex SHA-256 of the serialized request.
pub fn context_digest(request: &Value) -> String {
    hex::encode(Sha256::digest(request.to_string().as_bytes()))
}

/// Sends a chat request and returns the non-blank `answer` field.
pub fn chat(client: &dyn ModelClient, request: &Value) -> Result<String> {
    let reply = client.post_json("/v1/chat", request)?;
    let answer = reply["answer"]
        .as_str()
        .ok_or_else(|| Error::InvalidResponse("chat reply lacks a string `answer`".into()))?;
    if answer.trim().is_empty() {
        return Err(Error::EmptyAnswer);
    }
    Ok(answer.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub query_id: String,
    pub question: String,
    pub answer: String,
    pub context_digest: String,
    pub generator_id: String,
    #[serde(default)]
    pub transcript_truncated: bool,
}

#[derive(Debug, Clone)]
pub struct GeneratorConfig {
    pub model: String,
    pub frame_dir: Option<PathBuf>,
}

pub fn generate_answer(
    ctx: &GenerationContext,
    client: &dyn ModelClient,
    cfg: &GeneratorConfig,
) -> Result<GenerationResult> {
    let request = build_chat_request(ctx, &cfg.model, cfg.frame_dir.as_deref())?;
    let answer = chat(client, &request)?;
    Ok(GenerationResult {
        query_id: ctx.query_id.clone(),
        question: ctx.question.clone(),
        answer,
        context_digest: context_digest(&request),
        generator_id: format!("{}@{}", cfg.model, client.id()),
        transcript_truncated: ctx.truncated(),
    })
}

/// Runs [`generate_answer`] for every context with at most `max_inflight`
/// concurrent requests. Results keep input order.
pub fn generate_all(
    contexts: &[GenerationContext],
    client: &dyn ModelClient,
    cfg: &GeneratorConfig,
    max_inflight: usize,
) -> Result<Vec<Result<GenerationResult>>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(max_inflight.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(pool.install(|| {
        contexts
            .par_iter()
            .map(|ctx| generate_answer(ctx, client, cfg))
            .collect()
    }))
}

pub fn write_results_jsonl(results: &[GenerationResult], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    for r in results {
        serde_json::to_writer(&mut buf, r).expect("result serializes");
        buf.push(b'\n');
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_results_jsonl(path: &Path) -> Result<Vec<GenerationResult>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::schema(format!("line {}", n + 1), e.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::StubClient;

    fn ctx() -> GenerationContext {
        GenerationContext {
            query_id: "q1".into(),
            question: "How do I bake bread?".into(),
            segments: vec![
                Segment {
                    video_id: "b".into(),
                    frames: vec![FrameRef { index: 0, timestamp: 0.0 }, FrameRef { index: 2, timestamp: 2.0 }],
                    transcript: Some("knead".into()),
                    transcript_truncated: false,
                },
                Segment {
                    video_id: "a".into(),
                    frames: vec![FrameRef { index: 1, timestamp: 1.0 }],
                    transcript: None,
                    transcript_truncated: false,
                },
            ],
            mode: ContextMode::VideoPlusText,
        }
    }

    #[test]
    fn request_order_and_digest() {
        let dir = tempfile::tempdir().unwrap();
        for (v, i) in [("b", 0), ("b", 2), ("a", 1)] {
            let p = frame_path(dir.path(), v, i);
            std::fs::create_dir_all(p.parent().unwrap()).unwrap();
            std::fs::write(&p, format!("{v}{i}")).unwrap();
        }
        let req = build_chat_request(&ctx(), "m", Some(dir.path())).unwrap();
        let parts = req["messages"][0]["content"].as_array().unwrap();
        let kinds: Vec<&str> = parts.iter().map(|p| p["type"].as_str().unwrap()).collect();
        assert_eq!(kinds, ["image", "image", "text", "image", "text"]);
        assert_eq!(parts[0]["data"], "YjA=");
        assert_eq!(parts[4]["text"], "How do I bake bread?");
        let again = build_chat_request(&ctx(), "m", Some(dir.path())).unwrap();
        assert_eq!(context_digest(&req), context_digest(&again));
        assert_eq!(context_digest(&req).len(), 64);
    }

    #[test]
    fn missing_frame_file() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            build_chat_request(&ctx(), "m", Some(dir.path())),
            Err(Error::MissingFrame(_))
        ));
    }

    #[test]
    fn echo_and_empty_answers() {
        let echo = StubClient::chat(|req| crate::client::last_text_part(req).unwrap().to_string());
        let cfg = GeneratorConfig {
            model: "m".into(),
            frame_dir: None,
        };
        let r = generate_answer(&ctx(), &echo, &cfg).unwrap();
        assert_eq!(r.answer, "How do I bake bread?");
        let empty = StubClient::chat(|_| "  ".into());
        assert!(matches!(generate_answer(&ctx(), &empty, &cfg), Err(Error::EmptyAnswer)));
        let failing = StubClient::new("x", |_, _, _| Err(Error::GeneratorError { status: 503, body: "busy".into() }));
        assert!(matches!(
            generate_answer(&ctx(), &failing, &cfg),
            Err(Error::GeneratorError { status: 503, .. })
        ));
    }

    #[test]
    fn bounded_parallel_generation_keeps_order() {
        let echo = StubClient::chat(|req| crate::client::last_text_part(req).unwrap().to_string());
        let contexts: Vec<GenerationContext> = (0..20)
            .map(|i| GenerationContext {
                query_id: format!("q{i}"),
                question: format!("question {i}"),
                ..ctx()
            })
            .collect();
        let cfg = GeneratorConfig {
            model: "m".into(),
            frame_dir: None,
        };
        let out = generate_all(&contexts, &echo, &cfg, 4).unwrap();
        for (i, r) in out.into_iter().enumerate() {
            assert_eq!(r.unwrap().answer, format!("question {i}"));
        }
        assert_eq!(echo.calls(), 20);
    }

    #[test]
    fn truncation_respects_char_boundaries() {
        assert_eq!(truncate_chars("héllo", 2), ("hé".to_string(), true));
        assert_eq!(truncate_chars("hi", 2), ("hi".to_string(), false));
    }
}
