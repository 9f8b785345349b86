use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{chat, generate_answer, ContextMode, FrameRef, GenerationContext, GeneratorConfig, Segment};
use crate::client::ModelClient;
use crate::corpus::VideoRecord;
use crate::encoder::EncoderClient;
use crate::metrics::rouge_l;
use crate::selector::{SubsetSignal, TrainingPair};
use crate::{Error, Result};

pub const SYNTHETIC_QA_TEMPLATE: &str = include_str!("../../prompts/synthetic_qa.txt");
pub const GEVAL_TEMPLATE: &str = include_str!("../../prompts/geval.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QaOrigin {
    Dataset,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaExample {
    pub query_id: String,
    pub question: String,
    pub answer: String,
    pub source_video_id: String,
    pub origin: QaOrigin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

/// Replaces `{{name}}` placeholders in one left-to-right pass. Substituted
/// text is never rescanned; unknown placeholders stay as they are.
pub fn fill_template(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find("{{") {
        out.push_str(&rest[..open]);
        let after = &rest[open + 2..];
        match after.find("}}") {
            Some(close) => {
                let name = &after[..close];
                match values.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push_str("{{");
                        out.push_str(name);
                        out.push_str("}}");
                    }
                }
                rest = &after[close + 2..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn geval_prompt(question: &str, ground_truth: &str, generated: &str) -> String {
    fill_template(
        GEVAL_TEMPLATE,
        &[
            ("Question", question),
            ("Ground_Truth_Answer", ground_truth),
            ("Generated_Response", generated),
        ],
    )
}

/// The first JSON array in `text` that is not nested inside another JSON
/// value. Prose, code fences, and stray brackets around it are skipped.
pub fn extract_json_array(text: &str) -> Result<Vec<Value>> {
    let mut i = 0;
    while i < text.len() {
        let c = text.as_bytes()[i];
        if c == b'[' || c == b'{' {
            let mut stream = serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>();
            if let Some(Ok(v)) = stream.next() {
                match v {
                    Value::Array(items) => return Ok(items),
                    _ => {
                        i += stream.byte_offset();
                        continue;
                    }
                }
            }
        }
        i += 1;
    }
    Err(Error::MalformedJson(format!(
        "no JSON array in reply {:?}",
        text.chars().take(80).collect::<String>()
    )))
}

fn parse_pairs(reply: &str) -> Result<Vec<(String, String)>> {
    let items = extract_json_array(reply)?;
    items
        .iter()
        .map(|item| {
            let field = |k: &str| {
                item[k]
                    .as_str()
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .ok_or_else(|| Error::MalformedJson(format!("item lacks a non-empty `{k}`: {item}")))
            };
            Ok((field("question")?, field("answer")?))
        })
        .collect()
}

/// Asks the generator for three QA pairs about a video. A malformed reply
/// is retried once; a well-formed reply with the wrong count is not.
pub fn synthesize_qa(
    video: &VideoRecord,
    images: Vec<Value>,
    client: &dyn ModelClient,
    model: &str,
) -> Result<Vec<QaExample>> {
    let mut parts = images;
    if let Some(t) = video.text() {
        parts.push(serde_json::json!({ "type": "text", "text": t }));
    }
    let request = super::prompt_request(model, parts, SYNTHETIC_QA_TEMPLATE);
    let mut attempt = 0;
    let pairs = loop {
        attempt += 1;
        match chat(client, &request).and_then(|reply| parse_pairs(&reply)) {
            Ok(p) => break p,
            Err(Error::MalformedJson(_)) if attempt == 1 => {
                log::warn!("malformed QA reply for `{}`, retrying", video.video_id);
            }
            Err(e) => return Err(e),
        }
    };
    if pairs.len() != 3 {
        return Err(Error::WrongCount(pairs.len()));
    }
    Ok(pairs
        .into_iter()
        .enumerate()
        .map(|(i, (question, answer))| QaExample {
            query_id: format!("{}-q{}", video.video_id, i + 1),
            question,
            answer,
            source_video_id: video.video_id.clone(),
            origin: QaOrigin::Synthetic,
            category: video.category.clone(),
        })
        .collect())
}

/// First run of ASCII digits in `reply`, required to lie in 1..=5.
pub fn parse_score(reply: &str) -> Result<u8> {
    let start = reply
        .find(|c: char| c.is_ascii_digit())
        .ok_or_else(|| Error::UnparseableScore(reply.to_string()))?;
    let digits: String = reply[start..].chars().take_while(char::is_ascii_digit).collect();
    let value: i64 = digits.parse().unwrap_or(i64::MAX);
    if (1..=5).contains(&value) {
        Ok(value as u8)
    } else {
        Err(Error::ScoreOutOfRange(value))
    }
}

pub fn geval_judge(
    question: &str,
    ground_truth: &str,
    generated: &str,
    client: &dyn ModelClient,
    model: &str,
) -> Result<u8> {
    let request = super::prompt_request(model, Vec::new(), &geval_prompt(question, ground_truth, generated));
    let reply = client.post_json("/v1/chat", &request)?;
    let text = reply["answer"]
        .as_str()
        .ok_or_else(|| Error::InvalidResponse("chat reply lacks a string `answer`".into()))?;
    parse_score(text)
}

/// Fills `aux_transcript` through speech recognition when the video has no
/// text. Videos that already have text are returned unchanged, so repeated
/// calls make no further requests.
pub fn ensure_transcript(record: &VideoRecord, encoder: &EncoderClient<'_>) -> Result<VideoRecord> {
    if record.text().is_some() {
        return Ok(record.clone());
    }
    let transcript = encoder.transcribe(&record.source_path)?;
    let mut out = record.clone();
    out.aux_transcript = Some(transcript.text);
    Ok(out)
}

/// Answer quality of a frame subset: ROUGE-L of the generator's answer,
/// given only those frames, against the pair's reference answer.
pub struct RougeSignal<'a> {
    pub client: &'a dyn ModelClient,
    pub generator: GeneratorConfig,
}

impl SubsetSignal for RougeSignal<'_> {
    fn signal(&self, pair: &TrainingPair, subset: &[usize]) -> Result<f64> {
        let question = pair
            .question
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument(format!("pair `{}` has no question text", pair.query_id)))?;
        let reference = pair
            .reference_answer
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument(format!("pair `{}` has no reference answer", pair.query_id)))?;
        let ctx = GenerationContext {
            query_id: pair.query_id.clone(),
            question: question.to_string(),
            segments: vec![Segment {
                video_id: pair.video_id.clone(),
                frames: subset
                    .iter()
                    .map(|&i| FrameRef {
                        index: pair.candidates.frame_indices[i],
                        timestamp: pair.candidates.timestamps[i],
                    })
                    .collect(),
                transcript: None,
                transcript_truncated: false,
            }],
            mode: ContextMode::VideoOnly,
        };
        let result = generate_answer(&ctx, self.client, &self.generator)?;
        Ok(rouge_l(reference, &result.answer))
    }
}
