//! Query files: one JSON object per line.
//!
//! A line needs a `query_id` and either a precomputed `embedding` or a
//! `question` the encoder can embed. `answer` and `source_video_id` act as
//! ground truth when present. Synthetic QA output reads as a query file.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::encoder::EncoderClient;
use crate::vector::Vector;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_video_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

pub fn read_queries(path: &Path) -> Result<Vec<QueryRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<QueryRecord> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let q: QueryRecord = serde_json::from_str(line)
            .map_err(|e| Error::schema(format!("line {}", n + 1), e.to_string()))?;
        if !seen.insert(q.query_id.clone()) {
            return Err(Error::schema(
                format!("line {}", n + 1),
                format!("duplicate query_id `{}`", q.query_id),
            ));
        }
        out.push(q);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(out)
}

pub fn write_queries(queries: &[QueryRecord], path: &Path) -> Result<()> {
    let mut buf = String::new();
    for q in queries {
        buf.push_str(&serde_json::to_string(q).expect("query serializes"));
        buf.push('\n');
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Query vectors in input order. Precomputed embeddings are used as given;
/// the rest are embedded in one batched encoder call.
pub fn query_vectors(
    queries: &[QueryRecord],
    encoder: Option<&EncoderClient<'_>>,
    dim: usize,
) -> Result<Vec<Vector>> {
    let missing: Vec<usize> = (0..queries.len()).filter(|&i| queries[i].embedding.is_none()).collect();
    let mut embedded = HashMap::new();
    if !missing.is_empty() {
        let texts = missing
            .iter()
            .map(|&i| {
                queries[i].question.clone().ok_or_else(|| {
                    Error::schema(
                        format!("query `{}`", queries[i].query_id),
                        "needs an embedding or a question",
                    )
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let encoder = encoder.ok_or_else(|| {
            Error::config("endpoints.encoder_url", "required to embed queries without an embedding")
        })?;
        let r = encoder.embed_text(&texts, Some(dim))?;
        embedded.extend(missing.into_iter().zip(r.embeddings));
    }
    queries
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let v = match &q.embedding {
                Some(e) => e.clone(),
                None => embedded.remove(&i).expect("embedded above"),
            };
            if v.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            Vector::new(v)
        })
        .collect()
}

/// `query_id -> source_video_id` for queries that carry ground truth.
pub fn ground_truth(queries: &[QueryRecord]) -> HashMap<String, String> {
    queries
        .iter()
        .filter_map(|q| Some((q.query_id.clone(), q.source_video_id.clone()?)))
        .collect()
}
