//! Reply parsing.

use serde_json::{Map, Value};

use super::prompt::ScoreBounds;
use super::AnnotationError;

/// The first well-formed JSON object embedded in `raw`.
pub fn first_json_object(raw: &str) -> Option<Map<String, Value>> {
    for (i, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[i..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(map))) = stream.next() {
            return Some(map);
        }
    }
    None
}

fn integer(v: &Value) -> Option<i64> {
    match v {
        Value::Number(n) => n.as_i64().or_else(|| {
            n.as_f64().filter(|f| f.fract() == 0.0 && f.abs() < 1e15).map(|f| f as i64)
        }),
        _ => None,
    }
}

/// Scores for `expected_keys`, in that order.
pub fn parse_reply(raw: &str, expected_keys: &[String], bounds: ScoreBounds) -> Result<Vec<i64>, AnnotationError> {
    let unparseable = |reason: &str| AnnotationError::UnparseableReply {
        reason: reason.to_string(),
        raw_reply: raw.to_string(),
    };
    let map = first_json_object(raw).ok_or_else(|| unparseable("no JSON object found"))?;
    let mut scores = Vec::with_capacity(expected_keys.len());
    for key in expected_keys {
        let value = map.get(key).ok_or_else(|| AnnotationError::MissingAnnotation {
            key: key.clone(),
            raw_reply: raw.to_string(),
        })?;
        let score = integer(value).ok_or_else(|| unparseable(&format!("`{key}` is not an integer: {value}")))?;
        if !bounds.contains(score) {
            return Err(AnnotationError::OutOfRangeScore {
                key: key.clone(),
                score,
                lo: bounds.lo,
                hi: bounds.hi,
                raw_reply: raw.to_string(),
            });
        }
        scores.push(score);
    }
    Ok(scores)
}

/// Turn index named by a singular reply. `candidates` pairs each agent turn
/// with its label. A JSON object scoring every candidate is read as its
/// argmax; otherwise the earliest label mentioned in the text wins.
pub fn parse_critical(raw: &str, candidates: &[(usize, String)]) -> Result<usize, AnnotationError> {
    if let Some(map) = first_json_object(raw) {
        let scored: Option<Vec<i64>> = candidates.iter().map(|(_, k)| map.get(k).and_then(integer)).collect();
        if let Some(scores) = scored.filter(|s| !s.is_empty()) {
            let mut best = 0;
            for (i, s) in scores.iter().enumerate() {
                if *s > scores[best] {
                    best = i;
                }
            }
            return Ok(candidates[best].0);
        }
    }
    candidates
        .iter()
        .filter_map(|(t, k)| raw.find(k.as_str()).map(|pos| (pos, *t)))
        .min()
        .map(|(_, t)| t)
        .ok_or_else(|| AnnotationError::UnparseableReply {
            reason: "reply names none of the agent's utterances".into(),
            raw_reply: raw.to_string(),
        })
}
