//! Structured-reply parsing. Every function here is total: it returns a fully
//! validated value or a typed error, never a partial result.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::templates::TemplateId;
use crate::labels::{Confidence, PrescreenLabel, StanceLabel};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed reply: {0}")]
    Malformed(String),
    #[error("reply index {found} does not match request index {expected}")]
    IndexMismatch { expected: u64, found: u64 },
    #[error("{field} '{value}' is not one of: {allowed}")]
    Label {
        field: &'static str,
        value: String,
        allowed: String,
    },
}

impl ParseError {
    /// All parse failures warrant one corrective re-ask.
    pub fn is_retryable(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedClassification {
    pub index: u64,
    /// Canonical label text from the stage's closed set.
    pub classification: String,
    pub confidence: Confidence,
    pub reason: Option<String>,
}

impl ParsedClassification {
    pub fn prescreen_label(&self) -> Option<PrescreenLabel> {
        self.classification.parse().ok()
    }

    pub fn stance_label(&self) -> Option<StanceLabel> {
        self.classification.parse().ok()
    }
}

/// Returns the first balanced `{...}` span in `body`, skipping braces inside
/// JSON strings. Code fences and surrounding prose are ignored.
pub fn extract_json_object(body: &str) -> Option<&str> {
    let start = body.find('{')?;
    let bytes = body.as_bytes();
    let (mut depth, mut in_string, mut escaped) = (0usize, false, false);
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&body[start..=i]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Parses the first JSON object of a reply.
pub fn first_object(body: &str) -> Result<Map<String, Value>, ParseError> {
    let span = extract_json_object(body).ok_or_else(|| ParseError::Malformed("no JSON object found".into()))?;
    match serde_json::from_str::<Value>(span) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(ParseError::Malformed("expected a JSON object".into())),
        Err(e) => Err(ParseError::Malformed(e.to_string())),
    }
}

/// Reads `index` as a non-negative integer (a digit string is accepted).
pub fn read_index(map: &Map<String, Value>) -> Result<u64, ParseError> {
    match map.get("index") {
        Some(Value::Number(n)) => n
            .as_u64()
            .ok_or_else(|| ParseError::Malformed(format!("index {n} is not a non-negative integer"))),
        Some(Value::String(s)) => s
            .trim()
            .parse()
            .map_err(|_| ParseError::Malformed(format!("index '{s}' is not an integer"))),
        Some(other) => Err(ParseError::Malformed(format!("index has type {other}"))),
        None => Err(ParseError::Malformed("missing field 'index'".into())),
    }
}

fn read_str<'a>(map: &'a Map<String, Value>, field: &str) -> Result<&'a str, ParseError> {
    match map.get(field) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(ParseError::Malformed(format!("field '{field}' is not a string"))),
        None => Err(ParseError::Malformed(format!("missing field '{field}'"))),
    }
}

fn label_error(field: &'static str, value: &str, allowed: &[&str]) -> ParseError {
    ParseError::Label {
        field,
        value: value.to_string(),
        allowed: allowed.join(", "),
    }
}

/// Validates a classification reply for `stage` against `expected_index`.
pub fn parse_classification(
    body: &str,
    expected_index: u64,
    stage: TemplateId,
) -> Result<ParsedClassification, ParseError> {
    let map = first_object(body)?;
    let index = read_index(&map)?;
    if index != expected_index {
        return Err(ParseError::IndexMismatch {
            expected: expected_index,
            found: index,
        });
    }
    let raw_label = read_str(&map, "classification")?;
    let (classification, needs_reason) = match stage {
        TemplateId::Prescreen => {
            let label: PrescreenLabel = raw_label.parse().map_err(|_| {
                let allowed: Vec<_> = PrescreenLabel::ALL.iter().map(|l| l.as_str()).collect();
                label_error("classification", raw_label, &allowed)
            })?;
            (label.as_str().to_string(), false)
        }
        TemplateId::Stance | TemplateId::Reflect => {
            let label: StanceLabel = raw_label.parse().map_err(|_| {
                let allowed: Vec<_> = StanceLabel::ALL.iter().map(|l| l.as_str()).collect();
                label_error("classification", raw_label, &allowed)
            })?;
            (label.as_str().to_string(), true)
        }
        other => {
            return Err(ParseError::Malformed(format!(
                "stage '{other}' does not produce a classification"
            )))
        }
    };
    let raw_conf = read_str(&map, "confidence")?;
    let confidence: Confidence = raw_conf
        .parse()
        .map_err(|_| label_error("confidence", raw_conf, &["High", "Medium", "Low"]))?;
    let reason = match map.get("reason") {
        Some(Value::String(s)) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Some(Value::String(_)) | Some(Value::Null) | None => None,
        Some(_) => return Err(ParseError::Malformed("field 'reason' is not a string".into())),
    };
    if needs_reason && reason.is_none() {
        return Err(ParseError::Malformed("missing or empty 'reason'".into()));
    }
    Ok(ParsedClassification {
        index,
        classification,
        confidence,
        reason,
    })
}

/// Named theme with a description, as returned by extraction prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamedTheme {
    pub name: String,
    pub description: String,
}

/// Parses `{"themes": [{"name", "description"}, ...]}`.
pub fn parse_theme_list(body: &str) -> Result<Vec<NamedTheme>, ParseError> {
    let map = first_object(body)?;
    let Some(Value::Array(items)) = map.get("themes") else {
        return Err(ParseError::Malformed("missing array 'themes'".into()));
    };
    items
        .iter()
        .map(|item| {
            let obj = item
                .as_object()
                .ok_or_else(|| ParseError::Malformed("theme entry is not an object".into()))?;
            let name = read_str(obj, "name")?.trim().to_string();
            if name.is_empty() {
                return Err(ParseError::Malformed("theme with empty name".into()));
            }
            let description = obj
                .get("description")
                .and_then(Value::as_str)
                .unwrap_or("")
                .trim()
                .to_string();
            Ok(NamedTheme { name, description })
        })
        .collect()
}

/// Parses `{"index": N, "themes": ["A", "B"]}` and checks both names against
/// `allowed` exactly (after trimming). Returns the two names.
pub fn parse_theme_pair(body: &str, expected_index: u64, allowed: &[&str]) -> Result<[String; 2], ParseError> {
    let map = first_object(body)?;
    let index = read_index(&map)?;
    if index != expected_index {
        return Err(ParseError::IndexMismatch {
            expected: expected_index,
            found: index,
        });
    }
    let Some(Value::Array(items)) = map.get("themes") else {
        return Err(ParseError::Malformed("missing array 'themes'".into()));
    };
    let names: Vec<&str> = items
        .iter()
        .map(|v| v.as_str().map(str::trim))
        .collect::<Option<_>>()
        .ok_or_else(|| ParseError::Malformed("theme names must be strings".into()))?;
    if names.len() != 2 {
        return Err(ParseError::Malformed(format!(
            "expected exactly 2 themes, got {}",
            names.len()
        )));
    }
    if names[0] == names[1] {
        return Err(ParseError::Malformed("the two themes must differ".into()));
    }
    for name in &names {
        if !allowed.contains(name) {
            return Err(label_error("theme", name, allowed));
        }
    }
    Ok([names[0].to_string(), names[1].to_string()])
}

/// Parses `{"text": "..."}`.
pub fn parse_text(body: &str) -> Result<String, ParseError> {
    let map = first_object(body)?;
    let text = read_str(&map, "text")?.trim().to_string();
    if text.is_empty() {
        return Err(ParseError::Malformed("empty 'text'".into()));
    }
    Ok(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const PAPER_EXAMPLE: &str =
        r#"{"index":700,"classification":"Potentially Related to CLD/PTLDS","confidence":"High"}"#;

    #[test]
    fn prescreen_example_parses() {
        let p = parse_classification(PAPER_EXAMPLE, 700, TemplateId::Prescreen).unwrap();
        assert_eq!(p.index, 700);
        assert_eq!(p.prescreen_label(), Some(PrescreenLabel::PotentiallyRelated));
        assert_eq!(p.confidence, Confidence::High);
        assert_eq!(p.reason, None);
    }

    #[test]
    fn index_mismatch() {
        assert_eq!(
            parse_classification(PAPER_EXAMPLE, 701, TemplateId::Prescreen),
            Err(ParseError::IndexMismatch {
                expected: 701,
                found: 700
            })
        );
    }

    #[test]
    fn label_outside_the_set() {
        let body = r#"{"index":700,"classification":"Maybe Related","confidence":"High"}"#;
        let err = parse_classification(body, 700, TemplateId::Prescreen).unwrap_err();
        assert!(matches!(
            err,
            ParseError::Label {
                field: "classification",
                ..
            }
        ));
        assert!(err.is_retryable());
    }

    #[test]
    fn code_fences_and_prose_are_tolerated() {
        let body = "Here you go:\n```json\n{\"index\": 3, \"classification\": \"Neutral\", \
                    \"confidence\": \"Low\", \"reason\": \"Balanced {view}.\"}\n```\n";
        let p = parse_classification(body, 3, TemplateId::Stance).unwrap();
        assert_eq!(p.stance_label(), Some(StanceLabel::Neutral));
        assert_eq!(p.reason.as_deref(), Some("Balanced {view}."));
    }

    #[test]
    fn stance_requires_reason() {
        let body = r#"{"index":3,"classification":"Neutral","confidence":"Low","reason":"  "}"#;
        assert!(matches!(
            parse_classification(body, 3, TemplateId::Stance),
            Err(ParseError::Malformed(_))
        ));
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(
            parse_classification("{\"index\": 3,", 3, TemplateId::Stance),
            Err(ParseError::Malformed(_))
        ));
        assert!(matches!(
            parse_classification("no json here", 3, TemplateId::Stance),
            Err(ParseError::Malformed(_))
        ));
    }

    #[test]
    fn theme_pair_validation() {
        let allowed = ["A", "B", "C"];
        assert_eq!(
            parse_theme_pair(r#"{"index":1,"themes":["A","C"]}"#, 1, &allowed).unwrap(),
            ["A".to_string(), "C".to_string()]
        );
        assert!(parse_theme_pair(r#"{"index":1,"themes":["A"]}"#, 1, &allowed).is_err());
        assert!(parse_theme_pair(r#"{"index":1,"themes":["A","A"]}"#, 1, &allowed).is_err());
        assert!(matches!(
            parse_theme_pair(r#"{"index":1,"themes":["A","c"]}"#, 1, &allowed),
            Err(ParseError::Label { .. })
        ));
    }

    proptest! {
        #[test]
        fn parser_is_total(body in ".*", idx in 0u64..1000) {
            for stage in [TemplateId::Prescreen, TemplateId::Stance, TemplateId::Reflect] {
                match parse_classification(&body, idx, stage) {
                    Ok(p) => {
                        prop_assert_eq!(p.index, idx);
                        prop_assert!(stage == TemplateId::Prescreen || p.reason.is_some());
                    }
                    Err(e) => prop_assert!(e.is_retryable()),
                }
            }
        }

        #[test]
        fn parser_accepts_well_formed_replies(
            idx in 0u64..100_000,
            label in prop::sample::select(StanceLabel::ALL.to_vec()),
            conf in prop::sample::select(Confidence::ALL.to_vec()),
            reason in "[a-zA-Z ]{1,40}[a-z]",
        ) {
            let body = serde_json::json!({
                "index": idx, "classification": label.as_str(),
                "confidence": conf.as_str(), "reason": reason,
            }).to_string();
            let p = parse_classification(&body, idx, TemplateId::Stance).unwrap();
            prop_assert_eq!(p.stance_label(), Some(label));
            prop_assert_eq!(p.confidence, conf);
        }
    }
}
