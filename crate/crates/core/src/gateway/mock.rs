//! Deterministic offline provider.
//!
//! The reply is a pure function of the prompt text and the seed:
//!
//! * `[[FORCE:<label>|<confidence>]]` inside the abstract pins the
//!   classification (confidence defaults to `Medium`). In the prescreen stage a
//!   stance label maps onto its prescreen counterpart.
//! * `[[FORCE-REFLECT:<label>|<confidence>]]` pins only the self-reflection
//!   reply, so tests can script a revision.
//! * `[[FORCE:<theme>;<theme>]]` pins the two themes returned by theme
//!   labelling.
//! * Without a token the label is drawn uniformly from the stage's label set
//!   by hashing the seed and the abstract, with confidence `Medium`. Stance and
//!   reflection share the hash, so an unforced reflection confirms the
//!   original label.

use serde_json::json;

use super::provider::{Provider, ProviderError, ProviderReply, Usage};
use super::templates::{TemplateId, INPUT_HEADER, PREVIOUS_ASSESSMENT_HEADER, THEME_LIST_HEADER};
use super::ModelConfig;
use crate::labels::{Confidence, PrescreenLabel, StanceLabel};
use crate::themes::ThemeTaxonomy;

#[derive(Debug, Clone, Copy, Default)]
pub struct MockProvider {
    pub seed: u64,
}

impl MockProvider {
    pub fn new(seed: u64) -> Self {
        MockProvider { seed }
    }

    fn hash(&self, family: &str, text: &str) -> u64 {
        let digest = crate::sha256_hex(format!("{}\u{1f}{family}\u{1f}{text}", self.seed));
        u64::from_str_radix(&digest[..16], 16).expect("hex digest")
    }

    /// Produces the reply body for `prompt`.
    pub fn respond(&self, prompt: &str) -> String {
        let prompt = prompt.split("\n\nCORRECTION:").next().unwrap_or(prompt);
        match TemplateId::detect(prompt) {
            Some(TemplateId::Prescreen) => self.prescreen(prompt),
            Some(stage @ (TemplateId::Stance | TemplateId::Reflect)) => self.stance(prompt, stage),
            Some(TemplateId::ThemeLabel) => self.theme_pair(prompt),
            Some(TemplateId::ThemeExtract | TemplateId::ThemeReconcile) => {
                let themes: Vec<_> = ThemeTaxonomy::bundled()
                    .themes
                    .iter()
                    .map(|t| json!({"name": t.name, "description": t.description}))
                    .collect();
                json!({ "themes": themes }).to_string()
            }
            Some(TemplateId::Paraphrase) => {
                let text = prompt
                    .split_once("JUSTIFICATION:\n")
                    .map(|(_, t)| t.trim())
                    .unwrap_or("");
                json!({ "text": format!("Put differently: {text}") }).to_string()
            }
            None => json!({"error": "unrecognised prompt"}).to_string(),
        }
    }

    fn prescreen(&self, prompt: &str) -> String {
        let input = InputBlock::parse(prompt);
        let (label, confidence) = match input.forced("[[FORCE:").and_then(parse_forced_stance) {
            Some((stance, conf)) => (
                match stance {
                    StanceLabel::AnimalStudy => PrescreenLabel::AnimalStudy,
                    StanceLabel::Unrelated => PrescreenLabel::DefinitelyUnrelated,
                    _ => PrescreenLabel::PotentiallyRelated,
                },
                conf,
            ),
            None => match input
                .forced("[[FORCE:")
                .and_then(|t| parse_forced::<PrescreenLabel>(&t))
            {
                Some(pinned) => pinned,
                None => {
                    let all = PrescreenLabel::ALL;
                    let h = self.hash("prescreen", input.abstract_text);
                    (all[(h % all.len() as u64) as usize], Confidence::Medium)
                }
            },
        };
        json!({
            "index": input.index,
            "classification": label.as_str(),
            "confidence": confidence.as_str(),
        })
        .to_string()
    }

    fn stance(&self, prompt: &str, stage: TemplateId) -> String {
        let input = InputBlock::parse(prompt);
        let reflect_pin = (stage == TemplateId::Reflect)
            .then(|| input.forced("[[FORCE-REFLECT:").and_then(parse_forced_stance))
            .flatten();
        let (label, confidence) = reflect_pin
            .or_else(|| input.forced("[[FORCE:").and_then(parse_forced_stance))
            .unwrap_or_else(|| {
                let all = StanceLabel::ALL;
                let h = self.hash("stance", input.abstract_text);
                (all[(h % all.len() as u64) as usize], Confidence::Medium)
            });
        let tag = format!("{:08x}", self.hash("reason", input.abstract_text) as u32);
        let reason = if stage == TemplateId::Reflect {
            format!(
                "Upon reevaluation, the earlier reading of the abstract was checked against the \
                 definitions (mock assessment {tag}). The evidence and framing were weighed again \
                 before settling on this outcome."
            )
        } else {
            format!(
                "The abstract's framing of persistent symptoms was weighed against the debate \
                 definitions (mock assessment {tag}). Explicit statements and implied positions \
                 were both considered."
            )
        };
        json!({
            "index": input.index,
            "classification": label.as_str(),
            "confidence": confidence.as_str(),
            "reason": reason,
        })
        .to_string()
    }

    fn theme_pair(&self, prompt: &str) -> String {
        let input = InputBlock::parse(prompt);
        let forced = input.forced_all("[[FORCE:").into_iter().find(|t| t.contains(';'));
        let themes: Vec<String> = match forced {
            Some(token) => token
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
            None => {
                let names = theme_names(prompt);
                if names.len() < 2 {
                    names
                } else {
                    let h = self.hash("themes", input.abstract_text);
                    let n = names.len() as u64;
                    let first = (h % n) as usize;
                    let second = (first + 1 + ((h / n) % (n - 1)) as usize) % names.len();
                    vec![names[first].clone(), names[second].clone()]
                }
            }
        };
        json!({ "index": input.index, "themes": themes }).to_string()
    }
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn send(&self, prompt: &str, _config: &ModelConfig) -> Result<ProviderReply, ProviderError> {
        let body = self.respond(prompt);
        Ok(ProviderReply {
            usage: Usage {
                prompt_tokens: prompt.split_whitespace().count() as u64,
                completion_tokens: body.split_whitespace().count() as u64,
            },
            body,
        })
    }

    fn rate_limited(&self) -> bool {
        false
    }
}

/// The request-specific tail of a classification or labelling prompt.
struct InputBlock<'a> {
    index: u64,
    abstract_text: &'a str,
    /// Abstract plus justification; where control tokens are looked up.
    searchable: &'a str,
}

impl<'a> InputBlock<'a> {
    fn parse(prompt: &'a str) -> Self {
        let block = prompt
            .rfind(INPUT_HEADER)
            .map(|i| &prompt[i + INPUT_HEADER.len()..])
            .unwrap_or(prompt);
        let block = block.split(PREVIOUS_ASSESSMENT_HEADER).next().unwrap_or(block);
        let index = block
            .lines()
            .find_map(|l| l.strip_prefix("Index: "))
            .and_then(|s| s.trim().parse().ok())
            .unwrap_or(0);
        let searchable = block.split_once("\nAbstract: ").map(|(_, rest)| rest).unwrap_or(block);
        let abstract_text = searchable
            .split("\nJustification: ")
            .next()
            .unwrap_or(searchable)
            .trim();
        InputBlock {
            index,
            abstract_text,
            searchable,
        }
    }

    fn forced_all(&self, opener: &str) -> Vec<String> {
        let mut found = Vec::new();
        let mut rest = self.searchable;
        while let Some(start) = rest.find(opener) {
            let after = &rest[start + opener.len()..];
            match after.find("]]") {
                Some(end) => {
                    found.push(after[..end].to_string());
                    rest = &after[end + 2..];
                }
                None => break,
            }
        }
        found
    }

    fn forced(&self, opener: &str) -> Option<String> {
        self.forced_all(opener).into_iter().find(|t| !t.contains(';'))
    }
}

fn parse_forced<L: std::str::FromStr>(token: &str) -> Option<(L, Confidence)> {
    let (label, conf) = match token.split_once('|') {
        Some((l, c)) => (l, c.parse().ok()?),
        None => (token, Confidence::Medium),
    };
    Some((label.trim().parse().ok()?, conf))
}

fn parse_forced_stance(token: String) -> Option<(StanceLabel, Confidence)> {
    parse_forced::<StanceLabel>(&token)
}

/// Theme names listed under the `THEMES:` header as `- <name>` lines.
fn theme_names(prompt: &str) -> Vec<String> {
    let Some((_, rest)) = prompt.split_once(&format!("{THEME_LIST_HEADER}\n")) else {
        return Vec::new();
    };
    rest.lines()
        .take_while(|l| !l.trim().is_empty())
        .filter_map(|l| l.strip_prefix("- "))
        .map(|s| s.trim().to_string())
        .collect()
}
