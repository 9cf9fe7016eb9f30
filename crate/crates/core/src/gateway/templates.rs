//! Prompt templates. Bodies are fixed text with `{{name}}` placeholders and
//! render byte-identically for identical contexts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TemplateError {
    #[error("template '{template}' needs placeholder '{name}' but the context has no value for it")]
    MissingPlaceholder { template: TemplateId, name: String },
    #[error("template '{template}' has an unterminated placeholder at byte {offset}")]
    Unterminated { template: TemplateId, offset: usize },
    #[error("unknown template id '{0}'")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Prescreen,
    Stance,
    Reflect,
    ThemeExtract,
    ThemeReconcile,
    ThemeLabel,
    Paraphrase,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::Prescreen,
        TemplateId::Stance,
        TemplateId::Reflect,
        TemplateId::ThemeExtract,
        TemplateId::ThemeReconcile,
        TemplateId::ThemeLabel,
        TemplateId::Paraphrase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Prescreen => "prescreen",
            TemplateId::Stance => "stance",
            TemplateId::Reflect => "reflect",
            TemplateId::ThemeExtract => "theme_extract",
            TemplateId::ThemeReconcile => "theme_reconcile",
            TemplateId::ThemeLabel => "theme_label",
            TemplateId::Paraphrase => "paraphrase",
        }
    }

    /// Identifies which template produced `prompt` from its marker line.
    pub fn detect(prompt: &str) -> Option<TemplateId> {
        // Reflect embeds the stance body, so it is checked first.
        [
            (REFLECT_MARKER, TemplateId::Reflect),
            (PRESCREEN_MARKER, TemplateId::Prescreen),
            (STANCE_MARKER, TemplateId::Stance),
            (THEME_LABEL_MARKER, TemplateId::ThemeLabel),
            (THEME_RECONCILE_MARKER, TemplateId::ThemeReconcile),
            (THEME_EXTRACT_MARKER, TemplateId::ThemeExtract),
            (PARAPHRASE_MARKER, TemplateId::Paraphrase),
        ]
        .into_iter()
        .find(|(marker, _)| prompt.contains(marker))
        .map(|(_, id)| id)
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| TemplateError::UnknownTemplate(s.to_string()))
    }
}

/// Rendered prompt text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PromptText(pub String);

impl PromptText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn hash(&self) -> String {
        crate::sha256_hex(&self.0)
    }

    /// Appends a correction after an unusable reply.
    pub fn with_correction(&self, problem: &str, extra: &str) -> PromptText {
        PromptText(format!(
            "{}\n\nCORRECTION: your previous reply could not be used ({problem}). {extra}\
             Reply again with only the JSON object described above.",
            self.0
        ))
    }
}

impl fmt::Display for PromptText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Placeholder values keyed by name.
pub type Context = BTreeMap<String, String>;

/// Builds a [`Context`] from `(name, value)` pairs.
pub fn context<I, K, V>(pairs: I) -> Context
where
    I: IntoIterator<Item = (K, V)>,
    K: Into<String>,
    V: Into<String>,
{
    pairs.into_iter().map(|(k, v)| (k.into(), v.into())).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub body: &'static str,
    pub fewshot_block: Option<&'static str>,
}

impl PromptTemplate {
    pub fn get(id: TemplateId) -> PromptTemplate {
        let (body, fewshot_block) = match id {
            TemplateId::Prescreen => (PRESCREEN_BODY, None),
            TemplateId::Stance => (STANCE_BODY, Some(STANCE_FEWSHOT)),
            TemplateId::Reflect => (REFLECT_BODY, Some(STANCE_FEWSHOT)),
            TemplateId::ThemeExtract => (THEME_EXTRACT_BODY, None),
            TemplateId::ThemeReconcile => (THEME_RECONCILE_BODY, None),
            TemplateId::ThemeLabel => (THEME_LABEL_BODY, None),
            TemplateId::Paraphrase => (PARAPHRASE_BODY, None),
        };
        PromptTemplate {
            id,
            body,
            fewshot_block,
        }
    }

    /// Names of every placeholder in the body, in order of first appearance.
    pub fn placeholders(&self) -> Vec<&'static str> {
        let mut names = Vec::new();
        let mut rest = self.body;
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            let Some(end) = after.find("}}") else { break };
            let name = &after[..end];
            if !names.contains(&name) {
                names.push(name);
            }
            rest = &after[end + 2..];
        }
        names
    }

    pub fn render(&self, ctx: &Context) -> Result<PromptText, TemplateError> {
        let mut out = String::with_capacity(self.body.len() + 2048);
        let mut rest = self.body;
        let mut offset = 0;
        while let Some(start) = rest.find("{{") {
            out.push_str(&rest[..start]);
            let after = &rest[start + 2..];
            let end = after.find("}}").ok_or(TemplateError::Unterminated {
                template: self.id,
                offset: offset + start,
            })?;
            let name = &after[..end];
            let value = match (name, self.fewshot_block) {
                ("fewshot", Some(block)) => block,
                _ => ctx
                    .get(name)
                    .map(String::as_str)
                    .ok_or_else(|| TemplateError::MissingPlaceholder {
                        template: self.id,
                        name: name.to_string(),
                    })?,
            };
            out.push_str(value);
            let consumed = start + 2 + end + 2;
            offset += consumed;
            rest = &rest[consumed..];
        }
        out.push_str(rest);
        Ok(PromptText(out))
    }
}

/// Renders `id` against `ctx`.
pub fn render_prompt(id: TemplateId, ctx: &Context) -> Result<PromptText, TemplateError> {
    PromptTemplate::get(id).render(ctx)
}

/// Line that opens the per-request input block in classification prompts.
pub const INPUT_HEADER: &str = "\nABSTRACT:\n";
/// Header of the prior-assessment block in the reflection prompt.
pub const PREVIOUS_ASSESSMENT_HEADER: &str = "Your previous assessment:";
/// Header of the theme list in the theme-labelling prompt.
pub const THEME_LIST_HEADER: &str = "THEMES:";

const PRESCREEN_MARKER: &str = "Each abstract should be categorised into one of the following three categories:";
const STANCE_MARKER: &str = "- `reason`: Provide a 2-3 sentence justification for your classification.";
const REFLECT_MARKER: &str = "Your previous assessment:\nClassification:";
const THEME_EXTRACT_MARKER: &str = "Identify half a dozen or more overarching themes";
const THEME_RECONCILE_MARKER: &str = "Consolidate the candidate theme sets below";
const THEME_LABEL_MARKER: &str = "Assign the abstract to the two most suitable themes";
const PARAPHRASE_MARKER: &str = "Rephrase the justification below";

const PRESCREEN_BODY: &str = r#"You are a world-leading expert in medical literature, specialising in Lyme disease and the controversies
surrounding chronic Lyme disease (CLD) and post-treatment Lyme disease syndrome (PTLDS).

Your task is to evaluate a single scientific paper abstract at a time to determine if it has 
relevance to either CLD or PTLDS for further processing.

Definitions:
- Chronic Lyme Disease (CLD): A contested condition wherein some believe symptoms result from an ongoing 
Borrelia burgdorferi infection is often cited as requiring extended antibiotic therapy.
- Post-Treatment Lyme Disease Syndrome (PTLDS): Refers to persistent symptoms (e.g., fatigue, pain, 
cognitive issues) following standard Lyme disease treatment, generally understood not to involve active
infection.

Categories:
Each abstract should be categorised into one of the following three categories:

1. Potentially Related to CLD/PTLDS:
   - Select this category if the paper involves human studies and contains explicit or implicit references, 
   findings   or terminology potentially related to CLD or PTLDS. This includes abstracts where the 
   connection to CLD or PTLDS is indirect, uncertain, or requires additional processing to 
   determine relevance.

2. Definitely Unrelated:
   - Select this category if the study has no relevance to CLD or PTLDS in human subjects. 
   Abstracts discussing other medical conditions and unrelated tick-borne diseases.

3. Animal Study:
   - Select this category if the study is entirely focused on animal subjects with no direct relevance to 
   human cases of CLD or PTLDS.

Input:
For each abstract, you will receive an index number, a paper title, and the abstract text.

JSON Output Structure:
Your output must be a JSON object containing only the evaluation of the current abstract. Each response 
should include the following fields:

- `index`: The index number of the abstract, which MUST match the input.
- `classification`: One of "Potentially Related to CLD/PTLDS," "Definitely Unrelated," or "Animal Study."
- `confidence`: Confidence level in the classification ("High," "Medium," or "Low").

Example Output:
{
  "index": {{index}},
  "classification": "Potentially Related to CLD/PTLDS",
  "confidence": "High"
}

ABSTRACT:
Index: {{index}}
Title: {{title}}
Abstract: {{abstract}}
"#;

macro_rules! stance_core {
    () => {
        r#"
You are a world-leading expert in medical literature analysis and particularly in medical literature, 
specialising in Lyme disease and the debates surrounding chronic Lyme disease (CLD) and post-treatment 
Lyme disease syndrome (PTLDS). Your task is to evaluate a series of scientific paper abstracts related 
to Lyme disease and determine each abstract's stance on PTLDS and CLD. This task requires scientific 
impartiality to minimize any bias in classifying abstracts concerning disputed subjects such as CLD or 
PTLDS. The current literature on this topic is polarised and can be expressed as follows: 

"Some medical experts argue that post-treatment symptoms, experienced by a subset of patients after 
completing standard antibiotic therapy, can be attributed to what they define as Post-Treatment Lyme 
Disease Syndrome (PTLDS). According to some health organisations, these symptoms—ranging from fatigue 
to cognitive impairment—are likely caused by immune responses or tissue damage, rather than persistent 
infection. PTLDS concerns patients who experience persistent symptoms for at least six months after the 
completion of recommended treatment for Lyme disease.

Conversely  , other organisations advocate for the recognition of chronic Lyme disease (CLD), contending 
that ongoing infection or immune dysfunction may be responsible for these symptoms and recommend extended 
antibiotic regimens, pointing to contested evidence of patient improvement. CLD is a broader term that 
encompasses a range of unexplained symptoms that patients attribute to a persistent Lyme disease infection 
that survives recommended treatment.  Both PTLDS and CLD involve persistent symptoms, such as fatigue, 
pain, and neurological issues, and both face with diagnostic difficulties due to nonspecific symptoms 
and lack of clear biomarkers, contributing to ongoing debates in the medical community."

Based on the above context and the debate, your task is to classify each abstract and determine each 
abstract's explicit or implicit stance regarding CLD or PTLDS based on the following classifications:

- Supports PTLDS
- Supports CLD
- Neutral
- Unrelated
- Animal Study

Definitions for Classification: 
1. Supports PTLDS:
   - Attributes persistent symptoms after successful Lyme disease treatment to other factors like 
   immune dysfunction, chronic fatigue syndrome, or depression.
   - Opposes the use of prolonged or repeated antibiotic treatments for PTLDS.
   - Suggests or implies that CLD lacks scientific support.

2. Supports CLD:
   - A contested condition wherein some believe symptoms result from an ongoing or active *Borrelia 
   burgdorferi* infection after standard treatment, often cited as requiring extended antibiotic therapy.
   - Suggests that persistent symptoms may require prolonged or repeated antibiotic treatment.

3. Neutral:
   - Presents balanced arguments without clearly supporting or refuting either PTLDS or CLD.
   - Discusses aspects of Lyme disease that relate to both sides of the PTLDS and CLD debate without 
   taking a clear stance.
   - No clear stance or support or refutation is provided regarding PTLDS or CLD, either explicitly or
   implicitly.

4. Unrelated:
   - The abstract does not mention PTLDS or CLD, or the surrounding debate at all.
   - Focuses on other aspects of Lyme disease, such as acute Lyme disease, vector control, ecological 
   studies, epidemiology, or diagnostic methods without mentioning chronic conditions.
   - References CLD without any explicit or implied previous treatment. 

5. Animal Study:
   - The abstract pertains exclusively to animal models or non-human subjects without direct implications
   for PTLDS or CLD in humans.
   - Does not involve human clinical data or direct conclusions about PTLDS or CLD in humans.
   - If the animal study provides evidence directly relevant to PTLDS or CLD in humans, classify it
   accordingly under "Supports PTLDS", "Supports CLD", or "Neutral".


Additionally, assign a Confidence Level  to each classification you make: High, Medium, or Low, based 
on how confident you are in the given classification.

- High: The chosen classification is indisputably true and cannot possibly be any of the other options.
The abstract contains explicit wording relating to its stance.
- Medium: The chosen classification requires a mix explicit and implicit evidence in the abstract. There
is some degree of certainty, but the classification is inferred rather than explicitly stated. Typically
arises from indirect language, ambiguous terms, or implied support for a stance.
- Low: The classification is uncertain due to lack of clear evidence or conflicting information in the 
abstract, relying more on inference and contextual understanding. Typically occurs when the abstract is
vague, uses ambiguous language, or includes evidence that could be interpreted in multiple ways. Reflects 
significant uncertainty in the classification, but that the chosen classification is more likely than the 
others. 
 
Also, provide a reason    comprising 2-3 sentences for your classification above. Clearly state your 
justification and if the abstract implicitly or explicitly supports PTLDS or CLD in humans. When determining
the abstract's stance, consider both explicit statements and implications of the abstracts given context 
and chosen topic. Look for language that suggests support or opposition even if not directly stated.
Input:
For each abstract, you will receive an index number of the abstract, a paper title, and the abstract text.

JSON Output Structure: 

Your output must be a JSON object containing the following fields:
- `index`: The index number of the abstract, which MUST match the input.
- `classification`: One of "Supports PTLDS", "Supports CLD", "Neutral", "Unrelated", or "Animal Study"
- `confidence`: Confidence level in the classification ("High", "Medium", or "Low").
- `reason`: Provide a 2-3 sentence justification for your classification.

{{fewshot}}

ABSTRACT:
Index: {{index}}
Title: {{title}}
Abstract: {{abstract}}
"#
    };
}

const STANCE_BODY: &str = stance_core!();

const REFLECT_BODY: &str = concat!(
    stance_core!(),
    r#"
Your previous assessment:
Classification: {{prior_label}}
Confidence: {{prior_confidence}}
Reason: {{prior_reason}}

Re-evaluate your previous assessment of this abstract against the definitions above and either confirm
or revise it, with a revised justification. Keep the same JSON output structure, including a confidence
level and a 2-3 sentence reason.
"#
);

/// Worked examples appended to the stance prompt. Written for this tool; each
/// shows one of the three target stances.
pub const STANCE_FEWSHOT: &str = r#"Few-shot examples:

Example abstract 1
Index: 9001
Title: Symptom trajectories after standard therapy for early Lyme disease
Abstract: We followed 212 adults treated with a 21-day course of doxycycline for erythema migrans. At 12 months, 9% reported fatigue or arthralgia, and symptom severity correlated with baseline depression scores and inflammatory markers rather than with any microbiological evidence of infection. A retreatment arm gave no additional benefit over placebo.
Output:
{"index": 9001, "classification": "Supports PTLDS", "confidence": "High", "reason": "The abstract attributes lingering symptoms after completed treatment to immune and psychological factors and finds no evidence of ongoing infection. It also reports that retreatment offers no benefit, which opposes prolonged antibiotic therapy."}

Example abstract 2
Index: 9002
Title: Persistent spirochetes in patients with relapsing symptoms after treatment
Abstract: Tissue samples from 14 patients with relapsing neurological symptoms months after guideline-based antibiotic therapy were examined. Intact Borrelia burgdorferi spirochetes were detected in several samples, and extended combination antibiotic regimens were followed by symptomatic improvement in most patients.
Output:
{"index": 9002, "classification": "Supports CLD", "confidence": "Medium", "reason": "The abstract argues that surviving spirochetes explain symptoms that persist after standard treatment. It presents extended antibiotic regimens as beneficial, although the evidence comes from a small uncontrolled series."}

Example abstract 3
Index: 9003
Title: Reviewing the evidence on persistent symptoms after Lyme disease
Abstract: Persistent symptoms after Lyme disease remain poorly understood. We summarise studies proposing immune-mediated mechanisms alongside reports of bacterial persistence in animal models, and discuss the diagnostic limitations that complicate both lines of research. Further controlled studies are needed.
Output:
{"index": 9003, "classification": "Neutral", "confidence": "High", "reason": "The abstract presents both immune-mediated and persistence explanations without favouring either. It calls for further research rather than endorsing PTLDS or CLD."}
"#;

const THEME_EXTRACT_BODY: &str = r#"You are a world-leading expert in medical literature and qualitative discourse analysis, specialising
in Lyme disease and the debates surrounding chronic Lyme disease (CLD) and post-treatment Lyme disease
syndrome (PTLDS).

Below are {{count}} justification texts. Each one explains why a scientific abstract was classified as
supporting PTLDS, supporting CLD, or neutral in this debate.

Identify half a dozen or more overarching themes that recur across these justifications. Cluster
semantically related arguments and lines of reasoning; do not limit yourself to a predefined number of
themes. Give every theme a short name and a one-sentence description.

JSON Output Structure:
{"themes": [{"name": "<theme name>", "description": "<one sentence>"}]}

JUSTIFICATIONS:
{{justifications}}
"#;

const THEME_RECONCILE_BODY: &str = r#"You are a world-leading expert in medical literature and qualitative discourse analysis, specialising
in Lyme disease and the debates surrounding chronic Lyme disease (CLD) and post-treatment Lyme disease
syndrome (PTLDS).

Consolidate the candidate theme sets below, each produced independently by a different model, into one
thematic structure. Merge themes that describe the same conceptual domain, remove redundancy, and keep
themes mutually exclusive and analytically useful.

JSON Output Structure:
{"themes": [{"name": "<consolidated theme name>", "description": "<one sentence>"}]}

CANDIDATE THEME SETS:
{{candidates}}
"#;

const THEME_LABEL_BODY: &str = r#"You are a world-leading expert in medical literature and qualitative discourse analysis, specialising
in Lyme disease and the debates surrounding chronic Lyme disease (CLD) and post-treatment Lyme disease
syndrome (PTLDS).

Assign the abstract to the two most suitable themes from the list below, using the abstract together with
the justification of its stance classification. Use the theme names exactly as written and choose two
different themes.

THEMES:
{{themes}}

JSON Output Structure:
{"index": {{index}}, "themes": ["<theme name>", "<theme name>"]}

ABSTRACT:
Index: {{index}}
Title: {{title}}
Abstract: {{abstract}}
Justification: {{justification}}
"#;

const PARAPHRASE_BODY: &str = r#"Rephrase the justification below so that it keeps the same classification and meaning but uses
different wording. Keep it to 2-3 sentences.

JSON Output Structure:
{"text": "<rephrased justification>"}

JUSTIFICATION:
{{text}}
"#;

#[cfg(test)]
mod tests {
    use super::*;

    fn abstract_ctx(index: u64) -> Context {
        context([
            ("index", index.to_string()),
            ("title", "A title".to_string()),
            ("abstract", "Some abstract text.".to_string()),
        ])
    }

    #[test]
    fn prescreen_output_block_echoes_index() {
        let p = render_prompt(TemplateId::Prescreen, &abstract_ctx(700)).unwrap();
        assert!(p.as_str().contains("\"index\": 700,"));
        assert!(p.as_str().contains("Index: 700\n"));
        assert_eq!(TemplateId::detect(p.as_str()), Some(TemplateId::Prescreen));
    }

    #[test]
    fn stance_prompt_lists_all_five_categories() {
        let p = render_prompt(TemplateId::Stance, &abstract_ctx(3)).unwrap();
        for label in crate::labels::StanceLabel::ALL {
            assert!(p.as_str().contains(&format!("- {label}\n")), "{label}");
        }
        assert_eq!(TemplateId::detect(p.as_str()), Some(TemplateId::Stance));
    }

    #[test]
    fn stance_fewshot_has_three_examples() {
        let t = PromptTemplate::get(TemplateId::Stance);
        let block = t.fewshot_block.unwrap();
        assert_eq!(block.matches("Example abstract ").count(), 3);
        assert_eq!(block.matches("Output:\n").count(), 3);
    }

    #[test]
    fn reflect_requires_prior_reason() {
        let mut ctx = abstract_ctx(1);
        ctx.insert("prior_label".into(), "Neutral".into());
        ctx.insert("prior_confidence".into(), "Medium".into());
        let err = render_prompt(TemplateId::Reflect, &ctx).unwrap_err();
        assert_eq!(
            err,
            TemplateError::MissingPlaceholder {
                template: TemplateId::Reflect,
                name: "prior_reason".into()
            }
        );
        ctx.insert("prior_reason".into(), "Because.".into());
        let p = render_prompt(TemplateId::Reflect, &ctx).unwrap();
        assert_eq!(TemplateId::detect(p.as_str()), Some(TemplateId::Reflect));
    }

    #[test]
    fn rendering_is_stable_and_does_not_expand_values() {
        let mut ctx = abstract_ctx(5);
        ctx.insert("abstract".into(), "braces {{title}} stay literal".into());
        let a = render_prompt(TemplateId::Stance, &ctx).unwrap();
        let b = render_prompt(TemplateId::Stance, &ctx).unwrap();
        assert_eq!(a, b);
        assert!(a.as_str().contains("braces {{title}} stay literal"));
    }

    #[test]
    fn unknown_template_id() {
        assert!(matches!(
            "summarise".parse::<TemplateId>(),
            Err(TemplateError::UnknownTemplate(_))
        ));
        assert_eq!("theme_label".parse::<TemplateId>(), Ok(TemplateId::ThemeLabel));
    }

    #[test]
    fn every_template_is_detectable() {
        for id in TemplateId::ALL {
            let t = PromptTemplate::get(id);
            let ctx: Context = t
                .placeholders()
                .into_iter()
                .map(|n| (n.to_string(), "1".to_string()))
                .collect();
            let p = t.render(&ctx).unwrap();
            assert_eq!(TemplateId::detect(p.as_str()), Some(id), "{id}");
        }
    }
}
