use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Segmentation,
    Abstraction,
    QudGen,
    QudAnswer,
    Judge,
    DocGenObituary,
    DocGenCreative,
    DocGenSuri,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::Segmentation,
        TemplateId::Abstraction,
        TemplateId::QudGen,
        TemplateId::QudAnswer,
        TemplateId::Judge,
        TemplateId::DocGenObituary,
        TemplateId::DocGenCreative,
        TemplateId::DocGenSuri,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Segmentation => "segmentation",
            TemplateId::Abstraction => "abstraction",
            TemplateId::QudGen => "qud_gen",
            TemplateId::QudAnswer => "qud_answer",
            TemplateId::Judge => "judge",
            TemplateId::DocGenObituary => "doc_gen_obituary",
            TemplateId::DocGenCreative => "doc_gen_creative",
            TemplateId::DocGenSuri => "doc_gen_suri",
        }
    }

    fn template(self) -> (&'static str, &'static str) {
        match self {
            TemplateId::Segmentation => (SEGMENTATION_SYSTEM, "Document: {document}"),
            TemplateId::Abstraction => (ABSTRACTION_SYSTEM, "{paragraphs}"),
            TemplateId::QudGen => (QUD_GEN_SYSTEM, "Paragraph: {paragraph}"),
            TemplateId::QudAnswer => (QUD_ANSWER_SYSTEM, "Document: {document}\nQuestions: {questions}"),
            TemplateId::Judge => (JUDGE_SYSTEM, "Document 1: {doc1}\nDocument 2: {doc2}"),
            TemplateId::DocGenObituary => (
                OBITUARY_SYSTEM,
                "Write an obituary for {person} who died on {date_of_death}.",
            ),
            TemplateId::DocGenCreative => (
                CREATIVE_SYSTEM,
                "Write a story given the following prompt: {writing_prompt}",
            ),
            TemplateId::DocGenSuri => ("", "{suri_prompt}"),
        }
    }

    /// Slot names the user template requires, in order of appearance.
    pub fn slots(self) -> Vec<&'static str> {
        SLOT.captures_iter(self.template().1)
            .map(|c| c.get(1).expect("group").as_str())
            .collect()
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown template `{s}`")))
    }
}

const SEGMENTATION_SYSTEM: &str = "You will be given text with numbered sentences and your task is to redraw the paragraph boundaries such that each chunk is about one atomic topic. Each segment cannot be about multiple topics or about a complex topic. You may not change the text or change the order of the sentences. For each segment, provide the list of sentence numbers that belong to that segment.";

const ABSTRACTION_SYSTEM: &str = "You will be given several numbered paragraphs. Decontextualize each paragraph such that the paragraph's general plot is captured. Names, places, extraneous details and descriptive language should all be abstracted away.";

const QUD_GEN_SYSTEM: &str = "You will be given a paragraph. We are interested in forming unique, high-level, abstract QUDs with minimal details such that when they are answered, we understand the main themes of the paragraph. Details specific to the content should be omitted. QUDs should look like: What were the individual's greatest accomplishments? What legacy did the individual leave behind?. First answer the minimum number of QUD(s) required. Then list the QUDs. Do not use conjunctions in the QUDs.";

const QUD_ANSWER_SYSTEM: &str = "You are an expert reading comprehension agent. You will be given a passage with numbered sentences and a series of questions. For each question, your task is to extract all sentences that directly help answer it. You must return the question and a list of sentence numbers and sentences that answer it. The question may not always be answerable. In that case, return an empty list. Do NOT overgenerate. Do not modify the original text.";

const JUDGE_SYSTEM: &str = "Given two documents, your task is to rate their semantic structure similarity as opposed to content or word-overlap. Focus on the underlying semantic structure present across the entire text, instead of the surface-level features. Rate the similarity on a scale of 0-100.";

const OBITUARY_SYSTEM: &str = "You are a journalist whose expertise is in writing obituaries. Do not include titles, prefaces or extraneous details about the obituary.";

const CREATIVE_SYSTEM: &str = "You are a creative author that writes short-stories. Do not include titles, prefaces or extraneous details about the story.";

static SLOT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([a-z0-9_]+)\}").expect("valid"));

/// A rendered prompt: the system and user messages plus the slot values they
/// were built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub template_id: TemplateId,
    pub system: String,
    pub user: String,
    pub slots: BTreeMap<String, String>,
}

/// Fills the template's slots. Extra slots are ignored; a missing slot is an
/// error naming it.
pub fn render_prompt(template_id: TemplateId, slots: &BTreeMap<String, String>) -> Result<PromptSpec> {
    let (system, user_template) = template_id.template();
    let mut user = String::with_capacity(user_template.len());
    let mut last = 0;
    for caps in SLOT.captures_iter(user_template) {
        let whole = caps.get(0).expect("match");
        let name = &caps[1];
        let value = slots.get(name).ok_or_else(|| Error::MissingSlot {
            template: template_id.to_string(),
            slot: name.to_string(),
        })?;
        user.push_str(&user_template[last..whole.start()]);
        user.push_str(value);
        last = whole.end();
    }
    user.push_str(&user_template[last..]);
    Ok(PromptSpec {
        template_id,
        system: system.to_string(),
        user,
        slots: slots.clone(),
    })
}

/// Convenience wrapper over [`render_prompt`] for literal slot lists.
pub fn render(template_id: TemplateId, slots: &[(&str, &str)]) -> Result<PromptSpec> {
    let map = slots
        .iter()
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    render_prompt(template_id, &map)
}
