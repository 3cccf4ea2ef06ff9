//! The four LLM-backed stages: segmentation, entity abstraction, QUD
//! generation and QUD answering, each with parsing, validation and repair.

pub mod parse;

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    normalize_whitespace, validate_segmentation, AbstractionLevel, AnswerSet, Document, DocumentMeta, Qud,
    Segmentation,
};
use crate::llm::{render, render_prompt, BackendConfig, Gateway, TemplateId, TranscriptEntry};
use crate::{Error, Result};

/// Re-prompts allowed after the first attempt at every stage.
pub const MAX_REPROMPTS: u32 = 1;

/// Upper bound on QUDs kept per segment.
pub const MAX_QUDS_PER_SEGMENT: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractedSegment {
    pub document_id: String,
    pub segment_index: usize,
    pub abstract_text: String,
}

/// Z_q: target segments holding at least one answer sentence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsweringSegments {
    pub qud_id: String,
    pub target_document_id: String,
    pub segment_indices: BTreeSet<usize>,
}

/// A stage result with the LLM exchanges that produced it and any repairs,
/// truncations or dropped answers worth auditing.
#[derive(Debug, Clone)]
pub struct Staged<T> {
    pub value: T,
    pub transcript: Vec<TranscriptEntry>,
    pub notes: Vec<String>,
}

impl<T> Staged<T> {
    fn new(value: T, transcript: Vec<TranscriptEntry>, notes: Vec<String>) -> Self {
        Self {
            value,
            transcript,
            notes,
        }
    }
}

fn parse_error(stage: &'static str, message: impl Into<String>, transcript: &[TranscriptEntry]) -> Error {
    Error::Parse {
        stage,
        message: message.into(),
        transcript: transcript.iter().map(|t| t.response.clone()).collect(),
    }
}

fn note(notes: &mut Vec<String>, message: String) {
    log::warn!("{message}");
    notes.push(message);
}

/// Splits a document into topical segments. An invalid partition triggers one
/// re-prompt, then a fallback to the source paragraphs.
pub fn segment_document(gw: &Gateway, cfg: &BackendConfig, doc: &Document) -> Result<Staged<Segmentation>> {
    if doc.is_empty() {
        return Err(Error::EmptyInput("document has no sentences"));
    }
    if doc.len() == 1 {
        let seg = Segmentation::from_groups(&doc.id, vec![vec![1]]);
        return Ok(Staged::new(seg, Vec::new(), Vec::new()));
    }
    let spec = render(TemplateId::Segmentation, &[("document", &doc.numbered_text())])?;
    let mut transcript = Vec::new();
    let mut notes = Vec::new();
    for attempt in 0..=MAX_REPROMPTS {
        let entry = gw.chat(&spec, cfg, attempt)?;
        let parsed = parse::parse_segmentation(&entry.response);
        transcript.push(entry);
        match parsed {
            Some(groups) => {
                let seg = Segmentation::from_groups(&doc.id, groups);
                let report = validate_segmentation(doc, &seg);
                if report.is_ok() {
                    return Ok(Staged::new(seg, transcript, notes));
                }
                let problems: Vec<String> = report.violations.iter().map(ToString::to_string).collect();
                note(
                    &mut notes,
                    format!(
                        "{}: segmentation attempt {attempt} invalid: {}",
                        doc.id,
                        problems.join("; ")
                    ),
                );
            }
            None => note(
                &mut notes,
                format!("{}: segmentation attempt {attempt} unparseable", doc.id),
            ),
        }
    }
    match doc.paragraph_groups() {
        Some(groups) => {
            note(
                &mut notes,
                format!("{}: fell back to source paragraph boundaries", doc.id),
            );
            Ok(Staged::new(
                Segmentation::from_groups(&doc.id, groups),
                transcript,
                notes,
            ))
        }
        None => Err(parse_error(
            "segmentation",
            format!(
                "{}: no valid partition and no paragraph structure to fall back on",
                doc.id
            ),
            &transcript,
        )),
    }
}

/// Rewrites every segment without names, places and specifics. One abstract
/// text per segment, in segment order.
pub fn abstract_segments(
    gw: &Gateway,
    cfg: &BackendConfig,
    doc: &Document,
    seg: &Segmentation,
) -> Result<Staged<Vec<AbstractedSegment>>> {
    let report = validate_segmentation(doc, seg);
    if !report.is_ok() {
        return Err(Error::InvalidInput(format!(
            "segmentation of `{}` is invalid: {}",
            doc.id, report.violations[0]
        )));
    }
    let paragraphs = seg
        .segments
        .iter()
        .map(|s| {
            format!(
                "Paragraph {}: {}",
                s.segment_index,
                doc.span_text(&s.sentence_indices)
            )
        })
        .collect::<Vec<_>>()
        .join("\n");
    let spec = render(TemplateId::Abstraction, &[("paragraphs", &paragraphs)])?;
    let mut transcript = Vec::new();
    let mut notes = Vec::new();
    for attempt in 0..=MAX_REPROMPTS {
        let entry = gw.chat(&spec, cfg, attempt)?;
        let parsed = parse::parse_abstractions(&entry.response);
        transcript.push(entry);
        match parsed {
            Some(texts) if texts.len() == seg.len() && texts.iter().all(|t| !t.is_empty()) => {
                let value = seg
                    .segments
                    .iter()
                    .zip(texts)
                    .map(|(s, abstract_text)| AbstractedSegment {
                        document_id: doc.id.clone(),
                        segment_index: s.segment_index,
                        abstract_text,
                    })
                    .collect();
                return Ok(Staged::new(value, transcript, notes));
            }
            Some(texts) => note(
                &mut notes,
                format!(
                    "{}: abstraction attempt {attempt} returned {} paragraphs for {} segments",
                    doc.id,
                    texts.len(),
                    seg.len()
                ),
            ),
            None => note(
                &mut notes,
                format!("{}: abstraction attempt {attempt} empty", doc.id),
            ),
        }
    }
    Err(parse_error(
        "abstraction",
        format!("{}: expected {} abstracted paragraphs", doc.id, seg.len()),
        &transcript,
    ))
}

/// Generates 1–2 QUDs for one segment text (abstracted text at the abstract
/// level, raw segment text at the specific level).
pub fn generate_quds(
    gw: &Gateway,
    cfg: &BackendConfig,
    document_id: &str,
    segment_index: usize,
    text: &str,
    level: AbstractionLevel,
) -> Result<Staged<Vec<Qud>>> {
    if text.trim().is_empty() {
        return Err(Error::EmptyInput("segment text for QUD generation"));
    }
    let spec = render(TemplateId::QudGen, &[("paragraph", text)])?;
    let mut transcript = Vec::new();
    let mut notes = Vec::new();
    for attempt in 0..=MAX_REPROMPTS {
        let entry = gw.chat(&spec, cfg, attempt)?;
        let mut questions = parse::parse_questions(&entry.response);
        transcript.push(entry);
        if questions.is_empty() {
            note(
                &mut notes,
                format!("{document_id} segment {segment_index}: no questions in attempt {attempt}"),
            );
            continue;
        }
        if questions.len() > MAX_QUDS_PER_SEGMENT {
            note(
                &mut notes,
                format!(
                    "{document_id} segment {segment_index}: truncated {} questions to {MAX_QUDS_PER_SEGMENT}",
                    questions.len()
                ),
            );
            questions.truncate(MAX_QUDS_PER_SEGMENT);
        }
        let quds = questions
            .into_iter()
            .enumerate()
            .map(|(k, question)| Qud {
                id: Qud::make_id(document_id, level, segment_index, k + 1),
                source_document_id: document_id.to_string(),
                source_segment_index: segment_index,
                question,
                abstraction_level: level,
            })
            .collect();
        return Ok(Staged::new(quds, transcript, notes));
    }
    Err(parse_error(
        "qud_gen",
        format!("{document_id} segment {segment_index}: no question found"),
        &transcript,
    ))
}

/// Runs [`generate_quds`] over every segment of a document in the gateway's
/// worker pool. `abstracts` is required at the abstract level.
pub fn generate_document_quds(
    gw: &Gateway,
    cfg: &BackendConfig,
    doc: &Document,
    seg: &Segmentation,
    abstracts: Option<&[AbstractedSegment]>,
    level: AbstractionLevel,
) -> Result<Staged<Vec<Qud>>> {
    let texts: Vec<(usize, String)> = match level {
        AbstractionLevel::Specific => seg
            .segments
            .iter()
            .map(|s| (s.segment_index, doc.span_text(&s.sentence_indices)))
            .collect(),
        AbstractionLevel::Abstract => {
            let abstracts = abstracts.ok_or_else(|| {
                Error::InvalidInput(format!(
                    "abstract-level QUDs for `{}` need abstracted segments",
                    doc.id
                ))
            })?;
            if abstracts.len() != seg.len() {
                return Err(Error::InvalidInput(format!(
                    "`{}` has {} segments but {} abstracted segments",
                    doc.id,
                    seg.len(),
                    abstracts.len()
                )));
            }
            abstracts
                .iter()
                .map(|a| (a.segment_index, a.abstract_text.clone()))
                .collect()
        }
    };
    let results: Vec<Staged<Vec<Qud>>> = gw.install(|| {
        texts
            .par_iter()
            .map(|(index, text)| generate_quds(gw, cfg, &doc.id, *index, text, level))
            .collect::<Result<_>>()
    })?;
    let mut out = Staged::new(Vec::new(), Vec::new(), Vec::new());
    for r in results {
        out.value.extend(r.value);
        out.transcript.extend(r.transcript);
        out.notes.extend(r.notes);
    }
    Ok(out)
}

/// True when a quoted answer sentence is the source sentence, ignoring
/// whitespace and one pair of wrapping quotes.
fn sentence_matches(returned: &str, original: &str) -> bool {
    let returned = normalize_whitespace(returned);
    let original = normalize_whitespace(original);
    if returned == original {
        return true;
    }
    let pairs = [('"', '"'), ('“', '”'), ('\'', '\''), ('‘', '’')];
    pairs.iter().any(|&(open, close)| {
        returned
            .strip_prefix(open)
            .and_then(|r| r.strip_suffix(close))
            .is_some_and(|inner| inner.trim() == original)
    })
}

/// Answers every QUD against the whole target document in one request.
/// Indices outside the document, or whose quoted text differs from the
/// source sentence, are dropped and noted.
pub fn answer_quds(
    gw: &Gateway,
    cfg: &BackendConfig,
    quds: &[Qud],
    target: &Document,
) -> Result<Staged<Vec<AnswerSet>>> {
    if quds.is_empty() {
        return Ok(Staged::new(Vec::new(), Vec::new(), Vec::new()));
    }
    if target.is_empty() {
        return Err(Error::EmptyInput("target document has no sentences"));
    }
    let questions: Vec<String> = quds.iter().map(|q| q.question.clone()).collect();
    let listed = questions
        .iter()
        .enumerate()
        .map(|(k, q)| format!("{}. {q}", k + 1))
        .collect::<Vec<_>>()
        .join("\n");
    let slots = [
        ("document".to_string(), target.numbered_text()),
        ("questions".to_string(), listed),
    ]
    .into_iter()
    .collect();
    let spec = render_prompt(TemplateId::QudAnswer, &slots)?;
    let mut transcript = Vec::new();
    let mut notes = Vec::new();
    for attempt in 0..=MAX_REPROMPTS {
        let entry = gw.chat(&spec, cfg, attempt)?;
        let parsed = parse::parse_answers(&entry.response, &questions);
        transcript.push(entry);
        let Some(parsed) = parsed else {
            note(
                &mut notes,
                format!("answers against {}: attempt {attempt} unparseable", target.id),
            );
            continue;
        };
        let mut sets = Vec::with_capacity(quds.len());
        for (k, qud) in quds.iter().enumerate() {
            let mut indices = BTreeSet::new();
            match parsed.get(&k) {
                None => note(
                    &mut notes,
                    format!(
                        "{} vs {}: question missing from response, treated as unanswerable",
                        qud.id, target.id
                    ),
                ),
                Some(raw) => {
                    for answer in raw {
                        let Some(sentence) = target.sentence(answer.index) else {
                            note(
                                &mut notes,
                                format!(
                                    "{} vs {}: dropped index {} (document has {} sentences)",
                                    qud.id,
                                    target.id,
                                    answer.index,
                                    target.len()
                                ),
                            );
                            continue;
                        };
                        if let Some(text) = &answer.text {
                            if !sentence_matches(text, &sentence.text) {
                                note(
                                    &mut notes,
                                    format!(
                                        "{} vs {}: dropped index {}: returned text differs from the source sentence",
                                        qud.id, target.id, answer.index
                                    ),
                                );
                                continue;
                            }
                        }
                        indices.insert(answer.index);
                    }
                }
            }
            sets.push(AnswerSet {
                qud_id: qud.id.clone(),
                target_document_id: target.id.clone(),
                sentence_indices: indices,
            });
        }
        return Ok(Staged::new(sets, transcript, notes));
    }
    Err(parse_error(
        "qud_answer",
        format!("answers against {}", target.id),
        &transcript,
    ))
}

/// Z_q for one answer set: the segments that contain any of its sentences.
pub fn answering_segments(answers: &AnswerSet, seg: &Segmentation) -> AnsweringSegments {
    let owner = seg.sentence_to_segment();
    AnsweringSegments {
        qud_id: answers.qud_id.clone(),
        target_document_id: answers.target_document_id.clone(),
        segment_indices: answers
            .sentence_indices
            .iter()
            .filter_map(|i| owner.get(i).copied())
            .collect(),
    }
}

/// Generates a new document from one of the generation templates.
pub fn generate_document(
    gw: &Gateway,
    cfg: &BackendConfig,
    template: TemplateId,
    slots: &[(&str, &str)],
    id: &str,
    meta: DocumentMeta,
) -> Result<Staged<Document>> {
    if !matches!(
        template,
        TemplateId::DocGenObituary | TemplateId::DocGenCreative | TemplateId::DocGenSuri
    ) {
        return Err(Error::InvalidInput(format!(
            "`{template}` is not a generation template"
        )));
    }
    let spec = render(template, slots)?;
    let entry = gw.chat(&spec, cfg, 0)?;
    let doc = Document::from_text(id, entry.response.trim(), meta)?;
    Ok(Staged::new(doc, vec![entry], Vec::new()))
}
