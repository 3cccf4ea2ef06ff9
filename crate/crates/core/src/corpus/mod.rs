//! Documents, segmentations, QUDs, answer sets and gold alignments.
//!
//! Sentence and segment indices are 1-based everywhere, matching the numbered
//! sentences shown to the LLM.

mod sentences;
pub mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub(crate) use sentences::split_with_paragraphs;
pub use sentences::{normalize_whitespace, split_sentences};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub index: usize,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Obituary,
    Creative,
    Suri,
}

impl Domain {
    pub const ALL: [Domain; 3] = [Domain::Obituary, Domain::Creative, Domain::Suri];

    pub fn as_str(self) -> &'static str {
        match self {
            Domain::Obituary => "obituary",
            Domain::Creative => "creative",
            Domain::Suri => "suri",
        }
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "obituary" => Ok(Domain::Obituary),
            "creative" => Ok(Domain::Creative),
            "suri" => Ok(Domain::Suri),
            other => Err(Error::InvalidInput(format!("unknown domain `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentMeta {
    /// `human` or the name of the generating model.
    pub author_kind: String,
    pub domain: Domain,
    pub prompt_id: String,
    /// Shared by documents generated from minimally different prompts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_group: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub sentences: Vec<Sentence>,
    pub meta: DocumentMeta,
}

impl Document {
    /// Builds a document by splitting `text` into sentences.
    pub fn from_text(id: impl Into<String>, text: impl Into<String>, meta: DocumentMeta) -> Result<Self> {
        let text = text.into();
        let sentences = split_sentences(&text)?;
        Ok(Self {
            id: id.into(),
            text,
            sentences,
            meta,
        })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Sentence by 1-based index.
    pub fn sentence(&self, index: usize) -> Option<&Sentence> {
        index.checked_sub(1).and_then(|k| self.sentences.get(k))
    }

    /// One sentence per line, each prefixed with its number: `3. Text`.
    pub fn numbered_text(&self) -> String {
        self.sentences
            .iter()
            .map(|s| format!("{}. {}", s.index, s.text))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Joined text of the given sentences.
    pub fn span_text(&self, indices: &[usize]) -> String {
        indices
            .iter()
            .filter_map(|&i| self.sentence(i))
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// Groups sentence indices by the blank-line paragraphs of the source
    /// text. Returns `None` when the stored sentences were not produced by the
    /// built-in splitter.
    pub fn paragraph_groups(&self) -> Option<Vec<Vec<usize>>> {
        let split = split_with_paragraphs(&self.text);
        if split.len() != self.sentences.len()
            || split.iter().zip(&self.sentences).any(|((_, t), s)| *t != s.text)
        {
            return None;
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut last = 0;
        for (k, (para, _)) in split.iter().enumerate() {
            if *para != last {
                groups.push(Vec::new());
                last = *para;
            }
            groups.last_mut().expect("group pushed").push(k + 1);
        }
        Some(groups)
    }

    /// Checks the gapless 1..n numbering and the reconstruction invariant.
    pub fn validate(&self) -> Result<()> {
        let origin = format!("document `{}`", self.id);
        if self.id.trim().is_empty() {
            return Err(Error::schema(origin, "id", "document id is empty"));
        }
        if self.sentences.is_empty() {
            return Err(Error::schema(origin, "sentences", "document has no sentences"));
        }
        for (k, s) in self.sentences.iter().enumerate() {
            if s.index != k + 1 {
                return Err(Error::schema(
                    origin,
                    format!("sentences[{k}].index"),
                    format!("expected index {}, found {}", k + 1, s.index),
                ));
            }
        }
        let joined = self
            .sentences
            .iter()
            .map(|s| s.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        if normalize_whitespace(&joined) != normalize_whitespace(&self.text) {
            return Err(Error::schema(
                origin,
                "sentences",
                "sentence texts do not reconstruct the document text",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub segment_index: usize,
    pub sentence_indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segmentation {
    pub document_id: String,
    pub segments: Vec<Segment>,
}

impl Segmentation {
    /// Builds a segmentation from ordered groups of sentence indices,
    /// numbering segments from 1.
    pub fn from_groups(document_id: impl Into<String>, groups: Vec<Vec<usize>>) -> Self {
        Self {
            document_id: document_id.into(),
            segments: groups
                .into_iter()
                .enumerate()
                .map(|(k, sentence_indices)| Segment {
                    segment_index: k + 1,
                    sentence_indices,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Segment by 1-based index.
    pub fn segment(&self, index: usize) -> Option<&Segment> {
        index.checked_sub(1).and_then(|k| self.segments.get(k))
    }

    /// Maps each sentence index to the segment containing it.
    pub fn sentence_to_segment(&self) -> BTreeMap<usize, usize> {
        let mut map = BTreeMap::new();
        for seg in &self.segments {
            for &s in &seg.sentence_indices {
                map.entry(s).or_insert(seg.segment_index);
            }
        }
        map
    }

    pub fn segment_text(&self, doc: &Document, index: usize) -> Option<String> {
        self.segment(index).map(|s| doc.span_text(&s.sentence_indices))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DocumentMismatch { expected: String, found: String },
    EmptySegment { segment: usize },
    SegmentNumbering { position: usize, found: usize },
    OutOfRange { segment: usize, sentence: usize },
    Overlap { sentence: usize, segments: Vec<usize> },
    Gap { sentence: usize },
    NonContiguous { segment: usize, sentences: Vec<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DocumentMismatch { expected, found } => {
                write!(f, "segmentation is for `{found}`, not `{expected}`")
            }
            Violation::EmptySegment { segment } => write!(f, "segment {segment} is empty"),
            Violation::SegmentNumbering { position, found } => {
                write!(f, "segment at position {position} is numbered {found}")
            }
            Violation::OutOfRange { segment, sentence } => {
                write!(f, "segment {segment} references missing sentence {sentence}")
            }
            Violation::Overlap { sentence, segments } => {
                write!(f, "sentence {sentence} appears in segments {segments:?}")
            }
            Violation::Gap { sentence } => write!(f, "sentence {sentence} is in no segment"),
            Violation::NonContiguous { segment, sentences } => {
                write!(f, "segment {segment} is not a contiguous run: {sentences:?}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Reports every gap, overlap and non-contiguity of `seg` relative to `doc`.
pub fn validate_segmentation(doc: &Document, seg: &Segmentation) -> ValidationReport {
    let mut violations = Vec::new();
    if seg.document_id != doc.id {
        violations.push(Violation::DocumentMismatch {
            expected: doc.id.clone(),
            found: seg.document_id.clone(),
        });
    }
    let n = doc.len();
    let mut owners: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (pos, segment) in seg.segments.iter().enumerate() {
        if segment.segment_index != pos + 1 {
            violations.push(Violation::SegmentNumbering {
                position: pos + 1,
                found: segment.segment_index,
            });
        }
        if segment.sentence_indices.is_empty() {
            violations.push(Violation::EmptySegment {
                segment: segment.segment_index,
            });
            continue;
        }
        for &s in &segment.sentence_indices {
            if s == 0 || s > n {
                violations.push(Violation::OutOfRange {
                    segment: segment.segment_index,
                    sentence: s,
                });
            } else {
                owners.entry(s).or_default().push(segment.segment_index);
            }
        }
        let contiguous = segment.sentence_indices.windows(2).all(|w| w[1] == w[0] + 1);
        if !contiguous {
            violations.push(Violation::NonContiguous {
                segment: segment.segment_index,
                sentences: segment.sentence_indices.clone(),
            });
        }
    }
    for (&sentence, segs) in &owners {
        if segs.len() > 1 {
            violations.push(Violation::Overlap {
                sentence,
                segments: segs.clone(),
            });
        }
    }
    for sentence in 1..=n {
        if !owners.contains_key(&sentence) {
            violations.push(Violation::Gap { sentence });
        }
    }
    // Contiguous, disjoint and exhaustive segments can still be out of order.
    if violations.is_empty() {
        let flat: Vec<usize> = seg
            .segments
            .iter()
            .flat_map(|s| s.sentence_indices.iter().copied())
            .collect();
        if flat != (1..=n).collect::<Vec<_>>() {
            for segment in &seg.segments {
                violations.push(Violation::NonContiguous {
                    segment: segment.segment_index,
                    sentences: segment.sentence_indices.clone(),
                });
            }
        }
    }
    ValidationReport { violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AbstractionLevel {
    /// QUDs generated from the raw segment text.
    Specific = 0,
    /// QUDs generated from the entity-abstracted segment.
    #[default]
    Abstract = 1,
}

impl AbstractionLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            AbstractionLevel::Specific => "specific",
            AbstractionLevel::Abstract => "abstract",
        }
    }
}

impl fmt::Display for AbstractionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AbstractionLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "specific" | "S" | "0" => Ok(AbstractionLevel::Specific),
            "abstract" | "A" | "1" => Ok(AbstractionLevel::Abstract),
            other => Err(Error::InvalidInput(format!(
                "unknown abstraction level `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Qud {
    pub id: String,
    pub source_document_id: String,
    pub source_segment_index: usize,
    pub question: String,
    pub abstraction_level: AbstractionLevel,
}

impl Qud {
    pub fn make_id(document_id: &str, level: AbstractionLevel, segment: usize, k: usize) -> String {
        format!("{document_id}:{level}:{segment}.{k}")
    }
}

/// Sentences of the target document that directly answer one QUD. An empty
/// set means the QUD is unanswerable in the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerSet {
    pub qud_id: String,
    pub target_document_id: String,
    pub sentence_indices: BTreeSet<usize>,
}

impl AnswerSet {
    pub fn len(&self) -> usize {
        self.sentence_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentence_indices.is_empty()
    }

    pub fn validate_against(&self, target: &Document) -> Result<()> {
        if self.target_document_id != target.id {
            return Err(Error::schema(
                format!("answer set for `{}`", self.qud_id),
                "target_document_id",
                format!("expected `{}`, found `{}`", target.id, self.target_document_id),
            ));
        }
        if let Some(&bad) = self
            .sentence_indices
            .iter()
            .find(|&&i| i == 0 || i > target.len())
        {
            return Err(Error::schema(
                format!("answer set for `{}`", self.qud_id),
                "sentence_indices",
                format!(
                    "sentence {bad} does not exist in `{}` ({} sentences)",
                    target.id,
                    target.len()
                ),
            ));
        }
        Ok(())
    }
}

/// Ordered (source document, target document) pair. Rendered as
/// `source__target` in file names.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PairId {
    pub source: String,
    pub target: String,
}

impl PairId {
    pub fn new(source: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
        }
    }

    pub fn reversed(&self) -> Self {
        Self::new(self.target.clone(), self.source.clone())
    }
}

impl fmt::Display for PairId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}__{}", self.source, self.target)
    }
}

impl FromStr for PairId {
    type Err = Error;

    /// Accepts `source__target` or `source:target`.
    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .split_once("__")
            .or_else(|| s.split_once(':'))
            .ok_or_else(|| Error::InvalidInput(format!("pair `{s}` is not `A:B` or `A__B`")))?;
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidInput(format!("pair `{s}` has an empty side")));
        }
        Ok(PairId::new(a, b))
    }
}

/// Human segment alignment labels for one document pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAlignment {
    pub source_document_id: String,
    pub target_document_id: String,
    /// (source segment, target segment), both 1-based.
    pub aligned: BTreeSet<(usize, usize)>,
    #[serde(default)]
    pub provenance: Vec<String>,
}

impl GoldAlignment {
    pub fn pair(&self) -> PairId {
        PairId::new(&self.source_document_id, &self.target_document_id)
    }

    pub fn validate_dims(&self, source_segments: usize, target_segments: usize) -> Result<()> {
        for &(i, j) in &self.aligned {
            if i == 0 || i > source_segments || j == 0 || j > target_segments {
                return Err(Error::schema(
                    format!("gold alignment {}", self.pair()),
                    "aligned",
                    format!("({i}, {j}) outside {source_segments}x{target_segments} segments"),
                ));
            }
        }
        Ok(())
    }
}
