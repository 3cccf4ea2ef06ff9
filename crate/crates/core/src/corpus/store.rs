//! On-disk layout of a corpus workspace.
//!
//! ```text
//! corpus/<doc_id>.json                      Document
//! derived/<doc_id>.segments.json            Segmentation
//! derived/<doc_id>.abstract.json            AbstractFile
//! derived/<doc_id>.quds.<level>.json        QudFile
//! derived/<pair_id>.answers.json            AnswerFile (both levels)
//! derived/<pair_id>.<metric>.matrix.json    SimilarityMatrix
//! derived/<pair_id>.<metric>.alignment.json AlignmentSet
//! derived/transcripts/<name>.json           LLM transcripts
//! gold/<pair_id>.alignment.json             GoldAlignment
//! reports/                                  heatmaps, evaluations, diagrams
//! runs/                                     run manifests
//! ```
//!
//! All files are UTF-8 pretty-printed JSON terminated by a newline. Raw
//! corpus files are never rewritten by derived stages.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    validate_segmentation, AbstractionLevel, AnswerSet, Document, GoldAlignment, PairId, Qud, Segmentation,
};
use crate::alignment::AlignmentSet;
use crate::llm::TranscriptEntry;
use crate::pipeline::AbstractedSegment;
use crate::scoring::SimilarityMatrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractFile {
    pub document_id: String,
    pub segments: Vec<AbstractedSegment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QudFile {
    pub document_id: String,
    pub level: AbstractionLevel,
    pub quds: Vec<Qud>,
}

/// Answer sets for the QUDs of `source_document_id` answered against
/// `target_document_id`, keyed by abstraction level.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AnswerFile {
    pub source_document_id: String,
    pub target_document_id: String,
    pub levels: BTreeMap<AbstractionLevel, Vec<AnswerSet>>,
}

/// Parses JSON, reporting the failing field path on schema errors.
pub fn from_json_str<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let location = e.path().to_string();
        Error::schema(origin, location, e.into_inner().to_string())
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingArtifact(path.to_path_buf()))
        }
        Err(e) => return Err(Error::io(path, e)),
    };
    from_json_str(&text, &path.display().to_string())
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact types serialize");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json_string(value))
}

/// File names may not contain `:`; metric ids such as `judge:gpt-4o` are
/// stored with a dash instead.
pub fn metric_file_stem(metric_id: &str) -> String {
    metric_id.replace([':', '/'], "-")
}

/// A corpus workspace rooted at a directory.
#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn derived_dir(&self) -> PathBuf {
        self.root.join("derived")
    }

    pub fn gold_dir(&self) -> PathBuf {
        self.root.join("gold")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.root.join("runs")
    }

    pub fn document_path(&self, doc_id: &str) -> PathBuf {
        self.corpus_dir().join(format!("{doc_id}.json"))
    }

    pub fn segments_path(&self, doc_id: &str) -> PathBuf {
        self.derived_dir().join(format!("{doc_id}.segments.json"))
    }

    pub fn abstract_path(&self, doc_id: &str) -> PathBuf {
        self.derived_dir().join(format!("{doc_id}.abstract.json"))
    }

    pub fn quds_path(&self, doc_id: &str, level: AbstractionLevel) -> PathBuf {
        self.derived_dir().join(format!("{doc_id}.quds.{level}.json"))
    }

    pub fn answers_path(&self, pair: &PairId) -> PathBuf {
        self.derived_dir().join(format!("{pair}.answers.json"))
    }

    pub fn matrix_path(&self, pair: &PairId, metric_id: &str) -> PathBuf {
        self.derived_dir()
            .join(format!("{pair}.{}.matrix.json", metric_file_stem(metric_id)))
    }

    pub fn alignment_path(&self, pair: &PairId, metric_id: &str) -> PathBuf {
        self.derived_dir()
            .join(format!("{pair}.{}.alignment.json", metric_file_stem(metric_id)))
    }

    pub fn gold_path(&self, pair: &PairId) -> PathBuf {
        self.gold_dir().join(format!("{pair}.alignment.json"))
    }

    pub fn transcript_path(&self, name: &str) -> PathBuf {
        self.derived_dir()
            .join("transcripts")
            .join(format!("{name}.json"))
    }

    /// Ids of every document under `corpus/`, sorted.
    pub fn document_ids(&self) -> Result<Vec<String>> {
        let dir = self.corpus_dir();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingArtifact(dir)),
            Err(e) => return Err(Error::io(&dir, e)),
        };
        let mut ids = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(".json") {
                ids.push(id.to_string());
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Pairs with a gold alignment file, sorted.
    pub fn gold_pairs(&self) -> Result<Vec<PairId>> {
        let dir = self.gold_dir();
        let Ok(entries) = fs::read_dir(&dir) else {
            return Ok(Vec::new());
        };
        let mut pairs = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(stem) = name.strip_suffix(".alignment.json") {
                pairs.push(stem.parse()?);
            }
        }
        pairs.sort();
        Ok(pairs)
    }

    pub fn load_document(&self, doc_id: &str) -> Result<Document> {
        let doc: Document = read_json(&self.document_path(doc_id))?;
        doc.validate()?;
        if doc.id != doc_id {
            return Err(Error::schema(
                self.document_path(doc_id).display().to_string(),
                "id",
                format!("file holds document `{}`", doc.id),
            ));
        }
        Ok(doc)
    }

    pub fn save_document(&self, doc: &Document) -> Result<()> {
        doc.validate()?;
        write_json(&self.document_path(&doc.id), doc)
    }

    /// Loads a segmentation and checks it partitions `doc`.
    pub fn load_segmentation(&self, doc: &Document) -> Result<Segmentation> {
        let path = self.segments_path(&doc.id);
        let seg: Segmentation = read_json(&path)?;
        let report = validate_segmentation(doc, &seg);
        if let Some(v) = report.violations.first() {
            return Err(Error::schema(
                path.display().to_string(),
                "segments",
                v.to_string(),
            ));
        }
        Ok(seg)
    }

    pub fn save_segmentation(&self, seg: &Segmentation) -> Result<()> {
        write_json(&self.segments_path(&seg.document_id), seg)
    }

    pub fn load_abstract(&self, doc_id: &str) -> Result<AbstractFile> {
        read_json(&self.abstract_path(doc_id))
    }

    pub fn save_abstract(&self, file: &AbstractFile) -> Result<()> {
        write_json(&self.abstract_path(&file.document_id), file)
    }

    pub fn load_quds(&self, doc_id: &str, level: AbstractionLevel) -> Result<QudFile> {
        let path = self.quds_path(doc_id, level);
        let file: QudFile = read_json(&path)?;
        if let Some((k, q)) = file
            .quds
            .iter()
            .enumerate()
            .find(|(_, q)| q.question.trim().is_empty())
        {
            return Err(Error::schema(
                path.display().to_string(),
                format!("quds[{k}].question"),
                format!("QUD `{}` has an empty question", q.id),
            ));
        }
        Ok(file)
    }

    pub fn save_quds(&self, file: &QudFile) -> Result<()> {
        write_json(&self.quds_path(&file.document_id, file.level), file)
    }

    /// Loads the answer file for `pair`, checking every index exists in the
    /// target document.
    pub fn load_answers(&self, pair: &PairId, target: &Document) -> Result<AnswerFile> {
        let path = self.answers_path(pair);
        let file: AnswerFile = read_json(&path)?;
        validate_answer_file(&file, target, &path.display().to_string())?;
        Ok(file)
    }

    /// Loads the answer file if present, or starts an empty one.
    pub fn load_answers_or_default(&self, pair: &PairId, target: &Document) -> Result<AnswerFile> {
        match self.load_answers(pair, target) {
            Err(Error::MissingArtifact(_)) => Ok(AnswerFile {
                source_document_id: pair.source.clone(),
                target_document_id: pair.target.clone(),
                levels: BTreeMap::new(),
            }),
            other => other,
        }
    }

    pub fn save_answers(&self, file: &AnswerFile) -> Result<()> {
        let pair = PairId::new(&file.source_document_id, &file.target_document_id);
        write_json(&self.answers_path(&pair), file)
    }

    pub fn load_gold(&self, pair: &PairId) -> Result<GoldAlignment> {
        let gold: GoldAlignment = read_json(&self.gold_path(pair))?;
        if gold.pair() != *pair {
            return Err(Error::schema(
                self.gold_path(pair).display().to_string(),
                "source_document_id",
                format!("file holds pair `{}`", gold.pair()),
            ));
        }
        Ok(gold)
    }

    pub fn save_gold(&self, gold: &GoldAlignment) -> Result<()> {
        write_json(&self.gold_path(&gold.pair()), gold)
    }

    pub fn load_matrix(&self, pair: &PairId, metric_id: &str) -> Result<SimilarityMatrix> {
        let m: SimilarityMatrix = read_json(&self.matrix_path(pair, metric_id))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save_matrix(&self, m: &SimilarityMatrix) -> Result<()> {
        write_json(&self.matrix_path(&m.pair(), &m.metric_id), m)
    }

    pub fn load_alignment(&self, pair: &PairId, metric_id: &str) -> Result<AlignmentSet> {
        read_json(&self.alignment_path(pair, metric_id))
    }

    pub fn save_alignment(&self, a: &AlignmentSet) -> Result<()> {
        write_json(&self.alignment_path(&a.pair(), &a.metric_id), a)
    }

    pub fn save_transcript(&self, name: &str, entries: &[TranscriptEntry]) -> Result<()> {
        write_json(&self.transcript_path(name), entries)
    }
}

pub fn validate_answer_file(file: &AnswerFile, target: &Document, origin: &str) -> Result<()> {
    if file.target_document_id != target.id {
        return Err(Error::schema(
            origin,
            "target_document_id",
            format!("expected `{}`, found `{}`", target.id, file.target_document_id),
        ));
    }
    for (level, sets) in &file.levels {
        for (k, a) in sets.iter().enumerate() {
            a.validate_against(target).map_err(|e| match e {
                Error::Schema { message, .. } => {
                    Error::schema(origin, format!("levels.{level}[{k}].sentence_indices"), message)
                }
                other => other,
            })?;
        }
    }
    Ok(())
}
