//! File-to-file stages over a workspace directory. Every stage reads the
//! artifacts of the previous ones from disk and writes its own, so runs can
//! be resumed, audited and re-scored without calling a backend again.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::alignment::{
    calibrate_threshold, document_similarity, extract_templates, heatmap_pair_eligible, heatmap_table,
    threshold_align_with, AlignmentSet, Calibration, Heatmap, HeatmapEntry, Templates, ThresholdConfig,
};
use crate::baselines::{cosine_matrix, judge_matrix, lexical_matrix};
use crate::config::Config;
use crate::corpus::store::{
    from_json_str, metric_file_stem, write_json, write_text, AbstractFile, AnswerFile, QudFile, Workspace,
};
use crate::corpus::{
    split_sentences, AbstractionLevel, AnswerSet, Document, DocumentMeta, Domain, PairId, Qud, Segmentation,
    Sentence,
};
use crate::eval::{prf1, prf1_pooled, EvalReport};
use crate::llm::{Backend, CacheStats, FixtureBackend, Gateway, OpenAiBackend, TranscriptEntry};
use crate::pipeline::{abstract_segments, answer_quds, generate_document_quds, segment_document, Staged};
use crate::report::{eval_csv, heatmap_csv, heatmap_json, heatmap_svg, pair_diagram, DiagramInputs};
use crate::scoring::{similarity_matrix, Metric, PairArtifacts, SimilarityMatrix};
use crate::{Error, Result};

/// A document as accepted by `ingest`: sentences are computed when absent.
#[derive(Debug, Clone, Deserialize)]
struct IngestRecord {
    id: String,
    text: String,
    meta: DocumentMeta,
    #[serde(default)]
    sentences: Option<Vec<Sentence>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum IngestFile {
    Many(Vec<IngestRecord>),
    One(IngestRecord),
}

/// Persisted LLM exchanges of one stage run, with repair notes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptFile {
    pub stage: String,
    pub notes: Vec<String>,
    pub entries: Vec<TranscriptEntry>,
}

/// Written to `runs/` after every command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config_path: Option<String>,
    pub config_hash: String,
    pub corpus_path: String,
    pub fixtures: Option<String>,
    pub stages: Vec<String>,
    /// Model used per stage.
    pub backends: BTreeMap<String, String>,
    pub seed: u64,
    pub started_at_ms: u64,
    pub finished_at_ms: u64,
    pub cache: CacheStats,
    pub outputs: Vec<String>,
    pub status: String,
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTemplates {
    pub pair: String,
    pub source_group: String,
    pub target_group: String,
    pub templates: Templates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateReport {
    pub metric_id: String,
    pub n: usize,
    pub pairs: Vec<PairTemplates>,
    /// Mean count per pair, keyed `source_group -> target_group`.
    pub mean_by_group: BTreeMap<String, BTreeMap<String, f64>>,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub metric_id: String,
    pub tau: f64,
    pub overall: EvalReport,
    pub by_domain: Vec<EvalReport>,
    pub per_pair: Vec<(String, EvalReport)>,
}

/// A workspace, its configuration and a gateway to the chosen backend.
pub struct Session {
    pub ws: Workspace,
    pub cfg: Config,
    pub gw: Gateway,
}

impl Session {
    /// Uses the replay backend when `fixtures` is given, the HTTP backend
    /// otherwise. Relative cache directories resolve against the workspace.
    pub fn open(root: impl Into<PathBuf>, cfg: Config, fixtures: Option<&Path>) -> Result<Self> {
        let backend: Box<dyn Backend> = match fixtures {
            Some(dir) => Box::new(FixtureBackend::from_dir(dir)?),
            None => Box::new(OpenAiBackend::default()),
        };
        Ok(Self::with_backend(root, cfg, backend))
    }

    pub fn with_backend(root: impl Into<PathBuf>, mut cfg: Config, backend: Box<dyn Backend>) -> Self {
        let ws = Workspace::new(root);
        for b in [&mut cfg.backend, &mut cfg.embedding, &mut cfg.judge] {
            if b.cache_dir.is_relative() {
                b.cache_dir = ws.root().join(&b.cache_dir);
            }
        }
        let gw = Gateway::new(backend, cfg.parallelism);
        Self { ws, cfg, gw }
    }

    fn save_transcript<T>(&self, name: &str, stage: &str, staged: &Staged<T>) -> Result<PathBuf> {
        let path = self.ws.transcript_path(name);
        write_json(
            &path,
            &TranscriptFile {
                stage: stage.to_string(),
                notes: staged.notes.clone(),
                entries: staged.transcript.clone(),
            },
        )?;
        Ok(path)
    }

    /// Keeps the raw responses of a failed stage next to the other
    /// transcripts before handing the error back.
    fn record_failure<T>(&self, name: &str, result: Result<T>) -> Result<T> {
        match result {
            Err(Error::Parse {
                stage,
                message,
                transcript,
            }) => {
                let path = self.ws.transcript_path(&format!("{name}.failed"));
                let body = serde_json::json!({"stage": stage, "message": message, "responses": transcript});
                write_json(&path, &body)?;
                Err(Error::Parse {
                    stage,
                    message: format!("{message} (raw responses in {})", path.display()),
                    transcript,
                })
            }
            other => other,
        }
    }

    /// Copies documents into `corpus/`. Each input file holds one record or
    /// a list of `{id, text, meta, sentences?}` records.
    pub fn ingest(&self, inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for input in inputs {
            let text = std::fs::read_to_string(input).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingArtifact(input.clone()),
                _ => Error::io(input, e),
            })?;
            let records = match from_json_str::<IngestFile>(&text, &input.display().to_string())? {
                IngestFile::Many(v) => v,
                IngestFile::One(r) => vec![r],
            };
            for r in records {
                let sentences = match r.sentences {
                    Some(s) => s,
                    None => split_sentences(&r.text)?,
                };
                let doc = Document {
                    id: r.id,
                    text: r.text,
                    sentences,
                    meta: r.meta,
                };
                doc.validate()?;
                let path = self.ws.document_path(&doc.id);
                if path.exists() {
                    let existing = self.ws.load_document(&doc.id)?;
                    if existing != doc {
                        return Err(Error::InvalidInput(format!(
                            "corpus already holds a different `{}`; raw corpus files are never overwritten",
                            doc.id
                        )));
                    }
                } else {
                    self.ws.save_document(&doc)?;
                }
                written.push(path);
            }
        }
        Ok(written)
    }

    pub fn segment(&self, doc_id: &str) -> Result<Vec<PathBuf>> {
        let doc = self.ws.load_document(doc_id)?;
        let name = format!("segment.{doc_id}");
        let staged = self.record_failure(&name, segment_document(&self.gw, &self.cfg.backend, &doc))?;
        self.ws.save_segmentation(&staged.value)?;
        let t = self.save_transcript(&name, "segmentation", &staged)?;
        Ok(vec![self.ws.segments_path(doc_id), t])
    }

    pub fn abstract_document(&self, doc_id: &str) -> Result<Vec<PathBuf>> {
        let doc = self.ws.load_document(doc_id)?;
        let seg = self.ws.load_segmentation(&doc)?;
        let name = format!("abstract.{doc_id}");
        let staged =
            self.record_failure(&name, abstract_segments(&self.gw, &self.cfg.backend, &doc, &seg))?;
        self.ws.save_abstract(&AbstractFile {
            document_id: doc_id.to_string(),
            segments: staged.value.clone(),
        })?;
        let t = self.save_transcript(&name, "abstraction", &staged)?;
        Ok(vec![self.ws.abstract_path(doc_id), t])
    }

    pub fn quds(&self, doc_id: &str, level: AbstractionLevel) -> Result<Vec<PathBuf>> {
        let doc = self.ws.load_document(doc_id)?;
        let seg = self.ws.load_segmentation(&doc)?;
        let abstracts = match level {
            AbstractionLevel::Abstract => Some(self.ws.load_abstract(doc_id)?.segments),
            AbstractionLevel::Specific => None,
        };
        let name = format!("quds.{doc_id}.{level}");
        let staged = self.record_failure(
            &name,
            generate_document_quds(
                &self.gw,
                &self.cfg.backend,
                &doc,
                &seg,
                abstracts.as_deref(),
                level,
            ),
        )?;
        self.ws.save_quds(&QudFile {
            document_id: doc_id.to_string(),
            level,
            quds: staged.value.clone(),
        })?;
        let t = self.save_transcript(&name, "qud_gen", &staged)?;
        Ok(vec![self.ws.quds_path(doc_id, level), t])
    }

    /// Answers the source document's QUDs against the target document.
    pub fn answer(&self, pair: &PairId, level: AbstractionLevel) -> Result<Vec<PathBuf>> {
        let target = self.ws.load_document(&pair.target)?;
        let quds = self.ws.load_quds(&pair.source, level)?.quds;
        let name = format!("answers.{pair}.{level}");
        let staged = self.record_failure(&name, answer_quds(&self.gw, &self.cfg.backend, &quds, &target))?;
        let mut file = self.ws.load_answers_or_default(pair, &target)?;
        file.levels.insert(level, staged.value.clone());
        self.ws.save_answers(&file)?;
        let t = self.save_transcript(&name, "qud_answer", &staged)?;
        Ok(vec![self.ws.answers_path(pair), t])
    }

    fn answers_at(
        &self,
        pair: &PairId,
        target: &Document,
        level: AbstractionLevel,
    ) -> Result<Vec<AnswerSet>> {
        let file: AnswerFile = self.ws.load_answers(pair, target)?;
        file.levels
            .get(&level)
            .cloned()
            .ok_or_else(|| Error::MissingArtifact(self.ws.answers_path(pair)))
    }

    fn segment_texts(doc: &Document, seg: &Segmentation) -> Vec<String> {
        seg.segments
            .iter()
            .map(|s| doc.span_text(&s.sentence_indices))
            .collect()
    }

    /// Similarity matrix of one ordered pair under `metric`.
    pub fn score(&self, pair: &PairId, metric: &Metric) -> Result<Vec<PathBuf>> {
        let source = self.ws.load_document(&pair.source)?;
        let target = self.ws.load_document(&pair.target)?;
        let s_seg = self.ws.load_segmentation(&source)?;
        let t_seg = self.ws.load_segmentation(&target)?;
        let mut out = Vec::new();
        let m = match metric {
            Metric::Qudsim => {
                let level = self.cfg.level;
                let s_quds = self.ws.load_quds(&pair.source, level)?.quds;
                let t_quds = self.ws.load_quds(&pair.target, level)?.quds;
                let fwd = self.answers_at(pair, &target, level)?;
                let bwd = self.answers_at(&pair.reversed(), &source, level)?;
                similarity_matrix(&PairArtifacts {
                    source_seg: &s_seg,
                    target_seg: &t_seg,
                    source_quds: &s_quds,
                    target_quds: &t_quds,
                    forward_answers: &fwd,
                    backward_answers: &bwd,
                })?
            }
            Metric::Jaccard(_) | Metric::RougeL => lexical_matrix(
                metric,
                pair,
                &Self::segment_texts(&source, &s_seg),
                &Self::segment_texts(&target, &t_seg),
            )?,
            Metric::Cosine => cosine_matrix(
                &self.gw,
                &self.cfg.embedding,
                pair,
                &Self::segment_texts(&source, &s_seg),
                &Self::segment_texts(&target, &t_seg),
            )?,
            Metric::Judge(model) => {
                let mut judge = self.cfg.judge.clone();
                judge.model_name = model.clone();
                let name = format!("judge.{pair}.{}", metric_file_stem(&metric.id()));
                let staged = self.record_failure(
                    &name,
                    judge_matrix(
                        &self.gw,
                        &judge,
                        pair,
                        &Self::segment_texts(&source, &s_seg),
                        &Self::segment_texts(&target, &t_seg),
                    ),
                )?;
                out.push(self.save_transcript(&name, "judge", &staged)?);
                staged.value
            }
        };
        self.ws.save_matrix(&m)?;
        out.insert(0, self.ws.matrix_path(pair, &m.metric_id));
        Ok(out)
    }

    pub fn align(&self, pair: &PairId, threshold: &ThresholdConfig) -> Result<Vec<PathBuf>> {
        let m = self.ws.load_matrix(pair, &threshold.metric_id)?;
        let a = threshold_align_with(&m, threshold.tau, self.cfg.per_direction);
        self.ws.save_alignment(&a)?;
        Ok(vec![self.ws.alignment_path(pair, &threshold.metric_id)])
    }

    fn gold_with_matrices(
        &self,
        metric_id: &str,
    ) -> Result<(Vec<SimilarityMatrix>, Vec<crate::corpus::GoldAlignment>)> {
        let pairs = self.ws.gold_pairs()?;
        if pairs.is_empty() {
            return Err(Error::EmptyInput("no gold alignments under gold/"));
        }
        let mut matrices = Vec::new();
        let mut gold = Vec::new();
        for p in pairs {
            gold.push(self.ws.load_gold(&p)?);
            matrices.push(self.ws.load_matrix(&p, metric_id)?);
        }
        Ok((matrices, gold))
    }

    pub fn calibrate(&self, metric_id: &str) -> Result<(Calibration, Vec<PathBuf>)> {
        let (matrices, gold) = self.gold_with_matrices(metric_id)?;
        let c = calibrate_threshold(
            &matrices,
            &gold,
            self.cfg.dev_fraction,
            self.cfg.seed,
            self.cfg.per_direction,
        )?;
        let path = self
            .ws
            .reports_dir()
            .join(format!("calibration.{}.json", metric_file_stem(metric_id)));
        write_json(&path, &c)?;
        Ok((c, vec![path]))
    }

    pub fn eval(&self, threshold: &ThresholdConfig) -> Result<(EvalSummary, Vec<PathBuf>)> {
        let metric_id = &threshold.metric_id;
        let (matrices, gold) = self.gold_with_matrices(metric_id)?;
        let predicted: Vec<AlignmentSet> = matrices
            .iter()
            .map(|m| threshold_align_with(m, threshold.tau, self.cfg.per_direction))
            .collect();
        let overall = prf1_pooled(metric_id, None, &predicted, &gold)?;
        let mut domains: BTreeMap<Domain, Vec<usize>> = BTreeMap::new();
        for (k, g) in gold.iter().enumerate() {
            let doc = self.ws.load_document(&g.source_document_id)?;
            domains.entry(doc.meta.domain).or_default().push(k);
        }
        let mut by_domain = Vec::new();
        for (domain, ks) in domains {
            let p: Vec<AlignmentSet> = ks.iter().map(|&k| predicted[k].clone()).collect();
            let g: Vec<_> = ks.iter().map(|&k| gold[k].clone()).collect();
            by_domain.push(prf1_pooled(metric_id, Some(domain), &p, &g)?);
        }
        let per_pair = predicted
            .iter()
            .zip(&gold)
            .map(|(p, g)| Ok((g.pair().to_string(), prf1(p, g)?)))
            .collect::<Result<Vec<_>>>()?;
        let summary = EvalSummary {
            metric_id: metric_id.clone(),
            tau: threshold.tau,
            overall: overall.clone(),
            by_domain: by_domain.clone(),
            per_pair,
        };
        let stem = metric_file_stem(metric_id);
        let json = self.ws.reports_dir().join(format!("eval.{stem}.json"));
        let csv = self.ws.reports_dir().join(format!("eval.{stem}.csv"));
        write_json(&json, &summary)?;
        let mut rows = vec![overall];
        rows.extend(by_domain);
        write_text(&csv, &eval_csv(&rows)?)?;
        Ok((summary, vec![json, csv]))
    }

    fn documents(&self) -> Result<Vec<Document>> {
        self.ws
            .document_ids()?
            .iter()
            .map(|id| self.ws.load_document(id))
            .collect()
    }

    /// Ordered pairs that belong in a heatmap: different authors on one
    /// prompt, or one author across a minimal-pair group.
    pub fn eligible_pairs(&self) -> Result<Vec<PairId>> {
        let docs = self.documents()?;
        let mut out = Vec::new();
        for a in &docs {
            for b in &docs {
                if a.id != b.id && heatmap_pair_eligible(&a.meta, &b.meta) {
                    out.push(PairId::new(&a.id, &b.id));
                }
            }
        }
        Ok(out)
    }

    fn group_order(docs: &[Document]) -> Vec<String> {
        let set: BTreeSet<&str> = docs.iter().map(|d| d.meta.author_kind.as_str()).collect();
        let mut groups: Vec<String> = set
            .iter()
            .filter(|g| **g == "human")
            .map(|g| g.to_string())
            .collect();
        groups.extend(set.iter().filter(|g| **g != "human").map(|g| g.to_string()));
        groups
    }

    pub fn templates(&self, metric_id: &str, n: usize) -> Result<(TemplateReport, Vec<PathBuf>)> {
        let docs = self.documents()?;
        let by_id: BTreeMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
        let mut pairs = Vec::new();
        let mut sums: BTreeMap<(String, String), (usize, usize)> = BTreeMap::new();
        for a in &docs {
            for b in &docs {
                let pair = PairId::new(&a.id, &b.id);
                if !self.ws.alignment_path(&pair, metric_id).exists() {
                    continue;
                }
                let alignment = self.ws.load_alignment(&pair, metric_id)?;
                let t = extract_templates(&alignment, n, self.cfg.template_counting)?;
                let (sg, tg) = (
                    by_id[pair.source.as_str()].meta.author_kind.clone(),
                    by_id[pair.target.as_str()].meta.author_kind.clone(),
                );
                let e = sums.entry((sg.clone(), tg.clone())).or_default();
                e.0 += t.count;
                e.1 += 1;
                pairs.push(PairTemplates {
                    pair: pair.to_string(),
                    source_group: sg,
                    target_group: tg,
                    templates: t,
                });
            }
        }
        if pairs.is_empty() {
            return Err(Error::EmptyInput(
                "no alignments for this metric; run `align` first",
            ));
        }
        let mut mean_by_group: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for ((sg, tg), (total, count)) in sums {
            mean_by_group
                .entry(sg)
                .or_default()
                .insert(tg, total as f64 / count as f64);
        }
        let report = TemplateReport {
            metric_id: metric_id.to_string(),
            n,
            total: pairs.iter().map(|p| p.templates.count).sum(),
            pairs,
            mean_by_group,
        };
        let path = self
            .ws
            .reports_dir()
            .join(format!("templates.{}.n{n}.json", metric_file_stem(metric_id)));
        write_json(&path, &report)?;
        Ok((report, vec![path]))
    }

    pub fn heatmap(&self, threshold: &ThresholdConfig) -> Result<(Heatmap, Vec<PathBuf>)> {
        let metric_id = &threshold.metric_id;
        let docs = self.documents()?;
        let by_id: BTreeMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
        let mut entries = Vec::new();
        for pair in self.eligible_pairs()? {
            if !self.ws.matrix_path(&pair, metric_id).exists() {
                continue;
            }
            let m = self.ws.load_matrix(&pair, metric_id)?;
            let a = threshold_align_with(&m, threshold.tau, self.cfg.per_direction);
            entries.push(HeatmapEntry {
                source_group: by_id[pair.source.as_str()].meta.author_kind.clone(),
                target_group: by_id[pair.target.as_str()].meta.author_kind.clone(),
                value: document_similarity(&a, m.rows, m.cols)?,
            });
        }
        if entries.is_empty() {
            return Err(Error::EmptyInput("no scored document pairs for the heatmap"));
        }
        let h = heatmap_table(&Self::group_order(&docs), &entries, metric_id, threshold.tau)?;
        let stem = format!("heatmap.{}", metric_file_stem(metric_id));
        let dir = self.ws.reports_dir();
        let paths = vec![
            dir.join(format!("{stem}.csv")),
            dir.join(format!("{stem}.json")),
            dir.join(format!("{stem}.svg")),
        ];
        write_text(&paths[0], &heatmap_csv(&h)?)?;
        write_text(&paths[1], &heatmap_json(&h))?;
        write_text(&paths[2], &heatmap_svg(&h)?)?;
        Ok((h, paths))
    }

    /// Per-pair alignment diagram with QUDs and answer sentences.
    pub fn report(&self, pair: &PairId, metric_id: &str) -> Result<Vec<PathBuf>> {
        let source = self.ws.load_document(&pair.source)?;
        let target = self.ws.load_document(&pair.target)?;
        let s_seg = self.ws.load_segmentation(&source)?;
        let t_seg = self.ws.load_segmentation(&target)?;
        let matrix = self.ws.load_matrix(pair, metric_id)?;
        let alignment = self.ws.load_alignment(pair, metric_id)?;
        let level = self.cfg.level;
        let (s_quds, t_quds, fwd, bwd): (Vec<Qud>, Vec<Qud>, Vec<AnswerSet>, Vec<AnswerSet>) =
            if metric_id == Metric::Qudsim.id() {
                (
                    self.ws.load_quds(&pair.source, level)?.quds,
                    self.ws.load_quds(&pair.target, level)?.quds,
                    self.answers_at(pair, &target, level)?,
                    self.answers_at(&pair.reversed(), &source, level)?,
                )
            } else {
                Default::default()
            };
        let d = pair_diagram(&DiagramInputs {
            source: &source,
            target: &target,
            source_seg: &s_seg,
            target_seg: &t_seg,
            source_quds: &s_quds,
            target_quds: &t_quds,
            forward_answers: &fwd,
            backward_answers: &bwd,
            matrix: &matrix,
            alignment: &alignment,
        });
        let path = self
            .ws
            .reports_dir()
            .join(format!("{pair}.{}.diagram.json", metric_file_stem(metric_id)));
        write_json(&path, &d)?;
        Ok(vec![path])
    }

    /// Every LLM stage for every document, then answers for every eligible
    /// pair in both directions.
    pub fn run_pipeline(&self, level: AbstractionLevel) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        let ids = self.ws.document_ids()?;
        for id in &ids {
            out.extend(self.segment(id)?);
            if level == AbstractionLevel::Abstract {
                out.extend(self.abstract_document(id)?);
            }
            out.extend(self.quds(id, level)?);
        }
        for pair in self.eligible_pairs()? {
            out.extend(self.answer(&pair, level)?);
        }
        Ok(out)
    }
}
