//! QUD answerability similarity between segments of a document pair.
//!
//! For source segment `i` with QUDs `Q_i` and target segment `j`:
//!
//! ```text
//! sim(i -> j) = (1/|Q_i|) * sum_{q in Q_i} |A_q ∩ T_j| / |A_q|     (0 when A_q is empty)
//! qudsim(i, j) = H(sim(i -> j), sim(j -> i))
//! ```
//!
//! where `H` is the harmonic mean with `H(0, 0) = 0`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{AnswerSet, PairId, Qud, Segmentation};
use crate::{Error, Result};

/// Identifier of a segment-similarity metric as used in file names and
/// config keys.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Qudsim,
    Jaccard(usize),
    RougeL,
    Cosine,
    /// LLM judge; carries the judge model name.
    Judge(String),
}

impl Metric {
    pub fn id(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Qudsim => f.write_str("qudsim"),
            Metric::Jaccard(n) => write!(f, "jaccard{n}"),
            Metric::RougeL => f.write_str("rougeL"),
            Metric::Cosine => f.write_str("cosine"),
            Metric::Judge(model) => write!(f, "judge:{model}"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("unknown metric `{s}`"));
        match s {
            "qudsim" => Ok(Metric::Qudsim),
            "rougeL" | "rougel" | "rouge-l" => Ok(Metric::RougeL),
            "cosine" => Ok(Metric::Cosine),
            _ => {
                if let Some(n) = s.strip_prefix("jaccard") {
                    let n: usize = n.parse().map_err(|_| bad())?;
                    if (1..=4).contains(&n) {
                        return Ok(Metric::Jaccard(n));
                    }
                } else if let Some(model) = s.strip_prefix("judge:") {
                    if !model.is_empty() {
                        return Ok(Metric::Judge(model.to_string()));
                    }
                }
                Err(bad())
            }
        }
    }
}

/// The two directional matrices behind a QUDsim matrix, both indexed
/// `[source segment][target segment]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionComponents {
    /// `forward[i][j] = sim(S_i -> T_j)`
    pub forward: Vec<Vec<f64>>,
    /// `backward[i][j] = sim(T_j -> S_i)`
    pub backward: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub source_document_id: String,
    pub target_document_id: String,
    pub metric_id: String,
    pub rows: usize,
    pub cols: usize,
    /// `values[i-1][j-1]` is the score of source segment `i` against target
    /// segment `j`.
    pub values: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direction_components: Option<DirectionComponents>,
    /// Unclamped scores, kept when the stored values were clamped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_values: Option<Vec<Vec<f64>>>,
}

fn check_grid(name: &str, grid: &[Vec<f64>], rows: usize, cols: usize, unit: bool) -> Result<()> {
    if grid.len() != rows || grid.iter().any(|r| r.len() != cols) {
        return Err(Error::Scoring(format!("{name} is not {rows}x{cols}")));
    }
    for (i, row) in grid.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let ok = if unit {
                (0.0..=1.0).contains(&v)
            } else {
                v.is_finite()
            };
            if !ok {
                return Err(Error::Scoring(format!("{name}[{i}][{j}] = {v} out of range")));
            }
        }
    }
    Ok(())
}

fn transpose(grid: &[Vec<f64>], cols: usize) -> Vec<Vec<f64>> {
    (0..cols)
        .map(|j| grid.iter().map(|row| row[j]).collect())
        .collect()
}

impl SimilarityMatrix {
    pub fn new(pair: &PairId, metric_id: impl Into<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let rows = values.len();
        let cols = values.first().map_or(0, Vec::len);
        let m = Self {
            source_document_id: pair.source.clone(),
            target_document_id: pair.target.clone(),
            metric_id: metric_id.into(),
            rows,
            cols,
            values,
            direction_components: None,
            raw_values: None,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn pair(&self) -> PairId {
        PairId::new(&self.source_document_id, &self.target_document_id)
    }

    /// Score at 1-based segment indices.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values
            .get(i.checked_sub(1)?)?
            .get(j.checked_sub(1)?)
            .copied()
    }

    /// Dimensions match, every value lies in [0, 1], and the directional
    /// components (when present) reproduce the values.
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Scoring(format!(
                "{} matrix has a zero dimension",
                self.pair()
            )));
        }
        check_grid("values", &self.values, self.rows, self.cols, true)?;
        if let Some(dc) = &self.direction_components {
            check_grid("forward", &dc.forward, self.rows, self.cols, true)?;
            check_grid("backward", &dc.backward, self.rows, self.cols, true)?;
            for i in 0..self.rows {
                for j in 0..self.cols {
                    let h = qudsim_score(dc.forward[i][j], dc.backward[i][j])?;
                    if h != self.values[i][j] {
                        return Err(Error::Scoring(format!(
                            "values[{i}][{j}] is not the harmonic mean of its components"
                        )));
                    }
                }
            }
        }
        if let Some(raw) = &self.raw_values {
            check_grid("raw_values", raw, self.rows, self.cols, false)?;
        }
        Ok(())
    }

    /// The matrix of the reversed pair.
    pub fn transposed(&self) -> Self {
        Self {
            source_document_id: self.target_document_id.clone(),
            target_document_id: self.source_document_id.clone(),
            metric_id: self.metric_id.clone(),
            rows: self.cols,
            cols: self.rows,
            values: transpose(&self.values, self.cols),
            direction_components: self.direction_components.as_ref().map(|dc| DirectionComponents {
                forward: transpose(&dc.backward, self.cols),
                backward: transpose(&dc.forward, self.cols),
            }),
            raw_values: self.raw_values.as_ref().map(|r| transpose(r, self.cols)),
        }
    }
}

/// Harmonic mean of two directional scores, 0 when both are 0.
pub fn qudsim_score(fwd: f64, bwd: f64) -> Result<f64> {
    for v in [fwd, bwd] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Scoring(format!("directional score {v} outside [0, 1]")));
        }
    }
    if fwd == bwd {
        return Ok(fwd);
    }
    if fwd + bwd == 0.0 {
        return Ok(0.0);
    }
    let h = 2.0 * fwd * bwd / (fwd + bwd);
    Ok(h.clamp(fwd.min(bwd), fwd.max(bwd)))
}

/// Per-QUD answer fractions over the target segments: entry `j-1` is
/// `|A_q ∩ T_j| / |A_q|`, all zeros for an empty answer set.
fn answer_fractions(answers: &AnswerSet, owner: &BTreeMap<usize, usize>, cols: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; cols];
    for i in &answers.sentence_indices {
        let j = owner.get(i).ok_or_else(|| {
            Error::Scoring(format!(
                "answer of {} cites sentence {i}, which no target segment covers",
                answers.qud_id
            ))
        })?;
        counts[j - 1] += 1;
    }
    let total = answers.sentence_indices.len();
    Ok(counts
        .into_iter()
        .map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect())
}

fn answer_lookup<'a>(answers: &'a [AnswerSet], target_id: &str) -> Result<BTreeMap<&'a str, &'a AnswerSet>> {
    let mut map = BTreeMap::new();
    for a in answers {
        if a.target_document_id != target_id {
            return Err(Error::Scoring(format!(
                "answer set for {} targets `{}`, expected `{target_id}`",
                a.qud_id, a.target_document_id
            )));
        }
        map.insert(a.qud_id.as_str(), a);
    }
    Ok(map)
}

/// `sim(S_i -> T_j)` for the QUDs of one source segment. `answers` must hold
/// an answer set for each of them against the target document.
pub fn directional_sim(
    segment_quds: &[Qud],
    answers: &[AnswerSet],
    target_seg: &Segmentation,
    j: usize,
) -> Result<f64> {
    if segment_quds.is_empty() {
        return Err(Error::Scoring("source segment has no QUDs".into()));
    }
    if j == 0 || j > target_seg.len() {
        return Err(Error::Scoring(format!(
            "target segment {j} out of range 1..={}",
            target_seg.len()
        )));
    }
    let lookup = answer_lookup(answers, &target_seg.document_id)?;
    let owner = target_seg.sentence_to_segment();
    let mut total = 0.0;
    for q in segment_quds {
        let a = lookup
            .get(q.id.as_str())
            .ok_or_else(|| Error::Scoring(format!("no answer set for {}", q.id)))?;
        total += answer_fractions(a, &owner, target_seg.len())?[j - 1];
    }
    Ok(total / segment_quds.len() as f64)
}

/// The full `sim(S_i -> T_j)` matrix, `[i-1][j-1]`.
pub fn directional_matrix(
    quds: &[Qud],
    answers: &[AnswerSet],
    source_seg: &Segmentation,
    target_seg: &Segmentation,
) -> Result<Vec<Vec<f64>>> {
    let lookup = answer_lookup(answers, &target_seg.document_id)?;
    let owner = target_seg.sentence_to_segment();
    let (rows, cols) = (source_seg.len(), target_seg.len());
    let mut by_segment: Vec<Vec<&Qud>> = vec![Vec::new(); rows];
    for q in quds {
        if q.source_document_id != source_seg.document_id {
            return Err(Error::Scoring(format!(
                "{} belongs to `{}`, not `{}`",
                q.id, q.source_document_id, source_seg.document_id
            )));
        }
        let slot = q
            .source_segment_index
            .checked_sub(1)
            .and_then(|k| by_segment.get_mut(k))
            .ok_or_else(|| {
                Error::Scoring(format!(
                    "{} names segment {} of {rows}",
                    q.id, q.source_segment_index
                ))
            })?;
        slot.push(q);
    }
    let mut out = Vec::with_capacity(rows);
    for (i, seg_quds) in by_segment.iter().enumerate() {
        if seg_quds.is_empty() {
            return Err(Error::Scoring(format!(
                "segment {} of `{}` has no QUDs",
                i + 1,
                source_seg.document_id
            )));
        }
        let mut row = vec![0.0; cols];
        for q in seg_quds {
            let a = lookup
                .get(q.id.as_str())
                .ok_or_else(|| Error::Scoring(format!("no answer set for {}", q.id)))?;
            for (cell, f) in row.iter_mut().zip(answer_fractions(a, &owner, cols)?) {
                *cell += f;
            }
        }
        let n = seg_quds.len() as f64;
        out.push(row.into_iter().map(|v| (v / n).min(1.0)).collect());
    }
    Ok(out)
}

/// Everything needed to score one ordered document pair.
#[derive(Debug, Clone, Copy)]
pub struct PairArtifacts<'a> {
    pub source_seg: &'a Segmentation,
    pub target_seg: &'a Segmentation,
    pub source_quds: &'a [Qud],
    pub target_quds: &'a [Qud],
    /// Source QUDs answered against the target document.
    pub forward_answers: &'a [AnswerSet],
    /// Target QUDs answered against the source document.
    pub backward_answers: &'a [AnswerSet],
}

/// QUDsim matrix with both directional components retained.
pub fn similarity_matrix(p: &PairArtifacts<'_>) -> Result<SimilarityMatrix> {
    let forward = directional_matrix(p.source_quds, p.forward_answers, p.source_seg, p.target_seg)?;
    let back_t = directional_matrix(p.target_quds, p.backward_answers, p.target_seg, p.source_seg)?;
    let (rows, cols) = (p.source_seg.len(), p.target_seg.len());
    let backward = transpose(&back_t, rows);
    let mut values = vec![vec![0.0; cols]; rows];
    for i in 0..rows {
        for j in 0..cols {
            values[i][j] = qudsim_score(forward[i][j], backward[i][j])?;
        }
    }
    let m = SimilarityMatrix {
        source_document_id: p.source_seg.document_id.clone(),
        target_document_id: p.target_seg.document_id.clone(),
        metric_id: Metric::Qudsim.id(),
        rows,
        cols,
        values,
        direction_components: Some(DirectionComponents { forward, backward }),
        raw_values: None,
    };
    m.validate()?;
    Ok(m)
}

/// Segment indices that have at least one QUD.
pub fn segments_with_quds(quds: &[Qud]) -> BTreeSet<usize> {
    quds.iter().map(|q| q.source_segment_index).collect()
}
