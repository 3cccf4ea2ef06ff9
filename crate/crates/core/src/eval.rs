//! Alignment precision/recall/F1, answer agreement, gold construction by
//! intersection, abstraction-level answerability statistics and run-to-run
//! stability.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentSet, Counts};
use crate::corpus::{AnswerSet, Domain, GoldAlignment, PairId, Qud, Segmentation};
use crate::pipeline::answering_segments;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub pairs: usize,
}

impl EvalReport {
    fn from_counts(metric_id: &str, domain: Option<Domain>, c: Counts, pairs: usize) -> Self {
        let predicted = c.tp + c.fp;
        let gold = c.tp + c.fn_;
        let precision = match (predicted, gold) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => c.tp as f64 / predicted as f64,
        };
        let recall = match (gold, predicted) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => c.tp as f64 / gold as f64,
        };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            metric_id: metric_id.to_string(),
            domain,
            precision,
            recall,
            f1,
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            pairs,
        }
    }
}

/// P/R/F1 of one predicted alignment against gold. An empty prediction
/// against empty gold scores 1 throughout.
pub fn prf1(predicted: &AlignmentSet, gold: &GoldAlignment) -> Result<EvalReport> {
    if predicted.pair() != gold.pair() {
        return Err(Error::InvalidInput(format!(
            "prediction for {} compared with gold for {}",
            predicted.pair(),
            gold.pair()
        )));
    }
    let mut c = Counts::default();
    c.add(&predicted.aligned, &gold.aligned);
    Ok(EvalReport::from_counts(&predicted.metric_id, None, c, 1))
}

/// Micro-averaged P/R/F1 over many pairs. Predictions without gold are
/// skipped; gold without a prediction counts as an empty prediction.
pub fn prf1_pooled(
    metric_id: &str,
    domain: Option<Domain>,
    predicted: &[AlignmentSet],
    gold: &[GoldAlignment],
) -> Result<EvalReport> {
    if gold.is_empty() {
        return Err(Error::EmptyInput("no gold alignments"));
    }
    let by_pair: BTreeMap<PairId, &AlignmentSet> = predicted.iter().map(|p| (p.pair(), p)).collect();
    let empty = BTreeSet::new();
    let mut c = Counts::default();
    for g in gold {
        let p = by_pair.get(&g.pair()).map_or(&empty, |p| &p.aligned);
        c.add(p, &g.aligned);
    }
    Ok(EvalReport::from_counts(metric_id, domain, c, gold.len()))
}

fn iou(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

fn same_universe(a1: &AnswerSet, a2: &AnswerSet) -> Result<()> {
    if a1.qud_id != a2.qud_id || a1.target_document_id != a2.target_document_id {
        return Err(Error::InvalidInput(format!(
            "answers for {} on `{}` compared with {} on `{}`",
            a1.qud_id, a1.target_document_id, a2.qud_id, a2.target_document_id
        )));
    }
    Ok(())
}

/// Intersection over union of two answer sets; 1 when both are empty.
pub fn answer_agreement(a1: &AnswerSet, a2: &AnswerSet) -> Result<f64> {
    same_universe(a1, a2)?;
    Ok(iou(&a1.sentence_indices, &a2.sentence_indices))
}

/// Agreement after mapping both answer sets to their answering segments.
pub fn segment_agreement(a1: &AnswerSet, a2: &AnswerSet, seg: &Segmentation) -> Result<f64> {
    same_universe(a1, a2)?;
    Ok(iou(
        &answering_segments(a1, seg).segment_indices,
        &answering_segments(a2, seg).segment_indices,
    ))
}

type Key = (String, String);

fn keyed(sets: &[AnswerSet]) -> Result<BTreeMap<Key, &AnswerSet>> {
    let mut map = BTreeMap::new();
    for a in sets {
        if map
            .insert((a.qud_id.clone(), a.target_document_id.clone()), a)
            .is_some()
        {
            return Err(Error::InvalidInput(format!(
                "duplicate answer set for {} on `{}`",
                a.qud_id, a.target_document_id
            )));
        }
    }
    Ok(map)
}

fn matched<'a>(run1: &'a [AnswerSet], run2: &'a [AnswerSet]) -> Result<Vec<(&'a AnswerSet, &'a AnswerSet)>> {
    let (k1, k2) = (keyed(run1)?, keyed(run2)?);
    if k1.keys().ne(k2.keys()) {
        let only1 = k1.keys().filter(|k| !k2.contains_key(*k)).count();
        let only2 = k2.keys().filter(|k| !k1.contains_key(*k)).count();
        return Err(Error::InvalidInput(format!(
            "answer universes differ: {only1} only in the first, {only2} only in the second"
        )));
    }
    Ok(k1.into_iter().map(|(k, a)| (a, k2[&k])).collect())
}

/// Per-QUD intersection of two annotators' answer sets.
pub fn gold_intersection(ann1: &[AnswerSet], ann2: &[AnswerSet]) -> Result<Vec<AnswerSet>> {
    Ok(matched(ann1, ann2)?
        .into_iter()
        .map(|(a, b)| AnswerSet {
            qud_id: a.qud_id.clone(),
            target_document_id: a.target_document_id.clone(),
            sentence_indices: a
                .sentence_indices
                .intersection(&b.sentence_indices)
                .copied()
                .collect(),
        })
        .collect())
}

/// Gold alignment from answer sets: `(source segment of q, z)` for every
/// `z` in `Z_q`.
pub fn gold_alignment_from_answers(
    quds: &[Qud],
    answers: &[AnswerSet],
    target_seg: &Segmentation,
    provenance: Vec<String>,
) -> Result<GoldAlignment> {
    let by_id: BTreeMap<&str, &Qud> = quds.iter().map(|q| (q.id.as_str(), q)).collect();
    let source = quds
        .first()
        .map(|q| q.source_document_id.clone())
        .ok_or(Error::EmptyInput("no QUDs"))?;
    let mut aligned = BTreeSet::new();
    for a in answers {
        let q = by_id
            .get(a.qud_id.as_str())
            .ok_or_else(|| Error::InvalidInput(format!("answer for unknown QUD {}", a.qud_id)))?;
        if a.target_document_id != target_seg.document_id {
            return Err(Error::InvalidInput(format!(
                "answer for {} targets `{}`, segmentation is of `{}`",
                a.qud_id, a.target_document_id, target_seg.document_id
            )));
        }
        for z in answering_segments(a, target_seg).segment_indices {
            aligned.insert((q.source_segment_index, z));
        }
    }
    Ok(GoldAlignment {
        source_document_id: source,
        target_document_id: target_seg.document_id.clone(),
        aligned,
        provenance,
    })
}

/// The answer sets of one (source, target) direction together with the
/// target segmentation.
#[derive(Debug, Clone, Copy)]
pub struct PairAnswers<'a> {
    pub answers: &'a [AnswerSet],
    pub target_seg: &'a Segmentation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractionStats {
    pub quds: usize,
    pub pairs: usize,
    pub answerable: f64,
    pub unanswerable: f64,
    /// Mean |A_q| over answerable QUDs; 0 when none is answerable.
    pub sentences_per_answer: f64,
    /// Mean over pairs of |union of Z_q| / n_T.
    pub coverage: f64,
}

pub fn abstraction_stats(pairs: &[PairAnswers<'_>]) -> Result<AbstractionStats> {
    let quds: usize = pairs.iter().map(|p| p.answers.len()).sum();
    if quds == 0 {
        return Err(Error::EmptyInput("no answer sets"));
    }
    let mut answered = 0usize;
    let mut sentences = 0usize;
    let mut coverage = 0.0;
    for p in pairs {
        if p.target_seg.is_empty() {
            return Err(Error::InvalidInput(format!(
                "`{}` has no segments",
                p.target_seg.document_id
            )));
        }
        let mut covered = BTreeSet::new();
        for a in p.answers {
            if !a.is_empty() {
                answered += 1;
                sentences += a.len();
            }
            covered.extend(answering_segments(a, p.target_seg).segment_indices);
        }
        coverage += covered.len() as f64 / p.target_seg.len() as f64;
    }
    let answerable = answered as f64 / quds as f64;
    Ok(AbstractionStats {
        quds,
        pairs: pairs.len(),
        answerable,
        unanswerable: (quds - answered) as f64 / quds as f64,
        sentences_per_answer: if answered == 0 {
            0.0
        } else {
            sentences as f64 / answered as f64
        },
        coverage: coverage / pairs.len() as f64,
    })
}

/// Mean answer agreement between two runs over the same (QUD, target) set.
pub fn stability(run1: &[AnswerSet], run2: &[AnswerSet]) -> Result<f64> {
    let pairs = matched(run1, run2)?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no answer sets"));
    }
    let total: f64 = pairs
        .iter()
        .map(|(a, b)| iou(&a.sentence_indices, &b.sentence_indices))
        .sum();
    Ok(total / pairs.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub quds: usize,
    pub pairs: usize,
    /// Mean over all QUDs.
    pub sentence_micro: f64,
    pub segment_micro: f64,
    /// Mean over pairs of the per-pair mean.
    pub sentence_macro: f64,
    pub segment_macro: f64,
}

/// Sentence- and segment-level agreement between two annotations of the
/// same pairs, averaged per QUD and per pair.
pub fn agreement_summary(pairs: &[(&[AnswerSet], &[AnswerSet], &Segmentation)]) -> Result<AgreementSummary> {
    let mut sent_all = Vec::new();
    let mut seg_all = Vec::new();
    let mut sent_pair = Vec::new();
    let mut seg_pair = Vec::new();
    for (r1, r2, seg) in pairs {
        let matched = matched(r1, r2)?;
        if matched.is_empty() {
            continue;
        }
        let mut s = Vec::new();
        let mut g = Vec::new();
        for (a, b) in matched {
            s.push(answer_agreement(a, b)?);
            g.push(segment_agreement(a, b, seg)?);
        }
        sent_pair.push(mean(&s));
        seg_pair.push(mean(&g));
        sent_all.extend(s);
        seg_all.extend(g);
    }
    if sent_all.is_empty() {
        return Err(Error::EmptyInput("no answer sets"));
    }
    Ok(AgreementSummary {
        quds: sent_all.len(),
        pairs: sent_pair.len(),
        sentence_micro: mean(&sent_all),
        segment_micro: mean(&seg_all),
        sentence_macro: mean(&sent_pair),
        segment_macro: mean(&seg_pair),
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AbstractionLevel;

    fn a(q: &str, ix: &[usize]) -> AnswerSet {
        AnswerSet {
            qud_id: q.into(),
            target_document_id: "t".into(),
            sentence_indices: ix.iter().copied().collect(),
        }
    }

    fn pair_set(aligned: &[(usize, usize)]) -> AlignmentSet {
        AlignmentSet::from_pairs(
            &PairId::new("s", "t"),
            "qudsim",
            0.2,
            2,
            2,
            aligned.iter().copied(),
        )
    }

    fn gold(aligned: &[(usize, usize)]) -> GoldAlignment {
        GoldAlignment {
            source_document_id: "s".into(),
            target_document_id: "t".into(),
            aligned: aligned.iter().copied().collect(),
            provenance: vec!["a1".into()],
        }
    }

    #[test]
    fn prf1_examples() {
        let r = prf1(&pair_set(&[(1, 1), (1, 2)]), &gold(&[(1, 1), (2, 2)])).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.5, 0.5, 0.5));
        let r = prf1(&pair_set(&[(1, 1)]), &gold(&[(1, 1)])).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (1.0, 1.0, 1.0));
        let r = prf1(&pair_set(&[]), &gold(&[(1, 1)])).unwrap();
        assert_eq!((r.precision, r.recall, r.f1), (0.0, 0.0, 0.0));
        let mut g = gold(&[]);
        g.target_document_id = "x".into();
        assert!(prf1(&pair_set(&[]), &g).is_err());
    }

    #[test]
    fn agreement_examples() {
        assert_eq!(
            answer_agreement(&a("q", &[1, 2, 3]), &a("q", &[2, 3, 4])).unwrap(),
            0.5
        );
        assert_eq!(answer_agreement(&a("q", &[]), &a("q", &[])).unwrap(), 1.0);
        assert_eq!(answer_agreement(&a("q", &[]), &a("q", &[1])).unwrap(), 0.0);
        assert!(answer_agreement(&a("q", &[]), &a("r", &[])).is_err());
        let seg = Segmentation::from_groups("t", vec![vec![1, 2], vec![3, 4], vec![5]]);
        assert_eq!(
            segment_agreement(&a("q", &[3]), &a("q", &[4]), &seg).unwrap(),
            1.0
        );
        assert_eq!(
            segment_agreement(&a("q", &[1]), &a("q", &[5]), &seg).unwrap(),
            0.0
        );
    }

    #[test]
    fn intersection_examples() {
        let g = gold_intersection(&[a("q", &[1, 2])], &[a("q", &[2, 3])]).unwrap();
        assert_eq!(g[0].sentence_indices, [2].into_iter().collect());
        assert!(gold_intersection(&[a("q", &[1])], &[a("r", &[1])]).is_err());
    }

    #[test]
    fn gold_from_answers() {
        let q = Qud {
            id: "s:abstract:2.1".into(),
            source_document_id: "s".into(),
            source_segment_index: 2,
            question: "Why?".into(),
            abstraction_level: AbstractionLevel::Abstract,
        };
        let seg = Segmentation::from_groups("t", vec![vec![1, 2], vec![3, 4]]);
        let g = gold_alignment_from_answers(&[q], &[a("s:abstract:2.1", &[1, 4])], &seg, vec![]).unwrap();
        assert_eq!(g.aligned, [(2, 1), (2, 2)].into_iter().collect());
    }

    #[test]
    fn abstraction_examples() {
        let seg = Segmentation::from_groups("t", vec![vec![1, 2], vec![3, 4], vec![5, 6], vec![7]]);
        let answers = [a("q", &[1, 2, 3])];
        let s = abstraction_stats(&[PairAnswers {
            answers: &answers,
            target_seg: &seg,
        }])
        .unwrap();
        assert_eq!(
            (s.sentences_per_answer, s.coverage, s.answerable),
            (3.0, 0.5, 1.0)
        );
        let none = [a("q", &[]), a("r", &[])];
        let s = abstraction_stats(&[PairAnswers {
            answers: &none,
            target_seg: &seg,
        }])
        .unwrap();
        assert_eq!((s.answerable, s.unanswerable, s.coverage), (0.0, 1.0, 0.0));
        assert!(abstraction_stats(&[]).is_err());
    }

    #[test]
    fn stability_examples() {
        let r1 = [a("q", &[1, 2]), a("r", &[3])];
        assert_eq!(stability(&r1, &r1).unwrap(), 1.0);
        let r2 = [a("q", &[1]), a("r", &[3, 4])];
        assert_eq!(stability(&r1, &r2).unwrap(), 0.5);
        assert!(stability(&r1, &r2[..1]).is_err());
    }
}
