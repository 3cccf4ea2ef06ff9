//! Surface and embedding baselines over segment pairs: n-gram Jaccard,
//! ROUGE-L, embedding cosine and an LLM judge.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::PairId;
use crate::llm::{render, BackendConfig, Gateway, TemplateId, TranscriptEntry};
use crate::pipeline::{parse::parse_judge_score, Staged, MAX_REPROMPTS};
use crate::scoring::{Metric, SimilarityMatrix};
use crate::{Error, Result};

/// F-measure weighting for ROUGE-L; 1 weighs precision and recall equally.
pub const ROUGE_L_BETA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedSegment {
    pub document_id: String,
    pub segment_index: usize,
    pub tokens: Vec<String>,
}

impl TokenizedSegment {
    pub fn new(document_id: impl Into<String>, segment_index: usize, text: &str) -> Self {
        Self {
            document_id: document_id.into(),
            segment_index,
            tokens: tokenize(text),
        }
    }
}

/// Lowercases, deletes punctuation and splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

pub fn ngrams(tokens: &[String], n: usize) -> BTreeSet<&[String]> {
    if n == 0 {
        return BTreeSet::new();
    }
    tokens.windows(n).collect()
}

/// Jaccard similarity of the unique n-gram sets; 0 when both are empty.
pub fn ngram_jaccard(s: &[String], t: &[String], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidInput("n-gram order must be at least 1".into()));
    }
    let (a, b) = (ngrams(s, n), ngrams(t, n));
    let union = a.union(&b).count();
    if union == 0 {
        return Ok(0.0);
    }
    Ok(a.intersection(&b).count() as f64 / union as f64)
}

/// Length of the longest common subsequence.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure with `P = LCS/|t|`, `R = LCS/|s|`.
pub fn rouge_l(s: &[String], t: &[String]) -> f64 {
    let lcs = lcs_len(s, t);
    if lcs == 0 {
        return 0.0;
    }
    let p = lcs as f64 / t.len() as f64;
    let r = lcs as f64 / s.len() as f64;
    let b2 = ROUGE_L_BETA * ROUGE_L_BETA;
    (1.0 + b2) * p * r / (r + b2 * p)
}

/// Cosine of two vectors clamped to [-1, 1]. A zero vector gives 0.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "embedding dimensions differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    // sqrt(x * x) == x exactly, so identical vectors give exactly 1.
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Cosine similarity of two texts through the embedding backend, as stored:
/// `max(0, cos)`. Returns `(stored, raw)`.
pub fn cosine_sim(gw: &Gateway, cfg: &BackendConfig, s: &str, t: &str) -> Result<(f64, f64)> {
    let raw = cosine(&gw.embed(s, cfg)?, &gw.embed(t, cfg)?)?;
    Ok((raw.max(0.0), raw))
}

/// Structural similarity rated by an LLM on 0–100, scaled to [0, 1].
pub fn llm_judge(gw: &Gateway, cfg: &BackendConfig, s: &str, t: &str) -> Result<Staged<f64>> {
    let spec = render(TemplateId::Judge, &[("doc1", s), ("doc2", t)])?;
    let mut transcript: Vec<TranscriptEntry> = Vec::new();
    for attempt in 0..=MAX_REPROMPTS {
        let entry = gw.chat(&spec, cfg, attempt)?;
        let score = parse_judge_score(&entry.response);
        transcript.push(entry);
        if let Some(score) = score {
            return Ok(Staged {
                value: score / 100.0,
                transcript,
                notes: Vec::new(),
            });
        }
        log::warn!("judge attempt {attempt}: no score in response");
    }
    Err(Error::Parse {
        stage: "judge",
        message: "no 0-100 score in response".into(),
        transcript: transcript.into_iter().map(|t| t.response).collect(),
    })
}

fn grid<F: Fn(usize, usize) -> f64 + Sync>(rows: usize, cols: usize, f: F) -> Vec<Vec<f64>> {
    (0..rows).map(|i| (0..cols).map(|j| f(i, j)).collect()).collect()
}

/// Jaccard or ROUGE-L matrix over the segment texts of a pair.
pub fn lexical_matrix(
    metric: &Metric,
    pair: &PairId,
    source_texts: &[String],
    target_texts: &[String],
) -> Result<SimilarityMatrix> {
    let s: Vec<Vec<String>> = source_texts.iter().map(|t| tokenize(t)).collect();
    let t: Vec<Vec<String>> = target_texts.iter().map(|t| tokenize(t)).collect();
    let values = match metric {
        Metric::Jaccard(n) => {
            let n = *n;
            if n == 0 {
                return Err(Error::InvalidInput("n-gram order must be at least 1".into()));
            }
            grid(s.len(), t.len(), |i, j| {
                ngram_jaccard(&s[i], &t[j], n).unwrap_or(0.0)
            })
        }
        Metric::RougeL => grid(s.len(), t.len(), |i, j| rouge_l(&s[i], &t[j])),
        other => return Err(Error::InvalidInput(format!("`{other}` is not a lexical metric"))),
    };
    SimilarityMatrix::new(pair, metric.id(), values)
}

/// Cosine matrix; stored values are clamped at 0 and the raw cosines kept.
pub fn cosine_matrix(
    gw: &Gateway,
    cfg: &BackendConfig,
    pair: &PairId,
    source_texts: &[String],
    target_texts: &[String],
) -> Result<SimilarityMatrix> {
    let embed_all = |texts: &[String]| -> Result<Vec<Vec<f64>>> {
        gw.install(|| texts.par_iter().map(|t| gw.embed(t, cfg)).collect())
    };
    let s = embed_all(source_texts)?;
    let t = embed_all(target_texts)?;
    let mut raw = vec![vec![0.0; t.len()]; s.len()];
    for (i, a) in s.iter().enumerate() {
        for (j, b) in t.iter().enumerate() {
            raw[i][j] = cosine(a, b)?;
        }
    }
    let clamped = raw
        .iter()
        .map(|r| r.iter().map(|v| v.max(0.0)).collect())
        .collect();
    let mut m = SimilarityMatrix::new(pair, Metric::Cosine.id(), clamped)?;
    m.raw_values = Some(raw);
    Ok(m)
}

/// LLM-judge matrix, one judge call per segment pair.
pub fn judge_matrix(
    gw: &Gateway,
    cfg: &BackendConfig,
    pair: &PairId,
    source_texts: &[String],
    target_texts: &[String],
) -> Result<Staged<SimilarityMatrix>> {
    let cells: Vec<(usize, usize)> = (0..source_texts.len())
        .flat_map(|i| (0..target_texts.len()).map(move |j| (i, j)))
        .collect();
    let scored: Vec<Staged<f64>> = gw.install(|| {
        cells
            .par_iter()
            .map(|&(i, j)| llm_judge(gw, cfg, &source_texts[i], &target_texts[j]))
            .collect::<Result<_>>()
    })?;
    let mut values = vec![vec![0.0; target_texts.len()]; source_texts.len()];
    let mut transcript = Vec::new();
    for (&(i, j), s) in cells.iter().zip(scored) {
        values[i][j] = s.value;
        transcript.extend(s.transcript);
    }
    let metric = Metric::Judge(cfg.model_name.clone());
    Ok(Staged {
        value: SimilarityMatrix::new(pair, metric.id(), values)?,
        transcript,
        notes: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{FixtureBackend, FixtureEntry};
    use std::collections::BTreeMap;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s)
    }

    #[test]
    fn tokenizer_strips_punctuation() {
        assert_eq!(toks("The Earth, it's FLAT!"), vec!["the", "earth", "its", "flat"]);
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(ngram_jaccard(&toks("a b c"), &toks("b c d"), 1).unwrap(), 0.5);
        assert_eq!(ngram_jaccard(&toks("a b c"), &toks("a b c"), 3).unwrap(), 1.0);
        assert_eq!(ngram_jaccard(&toks("a b"), &toks("c"), 3).unwrap(), 0.0);
        assert!(ngram_jaccard(&toks("a"), &toks("a"), 0).is_err());
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l(&toks("a b c d"), &toks("a c d e")), 0.75);
        assert_eq!(rouge_l(&toks("x y"), &toks("x y")), 1.0);
        assert_eq!(rouge_l(&toks("x y"), &toks("p q")), 0.0);
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), -1.0);
        assert!(cosine(&[1.0], &[1.0, 0.0]).is_err());
    }

    fn judge_gateway(responses: &[(u32, &str)]) -> (Gateway, BackendConfig, tempfile::TempDir) {
        let entries = responses
            .iter()
            .map(|&(attempt, r)| FixtureEntry {
                template: TemplateId::Judge,
                attempt,
                contains: Vec::new(),
                response: r.to_string(),
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let cfg = BackendConfig::new("fixture://", "gpt-4o").with_cache_dir(dir.path());
        let gw = Gateway::new(Box::new(FixtureBackend::new(entries, BTreeMap::new())), 1);
        (gw, cfg, dir)
    }

    #[test]
    fn judge_normalizes_and_reprompts() {
        let (gw, cfg, _d) = judge_gateway(&[(0, "85")]);
        assert_eq!(llm_judge(&gw, &cfg, "a", "b").unwrap().value, 0.85);
        let (gw, cfg, _d) = judge_gateway(&[(0, "Score: 60/100")]);
        assert_eq!(llm_judge(&gw, &cfg, "a", "b").unwrap().value, 0.6);
        let (gw, cfg, _d) = judge_gateway(&[(0, "hmm"), (1, "Similar.")]);
        match llm_judge(&gw, &cfg, "a", "b") {
            Err(Error::Parse { transcript, .. }) => assert_eq!(transcript.len(), 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lexical_matrix_shape() {
        let pair = PairId::new("a", "b");
        let m = lexical_matrix(
            &Metric::Jaccard(1),
            &pair,
            &["a b".into(), "c".into()],
            &["a b".into()],
        )
        .unwrap();
        assert_eq!((m.rows, m.cols), (2, 1));
        assert_eq!(m.values, vec![vec![1.0], vec![0.0]]);
        assert!(lexical_matrix(&Metric::Cosine, &pair, &["a".into()], &["a".into()]).is_err());
    }
}
