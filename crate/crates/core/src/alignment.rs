//! Thresholded segment alignment, threshold calibration against gold
//! alignments, document-level aggregation, discourse-template mining and
//! group heatmaps.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocumentMeta, GoldAlignment, PairId};
use crate::scoring::SimilarityMatrix;
use crate::{Error, Result};

const DEFAULT_THRESHOLDS: &str = include_str!("../thresholds.toml");

#[derive(Debug, Deserialize)]
struct ThresholdFile {
    version: u32,
    thresholds: BTreeMap<String, f64>,
}

static DEFAULTS: LazyLock<ThresholdFile> =
    LazyLock::new(|| toml::from_str(DEFAULT_THRESHOLDS).expect("bundled thresholds.toml parses"));

/// Version of the bundled threshold table.
pub fn default_thresholds_version() -> u32 {
    DEFAULTS.version
}

/// Bundled default threshold per metric id.
pub fn default_thresholds() -> &'static BTreeMap<String, f64> {
    &DEFAULTS.thresholds
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    /// Taken from the bundled threshold table.
    Default { version: u32 },
    /// Given on the command line or in a config file.
    Manual,
    Calibrated {
        seed: u64,
        dev_fraction: f64,
        achieved_f1: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub metric_id: String,
    pub tau: f64,
    pub provenance: Provenance,
}

impl ThresholdConfig {
    pub fn new(metric_id: impl Into<String>, tau: f64, provenance: Provenance) -> Result<Self> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidInput(format!("threshold {tau} outside [0, 1]")));
        }
        Ok(Self {
            metric_id: metric_id.into(),
            tau,
            provenance,
        })
    }

    /// The bundled default for `metric_id`, if there is one.
    pub fn default_for(metric_id: &str) -> Option<Self> {
        default_thresholds().get(metric_id).map(|&tau| Self {
            metric_id: metric_id.to_string(),
            tau,
            provenance: Provenance::Default {
                version: default_thresholds_version(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSet {
    pub source_document_id: String,
    pub target_document_id: String,
    pub metric_id: String,
    pub tau: f64,
    pub rows: usize,
    pub cols: usize,
    /// 1-based (source segment, target segment) pairs.
    pub aligned: BTreeSet<(usize, usize)>,
}

impl AlignmentSet {
    pub fn pair(&self) -> PairId {
        PairId::new(&self.source_document_id, &self.target_document_id)
    }

    pub fn from_pairs(
        pair: &PairId,
        metric_id: &str,
        tau: f64,
        rows: usize,
        cols: usize,
        aligned: impl IntoIterator<Item = (usize, usize)>,
    ) -> Self {
        Self {
            source_document_id: pair.source.clone(),
            target_document_id: pair.target.clone(),
            metric_id: metric_id.to_string(),
            tau,
            rows,
            cols,
            aligned: aligned.into_iter().collect(),
        }
    }
}

/// Aligns every cell scoring strictly above `tau`.
pub fn threshold_align(m: &SimilarityMatrix, tau: f64) -> AlignmentSet {
    threshold_align_with(m, tau, false)
}

/// As [`threshold_align`]; with `per_direction` set and directional
/// components present, both directions must exceed `tau` individually.
pub fn threshold_align_with(m: &SimilarityMatrix, tau: f64, per_direction: bool) -> AlignmentSet {
    let mut aligned = BTreeSet::new();
    for i in 0..m.rows {
        for j in 0..m.cols {
            let hit = match (&m.direction_components, per_direction) {
                (Some(dc), true) => dc.forward[i][j] > tau && dc.backward[i][j] > tau,
                _ => m.values[i][j] > tau,
            };
            if hit {
                aligned.insert((i + 1, j + 1));
            }
        }
    }
    AlignmentSet::from_pairs(&m.pair(), &m.metric_id, tau, m.rows, m.cols, aligned)
}

/// Pooled confusion counts over segment-pair decisions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    pub fn add(&mut self, predicted: &BTreeSet<(usize, usize)>, gold: &BTreeSet<(usize, usize)>) {
        let tp = predicted.intersection(gold).count();
        self.tp += tp;
        self.fp += predicted.len() - tp;
        self.fn_ += gold.len() - tp;
    }

    /// F1 = 2TP / (2TP + FP + FN); 1 when there is nothing to predict and
    /// nothing was predicted.
    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub config: ThresholdConfig,
    pub dev_pairs: Vec<PairId>,
    pub test_pairs: Vec<PairId>,
    /// Every candidate tau with its pooled dev F1, ascending in tau.
    pub scan: Vec<(f64, f64)>,
    pub dev_f1: f64,
    /// Pooled F1 on the held-out pairs; `None` when every pair went to dev.
    pub test_f1: Option<f64>,
}

fn pooled_f1(pairs: &[(&SimilarityMatrix, &GoldAlignment)], tau: f64, per_direction: bool) -> f64 {
    let mut counts = Counts::default();
    for (m, g) in pairs {
        counts.add(&threshold_align_with(m, tau, per_direction).aligned, &g.aligned);
    }
    counts.f1()
}

/// Picks the tau that maximizes pooled F1 on a seeded random dev split of
/// the pairs. Candidates are 0 and every distinct dev score; ties go to the
/// smallest tau.
pub fn calibrate_threshold(
    scores: &[SimilarityMatrix],
    gold: &[GoldAlignment],
    dev_fraction: f64,
    seed: u64,
    per_direction: bool,
) -> Result<Calibration> {
    if gold.is_empty() {
        return Err(Error::EmptyInput("no gold alignments to calibrate against"));
    }
    if !(dev_fraction > 0.0 && dev_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "dev fraction {dev_fraction} outside (0, 1]"
        )));
    }
    let gold_by_pair: BTreeMap<String, &GoldAlignment> =
        gold.iter().map(|g| (g.pair().to_string(), g)).collect();
    let metric_ids: BTreeSet<&str> = scores.iter().map(|m| m.metric_id.as_str()).collect();
    if metric_ids.len() > 1 {
        return Err(Error::InvalidInput(format!(
            "matrices mix metrics: {metric_ids:?}"
        )));
    }
    let mut pairs: Vec<(&SimilarityMatrix, &GoldAlignment)> = Vec::new();
    for m in scores {
        if let Some(g) = gold_by_pair.get(&m.pair().to_string()) {
            g.validate_dims(m.rows, m.cols)?;
            pairs.push((m, g));
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptyInput("no scored pair has a gold alignment"));
    }
    pairs.sort_by_key(|(m, _)| m.pair().to_string());
    pairs.dedup_by_key(|(m, _)| m.pair().to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let n_dev = ((dev_fraction * pairs.len() as f64).ceil() as usize).clamp(1, pairs.len());
    let (dev, test) = pairs.split_at(n_dev);

    let mut candidates: Vec<f64> = vec![0.0];
    for (m, _) in dev {
        for row in &m.values {
            candidates.extend(row.iter().copied());
        }
        if per_direction {
            if let Some(dc) = &m.direction_components {
                for grid in [&dc.forward, &dc.backward] {
                    for row in grid {
                        candidates.extend(row.iter().copied());
                    }
                }
            }
        }
    }
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let scan: Vec<(f64, f64)> = candidates
        .iter()
        .map(|&tau| (tau, pooled_f1(dev, tau, per_direction)))
        .collect();
    let (tau, dev_f1) = scan
        .iter()
        .copied()
        .fold(None, |best: Option<(f64, f64)>, (tau, f1)| match best {
            Some((_, b)) if b >= f1 => best,
            _ => Some((tau, f1)),
        })
        .expect("at least one candidate");
    let test_f1 = (!test.is_empty()).then(|| pooled_f1(test, tau, per_direction));
    let metric_id = dev[0].0.metric_id.clone();
    Ok(Calibration {
        config: ThresholdConfig::new(
            metric_id,
            tau,
            Provenance::Calibrated {
                seed,
                dev_fraction,
                achieved_f1: dev_f1,
            },
        )?,
        dev_pairs: dev.iter().map(|(m, _)| m.pair()).collect(),
        test_pairs: test.iter().map(|(m, _)| m.pair()).collect(),
        scan,
        dev_f1,
        test_f1,
    })
}

/// Harmonic mean of two fractions, 0 when both are 0.
fn harmonic(a: f64, b: f64) -> f64 {
    if a == b {
        a
    } else if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Harmonic mean of the fraction of source segments and the fraction of
/// target segments that take part in at least one alignment.
pub fn document_similarity(a: &AlignmentSet, source_segments: usize, target_segments: usize) -> Result<f64> {
    if source_segments == 0 || target_segments == 0 {
        return Err(Error::InvalidInput("document with zero segments".into()));
    }
    let src: BTreeSet<usize> = a.aligned.iter().map(|&(i, _)| i).collect();
    let tgt: BTreeSet<usize> = a.aligned.iter().map(|&(_, j)| j).collect();
    if src.iter().any(|&i| i == 0 || i > source_segments)
        || tgt.iter().any(|&j| j == 0 || j > target_segments)
    {
        return Err(Error::InvalidInput(format!(
            "alignment of {} exceeds {source_segments}x{target_segments}",
            a.pair()
        )));
    }
    let f_s = src.len() as f64 / source_segments as f64;
    let f_t = tgt.len() as f64 / target_segments as f64;
    Ok(harmonic(f_s, f_t))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateCounting {
    /// A diagonal run of length L holds L-n+1 templates of length n.
    #[default]
    Sliding,
    /// Each maximal run of length >= n counts once.
    Maximal,
}

impl std::str::FromStr for TemplateCounting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sliding" => Ok(TemplateCounting::Sliding),
            "maximal" => Ok(TemplateCounting::Maximal),
            other => Err(Error::InvalidInput(format!(
                "unknown template counting `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateRun {
    pub source_document_id: String,
    pub target_document_id: String,
    pub start: (usize, usize),
    pub length: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Templates {
    pub n: usize,
    /// Maximal diagonal runs of length at least `n`.
    pub runs: Vec<TemplateRun>,
    pub count: usize,
}

/// Maximal diagonal runs `(i, j), (i+1, j+1), ...` of any length.
pub fn diagonal_runs(aligned: &BTreeSet<(usize, usize)>) -> Vec<((usize, usize), usize)> {
    let mut runs = Vec::new();
    for &(i, j) in aligned {
        let starts_run = i == 0 || j == 0 || !aligned.contains(&(i - 1, j - 1));
        if starts_run {
            let mut len = 1;
            while aligned.contains(&(i + len, j + len)) {
                len += 1;
            }
            runs.push(((i, j), len));
        }
    }
    runs
}

pub fn extract_templates(a: &AlignmentSet, n: usize, counting: TemplateCounting) -> Result<Templates> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("template length {n} is below 2")));
    }
    let mut runs = Vec::new();
    let mut count = 0;
    for (start, length) in diagonal_runs(&a.aligned) {
        if length < n {
            continue;
        }
        count += match counting {
            TemplateCounting::Sliding => length - n + 1,
            TemplateCounting::Maximal => 1,
        };
        runs.push(TemplateRun {
            source_document_id: a.source_document_id.clone(),
            target_document_id: a.target_document_id.clone(),
            start,
            length,
        });
    }
    Ok(Templates { n, runs, count })
}

/// Whether two documents form a heatmap pair: different authors writing for
/// the same prompt, or one author writing for two prompts of a minimal-pair
/// group.
pub fn heatmap_pair_eligible(a: &DocumentMeta, b: &DocumentMeta) -> bool {
    if a.author_kind != b.author_kind {
        return a.prompt_id == b.prompt_id;
    }
    matches!((&a.variant_group, &b.variant_group), (Some(x), Some(y)) if x == y) && a.prompt_id != b.prompt_id
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub metric_id: String,
    pub tau: f64,
    /// Row and column labels, in order.
    pub groups: Vec<String>,
    /// Mean document similarity per (row group, column group); `None` when
    /// no pair falls in the cell.
    pub cells: Vec<Vec<Option<f64>>>,
    pub counts: Vec<Vec<usize>>,
}

/// One scored document pair placed in the heatmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapEntry {
    pub source_group: String,
    pub target_group: String,
    pub value: f64,
}

/// Averages document similarities per (source group, target group).
pub fn heatmap_table(
    groups: &[String],
    entries: &[HeatmapEntry],
    metric_id: &str,
    tau: f64,
) -> Result<Heatmap> {
    if groups.is_empty() {
        return Err(Error::EmptyInput("heatmap has no groups"));
    }
    let index: BTreeMap<&str, usize> = groups.iter().enumerate().map(|(k, g)| (g.as_str(), k)).collect();
    let n = groups.len();
    let mut sums = vec![vec![0.0; n]; n];
    let mut counts = vec![vec![0usize; n]; n];
    for e in entries {
        let (Some(&r), Some(&c)) = (
            index.get(e.source_group.as_str()),
            index.get(e.target_group.as_str()),
        ) else {
            return Err(Error::InvalidInput(format!(
                "heatmap entry for unknown group {} / {}",
                e.source_group, e.target_group
            )));
        };
        sums[r][c] += e.value;
        counts[r][c] += 1;
    }
    let cells = sums
        .iter()
        .zip(&counts)
        .map(|(s, c)| {
            s.iter()
                .zip(c)
                .map(|(&sum, &k)| (k > 0).then(|| sum / k as f64))
                .collect()
        })
        .collect();
    Ok(Heatmap {
        metric_id: metric_id.to_string(),
        tau,
        groups: groups.to_vec(),
        cells,
        counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Domain;

    fn matrix(values: Vec<Vec<f64>>) -> SimilarityMatrix {
        SimilarityMatrix::new(&PairId::new("a", "b"), "qudsim", values).unwrap()
    }

    #[test]
    fn bundled_defaults() {
        let d = default_thresholds();
        assert_eq!(d["qudsim"], 0.20);
        assert_eq!(d["cosine"], 0.71);
        assert_eq!(d["rougeL"], 0.12);
        assert_eq!(d["judge:gpt-4o"], 0.7742);
        assert_eq!(d["judge:gpt-4o-mini"], 0.6462);
        assert_eq!(d["jaccard1"], 0.09);
        let cfg = ThresholdConfig::default_for("qudsim").unwrap();
        assert!(matches!(cfg.provenance, Provenance::Default { .. }));
        assert!(ThresholdConfig::default_for("judge:other").is_none());
    }

    #[test]
    fn per_direction_needs_both_sides() {
        // H(0.9, 0.15) = 0.2571 clears 0.2 on its own, but the backward side does not.
        let mut m = matrix(vec![vec![2.0 * 0.9 * 0.15 / 1.05, 0.5]]);
        m.direction_components = Some(crate::scoring::DirectionComponents {
            forward: vec![vec![0.9, 0.5]],
            backward: vec![vec![0.15, 0.5]],
        });
        assert_eq!(
            threshold_align(&m, 0.2).aligned,
            [(1, 1), (1, 2)].into_iter().collect()
        );
        assert_eq!(
            threshold_align_with(&m, 0.2, true).aligned,
            [(1, 2)].into_iter().collect()
        );
        // Without components the flag falls back to the stored score.
        m.direction_components = None;
        assert_eq!(threshold_align_with(&m, 0.2, true).aligned.len(), 2);
    }

    #[test]
    fn strict_threshold() {
        let m = matrix(vec![vec![0.2, 0.21], vec![0.0, 1.0]]);
        let a = threshold_align(&m, 0.20);
        assert_eq!(a.aligned, [(1, 2), (2, 2)].into_iter().collect());
        assert!(threshold_align(&matrix(vec![vec![0.0; 3]; 2]), 0.0)
            .aligned
            .is_empty());
    }

    #[test]
    fn document_similarity_examples() {
        let pair = PairId::new("a", "b");
        let a = AlignmentSet::from_pairs(&pair, "m", 0.2, 4, 5, [(1, 1), (2, 3)]);
        assert!((document_similarity(&a, 4, 5).unwrap() - 4.0 / 9.0).abs() < 1e-12);
        let full = AlignmentSet::from_pairs(
            &pair,
            "m",
            0.2,
            2,
            3,
            (1..=2).flat_map(|i| (1..=3).map(move |j| (i, j))),
        );
        assert_eq!(document_similarity(&full, 2, 3).unwrap(), 1.0);
        let empty = AlignmentSet::from_pairs(&pair, "m", 0.2, 2, 3, []);
        assert_eq!(document_similarity(&empty, 2, 3).unwrap(), 0.0);
        assert!(document_similarity(&empty, 0, 3).is_err());
    }

    #[test]
    fn template_examples() {
        let pair = PairId::new("a", "b");
        let a = AlignmentSet::from_pairs(&pair, "m", 0.2, 3, 3, [(1, 1), (2, 2), (3, 3)]);
        let counts: Vec<usize> = (2..=4)
            .map(|n| extract_templates(&a, n, TemplateCounting::Sliding).unwrap().count)
            .collect();
        assert_eq!(counts, vec![2, 1, 0]);
        let b = AlignmentSet::from_pairs(&pair, "m", 0.2, 3, 3, [(1, 2), (2, 3)]);
        let t = extract_templates(&b, 2, TemplateCounting::Sliding).unwrap();
        assert_eq!(t.count, 1);
        assert_eq!(t.runs[0].start, (1, 2));
        assert_eq!(
            extract_templates(&a, 2, TemplateCounting::Maximal).unwrap().count,
            1
        );
        assert!(extract_templates(&a, 1, TemplateCounting::Sliding).is_err());
    }

    #[test]
    fn calibration_degenerate_gold() {
        let m = matrix(vec![vec![0.3, 0.6], vec![0.1, 0.9]]);
        let gold = GoldAlignment {
            source_document_id: "a".into(),
            target_document_id: "b".into(),
            aligned: BTreeSet::new(),
            provenance: Vec::new(),
        };
        let c = calibrate_threshold(&[m], &[gold], 0.2, 7, false).unwrap();
        assert_eq!(c.config.tau, 0.9);
        assert_eq!(c.dev_f1, 1.0);
        assert!(calibrate_threshold(&[], &[], 0.2, 7, false).is_err());
    }

    #[test]
    fn heatmap_missing_cells() {
        let groups = vec!["x".to_string(), "y".to_string()];
        let entries = vec![
            HeatmapEntry {
                source_group: "x".into(),
                target_group: "y".into(),
                value: 0.5,
            },
            HeatmapEntry {
                source_group: "x".into(),
                target_group: "y".into(),
                value: 0.25,
            },
        ];
        let h = heatmap_table(&groups, &entries, "qudsim", 0.2).unwrap();
        assert_eq!(h.cells[0][1], Some(0.375));
        assert_eq!(h.cells[1][0], None);
        assert_eq!(h.counts[0][1], 2);
    }

    #[test]
    fn eligibility() {
        let m = |author: &str, prompt: &str| DocumentMeta {
            author_kind: author.into(),
            domain: Domain::Creative,
            prompt_id: prompt.into(),
            variant_group: Some("g".into()),
        };
        assert!(heatmap_pair_eligible(&m("human", "p"), &m("gpt-4o", "p")));
        assert!(!heatmap_pair_eligible(&m("human", "p"), &m("gpt-4o", "q")));
        assert!(heatmap_pair_eligible(&m("gpt-4o", "p"), &m("gpt-4o", "q")));
        assert!(!heatmap_pair_eligible(&m("gpt-4o", "p"), &m("gpt-4o", "p")));
    }
}
