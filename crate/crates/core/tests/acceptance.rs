//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero when any fails. Oracles here are written independently of
//! the library code they check.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use qudsim::alignment::{
    calibrate_threshold, document_similarity, extract_templates, threshold_align, AlignmentSet,
    TemplateCounting, ThresholdConfig,
};
use qudsim::baselines::{cosine, lcs_len, ngram_jaccard, rouge_l, tokenize};
use qudsim::config::Config;
use qudsim::corpus::store::read_json;
use qudsim::corpus::{
    validate_segmentation, AbstractionLevel, AnswerSet, Document, GoldAlignment, PairId, Qud, Segmentation,
};
use qudsim::eval::{abstraction_stats, answer_agreement, gold_intersection, prf1, PairAnswers};
use qudsim::scoring::{
    directional_sim, qudsim_score, similarity_matrix, Metric, PairArtifacts, SimilarityMatrix,
};
use qudsim::workflow::{Session, TranscriptFile};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Check = std::result::Result<(), String>;
type Criterion = (&'static str, fn() -> Check);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

// ---------------------------------------------------------------------------
// Random instances

struct Instance {
    source_seg: Segmentation,
    target_seg: Segmentation,
    source_quds: Vec<Qud>,
    target_quds: Vec<Qud>,
    forward: Vec<AnswerSet>,
    backward: Vec<AnswerSet>,
}

fn random_groups(rng: &mut ChaCha8Rng, max_segments: usize, max_sentences: usize) -> Vec<Vec<usize>> {
    let n = rng.random_range(1..=max_sentences);
    let k = rng.random_range(1..=max_segments.min(n));
    let mut cuts: Vec<usize> = (1..n).collect();
    cuts.shuffle(rng);
    let mut cuts: Vec<usize> = cuts.into_iter().take(k - 1).collect();
    cuts.sort();
    let mut groups = Vec::new();
    let mut start = 1;
    for c in cuts.into_iter().chain([n]) {
        groups.push((start..=c).collect());
        start = c + 1;
    }
    groups
}

fn random_quds(rng: &mut ChaCha8Rng, doc: &str, segments: usize, max_per: usize) -> Vec<Qud> {
    let mut out = Vec::new();
    for s in 1..=segments {
        for k in 1..=rng.random_range(1..=max_per) {
            out.push(Qud {
                id: Qud::make_id(doc, AbstractionLevel::Abstract, s, k),
                source_document_id: doc.to_string(),
                source_segment_index: s,
                question: format!("Question {s}.{k}?"),
                abstraction_level: AbstractionLevel::Abstract,
            });
        }
    }
    out
}

fn random_answers(rng: &mut ChaCha8Rng, quds: &[Qud], target: &str, n_sentences: usize) -> Vec<AnswerSet> {
    quds.iter()
        .map(|q| {
            let p = rng.random_range(0.0..0.5);
            AnswerSet {
                qud_id: q.id.clone(),
                target_document_id: target.to_string(),
                sentence_indices: (1..=n_sentences).filter(|_| rng.random_bool(p)).collect(),
            }
        })
        .collect()
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let sg = random_groups(rng, 10, 40);
    let tg = random_groups(rng, 10, 40);
    let (ns, nt) = (sg.iter().map(Vec::len).sum(), tg.iter().map(Vec::len).sum());
    let source_seg = Segmentation::from_groups("s", sg);
    let target_seg = Segmentation::from_groups("t", tg);
    let source_quds = random_quds(rng, "s", source_seg.segments.len(), 3);
    let target_quds = random_quds(rng, "t", target_seg.segments.len(), 3);
    let forward = random_answers(rng, &source_quds, "t", nt);
    let backward = random_answers(rng, &target_quds, "s", ns);
    Instance {
        source_seg,
        target_seg,
        source_quds,
        target_quds,
        forward,
        backward,
    }
}

impl Instance {
    fn artifacts(&self) -> PairArtifacts<'_> {
        PairArtifacts {
            source_seg: &self.source_seg,
            target_seg: &self.target_seg,
            source_quds: &self.source_quds,
            target_quds: &self.target_quds,
            forward_answers: &self.forward,
            backward_answers: &self.backward,
        }
    }

    fn reversed(&self) -> PairArtifacts<'_> {
        PairArtifacts {
            source_seg: &self.target_seg,
            target_seg: &self.source_seg,
            source_quds: &self.target_quds,
            target_quds: &self.source_quds,
            forward_answers: &self.backward,
            backward_answers: &self.forward,
        }
    }
}

/// Mean over the QUDs of segment `i` of the share of each answer set that
/// falls inside segment `j`, written as plain loops.
fn brute_sim(quds: &[Qud], answers: &[AnswerSet], i: usize, target: &Segmentation, j: usize) -> f64 {
    let members = &target.segments[j - 1].sentence_indices;
    let mut sum = 0.0;
    let mut count = 0;
    for q in quds {
        if q.source_segment_index != i {
            continue;
        }
        count += 1;
        let a = answers
            .iter()
            .find(|a| a.qud_id == q.id)
            .expect("answer for every QUD");
        let mut inside = 0;
        for s in &a.sentence_indices {
            if members.contains(s) {
                inside += 1;
            }
        }
        if !a.sentence_indices.is_empty() {
            sum += inside as f64 / a.sentence_indices.len() as f64;
        }
    }
    sum / count as f64
}

fn brute_harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

// ---------------------------------------------------------------------------
// Criteria

fn directional_oracle() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..1000 {
        let x = random_instance(&mut rng);
        let m = similarity_matrix(&x.artifacts()).map_err(|e| e.to_string())?;
        for i in 1..=x.source_seg.segments.len() {
            let seg_quds: Vec<Qud> = x
                .source_quds
                .iter()
                .filter(|q| q.source_segment_index == i)
                .cloned()
                .collect();
            for j in 1..=x.target_seg.segments.len() {
                let f = brute_sim(&x.source_quds, &x.forward, i, &x.target_seg, j);
                let b = brute_sim(&x.target_quds, &x.backward, j, &x.source_seg, i);
                let d =
                    directional_sim(&seg_quds, &x.forward, &x.target_seg, j).map_err(|e| e.to_string())?;
                ensure!(
                    (d - f).abs() <= 1e-12,
                    "case {case}: sim({i}->{j}) {d} vs oracle {f}"
                );
                let got = m.get(i, j).expect("in range");
                let want = brute_harmonic(f, b);
                ensure!(
                    (got - want).abs() <= 1e-12,
                    "case {case}: cell ({i},{j}) {got} vs oracle {want}"
                );
            }
        }
    }
    let t = started.elapsed();
    ensure!(t < Duration::from_secs(10), "took {t:?}");
    Ok(())
}

fn random_tokens(rng: &mut ChaCha8Rng, max_len: usize, alphabet: &[&str]) -> Vec<String> {
    let n = rng.random_range(0..=max_len);
    (0..n)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())].to_string())
        .collect()
}

fn bounds_and_symmetry() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let in_unit = |v: f64| (0.0..=1.0).contains(&v);
    for case in 0..1000 {
        let x = random_instance(&mut rng);
        let m = similarity_matrix(&x.artifacts()).map_err(|e| e.to_string())?;
        let r = similarity_matrix(&x.reversed()).map_err(|e| e.to_string())?;
        ensure!(
            m.values.iter().flatten().all(|&v| in_unit(v)),
            "case {case}: score outside [0,1]"
        );
        ensure!(
            r.values == m.transposed().values,
            "case {case}: reversed pair is not the transpose"
        );
        let dc = m.direction_components.as_ref().expect("components");
        for i in 0..m.rows {
            for j in 0..m.cols {
                let (f, b, h) = (dc.forward[i][j], dc.backward[i][j], m.values[i][j]);
                ensure!(f.min(b) <= h && h <= f.max(b), "case {case}: H({f},{b}) = {h}");
            }
        }
        let (t1, t2) = {
            let a = rng.random_range(0.0..1.0);
            let b = rng.random_range(0.0..1.0);
            if a <= b {
                (a, b)
            } else {
                (b, a)
            }
        };
        let (lo, hi) = (threshold_align(&m, t1), threshold_align(&m, t2));
        ensure!(
            hi.aligned.is_subset(&lo.aligned),
            "case {case}: tau {t2} not a subset of tau {t1}"
        );

        let f = rng.random_range(0.0..=1.0);
        let b = rng.random_range(0.0..=1.0);
        let h = qudsim_score(f, b).map_err(|e| e.to_string())?;
        ensure!(
            f.min(b) <= h && h <= f.max(b),
            "case {case}: qudsim_score({f},{b}) = {h}"
        );

        let alphabet = ["a", "b", "c", "d", "e"];
        let s = random_tokens(&mut rng, 12, &alphabet);
        let t = random_tokens(&mut rng, 12, &alphabet);
        for n in 1..=4 {
            let v = ngram_jaccard(&s, &t, n).map_err(|e| e.to_string())?;
            ensure!(in_unit(v), "case {case}: jaccard{n} = {v}");
        }
        let v = rouge_l(&s, &t);
        ensure!(in_unit(v), "case {case}: rougeL = {v}");
        let u: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c = cosine(&u, &w).map_err(|e| e.to_string())?;
        ensure!(
            in_unit(c.max(0.0)) && (-1.0..=1.0).contains(&c),
            "case {case}: cosine = {c}"
        );
    }
    Ok(())
}

/// Runs ingest through alignment over the bundled corpus.
fn replay(root: &Path) -> std::result::Result<Session, String> {
    let cfg = Config::default().with_cache_dir(&root.join("cache"));
    let s = Session::open(root, cfg, Some(&fixtures().join("transcripts"))).map_err(|e| e.to_string())?;
    s.ingest(&[fixtures().join("documents.json")])
        .map_err(|e| e.to_string())?;
    s.run_pipeline(AbstractionLevel::Abstract)
        .map_err(|e| e.to_string())?;
    let tau = ThresholdConfig::default_for("qudsim").ok_or("no default qudsim threshold")?;
    for pair in s.eligible_pairs().map_err(|e| e.to_string())? {
        s.score(&pair, &Metric::Qudsim).map_err(|e| e.to_string())?;
        s.align(&pair, &tau).map_err(|e| e.to_string())?;
    }
    Ok(s)
}

fn identity() -> Check {
    // A replayed story scored against a verbatim copy of itself, where each
    // QUD is answered by exactly its own segment in the copy.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = replay(dir.path())?;
    let doc =
        s.ws.load_document("gemini-flat-earth")
            .map_err(|e| e.to_string())?;
    let seg = s.ws.load_segmentation(&doc).map_err(|e| e.to_string())?;
    let quds =
        s.ws.load_quds(&doc.id, AbstractionLevel::Abstract)
            .map_err(|e| e.to_string())?
            .quds;
    let copy_seg = Segmentation {
        document_id: "copy".into(),
        segments: seg.segments.clone(),
    };
    let copy_quds: Vec<Qud> = quds
        .iter()
        .map(|q| Qud {
            id: q.id.replace("gemini-flat-earth", "copy"),
            source_document_id: "copy".into(),
            ..q.clone()
        })
        .collect();
    let mirror = |qs: &[Qud], target: &str| -> Vec<AnswerSet> {
        qs.iter()
            .map(|q| AnswerSet {
                qud_id: q.id.clone(),
                target_document_id: target.to_string(),
                sentence_indices: seg.segments[q.source_segment_index - 1]
                    .sentence_indices
                    .iter()
                    .copied()
                    .collect(),
            })
            .collect()
    };
    let forward = mirror(&quds, "copy");
    let backward = mirror(&copy_quds, &doc.id);
    let m = similarity_matrix(&PairArtifacts {
        source_seg: &seg,
        target_seg: &copy_seg,
        source_quds: &quds,
        target_quds: &copy_quds,
        forward_answers: &forward,
        backward_answers: &backward,
    })
    .map_err(|e| e.to_string())?;
    for i in 0..m.rows {
        for j in 0..m.cols {
            let want = if i == j { 1.0 } else { 0.0 };
            ensure!(
                m.values[i][j] == want,
                "cell ({},{}) = {}",
                i + 1,
                j + 1,
                m.values[i][j]
            );
        }
    }
    let a = threshold_align(&m, ThresholdConfig::default_for("qudsim").expect("default").tau);
    let d = document_similarity(&a, m.rows, m.cols).map_err(|e| e.to_string())?;
    ensure!(d == 1.0, "document similarity {d}");
    Ok(())
}

/// Longest common subsequence by trying every subsequence of `a`, longest
/// first.
fn exhaustive_lcs(a: &[String], b: &[String]) -> usize {
    thread_local! {
        static ORDER: Vec<Vec<u32>> = (0..=12)
            .map(|n| {
                let mut masks: Vec<u32> = (0u32..(1 << n)).collect();
                masks.sort_by_key(|m| std::cmp::Reverse(m.count_ones()));
                masks
            })
            .collect();
    }
    ORDER.with(|order| lcs_in_order(&order[a.len()], a, b))
}

fn lcs_in_order(masks: &[u32], a: &[String], b: &[String]) -> usize {
    for &mask in masks {
        let mut pos = 0;
        let fits = (0..a.len()).filter(|k| mask & (1 << k) != 0).all(|k| {
            while pos < b.len() && b[pos] != a[k] {
                pos += 1;
            }
            pos += 1;
            pos <= b.len()
        });
        if fits {
            return mask.count_ones() as usize;
        }
    }
    0
}

fn oracle_rouge(s: &[String], t: &[String]) -> f64 {
    rouge_from_lcs(exhaustive_lcs(s, t), s, t)
}

fn rouge_from_lcs(l: usize, s: &[String], t: &[String]) -> f64 {
    if l == 0 {
        return 0.0;
    }
    let l = l as f64;
    let (p, r) = (l / t.len() as f64, l / s.len() as f64);
    2.0 * p * r / (p + r)
}

/// All token lists over `alphabet` up to length `max`.
fn all_lists(alphabet: &[&str], max: usize) -> Vec<Vec<String>> {
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Vec<String>> = vec![Vec::new()];
    for _ in 0..max {
        let mut next = Vec::new();
        for l in &frontier {
            for a in alphabet {
                let mut m = l.clone();
                m.push(a.to_string());
                next.push(m);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

fn oracle_tokens(text: &str) -> Vec<String> {
    let kept: String = text
        .chars()
        .flat_map(char::to_lowercase)
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    kept.split_whitespace().map(str::to_string).collect()
}

fn oracle_ngrams(tokens: &[String], n: usize) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut k = 0;
    while k + n <= tokens.len() {
        out.insert(tokens[k..k + n].join("\u{1f}"));
        k += 1;
    }
    out
}

fn baselines() -> Check {
    // Every pair of token lists up to length 8 over {a, b}, and lists up to
    // length 8 over {a, b, c} against random partners.
    let binary = all_lists(&["a", "b"], 8);
    for s in &binary {
        for t in &binary {
            let l = exhaustive_lcs(s, t);
            ensure!(lcs_len(s, t) == l, "lcs {s:?} {t:?}");
            ensure!(
                (rouge_l(s, t) - rouge_from_lcs(l, s, t)).abs() <= 1e-9,
                "rougeL {s:?} {t:?}"
            );
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for s in &all_lists(&["a", "b", "c"], 8) {
        let t = random_tokens(&mut rng, 8, &["a", "b", "c"]);
        ensure!(
            (rouge_l(s, &t) - oracle_rouge(s, &t)).abs() <= 1e-9,
            "rougeL {s:?} {t:?}"
        );
    }

    let hand: [(&str, &str, [f64; 4]); 4] = [
        ("the cat sat", "the cat ran", [2.0 / 4.0, 1.0 / 3.0, 0.0, 0.0]),
        ("A b. A b!", "a B a", [1.0, 1.0, 1.0 / 2.0, 0.0]),
        ("one two three four", "one two three four", [1.0, 1.0, 1.0, 1.0]),
        ("x", "y", [0.0, 0.0, 0.0, 0.0]),
    ];
    for (s, t, want) in hand {
        for n in 1..=4 {
            let got = ngram_jaccard(&tokenize(s), &tokenize(t), n).map_err(|e| e.to_string())?;
            ensure!(
                (got - want[n - 1]).abs() <= 1e-9,
                "jaccard{n}({s:?}, {t:?}) = {got}"
            );
        }
    }
    let words = [
        "the", "Earth", "is", "flat,", "secret", "NASA's", "truth", "the", "lie.",
    ];
    for case in 0..46 {
        let pick = |rng: &mut ChaCha8Rng| -> String {
            let n = rng.random_range(1..=10);
            (0..n)
                .map(|_| words[rng.random_range(0..words.len())])
                .collect::<Vec<_>>()
                .join(" ")
        };
        let (s, t) = (pick(&mut rng), pick(&mut rng));
        let (ts, tt) = (oracle_tokens(&s), oracle_tokens(&t));
        ensure!(tokenize(&s) == ts, "case {case}: tokens of {s:?}");
        for n in 1..=4 {
            let (a, b) = (oracle_ngrams(&ts, n), oracle_ngrams(&tt, n));
            let union = a.union(&b).count();
            let want = if union == 0 {
                0.0
            } else {
                a.intersection(&b).count() as f64 / union as f64
            };
            let got = ngram_jaccard(&ts, &tt, n).map_err(|e| e.to_string())?;
            ensure!(
                (got - want).abs() <= 1e-9,
                "case {case}: jaccard{n} {got} vs {want}"
            );
        }
    }
    Ok(())
}

fn f1_of(pred: &BTreeSet<(usize, usize)>, gold: &BTreeSet<(usize, usize)>) -> f64 {
    let tp = pred.intersection(gold).count() as f64;
    let (fp, fn_) = (pred.len() as f64 - tp, gold.len() as f64 - tp);
    if tp + fp + fn_ == 0.0 {
        1.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

fn pooled_f1(matrices: &[&SimilarityMatrix], golds: &BTreeMap<String, GoldAlignment>, tau: f64) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
    for m in matrices {
        let pred = threshold_align(m, tau).aligned;
        let gold = &golds[&m.pair().to_string()].aligned;
        let hit = pred.intersection(gold).count() as f64;
        tp += hit;
        fp += pred.len() as f64 - hit;
        fn_ += gold.len() as f64 - hit;
    }
    if tp + fp + fn_ == 0.0 {
        1.0
    } else {
        2.0 * tp / (2.0 * tp + fp + fn_)
    }
}

fn calibration() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for planted in [0.1, 0.3, 0.5] {
        let mut matrices = Vec::new();
        let mut golds = BTreeMap::new();
        for p in 0..30 {
            let (rows, cols) = (rng.random_range(2..=6), rng.random_range(2..=6));
            let values: Vec<Vec<f64>> = (0..rows)
                .map(|_| {
                    (0..cols)
                        .map(|_| rng.random_range(0..=20) as f64 / 20.0)
                        .collect()
                })
                .collect();
            let pair = PairId::new(format!("s{p}"), format!("t{p}"));
            let gold = GoldAlignment {
                source_document_id: pair.source.clone(),
                target_document_id: pair.target.clone(),
                aligned: (0..rows)
                    .flat_map(|i| (0..cols).map(move |j| (i, j)))
                    .filter(|&(i, j)| values[i][j] > planted)
                    .map(|(i, j)| (i + 1, j + 1))
                    .collect(),
                provenance: vec![],
            };
            golds.insert(pair.to_string(), gold);
            matrices.push(SimilarityMatrix::new(&pair, "qudsim", values).map_err(|e| e.to_string())?);
        }
        let gold_list: Vec<GoldAlignment> = golds.values().cloned().collect();
        let c = calibrate_threshold(&matrices, &gold_list, 0.5, 17, false).map_err(|e| e.to_string())?;
        ensure!(c.dev_f1 == 1.0, "planted {planted}: dev F1 {}", c.dev_f1);
        ensure!(
            c.test_f1 == Some(1.0),
            "planted {planted}: test F1 {:?}",
            c.test_f1
        );
        let tau = c.config.tau;
        for m in &matrices {
            let g = &golds[&m.pair().to_string()].aligned;
            ensure!(
                f1_of(&threshold_align(m, tau).aligned, g) == 1.0,
                "planted {planted}: tau {tau} misses {}",
                m.pair()
            );
        }
        let dev: Vec<&SimilarityMatrix> = matrices
            .iter()
            .filter(|m| c.dev_pairs.contains(&m.pair()))
            .collect();
        let mut candidates: Vec<f64> = (0..=1000).map(|k| k as f64 / 1000.0).collect();
        candidates.extend(dev.iter().flat_map(|m| m.values.iter().flatten().copied()));
        let best = candidates
            .iter()
            .map(|&t| pooled_f1(&dev, &golds, t))
            .fold(0.0, f64::max);
        ensure!(
            pooled_f1(&dev, &golds, tau) >= best,
            "planted {planted}: scan found F1 {best} above tau {tau}"
        );
    }
    let t = started.elapsed();
    ensure!(t < Duration::from_secs(5), "took {t:?}");
    Ok(())
}

fn templates() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pair = PairId::new("s", "t");
    for case in 0..1000 {
        let (rows, cols) = (rng.random_range(1..=12), rng.random_range(1..=12));
        let p = rng.random_range(0.05..0.6);
        let aligned: BTreeSet<(usize, usize)> = (1..=rows)
            .flat_map(|i| (1..=cols).map(move |j| (i, j)))
            .filter(|_| rng.random_bool(p))
            .collect();
        let a = AlignmentSet::from_pairs(&pair, "qudsim", 0.2, rows, cols, aligned.clone());
        let mut last = usize::MAX;
        for n in 2..=6 {
            let mut windows = 0;
            for i in 1..=rows {
                for j in 1..=cols {
                    if (0..n).all(|k| aligned.contains(&(i + k, j + k))) {
                        windows += 1;
                    }
                }
            }
            let got = extract_templates(&a, n, TemplateCounting::Sliding).map_err(|e| e.to_string())?;
            ensure!(
                got.count == windows,
                "case {case}, n = {n}: {} vs oracle {windows}",
                got.count
            );
            ensure!(got.count <= last, "case {case}: count rose at n = {n}");
            last = got.count;
        }
    }
    let a = AlignmentSet::from_pairs(&pair, "qudsim", 0.2, 3, 3, [(1, 1), (2, 2), (3, 3)]);
    let counts: Vec<usize> = (2..=4)
        .map(|n| extract_templates(&a, n, TemplateCounting::Sliding).map(|t| t.count))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    ensure!(counts == vec![2, 1, 0], "worked example counts {counts:?}");
    Ok(())
}

fn aggregation() -> Check {
    let pair = PairId::new("s", "t");
    let a = AlignmentSet::from_pairs(&pair, "qudsim", 0.2, 4, 5, [(1, 1), (2, 2)]);
    let d = document_similarity(&a, 4, 5).map_err(|e| e.to_string())?;
    ensure!((d - 4.0 / 9.0).abs() <= 1e-12, "worked example {d}");

    // Spreadsheet-style recomputation of the fixture heatmap from the stored
    // matrices and document metadata.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let s = replay(dir.path())?;
    let tau = ThresholdConfig::default_for("qudsim").expect("default");
    let (h, _) = s.heatmap(&tau).map_err(|e| e.to_string())?;
    let mut cells: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for pair in s.eligible_pairs().map_err(|e| e.to_string())? {
        let m = s.ws.load_matrix(&pair, "qudsim").map_err(|e| e.to_string())?;
        let mut rows_hit = BTreeSet::new();
        let mut cols_hit = BTreeSet::new();
        for i in 0..m.rows {
            for j in 0..m.cols {
                if m.values[i][j] > tau.tau {
                    rows_hit.insert(i);
                    cols_hit.insert(j);
                }
            }
        }
        let fs = rows_hit.len() as f64 / m.rows as f64;
        let ft = cols_hit.len() as f64 / m.cols as f64;
        let kind = |id: &str| s.ws.load_document(id).map(|d| d.meta.author_kind);
        let key = (
            kind(&pair.source).map_err(|e| e.to_string())?,
            kind(&pair.target).map_err(|e| e.to_string())?,
        );
        cells.entry(key).or_default().push(brute_harmonic(fs, ft));
    }
    ensure!(
        h.groups == vec!["human", "gemini", "gpt-4o"],
        "groups {:?}",
        h.groups
    );
    for (r, g) in h.groups.iter().enumerate() {
        for (c, t) in h.groups.iter().enumerate() {
            let want = cells
                .get(&(g.clone(), t.clone()))
                .map(|v| v.iter().sum::<f64>() / v.len() as f64);
            match (h.cells[r][c], want) {
                (None, None) => {}
                (Some(x), Some(y)) if (x - y).abs() <= 1e-12 => {}
                (x, y) => return Err(format!("cell {g} -> {t}: {x:?} vs oracle {y:?}")),
            }
        }
    }
    Ok(())
}

fn tree_hashes(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).expect("readable") {
            let p = e.expect("entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).expect("inside").display().to_string();
                out.insert(rel, hex::encode(Sha256::digest(fs::read(&p).expect("readable"))));
            }
        }
    }
    out
}

fn pipeline_replay() -> Check {
    let (a, b) = (
        tempfile::tempdir().map_err(|e| e.to_string())?,
        tempfile::tempdir().map_err(|e| e.to_string())?,
    );
    let s = replay(a.path())?;
    replay(b.path())?;
    let (ha, hb) = (
        tree_hashes(&a.path().join("derived")),
        tree_hashes(&b.path().join("derived")),
    );
    ensure!(!ha.is_empty() && ha == hb, "derived outputs differ between runs");

    let docs: Vec<Document> =
        s.ws.document_ids()
            .and_then(|ids| ids.iter().map(|id| s.ws.load_document(id)).collect())
            .map_err(|e| e.to_string())?;
    ensure!(docs.len() == 4, "{} documents", docs.len());
    let by_id: BTreeMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    for d in &docs {
        let seg = s.ws.load_segmentation(d).map_err(|e| e.to_string())?;
        ensure!(
            validate_segmentation(d, &seg).is_ok(),
            "{}: invalid segmentation",
            d.id
        );
        let abs = s.ws.load_abstract(&d.id).map_err(|e| e.to_string())?;
        ensure!(
            abs.segments.len() == seg.segments.len(),
            "{}: abstract count",
            d.id
        );
        let quds =
            s.ws.load_quds(&d.id, AbstractionLevel::Abstract)
                .map_err(|e| e.to_string())?
                .quds;
        for k in 1..=seg.segments.len() {
            let n = quds.iter().filter(|q| q.source_segment_index == k).count();
            ensure!((1..=2).contains(&n), "{} segment {k}: {n} QUDs", d.id);
        }
    }
    for pair in s.eligible_pairs().map_err(|e| e.to_string())? {
        let target = by_id[pair.target.as_str()];
        let file = s.ws.load_answers(&pair, target).map_err(|e| e.to_string())?;
        for set in &file.levels[&AbstractionLevel::Abstract] {
            ensure!(
                set.sentence_indices
                    .iter()
                    .all(|&i| (1..=target.sentences.len()).contains(&i)),
                "{pair}: answer index out of range"
            );
        }
        let m = s.ws.load_matrix(&pair, "qudsim").map_err(|e| e.to_string())?;
        m.validate().map_err(|e| e.to_string())?;
    }
    let notes = |name: &str| -> std::result::Result<Vec<String>, String> {
        read_json::<TranscriptFile>(&s.ws.transcript_path(name))
            .map(|t| t.notes)
            .map_err(|e| e.to_string())
    };
    ensure!(
        !notes("segment.human-flat-earth")?.is_empty(),
        "segmentation repair not recorded"
    );
    ensure!(
        notes("quds.gemini-solar-system.abstract")?
            .iter()
            .any(|n| n.contains("truncated")),
        "QUD truncation not recorded"
    );
    ensure!(
        notes("answers.gemini-solar-system__gemini-flat-earth.abstract")?
            .iter()
            .any(|n| n.contains("99")),
        "out-of-range index not dropped"
    );
    ensure!(
        notes("answers.gpt4o-flat-earth__human-flat-earth.abstract")?
            .iter()
            .any(|n| n.contains("differs")),
        "modified sentence not dropped"
    );

    let gemini = PairId::new("gemini-flat-earth", "gemini-solar-system");
    let al =
        s.ws.load_alignment(&gemini, "qudsim")
            .map_err(|e| e.to_string())?;
    ensure!(al.tau == 0.20, "tau {}", al.tau);
    ensure!(
        !al.aligned.is_empty(),
        "no alignment between the minimal-pair stories"
    );
    Ok(())
}

fn random_set(rng: &mut ChaCha8Rng, n: usize, p: f64) -> BTreeSet<usize> {
    (1..=n).filter(|_| rng.random_bool(p)).collect()
}

fn eval_harness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let pair = PairId::new("s", "t");
    for case in 0..500 {
        let (rows, cols) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let cells: Vec<(usize, usize)> = (1..=rows).flat_map(|i| (1..=cols).map(move |j| (i, j))).collect();
        let pred: BTreeSet<_> = cells.iter().copied().filter(|_| rng.random_bool(0.3)).collect();
        let gold: BTreeSet<_> = cells.iter().copied().filter(|_| rng.random_bool(0.3)).collect();
        let r = prf1(
            &AlignmentSet::from_pairs(&pair, "m", 0.5, rows, cols, pred.clone()),
            &GoldAlignment {
                source_document_id: "s".into(),
                target_document_id: "t".into(),
                aligned: gold.clone(),
                provenance: vec![],
            },
        )
        .map_err(|e| e.to_string())?;
        let tp = pred.intersection(&gold).count();
        let fp = pred.difference(&gold).count();
        let fn_ = gold.difference(&pred).count();
        ensure!((r.tp, r.fp, r.fn_) == (tp, fp, fn_), "case {case}: counts");
        // Empty against empty scores 1; an empty side against a non-empty one scores 0.
        let ratio = |num: usize, den: usize, other: usize| match (den, other) {
            (0, 0) => 1.0,
            (0, _) => 0.0,
            _ => num as f64 / den as f64,
        };
        let p = ratio(tp, pred.len(), gold.len());
        let rc = ratio(tp, gold.len(), pred.len());
        ensure!(
            r.precision == p && r.recall == rc,
            "case {case}: P/R {} {}",
            r.precision,
            r.recall
        );
        let f = if p + rc == 0.0 {
            0.0
        } else {
            2.0 * p * rc / (p + rc)
        };
        ensure!(r.f1 == f, "case {case}: F1 {} vs 2PR/(P+R) {f}", r.f1);

        let n = rng.random_range(1..=30);
        let a1 = AnswerSet {
            qud_id: "q".into(),
            target_document_id: "t".into(),
            sentence_indices: random_set(&mut rng, n, 0.3),
        };
        let a2 = AnswerSet {
            sentence_indices: random_set(&mut rng, n, 0.3),
            ..a1.clone()
        };
        let union = a1.sentence_indices.union(&a2.sentence_indices).count();
        let inter = a1.sentence_indices.intersection(&a2.sentence_indices).count();
        let iou = if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        };
        ensure!(
            answer_agreement(&a1, &a2).map_err(|e| e.to_string())? == iou,
            "case {case}: IoU"
        );

        let k = rng.random_range(1..=5);
        let ann = |rng: &mut ChaCha8Rng| -> Vec<AnswerSet> {
            (0..k)
                .map(|q| AnswerSet {
                    qud_id: format!("q{q}"),
                    target_document_id: "t".into(),
                    sentence_indices: random_set(rng, n, 0.4),
                })
                .collect()
        };
        let (x, mut y) = (ann(&mut rng), ann(&mut rng));
        y.reverse();
        let both = gold_intersection(&x, &y).map_err(|e| e.to_string())?;
        for g in &both {
            let from_x = &x
                .iter()
                .find(|a| a.qud_id == g.qud_id)
                .expect("present")
                .sentence_indices;
            let from_y = &y
                .iter()
                .find(|a| a.qud_id == g.qud_id)
                .expect("present")
                .sentence_indices;
            let want: BTreeSet<usize> = from_x.iter().filter(|i| from_y.contains(i)).copied().collect();
            ensure!(
                g.sentence_indices == want,
                "case {case}: intersection for {}",
                g.qud_id
            );
        }
        ensure!(both.len() == k, "case {case}: intersection size");

        let groups = random_groups(&mut rng, 6, n.max(1));
        let total: usize = groups.iter().map(Vec::len).sum();
        let tseg = Segmentation::from_groups("t", groups.clone());
        let answers: Vec<AnswerSet> = x
            .iter()
            .map(|a| AnswerSet {
                sentence_indices: a
                    .sentence_indices
                    .iter()
                    .copied()
                    .filter(|&i| i <= total)
                    .collect(),
                ..a.clone()
            })
            .collect();
        let stats = abstraction_stats(&[PairAnswers {
            answers: &answers,
            target_seg: &tseg,
        }])
        .map_err(|e| e.to_string())?;
        let answered: Vec<&AnswerSet> = answers
            .iter()
            .filter(|a| !a.sentence_indices.is_empty())
            .collect();
        let covered: BTreeSet<usize> = groups
            .iter()
            .enumerate()
            .filter(|(_, g)| {
                answers
                    .iter()
                    .any(|a| g.iter().any(|s| a.sentence_indices.contains(s)))
            })
            .map(|(z, _)| z)
            .collect();
        ensure!(
            stats.answerable == answered.len() as f64 / k as f64,
            "case {case}: answerable"
        );
        ensure!(
            stats.unanswerable == (k - answered.len()) as f64 / k as f64,
            "case {case}: unanswerable"
        );
        let per = if answered.is_empty() {
            0.0
        } else {
            answered.iter().map(|a| a.sentence_indices.len()).sum::<usize>() as f64 / answered.len() as f64
        };
        ensure!(
            stats.sentences_per_answer == per,
            "case {case}: sentences per answer"
        );
        ensure!(
            stats.coverage == covered.len() as f64 / groups.len() as f64,
            "case {case}: coverage"
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (
            "directional similarity and matrix match brute force (1000 instances)",
            directional_oracle,
        ),
        (
            "scores bounded, harmonic mean between arguments, transpose symmetry, monotone thresholds",
            bounds_and_symmetry,
        ),
        (
            "mirrored self-answering pair gives a diagonal of 1s and document similarity 1",
            identity,
        ),
        ("ROUGE-L and n-gram Jaccard match exhaustive oracles", baselines),
        (
            "calibration recovers planted thresholds 0.1, 0.3, 0.5",
            calibration,
        ),
        ("template counts match exhaustive diagonal enumeration", templates),
        (
            "document similarity worked example and fixture heatmap recomputation",
            aggregation,
        ),
        (
            "offline fixture replay is deterministic, repairs hold, minimal pair aligns at 0.20",
            pipeline_replay,
        ),
        (
            "prf1, answer agreement, gold intersection, abstraction stats match set arithmetic",
            eval_harness,
        ),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(()) => println!("PASS [{}] {name} ({:.2?})", k + 1, started.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
