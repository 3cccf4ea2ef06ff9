use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use qudsim::alignment::ThresholdConfig;
use qudsim::config::Config;
use qudsim::corpus::{AbstractionLevel, PairId};
use qudsim::scoring::Metric;
use qudsim::workflow::{Session, TranscriptFile};
use sha2::{Digest, Sha256};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn session(root: &Path) -> Session {
    let cfg = Config::default().with_cache_dir(&root.join("cache"));
    Session::open(root, cfg, Some(&fixtures().join("transcripts"))).unwrap()
}

fn run(root: &Path) -> Session {
    let s = session(root);
    s.ingest(&[fixtures().join("documents.json")]).unwrap();
    s.run_pipeline(AbstractionLevel::Abstract).unwrap();
    let tau = ThresholdConfig::default_for("qudsim").unwrap();
    for pair in s.eligible_pairs().unwrap() {
        s.score(&pair, &Metric::Qudsim).unwrap();
        s.align(&pair, &tau).unwrap();
    }
    s
}

fn hashes(dir: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, hex::encode(Sha256::digest(fs::read(&p).unwrap())));
            }
        }
    }
    out
}

#[test]
fn replay_is_offline_deterministic_and_aligns_minimal_pair() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = run(a.path());
    run(b.path());

    let (ha, hb) = (
        hashes(&a.path().join("derived")),
        hashes(&b.path().join("derived")),
    );
    assert!(!ha.is_empty());
    assert_eq!(ha, hb);

    let eligible = sa.eligible_pairs().unwrap();
    assert_eq!(eligible.len(), 8);

    let gemini = PairId::new("gemini-flat-earth", "gemini-solar-system");
    let alignment = sa.ws.load_alignment(&gemini, "qudsim").unwrap();
    assert_eq!(alignment.tau, 0.20);
    assert!(!alignment.aligned.is_empty());
}

#[test]
fn repairs_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let s = run(dir.path());
    let read = |name: &str| -> TranscriptFile {
        qudsim::corpus::store::read_json(&s.ws.transcript_path(name)).unwrap()
    };

    // Segmentation gap on the first attempt, fixed by the re-prompt.
    let seg = read("segment.human-flat-earth");
    assert_eq!(seg.entries.len(), 2);
    assert!(seg.notes.iter().any(|n| n.contains("7")));
    let human = s.ws.load_document("human-flat-earth").unwrap();
    let seg = s.ws.load_segmentation(&human).unwrap();
    assert!(qudsim::corpus::validate_segmentation(&human, &seg).is_ok());

    // Three questions truncated to two.
    let q = read("quds.gemini-solar-system.abstract");
    assert!(q.notes.iter().any(|n| n.contains("truncated")));
    let quds =
        s.ws.load_quds("gemini-solar-system", AbstractionLevel::Abstract)
            .unwrap()
            .quds;
    assert!(quds.iter().filter(|q| q.source_segment_index == 7).count() == 2);

    // Out-of-range index and a modified sentence are both dropped.
    let ans = read("answers.gemini-solar-system__gemini-flat-earth.abstract");
    assert!(ans.notes.iter().any(|n| n.contains("99")));
    let ans = read("answers.gpt4o-flat-earth__human-flat-earth.abstract");
    assert!(!ans.notes.is_empty());

    for pair in s.eligible_pairs().unwrap() {
        let target = s.ws.load_document(&pair.target).unwrap();
        let file = s.ws.load_answers(&pair, &target).unwrap();
        for set in &file.levels[&AbstractionLevel::Abstract] {
            assert!(set
                .sentence_indices
                .iter()
                .all(|&i| i >= 1 && i <= target.sentences.len()));
        }
    }
}
