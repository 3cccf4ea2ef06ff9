//! Regenerates `fixtures/transcripts/*.json` and `fixtures/gold/*.json` from
//! hand-annotated segment plans for the four bundled stories.
//!
//! The transcripts are authored stand-ins for recorded model output: each
//! segment is tagged with discourse roles, QUDs are phrased per role, and a
//! QUD is answered by the key sentences of target segments sharing the role.
//! A few responses are deliberately malformed to exercise the repair paths.
//!
//!     cargo run -p qudsim --example author_fixtures

use std::collections::BTreeMap;
use std::path::Path;

use qudsim::baselines::tokenize;
use qudsim::corpus::store::{read_json, write_json};
use qudsim::corpus::{Document, DocumentMeta, GoldAlignment};
use qudsim::llm::{EmbeddingFixtures, FixtureEntry, TemplateId};
use serde_json::json;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Role {
    Setting,
    Approach,
    Reveal,
    Reaction,
    History,
    Why,
    Cost,
    End,
}

use Role::*;

impl Role {
    fn phrasings(self) -> [&'static str; 4] {
        match self {
            Setting => [
                "What is the nature of the interaction?",
                "Who is involved in the meeting?",
                "What is the setting of the conversation?",
                "What is the nature of the meeting?",
            ],
            Approach => [
                "How is the listener prepared for the news?",
                "How does the speaker introduce the revelation?",
                "What warning precedes the disclosure?",
                "How is the urgency of the conversation established?",
            ],
            Reveal => [
                "What secret is revealed?",
                "What truth is disclosed to the leader?",
                "What is the hidden information?",
                "What does the official reveal?",
            ],
            Reaction => [
                "How does the listener react to the news?",
                "What is the leader's initial response?",
                "How is the claim received?",
                "What doubt does the listener express?",
            ],
            History => [
                "How has the deception been maintained?",
                "How did the deception begin?",
                "Who is responsible for the secret?",
                "What is the origin of the secret?",
            ],
            Why => [
                "Why must the secret be kept?",
                "What would happen if the truth came out?",
                "What justifies the deception?",
                "What consequences does disclosure threaten?",
            ],
            Cost => [
                "What burden does the secret carry?",
                "What risk does the official face?",
                "What cost does keeping the secret carry?",
                "How does the official feel about the responsibility?",
            ],
            End => [
                "How does the conversation conclude?",
                "Who carries the secret in the end?",
                "What is left for the future?",
                "How does the burden shift?",
            ],
        }
    }
}

struct Seg {
    sentences: &'static [usize],
    /// Roles in order, each with the sentences that answer a QUD about it.
    roles: &'static [(Role, &'static [usize])],
    abstract_text: &'static str,
}

struct Plan {
    id: &'static str,
    segs: &'static [Seg],
}

const HUMAN: Plan = Plan {
    id: "human-flat-earth",
    segs: &[
        Seg {
            sentences: &[1, 2],
            roles: &[(Setting, &[1]), (Reaction, &[2])],
            abstract_text: "An official goes to brief a new leader, remembering how earlier leaders laughed at the same briefing.",
        },
        Seg {
            sentences: &[3, 4, 5],
            roles: &[(History, &[3, 4])],
            abstract_text: "The custom began as a dare between two scientists to present a fake secret briefing to the leader.",
        },
        Seg {
            sentences: &[6, 7, 8, 9],
            roles: &[(History, &[7, 8]), (Why, &[9])],
            abstract_text: "Years later an official tried the joke on a new leader who believed it, so false reports were produced to avoid embarrassment.",
        },
        Seg {
            sentences: &[10, 11, 12, 13, 14],
            roles: &[(History, &[10]), (Reaction, &[11, 14])],
            abstract_text: "The briefing became a ritual, and successive leaders reacted with belief, doubt or laughter.",
        },
        Seg {
            sentences: &[15, 16],
            roles: &[(History, &[16])],
            abstract_text: "When a leader asked about it, one of the original pranksters admitted to having invented the joke.",
        },
        Seg {
            sentences: &[17, 18, 19, 20, 21],
            roles: &[(Cost, &[17, 18]), (Approach, &[21])],
            abstract_text: "The official fears being found out but proceeds with the ritual and asks to speak in private.",
        },
    ],
};

const GEMINI_FLAT: Plan = Plan {
    id: "gemini-flat-earth",
    segs: &[
        Seg {
            sentences: &[1, 2, 3],
            roles: &[(Setting, &[2])],
            abstract_text: "A nervous official sits across from a skeptical newly elected leader, ready to deliver a shocking revelation.",
        },
        Seg {
            sentences: &[4, 5, 6, 7],
            roles: &[(Approach, &[4])],
            abstract_text: "The official hesitantly says there is something fundamental to share, and the leader impatiently demands the point.",
        },
        Seg {
            sentences: &[8, 9, 10],
            roles: &[(Reveal, &[9])],
            abstract_text: "The official reveals that the planet is not a sphere, and silence follows.",
        },
        Seg {
            sentences: &[11, 12, 13, 14],
            roles: &[(Reaction, &[12, 13])],
            abstract_text: "The leader reacts with amused disbelief and asks whether this is a joke or an exercise.",
        },
        Seg {
            sentences: &[15, 16, 17, 18, 19],
            roles: &[(Reveal, &[17]), (Reaction, &[18])],
            abstract_text: "The official insists the planet is flat and calls it the greatest secret in history, and the leader's amusement turns to anger.",
        },
        Seg {
            sentences: &[20, 21],
            roles: &[(History, &[21])],
            abstract_text: "The official explains the long-running deception, coordinated across governments with fabricated imagery.",
        },
        Seg {
            sentences: &[22, 23, 24, 25, 26, 27, 28],
            roles: &[(Why, &[24, 25])],
            abstract_text: "Asked why it is hidden, the official says the truth would cause mass panic and the collapse of social order.",
        },
        Seg {
            sentences: &[29, 30, 31, 32, 33, 34],
            roles: &[(Cost, &[31, 34])],
            abstract_text: "The leader asks about the cost of the lie, and the official calls it a necessary burden that keeps a fragile peace.",
        },
        Seg {
            sentences: &[35, 36, 37, 38],
            roles: &[(Cost, &[36])],
            abstract_text: "The leader silently weighs the responsibility that comes with this knowledge.",
        },
        Seg {
            sentences: &[39, 40, 41],
            roles: &[(Why, &[41])],
            abstract_text: "The leader asks what happens if the secret gets out, and the official answers that everyone would be doomed.",
        },
        Seg {
            sentences: &[42, 43, 44, 45],
            roles: &[(End, &[44, 45])],
            abstract_text: "The burden of the secret passes to the leader, and the official feels fear for the future.",
        },
    ],
};

const GEMINI_SOLAR: Plan = Plan {
    id: "gemini-solar-system",
    segs: &[
        Seg {
            sentences: &[1, 2],
            roles: &[(Setting, &[2])],
            abstract_text: "An official meets a skeptical newly elected leader who promised transparency.",
        },
        Seg {
            sentences: &[3, 4],
            roles: &[(Setting, &[3])],
            abstract_text: "An object on the desk shows a model of the world that differs subtly from the accepted one.",
        },
        Seg {
            sentences: &[5, 6, 7, 8],
            roles: &[(Approach, &[5, 6])],
            abstract_text: "The official warns that the information is highly classified and could cause collapse, and the leader gives full attention.",
        },
        Seg {
            sentences: &[9, 10, 11, 12, 13, 14],
            roles: &[(Reveal, &[10, 11])],
            abstract_text: "The official reveals that the accepted model of the planet's place in the cosmos is a deliberate fabrication.",
        },
        Seg {
            sentences: &[15, 16, 17, 18],
            roles: &[(Reveal, &[15, 16])],
            abstract_text: "The official explains that the planet is actually at the center, with other bodies moving around it under unknown control.",
        },
        Seg {
            sentences: &[19, 20, 21, 22, 23, 24, 25, 26],
            roles: &[(Reaction, &[20]), (History, &[23])],
            abstract_text: "The leader asks who controls the system, and the official admits ignorance but describes evidence of forces beyond understanding.",
        },
        Seg {
            sentences: &[27, 28, 29, 30, 31, 32],
            roles: &[(History, &[28]), (Why, &[31])],
            abstract_text: "The official shares a guess that an unknown intelligence controls the system and warns that disclosure could provoke a catastrophic response.",
        },
        Seg {
            sentences: &[33, 34, 35, 36, 37, 38],
            roles: &[(Cost, &[35, 37])],
            abstract_text: "The leader worries that the arrangement could change, and the official describes limited efforts to manage that risk.",
        },
        Seg {
            sentences: &[39, 40, 41, 42, 43, 44],
            roles: &[(Why, &[41, 42])],
            abstract_text: "The official defends the lie as necessary, warning that disclosure would bring chaos and societal breakdown.",
        },
        Seg {
            sentences: &[45, 46, 47, 48],
            roles: &[(End, &[46, 47])],
            abstract_text: "The leader sits with the weight of the secret, and the future depends on keeping it.",
        },
    ],
};

const GPT_FLAT: Plan = Plan {
    id: "gpt4o-flat-earth",
    segs: &[
        Seg {
            sentences: &[1, 2, 3],
            roles: &[(Setting, &[1])],
            abstract_text: "An official prepares for a weighty conversation and enters the leader's office.",
        },
        Seg {
            sentences: &[4, 5, 6],
            roles: &[(Setting, &[4])],
            abstract_text: "The newly elected leader greets the official warmly and is known for curiosity.",
        },
        Seg {
            sentences: &[7, 8, 9, 10, 11],
            roles: &[(Approach, &[10, 11])],
            abstract_text: "The leader notes the urgency of the meeting, and the official warns that the news will change how the world is understood.",
        },
        Seg {
            sentences: &[12, 13, 14, 15],
            roles: &[(Reveal, &[15])],
            abstract_text: "The official reveals that the planet is flat.",
        },
        Seg {
            sentences: &[16, 17],
            roles: &[(Reaction, &[16])],
            abstract_text: "The leader suspects a joke but listens because the official is serious.",
        },
        Seg {
            sentences: &[18, 19, 20, 21, 22, 23, 24],
            roles: &[(History, &[18, 23])],
            abstract_text: "The official explains that the round-world view is a narrative built long ago to unify society and avoid conflict.",
        },
        Seg {
            sentences: &[25, 26, 27, 28, 29, 30, 31, 32],
            roles: &[(Why, &[27, 30, 31])],
            abstract_text: "The leader asks the purpose of keeping the narrative, and the official says it is about control and keeping the peace.",
        },
        Seg {
            sentences: &[33, 34, 35, 36, 37],
            roles: &[(Why, &[35, 36])],
            abstract_text: "The official fears that exposing the lie would cause rebellion against authority.",
        },
        Seg {
            sentences: &[38, 39, 40, 41, 42, 43],
            roles: &[(Cost, &[41, 42])],
            abstract_text: "The official admits discomfort with the deception but accepts the responsibility of the role.",
        },
        Seg {
            sentences: &[44, 45, 46, 47, 48, 49, 50, 51],
            roles: &[(End, &[45, 49])],
            abstract_text: "The leader accepts why the secret is kept, and the burden passes from the official to the leader.",
        },
    ],
};

const PLANS: [&Plan; 4] = [&HUMAN, &GEMINI_FLAT, &GEMINI_SOLAR, &GPT_FLAT];

/// Ordered pairs answered in the fixture run: different authors on one
/// prompt, plus the two minimal-pair stories.
const PAIRS: [(usize, usize); 8] = [(0, 1), (1, 0), (0, 3), (3, 0), (1, 3), (3, 1), (1, 2), (2, 1)];

const EMBEDDING_DIM: usize = 64;

#[derive(serde::Deserialize)]
struct Record {
    id: String,
    text: String,
    meta: DocumentMeta,
}

fn entry(template: TemplateId, attempt: u32, contains: Vec<String>, response: String) -> FixtureEntry {
    FixtureEntry {
        template,
        attempt,
        contains,
        response,
    }
}

/// QUD texts per segment, in generation order. Repeated roles within a
/// document get distinct phrasings.
fn quds(doc_index: usize, plan: &Plan) -> Vec<Vec<(Role, &'static str)>> {
    let mut seen: BTreeMap<Role, usize> = BTreeMap::new();
    plan.segs
        .iter()
        .map(|s| {
            s.roles
                .iter()
                .map(|&(role, _)| {
                    let k = seen.entry(role).or_default();
                    let q = role.phrasings()[(doc_index + *k) % 4];
                    *k += 1;
                    (role, q)
                })
                .collect()
        })
        .collect()
}

fn segmentation_entries(doc: &Document, k: usize, plan: &Plan) -> Vec<FixtureEntry> {
    let contains = vec![format!("Document: 1. {}", doc.sentences[0].text)];
    let list = |s: &[usize]| s.iter().map(usize::to_string).collect::<Vec<_>>().join(", ");
    let good = match k {
        // JSON for one document, labelled lines for the rest.
        3 => serde_json::to_string_pretty(&json!({
            "segments": plan.segs.iter().map(|s| s.sentences).collect::<Vec<_>>()
        }))
        .expect("json"),
        2 => plan
            .segs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (a, b) = (s.sentences[0], *s.sentences.last().expect("non-empty"));
                if a == b {
                    format!("Segment {}: sentence {a}", i + 1)
                } else {
                    format!("Segment {}: sentences {a}-{b}", i + 1)
                }
            })
            .collect::<Vec<_>>()
            .join("\n"),
        _ => plan
            .segs
            .iter()
            .enumerate()
            .map(|(i, s)| format!("Segment {}: [{}]", i + 1, list(s.sentences)))
            .collect::<Vec<_>>()
            .join("\n"),
    };
    if k == 0 {
        // The first attempt forgets sentence 7.
        let bad = plan
            .segs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let kept: Vec<usize> = s.sentences.iter().copied().filter(|&n| n != 7).collect();
                format!("Segment {}: [{}]", i + 1, list(&kept))
            })
            .collect::<Vec<_>>()
            .join("\n");
        vec![
            entry(
                TemplateId::Segmentation,
                0,
                contains.clone(),
                format!("Here are the segments:\n{bad}"),
            ),
            entry(TemplateId::Segmentation, 1, contains, good),
        ]
    } else {
        vec![entry(TemplateId::Segmentation, 0, contains, good)]
    }
}

fn abstraction_entry(doc: &Document, plan: &Plan) -> FixtureEntry {
    let first = doc.span_text(plan.segs[0].sentences);
    let body = plan
        .segs
        .iter()
        .enumerate()
        .map(|(i, s)| format!("Paragraph {}: {}", i + 1, s.abstract_text))
        .collect::<Vec<_>>()
        .join("\n\n");
    entry(
        TemplateId::Abstraction,
        0,
        vec![format!("Paragraph 1: {first}")],
        body,
    )
}

fn qud_entries(doc_index: usize, plan: &Plan) -> Vec<FixtureEntry> {
    quds(doc_index, plan)
        .iter()
        .zip(plan.segs)
        .enumerate()
        .map(|(i, (qs, seg))| {
            let mut questions: Vec<&str> = qs.iter().map(|(_, q)| *q).collect();
            if plan.id == GEMINI_SOLAR.id && i == 6 {
                // Over-generation: three questions where two are allowed.
                questions.push("What motives drive the controlling force?");
            }
            let listed = questions
                .iter()
                .enumerate()
                .map(|(n, q)| format!("{}. {q}", n + 1))
                .collect::<Vec<_>>()
                .join("\n");
            let response = format!("Minimum number of QUDs: {}\n\nQUDs:\n{listed}", questions.len());
            entry(
                TemplateId::QudGen,
                0,
                vec![format!("Paragraph: {}", seg.abstract_text)],
                response,
            )
        })
        .collect()
}

/// Key sentences of the first two target segments sharing `role`.
fn answers_for(role: Role, target: &Plan) -> Vec<usize> {
    target
        .segs
        .iter()
        .filter_map(|s| s.roles.iter().find(|(r, _)| *r == role).map(|(_, keys)| *keys))
        .take(2)
        .flatten()
        .copied()
        .collect()
}

fn answer_entry(si: usize, ti: usize, docs: &[Document]) -> FixtureEntry {
    let (source, target) = (PLANS[si], PLANS[ti]);
    let tdoc = &docs[ti];
    let questions: Vec<(Role, &str)> = quds(si, source).into_iter().flatten().collect();
    let text_of = |n: usize| -> String {
        let t = tdoc.sentence(n).expect("key sentence exists").text.clone();
        if (si, ti) == (3, 0) && n == 1 {
            // A paraphrased sentence; the hallucination guard drops it.
            t.replace("antechamber", "waiting room")
        } else {
            t
        }
    };
    let per_question: Vec<(String, Vec<(usize, String)>)> = questions
        .iter()
        .enumerate()
        .map(|(k, (role, q))| {
            let mut found: Vec<(usize, String)> = answers_for(*role, target)
                .into_iter()
                .map(|n| (n, text_of(n)))
                .collect();
            if (si, ti) == (2, 1) && k == 0 {
                found.push((99, "The briefing room was sealed.".to_string()));
            }
            (q.to_string(), found)
        })
        .collect();
    let response = match si {
        1 => serde_json::to_string_pretty(&json!(per_question
            .iter()
            .map(|(q, found)| json!({
                "question": q,
                "sentences": found.iter().map(|(n, t)| json!({"number": n, "sentence": t})).collect::<Vec<_>>(),
            }))
            .collect::<Vec<_>>()))
        .expect("json"),
        2 => per_question
            .iter()
            .enumerate()
            .map(|(k, (q, found))| {
                let body = if found.is_empty() {
                    "No relevant sentences.".to_string()
                } else {
                    found.iter().map(|(n, t)| format!("Sentence {n}: {t}")).collect::<Vec<_>>().join("\n")
                };
                format!("{}. {q}\n{body}", k + 1)
            })
            .collect::<Vec<_>>()
            .join("\n\n"),
        3 => per_question
            .iter()
            .enumerate()
            .map(|(k, (q, found))| {
                let body = if found.is_empty() {
                    "[]".to_string()
                } else {
                    found.iter().map(|(n, t)| format!("- [{n}] {t}")).collect::<Vec<_>>().join("\n")
                };
                format!("**Question {}: {q}**\n{body}", k + 1)
            })
            .collect::<Vec<_>>()
            .join("\n\n"),
        _ => per_question
            .iter()
            .enumerate()
            .map(|(k, (q, found))| {
                let body = if found.is_empty() {
                    "[]".to_string()
                } else {
                    found.iter().map(|(n, t)| format!("[{n}] {t}")).collect::<Vec<_>>().join("\n")
                };
                format!("Question {}: {q}\n{body}", k + 1)
            })
            .collect::<Vec<_>>()
            .join("\n\n"),
    };
    entry(
        TemplateId::QudAnswer,
        0,
        vec![
            format!("Document: 1. {}", tdoc.sentences[0].text),
            format!("Questions: 1. {}", questions[0].1),
        ],
        response,
    )
}

fn judge_entries(si: usize, ti: usize, docs: &[Document]) -> Vec<FixtureEntry> {
    let (source, target) = (PLANS[si], PLANS[ti]);
    let mut out = Vec::new();
    for s in source.segs {
        for t in target.segs {
            let shared = s
                .roles
                .iter()
                .filter(|(r, _)| t.roles.iter().any(|(q, _)| q == r))
                .count();
            let score = match shared {
                0 => 18,
                1 if s.roles[0].0 == t.roles[0].0 => 82,
                _ => 64,
            };
            out.push(entry(
                TemplateId::Judge,
                0,
                vec![format!(
                    "Document 1: {}\nDocument 2: {}",
                    docs[si].span_text(s.sentences),
                    docs[ti].span_text(t.sentences)
                )],
                format!("The two passages play comparable roles in their stories.\n\nScore: {score}/100"),
            ));
        }
    }
    out
}

/// Signed feature hashing over lowercase tokens, L2-normalized.
fn hashed_embedding(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBEDDING_DIM];
    for tok in tokenize(text) {
        let h = Sha256::digest(tok.as_bytes());
        let slot = usize::from(h[0]) % EMBEDDING_DIM;
        let sign = if h[1] & 1 == 0 { 1.0 } else { -1.0 };
        v[slot] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

fn gold(si: usize, ti: usize) -> GoldAlignment {
    let (source, target) = (PLANS[si], PLANS[ti]);
    let mut aligned = std::collections::BTreeSet::new();
    for (i, s) in source.segs.iter().enumerate() {
        for (j, t) in target.segs.iter().enumerate() {
            if s.roles[0].0 == t.roles[0].0 {
                aligned.insert((i + 1, j + 1));
            }
        }
    }
    GoldAlignment {
        source_document_id: source.id.to_string(),
        target_document_id: target.id.to_string(),
        aligned,
        provenance: vec!["fixture annotation: segments share their primary discourse role".to_string()],
    }
}

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let records: Vec<Record> = read_json(&root.join("documents.json")).expect("documents.json");
    let docs: Vec<Document> = PLANS
        .iter()
        .map(|p| {
            let r = records.iter().find(|r| r.id == p.id).expect("plan id in corpus");
            Document::from_text(&r.id, &r.text, r.meta.clone()).expect("document splits")
        })
        .collect();
    for (doc, plan) in docs.iter().zip(PLANS) {
        let covered: Vec<usize> = plan
            .segs
            .iter()
            .flat_map(|s| s.sentences.iter().copied())
            .collect();
        assert_eq!(
            covered,
            (1..=doc.sentences.len()).collect::<Vec<_>>(),
            "{} plan",
            plan.id
        );
    }

    let mut segmentation = Vec::new();
    let mut abstraction = Vec::new();
    let mut qud_gen = Vec::new();
    let mut embeddings = EmbeddingFixtures::default();
    for (k, (doc, plan)) in docs.iter().zip(PLANS).enumerate() {
        segmentation.extend(segmentation_entries(doc, k, plan));
        abstraction.push(abstraction_entry(doc, plan));
        qud_gen.extend(qud_entries(k, plan));
        for s in plan.segs {
            let text = doc.span_text(s.sentences);
            embeddings
                .vectors
                .insert(EmbeddingFixtures::text_key(&text), hashed_embedding(&text));
        }
    }
    let answers: Vec<FixtureEntry> = PAIRS.iter().map(|&(s, t)| answer_entry(s, t, &docs)).collect();
    let judge: Vec<FixtureEntry> = PAIRS
        .iter()
        .flat_map(|&(s, t)| judge_entries(s, t, &docs))
        .collect();

    let dir = root.join("transcripts");
    write_json(&dir.join("segmentation.json"), &segmentation).expect("write");
    write_json(&dir.join("abstraction.json"), &abstraction).expect("write");
    write_json(&dir.join("qud_gen.json"), &qud_gen).expect("write");
    write_json(&dir.join("qud_answer.json"), &answers).expect("write");
    write_json(&dir.join("judge.json"), &judge).expect("write");
    write_json(&dir.join("embeddings.json"), &embeddings).expect("write");
    for &(s, t) in &PAIRS {
        let g = gold(s, t);
        write_json(
            &root.join("gold").join(format!("{}.alignment.json", g.pair())),
            &g,
        )
        .expect("write");
    }
    println!(
        "wrote {} chat entries and {} vectors",
        segmentation.len() + abstraction.len() + qud_gen.len() + answers.len() + judge.len(),
        embeddings.vectors.len()
    );
}
