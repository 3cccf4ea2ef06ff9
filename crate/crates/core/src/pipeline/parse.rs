//! Tolerant parsers for the free-form LLM responses of each stage.
//!
//! Each parser accepts the JSON shapes models commonly emit as well as plain
//! text / markdown, and returns `None` when nothing usable was found so the
//! caller can re-prompt.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde_json::Value;

use crate::corpus::normalize_whitespace;

static NUMBER_OR_RANGE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(\d+)\s*(?:-|–|—|to)\s*(\d+)|(\d+)").expect("valid"));

static SEGMENT_LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:segment|chunk|paragraph|group|section)\s*\d+\s*(?:\([^)]*\)\s*)?[:.)\-–—]?")
        .expect("valid")
});

static PARAGRAPH_HEADER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?im)^[ \t>#*-]*(?:\*\*)?paragraph\s+(\d+)\s*(?:\*\*)?\s*[:.)\-–—]?\s*(?:\*\*)?[ \t]*")
        .expect("valid")
});

static NUMBERED_ITEM: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?m)^[ \t]*(\d+)[.)][ \t]+").expect("valid"));

static QUESTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[^?]*\?").expect("valid"));

static LIST_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:[-*•]+|\d+\s*[.):]|q(?:ud)?\s*\d*\s*[.):]|question\s*\d*\s*[.):])\s*")
        .expect("valid")
});

static ANSWER_LINE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(
        r"(?i)^(?:[-*•]\s*)?(?:\[(\d+)\]|\((\d+)\)|(?:sentence|sent\.?|s)\s*#?\s*(\d+)\s*[:.)\-–—]?|#?(\d+)\s*[:.)\-–—])\s*(.*)$",
    )
    .expect("valid")
});

static QUESTION_LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:question|q|qud)\s*#?\s*(\d+)\s*[:.)\-–—]?\s*(.*)$").expect("valid")
});

static INDEX_LIST_LABEL: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:answer(?:s|ing)?(?:\s+sentences?)?|sentences?(?:\s+numbers?)?|sentence\s+indices|numbers?|indices|list)\s*[:=\-–—]?\s*(.*)$")
        .expect("valid")
});

static EMPTY_MARKER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)^(?:\[\s*\]|none\.?|n/a|empty(?: list)?\.?|no (?:relevant |answering )?sentences?.*|not answerable.*|unanswerable.*|\(?empty list\)?\.?|the question (?:is|was) not answerable.*)$")
        .expect("valid")
});

/// Strips a surrounding markdown code fence, if any.
fn strip_fence(text: &str) -> &str {
    let t = text.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = rest.split_once('\n').map_or("", |(_, r)| r);
        return rest.trim_end().strip_suffix("```").unwrap_or(rest).trim();
    }
    t
}

fn parse_json_value(text: &str) -> Option<Value> {
    let t = strip_fence(text);
    if !(t.starts_with('[') || t.starts_with('{')) {
        return None;
    }
    serde_json::from_str(t).ok()
}

fn strip_markdown(line: &str) -> String {
    line.replace("**", "")
        .replace('`', "")
        .trim()
        .trim_start_matches('#')
        .trim()
        .to_string()
}

fn numbers_in(text: &str) -> Vec<usize> {
    let mut out = Vec::new();
    for caps in NUMBER_OR_RANGE.captures_iter(text) {
        if let (Some(a), Some(b)) = (caps.get(1), caps.get(2)) {
            let (a, b): (usize, usize) = (a.as_str().parse().unwrap_or(0), b.as_str().parse().unwrap_or(0));
            if a <= b && b - a < 10_000 {
                out.extend(a..=b);
            }
        } else if let Some(n) = caps.get(3).and_then(|m| m.as_str().parse().ok()) {
            out.push(n);
        }
    }
    out
}

fn json_int_list(value: &Value) -> Option<Vec<usize>> {
    value
        .as_array()?
        .iter()
        .map(|v| v.as_u64().map(|n| n as usize))
        .collect()
}

/// Parses a segmentation response into ordered groups of sentence numbers.
pub fn parse_segmentation(text: &str) -> Option<Vec<Vec<usize>>> {
    if let Some(value) = parse_json_value(text) {
        let items = match &value {
            Value::Object(map) => map
                .get("segments")
                .or_else(|| map.get("chunks"))
                .and_then(Value::as_array)
                .cloned()?,
            Value::Array(items) => items.clone(),
            _ => return None,
        };
        let groups: Option<Vec<Vec<usize>>> = items
            .iter()
            .map(|item| {
                json_int_list(item).or_else(|| {
                    let obj = item.as_object()?;
                    ["sentences", "sentence_numbers", "sentence_indices"]
                        .iter()
                        .find_map(|k| obj.get(*k).and_then(json_int_list))
                })
            })
            .collect();
        return groups.filter(|g| !g.is_empty());
    }

    let mut groups = Vec::new();
    for raw in text.lines() {
        let line = strip_markdown(raw);
        let line = line.trim_start_matches(['-', '*', '•', ' ']);
        if !line.chars().any(|c| c.is_ascii_digit()) {
            continue;
        }
        let body = if let Some(m) = SEGMENT_LABEL.find(line) {
            // Keep a parenthesised list such as "Segment 1 (sentences 1-3)".
            let label = &line[..m.end()];
            match (label.find('('), label.rfind(')')) {
                (Some(a), Some(b)) if a < b => format!("{} {}", &label[a + 1..b], &line[m.end()..]),
                _ => line[m.end()..].to_string(),
            }
        } else if let (Some(a), Some(b)) = (line.find('['), line.rfind(']')) {
            line[a + 1..b.max(a + 1)].to_string()
        } else if let Some((_, after)) = line.split_once(':') {
            after.to_string()
        } else {
            line.to_string()
        };
        // Free text after the list ("1-3: the meeting") would add noise.
        let body = match (body.find('['), body.find(']')) {
            (Some(a), Some(b)) if a < b => body[a + 1..b].to_string(),
            _ => body,
        };
        let nums = numbers_in(&body);
        if !nums.is_empty() {
            groups.push(nums);
        }
    }
    (!groups.is_empty()).then_some(groups)
}

/// Parses `Paragraph k: text` blocks. Falls back to a numbered list, then to
/// blank-line separated blocks. Returns texts in paragraph order.
pub fn parse_abstractions(text: &str) -> Option<Vec<String>> {
    let text = strip_fence(text);
    if text.trim().is_empty() {
        return None;
    }
    if let Some(value) = parse_json_value(text) {
        let items = value.as_array()?;
        let texts: Option<Vec<String>> = items
            .iter()
            .map(|item| {
                item.as_str().map(str::to_string).or_else(|| {
                    let obj = item.as_object()?;
                    ["text", "abstract", "paragraph", "content"]
                        .iter()
                        .find_map(|k| obj.get(*k).and_then(Value::as_str).map(str::to_string))
                })
            })
            .collect();
        return texts.map(|t| t.into_iter().map(|s| normalize_whitespace(&s)).collect());
    }

    for header in [&*PARAGRAPH_HEADER, &*NUMBERED_ITEM] {
        let marks: Vec<(usize, usize, usize)> = header
            .captures_iter(text)
            .filter_map(|c| {
                let m = c.get(0)?;
                Some((c[1].parse().ok()?, m.start(), m.end()))
            })
            .collect();
        if marks.is_empty() {
            continue;
        }
        let mut blocks: BTreeMap<usize, String> = BTreeMap::new();
        for (k, &(number, _, end)) in marks.iter().enumerate() {
            let stop = marks.get(k + 1).map_or(text.len(), |m| m.1);
            let body = normalize_whitespace(&text[end..stop].replace("**", ""));
            blocks.entry(number).or_insert(body);
        }
        let expected: Vec<usize> = (1..=blocks.len()).collect();
        if blocks.keys().copied().collect::<Vec<_>>() == expected {
            return Some(blocks.into_values().collect());
        }
    }

    let blocks: Vec<String> = text
        .split("\n\n")
        .map(normalize_whitespace)
        .filter(|b| !b.is_empty())
        .collect();
    (!blocks.is_empty()).then_some(blocks)
}

/// Questions found in a QUD-generation response, in order, deduplicated.
pub fn parse_questions(text: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for raw in text.lines() {
        let mut line = strip_markdown(raw);
        loop {
            let stripped = LIST_MARKER.replace(&line, "").trim().to_string();
            if stripped == line {
                break;
            }
            line = stripped;
        }
        for m in QUESTION.find_iter(&line) {
            let q = m
                .as_str()
                .trim()
                .trim_start_matches(['"', '“', '\'', '‘', ':', '-', ' '])
                .trim();
            let q = normalize_whitespace(q);
            let starts_with_letter = q.chars().next().is_some_and(char::is_alphabetic);
            if starts_with_letter && q.split_whitespace().count() >= 2 && !out.contains(&q) {
                out.push(q);
            }
        }
    }
    out
}

/// One (sentence number, quoted sentence text) pair returned for a QUD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAnswer {
    pub index: usize,
    pub text: Option<String>,
}

fn question_key(q: &str) -> String {
    q.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn match_question(line: &str, questions: &[String]) -> Option<usize> {
    let key = question_key(line);
    if key.is_empty() {
        return None;
    }
    questions.iter().position(|q| question_key(q) == key).or_else(|| {
        questions.iter().position(|q| {
            let qk = question_key(q);
            !qk.is_empty() && key.contains(&qk)
        })
    })
}

fn clean_answer_text(text: &str) -> String {
    let t = text.trim();
    let t = t.strip_prefix('-').map_or(t, str::trim);
    normalize_whitespace(t)
}

fn json_answers(value: &Value) -> Option<Vec<RawAnswer>> {
    let items = value.as_array()?;
    items
        .iter()
        .map(|item| match item {
            Value::Number(n) => Some(RawAnswer {
                index: n.as_u64()? as usize,
                text: None,
            }),
            Value::Array(pair) => Some(RawAnswer {
                index: pair.first()?.as_u64()? as usize,
                text: pair.get(1).and_then(Value::as_str).map(normalize_whitespace),
            }),
            Value::Object(obj) => {
                let index = ["number", "sentence_number", "index", "id", "sentence_index"]
                    .iter()
                    .find_map(|k| obj.get(*k).and_then(Value::as_u64))? as usize;
                let text = ["sentence", "text", "content"]
                    .iter()
                    .find_map(|k| obj.get(*k).and_then(Value::as_str))
                    .map(normalize_whitespace);
                Some(RawAnswer { index, text })
            }
            _ => None,
        })
        .collect()
}

fn parse_answers_json(value: &Value, questions: &[String]) -> Option<BTreeMap<usize, Vec<RawAnswer>>> {
    let items = match value {
        Value::Array(items) => items.clone(),
        Value::Object(map) => ["answers", "results", "questions"]
            .iter()
            .find_map(|k| map.get(*k).and_then(Value::as_array))
            .cloned()?,
        _ => return None,
    };
    let mut out = BTreeMap::new();
    for (pos, item) in items.iter().enumerate() {
        let obj = item.as_object()?;
        let slot = obj
            .get("question")
            .and_then(Value::as_str)
            .and_then(|q| match_question(q, questions))
            .or_else(|| (pos < questions.len()).then_some(pos))?;
        let answers = ["sentences", "answers", "answer", "sentence_numbers", "evidence"]
            .iter()
            .find_map(|k| obj.get(*k).and_then(json_answers))
            .unwrap_or_default();
        out.insert(slot, answers);
    }
    Some(out)
}

/// Parses a QUD-answering response. Keys of the result are 0-based positions
/// into `questions`; questions absent from the response are absent from the
/// map. Returns `None` when no question block was recognised at all.
pub fn parse_answers(text: &str, questions: &[String]) -> Option<BTreeMap<usize, Vec<RawAnswer>>> {
    if let Some(value) = parse_json_value(text) {
        return parse_answers_json(&value, questions).filter(|m| !m.is_empty());
    }

    let mut out: BTreeMap<usize, Vec<RawAnswer>> = BTreeMap::new();
    let mut current: Option<usize> = None;
    for raw in text.lines() {
        let line = strip_markdown(raw);
        if line.is_empty() {
            continue;
        }
        let unlisted = LIST_MARKER.replace(&line, "").trim().to_string();
        let header = match_question(&unlisted, questions).or_else(|| {
            QUESTION_LABEL.captures(&line).and_then(|c| {
                let n: usize = c[1].parse().ok()?;
                (n >= 1 && n <= questions.len()).then(|| n - 1)
            })
        });
        let is_header = header.is_some() && (line.contains('?') || QUESTION_LABEL.is_match(&line));
        if is_header {
            current = header;
            out.entry(header.expect("checked")).or_default();
            continue;
        }
        let Some(slot) = current else { continue };
        // Answer text keeps its own punctuation, backticks included.
        let trimmed = raw.trim();
        let body = trimmed.strip_suffix("**").unwrap_or(trimmed);
        let body = body.trim_start_matches(['-', '*', '•', ' ']);
        if EMPTY_MARKER.is_match(body) {
            continue;
        }
        let listed = INDEX_LIST_LABEL
            .captures(body)
            .map(|c| c[1].to_string())
            .unwrap_or_else(|| body.to_string());
        let only_numbers = !listed.is_empty()
            && listed.chars().any(|c| c.is_ascii_digit())
            && listed
                .chars()
                .all(|c| c.is_ascii_digit() || matches!(c, ',' | '[' | ']' | ' ' | '-' | '–' | ';' | '.'));
        if only_numbers {
            out.entry(slot).or_default().extend(
                numbers_in(&listed)
                    .into_iter()
                    .map(|index| RawAnswer { index, text: None }),
            );
            continue;
        }
        if let Some(caps) = ANSWER_LINE.captures(body) {
            let index = (1..=4)
                .find_map(|g| caps.get(g))
                .and_then(|m| m.as_str().parse().ok());
            if let Some(index) = index {
                let rest = caps.get(5).map_or("", |m| m.as_str());
                let text = clean_answer_text(rest);
                out.entry(slot).or_default().push(RawAnswer {
                    index,
                    text: (!text.is_empty()).then_some(text),
                });
            }
        }
    }
    (!out.is_empty()).then_some(out)
}

/// Extracts a 0–100 judge score: the number before `/100` or `out of 100`
/// when present, otherwise the first number in range.
pub fn parse_judge_score(text: &str) -> Option<f64> {
    static SCORED: LazyLock<Regex> =
        LazyLock::new(|| Regex::new(r"(?i)(\d+(?:\.\d+)?)\s*(?:/\s*100|out of\s*100)").expect("valid"));
    static ANY: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+(?:\.\d+)?").expect("valid"));
    let in_range = |v: f64| (0.0..=100.0).contains(&v).then_some(v);
    if let Some(v) = SCORED
        .captures(text)
        .and_then(|c| c[1].parse::<f64>().ok())
        .and_then(in_range)
    {
        return Some(v);
    }
    ANY.find_iter(text)
        .filter_map(|m| m.as_str().parse::<f64>().ok())
        // "0-100" in a restated scale is not a score.
        .find(|&v| in_range(v).is_some() && !(v == 100.0 && text.contains("0-100")))
}
