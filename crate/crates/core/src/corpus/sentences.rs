//! Deterministic rule-based sentence splitter.
//!
//! Boundaries are placed after terminal punctuation (`.`, `!`, `?`) plus any
//! trailing closing quotes or brackets, when followed by whitespace and a
//! token that does not start with a lowercase letter. Blank lines always end
//! a sentence. Known abbreviations, initials and ellipses never do.

use crate::corpus::Sentence;
use crate::{Error, Result};

/// Lowercased abbreviations (without the final period) that never end a
/// sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "mt", "gen", "sen", "rep", "gov", "lt", "col", "capt",
    "sgt", "cmdr", "adm", "maj", "rev", "hon", "pres", "supt", "vs", "e.g", "i.e", "cf", "inc", "ltd", "co",
    "corp", "jan", "feb", "mar", "apr", "jun", "jul", "aug", "sep", "sept", "oct", "nov", "dec", "approx",
    "dept", "univ", "fig", "est", "u.s", "u.k", "a.m", "p.m", "ph.d", "no",
];

const CLOSERS: &[char] = &['"', '\'', '”', '’', ')', ']', '*', '»'];

/// Collapses every run of whitespace into a single space and trims the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Splits raw text into 1-based, whitespace-normalized sentences.
pub fn split_sentences(raw_text: &str) -> Result<Vec<Sentence>> {
    let sentences: Vec<Sentence> = split_with_paragraphs(raw_text)
        .into_iter()
        .enumerate()
        .map(|(k, (_, text))| Sentence { index: k + 1, text })
        .collect();
    if sentences.is_empty() {
        return Err(Error::EmptyInput("text contains no sentences"));
    }
    Ok(sentences)
}

/// Splits text into `(paragraph_number, sentence_text)` pairs. Paragraphs are
/// separated by blank lines and numbered from 1.
pub(crate) fn split_with_paragraphs(raw_text: &str) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    let mut paragraph = 0;
    for block in paragraphs(raw_text) {
        paragraph += 1;
        for sentence in split_block(&block) {
            out.push((paragraph, sentence));
        }
    }
    out
}

fn paragraphs(text: &str) -> Vec<String> {
    let mut blocks = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    blocks
}

fn split_block(block: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = block.char_indices().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let (_, ch) = chars[i];
        if !matches!(ch, '.' | '!' | '?') {
            i += 1;
            continue;
        }
        // Extend over the whole run of terminal punctuation.
        let run_start = i;
        while i < chars.len() && matches!(chars[i].1, '.' | '!' | '?' | '…') {
            i += 1;
        }
        let run: String = chars[run_start..i].iter().map(|&(_, c)| c).collect();
        while i < chars.len() && CLOSERS.contains(&chars[i].1) {
            i += 1;
        }
        let end_byte = chars.get(i).map_or(block.len(), |&(b, _)| b);
        if i < chars.len() && !chars[i].1.is_whitespace() {
            continue;
        }
        if run.chars().filter(|&c| c == '.').count() >= 2 {
            // ellipsis
            continue;
        }
        if run == "." && is_abbreviation(&block[..chars[run_start].0], &block[end_byte..]) {
            continue;
        }
        let next = chars[i..].iter().map(|&(_, c)| c).find(|c| !c.is_whitespace());
        if next.is_some_and(char::is_lowercase) {
            continue;
        }
        let text = normalize_whitespace(&block[start..end_byte]);
        if !text.is_empty() {
            sentences.push(text);
        }
        start = end_byte;
    }
    let tail = normalize_whitespace(&block[start..]);
    if !tail.is_empty() {
        sentences.push(tail);
    }
    sentences
}

/// Checks whether the word immediately before a period is an abbreviation or
/// an initial (`J`, `U.S`, `H.W`).
fn is_abbreviation(before: &str, after: &str) -> bool {
    let word: String = before
        .chars()
        .rev()
        .take_while(|c| !c.is_whitespace() && !matches!(c, '"' | '(' | '“' | '\'' | '‘' | '['))
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    if word.is_empty() {
        return false;
    }
    let lower = word.to_lowercase();
    if ABBREVIATIONS.contains(&lower.as_str()) {
        return true;
    }
    let is_initials = word
        .split('.')
        .all(|part| part.chars().count() == 1 && part.chars().all(char::is_alphabetic))
        && word.chars().next().is_some_and(char::is_uppercase);
    if !is_initials {
        return false;
    }
    if word.contains('.') {
        return true;
    }
    // A lone capital is an initial when another initial follows ("J. R.
    // Smith") or a capitalized name precedes it ("John F. Kennedy");
    // otherwise it may be a one-letter sentence.
    let lone_initial = |w: &str| {
        let mut c = w.chars();
        matches!((c.next(), c.next(), c.next()), (Some(x), Some('.'), None) if x.is_uppercase())
    };
    let next = after.split_whitespace().next().unwrap_or("");
    let prev = before[..before.len() - word.len()]
        .split_whitespace()
        .next_back()
        .unwrap_or("");
    let prev_is_name = prev.chars().next().is_some_and(char::is_uppercase)
        && (!prev.ends_with(['.', '!', '?']) || lone_initial(prev));
    lone_initial(next) || prev_is_name
}
