//! Report emission: heatmap CSV/JSON/SVG, evaluation tables and per-pair
//! alignment diagrams. All outputs are byte-stable for fixed inputs.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentSet, Heatmap};
use crate::corpus::store::to_json_string;
use crate::corpus::{AnswerSet, Document, Qud, Segmentation};
use crate::eval::EvalReport;
use crate::pipeline::answering_segments;
use crate::scoring::SimilarityMatrix;
use crate::{Error, Result};

fn fmt_value(v: f64) -> String {
    format!("{v:.6}")
}

fn csv_string(rows: Vec<Vec<String>>) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    for row in rows {
        w.write_record(&row)
            .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::InvalidInput(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

/// Header row of group labels, then one row per source group. Missing cells
/// are empty fields.
pub fn heatmap_csv(h: &Heatmap) -> Result<String> {
    if h.groups.is_empty() {
        return Err(Error::EmptyInput("heatmap has no groups"));
    }
    let mut rows = Vec::with_capacity(h.groups.len() + 1);
    let mut header = vec!["source\\target".to_string()];
    header.extend(h.groups.iter().cloned());
    rows.push(header);
    for (g, cells) in h.groups.iter().zip(&h.cells) {
        let mut row = vec![g.clone()];
        row.extend(cells.iter().map(|c| c.map(fmt_value).unwrap_or_default()));
        rows.push(row);
    }
    csv_string(rows)
}

pub fn heatmap_json(h: &Heatmap) -> String {
    to_json_string(h)
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// White-to-blue fill for a value in [0, 1].
fn fill(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let lerp = |from: f64, to: f64| (from + (to - from) * v).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(255.0, 8.0),
        lerp(255.0, 48.0),
        lerp(255.0, 107.0)
    )
}

/// A plain color grid with numeric labels; missing cells are grey.
pub fn heatmap_svg(h: &Heatmap) -> Result<String> {
    if h.groups.is_empty() {
        return Err(Error::EmptyInput("heatmap has no groups"));
    }
    const CELL: usize = 80;
    const LABEL: usize = 160;
    let n = h.groups.len();
    let width = LABEL + n * CELL + 10;
    let height = LABEL + n * CELL + 10;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    )
    .expect("write to string");
    writeln!(
        s,
        r#"<text x="4" y="16">{} (tau = {:.2})</text>"#,
        escape_xml(&h.metric_id),
        h.tau
    )
    .expect("write to string");
    for (k, g) in h.groups.iter().enumerate() {
        let c = LABEL + k * CELL + CELL / 2;
        writeln!(
            s,
            r#"<text x="{c}" y="{}" text-anchor="end" transform="rotate(-45 {c} {})">{}</text>"#,
            LABEL - 6,
            LABEL - 6,
            escape_xml(g)
        )
        .expect("write to string");
        writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LABEL - 6,
            LABEL + k * CELL + CELL / 2 + 4,
            escape_xml(g)
        )
        .expect("write to string");
    }
    for (r, row) in h.cells.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            let (x, y) = (LABEL + c * CELL, LABEL + r * CELL);
            let (color, label, ink) = match cell {
                Some(v) => (
                    fill(*v),
                    format!("{v:.2}"),
                    if *v > 0.5 { "#ffffff" } else { "#000000" },
                ),
                None => ("#d9d9d9".to_string(), "n/a".to_string(), "#555555"),
            };
            writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{color}" stroke="#ffffff"/>"##
            )
            .expect("write to string");
            writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{label}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 4
            )
            .expect("write to string");
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn eval_csv(reports: &[EvalReport]) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("no evaluation reports"));
    }
    let mut rows = vec![[
        "metric",
        "domain",
        "precision",
        "recall",
        "f1",
        "tp",
        "fp",
        "fn",
        "pairs",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect::<Vec<_>>()];
    for r in reports {
        rows.push(vec![
            r.metric_id.clone(),
            r.domain
                .map(|d| d.as_str().to_string())
                .unwrap_or_else(|| "all".into()),
            fmt_value(r.precision),
            fmt_value(r.recall),
            fmt_value(r.f1),
            r.tp.to_string(),
            r.fp.to_string(),
            r.fn_.to_string(),
            r.pairs.to_string(),
        ]);
    }
    csv_string(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QudView {
    pub id: String,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentView {
    pub index: usize,
    pub text: String,
    pub quds: Vec<QudView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    /// `forward` for source QUDs answered in the target, `backward` for the
    /// reverse.
    pub direction: String,
    pub qud_id: String,
    pub question: String,
    /// Answer sentences inside the linked segment, `(index, text)`.
    pub sentences: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub source_segment: usize,
    pub target_segment: usize,
    pub score: f64,
    pub evidence: Vec<Evidence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDiagram {
    pub source_document_id: String,
    pub target_document_id: String,
    pub metric_id: String,
    pub tau: f64,
    pub source_segments: Vec<SegmentView>,
    pub target_segments: Vec<SegmentView>,
    pub links: Vec<Link>,
}

/// Inputs for [`pair_diagram`]. QUDs and answers may be empty for metrics
/// other than QUDsim.
#[derive(Debug, Clone, Copy)]
pub struct DiagramInputs<'a> {
    pub source: &'a Document,
    pub target: &'a Document,
    pub source_seg: &'a Segmentation,
    pub target_seg: &'a Segmentation,
    pub source_quds: &'a [Qud],
    pub target_quds: &'a [Qud],
    pub forward_answers: &'a [AnswerSet],
    pub backward_answers: &'a [AnswerSet],
    pub matrix: &'a SimilarityMatrix,
    pub alignment: &'a AlignmentSet,
}

fn segment_views(doc: &Document, seg: &Segmentation, quds: &[Qud]) -> Vec<SegmentView> {
    seg.segments
        .iter()
        .map(|s| SegmentView {
            index: s.segment_index,
            text: doc.span_text(&s.sentence_indices),
            quds: quds
                .iter()
                .filter(|q| q.source_segment_index == s.segment_index)
                .map(|q| QudView {
                    id: q.id.clone(),
                    question: q.question.clone(),
                })
                .collect(),
        })
        .collect()
}

fn evidence(
    direction: &str,
    quds: &[Qud],
    answers: &[AnswerSet],
    from_segment: usize,
    target: &Document,
    target_seg: &Segmentation,
    to_segment: usize,
) -> Vec<Evidence> {
    let mut out = Vec::new();
    for q in quds.iter().filter(|q| q.source_segment_index == from_segment) {
        let Some(a) = answers.iter().find(|a| a.qud_id == q.id) else {
            continue;
        };
        if !answering_segments(a, target_seg)
            .segment_indices
            .contains(&to_segment)
        {
            continue;
        }
        let members = &target_seg.segments[to_segment - 1].sentence_indices;
        let sentences = a
            .sentence_indices
            .iter()
            .filter(|i| members.contains(i))
            .filter_map(|&i| target.sentence(i).map(|s| (i, s.text.clone())))
            .collect();
        out.push(Evidence {
            direction: direction.to_string(),
            qud_id: q.id.clone(),
            question: q.question.clone(),
            sentences,
        });
    }
    out
}

/// Aligned segment pairs with the QUDs and answer sentences behind them.
pub fn pair_diagram(x: &DiagramInputs<'_>) -> PairDiagram {
    let links = x
        .alignment
        .aligned
        .iter()
        .map(|&(i, j)| {
            let mut ev = evidence(
                "forward",
                x.source_quds,
                x.forward_answers,
                i,
                x.target,
                x.target_seg,
                j,
            );
            ev.extend(evidence(
                "backward",
                x.target_quds,
                x.backward_answers,
                j,
                x.source,
                x.source_seg,
                i,
            ));
            Link {
                source_segment: i,
                target_segment: j,
                score: x.matrix.get(i, j).unwrap_or(0.0),
                evidence: ev,
            }
        })
        .collect();
    PairDiagram {
        source_document_id: x.source.id.clone(),
        target_document_id: x.target.id.clone(),
        metric_id: x.alignment.metric_id.clone(),
        tau: x.alignment.tau,
        source_segments: segment_views(x.source, x.source_seg, x.source_quds),
        target_segments: segment_views(x.target, x.target_seg, x.target_quds),
        links,
    }
}
