//! Reviewer feedback grammar and the pseudo-gradient derived from it.
//!
//! A review is plain text containing one tagged section per axis followed by
//! a numbered edit list:
//!
//! ```text
//! [CORRECTNESS] verdict: fail
//! Returns 0 when every element is negative.
//! [IO_FORMAT] verdict: pass
//! [EFFICIENCY] verdict: fail
//! Three nested loops make this cubic.
//! [COMPLETENESS] verdict: fail
//! The all-negative case is not handled.
//! EDITS:
//! 1. location: function solve / action: replace O(n^3) loop with linear scan / axis: efficiency
//! 2. location: lines 4-6 / action: initialise the running best with the first element
//! ```
//!
//! Parsing never fails. A missing or malformed section yields an `unknown`
//! verdict, and an edit item that does not match the item grammar is skipped.

use std::fmt::{self, Write as _};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::task::CandidateProgram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Correctness,
    IoFormat,
    Efficiency,
    Completeness,
}

impl Axis {
    pub const ALL: [Axis; 4] = [Axis::Correctness, Axis::IoFormat, Axis::Efficiency, Axis::Completeness];

    /// Section tag used in review text.
    pub fn tag(self) -> &'static str {
        match self {
            Axis::Correctness => "CORRECTNESS",
            Axis::IoFormat => "IO_FORMAT",
            Axis::Efficiency => "EFFICIENCY",
            Axis::Completeness => "COMPLETENESS",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Axis> {
        let t = tag.trim().to_ascii_uppercase().replace(['-', ' '], "_");
        match t.as_str() {
            "CORRECTNESS" => Some(Axis::Correctness),
            "IO_FORMAT" | "IO" => Some(Axis::IoFormat),
            "EFFICIENCY" => Some(Axis::Efficiency),
            "COMPLETENESS" => Some(Axis::Completeness),
            _ => None,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::Correctness => "correctness",
            Axis::IoFormat => "io_format",
            Axis::Efficiency => "efficiency",
            Axis::Completeness => "completeness",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisVerdict {
    Pass,
    Fail,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisFeedback {
    pub axis: Axis,
    pub verdict: AxisVerdict,
    pub commentary: String,
}

impl AxisFeedback {
    fn missing(axis: Axis) -> Self {
        Self {
            axis,
            verdict: AxisVerdict::Unknown,
            commentary: String::new(),
        }
    }
}

/// One review: exactly one entry per axis, in [`Axis::ALL`] order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub axes: Vec<AxisFeedback>,
    pub raw_text: String,
}

impl FeedbackReport {
    pub fn axis(&self, axis: Axis) -> &AxisFeedback {
        &self.axes[axis.index()]
    }

    /// Axes whose verdict is not `pass`.
    pub fn open_axes(&self) -> impl Iterator<Item = &AxisFeedback> {
        self.axes.iter().filter(|a| a.verdict != AxisVerdict::Pass)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocationKind {
    Function,
    LineRange,
    Global,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditDirective {
    pub ordinal: u32,
    pub location_kind: LocationKind,
    /// Function name, `start-end` line pair, or empty for global edits.
    pub location_value: String,
    pub action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_axis: Option<Axis>,
}

impl EditDirective {
    pub fn location_text(&self) -> String {
        match self.location_kind {
            LocationKind::Function => format!("function {}", self.location_value),
            LocationKind::LineRange => format!("lines {}", self.location_value),
            LocationKind::Global => "global".into(),
        }
    }

    /// The single edit-list line for this directive.
    pub fn render(&self) -> String {
        let mut line = format!("{}. location: {} / action: {}", self.ordinal, self.location_text(), self.action);
        if let Some(axis) = self.source_axis {
            let _ = write!(line, " / axis: {axis}");
        }
        line
    }
}

/// Ordered list of required edits.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoGradient {
    pub edits: Vec<EditDirective>,
    /// Set when no edit list could be parsed and a generic directive was substituted.
    pub degraded: bool,
}

pub const DEGRADED_ACTION: &str = "revise the program to satisfy the review above";

impl PseudoGradient {
    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    /// Appends a global directive, keeping ordinals consecutive.
    pub fn push_global(&mut self, action: impl Into<String>, axis: Option<Axis>) {
        let ordinal = self.edits.len() as u32 + 1;
        self.edits.push(EditDirective {
            ordinal,
            location_kind: LocationKind::Global,
            location_value: String::new(),
            action: action.into(),
            source_axis: axis,
        });
    }

    pub fn render(&self) -> String {
        self.edits.iter().map(EditDirective::render).collect::<Vec<_>>().join("\n")
    }
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)^[\s#>*_-]*\[\s*(CORRECTNESS|IO_FORMAT|IO|EFFICIENCY|COMPLETENESS)\s*\][*_]*\s*(.*)$")
            .expect("valid regex")
    })
}

fn verdict_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^verdict\s*[:=]\s*[*_]*(pass|fail)\b[*_]*[.:;,]?\s*(.*)$").expect("valid regex"))
}

fn edits_header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^[\s#>*_]*EDITS\s*:?[*_]*\s*$").expect("valid regex"))
}

fn item_start_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(\d+)[.)]\s+(.*)$").expect("valid regex"))
}

fn item_body_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?is)^location\s*:\s*(.*?)\s*[/;,|]?\s*action\s*:\s*(.+?)(?:\s*/\s*axis\s*:\s*([a-z_\-]+))?\s*$")
            .expect("valid regex")
    })
}

enum Line<'a> {
    Header(Axis, Option<(AxisVerdict, &'a str)>),
    EditsHeader,
    Text(&'a str),
}

fn classify(line: &str) -> Line<'_> {
    if let Some(caps) = header_re().captures(line) {
        let axis = Axis::from_tag(caps.get(1).expect("group").as_str()).expect("regex only matches known tags");
        let rest = caps.get(2).expect("group").as_str().trim();
        let verdict = verdict_re().captures(rest).map(|v| {
            let word = v.get(1).expect("group").as_str().to_ascii_lowercase();
            let verdict = if word == "pass" { AxisVerdict::Pass } else { AxisVerdict::Fail };
            (verdict, v.get(2).map_or("", |m| m.as_str()))
        });
        return Line::Header(axis, verdict);
    }
    if edits_header_re().is_match(line) {
        return Line::EditsHeader;
    }
    Line::Text(line)
}

/// Parses a review into its four axis verdicts. Total: never fails.
pub fn parse_feedback(raw: &str) -> FeedbackReport {
    let mut axes: Vec<AxisFeedback> = Axis::ALL.iter().map(|&a| AxisFeedback::missing(a)).collect();
    let mut seen = [false; 4];
    // (axis index, commentary lines) of the section being collected, if it is well-formed.
    let mut current: Option<(usize, Vec<&str>)> = None;

    let flush = |current: &mut Option<(usize, Vec<&str>)>, axes: &mut Vec<AxisFeedback>| {
        if let Some((idx, lines)) = current.take() {
            axes[idx].commentary = lines.join("\n").trim().to_string();
        }
    };

    for line in raw.lines() {
        match classify(line) {
            Line::Header(axis, verdict) => {
                flush(&mut current, &mut axes);
                let idx = axis.index();
                if seen[idx] {
                    continue;
                }
                seen[idx] = true;
                if let Some((verdict, trailing)) = verdict {
                    axes[idx].verdict = verdict;
                    let mut lines = Vec::new();
                    if !trailing.trim().is_empty() {
                        lines.push(trailing);
                    }
                    current = Some((idx, lines));
                }
            }
            Line::EditsHeader => flush(&mut current, &mut axes),
            Line::Text(text) => {
                if let Some((_, lines)) = current.as_mut() {
                    lines.push(text);
                }
            }
        }
    }
    flush(&mut current, &mut axes);
    FeedbackReport {
        axes,
        raw_text: raw.to_string(),
    }
}

/// True iff all four axes are explicitly `pass`.
pub fn all_pass(report: &FeedbackReport) -> bool {
    report.axes.iter().all(|a| a.verdict == AxisVerdict::Pass)
}

/// Raw (unvalidated) edit item as found in the EDITS list.
#[derive(Debug, Clone, PartialEq, Eq)]
struct RawEdit {
    location: String,
    action: String,
    axis: Option<Axis>,
}

/// Items of the first EDITS list in `raw`, paired with whether each was well-formed.
fn edit_items(raw: &str) -> Vec<Option<RawEdit>> {
    let mut items: Vec<String> = Vec::new();
    let mut in_edits = false;
    for line in raw.lines() {
        match classify(line) {
            Line::EditsHeader => {
                if in_edits {
                    break;
                }
                in_edits = true;
            }
            Line::Header(..) if in_edits => break,
            Line::Header(..) => {}
            Line::Text(text) if in_edits => {
                if let Some(caps) = item_start_re().captures(text) {
                    items.push(caps.get(2).expect("group").as_str().trim().to_string());
                } else if text.trim().is_empty() || text.trim_start().starts_with("```") {
                    continue;
                } else if let Some(last) = items.last_mut() {
                    last.push(' ');
                    last.push_str(text.trim());
                }
            }
            Line::Text(_) => {}
        }
    }
    items
        .iter()
        .map(|body| {
            let caps = item_body_re().captures(body)?;
            let location = caps.get(1).expect("group").as_str().trim().to_string();
            let action = caps.get(2).expect("group").as_str().trim().to_string();
            if action.is_empty() {
                return None;
            }
            let axis = caps.get(3).and_then(|m| Axis::from_tag(m.as_str()));
            Some(RawEdit { location, action, axis })
        })
        .collect()
}

fn function_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^(?:function|def|method)\s+`?([A-Za-z_][A-Za-z0-9_.]*)`?(?:\(\))?$").expect("valid regex"))
}

fn lines_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^lines?\s+(\d+)(?:\s*(?:-|–|to|\.\.)\s*(\d+))?$").expect("valid regex"))
}

fn resolve_location(location: &str, action: &str, line_count: usize) -> (LocationKind, String, String) {
    let loc = location.trim();
    let demote = |why: &str| (LocationKind::Global, String::new(), format!("{action} ({why}: {loc})"));
    if loc.is_empty() || matches!(loc.to_ascii_lowercase().as_str(), "global" | "program" | "whole program" | "file") {
        return (LocationKind::Global, String::new(), action.to_string());
    }
    if let Some(caps) = function_re().captures(loc) {
        return (LocationKind::Function, caps[1].to_string(), action.to_string());
    }
    if let Some(caps) = lines_re().captures(loc) {
        let start: usize = caps[1].parse().unwrap_or(0);
        let end: usize = caps.get(2).map_or(Some(start), |m| m.as_str().parse().ok()).unwrap_or(0);
        if start >= 1 && start <= end && end <= line_count {
            return (LocationKind::LineRange, format!("{start}-{end}"), action.to_string());
        }
        return demote("originally at out-of-range");
    }
    demote("at")
}

/// Converts the review's edit list into an ordered pseudo-gradient.
///
/// An all-pass review yields an empty gradient. Line anchors outside the
/// candidate are demoted to global edits with the original anchor kept in
/// the action text. When nothing parses but some axis is open, a single
/// degraded global directive is returned.
pub fn derive_gradient(report: &FeedbackReport, candidate: &CandidateProgram) -> PseudoGradient {
    if all_pass(report) {
        return PseudoGradient::default();
    }
    let line_count = candidate.line_count();
    let edits: Vec<EditDirective> = edit_items(&report.raw_text)
        .into_iter()
        .flatten()
        .enumerate()
        .map(|(i, raw)| {
            let (location_kind, location_value, action) = resolve_location(&raw.location, &raw.action, line_count);
            EditDirective {
                ordinal: i as u32 + 1,
                location_kind,
                location_value,
                action,
                source_axis: raw.axis,
            }
        })
        .collect();
    if !edits.is_empty() {
        return PseudoGradient { edits, degraded: false };
    }
    let mut gradient = PseudoGradient {
        edits: Vec::new(),
        degraded: true,
    };
    gradient.push_global(DEGRADED_ACTION, None);
    gradient
}

/// Number of well-formed items in the review's edit list.
pub fn count_well_formed_edits(raw: &str) -> usize {
    edit_items(raw).iter().filter(|i| i.is_some()).count()
}

/// Writes a review in the grammar understood by [`parse_feedback`].
/// Axes with an `unknown` verdict are omitted.
pub fn render_feedback(axes: &[AxisFeedback], edits: &[EditDirective]) -> String {
    let mut out = String::new();
    for a in axes {
        let verdict = match a.verdict {
            AxisVerdict::Pass => "pass",
            AxisVerdict::Fail => "fail",
            AxisVerdict::Unknown => continue,
        };
        let _ = writeln!(out, "[{}] verdict: {verdict}", a.axis.tag());
        if !a.commentary.trim().is_empty() {
            let _ = writeln!(out, "{}", a.commentary.trim());
        }
    }
    if !edits.is_empty() {
        out.push_str("EDITS:\n");
        for e in edits {
            let _ = writeln!(out, "{}", e.render());
        }
    }
    out
}
