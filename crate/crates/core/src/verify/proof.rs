//! Per-invariant proof documents.
//!
//! ```text
//! [INVARIANT syntax]
//! The program is a single function with balanced blocks.
//! HOLDS
//! ```
//!
//! The last non-empty line of a section is the claim. Anything other than
//! `HOLDS` counts as `UNKNOWN`.

use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::InvariantId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimVerdict {
    Holds,
    Unknown,
}

impl ClaimVerdict {
    pub fn keyword(self) -> &'static str {
        match self {
            ClaimVerdict::Holds => "HOLDS",
            ClaimVerdict::Unknown => "UNKNOWN",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofClaim {
    pub invariant: InvariantId,
    pub argument: String,
    pub verdict: ClaimVerdict,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofDocument {
    /// One claim per requested invariant, in request order.
    pub claims: Vec<ProofClaim>,
    #[serde(default)]
    pub raw_text: String,
}

impl ProofDocument {
    /// A proof that claims nothing.
    pub fn empty(invariants: &[InvariantId]) -> Self {
        parse_proof("", invariants)
    }

    pub fn claim(&self, id: InvariantId) -> Option<&ProofClaim> {
        self.claims.iter().find(|c| c.invariant == id)
    }

    pub fn holds(&self, id: InvariantId) -> bool {
        self.claim(id).is_some_and(|c| c.verdict == ClaimVerdict::Holds)
    }
}

fn header_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^[\s#>*_]*\[\s*INVARIANT\s*[:=]?\s*([a-z_\-]+)\s*\][*_]*\s*(.*)$").expect("valid regex"))
}

fn is_header(line: &str) -> bool {
    header_re().is_match(line)
}

fn verdict_word(line: &str) -> Option<ClaimVerdict> {
    let word = line
        .trim()
        .trim_matches(|c: char| c == '*' || c == '_' || c == '`' || c == '.' || c == ':')
        .trim();
    let word = word
        .strip_prefix("verdict")
        .or_else(|| word.strip_prefix("Verdict"))
        .or_else(|| word.strip_prefix("VERDICT"))
        .map(|w| w.trim_start_matches([':', ' ', '*']).trim())
        .unwrap_or(word);
    if word.eq_ignore_ascii_case("holds") {
        Some(ClaimVerdict::Holds)
    } else if word.eq_ignore_ascii_case("unknown") {
        Some(ClaimVerdict::Unknown)
    } else {
        None
    }
}

/// Parses a proof for the given invariants. Total: never fails. Sections for
/// other ids are ignored; for a repeated id the first section wins.
pub fn parse_proof(text: &str, invariants: &[InvariantId]) -> ProofDocument {
    let mut sections: Vec<(InvariantId, Vec<&str>)> = Vec::new();
    let mut current: Option<usize> = None;
    for line in text.lines() {
        if let Some(caps) = header_re().captures(line) {
            let id = InvariantId::parse(caps.get(1).expect("group").as_str());
            current = match id {
                Some(id) if !sections.iter().any(|(s, _)| *s == id) => {
                    sections.push((id, Vec::new()));
                    let idx = sections.len() - 1;
                    let trailing = caps.get(2).expect("group").as_str();
                    if !trailing.trim().is_empty() {
                        sections[idx].1.push(trailing);
                    }
                    Some(idx)
                }
                _ => None,
            };
            continue;
        }
        if let Some(idx) = current {
            sections[idx].1.push(line);
        }
    }

    let claims = invariants
        .iter()
        .map(|&id| match sections.iter().find(|(s, _)| *s == id) {
            None => ProofClaim {
                invariant: id,
                argument: String::new(),
                verdict: ClaimVerdict::Unknown,
            },
            Some((_, lines)) => section_claim(id, lines),
        })
        .collect();
    ProofDocument {
        claims,
        raw_text: text.to_string(),
    }
}

fn section_claim(id: InvariantId, lines: &[&str]) -> ProofClaim {
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let (argument_lines, verdict) = match last {
        None => (&lines[..0], ClaimVerdict::Unknown),
        Some(i) => match verdict_word(lines[i]) {
            Some(v) => (&lines[..i], v),
            None => (lines, ClaimVerdict::Unknown),
        },
    };
    let argument = argument_lines.join("\n").trim().to_string();
    let verdict = if argument.is_empty() { ClaimVerdict::Unknown } else { verdict };
    ProofClaim {
        invariant: id,
        argument,
        verdict,
    }
}

/// Writes a proof in the grammar read by [`parse_proof`].
pub fn render_proof(claims: &[ProofClaim]) -> String {
    let mut out = String::new();
    for c in claims {
        let _ = writeln!(out, "[INVARIANT {}]", c.invariant.as_str());
        if !c.argument.trim().is_empty() {
            let _ = writeln!(out, "{}", c.argument.trim());
        }
        let _ = writeln!(out, "{}\n", c.verdict.keyword());
    }
    out
}

/// Whether an argument survives a render/parse round trip unchanged.
pub fn argument_is_well_formed(argument: &str) -> bool {
    argument == argument.trim() && !argument.lines().any(is_header)
}
