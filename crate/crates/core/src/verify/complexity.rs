//! Big-O expressions and their growth order.

use std::cmp::Ordering;
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;

/// A growth class, compared by dominance: factorial, then exponential, then
/// polynomial degree, then the power of the logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Complexity {
    pub factorial: bool,
    pub exponential: bool,
    /// Polynomial degree in halves, so `sqrt(n)` is 1 and `n^2` is 4.
    pub degree_halves: u32,
    pub log_power: u32,
}

impl Complexity {
    pub const CONSTANT: Complexity = Complexity::poly(0, 0);
    pub const LINEAR: Complexity = Complexity::poly(2, 0);

    pub const fn poly(degree_halves: u32, log_power: u32) -> Self {
        Self {
            factorial: false,
            exponential: false,
            degree_halves,
            log_power,
        }
    }

    fn key(&self) -> (bool, bool, u32, u32) {
        (self.factorial, self.exponential, self.degree_halves, self.log_power)
    }

    fn times(self, other: Complexity) -> Complexity {
        Complexity {
            factorial: self.factorial || other.factorial,
            exponential: self.exponential || other.exponential,
            degree_halves: self.degree_halves + other.degree_halves,
            log_power: self.log_power + other.log_power,
        }
    }
}

impl Ord for Complexity {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

impl PartialOrd for Complexity {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Complexity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factorial {
            return write!(f, "O(n!)");
        }
        if self.exponential {
            return write!(f, "O(2^n)");
        }
        let mut parts = Vec::new();
        match self.degree_halves {
            0 => {}
            1 => parts.push("sqrt(n)".to_string()),
            2 => parts.push("n".to_string()),
            d if d % 2 == 0 => parts.push(format!("n^{}", d / 2)),
            d => parts.push(format!("n^{}", d as f64 / 2.0)),
        }
        match self.log_power {
            0 => {}
            1 => parts.push("log n".to_string()),
            p => parts.push(format!("log^{p} n")),
        }
        if parts.is_empty() {
            write!(f, "O(1)")
        } else {
            write!(f, "O({})", parts.join(" "))
        }
    }
}

fn factor_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(concat!(
            r"^(?:",
            r"(?P<fact>[nmk]!)",
            r"|(?P<exp>\d+(?:\.\d+)?\^\(?[a-z]\)?)",
            r"|(?P<sqrt>sqrt\(?[a-z]\)?)",
            r"|log(?:_?\d+)?(?:\^(?P<lp1>\d+))?\(?[a-z]\)?(?:\^(?P<lp2>\d+))?",
            r"|(?P<var>[nmkvewd])(?:\^\(?(?P<deg>\d+(?:\.\d+)?|\d+/\d+)\)?)?",
            r"|(?P<num>\d+(?:\.\d+)?)",
            r")"
        ))
        .expect("valid regex")
    })
}

fn normalize(expr: &str) -> String {
    expr.to_lowercase()
        .replace("**", "^")
        .replace('²', "^2")
        .replace('³', "^3")
        .replace('√', "sqrt")
        .replace(['·', '×', '⋅'], "*")
        .replace("lg", "log")
        .replace("ln", "log")
        .chars()
        .filter(|c| !c.is_whitespace())
        .collect()
}

fn parse_degree(text: &str) -> Option<u32> {
    let value = match text.split_once('/') {
        Some((a, b)) => a.parse::<f64>().ok()? / b.parse::<f64>().ok()?,
        None => text.parse::<f64>().ok()?,
    };
    if !(0.0..=64.0).contains(&value) {
        return None;
    }
    Some((value * 2.0).ceil() as u32)
}

fn parse_term(term: &str) -> Option<Complexity> {
    let mut acc = Complexity::CONSTANT;
    let mut rest = term;
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix('*') {
            rest = r;
            continue;
        }
        if let Some(inner) = rest.strip_prefix('(') {
            let close = matching_paren(inner)?;
            acc = acc.times(parse_sum(&inner[..close])?);
            rest = &inner[close + 1..];
            if let Some(r) = rest.strip_prefix('^') {
                let digits: String = r.chars().take_while(|c| c.is_ascii_digit()).collect();
                let k: u32 = digits.parse().ok()?;
                let base = acc;
                for _ in 1..k {
                    acc = acc.times(base);
                }
                rest = &r[digits.len()..];
            }
            continue;
        }
        let caps = factor_re().captures(rest)?;
        let whole = caps.get(0).expect("match");
        let factor = if caps.name("fact").is_some() {
            Complexity {
                factorial: true,
                ..Complexity::CONSTANT
            }
        } else if caps.name("exp").is_some() {
            let base: f64 = whole.as_str().split('^').next()?.parse().ok()?;
            Complexity {
                exponential: base > 1.0,
                ..Complexity::CONSTANT
            }
        } else if caps.name("sqrt").is_some() {
            Complexity::poly(1, 0)
        } else if caps.name("var").is_some() {
            let deg = caps.name("deg").map_or(Some(2), |d| parse_degree(d.as_str()))?;
            Complexity::poly(deg, 0)
        } else if caps.name("num").is_some() {
            Complexity::CONSTANT
        } else {
            let p = caps.name("lp1").or(caps.name("lp2")).map_or(Some(1), |m| m.as_str().parse().ok())?;
            Complexity::poly(0, p)
        };
        acc = acc.times(factor);
        rest = &rest[whole.end()..];
    }
    Some(acc)
}

fn matching_paren(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    for (i, c) in s.char_indices() {
        match c {
            '(' => depth += 1,
            ')' if depth == 0 => return Some(i),
            ')' => depth -= 1,
            _ => {}
        }
    }
    None
}

fn parse_sum(expr: &str) -> Option<Complexity> {
    let mut depth = 0usize;
    let mut start = 0;
    let mut best: Option<Complexity> = None;
    let push = |term: &str, best: &mut Option<Complexity>| -> Option<()> {
        let c = parse_term(term)?;
        *best = Some(best.map_or(c, |b| b.max(c)));
        Some(())
    };
    for (i, ch) in expr.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth = depth.checked_sub(1)?,
            '+' if depth == 0 => {
                push(&expr[start..i], &mut best)?;
                start = i + 1;
            }
            _ => {}
        }
    }
    push(&expr[start..], &mut best)?;
    best
}

/// Parses `O(...)`, `Θ(...)` or a bare expression such as `n log n`.
pub fn parse_complexity(text: &str) -> Option<Complexity> {
    let t = normalize(text.trim().trim_matches(['`', '*', '_', ' ']).trim_end_matches(['.', ',', ';']));
    let inner = ["o(", "θ(", "theta(", "big-o("]
        .iter()
        .find_map(|p| t.strip_prefix(p))
        .map(|rest| {
            let close = matching_paren(rest)?;
            rest[close + 1..].is_empty().then(|| &rest[..close])
        })
        .unwrap_or(Some(t.as_str()))?;
    if inner.is_empty() {
        return None;
    }
    parse_sum(inner)
}

fn judgment_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[\s*_`>#-]*complexity[*_`]*\s*[:=]\s*[*_`]*(.+?)[*_`]*\s*$").expect("valid regex"))
}

/// Extracts the last `COMPLEXITY: O(...)` line of a judge response.
pub fn parse_judgment(response: &str) -> Option<Complexity> {
    judgment_re()
        .captures_iter(response)
        .last()
        .and_then(|c| parse_complexity(c.get(1).expect("group").as_str()))
}
