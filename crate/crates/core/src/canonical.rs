//! Canonical literal form for function-call arguments and return values.
//!
//! Values are written without whitespace: `None`, `True`, `False`, decimal
//! integers, floats in the guest's shortest-repr style, double-quoted strings,
//! `[...]` for lists and tuples, `{k:v,...}` with keys sorted by their
//! canonical text, and `{a,b}` / `set()` for sets. The sandbox driver emits the
//! same form for return values, so value equality is text equality.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    None,
    Bool(bool),
    /// Decimal digits with an optional leading `-`, no leading zeros.
    Int(String),
    Float(f64),
    Str(String),
    List(Vec<Value>),
    Dict(Vec<(Value, Value)>),
    Set(Vec<Value>),
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("literal parse error at byte {offset}: {message}")]
pub struct LiteralError {
    pub offset: usize,
    pub message: String,
}

impl Value {
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_into(&mut out);
        out
    }

    fn render_into(&self, out: &mut String) {
        match self {
            Value::None => out.push_str("None"),
            Value::Bool(true) => out.push_str("True"),
            Value::Bool(false) => out.push_str("False"),
            Value::Int(digits) => out.push_str(digits),
            Value::Float(x) => out.push_str(&format_float(*x)),
            Value::Str(s) => render_str(s, out),
            Value::List(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    item.render_into(out);
                }
                out.push(']');
            }
            Value::Dict(entries) => {
                let mut rendered: Vec<(String, String)> =
                    entries.iter().map(|(k, v)| (k.render(), v.render())).collect();
                rendered.sort();
                out.push('{');
                for (i, (k, v)) in rendered.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(k);
                    out.push(':');
                    out.push_str(v);
                }
                out.push('}');
            }
            Value::Set(items) if items.is_empty() => out.push_str("set()"),
            Value::Set(items) => {
                let mut rendered: Vec<String> = items.iter().map(Value::render).collect();
                rendered.sort();
                rendered.dedup();
                out.push('{');
                out.push_str(&rendered.join(","));
                out.push('}');
            }
        }
    }
}

fn render_str(s: &str, out: &mut String) {
    out.push('"');
    for ch in s.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Formats a float the way the guest's `repr` does: shortest round-trip
/// digits, positional for decimal exponents in `[-4, 16)`, otherwise
/// scientific with a signed two-digit-minimum exponent.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:e}");
    let (mantissa, exp) = sci.split_once('e').expect("`{:e}` always has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    if (-4..16).contains(&exp) {
        if exp >= 0 {
            let int_len = exp as usize + 1;
            if digits.len() <= int_len {
                out.push_str(&digits);
                out.extend(std::iter::repeat('0').take(int_len - digits.len()));
                out.push_str(".0");
            } else {
                out.push_str(&digits[..int_len]);
                out.push('.');
                out.push_str(&digits[int_len..]);
            }
        } else {
            out.push_str("0.");
            out.extend(std::iter::repeat('0').take((-exp - 1) as usize));
            out.push_str(&digits);
        }
    } else {
        out.push_str(&digits[..1]);
        if digits.len() > 1 {
            out.push('.');
            out.push_str(&digits[1..]);
        }
        let _ = write!(out, "e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
    }
    out
}

/// Parses one guest literal (the whole text must be consumed).
pub fn parse(text: &str) -> Result<Value, LiteralError> {
    let mut p = Parser::new(text);
    p.skip_ws();
    let v = p.value()?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error("trailing characters after literal"));
    }
    Ok(v)
}

/// Parses a comma-separated argument list (the text between call parentheses).
pub fn parse_args(text: &str) -> Result<Vec<Value>, LiteralError> {
    let mut p = Parser::new(text);
    let items = p.sequence_body(None)?;
    p.skip_ws();
    if !p.at_end() {
        return Err(p.error("trailing characters after arguments"));
    }
    Ok(items)
}

/// Rewrites a literal into canonical form.
pub fn canonicalize(text: &str) -> Result<String, LiteralError> {
    parse(text).map(|v| v.render())
}

/// Rewrites an argument list literal (`[a, b]` or `(a, b)`) into canonical form.
pub fn canonicalize_args(text: &str) -> Result<String, LiteralError> {
    match parse(text)? {
        v @ Value::List(_) => Ok(v.render()),
        _ => Err(LiteralError {
            offset: 0,
            message: "argument list must be a list or tuple literal".into(),
        }),
    }
}

/// Value equality between two canonical (or canonicalizable) literals.
pub fn values_equal(actual: &str, expected: &str) -> bool {
    if actual == expected {
        return true;
    }
    match (canonicalize(actual), canonicalize(expected)) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

/// Trailing whitespace is stripped from every line and trailing blank lines dropped.
pub fn normalize_stdout(text: &str) -> String {
    let mut lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines.join("\n")
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn error(&self, message: impl Into<String>) -> LiteralError {
        LiteralError {
            offset: self.pos,
            message: message.into(),
        }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<char> {
        self.rest().chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += c.len_utf8();
        Some(c)
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else {
                break;
            }
        }
    }

    fn eat(&mut self, token: &str) -> bool {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn eat_word(&mut self, word: &str) -> bool {
        let rest = self.rest();
        if rest.starts_with(word)
            && !rest[word.len()..]
                .chars()
                .next()
                .is_some_and(|c| c.is_alphanumeric() || c == '_')
        {
            self.pos += word.len();
            true
        } else {
            false
        }
    }

    fn value(&mut self) -> Result<Value, LiteralError> {
        self.skip_ws();
        let c = self.peek().ok_or_else(|| self.error("unexpected end of input"))?;
        match c {
            '[' => {
                self.bump();
                Ok(Value::List(self.sequence_body(Some(']'))?))
            }
            '(' => {
                self.bump();
                let start = self.pos;
                let items = self.sequence_body(Some(')'))?;
                // `(x)` is a parenthesized value, `(x,)` a one-element tuple.
                let inner = self.src[start..self.pos - 1].trim_end();
                if items.len() == 1 && !inner.ends_with(',') {
                    Ok(items.into_iter().next().expect("one item"))
                } else {
                    Ok(Value::List(items))
                }
            }
            '{' => {
                self.bump();
                self.brace_body()
            }
            '"' | '\'' => Ok(Value::Str(self.string()?)),
            '-' | '+' | '.' | '0'..='9' => self.number(),
            _ => {
                if self.eat_word("None") {
                    Ok(Value::None)
                } else if self.eat_word("True") {
                    Ok(Value::Bool(true))
                } else if self.eat_word("False") {
                    Ok(Value::Bool(false))
                } else if self.eat_word("inf") {
                    Ok(Value::Float(f64::INFINITY))
                } else if self.eat_word("nan") {
                    Ok(Value::Float(f64::NAN))
                } else if self.eat("set()") {
                    Ok(Value::Set(Vec::new()))
                } else if self.eat("float(") {
                    self.skip_ws();
                    let s = self.string()?;
                    self.skip_ws();
                    if !self.eat(")") {
                        return Err(self.error("expected `)` after float argument"));
                    }
                    let x = match s.trim().to_ascii_lowercase().as_str() {
                        "inf" | "+inf" | "infinity" => f64::INFINITY,
                        "-inf" | "-infinity" => f64::NEG_INFINITY,
                        "nan" => f64::NAN,
                        other => other.parse().map_err(|_| self.error("bad float() argument"))?,
                    };
                    Ok(Value::Float(x))
                } else if matches!(c, 'r' | 'R' | 'u' | 'U')
                    && matches!(self.rest()[1..].chars().next(), Some('"' | '\''))
                {
                    let raw = matches!(c, 'r' | 'R');
                    self.bump();
                    Ok(Value::Str(if raw { self.raw_string()? } else { self.string()? }))
                } else {
                    Err(self.error(format!("unexpected character `{c}`")))
                }
            }
        }
    }

    /// Comma-separated values up to `close` (consumed), or to end of input.
    fn sequence_body(&mut self, close: Option<char>) -> Result<Vec<Value>, LiteralError> {
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match (self.peek(), close) {
                (Some(c), Some(want)) if c == want => {
                    self.bump();
                    return Ok(items);
                }
                (None, None) => return Ok(items),
                (None, Some(want)) => return Err(self.error(format!("missing `{want}`"))),
                _ => {}
            }
            items.push(self.value()?);
            self.skip_ws();
            match self.peek() {
                Some(',') => {
                    self.bump();
                }
                Some(c) if Some(c) == close => {}
                None if close.is_none() => {}
                Some(c) => return Err(self.error(format!("expected `,` but found `{c}`"))),
                None => return Err(self.error("unexpected end of input")),
            }
        }
    }

    fn brace_body(&mut self) -> Result<Value, LiteralError> {
        self.skip_ws();
        if self.eat("}") {
            return Ok(Value::Dict(Vec::new()));
        }
        let first = self.value()?;
        self.skip_ws();
        if self.eat(":") {
            let mut entries = vec![(first, self.value()?)];
            loop {
                self.skip_ws();
                if self.eat("}") {
                    return Ok(Value::Dict(entries));
                }
                if !self.eat(",") {
                    return Err(self.error("expected `,` or `}` in dict"));
                }
                self.skip_ws();
                if self.eat("}") {
                    return Ok(Value::Dict(entries));
                }
                let k = self.value()?;
                self.skip_ws();
                if !self.eat(":") {
                    return Err(self.error("expected `:` in dict"));
                }
                let v = self.value()?;
                entries.push((k, v));
            }
        }
        let mut items = vec![first];
        self.skip_ws();
        if self.eat("}") {
            return Ok(Value::Set(items));
        }
        if !self.eat(",") {
            return Err(self.error("expected `,` or `}` in set"));
        }
        items.extend(self.sequence_body(Some('}'))?);
        Ok(Value::Set(items))
    }

    fn number(&mut self) -> Result<Value, LiteralError> {
        let start = self.pos;
        let mut negative = false;
        if let Some(sign @ ('-' | '+')) = self.peek() {
            negative = sign == '-';
            self.bump();
            self.skip_ws();
            if self.eat_word("inf") {
                return Ok(Value::Float(if negative { f64::NEG_INFINITY } else { f64::INFINITY }));
            }
        }
        let body_start = self.pos;
        if self.rest().starts_with("0x") || self.rest().starts_with("0X") {
            self.pos += 2;
            let hex_start = self.pos;
            while self.peek().is_some_and(|c| c.is_ascii_hexdigit() || c == '_') {
                self.bump();
            }
            let hex: String = self.src[hex_start..self.pos].chars().filter(|&c| c != '_').collect();
            let n = i128::from_str_radix(&hex, 16).map_err(|_| self.error("bad hex literal"))?;
            return Ok(Value::Int(normalize_int(&n.to_string(), negative)));
        }
        let mut is_float = false;
        while let Some(c) = self.peek() {
            match c {
                '0'..='9' | '_' => {}
                '.' => is_float = true,
                'e' | 'E' => {
                    is_float = true;
                    self.bump();
                    if let Some('-' | '+') = self.peek() {
                        self.bump();
                    }
                    continue;
                }
                _ => break,
            }
            self.bump();
        }
        let body: String = self.src[body_start..self.pos].chars().filter(|&c| c != '_').collect();
        if body.is_empty() || body == "." {
            self.pos = start;
            return Err(self.error("malformed number"));
        }
        if is_float {
            let x: f64 = body.parse().map_err(|_| self.error("malformed float"))?;
            Ok(Value::Float(if negative { -x } else { x }))
        } else {
            Ok(Value::Int(normalize_int(&body, negative)))
        }
    }

    fn raw_string(&mut self) -> Result<String, LiteralError> {
        let quote = self.bump().ok_or_else(|| self.error("expected quote"))?;
        let mut out = String::new();
        loop {
            match self.bump() {
                None => return Err(self.error("unterminated string")),
                Some(c) if c == quote => return Ok(out),
                Some('\\') => {
                    out.push('\\');
                    if let Some(c) = self.bump() {
                        out.push(c);
                    }
                }
                Some(c) => out.push(c),
            }
        }
    }

    fn string(&mut self) -> Result<String, LiteralError> {
        let quote = match self.peek() {
            Some(q @ ('"' | '\'')) => q,
            _ => return Err(self.error("expected string")),
        };
        let triple: String = std::iter::repeat(quote).take(3).collect();
        let closing = if self.eat(&triple) {
            triple
        } else {
            self.bump();
            quote.to_string()
        };
        let mut out = String::new();
        loop {
            if self.eat(&closing) {
                return Ok(out);
            }
            let c = self.bump().ok_or_else(|| self.error("unterminated string"))?;
            if c != '\\' {
                out.push(c);
                continue;
            }
            let esc = self.bump().ok_or_else(|| self.error("dangling escape"))?;
            match esc {
                'n' => out.push('\n'),
                't' => out.push('\t'),
                'r' => out.push('\r'),
                'a' => out.push('\x07'),
                'b' => out.push('\x08'),
                'f' => out.push('\x0c'),
                'v' => out.push('\x0b'),
                '\\' => out.push('\\'),
                '\'' => out.push('\''),
                '"' => out.push('"'),
                '\n' => {}
                'x' => out.push(self.hex_escape(2)?),
                'u' => out.push(self.hex_escape(4)?),
                'U' => out.push(self.hex_escape(8)?),
                '0'..='7' => {
                    let mut n = esc.to_digit(8).expect("octal digit");
                    for _ in 0..2 {
                        match self.peek().and_then(|c| c.to_digit(8)) {
                            Some(d) => {
                                n = n * 8 + d;
                                self.bump();
                            }
                            None => break,
                        }
                    }
                    out.push(char::from_u32(n).ok_or_else(|| self.error("bad octal escape"))?);
                }
                other => {
                    out.push('\\');
                    out.push(other);
                }
            }
        }
    }

    fn hex_escape(&mut self, len: usize) -> Result<char, LiteralError> {
        let rest = self.rest();
        let hex = rest.get(..len).ok_or_else(|| self.error("short hex escape"))?;
        let n = u32::from_str_radix(hex, 16).map_err(|_| self.error("bad hex escape"))?;
        self.pos += len;
        char::from_u32(n).ok_or_else(|| self.error("escape is not a scalar value"))
    }
}

fn normalize_int(digits: &str, negative: bool) -> String {
    let trimmed = digits.trim_start_matches('0');
    if trimmed.is_empty() {
        "0".into()
    } else if negative {
        format!("-{trimmed}")
    } else {
        trimmed.into()
    }
}
