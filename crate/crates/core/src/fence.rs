//! Pulling program text out of chat replies.

/// Returns the body of the last well-formed triple-backtick fence in
/// `output`, or the whole input trimmed when there is none.
///
/// A fence opens with ```` ``` ```` followed by an optional info string on the
/// same line and closes at the next ```` ``` ````. Single-line fences such as
/// ```` ```b``` ```` are bodies without an info string. Bodies are trimmed,
/// which keeps the extraction idempotent.
pub fn extract_code_fence(output: &str) -> String {
    let mut last: Option<&str> = None;
    let mut rest = output;
    while let Some(open) = rest.find("```") {
        let after_open = &rest[open + 3..];
        let Some(close) = after_open.find("```") else {
            break;
        };
        let inner = &after_open[..close];
        last = Some(fence_body(inner));
        rest = &after_open[close + 3..];
    }
    match last {
        Some(body) => body.to_string(),
        None => output.trim().to_string(),
    }
}

fn fence_body(inner: &str) -> &str {
    match inner.find('\n') {
        // Single-line fence: everything between the markers is the body.
        None => inner.trim(),
        Some(nl) => {
            let info = &inner[..nl];
            let body = if info.trim().chars().all(|c| c.is_alphanumeric() || "+-_.#".contains(c)) {
                &inner[nl + 1..]
            } else {
                inner
            };
            body.trim()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_fence() {
        assert_eq!(extract_code_fence("Here:\n```\nreturn 1\n```"), "return 1");
    }

    #[test]
    fn last_fence_wins() {
        assert_eq!(extract_code_fence("```a```\ntext\n```b```"), "b");
        assert_eq!(
            extract_code_fence("draft:\n```python\nx = 1\n```\nfixed:\n```python\nx = 2\n```\n"),
            "x = 2"
        );
    }

    #[test]
    fn no_fence_degrades_to_trimmed_input() {
        assert_eq!(extract_code_fence("no fence at all"), "no fence at all");
        assert_eq!(extract_code_fence("  def f():\n    pass\n\n"), "def f():\n    pass");
    }

    #[test]
    fn unterminated_fence_is_ignored() {
        assert_eq!(extract_code_fence("```python\nx = 1\n```\n```python\ny"), "x = 1");
    }

    #[test]
    fn info_string_is_dropped() {
        assert_eq!(extract_code_fence("```python3\nprint(1)\n```"), "print(1)");
    }

    proptest! {
        #[test]
        fn round_trip_for_fence_free_text(w in "([a-z(),:=+]([a-z (),:=+\\n]{0,58}[a-z(),:=+])?)?") {
            let wrapped = format!("```\n{w}\n```");
            prop_assert_eq!(extract_code_fence(&wrapped), w);
        }

        #[test]
        fn idempotent(s in "(```[a-z]{0,3}\\n)?[a-z \\n`]{0,60}(```)?[a-z \\n]{0,10}") {
            let once = extract_code_fence(&s);
            prop_assert_eq!(extract_code_fence(&once), once.clone());
        }
    }
}
