#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("response has neither a BURNOUT nor a NEUTRAL heading")]
    Unparseable,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Section {
    Burnout,
    Neutral,
}

/// Recognizes a section heading, returning the section and any text that
/// follows the colon on the same line.
fn heading(line: &str) -> Option<(Section, &str)> {
    let bare = line
        .trim()
        .trim_start_matches('#')
        .trim_matches(|c| c == '*' || c == '_')
        .trim();
    let (head, rest) = match bare.split_once(':') {
        Some((h, r)) => (h, r.trim_start_matches(['*', '_']).trim()),
        None => (bare, ""),
    };
    let key = head.trim().trim_matches('*').trim().to_ascii_lowercase();
    let section = match key.as_str() {
        "burnout" => Section::Burnout,
        "neutral" | "no burnout" | "non-burnout" | "not burnout" => Section::Neutral,
        _ => return None,
    };
    Some((section, rest))
}

/// Drops list markers such as `1.`, `2)`, `-`, `*` and surrounding quotes.
fn clean_item(line: &str) -> &str {
    let mut s = line.trim();
    let digits = s.len() - s.trim_start_matches(|c: char| c.is_ascii_digit()).len();
    if digits > 0 && s[digits..].starts_with(['.', ')']) {
        s = &s[digits + 1..];
    } else if s.starts_with(['-', '*', '•']) {
        s = &s[s.chars().next().map_or(0, char::len_utf8)..];
    }
    let s = s.trim();
    let unquoted = s
        .strip_prefix('"')
        .and_then(|x| x.strip_suffix('"'))
        .or_else(|| s.strip_prefix('“').and_then(|x| x.strip_suffix('”')));
    unquoted.unwrap_or(s).trim()
}

/// Splits a generation response into `(burnout, neutral)` sentences.
///
/// Sections may come in either order. Text before the first heading is
/// ignored, blank lines are dropped and each list keeps at most
/// `expected_per_label` items.
pub fn parse_generation(raw: &str, expected_per_label: usize) -> Result<(Vec<String>, Vec<String>), ParseError> {
    let mut burnout = Vec::new();
    let mut neutral = Vec::new();
    let mut current = None;
    let mut found = false;
    for line in raw.lines() {
        let item = match heading(line) {
            Some((section, rest)) => {
                current = Some(section);
                found = true;
                rest
            }
            None => line,
        };
        let target = match current {
            Some(Section::Burnout) => &mut burnout,
            Some(Section::Neutral) => &mut neutral,
            None => continue,
        };
        let cleaned = clean_item(item);
        if !cleaned.is_empty() && target.len() < expected_per_label {
            target.push(cleaned.to_string());
        }
    }
    if !found {
        return Err(ParseError::Unparseable);
    }
    Ok((burnout, neutral))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn basic_format() {
        let (b, n) = parse_generation("BURNOUT:\n1. a\n2. b\nNEUTRAL:\n1. c", 10).unwrap();
        assert_eq!(b, ["a", "b"]);
        assert_eq!(n, ["c"]);
    }

    #[test]
    fn empty_is_unparseable() {
        assert_eq!(parse_generation("", 10), Err(ParseError::Unparseable));
        assert_eq!(
            parse_generation("Sorry, I can't help with that.", 10),
            Err(ParseError::Unparseable)
        );
    }

    #[test]
    fn order_does_not_matter() {
        let ordered = parse_generation("BURNOUT:\n1. a\n2. b\nNEUTRAL:\n1. c", 10).unwrap();
        let reversed = parse_generation("NEUTRAL:\n1. c\n\nBURNOUT:\n1. a\n2. b\n", 10).unwrap();
        assert_eq!(ordered, reversed);
    }

    #[test]
    fn tolerates_markdown_and_bullets() {
        let raw = "Here you go!\n\n**Burnout:**\n- \"I can't face another Monday.\"\n* Everything feels pointless.\n\n## Neutral\n1) I enjoy my team.\n";
        let (b, n) = parse_generation(raw, 10).unwrap();
        assert_eq!(b, ["I can't face another Monday.", "Everything feels pointless."]);
        assert_eq!(n, ["I enjoy my team."]);
    }

    #[test]
    fn truncates_to_expected() {
        let raw: String = std::iter::once("BURNOUT:".to_string())
            .chain((1..=12).map(|i| format!("{i}. s{i}")))
            .collect::<Vec<_>>()
            .join("\n");
        let (b, n) = parse_generation(&raw, 10).unwrap();
        assert_eq!(b.len(), 10);
        assert_eq!(b[9], "s10");
        assert!(n.is_empty());
    }

    #[test]
    fn numbers_inside_sentence_kept() {
        let (b, _) = parse_generation("BURNOUT:\n3. I worked 12 hours again.\n2024 was rough.", 10).unwrap();
        assert_eq!(b, ["I worked 12 hours again.", "2024 was rough."]);
    }

    proptest! {
        #[test]
        fn never_exceeds_expected(lines in prop::collection::vec("[A-Za-z0-9 .:#*-]{0,20}", 0..40), k in 0usize..12) {
            let raw = lines.join("\n");
            if let Ok((b, n)) = parse_generation(&raw, k) {
                prop_assert!(b.len() <= k && n.len() <= k);
                prop_assert!(b.iter().chain(&n).all(|s| !s.is_empty()));
            }
        }
    }
}
