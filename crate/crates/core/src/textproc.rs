//! Deterministic sentence splitting of model responses.
//!
//! Text is first cut into lines, then each line into sentences with a small
//! rule set:
//!
//! * a sentence ends after a run of `.`, `!` or `?` (plus any closing quotes
//!   or brackets) that is followed by whitespace or the end of the line;
//! * a lone `.` closing a known abbreviation ("e.g.", "Mr.", ...) is not a
//!   boundary, nor is "No." before a number; decimals like `3.5` never are;
//! * list markers (`1.`, `2)`, `-`, `*`, `•`) followed by whitespace are
//!   stripped from the start of every sentence;
//! * empty pieces are dropped, duplicates are kept.

/// Lowercased abbreviations whose final period does not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "e.g.", "i.e.", "mr.", "mrs.", "ms.", "dr.", "no.", "vs.", "st.", "jr.", "sr.", "prof.", "approx.", "fig.", "cf.",
];

const TERMINATORS: &[char] = &['.', '!', '?'];
const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']'];
const OPENERS: &[char] = &['"', '\'', '\u{201c}', '\u{2018}', '(', '['];
const BULLETS: &[char] = &['-', '*', '+', '\u{2022}', '\u{00b7}', '\u{2013}'];
const LINE_BREAKS: &[char] = &['\n', '\r', '\u{2028}', '\u{2029}'];

/// Ordered, non-empty, trimmed sentences.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SentenceList {
    sentences: Vec<String>,
}

impl SentenceList {
    pub fn as_slice(&self) -> &[String] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.sentences.iter()
    }

    pub fn into_vec(self) -> Vec<String> {
        self.sentences
    }
}

impl<'a> IntoIterator for &'a SentenceList {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.sentences.iter()
    }
}

/// Split `text` into lines, then each line into sentences.
pub fn split(text: &str) -> SentenceList {
    let mut sentences = Vec::new();
    for line in text.split(LINE_BREAKS) {
        split_line(line, &mut sentences);
    }
    SentenceList { sentences }
}

fn split_line(line: &str, out: &mut Vec<String>) {
    let mut rest = line;
    loop {
        rest = strip_markers(rest.trim_start());
        if rest.is_empty() {
            return;
        }
        let end = find_boundary(rest).unwrap_or(rest.len());
        let sentence = rest[..end].trim_end();
        if !sentence.is_empty() {
            out.push(sentence.to_string());
        }
        rest = &rest[end..];
    }
}

/// Remove leading list markers, repeatedly. A marker only counts when
/// whitespace follows it, so a bare "2." or "-" stays as text.
fn strip_markers(mut s: &str) -> &str {
    loop {
        let marker_len = marker_len(s);
        match marker_len {
            Some(n) if s[n..].starts_with(char::is_whitespace) => s = s[n..].trim_start(),
            _ => return s,
        }
    }
}

fn marker_len(s: &str) -> Option<usize> {
    let first = s.chars().next()?;
    if BULLETS.contains(&first) {
        return Some(first.len_utf8());
    }
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if (1..=3).contains(&digits) && matches!(s.as_bytes().get(digits), Some(b'.') | Some(b')')) {
        return Some(digits + 1);
    }
    None
}

/// Byte offset just past the first sentence boundary, if any.
fn find_boundary(s: &str) -> Option<usize> {
    let mut chars = s.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if !TERMINATORS.contains(&c) {
            continue;
        }
        let mut end = i + c.len_utf8();
        let mut run = 1;
        while let Some(&(j, n)) = chars.peek() {
            if TERMINATORS.contains(&n) {
                run += 1;
            } else if !CLOSERS.contains(&n) {
                break;
            }
            end = j + n.len_utf8();
            chars.next();
        }
        let at_break = s[end..].chars().next().is_none_or(char::is_whitespace);
        if !at_break {
            continue;
        }
        if run == 1 && c == '.' && ends_with_abbreviation(&s[..i + 1], &s[end..]) {
            continue;
        }
        return Some(end);
    }
    None
}

fn ends_with_abbreviation(prefix: &str, rest: &str) -> bool {
    let word_start =
        prefix.rfind(char::is_whitespace).map_or(0, |p| p + prefix[p..].chars().next().unwrap().len_utf8());
    let word = prefix[word_start..].trim_start_matches(OPENERS).to_lowercase();
    match word.as_str() {
        // "No. 5" but not "No. It is closed."
        "no." => rest.trim_start().starts_with(|c: char| c.is_ascii_digit()),
        w => ABBREVIATIONS.contains(&w),
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn s(text: &str) -> Vec<String> {
        split(text).into_vec()
    }

    #[test]
    fn two_sentences() {
        assert_eq!(s("A man walks. He opens the trunk."), ["A man walks.", "He opens the trunk."]);
    }

    #[test]
    fn lines_split_first() {
        assert_eq!(s("line one\nline two"), ["line one", "line two"]);
        assert_eq!(s("a\r\nb\n\n\nc"), ["a", "b", "c"]);
    }

    #[test]
    fn empty_and_blank() {
        assert!(split("").is_empty());
        assert!(split("  \n\t\n ").is_empty());
    }

    #[test]
    fn abbreviations_and_decimals() {
        assert_eq!(
            s("Objects, e.g. cars, are parked. Mr. Lee has 3.5 m of rope."),
            ["Objects, e.g. cars, are parked.", "Mr. Lee has 3.5 m of rope."]
        );
        assert_eq!(s("See (e.g. the van) now."), ["See (e.g. the van) now."]);
    }

    #[test]
    fn terminator_runs_and_closers() {
        assert_eq!(s("Wait... then? Yes!"), ["Wait...", "then?", "Yes!"]);
        assert_eq!(s("He said \"stop.\" Then left."), ["He said \"stop.\"", "Then left."]);
        assert_eq!(s("Really?! Yes."), ["Really?!", "Yes."]);
    }

    #[test]
    fn list_markers_are_stripped() {
        assert_eq!(
            s("1. A car stops.\n2) A man exits.\n- The door closes.\n• Done"),
            ["A car stops.", "A man exits.", "The door closes.", "Done"]
        );
        assert_eq!(s("Steps: 1. open. 2. close."), ["Steps: 1.", "open.", "close."]);
        assert_eq!(s("-"), ["-"]);
        assert_eq!(s("2."), ["2."]);
        assert_eq!(s("- "), Vec::<String>::new());
    }

    #[test]
    fn duplicates_are_kept() {
        assert_eq!(s("A car. A car."), ["A car.", "A car."]);
    }

    fn text_strategy() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop_oneof![
                Just("a".to_string()),
                Just("Car".to_string()),
                Just(" ".to_string()),
                Just(".".to_string()),
                Just("!".to_string()),
                Just("?".to_string()),
                Just("\n".to_string()),
                Just("e.g.".to_string()),
                Just("3.5".to_string()),
                Just("1. ".to_string()),
                Just("- ".to_string()),
                Just("\"".to_string()),
                Just("é".to_string()),
            ],
            0..40,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #[test]
        fn split_is_idempotent(text in text_strategy()) {
            for sentence in split(&text).iter() {
                prop_assert_eq!(s(sentence), vec![sentence.clone()]);
            }
        }

        #[test]
        fn no_sentence_spans_a_newline(text in text_strategy()) {
            for sentence in split(&text).iter() {
                prop_assert!(!sentence.contains('\n'));
                prop_assert!(!sentence.is_empty());
                prop_assert_eq!(sentence.trim(), sentence.as_str());
            }
        }

        #[test]
        fn appending_a_line_adds_a_sentence(text in text_strategy(), x in "[^\n\r\u{2028}\u{2029}]{0,12}") {
            let before = split(&text).len();
            let after = split(&format!("{text}\n{x}.")).len();
            prop_assert!(after > before);
        }

        #[test]
        fn non_whitespace_is_preserved_without_markers(text in "[a-zA-Z .!?,'\n]{0,80}") {
            let joined: String = split(&text).iter().flat_map(|s| s.chars()).filter(|c| !c.is_whitespace()).collect();
            let source: String = text.chars().filter(|c| !c.is_whitespace()).collect();
            prop_assert_eq!(joined, source);
        }
    }
}
