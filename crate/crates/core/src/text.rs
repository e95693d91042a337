//! Text normalization, line segmentation and small lexical helpers shared by
//! the filtering and deduplication stages.

use std::fmt;

use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_normalization::UnicodeNormalization;

/// Text produced by [`normalize_text`].
///
/// Contains no punctuation or symbol code points, is lowercased, uses single
/// spaces between tokens with no leading/trailing space, and is in NFD.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NormalizedText(String);

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl AsRef<str> for NormalizedText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// True for code points in general categories P* and S*.
pub fn is_punct_or_symbol(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
            | MathSymbol
            | CurrencySymbol
            | ModifierSymbol
            | OtherSymbol
    )
}

/// NFD, then drop P*/S* code points, lowercase, and collapse Unicode
/// whitespace runs to single spaces (trimmed).
///
/// A closing NFD pass restores canonical mark order when a removed symbol
/// separated two combining sequences; for ordinary text it is a no-op.
pub fn normalize_text(text: &str) -> NormalizedText {
    let stripped: String = text
        .nfd()
        .filter(|c| !is_punct_or_symbol(*c))
        .flat_map(char::to_lowercase)
        .collect();
    let mut collapsed = String::with_capacity(stripped.len());
    for token in stripped.split_whitespace() {
        if !collapsed.is_empty() {
            collapsed.push(' ');
        }
        collapsed.push_str(token);
    }
    NormalizedText(collapsed.nfd().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LinePosition {
    Head,
    Tail,
    Body,
}

/// A line that carries content: non-empty after trimming and containing at
/// least one alphanumeric character.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContentLine {
    pub raw: String,
    pub position: LinePosition,
    pub index_in_doc: usize,
}

pub fn is_content_line(line: &str) -> bool {
    line.chars().any(char::is_alphanumeric)
}

/// Splits on `\n` (dropping a trailing `\r`), keeping original indices.
pub fn raw_lines(text: &str) -> impl Iterator<Item = &str> {
    text.split('\n').map(|l| l.strip_suffix('\r').unwrap_or(l))
}

pub fn split_content_lines(text: &str) -> Vec<ContentLine> {
    raw_lines(text)
        .enumerate()
        .filter(|(_, line)| is_content_line(line))
        .map(|(index_in_doc, line)| ContentLine {
            raw: line.to_string(),
            position: LinePosition::Body,
            index_in_doc,
        })
        .collect()
}

/// CJK ideographs and the kana/hangul syllabaries, each of which is treated
/// as a standalone word.
pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF      // hiragana, katakana
        | 0x3400..=0x4DBF    // ext A
        | 0x4E00..=0x9FFF    // unified ideographs
        | 0xAC00..=0xD7AF    // hangul syllables
        | 0xF900..=0xFAFF    // compatibility ideographs
        | 0x20000..=0x2FA1F) // ext B..F, compat supplement
}

/// Words: whitespace tokens, except that each CJK character is its own word
/// and the non-CJK runs around it count separately.
pub fn count_words(text: &str) -> usize {
    text.split_whitespace().map(count_token_words).sum()
}

fn count_token_words(token: &str) -> usize {
    let mut words = 0;
    let mut in_run = false;
    for c in token.chars() {
        if is_cjk(c) {
            words += 1;
            in_run = false;
        } else if !in_run {
            words += 1;
            in_run = true;
        }
    }
    words
}

/// Fraction of alphanumeric characters that are CJK.
pub fn cjk_fraction(text: &str) -> f64 {
    let (mut cjk, mut alnum) = (0usize, 0usize);
    for c in text.chars().filter(|c| c.is_alphanumeric()) {
        alnum += 1;
        if is_cjk(c) {
            cjk += 1;
        }
    }
    if alnum == 0 {
        0.0
    } else {
        cjk as f64 / alnum as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn punctuation_and_spacing() {
        assert_eq!(normalize_text("Hello,  World!").as_str(), "hello world");
        assert_eq!(normalize_text("").as_str(), "");
        assert_eq!(normalize_text("  \t\n ").as_str(), "");
    }

    #[test]
    fn accented_text_is_decomposed() {
        let out = normalize_text("Café TEST");
        let expected: Vec<u32> = vec![0x63, 0x61, 0x66, 0x65, 0x301, 0x20, 0x74, 0x65, 0x73, 0x74];
        assert_eq!(out.as_str().chars().map(|c| c as u32).collect::<Vec<_>>(), expected);
    }

    #[test]
    fn symbols_are_removed_everywhere() {
        assert_eq!(normalize_text("price: $5 + 3€ = ¥8").as_str(), "price 5 3 8");
        assert_eq!(normalize_text("a\u{3000}b\u{00a0}c").as_str(), "a b c");
    }

    #[test]
    fn content_lines_drop_blank_and_symbol_lines() {
        let raws = |t: &str| -> Vec<String> {
            split_content_lines(t).into_iter().map(|l| l.raw).collect()
        };
        assert_eq!(raws("a\n\n  \nb"), vec!["a", "b"]);
        assert!(raws("***\n---").is_empty());
        assert_eq!(raws("price: $5\n!!!"), vec!["price: $5"]);
        let lines = split_content_lines("a\n\n  \nb");
        assert_eq!(lines[1].index_in_doc, 3);
    }

    #[test]
    fn word_counting_splits_cjk() {
        assert_eq!(count_words("你好world"), 3);
        assert_eq!(count_words("the quick  brown\tfox"), 4);
        assert_eq!(count_words(""), 0);
        assert_eq!(count_words("a你b"), 3);
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,64}") {
            let once = normalize_text(&s);
            let twice = normalize_text(once.as_str());
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn normalized_output_invariants(s in "\\PC{0,64}") {
            let out = normalize_text(&s);
            let v = out.as_str();
            prop_assert!(!v.chars().any(is_punct_or_symbol));
            prop_assert!(!v.contains("  "));
            prop_assert_eq!(v.trim(), v);
            prop_assert_eq!(v.to_lowercase(), v.to_string());
            let nfd: String = v.nfd().collect();
            prop_assert_eq!(nfd.as_str(), v);
        }

        #[test]
        fn normalize_never_adds_tokens(s in "[a-zA-Z ,.!?;:\\-\t\n]{0,80}") {
            let before = s.split_whitespace().count();
            let after = normalize_text(&s).as_str().split(' ').filter(|t| !t.is_empty()).count();
            prop_assert!(after <= before);
        }

        #[test]
        fn content_lines_are_an_ordered_subsequence(s in "[a-z#* \n]{0,80}") {
            let all: Vec<&str> = raw_lines(&s).collect();
            let kept = split_content_lines(&s);
            let mut last = None;
            for line in &kept {
                prop_assert_eq!(all[line.index_in_doc], line.raw.as_str());
                prop_assert!(last.is_none_or(|l| l < line.index_in_doc));
                last = Some(line.index_in_doc);
            }
        }
    }
}
