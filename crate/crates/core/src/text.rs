//! Tokenization shared by the intention generator and the matcher.
//!
//! Text is lowercased and split on every non-alphanumeric character, so
//! "Traffic-Light!" and "traffic light" both become `["traffic", "light"]`.

pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// True when `needle` occurs as a contiguous run somewhere in `haystack`.
/// An empty needle never matches.
pub fn contains_sequence(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

/// Tokenizes `phrase` and checks for a contiguous occurrence in `tokens`.
pub fn phrase_in(tokens: &[String], phrase: &str) -> bool {
    contains_sequence(tokens, &tokenize(phrase))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_on_punctuation_and_case() {
        assert_eq!(tokenize("Traffic-Light, please!"), vec!["traffic", "light", "please"]);
        assert!(tokenize("  ,,  ").is_empty());
    }

    #[test]
    fn sequence_must_be_contiguous() {
        let hay = tokenize("a red traffic light here");
        assert!(phrase_in(&hay, "traffic light"));
        assert!(!phrase_in(&hay, "red light"));
        assert!(!phrase_in(&hay, ""));
        assert!(!phrase_in(&hay, "ligh"));
    }
}
