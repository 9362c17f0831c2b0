//! Deterministic sentence splitting.
//!
//! A sentence ends at `.`, `!`, or `?` followed by whitespace and an
//! uppercase letter or digit, unless the terminator belongs to a known
//! abbreviation. Chosen for determinism and testability, not linguistic
//! completeness.

/// Abbreviations whose trailing period never ends a sentence.
const ABBREVIATIONS: &[&str] = &[
    "et al.", "Fig.", "fig.", "vs.", "e.g.", "i.e.", "cf.", "Dr.", "No.", "approx.", "Eq.", "resp.",
];

/// Splits text into trimmed sentences, preserving order and content.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut sentences = Vec::new();
    let mut start = 0usize;

    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let prefix: String = chars[start..=i].iter().collect();
            let is_abbrev = c == '.' && ABBREVIATIONS.iter().any(|a| prefix.trim_end().ends_with(a));
            if !is_abbrev {
                // Look ahead: whitespace then uppercase/digit, or end of text.
                let mut j = i + 1;
                let mut saw_space = false;
                while j < chars.len() && chars[j].is_whitespace() {
                    saw_space = true;
                    j += 1;
                }
                let boundary = j >= chars.len()
                    || (saw_space && (chars[j].is_uppercase() || chars[j].is_ascii_digit()));
                if boundary {
                    let sentence: String = chars[start..=i].iter().collect();
                    let trimmed = sentence.trim();
                    if !trimmed.is_empty() {
                        sentences.push(trimmed.to_string());
                    }
                    start = j;
                    i = j;
                    continue;
                }
            }
        }
        i += 1;
    }
    if start < chars.len() {
        let tail: String = chars[start..].iter().collect();
        let trimmed = tail.trim();
        if !trimmed.is_empty() {
            sentences.push(trimmed.to_string());
        }
    }
    sentences
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_plain_sentences() {
        let s = split_sentences("First sentence here. Second one follows! Third asks? Yes.");
        assert_eq!(s, vec!["First sentence here.", "Second one follows!", "Third asks?", "Yes."]);
    }

    #[test]
    fn abbreviations_do_not_split() {
        let s = split_sentences("Results follow et al. Smith with Fig. 2 shown. Next sentence.");
        assert_eq!(s.len(), 2);
        assert!(s[0].contains("et al. Smith"));
        assert!(s[0].contains("Fig. 2"));
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        let s = split_sentences("The value was 3.5 units approx. measured twice. Done.");
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn reconstruction_with_single_spaces() {
        let text = "Alpha beta gamma. Delta epsilon! Zeta eta? Theta.";
        let joined = split_sentences(text).join(" ");
        assert_eq!(joined, text);
    }

    #[test]
    fn empty_and_fragment() {
        assert!(split_sentences("").is_empty());
        assert_eq!(split_sentences("no terminator here"), vec!["no terminator here"]);
    }
}
