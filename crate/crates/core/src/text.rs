//! Text normalization shared by answer handling, vocabulary matching and
//! question-type filters.

/// Lowercases, trims and collapses internal whitespace runs to one space.
///
/// ```
/// assert_eq!(cvf_core::text::normalize_answer("  Two   Dogs "), "two dogs");
/// ```
pub fn normalize_answer(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lowercase word tokens with punctuation stripped. Apostrophes are dropped
/// (`"man's"` becomes `"mans"`); every other punctuation character separates
/// tokens.
pub fn tokenize(s: &str) -> Vec<String> {
    let mut cleaned = String::with_capacity(s.len());
    for ch in s.chars() {
        if ch == '\'' || ch == '\u{2019}' {
            continue;
        }
        if ch.is_alphanumeric() {
            cleaned.extend(ch.to_lowercase());
        } else {
            cleaned.push(' ');
        }
    }
    cleaned.split_whitespace().map(str::to_owned).collect()
}

/// English number words accepted as counts, indexed by value.
pub const NUMBER_WORDS: [&str; 21] = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen",
    "nineteen", "twenty",
];

/// Largest count accepted in digit form.
pub const MAX_DIGIT_COUNT: u32 = 99;

/// Parses a normalized answer as a count: digit strings up to 99 or the
/// number words `zero` through `twenty`.
///
/// ```
/// use cvf_core::text::parse_count;
/// assert_eq!(parse_count("three"), Some(3));
/// assert_eq!(parse_count("12"), Some(12));
/// assert_eq!(parse_count("100"), None);
/// assert_eq!(parse_count("yes"), None);
/// ```
pub fn parse_count(answer: &str) -> Option<u32> {
    let answer = normalize_answer(answer);
    if !answer.is_empty() && answer.len() <= 2 && answer.bytes().all(|b| b.is_ascii_digit()) {
        let n: u32 = answer.parse().ok()?;
        return (n <= MAX_DIGIT_COUNT).then_some(n);
    }
    NUMBER_WORDS
        .iter()
        .position(|w| *w == answer)
        .map(|n| n as u32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_strips_punctuation() {
        assert_eq!(tokenize("Is he riding a bike?"), ["is", "he", "riding", "a", "bike"]);
        assert_eq!(tokenize("What's on the hot-dog?"), ["whats", "on", "the", "hot", "dog"]);
        assert!(tokenize("?!").is_empty());
    }

    #[test]
    fn count_parsing_edges() {
        assert_eq!(parse_count("0"), Some(0));
        assert_eq!(parse_count("99"), Some(99));
        assert_eq!(parse_count("07"), Some(7));
        assert_eq!(parse_count("twenty"), Some(20));
        assert_eq!(parse_count(" Twenty "), Some(20));
        assert_eq!(parse_count("twenty one"), None);
        assert_eq!(parse_count("-1"), None);
        assert_eq!(parse_count(""), None);
        assert_eq!(parse_count("1.5"), None);
    }
}
