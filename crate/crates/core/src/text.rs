//! Text normalization shared by the alignment metric and the vectorizer.
//!
//! Text is split on anything that is not a letter or digit, each piece is
//! split again at camelCase boundaries (`SortedList` -> `sorted`, `list`;
//! `XMLParser` -> `xml`, `parser`), and everything is lowercased.

/// Normalized tokens of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split(|c: char| !c.is_alphanumeric()) {
        if !word.is_empty() {
            split_camel(word, &mut out);
        }
    }
    out
}

fn split_camel(word: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = word.chars().collect();
    let mut start = 0;
    for i in 1..chars.len() {
        let (prev, cur) = (chars[i - 1], chars[i]);
        let next_lower = chars.get(i + 1).is_some_and(|c| c.is_lowercase());
        let boundary = (prev.is_lowercase() || prev.is_ascii_digit()) && cur.is_uppercase()
            || prev.is_uppercase() && cur.is_uppercase() && next_lower;
        if boundary {
            out.push(chars[start..i].iter().collect::<String>().to_lowercase());
            start = i;
        }
    }
    out.push(chars[start..].iter().collect::<String>().to_lowercase());
}

/// Tokens grouped by sentence or line. Alignment windows never cross these
/// boundaries.
pub fn segments(text: &str) -> Vec<Vec<String>> {
    text.split(['\n', '.', '!', '?', ';'])
        .map(tokenize)
        .filter(|s| !s.is_empty())
        .collect()
}

/// Normalized tokens joined by single spaces.
pub fn normalize(text: &str) -> String {
    tokenize(text).join(" ")
}
