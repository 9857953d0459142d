use unicode_normalization::UnicodeNormalization;

/// Canonical form used for every name comparison: NFC, surrounding
/// whitespace trimmed. No case folding.
pub fn normalize_name(raw: &str) -> String {
    raw.nfc().collect::<String>().trim().to_owned()
}

/// Looser form for free-text labels produced by a model (vocabulary terms,
/// group labels, denylist entries): normalized, lowercased, inner runs of
/// whitespace collapsed, decorative punctuation stripped from both ends.
pub fn fold_label(raw: &str) -> String {
    let norm = normalize_name(raw);
    let stripped = norm
        .trim_matches(|c: char| c.is_whitespace() || matches!(c, '*' | '"' | '\'' | '`' | '.' | '[' | ']' | '“' | '”'));
    stripped
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .replace(" / ", "/")
        .to_lowercase()
}

/// Picks the canonical name for a set of aliases: the longest string by
/// character count, ties going to the lexicographically smaller one.
pub fn pick_canonical<'a, I>(aliases: I) -> Option<&'a str>
where
    I: IntoIterator<Item = &'a String>,
{
    aliases
        .into_iter()
        .max_by(|a, b| a.chars().count().cmp(&b.chars().count()).then_with(|| b.cmp(a)))
        .map(String::as_str)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nfc_and_trim() {
        // "가" decomposed into jamo vs precomposed
        let decomposed = "\u{1100}\u{1161}";
        assert_eq!(normalize_name(&format!("  {decomposed} ")), "가");
        assert_eq!(normalize_name("Professor Cha"), "Professor Cha");
    }

    #[test]
    fn fold_strips_decoration() {
        assert_eq!(fold_label("  **Wariness.** "), "wariness");
        assert_eq!(fold_label("Help / Aid"), "help/aid");
        assert_eq!(fold_label("One-sided   love"), "one-sided love");
    }

    #[test]
    fn canonical_longest_then_lexicographic() {
        let v = vec!["Cha".to_string(), "Young-min Cha".to_string(), "Prof. Cha".to_string()];
        assert_eq!(pick_canonical(&v), Some("Young-min Cha"));
        let same_len = vec!["Young-min Cha".to_string(), "Professor Cha".to_string()];
        assert_eq!(pick_canonical(&same_len), Some("Professor Cha"));
        let tie = vec!["Bb".to_string(), "Ab".to_string()];
        assert_eq!(pick_canonical(&tie), Some("Ab"));
        assert_eq!(pick_canonical(&Vec::<String>::new()), None);
    }
}
