//! Text primitives shared by detection, anonymization and restoration.
//!
//! All offsets are byte offsets into UTF-8 strings and always fall on char
//! boundaries. A match is *token-bounded* when the characters immediately
//! before and after it are non-alphanumeric (or the string edge).

/// A half-open byte range `[start, end)` of a match.
pub type ByteRange = (usize, usize);

/// True if the byte offset `at` in `text` sits on a token boundary looking
/// backwards (the previous char is not alphanumeric).
fn left_boundary(text: &str, at: usize) -> bool {
    text[..at]
        .chars()
        .next_back()
        .is_none_or(|c| !c.is_alphanumeric())
}

fn right_boundary(text: &str, at: usize) -> bool {
    text[at..].chars().next().is_none_or(|c| !c.is_alphanumeric())
}

/// Whether `[start, end)` in `text` is token-bounded on both sides.
pub fn is_token_bounded(text: &str, start: usize, end: usize) -> bool {
    left_boundary(text, start) && right_boundary(text, end)
}

/// Finds every non-overlapping, token-bounded, case-insensitive occurrence of
/// `needle` in `haystack`, scanning left to right.
pub fn find_token_bounded(haystack: &str, needle: &str) -> Vec<ByteRange> {
    let needle = needle.trim();
    if needle.is_empty() || haystack.is_empty() {
        return Vec::new();
    }
    if haystack.is_ascii() && needle.is_ascii() {
        find_ascii(haystack, needle)
    } else {
        find_unicode(haystack, needle)
    }
}

fn find_ascii(haystack: &str, needle: &str) -> Vec<ByteRange> {
    let hay = haystack.to_ascii_lowercase();
    let pat = needle.to_ascii_lowercase();
    let mut hits = Vec::new();
    let mut from = 0;
    while let Some(pos) = hay[from..].find(&pat) {
        let start = from + pos;
        let end = start + pat.len();
        if is_token_bounded(haystack, start, end) {
            hits.push((start, end));
            from = end;
        } else {
            from = start + 1;
        }
    }
    hits
}

fn chars_eq_ignore_case(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

fn find_unicode(haystack: &str, needle: &str) -> Vec<ByteRange> {
    let pat: Vec<char> = needle.chars().collect();
    let mut hits = Vec::new();
    let mut skip_until = 0;
    for (start, _) in haystack.char_indices() {
        if start < skip_until || !left_boundary(haystack, start) {
            continue;
        }
        let mut chars = haystack[start..].char_indices();
        let mut end = start;
        let mut matched = true;
        for &p in &pat {
            match chars.next() {
                Some((off, c)) if chars_eq_ignore_case(c, p) => end = start + off + c.len_utf8(),
                _ => {
                    matched = false;
                    break;
                }
            }
        }
        if matched && right_boundary(haystack, end) {
            hits.push((start, end));
            skip_until = end;
        }
    }
    hits
}

/// Case-folds, trims and collapses internal whitespace runs to one space.
pub fn normalize_surface(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Normalization applied to mentions before a reverse lookup: strips a
/// trailing possessive and any adjacent punctuation, then case-folds.
pub fn normalize_mention(s: &str) -> String {
    let mut t = s.trim();
    t = t.trim_matches(|c: char| !c.is_alphanumeric());
    for suffix in ["'s", "\u{2019}s", "'S", "\u{2019}S"] {
        if let Some(stripped) = t.strip_suffix(suffix) {
            t = stripped;
            break;
        }
    }
    if let Some(stripped) = t.strip_suffix('\'').or_else(|| t.strip_suffix('\u{2019}')) {
        t = stripped;
    }
    t = t.trim_matches(|c: char| !c.is_alphanumeric());
    normalize_surface(t)
}

/// Levenshtein distance over chars.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Levenshtein distance on case-folded strings divided by the longer length;
/// 0.0 for identical strings, 1.0 for completely different ones.
pub fn normalized_edit_distance(a: &str, b: &str) -> f64 {
    let a = a.to_lowercase();
    let b = b.to_lowercase();
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(&a, &b) as f64 / longest as f64
}

/// Lowercased alphanumeric word tokens.
pub fn word_tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Byte offset of the `n`-th char of `s` (or `s.len()` past the end).
pub fn char_to_byte(s: &str, n: usize) -> usize {
    s.char_indices().nth(n).map_or(s.len(), |(b, _)| b)
}

/// Replaces the given non-overlapping byte ranges, applying them right to
/// left so earlier offsets stay valid.
pub fn replace_ranges(text: &str, ranges: &[(ByteRange, &str)]) -> String {
    let mut sorted: Vec<_> = ranges.to_vec();
    sorted.sort_by_key(|((s, _), _)| std::cmp::Reverse(*s));
    let mut out = text.to_string();
    for ((start, end), replacement) in sorted {
        out.replace_range(start..end, replacement);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_boundary_excludes_partial_words() {
        assert!(find_token_bounded("an action item", "Act").is_empty());
        assert_eq!(find_token_bounded("the Act applies", "act"), vec![(4, 7)]);
    }

    #[test]
    fn possessive_counts_as_boundary() {
        let s = "When does Acme Corp's license expire?";
        assert_eq!(find_token_bounded(s, "acme corp"), vec![(10, 19)]);
    }

    #[test]
    fn unicode_matching_is_case_insensitive() {
        let s = "Zürich AG und ZÜRICH AG";
        assert_eq!(find_token_bounded(s, "zürich ag").len(), 2);
        assert!(find_token_bounded("Zürichsee", "Zürich").is_empty());
    }

    #[test]
    fn mention_normalization() {
        assert_eq!(normalize_mention("Orion Holdings's"), "orion holdings");
        assert_eq!(normalize_mention("(Orion  Holdings)."), "orion holdings");
        assert_eq!(normalize_mention("Halcyon Inc."), "halcyon inc");
        assert_eq!(normalize_mention("Partners'"), "partners");
    }

    #[test]
    fn edit_distance_basics() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert!((normalized_edit_distance("ABC", "abc")).abs() < 1e-12);
        assert!((normalized_edit_distance("abcd", "wxyz") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn right_to_left_replacement() {
        let s = "A met B and A";
        let out = replace_ranges(s, &[((0, 1), "Xavier"), ((6, 7), "Y"), ((12, 13), "Xavier")]);
        assert_eq!(out, "Xavier met Y and Xavier");
    }
}
