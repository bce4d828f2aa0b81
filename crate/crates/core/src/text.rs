//! Character-offset helpers and the surface-string normalization shared by
//! grounding and text-mode scoring.
//!
//! All span offsets in this crate count Unicode scalar values (chars), not
//! bytes. Model outputs and source corpora are compared after `normalize`:
//! lowercased with whitespace runs collapsed to single spaces.

/// Number of chars in `text`.
pub fn char_len(text: &str) -> usize {
    text.chars().count()
}

/// Slice `text` by char offsets, returning `None` when the range is out of
/// bounds or inverted.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut bounds: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
    bounds.push(text.len());
    if end >= bounds.len() {
        return None;
    }
    Some(&text[bounds[start]..bounds[end]])
}

/// Lowercase and collapse whitespace runs to single spaces, trimming the ends.
///
/// This is the equality used when grounding model strings in document text and
/// when scoring in text mode.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !out.is_empty() {
                pending_space = true;
            }
            continue;
        }
        if pending_space {
            out.push(' ');
            pending_space = false;
        }
        for lc in ch.to_lowercase() {
            out.push(lc);
        }
    }
    out
}

/// A normalized view of a document that can map matches back to original
/// char offsets.
///
/// Built once per document, then queried for occurrences of normalized
/// fragments. `chars[i]` is the i-th normalized char and `origin[i]` the char
/// offset in the original text it came from.
pub struct NormalizedText {
    chars: Vec<char>,
    origin: Vec<usize>,
}

impl NormalizedText {
    pub fn new(text: &str) -> Self {
        let mut chars = Vec::with_capacity(text.len());
        let mut origin = Vec::with_capacity(text.len());
        let mut pending_space: Option<usize> = None;
        for (ci, ch) in text.chars().enumerate() {
            if ch.is_whitespace() {
                if !chars.is_empty() {
                    pending_space = Some(ci);
                }
                continue;
            }
            if let Some(ws) = pending_space.take() {
                chars.push(' ');
                origin.push(ws);
            }
            for lc in ch.to_lowercase() {
                chars.push(lc);
                origin.push(ci);
            }
        }
        NormalizedText { chars, origin }
    }

    /// All occurrences of `fragment` (normalized before search), as original
    /// half-open char spans. Overlapping occurrences are all reported.
    pub fn find_all(&self, fragment: &str) -> Vec<(usize, usize)> {
        let needle: Vec<char> = normalize(fragment).chars().collect();
        if needle.is_empty() || needle.len() > self.chars.len() {
            return Vec::new();
        }
        let mut hits = Vec::new();
        for i in 0..=self.chars.len() - needle.len() {
            if self.chars[i..i + needle.len()] == needle[..] {
                let start = self.origin[i];
                let end = self.origin[i + needle.len() - 1] + 1;
                hits.push((start, end));
            }
        }
        hits
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_slice_ascii() {
        assert_eq!(char_slice("hello world", 6, 11), Some("world"));
        assert_eq!(char_slice("hello", 0, 5), Some("hello"));
        assert_eq!(char_slice("hello", 2, 2), Some(""));
        assert_eq!(char_slice("hello", 4, 6), None);
        assert_eq!(char_slice("hello", 3, 2), None);
    }

    #[test]
    fn char_slice_multibyte() {
        let s = "naïve café";
        assert_eq!(char_len(s), 10);
        assert_eq!(char_slice(s, 6, 10), Some("café"));
        assert_eq!(char_slice(s, 0, 5), Some("naïve"));
    }

    #[test]
    fn normalize_collapses_whitespace_and_case() {
        assert_eq!(normalize("  Was\t\nDriven  "), "was driven");
        assert_eq!(normalize("one  two   three"), "one two three");
        assert_eq!(normalize(""), "");
        assert_eq!(normalize("   "), "");
    }

    #[test]
    fn find_all_maps_back_to_original_offsets() {
        let doc = "The car  HIT the wall, then hit the fence.";
        let norm = NormalizedText::new(doc);
        let hits = norm.find_all("hit");
        // independent oracle: scan the lowercased original directly
        let lower = doc.to_lowercase();
        let first = lower.find("hit").unwrap();
        let second = lower.rfind("hit").unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0], (first, first + 3));
        assert_eq!(hits[1], (second, second + 3));
    }

    #[test]
    fn find_all_tolerates_whitespace_differences() {
        let doc = "it was   driven away";
        let norm = NormalizedText::new(doc);
        let hits = norm.find_all("was driven");
        assert_eq!(hits.len(), 1);
        let (s, e) = hits[0];
        assert_eq!(crate::text::normalize(&doc[s..e]), "was driven");
        assert_eq!(s, 3);
        assert_eq!(e, 15); // span covers the whitespace run inside "was   driven"
    }

    #[test]
    fn find_all_absent_fragment() {
        let norm = NormalizedText::new("nothing to see");
        assert!(norm.find_all("missing").is_empty());
        assert!(norm.find_all("").is_empty());
    }
}
