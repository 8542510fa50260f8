//! NFC-normalized views of text that remember where each normalized
//! character came from in the original string.

use unicode_normalization::char::canonical_combining_class;
use unicode_normalization::UnicodeNormalization;

use crate::corpus::CharSpan;

/// NFC form of a string with a per-character map back to original
/// character offsets.
///
/// Normalization is applied per combining sequence (a starter plus the
/// non-starters after it), so every normalized character belongs to exactly
/// one original range.
#[derive(Debug, Clone)]
pub struct NormalizedText {
    chars: Vec<char>,
    // original [start, end) of the combining sequence each char came from
    origin: Vec<(usize, usize)>,
}

impl NormalizedText {
    pub fn new(text: &str) -> Self {
        let original: Vec<char> = text.chars().collect();
        let mut chars = Vec::with_capacity(original.len());
        let mut origin = Vec::with_capacity(original.len());
        let mut start = 0;
        while start < original.len() {
            let mut end = start + 1;
            while end < original.len() && canonical_combining_class(original[end]) != 0 {
                end += 1;
            }
            let group: String = original[start..end].iter().collect();
            for c in group.nfc() {
                chars.push(c);
                origin.push((start, end));
            }
            start = end;
        }
        Self { chars, origin }
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    /// Original span covering normalized characters `[start, end)`.
    pub fn original_span(&self, start: usize, end: usize) -> CharSpan {
        debug_assert!(start < end && end <= self.chars.len());
        CharSpan::new(self.origin[start].0, self.origin[end - 1].1)
    }

    /// First normalized index whose original offset is at or after `offset`.
    pub fn index_at_or_after(&self, offset: usize) -> usize {
        self.origin.partition_point(|&(s, _)| s < offset)
    }

    /// Find `needle` at or after normalized index `from`.
    pub fn find(&self, needle: &[char], from: usize) -> Option<usize> {
        find_chars(&self.chars, needle, from)
    }

    /// Whitespace-insensitive search: whitespace in both haystack and needle
    /// is ignored. Returns the original span from the first to the last
    /// matched character.
    pub fn find_ignoring_whitespace(&self, needle: &[char], from: usize) -> Option<CharSpan> {
        let needle: Vec<char> = needle.iter().copied().filter(|c| !c.is_whitespace()).collect();
        if needle.is_empty() {
            return None;
        }
        let (compact, positions): (Vec<char>, Vec<usize>) = self
            .chars
            .iter()
            .enumerate()
            .skip(from)
            .filter(|(_, c)| !c.is_whitespace())
            .map(|(i, &c)| (c, i))
            .unzip();
        let at = find_chars(&compact, &needle, 0)?;
        let first = positions[at];
        let last = positions[at + needle.len() - 1];
        Some(self.original_span(first, last + 1))
    }
}

pub fn nfc_chars(s: &str) -> Vec<char> {
    s.nfc().collect()
}

pub(crate) fn find_chars(hay: &[char], needle: &[char], from: usize) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    (from..=hay.len() - needle.len()).find(|&i| hay[i..i + needle.len()] == *needle)
}

/// Substring of `text` by character offsets.
pub fn char_slice(text: &str, span: CharSpan) -> &str {
    let mut idx = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let start = idx.nth(span.start).unwrap_or(text.len());
    let end = if span.end > span.start {
        idx.nth(span.end - span.start - 1).unwrap_or(text.len())
    } else {
        start
    };
    &text[start..end]
}
