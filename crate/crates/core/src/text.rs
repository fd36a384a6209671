//! Character-offset helpers. Every offset in this crate counts Unicode scalar
//! values, so slicing a `str` needs a char → byte translation first.

/// Byte index of the `char_idx`-th character, or `s.len()` when `char_idx`
/// equals the character length. `None` past the end.
pub fn byte_index(s: &str, char_idx: usize) -> Option<usize> {
    if char_idx == 0 {
        return Some(0);
    }
    let mut count = 0;
    for (b, _) in s.char_indices() {
        if count == char_idx {
            return Some(b);
        }
        count += 1;
    }
    (count == char_idx).then_some(s.len())
}

/// Slice `s` by a half-open character range.
pub fn char_slice(s: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let b0 = byte_index(s, start)?;
    let b1 = b0 + byte_index(&s[b0..], end - start)?;
    Some(&s[b0..b1])
}

pub fn char_len(s: &str) -> usize {
    s.chars().count()
}

/// Precomputed char → byte table for repeated slicing of one string.
#[derive(Debug, Clone)]
pub(crate) struct CharIndex {
    bytes: Vec<usize>,
}

impl CharIndex {
    pub(crate) fn new(s: &str) -> Self {
        let mut bytes: Vec<usize> = s.char_indices().map(|(b, _)| b).collect();
        bytes.push(s.len());
        CharIndex { bytes }
    }

    pub(crate) fn char_len(&self) -> usize {
        self.bytes.len() - 1
    }

    pub(crate) fn slice<'a>(&self, s: &'a str, start: usize, end: usize) -> Option<&'a str> {
        if start > end || end > self.char_len() {
            return None;
        }
        Some(&s[self.bytes[start]..self.bytes[end]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slices_by_scalar_values() {
        let s = "café au lait";
        assert_eq!(char_slice(s, 0, 4), Some("café"));
        assert_eq!(char_slice(s, 5, 7), Some("au"));
        assert_eq!(char_slice(s, 12, 12), Some(""));
        assert_eq!(char_slice(s, 10, 13), None);
        let idx = CharIndex::new(s);
        assert_eq!(idx.char_len(), 12);
        assert_eq!(idx.slice(s, 3, 4), Some("é"));
    }
}
