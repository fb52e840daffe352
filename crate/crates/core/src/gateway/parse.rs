use std::collections::BTreeMap;

use super::prompt::GuidingPrompt;
use super::GatewayError;

/// Value stored for a slot that has no vocabulary match.
pub const UNKNOWN: &str = "unknown";

/// Extracts slot values from a classifier answer.
///
/// Slots are scanned in prompt order. For each slot the earliest
/// case-insensitive whole-word vocabulary hit at or after the cursor wins
/// (longest entry on a tie), and the cursor moves past it. An unmatched slot
/// is `"unknown"` in lenient mode and a [`GatewayError::ParseFailure`] in
/// strict mode.
pub fn parse_label(
    raw: &str,
    prompt: &GuidingPrompt,
    strict: bool,
) -> Result<BTreeMap<String, String>, GatewayError> {
    // ASCII lowering keeps byte offsets aligned with `raw`.
    let haystack = raw.to_ascii_lowercase();
    let mut cursor = 0;
    let mut out = BTreeMap::new();
    for slot in &prompt.slots {
        let mut best: Option<(usize, usize, &str)> = None;
        for entry in &slot.vocabulary {
            let needle = entry.to_ascii_lowercase();
            if let Some(start) = find_word(&haystack, &needle, cursor) {
                let end = start + needle.len();
                let better = match best {
                    None => true,
                    Some((s, e, _)) => start < s || (start == s && end > e),
                };
                if better {
                    best = Some((start, end, entry));
                }
            }
        }
        match best {
            Some((_, end, entry)) => {
                cursor = end;
                out.insert(slot.name.clone(), entry.to_owned());
            }
            None if strict => return Err(GatewayError::ParseFailure(slot.name.clone())),
            None => {
                out.insert(slot.name.clone(), UNKNOWN.to_owned());
            }
        }
    }
    Ok(out)
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b >= 0x80
}

fn find_word(haystack: &str, needle: &str, from: usize) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    let bytes = haystack.as_bytes();
    let mut pos = from;
    while let Some(off) = haystack.get(pos..)?.find(needle) {
        let start = pos + off;
        let end = start + needle.len();
        let left_ok = start == 0 || !is_word_byte(bytes[start - 1]) || !is_word_byte(needle.as_bytes()[0]);
        let right_ok = end == bytes.len()
            || !is_word_byte(bytes[end])
            || !is_word_byte(needle.as_bytes()[needle.len() - 1]);
        if left_ok && right_ok {
            return Some(start);
        }
        pos = start + haystack[start..].chars().next().map_or(1, char::len_utf8);
    }
    None
}
