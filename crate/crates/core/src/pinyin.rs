//! Toned pinyin syllables and the string metric used to compare them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed pinyin {text:?}: {reason}")]
pub struct MalformedPinyin {
    pub text: String,
    pub reason: &'static str,
}

/// A single romanized syllable with its tone, e.g. `hong2`.
///
/// Tone 5 is the neutral tone. Any `[a-z]+[1-5]` string is accepted; the
/// dictionary decides which syllables are legal for a given character.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PinyinSyllable {
    base: String,
    tone: u8,
}

impl PinyinSyllable {
    pub fn new(base: impl Into<String>, tone: u8) -> Result<Self, MalformedPinyin> {
        let base = base.into();
        if base.is_empty() || !base.bytes().all(|b| b.is_ascii_lowercase()) {
            return Err(MalformedPinyin {
                reason: "base must be one or more letters a-z",
                text: format!("{base}{tone}"),
            });
        }
        if !(1..=5).contains(&tone) {
            return Err(MalformedPinyin {
                reason: "tone must be 1..=5",
                text: format!("{base}{tone}"),
            });
        }
        Ok(Self { base, tone })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    pub fn tone(&self) -> u8 {
        self.tone
    }
}

/// Parses canonical toned text: `[a-z]+[1-5]`, nothing else.
pub fn parse_pinyin(text: &str) -> Result<PinyinSyllable, MalformedPinyin> {
    let err = |reason| MalformedPinyin {
        text: text.to_string(),
        reason,
    };
    let (last_idx, last) = text.char_indices().last().ok_or_else(|| err("empty"))?;
    let tone = match last {
        '1'..='5' => last as u8 - b'0',
        '0'..='9' => return Err(err("tone digit out of range 1..=5")),
        _ => return Err(err("missing tone digit")),
    };
    let base = &text[..last_idx];
    if base.is_empty() {
        return Err(err("missing syllable body"));
    }
    if !base.bytes().all(|b| b.is_ascii_lowercase()) {
        return Err(err("syllable body must be letters a-z"));
    }
    Ok(PinyinSyllable {
        base: base.to_string(),
        tone,
    })
}

impl fmt::Display for PinyinSyllable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.base, self.tone)
    }
}

impl FromStr for PinyinSyllable {
    type Err = MalformedPinyin;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_pinyin(s)
    }
}

impl Serialize for PinyinSyllable {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PinyinSyllable {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_pinyin(&text).map_err(serde::de::Error::custom)
    }
}

/// Unit-cost Levenshtein distance over Unicode scalar values.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=a.len()).collect();
    let mut cur = vec![0; a.len() + 1];
    for (j, &cb) in b.iter().enumerate() {
        cur[0] = j + 1;
        for (i, &ca) in a.iter().enumerate() {
            let substitute = prev[i] + usize::from(ca != cb);
            cur[i + 1] = substitute.min(prev[i + 1] + 1).min(cur[i] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[a.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Exponential textbook recursion, kept independent of the DP above.
    pub(crate) fn naive_levenshtein(a: &[char], b: &[char]) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        let cost = usize::from(a[0] != b[0]);
        (naive_levenshtein(&a[1..], b) + 1)
            .min(naive_levenshtein(a, &b[1..]) + 1)
            .min(naive_levenshtein(&a[1..], &b[1..]) + cost)
    }

    fn naive(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        naive_levenshtein(&a, &b)
    }

    #[test]
    fn parses_canonical_syllables() {
        let s = parse_pinyin("hong2").unwrap();
        assert_eq!((s.base(), s.tone()), ("hong", 2));
        let s = parse_pinyin("a1").unwrap();
        assert_eq!((s.base(), s.tone()), ("a", 1));
        assert_eq!(parse_pinyin("lv5").unwrap().to_string(), "lv5");
    }

    #[test]
    fn rejects_malformed_syllables() {
        for bad in ["hong", "", "2", "hong0", "hong6", "Hong2", "hong2 ", " hong2", "ho ng2", "hóng2", "hong22"] {
            assert!(parse_pinyin(bad).is_err(), "{bad:?} should be rejected");
        }
    }

    #[test]
    fn constructor_validates() {
        assert!(PinyinSyllable::new("", 1).is_err());
        assert!(PinyinSyllable::new("gong", 0).is_err());
        assert!(PinyinSyllable::new("GONG", 1).is_err());
        assert_eq!(PinyinSyllable::new("gong", 1).unwrap(), parse_pinyin("gong1").unwrap());
    }

    #[test]
    fn serde_uses_canonical_text() {
        let s = parse_pinyin("gong1").unwrap();
        assert_eq!(serde_json::to_string(&s).unwrap(), "\"gong1\"");
        let back: PinyinSyllable = serde_json::from_str("\"gong1\"").unwrap();
        assert_eq!(back, s);
        assert!(serde_json::from_str::<PinyinSyllable>("\"gong\"").is_err());
    }

    #[test]
    fn distance_examples_match_oracle() {
        assert_eq!(edit_distance("hong2", "hong2"), 0);
        assert_eq!(naive("gong", "gong1"), 1);
        assert_eq!(edit_distance("gong", "gong1"), 1);
        assert_eq!(naive("gong", "hong2"), 2);
        assert_eq!(edit_distance("gong", "hong2"), 2);
        assert_eq!(edit_distance("", "abc"), 3);
        assert_eq!(edit_distance("红女", "红"), 1);
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(base in "[a-z]{1,6}", tone in 1u8..=5) {
            let text = format!("{base}{tone}");
            let parsed = parse_pinyin(&text).unwrap();
            prop_assert_eq!(parsed.to_string(), text);
            let rebuilt = PinyinSyllable::new(base, tone).unwrap();
            prop_assert_eq!(parse_pinyin(&rebuilt.to_string()).unwrap(), rebuilt);
        }

        #[test]
        fn accepted_inputs_format_back(text in "\\PC{0,8}") {
            if let Ok(p) = parse_pinyin(&text) {
                prop_assert_eq!(p.to_string(), text);
            }
        }

        #[test]
        fn metric_axioms(a in "[agh1n]{0,7}", b in "[agh1n]{0,7}", c in "[agh1n]{0,7}") {
            prop_assert_eq!(edit_distance(&a, &b), edit_distance(&b, &a));
            prop_assert_eq!(edit_distance(&a, &a), 0);
            prop_assert_eq!(edit_distance(&a, &b) == 0, a == b);
            prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
        }

        #[test]
        fn agrees_with_naive_on_unicode(a in "[红女a1]{0,6}", b in "[红女a1]{0,6}") {
            prop_assert_eq!(edit_distance(&a, &b), naive(&a, &b));
        }
    }
}
