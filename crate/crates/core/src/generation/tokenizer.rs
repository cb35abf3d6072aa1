//! Character-level vocabulary with reserved special tokens.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;
pub const MASK: usize = 4;

const SPECIALS: [&str; 5] = ["<pad>", "<unk>", "<bos>", "<eos>", "<mask>"];

/// Every character is one token. Lowercase letters and the tone digits are
/// always present so that any pinyin answer can be spelled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    chars: Vec<char>,
    index: HashMap<char, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    chars: String,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(repr: VocabularyRepr) -> Self {
        Self::from_chars(repr.chars.chars())
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self {
            chars: v.chars.iter().collect(),
        }
    }
}

impl Vocabulary {
    /// Builds the vocabulary from a training corpus; ids are assigned in
    /// code-point order after the specials.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set: BTreeSet<char> = ('a'..='z').chain('1'..='5').collect();
        for text in texts {
            set.extend(text.chars());
        }
        Self::from_chars(set)
    }

    fn from_chars(chars: impl IntoIterator<Item = char>) -> Self {
        let mut seen = BTreeSet::new();
        let chars: Vec<char> = chars.into_iter().filter(|c| seen.insert(*c)).collect();
        let index = chars
            .iter()
            .enumerate()
            .map(|(i, &c)| (c, i + SPECIALS.len()))
            .collect();
        Self { chars, index }
    }

    pub fn len(&self) -> usize {
        SPECIALS.len() + self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK)
    }

    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        text.chars().map(|c| self.id(c)).collect()
    }

    /// Inverse of [`tokenize`](Self::tokenize). Control specials render as
    /// nothing and `UNK` as U+FFFD.
    pub fn detokenize(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter_map(|&id| match id {
                UNK => Some(char::REPLACEMENT_CHARACTER),
                PAD | BOS | EOS | MASK => None,
                _ => self.chars.get(id - SPECIALS.len()).copied(),
            })
            .collect()
    }

    pub fn token_text(&self, id: usize) -> String {
        match SPECIALS.get(id) {
            Some(s) => s.to_string(),
            None => self.detokenize(&[id]),
        }
    }
}
