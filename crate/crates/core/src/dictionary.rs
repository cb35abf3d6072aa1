//! Multi-level semantic dictionary of polyphonic characters.
//!
//! Each character maps to its candidate pronunciations ordered by frequency
//! (rank 0 is the most frequent). Every candidate carries three levels of
//! knowledge: part-of-speech tags, definitions, and phrases containing the
//! character.
//!
//! On disk the dictionary is line-delimited JSON, one character per line:
//!
//! ```text
//! # provenance: fixture
//! {"char":"红","senses":[{"pinyin":"hong2","pos":["形"],"defs":["像鲜血的颜色"],"phrases":["红旗"],"freq_rank":0}, ...]}
//! ```
//!
//! Lines starting with `#` are comments; a `# provenance: ` comment sets the
//! provenance note.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pinyin::PinyinSyllable;

const PROVENANCE_PREFIX: &str = "# provenance: ";

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {reason}")]
    Schema { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("character {0:?} is not in the dictionary")]
pub struct UnknownCharacter(pub char);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sense {
    pub pinyin: PinyinSyllable,
    #[serde(rename = "pos")]
    pub pos_tags: Vec<String>,
    #[serde(rename = "defs")]
    pub definitions: Vec<String>,
    pub phrases: Vec<String>,
    pub freq_rank: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharacterEntry {
    pub character: char,
    /// Ordered by `freq_rank`, ascending.
    pub senses: Vec<Sense>,
}

impl CharacterEntry {
    pub fn candidates(&self) -> Vec<PinyinSyllable> {
        self.senses.iter().map(|s| s.pinyin.clone()).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct EntryRecord {
    #[serde(rename = "char")]
    character: String,
    senses: Vec<Sense>,
}

/// Per-sense budget applied when knowledge is rendered into a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeLimits {
    pub max_definitions: usize,
    pub max_phrases: usize,
}

impl Default for KnowledgeLimits {
    fn default() -> Self {
        Self {
            max_definitions: 3,
            max_phrases: 3,
        }
    }
}

/// One row of a raw (pre-aggregation) dictionary dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(rename = "char")]
    pub character: char,
    pub pinyin: PinyinSyllable,
    #[serde(default)]
    pub pos: Vec<String>,
    #[serde(default)]
    pub defs: Vec<String>,
    #[serde(default)]
    pub phrases: Vec<String>,
    pub count: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    entries: BTreeMap<char, CharacterEntry>,
    pub provenance: String,
}

impl Dictionary {
    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, character: char) -> Option<&CharacterEntry> {
        self.entries.get(&character)
    }

    pub fn contains(&self, character: char) -> bool {
        self.entries.contains_key(&character)
    }

    /// Entries in code-point order.
    pub fn entries(&self) -> impl Iterator<Item = &CharacterEntry> {
        self.entries.values()
    }

    /// Candidate pinyin in frequency order; empty when the character is absent.
    pub fn candidates(&self, character: char) -> Vec<PinyinSyllable> {
        self.get(character)
            .map(CharacterEntry::candidates)
            .unwrap_or_default()
    }

    /// Number of entries keyed by how many candidates they have.
    pub fn candidate_histogram(&self) -> BTreeMap<usize, usize> {
        let mut hist = BTreeMap::new();
        for entry in self.entries() {
            *hist.entry(entry.senses.len()).or_insert(0) += 1;
        }
        hist
    }

    /// Parses the line-delimited format. `line` numbers in errors are 1-based.
    pub fn parse(text: &str) -> Result<Self, DictionaryError> {
        let mut dict = Dictionary::default();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw_line.trim();
            if let Some(note) = raw_line.strip_prefix(PROVENANCE_PREFIX) {
                dict.provenance = note.to_string();
                continue;
            }
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let schema = |reason: String| DictionaryError::Schema { line, reason };
            let record: EntryRecord =
                serde_json::from_str(trimmed).map_err(|e| schema(e.to_string()))?;
            let mut chars = record.character.chars();
            let character = match (chars.next(), chars.next()) {
                (Some(c), None) => c,
                _ => {
                    return Err(schema(format!(
                        "`char` must be exactly one character, got {:?}",
                        record.character
                    )))
                }
            };
            let entry = validate_entry(character, record.senses).map_err(schema)?;
            if dict.entries.insert(character, entry).is_some() {
                return Err(schema(format!("duplicate character {character:?}")));
            }
        }
        Ok(dict)
    }

    /// Canonical serialization: entries by code point, senses by rank.
    pub fn to_canonical_string(&self) -> String {
        let mut out = String::new();
        if !self.provenance.is_empty() {
            out.push_str(PROVENANCE_PREFIX);
            out.push_str(&self.provenance);
            out.push('\n');
        }
        for entry in self.entries() {
            let record = EntryRecord {
                character: entry.character.to_string(),
                senses: entry.senses.clone(),
            };
            out.push_str(&serde_json::to_string(&record).expect("entry serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_entries(
        entries: impl IntoIterator<Item = CharacterEntry>,
        provenance: impl Into<String>,
    ) -> Result<Self, String> {
        let mut dict = Dictionary {
            entries: BTreeMap::new(),
            provenance: provenance.into(),
        };
        for entry in entries {
            let entry = validate_entry(entry.character, entry.senses)?;
            let c = entry.character;
            if dict.entries.insert(c, entry).is_some() {
                return Err(format!("duplicate character {c:?}"));
            }
        }
        Ok(dict)
    }
}

fn validate_entry(character: char, mut senses: Vec<Sense>) -> Result<CharacterEntry, String> {
    if senses.len() < 2 {
        return Err(format!(
            "{character:?} has {} sense(s); a polyphone needs at least 2",
            senses.len()
        ));
    }
    senses.sort_by_key(|s| s.freq_rank);
    for (expected, sense) in senses.iter().enumerate() {
        if sense.freq_rank != expected {
            return Err(format!(
                "{character:?}: freq_rank values must be 0..{} without gaps",
                senses.len()
            ));
        }
        if let Some(p) = sense.phrases.iter().find(|p| !p.contains(character)) {
            return Err(format!("{character:?}: phrase {p:?} does not contain the character"));
        }
    }
    for (i, a) in senses.iter().enumerate() {
        if senses[..i].iter().any(|b| b.pinyin == a.pinyin) {
            return Err(format!("{character:?}: duplicate pinyin {}", a.pinyin));
        }
    }
    Ok(CharacterEntry { character, senses })
}

pub fn load_dictionary(path: impl AsRef<Path>) -> Result<Dictionary, DictionaryError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DictionaryError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Dictionary::parse(&text)
}

pub fn save_dictionary(dict: &Dictionary, path: impl AsRef<Path>) -> Result<(), DictionaryError> {
    let path = path.as_ref();
    fs::write(path, dict.to_canonical_string()).map_err(|source| DictionaryError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Parses a raw dump: one JSON [`RawRecord`] per line, `#` comments allowed.
pub fn parse_raw_records(text: &str) -> Result<Vec<RawRecord>, DictionaryError> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let record = serde_json::from_str(trimmed).map_err(|e| DictionaryError::Schema {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Aggregates raw records into a dictionary of polyphones.
///
/// Records are grouped by character, then by pinyin (duplicates merge by
/// summing counts and concatenating definitions and phrases). Characters
/// left with a single distinct pinyin are dropped. Ranks follow descending
/// count, ties keeping first-appearance order. Phrases that do not contain
/// their character are discarded.
pub fn build_dictionary(
    raw_records: impl IntoIterator<Item = RawRecord>,
    provenance: impl Into<String>,
) -> Dictionary {
    // (character, senses-in-first-appearance-order with counts)
    let mut groups: Vec<(char, Vec<(Sense, u64)>)> = Vec::new();
    for record in raw_records {
        let gi = match groups.iter().position(|(c, _)| *c == record.character) {
            Some(i) => i,
            None => {
                groups.push((record.character, Vec::new()));
                groups.len() - 1
            }
        };
        let senses = &mut groups[gi].1;
        let phrases = record
            .phrases
            .into_iter()
            .filter(|p| p.contains(record.character));
        match senses.iter_mut().find(|(s, _)| s.pinyin == record.pinyin) {
            Some((sense, count)) => {
                *count += record.count;
                for tag in record.pos {
                    if !sense.pos_tags.contains(&tag) {
                        sense.pos_tags.push(tag);
                    }
                }
                sense.definitions.extend(record.defs);
                sense.phrases.extend(phrases);
            }
            None => {
                let mut pos_tags: Vec<String> = Vec::new();
                for tag in record.pos {
                    if !pos_tags.contains(&tag) {
                        pos_tags.push(tag);
                    }
                }
                senses.push((
                    Sense {
                        pinyin: record.pinyin,
                        pos_tags,
                        definitions: record.defs,
                        phrases: phrases.collect(),
                        freq_rank: 0,
                    },
                    record.count,
                ));
            }
        }
    }

    let mut entries = BTreeMap::new();
    for (character, mut senses) in groups {
        if senses.len() < 2 {
            continue;
        }
        // stable: equal counts keep first-appearance order
        senses.sort_by(|a, b| b.1.cmp(&a.1));
        let senses = senses
            .into_iter()
            .enumerate()
            .map(|(rank, (mut sense, _))| {
                sense.freq_rank = rank;
                sense
            })
            .collect();
        entries.insert(character, CharacterEntry { character, senses });
    }
    Dictionary {
        entries,
        provenance: provenance.into(),
    }
}

/// One knowledge line: `<pinyin>: <POS>; <definitions>; <phrases>`.
///
/// POS tags are joined by `/`, definitions by `；`, phrases by `、`.
/// Trailing empty fields are omitted.
pub fn sense_line(sense: &Sense, limits: KnowledgeLimits) -> String {
    let mut fields = vec![sense.pos_tags.join("/")];
    let defs: Vec<&str> = sense
        .definitions
        .iter()
        .take(limits.max_definitions)
        .map(String::as_str)
        .collect();
    let phrases: Vec<&str> = sense
        .phrases
        .iter()
        .take(limits.max_phrases)
        .map(String::as_str)
        .collect();
    fields.push(defs.join("；"));
    fields.push(phrases.join("、"));
    while fields.len() > 1 && fields.last().is_some_and(String::is_empty) {
        fields.pop();
    }
    format!("{}: {}", sense.pinyin, fields.join("; "))
}

/// Knowledge for every candidate of `character`, one line per candidate in
/// frequency order, no trailing newline.
pub fn knowledge_block(
    dict: &Dictionary,
    character: char,
    limits: KnowledgeLimits,
) -> Result<String, UnknownCharacter> {
    let entry = dict.get(character).ok_or(UnknownCharacter(character))?;
    Ok(entry
        .senses
        .iter()
        .map(|s| sense_line(s, limits))
        .collect::<Vec<_>>()
        .join("\n"))
}
