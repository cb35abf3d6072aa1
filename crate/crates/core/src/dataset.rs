//! CPP-format polyphone data: loading, splitting, statistics.
//!
//! Two layouts are accepted:
//! - TSV: `marked_sentence<TAB>pinyin`, one sample per line.
//! - paired files `<split>.sent` / `<split>.lb`, line-aligned.
//!
//! In both, the target character is enclosed in two U+2582 markers.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pinyin::{parse_pinyin, MalformedPinyin};
use crate::prompting::Sample;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name} line {line}: {reason}")]
    Format {
        source_name: String,
        line: usize,
        reason: String,
    },
    #[error("{source_name} line {line}: {error}")]
    Pinyin {
        source_name: String,
        line: usize,
        error: MalformedPinyin,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub dev: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Where a split came from; recorded in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSource {
    Published,
    Resplit { ratios: [u32; 3], seed: u64 },
}

fn parse_row(
    marked: &str,
    label: &str,
    source_name: &str,
    line: usize,
) -> Result<Sample, DatasetError> {
    let gold = parse_pinyin(label.trim()).map_err(|error| DatasetError::Pinyin {
        source_name: source_name.to_string(),
        line,
        error,
    })?;
    Sample::from_marked(marked.trim(), Some(gold)).map_err(|e| DatasetError::Format {
        source_name: source_name.to_string(),
        line,
        reason: e.to_string(),
    })
}

/// Parses the TSV layout. Blank lines are skipped.
pub fn parse_cpp_tsv(text: &str, source_name: &str) -> Result<Vec<Sample>, DatasetError> {
    let mut samples = Vec::new();
    for (idx, row) in text.lines().enumerate() {
        if row.trim().is_empty() {
            continue;
        }
        let (marked, label) = row.split_once('\t').ok_or_else(|| DatasetError::Format {
            source_name: source_name.to_string(),
            line: idx + 1,
            reason: "expected `sentence<TAB>pinyin`".into(),
        })?;
        samples.push(parse_row(marked, label, source_name, idx + 1)?);
    }
    Ok(samples)
}

/// Parses the paired `.sent` / `.lb` layout.
pub fn parse_cpp_pair(
    sentences: &str,
    labels: &str,
    source_name: &str,
) -> Result<Vec<Sample>, DatasetError> {
    let sentences: Vec<&str> = sentences.lines().collect();
    let labels: Vec<&str> = labels.lines().collect();
    let trailing_blank = |v: &[&str]| v.iter().rev().take_while(|l| l.trim().is_empty()).count();
    let n_sent = sentences.len() - trailing_blank(&sentences);
    let n_lab = labels.len() - trailing_blank(&labels);
    if n_sent != n_lab {
        return Err(DatasetError::Format {
            source_name: source_name.to_string(),
            line: n_sent.min(n_lab) + 1,
            reason: format!("{n_sent} sentences but {n_lab} labels"),
        });
    }
    sentences[..n_sent]
        .iter()
        .zip(&labels[..n_lab])
        .enumerate()
        .map(|(i, (s, l))| parse_row(s, l, source_name, i + 1))
        .collect()
}

fn read(path: &Path) -> Result<String, DatasetError> {
    fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads one file: `*.sent` (paired with the sibling `*.lb`) or TSV.
pub fn load_cpp(path: impl AsRef<Path>) -> Result<Vec<Sample>, DatasetError> {
    let path = path.as_ref();
    let name = path.display().to_string();
    if path.extension().is_some_and(|e| e == "sent") {
        let labels = path.with_extension("lb");
        parse_cpp_pair(&read(path)?, &read(&labels)?, &name)
    } else {
        parse_cpp_tsv(&read(path)?, &name)
    }
}

/// Loads `train`/`dev`/`test` from a directory holding either
/// `<split>.sent` + `<split>.lb` or `<split>.tsv`. The dev split may be
/// absent. Returns `None` unless both train and test files are present.
pub fn load_cpp_dir(dir: impl AsRef<Path>) -> Result<Option<DatasetSplit>, DatasetError> {
    let dir = dir.as_ref();
    let find = |split: &str| -> Option<PathBuf> {
        let sent = dir.join(format!("{split}.sent"));
        if sent.is_file() && sent.with_extension("lb").is_file() {
            return Some(sent);
        }
        let tsv = dir.join(format!("{split}.tsv"));
        tsv.is_file().then_some(tsv)
    };
    let (Some(train), Some(test)) = (find("train"), find("test")) else {
        return Ok(None);
    };
    Ok(Some(DatasetSplit {
        train: load_cpp(&train)?,
        dev: find("dev").map(load_cpp).transpose()?.unwrap_or_default(),
        test: load_cpp(&test)?,
    }))
}

/// Splits `n` items by `ratios` with the largest-remainder rule; remainder
/// ties go to the earlier part.
pub fn split_sizes(n: usize, ratios: [u32; 3]) -> [usize; 3] {
    let total: u64 = ratios.iter().map(|&r| u64::from(r)).sum();
    assert!(total > 0, "ratios must not all be zero");
    let mut sizes = [0usize; 3];
    let mut remainders = [0u64; 3];
    for i in 0..3 {
        let exact = n as u64 * u64::from(ratios[i]);
        sizes[i] = (exact / total) as usize;
        remainders[i] = exact % total;
    }
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    sizes
}

/// Seeded shuffle followed by a contiguous partition.
pub fn split_dataset(samples: &[Sample], ratios: [u32; 3], seed: u64) -> DatasetSplit {
    let mut shuffled = samples.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let [train_n, dev_n, _] = split_sizes(samples.len(), ratios);
    let test = shuffled.split_off(train_n + dev_n);
    let dev = shuffled.split_off(train_n);
    DatasetSplit {
        train: shuffled,
        dev,
        test,
    }
}

/// The first ⌊ratio·n⌋ samples of a seeded shuffle of `train`.
pub fn train_subset(train: &[Sample], ratio: f64, seed: u64) -> Vec<Sample> {
    let mut shuffled = train.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let keep = ((ratio.clamp(0.0, 1.0) * train.len() as f64) + 1e-9).floor() as usize;
    shuffled.truncate(keep.min(train.len()));
    shuffled
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_samples: usize,
    /// Distinct target characters.
    pub n_characters: usize,
    /// Characters keyed by how many distinct gold pinyin they carry.
    pub pinyin_count_histogram: BTreeMap<usize, usize>,
    /// Share of characters with exactly two distinct gold pinyin.
    pub two_pinyin_fraction: f64,
    pub min_sentence_len: usize,
    pub max_sentence_len: usize,
    /// Sentences outside 5..=50 characters.
    pub length_violations: usize,
}

pub fn dataset_stats<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> DatasetStats {
    let mut readings: BTreeMap<char, BTreeSet<String>> = BTreeMap::new();
    let (mut n, mut min_len, mut max_len, mut violations) = (0, usize::MAX, 0, 0);
    for s in samples {
        n += 1;
        let len = s.char_len();
        min_len = min_len.min(len);
        max_len = max_len.max(len);
        if !(5..=50).contains(&len) {
            violations += 1;
        }
        let set = readings.entry(s.target_char).or_default();
        if let Some(g) = &s.gold_pinyin {
            set.insert(g.to_string());
        }
    }
    let mut hist = BTreeMap::new();
    for set in readings.values() {
        *hist.entry(set.len()).or_insert(0) += 1;
    }
    let two = hist.get(&2).copied().unwrap_or(0);
    DatasetStats {
        n_samples: n,
        n_characters: readings.len(),
        two_pinyin_fraction: if readings.is_empty() {
            0.0
        } else {
            two as f64 / readings.len() as f64
        },
        pinyin_count_histogram: hist,
        min_sentence_len: if n == 0 { 0 } else { min_len },
        max_sentence_len: max_len,
        length_violations: violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tsv_rows() {
        let text = "农夫释耒，▂红▂女下机\tgong1\n\n他▂长▂大了\tzhang3\n";
        let samples = parse_cpp_tsv(text, "t").unwrap();
        assert_eq!(samples.len(), 2);
        assert_eq!(samples[0].target_char, '红');
        assert_eq!(samples[0].target_index, 5);
        assert_eq!(samples[0].sentence, "农夫释耒，红女下机");
        assert_eq!(samples[0].gold_pinyin.as_ref().unwrap().to_string(), "gong1");
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let err = |text: &str| match parse_cpp_tsv(text, "t") {
            Err(DatasetError::Format { line, .. }) | Err(DatasetError::Pinyin { line, .. }) => line,
            other => panic!("{other:?}"),
        };
        assert_eq!(err("农夫▂红▂女\tgong1\n没有标记\tgong1"), 2);
        assert_eq!(err("没有标记的句子\tgong1"), 1);
        assert_eq!(err("▂红女▂下机\tgong1"), 1);
        assert_eq!(err("农夫▂红▂女\tgong"), 1);
        assert_eq!(err("no tab here"), 1);
    }

    #[test]
    fn paired_layout() {
        let s = parse_cpp_pair("农夫▂红▂女\n他▂长▂大了\n", "gong1\nzhang3\n", "p").unwrap();
        assert_eq!(s.len(), 2);
        assert!(parse_cpp_pair("农夫▂红▂女\n他▂长▂大了", "gong1", "p").is_err());
    }

    #[test]
    fn split_size_examples() {
        assert_eq!(split_sizes(10, [8, 1, 1]), [8, 1, 1]);
        assert_eq!(split_sizes(0, [8, 1, 1]), [0, 0, 0]);
        assert_eq!(split_sizes(7, [1, 1, 1]), [3, 2, 2]);
    }

    #[test]
    fn cpp_scale_split_sizes() {
        // 99,264 · 8/10 = 79,411.2 and 99,264 · 1/10 = 9,926.4 (twice):
        // floors sum to 99,263; the single leftover goes to the largest
        // remainder (0.4), first such part being dev.
        let n = 99_264usize;
        let floors = [n * 8 / 10, n / 10, n / 10];
        assert_eq!(floors, [79_411, 9_926, 9_926]);
        assert_eq!(split_sizes(n, [8, 1, 1]), [79_411, 9_927, 9_926]);
    }

    fn samples(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample::new(format!("句子{i}号"), 0, Some(parse_pinyin("ju4").unwrap())).unwrap())
            .collect()
    }

    #[test]
    fn split_is_seeded_and_disjoint() {
        let data = samples(10);
        let a = split_dataset(&data, [8, 1, 1], 3);
        assert_eq!((a.train.len(), a.dev.len(), a.test.len()), (8, 1, 1));
        assert_eq!(a, split_dataset(&data, [8, 1, 1], 3));
        let mut all: Vec<&String> = a.train.iter().chain(&a.dev).chain(&a.test).map(|s| &s.sentence).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn subset_takes_floor_of_ratio() {
        let data = samples(100);
        assert_eq!(train_subset(&data, 0.6, 1).len(), 60);
        assert_eq!(train_subset(&data, 0.8, 1).len(), 80);
        assert_eq!(train_subset(&data, 1.0, 1).len(), 100);
        assert_eq!(train_subset(&samples(7), 0.5, 1).len(), 3);
        assert_eq!(train_subset(&data, 0.6, 1), train_subset(&data, 0.6, 1));
    }

    #[test]
    fn stats_count_characters_and_readings() {
        let text = "农夫▂红▂女\tgong1\n▂红▂旗飘飘扬\thong2\n他▂长▂大了\tzhang3\n";
        let stats = dataset_stats(&parse_cpp_tsv(text, "t").unwrap());
        assert_eq!(stats.n_samples, 3);
        assert_eq!(stats.n_characters, 2);
        assert_eq!(stats.pinyin_count_histogram, BTreeMap::from([(1, 1), (2, 1)]));
        assert_eq!(stats.two_pinyin_fraction, 0.5);
        assert_eq!(stats.length_violations, 2);
    }
}
