//! Rule-generated polyphone corpus for desk-scale pipeline checks.
//!
//! Every sentence carries exactly one cue character. Cues from the first
//! class select a character's most frequent reading, cues from the second
//! class its second reading. `held_out` characters are in the dictionary and
//! the test split but never in the training split, so their readings can be
//! recovered only from the candidates shown in the prompt.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dictionary::{CharacterEntry, Dictionary, Sense};
use crate::pinyin::PinyinSyllable;
use crate::prompting::Sample;

pub const TARGETS: [char; 69] = [
    '行', '长', '重', '好', '为', '乐', '还', '数', '得', '都', '着', '少', '发', '和', '中', '种',
    '便', '传', '调', '朝', '曾', '降', '处', '当', '差', '空', '间', '教', '看', '分', '应', '几',
    '将', '只', '转', '冲', '相', '背', '会', '省', '塞', '薄', '参', '藏', '称', '奔', '尽', '恶',
    '更', '假', '角', '卷', '累', '落', '没', '模', '难', '宁', '漂', '强', '切', '散', '似', '提',
    '听', '弹', '血', '要', '载',
];
pub const FIRST_CUES: [char; 4] = ['甲', '乙', '丙', '丁'];
pub const SECOND_CUES: [char; 4] = ['子', '丑', '寅', '卯'];
const FILLERS: [char; 24] = [
    '的', '一', '是', '在', '人', '有', '我', '他', '这', '个', '们', '来', '到', '大', '地', '上',
    '说', '国', '年', '去', '下', '出', '就', '天',
];
const BASES: [&str; 32] = [
    "bang", "bian", "biao", "bing", "cang", "chai", "chan", "chao", "chen", "chou", "chui", "chun",
    "cong", "dang", "dian", "diao", "ding", "dong", "duan", "fang", "feng", "gang", "gong", "guai",
    "guan", "hang", "heng", "hong", "huai", "huan", "jian", "jiao",
];
const POS: [&str; 4] = ["名", "动", "形", "副"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_characters: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub sentence_len: usize,
    /// Dictionary characters that never occur in the training split.
    pub held_out: usize,
    /// Give each sense a two-character definition.
    pub definitions: bool,
    /// Give each sense a phrase containing the character.
    pub phrases: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_characters: 20,
            n_train: 500,
            n_test: 100,
            sentence_len: 10,
            held_out: 2,
            definitions: true,
            phrases: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub dictionary: Dictionary,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub held_out: Vec<char>,
}

/// Builds dictionary, train and test splits from `config`.
///
/// # Panics
/// If `n_characters` exceeds the built-in inventory, `held_out` is not below
/// `n_characters`, or `sentence_len < 2`.
pub fn generate(config: &SyntheticConfig) -> SyntheticCorpus {
    assert!(config.n_characters <= TARGETS.len(), "at most {} characters", TARGETS.len());
    assert!(config.held_out < config.n_characters);
    assert!(config.sentence_len >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let targets = &TARGETS[..config.n_characters];

    let mut entries = Vec::new();
    for &c in targets {
        let mut bases = BASES.to_vec();
        bases.shuffle(&mut rng);
        let senses = (0..2)
            .map(|rank| {
                let pinyin = PinyinSyllable::new(bases[rank], rng.gen_range(1..=4))
                    .expect("bases are lowercase letters");
                let def: String = (0..2).map(|_| *FILLERS.choose(&mut rng).unwrap()).collect();
                let phrase: String = [c, *FILLERS.choose(&mut rng).unwrap()].iter().collect();
                Sense {
                    pinyin,
                    pos_tags: vec![POS.choose(&mut rng).unwrap().to_string()],
                    definitions: if config.definitions { vec![def] } else { Vec::new() },
                    phrases: if config.phrases { vec![phrase] } else { Vec::new() },
                    freq_rank: rank,
                }
            })
            .collect();
        entries.push(CharacterEntry { character: c, senses });
    }
    let dictionary = Dictionary::from_entries(entries, "synthetic")
        .expect("synthetic entries are valid");

    let mut shuffled = targets.to_vec();
    shuffled.shuffle(&mut rng);
    let mut held_out = shuffled[..config.held_out].to_vec();
    held_out.sort_unstable();

    let seen: Vec<char> = targets.iter().copied().filter(|c| !held_out.contains(c)).collect();
    let mut draw = |pool: &[char]| {
        let c = *pool.choose(&mut rng).unwrap();
        let second = rng.gen_bool(0.5);
        let cue = if second { SECOND_CUES } else { FIRST_CUES }
            .choose(&mut rng)
            .copied()
            .unwrap();
        let target_index = rng.gen_range(0..config.sentence_len);
        let cue_index = loop {
            let i = rng.gen_range(0..config.sentence_len);
            if i != target_index {
                break i;
            }
        };
        let sentence: String = (0..config.sentence_len)
            .map(|i| match i {
                _ if i == target_index => c,
                _ if i == cue_index => cue,
                _ => *FILLERS.choose(&mut rng).unwrap(),
            })
            .collect();
        let gold = dictionary.candidates(c)[usize::from(second)].clone();
        Sample::new(sentence, target_index, Some(gold)).expect("index in range")
    };
    let train = (0..config.n_train).map(|_| draw(&seen)).collect();
    let test = (0..config.n_test).map(|_| draw(targets)).collect();
    SyntheticCorpus {
        dictionary,
        train,
        test,
        held_out,
    }
}
