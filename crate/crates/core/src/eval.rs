//! Predictors, the majority-vote baseline, and accuracy reports.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::SplitSource;
use crate::pinyin::PinyinSyllable;
use crate::pipeline::{Pipeline, PipelineError};
use crate::prompting::{Sample, Style};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("sample {index} has no gold pinyin")]
    MissingGold { index: usize },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

/// What a predictor said about one sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    /// `None` when the sample could not be answered; counted as wrong.
    pub pinyin: Option<PinyinSyllable>,
    /// Whether the raw generation was already a candidate; `None` for
    /// predictors that do not generate.
    pub generation_valid: Option<bool>,
}

pub trait Predictor {
    fn predict(&self, sample: &Sample) -> Result<Prediction, EvalError>;
}

impl Predictor for Pipeline {
    /// Per-sample failures (unknown character, oversized prompt) become
    /// unanswered predictions; backend failures abort.
    fn predict(&self, sample: &Sample) -> Result<Prediction, EvalError> {
        match Pipeline::predict(self, sample) {
            Ok(out) => Ok(Prediction {
                pinyin: Some(out.outcome.final_pinyin),
                generation_valid: Some(out.outcome.was_valid),
            }),
            Err(e) if e.is_per_sample() => Ok(Prediction {
                pinyin: None,
                generation_valid: None,
            }),
            Err(e) => Err(e.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MajorityModel {
    pub table: BTreeMap<char, PinyinSyllable>,
    pub fallback: PinyinSyllable,
}

fn most_frequent<'a>(counts: &BTreeMap<&'a PinyinSyllable, usize>) -> &'a PinyinSyllable {
    // Keys iterate in pinyin text order, so the first maximum is the tie winner.
    let mut best: Option<(&PinyinSyllable, usize)> = None;
    for (&p, &n) in counts {
        if best.map_or(true, |(_, b)| n > b) {
            best = Some((p, n));
        }
    }
    best.expect("non-empty counts").0
}

pub fn train_majority(train: &[Sample]) -> Result<MajorityModel, EvalError> {
    let mut per_char: BTreeMap<char, BTreeMap<&PinyinSyllable, usize>> = BTreeMap::new();
    let mut global: BTreeMap<&PinyinSyllable, usize> = BTreeMap::new();
    for (index, s) in train.iter().enumerate() {
        let gold = s.gold_pinyin.as_ref().ok_or(EvalError::MissingGold { index })?;
        *per_char.entry(s.target_char).or_default().entry(gold).or_default() += 1;
        *global.entry(gold).or_default() += 1;
    }
    if global.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    Ok(MajorityModel {
        table: per_char
            .iter()
            .map(|(&c, counts)| (c, most_frequent(counts).clone()))
            .collect(),
        fallback: most_frequent(&global).clone(),
    })
}

impl MajorityModel {
    pub fn predict_pinyin(&self, sample: &Sample) -> &PinyinSyllable {
        self.table.get(&sample.target_char).unwrap_or(&self.fallback)
    }
}

impl Predictor for MajorityModel {
    fn predict(&self, sample: &Sample) -> Result<Prediction, EvalError> {
        Ok(Prediction {
            pinyin: Some(self.predict_pinyin(sample).clone()),
            generation_valid: None,
        })
    }
}

/// Reproduction coordinates of one report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub label: String,
    pub style: Option<Style>,
    pub knowledge: Option<bool>,
    pub train_ratio: Option<f64>,
    pub seed: u64,
    pub backend: String,
    pub split_source: Option<SplitSource>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterScore {
    pub n: usize,
    pub correct: usize,
    pub accuracy: f64,
}

/// Wall-clock measurements; kept apart so records can be compared without them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub condition: Condition,
    pub n_samples: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    /// Samples that got no prediction at all.
    pub n_unanswered: usize,
    /// Share of generations that needed correction, over samples that
    /// produced a generation.
    pub invalid_generation_rate: f64,
    /// Keyed by target character.
    pub per_character: BTreeMap<String, CharacterScore>,
    pub timing: Timing,
}

impl EvalReport {
    /// The report as JSON with `timing` removed.
    pub fn record_without_timing(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("report serializes");
        value.as_object_mut().expect("object").remove("timing");
        value
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Exact-match accuracy of `predictor` on `samples`.
pub fn evaluate(
    predictor: &dyn Predictor,
    samples: &[Sample],
    condition: Condition,
) -> Result<EvalReport, EvalError> {
    let started = Instant::now();
    let mut per_char: BTreeMap<char, (usize, usize)> = BTreeMap::new();
    let (mut n_correct, mut unanswered, mut generated, mut invalid) = (0, 0, 0, 0);
    for (index, sample) in samples.iter().enumerate() {
        let gold = sample.gold_pinyin.as_ref().ok_or(EvalError::MissingGold { index })?;
        let prediction = predictor.predict(sample)?;
        let hit = prediction.pinyin.as_ref() == Some(gold);
        if prediction.pinyin.is_none() {
            unanswered += 1;
        }
        if let Some(valid) = prediction.generation_valid {
            generated += 1;
            if !valid {
                invalid += 1;
            }
        }
        let slot = per_char.entry(sample.target_char).or_default();
        slot.0 += 1;
        if hit {
            slot.1 += 1;
            n_correct += 1;
        }
    }
    Ok(EvalReport {
        condition,
        n_samples: samples.len(),
        n_correct,
        accuracy: ratio(n_correct, samples.len()),
        n_unanswered: unanswered,
        invalid_generation_rate: ratio(invalid, generated),
        per_character: per_char
            .into_iter()
            .map(|(c, (n, correct))| {
                (
                    c.to_string(),
                    CharacterScore {
                        n,
                        correct,
                        accuracy: ratio(correct, n),
                    },
                )
            })
            .collect(),
        timing: Timing {
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        },
    })
}
