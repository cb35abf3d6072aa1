//! Projection of generated text onto the candidate pinyin of the target.

use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;
use thiserror::Error;

use crate::pinyin::{edit_distance, PinyinSyllable};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot correct against an empty candidate list")]
pub struct EmptyCandidateList;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorrectionOutcome {
    pub final_pinyin: PinyinSyllable,
    /// The extracted answer was already one of the candidates.
    pub was_valid: bool,
    pub distance: usize,
    /// More than one candidate shared the minimum distance.
    pub tie_broken: bool,
}

fn syllable_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new("[a-z]+[1-5]").expect("valid pattern"))
}

fn is_trimmable(c: char) -> bool {
    c.is_whitespace() || c.is_ascii_punctuation() || is_cjk_punctuation(c)
}

fn is_cjk_punctuation(c: char) -> bool {
    matches!(c, '\u{3000}'..='\u{303F}' | '\u{FF01}'..='\u{FF0F}' | '\u{FF1A}'..='\u{FF20}'
        | '\u{FF3B}'..='\u{FF40}' | '\u{FF5B}'..='\u{FF65}' | '\u{2018}'..='\u{201F}' | '\u{2026}')
}

/// Trims whitespace and punctuation, then returns the first `[a-z]+[1-5]`
/// run, or the trimmed text when there is none.
pub fn extract_answer(generated: &str) -> &str {
    let stripped = generated.trim_matches(is_trimmable);
    syllable_pattern()
        .find(stripped)
        .map_or(stripped, |m| m.as_str())
}

/// Returns the candidate closest to the generated answer.
///
/// Candidates must be in frequency order: on equal distance the earlier
/// (more frequent) one wins.
pub fn correct(
    generated: &str,
    candidates: &[PinyinSyllable],
) -> Result<CorrectionOutcome, EmptyCandidateList> {
    let answer = extract_answer(generated);
    if let Some(hit) = candidates.iter().find(|c| c.to_string() == answer) {
        return Ok(CorrectionOutcome {
            final_pinyin: hit.clone(),
            was_valid: true,
            distance: 0,
            tie_broken: false,
        });
    }
    let distances: Vec<usize> = candidates
        .iter()
        .map(|c| edit_distance(answer, &c.to_string()))
        .collect();
    let min = *distances.iter().min().ok_or(EmptyCandidateList)?;
    let best = distances.iter().position(|&d| d == min).expect("min exists");
    Ok(CorrectionOutcome {
        final_pinyin: candidates[best].clone(),
        was_valid: false,
        distance: min,
        tie_broken: distances.iter().filter(|&&d| d == min).count() > 1,
    })
}
