//! Marked samples and prompt rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::{knowledge_block, sense_line, Dictionary, KnowledgeLimits, UnknownCharacter};
use crate::pinyin::PinyinSyllable;

/// U+2582, the delimiter placed on both sides of the target character.
pub const MARKER: char = '\u{2582}';

const DEFAULT_CATALOG: &str = include_str!("../assets/templates.txt");
const SLOTS: [&str; 3] = ["sentence", "candidates", "knowledge"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("target index {index} out of range for a sentence of {len} characters")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("sentence contains the marker character U+2582")]
    StrayMarker,
    #[error("expected exactly 2 markers, found {0}")]
    MarkerCount(usize),
    #[error("markers must enclose exactly one character, found {0}")]
    MarkedSpan(usize),
}

/// A sentence with one polyphonic target character.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub sentence: String,
    /// Offset of the target, in characters.
    pub target_index: usize,
    pub target_char: char,
    pub gold_pinyin: Option<PinyinSyllable>,
}

impl Sample {
    pub fn new(
        sentence: impl Into<String>,
        target_index: usize,
        gold_pinyin: Option<PinyinSyllable>,
    ) -> Result<Self, SampleError> {
        let sentence = sentence.into();
        if sentence.contains(MARKER) {
            return Err(SampleError::StrayMarker);
        }
        let len = sentence.chars().count();
        let target_char = sentence
            .chars()
            .nth(target_index)
            .ok_or(SampleError::IndexOutOfRange {
                index: target_index,
                len,
            })?;
        Ok(Self {
            sentence,
            target_index,
            target_char,
            gold_pinyin,
        })
    }

    /// Builds a sample from text carrying the two in-band markers.
    pub fn from_marked(
        marked: &str,
        gold_pinyin: Option<PinyinSyllable>,
    ) -> Result<Self, SampleError> {
        let positions: Vec<usize> = marked
            .chars()
            .enumerate()
            .filter(|(_, c)| *c == MARKER)
            .map(|(i, _)| i)
            .collect();
        if positions.len() != 2 {
            return Err(SampleError::MarkerCount(positions.len()));
        }
        let enclosed = positions[1] - positions[0] - 1;
        if enclosed != 1 {
            return Err(SampleError::MarkedSpan(enclosed));
        }
        let sentence: String = marked.chars().filter(|&c| c != MARKER).collect();
        Self::new(sentence, positions[0], gold_pinyin)
    }

    pub fn char_len(&self) -> usize {
        self.sentence.chars().count()
    }
}

/// Inserts a marker immediately before and after the target character.
pub fn mark_target(sample: &Sample) -> Result<String, SampleError> {
    let len = sample.char_len();
    if sample.target_index >= len {
        return Err(SampleError::IndexOutOfRange {
            index: sample.target_index,
            len,
        });
    }
    let mut out = String::with_capacity(sample.sentence.len() + 2 * MARKER.len_utf8());
    for (i, c) in sample.sentence.chars().enumerate() {
        if i == sample.target_index {
            out.push(MARKER);
            out.push(c);
            out.push(MARKER);
        } else {
            out.push(c);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Completion,
    #[serde(rename = "choice")]
    MultipleChoice,
}

impl Style {
    pub fn template_name(self) -> &'static str {
        match self {
            Style::Completion => "completion",
            Style::MultipleChoice => "choice",
        }
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.template_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PromptStyle {
    pub style: Style,
    pub include_knowledge: bool,
}

impl PromptStyle {
    pub fn new(style: Style, include_knowledge: bool) -> Self {
        Self {
            style,
            include_knowledge,
        }
    }

    pub fn label(&self) -> String {
        let k = if self.include_knowledge { "on" } else { "off" };
        format!("{}/knowledge-{k}", self.style)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Prompt {
    pub text: String,
    pub style: PromptStyle,
    /// Candidates in the order they appear in `text`; empty when none are shown.
    pub candidate_order: Vec<PinyinSyllable>,
    pub marked_sentence: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CatalogError {
    #[error("cannot read template catalog: {0}")]
    Io(String),
    #[error("template catalog line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("template catalog has no [{0}] template")]
    Missing(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error(transparent)]
    Unknown(#[from] UnknownCharacter),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

/// Named prompt templates with `{slot}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateCatalog {
    templates: BTreeMap<String, String>,
}

impl Default for TemplateCatalog {
    fn default() -> Self {
        Self::parse(DEFAULT_CATALOG).expect("bundled template catalog is valid")
    }
}

impl TemplateCatalog {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| CatalogError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CatalogError> {
        let mut templates = BTreeMap::new();
        let mut current: Option<(String, usize, Vec<&str>)> = None;
        let mut finish = |cur: Option<(String, usize, Vec<&str>)>| -> Result<(), CatalogError> {
            if let Some((name, line, mut body)) = cur {
                while body.last().is_some_and(|l| l.trim().is_empty()) {
                    body.pop();
                }
                let body = body.join("\n");
                check_slots(&body).map_err(|reason| CatalogError::Syntax { line, reason })?;
                if templates.insert(name.clone(), body).is_some() {
                    return Err(CatalogError::Syntax {
                        line,
                        reason: format!("duplicate template [{name}]"),
                    });
                }
            }
            Ok(())
        };
        for (idx, line) in text.lines().enumerate() {
            if line.starts_with('#') {
                continue;
            }
            let header = line
                .trim()
                .strip_prefix('[')
                .and_then(|l| l.strip_suffix(']'));
            match header {
                Some(name) if !name.is_empty() && !name.contains(['{', '}']) => {
                    finish(current.take())?;
                    current = Some((name.to_string(), idx + 1, Vec::new()));
                }
                _ => match current.as_mut() {
                    Some((_, _, body)) => body.push(line),
                    None if line.trim().is_empty() => {}
                    None => {
                        return Err(CatalogError::Syntax {
                            line: idx + 1,
                            reason: "text outside of a [template] section".into(),
                        })
                    }
                },
            }
        }
        finish(current)?;
        for style in [Style::Completion, Style::MultipleChoice] {
            if !templates.contains_key(style.template_name()) {
                return Err(CatalogError::Missing(style.template_name().into()));
            }
        }
        Ok(Self { templates })
    }

    pub fn template(&self, name: &str) -> Option<&str> {
        self.templates.get(name).map(String::as_str)
    }

    /// Renders the prompt for `sample`.
    ///
    /// `{candidates}` lists the dictionary candidates of the target, one per
    /// line, as bare pinyin or, with knowledge on, as knowledge lines.
    /// `{knowledge}` holds the knowledge block for completion style with
    /// knowledge on. Multiple-choice style requires the target to be in the
    /// dictionary; completion style degrades to no knowledge otherwise.
    pub fn build_prompt(
        &self,
        sample: &Sample,
        dict: &Dictionary,
        style: PromptStyle,
        limits: KnowledgeLimits,
    ) -> Result<Prompt, PromptError> {
        let marked = mark_target(sample)?;
        let template = self
            .template(style.style.template_name())
            .ok_or_else(|| CatalogError::Missing(style.style.template_name().into()))?;
        let entry = dict.get(sample.target_char);
        if style.style == Style::MultipleChoice && entry.is_none() {
            return Err(UnknownCharacter(sample.target_char).into());
        }

        let candidates = entry
            .map(|e| {
                e.senses
                    .iter()
                    .map(|s| {
                        if style.include_knowledge {
                            sense_line(s, limits)
                        } else {
                            s.pinyin.to_string()
                        }
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            })
            .unwrap_or_default();
        let knowledge = match (style.style, style.include_knowledge, entry) {
            (Style::Completion, true, Some(_)) => knowledge_block(dict, sample.target_char, limits)?,
            _ => String::new(),
        };

        let values = [marked.as_str(), candidates.as_str(), knowledge.as_str()];
        let mut lines = Vec::new();
        let mut shows_candidates = false;
        for line in template.lines() {
            let only_slot = SLOTS
                .iter()
                .zip(values)
                .find(|(slot, _)| line.trim() == format!("{{{slot}}}"));
            if let Some((_, "")) = only_slot {
                continue;
            }
            let mut rendered = line.to_string();
            for (slot, value) in SLOTS.iter().zip(values) {
                let placeholder = format!("{{{slot}}}");
                if rendered.contains(&placeholder) {
                    if *slot != "sentence" && !value.is_empty() {
                        shows_candidates = true;
                    }
                    rendered = rendered.replace(&placeholder, value);
                }
            }
            lines.push(rendered);
        }

        let candidate_order = match (shows_candidates, entry) {
            (true, Some(e)) => e.candidates(),
            _ => Vec::new(),
        };
        Ok(Prompt {
            text: lines.join("\n"),
            style,
            candidate_order,
            marked_sentence: marked,
        })
    }
}

fn check_slots(body: &str) -> Result<(), String> {
    let mut rest = body;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        let end = after
            .find('}')
            .ok_or_else(|| "unterminated `{` placeholder".to_string())?;
        let name = &after[..end];
        if !SLOTS.contains(&name) {
            return Err(format!("unknown slot {{{name}}}"));
        }
        rest = &after[end + 1..];
    }
    match body.matches("{sentence}").count() {
        1 => Ok(()),
        n => Err(format!("template must use {{sentence}} exactly once, found {n}")),
    }
}

/// Renders with the bundled template catalog.
pub fn build_prompt(
    sample: &Sample,
    dict: &Dictionary,
    style: PromptStyle,
    limits: KnowledgeLimits,
) -> Result<Prompt, PromptError> {
    TemplateCatalog::default().build_prompt(sample, dict, style, limits)
}
