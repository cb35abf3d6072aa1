//! Grid runs over prompt style, knowledge and training-data ratio.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{train_subset, DatasetSplit, SplitSource};
use crate::dictionary::{Dictionary, KnowledgeLimits};
use crate::eval::{evaluate, Condition, EvalError, EvalReport};
use crate::generation::{
    checkpoint, GenerationError, Generator, RemoteBackend, ToyGlmConfig, ToyModel, TrainOptions,
    Vocabulary,
};
use crate::pipeline::{Pipeline, DEFAULT_MAX_NEW_TOKENS};
use crate::prompting::{PromptStyle, Style, TemplateCatalog};

pub const REPORTS_FILE: &str = "reports.jsonl";
pub const TABLE_FILE: &str = "table.txt";

#[derive(Debug, Error)]
pub enum AblationError {
    #[error("ablation grid is empty")]
    EmptyGrid,
    #[error("train ratio {0} is outside (0, 1]")]
    BadRatio(f64),
    #[error("no training sample could be rendered for {0}")]
    NothingToTrain(String),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot write reports: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub styles: Vec<Style>,
    pub knowledge: Vec<bool>,
    pub ratios: Vec<f64>,
}

impl Default for AblationGrid {
    /// Both styles, both knowledge settings, ratios 0.6 / 0.8 / 1.0.
    fn default() -> Self {
        Self {
            styles: vec![Style::Completion, Style::MultipleChoice],
            knowledge: vec![false, true],
            ratios: vec![0.6, 0.8, 1.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AblationCondition {
    pub style: PromptStyle,
    pub train_ratio: f64,
}

impl AblationCondition {
    pub fn label(&self) -> String {
        format!("{}/ratio-{:.1}", self.style.label(), self.train_ratio)
    }
}

impl AblationGrid {
    /// Conditions in style, knowledge, ratio order.
    pub fn conditions(&self) -> Vec<AblationCondition> {
        let mut out = Vec::new();
        for &style in &self.styles {
            for &knowledge in &self.knowledge {
                for &train_ratio in &self.ratios {
                    out.push(AblationCondition {
                        style: PromptStyle::new(style, knowledge),
                        train_ratio,
                    });
                }
            }
        }
        out
    }
}

/// Shared inputs every condition is built from.
pub struct AblationContext<'a> {
    pub dictionary: &'a Dictionary,
    pub catalog: &'a TemplateCatalog,
    pub limits: KnowledgeLimits,
    pub max_new_tokens: usize,
}

/// Produces a ready pipeline backend for one condition.
pub trait PipelineFactory {
    fn build(
        &mut self,
        condition: &AblationCondition,
        train: &[crate::prompting::Sample],
        ctx: &AblationContext<'_>,
    ) -> Result<Box<dyn Generator>, AblationError>;
}

/// Trains a fresh toy model per condition, or starts every condition from a
/// checkpoint when one is given.
#[derive(Debug, Clone)]
pub struct ToyFactory {
    pub config: ToyGlmConfig,
    pub train: TrainOptions,
    pub initial: Option<ToyModel>,
}

impl ToyFactory {
    pub fn new(config: ToyGlmConfig, train: TrainOptions) -> Self {
        Self {
            config,
            train,
            initial: None,
        }
    }

    pub fn from_checkpoint(path: impl AsRef<Path>, train: TrainOptions) -> Result<Self, AblationError> {
        let model = checkpoint::load(path)?;
        Ok(Self {
            config: model.config.clone(),
            train,
            initial: Some(model),
        })
    }
}

impl PipelineFactory for ToyFactory {
    fn build(
        &mut self,
        condition: &AblationCondition,
        train: &[crate::prompting::Sample],
        ctx: &AblationContext<'_>,
    ) -> Result<Box<dyn Generator>, AblationError> {
        let pairs: Vec<(String, String)> = train
            .iter()
            .filter_map(|s| {
                let prompt = ctx
                    .catalog
                    .build_prompt(s, ctx.dictionary, condition.style, ctx.limits)
                    .ok()?;
                Some((prompt.text, s.gold_pinyin.as_ref()?.to_string()))
            })
            .collect();
        if pairs.is_empty() {
            return Err(AblationError::NothingToTrain(condition.label()));
        }
        let mut model = match &self.initial {
            Some(m) => m.clone(),
            None => {
                let dict_text = ctx.dictionary.to_canonical_string();
                let vocab = Vocabulary::build(
                    pairs.iter().map(|(p, _)| p.as_str()).chain([dict_text.as_str()]),
                );
                let longest = pairs.iter().map(|(p, _)| vocab.tokenize(p).len()).max().unwrap_or(0);
                let config = ToyGlmConfig {
                    max_seq_len: self.config.max_seq_len.max(longest + 1 + ctx.max_new_tokens),
                    ..self.config.clone()
                };
                ToyModel::new(config, vocab)?
            }
        };
        let opts = TrainOptions {
            max_new_tokens: ctx.max_new_tokens,
            ..self.train.clone()
        };
        model.fit(&pairs, &opts)?;
        Ok(Box::new(model))
    }
}

/// Uses one remote server for every condition; the train subset is unused.
pub struct RemoteFactory {
    pub backend: RemoteBackend,
}

impl PipelineFactory for RemoteFactory {
    fn build(
        &mut self,
        _: &AblationCondition,
        _: &[crate::prompting::Sample],
        _: &AblationContext<'_>,
    ) -> Result<Box<dyn Generator>, AblationError> {
        Ok(Box::new(self.backend.clone()))
    }
}

/// Runs every grid condition sequentially and evaluates on `split.test`.
pub fn run_ablation(
    grid: &AblationGrid,
    split: &DatasetSplit,
    split_source: &SplitSource,
    ctx: &AblationContext<'_>,
    factory: &mut dyn PipelineFactory,
    seed: u64,
) -> Result<Vec<EvalReport>, AblationError> {
    let conditions = grid.conditions();
    if conditions.is_empty() {
        return Err(AblationError::EmptyGrid);
    }
    if let Some(&r) = grid.ratios.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
        return Err(AblationError::BadRatio(r));
    }
    let mut reports = Vec::new();
    for condition in conditions {
        let train = train_subset(&split.train, condition.train_ratio, seed);
        let generator = factory.build(&condition, &train, ctx)?;
        let backend = generator.backend_id();
        let pipeline = Pipeline {
            dictionary: ctx.dictionary.clone(),
            catalog: ctx.catalog.clone(),
            style: condition.style,
            limits: ctx.limits,
            generator,
            max_new_tokens: ctx.max_new_tokens,
        };
        let meta = Condition {
            label: condition.label(),
            style: Some(condition.style.style),
            knowledge: Some(condition.style.include_knowledge),
            train_ratio: Some(condition.train_ratio),
            seed,
            backend,
            split_source: Some(split_source.clone()),
        };
        reports.push(evaluate(&pipeline, &split.test, meta)?);
    }
    Ok(reports)
}

impl<'a> AblationContext<'a> {
    pub fn new(dictionary: &'a Dictionary, catalog: &'a TemplateCatalog) -> Self {
        Self {
            dictionary,
            catalog,
            limits: KnowledgeLimits::default(),
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }
}

/// One JSON object per line.
pub fn reports_to_jsonl(reports: &[EvalReport]) -> String {
    reports
        .iter()
        .map(|r| serde_json::to_string(r).expect("report serializes") + "\n")
        .collect()
}

fn find<'a>(reports: &'a [EvalReport], style: Style, knowledge: bool, ratio: f64) -> Option<&'a EvalReport> {
    reports.iter().find(|r| {
        r.condition.style == Some(style)
            && r.condition.knowledge == Some(knowledge)
            && r.condition.train_ratio == Some(ratio)
    })
}

fn pct(r: Option<&EvalReport>) -> String {
    r.map_or_else(|| "-".into(), |r| format!("{:.2}", 100.0 * r.accuracy))
}

fn invalid_pct(r: Option<&EvalReport>) -> String {
    r.map_or_else(|| "-".into(), |r| format!("{:.2}", 100.0 * r.invalid_generation_rate))
}

/// Aligned text table: every condition, then the style, knowledge and
/// data-ratio comparisons at the reference setting (multiple choice,
/// knowledge on, full training data), where present.
pub fn format_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "All conditions");
    let _ = writeln!(out, "{:<34} {:>8} {:>9} {:>10}", "condition", "samples", "accuracy", "invalid");
    for r in reports {
        let _ = writeln!(
            out,
            "{:<34} {:>8} {:>9} {:>10}",
            r.condition.label,
            r.n_samples,
            pct(Some(r)),
            invalid_pct(Some(r))
        );
    }

    let section = |out: &mut String, title: &str, head: &str, rows: Vec<(String, Option<&EvalReport>)>| {
        if rows.iter().all(|(_, r)| r.is_none()) {
            return;
        }
        let _ = writeln!(out, "\n{title}");
        let _ = writeln!(out, "{:<34} {:>9}", head, "accuracy");
        for (name, r) in rows {
            let _ = writeln!(out, "{:<34} {:>9}", name, pct(r));
        }
    };
    section(
        &mut out,
        "Prompt style (knowledge off, ratio 1.0)",
        "style",
        vec![
            ("Completion style".into(), find(reports, Style::Completion, false, 1.0)),
            ("Multiple-choice style".into(), find(reports, Style::MultipleChoice, false, 1.0)),
        ],
    );
    section(
        &mut out,
        "External knowledge (multiple choice, ratio 1.0)",
        "knowledge",
        vec![
            ("Without external knowledge".into(), find(reports, Style::MultipleChoice, false, 1.0)),
            ("With external knowledge".into(), find(reports, Style::MultipleChoice, true, 1.0)),
        ],
    );
    let mut ratios: Vec<f64> = reports.iter().filter_map(|r| r.condition.train_ratio).collect();
    ratios.sort_by(f64::total_cmp);
    ratios.dedup();
    section(
        &mut out,
        "Training data ratio (multiple choice, knowledge on)",
        "ratio",
        ratios
            .iter()
            .map(|&r| (format!("{:.0}%", 100.0 * r), find(reports, Style::MultipleChoice, true, r)))
            .collect(),
    );
    out
}

/// Writes `reports.jsonl` and `table.txt` into `dir`.
pub fn write_reports(reports: &[EvalReport], dir: impl AsRef<Path>) -> Result<(), AblationError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join(REPORTS_FILE), reports_to_jsonl(reports))?;
    fs::write(dir.join(TABLE_FILE), format_table(reports))?;
    Ok(())
}
