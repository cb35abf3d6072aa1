use std::fs;
use std::path::Path;

use polyg2p::ablation::{
    format_table, reports_to_jsonl, run_ablation, write_reports, AblationContext, AblationGrid,
    PipelineFactory, RemoteFactory, ToyFactory, REPORTS_FILE,
};
use polyg2p::dataset::{
    dataset_stats, load_cpp, load_cpp_dir, split_dataset, train_subset, DatasetSplit, SplitSource,
};
use polyg2p::dictionary::{
    build_dictionary, load_dictionary, parse_raw_records, save_dictionary, Dictionary,
    KnowledgeLimits,
};
use polyg2p::eval::{evaluate, train_majority, Condition};
use polyg2p::generation::remote::DEFAULT_TIMEOUT;
use polyg2p::generation::{
    checkpoint, Generator, RemoteBackend, ToyGlmConfig, ToyModel, TrainOptions, Vocabulary,
};
use polyg2p::pipeline::Pipeline;
use polyg2p::prompting::{PromptStyle, Sample, TemplateCatalog};

use crate::args::{
    AblateArgs, BackendSpec, BuildDictArgs, DataArgs, EvaluateArgs, PredictArgs, PromptArgs,
    StatsArgs, ToyArgs, TrainToyArgs,
};
use crate::error::CliError;

const RESPLIT_RATIOS: [u32; 3] = [8, 1, 1];

fn require_exists(path: &Path, what: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Data(format!("{what} {} does not exist", path.display())))
    }
}

fn load_split(data: &DataArgs) -> Result<(DatasetSplit, SplitSource), CliError> {
    require_exists(&data.data, "dataset")?;
    if data.data.is_dir() {
        let split = load_cpp_dir(&data.data)?.ok_or_else(|| {
            CliError::Data(format!(
                "{} holds no train and test split files (.tsv or .sent/.lb)",
                data.data.display()
            ))
        })?;
        Ok((split, SplitSource::Published))
    } else {
        let samples = load_cpp(&data.data)?;
        Ok((
            split_dataset(&samples, RESPLIT_RATIOS, data.seed),
            SplitSource::Resplit {
                ratios: RESPLIT_RATIOS,
                seed: data.seed,
            },
        ))
    }
}

fn load_catalog(path: Option<&Path>) -> Result<TemplateCatalog, CliError> {
    match path {
        Some(p) => {
            require_exists(p, "template catalog")?;
            Ok(TemplateCatalog::load(p)?)
        }
        None => Ok(TemplateCatalog::default()),
    }
}

fn load_dict(path: &Path) -> Result<Dictionary, CliError> {
    require_exists(path, "dictionary")?;
    Ok(load_dictionary(path)?)
}

fn limits(max_definitions: usize, max_phrases: usize) -> KnowledgeLimits {
    KnowledgeLimits {
        max_definitions,
        max_phrases,
    }
}

fn prompt_style(p: &PromptArgs) -> PromptStyle {
    PromptStyle::new(p.style.into(), p.knowledge.into())
}

fn toy_config(t: &ToyArgs, seed: u64) -> ToyGlmConfig {
    ToyGlmConfig {
        n_layers: t.layers,
        d_model: t.d_model,
        n_heads: t.heads,
        d_ff: t.d_ff,
        prefix_len: t.prefix_len,
        max_seq_len: t.max_seq_len,
        seed,
        ..ToyGlmConfig::new(0)
    }
}

fn train_options(t: &ToyArgs, seed: u64, max_new_tokens: usize) -> TrainOptions {
    TrainOptions {
        backbone_frozen: t.frozen,
        lr: t.lr,
        batch_size: t.batch_size,
        epochs: t.epochs,
        weight_decay: t.weight_decay,
        seed,
        max_new_tokens,
        ..TrainOptions::default()
    }
}

fn remote(url: Option<&str>) -> Result<RemoteBackend, CliError> {
    Ok(match url {
        Some(u) => RemoteBackend::new(u, DEFAULT_TIMEOUT)?,
        None => RemoteBackend::from_env(DEFAULT_TIMEOUT)?,
    })
}

fn generator(spec: &BackendSpec) -> Result<Box<dyn Generator>, CliError> {
    match spec {
        BackendSpec::Toy(Some(path)) => {
            require_exists(path, "checkpoint")?;
            Ok(Box::new(checkpoint::load(path)?))
        }
        BackendSpec::Toy(None) => Err(CliError::Usage(
            "the toy backend needs a checkpoint here: --backend toy:<path>".into(),
        )),
        BackendSpec::Remote(url) => Ok(Box::new(remote(url.as_deref())?)),
        BackendSpec::Majority => Err(CliError::Usage(
            "the majority baseline only applies to `evaluate`".into(),
        )),
    }
}

pub fn build_dict(args: &BuildDictArgs) -> Result<(), CliError> {
    require_exists(&args.raw, "raw record file")?;
    let text = fs::read_to_string(&args.raw)?;
    let records = parse_raw_records(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.raw.display())))?;
    let dict = build_dictionary(records, args.provenance.clone());
    save_dictionary(&dict, &args.out)?;
    if dict.entry_count() == 0 {
        eprintln!("warning: no polyphonic entries in {}", args.raw.display());
    }
    println!("entries: {}", dict.entry_count());
    for (candidates, n) in dict.candidate_histogram() {
        println!("{candidates} candidates: {n}");
    }
    Ok(())
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let sample = match args.index {
        Some(i) => Sample::new(args.sentence.clone(), i, None)?,
        None => Sample::from_marked(&args.sentence, None)?,
    };
    let spec = match &args.backend {
        Some(s) => s.clone(),
        None => BackendSpec::Remote(None),
    };
    let mut pipeline = Pipeline::new(load_dict(&args.prompt.dict)?, prompt_style(&args.prompt), generator(&spec)?);
    pipeline.catalog = load_catalog(args.prompt.templates.as_deref())?;
    pipeline.limits = limits(args.prompt.max_definitions, args.prompt.max_phrases);
    pipeline.max_new_tokens = args.max_new_tokens;
    let out = pipeline.predict(&sample)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&out)?);
    } else if out.outcome.was_valid {
        println!("{}\tvalid", out.outcome.final_pinyin);
    } else {
        println!("{}\tcorrected from {:?}", out.outcome.final_pinyin, out.generated);
    }
    Ok(())
}

pub fn train_toy(args: &TrainToyArgs) -> Result<(), CliError> {
    let dict = load_dict(&args.prompt.dict)?;
    let catalog = load_catalog(args.prompt.templates.as_deref())?;
    let (split, _) = load_split(&args.data)?;
    if !(args.ratio > 0.0 && args.ratio <= 1.0) {
        return Err(CliError::Usage(format!("--ratio {} is outside (0, 1]", args.ratio)));
    }
    let train = train_subset(&split.train, args.ratio, args.data.seed);
    let style = prompt_style(&args.prompt);
    let limits = limits(args.prompt.max_definitions, args.prompt.max_phrases);
    let mut pairs = Vec::new();
    let mut skipped = 0;
    for s in &train {
        match (catalog.build_prompt(s, &dict, style, limits), &s.gold_pinyin) {
            (Ok(p), Some(g)) => pairs.push((p.text, g.to_string())),
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        eprintln!("warning: skipped {skipped} training samples that could not be rendered");
    }
    let mut model = match &args.init {
        Some(path) => {
            require_exists(path, "checkpoint")?;
            checkpoint::load(path)?
        }
        None => {
            let dict_text = dict.to_canonical_string();
            let vocab =
                Vocabulary::build(pairs.iter().map(|(p, _)| p.as_str()).chain([dict_text.as_str()]));
            let longest = pairs.iter().map(|(p, _)| vocab.tokenize(p).len()).max().unwrap_or(0);
            let mut config = toy_config(&args.toy, args.data.seed);
            config.max_seq_len = config.max_seq_len.max(longest + 1 + args.max_new_tokens);
            ToyModel::new(config, vocab)?
        }
    };
    let report = model.fit(&pairs, &train_options(&args.toy, args.data.seed, args.max_new_tokens))?;
    checkpoint::save(&model, &args.out)?;
    println!(
        "trained on {} samples, {} steps, final loss {:.6}",
        pairs.len(),
        report.steps(),
        report.final_loss().unwrap_or(f64::NAN)
    );
    println!("checkpoint: {}", args.out.display());
    Ok(())
}

pub fn evaluate_cmd(args: &EvaluateArgs) -> Result<(), CliError> {
    let (split, source) = load_split(&args.data)?;
    let report = if args.backend == BackendSpec::Majority {
        let model = train_majority(&split.train)?;
        let condition = Condition {
            label: "majority".into(),
            seed: args.data.seed,
            backend: "majority".into(),
            split_source: Some(source),
            ..Condition::default()
        };
        evaluate(&model, &split.test, condition)?
    } else {
        let style = prompt_style(&args.prompt);
        let generator = generator(&args.backend)?;
        let backend = generator.backend_id();
        let mut pipeline = Pipeline::new(load_dict(&args.prompt.dict)?, style, generator);
        pipeline.catalog = load_catalog(args.prompt.templates.as_deref())?;
        pipeline.limits = limits(args.prompt.max_definitions, args.prompt.max_phrases);
        pipeline.max_new_tokens = args.max_new_tokens;
        let condition = Condition {
            label: style.label(),
            style: Some(style.style),
            knowledge: Some(style.include_knowledge),
            train_ratio: None,
            seed: args.data.seed,
            backend,
            split_source: Some(source),
        };
        evaluate(&pipeline, &split.test, condition)?
    };
    fs::create_dir_all(&args.out)?;
    let reports = [report];
    fs::write(args.out.join(REPORTS_FILE), reports_to_jsonl(&reports))?;
    let r = &reports[0];
    println!(
        "{}: accuracy {:.4} ({}/{}), invalid generations {:.4}",
        r.condition.label, r.accuracy, r.n_correct, r.n_samples, r.invalid_generation_rate
    );
    Ok(())
}

pub fn ablate(args: &AblateArgs) -> Result<(), CliError> {
    let dict = load_dict(&args.dict)?;
    let catalog = load_catalog(args.templates.as_deref())?;
    let (split, source) = load_split(&args.data)?;
    let grid = AblationGrid {
        styles: args.style.iter().map(|&s| s.into()).collect(),
        knowledge: args.knowledge.iter().map(|&k| k.into()).collect(),
        ratios: args.ratio.clone(),
    };
    let seed = args.data.seed;
    let opts = train_options(&args.toy, seed, args.max_new_tokens);
    let mut factory: Box<dyn PipelineFactory> = match &args.backend {
        BackendSpec::Toy(None) => Box::new(ToyFactory::new(toy_config(&args.toy, seed), opts)),
        BackendSpec::Toy(Some(path)) => {
            require_exists(path, "checkpoint")?;
            Box::new(ToyFactory::from_checkpoint(path, opts)?)
        }
        BackendSpec::Remote(url) => Box::new(RemoteFactory {
            backend: remote(url.as_deref())?,
        }),
        BackendSpec::Majority => {
            return Err(CliError::Usage(
                "ablate needs a generative backend: toy, toy:<path> or remote".into(),
            ))
        }
    };
    let mut ctx = AblationContext::new(&dict, &catalog);
    ctx.limits = limits(args.max_definitions, args.max_phrases);
    ctx.max_new_tokens = args.max_new_tokens;
    let reports = run_ablation(&grid, &split, &source, &ctx, factory.as_mut(), seed)?;
    write_reports(&reports, &args.out)?;
    print!("{}", format_table(&reports));
    Ok(())
}

pub fn stats(args: &StatsArgs) -> Result<(), CliError> {
    require_exists(&args.data, "dataset")?;
    let samples: Vec<Sample> = if args.data.is_dir() {
        let split = load_cpp_dir(&args.data)?.ok_or_else(|| {
            CliError::Data(format!("{} holds no train and test split files", args.data.display()))
        })?;
        split.train.into_iter().chain(split.dev).chain(split.test).collect()
    } else {
        load_cpp(&args.data)?
    };
    println!("{}", serde_json::to_string_pretty(&dataset_stats(&samples))?);
    Ok(())
}
