//! Span-infilling training with AdamW and optional backbone freezing.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{sequence_loss, ModelParams, ParamGroup, Sequence, ToyGlmConfig};
use super::positions::{encode_positions, TokenRole};
use super::tokenizer::{BOS, EOS, MASK, PAD};
use super::GenerationError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub prompt_ids: Vec<usize>,
    pub answer_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    /// Train only the prefix keys/values; everything else stays untouched.
    pub backbone_frozen: bool,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Seeds the per-epoch shuffle.
    pub seed: u64,
    /// Longest answer span allowed, counting the end marker.
    pub max_new_tokens: usize,
    /// Stop after this many optimizer steps, if set.
    pub max_steps: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            backbone_frozen: false,
            lr: 1e-2,
            batch_size: 32,
            epochs: 5,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            max_new_tokens: 8,
            max_steps: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-token loss of each optimizer step.
    pub step_losses: Vec<f64>,
    /// Mean per-token loss over each (possibly partial) epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainReport {
    pub fn steps(&self) -> usize {
        self.step_losses.len()
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epoch_losses.last().copied()
    }
}

/// Lays out `prompt [MASK] | [BOS] answer` with targets `answer [EOS]`.
pub fn layout_example(
    example: &TrainingExample,
    cfg: &ToyGlmConfig,
    max_new_tokens: usize,
) -> Result<Sequence, GenerationError> {
    let context_len = example.prompt_ids.len() + 1;
    let span_len = example.answer_ids.len() + 1;
    if span_len > max_new_tokens {
        return Err(GenerationError::AnswerTooLong {
            len: span_len,
            max: max_new_tokens,
        });
    }
    if context_len + span_len > cfg.max_seq_len {
        return Err(GenerationError::SequenceTooLong {
            len: context_len + span_len,
            max: cfg.max_seq_len,
        });
    }
    let positions = encode_positions(context_len, context_len - 1, span_len)?;
    let mut ids = example.prompt_ids.clone();
    ids.push(MASK);
    ids.push(BOS);
    ids.extend(&example.answer_ids);
    let roles = (0..context_len)
        .map(|_| TokenRole::Context)
        .chain((0..span_len).map(TokenRole::Answer))
        .collect();
    let targets = (0..context_len)
        .map(|_| None)
        .chain(example.answer_ids.iter().map(|&id| Some(id)))
        .chain([Some(EOS)])
        .collect();
    Ok(Sequence {
        ids,
        positions: positions.iter().map(|p| (p.pos1, p.pos2)).collect(),
        roles,
        targets,
    })
}

/// Pads every sequence on the right to the longest one in the batch.
pub fn right_pad<'a>(batch: impl IntoIterator<Item = &'a Sequence>) -> Vec<Sequence> {
    let mut out: Vec<Sequence> = batch.into_iter().cloned().collect();
    let max = out.iter().map(|s| s.ids.len()).max().unwrap_or(0);
    for seq in &mut out {
        let missing = max - seq.ids.len();
        seq.ids.extend(std::iter::repeat(PAD).take(missing));
        seq.positions.extend(std::iter::repeat((0, 0)).take(missing));
        seq.roles.extend(std::iter::repeat(TokenRole::Pad).take(missing));
        seq.targets.extend(std::iter::repeat(None).take(missing));
    }
    out
}

/// AdamW with decoupled weight decay.
pub struct AdamW {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: i32,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(params: &ModelParams, opts: &TrainOptions) -> Self {
        let sizes: Vec<usize> = params.tensors().iter().map(|t| t.data.len()).collect();
        Self {
            lr: opts.lr,
            beta1: opts.beta1,
            beta2: opts.beta2,
            eps: opts.eps,
            weight_decay: opts.weight_decay,
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Updates tensors whose group passes `trainable`; others are not touched.
    pub fn step(
        &mut self,
        params: &mut ModelParams,
        grads: &ModelParams,
        trainable: impl Fn(ParamGroup) -> bool,
    ) {
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step);
        let bias2 = 1.0 - self.beta2.powi(self.step);
        let grads = grads.tensors();
        for (k, (p, g)) in params.tensors_mut().into_iter().zip(&grads).enumerate() {
            if !trainable(p.group) {
                continue;
            }
            let decay = if p.decay { self.weight_decay } else { 0.0 };
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let update = (m[i] / bias1) / ((v[i] / bias2).sqrt() + self.eps);
                p.data[i] -= self.lr * (update + decay * p.data[i]);
            }
        }
    }
}

/// Minimizes answer-span cross-entropy over `dataset`.
///
/// Each epoch reshuffles with a seeded generator and walks the data in
/// right-padded batches. Within a batch, gradients are accumulated in a
/// canonical order (sorted by sequence content), so a batch's update does not
/// depend on the order its members arrive in.
pub fn train(
    params: &mut ModelParams,
    cfg: &ToyGlmConfig,
    dataset: &[TrainingExample],
    opts: &TrainOptions,
) -> Result<TrainReport, GenerationError> {
    if dataset.is_empty() {
        return Err(GenerationError::EmptyDataset);
    }
    if opts.batch_size == 0 {
        return Err(GenerationError::Config("batch_size must be at least 1".into()));
    }
    if opts.backbone_frozen && cfg.prefix_len == 0 {
        return Err(GenerationError::Config(
            "backbone is frozen and prefix_len is 0: nothing to train".into(),
        ));
    }
    params.check_shapes(cfg)?;
    let sequences = dataset
        .iter()
        .map(|ex| layout_example(ex, cfg, opts.max_new_tokens))
        .collect::<Result<Vec<_>, _>>()?;

    let trainable = |group: ParamGroup| !opts.backbone_frozen || group == ParamGroup::Prefix;
    let mut optimizer = AdamW::new(params, opts);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut report = TrainReport::default();

    'epochs: for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_tokens) = (0.0, 0usize);
        for chunk in order.chunks(opts.batch_size) {
            if opts.max_steps.is_some_and(|m| report.steps() >= m) {
                if epoch_tokens > 0 {
                    report.epoch_losses.push(epoch_loss / epoch_tokens as f64);
                }
                break 'epochs;
            }
            let mut batch = right_pad(chunk.iter().map(|&i| &sequences[i]));
            batch.sort();
            let n_targets: usize = batch.iter().map(Sequence::n_targets).sum();
            let scale = 1.0 / n_targets as f64;
            let mut grads = ModelParams::zeros(cfg);
            let mut loss = 0.0;
            for seq in &batch {
                loss += sequence_loss(params, cfg, seq, Some((&mut grads, scale)))?;
            }
            optimizer.step(params, &grads, trainable);
            report.step_losses.push(loss * scale);
            epoch_loss += loss;
            epoch_tokens += n_targets;
        }
        report.epoch_losses.push(epoch_loss / epoch_tokens as f64);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::model::NormPlacement;

    fn cfg() -> ToyGlmConfig {
        ToyGlmConfig {
            vocab_size: 12,
            n_layers: 1,
            d_model: 8,
            n_heads: 2,
            d_ff: 8,
            max_seq_len: 16,
            prefix_len: 2,
            seed: 1,
            norm_placement: NormPlacement::Pre,
            init_std: 0.1,
        }
    }

    #[test]
    fn layout_places_mask_bos_and_eos() {
        let ex = TrainingExample {
            prompt_ids: vec![7, 8],
            answer_ids: vec![9, 10],
        };
        let seq = layout_example(&ex, &cfg(), 8).unwrap();
        assert_eq!(seq.ids, vec![7, 8, MASK, BOS, 9, 10]);
        assert_eq!(seq.targets, vec![None, None, None, Some(9), Some(10), Some(EOS)]);
        assert_eq!(seq.positions, vec![(0, 0), (1, 0), (2, 0), (2, 1), (2, 2), (2, 3)]);
        assert!(matches!(
            layout_example(&ex, &cfg(), 2),
            Err(GenerationError::AnswerTooLong { len: 3, max: 2 })
        ));
        let long = TrainingExample {
            prompt_ids: vec![7; 14],
            answer_ids: vec![9],
        };
        assert!(matches!(
            layout_example(&long, &cfg(), 8),
            Err(GenerationError::SequenceTooLong { len: 17, .. })
        ));
    }

    #[test]
    fn right_padding() {
        let a = layout_example(&TrainingExample { prompt_ids: vec![7], answer_ids: vec![9] }, &cfg(), 8).unwrap();
        let b = layout_example(&TrainingExample { prompt_ids: vec![7, 7, 7], answer_ids: vec![9] }, &cfg(), 8).unwrap();
        let padded = right_pad([&a, &b]);
        assert_eq!(padded[0].ids.len(), padded[1].ids.len());
        assert_eq!(&padded[0].ids[a.ids.len()..], &[PAD, PAD]);
        assert_eq!(padded[0].roles.last(), Some(&TokenRole::Pad));
        assert_eq!(padded[1], b);
    }

    #[test]
    fn padding_does_not_change_the_loss() {
        let cfg = cfg();
        let params = ModelParams::init(&cfg).unwrap();
        let a = layout_example(&TrainingExample { prompt_ids: vec![7, 5], answer_ids: vec![9] }, &cfg, 8).unwrap();
        let b = layout_example(&TrainingExample { prompt_ids: vec![7, 7, 7, 6, 5], answer_ids: vec![9] }, &cfg, 8).unwrap();
        let padded = right_pad([&a, &b]);
        let plain = sequence_loss(&params, &cfg, &a, None).unwrap();
        let with_pad = sequence_loss(&params, &cfg, &padded[0], None).unwrap();
        assert!((plain - with_pad).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_and_bad_options() {
        let cfg = cfg();
        let mut params = ModelParams::init(&cfg).unwrap();
        assert!(matches!(
            train(&mut params, &cfg, &[], &TrainOptions::default()),
            Err(GenerationError::EmptyDataset)
        ));
        let data = [TrainingExample { prompt_ids: vec![7], answer_ids: vec![9] }];
        let opts = TrainOptions { batch_size: 0, ..TrainOptions::default() };
        assert!(train(&mut params, &cfg, &data, &opts).is_err());
        let no_prefix = ToyGlmConfig { prefix_len: 0, ..cfg.clone() };
        let mut p0 = ModelParams::init(&no_prefix).unwrap();
        let opts = TrainOptions { backbone_frozen: true, ..TrainOptions::default() };
        assert!(train(&mut p0, &no_prefix, &data, &opts).is_err());
    }

    #[test]
    fn max_steps_caps_training() {
        let cfg = cfg();
        let mut params = ModelParams::init(&cfg).unwrap();
        let data = vec![TrainingExample { prompt_ids: vec![7], answer_ids: vec![9] }; 10];
        let opts = TrainOptions { batch_size: 3, epochs: 100, max_steps: Some(7), ..TrainOptions::default() };
        let report = train(&mut params, &cfg, &data, &opts).unwrap();
        assert_eq!(report.steps(), 7);
        assert_eq!(report.epoch_losses.len(), 2);
    }
}
