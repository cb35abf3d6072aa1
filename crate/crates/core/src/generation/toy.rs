use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{
    argmax, forward_hidden, sample_from_logits, ModelParams, ToyGlmConfig,
};
use super::positions::{encode_positions, TokenRole};
use super::tokenizer::{Vocabulary, BOS, EOS, MASK};
use super::train::{train, TrainOptions, TrainReport, TrainingExample};
use super::{GenerationError, GenerationRequest, Generator};

/// Vocabulary, configuration and weights of a toy infilling model.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub config: ToyGlmConfig,
    pub vocab: Vocabulary,
    pub params: ModelParams,
}

impl ToyModel {
    /// Fresh model; `config.vocab_size` is overwritten to match `vocab`.
    pub fn new(mut config: ToyGlmConfig, vocab: Vocabulary) -> Result<Self, GenerationError> {
        config.vocab_size = vocab.len();
        let params = ModelParams::init(&config)?;
        Ok(Self {
            config,
            vocab,
            params,
        })
    }

    pub fn example(&self, prompt: &str, answer: &str) -> TrainingExample {
        TrainingExample {
            prompt_ids: self.vocab.tokenize(prompt),
            answer_ids: self.vocab.tokenize(answer),
        }
    }

    /// Trains on `(prompt, answer)` text pairs.
    pub fn fit<P: AsRef<str>, A: AsRef<str>>(
        &mut self,
        pairs: &[(P, A)],
        opts: &TrainOptions,
    ) -> Result<TrainReport, GenerationError> {
        let data: Vec<TrainingExample> = pairs
            .iter()
            .map(|(p, a)| self.example(p.as_ref(), a.as_ref()))
            .collect();
        train(&mut self.params, &self.config, &data, opts)
    }

    /// Infills the span after `prompt [MASK]` token by token.
    pub fn generate_ids(
        &self,
        prompt: &str,
        max_new_tokens: usize,
        greedy: bool,
    ) -> Result<Vec<usize>, GenerationError> {
        if max_new_tokens == 0 {
            return Err(GenerationError::Config("max_new_tokens must be at least 1".into()));
        }
        let mut context = self.vocab.tokenize(prompt);
        context.push(MASK);
        let context_len = context.len();
        if context_len + max_new_tokens > self.config.max_seq_len {
            return Err(GenerationError::SequenceTooLong {
                len: context_len + max_new_tokens,
                max: self.config.max_seq_len,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ fnv1a(prompt.as_bytes()));
        let mut answer_inputs = vec![BOS];
        let mut generated = Vec::new();
        for _ in 0..max_new_tokens {
            let ids: Vec<usize> = context.iter().chain(&answer_inputs).copied().collect();
            let positions = encode_positions(context_len, context_len - 1, answer_inputs.len())?;
            let roles: Vec<TokenRole> = (0..context_len)
                .map(|_| TokenRole::Context)
                .chain((0..answer_inputs.len()).map(TokenRole::Answer))
                .collect();
            let (hidden, _) = forward_hidden(&self.params, &self.config, &ids, &positions, &roles)?;
            let last = hidden.row(ids.len() - 1);
            let logits = last.dot(&self.params.output_head) + &self.params.output_bias;
            let next = if greedy {
                argmax(logits.view())
            } else {
                sample_from_logits(logits.view(), &mut rng)
            };
            if next == EOS {
                break;
            }
            generated.push(next);
            answer_inputs.push(next);
        }
        Ok(generated)
    }
}

impl Generator for ToyModel {
    fn backend_id(&self) -> String {
        let c = &self.config;
        format!(
            "toy(layers={},d={},heads={},ff={},prefix={},vocab={},seed={})",
            c.n_layers, c.d_model, c.n_heads, c.d_ff, c.prefix_len, c.vocab_size, c.seed
        )
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        let ids = self.generate_ids(&request.prompt_text, request.max_new_tokens, request.greedy)?;
        Ok(self.vocab.detokenize(&ids))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}
