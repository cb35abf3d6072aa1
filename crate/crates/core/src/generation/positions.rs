//! Two-dimensional position ids and the span attention rule.

use serde::{Deserialize, Serialize};

use super::GenerationError;

/// `pos1` is the position in the input (answer tokens reuse the mask's);
/// `pos2` is the 1-based offset inside the answer span, 0 for context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PositionPair {
    pub pos1: usize,
    pub pos2: usize,
}

pub fn encode_positions(
    context_len: usize,
    mask_index: usize,
    span_len: usize,
) -> Result<Vec<PositionPair>, GenerationError> {
    if mask_index >= context_len {
        return Err(GenerationError::InvalidIndex {
            mask_index,
            context_len,
        });
    }
    if span_len == 0 {
        return Err(GenerationError::Config("answer span must be at least 1 token".into()));
    }
    let context = (0..context_len).map(|i| PositionPair { pos1: i, pos2: 0 });
    let span = (0..span_len).map(|j| PositionPair {
        pos1: mask_index,
        pos2: j + 1,
    });
    Ok(context.chain(span).collect())
}

/// What a token is, for the purposes of attention and loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TokenRole {
    Context,
    /// 0-based offset within the answer span.
    Answer(usize),
    Pad,
}

/// Whether `query` may attend to `key` (prefix slots are always visible).
///
/// Context is bidirectional within itself. Answer tokens see all context and
/// answer tokens up to and including themselves. Padding is never a key.
pub fn may_attend(query: TokenRole, key: TokenRole) -> bool {
    match (query, key) {
        (_, TokenRole::Pad) => false,
        (_, TokenRole::Context) => true,
        (TokenRole::Answer(q), TokenRole::Answer(k)) => k <= q,
        (TokenRole::Context | TokenRole::Pad, TokenRole::Answer(_)) => false,
    }
}
