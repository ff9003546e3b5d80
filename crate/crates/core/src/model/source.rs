use std::collections::HashMap;

use crate::tokenize::{TokenId, Vocabulary};

/// Extended output ids for one source sequence.
///
/// Ids below the output vocabulary size are ordinary vocabulary entries;
/// each distinct out-of-vocabulary source token gets the next id after
/// that, so copying can emit it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceMap {
    vocab_len: usize,
    positions: Vec<usize>,
    oov: Vec<String>,
}

impl SourceMap {
    pub fn new<S: AsRef<str>>(source: &[S], output_vocab: &Vocabulary) -> Self {
        let vocab_len = output_vocab.len();
        let mut oov: Vec<String> = Vec::new();
        let mut oov_index: HashMap<&str, usize> = HashMap::new();
        let positions = source
            .iter()
            .map(|tok| {
                let tok = tok.as_ref();
                match output_vocab.id(tok) {
                    Some(id) if !id.is_reserved() => id.index(),
                    _ => *oov_index.entry(tok).or_insert_with(|| {
                        oov.push(tok.to_string());
                        vocab_len + oov.len() - 1
                    }),
                }
            })
            .collect();
        SourceMap {
            vocab_len,
            positions,
            oov,
        }
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab_len
    }

    /// Size of the extended output space.
    pub fn extended_len(&self) -> usize {
        self.vocab_len + self.oov.len()
    }

    /// Extended id of every source position.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn oov_tokens(&self) -> &[String] {
        &self.oov
    }

    /// Source positions holding the token with extended id `ext`.
    pub fn positions_of(&self, ext: usize) -> Vec<usize> {
        self.positions
            .iter()
            .enumerate()
            .filter_map(|(i, &p)| (p == ext).then_some(i))
            .collect()
    }

    /// Extended id of an output token: vocabulary id, else a copyable source
    /// id, else UNK.
    pub fn target_id(&self, token: &str, output_vocab: &Vocabulary) -> usize {
        if let Some(id) = output_vocab.id(token).filter(|id| !id.is_reserved()) {
            return id.index();
        }
        self.oov
            .iter()
            .position(|t| t == token)
            .map_or(TokenId::UNK.index(), |k| self.vocab_len + k)
    }

    /// Id to feed back into the decoder embedding; copied OOV tokens map to
    /// UNK.
    pub fn input_id(&self, ext: usize) -> TokenId {
        if ext < self.vocab_len {
            TokenId(ext as u32)
        } else {
            TokenId::UNK
        }
    }

    /// Text of an extended id. Reserved vocabulary ids yield `None` except
    /// UNK.
    pub fn token(&self, ext: usize, output_vocab: &Vocabulary) -> Option<String> {
        if ext < self.vocab_len {
            let id = TokenId(ext as u32);
            if id.is_reserved() && id != TokenId::UNK {
                None
            } else {
                output_vocab.token(id).map(str::to_string)
            }
        } else {
            self.oov.get(ext - self.vocab_len).cloned()
        }
    }
}
