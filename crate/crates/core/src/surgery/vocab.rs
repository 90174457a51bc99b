//! Vocabulary intersection, embedding-table trimming and extension.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::bpe::TokenizerModel;
use super::SurgeryError;
use crate::store::{read_matrix, write_matrix, EmbeddingMatrix};

/// Token-id-indexed embedding rows (`vocab_size × dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    values: Vec<f32>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, values: Vec<f32>) -> Result<Self, SurgeryError> {
        if dim == 0 || values.len() % dim != 0 {
            return Err(SurgeryError::Malformed(format!(
                "{} values do not form rows of width {dim}",
                values.len()
            )));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(SurgeryError::Malformed("non-finite embedding entry".into()));
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn row(&self, id: usize) -> &[f32] {
        &self.values[id * self.dim..(id + 1) * self.dim]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn params(&self) -> u64 {
        self.values.len() as u64
    }

    /// Writes `<path>` in the `EMBS` format plus `<path>.vocab` (one token
    /// per line, line n ↔ row n).
    pub fn save(&self, path: &Path, tokenizer: &TokenizerModel) -> Result<(), SurgeryError> {
        if tokenizer.vocab_size() != self.rows() {
            return Err(SurgeryError::TableSize {
                rows: self.rows(),
                vocab: tokenizer.vocab_size(),
            });
        }
        let m = EmbeddingMatrix::new(self.dim, self.values.clone())?;
        write_matrix(path, &m)?;
        let mut out = BufWriter::new(File::create(vocab_path(path))?);
        for t in tokenizer.tokens() {
            writeln!(out, "{t}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<String>), SurgeryError> {
        let m = read_matrix(path)?;
        let table = Self::new(m.dim(), m.values().to_vec())?;
        let vocab: Vec<String> = match File::open(vocab_path(path)) {
            Ok(f) => BufReader::new(f).lines().collect::<Result<_, _>>()?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        if !vocab.is_empty() && vocab.len() != table.rows() {
            return Err(SurgeryError::TableSize {
                rows: table.rows(),
                vocab: vocab.len(),
            });
        }
        Ok((table, vocab))
    }
}

pub fn vocab_path(table_path: &Path) -> PathBuf {
    let mut s = table_path.as_os_str().to_owned();
    s.push(".vocab");
    PathBuf::from(s)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurgeryReport {
    pub kept: usize,
    pub dropped: usize,
    pub added: usize,
    pub old_vocab: usize,
    pub new_vocab: usize,
    /// Embedding-table parameters (rows × dim) before and after.
    pub old_params: u64,
    pub new_params: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Tokens of `original` that `fresh` also has, plus every special token
/// of `original`, in `original` id order.
pub fn intersect_vocab(original: &TokenizerModel, fresh: &TokenizerModel) -> Vec<String> {
    original
        .tokens()
        .iter()
        .filter(|t| original.is_special(t) || fresh.contains(t))
        .cloned()
        .collect()
}

/// Old id → new id for the rows that survive a reduction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdRemap {
    map: Vec<Option<u32>>,
}

impl IdRemap {
    pub fn get(&self, old: u32) -> Option<u32> {
        self.map.get(old as usize).copied().flatten()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Output of [`reduce_embeddings`].
#[derive(Debug, Clone)]
pub struct Reduction {
    pub table: EmbeddingTable,
    pub tokenizer: TokenizerModel,
    pub remap: IdRemap,
    pub report: SurgeryReport,
}

/// Keeps the rows of `kept` tokens (special tokens are always kept), in
/// original id order, and derives the matching reduced tokenizer: its
/// alphabet and merges are those of `original` whose tokens all survive.
pub fn reduce_embeddings(
    table: &EmbeddingTable,
    original: &TokenizerModel,
    kept: &[String],
) -> Result<Reduction, SurgeryError> {
    if table.rows() != original.vocab_size() {
        return Err(SurgeryError::TableSize {
            rows: table.rows(),
            vocab: original.vocab_size(),
        });
    }
    let mut keep_ids: HashSet<u32> = original.specials().iter().filter_map(|s| original.id(s)).collect();
    for t in kept {
        let id = original.id(t).ok_or_else(|| SurgeryError::UnknownToken(t.clone()))?;
        keep_ids.insert(id);
    }
    let mut order: Vec<u32> = keep_ids.into_iter().collect();
    order.sort_unstable();

    let mut map = vec![None; original.vocab_size()];
    let mut values = Vec::with_capacity(order.len() * table.dim());
    for (new, &old) in order.iter().enumerate() {
        map[old as usize] = Some(new as u32);
        values.extend_from_slice(table.row(old as usize));
    }
    let kept_set: HashSet<&str> = order.iter().map(|&i| original.token(i).unwrap()).collect();
    let alphabet = original
        .alphabet()
        .iter()
        .filter(|a| kept_set.contains(a.as_str()))
        .cloned()
        .collect();
    let mut defined: HashSet<String> = original.specials().iter().cloned().collect();
    defined.extend(original.alphabet().iter().filter(|a| kept_set.contains(a.as_str())).cloned());
    let mut merges = Vec::new();
    for (l, r) in original.merges() {
        let joined = format!("{l}{r}");
        if defined.contains(l) && defined.contains(r) && kept_set.contains(joined.as_str()) {
            merges.push((l.clone(), r.clone()));
            defined.insert(joined);
        }
    }
    let mut tokenizer = TokenizerModel::from_parts(original.specials().to_vec(), alphabet, merges)?;
    // Kept tokens no surviving merge can produce remain as added tokens.
    tokenizer.add_tokens(order.iter().map(|&i| original.token(i).unwrap()));
    // Row order must follow the reduced tokenizer's ids.
    let table = reorder_rows(&EmbeddingTable::new(table.dim(), values)?, &order, original, &tokenizer);
    let map = map
        .into_iter()
        .enumerate()
        .map(|(old, m)| m.and_then(|_| tokenizer.id(original.token(old as u32).unwrap())))
        .collect();

    let report = SurgeryReport {
        kept: order.len(),
        dropped: original.vocab_size() - order.len(),
        added: 0,
        old_vocab: original.vocab_size(),
        new_vocab: order.len(),
        old_params: original.vocab_size() as u64 * table.dim() as u64,
        new_params: table.params(),
        notes: Vec::new(),
    };
    Ok(Reduction {
        table,
        tokenizer,
        remap: IdRemap { map },
        report,
    })
}

/// `selected` holds rows in `order` (old ids ascending); permute them into
/// the id order of `reduced`.
fn reorder_rows(
    selected: &EmbeddingTable,
    order: &[u32],
    original: &TokenizerModel,
    reduced: &TokenizerModel,
) -> EmbeddingTable {
    let dim = selected.dim();
    let mut values = vec![0.0f32; selected.values().len()];
    for (pos, &old) in order.iter().enumerate() {
        let new = reduced.id(original.token(old).unwrap()).unwrap() as usize;
        values[new * dim..(new + 1) * dim].copy_from_slice(selected.row(pos));
    }
    EmbeddingTable { dim, values }
}

/// Output of [`extend_vocab`].
#[derive(Debug, Clone)]
pub struct Extension {
    pub table: EmbeddingTable,
    pub tokenizer: TokenizerModel,
    pub report: SurgeryReport,
}

/// Appends one row per new token, initialised to the mean of the rows of
/// the token's segmentation under `tokenizer`. `<unk>` pieces are left out
/// of the mean; a token that segments to `<unk>` only is rejected. Tokens
/// already in the vocabulary are skipped and noted in the report.
pub fn extend_vocab(
    table: &EmbeddingTable,
    tokenizer: &TokenizerModel,
    new_tokens: &[String],
) -> Result<Extension, SurgeryError> {
    if table.rows() != tokenizer.vocab_size() {
        return Err(SurgeryError::TableSize {
            rows: table.rows(),
            vocab: tokenizer.vocab_size(),
        });
    }
    let dim = table.dim();
    let unk = tokenizer.unk_id();
    let mut values = table.values().to_vec();
    let mut extended = tokenizer.clone();
    let mut notes = Vec::new();
    let mut added = 0;
    for token in new_tokens {
        if extended.contains(token) {
            notes.push(format!("skipped {token:?}: already in vocabulary"));
            continue;
        }
        let pieces: Vec<u32> = tokenizer
            .segment_token(token)
            .into_iter()
            .filter(|&id| id != unk)
            .collect();
        if pieces.is_empty() {
            return Err(SurgeryError::UnknownOnly(token.clone()));
        }
        let mut acc = vec![0.0f64; dim];
        for &p in &pieces {
            for (a, &x) in acc.iter_mut().zip(table.row(p as usize)) {
                *a += f64::from(x);
            }
        }
        let n = pieces.len() as f64;
        values.extend(acc.iter().map(|a| (a / n) as f32));
        extended.add_tokens([token.as_str()]);
        added += 1;
    }
    let table = EmbeddingTable::new(dim, values)?;
    let report = SurgeryReport {
        kept: tokenizer.vocab_size(),
        dropped: 0,
        added,
        old_vocab: tokenizer.vocab_size(),
        new_vocab: extended.vocab_size(),
        old_params: tokenizer.vocab_size() as u64 * dim as u64,
        new_params: table.params(),
        notes,
    };
    Ok(Extension {
        table,
        tokenizer: extended,
        report,
    })
}

/// Tokens of `domain` that `base` lacks, in `domain` id order, excluding
/// special tokens.
pub fn missing_tokens(base: &TokenizerModel, domain: &TokenizerModel) -> Vec<String> {
    domain
        .tokens()
        .iter()
        .filter(|t| !domain.is_special(t) && !base.contains(t))
        .cloned()
        .collect()
}
