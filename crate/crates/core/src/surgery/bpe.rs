//! Byte-pair-encoding tokenizer: training, encoding and the JSON model file.
//!
//! Text is pre-tokenised on whitespace. A word becomes a sequence of
//! characters whose last character carries the end-of-word marker (`</w>`),
//! so `"aaab"` starts as `a a a b</w>`. Training repeatedly merges the most
//! frequent adjacent pair, breaking frequency ties by the lexicographically
//! smallest `(left, right)` pair, until the requested number of tokens is
//! reached or no pair occurs more than once.
//!
//! Token ids are dense: special tokens first, then the base alphabet in
//! sorted order, then merge results in merge order.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SurgeryError;

pub const END_OF_WORD: &str = "</w>";
pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

pub fn default_specials() -> Vec<String> {
    [PAD, UNK, BOS, EOS].iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizerModel {
    end_of_word: String,
    specials: Vec<String>,
    alphabet: Vec<String>,
    merges: Vec<(String, String)>,
    /// id → token.
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
    ranks: HashMap<(String, String), usize>,
}

#[derive(Serialize, Deserialize)]
struct TokenizerFile {
    end_of_word: String,
    specials: Vec<String>,
    alphabet: Vec<String>,
    merges: Vec<(String, String)>,
    vocab: std::collections::BTreeMap<String, u32>,
}

/// Splits a token string into its base symbols (characters, the last one
/// carrying the end-of-word marker if the token does).
fn base_symbols(token: &str, eow: &str) -> Vec<String> {
    let (body, terminal) = match token.strip_suffix(eow) {
        Some(body) if !body.is_empty() => (body, true),
        _ => (token, false),
    };
    let mut out: Vec<String> = body.chars().map(String::from).collect();
    if terminal {
        if let Some(last) = out.last_mut() {
            last.push_str(eow);
        }
    }
    out
}

fn word_symbols(word: &str, eow: &str) -> Vec<String> {
    let mut out: Vec<String> = word.chars().map(String::from).collect();
    if let Some(last) = out.last_mut() {
        last.push_str(eow);
    }
    out
}

impl TokenizerModel {
    /// Assembles a model from its parts, checking that every merge is built
    /// from tokens that exist before it.
    pub fn from_parts(
        specials: Vec<String>,
        alphabet: Vec<String>,
        merges: Vec<(String, String)>,
    ) -> Result<Self, SurgeryError> {
        let mut model = Self {
            end_of_word: END_OF_WORD.to_owned(),
            specials: Vec::new(),
            alphabet: Vec::new(),
            merges: Vec::new(),
            tokens: Vec::new(),
            ids: HashMap::new(),
            ranks: HashMap::new(),
        };
        for s in specials {
            model.push_token(s.clone());
            model.specials.push(s);
        }
        if !model.ids.contains_key(UNK) {
            return Err(SurgeryError::Malformed(format!("special tokens must include {UNK}")));
        }
        for a in alphabet {
            model.push_token(a.clone());
            model.alphabet.push(a);
        }
        for (l, r) in merges {
            if !model.ids.contains_key(&l) || !model.ids.contains_key(&r) {
                return Err(SurgeryError::Malformed(format!(
                    "merge ({l:?}, {r:?}) uses a token not defined earlier"
                )));
            }
            model.push_token(format!("{l}{r}"));
            model.ranks.entry((l.clone(), r.clone())).or_insert(model.merges.len());
            model.merges.push((l, r));
        }
        Ok(model)
    }

    fn push_token(&mut self, token: String) {
        if !self.ids.contains_key(&token) {
            self.ids.insert(token.clone(), self.tokens.len() as u32);
            self.tokens.push(token);
        }
    }

    /// Appends tokens with no merge rule behind them (ids after all
    /// existing ones). Returns how many were actually new.
    pub fn add_tokens<'a>(&mut self, tokens: impl IntoIterator<Item = &'a str>) -> usize {
        let before = self.tokens.len();
        for t in tokens {
            self.push_token(t.to_owned());
        }
        self.tokens.len() - before
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    pub fn specials(&self) -> &[String] {
        &self.specials
    }

    pub fn is_special(&self, token: &str) -> bool {
        self.specials.iter().any(|s| s == token)
    }

    pub fn alphabet(&self) -> &[String] {
        &self.alphabet
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn unk_id(&self) -> u32 {
        self.ids[UNK]
    }

    fn apply_merges(&self, mut symbols: Vec<String>) -> Vec<String> {
        loop {
            let best = symbols
                .windows(2)
                .filter_map(|w| self.ranks.get(&(w[0].clone(), w[1].clone())).copied())
                .min();
            let Some(rank) = best else {
                return symbols;
            };
            let (l, r) = &self.merges[rank];
            let mut merged = Vec::with_capacity(symbols.len());
            let mut i = 0;
            while i < symbols.len() {
                if i + 1 < symbols.len() && &symbols[i] == l && &symbols[i + 1] == r {
                    merged.push(format!("{l}{r}"));
                    i += 2;
                } else {
                    merged.push(std::mem::take(&mut symbols[i]));
                    i += 1;
                }
            }
            symbols = merged;
        }
    }

    fn to_ids(&self, symbols: &[String]) -> Vec<u32> {
        let unk = self.unk_id();
        symbols.iter().map(|s| self.id(s).unwrap_or(unk)).collect()
    }

    /// Segments `text` word by word; characters outside the vocabulary map
    /// to the `<unk>` id.
    pub fn encode(&self, text: &str) -> Vec<u32> {
        text.split_whitespace()
            .flat_map(|w| self.to_ids(&self.apply_merges(word_symbols(w, &self.end_of_word))))
            .collect()
    }

    /// Segments a single token string (which may end with the end-of-word
    /// marker) into existing tokens.
    pub fn segment_token(&self, token: &str) -> Vec<u32> {
        if let Some(id) = self.id(token) {
            return vec![id];
        }
        self.to_ids(&self.apply_merges(base_symbols(token, &self.end_of_word)))
    }

    /// Inverse of [`encode`](Self::encode) up to whitespace normalisation.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            let t = self.token(id).unwrap_or(UNK);
            match t.strip_suffix(self.end_of_word.as_str()) {
                Some(body) => {
                    out.push_str(body);
                    out.push(' ');
                }
                None => out.push_str(t),
            }
        }
        if out.ends_with(' ') {
            out.pop();
        }
        out
    }

    pub fn to_json(&self) -> String {
        let file = TokenizerFile {
            end_of_word: self.end_of_word.clone(),
            specials: self.specials.clone(),
            alphabet: self.alphabet.clone(),
            merges: self.merges.clone(),
            vocab: self.ids.iter().map(|(k, &v)| (k.clone(), v)).collect(),
        };
        serde_json::to_string_pretty(&file).expect("tokenizer serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SurgeryError> {
        let file: TokenizerFile = serde_json::from_str(text)?;
        if file.end_of_word != END_OF_WORD {
            return Err(SurgeryError::Malformed(format!(
                "unsupported end-of-word marker {:?}",
                file.end_of_word
            )));
        }
        let mut model = Self::from_parts(file.specials, file.alphabet, file.merges)?;
        if let Some((t, id)) = file.vocab.iter().find(|(t, id)| model.id(t).is_some_and(|m| m != **id)) {
            return Err(SurgeryError::Malformed(format!("token {t:?} has id {id}, merges imply another")));
        }
        // Tokens beyond the merge-derived ones were added without merges.
        let mut extra: Vec<(u32, String)> = file
            .vocab
            .into_iter()
            .filter(|(t, _)| !model.contains(t))
            .map(|(t, id)| (id, t))
            .collect();
        extra.sort();
        for (id, t) in extra {
            if id as usize != model.tokens.len() {
                return Err(SurgeryError::Malformed(format!("token {t:?} has non-dense id {id}")));
            }
            model.push_token(t);
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), SurgeryError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, SurgeryError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Trains a BPE model with `vocab_size` non-special tokens (alphabet plus
/// merges).
pub fn train_bpe<'a>(
    corpus: impl IntoIterator<Item = &'a str>,
    vocab_size: usize,
) -> Result<TokenizerModel, SurgeryError> {
    let mut word_counts: HashMap<&str, u64> = HashMap::new();
    for line in corpus {
        for w in line.split_whitespace() {
            *word_counts.entry(w).or_default() += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(SurgeryError::EmptyCorpus);
    }
    // Deterministic word order.
    let mut words: Vec<(&str, u64)> = word_counts.into_iter().collect();
    words.sort_unstable();

    let mut symbols: Vec<String> = Vec::new();
    let mut symbol_ids: HashMap<String, u32> = HashMap::new();
    let mut intern = |s: String, symbols: &mut Vec<String>| -> u32 {
        *symbol_ids.entry(s.clone()).or_insert_with(|| {
            symbols.push(s);
            symbols.len() as u32 - 1
        })
    };
    let mut seqs: Vec<(Vec<u32>, u64)> = words
        .iter()
        .map(|(w, c)| {
            let ids = word_symbols(w, END_OF_WORD)
                .into_iter()
                .map(|s| intern(s, &mut symbols))
                .collect();
            (ids, *c)
        })
        .collect();
    let alphabet: BTreeSet<String> = symbols.iter().cloned().collect();
    if vocab_size < alphabet.len() {
        return Err(SurgeryError::VocabTooSmall {
            requested: vocab_size,
            alphabet: alphabet.len(),
        });
    }

    let mut vocab: BTreeSet<String> = alphabet.clone();
    let mut merges: Vec<(String, String)> = Vec::new();
    while vocab.len() < vocab_size {
        let mut counts: HashMap<(u32, u32), u64> = HashMap::new();
        for (seq, c) in &seqs {
            for w in seq.windows(2) {
                *counts.entry((w[0], w[1])).or_default() += c;
            }
        }
        let best = counts
            .into_iter()
            .filter(|&(_, c)| c >= 2)
            .max_by(|a, b| {
                a.1.cmp(&b.1).then_with(|| {
                    let ka = (&symbols[a.0 .0 as usize], &symbols[a.0 .1 as usize]);
                    let kb = (&symbols[b.0 .0 as usize], &symbols[b.0 .1 as usize]);
                    kb.cmp(&ka)
                })
            });
        let Some(((l, r), _)) = best else {
            break;
        };
        let merged = format!("{}{}", symbols[l as usize], symbols[r as usize]);
        merges.push((symbols[l as usize].clone(), symbols[r as usize].clone()));
        vocab.insert(merged.clone());
        let new_id = intern(merged, &mut symbols);
        for (seq, _) in &mut seqs {
            if seq.len() < 2 {
                continue;
            }
            let mut out = Vec::with_capacity(seq.len());
            let mut i = 0;
            while i < seq.len() {
                if i + 1 < seq.len() && seq[i] == l && seq[i + 1] == r {
                    out.push(new_id);
                    i += 2;
                } else {
                    out.push(seq[i]);
                    i += 1;
                }
            }
            *seq = out;
        }
    }
    TokenizerModel::from_parts(default_specials(), alphabet.into_iter().collect(), merges)
}
