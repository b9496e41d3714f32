//! Token vocabulary and prompt assembly.

use std::collections::{BTreeMap, HashMap};

use apsg::lexer::{token_texts, LexError};
use apsg::PatchRecord;
use thiserror::Error;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PATCH_MARK: usize = 2;
pub const BOS: usize = 3;
pub const SPECIALS: [&str; 4] = ["<PAD>", "<UNK>", "<P>", "<BOS>"];

pub const INSTRUCTION: &str =
    "You are a model responsible for assessing patch correctness. Assess whether the patch is correct";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("patch {id}: {source}")]
    Lex { id: String, source: LexError },
    #[error("patch {0}: no patch or context tokens to assess")]
    EmptyPrompt(String),
    #[error("patch {id}: fixed prompt parts need {needed} positions but max_seq_len is {max}")]
    CapacityTooSmall {
        id: String,
        needed: usize,
        max: usize,
    },
    #[error("patch {0}: malformed method context")]
    Context(String),
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("vocabulary line {line}: expected special token {expected:?}")]
    MissingSpecial { line: usize, expected: &'static str },
    #[error("vocabulary token {0:?} appears twice")]
    Duplicate(String),
}

/// Injective token → id map; specials hold ids 0–3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

/// Token texts of every field of a record that can reach a prompt.
fn record_tokens(r: &PatchRecord) -> Result<Vec<String>, LexError> {
    let mut out = token_texts(&r.method_context)?;
    for l in r
        .buggy_lines
        .iter()
        .chain(&r.patched_lines)
        .chain(r.ground_truth_patch.iter().flatten())
    {
        out.extend(token_texts(l)?);
    }
    Ok(out)
}

impl Vocab {
    /// Most frequent tokens first (ties broken lexicographically), up to
    /// `capacity` entries including the specials.
    pub fn build<'a>(
        records: impl IntoIterator<Item = &'a PatchRecord>,
        capacity: usize,
    ) -> Result<Self, LexError> {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in token_texts(INSTRUCTION)? {
            *counts.entry(t).or_default() += 1;
        }
        for r in records {
            for t in record_tokens(r)? {
                *counts.entry(t).or_default() += 1;
            }
        }
        for s in SPECIALS {
            counts.remove(s);
        }
        let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(
            ranked
                .into_iter()
                .map(|(t, _)| t)
                .take(capacity.saturating_sub(SPECIALS.len())),
        );
        Ok(Self::from_tokens(tokens))
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// One token per line, in id order.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, VocabError> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        for (i, expected) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*expected) {
                return Err(VocabError::MissingSpecial {
                    line: i + 1,
                    expected,
                });
            }
        }
        let v = Self::from_tokens(tokens);
        if v.index.len() != v.tokens.len() {
            let mut seen = std::collections::HashSet::new();
            let dup = v
                .tokens
                .iter()
                .find(|t| !seen.insert(*t))
                .expect("duplicate exists");
            return Err(VocabError::Duplicate(dup.clone()));
        }
        Ok(v)
    }
}

/// The prompt pieces before id lookup and truncation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptParts {
    pub instruction: Vec<String>,
    pub ground_truth: Vec<String>,
    pub before: Vec<String>,
    pub patch: Vec<String>,
    pub after: Vec<String>,
}

impl PromptParts {
    pub fn from_record(
        record: &PatchRecord,
        include_ground_truth: bool,
    ) -> Result<Self, PromptError> {
        let lex = |s: &str| {
            token_texts(s).map_err(|source| PromptError::Lex {
                id: record.id.clone(),
                source,
            })
        };
        let lex_lines = |ls: &[&str]| -> Result<Vec<String>, PromptError> {
            let mut out = Vec::new();
            for l in ls {
                out.extend(lex(l)?);
            }
            Ok(out)
        };
        let split = record
            .split_context()
            .map_err(|_| PromptError::Context(record.id.clone()))?;
        let (patch_lines, _) = record.patch_side();
        let patch_refs: Vec<&str> = patch_lines.iter().map(String::as_str).collect();
        let ground_truth = match (&record.ground_truth_patch, include_ground_truth) {
            (Some(gt), true) => lex_lines(&gt.iter().map(String::as_str).collect::<Vec<_>>())?,
            _ => Vec::new(),
        };
        let parts = PromptParts {
            instruction: lex(INSTRUCTION)?,
            ground_truth,
            before: lex_lines(&split.before)?,
            patch: lex_lines(&patch_refs)?,
            after: lex_lines(&split.after)?,
        };
        if parts.before.is_empty() && parts.patch.is_empty() && parts.after.is_empty() {
            return Err(PromptError::EmptyPrompt(record.id.clone()));
        }
        Ok(parts)
    }

    /// Token ids, cut to `max_len`. Context-after is dropped from its tail
    /// first, then context-before from its head, then the patch interior from
    /// its tail, then the ground-truth tokens; BOS, the instruction and both
    /// `<P>` markers always survive.
    pub fn to_ids(
        &self,
        vocab: &Vocab,
        max_len: usize,
        id: &str,
    ) -> Result<Vec<usize>, PromptError> {
        let fixed = 1 + self.instruction.len() + 2;
        if fixed > max_len {
            return Err(PromptError::CapacityTooSmall {
                id: id.into(),
                needed: fixed,
                max: max_len,
            });
        }
        let (mut gt, mut before, mut patch, mut after) = (
            &self.ground_truth[..],
            &self.before[..],
            &self.patch[..],
            &self.after[..],
        );
        let mut excess =
            (fixed + gt.len() + before.len() + patch.len() + after.len()).saturating_sub(max_len);
        let mut cut = |len: usize| {
            let c = excess.min(len);
            excess -= c;
            len - c
        };
        after = &after[..cut(after.len())];
        let keep = cut(before.len());
        before = &before[before.len() - keep..];
        patch = &patch[..cut(patch.len())];
        gt = &gt[..cut(gt.len())];

        let mut ids = Vec::with_capacity(max_len);
        ids.push(BOS);
        ids.extend(vocab.ids(&self.instruction));
        ids.extend(vocab.ids(gt));
        ids.extend(vocab.ids(before));
        ids.push(PATCH_MARK);
        ids.extend(vocab.ids(patch));
        ids.push(PATCH_MARK);
        ids.extend(vocab.ids(after));
        Ok(ids)
    }
}

pub fn build_prompt(
    record: &PatchRecord,
    vocab: &Vocab,
    include_ground_truth: bool,
    max_len: usize,
) -> Result<Vec<usize>, PromptError> {
    PromptParts::from_record(record, include_ground_truth)?.to_ids(vocab, max_len, &record.id)
}
