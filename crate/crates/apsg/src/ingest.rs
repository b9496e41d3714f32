//! Patch corpus loading and deterministic k-fold splitting.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Line that delimits the changed region inside `method_context`.
pub const PATCH_MARKER: &str = "//<PATCH>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Correct,
    Overfitting,
}

impl Label {
    /// Overfitting is the positive class.
    pub fn as_target(self) -> usize {
        match self {
            Label::Correct => 0,
            Label::Overfitting => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchRecord {
    pub id: String,
    pub project: String,
    pub buggy_lines: Vec<String>,
    pub patched_lines: Vec<String>,
    pub method_context: String,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_patch: Option<Vec<String>>,
}

/// The method context cut at the two patch markers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSplit<'a> {
    pub before: Vec<&'a str>,
    pub region: Vec<&'a str>,
    pub after: Vec<&'a str>,
}

impl PatchRecord {
    pub fn split_context(&self) -> Result<ContextSplit<'_>, CorpusError> {
        let lines: Vec<&str> = self.method_context.lines().collect();
        let markers: Vec<usize> = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.trim() == PATCH_MARKER)
            .map(|(i, _)| i)
            .collect();
        if markers.len() != 2 {
            return Err(CorpusError::MissingPatchMarker {
                id: self.id.clone(),
                found: markers.len(),
            });
        }
        Ok(ContextSplit {
            before: lines[..markers[0]].to_vec(),
            region: lines[markers[0] + 1..markers[1]].to_vec(),
            after: lines[markers[1] + 1..].to_vec(),
        })
    }

    /// Lines that become patch nodes: the patched side, or the deleted lines for
    /// a pure deletion.
    pub fn patch_side(&self) -> (&[String], bool) {
        if self.patched_lines.is_empty() {
            (&self.buggy_lines, true)
        } else {
            (&self.patched_lines, false)
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed corpus: {0}")]
    MalformedCorpus(String),
    #[error("duplicate patch id {0:?}")]
    DuplicateId(String),
    #[error("unknown label {label:?} on patch {id:?}")]
    UnknownLabel { id: String, label: String },
    #[error("patch {0:?} has neither buggy nor patched lines")]
    EmptyPatch(String),
    #[error(
        "patch {id:?}: expected exactly two `{}` marker lines, found {found}",
        PATCH_MARKER
    )]
    MissingPatchMarker { id: String, found: usize },
    #[error("need at least {k} records for {k} folds, got {n}")]
    TooFewRecords { n: usize, k: usize },
    #[error("fold count must be at least 2, got {0}")]
    InvalidFoldCount(usize),
}

#[derive(Deserialize)]
struct RawCorpus {
    patches: Vec<RawRecord>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    project: String,
    buggy_lines: Vec<String>,
    patched_lines: Vec<String>,
    method_context: String,
    label: String,
    #[serde(default)]
    ground_truth_patch: Option<Vec<String>>,
}

#[derive(Serialize)]
struct CorpusOut<'a> {
    patches: &'a [PatchRecord],
}

pub fn parse_corpus(text: &str) -> Result<Vec<PatchRecord>, CorpusError> {
    let raw: RawCorpus =
        serde_json::from_str(text).map_err(|e| CorpusError::MalformedCorpus(e.to_string()))?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(raw.patches.len());
    for r in raw.patches {
        if !seen.insert(r.id.clone()) {
            return Err(CorpusError::DuplicateId(r.id));
        }
        let label = match r.label.as_str() {
            "correct" => Label::Correct,
            "overfitting" => Label::Overfitting,
            _ => {
                return Err(CorpusError::UnknownLabel {
                    id: r.id,
                    label: r.label,
                })
            }
        };
        if r.buggy_lines.is_empty() && r.patched_lines.is_empty() {
            return Err(CorpusError::EmptyPatch(r.id));
        }
        out.push(PatchRecord {
            id: r.id,
            project: r.project,
            buggy_lines: r.buggy_lines,
            patched_lines: r.patched_lines,
            method_context: r.method_context,
            label,
            ground_truth_patch: r.ground_truth_patch,
        });
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Vec<PatchRecord>, CorpusError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text)
}

pub fn corpus_to_json(records: &[PatchRecord]) -> String {
    serde_json::to_string_pretty(&CorpusOut { patches: records }).expect("corpus serializes")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    /// Record ids outside fold `i`, in corpus order.
    pub fn train_ids<'a>(&self, records: &'a [PatchRecord], i: usize) -> Vec<&'a str> {
        let held: BTreeSet<&str> = self.folds[i].iter().map(String::as_str).collect();
        records
            .iter()
            .map(|r| r.id.as_str())
            .filter(|id| !held.contains(id))
            .collect()
    }
}

/// Shuffle with a seeded xoshiro256++ stream, then deal ids round-robin so fold
/// sizes differ by at most one.
pub fn make_folds(records: &[PatchRecord], k: usize, seed: u64) -> Result<FoldPlan, CorpusError> {
    if k < 2 {
        return Err(CorpusError::InvalidFoldCount(k));
    }
    if records.len() < k {
        return Err(CorpusError::TooFewRecords {
            n: records.len(),
            k,
        });
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (pos, idx) in order.into_iter().enumerate() {
        folds[pos % k].push(records[idx].id.clone());
    }
    Ok(FoldPlan { seed, folds })
}
