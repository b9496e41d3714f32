//! Attributed patch semantic graphs.
//!
//! Pipeline: [`ingest`] loads a labeled patch corpus, [`lexer`] and [`parser`]
//! turn the enclosing method into a statement list, [`graph`] builds the typed
//! nodes and edges, and [`attributes`] fills the per-node attribute rows.

pub mod attributes;
pub mod graph;
pub mod ingest;
pub mod lexer;
pub mod parser;

use thiserror::Error;

pub use attributes::EntropyModel;
pub use graph::{Apsg, ApsgEdge, ApsgNode, EdgeKind, NodeCategory};
pub use ingest::{Label, PatchRecord};

use attributes::AttributeError;
use graph::GraphError;
use ingest::CorpusError;
use parser::{Origin, ParseError};

#[derive(Debug, Error)]
pub enum ApsgError {
    #[error("patch {id}: {source}")]
    Corpus { id: String, source: CorpusError },
    #[error("patch {id}: {source}")]
    Parse { id: String, source: ParseError },
    #[error("patch {id}: {source}")]
    Graph { id: String, source: GraphError },
    #[error("patch {id}: {source}")]
    Attribute { id: String, source: AttributeError },
    #[error("patch {0}: no statement starts inside the patch region")]
    NoPatchStatement(String),
}

/// Method source with the patch region replaced by the patched lines (or kept
/// as the deleted lines for a pure deletion), plus the 1-based line range the
/// region occupies.
pub fn patched_source(record: &PatchRecord) -> Result<(String, std::ops::Range<usize>), ApsgError> {
    let split = record.split_context().map_err(|source| ApsgError::Corpus {
        id: record.id.clone(),
        source,
    })?;
    let (lines, _) = record.patch_side();
    let start = split.before.len() + 1;
    let mut text: Vec<&str> = split.before.clone();
    text.extend(lines.iter().map(String::as_str));
    text.extend(split.after.iter().copied());
    Ok((text.join("\n"), start..start + lines.len()))
}

/// Parse the patched method and assemble its graph without attributes.
pub fn build_structure(record: &PatchRecord) -> Result<Apsg, ApsgError> {
    let id = || record.id.clone();
    let (source, region) = patched_source(record)?;
    let mut method =
        parser::parse_method(&source).map_err(|source| ApsgError::Parse { id: id(), source })?;
    let origin = if record.patch_side().1 {
        Origin::Buggy
    } else {
        Origin::Patched
    };
    let marked = method.mark_origin(region, origin);
    if marked.is_empty() {
        return Err(ApsgError::NoPatchStatement(id()));
    }
    graph::assemble(method, &marked).map_err(|source| ApsgError::Graph { id: id(), source })
}

/// Full graph for one record: structure plus attribute rows.
pub fn build_patch_graph(record: &PatchRecord, entropy: &EntropyModel) -> Result<Apsg, ApsgError> {
    let mut g = build_structure(record)?;
    attributes::attach(&mut g, entropy, &record.buggy_lines, &record.patched_lines).map_err(
        |source| ApsgError::Attribute {
            id: record.id.clone(),
            source,
        },
    )?;
    Ok(g)
}
