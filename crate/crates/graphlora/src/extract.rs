//! Graph extraction for a whole corpus.

use std::path::{Path, PathBuf};

use apsg::{build_patch_graph, Apsg, ApsgError, EntropyModel, PatchRecord};

use crate::train::TrainError;

/// Graphs for every record, with the entropy model fitted on the corpus itself.
pub fn extract(records: &[PatchRecord]) -> Result<Vec<Apsg>, TrainError> {
    let entropy = EntropyModel::fit(records)?;
    records
        .iter()
        .map(|r| build_patch_graph(r, &entropy))
        .collect::<Result<_, ApsgError>>()
        .map_err(Into::into)
}

/// Record id made safe for use as a file stem.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// Write `<id>.json` (and `<id>.dot` when asked) per record; returns the
/// written paths in corpus order.
pub fn write_extracted(
    records: &[PatchRecord],
    out: &Path,
    dot: bool,
) -> Result<Vec<PathBuf>, TrainError> {
    let graphs = extract(records)?;
    std::fs::create_dir_all(out).map_err(|source| TrainError::Io {
        path: out.into(),
        source,
    })?;
    let mut written = Vec::new();
    for (r, g) in records.iter().zip(&graphs) {
        let stem = file_stem(&r.id);
        let mut files = vec![(out.join(format!("{stem}.json")), g.to_json())];
        if dot {
            files.push((out.join(format!("{stem}.dot")), g.to_dot(&stem)));
        }
        for (path, text) in files {
            std::fs::write(&path, text).map_err(|source| TrainError::Io {
                path: path.clone(),
                source,
            })?;
            written.push(path);
        }
    }
    Ok(written)
}
