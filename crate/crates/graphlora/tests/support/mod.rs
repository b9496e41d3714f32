//! Helpers shared by the integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use apsg::ingest::{load_corpus, PatchRecord};
use apsg::NodeCategory;
use graphlora::gnn::GraphBatch;
use graphlora::{FusionMode, TrainConfig};
use rand::Rng as _;
use tensor_core::rng::{normal, seeded};
use tensor_core::Tensor;

pub mod metric_fixtures;

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn corpus(name: &str) -> Vec<PatchRecord> {
    load_corpus(fixtures().join(name)).expect("bundled corpus loads")
}

/// A small host so tests run quickly.
pub fn small_config(fusion: FusionMode) -> TrainConfig {
    let mut c = TrainConfig::default();
    c.host.vocab_capacity = 64;
    c.host.d_model = 16;
    c.host.heads = 2;
    c.host.ffn_width = 32;
    c.host.max_seq_len = 24;
    c.host.rank = 4;
    c.host.adapter_heads = 2;
    c.host.gnn_hidden = 8;
    c.fusion = fusion;
    c
}

fn random_adjacency(rng: &mut tensor_core::rng::Rng, rows: usize, cols: usize, p: f64) -> Tensor {
    let mut t = Tensor::zeros(rows, cols);
    for v in &mut t.data {
        if rng.random_bool(p) {
            *v = 1.0;
        }
    }
    t
}

/// Random graph with `lines` line nodes and `vars` variable nodes, token ids
/// below `vocab`.
pub fn random_graph(seed: u64, lines: usize, vars: usize, vocab: usize) -> GraphBatch {
    let mut rng = seeded(seed);
    let tokens = |n: usize, rng: &mut tensor_core::rng::Rng| -> Vec<Vec<usize>> {
        (0..n)
            .map(|_| {
                (0..rng.random_range(0..4))
                    .map(|_| rng.random_range(0..vocab))
                    .collect()
            })
            .collect()
    };
    let line_tokens = tokens(lines, &mut rng);
    let var_tokens = tokens(vars, &mut rng);
    let cats = [
        NodeCategory::PatchNode,
        NodeCategory::ControlNode,
        NodeCategory::ContextNode,
    ];
    GraphBatch {
        line_categories: (0..lines)
            .map(|i| {
                if i == 0 {
                    cats[0]
                } else {
                    cats[rng.random_range(0..3)]
                }
            })
            .collect(),
        line_tokens,
        var_tokens,
        a_l: normal(&mut rng, lines, apsg::attributes::layout::WIDTH, 1.0),
        a_v: normal(&mut rng, vars, apsg::attributes::layout::WIDTH, 1.0),
        m_l: random_adjacency(&mut rng, lines, lines, 0.3),
        m_v: random_adjacency(&mut rng, vars, vars, 0.3),
        m_lv: random_adjacency(&mut rng, lines, vars, 0.3),
    }
}

/// Rows of `t` reordered so that row `i` of the result is row `perm[i]` of `t`.
pub fn permute_rows(t: &Tensor, perm: &[usize]) -> Tensor {
    let rows: Vec<Vec<f64>> = perm.iter().map(|&p| t.row_slice(p).to_vec()).collect();
    Tensor::from_rows(&rows).unwrap_or(Tensor::zeros(0, t.cols))
}

/// `P M Qᵀ` for row permutation `p` and column permutation `q`.
pub fn permute_both(t: &Tensor, p: &[usize], q: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(p.len(), q.len());
    for (i, &pi) in p.iter().enumerate() {
        for (j, &qj) in q.iter().enumerate() {
            out.set(i, j, t.get(pi, qj));
        }
    }
    out
}

/// The same graph with line nodes reordered by `p` and variables by `q`.
pub fn permute_graph(g: &GraphBatch, p: &[usize], q: &[usize]) -> GraphBatch {
    GraphBatch {
        line_tokens: p.iter().map(|&i| g.line_tokens[i].clone()).collect(),
        line_categories: p.iter().map(|&i| g.line_categories[i]).collect(),
        var_tokens: q.iter().map(|&i| g.var_tokens[i].clone()).collect(),
        a_l: permute_rows(&g.a_l, p),
        a_v: permute_rows(&g.a_v, q),
        m_l: permute_both(&g.m_l, p, p),
        m_v: permute_both(&g.m_v, q, q),
        m_lv: permute_both(&g.m_lv, p, q),
    }
}

/// A record whose untruncated prompt (without ground truth) is 300 tokens:
/// 17 fixed tokens, a 207-token context-before, the two markers around a
/// 7-token patch, and a 67-token context-after.
pub fn long_record() -> PatchRecord {
    let mut lines = vec!["int f(int a) {".to_string()];
    lines.extend((0..40).map(|i| format!("int v{i} = {i};")));
    lines.push(apsg::ingest::PATCH_MARKER.to_string());
    lines.push("int r = v0 - v1;".to_string());
    lines.push(apsg::ingest::PATCH_MARKER.to_string());
    lines.extend((0..8).map(|i| format!("r = r + v{i};")));
    lines.extend((0..3).map(|_| "r = -r;".to_string()));
    lines.push("return r;".to_string());
    lines.push("}".to_string());
    PatchRecord {
        id: "long".into(),
        project: "fixture".into(),
        buggy_lines: vec!["int r = v0 - v1;".into()],
        patched_lines: vec!["int r = v0 + v1;".into()],
        method_context: lines.join("\n"),
        label: apsg::Label::Correct,
        ground_truth_patch: Some(vec!["int r = v1 + v0;".into()]),
    }
}
