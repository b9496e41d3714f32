//! Graph feature extractor: attribute fusion, variable sub-graph convolution,
//! merge into line nodes, and line-graph convolution.

use std::collections::BTreeSet;

use apsg::attributes::layout;
use apsg::{Apsg, NodeCategory};
use tensor_core::rng::{normal, Rng};
use tensor_core::{ParamId, ParamStore, Tape, Tensor, TensorError, Var};

use crate::config::{AttributeMode, NodeDrop};
use crate::vocab::Vocab;

pub const CATEGORY_SLOTS: usize = 4;

/// One graph prepared for the network: token ids that seed each node, the
/// attribute rows and the 0/1 structure matrices, restricted to the kept
/// node categories.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBatch {
    pub line_tokens: Vec<Vec<usize>>,
    pub line_categories: Vec<NodeCategory>,
    pub var_tokens: Vec<Vec<usize>>,
    pub a_l: Tensor,
    pub a_v: Tensor,
    pub m_l: Tensor,
    pub m_v: Tensor,
    pub m_lv: Tensor,
}

fn category_dropped(c: NodeCategory, drops: &BTreeSet<NodeDrop>) -> bool {
    match c {
        NodeCategory::PatchNode => false,
        NodeCategory::ControlNode => drops.contains(&NodeDrop::Control),
        NodeCategory::ContextNode => drops.contains(&NodeDrop::Context),
        NodeCategory::VariableNode => drops.contains(&NodeDrop::Variable),
    }
}

fn submatrix(m: &[Vec<u8>], rows: &[usize], cols: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(rows.len(), cols.len());
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            t.set(i, j, f64::from(m[r][c]));
        }
    }
    t
}

impl GraphBatch {
    pub fn from_apsg(
        apsg: &Apsg,
        vocab: &Vocab,
        attributes: AttributeMode,
        drops: &BTreeSet<NodeDrop>,
    ) -> Self {
        let n_l = apsg.line_count();
        let seeds = apsg.seed_tokens();
        let lines: Vec<usize> = (0..n_l)
            .filter(|&i| !category_dropped(apsg.nodes[i].category, drops))
            .collect();
        let kept_statements: BTreeSet<usize> = lines
            .iter()
            .filter_map(|&i| apsg.nodes[i].statement_index)
            .collect();
        let vars: Vec<usize> = (n_l..apsg.nodes.len())
            .filter(|&i| {
                !drops.contains(&NodeDrop::Variable)
                    && apsg.nodes[i]
                        .statement_index
                        .is_some_and(|s| kept_statements.contains(&s))
            })
            .collect();
        let attr_rows = |ids: &[usize]| {
            let mut t = Tensor::zeros(ids.len(), layout::WIDTH);
            if attributes == AttributeMode::Full {
                for (i, &n) in ids.iter().enumerate() {
                    t.row_slice_mut(i)
                        .copy_from_slice(&apsg.nodes[n].attributes);
                }
            }
            t
        };
        let var_cols: Vec<usize> = vars.iter().map(|v| v - n_l).collect();
        GraphBatch {
            line_tokens: lines.iter().map(|&i| vocab.ids(&seeds[i])).collect(),
            line_categories: lines.iter().map(|&i| apsg.nodes[i].category).collect(),
            var_tokens: vars.iter().map(|&i| vocab.ids(&seeds[i])).collect(),
            a_l: attr_rows(&lines),
            a_v: attr_rows(&vars),
            m_l: submatrix(&apsg.m_l, &lines, &lines),
            m_v: submatrix(&apsg.m_v, &var_cols, &var_cols),
            m_lv: submatrix(&apsg.m_lv, &lines, &var_cols),
        }
    }

    pub fn line_count(&self) -> usize {
        self.line_tokens.len()
    }

    pub fn variable_count(&self) -> usize {
        self.var_tokens.len()
    }
}

/// `D̂^{-1/2} M̂ D̂^{-1/2}` where `M̂` is `max(M, Mᵀ)` with every diagonal entry
/// set to 1 and `D̂` its row sums.
pub fn normalized_adjacency(m: &Tensor) -> Result<Tensor, TensorError> {
    if m.rows != m.cols {
        return Err(TensorError::ShapeMismatch {
            op: "normalized_adjacency",
            left: m.shape(),
            right: m.shape(),
        });
    }
    let n = m.rows;
    let mut hat = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = if i == j {
                1.0
            } else {
                m.get(i, j).max(m.get(j, i))
            };
            hat.set(i, j, v);
        }
    }
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / hat.row_slice(i).iter().sum::<f64>().sqrt())
        .collect();
    for i in 0..n {
        for j in 0..n {
            let v = hat.get(i, j) * inv_sqrt[i] * inv_sqrt[j];
            hat.set(i, j, v);
        }
    }
    Ok(hat)
}

/// `concat(N, A) · W + b`, row-wise.
pub fn fuse_attributes(
    tape: &mut Tape,
    n: Var,
    a: Var,
    w: Var,
    b: Var,
) -> Result<Var, TensorError> {
    let (nr, ar) = (tape.value(n).rows, tape.value(a).rows);
    if nr != ar {
        return Err(TensorError::ShapeMismatch {
            op: "fuse_attributes",
            left: tape.value(n).shape(),
            right: tape.value(a).shape(),
        });
    }
    let x = tape.concat_cols(&[n, a])?;
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

/// `ReLU(Â F W)` for an already normalized adjacency `Â`. Serves both the
/// variable sub-graph and the line graph.
pub fn graph_conv(tape: &mut Tape, adj: Var, f: Var, w: Var) -> Result<Var, TensorError> {
    let mixed = tape.matmul(adj, f)?;
    let y = tape.matmul(mixed, w)?;
    Ok(tape.relu(y))
}

/// `Linear2(concat(F_l, M_lv · H_v))`; without variable nodes the aggregate is
/// a zero block.
pub fn merge_subgraphs(
    tape: &mut Tape,
    f_l: Var,
    h_v: Option<Var>,
    m_lv: &Tensor,
    w: Var,
    b: Var,
) -> Result<Var, TensorError> {
    let (rows, width) = tape.value(f_l).shape();
    if m_lv.rows != rows {
        return Err(TensorError::ShapeMismatch {
            op: "merge_subgraphs",
            left: m_lv.shape(),
            right: (rows, width),
        });
    }
    let agg = match h_v {
        Some(h) if m_lv.cols > 0 => {
            let inc = tape.constant(m_lv.clone());
            tape.matmul(inc, h)?
        }
        _ => tape.constant(Tensor::zeros(rows, width)),
    };
    let x = tape.concat_cols(&[f_l, agg])?;
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GnnParams {
    pub linear1_w: ParamId,
    pub linear1_b: ParamId,
    pub linear2_w: ParamId,
    pub linear2_b: ParamId,
    pub w_v: ParamId,
    pub w_l: ParamId,
    pub hidden: usize,
}

impl GnnParams {
    /// Seeds are `d_embed` token-embedding columns plus the category one-hot.
    /// Linear2 starts as `[I; 0]` with zero bias so lines without sub-graphs
    /// pass through unchanged.
    pub fn new(
        store: &mut ParamStore,
        rng: &mut Rng,
        d_embed: usize,
        hidden: usize,
    ) -> Result<Self, TensorError> {
        let fan_in = d_embed + CATEGORY_SLOTS + layout::WIDTH;
        let mut linear2 = Tensor::zeros(2 * hidden, hidden);
        for i in 0..hidden {
            linear2.set(i, i, 1.0);
        }
        let std_h = 1.0 / (hidden as f64).sqrt();
        Ok(GnnParams {
            linear1_w: store.add(
                "gnn/linear1/w",
                normal(rng, fan_in, hidden, 1.0 / (fan_in as f64).sqrt()),
                true,
            )?,
            linear1_b: store.add("gnn/linear1/b", Tensor::zeros(1, hidden), true)?,
            linear2_w: store.add("gnn/linear2/w", linear2, true)?,
            linear2_b: store.add("gnn/linear2/b", Tensor::zeros(1, hidden), true)?,
            w_v: store.add("gnn/w_v", normal(rng, hidden, hidden, std_h), true)?,
            w_l: store.add("gnn/w_l", normal(rng, hidden, hidden, std_h), true)?,
            hidden,
        })
    }

    pub fn ids(&self) -> [ParamId; 6] {
        [
            self.linear1_w,
            self.linear1_b,
            self.linear2_w,
            self.linear2_b,
            self.w_v,
            self.w_l,
        ]
    }

    /// Seed features: mean token embedding ‖ category one-hot.
    pub fn seeds(
        tape: &mut Tape,
        embed: ParamId,
        tokens: &[Vec<usize>],
        categories: impl Iterator<Item = NodeCategory>,
    ) -> Result<Var, TensorError> {
        let mean = tape.gather_mean(embed, tokens)?;
        let mut onehot = Tensor::zeros(tokens.len(), CATEGORY_SLOTS);
        for (i, c) in categories.take(tokens.len()).enumerate() {
            onehot.set(i, c.slot(), 1.0);
        }
        let onehot = tape.constant(onehot);
        tape.concat_cols(&[mean, onehot])
    }

    /// `F_APSG`: one row per kept line node.
    pub fn forward(
        &self,
        tape: &mut Tape,
        embed: ParamId,
        g: &GraphBatch,
    ) -> Result<Var, TensorError> {
        let w1 = tape.param(self.linear1_w);
        let b1 = tape.param(self.linear1_b);
        let n_l = Self::seeds(
            tape,
            embed,
            &g.line_tokens,
            g.line_categories.iter().copied(),
        )?;
        let a_l = tape.constant(g.a_l.clone());
        let f_l = fuse_attributes(tape, n_l, a_l, w1, b1)?;

        let h_v = if g.variable_count() > 0 {
            let n_v = Self::seeds(
                tape,
                embed,
                &g.var_tokens,
                std::iter::repeat(NodeCategory::VariableNode),
            )?;
            let a_v = tape.constant(g.a_v.clone());
            let f_v = fuse_attributes(tape, n_v, a_v, w1, b1)?;
            let adj_v = tape.constant(normalized_adjacency(&g.m_v)?);
            let w_v = tape.param(self.w_v);
            Some(graph_conv(tape, adj_v, f_v, w_v)?)
        } else {
            None
        };
        let w2 = tape.param(self.linear2_w);
        let b2 = tape.param(self.linear2_b);
        let h_l = merge_subgraphs(tape, f_l, h_v, &g.m_lv, w2, b2)?;
        let adj_l = tape.constant(normalized_adjacency(&g.m_l)?);
        let w_l = tape.param(self.w_l);
        graph_conv(tape, adj_l, h_l, w_l)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn fuse_identity_and_hand_case() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let n = tape.constant(t(&[&[1.0, 2.0], &[3.0, -4.0]]));
        let a = tape.constant(Tensor::zeros(2, 3));
        let w = tape.constant(t(&[
            &[1.0, 0.0],
            &[0.0, 1.0],
            &[0.0, 0.0],
            &[0.0, 0.0],
            &[0.0, 0.0],
        ]));
        let b = tape.constant(Tensor::zeros(1, 2));
        let f = fuse_attributes(&mut tape, n, a, w, b).unwrap();
        assert_eq!(tape.value(f), tape.value(n));

        let n = tape.constant(t(&[&[1.0, 0.0]]));
        let a = tape.constant(t(&[&[2.0]]));
        let w = tape.constant(t(&[&[1.0], &[0.0], &[1.0]]));
        let b = tape.constant(Tensor::zeros(1, 1));
        let f = fuse_attributes(&mut tape, n, a, w, b).unwrap();
        assert_eq!(tape.value(f).item(), 3.0);

        let bad = tape.constant(Tensor::zeros(3, 1));
        assert!(fuse_attributes(&mut tape, n, bad, w, b).is_err());
    }

    #[test]
    fn adjacency_normalization() {
        let single = normalized_adjacency(&Tensor::zeros(1, 1)).unwrap();
        assert_eq!(single.item(), 1.0);
        let pair = normalized_adjacency(&t(&[&[0.0, 1.0], &[0.0, 0.0]])).unwrap();
        for v in &pair.data {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let looped = normalized_adjacency(&t(&[&[1.0]])).unwrap();
        assert_eq!(looped.item(), 1.0);
        assert!(normalized_adjacency(&Tensor::zeros(2, 3)).is_err());
    }

    #[test]
    fn path_graph_middle_row() {
        // 0 → 1 → 2: degrees 2, 3, 2 after self loops.
        let adj = normalized_adjacency(&t(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, 0.0, 0.0]]))
            .unwrap();
        let expected = [1.0 / 6f64.sqrt(), 1.0 / 3.0, 1.0 / 6f64.sqrt()];
        for (j, e) in expected.iter().enumerate() {
            assert!((adj.get(1, j) - e).abs() < 1e-15);
        }
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(adj);
        let h = tape.constant(t(&[&[1.0], &[2.0], &[4.0]]));
        let w = tape.constant(Tensor::identity(1));
        let out = graph_conv(&mut tape, a, h, w).unwrap();
        let mid = (1.0 + 4.0) / 6f64.sqrt() + 2.0 / 3.0;
        assert!((tape.value(out).get(1, 0) - mid).abs() < 1e-14);
    }

    #[test]
    fn conv_singletons_and_relu() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(normalized_adjacency(&Tensor::zeros(1, 1)).unwrap());
        let f = tape.constant(t(&[&[1.5, -2.0]]));
        let w = tape.constant(Tensor::identity(2));
        let h = graph_conv(&mut tape, a, f, w).unwrap();
        assert_eq!(tape.value(h), &t(&[&[1.5, 0.0]]));
        let neg = tape.constant(t(&[&[-1.0, -3.0]]));
        let h = graph_conv(&mut tape, a, neg, w).unwrap();
        assert_eq!(tape.value(h), &Tensor::zeros(1, 2));
    }

    #[test]
    fn merge_cases() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let mut w2 = Tensor::zeros(4, 2);
        w2.set(0, 0, 1.0);
        w2.set(1, 1, 1.0);
        let w_init = tape.constant(w2);
        let b = tape.constant(Tensor::zeros(1, 2));
        let f_l = tape.constant(t(&[&[1.0, -2.0]]));
        let h = merge_subgraphs(&mut tape, f_l, None, &Tensor::zeros(1, 0), w_init, b).unwrap();
        assert_eq!(tape.value(h), tape.value(f_l));

        // Select the aggregate block to read the summed variable rows.
        let mut sel = Tensor::zeros(4, 2);
        sel.set(2, 0, 1.0);
        sel.set(3, 1, 1.0);
        let sel = tape.constant(sel);
        let h_v = tape.constant(t(&[&[1.0, 2.0], &[10.0, 20.0]]));
        let agg = merge_subgraphs(&mut tape, f_l, Some(h_v), &t(&[&[1.0, 1.0]]), sel, b).unwrap();
        assert_eq!(tape.value(agg), &t(&[&[11.0, 22.0]]));
        let none = merge_subgraphs(&mut tape, f_l, Some(h_v), &t(&[&[0.0, 0.0]]), sel, b).unwrap();
        assert_eq!(tape.value(none), &Tensor::zeros(1, 2));
    }
}
