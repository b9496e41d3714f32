//! Attributed patch semantic graph construction.
//!
//! Line nodes are the method's statements (node id = statement index); variable
//! nodes follow, one per distinct variable on each side of every assignment.
//! Edges come from three builders: control dependence by nesting, reaching
//! definitions over the statement-level control-flow graph, and the per-assignment
//! variable sub-graphs with their merge edges.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::{MethodAst, Origin, Side, StatementKind, Structure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeCategory {
    PatchNode,
    ControlNode,
    ContextNode,
    VariableNode,
}

impl NodeCategory {
    pub const ALL: [NodeCategory; 4] = [
        NodeCategory::PatchNode,
        NodeCategory::ControlNode,
        NodeCategory::ContextNode,
        NodeCategory::VariableNode,
    ];

    pub fn slot(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableRef {
    pub name: String,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApsgNode {
    #[serde(rename = "id")]
    pub node_id: usize,
    pub category: NodeCategory,
    pub statement_index: Option<usize>,
    pub variable: Option<VariableRef>,
    pub attributes: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    ControlFlow,
    DataFlow,
    SubgraphMerge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ApsgEdge {
    pub src: usize,
    pub dst: usize,
    pub kind: EdgeKind,
}

/// Dense 0/1 matrix.
pub type Adjacency = Vec<Vec<u8>>;

fn zeros(rows: usize, cols: usize) -> Adjacency {
    vec![vec![0; cols]; rows]
}

#[derive(Debug, Clone, PartialEq)]
pub struct Apsg {
    pub method: MethodAst,
    pub nodes: Vec<ApsgNode>,
    pub edges: Vec<ApsgEdge>,
    /// Line-node control edges (subset of `m_l`).
    pub line_control: Adjacency,
    /// Line-node data edges (subset of `m_l`).
    pub line_data: Adjacency,
    pub m_l: Adjacency,
    pub m_v: Adjacency,
    /// Lines × variables; 1 where a merge edge runs from the variable into the line.
    pub m_lv: Adjacency,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("method has no statements and no parameters")]
    EmptyGraph,
    #[error("patch region refers to statement {0}, which is not a changed statement")]
    InvalidPatchRegion(usize),
}

/// Statement-level control-flow successors.
///
/// Branches of `if`/`switch` are alternative paths, loops get a back edge to
/// their header, `return`/`throw` leave the method, and every statement inside
/// a `try` body may jump to the try's catch headers.
pub fn statement_successors(method: &MethodAst) -> Vec<BTreeSet<usize>> {
    let mut succ = vec![BTreeSet::new(); method.statements.len()];
    link_block(method, &method.body, &BTreeSet::new(), &[], &mut succ);
    succ
}

fn entry_of(block: &[usize], follow: &BTreeSet<usize>) -> BTreeSet<usize> {
    match block.first() {
        Some(&b) => BTreeSet::from([b]),
        None => follow.clone(),
    }
}

fn link_block(
    m: &MethodAst,
    block: &[usize],
    follow: &BTreeSet<usize>,
    handlers: &[usize],
    succ: &mut Vec<BTreeSet<usize>>,
) {
    for (i, &s) in block.iter().enumerate() {
        let next = match block.get(i + 1) {
            Some(&n) => BTreeSet::from([n]),
            None => follow.clone(),
        };
        link_statement(m, s, &next, handlers, succ);
    }
}

fn link_statement(
    m: &MethodAst,
    s: usize,
    next: &BTreeSet<usize>,
    handlers: &[usize],
    succ: &mut Vec<BTreeSet<usize>>,
) {
    succ[s].extend(handlers.iter().copied());
    match &m.statements[s].structure {
        Structure::Simple => succ[s].extend(next.iter().copied()),
        Structure::Exit => {}
        Structure::If {
            then_block,
            else_block,
        } => {
            let t = entry_of(then_block, next);
            succ[s].extend(t);
            match else_block {
                Some(e) => {
                    let e_entry = entry_of(e, next);
                    succ[s].extend(e_entry);
                    link_block(m, e, next, handlers, succ);
                }
                None => succ[s].extend(next.iter().copied()),
            }
            link_block(m, then_block, next, handlers, succ);
        }
        Structure::Loop { body } => {
            let back = BTreeSet::from([s]);
            succ[s].extend(entry_of(body, &back));
            succ[s].extend(next.iter().copied());
            link_block(m, body, &back, handlers, succ);
        }
        Structure::Switch { arms, has_default } => {
            for arm in arms {
                let a = entry_of(arm, next);
                succ[s].extend(a);
                link_block(m, arm, next, handlers, succ);
            }
            if !has_default || arms.is_empty() {
                succ[s].extend(next.iter().copied());
            }
        }
        Structure::Try {
            body,
            catches,
            finally,
        } => {
            let after = match finally {
                Some(f) => BTreeSet::from([*f]),
                None => next.clone(),
            };
            succ[s].extend(entry_of(body, &after));
            succ[s].extend(catches.iter().copied());
            let mut inner = handlers.to_vec();
            inner.extend(catches.iter().copied());
            link_block(m, body, &after, &inner, succ);
            for &c in catches {
                link_statement(m, c, &after, handlers, succ);
            }
            if let Some(f) = finally {
                link_statement(m, *f, next, handlers, succ);
            }
        }
        Structure::Handler { body } => {
            succ[s].extend(entry_of(body, next));
            link_block(m, body, next, handlers, succ);
        }
    }
}

/// Control edges: header → every statement directly nested under it.
pub fn build_cfg(method: &MethodAst) -> Vec<ApsgEdge> {
    let mut edges: Vec<ApsgEdge> = method
        .statements
        .iter()
        .filter_map(|s| {
            s.nesting_parent.map(|p| ApsgEdge {
                src: p,
                dst: s.index,
                kind: EdgeKind::ControlFlow,
            })
        })
        .collect();
    edges.sort();
    edges
}

/// Reaching definitions, one set of (variable, defining statement) per statement.
pub fn reaching_definitions(method: &MethodAst) -> Vec<BTreeSet<(String, usize)>> {
    let n = method.statements.len();
    let succ = statement_successors(method);
    let mut preds = vec![Vec::new(); n];
    for (a, ss) in succ.iter().enumerate() {
        for &b in ss {
            preds[b].push(a);
        }
    }
    let mut inn: Vec<BTreeSet<(String, usize)>> = vec![BTreeSet::new(); n];
    let mut out: Vec<BTreeSet<(String, usize)>> = vec![BTreeSet::new(); n];
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            let new_in: BTreeSet<(String, usize)> = preds[s]
                .iter()
                .flat_map(|&p| out[p].iter().cloned())
                .collect();
            let defs = &method.statements[s].defs;
            let mut new_out: BTreeSet<(String, usize)> = new_in
                .iter()
                .filter(|(v, _)| !defs.contains(v))
                .cloned()
                .collect();
            new_out.extend(defs.iter().map(|v| (v.clone(), s)));
            if new_in != inn[s] || new_out != out[s] {
                inn[s] = new_in;
                out[s] = new_out;
                changed = true;
            }
        }
    }
    inn
}

/// Data edges between statements: a → b when a definition at `a` reaches a use at `b`.
pub fn build_dataflow(method: &MethodAst) -> Vec<ApsgEdge> {
    let reaching = reaching_definitions(method);
    let mut pairs = BTreeSet::new();
    for (b, defs) in reaching.iter().enumerate() {
        let uses = &method.statements[b].uses;
        for (v, a) in defs {
            if uses.contains(v) {
                pairs.insert((*a, b));
            }
        }
    }
    pairs
        .into_iter()
        .map(|(src, dst)| ApsgEdge {
            src,
            dst,
            kind: EdgeKind::DataFlow,
        })
        .collect()
}

/// Variable nodes of the assignment sub-graphs, before id assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableSubgraphs {
    /// (owning statement, variable) in id order.
    pub nodes: Vec<(usize, VariableRef)>,
    /// Right → left data edges, as indices into `nodes`.
    pub data_edges: Vec<(usize, usize)>,
    /// Left variable → owning statement, as (index into `nodes`, statement).
    pub merge_edges: Vec<(usize, usize)>,
}

pub fn build_variable_subgraphs(method: &MethodAst) -> VariableSubgraphs {
    let mut g = VariableSubgraphs {
        nodes: Vec::new(),
        data_edges: Vec::new(),
        merge_edges: Vec::new(),
    };
    for s in method.statements.iter().filter(|s| s.is_assignment_like()) {
        let rights: Vec<usize> = s
            .side_variables(Side::Right)
            .into_iter()
            .map(|name| {
                g.nodes.push((
                    s.index,
                    VariableRef {
                        name: name.to_string(),
                        side: Side::Right,
                    },
                ));
                g.nodes.len() - 1
            })
            .collect();
        let lefts: Vec<usize> = s
            .side_variables(Side::Left)
            .into_iter()
            .map(|name| {
                g.nodes.push((
                    s.index,
                    VariableRef {
                        name: name.to_string(),
                        side: Side::Left,
                    },
                ));
                g.nodes.len() - 1
            })
            .collect();
        for &l in &lefts {
            for &r in &rights {
                g.data_edges.push((r, l));
            }
            g.merge_edges.push((l, s.index));
        }
    }
    g
}

/// Build the full graph. `patch_region` holds the indices of changed statements.
/// Attribute vectors are left empty; see [`crate::attributes::encode`].
pub fn assemble(method: MethodAst, patch_region: &BTreeSet<usize>) -> Result<Apsg, GraphError> {
    if method.statements.is_empty() {
        return Err(GraphError::EmptyGraph);
    }
    for &i in patch_region {
        match method.statements.get(i) {
            Some(s) if matches!(s.origin, Origin::Buggy | Origin::Patched) => {}
            _ => return Err(GraphError::InvalidPatchRegion(i)),
        }
    }
    let n_lines = method.statements.len();
    let mut nodes: Vec<ApsgNode> = method
        .statements
        .iter()
        .map(|s| {
            let category = if patch_region.contains(&s.index) {
                NodeCategory::PatchNode
            } else if s.kind.is_control() {
                NodeCategory::ControlNode
            } else {
                NodeCategory::ContextNode
            };
            ApsgNode {
                node_id: s.index,
                category,
                statement_index: Some(s.index),
                variable: None,
                attributes: Vec::new(),
            }
        })
        .collect();

    let control = build_cfg(&method);
    let data = build_dataflow(&method);
    let sub = build_variable_subgraphs(&method);
    let n_vars = sub.nodes.len();
    for (i, (stmt, var)) in sub.nodes.iter().enumerate() {
        nodes.push(ApsgNode {
            node_id: n_lines + i,
            category: NodeCategory::VariableNode,
            statement_index: Some(*stmt),
            variable: Some(var.clone()),
            attributes: Vec::new(),
        });
    }

    let mut line_control = zeros(n_lines, n_lines);
    let mut line_data = zeros(n_lines, n_lines);
    let mut m_v = zeros(n_vars, n_vars);
    let mut m_lv = zeros(n_lines, n_vars);
    let mut edges = Vec::with_capacity(
        control.len() + data.len() + sub.data_edges.len() + sub.merge_edges.len(),
    );
    for e in &control {
        line_control[e.src][e.dst] = 1;
        edges.push(*e);
    }
    for e in &data {
        line_data[e.src][e.dst] = 1;
        edges.push(*e);
    }
    for &(r, l) in &sub.data_edges {
        m_v[r][l] = 1;
        edges.push(ApsgEdge {
            src: n_lines + r,
            dst: n_lines + l,
            kind: EdgeKind::DataFlow,
        });
    }
    for &(v, s) in &sub.merge_edges {
        m_lv[s][v] = 1;
        edges.push(ApsgEdge {
            src: n_lines + v,
            dst: s,
            kind: EdgeKind::SubgraphMerge,
        });
    }
    let m_l = line_control
        .iter()
        .zip(&line_data)
        .map(|(c, d)| c.iter().zip(d).map(|(a, b)| a | b).collect())
        .collect();
    Ok(Apsg {
        method,
        nodes,
        edges,
        line_control,
        line_data,
        m_l,
        m_v,
        m_lv,
    })
}

impl Apsg {
    pub fn line_count(&self) -> usize {
        self.method.statements.len()
    }

    pub fn variable_count(&self) -> usize {
        self.nodes.len() - self.line_count()
    }

    pub fn patch_nodes(&self) -> impl Iterator<Item = &ApsgNode> {
        self.nodes
            .iter()
            .filter(|n| n.category == NodeCategory::PatchNode)
    }

    /// Undirected adjacency lists over all edges.
    pub fn undirected_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![BTreeSet::new(); self.nodes.len()];
        for e in &self.edges {
            adj[e.src].insert(e.dst);
            adj[e.dst].insert(e.src);
        }
        adj.into_iter().map(|s| s.into_iter().collect()).collect()
    }

    /// Nodes that cannot be reached, ignoring direction, from any patch node.
    pub fn isolated_nodes(&self) -> Vec<usize> {
        let adj = self.undirected_neighbors();
        let mut seen = vec![false; self.nodes.len()];
        let mut queue: VecDeque<usize> = self.patch_nodes().map(|n| n.node_id).collect();
        for &q in &queue {
            seen[q] = true;
        }
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        (0..self.nodes.len()).filter(|&i| !seen[i]).collect()
    }

    /// Rebuild the typed edge list from the matrices alone.
    pub fn edges_from_matrices(&self) -> Vec<ApsgEdge> {
        let nl = self.line_count();
        let mut out = Vec::new();
        for (i, row) in self.line_control.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if x == 1 {
                    out.push(ApsgEdge {
                        src: i,
                        dst: j,
                        kind: EdgeKind::ControlFlow,
                    });
                }
            }
        }
        for (i, row) in self.line_data.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if x == 1 {
                    out.push(ApsgEdge {
                        src: i,
                        dst: j,
                        kind: EdgeKind::DataFlow,
                    });
                }
            }
        }
        for (i, row) in self.m_v.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                if x == 1 {
                    out.push(ApsgEdge {
                        src: nl + i,
                        dst: nl + j,
                        kind: EdgeKind::DataFlow,
                    });
                }
            }
        }
        for (s, row) in self.m_lv.iter().enumerate() {
            for (v, &x) in row.iter().enumerate() {
                if x == 1 {
                    out.push(ApsgEdge {
                        src: nl + v,
                        dst: s,
                        kind: EdgeKind::SubgraphMerge,
                    });
                }
            }
        }
        out
    }

    /// The attribute matrix, one row per node in id order.
    pub fn attribute_matrix(&self) -> Vec<Vec<f64>> {
        self.nodes.iter().map(|n| n.attributes.clone()).collect()
    }

    /// Token texts seeding each node's feature: statement tokens for line nodes,
    /// the variable name for variable nodes.
    pub fn seed_tokens(&self) -> Vec<Vec<String>> {
        self.nodes
            .iter()
            .map(|n| match (&n.variable, n.statement_index) {
                (Some(v), _) => vec![v.name.clone()],
                (None, Some(i)) => self.method.statements[i]
                    .tokens
                    .iter()
                    .map(|t| t.text.clone())
                    .collect(),
                (None, None) => Vec::new(),
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct GraphJson<'a> {
            nodes: &'a [ApsgNode],
            edges: &'a [ApsgEdge],
        }
        let mut s = serde_json::to_string_pretty(&GraphJson {
            nodes: &self.nodes,
            edges: &self.edges,
        })
        .expect("graph serializes");
        s.push('\n');
        s
    }

    pub fn to_dot(&self, name: &str) -> String {
        let mut out = format!("digraph \"{}\" {{\n", escape_dot(name));
        for n in &self.nodes {
            let (shape, label) = match (&n.variable, n.statement_index) {
                (Some(v), _) => ("circle", format!("{}:{:?}", v.name, v.side)),
                (None, Some(i)) => {
                    let shape = match n.category {
                        NodeCategory::PatchNode => "box",
                        NodeCategory::ControlNode => "diamond",
                        _ => "ellipse",
                    };
                    (shape, format!("{}: {}", i, self.method.statements[i].text))
                }
                (None, None) => ("point", String::new()),
            };
            let extra = if n.category == NodeCategory::PatchNode {
                ", style=filled, fillcolor=\"#ffd7d7\""
            } else {
                ""
            };
            out.push_str(&format!(
                "  n{} [shape={}, label=\"{}\"{}];\n",
                n.node_id,
                shape,
                escape_dot(&label),
                extra
            ));
        }
        for e in &self.edges {
            let style = match e.kind {
                EdgeKind::ControlFlow => "dashed",
                EdgeKind::DataFlow => "solid",
                EdgeKind::SubgraphMerge => "dotted",
            };
            out.push_str(&format!("  n{} -> n{} [style={}];\n", e.src, e.dst, style));
        }
        out.push_str("}\n");
        out
    }

    /// Count of nodes per category, for diagnostics.
    pub fn category_counts(&self) -> BTreeMap<NodeCategory, usize> {
        let mut m = BTreeMap::new();
        for n in &self.nodes {
            *m.entry(n.category).or_insert(0) += 1;
        }
        m
    }

    pub fn statement_kind(&self, node: usize) -> Option<StatementKind> {
        let n = &self.nodes[node];
        match (&n.variable, n.statement_index) {
            (None, Some(i)) => Some(self.method.statements[i].kind),
            _ => None,
        }
    }
}

fn escape_dot(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}
