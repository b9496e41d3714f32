mod support;

use std::collections::BTreeSet;

use apsg::attributes::{self, layout, token_l1_distance, EntropyModel};
use apsg::graph::{assemble, NodeCategory};
use apsg::lexer::TokenKind;
use apsg::parser::{parse_method, MethodAst, Origin, Statement};
use apsg::Apsg;
use proptest::prelude::*;
use support::methodgen::generate;

/// Graph of a generated method with statement `patch` marked as patched.
fn generated_graph(seed: u64) -> Option<Apsg> {
    let m = generate(seed, 8);
    let mut ast = parse_method(&m.source).unwrap();
    let body: Vec<usize> = (1..ast.statements.len()).collect();
    let &pick = body.get(seed as usize % body.len().max(1))?;
    let line = ast.statements[pick].line;
    let region = ast.mark_origin(line..line + 1, Origin::Patched);
    Some(assemble(ast, &region).unwrap())
}

fn graphs() -> Vec<Apsg> {
    (0..200).filter_map(generated_graph).collect()
}

#[test]
fn matrices_reproduce_edge_multiset() {
    for g in graphs() {
        let mut from_m = g.edges_from_matrices();
        let mut edges = g.edges.clone();
        from_m.sort();
        edges.sort();
        assert_eq!(from_m, edges);
        let n = g.line_count();
        assert_eq!(g.m_l.len(), n);
        assert!(g.m_l.iter().all(|r| r.len() == n));
        assert_eq!(g.m_lv.len(), n);
        assert!(g.m_lv.iter().all(|r| r.len() == g.variable_count()));
        for e in &g.edges {
            assert!(e.src < g.nodes.len() && e.dst < g.nodes.len());
        }
    }
}

/// All-pairs shortest paths by Floyd–Warshall on the undirected edge list.
fn floyd_distances(g: &Apsg) -> Vec<i64> {
    let n = g.nodes.len();
    let inf = i64::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for e in &g.edges {
        d[e.src][e.dst] = d[e.src][e.dst].min(1);
        d[e.dst][e.src] = d[e.dst][e.src].min(1);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    let patches: Vec<usize> = g
        .nodes
        .iter()
        .filter(|n| n.category == NodeCategory::PatchNode)
        .map(|n| n.node_id)
        .collect();
    (0..n)
        .map(|i| {
            let best = patches.iter().map(|&p| d[i][p]).min().unwrap();
            if best >= inf {
                -1
            } else {
                best
            }
        })
        .collect()
}

#[test]
fn distance_to_patch_matches_floyd_warshall() {
    let mut saw_unreachable = false;
    for g in graphs() {
        let want = floyd_distances(&g);
        saw_unreachable |= want.contains(&-1);
        assert_eq!(attributes::distance_to_patch(&g).unwrap(), want);
        let unreachable: Vec<usize> = (0..want.len()).filter(|&i| want[i] < 0).collect();
        assert_eq!(g.isolated_nodes(), unreachable);
    }
    assert!(saw_unreachable);
}

/// Identifiers in read position: not a callee, not a type name, not the target
/// of a plain `=`, and not the name introduced by a declaration.
fn rescan_uses(s: &Statement) -> BTreeSet<String> {
    let toks = &s.tokens;
    let mut out = BTreeSet::new();
    for (i, t) in toks.iter().enumerate() {
        if t.kind != TokenKind::Identifier {
            continue;
        }
        let next = toks.get(i + 1);
        let prev = i.checked_sub(1).map(|p| &toks[p]);
        let callee = next.is_some_and(|n| n.text == "(");
        let type_name = next.is_some_and(|n| n.kind == TokenKind::Identifier);
        let assigned = next.is_some_and(|n| n.text == "=");
        let declared = prev.is_some_and(|p| {
            p.kind == TokenKind::Identifier
                || (p.kind == TokenKind::Keyword && is_type_keyword(&p.text))
        });
        if !(callee || type_name || assigned || declared) {
            out.insert(t.text.clone());
        }
    }
    out
}

fn is_type_keyword(k: &str) -> bool {
    matches!(
        k,
        "int" | "long" | "short" | "byte" | "char" | "float" | "double" | "boolean"
    )
}

fn check_uses(ast: &MethodAst) {
    for s in &ast.statements {
        assert_eq!(s.uses, rescan_uses(s), "statement {} `{}`", s.index, s.text);
        let idents: BTreeSet<&str> = s
            .tokens
            .iter()
            .filter(|t| t.kind == TokenKind::Identifier)
            .map(|t| t.text.as_str())
            .collect();
        assert!(s.defs.iter().all(|d| idents.contains(d.as_str())));
        if let Some(p) = s.nesting_parent {
            assert!(p < s.index);
            assert!(ast.statements[p].kind.owns_body());
        }
    }
}

#[test]
fn uses_equal_token_rescan() {
    for seed in 0..200 {
        check_uses(&parse_method(&generate(seed, 8).source).unwrap());
    }
    let src = "int f(int n, String[] ignored) { }";
    assert!(parse_method(src).is_err());
    let src = "String f(int n, String s) {
        int total = 0;
        for (int i = 0; i < n; i++) { total += i * 2; }
        for (String w : items) { append(w, total); }
        switch (n) { case 1: total = -total; break; default: total = total << 1; }
        try { risky(total); } catch (Exception e) { report(e); } finally { close(); }
        while (total > 0 && !done) { total--; }
        return helper.format(s, total);
    }";
    check_uses(&parse_method(src).unwrap());
}

#[test]
fn one_hot_segments_hold_at_most_one_slot() {
    let model = EntropyModel::new(1.0);
    for seed in 0..200 {
        let Some(g) = generated_graph(seed) else {
            continue;
        };
        let patched: Vec<String> = g
            .nodes
            .iter()
            .filter(|n| n.category == NodeCategory::PatchNode)
            .map(|n| g.method.statements[n.statement_index.unwrap()].text.clone())
            .collect();
        let rows = attributes::encode(&g, &model, &["x = 0 ;".to_string()], &patched).unwrap();
        for (node, row) in g.nodes.iter().zip(&rows) {
            assert_eq!(row.len(), layout::WIDTH);
            assert!(row.iter().all(|v| v.is_finite() && *v >= 0.0));
            for (off, w) in layout::ONE_HOT_SEGMENTS {
                let active = row[off..off + w].iter().filter(|v| **v != 0.0).count();
                assert!(active <= 1);
                assert!(row[off..off + w].iter().all(|v| *v == 0.0 || *v == 1.0));
            }
            let seg = |off: usize, w: usize| row[off..off + w].iter().sum::<f64>();
            match node.category {
                NodeCategory::PatchNode => assert_eq!(seg(layout::REPAIR_ACTION, 3), 1.0),
                NodeCategory::ContextNode => {
                    assert_eq!(seg(layout::DISTANCE, layout::DISTANCE_MAX + 2), 1.0)
                }
                NodeCategory::ControlNode => assert_eq!(seg(layout::CONTROL_TYPE, 4), 1.0),
                NodeCategory::VariableNode => {
                    assert_eq!(seg(layout::VARIABLE_TYPE, 6), 1.0);
                    assert_eq!(seg(layout::VARIABLE_ROLE, 9), 1.0);
                }
            }
        }
    }
}

fn token_stream() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(
        prop::sample::select(vec!["x", "y", "=", "+", "1", ";", "(", ")", "if"]),
        0..12,
    )
    .prop_map(|v| v.into_iter().map(String::from).collect())
}

proptest! {
    #[test]
    fn edit_distance_is_a_metric(a in token_stream(), b in token_stream(), c in token_stream()) {
        let d = token_l1_distance;
        prop_assert_eq!(d(&a, &b), d(&b, &a));
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c));
        prop_assert_eq!(d(&a, &a), 0.0);
        let mut sa = a.clone();
        let mut sb = b.clone();
        sa.sort();
        sb.sort();
        prop_assert_eq!(d(&a, &b) == 0.0, sa == sb);
        // same answer through the line-based entry point
        let la = vec![a.join(" ")];
        let lb = vec![b.join(" ")];
        prop_assert_eq!(attributes::edit_distance(&la, &lb).unwrap(), d(&a, &b));
    }

    #[test]
    fn entropy_model_is_normalized(tokens in token_stream(), alpha in 0.1f64..3.0) {
        let mut m = EntropyModel::new(alpha);
        m.observe("r", tokens);
        let total: f64 = m.counts.keys().map(|t| m.probability(t)).sum::<f64>() + m.unk_probability();
        prop_assert!((total - 1.0).abs() < 1e-12);
    }
}
