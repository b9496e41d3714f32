mod support;

use std::collections::BTreeSet;

use apsg::graph::{build_dataflow, statement_successors};
use apsg::parser::parse_method;
use support::methodgen::generate;

#[test]
fn reaching_definitions_match_path_enumeration() {
    for seed in 0..200 {
        let m = generate(seed, 8);
        assert!(m.statement_count() <= 8);
        let ast =
            parse_method(&m.source).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", m.source));
        assert_eq!(
            ast.statements.len(),
            m.statement_count(),
            "seed {seed}\n{}",
            m.source
        );
        for (s, (d, u)) in ast.statements.iter().zip(m.defs.iter().zip(&m.uses)) {
            assert_eq!(&s.defs, d, "seed {seed} defs of {}", s.index);
            assert_eq!(&s.uses, u, "seed {seed} uses of {}", s.index);
        }
        assert_eq!(
            statement_successors(&ast),
            m.successors,
            "seed {seed}\n{}",
            m.source
        );
        let got: BTreeSet<(usize, usize)> = build_dataflow(&ast)
            .iter()
            .map(|e| (e.src, e.dst))
            .collect();
        assert_eq!(got, m.expected_dataflow(), "seed {seed}\n{}", m.source);
    }
}

#[test]
fn generator_covers_loops_and_branches() {
    let sources: Vec<String> = (0..200).map(|s| generate(s, 8).source).collect();
    assert!(sources.iter().any(|s| s.contains("while")));
    assert!(sources.iter().any(|s| s.contains("else")));
    assert!(sources.iter().any(|s| s.contains("return")));
    assert!(sources.iter().any(|s| s.contains("+=")));
    let edges: Vec<BTreeSet<(usize, usize)>> = (0..200)
        .map(|s| generate(s, 8).expected_dataflow())
        .collect();
    assert!(edges.iter().map(BTreeSet::len).sum::<usize>() > 400);
    // a loop-carried self dependence such as `x += 1` inside a while
    assert!(edges.iter().any(|e| e.iter().any(|(a, b)| a == b)));
}
