//! Random structured methods with an independently computed reaching-definition
//! answer, used as an oracle for the graph builder.
//!
//! The generator keeps its own statement tree, derives control-flow successors
//! from that tree, and enumerates simple paths to decide which definitions reach
//! which uses. Nothing here calls into the crate under test.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

const PARAMS: [&str; 2] = ["p", "q"];
const LOCALS: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Clone)]
enum Node {
    Assign {
        target: &'static str,
        uses: Vec<&'static str>,
        compound: bool,
    },
    Call {
        uses: Vec<&'static str>,
    },
    Return {
        uses: Vec<&'static str>,
    },
    If {
        uses: [&'static str; 2],
        then_block: Vec<Node>,
        else_block: Option<Vec<Node>>,
    },
    While {
        uses: [&'static str; 2],
        body: Vec<Node>,
    },
}

/// Statement tree annotated with statement indices.
enum Numbered {
    Plain(usize),
    Exit(usize),
    If(usize, Vec<Numbered>, Option<Vec<Numbered>>),
    While(usize, Vec<Numbered>),
}

/// A generated method with its expected statement-level facts.
#[derive(Debug, Clone)]
pub struct GeneratedMethod {
    pub source: String,
    pub successors: Vec<BTreeSet<usize>>,
    pub defs: Vec<BTreeSet<String>>,
    pub uses: Vec<BTreeSet<String>>,
}

impl GeneratedMethod {
    pub fn statement_count(&self) -> usize {
        self.defs.len()
    }

    /// `(a, b)` for every variable defined at `a` that reaches a use at `b`,
    /// found by enumerating simple control-flow paths out of `a`.
    pub fn expected_dataflow(&self) -> BTreeSet<(usize, usize)> {
        let mut out = BTreeSet::new();
        for a in 0..self.statement_count() {
            for v in &self.defs[a] {
                let mut on_path = vec![false; self.statement_count()];
                self.explore(a, v, a, &mut on_path, &mut out);
            }
        }
        out
    }

    fn explore(
        &self,
        a: usize,
        v: &str,
        at: usize,
        on_path: &mut [bool],
        out: &mut BTreeSet<(usize, usize)>,
    ) {
        for &b in &self.successors[at] {
            if self.uses[b].contains(v) {
                out.insert((a, b));
            }
            // stop at a redefinition, and keep paths simple
            if self.defs[b].contains(v) || on_path[b] {
                continue;
            }
            on_path[b] = true;
            self.explore(a, v, b, on_path, out);
            on_path[b] = false;
        }
    }
}

struct Gen {
    rng: Xoshiro256PlusPlus,
    budget: usize,
}

impl Gen {
    fn var(&mut self) -> &'static str {
        let i = self.rng.random_range(0..PARAMS.len() + LOCALS.len());
        if i < PARAMS.len() {
            PARAMS[i]
        } else {
            LOCALS[i - PARAMS.len()]
        }
    }

    fn vars(&mut self, max: usize) -> Vec<&'static str> {
        let n = self.rng.random_range(0..=max);
        (0..n).map(|_| self.var()).collect()
    }

    fn block(&mut self, depth: usize) -> Vec<Node> {
        let mut out = Vec::new();
        while self.budget > 0 && (out.is_empty() || self.rng.random_bool(0.75)) {
            self.budget -= 1;
            let node = match self.rng.random_range(0..10) {
                5 | 6 if depth < 2 && self.budget > 0 => {
                    let uses = [self.var(), self.var()];
                    let then_block = self.block(depth + 1);
                    let else_block = if self.budget > 0 && self.rng.random_bool(0.5) {
                        Some(self.block(depth + 1))
                    } else {
                        None
                    };
                    Node::If {
                        uses,
                        then_block,
                        else_block,
                    }
                }
                7 | 8 if depth < 2 && self.budget > 0 => {
                    let uses = [self.var(), self.var()];
                    Node::While {
                        uses,
                        body: self.block(depth + 1),
                    }
                }
                9 => {
                    // a return always closes its block
                    out.push(Node::Return { uses: self.vars(1) });
                    return out;
                }
                4 => Node::Call { uses: self.vars(2) },
                _ => {
                    let target = LOCALS[self.rng.random_range(0..LOCALS.len())];
                    Node::Assign {
                        target,
                        uses: self.vars(2),
                        compound: self.rng.random_bool(0.2),
                    }
                }
            };
            out.push(node);
        }
        out
    }
}

fn expr(uses: &[&str]) -> String {
    if uses.is_empty() {
        "1".to_string()
    } else {
        uses.join(" + ")
    }
}

#[derive(Default)]
struct Emit {
    lines: Vec<String>,
    defs: Vec<BTreeSet<String>>,
    uses: Vec<BTreeSet<String>>,
}

impl Emit {
    fn statement(&mut self, line: String, defs: &[&str], uses: &[&str]) -> usize {
        self.lines.push(line);
        self.defs.push(defs.iter().map(|s| s.to_string()).collect());
        self.uses.push(uses.iter().map(|s| s.to_string()).collect());
        self.defs.len() - 1
    }

    fn block(&mut self, nodes: &[Node]) -> Vec<Numbered> {
        nodes.iter().map(|n| self.node(n)).collect()
    }

    fn node(&mut self, n: &Node) -> Numbered {
        match n {
            Node::Assign {
                target,
                uses,
                compound,
            } => {
                let mut all = uses.clone();
                let op = if *compound {
                    all.push(target);
                    "+="
                } else {
                    "="
                };
                Numbered::Plain(self.statement(
                    format!("{target} {op} {};", expr(uses)),
                    &[target],
                    &all,
                ))
            }
            Node::Call { uses } => {
                Numbered::Plain(self.statement(format!("g({});", uses.join(", ")), &[], uses))
            }
            Node::Return { uses } => {
                Numbered::Exit(self.statement(format!("return {};", expr(uses)), &[], uses))
            }
            Node::If {
                uses,
                then_block,
                else_block,
            } => {
                let id = self.statement(format!("if ({} > {}) {{", uses[0], uses[1]), &[], uses);
                let t = self.block(then_block);
                let e = else_block.as_ref().map(|e| {
                    self.lines.push("} else {".into());
                    self.block(e)
                });
                self.lines.push("}".into());
                Numbered::If(id, t, e)
            }
            Node::While { uses, body } => {
                let id = self.statement(format!("while ({} < {}) {{", uses[0], uses[1]), &[], uses);
                let b = self.block(body);
                self.lines.push("}".into());
                Numbered::While(id, b)
            }
        }
    }
}

fn first(block: &[Numbered]) -> Option<usize> {
    block.first().map(|n| match n {
        Numbered::Plain(i) | Numbered::Exit(i) | Numbered::If(i, ..) | Numbered::While(i, _) => *i,
    })
}

fn entry_or(block: &[Numbered], exit: &BTreeSet<usize>) -> BTreeSet<usize> {
    first(block).map_or_else(|| exit.clone(), |f| BTreeSet::from([f]))
}

fn wire(block: &[Numbered], exit: &BTreeSet<usize>, succ: &mut [BTreeSet<usize>]) {
    for (i, n) in block.iter().enumerate() {
        let next = entry_or(&block[i + 1..], exit);
        match n {
            Numbered::Plain(id) => succ[*id].extend(next),
            Numbered::Exit(_) => {}
            Numbered::If(id, t, e) => {
                succ[*id].extend(entry_or(t, &next));
                wire(t, &next, succ);
                match e {
                    Some(e) => {
                        succ[*id].extend(entry_or(e, &next));
                        wire(e, &next, succ);
                    }
                    None => succ[*id].extend(next),
                }
            }
            Numbered::While(id, b) => {
                let back = BTreeSet::from([*id]);
                succ[*id].extend(entry_or(b, &back));
                succ[*id].extend(next);
                wire(b, &back, succ);
            }
        }
    }
}

/// A method with an entry statement plus at most `max_statements - 1` body
/// statements.
pub fn generate(seed: u64, max_statements: usize) -> GeneratedMethod {
    let mut g = Gen {
        rng: Xoshiro256PlusPlus::seed_from_u64(seed),
        budget: max_statements - 1,
    };
    let body = g.block(0);
    let mut e = Emit::default();
    e.lines
        .push(format!("int m(int {}, int {}) {{", PARAMS[0], PARAMS[1]));
    let entry = e.statement(String::new(), &PARAMS, &[]);
    e.lines.pop();
    let numbered = e.block(&body);
    e.lines.push("}".into());
    let mut successors = vec![BTreeSet::new(); e.defs.len()];
    successors[entry] = entry_or(&numbered, &BTreeSet::new());
    wire(&numbered, &BTreeSet::new(), &mut successors);
    GeneratedMethod {
        source: e.lines.join("\n"),
        successors,
        defs: e.defs,
        uses: e.uses,
    }
}
