//! Node attributes and their fixed-width numeric encoding.
//!
//! Every node gets a row of [`layout::WIDTH`] values. Each category writes only
//! its own segment; all other slots stay zero. The slot table is mirrored in
//! `docs/attribute_layout.md`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Apsg, NodeCategory};
use crate::lexer::{token_texts, LexError};
use crate::parser::{OperatorClass, Side, Statement, StatementKind, Structure, VariableRole};

pub mod layout {
    pub const SCHEMA_VERSION: u32 = 1;

    // patch node segment
    pub const EDIT_DISTANCE: usize = 0;
    pub const ENTROPY: usize = 1;
    pub const REPAIR_ACTION: usize = 2; // 3 slots
    pub const ANTI_PATTERN: usize = 5; // 4 slots

    // context node segment
    pub const DISTANCE_MAX: usize = 8;
    pub const DISTANCE: usize = 9; // 0..=DISTANCE_MAX plus unreachable: 10 slots
    pub const DISTANCE_UNREACHABLE: usize = DISTANCE + DISTANCE_MAX + 1;
    pub const SPECIAL_STATEMENT: usize = 19; // 4 slots
    pub const OPERATOR: usize = 23; // 4 slots, multi-hot

    // control node segment
    pub const CONTROL_TYPE: usize = 27; // 4 slots
    pub const NESTED: usize = 31;

    // variable node segment
    pub const VARIABLE_TYPE: usize = 32; // 6 slots
    pub const VARIABLE_ROLE: usize = 38; // 9 slots

    pub const WIDTH: usize = 47;

    /// (offset, width) of every one-hot segment.
    pub const ONE_HOT_SEGMENTS: [(usize, usize); 6] = [
        (REPAIR_ACTION, 3),
        (DISTANCE, DISTANCE_MAX + 2),
        (SPECIAL_STATEMENT, 4),
        (CONTROL_TYPE, 4),
        (VARIABLE_TYPE, 6),
        (VARIABLE_ROLE, 9),
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AttributeError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("no patch line has any token")]
    EmptyLine,
    #[error("both buggy and patched sides are empty")]
    BothEmpty,
    #[error("graph has no patch node")]
    NoPatchNode,
    #[error("variable {name:?} does not occur on the {side:?} side of statement {statement}")]
    VariableNotInStatement {
        name: String,
        side: Side,
        statement: usize,
    },
}

fn side_tokens(lines: &[String]) -> Result<Vec<String>, LexError> {
    token_texts(&lines.join("\n"))
}

fn frequencies(tokens: &[String]) -> BTreeMap<&str, i64> {
    let mut m = BTreeMap::new();
    for t in tokens {
        *m.entry(t.as_str()).or_insert(0) += 1;
    }
    m
}

/// L1 distance between the token-frequency vectors of two token streams.
pub fn token_l1_distance(a: &[String], b: &[String]) -> f64 {
    let fa = frequencies(a);
    let fb = frequencies(b);
    let keys: BTreeSet<&str> = fa.keys().chain(fb.keys()).copied().collect();
    keys.into_iter()
        .map(|k| (fa.get(k).unwrap_or(&0) - fb.get(k).unwrap_or(&0)).abs())
        .sum::<i64>() as f64
}

/// Manhattan edit distance between the buggy and patched sides.
pub fn edit_distance(
    buggy_lines: &[String],
    patched_lines: &[String],
) -> Result<f64, AttributeError> {
    Ok(token_l1_distance(
        &side_tokens(buggy_lines)?,
        &side_tokens(patched_lines)?,
    ))
}

/// Laplace-smoothed unigram token model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyModel {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
    pub smoothing: f64,
    /// Ids of the records whose context trained this model.
    pub sources: BTreeSet<String>,
}

impl EntropyModel {
    pub fn new(smoothing: f64) -> Self {
        EntropyModel {
            counts: BTreeMap::new(),
            total: 0,
            smoothing,
            sources: BTreeSet::new(),
        }
    }

    pub fn observe(&mut self, source_id: &str, tokens: impl IntoIterator<Item = String>) {
        self.sources.insert(source_id.to_string());
        for t in tokens {
            *self.counts.entry(t).or_insert(0) += 1;
            self.total += 1;
        }
    }

    /// Fit on the method contexts of the given records.
    pub fn fit<'a>(
        records: impl IntoIterator<Item = &'a crate::ingest::PatchRecord>,
    ) -> Result<Self, LexError> {
        let mut m = EntropyModel::new(1.0);
        for r in records {
            m.observe(&r.id, token_texts(&r.method_context)?);
        }
        Ok(m)
    }

    pub fn vocabulary_size(&self) -> usize {
        self.counts.len()
    }

    fn denominator(&self) -> f64 {
        self.total as f64 + self.smoothing * (self.vocabulary_size() + 1) as f64
    }

    /// Probability of a token; unseen tokens get the UNK mass.
    pub fn probability(&self, token: &str) -> f64 {
        let c = self.counts.get(token).copied().unwrap_or(0) as f64;
        (c + self.smoothing) / self.denominator()
    }

    pub fn unk_probability(&self) -> f64 {
        self.smoothing / self.denominator()
    }

    pub fn surprisal(&self, token: &str) -> f64 {
        -self.probability(token).log2()
    }

    /// Serialize as `count<TAB>token` lines after a header with smoothing and sources.
    pub fn to_text(&self) -> String {
        let mut s = format!("smoothing\t{}\n", self.smoothing);
        s.push_str(&format!(
            "sources\t{}\n",
            self.sources.iter().cloned().collect::<Vec<_>>().join(",")
        ));
        for (t, c) in &self.counts {
            s.push_str(&format!("{c}\t{t}\n"));
        }
        s
    }

    pub fn from_text(text: &str) -> Option<Self> {
        let mut lines = text.lines();
        let smoothing: f64 = lines.next()?.strip_prefix("smoothing\t")?.parse().ok()?;
        let src = lines.next()?.strip_prefix("sources\t")?;
        let mut m = EntropyModel::new(smoothing);
        m.sources = src
            .split(',')
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect();
        for l in lines {
            let (c, t) = l.split_once('\t')?;
            let c: u64 = c.parse().ok()?;
            m.counts.insert(t.to_string(), c);
            m.total += c;
        }
        Some(m)
    }
}

/// Maximum over lines of the mean token surprisal (bits). Lines without tokens
/// are skipped.
pub fn entropy_score(
    line_tokens: &[Vec<String>],
    model: &EntropyModel,
) -> Result<f64, AttributeError> {
    line_tokens
        .iter()
        .filter(|l| !l.is_empty())
        .map(|l| l.iter().map(|t| model.surprisal(t)).sum::<f64>() / l.len() as f64)
        .fold(None, |acc: Option<f64>, x| {
            Some(acc.map_or(x, |a| a.max(x)))
        })
        .ok_or(AttributeError::EmptyLine)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RepairAction {
    Addition,
    Deletion,
    Replacement,
}

pub fn repair_action(
    buggy_lines: &[String],
    patched_lines: &[String],
) -> Result<RepairAction, AttributeError> {
    match (buggy_lines.is_empty(), patched_lines.is_empty()) {
        (true, true) => Err(AttributeError::BothEmpty),
        (true, false) => Ok(RepairAction::Addition),
        (false, true) => Ok(RepairAction::Deletion),
        (false, false) => Ok(RepairAction::Replacement),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct AntiPatterns {
    pub removes_control_statement: bool,
    pub removes_whole_statement_only: bool,
    pub mutates_return_to_constant: bool,
    pub inserts_trivial_guard_return: bool,
}

impl AntiPatterns {
    pub fn bits(&self) -> [bool; 4] {
        [
            self.removes_control_statement,
            self.removes_whole_statement_only,
            self.mutates_return_to_constant,
            self.inserts_trivial_guard_return,
        ]
    }

    pub fn is_empty(&self) -> bool {
        !self.bits().iter().any(|b| *b)
    }
}

const CONTROL_KEYWORDS: &[&str] = &["if", "while", "for", "switch"];

/// Per-line token lists with leading `}` / `else` stripped.
fn line_token_lists(lines: &[String]) -> Result<Vec<Vec<String>>, LexError> {
    lines
        .iter()
        .map(|l| {
            let toks = token_texts(l)?;
            let skip = toks
                .iter()
                .take_while(|t| *t == "}" || *t == "else")
                .count();
            Ok(toks[skip..].to_vec())
        })
        .collect()
}

/// `if ( ... )` header of a line: tokens up to the matching close paren.
fn control_header(tokens: &[String]) -> Option<Vec<String>> {
    let first = tokens.first()?;
    if !CONTROL_KEYWORDS.contains(&first.as_str()) {
        return None;
    }
    let mut depth = 0i32;
    for (i, t) in tokens.iter().enumerate() {
        match t.as_str() {
            "(" => depth += 1,
            ")" => {
                depth -= 1;
                if depth == 0 {
                    return Some(tokens[..=i].to_vec());
                }
            }
            _ => {}
        }
    }
    Some(tokens.to_vec())
}

/// Expression tokens of a `return ...;` line.
fn return_expression(tokens: &[String]) -> Option<&[String]> {
    if tokens.first().map(String::as_str) != Some("return") {
        return None;
    }
    let end = tokens.iter().position(|t| t == ";").unwrap_or(tokens.len());
    Some(&tokens[1..end])
}

fn is_literal_expression(expr: &[String]) -> bool {
    let body = match expr {
        [sign, rest @ ..] if sign == "-" => rest,
        other => other,
    };
    match body {
        [t] => crate::lexer::tokenize(t)
            .ok()
            .and_then(|ts| {
                ts.first()
                    .map(|x| x.kind == crate::lexer::TokenKind::Literal)
            })
            .unwrap_or(false),
        _ => false,
    }
}

/// The four anti-pattern checks.
///
/// 1. some control keyword (`if`, `while`, `for`, `switch`) heads fewer lines on
///    the patched side than on the buggy side;
/// 2. the patch only deletes non-control statements;
/// 3. a non-literal `return` expression becomes a literal;
/// 4. the patched side inserts an `if (...)` whose only body statement is a `return`.
pub fn anti_pattern_flags(
    buggy_lines: &[String],
    patched_lines: &[String],
    apsg: &Apsg,
) -> Result<AntiPatterns, AttributeError> {
    let buggy = line_token_lists(buggy_lines)?;
    let patched = line_token_lists(patched_lines)?;
    let buggy_headers: Vec<Vec<String>> = buggy.iter().filter_map(|l| control_header(l)).collect();
    let patched_headers: Vec<Vec<String>> =
        patched.iter().filter_map(|l| control_header(l)).collect();

    let keyword_count =
        |headers: &[Vec<String>], k: &str| headers.iter().filter(|h| h[0] == k).count();
    let removes_control_statement = CONTROL_KEYWORDS
        .iter()
        .any(|k| keyword_count(&buggy_headers, k) > keyword_count(&patched_headers, k));

    let removes_whole_statement_only = patched_lines.is_empty()
        && buggy.iter().any(|l| {
            l.last().map(String::as_str) == Some(";")
                && !l
                    .first()
                    .is_some_and(|t| CONTROL_KEYWORDS.contains(&t.as_str()))
        });

    let buggy_nonliteral_return = buggy
        .iter()
        .filter_map(|l| return_expression(l))
        .any(|e| !e.is_empty() && !is_literal_expression(e));
    let patched_literal_return = patched
        .iter()
        .filter_map(|l| return_expression(l))
        .any(is_literal_expression);
    let mutates_return_to_constant = buggy_nonliteral_return && patched_literal_return;

    let inserts_trivial_guard_return = apsg.patch_nodes().any(|n| {
        let Some(i) = n.statement_index else {
            return false;
        };
        let s = &apsg.method.statements[i];
        let guard_only_returns = match &s.structure {
            Structure::If {
                then_block,
                else_block: None,
            } => {
                then_block.len() == 1
                    && apsg.method.statements[then_block[0]].kind == StatementKind::Return
            }
            _ => false,
        };
        let header: Vec<String> = s.tokens.iter().map(|t| t.text.clone()).collect();
        guard_only_returns && !buggy_headers.contains(&header)
    });

    Ok(AntiPatterns {
        removes_control_statement,
        removes_whole_statement_only,
        mutates_return_to_constant,
        inserts_trivial_guard_return,
    })
}

/// Shortest undirected hop count from each node to the nearest patch node;
/// −1 when no patch node is reachable.
pub fn distance_to_patch(apsg: &Apsg) -> Result<Vec<i64>, AttributeError> {
    let sources: Vec<usize> = apsg.patch_nodes().map(|n| n.node_id).collect();
    if sources.is_empty() {
        return Err(AttributeError::NoPatchNode);
    }
    let adj = apsg.undirected_neighbors();
    let mut dist = vec![-1i64; apsg.nodes.len()];
    let mut queue = VecDeque::new();
    for s in sources {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] < 0 {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    Ok(dist)
}

/// Role of the first occurrence of `variable` on `side` of the statement.
pub fn variable_role(
    statement: &Statement,
    variable: &str,
    side: Side,
) -> Result<VariableRole, AttributeError> {
    statement
        .occurrences
        .iter()
        .find(|o| o.name == variable && o.side == side)
        .map(|o| o.role)
        .ok_or_else(|| AttributeError::VariableNotInStatement {
            name: variable.to_string(),
            side,
            statement: statement.index,
        })
}

/// Slot of a declared type in the variable-type one-hot.
pub fn variable_type_slot(declared: Option<&str>) -> usize {
    match declared {
        Some("int" | "long" | "short" | "byte" | "Integer" | "Long") => 0,
        Some("float" | "Float") => 1,
        Some("double" | "Double") => 2,
        Some("boolean" | "Boolean") => 3,
        Some("String") => 4,
        _ => 5,
    }
}

fn special_statement_slot(s: &Statement) -> Option<usize> {
    match s.kind {
        StatementKind::Assignment => Some(0),
        StatementKind::Declaration if s.initialized => Some(0),
        StatementKind::TryCatch => Some(1),
        StatementKind::Invocation => Some(2),
        StatementKind::Return => Some(3),
        _ => None,
    }
}

fn control_type_slot(kind: StatementKind) -> Option<usize> {
    match kind {
        StatementKind::If => Some(0),
        StatementKind::Switch => Some(1),
        StatementKind::While => Some(2),
        StatementKind::For => Some(3),
        _ => None,
    }
}

fn operator_slot(op: OperatorClass) -> usize {
    match op {
        OperatorClass::Binary => 0,
        OperatorClass::Unary => 1,
        OperatorClass::Relational => 2,
        OperatorClass::Bitwise => 3,
    }
}

/// Whether some enclosing statement is an if/switch/while/for.
pub fn is_nested_control(apsg: &Apsg, statement: usize) -> bool {
    let mut cur = apsg.method.statements[statement].nesting_parent;
    while let Some(p) = cur {
        if apsg.method.statements[p].kind.is_control() {
            return true;
        }
        cur = apsg.method.statements[p].nesting_parent;
    }
    false
}

/// Patch-level attributes shared by every patch node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSummary {
    pub edit_distance: f64,
    pub entropy: f64,
    pub action: RepairAction,
    pub anti_patterns: AntiPatterns,
}

pub fn summarize_patch(
    apsg: &Apsg,
    model: &EntropyModel,
    buggy_lines: &[String],
    patched_lines: &[String],
) -> Result<PatchSummary, AttributeError> {
    let action = repair_action(buggy_lines, patched_lines)?;
    let patch_lines = if patched_lines.is_empty() {
        buggy_lines
    } else {
        patched_lines
    };
    let per_line: Vec<Vec<String>> = patch_lines
        .iter()
        .map(|l| token_texts(l))
        .collect::<Result<_, _>>()?;
    Ok(PatchSummary {
        edit_distance: edit_distance(buggy_lines, patched_lines)?,
        entropy: entropy_score(&per_line, model)?,
        action,
        anti_patterns: anti_pattern_flags(buggy_lines, patched_lines, apsg)?,
    })
}

/// Compute the attribute matrix (rows in node-id order).
pub fn encode(
    apsg: &Apsg,
    model: &EntropyModel,
    buggy_lines: &[String],
    patched_lines: &[String],
) -> Result<Vec<Vec<f64>>, AttributeError> {
    use layout::*;
    let summary = summarize_patch(apsg, model, buggy_lines, patched_lines)?;
    let dist = distance_to_patch(apsg)?;
    let mut rows = Vec::with_capacity(apsg.nodes.len());
    for n in &apsg.nodes {
        let mut row = vec![0.0; WIDTH];
        match n.category {
            NodeCategory::PatchNode => {
                row[EDIT_DISTANCE] = summary.edit_distance;
                row[ENTROPY] = summary.entropy;
                let a = match summary.action {
                    RepairAction::Addition => 0,
                    RepairAction::Deletion => 1,
                    RepairAction::Replacement => 2,
                };
                row[REPAIR_ACTION + a] = 1.0;
                for (i, b) in summary.anti_patterns.bits().iter().enumerate() {
                    if *b {
                        row[ANTI_PATTERN + i] = 1.0;
                    }
                }
            }
            NodeCategory::ContextNode => {
                let s = &apsg.method.statements[n.statement_index.expect("line node")];
                let d = dist[n.node_id];
                let slot = if d < 0 {
                    DISTANCE_UNREACHABLE
                } else {
                    DISTANCE + (d as usize).min(DISTANCE_MAX)
                };
                row[slot] = 1.0;
                if let Some(k) = special_statement_slot(s) {
                    row[SPECIAL_STATEMENT + k] = 1.0;
                }
                for op in &s.operators {
                    row[OPERATOR + operator_slot(*op)] = 1.0;
                }
            }
            NodeCategory::ControlNode => {
                let i = n.statement_index.expect("line node");
                let s = &apsg.method.statements[i];
                if let Some(k) = control_type_slot(s.kind) {
                    row[CONTROL_TYPE + k] = 1.0;
                }
                if is_nested_control(apsg, i) {
                    row[NESTED] = 1.0;
                }
            }
            NodeCategory::VariableNode => {
                let v = n.variable.as_ref().expect("variable node");
                let s = &apsg.method.statements[n.statement_index.expect("owning statement")];
                row[VARIABLE_TYPE + variable_type_slot(apsg.method.declared_type(&v.name))] = 1.0;
                let role = variable_role(s, &v.name, v.side)?;
                let r = VariableRole::ALL
                    .iter()
                    .position(|x| *x == role)
                    .expect("role listed");
                row[VARIABLE_ROLE + r] = 1.0;
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Write the encoded attributes into the graph's nodes.
pub fn attach(
    apsg: &mut Apsg,
    model: &EntropyModel,
    buggy_lines: &[String],
    patched_lines: &[String],
) -> Result<(), AttributeError> {
    let rows = encode(apsg, model, buggy_lines, patched_lines)?;
    for (n, r) in apsg.nodes.iter_mut().zip(rows) {
        n.attributes = r;
    }
    Ok(())
}
