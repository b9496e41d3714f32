//! Recursive-descent parser for a single method in the Java-like subset.
//!
//! The output is a flat, source-ordered statement list. Control statements
//! contribute only their header; body statements point back at the header via
//! `nesting_parent`, and the header keeps the block layout in `structure` so the
//! control-flow graph can be rebuilt without a tree.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexer::{tokenize, LexError, Token, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StatementKind {
    Entry,
    Assignment,
    Declaration,
    If,
    While,
    For,
    Switch,
    TryCatch,
    Invocation,
    Return,
    Other,
}

impl StatementKind {
    /// Statements whose predicate decides whether their body runs.
    pub fn is_control(self) -> bool {
        matches!(
            self,
            StatementKind::If | StatementKind::While | StatementKind::For | StatementKind::Switch
        )
    }

    /// Statements that may own a body (control statements plus try/catch/finally).
    pub fn owns_body(self) -> bool {
        self.is_control() || self == StatementKind::TryCatch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OperatorClass {
    Binary,
    Unary,
    Relational,
    Bitwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Origin {
    Buggy,
    Patched,
    Context,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariableRole {
    MathOperatorLeft,
    MathOperatorRight,
    RelationalLeft,
    RelationalRight,
    AssignTarget,
    CallArgument,
    ReturnValue,
    ConditionOperand,
    Plain,
}

impl VariableRole {
    pub const ALL: [VariableRole; 9] = [
        VariableRole::MathOperatorLeft,
        VariableRole::MathOperatorRight,
        VariableRole::RelationalLeft,
        VariableRole::RelationalRight,
        VariableRole::AssignTarget,
        VariableRole::CallArgument,
        VariableRole::ReturnValue,
        VariableRole::ConditionOperand,
        VariableRole::Plain,
    ];
}

/// One syntactic occurrence of a variable inside a statement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Occurrence {
    pub name: String,
    pub side: Side,
    pub role: VariableRole,
}

/// Block layout owned by a statement. Indices refer to `MethodAst::statements`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Structure {
    Simple,
    /// `return` / `throw`: control leaves the method.
    Exit,
    If {
        then_block: Vec<usize>,
        else_block: Option<Vec<usize>>,
    },
    Loop {
        body: Vec<usize>,
    },
    Switch {
        arms: Vec<Vec<usize>>,
        has_default: bool,
    },
    Try {
        body: Vec<usize>,
        catches: Vec<usize>,
        finally: Option<usize>,
    },
    /// A `catch` or `finally` header.
    Handler {
        body: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub index: usize,
    pub kind: StatementKind,
    pub text: String,
    pub tokens: Vec<Token>,
    pub defs: BTreeSet<String>,
    pub uses: BTreeSet<String>,
    pub operators: Vec<OperatorClass>,
    pub nesting_parent: Option<usize>,
    pub origin: Origin,
    /// Source line of the first token.
    pub line: usize,
    pub structure: Structure,
    pub occurrences: Vec<Occurrence>,
    /// Variables introduced here with their declared type (declarations, parameters,
    /// catch clauses, loop variables).
    pub declared: Vec<(String, String)>,
    /// True for an initializing declaration such as `int x = 0;`.
    pub initialized: bool,
}

impl Statement {
    /// Assignment statements in the sense of the variable sub-graph: plain or
    /// compound assignment, increments, and initializing declarations.
    pub fn is_assignment_like(&self) -> bool {
        match self.kind {
            StatementKind::Assignment => true,
            StatementKind::Declaration => self.initialized,
            _ => false,
        }
    }

    /// Distinct variables on the given side in first-occurrence order.
    pub fn side_variables(&self, side: Side) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.occurrences
            .iter()
            .filter(|o| o.side == side && seen.insert(o.name.as_str()))
            .map(|o| o.name.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodAst {
    pub name: String,
    pub return_type: String,
    pub parameters: Vec<(String, String)>,
    pub statements: Vec<Statement>,
    /// Top-level block of the method body (includes the entry statement).
    pub body: Vec<usize>,
}

impl MethodAst {
    /// Declared type of a variable, looked up at its declaration site.
    pub fn declared_type(&self, name: &str) -> Option<&str> {
        self.statements
            .iter()
            .flat_map(|s| s.declared.iter())
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.as_str())
    }

    /// Set the origin of every statement starting on a line in `lines`.
    pub fn mark_origin(
        &mut self,
        lines: std::ops::Range<usize>,
        origin: Origin,
    ) -> BTreeSet<usize> {
        let mut marked = BTreeSet::new();
        for s in &mut self.statements {
            if s.kind != StatementKind::Entry && lines.contains(&s.line) {
                s.origin = origin;
                marked.insert(s.index);
            }
        }
        marked
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("parse error at {line}:{column}: {message}")]
    Syntax {
        message: String,
        line: usize,
        column: usize,
    },
    #[error("unsupported construct `{construct}` at {line}:{column}")]
    UnsupportedConstruct {
        construct: String,
        line: usize,
        column: usize,
    },
}

#[derive(Debug, Clone)]
enum Expr {
    Var(String),
    Lit,
    Binary {
        op: String,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Unary {
        op: String,
        operand: Box<Expr>,
    },
    Call {
        target: Option<Box<Expr>>,
        args: Vec<Expr>,
    },
    Paren(Box<Expr>),
    Cast(Box<Expr>),
}

const PRIMITIVE_TYPES: &[&str] = &[
    "int", "long", "short", "byte", "char", "float", "double", "boolean",
];
const MODIFIERS: &[&str] = &[
    "public",
    "private",
    "protected",
    "static",
    "final",
    "synchronized",
    "abstract",
];

pub fn operator_class(op: &str, unary: bool) -> OperatorClass {
    match op {
        "==" | "!=" | "<" | ">" | "<=" | ">=" => OperatorClass::Relational,
        "&" | "|" | "^" | "<<" | ">>" | ">>>" | "~" | "&=" | "|=" | "^=" | "<<=" | ">>="
        | ">>>=" => OperatorClass::Bitwise,
        "!" | "++" | "--" => OperatorClass::Unary,
        "+" | "-" if unary => OperatorClass::Unary,
        _ => OperatorClass::Binary,
    }
}

fn binary_precedence(op: &str) -> Option<u8> {
    Some(match op {
        "||" => 1,
        "&&" => 2,
        "|" => 3,
        "^" => 4,
        "&" => 5,
        "==" | "!=" => 6,
        "<" | ">" | "<=" | ">=" => 7,
        "<<" | ">>" | ">>>" => 8,
        "+" | "-" => 9,
        "*" | "/" | "%" => 10,
        _ => return None,
    })
}

fn is_assign_op(op: &str) -> bool {
    matches!(
        op,
        "=" | "+=" | "-=" | "*=" | "/=" | "%=" | "&=" | "|=" | "^=" | "<<=" | ">>=" | ">>>="
    )
}

fn walk(expr: &Expr, role: VariableRole, occ: &mut Vec<Occurrence>, ops: &mut Vec<OperatorClass>) {
    match expr {
        Expr::Var(name) => occ.push(Occurrence {
            name: name.clone(),
            side: Side::Right,
            role,
        }),
        Expr::Lit => {}
        Expr::Binary { op, lhs, rhs } => {
            let class = operator_class(op, false);
            ops.push(class);
            let (l, r) = match (class, op.as_str()) {
                (OperatorClass::Relational, _) => {
                    (VariableRole::RelationalLeft, VariableRole::RelationalRight)
                }
                (OperatorClass::Binary, "+" | "-" | "*" | "/" | "%") => (
                    VariableRole::MathOperatorLeft,
                    VariableRole::MathOperatorRight,
                ),
                _ => (VariableRole::Plain, VariableRole::Plain),
            };
            walk(lhs, l, occ, ops);
            walk(rhs, r, occ, ops);
        }
        Expr::Unary { op, operand } => {
            ops.push(operator_class(op, true));
            walk(operand, VariableRole::Plain, occ, ops);
        }
        Expr::Call { target, args } => {
            if let Some(t) = target {
                walk(t, VariableRole::Plain, occ, ops);
            }
            for a in args {
                walk(a, VariableRole::CallArgument, occ, ops);
            }
        }
        Expr::Paren(inner) => walk(inner, role, occ, ops),
        Expr::Cast(inner) => walk(inner, VariableRole::Plain, occ, ops),
    }
}

/// Parse exactly one method declaration.
pub fn parse_method(source: &str) -> Result<MethodAst, ParseError> {
    let tokens = tokenize(source)?;
    let mut p = Parser {
        toks: tokens,
        pos: 0,
        stmts: Vec::new(),
    };
    p.method()
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    stmts: Vec<Statement>,
}

/// Pieces of a simple statement before it is registered.
struct Simple {
    kind: StatementKind,
    occ: Vec<Occurrence>,
    ops: Vec<OperatorClass>,
    defs: BTreeSet<String>,
    uses: BTreeSet<String>,
    declared: Vec<(String, String)>,
    initialized: bool,
}

impl Simple {
    fn new(kind: StatementKind) -> Self {
        Simple {
            kind,
            occ: Vec::new(),
            ops: Vec::new(),
            defs: BTreeSet::new(),
            uses: BTreeSet::new(),
            declared: Vec::new(),
            initialized: false,
        }
    }

    fn finish_uses(&mut self) {
        for o in &self.occ {
            if o.side == Side::Right {
                self.uses.insert(o.name.clone());
            }
        }
    }
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.toks.get(self.pos)
    }

    fn peek_at(&self, off: usize) -> Option<&Token> {
        self.toks.get(self.pos + off)
    }

    fn peek_text(&self) -> Option<&str> {
        self.peek().map(|t| t.text.as_str())
    }

    fn at(&self, text: &str) -> bool {
        self.peek_text() == Some(text)
    }

    fn here(&self) -> (usize, usize) {
        match self.peek().or(self.toks.last()) {
            Some(t) => (t.line, t.column),
            None => (1, 1),
        }
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        let (line, column) = self.here();
        Err(ParseError::Syntax {
            message: message.into(),
            line,
            column,
        })
    }

    fn unsupported<T>(&self, construct: &str) -> Result<T, ParseError> {
        let (line, column) = self.here();
        Err(ParseError::UnsupportedConstruct {
            construct: construct.to_string(),
            line,
            column,
        })
    }

    fn bump(&mut self) -> Result<Token, ParseError> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => self.syntax("unexpected end of input"),
        }
    }

    fn expect(&mut self, text: &str) -> Result<Token, ParseError> {
        if self.at(text) {
            self.bump()
        } else {
            match self.peek_text() {
                Some(found) => {
                    let found = found.to_string();
                    self.syntax(format!("expected `{text}`, found `{found}`"))
                }
                None => self.syntax(format!("expected `{text}`, found end of input")),
            }
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Identifier => Ok(self.bump()?.text),
            Some(t) => {
                let found = t.text.clone();
                self.syntax(format!("expected identifier, found `{found}`"))
            }
            None => self.syntax("expected identifier, found end of input"),
        }
    }

    fn check_unsupported_token(&self) -> Result<(), ParseError> {
        match self.peek_text() {
            Some("->") => self.unsupported("lambda expression"),
            Some("::") => self.unsupported("method reference"),
            Some("?") => self.unsupported("conditional expression"),
            Some("[") => self.unsupported("array"),
            Some("instanceof") => self.unsupported("instanceof"),
            Some("@") => self.unsupported("annotation"),
            _ => Ok(()),
        }
    }

    fn parse_type(&mut self) -> Result<String, ParseError> {
        let t = match self.peek() {
            Some(t)
                if t.kind == TokenKind::Keyword
                    && (PRIMITIVE_TYPES.contains(&t.text.as_str()) || t.text == "void") =>
            {
                self.bump()?.text
            }
            Some(t) if t.kind == TokenKind::Identifier => self.bump()?.text,
            _ => return self.syntax("expected a type"),
        };
        if self.at("<") {
            return self.unsupported("generics");
        }
        if self.at("[") {
            return self.unsupported("array");
        }
        Ok(t)
    }

    fn method(&mut self) -> Result<MethodAst, ParseError> {
        while self
            .peek()
            .is_some_and(|t| MODIFIERS.contains(&t.text.as_str()))
        {
            self.bump()?;
        }
        if self.at("<") {
            return self.unsupported("generics");
        }
        if self.at("class") {
            return self.unsupported("class declaration");
        }
        let return_type = self.parse_type()?;
        let name = self.ident()?;
        let param_start = self.pos;
        self.expect("(")?;
        let mut parameters = Vec::new();
        if !self.at(")") {
            loop {
                if self.at("final") {
                    self.bump()?;
                }
                let ty = self.parse_type()?;
                if self.at(".") {
                    return self.unsupported("varargs");
                }
                let pname = self.ident()?;
                if self.at("[") {
                    return self.unsupported("array");
                }
                parameters.push((pname, ty));
                if self.at(",") {
                    self.bump()?;
                } else {
                    break;
                }
            }
        }
        let param_end = self.pos;
        self.expect(")")?;
        if self.at("throws") {
            self.bump()?;
            self.ident()?;
            while self.at(",") {
                self.bump()?;
                self.ident()?;
            }
        }
        let mut body = Vec::new();
        if !parameters.is_empty() {
            let tokens: Vec<Token> = self.toks[param_start + 1..param_end].to_vec();
            let mut s = Simple::new(StatementKind::Entry);
            for (n, t) in &parameters {
                s.occ.push(Occurrence {
                    name: n.clone(),
                    side: Side::Left,
                    role: VariableRole::AssignTarget,
                });
                s.defs.insert(n.clone());
                s.declared.push((n.clone(), t.clone()));
            }
            let line = tokens.first().map(|t| t.line).unwrap_or(1);
            body.push(self.push_simple(s, tokens, None, line));
        }
        self.expect("{")?;
        body.extend(self.block_items(None)?);
        self.expect("}")?;
        if self.peek().is_some() {
            return self.syntax("trailing tokens after method body");
        }
        Ok(MethodAst {
            name,
            return_type,
            parameters,
            statements: std::mem::take(&mut self.stmts),
            body,
        })
    }

    fn push_simple(
        &mut self,
        mut s: Simple,
        tokens: Vec<Token>,
        parent: Option<usize>,
        line: usize,
    ) -> usize {
        s.finish_uses();
        let structure = if matches!(s.kind, StatementKind::Return) {
            Structure::Exit
        } else {
            Structure::Simple
        };
        self.push(s, tokens, parent, line, structure)
    }

    fn push(
        &mut self,
        s: Simple,
        tokens: Vec<Token>,
        parent: Option<usize>,
        line: usize,
        structure: Structure,
    ) -> usize {
        let index = self.stmts.len();
        let text = tokens
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        self.stmts.push(Statement {
            index,
            kind: s.kind,
            text,
            tokens,
            defs: s.defs,
            uses: s.uses,
            operators: s.ops,
            nesting_parent: parent,
            origin: Origin::Context,
            line,
            structure,
            occurrences: s.occ,
            declared: s.declared,
            initialized: s.initialized,
        });
        index
    }

    fn block_items(&mut self, parent: Option<usize>) -> Result<Vec<usize>, ParseError> {
        let mut out = Vec::new();
        while !self.at("}") {
            if self.peek().is_none() {
                return self.syntax("unexpected end of input inside block");
            }
            out.extend(self.statement(parent)?);
        }
        Ok(out)
    }

    /// A statement or braced block used as a control body.
    fn body(&mut self, parent: usize) -> Result<Vec<usize>, ParseError> {
        self.statement(Some(parent))
    }

    fn statement(&mut self, parent: Option<usize>) -> Result<Vec<usize>, ParseError> {
        let Some(tok) = self.peek().cloned() else {
            return self.syntax("expected statement");
        };
        match tok.text.as_str() {
            "{" => {
                self.bump()?;
                let items = self.block_items(parent)?;
                self.expect("}")?;
                Ok(items)
            }
            ";" => {
                self.bump()?;
                Ok(Vec::new())
            }
            "if" => self.if_statement(parent).map(|i| vec![i]),
            "while" => self.while_statement(parent).map(|i| vec![i]),
            "for" => self.for_statement(parent).map(|i| vec![i]),
            "switch" => self.switch_statement(parent).map(|i| vec![i]),
            "try" => self.try_statement(parent).map(|i| vec![i]),
            "do" => self.unsupported("do-while loop"),
            "break" => self.unsupported("break outside a switch arm"),
            "continue" => self.unsupported("continue"),
            "class" => self.unsupported("local class"),
            "else" => self.syntax("`else` without `if`"),
            "return" => {
                let start = self.pos;
                self.bump()?;
                let mut s = Simple::new(StatementKind::Return);
                if !self.at(";") {
                    let e = self.expr()?;
                    walk(&e, VariableRole::ReturnValue, &mut s.occ, &mut s.ops);
                }
                self.expect(";")?;
                let tokens = self.toks[start..self.pos].to_vec();
                Ok(vec![self.push_simple(s, tokens, parent, tok.line)])
            }
            "throw" => {
                let start = self.pos;
                self.bump()?;
                let mut s = Simple::new(StatementKind::Other);
                let e = self.expr()?;
                walk(&e, VariableRole::Plain, &mut s.occ, &mut s.ops);
                self.expect(";")?;
                let tokens = self.toks[start..self.pos].to_vec();
                s.finish_uses();
                Ok(vec![self.push(
                    s,
                    tokens,
                    parent,
                    tok.line,
                    Structure::Exit,
                )])
            }
            _ => {
                let start = self.pos;
                let s = self.simple_statement()?;
                self.expect(";")?;
                let tokens = self.toks[start..self.pos].to_vec();
                Ok(vec![self.push_simple(s, tokens, parent, tok.line)])
            }
        }
    }

    fn looks_like_declaration(&self) -> bool {
        let mut off = 0;
        if self.peek_at(0).is_some_and(|t| t.text == "final") {
            off = 1;
        }
        let ty = self.peek_at(off);
        let name = self.peek_at(off + 1);
        match (ty, name) {
            (Some(t), Some(n)) => {
                let is_type = (t.kind == TokenKind::Keyword
                    && PRIMITIVE_TYPES.contains(&t.text.as_str()))
                    || t.kind == TokenKind::Identifier;
                is_type && n.kind == TokenKind::Identifier
            }
            (Some(t), None) => {
                t.kind == TokenKind::Keyword && PRIMITIVE_TYPES.contains(&t.text.as_str())
            }
            _ => false,
        }
    }

    /// Declaration, assignment, increment or call, without the trailing `;`.
    fn simple_statement(&mut self) -> Result<Simple, ParseError> {
        self.check_unsupported_token()?;
        if self.looks_like_declaration() {
            if self.at("final") {
                self.bump()?;
            }
            let ty = self.parse_type()?;
            let name = self.ident()?;
            let mut s = Simple::new(StatementKind::Declaration);
            s.occ.push(Occurrence {
                name: name.clone(),
                side: Side::Left,
                role: VariableRole::AssignTarget,
            });
            s.defs.insert(name.clone());
            s.declared.push((name, ty));
            if self.at("[") {
                return self.unsupported("array");
            }
            if self.at("=") {
                self.bump()?;
                let e = self.expr()?;
                walk(&e, VariableRole::Plain, &mut s.occ, &mut s.ops);
                s.initialized = true;
            }
            if self.at(",") {
                return self.unsupported("multiple declarators");
            }
            return Ok(s);
        }
        // prefix increment
        if self.at("++") || self.at("--") {
            let op = self.bump()?.text;
            let name = self.ident()?;
            return Ok(Self::increment(name, &op));
        }
        if self.peek().is_some_and(|t| t.kind == TokenKind::Identifier) {
            let next = self.peek_at(1).map(|t| t.text.clone());
            match next.as_deref() {
                Some(op) if is_assign_op(op) => {
                    let name = self.ident()?;
                    let op = self.bump()?.text;
                    let mut s = Simple::new(StatementKind::Assignment);
                    s.occ.push(Occurrence {
                        name: name.clone(),
                        side: Side::Left,
                        role: VariableRole::AssignTarget,
                    });
                    s.defs.insert(name.clone());
                    if op != "=" {
                        s.ops.push(operator_class(&op, false));
                        s.uses.insert(name);
                    }
                    let e = self.expr()?;
                    walk(&e, VariableRole::Plain, &mut s.occ, &mut s.ops);
                    return Ok(s);
                }
                Some(op @ ("++" | "--")) => {
                    let op = op.to_string();
                    let name = self.ident()?;
                    self.bump()?;
                    return Ok(Self::increment(name, &op));
                }
                Some("[") => return self.unsupported("array"),
                _ => {}
            }
        }
        let e = self.expr()?;
        if !matches!(e, Expr::Call { .. }) {
            return self.syntax("not a statement");
        }
        let mut s = Simple::new(StatementKind::Invocation);
        walk(&e, VariableRole::Plain, &mut s.occ, &mut s.ops);
        Ok(s)
    }

    fn increment(name: String, op: &str) -> Simple {
        let mut s = Simple::new(StatementKind::Assignment);
        s.occ.push(Occurrence {
            name: name.clone(),
            side: Side::Left,
            role: VariableRole::AssignTarget,
        });
        s.ops.push(operator_class(op, true));
        s.defs.insert(name.clone());
        s.uses.insert(name);
        s
    }

    fn paren_condition(&mut self, s: &mut Simple) -> Result<(), ParseError> {
        self.expect("(")?;
        let e = self.expr()?;
        self.expect(")")?;
        walk(&e, VariableRole::ConditionOperand, &mut s.occ, &mut s.ops);
        s.finish_uses();
        Ok(())
    }

    fn if_statement(&mut self, parent: Option<usize>) -> Result<usize, ParseError> {
        let start = self.pos;
        let line = self.expect("if")?.line;
        let mut s = Simple::new(StatementKind::If);
        self.paren_condition(&mut s)?;
        let tokens = self.toks[start..self.pos].to_vec();
        let idx = self.push(s, tokens, parent, line, Structure::Simple);
        let then_block = self.body(idx)?;
        let else_block = if self.at("else") {
            self.bump()?;
            Some(self.body(idx)?)
        } else {
            None
        };
        self.stmts[idx].structure = Structure::If {
            then_block,
            else_block,
        };
        Ok(idx)
    }

    fn while_statement(&mut self, parent: Option<usize>) -> Result<usize, ParseError> {
        let start = self.pos;
        let line = self.expect("while")?.line;
        let mut s = Simple::new(StatementKind::While);
        self.paren_condition(&mut s)?;
        let tokens = self.toks[start..self.pos].to_vec();
        let idx = self.push(s, tokens, parent, line, Structure::Simple);
        let body = self.body(idx)?;
        self.stmts[idx].structure = Structure::Loop { body };
        Ok(idx)
    }

    fn for_statement(&mut self, parent: Option<usize>) -> Result<usize, ParseError> {
        let start = self.pos;
        let line = self.expect("for")?.line;
        self.expect("(")?;
        let mut s = Simple::new(StatementKind::For);
        // for-each: `for (T x : xs)`
        let off = usize::from(self.at("final"));
        let is_foreach = self.peek_at(off + 2).is_some_and(|t| t.text == ":")
            && self
                .peek_at(off + 1)
                .is_some_and(|t| t.kind == TokenKind::Identifier);
        if is_foreach {
            if self.at("final") {
                self.bump()?;
            }
            let ty = self.parse_type()?;
            let name = self.ident()?;
            self.expect(":")?;
            s.occ.push(Occurrence {
                name: name.clone(),
                side: Side::Left,
                role: VariableRole::AssignTarget,
            });
            s.defs.insert(name.clone());
            s.declared.push((name, ty));
            let e = self.expr()?;
            walk(&e, VariableRole::Plain, &mut s.occ, &mut s.ops);
        } else {
            if !self.at(";") {
                let init = self.simple_statement()?;
                s.absorb(init);
            }
            self.expect(";")?;
            if !self.at(";") {
                let cond = self.expr()?;
                walk(
                    &cond,
                    VariableRole::ConditionOperand,
                    &mut s.occ,
                    &mut s.ops,
                );
            }
            self.expect(";")?;
            while !self.at(")") {
                let upd = self.simple_statement()?;
                s.absorb(upd);
                if self.at(",") {
                    self.bump()?;
                } else {
                    break;
                }
            }
        }
        self.expect(")")?;
        s.finish_uses();
        let tokens = self.toks[start..self.pos].to_vec();
        let idx = self.push(s, tokens, parent, line, Structure::Simple);
        let body = self.body(idx)?;
        self.stmts[idx].structure = Structure::Loop { body };
        Ok(idx)
    }

    fn switch_statement(&mut self, parent: Option<usize>) -> Result<usize, ParseError> {
        let start = self.pos;
        let line = self.expect("switch")?.line;
        let mut s = Simple::new(StatementKind::Switch);
        self.paren_condition(&mut s)?;
        let tokens = self.toks[start..self.pos].to_vec();
        let idx = self.push(s, tokens, parent, line, Structure::Simple);
        self.expect("{")?;
        let mut arms: Vec<Vec<usize>> = Vec::new();
        let mut has_default = false;
        let mut current: Option<Vec<usize>> = None;
        while !self.at("}") {
            match self.peek_text() {
                Some("case") | Some("default") => {
                    if self.at("default") {
                        self.bump()?;
                        has_default = true;
                    } else {
                        self.bump()?;
                        self.expr()?;
                    }
                    self.expect(":")?;
                    // consecutive labels share one arm
                    match current.take() {
                        Some(arm) if !arm.is_empty() => {
                            arms.push(arm);
                            current = Some(Vec::new());
                        }
                        Some(arm) => current = Some(arm),
                        None => current = Some(Vec::new()),
                    }
                }
                Some("break") => {
                    if current.is_none() {
                        return self.syntax("statement before first case label");
                    }
                    self.bump()?;
                    self.expect(";")?;
                    if !(self.at("case") || self.at("default") || self.at("}")) {
                        return self.unsupported("break in the middle of a switch arm");
                    }
                }
                None => return self.syntax("unexpected end of input inside switch"),
                _ => {
                    let Some(arm) = current.as_mut() else {
                        return self.syntax("statement before first case label");
                    };
                    let items = self.statement(Some(idx))?;
                    arm.extend(items);
                }
            }
        }
        self.expect("}")?;
        if let Some(arm) = current {
            if !arm.is_empty() {
                arms.push(arm);
            }
        }
        self.stmts[idx].structure = Structure::Switch { arms, has_default };
        Ok(idx)
    }

    fn braced_block(&mut self, parent: usize) -> Result<Vec<usize>, ParseError> {
        self.expect("{")?;
        let items = self.block_items(Some(parent))?;
        self.expect("}")?;
        Ok(items)
    }

    fn try_statement(&mut self, parent: Option<usize>) -> Result<usize, ParseError> {
        let start = self.pos;
        let line = self.expect("try")?.line;
        if self.at("(") {
            return self.unsupported("try-with-resources");
        }
        let tokens = self.toks[start..self.pos].to_vec();
        let idx = self.push(
            Simple::new(StatementKind::TryCatch),
            tokens,
            parent,
            line,
            Structure::Simple,
        );
        let body = self.braced_block(idx)?;
        let mut catches = Vec::new();
        while self.at("catch") {
            let cstart = self.pos;
            let cline = self.bump()?.line;
            self.expect("(")?;
            let ty = self.parse_type()?;
            if self.at("|") {
                return self.unsupported("multi-catch");
            }
            let name = self.ident()?;
            self.expect(")")?;
            let mut s = Simple::new(StatementKind::TryCatch);
            s.occ.push(Occurrence {
                name: name.clone(),
                side: Side::Left,
                role: VariableRole::AssignTarget,
            });
            s.defs.insert(name.clone());
            s.declared.push((name, ty));
            let ctoks = self.toks[cstart..self.pos].to_vec();
            let cidx = self.push(s, ctoks, Some(idx), cline, Structure::Simple);
            let hbody = self.braced_block(cidx)?;
            self.stmts[cidx].structure = Structure::Handler { body: hbody };
            catches.push(cidx);
        }
        let mut finally = None;
        if self.at("finally") {
            let fstart = self.pos;
            let fline = self.bump()?.line;
            let ftoks = self.toks[fstart..self.pos].to_vec();
            let fidx = self.push(
                Simple::new(StatementKind::TryCatch),
                ftoks,
                Some(idx),
                fline,
                Structure::Simple,
            );
            let fbody = self.braced_block(fidx)?;
            self.stmts[fidx].structure = Structure::Handler { body: fbody };
            finally = Some(fidx);
        }
        if catches.is_empty() && finally.is_none() {
            return self.syntax("`try` without `catch` or `finally`");
        }
        self.stmts[idx].structure = Structure::Try {
            body,
            catches,
            finally,
        };
        Ok(idx)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(0)
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            self.check_unsupported_token()?;
            let Some(op) = self.peek_text().map(str::to_string) else {
                break;
            };
            if is_assign_op(&op) {
                return self.unsupported("assignment inside an expression");
            }
            let Some(prec) = binary_precedence(&op) else {
                break;
            };
            if prec <= min_prec {
                break;
            }
            self.bump()?;
            let rhs = self.binary(prec)?;
            lhs = Expr::Binary {
                op,
                lhs: Box::new(lhs),
                rhs: Box::new(rhs),
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek_text() {
            Some(op @ ("!" | "-" | "+" | "~")) => {
                let op = op.to_string();
                self.bump()?;
                let operand = self.unary()?;
                Ok(Expr::Unary {
                    op,
                    operand: Box::new(operand),
                })
            }
            Some("++" | "--") => self.unsupported("increment inside an expression"),
            _ => self.postfix(),
        }
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        loop {
            match self.peek_text() {
                Some(".") => {
                    self.bump()?;
                    self.ident()?;
                    if self.at("(") {
                        let args = self.args()?;
                        e = Expr::Call {
                            target: Some(Box::new(e)),
                            args,
                        };
                    } else {
                        // field of a call result; opaque
                        e = Expr::Call {
                            target: Some(Box::new(e)),
                            args: Vec::new(),
                        };
                    }
                }
                Some("++" | "--") => return self.unsupported("increment inside an expression"),
                _ => return Ok(e),
            }
        }
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect("(")?;
        let mut args = Vec::new();
        if !self.at(")") {
            loop {
                args.push(self.expr()?);
                if self.at(",") {
                    self.bump()?;
                } else {
                    break;
                }
            }
        }
        self.expect(")")?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        self.check_unsupported_token()?;
        let Some(tok) = self.peek().cloned() else {
            return self.syntax("expected expression, found end of input");
        };
        match tok.kind {
            TokenKind::Literal => {
                self.bump()?;
                Ok(Expr::Lit)
            }
            TokenKind::Identifier => {
                self.bump()?;
                if self.at("(") {
                    let args = self.args()?;
                    Ok(Expr::Call { target: None, args })
                } else if self.at("->") {
                    self.unsupported("lambda expression")
                } else {
                    Ok(Expr::Var(tok.text))
                }
            }
            TokenKind::Keyword if tok.text == "new" => {
                self.bump()?;
                self.ident()?;
                if self.at("<") {
                    return self.unsupported("generics");
                }
                if self.at("[") {
                    return self.unsupported("array");
                }
                let args = self.args()?;
                Ok(Expr::Call { target: None, args })
            }
            _ if tok.text == "(" => {
                // cast to a primitive type, or a lambda, or a parenthesized expression
                let next = self.peek_at(1).cloned();
                let after = self.peek_at(2).map(|t| t.text.clone());
                if let Some(n) = &next {
                    if n.kind == TokenKind::Keyword
                        && PRIMITIVE_TYPES.contains(&n.text.as_str())
                        && after.as_deref() == Some(")")
                    {
                        self.bump()?;
                        self.bump()?;
                        self.bump()?;
                        let inner = self.unary()?;
                        return Ok(Expr::Cast(Box::new(inner)));
                    }
                    if self.lambda_ahead() {
                        return self.unsupported("lambda expression");
                    }
                }
                self.bump()?;
                let inner = self.expr()?;
                self.expect(")")?;
                Ok(Expr::Paren(Box::new(inner)))
            }
            _ => self.syntax(format!("expected expression, found `{}`", tok.text)),
        }
    }

    /// `( ... ) ->` starting at the current `(`.
    fn lambda_ahead(&self) -> bool {
        let mut depth = 0usize;
        for (i, t) in self.toks[self.pos..].iter().enumerate() {
            match t.text.as_str() {
                "(" => depth += 1,
                ")" => {
                    depth -= 1;
                    if depth == 0 {
                        return self
                            .toks
                            .get(self.pos + i + 1)
                            .is_some_and(|t| t.text == "->");
                    }
                }
                _ => {}
            }
        }
        false
    }
}

impl Simple {
    /// Merge a for-loop init/update clause into the loop header.
    fn absorb(&mut self, other: Simple) {
        self.occ.extend(other.occ);
        self.ops.extend(other.ops);
        self.defs.extend(other.defs);
        self.uses.extend(other.uses);
        self.declared.extend(other.declared);
    }
}
