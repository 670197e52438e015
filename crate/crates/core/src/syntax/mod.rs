//! Reduced program model for leakage analysis.
//!
//! Parsing keeps only what the detectors need: statements in document order,
//! their bound names, every call site, and every name read, all located by
//! exact [`Span`]s. Compound statements are flattened; their headers become
//! statements of their own and their bodies follow in document order.

mod lexer;
mod parser;

use std::fmt;

use thiserror::Error;

use crate::ingest::SourceUnit;

pub use parser::parse;

/// 1-based line, 0-based byte column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: usize,
    pub col: usize,
}

/// Source range in flat coordinates. The end column is exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub start_line: usize,
    pub start_col: usize,
    pub end_line: usize,
    pub end_col: usize,
}

impl Span {
    pub(crate) fn new(start: Pos, end: Pos) -> Self {
        Span {
            start_line: start.line,
            start_col: start.col,
            end_line: end.line,
            end_col: end.col,
        }
    }

    pub fn start(&self) -> Pos {
        Pos {
            line: self.start_line,
            col: self.start_col,
        }
    }

    pub fn end(&self) -> Pos {
        Pos {
            line: self.end_line,
            col: self.end_col,
        }
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start() <= other.start() && other.end() <= self.end()
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start() < other.end() && other.start() < self.end()
    }

    /// The text this span covers in `unit`.
    pub fn text<'a>(&self, unit: &'a SourceUnit) -> Option<std::borrow::Cow<'a, str>> {
        let lines = unit.lines();
        if self.start_line == 0 || self.end_line > lines.len() {
            return None;
        }
        if self.start_line == self.end_line {
            return lines[self.start_line - 1]
                .get(self.start_col..self.end_col)
                .map(std::borrow::Cow::Borrowed);
        }
        let mut out = lines[self.start_line - 1]
            .get(self.start_col..)?
            .to_string();
        for line in &lines[self.start_line..self.end_line - 1] {
            out.push('\n');
            out.push_str(line);
        }
        out.push('\n');
        out.push_str(lines[self.end_line - 1].get(..self.end_col)?);
        Some(std::borrow::Cow::Owned(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CallId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExprId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReadId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    /// A name in load position.
    Name(ReadId),
    Literal,
    Call(CallId),
    Attribute {
        base: ExprId,
        attr: String,
    },
    Subscript {
        base: ExprId,
        index: Vec<ExprId>,
    },
    /// Operators, containers, comprehensions: the value depends on every part.
    Compound(Vec<ExprId>),
    /// A lambda body is not evaluated where it is written.
    Lambda,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallSite {
    pub id: CallId,
    /// Final dotted segment of the callee, e.g. `fit_resample`.
    pub callee_tail: String,
    /// Callee expression as written, e.g. `SMOTE().fit_resample`.
    pub callee_path: String,
    /// Object a method is called on.
    pub receiver: Option<ExprId>,
    pub args: Vec<ExprId>,
    /// Keyword arguments in source order; `**mapping` is recorded as `"**"`.
    pub kwargs: Vec<(String, ExprId)>,
    pub span: Span,
    pub stmt_index: usize,
}

impl CallSite {
    /// Positional arguments followed by keyword argument values.
    pub fn all_args(&self) -> impl Iterator<Item = ExprId> + '_ {
        self.args
            .iter()
            .copied()
            .chain(self.kwargs.iter().map(|(_, e)| *e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StmtKind {
    Assign,
    Expr,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub index: usize,
    pub kind: StmtKind,
    /// Names bound by the statement, tuple targets flattened.
    pub lhs_names: Vec<String>,
    /// Names whose object is updated through a subscript or attribute target.
    pub updated_names: Vec<String>,
    /// Every call in the statement, in evaluation order.
    pub rhs_calls: Vec<CallId>,
    /// Value the bound names are computed from, if any.
    pub value: Option<ExprId>,
    /// `x += ...` style updates keep lineage to the previous binding.
    pub augmented: bool,
    /// Inside an `if`/loop/`try` body: the binding may not replace the old one.
    pub conditional: bool,
    /// Opens an indented block (`if`, `for`, `def`, ...).
    pub header: bool,
    /// Index of the enclosing block header.
    pub parent: Option<usize>,
    /// Another statement has tokens on one of this statement's lines.
    pub shares_line: bool,
    pub span: Span,
    pub indent: String,
}

impl Statement {
    /// Whether the statement can be moved or deleted as whole lines.
    pub fn is_movable(&self) -> bool {
        !self.header && !self.shares_line
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NameRead {
    pub id: ReadId,
    pub name: String,
    pub span: Span,
    pub stmt_index: usize,
    /// The call this read is an argument of, directly or as the base of an
    /// attribute/subscript argument such as `X_test.values`.
    pub arg_of: Option<CallId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramModel {
    pub unit_id: String,
    pub statements: Vec<Statement>,
    pub calls: Vec<CallSite>,
    pub exprs: Vec<Expr>,
    pub name_reads: Vec<NameRead>,
    /// Fingerprint of the parsed lines, used to catch stale models.
    pub source_hash: u64,
}

impl ProgramModel {
    pub fn call(&self, id: CallId) -> &CallSite {
        &self.calls[id.0]
    }

    pub fn expr(&self, id: ExprId) -> &Expr {
        &self.exprs[id.0]
    }

    pub fn read(&self, id: ReadId) -> &NameRead {
        &self.name_reads[id.0]
    }

    pub fn statement(&self, index: usize) -> &Statement {
        &self.statements[index]
    }

    /// Name reads anywhere inside an expression, in source order.
    pub fn reads_in(&self, expr: ExprId) -> Vec<ReadId> {
        let mut out = Vec::new();
        self.collect_reads(expr, &mut out);
        out.sort_by_key(|r| self.read(*r).span.start());
        out
    }

    fn collect_reads(&self, expr: ExprId, out: &mut Vec<ReadId>) {
        match &self.expr(expr).kind {
            ExprKind::Name(r) => out.push(*r),
            ExprKind::Literal | ExprKind::Lambda => {}
            ExprKind::Call(c) => {
                let call = self.call(*c);
                if let Some(recv) = call.receiver {
                    self.collect_reads(recv, out);
                }
                for arg in call.all_args() {
                    self.collect_reads(arg, out);
                }
            }
            ExprKind::Attribute { base, .. } => self.collect_reads(*base, out),
            ExprKind::Subscript { base, index } => {
                self.collect_reads(*base, out);
                for i in index {
                    self.collect_reads(*i, out);
                }
            }
            ExprKind::Compound(parts) => {
                for p in parts {
                    self.collect_reads(*p, out);
                }
            }
        }
    }
}

pub(crate) fn fingerprint(lines: &[String]) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    lines.hash(&mut hasher);
    hasher.finish()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("line {line}: unsupported construct `{construct}`")]
    SyntaxUnsupported { line: usize, construct: String },
    #[error("line {line}, column {col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
}

impl ParseError {
    pub(crate) fn at(pos: Pos, message: impl fmt::Display) -> Self {
        ParseError::Syntax {
            line: pos.line,
            col: pos.col,
            message: message.to_string(),
        }
    }

    pub fn line(&self) -> usize {
        match self {
            ParseError::SyntaxUnsupported { line, .. } | ParseError::Syntax { line, .. } => *line,
        }
    }
}
