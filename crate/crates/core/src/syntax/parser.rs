use super::lexer::{tokenize, LogicalLine, TokKind, Token};
use super::{
    fingerprint, CallId, CallSite, Expr, ExprId, ExprKind, NameRead, ParseError, Pos, ProgramModel,
    ReadId, Span, Statement, StmtKind,
};
use crate::ingest::SourceUnit;

const KEYWORDS: &[&str] = &[
    "False", "None", "True", "and", "as", "assert", "async", "await", "break", "class", "continue",
    "def", "del", "elif", "else", "except", "finally", "for", "from", "global", "if", "import",
    "in", "is", "lambda", "nonlocal", "not", "or", "pass", "raise", "return", "try", "while",
    "with", "yield",
];

const AUG_OPS: &[&str] = &[
    "+=", "-=", "*=", "/=", "//=", "%=", "**=", ">>=", "<<=", "&=", "|=", "^=", "@=",
];

fn is_keyword(text: &str) -> bool {
    KEYWORDS.contains(&text)
}

/// Parses a unit into its [`ProgramModel`].
pub fn parse(unit: &SourceUnit) -> Result<ProgramModel, ParseError> {
    let lines = tokenize(unit.lines())?;
    let mut builder = Builder::default();
    let mut blocks: Vec<Block> = vec![Block {
        width: 0,
        header: None,
        conditional: false,
    }];
    let mut pending_header: Option<(usize, bool)> = None;

    for line in &lines {
        let width = indent_width(&line.indent);
        let first = &line.tokens[0];
        if let Some((header, conditional)) = pending_header.take() {
            if width <= blocks.last().map_or(0, |b| b.width) {
                return Err(ParseError::at(first.start, "expected an indented block"));
            }
            blocks.push(Block {
                width,
                header: Some(header),
                conditional,
            });
        } else {
            let top = blocks.last().map_or(0, |b| b.width);
            if width > top {
                return Err(ParseError::at(first.start, "unexpected indent"));
            }
            while blocks.last().is_some_and(|b| b.width > width) {
                blocks.pop();
            }
            if blocks.last().map_or(0, |b| b.width) != width {
                return Err(ParseError::at(
                    first.start,
                    "unindent does not match any outer level",
                ));
            }
        }
        let ctx = LineCtx {
            indent: line.indent.clone(),
            parent: blocks.last().and_then(|b| b.header),
            conditional: blocks.iter().any(|b| b.conditional),
        };
        pending_header = builder.logical_line(line, &ctx)?;
    }
    if let Some((header, _)) = pending_header {
        let span = builder.statements[header].span;
        return Err(ParseError::at(span.end(), "expected an indented block"));
    }

    Ok(builder.finish(unit))
}

fn indent_width(indent: &str) -> usize {
    indent.chars().fold(0, |w, c| match c {
        '\t' => (w / 8 + 1) * 8,
        _ => w + 1,
    })
}

struct Block {
    width: usize,
    header: Option<usize>,
    conditional: bool,
}

struct LineCtx {
    indent: String,
    parent: Option<usize>,
    conditional: bool,
}

// ---------------------------------------------------------------------------
// Expression syntax tree, lowered into the model arena right after parsing.

#[derive(Debug)]
enum Ast {
    Name(String, Span),
    Literal(Span),
    Call {
        func: Box<Ast>,
        args: Vec<Arg>,
        span: Span,
    },
    Attr {
        value: Box<Ast>,
        attr: String,
        span: Span,
    },
    Subscript {
        value: Box<Ast>,
        index: Vec<Ast>,
        span: Span,
    },
    /// Tuple or list display; the only containers valid as targets.
    Sequence(Vec<Ast>, Span),
    Compound(Vec<Ast>, Span),
    Starred(Box<Ast>, Span),
    Lambda(Box<Ast>, Span),
}

#[derive(Debug)]
enum Arg {
    Pos(Ast),
    Kw(String, Ast),
    DoubleStar(Ast),
}

impl Ast {
    fn span(&self) -> Span {
        match self {
            Ast::Name(_, s)
            | Ast::Literal(s)
            | Ast::Sequence(_, s)
            | Ast::Compound(_, s)
            | Ast::Starred(_, s)
            | Ast::Lambda(_, s) => *s,
            Ast::Call { span, .. } | Ast::Attr { span, .. } | Ast::Subscript { span, .. } => *span,
        }
    }
}

fn unsupported(tok: &Token, construct: &str) -> ParseError {
    ParseError::SyntaxUnsupported {
        line: tok.start.line,
        construct: construct.to_string(),
    }
}

struct TokenStream<'t> {
    toks: &'t [Token],
    i: usize,
}

impl<'t> TokenStream<'t> {
    fn new(toks: &'t [Token]) -> Self {
        TokenStream { toks, i: 0 }
    }

    fn peek(&self) -> Option<&'t Token> {
        self.toks.get(self.i)
    }

    fn peek_at(&self, offset: usize) -> Option<&'t Token> {
        self.toks.get(self.i + offset)
    }

    fn at_end(&self) -> bool {
        self.i >= self.toks.len()
    }

    fn at_op(&self, op: &str) -> bool {
        self.peek().is_some_and(|t| t.is_op(op))
    }

    fn at_kw(&self, kw: &str) -> bool {
        self.peek().is_some_and(|t| t.is_keyword(kw))
    }

    fn bump(&mut self) -> Result<&'t Token, ParseError> {
        let tok = self.peek().ok_or_else(|| self.eof_error())?;
        self.i += 1;
        Ok(tok)
    }

    fn eat_op(&mut self, op: &str) -> bool {
        if self.at_op(op) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.i += 1;
            true
        } else {
            false
        }
    }

    fn expect_op(&mut self, op: &str) -> Result<&'t Token, ParseError> {
        match self.peek() {
            Some(t) if t.is_op(op) => {
                self.i += 1;
                Ok(t)
            }
            Some(t) => Err(ParseError::at(
                t.start,
                format!("expected `{op}`, found `{}`", t.text),
            )),
            None => Err(self.eof_error()),
        }
    }

    fn expect_name(&mut self) -> Result<&'t Token, ParseError> {
        match self.peek() {
            Some(t) if t.kind == TokKind::Name && !is_keyword(&t.text) => {
                self.i += 1;
                Ok(t)
            }
            Some(t) => Err(ParseError::at(
                t.start,
                format!("expected a name, found `{}`", t.text),
            )),
            None => Err(self.eof_error()),
        }
    }

    fn eof_error(&self) -> ParseError {
        let pos = self.toks.last().map_or(Pos { line: 1, col: 0 }, |t| t.end);
        ParseError::at(pos, "unexpected end of statement")
    }

    fn prev_end(&self) -> Pos {
        self.toks[self.i - 1].end
    }

    fn expect_end(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(ParseError::at(t.start, format!("unexpected `{}`", t.text))),
        }
    }

    // -- expressions --------------------------------------------------------

    /// Comma-separated expressions; more than one (or a trailing comma) makes a tuple.
    fn exprlist(&mut self, bitor_only: bool) -> Result<Ast, ParseError> {
        let start = self.peek().ok_or_else(|| self.eof_error())?.start;
        let first = self.star_or(bitor_only)?;
        if !self.at_op(",") {
            return Ok(first);
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_expr_end() || (bitor_only && self.at_kw("in")) {
                break;
            }
            items.push(self.star_or(bitor_only)?);
        }
        Ok(Ast::Sequence(items, Span::new(start, self.prev_end())))
    }

    fn at_expr_end(&self) -> bool {
        match self.peek() {
            None => true,
            Some(t) => {
                t.kind == TokKind::Op
                    && matches!(t.text.as_str(), ")" | "]" | "}" | "=" | ":" | ";")
                    || AUG_OPS.contains(&t.text.as_str()) && t.kind == TokKind::Op
            }
        }
    }

    fn star_or(&mut self, bitor_only: bool) -> Result<Ast, ParseError> {
        if self.at_op("*") {
            let star = self.bump()?;
            let inner = self.bitor()?;
            let span = Span::new(star.start, inner.span().end());
            return Ok(Ast::Starred(Box::new(inner), span));
        }
        if bitor_only {
            self.bitor()
        } else {
            self.test()
        }
    }

    fn test(&mut self) -> Result<Ast, ParseError> {
        if self.at_kw("lambda") {
            return self.lambda();
        }
        let cond = self.or_test()?;
        if self.at_kw("if") {
            self.bump()?;
            let test = self.or_test()?;
            if !self.eat_kw("else") {
                return Err(ParseError::at(
                    self.peek().map_or(self.prev_end(), |t| t.start),
                    "expected `else` in conditional expression",
                ));
            }
            let orelse = self.test()?;
            let span = Span::new(cond.span().start(), orelse.span().end());
            return Ok(Ast::Compound(vec![cond, test, orelse], span));
        }
        if let Some(t) = self.peek() {
            if t.is_op(":=") {
                return Err(unsupported(t, ":="));
            }
        }
        Ok(cond)
    }

    fn lambda(&mut self) -> Result<Ast, ParseError> {
        let kw = self.bump()?;
        let mut depth = 0usize;
        loop {
            let t = self.bump()?;
            if t.kind == TokKind::Op {
                match t.text.as_str() {
                    "(" | "[" | "{" => depth += 1,
                    ")" | "]" | "}" => depth = depth.saturating_sub(1),
                    ":" if depth == 0 => break,
                    _ => {}
                }
            }
        }
        let body = self.test()?;
        let span = Span::new(kw.start, body.span().end());
        Ok(Ast::Lambda(Box::new(body), span))
    }

    fn or_test(&mut self) -> Result<Ast, ParseError> {
        self.boolean_chain("or", Self::and_test)
    }

    fn and_test(&mut self) -> Result<Ast, ParseError> {
        self.boolean_chain("and", Self::not_test)
    }

    fn boolean_chain(
        &mut self,
        kw: &str,
        next: fn(&mut Self) -> Result<Ast, ParseError>,
    ) -> Result<Ast, ParseError> {
        let first = next(self)?;
        if !self.at_kw(kw) {
            return Ok(first);
        }
        let mut parts = vec![first];
        while self.eat_kw(kw) {
            parts.push(next(self)?);
        }
        Ok(compound(parts))
    }

    fn not_test(&mut self) -> Result<Ast, ParseError> {
        if self.at_kw("not") {
            let kw = self.bump()?;
            let inner = self.not_test()?;
            let span = Span::new(kw.start, inner.span().end());
            return Ok(Ast::Compound(vec![inner], span));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<Ast, ParseError> {
        let first = self.bitor()?;
        let mut parts = vec![first];
        while let Some(t) = self.peek() {
            let is_cmp = (t.kind == TokKind::Op
                && matches!(t.text.as_str(), "<" | ">" | "==" | ">=" | "<=" | "!="))
                || t.is_keyword("in")
                || t.is_keyword("is")
                || (t.is_keyword("not") && self.peek_at(1).is_some_and(|n| n.is_keyword("in")));
            if !is_cmp {
                break;
            }
            if t.is_keyword("not") {
                self.i += 2;
            } else {
                self.i += 1;
                if t.is_keyword("is") {
                    self.eat_kw("not");
                }
            }
            parts.push(self.bitor()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            compound(parts)
        })
    }

    /// Binary arithmetic and bitwise operators. Precedence among them does not
    /// affect lineage, so they are folded into one level.
    fn bitor(&mut self) -> Result<Ast, ParseError> {
        let first = self.unary()?;
        let mut parts = vec![first];
        while let Some(t) = self.peek() {
            let binary = t.kind == TokKind::Op
                && matches!(
                    t.text.as_str(),
                    "|" | "^" | "&" | "<<" | ">>" | "+" | "-" | "*" | "/" | "//" | "%" | "@"
                );
            if !binary {
                break;
            }
            self.i += 1;
            parts.push(self.unary()?);
        }
        Ok(if parts.len() == 1 {
            parts.pop().unwrap()
        } else {
            compound(parts)
        })
    }

    fn unary(&mut self) -> Result<Ast, ParseError> {
        if let Some(t) = self.peek() {
            if t.kind == TokKind::Op && matches!(t.text.as_str(), "-" | "+" | "~") {
                self.i += 1;
                let inner = self.unary()?;
                let span = Span::new(t.start, inner.span().end());
                return Ok(Ast::Compound(vec![inner], span));
            }
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast, ParseError> {
        let base = self.atom_expr()?;
        if self.eat_op("**") {
            let exp = self.unary()?;
            return Ok(compound(vec![base, exp]));
        }
        Ok(base)
    }

    fn atom_expr(&mut self) -> Result<Ast, ParseError> {
        let mut expr = self.atom()?;
        loop {
            if self.eat_op("(") {
                let args = self.call_args()?;
                self.expect_op(")")?;
                let span = Span::new(expr.span().start(), self.prev_end());
                expr = Ast::Call {
                    func: Box::new(expr),
                    args,
                    span,
                };
            } else if self.eat_op("[") {
                let index = self.subscripts()?;
                self.expect_op("]")?;
                let span = Span::new(expr.span().start(), self.prev_end());
                expr = Ast::Subscript {
                    value: Box::new(expr),
                    index,
                    span,
                };
            } else if self.eat_op(".") {
                let name = self.expect_name_or_keyword()?;
                let span = Span::new(expr.span().start(), name.end);
                expr = Ast::Attr {
                    value: Box::new(expr),
                    attr: name.text.clone(),
                    span,
                };
            } else {
                return Ok(expr);
            }
        }
    }

    fn expect_name_or_keyword(&mut self) -> Result<&'t Token, ParseError> {
        match self.peek() {
            Some(t) if t.kind == TokKind::Name => {
                self.i += 1;
                Ok(t)
            }
            Some(t) => Err(ParseError::at(
                t.start,
                format!("expected an attribute name, found `{}`", t.text),
            )),
            None => Err(self.eof_error()),
        }
    }

    fn atom(&mut self) -> Result<Ast, ParseError> {
        let t = self.bump()?;
        let single = Span::new(t.start, t.end);
        match t.kind {
            TokKind::Number => Ok(Ast::Literal(single)),
            TokKind::Str => {
                let mut end = t.end;
                while self.peek().is_some_and(|n| n.kind == TokKind::Str) {
                    end = self.bump()?.end;
                }
                Ok(Ast::Literal(Span::new(t.start, end)))
            }
            TokKind::Name => match t.text.as_str() {
                "None" | "True" | "False" => Ok(Ast::Literal(single)),
                "yield" => Err(unsupported(t, "yield")),
                "await" => Err(unsupported(t, "await")),
                kw if is_keyword(kw) => Err(ParseError::at(
                    t.start,
                    format!("unexpected keyword `{kw}`"),
                )),
                name => Ok(Ast::Name(name.to_string(), single)),
            },
            TokKind::Op => match t.text.as_str() {
                "..." => Ok(Ast::Literal(single)),
                "(" => {
                    if self.eat_op(")") {
                        return Ok(Ast::Sequence(
                            Vec::new(),
                            Span::new(t.start, self.prev_end()),
                        ));
                    }
                    if self.at_kw("yield") {
                        return Err(unsupported(self.peek().unwrap(), "yield"));
                    }
                    let inner = self.display_items(")")?;
                    self.expect_op(")")?;
                    let span = Span::new(t.start, self.prev_end());
                    Ok(match inner {
                        Display::Single(ast) => ast,
                        Display::Items(items) => Ast::Sequence(items, span),
                        Display::Comprehension(parts) => Ast::Compound(parts, span),
                    })
                }
                "[" => {
                    if self.eat_op("]") {
                        return Ok(Ast::Sequence(
                            Vec::new(),
                            Span::new(t.start, self.prev_end()),
                        ));
                    }
                    let inner = self.display_items("]")?;
                    self.expect_op("]")?;
                    let span = Span::new(t.start, self.prev_end());
                    Ok(match inner {
                        Display::Single(ast) => Ast::Sequence(vec![ast], span),
                        Display::Items(items) => Ast::Sequence(items, span),
                        Display::Comprehension(parts) => Ast::Compound(parts, span),
                    })
                }
                "{" => {
                    let parts = self.dict_or_set()?;
                    self.expect_op("}")?;
                    Ok(Ast::Compound(parts, Span::new(t.start, self.prev_end())))
                }
                other => Err(ParseError::at(t.start, format!("unexpected `{other}`"))),
            },
        }
    }

    /// Contents of `(...)` or `[...]`.
    fn display_items(&mut self, close: &str) -> Result<Display, ParseError> {
        let first = self.star_or(false)?;
        if self.at_kw("for") || self.at_kw("async") {
            let mut parts = vec![first];
            self.comprehension_tail(&mut parts)?;
            return Ok(Display::Comprehension(parts));
        }
        if !self.at_op(",") {
            return Ok(Display::Single(first));
        }
        let mut items = vec![first];
        while self.eat_op(",") {
            if self.at_op(close) {
                break;
            }
            items.push(self.star_or(false)?);
        }
        Ok(Display::Items(items))
    }

    fn comprehension_tail(&mut self, parts: &mut Vec<Ast>) -> Result<(), ParseError> {
        loop {
            if let Some(t) = self.peek() {
                if t.is_keyword("async") {
                    return Err(unsupported(t, "async comprehension"));
                }
            }
            if self.eat_kw("for") {
                parts.push(self.exprlist(true)?);
                if !self.eat_kw("in") {
                    return Err(ParseError::at(
                        self.prev_end(),
                        "expected `in` in comprehension",
                    ));
                }
                parts.push(self.or_test()?);
            } else if self.eat_kw("if") {
                parts.push(self.or_test()?);
            } else {
                return Ok(());
            }
        }
    }

    fn dict_or_set(&mut self) -> Result<Vec<Ast>, ParseError> {
        let mut parts = Vec::new();
        loop {
            if self.at_op("}") {
                break;
            }
            if self.eat_op("**") {
                parts.push(self.bitor()?);
            } else {
                parts.push(self.star_or(false)?);
                if self.eat_op(":") {
                    parts.push(self.test()?);
                }
            }
            if self.at_kw("for") {
                self.comprehension_tail(&mut parts)?;
                break;
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(parts)
    }

    fn subscripts(&mut self) -> Result<Vec<Ast>, ParseError> {
        let mut items = Vec::new();
        loop {
            // Slices: any of lower, upper, step may be missing.
            loop {
                if self.eat_op(":") {
                    continue;
                }
                if self.at_op(",") || self.at_op("]") {
                    break;
                }
                items.push(self.star_or(false)?);
                if !self.at_op(":") {
                    break;
                }
            }
            if !self.eat_op(",") {
                return Ok(items);
            }
            if self.at_op("]") {
                return Ok(items);
            }
        }
    }

    fn call_args(&mut self) -> Result<Vec<Arg>, ParseError> {
        let mut args = Vec::new();
        while !self.at_op(")") {
            if self.eat_op("**") {
                args.push(Arg::DoubleStar(self.test()?));
            } else if self.at_op("*") {
                args.push(Arg::Pos(self.star_or(false)?));
            } else if self.peek().is_some_and(|t| t.kind == TokKind::Name)
                && self.peek_at(1).is_some_and(|t| t.is_op("="))
            {
                let name = self.expect_name()?.text.clone();
                self.bump()?;
                args.push(Arg::Kw(name, self.test()?));
            } else {
                let value = self.test()?;
                if self.at_kw("for") {
                    let start = value.span().start();
                    let mut parts = vec![value];
                    self.comprehension_tail(&mut parts)?;
                    let span = Span::new(start, self.prev_end());
                    args.push(Arg::Pos(Ast::Compound(parts, span)));
                } else {
                    args.push(Arg::Pos(value));
                }
            }
            if !self.eat_op(",") {
                break;
            }
        }
        Ok(args)
    }
}

enum Display {
    Single(Ast),
    Items(Vec<Ast>),
    Comprehension(Vec<Ast>),
}

fn compound(parts: Vec<Ast>) -> Ast {
    let span = Span::new(parts[0].span().start(), parts[parts.len() - 1].span().end());
    Ast::Compound(parts, span)
}

// ---------------------------------------------------------------------------
// Statements and lowering.

#[derive(Default)]
struct Builder {
    statements: Vec<Statement>,
    calls: Vec<Option<CallSite>>,
    exprs: Vec<Expr>,
    name_reads: Vec<NameRead>,
    /// Calls of the statement being lowered, in evaluation order.
    stmt_calls: Vec<CallId>,
    /// Callee spans, resolved to text once the unit is at hand.
    pending_paths: Vec<(CallId, Span)>,
}

/// What a statement binds and reads, before it is pushed.
struct StmtShape {
    kind: StmtKind,
    header: bool,
    conditional_block: bool,
    span: Span,
    targets: Vec<Ast>,
    extra_bound: Vec<String>,
    value: Option<Ast>,
    reads: Vec<Ast>,
    augmented: bool,
}

impl StmtShape {
    fn simple(kind: StmtKind, span: Span) -> Self {
        StmtShape {
            kind,
            header: false,
            conditional_block: false,
            span,
            targets: Vec::new(),
            extra_bound: Vec::new(),
            value: None,
            reads: Vec::new(),
            augmented: false,
        }
    }
}

impl Builder {
    /// Handles one logical line. Returns the header statement index (and
    /// whether its body is conditional) when the line opens a block.
    fn logical_line(
        &mut self,
        line: &LogicalLine,
        ctx: &LineCtx,
    ) -> Result<Option<(usize, bool)>, ParseError> {
        let toks = &line.tokens;
        let first = &toks[0];
        let last = &toks[toks.len() - 1];
        if first.is_keyword("async") {
            return Err(unsupported(first, "async"));
        }
        if (first.text == "match" || first.text == "case")
            && first.kind == TokKind::Name
            && last.is_op(":")
            && toks.len() > 2
            && toks[1].kind != TokKind::Op
        {
            return Err(unsupported(first, &first.text));
        }

        const HEADERS: &[&str] = &[
            "if", "elif", "else", "for", "while", "def", "class", "with", "try", "except",
            "finally",
        ];
        if first.kind == TokKind::Name && HEADERS.contains(&first.text.as_str()) {
            let (shape, body_start) = self.header(toks)?;
            let conditional_block = shape.conditional_block;
            let index = self.push_statement(shape, ctx, ctx.parent, ctx.conditional)?;
            let rest = &toks[body_start..];
            if rest.is_empty() {
                return Ok(Some((index, conditional_block)));
            }
            let inline_ctx = LineCtx {
                indent: ctx.indent.clone(),
                parent: Some(index),
                conditional: ctx.conditional || conditional_block,
            };
            self.simple_statements(rest, &inline_ctx)?;
            return Ok(None);
        }

        self.simple_statements(toks, ctx)?;
        Ok(None)
    }

    fn simple_statements(&mut self, toks: &[Token], ctx: &LineCtx) -> Result<(), ParseError> {
        let mut depth = 0usize;
        let mut start = 0;
        for (i, t) in toks.iter().enumerate() {
            if t.kind != TokKind::Op {
                continue;
            }
            match t.text.as_str() {
                "(" | "[" | "{" => depth += 1,
                ")" | "]" | "}" => depth -= 1,
                ";" if depth == 0 => {
                    if i > start {
                        self.simple_statement(&toks[start..i], ctx)?;
                    }
                    start = i + 1;
                }
                _ => {}
            }
        }
        if start < toks.len() {
            self.simple_statement(&toks[start..], ctx)?;
        }
        Ok(())
    }

    fn header(&mut self, toks: &[Token]) -> Result<(StmtShape, usize), ParseError> {
        let mut ts = TokenStream::new(toks);
        let kw = ts.bump()?;
        let mut shape = StmtShape::simple(StmtKind::Other, Span::new(kw.start, kw.end));
        shape.header = true;
        match kw.text.as_str() {
            "if" | "elif" | "while" => {
                shape.reads.push(ts.test()?);
                shape.conditional_block = true;
            }
            "else" | "try" | "finally" => shape.conditional_block = true,
            "except" => {
                shape.conditional_block = true;
                if !ts.at_op(":") {
                    ts.eat_op("*");
                    shape.reads.push(ts.test()?);
                    if ts.eat_kw("as") {
                        shape.extra_bound.push(ts.expect_name()?.text.clone());
                    }
                }
            }
            "for" => {
                shape.conditional_block = true;
                shape.targets.push(ts.exprlist(true)?);
                if !ts.eat_kw("in") {
                    return Err(ParseError::at(ts.prev_end(), "expected `in`"));
                }
                shape.value = Some(ts.exprlist(false)?);
            }
            "with" => {
                let mut items = Vec::new();
                loop {
                    items.push(ts.test()?);
                    if ts.eat_kw("as") {
                        shape.targets.push(ts.star_or(true)?);
                    }
                    if !ts.eat_op(",") {
                        break;
                    }
                }
                shape.value = Some(if items.len() == 1 {
                    items.pop().unwrap()
                } else {
                    compound(items)
                });
            }
            "def" => {
                shape.extra_bound.push(ts.expect_name()?.text.clone());
                ts.expect_op("(")?;
                while !ts.at_op(")") {
                    if ts.eat_op("/")
                        || (ts.at_op("*") && ts.peek_at(1).is_some_and(|t| t.is_op(",")))
                    {
                        if ts.at_op("*") {
                            ts.bump()?;
                        }
                    } else {
                        if !ts.eat_op("**") {
                            ts.eat_op("*");
                        }
                        shape.extra_bound.push(ts.expect_name()?.text.clone());
                        if ts.eat_op(":") {
                            ts.test()?;
                        }
                        if ts.eat_op("=") {
                            shape.reads.push(ts.test()?);
                        }
                    }
                    if !ts.eat_op(",") {
                        break;
                    }
                }
                ts.expect_op(")")?;
                if ts.eat_op("->") {
                    ts.test()?;
                }
            }
            "class" => {
                shape.extra_bound.push(ts.expect_name()?.text.clone());
                if ts.eat_op("(") {
                    for arg in ts.call_args()? {
                        match arg {
                            Arg::Pos(a) | Arg::Kw(_, a) | Arg::DoubleStar(a) => shape.reads.push(a),
                        }
                    }
                    ts.expect_op(")")?;
                }
            }
            _ => unreachable!("caller checked the header keyword"),
        }
        let colon = ts.expect_op(":")?;
        shape.span = Span::new(kw.start, colon.end);
        Ok((shape, ts.i))
    }

    fn simple_statement(&mut self, toks: &[Token], ctx: &LineCtx) -> Result<(), ParseError> {
        let mut ts = TokenStream::new(toks);
        let first = &toks[0];
        let span = Span::new(first.start, toks[toks.len() - 1].end);
        let mut shape = StmtShape::simple(StmtKind::Other, span);

        if first.kind == TokKind::Name {
            match first.text.as_str() {
                "pass" | "break" | "continue" => {
                    ts.bump()?;
                    ts.expect_end()?;
                    self.push_statement(shape, ctx, ctx.parent, ctx.conditional)?;
                    return Ok(());
                }
                "return" | "del" | "assert" | "raise" => {
                    ts.bump()?;
                    while !ts.at_end() {
                        shape.reads.push(ts.test()?);
                        if !(ts.eat_op(",") || ts.eat_kw("from")) {
                            break;
                        }
                    }
                    ts.expect_end()?;
                    self.push_statement(shape, ctx, ctx.parent, ctx.conditional)?;
                    return Ok(());
                }
                "global" | "nonlocal" => {
                    self.push_statement(shape, ctx, ctx.parent, ctx.conditional)?;
                    return Ok(());
                }
                "import" => {
                    ts.bump()?;
                    loop {
                        let head = ts.expect_name()?.text.clone();
                        while ts.eat_op(".") {
                            ts.expect_name()?;
                        }
                        if ts.eat_kw("as") {
                            shape.extra_bound.push(ts.expect_name()?.text.clone());
                        } else {
                            shape.extra_bound.push(head);
                        }
                        if !ts.eat_op(",") {
                            break;
                        }
                    }
                    ts.expect_end()?;
                    self.push_statement(shape, ctx, ctx.parent, ctx.conditional)?;
                    return Ok(());
                }
                "from" => {
                    ts.bump()?;
                    while ts.eat_op(".") || ts.eat_op("...") {}
                    if !ts.at_kw("import") {
                        ts.expect_name()?;
                        while ts.eat_op(".") {
                            ts.expect_name()?;
                        }
                    }
                    if !ts.eat_kw("import") {
                        return Err(ParseError::at(ts.prev_end(), "expected `import`"));
                    }
                    if !ts.eat_op("*") {
                        let paren = ts.eat_op("(");
                        loop {
                            if paren && ts.at_op(")") {
                                break;
                            }
                            let name = ts.expect_name()?.text.clone();
                            if ts.eat_kw("as") {
                                shape.extra_bound.push(ts.expect_name()?.text.clone());
                            } else {
                                shape.extra_bound.push(name);
                            }
                            if !ts.eat_op(",") {
                                break;
                            }
                        }
                        if paren {
                            ts.expect_op(")")?;
                        }
                    }
                    ts.expect_end()?;
                    self.push_statement(shape, ctx, ctx.parent, ctx.conditional)?;
                    return Ok(());
                }
                "yield" | "await" => return Err(unsupported(first, &first.text)),
                _ => {}
            }
        }
        if first.is_op("@") {
            ts.bump()?;
            shape.reads.push(ts.test()?);
            ts.expect_end()?;
            self.push_statement(shape, ctx, ctx.parent, ctx.conditional)?;
            return Ok(());
        }

        let head = ts.exprlist(false)?;
        if ts.at_op("=") {
            let mut targets = vec![head];
            let mut value = None;
            while ts.eat_op("=") {
                if ts.at_kw("yield") {
                    return Err(unsupported(ts.peek().unwrap(), "yield"));
                }
                let next = ts.exprlist(false)?;
                if ts.at_op("=") {
                    targets.push(next);
                } else {
                    value = Some(next);
                }
            }
            ts.expect_end()?;
            shape.kind = StmtKind::Assign;
            shape.targets = targets;
            shape.value = value;
        } else if ts
            .peek()
            .is_some_and(|t| t.kind == TokKind::Op && AUG_OPS.contains(&t.text.as_str()))
        {
            ts.bump()?;
            let value = ts.exprlist(false)?;
            ts.expect_end()?;
            shape.kind = StmtKind::Assign;
            shape.augmented = true;
            shape.targets = vec![head];
            shape.value = Some(value);
        } else if ts.eat_op(":") {
            ts.test()?;
            if ts.eat_op("=") {
                shape.kind = StmtKind::Assign;
                shape.value = Some(ts.exprlist(false)?);
                shape.targets = vec![head];
            } else {
                // Bare annotation binds nothing.
                shape.kind = StmtKind::Other;
            }
            ts.expect_end()?;
        } else {
            if let Some(t) = ts.peek() {
                if t.is_op(":=") {
                    return Err(unsupported(t, ":="));
                }
            }
            ts.expect_end()?;
            shape.kind = StmtKind::Expr;
            shape.reads.push(head);
        }
        self.push_statement(shape, ctx, ctx.parent, ctx.conditional)?;
        Ok(())
    }

    fn push_statement(
        &mut self,
        shape: StmtShape,
        ctx: &LineCtx,
        parent: Option<usize>,
        conditional: bool,
    ) -> Result<usize, ParseError> {
        let index = self.statements.len();
        self.stmt_calls.clear();

        for read in &shape.reads {
            self.lower(read, index, None);
        }
        let value = shape.value.as_ref().map(|v| self.lower(v, index, None));

        let mut lhs_names = Vec::new();
        let mut updated_names = Vec::new();
        for target in &shape.targets {
            self.lower_target(target, index, &mut lhs_names, &mut updated_names)?;
        }
        lhs_names.extend(shape.extra_bound);
        // `a, a = ...` leaves one binding.
        let mut seen = std::collections::HashSet::new();
        lhs_names.retain(|n| seen.insert(n.clone()));
        updated_names.retain(|n| !lhs_names.contains(n) && seen.insert(n.clone()));

        self.statements.push(Statement {
            index,
            kind: shape.kind,
            lhs_names,
            updated_names,
            rhs_calls: std::mem::take(&mut self.stmt_calls),
            value,
            augmented: shape.augmented,
            conditional,
            header: shape.header,
            parent,
            shares_line: false,
            span: shape.span,
            indent: ctx.indent.clone(),
        });
        Ok(index)
    }

    fn lower_target(
        &mut self,
        target: &Ast,
        stmt: usize,
        bound: &mut Vec<String>,
        updated: &mut Vec<String>,
    ) -> Result<(), ParseError> {
        match target {
            Ast::Name(name, _) => bound.push(name.clone()),
            Ast::Sequence(items, _) => {
                for item in items {
                    self.lower_target(item, stmt, bound, updated)?;
                }
            }
            Ast::Starred(inner, _) => self.lower_target(inner, stmt, bound, updated)?,
            Ast::Attr { .. } | Ast::Subscript { .. } => {
                if let Some(root) = root_name(target) {
                    updated.push(root.to_string());
                }
                self.lower(target, stmt, None);
            }
            other => {
                let start = other.span().start();
                return Err(ParseError::at(start, "cannot assign to expression"));
            }
        }
        Ok(())
    }

    fn push_expr(&mut self, kind: ExprKind, span: Span) -> ExprId {
        let id = ExprId(self.exprs.len());
        self.exprs.push(Expr { kind, span });
        id
    }

    /// Lowers an expression in load context. `arg_of` marks name reads that
    /// are (the base of) an argument of that call.
    fn lower(&mut self, ast: &Ast, stmt: usize, arg_of: Option<CallId>) -> ExprId {
        match ast {
            Ast::Name(name, span) => {
                let id = ReadId(self.name_reads.len());
                self.name_reads.push(NameRead {
                    id,
                    name: name.clone(),
                    span: *span,
                    stmt_index: stmt,
                    arg_of,
                });
                self.push_expr(ExprKind::Name(id), *span)
            }
            Ast::Literal(span) => self.push_expr(ExprKind::Literal, *span),
            Ast::Attr { value, attr, span } => {
                let base = self.lower(value, stmt, arg_of);
                self.push_expr(
                    ExprKind::Attribute {
                        base,
                        attr: attr.clone(),
                    },
                    *span,
                )
            }
            Ast::Subscript { value, index, span } => {
                let base = self.lower(value, stmt, arg_of);
                let index = index.iter().map(|i| self.lower(i, stmt, None)).collect();
                self.push_expr(ExprKind::Subscript { base, index }, *span)
            }
            Ast::Sequence(items, span) | Ast::Compound(items, span) => {
                let parts = items.iter().map(|i| self.lower(i, stmt, None)).collect();
                self.push_expr(ExprKind::Compound(parts), *span)
            }
            Ast::Starred(inner, span) => {
                let inner = self.lower(inner, stmt, arg_of);
                self.push_expr(ExprKind::Compound(vec![inner]), *span)
            }
            Ast::Lambda(body, span) => {
                self.lower(body, stmt, None);
                self.push_expr(ExprKind::Lambda, *span)
            }
            Ast::Call { func, args, span } => {
                let id = CallId(self.calls.len());
                self.calls.push(None);
                let (receiver, tail) = match func.as_ref() {
                    Ast::Attr { value, attr, .. } => {
                        (Some(self.lower(value, stmt, None)), attr.clone())
                    }
                    Ast::Name(name, _) => {
                        self.lower(func, stmt, None);
                        (None, name.clone())
                    }
                    other => (Some(self.lower(other, stmt, None)), callee_tail(other)),
                };
                let mut positional = Vec::new();
                let mut kwargs = Vec::new();
                for arg in args {
                    match arg {
                        Arg::Pos(a) => positional.push(self.lower(a, stmt, Some(id))),
                        Arg::Kw(name, a) => {
                            kwargs.push((name.clone(), self.lower(a, stmt, Some(id))))
                        }
                        Arg::DoubleStar(a) => {
                            kwargs.push(("**".to_string(), self.lower(a, stmt, Some(id))))
                        }
                    }
                }
                let func_span = func.span();
                self.calls[id.0] = Some(CallSite {
                    id,
                    callee_tail: tail,
                    callee_path: String::new(),
                    receiver,
                    args: positional,
                    kwargs,
                    span: *span,
                    stmt_index: stmt,
                });
                self.pending_paths.push((id, func_span));
                self.stmt_calls.push(id);
                self.push_expr(ExprKind::Call(id), *span)
            }
        }
    }

    fn finish(mut self, unit: &SourceUnit) -> ProgramModel {
        let calls: Vec<CallSite> = self
            .calls
            .into_iter()
            .map(|c| c.expect("every reserved call is filled"))
            .collect();
        let mut calls = calls;
        for (id, span) in std::mem::take(&mut self.pending_paths) {
            calls[id.0].callee_path = span.text(unit).map(|t| t.into_owned()).unwrap_or_default();
        }

        let mut per_line = vec![0usize; unit.len() + 2];
        for stmt in &self.statements {
            for count in &mut per_line[stmt.span.start_line..=stmt.span.end_line] {
                *count += 1;
            }
        }
        for stmt in &mut self.statements {
            stmt.shares_line =
                (stmt.span.start_line..=stmt.span.end_line).any(|line| per_line[line] > 1);
        }

        ProgramModel {
            unit_id: unit.id.clone(),
            statements: self.statements,
            calls,
            exprs: self.exprs,
            name_reads: self.name_reads,
            source_hash: fingerprint(unit.lines()),
        }
    }
}

fn root_name(ast: &Ast) -> Option<&str> {
    match ast {
        Ast::Name(name, _) => Some(name),
        Ast::Attr { value, .. } | Ast::Subscript { value, .. } => root_name(value),
        Ast::Call { func, .. } => root_name(func),
        _ => None,
    }
}

fn callee_tail(ast: &Ast) -> String {
    match ast {
        Ast::Name(name, _) => name.clone(),
        Ast::Attr { attr, .. } => attr.clone(),
        Ast::Call { func, .. } => callee_tail(func),
        Ast::Subscript { value, .. } => callee_tail(value),
        _ => "<expr>".to_string(),
    }
}
