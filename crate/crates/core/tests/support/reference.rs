//! Naive reference detector for straight-line programs.
//!
//! Shares only the parser and the taxonomy with the library. Derivation is a
//! linear scan that records direct dependencies by span containment, closed by
//! repeated passes until nothing changes. No graph structure is reused.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use leakscan_core::syntax::{CallSite, NameRead, ProgramModel, Span};
use leakscan_core::{CallRole, Cause, LeakageKind, Taxonomy};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Tok {
    Origin(String),
    Def(String, usize),
    Call(usize),
}

/// What the oracle reports; compared field by field with the library.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Finding {
    pub kind: LeakageKind,
    pub cause: Cause,
    pub source_stmt: usize,
    pub sink_stmts: Vec<usize>,
    pub variables: Vec<String>,
    pub fixable: bool,
}

struct Oracle<'a> {
    model: &'a ProgramModel,
    tax: &'a Taxonomy,
    read_tok: Vec<Tok>,
    deps: BTreeMap<Tok, BTreeSet<Tok>>,
    reach: BTreeMap<Tok, BTreeSet<Tok>>,
    /// Binding tokens per name, oldest first.
    lineage: HashMap<String, Vec<Tok>>,
}

fn inside(outer: Span, inner: Span) -> bool {
    outer.start() <= inner.start() && inner.end() <= outer.end()
}

fn is_callee_read(model: &ProgramModel, read: &NameRead) -> bool {
    model.calls.iter().any(|c| {
        c.receiver.is_none() && c.callee_path == read.name && c.span.start() == read.span.start()
    })
}

impl<'a> Oracle<'a> {
    fn new(model: &'a ProgramModel, tax: &'a Taxonomy) -> Self {
        let mut oracle = Oracle {
            model,
            tax,
            read_tok: Vec::new(),
            deps: BTreeMap::new(),
            reach: BTreeMap::new(),
            lineage: HashMap::new(),
        };
        oracle.scan();
        oracle.close();
        oracle
    }

    fn role(&self, call: &CallSite) -> CallRole {
        self.tax.classify_name(&call.callee_tail)
    }

    /// Tokens read or computed inside `span` of statement `stmt`.
    fn tokens_in(&self, stmt: usize, span: Span) -> BTreeSet<Tok> {
        let mut out = BTreeSet::new();
        for r in &self.model.name_reads {
            if r.stmt_index == stmt && inside(span, r.span) && !is_callee_read(self.model, r) {
                out.insert(self.read_tok[r.id.0].clone());
            }
        }
        for c in &self.model.calls {
            if c.stmt_index == stmt && inside(span, c.span) {
                out.insert(Tok::Call(c.id.0));
            }
        }
        out
    }

    fn arg_spans(&self, call: &CallSite) -> Vec<Span> {
        call.args
            .iter()
            .chain(call.kwargs.iter().map(|(_, e)| e))
            .map(|&e| self.model.expr(e).span)
            .collect()
    }

    fn arg_tokens(&self, call: &CallSite) -> BTreeSet<Tok> {
        self.arg_spans(call)
            .into_iter()
            .flat_map(|s| self.tokens_in(call.stmt_index, s))
            .collect()
    }

    fn arg_reads(&self, call: &CallSite) -> Vec<&'a NameRead> {
        let spans = self.arg_spans(call);
        let mut reads: Vec<&NameRead> = self
            .model
            .name_reads
            .iter()
            .filter(|r| {
                r.stmt_index == call.stmt_index
                    && spans.iter().any(|&s| inside(s, r.span))
                    && !is_callee_read(self.model, r)
            })
            .collect();
        reads.sort_by_key(|r| r.span.start());
        reads
    }

    fn scan(&mut self) {
        let model = self.model;
        let mut env: HashMap<String, Tok> = HashMap::new();
        self.read_tok = vec![Tok::Origin(String::new()); model.name_reads.len()];
        for stmt in &model.statements {
            for r in model
                .name_reads
                .iter()
                .filter(|r| r.stmt_index == stmt.index)
            {
                let tok = env
                    .get(&r.name)
                    .cloned()
                    .unwrap_or_else(|| Tok::Origin(r.name.clone()));
                if let Tok::Origin(name) = &tok {
                    let lineage = self.lineage.entry(name.clone()).or_default();
                    if !lineage.contains(&tok) {
                        lineage.insert(0, tok.clone());
                    }
                }
                self.read_tok[r.id.0] = tok;
            }
            for c in model.calls.iter().filter(|c| c.stmt_index == stmt.index) {
                let mut spans = self.arg_spans(c);
                if let Some(recv) = c.receiver {
                    spans.push(model.expr(recv).span);
                }
                let d: BTreeSet<Tok> = spans
                    .into_iter()
                    .flat_map(|s| self.tokens_in(stmt.index, s))
                    .filter(|t| *t != Tok::Call(c.id.0))
                    .collect();
                self.deps.insert(Tok::Call(c.id.0), d);
            }
            let value: BTreeSet<Tok> = stmt
                .value
                .map(|v| self.tokens_in(stmt.index, model.expr(v).span))
                .unwrap_or_default();
            let keep_old = stmt.augmented || stmt.conditional;
            for name in &stmt.lhs_names {
                let mut d = value.clone();
                if keep_old {
                    d.insert(
                        env.get(name)
                            .cloned()
                            .unwrap_or_else(|| Tok::Origin(name.clone())),
                    );
                }
                self.bind(&mut env, name, stmt.index, d);
            }
            for name in &stmt.updated_names {
                let mut d = value.clone();
                let old = env
                    .get(name)
                    .cloned()
                    .unwrap_or_else(|| Tok::Origin(name.clone()));
                if let Tok::Origin(_) = &old {
                    let lineage = self.lineage.entry(name.clone()).or_default();
                    if !lineage.contains(&old) {
                        lineage.insert(0, old.clone());
                    }
                }
                d.insert(old);
                self.bind(&mut env, name, stmt.index, d);
            }
        }
    }

    fn bind(
        &mut self,
        env: &mut HashMap<String, Tok>,
        name: &str,
        stmt: usize,
        deps: BTreeSet<Tok>,
    ) {
        let tok = Tok::Def(name.to_string(), stmt);
        self.deps.insert(tok.clone(), deps);
        self.lineage
            .entry(name.to_string())
            .or_default()
            .push(tok.clone());
        env.insert(name.to_string(), tok);
    }

    /// Fixpoint: reach(t) = {t} ∪ deps(t) ∪ reach(deps(t)).
    fn close(&mut self) {
        let mut all: BTreeSet<Tok> = self.deps.keys().cloned().collect();
        for d in self.deps.values() {
            all.extend(d.iter().cloned());
        }
        for t in &all {
            let mut set = BTreeSet::from([t.clone()]);
            set.extend(self.deps.get(t).cloned().unwrap_or_default());
            self.reach.insert(t.clone(), set);
        }
        loop {
            let mut changed = false;
            for t in &all {
                let current = self.reach[t].clone();
                let mut next = current.clone();
                for u in &current {
                    next.extend(self.reach[u].iter().cloned());
                }
                if next.len() != current.len() {
                    self.reach.insert(t.clone(), next);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    fn derives(&self, t: &Tok, origin: &Tok) -> bool {
        t == origin || self.reach.get(t).is_some_and(|r| r.contains(origin))
    }

    fn calls_with(&self, roles: &[CallRole]) -> Vec<&'a CallSite> {
        let mut calls: Vec<&CallSite> = self
            .model
            .calls
            .iter()
            .filter(|c| roles.contains(&self.role(c)))
            .collect();
        calls.sort_by_key(|c| (c.stmt_index, c.span.start()));
        calls
    }

    fn names_deriving(&self, call: &CallSite, origins: &[Tok]) -> Vec<String> {
        let mut names = Vec::new();
        for r in self.arg_reads(call) {
            let tok = &self.read_tok[r.id.0];
            if origins.iter().any(|o| self.derives(tok, o)) && !names.contains(&r.name) {
                names.push(r.name.clone());
            }
        }
        names
    }

    fn overlap(&self, out: &mut Vec<Finding>) {
        let splits = self.calls_with(&[CallRole::Split]);
        for s in self.calls_with(&[CallRole::Sample]) {
            let origin = Tok::Call(s.id.0);
            let hit = splits.iter().find(|p| {
                p.stmt_index > s.stmt_index
                    && self.arg_tokens(p).iter().any(|t| self.derives(t, &origin))
            });
            let Some(p) = hit else { continue };
            let finding = Finding {
                kind: LeakageKind::Overlap,
                cause: Cause::SplitBeforeSample,
                source_stmt: s.stmt_index,
                sink_stmts: vec![p.stmt_index],
                variables: self.names_deriving(p, &[origin]),
                fixable: self.model.statement(p.stmt_index).is_movable(),
            };
            if !out.contains(&finding) {
                out.push(finding);
            }
        }
    }

    fn multitest(&self, out: &mut Vec<Finding>) {
        let mut names: Vec<&str> = Vec::new();
        for r in &self.model.name_reads {
            if self.tax.is_test_name(&r.name) && !names.contains(&r.name.as_str()) {
                names.push(&r.name);
            }
        }
        for name in names {
            let lineage = self.lineage.get(name).cloned().unwrap_or_default();
            let mut group_of: HashMap<Tok, usize> = HashMap::new();
            let mut group = 0;
            for (i, tok) in lineage.iter().enumerate() {
                if i > 0 && !self.derives(tok, &lineage[i - 1]) {
                    group += 1;
                }
                group_of.insert(tok.clone(), group);
            }
            let mut usages: BTreeMap<usize, Vec<&NameRead>> = BTreeMap::new();
            for r in self.model.name_reads.iter().filter(|r| r.name == name) {
                let Some(c) = r.arg_of else { continue };
                if self.role(self.model.call(c)) != CallRole::Evaluate {
                    continue;
                }
                if let Some(&g) = group_of.get(&self.read_tok[r.id.0]) {
                    usages.entry(g).or_default().push(r);
                }
            }
            for (_, mut uses) in usages {
                if uses.len() < 2 {
                    continue;
                }
                uses.sort_by_key(|r| (r.stmt_index, r.span.start()));
                out.push(Finding {
                    kind: LeakageKind::MultiTest,
                    cause: Cause::RepeatedEvaluation,
                    source_stmt: uses[0].stmt_index,
                    sink_stmts: uses[1..].iter().map(|r| r.stmt_index).collect(),
                    variables: vec![name.to_string()],
                    fixable: true,
                });
            }
        }
    }

    fn preprocessing(&self, out: &mut Vec<Finding>) {
        let splits = self.calls_with(&[CallRole::Split]);
        let transforms = self.calls_with(&[CallRole::Transform]);
        let mut seen_roots: Vec<BTreeSet<Tok>> = Vec::new();
        for f in self.calls_with(&[CallRole::Fit, CallRole::FitTransform]) {
            let result = Tok::Call(f.id.0);
            let receiver: BTreeSet<Tok> = match f.receiver {
                Some(recv) => self
                    .tokens_in(f.stmt_index, self.model.expr(recv).span)
                    .iter()
                    .flat_map(|t| {
                        self.reach
                            .get(t)
                            .cloned()
                            .unwrap_or_else(|| BTreeSet::from([t.clone()]))
                    })
                    .collect(),
                None => BTreeSet::new(),
            };
            let marker = receiver.iter().any(|t| match t {
                Tok::Call(c) => self.tax.is_transformer(&self.model.calls[*c].callee_tail),
                _ => false,
            });
            let feeds = transforms.iter().any(|t| {
                t.receiver.is_some_and(|r| {
                    self.tokens_in(t.stmt_index, self.model.expr(r).span)
                        .iter()
                        .any(|x| self.derives(x, &result))
                })
            });
            if !marker && !feeds {
                continue;
            }
            let mut origins = vec![result.clone()];
            origins.extend(self.arg_tokens(f));
            let later = splits.iter().find(|p| {
                p.stmt_index > f.stmt_index
                    && self
                        .arg_tokens(p)
                        .iter()
                        .any(|t| origins.iter().any(|o| self.derives(t, o)))
            });
            if let Some(p) = later {
                out.push(Finding {
                    kind: LeakageKind::Preprocessing,
                    cause: Cause::SplitAfterTransform,
                    source_stmt: f.stmt_index,
                    sink_stmts: vec![p.stmt_index],
                    variables: self.names_deriving(p, &origins),
                    fixable: self.model.statement(p.stmt_index).is_movable(),
                });
            } else if splits.is_empty() {
                let roots: BTreeSet<Tok> = if receiver.is_empty() {
                    BTreeSet::from([result])
                } else {
                    receiver
                        .iter()
                        .filter(|t| !matches!(self.deps.get(*t), Some(d) if !d.is_empty()))
                        .cloned()
                        .collect()
                };
                if seen_roots.iter().any(|r| !r.is_disjoint(&roots)) {
                    continue;
                }
                seen_roots.push(roots);
                let mut variables = Vec::new();
                for r in self.arg_reads(f) {
                    if !variables.contains(&r.name) {
                        variables.push(r.name.clone());
                    }
                }
                out.push(Finding {
                    kind: LeakageKind::Preprocessing,
                    cause: Cause::NoSplit,
                    source_stmt: f.stmt_index,
                    sink_stmts: Vec::new(),
                    variables,
                    fixable: true,
                });
            }
        }
    }
}

/// Whether the oracle applies: no block headers at all.
pub fn is_straight_line(model: &ProgramModel) -> bool {
    model.statements.iter().all(|s| !s.header)
}

/// Reference findings, sorted.
pub fn reference_detect(model: &ProgramModel, tax: &Taxonomy) -> Vec<Finding> {
    let oracle = Oracle::new(model, tax);
    let mut out = Vec::new();
    oracle.overlap(&mut out);
    oracle.preprocessing(&mut out);
    oracle.multitest(&mut out);
    out.sort();
    out
}

/// The library's findings in the same shape, sorted.
pub fn library_findings(instances: &[leakscan_core::LeakageInstance]) -> Vec<Finding> {
    let mut out: Vec<Finding> = instances
        .iter()
        .map(|i| Finding {
            kind: i.kind,
            cause: i.cause,
            source_stmt: i.source_stmt,
            sink_stmts: i.sink_stmts.clone(),
            variables: i.variables.clone(),
            fixable: i.fixable,
        })
        .collect();
    out.sort();
    out
}
