//! Overlap, Multi-test and Preprocessing leakage detection.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::flow::{FlowGraph, Node, NodeId};
use crate::syntax::{CallId, CallSite, ProgramModel, ReadId, Span};
use crate::taxonomy::{CallRole, Taxonomy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LeakageKind {
    Overlap,
    Preprocessing,
    #[serde(rename = "multitest")]
    MultiTest,
}

impl LeakageKind {
    pub const ALL: [LeakageKind; 3] = [
        LeakageKind::Overlap,
        LeakageKind::Preprocessing,
        LeakageKind::MultiTest,
    ];

    /// Machine name used in JSON and sidecar files.
    pub fn key(self) -> &'static str {
        match self {
            LeakageKind::Overlap => "overlap",
            LeakageKind::Preprocessing => "preprocessing",
            LeakageKind::MultiTest => "multitest",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        LeakageKind::ALL.into_iter().find(|k| k.key() == key)
    }
}

impl fmt::Display for LeakageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LeakageKind::Overlap => "Overlap",
            LeakageKind::Preprocessing => "Preprocessing",
            LeakageKind::MultiTest => "Multi-test",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Cause {
    /// A sample call precedes the split that consumes its output.
    SplitBeforeSample,
    SplitAfterTransform,
    NoSplit,
    RepeatedEvaluation,
}

impl Cause {
    pub const ALL: [Cause; 4] = [
        Cause::SplitBeforeSample,
        Cause::SplitAfterTransform,
        Cause::NoSplit,
        Cause::RepeatedEvaluation,
    ];

    pub fn kind(self) -> LeakageKind {
        match self {
            Cause::SplitBeforeSample => LeakageKind::Overlap,
            Cause::SplitAfterTransform | Cause::NoSplit => LeakageKind::Preprocessing,
            Cause::RepeatedEvaluation => LeakageKind::MultiTest,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Cause::SplitBeforeSample => "SplitBeforeSample",
            Cause::SplitAfterTransform => "SplitAfterTransform",
            Cause::NoSplit => "NoSplit",
            Cause::RepeatedEvaluation => "RepeatedEvaluation",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Cause::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Cause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeakageInstance {
    pub kind: LeakageKind,
    pub cause: Cause,
    pub source_stmt: usize,
    pub sink_stmts: Vec<usize>,
    pub variables: Vec<String>,
    pub fixable: bool,
    pub message: String,
    /// Statement a split fix is inserted above: the nearest preceding sample
    /// statement for Overlap, the fit statement for Preprocessing.
    pub fix_anchor: Option<usize>,
    /// Multi-test only: statement and token span of every evaluation usage.
    pub usages: Vec<(usize, Span)>,
}

impl LeakageInstance {
    fn new(
        cause: Cause,
        source_stmt: usize,
        sink_stmts: Vec<usize>,
        variables: Vec<String>,
        fixable: bool,
    ) -> Self {
        let mut inst = LeakageInstance {
            kind: cause.kind(),
            cause,
            source_stmt,
            sink_stmts,
            variables,
            fixable,
            message: String::new(),
            fix_anchor: None,
            usages: Vec::new(),
        };
        inst.message = message_for(&inst);
        inst
    }
}

fn message_for(inst: &LeakageInstance) -> String {
    let vars = inst.variables.join(", ");
    match inst.cause {
        Cause::SplitBeforeSample => format!(
            "data is resampled before the train/test split, so the training and test sets share rows ({vars}); split first and sample only the training data"
        ),
        Cause::SplitAfterTransform => format!(
            "a transformation is fitted on data that is split only afterwards, so test data shapes the training features ({vars}); split before fitting"
        ),
        Cause::NoSplit => {
            "a transformation is fitted but the data is never split, so training and test data are transformed together; split the data before fitting"
                .to_string()
        }
        Cause::RepeatedEvaluation => format!(
            "test data `{vars}` is used in {} evaluations, so it has become validation data; use new test data for each of the {} later evaluations",
            inst.sink_stmts.len() + 1,
            inst.sink_stmts.len()
        ),
    }
}

/// Shared per-unit state for the detectors.
struct Ctx<'a> {
    model: &'a ProgramModel,
    flow: &'a FlowGraph,
    roles: Vec<CallRole>,
}

impl<'a> Ctx<'a> {
    fn new(model: &'a ProgramModel, flow: &'a FlowGraph, tax: &'a Taxonomy) -> Self {
        let roles = model.calls.iter().map(|c| tax.classify(c)).collect();
        Ctx { model, flow, roles }
    }

    /// Calls with `role`, in document order.
    fn calls_with(&self, role: CallRole) -> Vec<&'a CallSite> {
        let mut calls: Vec<&CallSite> = self
            .model
            .calls
            .iter()
            .filter(|c| self.roles[c.id.0] == role)
            .collect();
        calls.sort_by_key(|c| (c.stmt_index, c.span.start(), c.id));
        calls
    }

    fn role(&self, call: CallId) -> CallRole {
        self.roles[call.0]
    }

    fn arg_sources(&self, call: &CallSite) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = call
            .all_args()
            .flat_map(|a| self.flow.sources(self.model, a))
            .collect();
        out.sort();
        out.dedup();
        out
    }

    fn arg_reads(&self, call: &CallSite) -> Vec<ReadId> {
        call.all_args()
            .flat_map(|a| self.model.reads_in(a))
            .collect()
    }

    /// Names read in `call`'s arguments whose value derives from any of `origins`.
    fn arg_names_deriving(&self, call: &CallSite, origins: &[NodeId]) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for read in self.arg_reads(call) {
            let node = self.flow.read_node(read);
            if origins
                .iter()
                .any(|&o| self.flow.derives(node, o).unwrap_or(false))
            {
                let name = &self.model.read(read).name;
                if !names.contains(name) {
                    names.push(name.clone());
                }
            }
        }
        names
    }
}

pub fn detect_overlap(
    model: &ProgramModel,
    flow: &FlowGraph,
    tax: &Taxonomy,
) -> Vec<LeakageInstance> {
    let ctx = Ctx::new(model, flow, tax);
    let splits = ctx.calls_with(CallRole::Split);
    let mut out: Vec<LeakageInstance> = Vec::new();
    for sample in ctx.calls_with(CallRole::Sample) {
        let sample_node = flow.call_node(sample.id);
        let Some(split) = splits.iter().find(|p| {
            p.stmt_index > sample.stmt_index && flow.any_derives(&ctx.arg_sources(p), sample_node)
        }) else {
            continue;
        };
        let duplicate = out
            .iter()
            .any(|i| i.source_stmt == sample.stmt_index && i.sink_stmts == [split.stmt_index]);
        if duplicate {
            continue;
        }
        let variables = ctx.arg_names_deriving(split, &[sample_node]);
        let fixable = model.statement(split.stmt_index).is_movable();
        let nearest_sample = ctx
            .calls_with(CallRole::Sample)
            .iter()
            .map(|c| c.stmt_index)
            .filter(|&s| s < split.stmt_index)
            .max();
        let mut inst = LeakageInstance::new(
            Cause::SplitBeforeSample,
            sample.stmt_index,
            vec![split.stmt_index],
            variables,
            fixable,
        );
        inst.fix_anchor = nearest_sample;
        out.push(inst);
    }
    out
}

pub fn detect_multitest(
    model: &ProgramModel,
    flow: &FlowGraph,
    tax: &Taxonomy,
) -> Vec<LeakageInstance> {
    let ctx = Ctx::new(model, flow, tax);

    let mut names: Vec<&str> = Vec::new();
    for read in &model.name_reads {
        if tax.is_test_name(&read.name) && !names.contains(&read.name.as_str()) {
            names.push(&read.name);
        }
    }

    let mut out = Vec::new();
    for name in names {
        let groups = lineage_groups(flow, flow.lineage_of(name));
        let mut usages: Vec<Vec<&crate::syntax::NameRead>> = vec![Vec::new(); groups.len()];
        for read in model.name_reads.iter().filter(|r| r.name == name) {
            let Some(call) = read.arg_of else { continue };
            if ctx.role(call) != CallRole::Evaluate {
                continue;
            }
            let node = flow.read_node(read.id);
            if let Some(g) = groups.iter().position(|members| members.contains(&node)) {
                usages[g].push(read);
            }
        }
        for mut group in usages {
            if group.len() < 2 {
                continue;
            }
            group.sort_by_key(|r| (r.stmt_index, r.span.start()));
            let mut inst = LeakageInstance::new(
                Cause::RepeatedEvaluation,
                group[0].stmt_index,
                group[1..].iter().map(|r| r.stmt_index).collect(),
                vec![name.to_string()],
                true,
            );
            inst.usages = group.iter().map(|r| (r.stmt_index, r.span)).collect();
            out.push(inst);
        }
    }
    out
}

/// Splits a name's lineage into runs where each binding derives from the one
/// before it. A binding that does not (e.g. a fresh load) starts a new run.
fn lineage_groups(flow: &FlowGraph, lineage: &[NodeId]) -> Vec<Vec<NodeId>> {
    let mut groups: Vec<Vec<NodeId>> = Vec::new();
    for &node in lineage {
        let continues = groups
            .last()
            .and_then(|g| g.last())
            .is_some_and(|&prev| flow.derives(node, prev).unwrap_or(false));
        if continues {
            groups.last_mut().unwrap().push(node);
        } else {
            groups.push(vec![node]);
        }
    }
    groups
}

pub fn detect_preprocessing(
    model: &ProgramModel,
    flow: &FlowGraph,
    tax: &Taxonomy,
) -> Vec<LeakageInstance> {
    let ctx = Ctx::new(model, flow, tax);
    let splits = ctx.calls_with(CallRole::Split);
    let transforms = ctx.calls_with(CallRole::Transform);
    let mut fits = ctx.calls_with(CallRole::Fit);
    fits.extend(ctx.calls_with(CallRole::FitTransform));
    fits.sort_by_key(|c| (c.stmt_index, c.span.start(), c.id));

    let mut out = Vec::new();
    let mut no_split_lineages: Vec<BTreeSet<NodeId>> = Vec::new();
    for fit in fits {
        let fit_node = flow.call_node(fit.id);
        let receiver_lineage: Vec<NodeId> = match fit.receiver {
            Some(recv) => {
                let mut all: Vec<NodeId> = flow
                    .sources(model, recv)
                    .into_iter()
                    .flat_map(|s| flow.ancestors(s))
                    .collect();
                all.sort();
                all.dedup();
                all
            }
            None => Vec::new(),
        };
        let has_marker = receiver_lineage.iter().any(|&n| match flow.node(n) {
            Ok(Node::CallResult(c)) => tax.is_transformer(&model.call(*c).callee_tail),
            _ => false,
        });
        let feeds_transform = transforms.iter().any(|t| {
            t.receiver
                .is_some_and(|r| flow.any_derives(&flow.sources(model, r), fit_node))
        });
        if !has_marker && !feeds_transform {
            continue;
        }

        let mut origins = vec![fit_node];
        origins.extend(ctx.arg_sources(fit));
        let later_split = splits.iter().find(|p| {
            p.stmt_index > fit.stmt_index
                && ctx
                    .arg_sources(p)
                    .iter()
                    .any(|&a| origins.iter().any(|&o| flow.derives(a, o).unwrap_or(false)))
        });
        if let Some(split) = later_split {
            let variables = ctx.arg_names_deriving(split, &origins);
            let fixable = model.statement(split.stmt_index).is_movable();
            let mut inst = LeakageInstance::new(
                Cause::SplitAfterTransform,
                fit.stmt_index,
                vec![split.stmt_index],
                variables,
                fixable,
            );
            inst.fix_anchor = Some(fit.stmt_index);
            out.push(inst);
        } else if splits.is_empty() {
            let key: BTreeSet<NodeId> = if receiver_lineage.is_empty() {
                BTreeSet::from([fit_node])
            } else {
                receiver_lineage
                    .iter()
                    .copied()
                    .filter(|&n| flow.parents(n).is_empty())
                    .collect()
            };
            if no_split_lineages.iter().any(|k| !k.is_disjoint(&key)) {
                continue;
            }
            no_split_lineages.push(key);
            let mut variables: Vec<String> = Vec::new();
            for read in ctx.arg_reads(fit) {
                let name = &model.read(read).name;
                if !variables.contains(name) {
                    variables.push(name.clone());
                }
            }
            let mut inst =
                LeakageInstance::new(Cause::NoSplit, fit.stmt_index, Vec::new(), variables, true);
            inst.fix_anchor = Some(fit.stmt_index);
            out.push(inst);
        }
    }
    out
}

/// All three detectors, ordered by source statement then kind.
pub fn detect_all(model: &ProgramModel, flow: &FlowGraph, tax: &Taxonomy) -> Vec<LeakageInstance> {
    let mut all = detect_overlap(model, flow, tax);
    all.extend(detect_preprocessing(model, flow, tax));
    all.extend(detect_multitest(model, flow, tax));
    all.sort_by_key(|i| (i.source_stmt, i.kind));
    all
}
