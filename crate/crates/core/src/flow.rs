//! Derives-from lineage over variable versions and call results.
//!
//! Statements are processed in document order. Each binding of a name creates
//! a new [`VarVersion`]; each call creates a result node. Edges point from a
//! node to the nodes its value was computed from, so every edge goes from a
//! newer node to an older one and node ids are a topological order.

use std::collections::HashMap;

use thiserror::Error;

use crate::syntax::{CallId, ExprId, ExprKind, ProgramModel, ReadId, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarVersion {
    pub name: String,
    /// 0-based, incremented at each binding of `name`.
    pub version: usize,
    pub def_stmt: usize,
    pub def_span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Version(VarVersion),
    CallResult(CallId),
    /// A name read before any binding of it.
    Origin {
        name: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("flow graph has no node {0:?}")]
pub struct UnknownNode(pub NodeId);

#[derive(Debug, Clone)]
pub struct FlowGraph {
    nodes: Vec<Node>,
    parents: Vec<Vec<NodeId>>,
    read_nodes: Vec<NodeId>,
    call_nodes: Vec<NodeId>,
    /// Origin (if any) followed by every version of each name, oldest first.
    lineage: HashMap<String, Vec<NodeId>>,
}

struct Builder {
    graph: FlowGraph,
    current: HashMap<String, NodeId>,
    version_counts: HashMap<String, usize>,
}

/// Builds the lineage graph for a parsed unit.
pub fn build_flow(model: &ProgramModel) -> FlowGraph {
    let mut b = Builder {
        graph: FlowGraph {
            nodes: Vec::new(),
            parents: Vec::new(),
            read_nodes: vec![NodeId(usize::MAX); model.name_reads.len()],
            call_nodes: vec![NodeId(usize::MAX); model.calls.len()],
            lineage: HashMap::new(),
        },
        current: HashMap::new(),
        version_counts: HashMap::new(),
    };

    let mut next_read = 0;
    for stmt in &model.statements {
        while next_read < model.name_reads.len()
            && model.name_reads[next_read].stmt_index == stmt.index
        {
            let name = &model.name_reads[next_read].name;
            let node = b.current_or_origin(name);
            b.graph.read_nodes[next_read] = node;
            next_read += 1;
        }

        for &call_id in &stmt.rhs_calls {
            let call = model.call(call_id);
            let mut parents = Vec::new();
            if let Some(recv) = call.receiver {
                b.graph.collect_sources(model, recv, &mut parents);
            }
            for arg in call.all_args() {
                b.graph.collect_sources(model, arg, &mut parents);
            }
            let node = b.add(Node::CallResult(call_id), parents);
            b.graph.call_nodes[call_id.0] = node;
        }

        let mut value_parents = Vec::new();
        if let Some(value) = stmt.value {
            b.graph.collect_sources(model, value, &mut value_parents);
            let value_span = model.expr(value).span;
            for &call_id in &stmt.rhs_calls {
                if value_span.contains(&model.call(call_id).span) {
                    value_parents.push(b.graph.call_nodes[call_id.0]);
                }
            }
        }

        for name in &stmt.lhs_names {
            let mut parents = value_parents.clone();
            if stmt.augmented || stmt.conditional {
                if let Some(&old) = b.current.get(name) {
                    parents.push(old);
                }
            }
            b.bind(name, stmt.index, stmt.span, parents);
        }
        for name in &stmt.updated_names {
            let mut parents = value_parents.clone();
            parents.push(b.current_or_origin(name));
            b.bind(name, stmt.index, stmt.span, parents);
        }
    }
    b.graph
}

impl Builder {
    fn add(&mut self, node: Node, mut parents: Vec<NodeId>) -> NodeId {
        parents.sort();
        parents.dedup();
        let id = NodeId(self.graph.nodes.len());
        self.graph.nodes.push(node);
        self.graph.parents.push(parents);
        id
    }

    fn current_or_origin(&mut self, name: &str) -> NodeId {
        if let Some(&node) = self.current.get(name) {
            return node;
        }
        let node = self.add(
            Node::Origin {
                name: name.to_string(),
            },
            Vec::new(),
        );
        self.current.insert(name.to_string(), node);
        self.graph
            .lineage
            .entry(name.to_string())
            .or_default()
            .push(node);
        node
    }

    fn bind(&mut self, name: &str, stmt: usize, span: Span, parents: Vec<NodeId>) {
        let count = self.version_counts.entry(name.to_string()).or_insert(0);
        let version = *count;
        *count += 1;
        let node = self.add(
            Node::Version(VarVersion {
                name: name.to_string(),
                version,
                def_stmt: stmt,
                def_span: span,
            }),
            parents,
        );
        self.current.insert(name.to_string(), node);
        self.graph
            .lineage
            .entry(name.to_string())
            .or_default()
            .push(node);
    }
}

impl FlowGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, UnknownNode> {
        self.nodes.get(id.0).ok_or(UnknownNode(id))
    }

    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.parents[id.0]
    }

    /// Node a name read resolves to.
    pub fn read_node(&self, read: ReadId) -> NodeId {
        self.read_nodes[read.0]
    }

    pub fn call_node(&self, call: CallId) -> NodeId {
        self.call_nodes[call.0]
    }

    /// Origin and versions of `name`, oldest first.
    pub fn lineage_of(&self, name: &str) -> &[NodeId] {
        self.lineage.get(name).map_or(&[], Vec::as_slice)
    }

    /// Nodes an expression's value is directly computed from.
    pub fn sources(&self, model: &ProgramModel, expr: ExprId) -> Vec<NodeId> {
        let mut out = Vec::new();
        self.collect_sources(model, expr, &mut out);
        out.sort();
        out.dedup();
        out
    }

    fn collect_sources(&self, model: &ProgramModel, expr: ExprId, out: &mut Vec<NodeId>) {
        match &model.expr(expr).kind {
            ExprKind::Name(read) => out.push(self.read_nodes[read.0]),
            ExprKind::Call(call) => out.push(self.call_nodes[call.0]),
            ExprKind::Attribute { base, .. } => self.collect_sources(model, *base, out),
            ExprKind::Subscript { base, index } => {
                self.collect_sources(model, *base, out);
                for i in index {
                    self.collect_sources(model, *i, out);
                }
            }
            ExprKind::Compound(parts) => {
                for p in parts {
                    self.collect_sources(model, *p, out);
                }
            }
            ExprKind::Literal | ExprKind::Lambda => {}
        }
    }

    /// Reflexive-transitive reachability from `node` along derives-from edges.
    pub fn derives(&self, node: NodeId, origin: NodeId) -> Result<bool, UnknownNode> {
        self.node(node)?;
        self.node(origin)?;
        if node == origin {
            return Ok(true);
        }
        // Parents are always older, so nothing below `origin` can reach it.
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            for &p in &self.parents[n.0] {
                if p == origin {
                    return Ok(true);
                }
                if p > origin && !seen[p.0] {
                    seen[p.0] = true;
                    stack.push(p);
                }
            }
        }
        Ok(false)
    }

    /// Whether any of `nodes` derives from `origin`.
    pub fn any_derives(&self, nodes: &[NodeId], origin: NodeId) -> bool {
        nodes
            .iter()
            .any(|&n| self.derives(n, origin).unwrap_or(false))
    }

    /// Every node reachable from `node`, including itself.
    pub fn ancestors(&self, node: NodeId) -> Vec<NodeId> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![node];
        seen[node.0] = true;
        let mut out = Vec::new();
        while let Some(n) = stack.pop() {
            out.push(n);
            for &p in &self.parents[n.0] {
                if !seen[p.0] {
                    seen[p.0] = true;
                    stack.push(p);
                }
            }
        }
        out.sort();
        out
    }
}
