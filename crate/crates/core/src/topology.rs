//! Alignment graphs whose start-to-end paths of exactly `T` emitting steps
//! define the set of alignments a graph transducer loss sums over.
//!
//! A graph has a non-emitting start node (id 0), a non-emitting end node
//! (the highest id), and emitting nodes in between, each carrying a
//! vocabulary label. Observations live on edges: traversing an edge into an
//! emitting node consumes one time step and scores the destination label
//! under the decoder state attached to the edge. Edges into the end node are
//! epsilon transitions consuming nothing.
//!
//! Two builders are provided. The CTC-like chain interleaves blank nodes
//! with label nodes, gives both self-loops, and skips the label-to-label
//! shortcut when two consecutive labels are equal. The monotonic chain has
//! blank self-loops only, so each label is emitted exactly once and
//! back-to-back labels are legal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const START_NODE: usize = 0;

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("invalid-label: label {label} at position {position} equals blank id {blank_id}")]
    LabelIsBlank { label: usize, position: usize, blank_id: usize },
    #[error("invalid-label: label {label} at position {position} outside vocabulary of size {vocab_size}")]
    LabelOutOfRange { label: usize, position: usize, vocab_size: usize },
    #[error("edge-into-start: edge {from}->{to} enters the start node")]
    EdgeIntoStart { from: usize, to: usize },
    #[error("edge-out-of-end: edge {from}->{to} leaves the end node")]
    EdgeOutOfEnd { from: usize, to: usize },
    #[error("dangling-edge: edge {from}->{to} references a node outside 0..{num_nodes}")]
    DanglingEdge { from: usize, to: usize, num_nodes: usize },
    #[error("bad-topological-order: edge {from}->{to} goes backwards")]
    BadTopologicalOrder { from: usize, to: usize },
    #[error("unreachable-node: node {node} is not reachable from start")]
    UnreachableNode { node: usize },
    #[error("not-coreachable: node {node} cannot reach the end node")]
    NotCoReachable { node: usize },
    #[error("decoder-state-range: edge {from}->{to} carries decoder state {decoder_state}, maximum is {max}")]
    DecoderStateRange { from: usize, to: usize, decoder_state: usize, max: usize },
    #[error("terminal-emits: node {node} is a start/end node but carries a label")]
    TerminalEmits { node: usize },
    #[error("interior-non-emitting: node {node} is interior but carries no label")]
    InteriorNonEmitting { node: usize },
    #[error("min-path-len-mismatch: stored {stored}, shortest emitting path has {computed}")]
    MinPathLenMismatch { stored: usize, computed: usize },
    #[error("graph needs a start and an end node")]
    TooFewNodes,
}

/// Reference label sequence; never contains the blank symbol.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSequence(Vec<usize>);

impl LabelSequence {
    pub fn new(labels: Vec<usize>, blank_id: usize, vocab_size: usize) -> Result<Self, GraphError> {
        for (position, &label) in labels.iter().enumerate() {
            if label == blank_id {
                return Err(GraphError::LabelIsBlank { label, position, blank_id });
            }
            if label >= vocab_size {
                return Err(GraphError::LabelOutOfRange { label, position, vocab_size });
            }
        }
        Ok(Self(labels))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.0
    }
}

/// Directed edge; `decoder_state` selects the lattice row consumed when the
/// edge is traversed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub decoder_state: usize,
}

/// The two monotonic graph topologies with built-in constructors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonotonicTopology {
    CtcT,
    MonoRnnT,
}

impl MonotonicTopology {
    pub fn build_graph(
        self,
        labels: &LabelSequence,
        blank_id: usize,
        vocab_size: usize,
    ) -> Result<AlignmentGraph, GraphError> {
        match self {
            MonotonicTopology::CtcT => build_ctct_graph(labels, blank_id, vocab_size),
            MonotonicTopology::MonoRnnT => build_monornnt_graph(labels, blank_id, vocab_size),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MonotonicTopology::CtcT => "ctct",
            MonotonicTopology::MonoRnnT => "monornnt",
        }
    }
}

/// Immutable alignment graph. Node ids form a topological order (ignoring
/// self-loops) with 0 the start node and the highest id the end node.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentGraph {
    /// Emitted label per node id; `None` for the start and end nodes.
    emit_labels: Vec<Option<usize>>,
    edges: Vec<Edge>,
    /// Edge indices grouped by destination node.
    in_edges: Vec<Vec<usize>>,
    /// Edge indices grouped by source node.
    out_edges: Vec<Vec<usize>>,
    num_labels: usize,
    min_path_len: usize,
    blank_id: usize,
    vocab_size: usize,
}

impl AlignmentGraph {
    /// Assemble a graph from raw parts (used by the builders and the JSON
    /// loader). Callers are expected to run [`validate_graph`] afterwards
    /// when the parts come from outside this module.
    pub fn from_parts(
        emit_labels: Vec<Option<usize>>,
        edges: Vec<Edge>,
        num_labels: usize,
        min_path_len: usize,
        blank_id: usize,
        vocab_size: usize,
    ) -> Self {
        let n = emit_labels.len();
        let mut in_edges = vec![Vec::new(); n];
        let mut out_edges = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            if e.to < n {
                in_edges[e.to].push(i);
            }
            if e.from < n {
                out_edges[e.from].push(i);
            }
        }
        Self { emit_labels, edges, in_edges, out_edges, num_labels, min_path_len, blank_id, vocab_size }
    }

    pub fn num_nodes(&self) -> usize {
        self.emit_labels.len()
    }

    pub fn end_node(&self) -> usize {
        self.emit_labels.len() - 1
    }

    pub fn emit_label(&self, node: usize) -> Option<usize> {
        self.emit_labels[node]
    }

    pub fn is_emitting(&self, node: usize) -> bool {
        self.emit_labels[node].is_some()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn in_edges(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.in_edges[node].iter().map(move |&i| &self.edges[i])
    }

    pub fn out_edges(&self, node: usize) -> impl Iterator<Item = &Edge> {
        self.out_edges[node].iter().map(move |&i| &self.edges[i])
    }

    /// Reference label count `U`; decoder states on edges lie in `[0, U]`.
    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Smallest number of emitting steps on any start-to-end path.
    pub fn min_path_len(&self) -> usize {
        self.min_path_len
    }

    pub fn blank_id(&self) -> usize {
        self.blank_id
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Number of distinct start-to-end paths with exactly `t_steps` emitting
    /// steps, counted by dynamic programming (saturating on overflow).
    pub fn path_count(&self, t_steps: usize) -> u64 {
        let n = self.num_nodes();
        let end = self.end_node();
        let mut counts = vec![0u64; n];
        counts[START_NODE] = 1;
        for _ in 0..t_steps {
            let mut next = vec![0u64; n];
            for e in &self.edges {
                if e.to != end && self.is_emitting(e.to) {
                    next[e.to] = next[e.to].saturating_add(counts[e.from]);
                }
            }
            counts = next;
        }
        self.in_edges(end)
            .fold(0u64, |acc, e| acc.saturating_add(counts[e.from]))
    }

    /// Shortest emitting-step count over start-to-end paths, if the end node
    /// is reachable at all.
    fn shortest_emitting_path(&self) -> Option<usize> {
        let n = self.num_nodes();
        let end = self.end_node();
        let mut dist = vec![usize::MAX; n];
        dist[START_NODE] = 0;
        // Ids are topologically ordered apart from self-loops, which never
        // shorten a path, so one ascending sweep suffices.
        for node in 0..n {
            if dist[node] == usize::MAX {
                continue;
            }
            for e in self.out_edges(node) {
                let cost = if e.to == end { 0 } else { 1 };
                let cand = dist[node].saturating_add(cost);
                if cand < dist[e.to] {
                    dist[e.to] = cand;
                }
            }
        }
        (dist[end] != usize::MAX).then_some(dist[end])
    }
}

/// Build the CTC-like chain for `labels`: blank nodes interleaved with label
/// nodes, self-loops on both, and a label-to-label skip only when the two
/// labels differ.
pub fn build_ctct_graph(
    labels: &LabelSequence,
    blank_id: usize,
    vocab_size: usize,
) -> Result<AlignmentGraph, GraphError> {
    check_labels(labels, blank_id, vocab_size)?;
    let u_len = labels.len();
    let y = labels.labels();

    // Node l*2 is label node l (1-based), node l*2+1 is the blank after l
    // labels; node 1 is the leading blank.
    let label_node = |l: usize| 2 * l;
    let blank_node = |l: usize| 2 * l + 1;
    let end = 2 * u_len + 2;

    let mut emit_labels: Vec<Option<usize>> = vec![None; end + 1];
    for l in 1..=u_len {
        emit_labels[label_node(l)] = Some(y[l - 1]);
    }
    for l in 0..=u_len {
        emit_labels[blank_node(l)] = Some(blank_id);
    }

    let mut edges = Vec::new();
    edges.push(Edge { from: START_NODE, to: blank_node(0), decoder_state: 0 });
    if u_len > 0 {
        edges.push(Edge { from: START_NODE, to: label_node(1), decoder_state: 0 });
    }
    for l in 0..=u_len {
        edges.push(Edge { from: blank_node(l), to: blank_node(l), decoder_state: l });
        if l < u_len {
            edges.push(Edge { from: blank_node(l), to: label_node(l + 1), decoder_state: l });
        }
    }
    for l in 1..=u_len {
        // Repeat emissions condition on the already-consumed label history.
        edges.push(Edge { from: label_node(l), to: label_node(l), decoder_state: l });
        edges.push(Edge { from: label_node(l), to: blank_node(l), decoder_state: l });
        if l < u_len && y[l - 1] != y[l] {
            edges.push(Edge { from: label_node(l), to: label_node(l + 1), decoder_state: l });
        }
    }
    edges.push(Edge { from: blank_node(u_len), to: end, decoder_state: u_len });
    if u_len > 0 {
        edges.push(Edge { from: label_node(u_len), to: end, decoder_state: u_len });
    }

    let repeats = y.windows(2).filter(|w| w[0] == w[1]).count();
    let min_path_len = (u_len + repeats).max(1);
    Ok(AlignmentGraph::from_parts(emit_labels, edges, u_len, min_path_len, blank_id, vocab_size))
}

/// Build the strictly monotonic chain for `labels`: one blank node per
/// decoder level with a self-loop, one node per label, and direct
/// label-to-label edges so back-to-back labels are legal. Labels are never
/// repeated, so every path emits exactly `U` labels.
pub fn build_monornnt_graph(
    labels: &LabelSequence,
    blank_id: usize,
    vocab_size: usize,
) -> Result<AlignmentGraph, GraphError> {
    check_labels(labels, blank_id, vocab_size)?;
    let u_len = labels.len();
    let y = labels.labels();

    let label_node = |l: usize| 2 * l;
    let blank_node = |l: usize| 2 * l + 1;
    let end = 2 * u_len + 2;

    let mut emit_labels: Vec<Option<usize>> = vec![None; end + 1];
    for l in 1..=u_len {
        emit_labels[label_node(l)] = Some(y[l - 1]);
    }
    for l in 0..=u_len {
        emit_labels[blank_node(l)] = Some(blank_id);
    }

    let mut edges = Vec::new();
    edges.push(Edge { from: START_NODE, to: blank_node(0), decoder_state: 0 });
    if u_len > 0 {
        edges.push(Edge { from: START_NODE, to: label_node(1), decoder_state: 0 });
    }
    for l in 0..=u_len {
        edges.push(Edge { from: blank_node(l), to: blank_node(l), decoder_state: l });
        if l < u_len {
            edges.push(Edge { from: blank_node(l), to: label_node(l + 1), decoder_state: l });
        }
    }
    for l in 1..=u_len {
        edges.push(Edge { from: label_node(l), to: blank_node(l), decoder_state: l });
        if l < u_len {
            edges.push(Edge { from: label_node(l), to: label_node(l + 1), decoder_state: l });
        }
    }
    edges.push(Edge { from: blank_node(u_len), to: end, decoder_state: u_len });
    if u_len > 0 {
        edges.push(Edge { from: label_node(u_len), to: end, decoder_state: u_len });
    }

    let min_path_len = u_len.max(1);
    Ok(AlignmentGraph::from_parts(emit_labels, edges, u_len, min_path_len, blank_id, vocab_size))
}

fn check_labels(labels: &LabelSequence, blank_id: usize, vocab_size: usize) -> Result<(), GraphError> {
    // LabelSequence construction already validates, but the sequence may
    // have been built against a different (blank, vocab) pair.
    for (position, &label) in labels.labels().iter().enumerate() {
        if label == blank_id {
            return Err(GraphError::LabelIsBlank { label, position, blank_id });
        }
        if label >= vocab_size {
            return Err(GraphError::LabelOutOfRange { label, position, vocab_size });
        }
    }
    Ok(())
}

/// Check every structural invariant of an alignment graph, reporting the
/// first violation. Also recomputes the shortest emitting path and compares
/// it with the stored `min_path_len`.
pub fn validate_graph(g: &AlignmentGraph) -> Result<(), GraphError> {
    let n = g.num_nodes();
    if n < 2 {
        return Err(GraphError::TooFewNodes);
    }
    let end = g.end_node();

    if g.emit_label(START_NODE).is_some() {
        return Err(GraphError::TerminalEmits { node: START_NODE });
    }
    if g.emit_label(end).is_some() {
        return Err(GraphError::TerminalEmits { node: end });
    }
    for node in 1..end {
        match g.emit_label(node) {
            None => return Err(GraphError::InteriorNonEmitting { node }),
            Some(label) if label >= g.vocab_size() => {
                return Err(GraphError::LabelOutOfRange {
                    label,
                    position: node,
                    vocab_size: g.vocab_size(),
                })
            }
            Some(_) => {}
        }
    }

    for e in g.edges() {
        if e.from >= n || e.to >= n {
            return Err(GraphError::DanglingEdge { from: e.from, to: e.to, num_nodes: n });
        }
        if e.to == START_NODE {
            return Err(GraphError::EdgeIntoStart { from: e.from, to: e.to });
        }
        if e.from == end {
            return Err(GraphError::EdgeOutOfEnd { from: e.from, to: e.to });
        }
        if e.to < e.from {
            return Err(GraphError::BadTopologicalOrder { from: e.from, to: e.to });
        }
        if e.decoder_state > g.num_labels() {
            return Err(GraphError::DecoderStateRange {
                from: e.from,
                to: e.to,
                decoder_state: e.decoder_state,
                max: g.num_labels(),
            });
        }
    }

    // Reachability from start, following edges forward.
    let mut reach = vec![false; n];
    reach[START_NODE] = true;
    let mut stack = vec![START_NODE];
    while let Some(node) = stack.pop() {
        for e in g.out_edges(node) {
            if !reach[e.to] {
                reach[e.to] = true;
                stack.push(e.to);
            }
        }
    }
    if let Some(node) = reach.iter().position(|r| !r) {
        return Err(GraphError::UnreachableNode { node });
    }

    // Co-reachability to end, following edges backward.
    let mut coreach = vec![false; n];
    coreach[end] = true;
    let mut stack = vec![end];
    while let Some(node) = stack.pop() {
        for e in g.in_edges(node) {
            if !coreach[e.from] {
                coreach[e.from] = true;
                stack.push(e.from);
            }
        }
    }
    if let Some(node) = coreach.iter().position(|r| !r) {
        return Err(GraphError::NotCoReachable { node });
    }

    let computed = g
        .shortest_emitting_path()
        .expect("end is co-reachable, so a shortest path exists");
    if computed != g.min_path_len() {
        return Err(GraphError::MinPathLenMismatch { stored: g.min_path_len(), computed });
    }

    Ok(())
}
