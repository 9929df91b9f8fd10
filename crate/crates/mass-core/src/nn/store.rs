//! Named parameter storage, decoupled from any single computation graph.
//!
//! Parameters live here between steps; each graph build binds every entry
//! as a grad-requiring leaf. The optimizer walks entries in insertion
//! order, which is fixed by model construction and hence deterministic.

use crate::nn::graph::{Graph, NodeId};
use crate::scalar::Scalar;

/// Index of a parameter within its store.
pub type ParamId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<S: Scalar> {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore<S: Scalar> {
    entries: Vec<ParamEntry<S>>,
}

impl<S: Scalar> ParamStore<S> {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, rows: usize, cols: usize, data: Vec<S>) -> ParamId {
        let name = name.into();
        assert_eq!(data.len(), rows * cols, "param {name}: data length mismatch");
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        self.entries.push(ParamEntry { name, rows, cols, data });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entry(&self, id: ParamId) -> &ParamEntry<S> {
        &self.entries[id]
    }

    pub fn entry_mut(&mut self, id: ParamId) -> &mut ParamEntry<S> {
        &mut self.entries[id]
    }

    pub fn by_name(&self, name: &str) -> Option<&ParamEntry<S>> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry<S>> {
        self.entries.iter()
    }

    /// Total scalar count across all entries.
    pub fn total_params(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    /// Bind every parameter into `g` as a grad-requiring leaf.
    pub fn bind(&self, g: &mut Graph<S>) -> Binding {
        let nodes = self
            .entries
            .iter()
            .map(|e| g.leaf(e.rows, e.cols, e.data.clone(), true))
            .collect();
        Binding { nodes }
    }
}

/// Parameter-to-node mapping for one graph build.
#[derive(Debug, Clone)]
pub struct Binding {
    nodes: Vec<NodeId>,
}

impl Binding {
    pub fn node(&self, p: ParamId) -> NodeId {
        self.nodes[p]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, NodeId)> + '_ {
        self.nodes.iter().copied().enumerate()
    }
}
