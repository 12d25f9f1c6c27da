//! Layer graphs: node types, a validating builder, unit and architecture
//! builders, forward execution, weight files and the text description format.

mod arch;
mod forward;
mod text;
mod units;
mod weights;

pub use arch::{build_architecture, Architecture};
pub use forward::{ForwardOptions, ForwardOutput};
pub use text::{dump_architecture, parse_architecture};
pub use units::{build_unit, UnitKind, UnitVariant};
pub use weights::{load_weights, read_weights_from, save_weights, write_weights_to, InitScheme, LayerParams, WEIGHTS_MAGIC};

use std::fmt;

use indexmap::IndexMap;
use thiserror::Error;

use crate::tensor::{ConvSpec, TensorError};

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("node `{node}` references unknown input `{input}`")]
    UnknownInput { node: String, input: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{node}` ({kind}) expects {expected} input(s), got {actual}")]
    Arity {
        node: String,
        kind: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("node `{node}`: {detail}")]
    Channels { node: String, detail: String },
    #[error("graph contains a cycle through `{0}`")]
    Cycle(String),
    #[error("graph has no input node")]
    NoInput,
    #[error("invalid unit: {0}")]
    InvalidUnit(String),
    #[error("unknown architecture `{0}` (expected one of: {list})", list = Architecture::names().join(", "))]
    UnknownArchitecture(String),
    #[error("node `{node}`: {source}")]
    Kernel {
        node: String,
        #[source]
        source: TensorError,
    },
    #[error("no weights loaded for node `{0}`")]
    MissingWeights(String),
    #[error("weights do not match graph (missing: [{}]; unexpected: [{}])", missing.join(", "), extra.join(", "))]
    WeightMismatch { missing: Vec<String>, extra: Vec<String> },
    #[error("weight entry `{name}` has dims {actual:?}, graph expects {expected:?}")]
    WeightShape {
        name: String,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },
    #[error("malformed weights file: {0}")]
    WeightFormat(String),
    #[error("architecture text line {line}: {detail}")]
    Parse { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// Operation performed by a node.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    /// Graph source carrying the image channel count.
    Input { channels: usize },
    /// `shortcut` marks projection convolutions on a residual bypass; they
    /// are excluded from the weighted-layer depth.
    Conv { spec: ConvSpec, bias: bool, shortcut: bool },
    MaxPool { kernel: usize, stride: usize },
    Crop { margin: usize },
    Norm { eps: f32 },
    Relu,
    Add,
    Concat,
}

impl Op {
    pub fn kind(&self) -> &'static str {
        match self {
            Op::Input { .. } => "input",
            Op::Conv { .. } => "conv",
            Op::MaxPool { .. } => "maxpool",
            Op::Crop { .. } => "crop",
            Op::Norm { .. } => "norm",
            Op::Relu => "relu",
            Op::Add => "add",
            Op::Concat => "concat",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Op::Input { .. } => 0,
            Op::Add | Op::Concat => 2,
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNode {
    pub id: String,
    pub op: Op,
    pub inputs: Vec<String>,
    /// Output channel count, fixed at construction.
    pub channels: usize,
}

/// A directed acyclic layer graph with a single input and a single output.
///
/// Nodes are stored in a topological order; every input of a node appears
/// before it.
#[derive(Clone, Debug)]
pub struct Graph {
    name: String,
    nodes: IndexMap<String, LayerNode>,
    output: String,
    weights: IndexMap<String, LayerParams>,
}

impl Graph {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> impl Iterator<Item = &LayerNode> {
        self.nodes.values()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: &str) -> Option<&LayerNode> {
        self.nodes.get(id)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.nodes.get_index_of(id)
    }

    pub fn output(&self) -> &str {
        &self.output
    }

    pub fn output_node(&self) -> &LayerNode {
        &self.nodes[&self.output]
    }

    pub fn input_node(&self) -> &LayerNode {
        // the builder always starts with the input node
        &self.nodes[0]
    }

    pub fn input_channels(&self) -> usize {
        self.input_node().channels
    }

    pub fn output_channels(&self) -> usize {
        self.output_node().channels
    }

    /// Convolutions on the main path, i.e. the depth in the ResNet naming sense.
    pub fn weighted_conv_count(&self) -> usize {
        self.nodes()
            .filter(|n| matches!(n.op, Op::Conv { shortcut: false, .. }))
            .count()
    }

    pub fn conv_count(&self) -> usize {
        self.nodes().filter(|n| matches!(n.op, Op::Conv { .. })).count()
    }

    pub fn weights(&self) -> &IndexMap<String, LayerParams> {
        &self.weights
    }

    pub fn has_weights(&self) -> bool {
        self.nodes()
            .filter(|n| matches!(n.op, Op::Conv { .. } | Op::Norm { .. }))
            .all(|n| self.weights.contains_key(&n.id))
    }

    /// Installs parameters for one node after checking them against its op.
    pub fn set_params(&mut self, id: &str, params: LayerParams) -> Result<()> {
        let node = self.nodes.get(id).ok_or_else(|| GraphError::UnknownNode(id.to_string()))?;
        for (name, expected) in weights::expected_entries(node) {
            let actual = params.len_of(&name[node.id.len() + 1..]);
            if actual != Some(expected.iter().product()) {
                return Err(GraphError::WeightShape {
                    name,
                    expected,
                    actual: actual.map(|n| vec![n]).unwrap_or_default(),
                });
            }
        }
        self.weights.insert(id.to_string(), params);
        Ok(())
    }

    pub fn params(&self, id: &str) -> Option<&LayerParams> {
        self.weights.get(id)
    }

    pub(crate) fn weights_mut(&mut self) -> &mut IndexMap<String, LayerParams> {
        &mut self.weights
    }

    /// Compares structure (ids, ops, wiring, output) but not weights.
    pub fn same_structure(&self, other: &Graph) -> bool {
        self.output == other.output
            && self.nodes.len() == other.nodes.len()
            && self.nodes.values().zip(other.nodes.values()).all(|(a, b)| a == b)
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&dump_architecture(self))
    }
}

/// Incrementally assembles a [`Graph`], checking ids, arity and channel counts.
#[derive(Clone, Debug)]
pub struct GraphBuilder {
    name: String,
    nodes: IndexMap<String, LayerNode>,
}

impl GraphBuilder {
    pub fn new(name: impl Into<String>, input_id: impl Into<String>, channels: usize) -> Self {
        let id = input_id.into();
        let mut nodes = IndexMap::new();
        nodes.insert(
            id.clone(),
            LayerNode {
                id,
                op: Op::Input { channels },
                inputs: Vec::new(),
                channels,
            },
        );
        GraphBuilder {
            name: name.into(),
            nodes,
        }
    }

    pub fn input_id(&self) -> &str {
        &self.nodes[0].id
    }

    pub fn channels_of(&self, id: &str) -> Option<usize> {
        self.nodes.get(id).map(|n| n.channels)
    }

    /// Adds a node. For convolutions, `spec.in_channels` must match the input.
    pub fn push(&mut self, id: impl Into<String>, op: Op, inputs: &[&str]) -> Result<String> {
        let id = id.into();
        if self.nodes.contains_key(&id) {
            return Err(GraphError::DuplicateNode(id));
        }
        if inputs.len() != op.arity() {
            return Err(GraphError::Arity {
                node: id,
                kind: op.kind(),
                expected: op.arity(),
                actual: inputs.len(),
            });
        }
        let mut chans = Vec::with_capacity(inputs.len());
        for &input in inputs {
            match self.nodes.get(input) {
                Some(n) => chans.push(n.channels),
                None => {
                    return Err(GraphError::UnknownInput {
                        node: id,
                        input: input.to_string(),
                    })
                }
            }
        }
        let bad = |detail: String| GraphError::Channels { node: id.clone(), detail };
        let channels = match &op {
            Op::Input { .. } => return Err(bad("only the first node may be an input".into())),
            Op::Conv { spec, .. } => {
                spec.validate().map_err(|e| bad(e.to_string()))?;
                if spec.in_channels != chans[0] {
                    return Err(bad(format!(
                        "conv expects {} input channels, input has {}",
                        spec.in_channels, chans[0]
                    )));
                }
                spec.out_channels
            }
            Op::MaxPool { kernel, stride } => {
                if *kernel == 0 || *stride == 0 {
                    return Err(bad("maxpool kernel and stride must be positive".into()));
                }
                chans[0]
            }
            Op::Add => {
                if chans[0] != chans[1] {
                    return Err(bad(format!("add operands have {} and {} channels", chans[0], chans[1])));
                }
                chans[0]
            }
            Op::Concat => chans[0] + chans[1],
            Op::Crop { .. } | Op::Norm { .. } | Op::Relu => chans[0],
        };
        self.nodes.insert(
            id.clone(),
            LayerNode {
                id: id.clone(),
                op,
                inputs: inputs.iter().map(|s| s.to_string()).collect(),
                channels,
            },
        );
        Ok(id)
    }

    /// Bias-free convolution with explicit kernel, stride and padding.
    pub fn conv(
        &mut self,
        id: impl Into<String>,
        input: &str,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    ) -> Result<String> {
        self.conv_with(id, input, out_channels, kernel, stride, padding, 1, false, false)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn conv_with(
        &mut self,
        id: impl Into<String>,
        input: &str,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        groups: usize,
        bias: bool,
        shortcut: bool,
    ) -> Result<String> {
        let in_channels = self.channels_of(input).unwrap_or(0);
        let spec = ConvSpec::square(in_channels, out_channels, kernel, stride, padding).with_groups(groups);
        self.push(id, Op::Conv { spec, bias, shortcut }, &[input])
    }

    pub fn norm(&mut self, id: impl Into<String>, input: &str) -> Result<String> {
        self.push(id, Op::Norm { eps: NORM_EPS }, &[input])
    }

    pub fn relu(&mut self, id: impl Into<String>, input: &str) -> Result<String> {
        self.push(id, Op::Relu, &[input])
    }

    pub fn maxpool(&mut self, id: impl Into<String>, input: &str, kernel: usize, stride: usize) -> Result<String> {
        self.push(id, Op::MaxPool { kernel, stride }, &[input])
    }

    pub fn crop(&mut self, id: impl Into<String>, input: &str, margin: usize) -> Result<String> {
        self.push(id, Op::Crop { margin }, &[input])
    }

    pub fn add(&mut self, id: impl Into<String>, a: &str, b: &str) -> Result<String> {
        self.push(id, Op::Add, &[a, b])
    }

    pub fn concat(&mut self, id: impl Into<String>, a: &str, b: &str) -> Result<String> {
        self.push(id, Op::Concat, &[a, b])
    }

    pub fn finish(self, output: &str) -> Result<Graph> {
        if !self.nodes.contains_key(output) {
            return Err(GraphError::UnknownNode(output.to_string()));
        }
        Ok(Graph {
            name: self.name,
            nodes: self.nodes,
            output: output.to_string(),
            weights: IndexMap::new(),
        })
    }
}

pub const NORM_EPS: f32 = 1e-5;
