use indexmap::IndexMap;

use super::{Graph, GraphError, LayerParams, Op, Result};
use crate::tensor::{self, Tensor, TensorError};

/// Execution knobs for [`Graph::forward_with`].
#[derive(Clone, Debug, Default)]
pub struct ForwardOptions {
    /// Keep every node's output in [`ForwardOutput::intermediates`].
    pub record_intermediates: bool,
    /// Value read at virtual padded coordinates of every convolution. Inference
    /// uses zero; a different value probes which cells depend on padding.
    pub pad_value: f32,
}

#[derive(Clone, Debug)]
pub struct ForwardOutput {
    pub output: Tensor,
    pub intermediates: Option<IndexMap<String, Tensor>>,
}

impl Graph {
    /// Runs the graph on one `C x H x W` image.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with(input, &ForwardOptions::default())?.output)
    }

    pub fn forward_with(&self, input: &Tensor, opts: &ForwardOptions) -> Result<ForwardOutput> {
        let nodes: Vec<_> = self.nodes().collect();
        let mut last_use = vec![0usize; nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            for inp in &n.inputs {
                last_use[self.index_of(inp).expect("validated wiring")] = i;
            }
        }
        let out_idx = self.index_of(self.output()).expect("validated output");
        last_use[out_idx] = usize::MAX;

        let mut values: Vec<Option<Tensor>> = vec![None; nodes.len()];
        let mut recorded = opts.record_intermediates.then(IndexMap::new);

        for (i, node) in nodes.iter().enumerate() {
            let arg = |k: usize| -> &Tensor {
                let j = self.index_of(&node.inputs[k]).expect("validated wiring");
                values[j].as_ref().expect("inputs are evaluated before use")
            };
            let kernel_err = |source: TensorError| GraphError::Kernel {
                node: node.id.clone(),
                source,
            };
            let value = match &node.op {
                Op::Input { channels } => {
                    if input.channels() != *channels {
                        return Err(kernel_err(TensorError::ShapeMismatch {
                            op: "input",
                            dim: "channels",
                            expected: *channels,
                            actual: input.channels(),
                        }));
                    }
                    input.clone()
                }
                Op::Conv { spec, .. } => match self.params(&node.id) {
                    Some(LayerParams::Conv { weight, bias }) => {
                        tensor::conv2d_with_pad_value(arg(0), spec, weight, bias.as_deref(), opts.pad_value)
                            .map_err(kernel_err)?
                    }
                    _ => return Err(GraphError::MissingWeights(node.id.clone())),
                },
                Op::Norm { .. } => match self.params(&node.id) {
                    Some(LayerParams::Norm(p)) => tensor::norm_inference(arg(0), p).map_err(kernel_err)?,
                    _ => return Err(GraphError::MissingWeights(node.id.clone())),
                },
                Op::MaxPool { kernel, stride } => tensor::maxpool2d(arg(0), *kernel, *stride).map_err(kernel_err)?,
                Op::Crop { margin } => tensor::crop(arg(0), *margin).map_err(kernel_err)?,
                Op::Relu => tensor::relu(arg(0)),
                Op::Add => tensor::add(arg(0), arg(1)).map_err(kernel_err)?,
                Op::Concat => tensor::concat_channels(arg(0), arg(1)).map_err(kernel_err)?,
            };
            for inp in &node.inputs {
                let j = self.index_of(inp).expect("validated wiring");
                if last_use[j] == i && recorded.is_none() {
                    values[j] = None;
                }
            }
            if let Some(r) = recorded.as_mut() {
                r.insert(node.id.clone(), value.clone());
            }
            values[i] = Some(value);
        }
        Ok(ForwardOutput {
            output: values[out_idx].take().expect("output evaluated"),
            intermediates: recorded,
        })
    }
}
