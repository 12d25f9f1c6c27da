use indexmap::IndexMap;

use super::{AnalyzerError, Result};
use crate::graph::{Graph, LayerNode, Op};
use crate::tensor;

/// Static geometry of one node's output for a given input size.
///
/// Both spatial axes share stride, receptive field and cone offset because
/// every kernel in a graph is square; only output extents and the padding
/// masks are kept per axis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Geometry {
    /// Input pixels per output cell.
    pub stride: usize,
    /// Smallest receptive field over the output channels.
    pub rf_min: usize,
    /// Side of the full dependency cone of one output cell.
    pub rf_max: usize,
    pub out_h: usize,
    pub out_w: usize,
    /// Input coordinate (possibly negative, i.e. in padding) where the cone
    /// of cell 0 starts. Cell `i`'s cone spans
    /// `offset + i * stride .. offset + i * stride + rf_max`.
    pub offset: i64,
    /// `row_influence[i]` is set when some dependency of row `i` lies in
    /// padding, for any column.
    pub row_influence: Vec<bool>,
    pub col_influence: Vec<bool>,
}

impl Geometry {
    fn source(h: usize, w: usize) -> Self {
        Geometry {
            stride: 1,
            rf_min: 1,
            rf_max: 1,
            out_h: h,
            out_w: w,
            offset: 0,
            row_influence: vec![false; h],
            col_influence: vec![false; w],
        }
    }

    /// Number of output cells whose dependency cone reaches padding.
    pub fn padding_influenced(&self) -> usize {
        let rows = self.row_influence.iter().filter(|&&b| b).count();
        let cols = self.col_influence.iter().filter(|&&b| b).count();
        rows * self.out_w + cols * self.out_h - rows * cols
    }

    pub fn is_influenced(&self, row: usize, col: usize) -> bool {
        self.row_influence[row] || self.col_influence[col]
    }

    /// Row-major `out_h x out_w` influence mask.
    pub fn influence_mask(&self) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.out_h * self.out_w);
        for &r in &self.row_influence {
            mask.extend(self.col_influence.iter().map(|&c| r || c));
        }
        mask
    }

    /// Half-open input interval covered by output index `i` along one axis.
    pub fn cone(&self, i: usize) -> (i64, i64) {
        let start = self.offset + (i * self.stride) as i64;
        (start, start + self.rf_max as i64)
    }

    /// Input coordinate the centre of output index `i` maps to, in pixels.
    pub fn center(&self, i: usize) -> f64 {
        let (a, b) = self.cone(i);
        (a + b - 1) as f64 / 2.0
    }
}

/// Per-node geometry of a whole graph, in the graph's node order.
#[derive(Clone, Debug)]
pub struct GraphGeometry {
    input: (usize, usize),
    output: String,
    nodes: IndexMap<String, Geometry>,
}

impl GraphGeometry {
    pub fn input_size(&self) -> (usize, usize) {
        self.input
    }

    pub fn get(&self, id: &str) -> Option<&Geometry> {
        self.nodes.get(id)
    }

    pub fn output(&self) -> &Geometry {
        &self.nodes[&self.output]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Geometry)> {
        self.nodes.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Propagates stride, receptive field, output size and padding influence
/// from an `h x w` input through every node.
pub fn compute_geometry(graph: &Graph, (h, w): (usize, usize)) -> Result<GraphGeometry> {
    if h == 0 || w == 0 {
        return Err(AnalyzerError::InputSize { h, w });
    }
    let mut nodes: IndexMap<String, Geometry> = IndexMap::with_capacity(graph.len());
    for node in graph.nodes() {
        let arg = |k: usize| &nodes[node.inputs[k].as_str()];
        let geo = match &node.op {
            Op::Input { .. } => Geometry::source(h, w),
            Op::Conv { spec, .. } => window(node, arg(0), spec.kernel_h, spec.stride, spec.padding)?,
            Op::MaxPool { kernel, stride } => window(node, arg(0), *kernel, *stride, 0)?,
            Op::Crop { margin } => {
                let g = arg(0);
                let m = *margin;
                if g.out_h <= 2 * m || g.out_w <= 2 * m {
                    return Err(AnalyzerError::Empty {
                        node: node.id.clone(),
                        detail: format!("crop margin {m} leaves nothing of {}x{}", g.out_h, g.out_w),
                    });
                }
                Geometry {
                    out_h: g.out_h - 2 * m,
                    out_w: g.out_w - 2 * m,
                    offset: g.offset + (m * g.stride) as i64,
                    row_influence: g.row_influence[m..g.out_h - m].to_vec(),
                    col_influence: g.col_influence[m..g.out_w - m].to_vec(),
                    ..g.clone()
                }
            }
            Op::Norm { .. } | Op::Relu => arg(0).clone(),
            Op::Add | Op::Concat => merge(node, arg(0), arg(1))?,
        };
        nodes.insert(node.id.clone(), geo);
    }
    Ok(GraphGeometry {
        input: (h, w),
        output: graph.output().to_string(),
        nodes,
    })
}

fn window(node: &LayerNode, g: &Geometry, k: usize, s: usize, p: usize) -> Result<Geometry> {
    let size = |n: usize| {
        tensor::out_dim("geometry", n, k, s, p).map_err(|e| AnalyzerError::Empty {
            node: node.id.clone(),
            detail: e.to_string(),
        })
    };
    let (out_h, out_w) = (size(g.out_h)?, size(g.out_w)?);
    let axis = |mask: &[bool], out: usize| -> Vec<bool> {
        (0..out)
            .map(|i| {
                let start = (i * s) as i64 - p as i64;
                (start..start + k as i64).any(|j| j < 0 || j >= mask.len() as i64 || mask[j as usize])
            })
            .collect()
    };
    Ok(Geometry {
        stride: g.stride * s,
        rf_min: g.rf_min + (k - 1) * g.stride,
        rf_max: g.rf_max + (k - 1) * g.stride,
        out_h,
        out_w,
        offset: g.offset - (p * g.stride) as i64,
        row_influence: axis(&g.row_influence, out_h),
        col_influence: axis(&g.col_influence, out_w),
    })
}

fn merge(node: &LayerNode, a: &Geometry, b: &Geometry) -> Result<Geometry> {
    if a.stride != b.stride {
        return Err(AnalyzerError::StrideMismatch {
            node: node.id.clone(),
            left: a.stride,
            right: b.stride,
        });
    }
    if (a.out_h, a.out_w) != (b.out_h, b.out_w) {
        return Err(AnalyzerError::SizeMismatch {
            node: node.id.clone(),
            left: (a.out_h, a.out_w),
            right: (b.out_h, b.out_w),
        });
    }
    let lo = a.offset.min(b.offset);
    let hi = (a.offset + a.rf_max as i64).max(b.offset + b.rf_max as i64);
    // A summed cell depends on both branches; concatenated channels keep the
    // narrower branch's field as their own.
    let rf_min = match node.op {
        Op::Add => a.rf_min.max(b.rf_min),
        _ => a.rf_min.min(b.rf_min),
    };
    let or = |x: &[bool], y: &[bool]| x.iter().zip(y).map(|(p, q)| *p || *q).collect();
    Ok(Geometry {
        stride: a.stride,
        rf_min,
        rf_max: (hi - lo) as usize,
        out_h: a.out_h,
        out_w: a.out_w,
        offset: lo,
        row_influence: or(&a.row_influence, &b.row_influence),
        col_influence: or(&a.col_influence, &b.col_influence),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{parse_architecture, Architecture, GraphBuilder};

    #[test]
    fn stem_crop_removes_padding_rings() {
        let mut b = GraphBuilder::new("t", "x", 1);
        let c = b.conv("c", "x", 1, 7, 2, 3).unwrap();
        let cr = b.crop("cr", &c, 2).unwrap();
        let g = b.finish(&cr).unwrap();
        let geo = compute_geometry(&g, (127, 127)).unwrap();
        assert_eq!(geo.get("c").unwrap().padding_influenced(), 64 * 64 - 60 * 60);
        let out = geo.output();
        assert_eq!((out.out_h, out.rf_max, out.stride, out.offset), (60, 7, 2, 1));
        assert_eq!(out.padding_influenced(), 0);
    }

    #[test]
    fn mask_counts_are_consistent() {
        let geo = compute_geometry(&Architecture::ResNet22Padded.build(), (127, 95)).unwrap();
        for (_, g) in geo.iter() {
            assert_eq!(g.influence_mask().iter().filter(|&&b| b).count(), g.padding_influenced());
        }
    }

    #[test]
    fn merge_with_unequal_strides_fails() {
        let g = parse_architecture(
            "x input channels=1\n\
             a conv out=1 k=1 s=2 p=0 inputs=x\n\
             b maxpool k=1 s=2 inputs=x\n\
             c conv out=1 k=1 s=1 p=0 inputs=b\n\
             p maxpool k=1 s=1 inputs=a\n\
             s add inputs=p,c\n",
        )
        .unwrap();
        assert!(compute_geometry(&g, (8, 8)).is_ok());
        let g = parse_architecture(
            "x input channels=1\n\
             a conv out=1 k=2 s=2 p=0 inputs=x\n\
             b maxpool k=1 s=1 inputs=x\n\
             c crop m=2 inputs=b\n\
             s concat inputs=a,c\n",
        )
        .unwrap();
        assert!(matches!(
            compute_geometry(&g, (8, 8)),
            Err(AnalyzerError::StrideMismatch { left: 2, right: 1, .. })
        ));
    }

    #[test]
    fn too_small_input_is_an_error() {
        let err = compute_geometry(&Architecture::CiResNet22.build(), (40, 40)).unwrap_err();
        assert!(matches!(err, AnalyzerError::Empty { .. }), "{err}");
    }
}
