//! Dense channel-major tensors and the handful of inference kernels the
//! backbones need.
//!
//! Every kernel is a pure function: inputs are borrowed, outputs are freshly
//! allocated. Padding is always zero padding.

mod io;
mod ops;

pub use io::{read_tensor, read_tensor_from, write_tensor, write_tensor_to, TENSOR_MAGIC};
pub use ops::{add, concat_channels, conv2d, crop, maxpool2d, norm_inference, relu};
pub(crate) use ops::conv2d_with_pad_value;

use std::fmt;

use thiserror::Error;

/// Errors raised by tensor construction and kernels.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: {dim} mismatch (expected {expected}, got {actual})")]
    ShapeMismatch {
        op: &'static str,
        dim: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("{op}: output would be empty ({detail})")]
    EmptyOutput { op: &'static str, detail: String },
    #[error("invalid argument to {op}: {detail}")]
    InvalidArgument { op: &'static str, detail: String },
    #[error("malformed tensor file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Spatial extent of a rank-3 tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(TensorError::InvalidArgument {
                op: "shape",
                detail: format!("all dimensions must be positive, got {channels}x{height}x{width}"),
            });
        }
        Ok(Shape {
            channels,
            height,
            width,
        })
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A `channels x height x width` array of `f32`, stored row-major per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Shape, data: Vec<f32>) -> Result<Self> {
        let shape = Shape::new(shape.channels, shape.height, shape.width)?;
        if data.len() != shape.len() {
            return Err(TensorError::ShapeMismatch {
                op: "tensor",
                dim: "data length",
                expected: shape.len(),
                actual: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn filled(shape: Shape, value: f32) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.len()],
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn from_fn(shape: Shape, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..shape.channels {
            for y in 0..shape.height {
                for x in 0..shape.width {
                    data.push(f(c, y, x));
                }
            }
        }
        Tensor { shape, data }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.shape.plane();
        &self.data[c * plane..(c + 1) * plane]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Translates the content by `(dy, dx)` pixels; vacated cells take `fill`.
    pub fn translated(&self, dy: isize, dx: isize, fill: f32) -> Tensor {
        let (h, w) = (self.shape.height as isize, self.shape.width as isize);
        Tensor::from_fn(self.shape, |c, y, x| {
            let (sy, sx) = (y as isize - dy, x as isize - dx);
            if sy < 0 || sx < 0 || sy >= h || sx >= w {
                fill
            } else {
                self.get(c, sy as usize, sx as usize)
            }
        })
    }

    /// Copies the window `[top, top+height) x [left, left+width)` of every channel.
    pub fn window(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Tensor> {
        if top + height > self.shape.height || left + width > self.shape.width {
            return Err(TensorError::InvalidArgument {
                op: "window",
                detail: format!(
                    "window {height}x{width} at ({top},{left}) exceeds {}",
                    self.shape
                ),
            });
        }
        let shape = Shape::new(self.shape.channels, height, width)?;
        Ok(Tensor::from_fn(shape, |c, y, x| self.get(c, top + y, left + x)))
    }

    /// Repeats a single-channel tensor `channels` times.
    pub fn broadcast_channels(&self, channels: usize) -> Result<Tensor> {
        if self.shape.channels == channels {
            return Ok(self.clone());
        }
        if self.shape.channels != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "broadcast_channels",
                dim: "channels",
                expected: 1,
                actual: self.shape.channels,
            });
        }
        let shape = Shape::new(channels, self.shape.height, self.shape.width)?;
        let mut data = Vec::with_capacity(shape.len());
        for _ in 0..channels {
            data.extend_from_slice(&self.data);
        }
        Ok(Tensor { shape, data })
    }

    /// Largest absolute elementwise difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Tensor) -> Result<f32> {
        if self.shape != other.shape {
            return Err(TensorError::InvalidArgument {
                op: "max_abs_diff",
                detail: format!("shapes {} and {} differ", self.shape, other.shape),
            });
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max))
    }
}

/// Layer hyper-parameters of a 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    pub fn square(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            out_channels,
            in_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            stride,
            padding,
            groups: 1,
        }
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |detail: String| Err(TensorError::InvalidArgument { op: "conv2d", detail });
        if self.out_channels == 0 || self.in_channels == 0 || self.kernel_h == 0 || self.kernel_w == 0 {
            return fail(format!("zero-sized convolution {self:?}"));
        }
        if self.stride == 0 {
            return fail("stride must be at least 1".into());
        }
        if self.groups == 0 || self.in_channels % self.groups != 0 || self.out_channels % self.groups != 0 {
            return fail(format!(
                "groups {} must divide in_channels {} and out_channels {}",
                self.groups, self.in_channels, self.out_channels
            ));
        }
        Ok(())
    }

    /// Number of weights: `out * (in / groups) * kh * kw`.
    pub fn weight_len(&self) -> usize {
        self.out_channels * (self.in_channels / self.groups) * self.kernel_h * self.kernel_w
    }

    pub fn fan_in(&self) -> usize {
        (self.in_channels / self.groups) * self.kernel_h * self.kernel_w
    }

    pub fn output_dims(&self, height: usize, width: usize) -> Result<(usize, usize)> {
        let h = out_dim("conv2d", height, self.kernel_h, self.stride, self.padding)?;
        let w = out_dim("conv2d", width, self.kernel_w, self.stride, self.padding)?;
        Ok((h, w))
    }
}

/// Output length of a sliding window: `floor((n + 2p - k) / s) + 1`.
pub fn out_dim(op: &'static str, n: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = n + 2 * padding;
    if padded < kernel {
        return Err(TensorError::EmptyOutput {
            op,
            detail: format!("extent {n} with padding {padding} is smaller than kernel {kernel}"),
        });
    }
    Ok((padded - kernel) / stride + 1)
}

/// A convolution together with its weights (`[out][in/groups][kh][kw]`) and optional bias.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvParams {
    pub spec: ConvSpec,
    pub weights: Vec<f32>,
    pub bias: Option<Vec<f32>>,
}

impl ConvParams {
    pub fn new(spec: ConvSpec, weights: Vec<f32>, bias: Option<Vec<f32>>) -> Result<Self> {
        spec.validate()?;
        if weights.len() != spec.weight_len() {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d",
                dim: "weights length",
                expected: spec.weight_len(),
                actual: weights.len(),
            });
        }
        if let Some(b) = &bias {
            if b.len() != spec.out_channels {
                return Err(TensorError::ShapeMismatch {
                    op: "conv2d",
                    dim: "bias length",
                    expected: spec.out_channels,
                    actual: b.len(),
                });
            }
        }
        Ok(ConvParams { spec, weights, bias })
    }
}

/// Per-channel affine parameters of an inference-mode normalization layer.
#[derive(Clone, Debug, PartialEq)]
pub struct NormParams {
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    pub eps: f32,
}

impl NormParams {
    pub fn identity(channels: usize, eps: f32) -> Self {
        NormParams {
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            eps,
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }
}
