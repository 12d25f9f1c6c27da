use super::{out_dim, ConvParams, ConvSpec, NormParams, Result, Shape, Tensor, TensorError};

/// 2-D cross-correlation with zero padding, grouped channels and optional bias.
///
/// Reductions accumulate in `f64`; the result is rounded to `f32` once per cell.
pub fn conv2d(input: &Tensor, params: &ConvParams) -> Result<Tensor> {
    conv2d_with_pad_value(input, &params.spec, &params.weights, params.bias.as_deref(), 0.0)
}

/// As [`conv2d`], but virtual padded coordinates read `pad_value` instead of zero.
///
/// Only the padding-perturbation oracles use a non-zero value.
pub(crate) fn conv2d_with_pad_value(
    input: &Tensor,
    spec: &ConvSpec,
    weights: &[f32],
    bias: Option<&[f32]>,
    pad_value: f32,
) -> Result<Tensor> {
    spec.validate()?;
    if input.channels() != spec.in_channels {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            dim: "input channels",
            expected: spec.in_channels,
            actual: input.channels(),
        });
    }
    if weights.len() != spec.weight_len() {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d",
            dim: "weights length",
            expected: spec.weight_len(),
            actual: weights.len(),
        });
    }
    let (h, w) = (input.height(), input.width());
    let (oh, ow) = spec.output_dims(h, w)?;
    let (kh, kw, s, p) = (spec.kernel_h, spec.kernel_w, spec.stride, spec.padding);
    let cin_g = spec.in_channels / spec.groups;
    let cout_g = spec.out_channels / spec.groups;
    let depth = cin_g * kh * kw;
    let cells = oh * ow;
    let pad = pad_value as f64;

    let mut col = vec![0.0f64; depth * cells];
    let mut wmat = vec![0.0f64; cout_g * depth];
    let mut acc = vec![0.0f64; cout_g * cells];
    let mut out = Vec::with_capacity(spec.out_channels * cells);
    let src = input.data();

    for g in 0..spec.groups {
        for ci in 0..cin_g {
            let plane = &src[(g * cin_g + ci) * h * w..(g * cin_g + ci + 1) * h * w];
            for ky in 0..kh {
                for kx in 0..kw {
                    let row = &mut col[((ci * kh + ky) * kw + kx) * cells..][..cells];
                    for oy in 0..oh {
                        let iy = (oy * s + ky) as isize - p as isize;
                        let dst = &mut row[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= h as isize {
                            dst.fill(pad);
                            continue;
                        }
                        let line = &plane[iy as usize * w..(iy as usize + 1) * w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p as isize;
                            *d = if ix < 0 || ix >= w as isize {
                                pad
                            } else {
                                line[ix as usize] as f64
                            };
                        }
                    }
                }
            }
        }
        for (dst, &src) in wmat
            .iter_mut()
            .zip(&weights[g * cout_g * depth..(g + 1) * cout_g * depth])
        {
            *dst = src as f64;
        }
        // SAFETY: all three buffers are dense row-major matrices whose lengths
        // match the (m, k, n) dimensions and strides passed below.
        unsafe {
            matrixmultiply::dgemm(
                cout_g,
                depth,
                cells,
                1.0,
                wmat.as_ptr(),
                depth as isize,
                1,
                col.as_ptr(),
                cells as isize,
                1,
                0.0,
                acc.as_mut_ptr(),
                cells as isize,
                1,
            );
        }
        for co in 0..cout_g {
            let b = bias.map_or(0.0, |b| b[g * cout_g + co] as f64);
            out.extend(acc[co * cells..(co + 1) * cells].iter().map(|&v| (v + b) as f32));
        }
    }
    Tensor::new(Shape::new(spec.out_channels, oh, ow)?, out)
}

/// Max pooling without padding.
pub fn maxpool2d(input: &Tensor, kernel: usize, stride: usize) -> Result<Tensor> {
    if kernel == 0 || stride == 0 {
        return Err(TensorError::InvalidArgument {
            op: "maxpool2d",
            detail: format!("kernel {kernel} and stride {stride} must be positive"),
        });
    }
    let (h, w) = (input.height(), input.width());
    let oh = out_dim("maxpool2d", h, kernel, stride, 0)?;
    let ow = out_dim("maxpool2d", w, kernel, stride, 0)?;
    let shape = Shape::new(input.channels(), oh, ow)?;
    let mut out = Vec::with_capacity(shape.len());
    for c in 0..input.channels() {
        let plane = input.channel(c);
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f32::NEG_INFINITY;
                for ky in 0..kernel {
                    let row = &plane[(oy * stride + ky) * w..];
                    for kx in 0..kernel {
                        let v = row[ox * stride + kx];
                        if v > best || v.is_nan() {
                            best = v;
                        }
                    }
                }
                out.push(best);
            }
        }
    }
    Tensor::new(shape, out)
}

/// Removes `margin` cells from every border of every channel.
pub fn crop(input: &Tensor, margin: usize) -> Result<Tensor> {
    let (h, w) = (input.height(), input.width());
    if h <= 2 * margin || w <= 2 * margin {
        return Err(TensorError::EmptyOutput {
            op: "crop",
            detail: format!("margin {margin} leaves nothing of a {h}x{w} map"),
        });
    }
    input.window(margin, margin, h - 2 * margin, w - 2 * margin)
}

pub fn relu(input: &Tensor) -> Tensor {
    input.map(|v| if v > 0.0 { v } else { 0.0 })
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        let (dim, expected, actual) = first_mismatch(a.shape(), b.shape());
        return Err(TensorError::ShapeMismatch {
            op: "add",
            dim,
            expected,
            actual,
        });
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::new(a.shape(), data)
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.height() != b.height() {
        return Err(TensorError::ShapeMismatch {
            op: "concat_channels",
            dim: "height",
            expected: a.height(),
            actual: b.height(),
        });
    }
    if a.width() != b.width() {
        return Err(TensorError::ShapeMismatch {
            op: "concat_channels",
            dim: "width",
            expected: a.width(),
            actual: b.width(),
        });
    }
    let mut data = Vec::with_capacity(a.data().len() + b.data().len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::new(Shape::new(a.channels() + b.channels(), a.height(), a.width())?, data)
}

/// Inference-mode normalization: `(x - mean) / sqrt(var + eps) * scale + shift` per channel.
pub fn norm_inference(input: &Tensor, params: &NormParams) -> Result<Tensor> {
    let c = input.channels();
    for (dim, len) in [
        ("scale length", params.scale.len()),
        ("shift length", params.shift.len()),
        ("mean length", params.mean.len()),
        ("var length", params.var.len()),
    ] {
        if len != c {
            return Err(TensorError::ShapeMismatch {
                op: "norm_inference",
                dim,
                expected: c,
                actual: len,
            });
        }
    }
    let plane = input.shape().plane();
    let mut out = Vec::with_capacity(input.data().len());
    for ch in 0..c {
        let mean = params.mean[ch] as f64;
        let denom = (params.var[ch] as f64 + params.eps as f64).sqrt();
        let (scale, shift) = (params.scale[ch] as f64, params.shift[ch] as f64);
        out.extend(
            input.data()[ch * plane..(ch + 1) * plane]
                .iter()
                .map(|&v| ((v as f64 - mean) / denom * scale + shift) as f32),
        );
    }
    Tensor::new(input.shape(), out)
}

fn first_mismatch(a: Shape, b: Shape) -> (&'static str, usize, usize) {
    if a.channels != b.channels {
        ("channels", a.channels, b.channels)
    } else if a.height != b.height {
        ("height", a.height, b.height)
    } else {
        ("width", a.width, b.width)
    }
}
