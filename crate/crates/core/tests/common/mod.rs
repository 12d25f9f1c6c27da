//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's kernels: convolutions, pools and
//! normalization are written as plain nested loops, and the dependency
//! oracles only use `Graph::forward_with` as a black box.

#![allow(dead_code)]

use cirnet::graph::{ForwardOptions, Graph, GraphBuilder, InitScheme};
use cirnet::tensor::{ConvParams, NormParams, Shape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rng: &mut impl Rng, c: usize, h: usize, w: usize, lo: f32, hi: f32) -> Tensor {
    Tensor::from_fn(Shape::new(c, h, w).unwrap(), |_, _, _| rng.gen_range(lo..hi))
}

/// Definition-based grouped convolution with zero padding.
pub fn conv_reference(x: &Tensor, p: &ConvParams) -> Vec<Vec<Vec<f64>>> {
    let s = &p.spec;
    let oh = (x.height() + 2 * s.padding - s.kernel_h) / s.stride + 1;
    let ow = (x.width() + 2 * s.padding - s.kernel_w) / s.stride + 1;
    let cin_g = s.in_channels / s.groups;
    let cout_g = s.out_channels / s.groups;
    let mut out = vec![vec![vec![0f64; ow]; oh]; s.out_channels];
    for (co, plane) in out.iter_mut().enumerate() {
        let g = co / cout_g;
        for (oy, row) in plane.iter_mut().enumerate() {
            for (ox, cell) in row.iter_mut().enumerate() {
                let mut acc = p.bias.as_ref().map_or(0.0, |b| b[co] as f64);
                for ci in 0..cin_g {
                    for ky in 0..s.kernel_h {
                        for kx in 0..s.kernel_w {
                            let iy = (oy * s.stride + ky) as i64 - s.padding as i64;
                            let ix = (ox * s.stride + kx) as i64 - s.padding as i64;
                            if iy < 0 || ix < 0 || iy >= x.height() as i64 || ix >= x.width() as i64 {
                                continue;
                            }
                            let wi = ((co * cin_g + ci) * s.kernel_h + ky) * s.kernel_w + kx;
                            acc += p.weights[wi] as f64 * x.get(g * cin_g + ci, iy as usize, ix as usize) as f64;
                        }
                    }
                }
                *cell = acc;
            }
        }
    }
    out
}

pub fn pool_reference(x: &Tensor, k: usize, s: usize) -> Vec<Vec<Vec<f32>>> {
    let oh = (x.height() - k) / s + 1;
    let ow = (x.width() - k) / s + 1;
    (0..x.channels())
        .map(|c| {
            (0..oh)
                .map(|oy| {
                    (0..ow)
                        .map(|ox| {
                            let mut m = f32::NEG_INFINITY;
                            for ky in 0..k {
                                for kx in 0..k {
                                    m = m.max(x.get(c, oy * s + ky, ox * s + kx));
                                }
                            }
                            m
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

pub fn norm_reference(x: &Tensor, p: &NormParams) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.data().len());
    for c in 0..x.channels() {
        let inv = 1.0 / (p.var[c] as f64 + p.eps as f64).sqrt();
        for &v in x.channel(c) {
            out.push((v as f64 - p.mean[c] as f64) * inv * p.scale[c] as f64 + p.shift[c] as f64);
        }
    }
    out
}

pub fn flatten(v: &[Vec<Vec<f64>>]) -> Vec<f64> {
    v.iter().flatten().flatten().copied().collect()
}

/// Spatial cells (row-major) where any channel of `a` and `b` differ.
pub fn differing_cells(a: &Tensor, b: &Tensor) -> Vec<bool> {
    assert_eq!(a.shape(), b.shape());
    let plane = a.height() * a.width();
    let mut out = vec![false; plane];
    for c in 0..a.channels() {
        for (i, (x, y)) in a.channel(c).iter().zip(b.channel(c)).enumerate() {
            if x.to_bits() != y.to_bits() {
                out[i] = true;
            }
        }
    }
    out
}

/// Two-forward padding oracle: the cells whose value changes when every
/// convolution reads `pad_value` instead of zero at padded coordinates.
/// Expects monotone weights (see [`InitScheme::Positive`]) and a positive input.
pub fn padding_oracle(graph: &Graph, input: &Tensor, pad_value: f32) -> Vec<bool> {
    let zero = graph.forward(input).unwrap();
    let probe = graph
        .forward_with(
            input,
            &ForwardOptions {
                pad_value,
                ..ForwardOptions::default()
            },
        )
        .unwrap()
        .output;
    differing_cells(&zero, &probe)
}

/// A random monotone graph whose receptive cones are nested at every merge,
/// so the dependency set of an output cell is exactly its cone.
pub fn random_graph(rng: &mut impl Rng, max_side: usize) -> (Graph, (usize, usize)) {
    loop {
        let h = rng.gen_range(12..=max_side);
        let w = rng.gen_range(12..=max_side);
        if let Some(g) = try_random_graph(rng, (h, w)) {
            return (g, (h, w));
        }
    }
}

fn try_random_graph(rng: &mut impl Rng, (h, w): (usize, usize)) -> Option<Graph> {
    let channels = rng.gen_range(1..=3);
    let mut b = GraphBuilder::new("random", "x", channels);
    let mut x = "x".to_string();
    let (mut sh, mut sw) = (h, w);
    let mut stride = 1;
    let layers = rng.gen_range(1..=7);
    for i in 0..layers {
        let c = b.channels_of(&x).unwrap();
        let id = |name: &str| format!("{name}{i}");
        let choice = rng.gen_range(0..7);
        let next = match choice {
            0 | 1 => {
                let k = [1, 2, 3, 5][rng.gen_range(0..4)];
                let s = if stride < 8 { rng.gen_range(1..=k.min(2)) } else { 1 };
                let p = rng.gen_range(0..=k / 2);
                let out = rng.gen_range(1..=4) * 2;
                let groups = if c % 2 == 0 && rng.gen_bool(0.3) { 2 } else { 1 };
                let size = |n: usize| (n + 2 * p).checked_sub(k).map(|v| v / s + 1);
                let (nh, nw) = (size(sh)?, size(sw)?);
                stride *= s;
                sh = nh;
                sw = nw;
                b.conv_with(id("conv"), &x, out, k, s, p, groups, rng.gen_bool(0.5), false).ok()?
            }
            2 => {
                let k = rng.gen_range(2..=3);
                let s = if stride < 8 { rng.gen_range(1..=2) } else { 1 };
                if sh < k || sw < k {
                    return None;
                }
                sh = (sh - k) / s + 1;
                sw = (sw - k) / s + 1;
                stride *= s;
                b.maxpool(id("pool"), &x, k, s).ok()?
            }
            3 => {
                if sh <= 2 || sw <= 2 {
                    return None;
                }
                sh -= 2;
                sw -= 2;
                b.crop(id("crop"), &x, 1).ok()?
            }
            4 => {
                let n = b.norm(id("norm"), &x).ok()?;
                b.relu(id("relu"), &n).ok()?
            }
            5 => {
                // same-padded trunk around an identity shortcut
                let t = b.conv(id("ra"), &x, c, 3, 1, 1).ok()?;
                let t = b.relu(id("rr"), &t).ok()?;
                let t = b.conv(id("rb"), &t, c, 3, 1, 1).ok()?;
                b.add(id("radd"), &t, &x).ok()?
            }
            _ => {
                let t = b.conv(id("cc"), &x, rng.gen_range(1..=3), 1, 1, 0).ok()?;
                b.concat(id("cat"), &x, &t).ok()?
            }
        };
        x = next;
    }
    let mut g = b.finish(&x).ok()?;
    g.init_with(rng.gen(), InitScheme::Positive);
    Some(g)
}

/// Definition of the sliding inner product, one displacement at a time.
pub fn xcorr_reference(z: &Tensor, x: &Tensor, bias: f64) -> Vec<Vec<f64>> {
    let (oh, ow) = (x.height() - z.height() + 1, x.width() - z.width() + 1);
    (0..oh)
        .map(|u| {
            (0..ow)
                .map(|v| {
                    let mut s = bias;
                    for c in 0..z.channels() {
                        for i in 0..z.height() {
                            for j in 0..z.width() {
                                s += z.get(c, i, j) as f64 * x.get(c, u + i, v + j) as f64;
                            }
                        }
                    }
                    s
                })
                .collect()
        })
        .collect()
}

/// `x` of the given size, zero except for `z` pasted with its corner at `(u, v)`.
pub fn embed(z: &Tensor, h: usize, w: usize, (u, v): (usize, usize)) -> Tensor {
    Tensor::from_fn(Shape::new(z.channels(), h, w).unwrap(), |c, y, x| {
        if (u..u + z.height()).contains(&y) && (v..v + z.width()).contains(&x) {
            z.get(c, y - u, x - v)
        } else {
            0.0
        }
    })
}
