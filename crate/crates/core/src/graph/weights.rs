//! Parameter storage, seeded initialization and the `CIRW` weights file.
//!
//! File layout (little-endian): `CIRW`, `u32` version, `u32` entry count, then
//! per entry `u32` name length, UTF-8 name, `u32` rank, `rank x u32` dims and
//! the raw `f32` values. Entry names are `<node>.<field>` with fields
//! `weight`/`bias` for convolutions and `scale`/`shift`/`mean`/`var` for norms.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, GraphError, LayerNode, Op, Result};
use crate::tensor::NormParams;

pub const WEIGHTS_MAGIC: &[u8; 4] = b"CIRW";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Conv { weight: Vec<f32>, bias: Option<Vec<f32>> },
    Norm(NormParams),
}

impl LayerParams {
    /// Element count of one field, `None` if the variant lacks it.
    pub(crate) fn len_of(&self, field: &str) -> Option<usize> {
        self.entries().into_iter().find(|(f, _)| *f == field).map(|(_, d)| d.len())
    }

    /// Total number of stored scalars.
    pub fn len(&self) -> usize {
        self.entries().iter().map(|(_, d)| d.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn entries(&self) -> Vec<(&'static str, &[f32])> {
        match self {
            LayerParams::Conv { weight, bias } => {
                let mut v = vec![("weight", weight.as_slice())];
                if let Some(b) = bias {
                    v.push(("bias", b.as_slice()));
                }
                v
            }
            LayerParams::Norm(p) => vec![
                ("scale", p.scale.as_slice()),
                ("shift", p.shift.as_slice()),
                ("mean", p.mean.as_slice()),
                ("var", p.var.as_slice()),
            ],
        }
    }
}

/// Entry names and full dims a node owns in a weights file.
pub(crate) fn expected_entries(node: &LayerNode) -> Vec<(String, Vec<usize>)> {
    let id = &node.id;
    match &node.op {
        Op::Conv { spec, bias, .. } => {
            let mut v = vec![(
                format!("{id}.weight"),
                vec![spec.out_channels, spec.in_channels / spec.groups, spec.kernel_h, spec.kernel_w],
            )];
            if *bias {
                v.push((format!("{id}.bias"), vec![spec.out_channels]));
            }
            v
        }
        Op::Norm { .. } => ["scale", "shift", "mean", "var"]
            .iter()
            .map(|f| (format!("{id}.{f}"), vec![node.channels]))
            .collect(),
        _ => Vec::new(),
    }
}

/// How [`Graph::init_with`] draws parameters. Normalization layers always
/// start at the identity (scale 1, shift 0, mean 0, var 1).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitScheme {
    /// Uniform in `±sqrt(6 / fan_in)`; biases uniform in `±1 / sqrt(fan_in)`.
    #[default]
    FanInUniform,
    /// Uniform in `[0.5, 1.5] / fan_in`, biases in `[0, 0.1)`. Every
    /// dependency then moves the output in the same direction, which the
    /// dependency oracles rely on.
    Positive,
}

impl Graph {
    /// Seeded, deterministic initialization with [`InitScheme::FanInUniform`].
    pub fn init_random(&mut self, seed: u64) {
        self.init_with(seed, InitScheme::FanInUniform);
    }

    pub fn init_with(&mut self, seed: u64, scheme: InitScheme) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fresh = Vec::new();
        for node in self.nodes() {
            match &node.op {
                Op::Conv { spec, bias, .. } => {
                    let fan_in = spec.fan_in() as f32;
                    let (weight, b): (Vec<f32>, Option<Vec<f32>>) = match scheme {
                        InitScheme::FanInUniform => {
                            let wb = (6.0 / fan_in).sqrt();
                            let bb = 1.0 / fan_in.sqrt();
                            let w = (0..spec.weight_len()).map(|_| rng.gen_range(-wb..wb)).collect();
                            let b = bias.then(|| (0..spec.out_channels).map(|_| rng.gen_range(-bb..bb)).collect());
                            (w, b)
                        }
                        InitScheme::Positive => {
                            let w = (0..spec.weight_len()).map(|_| rng.gen_range(0.5..1.5) / fan_in).collect();
                            let b = bias.then(|| (0..spec.out_channels).map(|_| rng.gen_range(0.0..0.1)).collect());
                            (w, b)
                        }
                    };
                    fresh.push((node.id.clone(), LayerParams::Conv { weight, bias: b }));
                }
                Op::Norm { eps } => {
                    fresh.push((node.id.clone(), LayerParams::Norm(NormParams::identity(node.channels, *eps))));
                }
                _ => {}
            }
        }
        let weights = self.weights_mut();
        weights.clear();
        weights.extend(fresh);
    }
}

pub fn write_weights_to<W: Write>(mut w: W, graph: &Graph) -> Result<()> {
    let mut entries = Vec::new();
    for node in graph.nodes() {
        let expected = expected_entries(node);
        if expected.is_empty() {
            continue;
        }
        let params = graph
            .params(&node.id)
            .ok_or_else(|| GraphError::MissingWeights(node.id.clone()))?;
        for ((name, dims), (_, data)) in expected.into_iter().zip(params.entries()) {
            entries.push((name, dims, data));
        }
    }
    w.write_all(WEIGHTS_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (name, dims, data) in entries {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&(dims.len() as u32).to_le_bytes())?;
        for d in dims {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a weights file into `graph`, replacing its parameters.
///
/// The file must carry exactly the entries the graph expects; otherwise the
/// error lists the missing and unexpected names and the graph is untouched.
pub fn read_weights_from<R: Read>(mut r: R, graph: &mut Graph) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != WEIGHTS_MAGIC {
        return Err(GraphError::WeightFormat(format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(GraphError::WeightFormat(format!("unsupported version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut file: BTreeMap<String, (Vec<usize>, Vec<f32>)> = BTreeMap::new();
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| GraphError::WeightFormat(e.to_string()))?;
        let rank = read_u32(&mut r)? as usize;
        let dims = (0..rank)
            .map(|_| read_u32(&mut r).map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()?;
        let n: usize = dims.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if file.insert(name.clone(), (dims, data)).is_some() {
            return Err(GraphError::WeightFormat(format!("duplicate entry `{name}`")));
        }
    }

    let expected: Vec<_> = graph.nodes().flat_map(expected_entries).collect();
    let missing: Vec<String> = expected
        .iter()
        .filter(|(n, _)| !file.contains_key(n))
        .map(|(n, _)| n.clone())
        .collect();
    let extra: Vec<String> = file
        .keys()
        .filter(|k| !expected.iter().any(|(n, _)| n == *k))
        .cloned()
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(GraphError::WeightMismatch { missing, extra });
    }
    for (name, dims) in &expected {
        if &file[name].0 != dims {
            return Err(GraphError::WeightShape {
                name: name.clone(),
                expected: dims.clone(),
                actual: file[name].0.clone(),
            });
        }
    }

    let mut take = |name: String| file.remove(&name).map(|(_, d)| d).unwrap_or_default();
    let mut loaded = Vec::new();
    for node in graph.nodes() {
        let id = &node.id;
        match &node.op {
            Op::Conv { bias, .. } => {
                let weight = take(format!("{id}.weight"));
                let bias = bias.then(|| take(format!("{id}.bias")));
                loaded.push((id.clone(), LayerParams::Conv { weight, bias }));
            }
            Op::Norm { eps } => loaded.push((
                id.clone(),
                LayerParams::Norm(NormParams {
                    scale: take(format!("{id}.scale")),
                    shift: take(format!("{id}.shift")),
                    mean: take(format!("{id}.mean")),
                    var: take(format!("{id}.var")),
                    eps: *eps,
                }),
            )),
            _ => {}
        }
    }
    let weights = graph.weights_mut();
    weights.clear();
    weights.extend(loaded);
    Ok(())
}

pub fn save_weights(graph: &Graph, path: impl AsRef<Path>) -> Result<()> {
    write_weights_to(BufWriter::new(File::create(path)?), graph)
}

pub fn load_weights(graph: &mut Graph, path: impl AsRef<Path>) -> Result<()> {
    read_weights_from(BufReader::new(File::open(path)?), graph)
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
