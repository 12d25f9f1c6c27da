//! Line-oriented architecture description.
//!
//! ```text
//! @name tiny
//! input input channels=3
//! c1 conv out=8 k=3 s=1 p=0 inputs=input
//! r1 relu inputs=c1
//! @output r1
//! ```
//!
//! Each node line is `id kind key=value... inputs=a,b`. Convolutions take
//! `out`, `k`, `s`, `p` and optionally `g`, `bias`, `shortcut`; pools take
//! `k` and `s`; crops take `m`; norms may set `eps`. Lines may appear in any
//! order, `#` starts a comment, and the output defaults to the last node.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Graph, GraphBuilder, GraphError, Op, Result, NORM_EPS};
use crate::tensor::ConvSpec;

/// Renders a graph in the text format; [`parse_architecture`] inverts it.
pub fn dump_architecture(graph: &Graph) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "@name {}", graph.name());
    for node in graph.nodes() {
        let _ = write!(s, "{} {}", node.id, node.op.kind());
        match &node.op {
            Op::Input { channels } => {
                let _ = write!(s, " channels={channels}");
            }
            Op::Conv { spec, bias, shortcut } => {
                let _ = write!(
                    s,
                    " out={} k={} s={} p={}",
                    spec.out_channels, spec.kernel_h, spec.stride, spec.padding
                );
                if spec.groups != 1 {
                    let _ = write!(s, " g={}", spec.groups);
                }
                if *bias {
                    s.push_str(" bias=1");
                }
                if *shortcut {
                    s.push_str(" shortcut=1");
                }
            }
            Op::MaxPool { kernel, stride } => {
                let _ = write!(s, " k={kernel} s={stride}");
            }
            Op::Crop { margin } => {
                let _ = write!(s, " m={margin}");
            }
            Op::Norm { eps } => {
                if *eps != NORM_EPS {
                    let _ = write!(s, " eps={eps:e}");
                }
            }
            Op::Relu | Op::Add | Op::Concat => {}
        }
        if !node.inputs.is_empty() {
            let _ = write!(s, " inputs={}", node.inputs.join(","));
        }
        s.push('\n');
    }
    let _ = writeln!(s, "@output {}", graph.output());
    s
}

struct Line {
    number: usize,
    id: String,
    kind: String,
    keys: HashMap<String, String>,
    inputs: Vec<String>,
}

impl Line {
    fn err(&self, detail: impl Into<String>) -> GraphError {
        GraphError::Parse {
            line: self.number,
            detail: detail.into(),
        }
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.keys
            .get(key)
            .map(|v| v.parse::<T>().map_err(|_| self.err(format!("invalid value `{v}` for `{key}`"))))
            .transpose()
    }

    fn need<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| self.err(format!("{} `{}` is missing `{key}=`", self.kind, self.id)))
    }

    fn flag(&self, key: &str) -> Result<bool> {
        Ok(self.get::<u8>(key)?.unwrap_or(0) != 0)
    }

    fn allow(&self, allowed: &[&str]) -> Result<()> {
        match self.keys.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(self.err(format!("unknown key `{k}` for {}", self.kind))),
            None => Ok(()),
        }
    }
}

/// Parses the text format, ordering nodes topologically.
pub fn parse_architecture(text: &str) -> Result<Graph> {
    let mut name = String::from("custom");
    let mut output = None;
    let mut lines: Vec<Line> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let number = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let perr = |detail: String| GraphError::Parse { line: number, detail };
        let mut words = content.split_whitespace();
        let head = words.next().unwrap_or_default();
        if let Some(directive) = head.strip_prefix('@') {
            let value = words.next().ok_or_else(|| perr(format!("`@{directive}` needs a value")))?;
            match directive {
                "name" => name = value.to_string(),
                "output" => output = Some(value.to_string()),
                other => return Err(perr(format!("unknown directive `@{other}`"))),
            }
            continue;
        }
        let kind = words.next().ok_or_else(|| perr(format!("node `{head}` has no kind")))?;
        let mut keys = HashMap::new();
        let mut inputs = Vec::new();
        for w in words {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| perr(format!("expected key=value, got `{w}`")))?;
            if k == "inputs" {
                inputs = v.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect();
            } else if keys.insert(k.to_string(), v.to_string()).is_some() {
                return Err(perr(format!("duplicate key `{k}`")));
            }
        }
        lines.push(Line {
            number,
            id: head.to_string(),
            kind: kind.to_string(),
            keys,
            inputs,
        });
    }

    let order = topological_order(&lines)?;
    let first = &lines[order[0]];
    if first.kind != "input" {
        return Err(GraphError::NoInput);
    }
    first.allow(&["channels"])?;
    let mut b = GraphBuilder::new(name, first.id.clone(), first.need("channels")?);
    for &i in &order[1..] {
        let l = &lines[i];
        let inputs: Vec<&str> = l.inputs.iter().map(String::as_str).collect();
        let in_channels = inputs.first().and_then(|x| b.channels_of(x)).unwrap_or(0);
        let op = match l.kind.as_str() {
            "input" => return Err(l.err("a graph has exactly one input node")),
            "conv" => {
                l.allow(&["out", "k", "s", "p", "g", "bias", "shortcut"])?;
                let spec = ConvSpec::square(in_channels, l.need("out")?, l.need("k")?, l.need("s")?, l.need("p")?)
                    .with_groups(l.get("g")?.unwrap_or(1));
                Op::Conv {
                    spec,
                    bias: l.flag("bias")?,
                    shortcut: l.flag("shortcut")?,
                }
            }
            "maxpool" => {
                l.allow(&["k", "s"])?;
                Op::MaxPool {
                    kernel: l.need("k")?,
                    stride: l.need("s")?,
                }
            }
            "crop" => {
                l.allow(&["m"])?;
                Op::Crop { margin: l.need("m")? }
            }
            "norm" => {
                l.allow(&["eps"])?;
                Op::Norm {
                    eps: l.get("eps")?.unwrap_or(NORM_EPS),
                }
            }
            "relu" => Op::Relu,
            "add" => Op::Add,
            "concat" => Op::Concat,
            other => return Err(l.err(format!("unknown node kind `{other}`"))),
        };
        if matches!(op, Op::Relu | Op::Add | Op::Concat) {
            l.allow(&[])?;
        }
        b.push(l.id.clone(), op, &inputs)?;
    }
    let output = output.unwrap_or_else(|| lines[*order.last().expect("nonempty")].id.clone());
    b.finish(&output)
}

/// Kahn's algorithm, preferring file order among ready nodes.
fn topological_order(lines: &[Line]) -> Result<Vec<usize>> {
    if lines.is_empty() {
        return Err(GraphError::NoInput);
    }
    let mut index = HashMap::new();
    for (i, l) in lines.iter().enumerate() {
        if index.insert(l.id.as_str(), i).is_some() {
            return Err(GraphError::DuplicateNode(l.id.clone()));
        }
    }
    let mut pending = vec![0usize; lines.len()];
    let mut users = vec![Vec::new(); lines.len()];
    for (i, l) in lines.iter().enumerate() {
        for inp in &l.inputs {
            let &j = index.get(inp.as_str()).ok_or_else(|| GraphError::UnknownInput {
                node: l.id.clone(),
                input: inp.clone(),
            })?;
            pending[i] += 1;
            users[j].push(i);
        }
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..lines.len()).filter(|&i| pending[i] == 0).collect();
    let mut order = Vec::with_capacity(lines.len());
    while let Some(i) = ready.pop_first() {
        order.push(i);
        for &u in &users[i] {
            pending[u] -= 1;
            if pending[u] == 0 {
                ready.insert(u);
            }
        }
    }
    if order.len() != lines.len() {
        let stuck = (0..lines.len()).find(|&i| pending[i] > 0).expect("some node is stuck");
        return Err(GraphError::Cycle(lines[stuck].id.clone()));
    }
    Ok(order)
}
