//! Bottleneck unit builders.
//!
//! Every unit shares the trunk `1x1 -> 3x3 (pad 1) -> 1x1`, each convolution
//! followed by a normalization and, except for the last, a ReLU. The variants
//! differ in how the shortcut is formed, how the branches merge and what
//! follows the merge:
//!
//! | variant       | shortcut                      | merge  | after merge              |
//! |---------------|-------------------------------|--------|--------------------------|
//! | residual      | identity or 1x1 projection    | add    | relu                     |
//! | residual-down | 1x1 stride 2 (trunk 3x3 s2)   | add    | relu                     |
//! | cir           | identity or 1x1 projection    | add    | relu, crop 1             |
//! | cir-d         | identity or 1x1 projection    | add    | relu, crop 1, maxpool 2  |
//! | cir-inception | 1x1 conv to `mid` channels    | concat | relu, crop 1 (+ maxpool) |
//! | cir-next      | as cir, trunk 3x3 grouped     | add    | relu, crop 1 (+ maxpool) |

use std::fmt;
use std::str::FromStr;

use super::{Graph, GraphBuilder, GraphError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnitVariant {
    Residual,
    Cir,
    CirInception,
    CirNext,
}

/// Channel layout and wiring choice of one bottleneck unit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct UnitKind {
    pub variant: UnitVariant,
    /// Spatial downsampling by two: a strided trunk for `Residual`, a
    /// trailing max-pool for every cropping variant.
    pub downsample: bool,
    pub in_channels: usize,
    pub mid_channels: usize,
    pub out_channels: usize,
    /// Number of groups of the 3x3 trunk convolution; 1 except for `CirNext`.
    pub cardinality: usize,
}

impl UnitKind {
    pub fn new(variant: UnitVariant, in_channels: usize, mid_channels: usize, out_channels: usize) -> Self {
        UnitKind {
            variant,
            downsample: false,
            in_channels,
            mid_channels,
            out_channels,
            cardinality: 1,
        }
    }

    pub fn residual(in_channels: usize, mid: usize) -> Self {
        Self::new(UnitVariant::Residual, in_channels, mid, 4 * mid)
    }

    pub fn cir(in_channels: usize, mid: usize) -> Self {
        Self::new(UnitVariant::Cir, in_channels, mid, 4 * mid)
    }

    /// Trunk widens to `4 * mid`, the shortcut adds `mid` more channels.
    pub fn cir_inception(in_channels: usize, mid: usize) -> Self {
        Self::new(UnitVariant::CirInception, in_channels, mid, 5 * mid)
    }

    pub fn cir_next(in_channels: usize, mid: usize, out_channels: usize, cardinality: usize) -> Self {
        UnitKind {
            cardinality,
            ..Self::new(UnitVariant::CirNext, in_channels, mid, out_channels)
        }
    }

    pub fn downsampling(mut self) -> Self {
        self.downsample = true;
        self
    }

    /// Whether the unit ends with a border crop.
    pub fn crops(&self) -> bool {
        self.variant != UnitVariant::Residual
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(GraphError::InvalidUnit(format!("{self}: {msg}")));
        if self.in_channels == 0 || self.mid_channels == 0 || self.out_channels == 0 {
            return fail("channel counts must be positive".into());
        }
        if self.cardinality == 0 {
            return fail("cardinality must be positive".into());
        }
        if self.variant != UnitVariant::CirNext && self.cardinality != 1 {
            return fail("only cir-next units are grouped".into());
        }
        let (mid, out) = (self.mid_channels, self.out_channels);
        match self.variant {
            UnitVariant::Residual | UnitVariant::Cir if out != 4 * mid => {
                fail(format!("bottleneck output must be 4 x mid = {}", 4 * mid))
            }
            UnitVariant::CirInception if out != 5 * mid => {
                fail(format!("inception output must be trunk 4 x mid plus shortcut mid = {}", 5 * mid))
            }
            UnitVariant::CirNext if out != 4 * mid && out != 2 * mid => {
                fail(format!("grouped bottleneck output must be 2 x mid or 4 x mid, got {out}"))
            }
            UnitVariant::CirNext if mid % self.cardinality != 0 => {
                fail(format!("cardinality {} must divide mid channels {mid}", self.cardinality))
            }
            _ => Ok(()),
        }
    }

    fn trunk_out(&self) -> usize {
        match self.variant {
            UnitVariant::CirInception => 4 * self.mid_channels,
            _ => self.out_channels,
        }
    }
}

impl fmt::Display for UnitVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitVariant::Residual => "residual",
            UnitVariant::Cir => "cir",
            UnitVariant::CirInception => "cir-inception",
            UnitVariant::CirNext => "cir-next",
        })
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let down = match (self.variant, self.downsample) {
            (_, false) => "",
            (UnitVariant::Residual, true) => "-down",
            (_, true) => "-d",
        };
        write!(
            f,
            "{}{down}({}->{}->{}",
            self.variant, self.in_channels, self.mid_channels, self.out_channels
        )?;
        if self.cardinality != 1 {
            write!(f, ", C={}", self.cardinality)?;
        }
        f.write_str(")")
    }
}

impl FromStr for UnitVariant {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "residual" => UnitVariant::Residual,
            "cir" => UnitVariant::Cir,
            "cir-inception" => UnitVariant::CirInception,
            "cir-next" => UnitVariant::CirNext,
            other => return Err(GraphError::InvalidUnit(format!("unknown unit variant `{other}`"))),
        })
    }
}

impl GraphBuilder {
    /// Appends one unit reading from `input`; node ids are prefixed with `prefix`.
    /// Returns the id of the unit's last node.
    pub fn unit(&mut self, prefix: &str, input: &str, kind: &UnitKind) -> Result<String> {
        kind.validate()?;
        let actual = self
            .channels_of(input)
            .ok_or_else(|| GraphError::UnknownInput {
                node: prefix.to_string(),
                input: input.to_string(),
            })?;
        if actual != kind.in_channels {
            return Err(GraphError::InvalidUnit(format!(
                "{kind} placed after `{input}` with {actual} channels"
            )));
        }
        let strided_trunk = kind.variant == UnitVariant::Residual && kind.downsample;
        let trunk_stride = if strided_trunk { 2 } else { 1 };
        let mid = kind.mid_channels;

        let c1 = self.conv(format!("{prefix}.conv1"), input, mid, 1, 1, 0)?;
        let n1 = self.norm(format!("{prefix}.norm1"), &c1)?;
        let r1 = self.relu(format!("{prefix}.relu1"), &n1)?;
        let c2 = self.conv_with(
            format!("{prefix}.conv2"),
            &r1,
            mid,
            3,
            trunk_stride,
            1,
            kind.cardinality,
            false,
            false,
        )?;
        let n2 = self.norm(format!("{prefix}.norm2"), &c2)?;
        let r2 = self.relu(format!("{prefix}.relu2"), &n2)?;
        let c3 = self.conv(format!("{prefix}.conv3"), &r2, kind.trunk_out(), 1, 1, 0)?;
        let trunk = self.norm(format!("{prefix}.norm3"), &c3)?;

        let shortcut = match kind.variant {
            UnitVariant::CirInception => Some((mid, 1)),
            _ if strided_trunk => Some((kind.out_channels, 2)),
            _ if kind.in_channels != kind.out_channels => Some((kind.out_channels, 1)),
            _ => None,
        };
        let bypass = match shortcut {
            Some((width, stride)) => {
                let c = self.conv_with(format!("{prefix}.shortcut"), input, width, 1, stride, 0, 1, false, true)?;
                self.norm(format!("{prefix}.shortcut_norm"), &c)?
            }
            None => input.to_string(),
        };

        let merged = if kind.variant == UnitVariant::CirInception {
            self.concat(format!("{prefix}.concat"), &trunk, &bypass)?
        } else {
            self.add(format!("{prefix}.add"), &trunk, &bypass)?
        };
        let mut last = self.relu(format!("{prefix}.relu"), &merged)?;
        if kind.crops() {
            last = self.crop(format!("{prefix}.crop"), &last, 1)?;
            if kind.downsample {
                last = self.maxpool(format!("{prefix}.pool"), &last, 2, 2)?;
            }
        }
        Ok(last)
    }
}

/// Builds a standalone graph holding a single unit.
pub fn build_unit(kind: &UnitKind) -> Result<Graph> {
    let mut b = GraphBuilder::new(kind.to_string(), "input", kind.in_channels);
    let last = b.unit("unit", "input", kind)?;
    b.finish(&last)
}
