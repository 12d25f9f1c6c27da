//! Builtin backbones.

use std::fmt;
use std::str::FromStr;

use super::{Graph, GraphBuilder, GraphError, Result, UnitKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Architecture {
    CiResNet16,
    CiResNet19,
    CiResNet22,
    CiResIncep22,
    CiResNext22,
    CiResNet43,
    /// Five-layer unpadded AlexNet variant used by fully-convolutional Siamese trackers.
    AlexNetSiam,
    /// CIResNet-22 layout rebuilt from ordinary residual units with padding kept.
    ResNet22Padded,
}

impl Architecture {
    pub const ALL: [Architecture; 8] = [
        Architecture::CiResNet16,
        Architecture::CiResNet19,
        Architecture::CiResNet22,
        Architecture::CiResIncep22,
        Architecture::CiResNext22,
        Architecture::CiResNet43,
        Architecture::AlexNetSiam,
        Architecture::ResNet22Padded,
    ];

    /// The cropping-inside family.
    pub const CIR: [Architecture; 6] = [
        Architecture::CiResNet16,
        Architecture::CiResNet19,
        Architecture::CiResNet22,
        Architecture::CiResIncep22,
        Architecture::CiResNext22,
        Architecture::CiResNet43,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::CiResNet16 => "ciresnet16",
            Architecture::CiResNet19 => "ciresnet19",
            Architecture::CiResNet22 => "ciresnet22",
            Architecture::CiResIncep22 => "ciresincep22",
            Architecture::CiResNext22 => "ciresnext22",
            Architecture::CiResNet43 => "ciresnet43",
            Architecture::AlexNetSiam => "alexnet-siam",
            Architecture::ResNet22Padded => "resnet22-padded",
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|a| a.name()).collect()
    }

    pub fn is_cir(self) -> bool {
        Self::CIR.contains(&self)
    }

    /// Depth encoded in the name, where there is one.
    pub fn nominal_depth(self) -> Option<usize> {
        match self {
            Architecture::CiResNet16 => Some(16),
            Architecture::CiResNet19 => Some(19),
            Architecture::CiResNet22
            | Architecture::CiResIncep22
            | Architecture::CiResNext22
            | Architecture::ResNet22Padded => Some(22),
            Architecture::CiResNet43 => Some(43),
            Architecture::AlexNetSiam => None,
        }
    }

    pub fn build(self) -> Graph {
        self.build_with_channels(3)
    }

    /// Builds the backbone for images with `channels` planes.
    pub fn build_with_channels(self, channels: usize) -> Graph {
        // every builtin is wired from constants; a failure here is a bug
        self.try_build(channels)
            .unwrap_or_else(|e| panic!("builtin {} is malformed: {e}", self.name()))
    }

    fn try_build(self, channels: usize) -> Result<Graph> {
        let mut b = GraphBuilder::new(self.name(), "input", channels);
        let last = match self {
            Architecture::AlexNetSiam => alexnet(&mut b)?,
            Architecture::ResNet22Padded => {
                let x = stem(&mut b, false)?;
                let x = b.maxpool("conv2.pool", &x, 2, 2)?;
                let x = stage(&mut b, "conv2", &x, 3, |_, c| UnitKind::residual(c, 64))?;
                stage(&mut b, "conv3", &x, 4, |i, c| {
                    let k = UnitKind::residual(c, 128);
                    if i == 0 { k.downsampling() } else { k }
                })?
            }
            Architecture::CiResNet43 => {
                let x = stem(&mut b, true)?;
                stage(&mut b, "conv2", &x, 14, |i, c| {
                    let k = UnitKind::cir(c, 64);
                    if i == 3 { k.downsampling() } else { k }
                })?
            }
            _ => {
                let blocks = match self {
                    Architecture::CiResNet16 => 1,
                    Architecture::CiResNet19 => 2,
                    _ => 3,
                };
                let unit = move |c: usize, mid: usize, wide_out: usize| match self {
                    Architecture::CiResIncep22 => UnitKind::cir_inception(c, mid),
                    Architecture::CiResNext22 => UnitKind::cir_next(c, 2 * mid, wide_out, 32),
                    _ => UnitKind::cir(c, mid),
                };
                let x = stem(&mut b, true)?;
                let x = b.maxpool("conv2.pool", &x, 2, 2)?;
                let x = stage(&mut b, "conv2", &x, blocks, |_, c| unit(c, 64, 256))?;
                stage(&mut b, "conv3", &x, 4, |i, c| {
                    let k = unit(c, 128, 512);
                    if i == 0 { k.downsampling() } else { k }
                })?
            }
        };
        b.finish(&last)
    }
}

/// 7x7/64 stride-2 convolution; the cropping variant removes the two
/// padding-affected rings it leaves on each border.
fn stem(b: &mut GraphBuilder, crop: bool) -> Result<String> {
    let c = b.conv("stem.conv", "input", 64, 7, 2, 3)?;
    let n = b.norm("stem.norm", &c)?;
    let r = b.relu("stem.relu", &n)?;
    if crop {
        b.crop("stem.crop", &r, 2)
    } else {
        Ok(r)
    }
}

fn stage(
    b: &mut GraphBuilder,
    name: &str,
    input: &str,
    blocks: usize,
    kind: impl Fn(usize, usize) -> UnitKind,
) -> Result<String> {
    let mut x = input.to_string();
    for i in 0..blocks {
        let channels = b.channels_of(&x).unwrap_or(0);
        x = b.unit(&format!("{name}.{}", i + 1), &x, &kind(i, channels))?;
    }
    Ok(x)
}

fn alexnet(b: &mut GraphBuilder) -> Result<String> {
    let layer = |b: &mut GraphBuilder, i: usize, input: &str, out: usize, k: usize, s: usize, groups: usize, act: bool| -> Result<String> {
        let c = b.conv_with(format!("conv{i}"), input, out, k, s, 0, groups, true, false)?;
        if !act {
            return Ok(c);
        }
        let n = b.norm(format!("norm{i}"), &c)?;
        b.relu(format!("relu{i}"), &n)
    };
    let x = layer(b, 1, "input", 96, 11, 2, 1, true)?;
    let x = b.maxpool("pool1", &x, 3, 2)?;
    let x = layer(b, 2, &x, 256, 5, 1, 2, true)?;
    let x = b.maxpool("pool2", &x, 3, 2)?;
    let x = layer(b, 3, &x, 384, 3, 1, 1, true)?;
    let x = layer(b, 4, &x, 384, 3, 1, 2, true)?;
    layer(b, 5, &x, 256, 3, 1, 2, false)
}

/// Builds a builtin by name.
pub fn build_architecture(name: &str) -> Result<Graph> {
    Ok(name.parse::<Architecture>()?.build())
}

impl FromStr for Architecture {
    type Err = GraphError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Architecture::ALL
            .into_iter()
            .find(|a| a.name() == key)
            .ok_or_else(|| GraphError::UnknownArchitecture(s.to_string()))
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Op;

    #[test]
    fn depth_matches_name() {
        for arch in Architecture::ALL {
            if let Some(depth) = arch.nominal_depth() {
                assert_eq!(arch.build().weighted_conv_count(), depth, "{arch}");
            }
        }
        assert_eq!(Architecture::AlexNetSiam.build().weighted_conv_count(), 5);
    }

    #[test]
    fn unknown_names_are_rejected() {
        let err = build_architecture("resnet50").unwrap_err();
        assert!(matches!(err, GraphError::UnknownArchitecture(ref n) if n == "resnet50"));
        assert!(err.to_string().contains("ciresnet22"));
        assert_eq!("CIResNet22".parse::<Architecture>().unwrap(), Architecture::CiResNet22);
    }

    #[test]
    fn ciresnet43_downsamples_twice() {
        let g = Architecture::CiResNet43.build();
        let downsamplers: Vec<_> = g
            .nodes()
            .filter(|n| match &n.op {
                Op::Conv { spec, .. } => spec.stride > 1,
                Op::MaxPool { .. } => true,
                _ => false,
            })
            .map(|n| n.id.clone())
            .collect();
        assert_eq!(downsamplers, vec!["stem.conv".to_string(), "conv2.4.pool".to_string()]);
        assert_eq!(g.output_channels(), 256);
    }

    #[test]
    fn inception_has_extra_shortcut_convs() {
        let g = Architecture::CiResIncep22.build();
        let widths: Vec<_> = g
            .nodes()
            .filter_map(|n| match &n.op {
                Op::Conv { spec, shortcut: true, .. } => Some((n.id.split('.').next().unwrap().to_string(), spec.out_channels, spec.kernel_h)),
                _ => None,
            })
            .collect();
        assert_eq!(widths.iter().filter(|w| *w == &("conv2".to_string(), 64, 1)).count(), 3);
        assert_eq!(widths.iter().filter(|w| *w == &("conv3".to_string(), 128, 1)).count(), 4);
    }

    #[test]
    fn cir_d_sits_first_in_conv3() {
        let g = Architecture::CiResNet22.build();
        assert_eq!(g.node("conv3.1.pool").unwrap().op, Op::MaxPool { kernel: 2, stride: 2 });
        assert!(g.node("conv3.2.pool").is_none());
        assert_eq!(g.output_channels(), 512);
    }

    #[test]
    fn padded_baseline_never_crops() {
        let g = Architecture::ResNet22Padded.build();
        assert!(g.nodes().all(|n| !matches!(n.op, Op::Crop { .. })));
    }

    #[test]
    fn rebuilds_are_isomorphic() {
        for arch in Architecture::ALL {
            assert!(arch.build().same_structure(&arch.build()));
        }
    }
}
