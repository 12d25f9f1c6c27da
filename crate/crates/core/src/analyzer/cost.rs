use std::fmt;
use std::str::FromStr;

use super::{compute_geometry, AnalyzerError, Result};
use crate::graph::{Architecture, Graph, Op};

pub const EXEMPLAR_SIZE: usize = 127;
pub const SEARCH_SIZE: usize = 255;

/// Learnable scalars: convolution weights and biases plus the scale and
/// shift of every normalization layer. Running statistics are buffers and
/// do not count.
pub fn count_params(graph: &Graph) -> u64 {
    graph
        .nodes()
        .map(|n| match &n.op {
            Op::Conv { spec, bias, .. } => (spec.weight_len() + if *bias { spec.out_channels } else { 0 }) as u64,
            Op::Norm { .. } => 2 * n.channels as u64,
            _ => 0,
        })
        .sum()
}

/// Convolution multiply-adds of one forward pass on an `h x w` input.
/// Pooling, normalization, activations and bias additions are free.
pub fn count_macs(graph: &Graph, size: (usize, usize)) -> Result<u64> {
    let geo = compute_geometry(graph, size)?;
    Ok(graph
        .nodes()
        .map(|n| match &n.op {
            Op::Conv { spec, .. } => {
                let g = geo.get(&n.id).expect("geometry covers every node");
                (g.out_h * g.out_w * spec.out_channels * spec.fan_in()) as u64
            }
            _ => 0,
        })
        .sum())
}

/// Which input stream(s) a published multiply-add total refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MacConvention {
    /// One pass over a 127x127 exemplar.
    Exemplar,
    /// One pass over a 255x255 search image.
    Search,
    /// Both streams summed.
    Both,
}

impl MacConvention {
    pub const ALL: [MacConvention; 3] = [MacConvention::Exemplar, MacConvention::Search, MacConvention::Both];

    pub fn name(self) -> &'static str {
        match self {
            MacConvention::Exemplar => "exemplar",
            MacConvention::Search => "search",
            MacConvention::Both => "both",
        }
    }

    pub fn macs(self, graph: &Graph) -> Result<u64> {
        let at = |s: usize| count_macs(graph, (s, s));
        Ok(match self {
            MacConvention::Exemplar => at(EXEMPLAR_SIZE)?,
            MacConvention::Search => at(SEARCH_SIZE)?,
            MacConvention::Both => at(EXEMPLAR_SIZE)? + at(SEARCH_SIZE)?,
        })
    }
}

impl fmt::Display for MacConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MacConvention {
    type Err = AnalyzerError;

    fn from_str(s: &str) -> Result<Self> {
        MacConvention::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| AnalyzerError::Convention(s.to_string()))
    }
}

/// Published totals for one backbone: parameters and multiply-adds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PublishedCost {
    pub arch: Architecture,
    pub params: f64,
    pub macs: f64,
}

pub const PUBLISHED_COSTS: [PublishedCost; 6] = [
    PublishedCost { arch: Architecture::CiResNet16, params: 1.304e6, macs: 2.43e9 },
    PublishedCost { arch: Architecture::CiResNet19, params: 1.374e6, macs: 2.55e9 },
    PublishedCost { arch: Architecture::CiResNet22, params: 1.445e6, macs: 2.65e9 },
    PublishedCost { arch: Architecture::CiResIncep22, params: 1.695e6, macs: 2.71e9 },
    PublishedCost { arch: Architecture::CiResNext22, params: 1.417e6, macs: 2.52e9 },
    PublishedCost { arch: Architecture::CiResNet43, params: 1.010e6, macs: 6.07e9 },
];

/// Relative errors of one convention over the published backbones.
#[derive(Clone, Debug, PartialEq)]
pub struct ConventionFit {
    pub convention: MacConvention,
    /// `(arch, computed macs, relative error)` in [`PUBLISHED_COSTS`] order.
    pub rows: Vec<(Architecture, u64, f64)>,
}

impl ConventionFit {
    pub fn max_error(&self) -> f64 {
        self.rows.iter().map(|r| r.2.abs()).fold(0.0, f64::max)
    }

    pub fn mean_error(&self) -> f64 {
        self.rows.iter().map(|r| r.2.abs()).sum::<f64>() / self.rows.len() as f64
    }
}

/// Outcome of fitting every convention against the published totals.
#[derive(Clone, Debug, PartialEq)]
pub struct Calibration {
    /// Sorted best first: smallest worst-case error, then smallest mean.
    pub fits: Vec<ConventionFit>,
}

impl Calibration {
    pub fn best(&self) -> &ConventionFit {
        &self.fits[0]
    }
}

/// Evaluates each [`MacConvention`] on the builtin backbones and ranks them.
pub fn calibrate() -> Calibration {
    let mut fits: Vec<ConventionFit> = MacConvention::ALL
        .into_iter()
        .map(|convention| ConventionFit {
            convention,
            rows: PUBLISHED_COSTS
                .iter()
                .map(|p| {
                    let macs = convention
                        .macs(&p.arch.build())
                        .expect("builtins admit both standard input sizes");
                    (p.arch, macs, macs as f64 / p.macs - 1.0)
                })
                .collect(),
        })
        .collect();
    fits.sort_by(|a, b| {
        a.max_error()
            .total_cmp(&b.max_error())
            .then(a.mean_error().total_cmp(&b.mean_error()))
    });
    Calibration { fits }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphBuilder;

    #[test]
    fn pointwise_conv_counts() {
        let mut b = GraphBuilder::new("t", "x", 64);
        let c = b.conv_with("c", "x", 256, 1, 1, 0, 1, true, false).unwrap();
        let g = b.finish(&c).unwrap();
        assert_eq!(count_params(&g), 64 * 256 + 256);

        let mut b = GraphBuilder::new("t", "x", 64);
        let c = b.conv("c", "x", 64, 1, 1, 0).unwrap();
        let n = b.norm("n", &c).unwrap();
        let g = b.finish(&n).unwrap();
        assert_eq!(count_macs(&g, (5, 5)).unwrap(), 102_400);
        assert_eq!(count_params(&g), 64 * 64 + 128);
    }

    #[test]
    fn grouped_conv_divides_cost() {
        let mut b = GraphBuilder::new("t", "x", 64);
        let c = b.conv_with("c", "x", 64, 3, 1, 1, 32, false, false).unwrap();
        let g = b.finish(&c).unwrap();
        assert_eq!(count_params(&g), 64 * 2 * 9);
        assert_eq!(count_macs(&g, (4, 4)).unwrap(), 16 * 64 * 2 * 9);
    }

    #[test]
    fn conventions_parse() {
        for c in MacConvention::ALL {
            assert_eq!(c.name().parse::<MacConvention>().unwrap(), c);
        }
        assert!("calibrated".parse::<MacConvention>().is_err());
    }
}
