//! Cross-correlation matching, the logistic loss value and a multi-scale
//! tracking loop.

mod log;
mod patch;
mod tracker;

pub use log::{read_track_log, read_track_log_from, write_track_log, write_track_log_to, LogRow};
pub use patch::{channel_means, extract_patch};
pub use tracker::{scale_factors, track_sequence, track_step, SiameseModel, StepOutput, TrackState, TrackerConfig};

use thiserror::Error;

use crate::analyzer::AnalyzerError;
use crate::graph::GraphError;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("exemplar has {exemplar} channels, search features have {search}")]
    ChannelMismatch { exemplar: usize, search: usize },
    #[error("exemplar features {exemplar:?} are larger than search features {search:?}")]
    ExemplarTooLarge {
        exemplar: (usize, usize),
        search: (usize, usize),
    },
    #[error("label map is {labels:?} but response is {response:?}")]
    ShapeMismatch {
        labels: (usize, usize),
        response: (usize, usize),
    },
    #[error("invalid tracker input: {0}")]
    Invalid(String),
    #[error("malformed tracking log line {line}: {detail}")]
    Log { line: usize, detail: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Analyzer(#[from] AnalyzerError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = MatchError> = std::result::Result<T, E>;

/// Maps response cells to pixels of the search image: cell `(r, c)` sits at
/// `(offset + r * stride, offset + c * stride)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Origin {
    pub offset: f64,
    pub stride: usize,
}

impl Default for Origin {
    /// Feature-cell coordinates.
    fn default() -> Self {
        Origin { offset: 0.0, stride: 1 }
    }
}

/// Score for every displacement of the exemplar over the search features.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMap {
    pub height: usize,
    pub width: usize,
    /// Row-major, bias already included.
    pub scores: Vec<f32>,
    pub bias: f32,
    pub origin: Origin,
}

impl ResponseMap {
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.scores[r * self.width + c]
    }

    /// Cell of the highest score; the first one in row-major order on ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.scores.iter().enumerate() {
            if v > self.scores[best] {
                best = i;
            }
        }
        (best / self.width, best % self.width)
    }

    pub fn peak(&self) -> f32 {
        let (r, c) = self.argmax();
        self.get(r, c)
    }

    /// Search-image pixel `(y, x)` a cell corresponds to.
    pub fn pixel_of(&self, r: usize, c: usize) -> (f64, f64) {
        let at = |i: usize| self.origin.offset + (i * self.origin.stride) as f64;
        (at(r), at(c))
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.origin = origin;
        self
    }
}

/// Slides `z` over `x` and adds `bias` everywhere. Sums are accumulated in
/// `f64`.
pub fn cross_correlate(z: &Tensor, x: &Tensor, bias: f32) -> Result<ResponseMap> {
    if z.channels() != x.channels() {
        return Err(MatchError::ChannelMismatch {
            exemplar: z.channels(),
            search: x.channels(),
        });
    }
    let (zh, zw, xh, xw) = (z.height(), z.width(), x.height(), x.width());
    if zh > xh || zw > xw {
        return Err(MatchError::ExemplarTooLarge {
            exemplar: (zh, zw),
            search: (xh, xw),
        });
    }
    let (height, width) = (xh - zh + 1, xw - zw + 1);
    let mut acc = vec![0f64; height * width];
    for ch in 0..z.channels() {
        let zc = z.channel(ch);
        let xc = x.channel(ch);
        for i in 0..zh {
            for j in 0..zw {
                let w = zc[i * zw + j] as f64;
                if w == 0.0 {
                    continue;
                }
                for r in 0..height {
                    let row = &xc[(r + i) * xw + j..(r + i) * xw + j + width];
                    for (a, &v) in acc[r * width..(r + 1) * width].iter_mut().zip(row) {
                        *a += w * v as f64;
                    }
                }
            }
        }
    }
    Ok(ResponseMap {
        height,
        width,
        scores: acc.into_iter().map(|v| (v + bias as f64) as f32).collect(),
        bias,
        origin: Origin::default(),
    })
}

/// Binary targets: `+1` within `radius` cells of `center`, `-1` elsewhere.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub center: (usize, usize),
    pub radius: usize,
    pub values: Vec<i8>,
}

pub const DEFAULT_LABEL_RADIUS: usize = 2;

impl LabelMap {
    pub fn disc(height: usize, width: usize, center: (usize, usize), radius: usize) -> Self {
        let r2 = (radius * radius) as i64;
        let values = (0..height)
            .flat_map(|r| {
                (0..width).map(move |c| {
                    let (dr, dc) = (r as i64 - center.0 as i64, c as i64 - center.1 as i64);
                    if dr * dr + dc * dc <= r2 {
                        1
                    } else {
                        -1
                    }
                })
            })
            .collect();
        LabelMap {
            height,
            width,
            center,
            radius,
            values,
        }
    }

    /// Disc around the central cell.
    pub fn centered(height: usize, width: usize, radius: usize) -> Self {
        Self::disc(height, width, (height / 2, width / 2), radius)
    }
}

/// Mean over cells of `log(1 + exp(-y * f))`.
pub fn logistic_loss(labels: &LabelMap, response: &ResponseMap) -> Result<f64> {
    if (labels.height, labels.width) != (response.height, response.width) {
        return Err(MatchError::ShapeMismatch {
            labels: (labels.height, labels.width),
            response: (response.height, response.width),
        });
    }
    let total: f64 = labels
        .values
        .iter()
        .zip(&response.scores)
        .map(|(&y, &f)| softplus(-(y as f64) * f as f64))
        .sum();
    Ok(total / labels.values.len() as f64)
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn scalar_kernel_scales_and_shifts() {
        let x = Tensor::from_fn(Shape::new(1, 5, 5).unwrap(), |_, y, x| (y * 5 + x) as f32);
        let z = Tensor::filled(Shape::new(1, 1, 1).unwrap(), 3.0);
        let r = cross_correlate(&z, &x, 0.5).unwrap();
        assert_eq!((r.height, r.width), (5, 5));
        for (s, v) in r.scores.iter().zip(x.data()) {
            assert_eq!(*s, 3.0 * v + 0.5);
        }
    }

    #[test]
    fn shapes_are_checked() {
        let a = Tensor::zeros(Shape::new(2, 3, 3).unwrap());
        let b = Tensor::zeros(Shape::new(3, 5, 5).unwrap());
        assert!(matches!(cross_correlate(&a, &b, 0.0), Err(MatchError::ChannelMismatch { .. })));
        let c = Tensor::zeros(Shape::new(2, 2, 6).unwrap());
        assert!(matches!(cross_correlate(&a, &c, 0.0), Err(MatchError::ExemplarTooLarge { .. })));
        let r = cross_correlate(&a, &a, 0.0).unwrap();
        assert!(matches!(
            logistic_loss(&LabelMap::centered(2, 2, 1), &r),
            Err(MatchError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn loss_limits() {
        let r = |v: f32| ResponseMap {
            height: 3,
            width: 3,
            scores: vec![v; 9],
            bias: 0.0,
            origin: Origin::default(),
        };
        let pos = LabelMap::disc(3, 3, (1, 1), 5);
        assert!((logistic_loss(&pos, &r(0.0)).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(logistic_loss(&pos, &r(1e30)).unwrap() < 1e-300);
        assert!((logistic_loss(&pos, &r(-1e4)).unwrap() - 1e4).abs() < 1e-9);
    }

    #[test]
    fn label_disc() {
        let l = LabelMap::centered(5, 5, 1);
        assert_eq!(l.values.iter().filter(|&&v| v == 1).count(), 5);
        assert_eq!(l.values[12], 1);
        assert_eq!(l.values[0], -1);
    }
}
