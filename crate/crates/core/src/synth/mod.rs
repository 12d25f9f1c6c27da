//! Seeded synthetic sequences and box-overlap metrics.

mod io;

pub use io::{load_sequence, read_ground_truth_from, save_sequence, write_ground_truth_to, GROUND_TRUTH_FILE};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::matcher::LogRow;
use crate::tensor::{Shape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("target {target:?} does not fit in a {frame:?} frame")]
    TargetTooLarge {
        target: (usize, usize),
        frame: (usize, usize),
    },
    #[error("invalid sequence config: {0}")]
    Config(String),
    #[error("track has {track} frames, ground truth has {truth}")]
    LengthMismatch { track: usize, truth: usize },
    #[error("malformed ground truth line {line}: {detail}")]
    GroundTruth { line: usize, detail: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

/// Axis-aligned box by centre and size, in pixel-index coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BBox { cx, cy, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w.max(0.0) * self.h.max(0.0)
    }

    /// Intersection over union; zero for disjoint or empty boxes.
    pub fn iou(&self, other: &BBox) -> f64 {
        let overlap = |c1: f64, s1: f64, c2: f64, s2: f64| {
            let lo = (c1 - s1 / 2.0).max(c2 - s2 / 2.0);
            let hi = (c1 + s1 / 2.0).min(c2 + s2 / 2.0);
            (hi - lo).max(0.0)
        };
        let inter = overlap(self.cx, self.w, other.cx, other.w) * overlap(self.cy, self.h, other.cy, other.h);
        let union = self.area() + other.area() - inter;
        if union > 0.0 {
            (inter / union).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }

    pub fn center_distance(&self, other: &BBox) -> f64 {
        (self.cx - other.cx).hypot(self.cy - other.cy)
    }
}

impl From<LogRow> for BBox {
    fn from(r: LogRow) -> Self {
        BBox::new(r.cx, r.cy, r.w, r.h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Border {
    Left,
    Right,
    Top,
    Bottom,
}

impl Border {
    pub const ALL: [Border; 4] = [Border::Left, Border::Right, Border::Top, Border::Bottom];

    /// Unit step `(dx, dy)` towards this border.
    pub fn direction(self) -> (i64, i64) {
        match self {
            Border::Left => (-1, 0),
            Border::Right => (1, 0),
            Border::Top => (0, -1),
            Border::Bottom => (0, 1),
        }
    }
}

/// Integer per-frame motion of the target centre.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Motion {
    Static,
    Constant { dx: i64, dy: i64 },
    /// `speed` pixels per frame towards `border` (drawn from the seed when
    /// `None`); the centre stops on the frame edge.
    TowardBoundary { speed: i64, border: Option<Border> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// `(w, h)`; odd sizes put the box centre on a pixel.
    pub target: (usize, usize),
    pub frames: usize,
    /// Integer first-frame centre `(x, y)`, frame centre when `None`.
    pub start: Option<(i64, i64)>,
    pub motion: Motion,
    /// Peak-to-peak amplitude of the background texture around 0.5.
    pub background_contrast: f32,
    pub target_contrast: f32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            height: 255,
            width: 255,
            channels: 1,
            target: (63, 63),
            frames: 10,
            start: None,
            motion: Motion::Static,
            background_contrast: 0.5,
            target_contrast: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSequence {
    pub seed: u64,
    pub config: SynthConfig,
    pub frames: Vec<Tensor>,
    pub ground_truth: Vec<BBox>,
    /// Set for frames whose box extends past the frame edge.
    pub clipped: Vec<bool>,
    /// Border actually used by [`Motion::TowardBoundary`].
    pub border: Option<Border>,
}

impl SyntheticSequence {
    /// The first frame's box as a log row, ready to seed a tracker.
    pub fn initial_row(&self) -> LogRow {
        let b = self.ground_truth[0];
        LogRow::from_box(0, b.cx, b.cy, b.w, b.h)
    }
}

/// Renders a target patch over a static background, both drawn from `seed`,
/// and moves it per the motion model.
pub fn generate(seed: u64, config: &SynthConfig) -> Result<SyntheticSequence> {
    let (h, w) = (config.height, config.width);
    let (tw, th) = config.target;
    if config.frames == 0 || config.channels == 0 || h == 0 || w == 0 || tw == 0 || th == 0 {
        return Err(SynthError::Config("sizes and frame count must be positive".into()));
    }
    if tw > w || th > h {
        return Err(SynthError::TargetTooLarge {
            target: (tw, th),
            frame: (w, h),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = texture(&mut rng, config.channels, h, w, config.background_contrast, true);
    let target = texture(&mut rng, config.channels, th, tw, config.target_contrast, false);
    let border = match config.motion {
        Motion::TowardBoundary { border, .. } => Some(border.unwrap_or_else(|| Border::ALL[rng.gen_range(0..4)])),
        _ => None,
    };
    let step = match config.motion {
        Motion::Static => (0, 0),
        Motion::Constant { dx, dy } => (dx, dy),
        Motion::TowardBoundary { speed, .. } => {
            let (ux, uy) = border.expect("set above").direction();
            (ux * speed, uy * speed)
        }
    };
    let stops = matches!(config.motion, Motion::TowardBoundary { .. });

    let (mut cx, mut cy) = config.start.unwrap_or(((w / 2) as i64, (h / 2) as i64));
    let mut seq = SyntheticSequence {
        seed,
        config: config.clone(),
        frames: Vec::with_capacity(config.frames),
        ground_truth: Vec::with_capacity(config.frames),
        clipped: Vec::with_capacity(config.frames),
        border,
    };
    for _ in 0..config.frames {
        let (left, top) = (cx - (tw / 2) as i64, cy - (th / 2) as i64);
        let mut frame = background.clone().into_data();
        for ch in 0..config.channels {
            for y in 0..th {
                for x in 0..tw {
                    let (fy, fx) = (top + y as i64, left + x as i64);
                    if (0..h as i64).contains(&fy) && (0..w as i64).contains(&fx) {
                        frame[(ch * h + fy as usize) * w + fx as usize] = target.get(ch, y, x);
                    }
                }
            }
        }
        seq.frames.push(Tensor::new(background.shape(), frame)?);
        seq.ground_truth.push(BBox::new(
            left as f64 + (tw as f64 - 1.0) / 2.0,
            top as f64 + (th as f64 - 1.0) / 2.0,
            tw as f64,
            th as f64,
        ));
        seq.clipped
            .push(left < 0 || top < 0 || left + tw as i64 > w as i64 || top + th as i64 > h as i64);
        cx += step.0;
        cy += step.1;
        if stops {
            cx = cx.clamp(0, w as i64 - 1);
            cy = cy.clamp(0, h as i64 - 1);
        }
    }
    Ok(seq)
}

/// Uniform noise around 0.5 with the given amplitude; `smooth` applies a
/// 3x3 box filter first so the background has coarser grain than the target.
fn texture(rng: &mut ChaCha8Rng, channels: usize, h: usize, w: usize, contrast: f32, smooth: bool) -> Tensor {
    let shape = Shape::new(channels, h, w).expect("positive sizes");
    let noise = Tensor::from_fn(shape, |_, _, _| rng.gen::<f32>());
    let sample = |c: usize, y: usize, x: usize| -> f32 {
        if !smooth {
            return noise.get(c, y, x);
        }
        let (mut sum, mut n) = (0.0, 0.0);
        for yy in y.saturating_sub(1)..(y + 2).min(h) {
            for xx in x.saturating_sub(1)..(x + 2).min(w) {
                sum += noise.get(c, yy, xx);
                n += 1.0;
            }
        }
        sum / n
    };
    Tensor::from_fn(shape, |c, y, x| 0.5 + contrast * (sample(c, y, x) - 0.5))
}

/// Summary of a track against ground truth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    pub frames: usize,
    pub mean_center_error: f64,
    pub mean_iou: f64,
    /// Fraction of frames with overlap above 0.5.
    pub success_rate: f64,
}

pub const SUCCESS_IOU: f64 = 0.5;

pub fn evaluate(track: &[LogRow], truth: &[BBox]) -> Result<Metrics> {
    if track.len() != truth.len() {
        return Err(SynthError::LengthMismatch {
            track: track.len(),
            truth: truth.len(),
        });
    }
    if track.is_empty() {
        return Err(SynthError::Config("cannot evaluate an empty track".into()));
    }
    let n = track.len() as f64;
    let (mut err, mut iou, mut hits) = (0.0, 0.0, 0usize);
    for (row, gt) in track.iter().zip(truth) {
        let b = BBox::from(*row);
        let o = b.iou(gt);
        err += b.center_distance(gt);
        iou += o;
        hits += (o > SUCCESS_IOU) as usize;
    }
    Ok(Metrics {
        frames: track.len(),
        mean_center_error: err / n,
        mean_iou: iou / n,
        success_rate: hits as f64 / n,
    })
}
