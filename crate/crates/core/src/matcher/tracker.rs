use rayon::prelude::*;

use super::{channel_means, cross_correlate, extract_patch, LogRow, MatchError, Origin, ResponseMap, Result};
use crate::analyzer::compute_geometry;
use crate::graph::Graph;
use crate::tensor::Tensor;

/// Test-time constants of the tracking loop.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackerConfig {
    pub exemplar_size: usize,
    pub search_size: usize,
    /// Ratio between neighbouring search scales.
    pub scale_step: f64,
    /// Odd number of scales centred on 1.
    pub num_scales: usize,
    /// Interpolation factor towards the winning scale.
    pub scale_lr: f64,
    /// Search side as a multiple of the longer target side.
    pub context: f64,
    /// Multiplier on the peaks of non-unit scales; 1 disables the penalty.
    pub scale_penalty: f32,
    /// Blend a Hann window into the normalized response before choosing.
    pub cosine_window: bool,
    pub window_influence: f32,
    /// Constant added to every response cell.
    pub bias: f32,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            exemplar_size: 127,
            search_size: 255,
            scale_step: 1.0482,
            num_scales: 3,
            scale_lr: 0.3629,
            context: 2.0,
            scale_penalty: 1.0,
            cosine_window: false,
            window_influence: 0.176,
            bias: 0.0,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MatchError::Invalid(m.to_string()));
        if self.num_scales == 0 || self.num_scales % 2 == 0 {
            return bad("number of scales must be odd");
        }
        if self.exemplar_size == 0 || self.search_size < self.exemplar_size {
            return bad("search size must be at least the exemplar size");
        }
        if !(self.scale_step > 0.0 && self.context > 0.0 && (0.0..=1.0).contains(&self.scale_lr)) {
            return bad("scale step and context must be positive, scale rate within [0, 1]");
        }
        Ok(())
    }
}

/// `scale_step^k` for `k` in `-(n-1)/2 ..= (n-1)/2`.
pub fn scale_factors(config: &TrackerConfig) -> Vec<f64> {
    let half = (config.num_scales / 2) as i32;
    (-half..=half).map(|k| config.scale_step.powi(k)).collect()
}

/// Tracked target in frame pixels. The current box is `target_size * scale`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackState {
    /// `(x, y)`.
    pub center: (f64, f64),
    /// `(w, h)` at the first frame.
    pub target_size: (f64, f64),
    pub scale: f64,
}

impl TrackState {
    pub fn new(center: (f64, f64), target_size: (f64, f64)) -> Self {
        TrackState {
            center,
            target_size,
            scale: 1.0,
        }
    }

    pub fn box_size(&self) -> (f64, f64) {
        (self.target_size.0 * self.scale, self.target_size.1 * self.scale)
    }

    fn search_side(&self, config: &TrackerConfig) -> f64 {
        let (w, h) = self.box_size();
        config.context * w.max(h)
    }
}

/// A backbone with the exemplar embedding computed once.
#[derive(Clone, Debug)]
pub struct SiameseModel {
    graph: Graph,
    z_feat: Tensor,
    origin: Origin,
    search_size: usize,
    bias: f32,
}

impl SiameseModel {
    /// Embeds an already cropped exemplar.
    pub fn from_exemplar(graph: Graph, exemplar: &Tensor, search_size: usize, bias: f32) -> Result<Self> {
        if exemplar.height() != exemplar.width() {
            return Err(MatchError::Invalid(format!(
                "exemplar must be square, got {}x{}",
                exemplar.height(),
                exemplar.width()
            )));
        }
        let z_feat = graph.forward(exemplar)?;
        let stride = compute_geometry(&graph, (search_size, search_size))?.output().stride;
        // Feature cells of both streams sit on the same pixel lattice, so
        // displacement `d` moves the exemplar centre by `d * stride` pixels.
        let origin = Origin {
            offset: (exemplar.height() as f64 - 1.0) / 2.0,
            stride,
        };
        Ok(SiameseModel {
            graph,
            z_feat,
            origin,
            search_size,
            bias,
        })
    }

    /// Crops the exemplar around the target of the first frame.
    pub fn new(graph: Graph, frame: &Tensor, state: &TrackState, config: &TrackerConfig) -> Result<Self> {
        config.validate()?;
        let side = state.search_side(config) * config.exemplar_size as f64 / config.search_size as f64;
        let z = extract_patch(frame, state.center, side, config.exemplar_size, &channel_means(frame));
        Self::from_exemplar(graph, &z, config.search_size, config.bias)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn exemplar_features(&self) -> &Tensor {
        &self.z_feat
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    /// Response of a `search_size` square search patch, with its origin set.
    pub fn respond(&self, search: &Tensor) -> Result<ResponseMap> {
        let x_feat = self.graph.forward(search)?;
        Ok(cross_correlate(&self.z_feat, &x_feat, self.bias)?.with_origin(self.origin))
    }

    /// Pixel offset `(dy, dx)` of a response cell from the search centre.
    pub fn displacement(&self, response: &ResponseMap, cell: (usize, usize)) -> (f64, f64) {
        let mid = (self.search_size as f64 - 1.0) / 2.0;
        let (y, x) = response.pixel_of(cell.0, cell.1);
        (y - mid, x - mid)
    }
}

#[derive(Clone, Debug)]
pub struct StepOutput {
    pub state: TrackState,
    /// One per scale, smallest factor first.
    pub responses: Vec<ResponseMap>,
    pub chosen_scale: usize,
    /// Raw score at the chosen cell of the chosen scale.
    pub peak: f32,
    /// The new centre fell outside the frame and was clamped to it.
    pub clamped: bool,
}

/// Searches the frame at every scale around the current state and moves
/// the state to the best match.
pub fn track_step(state: &TrackState, frame: &Tensor, model: &SiameseModel, config: &TrackerConfig) -> Result<StepOutput> {
    let factors = scale_factors(config);
    let fill = channel_means(frame);
    let base = state.search_side(config);
    let responses = factors
        .par_iter()
        .map(|f| {
            let patch = extract_patch(frame, state.center, base * f, config.search_size, &fill);
            model.respond(&patch)
        })
        .collect::<Result<Vec<_>>>()?;

    let mid = config.num_scales / 2;
    let mut best: Option<(usize, (usize, usize), f32)> = None;
    for (i, resp) in responses.iter().enumerate() {
        let scored = if config.cosine_window {
            windowed(resp, config.window_influence)
        } else {
            resp.scores.clone()
        };
        let mut cell = 0;
        for (j, &v) in scored.iter().enumerate() {
            if v > scored[cell] {
                cell = j;
            }
        }
        let penalty = if i == mid { 1.0 } else { config.scale_penalty };
        let value = scored[cell] * penalty;
        if best.map_or(true, |b| value > b.2) {
            best = Some((i, (cell / resp.width, cell % resp.width), value));
        }
    }
    let (chosen, cell, _) = best.expect("at least one scale");
    let resp = &responses[chosen];
    let (dy, dx) = model.displacement(resp, cell);
    let px = base * factors[chosen] / config.search_size as f64;
    let raw = (state.center.0 + dx * px, state.center.1 + dy * px);
    let (w, h) = (frame.width() as f64 - 1.0, frame.height() as f64 - 1.0);
    let center = (raw.0.clamp(0.0, w), raw.1.clamp(0.0, h));
    let scale = (1.0 - config.scale_lr) * state.scale + config.scale_lr * state.scale * factors[chosen];
    Ok(StepOutput {
        state: TrackState {
            center,
            target_size: state.target_size,
            scale,
        },
        peak: resp.get(cell.0, cell.1),
        clamped: center != raw,
        responses,
        chosen_scale: chosen,
    })
}

fn windowed(resp: &ResponseMap, influence: f32) -> Vec<f32> {
    let hann = |n: usize, i: usize| {
        if n == 1 {
            1.0
        } else {
            0.5 - 0.5 * (2.0 * std::f32::consts::PI * i as f32 / (n - 1) as f32).cos()
        }
    };
    let (lo, hi) = resp
        .scores
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = (hi - lo).max(f32::MIN_POSITIVE);
    resp.scores
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let wnd = hann(resp.height, k / resp.width) * hann(resp.width, k % resp.width);
            (1.0 - influence) * (v - lo) / span + influence * wnd
        })
        .collect()
}

/// Tracks from a known first-frame box and returns one log row per frame.
/// The first row echoes the initial box with peak 0.
pub fn track_sequence(graph: Graph, frames: &[Tensor], init: LogRow, config: &TrackerConfig) -> Result<Vec<LogRow>> {
    let first = frames
        .first()
        .ok_or_else(|| MatchError::Invalid("sequence has no frames".into()))?;
    let mut state = TrackState::new((init.cx, init.cy), (init.w, init.h));
    let model = SiameseModel::new(graph, first, &state, config)?;
    let mut log = vec![LogRow {
        frame: 0,
        scale: 1.0,
        peak: 0.0,
        ..init
    }];
    for (i, frame) in frames.iter().enumerate().skip(1) {
        let step = track_step(&state, frame, &model, config)?;
        state = step.state;
        let (w, h) = state.box_size();
        log.push(LogRow {
            frame: i,
            cx: state.center.0,
            cy: state.center.1,
            w,
            h,
            scale: state.scale,
            peak: step.peak as f64,
        });
    }
    Ok(log)
}
