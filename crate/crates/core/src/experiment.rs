//! Paired boundary-localization experiment between a cropping backbone and
//! a padded baseline with random weights.
//!
//! Each trial renders a target that starts at the centre of a search-sized
//! frame and drifts toward a seeded border while the search window stays
//! put, as when a tracker lags behind. Both backbones embed the first-frame
//! exemplar and localize the target in the centre frame and in the final,
//! near-border frame at native scale. The per-trial difference of border
//! errors feeds a one-sided paired t-test.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::graph::Architecture;
use crate::matcher::{extract_patch, MatchError, SiameseModel};
use crate::synth::{generate, Border, Motion, SynthConfig, SynthError};
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error("paired test needs at least two trials")]
    Degenerate,
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Synth(#[from] SynthError),
}

pub type Result<T, E = ExperimentError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq)]
pub struct BiasConfig {
    pub trials: usize,
    /// First trial seed; trial `i` uses `seed + i`.
    pub seed: u64,
    pub candidate: Architecture,
    pub baseline: Architecture,
    pub exemplar_size: usize,
    pub search_size: usize,
    /// Odd target side in pixels.
    pub target_size: usize,
    /// Pixels per frame toward the border.
    pub speed: i64,
    /// Frames after the first; the final offset is `speed * steps`.
    pub steps: usize,
    pub channels: usize,
    /// Significance level of the one-sided test.
    pub alpha: f64,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig {
            trials: 200,
            seed: 0,
            candidate: Architecture::CiResNet22,
            baseline: Architecture::ResNet22Padded,
            exemplar_size: 127,
            search_size: 255,
            target_size: 63,
            speed: 8,
            steps: 8,
            channels: 1,
            alpha: 0.05,
        }
    }
}

impl BiasConfig {
    fn validate(&self) -> Result<()> {
        if self.trials < 2 {
            return Err(ExperimentError::Config("at least two trials are needed".into()));
        }
        if self.exemplar_size > self.search_size || self.target_size > self.exemplar_size {
            return Err(ExperimentError::Config("need target <= exemplar <= search".into()));
        }
        if self.speed <= 0 || self.steps == 0 {
            return Err(ExperimentError::Config("the target must move".into()));
        }
        let reach = self.speed * self.steps as i64 + (self.exemplar_size / 2) as i64;
        if reach > (self.search_size / 2) as i64 {
            return Err(ExperimentError::Config(format!(
                "final offset {} pushes the exemplar outside the search image",
                self.speed * self.steps as i64
            )));
        }
        if !(0.0..1.0).contains(&self.alpha) || self.alpha == 0.0 {
            return Err(ExperimentError::Config("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// Distance of the final target centre from the frame centre.
    pub fn final_offset(&self) -> i64 {
        self.speed * self.steps as i64
    }
}

/// Localization errors of both backbones in one trial, in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub border: Border,
    pub candidate_center: f64,
    pub candidate_border: f64,
    pub baseline_center: f64,
    pub baseline_border: f64,
    /// Signed component of the baseline's border error toward the frame
    /// centre; positive means it reported the target too far inward.
    pub baseline_inward: f64,
    pub candidate_inward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiasSummary {
    pub trials: Vec<TrialOutcome>,
    pub mean_candidate_center: f64,
    pub mean_candidate_border: f64,
    pub mean_baseline_center: f64,
    pub mean_baseline_border: f64,
    pub mean_baseline_inward: f64,
    pub mean_candidate_inward: f64,
    /// Mean of `baseline_border - candidate_border`.
    pub mean_difference: f64,
    pub sd_difference: f64,
    pub t_statistic: f64,
    /// One-sided p-value for "baseline border error exceeds candidate's".
    pub p_value: f64,
    pub alpha: f64,
}

impl BiasSummary {
    pub fn significant(&self) -> bool {
        self.p_value < self.alpha
    }
}

struct Localized {
    error: f64,
    inward: f64,
}

fn localize(
    arch: Architecture,
    weight_seed: u64,
    exemplar: &Tensor,
    frames: [&Tensor; 2],
    truths: [(f64, f64); 2],
    cfg: &BiasConfig,
) -> Result<[Localized; 2]> {
    let mut graph = arch.build_with_channels(cfg.channels);
    graph.init_random(weight_seed);
    let model = SiameseModel::from_exemplar(graph, exemplar, cfg.search_size, 0.0)?;
    let mid = (cfg.search_size as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(2);
    for (frame, (tx, ty)) in frames.into_iter().zip(truths) {
        let resp = model.respond(frame)?;
        let (dy, dx) = model.displacement(&resp, resp.argmax());
        let (px, py) = (mid + dx, mid + dy);
        // unit vector from the truth toward the centre
        let (vx, vy) = (mid - tx, mid - ty);
        let norm = vx.hypot(vy);
        let inward = if norm > 0.0 {
            ((px - tx) * vx + (py - ty) * vy) / norm
        } else {
            0.0
        };
        out.push(Localized {
            error: (px - tx).hypot(py - ty),
            inward,
        });
    }
    let second = out.pop().expect("two frames");
    Ok([out.pop().expect("two frames"), second])
}

pub fn run_trial(seed: u64, cfg: &BiasConfig) -> Result<TrialOutcome> {
    cfg.validate()?;
    let synth = SynthConfig {
        height: cfg.search_size,
        width: cfg.search_size,
        channels: cfg.channels,
        target: (cfg.target_size, cfg.target_size),
        frames: cfg.steps + 1,
        start: None,
        motion: Motion::TowardBoundary {
            speed: cfg.speed,
            border: None,
        },
        ..SynthConfig::default()
    };
    let seq = generate(seed, &synth)?;
    let first = seq.ground_truth[0];
    let last = *seq.ground_truth.last().expect("at least two frames");
    let fill = vec![0.0; cfg.channels];
    let exemplar = extract_patch(
        &seq.frames[0],
        (first.cx, first.cy),
        cfg.exemplar_size as f64,
        cfg.exemplar_size,
        &fill,
    );
    let frames = [&seq.frames[0], seq.frames.last().expect("at least two frames")];
    let truths = [(first.cx, first.cy), (last.cx, last.cy)];
    let weight_seed = seed ^ 0x9e37_79b9_7f4a_7c15;
    let [cc, cb] = localize(cfg.candidate, weight_seed, &exemplar, frames, truths, cfg)?;
    let [bc, bb] = localize(cfg.baseline, weight_seed, &exemplar, frames, truths, cfg)?;
    Ok(TrialOutcome {
        seed,
        border: seq.border.expect("toward-boundary motion"),
        candidate_center: cc.error,
        candidate_border: cb.error,
        baseline_center: bc.error,
        baseline_border: bb.error,
        baseline_inward: bb.inward,
        candidate_inward: cb.inward,
    })
}

/// Runs every trial (in parallel, aggregated in seed order) and the paired
/// one-sided t-test on border errors.
pub fn run_bias_experiment(cfg: &BiasConfig) -> Result<BiasSummary> {
    cfg.validate()?;
    let trials = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|i| run_trial(cfg.seed + i, cfg))
        .collect::<Result<Vec<_>>>()?;
    summarize(trials, cfg.alpha)
}

pub fn summarize(trials: Vec<TrialOutcome>, alpha: f64) -> Result<BiasSummary> {
    let n = trials.len() as f64;
    let mean = |f: fn(&TrialOutcome) -> f64| trials.iter().map(f).sum::<f64>() / n;
    let diffs: Vec<f64> = trials.iter().map(|t| t.baseline_border - t.candidate_border).collect();
    let (t_statistic, p_value, mean_difference, sd_difference) = paired_t(&diffs)?;
    Ok(BiasSummary {
        mean_candidate_center: mean(|t| t.candidate_center),
        mean_candidate_border: mean(|t| t.candidate_border),
        mean_baseline_center: mean(|t| t.baseline_center),
        mean_baseline_border: mean(|t| t.baseline_border),
        mean_baseline_inward: mean(|t| t.baseline_inward),
        mean_candidate_inward: mean(|t| t.candidate_inward),
        mean_difference,
        sd_difference,
        t_statistic,
        p_value,
        alpha,
        trials,
    })
}

/// `(t, one-sided p for mean > 0, mean, sample sd)`.
pub fn paired_t(diffs: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let n = diffs.len();
    if n < 2 {
        return Err(ExperimentError::Degenerate);
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 {
        // identical differences: conclusive only if they are all positive
        return Ok(if mean > 0.0 {
            (f64::INFINITY, 0.0, mean, 0.0)
        } else {
            (0.0, 1.0, mean, 0.0)
        });
    }
    let sd = var.sqrt();
    let t = mean / (sd / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, (n - 1) as f64).map_err(|_| ExperimentError::Degenerate)?;
    Ok((t, 1.0 - dist.cdf(t), mean, sd))
}
