use std::fmt;

use super::{compute_geometry, Result};
use crate::graph::Graph;

pub const STRIDE_CHOICES: [usize; 2] = [4, 8];
pub const RF_RATIO_RANGE: (f64, f64) = (0.60, 0.80);
/// Output maps this small or smaller cannot localize.
pub const MIN_OUTPUT_SIZE: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Guideline {
    Stride,
    ReceptiveField,
    OutputSize,
    Padding,
}

impl Guideline {
    pub fn name(self) -> &'static str {
        match self {
            Guideline::Stride => "stride",
            Guideline::ReceptiveField => "receptive-field",
            Guideline::OutputSize => "output-size",
            Guideline::Padding => "padding",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub guideline: Guideline,
    pub ok: bool,
    pub message: String,
}

/// Design-guideline check of a backbone at a given exemplar size.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidelineReport {
    pub arch: String,
    pub exemplar: usize,
    pub stride: usize,
    pub rf_max: usize,
    pub rf_ratio: f64,
    pub out_size: (usize, usize),
    pub padding_influenced: usize,
    pub stride_ok: bool,
    pub rf_ok: bool,
    /// Set when the receptive field is wider than the exemplar itself, which
    /// fails the receptive-field guideline regardless of the ratio window.
    pub rf_exceeds_exemplar: bool,
    pub ofs_ok: bool,
    pub padding_ok: bool,
    pub verdicts: Vec<Verdict>,
}

impl GuidelineReport {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.ok)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Verdict> {
        self.verdicts.iter().filter(|v| !v.ok)
    }
}

pub fn check_guidelines(graph: &Graph, exemplar: usize) -> Result<GuidelineReport> {
    let geo = compute_geometry(graph, (exemplar, exemplar))?;
    let out = geo.output();
    let rf_ratio = out.rf_max as f64 / exemplar as f64;
    let stride_ok = STRIDE_CHOICES.contains(&out.stride);
    let rf_exceeds_exemplar = out.rf_max > exemplar;
    let rf_ok = !rf_exceeds_exemplar && (RF_RATIO_RANGE.0..=RF_RATIO_RANGE.1).contains(&rf_ratio);
    let ofs_ok = out.out_h.min(out.out_w) > MIN_OUTPUT_SIZE;
    let padding_influenced = out.padding_influenced();
    let padding_ok = padding_influenced == 0;

    let verdict = |guideline, ok, message: String| Verdict { guideline, ok, message };
    let verdicts = vec![
        verdict(
            Guideline::Stride,
            stride_ok,
            format!("total stride {} (want one of {:?})", out.stride, STRIDE_CHOICES),
        ),
        verdict(
            Guideline::ReceptiveField,
            rf_ok,
            if rf_exceeds_exemplar {
                format!("receptive field {} is larger than the {exemplar}px exemplar", out.rf_max)
            } else {
                format!(
                    "receptive field {} is {:.3} of the exemplar (want {:.2}..={:.2})",
                    out.rf_max, rf_ratio, RF_RATIO_RANGE.0, RF_RATIO_RANGE.1
                )
            },
        ),
        verdict(
            Guideline::OutputSize,
            ofs_ok,
            format!("output {}x{} (want more than {MIN_OUTPUT_SIZE})", out.out_h, out.out_w),
        ),
        verdict(
            Guideline::Padding,
            padding_ok,
            format!("{padding_influenced} output cells depend on padding (want 0)"),
        ),
    ];
    Ok(GuidelineReport {
        arch: graph.name().to_string(),
        exemplar,
        stride: out.stride,
        rf_max: out.rf_max,
        rf_ratio,
        out_size: (out.out_h, out.out_w),
        padding_influenced,
        stride_ok,
        rf_ok,
        rf_exceeds_exemplar,
        ofs_ok,
        padding_ok,
        verdicts,
    })
}

impl fmt::Display for GuidelineReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "arch: {}", self.arch)?;
        writeln!(f, "exemplar: {}", self.exemplar)?;
        writeln!(f, "stride: {}", self.stride)?;
        writeln!(f, "rf_max: {}", self.rf_max)?;
        writeln!(f, "rf_ratio: {:.3}", self.rf_ratio)?;
        writeln!(f, "out_size: {}x{}", self.out_size.0, self.out_size.1)?;
        writeln!(f, "padding_influenced: {}", self.padding_influenced)?;
        for v in &self.verdicts {
            writeln!(f, "{} {}: {}", if v.ok { "PASS" } else { "FAIL" }, v.guideline.name(), v.message)?;
        }
        write!(f, "verdict: {}", if self.passed() { "pass" } else { "fail" })
    }
}
