use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{BBox, Result, SynthError, SyntheticSequence};
use crate::tensor::{read_tensor, write_tensor, Tensor};

pub const GROUND_TRUTH_FILE: &str = "groundtruth.txt";

fn frame_name(i: usize) -> String {
    format!("frame_{i:04}.cirt")
}

/// Writes `frame_NNNN.cirt` files and `groundtruth.txt` into `dir`,
/// creating it if needed.
pub fn save_sequence(dir: impl AsRef<Path>, seq: &SyntheticSequence) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    for (i, f) in seq.frames.iter().enumerate() {
        write_tensor(dir.join(frame_name(i)), f)?;
    }
    write_ground_truth_to(BufWriter::new(File::create(dir.join(GROUND_TRUTH_FILE))?), &seq.ground_truth)
}

/// Reads a sequence directory back: frames in index order and the boxes.
pub fn load_sequence(dir: impl AsRef<Path>) -> Result<(Vec<Tensor>, Vec<BBox>)> {
    let dir = dir.as_ref();
    let truth = read_ground_truth_from(File::open(dir.join(GROUND_TRUTH_FILE))?)?;
    let mut frames = Vec::new();
    loop {
        let path = dir.join(frame_name(frames.len()));
        if !path.exists() {
            break;
        }
        frames.push(read_tensor(path)?);
    }
    if frames.len() != truth.len() {
        return Err(SynthError::LengthMismatch {
            track: frames.len(),
            truth: truth.len(),
        });
    }
    Ok((frames, truth))
}

/// One `frame cx cy w h` line per box, tab-separated.
pub fn write_ground_truth_to<W: Write>(mut w: W, boxes: &[BBox]) -> Result<()> {
    for (i, b) in boxes.iter().enumerate() {
        writeln!(w, "{i}\t{}\t{}\t{}\t{}", b.cx, b.cy, b.w, b.h)?;
    }
    w.flush()?;
    Ok(())
}

/// Accepts tab- or space-separated lines; frame indices must count up from 0.
pub fn read_ground_truth_from<R: Read>(r: R) -> Result<Vec<BBox>> {
    let mut boxes = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |detail: String| SynthError::GroundTruth { line: i + 1, detail };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", f.len())));
        }
        if f[0].parse::<usize>().ok() != Some(boxes.len()) {
            return Err(err(format!("expected frame {}, found `{}`", boxes.len(), f[0])));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| err(format!("bad number `{}`", f[k])));
        boxes.push(BBox::new(num(1)?, num(2)?, num(3)?, num(4)?));
    }
    Ok(boxes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, Motion, SynthConfig};

    #[test]
    fn directory_round_trip() {
        let cfg = SynthConfig {
            height: 30,
            width: 30,
            target: (5, 5),
            frames: 3,
            motion: Motion::Constant { dx: 2, dy: 1 },
            ..SynthConfig::default()
        };
        let seq = generate(9, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_sequence(dir.path(), &seq).unwrap();
        let (frames, truth) = load_sequence(dir.path()).unwrap();
        assert_eq!(frames, seq.frames);
        assert_eq!(truth, seq.ground_truth);
    }

    #[test]
    fn out_of_order_frames_are_rejected() {
        let err = read_ground_truth_from("0 1 1 2 2\n2 1 1 2 2\n".as_bytes()).unwrap_err();
        assert!(matches!(err, SynthError::GroundTruth { line: 2, .. }));
    }
}
