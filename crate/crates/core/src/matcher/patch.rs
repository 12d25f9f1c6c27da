use crate::tensor::{Shape, Tensor};

/// Mean of each channel, the usual fill for samples outside the frame.
pub fn channel_means(frame: &Tensor) -> Vec<f32> {
    (0..frame.channels())
        .map(|c| {
            let ch = frame.channel(c);
            (ch.iter().map(|&v| v as f64).sum::<f64>() / ch.len() as f64) as f32
        })
        .collect()
}

/// Bilinearly resamples a `side x side` square centred on `center = (x, y)`
/// into an `out x out` patch.
///
/// Output pixel `p` reads frame coordinate `center + (p - (out - 1) / 2) *
/// side / out`, so with `side == out` and an integral centre the patch is an
/// exact copy of the frame window. Samples outside the frame take `fill`.
pub fn extract_patch(frame: &Tensor, center: (f64, f64), side: f64, out: usize, fill: &[f32]) -> Tensor {
    assert_eq!(fill.len(), frame.channels(), "one fill value per channel");
    let step = side / out as f64;
    let mid = (out as f64 - 1.0) / 2.0;
    let coords = |c: f64| -> Vec<(i64, f64)> {
        (0..out)
            .map(|p| {
                let u = c + (p as f64 - mid) * step;
                let base = u.floor();
                (base as i64, u - base)
            })
            .collect()
    };
    let (xs, ys) = (coords(center.0), coords(center.1));
    let (h, w) = (frame.height() as i64, frame.width() as i64);
    let shape = Shape::new(frame.channels(), out, out).expect("patch size is positive");
    Tensor::from_fn(shape, |ch, py, px| {
        let plane = frame.channel(ch);
        let at = |y: i64, x: i64| {
            if (0..h).contains(&y) && (0..w).contains(&x) {
                plane[(y * w + x) as usize] as f64
            } else {
                fill[ch] as f64
            }
        };
        let (y0, fy) = ys[py];
        let (x0, fx) = xs[px];
        let mut v = 0.0;
        for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
            for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                let wgt = wy * wx;
                if wgt != 0.0 {
                    v += wgt * at(y0 + dy, x0 + dx);
                }
            }
        }
        v as f32
    })
}
