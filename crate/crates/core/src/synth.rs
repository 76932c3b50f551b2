//! Small synthetic generators: stroke glyphs and frames with planted motifs.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::tensor::{Offset, Tensor};

enum Stroke {
    Ring { center: (f64, f64), radius: f64 },
    Segment { from: (f64, f64), to: (f64, f64) },
}

impl Stroke {
    fn distance(&self, p: (f64, f64)) -> f64 {
        match *self {
            Stroke::Ring { center, radius } => {
                ((p.0 - center.0).hypot(p.1 - center.1) - radius).abs()
            }
            Stroke::Segment { from, to } => {
                let (dx, dy) = (to.0 - from.0, to.1 - from.1);
                let len2 = dx * dx + dy * dy;
                let t = (((p.0 - from.0) * dx + (p.1 - from.1) * dy) / len2).clamp(0.0, 1.0);
                (p.0 - from.0 - t * dx).hypot(p.1 - from.1 - t * dy)
            }
        }
    }
}

fn strokes(digit: char) -> Result<Vec<Stroke>> {
    Ok(match digit {
        '9' => vec![
            Stroke::Ring { center: (9.5, 14.0), radius: 4.5 },
            Stroke::Segment { from: (10.0, 18.5), to: (22.0, 17.0) },
        ],
        '8' => vec![
            Stroke::Ring { center: (9.5, 14.0), radius: 4.5 },
            Stroke::Ring { center: (18.5, 14.0), radius: 4.5 },
        ],
        '0' => vec![Stroke::Ring { center: (14.0, 14.0), radius: 8.0 }],
        '1' => vec![Stroke::Segment { from: (5.0, 15.0), to: (23.0, 13.0) }],
        '7' => vec![
            Stroke::Segment { from: (6.0, 8.0), to: (6.0, 20.0) },
            Stroke::Segment { from: (6.0, 20.0), to: (23.0, 12.0) },
        ],
        other => return Err(Error::InvalidArgument(format!("no glyph for {other:?}"))),
    })
}

/// A 28x28-style stroke rendering of `digit` in a `size x size` frame,
/// translated by `shift` pixels (row, col). Fails if the translation would
/// push ink out of the frame.
pub fn glyph(digit: char, size: usize, shift: Offset) -> Result<Tensor> {
    let strokes = strokes(digit)?;
    let half_width = 1.4;
    let mut data = vec![0.0; size * size];
    for r in 0..size {
        for c in 0..size {
            let d = strokes
                .iter()
                .map(|s| s.distance((r as f64, c as f64)))
                .fold(f64::INFINITY, f64::min);
            data[r * size + c] = (half_width + 0.5 - d).clamp(0.0, 1.0);
        }
    }
    let base = Tensor::new(&[size, size], data)?;
    translate(&base, shift)
}

/// Moves the content of `x` by a non-negative shift, zero filling.
pub fn translate(x: &Tensor, shift: Offset) -> Result<Tensor> {
    let (h, w) = x.dims2();
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            let v = x.get(r, c);
            if v == 0.0 {
                continue;
            }
            let (nr, nc) = (r + shift[0], c + shift[1]);
            if nr >= h || nc >= w {
                return Err(Error::InvalidArgument(format!(
                    "shift {shift:?} moves content out of the frame"
                )));
            }
            out[nr * w + nc] = v;
        }
    }
    Tensor::new(x.shape(), out)
}

/// Unit-norm Gaussian random atom.
pub fn random_unit_atom(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    loop {
        let data: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        if let Some(t) = Tensor::new(shape, data).ok().and_then(|t| t.normalized()) {
            return t;
        }
    }
}

/// Frames each holding one scaled motif at a random valid offset.
#[derive(Debug, Clone)]
pub struct PlantedSet {
    pub samples: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub offsets: Vec<Offset>,
    pub coefs: Vec<f64>,
}

/// Generates `n` frames; sample `i` holds motif `i % motifs.len()` scaled by a
/// coefficient drawn from `coef_range` (random sign when `signed`).
pub fn planted_motifs(
    motifs: &[Tensor],
    frame_shape: &[usize],
    n: usize,
    coef_range: (f64, f64),
    signed: bool,
    rng: &mut impl Rng,
) -> Result<PlantedSet> {
    let (fh, fw) = crate::tensor::dims2(frame_shape);
    let mut set = PlantedSet {
        samples: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        offsets: Vec::with_capacity(n),
        coefs: Vec::with_capacity(n),
    };
    for i in 0..n {
        let k = i % motifs.len();
        let (mh, mw) = motifs[k].dims2();
        if mh > fh || mw > fw {
            return Err(Error::InvalidArgument("motif larger than frame".into()));
        }
        let offset = [rng.random_range(0..=fh - mh), rng.random_range(0..=fw - mw)];
        let mut c = rng.random_range(coef_range.0..=coef_range.1);
        if signed && rng.random_bool(0.5) {
            c = -c;
        }
        let mut frame = Tensor::zeros(frame_shape)?;
        frame.add_window(offset, &motifs[k], c)?;
        set.samples.push(frame);
        set.labels.push(k);
        set.offsets.push(offset);
        set.coefs.push(c);
    }
    Ok(set)
}
