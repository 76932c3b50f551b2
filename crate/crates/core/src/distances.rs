//! Vectorized, shift-minimized and correlation-based distances between signals.

use crate::conv::cross_correlation_full;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Plain Euclidean distance between equally shaped signals.
pub fn euclidean_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    a.check_same_shape(b)?;
    Ok(a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Result of [`shift_min_distance`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftMatch {
    pub distance: f64,
    /// Translation `(rows, cols)` applied to `a` (zero filled) that best matches `b`.
    pub shift: [isize; 2],
}

/// Minimum Euclidean distance between `b` and integer translates of `a`,
/// where `a` is zero-padded on every side so translated content falling off
/// the frame is lost and uncovered pixels are zero.
///
/// `max_shift` bounds `|shift|` per axis; `None` searches the full overlap
/// range (`extent - 1`). For 1D signals only the second component is used.
/// Ties go to the lexicographically smallest shift.
pub fn shift_min_distance(a: &Tensor, b: &Tensor, max_shift: Option<[usize; 2]>) -> Result<ShiftMatch> {
    a.check_same_shape(b)?;
    let (h, w) = a.dims2();
    let limit = max_shift.unwrap_or([h.saturating_sub(1), w.saturating_sub(1)]);
    let sr = if a.rank() == 1 { 0 } else { limit[0].min(h) as isize };
    let sc = limit[1].min(w) as isize;
    let ad = a.data();
    let bd = b.data();

    let mut best = ShiftMatch {
        distance: f64::INFINITY,
        shift: [0, 0],
    };
    let mut best_sq = f64::INFINITY;
    for dr in -sr..=sr {
        for dc in -sc..=sc {
            let mut sq = 0.0;
            for r in 0..h as isize {
                let ar = r - dr;
                for c in 0..w as isize {
                    let ac = c - dc;
                    let av = if ar >= 0 && ar < h as isize && ac >= 0 && ac < w as isize {
                        ad[ar as usize * w + ac as usize]
                    } else {
                        0.0
                    };
                    let d = av - bd[r as usize * w + c as usize];
                    sq += d * d;
                }
            }
            if sq < best_sq {
                best_sq = sq;
                best.shift = [dr, dc];
            }
        }
    }
    best.distance = best_sq.sqrt();
    Ok(best)
}

/// Inverse of the peak full cross-correlation between `a` and `b`.
///
/// With `normalized` the correlation is divided by `||a|| ||b||` first.
/// A non-positive peak has no inverse and is reported as an error.
pub fn xcorr_distance(a: &Tensor, b: &Tensor, normalized: bool) -> Result<f64> {
    a.check_same_shape(b)?;
    let corr = cross_correlation_full(a, b)?;
    let mut peak = corr.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if normalized {
        let denom = a.l2_norm() * b.l2_norm();
        if denom == 0.0 {
            return Err(Error::UndefinedDistance { peak: 0.0 });
        }
        peak /= denom;
    }
    if !(peak > 0.0) {
        return Err(Error::UndefinedDistance { peak });
    }
    Ok(1.0 / peak)
}
