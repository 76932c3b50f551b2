//! Cached 2D FFT plans over `rustfft`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Plan2 {
    pub rows: usize,
    pub cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    mirrors: Vec<usize>,
}

impl Plan2 {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.apply(buf, &self.row_fwd, &self.col_fwd);
    }

    /// Unnormalized inverse; callers divide by `len()`.
    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.apply(buf, &self.row_inv, &self.col_inv);
    }

    fn apply(&self, buf: &mut [Complex64], row: &Arc<dyn Fft<f64>>, col: &Arc<dyn Fft<f64>>) {
        debug_assert_eq!(buf.len(), self.len());
        if self.cols > 1 {
            row.process(buf);
        }
        if self.rows > 1 {
            let mut tmp = vec![Complex64::default(); buf.len()];
            transpose(buf, &mut tmp, self.rows, self.cols);
            col.process(&mut tmp);
            transpose(&tmp, buf, self.cols, self.rows);
        }
    }

    /// Zero-padded spectrum of a real `h x w` block placed at `offset`.
    pub fn spectrum_of(&self, data: &[f64], h: usize, w: usize, offset: [usize; 2]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::default(); self.len()];
        for r in 0..h {
            let dst = (offset[0] + r) * self.cols + offset[1];
            for c in 0..w {
                buf[dst + c].re = data[r * w + c];
            }
        }
        self.forward(&mut buf);
        buf
    }

    /// Spectrum of `a + i b` for two real blocks with the same placement.
    pub fn spectrum_of_pair(
        &self,
        a: &[f64],
        b: &[f64],
        h: usize,
        w: usize,
        offset: [usize; 2],
    ) -> Vec<Complex64> {
        let mut buf = vec![Complex64::default(); self.len()];
        for r in 0..h {
            let dst = (offset[0] + r) * self.cols + offset[1];
            for c in 0..w {
                buf[dst + c] = Complex64::new(a[r * w + c], b[r * w + c]);
            }
        }
        self.forward(&mut buf);
        buf
    }

    /// Index of the frequency `-omega` for flat index `i`.
    #[inline]
    pub fn mirror(&self, i: usize) -> usize {
        self.mirrors[i]
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], rows: usize, cols: usize) {
    const B: usize = 16;
    for rb in (0..rows).step_by(B) {
        for cb in (0..cols).step_by(B) {
            for r in rb..(rb + B).min(rows) {
                for c in cb..(cb + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// Shared plan for a `rows x cols` grid.
pub(crate) fn plan(rows: usize, cols: usize) -> Arc<Plan2> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<Plan2>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry((rows, cols))
        .or_insert_with(|| {
            let mut planner = FftPlanner::new();
            Arc::new(Plan2 {
                rows,
                cols,
                row_fwd: planner.plan_fft_forward(cols),
                row_inv: planner.plan_fft_inverse(cols),
                col_fwd: planner.plan_fft_forward(rows),
                col_inv: planner.plan_fft_inverse(rows),
                mirrors: (0..rows * cols)
                    .map(|i| ((rows - i / cols) % rows) * cols + (cols - i % cols) % cols)
                    .collect(),
            })
        })
        .clone()
}

/// Smallest 5-smooth integer >= n.
pub(crate) fn fft_size(n: usize) -> usize {
    let mut m = n.max(1);
    loop {
        let mut k = m;
        for p in [2, 3, 5] {
            while k % p == 0 {
                k /= p;
            }
        }
        if k == 1 {
            return m;
        }
        m += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_sizes() {
        assert_eq!(fft_size(1), 1);
        assert_eq!(fft_size(7), 8);
        assert_eq!(fft_size(38), 40);
        assert_eq!(fft_size(56), 60);
        assert_eq!(fft_size(111), 120);
    }

    #[test]
    fn inverse_recovers_input() {
        let p = plan(6, 10);
        let data: Vec<f64> = (0..60).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let mut spec = p.spectrum_of(&data, 6, 10, [0, 0]);
        p.inverse(&mut spec);
        for (s, d) in spec.iter().zip(&data) {
            assert!((s.re / 60.0 - d).abs() < 1e-12);
            assert!(s.im.abs() < 1e-10);
        }
    }

    #[test]
    fn pair_spectrum_splits_by_symmetry() {
        let p = plan(5, 8);
        let a: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).cos()).collect();
        let z = p.spectrum_of_pair(&a, &b, 3, 4, [1, 2]);
        let sa = p.spectrum_of(&a, 3, 4, [1, 2]);
        let sb = p.spectrum_of(&b, 3, 4, [1, 2]);
        for i in 0..p.len() {
            let zm = z[p.mirror(i)].conj();
            let xa = (z[i] + zm) * 0.5;
            let xb = (z[i] - zm) * Complex64::new(0.0, -0.5);
            assert!((xa - sa[i]).norm() < 1e-12);
            assert!((xb - sb[i]).norm() < 1e-12);
        }
    }
}
