//! Linear (zero-padded) correlation and convolution, naive and FFT paths.
//!
//! Conventions used across the crate:
//!
//! * valid correlation: `c(t) = sum_p y(t + p) a(p)` for every offset `t`
//!   that keeps `a` fully inside `y`;
//! * full cross-correlation: `r(tau) = sum_p a(p + tau) b(p)` over every lag
//!   with any overlap, stored at index `tau + (shape(b) - 1)`;
//! * "same" synthesis with anchor `c = ((h - 1) / 2, (w - 1) / 2)`:
//!   `s(p) = sum_k sum_t x_k(t) a_k(p - t + c)`, with `x_k` the size of the
//!   sample and everything outside the frame treated as zero.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{fft_size, plan, Plan2};
use crate::tensor::{dims2, Offset, Tensor};

/// Signals with more samples than this use the FFT path.
pub const FFT_AREA_THRESHOLD: usize = 1024;

fn check_fits(y: &Tensor, a: &Tensor) -> Result<()> {
    let (h, w) = y.dims2();
    let (ah, aw) = a.dims2();
    if y.rank() != a.rank() || ah > h || aw > w {
        return Err(Error::InvalidArgument(format!(
            "kernel {:?} does not fit in signal {:?}",
            a.shape(),
            y.shape()
        )));
    }
    Ok(())
}

fn valid_shape(y: &Tensor, a: &Tensor) -> Vec<usize> {
    let (h, w) = y.dims2();
    let (ah, aw) = a.dims2();
    if y.rank() == 1 {
        vec![w - aw + 1]
    } else {
        vec![h - ah + 1, w - aw + 1]
    }
}

/// Valid correlation of `y` with kernel `a`, choosing the path by signal area.
pub fn correlate_valid(y: &Tensor, a: &Tensor) -> Result<Tensor> {
    if y.len() > FFT_AREA_THRESHOLD {
        correlate_valid_fft(y, a)
    } else {
        correlate_valid_naive(y, a)
    }
}

pub fn correlate_valid_naive(y: &Tensor, a: &Tensor) -> Result<Tensor> {
    check_fits(y, a)?;
    let (_, w) = y.dims2();
    let (ah, aw) = a.dims2();
    let shape = valid_shape(y, a);
    let (oh, ow) = dims2(&shape);
    let yd = y.data();
    let ad = a.data();
    let mut out = vec![0.0; oh * ow];
    for tr in 0..oh {
        for tc in 0..ow {
            let mut s = 0.0;
            for pr in 0..ah {
                let yrow = &yd[(tr + pr) * w + tc..][..aw];
                let arow = &ad[pr * aw..][..aw];
                s += crate::tensor::dot(yrow, arow);
            }
            out[tr * ow + tc] = s;
        }
    }
    Tensor::new(&shape, out)
}

pub fn correlate_valid_fft(y: &Tensor, a: &Tensor) -> Result<Tensor> {
    check_fits(y, a)?;
    let (h, w) = y.dims2();
    let p = plan(fft_size(h), fft_size(w));
    let ys = p.spectrum_of(y.data(), h, w, [0, 0]);
    let corr = ValidCorrelator::new(&p, &ys, h, w);
    let (ah, aw) = a.dims2();
    let aspec = p.spectrum_of(a.data(), ah, aw, [0, 0]);
    let shape = valid_shape(y, a);
    Tensor::new(&shape, corr.one(&aspec, ah, aw))
}

/// Valid correlations of one sample spectrum against many kernel spectra.
pub(crate) struct ValidCorrelator<'a> {
    plan: &'a Plan2,
    sample: &'a [Complex64],
    h: usize,
    w: usize,
}

impl<'a> ValidCorrelator<'a> {
    pub fn new(plan: &'a Plan2, sample: &'a [Complex64], h: usize, w: usize) -> Self {
        Self { plan, sample, h, w }
    }

    fn extract(&self, buf: &[Complex64], ah: usize, aw: usize, imag: bool) -> Vec<f64> {
        let oh = self.h - ah + 1;
        let ow = self.w - aw + 1;
        let scale = 1.0 / self.plan.len() as f64;
        let mut out = Vec::with_capacity(oh * ow);
        for r in 0..oh {
            for c in 0..ow {
                let z = buf[r * self.plan.cols + c];
                out.push(if imag { z.im } else { z.re } * scale);
            }
        }
        out
    }

    pub fn one(&self, kernel: &[Complex64], ah: usize, aw: usize) -> Vec<f64> {
        let mut buf: Vec<Complex64> = self
            .sample
            .iter()
            .zip(kernel)
            .map(|(y, a)| y * a.conj())
            .collect();
        self.plan.inverse(&mut buf);
        self.extract(&buf, ah, aw, false)
    }

    /// Two correlations for the price of one inverse transform: both results
    /// are real, so one rides in the real part and one in the imaginary part.
    pub fn pair(&self, k1: &[Complex64], k2: &[Complex64], ah: usize, aw: usize) -> (Vec<f64>, Vec<f64>) {
        let i = Complex64::new(0.0, 1.0);
        let mut buf: Vec<Complex64> = self
            .sample
            .iter()
            .zip(k1.iter().zip(k2))
            .map(|(y, (a, b))| y * a.conj() + i * (y * b.conj()))
            .collect();
        self.plan.inverse(&mut buf);
        (self.extract(&buf, ah, aw, false), self.extract(&buf, ah, aw, true))
    }
}

fn full_shape(a: &Tensor, b: &Tensor) -> Vec<usize> {
    let (ha, wa) = a.dims2();
    let (hb, wb) = b.dims2();
    if a.rank() == 1 {
        vec![wa + wb - 1]
    } else {
        vec![ha + hb - 1, wa + wb - 1]
    }
}

/// Full cross-correlation over all overlapping lags.
pub fn cross_correlation_full(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.len().max(b.len()) > FFT_AREA_THRESHOLD {
        cross_correlation_full_fft(a, b)
    } else {
        cross_correlation_full_naive(a, b)
    }
}

pub fn cross_correlation_full_naive(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != b.rank() {
        return Err(Error::ShapeMismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (ha, wa) = a.dims2();
    let (hb, wb) = b.dims2();
    let shape = full_shape(a, b);
    let (oh, ow) = dims2(&shape);
    let mut out = vec![0.0; oh * ow];
    for ir in 0..oh {
        let tr = ir as isize - (hb as isize - 1);
        for ic in 0..ow {
            let tc = ic as isize - (wb as isize - 1);
            let mut s = 0.0;
            for pr in 0..hb {
                let ar = pr as isize + tr;
                if ar < 0 || ar >= ha as isize {
                    continue;
                }
                for pc in 0..wb {
                    let ac = pc as isize + tc;
                    if ac < 0 || ac >= wa as isize {
                        continue;
                    }
                    s += a.get(ar as usize, ac as usize) * b.get(pr, pc);
                }
            }
            out[ir * ow + ic] = s;
        }
    }
    Tensor::new(&shape, out)
}

pub fn cross_correlation_full_fft(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != b.rank() {
        return Err(Error::ShapeMismatch {
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (ha, wa) = a.dims2();
    let (hb, wb) = b.dims2();
    let p = plan(fft_size(ha + hb - 1), fft_size(wa + wb - 1));
    let sa = p.spectrum_of(a.data(), ha, wa, [0, 0]);
    let sb = p.spectrum_of(b.data(), hb, wb, [0, 0]);
    let mut buf: Vec<Complex64> = sa.iter().zip(&sb).map(|(x, y)| x * y.conj()).collect();
    p.inverse(&mut buf);
    let shape = full_shape(a, b);
    let (oh, ow) = dims2(&shape);
    let scale = 1.0 / p.len() as f64;
    let mut out = Vec::with_capacity(oh * ow);
    for ir in 0..oh {
        // lag tau = ir - (hb - 1), taken modulo the grid
        let r = (ir + p.rows - (hb - 1)) % p.rows;
        for ic in 0..ow {
            let c = (ic + p.cols - (wb - 1)) % p.cols;
            out.push(buf[r * p.cols + c].re * scale);
        }
    }
    Tensor::new(&shape, out)
}

/// Anchor of an atom in "same" synthesis.
pub fn anchor(atom_shape: &[usize]) -> Offset {
    let (h, w) = dims2(atom_shape);
    [(h - 1) / 2, (w - 1) / 2]
}

/// Frequency-domain operator for "same"-size convolutional synthesis
/// `s = sum_k a_k * x_k` and its adjoint, for a fixed set of atoms.
pub struct ConvOperator {
    sample_shape: Vec<usize>,
    atom_shape: Vec<usize>,
    sample: (usize, usize),
    atom: (usize, usize),
    anchor: Offset,
    plan: std::sync::Arc<Plan2>,
    spectra: Vec<Vec<Complex64>>,
}

impl ConvOperator {
    pub fn new(atoms: &[Tensor], sample_shape: &[usize]) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| Error::InvalidArgument("no atoms".into()))?;
        let atom_shape = first.shape().to_vec();
        if atoms.iter().any(|a| a.shape() != atom_shape.as_slice()) {
            return Err(Error::InvalidArgument("atoms differ in shape".into()));
        }
        if atom_shape.len() != sample_shape.len() {
            return Err(Error::ShapeMismatch {
                left: atom_shape,
                right: sample_shape.to_vec(),
            });
        }
        let (h, w) = dims2(sample_shape);
        let (ah, aw) = dims2(&atom_shape);
        let plan = plan(fft_size(h + ah - 1), fft_size(w + aw - 1));
        let spectra = atoms
            .iter()
            .map(|a| plan.spectrum_of(a.data(), ah, aw, [0, 0]))
            .collect();
        Ok(Self {
            sample_shape: sample_shape.to_vec(),
            atom_shape: atom_shape.clone(),
            sample: (h, w),
            atom: (ah, aw),
            anchor: anchor(&atom_shape),
            plan,
            spectra,
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.spectra.len()
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn atom_shape(&self) -> &[usize] {
        &self.atom_shape
    }

    pub fn sample_len(&self) -> usize {
        self.sample.0 * self.sample.1
    }

    /// `max_omega sum_k |A_k(omega)|^2`, an upper bound on the squared
    /// operator norm of the synthesis map.
    pub fn lipschitz_bound(&self) -> f64 {
        (0..self.plan.len())
            .map(|i| self.spectra.iter().map(|s| s[i].norm_sqr()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn synthesize(&self, maps: &[Vec<f64>]) -> Vec<f64> {
        debug_assert_eq!(maps.len(), self.n_atoms());
        let (h, w) = self.sample;
        let n = self.plan.len();
        let mut acc = vec![Complex64::default(); n];
        let mut k = 0;
        while k < maps.len() {
            if k + 1 < maps.len() {
                if maps[k].iter().all(|v| *v == 0.0) && maps[k + 1].iter().all(|v| *v == 0.0) {
                    k += 2;
                    continue;
                }
                let z = self.plan.spectrum_of_pair(&maps[k], &maps[k + 1], h, w, [0, 0]);
                let (sa, sb) = (&self.spectra[k], &self.spectra[k + 1]);
                for i in 0..n {
                    let zm = z[self.plan.mirror(i)].conj();
                    let xa = (z[i] + zm) * 0.5;
                    let xb = (z[i] - zm) * Complex64::new(0.0, -0.5);
                    acc[i] += xa * sa[i] + xb * sb[i];
                }
                k += 2;
            } else {
                if maps[k].iter().any(|v| *v != 0.0) {
                    let x = self.plan.spectrum_of(&maps[k], h, w, [0, 0]);
                    for (a, (xi, si)) in acc.iter_mut().zip(x.iter().zip(&self.spectra[k])) {
                        *a += xi * si;
                    }
                }
                k += 1;
            }
        }
        self.plan.inverse(&mut acc);
        let scale = 1.0 / n as f64;
        let [cr, cc] = self.anchor;
        let mut out = Vec::with_capacity(h * w);
        for r in 0..h {
            for c in 0..w {
                out.push(acc[(r + cr) * self.plan.cols + c + cc].re * scale);
            }
        }
        out
    }

    /// Spectrum of a sample-sized map placed at the anchor.
    fn anchored_spectrum(&self, residual: &[f64]) -> Vec<Complex64> {
        let (h, w) = self.sample;
        self.plan.spectrum_of(residual, h, w, self.anchor)
    }

    /// `g_k(t) = sum_p r(p) a_k(p - t + c)` for every atom.
    pub fn adjoint(&self, residual: &[f64]) -> Vec<Vec<f64>> {
        let (h, w) = self.sample;
        let rs = self.anchored_spectrum(residual);
        let scale = 1.0 / self.plan.len() as f64;
        let take = |buf: &[Complex64], imag: bool| -> Vec<f64> {
            let mut out = Vec::with_capacity(h * w);
            for r in 0..h {
                for c in 0..w {
                    let z = buf[r * self.plan.cols + c];
                    out.push(if imag { z.im } else { z.re } * scale);
                }
            }
            out
        };
        let i = Complex64::new(0.0, 1.0);
        let mut out = Vec::with_capacity(self.n_atoms());
        let mut k = 0;
        while k < self.n_atoms() {
            if k + 1 < self.n_atoms() {
                let (sa, sb) = (&self.spectra[k], &self.spectra[k + 1]);
                let mut buf: Vec<Complex64> = (0..rs.len())
                    .map(|j| rs[j] * sa[j].conj() + i * (rs[j] * sb[j].conj()))
                    .collect();
                self.plan.inverse(&mut buf);
                out.push(take(&buf, false));
                out.push(take(&buf, true));
                k += 2;
            } else {
                let mut buf: Vec<Complex64> = rs
                    .iter()
                    .zip(&self.spectra[k])
                    .map(|(r, a)| r * a.conj())
                    .collect();
                self.plan.inverse(&mut buf);
                out.push(take(&buf, false));
                k += 1;
            }
        }
        out
    }

    /// Accumulates `sum_t x_k(t) r(t + m - c)` over atom-support offsets `m`
    /// into `acc` (one `Vec` per atom), for one sample's residual and maps.
    pub fn accumulate_atom_correlation(&self, residual: &[f64], maps: &[Vec<f64>], acc: &mut AtomGradientAccumulator) {
        let (h, w) = self.sample;
        let rs = self.anchored_spectrum(residual);
        for (k, map) in maps.iter().enumerate() {
            if map.iter().all(|v| *v == 0.0) {
                continue;
            }
            let xs = self.plan.spectrum_of(map, h, w, [0, 0]);
            for (a, (r, x)) in acc.spectra[k].iter_mut().zip(rs.iter().zip(&xs)) {
                *a += r * x.conj();
            }
        }
    }

    pub fn new_accumulator(&self) -> AtomGradientAccumulator {
        AtomGradientAccumulator {
            spectra: vec![vec![Complex64::default(); self.plan.len()]; self.n_atoms()],
        }
    }

    /// Per-atom correlations (atom-shaped) from an accumulator.
    pub fn finish(&self, acc: AtomGradientAccumulator) -> Vec<Vec<f64>> {
        let (ah, aw) = self.atom;
        let scale = 1.0 / self.plan.len() as f64;
        acc.spectra
            .into_iter()
            .map(|mut buf| {
                self.plan.inverse(&mut buf);
                let mut out = Vec::with_capacity(ah * aw);
                for r in 0..ah {
                    for c in 0..aw {
                        out.push(buf[r * self.plan.cols + c].re * scale);
                    }
                }
                out
            })
            .collect()
    }
}

/// Frequency-domain running sums for [`ConvOperator::accumulate_atom_correlation`].
pub struct AtomGradientAccumulator {
    spectra: Vec<Vec<Complex64>>,
}

impl AtomGradientAccumulator {
    /// Adds another accumulator (same operator) in place.
    pub fn merge(mut self, other: AtomGradientAccumulator) -> Self {
        for (a, b) in self.spectra.iter_mut().zip(other.spectra) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self
    }
}

/// Direct-sum reference for [`ConvOperator::synthesize`].
pub fn synthesize_direct(atoms: &[Tensor], maps: &[Vec<f64>], sample_shape: &[usize]) -> Vec<f64> {
    let (h, w) = dims2(sample_shape);
    let mut out = vec![0.0; h * w];
    for (a, x) in atoms.iter().zip(maps) {
        let (ah, aw) = a.dims2();
        let [cr, cc] = anchor(a.shape());
        for tr in 0..h {
            for tc in 0..w {
                let v = x[tr * w + tc];
                if v == 0.0 {
                    continue;
                }
                for mr in 0..ah {
                    let pr = tr as isize + mr as isize - cr as isize;
                    if pr < 0 || pr >= h as isize {
                        continue;
                    }
                    for mc in 0..aw {
                        let pc = tc as isize + mc as isize - cc as isize;
                        if pc < 0 || pc >= w as isize {
                            continue;
                        }
                        out[pr as usize * w + pc as usize] += v * a.get(mr, mc);
                    }
                }
            }
        }
    }
    out
}

/// Direct-sum reference for [`ConvOperator::adjoint`].
pub fn adjoint_direct(atoms: &[Tensor], residual: &[f64], sample_shape: &[usize]) -> Vec<Vec<f64>> {
    let (h, w) = dims2(sample_shape);
    atoms
        .iter()
        .map(|a| {
            let (ah, aw) = a.dims2();
            let [cr, cc] = anchor(a.shape());
            let mut g = vec![0.0; h * w];
            for tr in 0..h {
                for tc in 0..w {
                    let mut s = 0.0;
                    for mr in 0..ah {
                        let pr = tr as isize + mr as isize - cr as isize;
                        if pr < 0 || pr >= h as isize {
                            continue;
                        }
                        for mc in 0..aw {
                            let pc = tc as isize + mc as isize - cc as isize;
                            if pc < 0 || pc >= w as isize {
                                continue;
                            }
                            s += residual[pr as usize * w + pc as usize] * a.get(mr, mc);
                        }
                    }
                    g[tr * w + tc] = s;
                }
            }
            g
        })
        .collect()
}

/// Direct-sum reference for the atom-side correlation
/// `g_k(m) = sum_t x_k(t) r(t + m - c)`.
pub fn atom_correlation_direct(
    residual: &[f64],
    maps: &[Vec<f64>],
    sample_shape: &[usize],
    atom_shape: &[usize],
) -> Vec<Vec<f64>> {
    let (h, w) = dims2(sample_shape);
    let (ah, aw) = dims2(atom_shape);
    let [cr, cc] = anchor(atom_shape);
    maps.iter()
        .map(|x| {
            let mut g = vec![0.0; ah * aw];
            for mr in 0..ah {
                for mc in 0..aw {
                    let mut s = 0.0;
                    for tr in 0..h {
                        let pr = tr as isize + mr as isize - cr as isize;
                        if pr < 0 || pr >= h as isize {
                            continue;
                        }
                        for tc in 0..w {
                            let pc = tc as isize + mc as isize - cc as isize;
                            if pc < 0 || pc >= w as isize {
                                continue;
                            }
                            s += x[tr * w + tc] * residual[pr as usize * w + pc as usize];
                        }
                    }
                    g[mr * aw + mc] = s;
                }
            }
            g
        })
        .collect()
}
