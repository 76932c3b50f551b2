use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::conv::{ValidCorrelator, FFT_AREA_THRESHOLD};
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::fft::{fft_size, plan, Plan2};
use crate::sparse_coding::AtomMatch;
use crate::tensor::{dims2, Offset, Tensor};

/// Best single shifted atom for `y`: maximizes `c^2` over atoms and every
/// offset that keeps the atom inside the frame. Ties go to the lowest atom
/// index, then the lexicographically smallest offset.
pub fn best_atom_match(y: &Tensor, dict: &Dictionary) -> Result<AtomMatch> {
    Matcher::new(dict, y.shape())?.best(y)
}

/// Single-atom matcher for a fixed dictionary and sample shape. Large frames
/// go through the FFT with atom spectra computed once.
pub struct Matcher<'a> {
    dict: &'a Dictionary,
    sample: (usize, usize),
    sample_shape: Vec<usize>,
    sq_norms: Vec<f64>,
    fft: Option<(Arc<Plan2>, Vec<Vec<Complex64>>)>,
}

impl<'a> Matcher<'a> {
    pub fn new(dict: &'a Dictionary, sample_shape: &[usize]) -> Result<Self> {
        let (h, w) = dims2(sample_shape);
        let (ah, aw) = dims2(dict.atom_shape());
        if sample_shape.len() != dict.atom_shape().len() || ah > h || aw > w {
            return Err(Error::InvalidArgument(format!(
                "atoms {:?} do not fit in samples {sample_shape:?}",
                dict.atom_shape()
            )));
        }
        let sq_norms = dict.atoms().iter().map(|a| a.dot(a).unwrap_or(0.0)).collect();
        let fft = (h * w > FFT_AREA_THRESHOLD).then(|| {
            let p = plan(fft_size(h), fft_size(w));
            let spectra = dict
                .atoms()
                .chunks(2)
                .map(|pair| match pair {
                    [a, b] => p.spectrum_of_pair(a.data(), b.data(), ah, aw, [0, 0]),
                    [a] => p.spectrum_of(a.data(), ah, aw, [0, 0]),
                    _ => unreachable!(),
                })
                .collect();
            (p, spectra)
        });
        Ok(Self {
            dict,
            sample: (h, w),
            sample_shape: sample_shape.to_vec(),
            sq_norms,
            fft,
        })
    }

    /// Valid correlations of `y` with every atom.
    pub fn correlations(&self, y: &Tensor) -> Result<Vec<Vec<f64>>> {
        if y.shape() != self.sample_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                left: y.shape().to_vec(),
                right: self.sample_shape.clone(),
            });
        }
        let (h, w) = self.sample;
        let (ah, aw) = dims2(self.dict.atom_shape());
        match &self.fft {
            None => self
                .dict
                .atoms()
                .iter()
                .map(|a| crate::conv::correlate_valid_naive(y, a).map(Tensor::into_data))
                .collect(),
            Some((p, spectra)) => {
                let ys = p.spectrum_of(y.data(), h, w, [0, 0]);
                let corr = ValidCorrelator::new(p, &ys, h, w);
                let mut out = Vec::with_capacity(self.dict.len());
                for (i, packed) in spectra.iter().enumerate() {
                    if 2 * i + 1 < self.dict.len() {
                        // Separate the two real kernels' spectra from the packed one.
                        let (s1, s2) = unpack(p, packed);
                        let (c1, c2) = corr.pair(&s1, &s2, ah, aw);
                        out.push(c1);
                        out.push(c2);
                    } else {
                        out.push(corr.one(packed, ah, aw));
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn best(&self, y: &Tensor) -> Result<AtomMatch> {
        let corrs = self.correlations(y)?;
        let (_, w) = self.sample;
        let (_, aw) = dims2(self.dict.atom_shape());
        let ow = w - aw + 1;
        let mut best: Option<(usize, usize, f64, f64)> = None;
        for (k, c) in corrs.iter().enumerate() {
            let n2 = self.sq_norms[k];
            if n2 == 0.0 {
                continue;
            }
            for (t, &v) in c.iter().enumerate() {
                let score = v * v / n2;
                let better = match best {
                    None => true,
                    Some((_, _, _, s)) => score > s + 1e-12 * s.abs(),
                };
                if better {
                    best = Some((k, t, v / n2, score));
                }
            }
        }
        let (k, t, coef, score) = best.ok_or_else(|| Error::InvalidArgument("dictionary has only zero atoms".into()))?;
        let energy: f64 = y.data().iter().map(|v| v * v).sum();
        Ok(AtomMatch {
            atom: k,
            offset: [t / ow, t % ow],
            coef,
            residual_energy: (energy - score).max(0.0),
        })
    }

    /// Matches for many samples in parallel, in input order.
    pub fn best_many(&self, samples: &[Tensor]) -> Result<Vec<AtomMatch>> {
        samples.par_iter().map(|y| self.best(y)).collect()
    }
}

// From Z = FFT(a + i b): A(w) = (Z(w) + conj Z(-w)) / 2, B(w) = (Z(w) - conj Z(-w)) / 2i.
fn unpack(p: &Plan2, z: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut a = Vec::with_capacity(z.len());
    let mut b = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let zm = z[p.mirror(i)].conj();
        a.push((z[i] + zm) * 0.5);
        b.push((z[i] - zm) * Complex64::new(0.0, -0.5));
    }
    (a, b)
}

fn valid_extent(dict: &Dictionary, sample_shape: &[usize]) -> Result<(usize, usize)> {
    let (h, w) = dims2(sample_shape);
    let (ah, aw) = dims2(dict.atom_shape());
    if sample_shape.len() != dict.atom_shape().len() || ah > h || aw > w {
        return Err(Error::InvalidArgument(format!(
            "atoms {:?} do not fit in samples {sample_shape:?}",
            dict.atom_shape()
        )));
    }
    Ok((h - ah + 1, w - aw + 1))
}

/// Column of the global (all shifts of all atoms) dictionary holding atom
/// `k` at offset `t`: columns are interleaved by atom, `j = flat(t) * K + k`
/// with `flat` the row-major index over valid offsets, so `k = j % K`.
pub fn global_code_index(m: &AtomMatch, dict: &Dictionary, sample_shape: &[usize]) -> Result<usize> {
    let (oh, ow) = valid_extent(dict, sample_shape)?;
    if m.atom >= dict.len() || m.offset[0] >= oh || m.offset[1] >= ow {
        return Err(Error::InvalidArgument(format!(
            "atom {} at offset {:?} is outside the global dictionary",
            m.atom, m.offset
        )));
    }
    Ok((m.offset[0] * ow + m.offset[1]) * dict.len() + m.atom)
}

/// Inverse of [`global_code_index`].
pub fn decode_global_index(j: usize, dict: &Dictionary, sample_shape: &[usize]) -> Result<(usize, Offset)> {
    let (oh, ow) = valid_extent(dict, sample_shape)?;
    let k = dict.len();
    if j >= oh * ow * k {
        return Err(Error::InvalidArgument(format!("global index {j} out of range")));
    }
    let flat = j / k;
    Ok((j % k, [flat / ow, flat % ow]))
}
