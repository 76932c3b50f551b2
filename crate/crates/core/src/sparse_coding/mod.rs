//! Inference-side solvers.
//!
//! * [`omp`]: greedy l0 coding against a global (non-convolutional) dictionary;
//! * [`best_atom_match`]: single-atom, single-offset convolutional matching;
//! * [`conv_bpdn`]: l1-regularized convolutional coding;
//! * [`extract_patches`]: sliding-window patches for patch-based learning.

mod cbpdn;
mod matching;
mod omp;
mod patches;

pub use cbpdn::{conv_bpdn, conv_bpdn_batch, conv_bpdn_with, fixed_point_residual, objective, CbpdnParams, CbpdnSolution, Lambda};
pub use matching::{best_atom_match, decode_global_index, global_code_index, Matcher};
pub use omp::{omp, OmpCoder};
pub use patches::{extract_patches, patch_count, patch_offsets};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::tensor::{dims2, Offset, Tensor};

/// How offsets in a [`SparseCode`] relate to the sample frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// Atom's top-left corner at the offset; the atom lies fully in the frame.
    /// A code with `atom_shape == sample_shape` is an ordinary vector code.
    Valid,
    /// Sample-sized coefficient maps; the atom's anchor sits at the offset
    /// and anything outside the frame is clipped (zero-padded convolution).
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodeEntry {
    pub atom: usize,
    pub offset: Offset,
    pub coef: f64,
}

/// Sparse coefficients of one sample, stored as `(atom, offset, coef)` triplets
/// ordered by atom, then offset.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    sample_shape: Vec<usize>,
    atom_shape: Vec<usize>,
    support: Support,
    entries: Vec<CodeEntry>,
}

impl SparseCode {
    pub fn new(
        sample_shape: &[usize],
        atom_shape: &[usize],
        support: Support,
        mut entries: Vec<CodeEntry>,
    ) -> Result<Self> {
        let (h, w) = dims2(sample_shape);
        let (ah, aw) = dims2(atom_shape);
        if sample_shape.len() != atom_shape.len() || ah > h || aw > w {
            return Err(Error::InvalidArgument(format!(
                "atom {atom_shape:?} incompatible with sample {sample_shape:?}"
            )));
        }
        let (lim_r, lim_c) = match support {
            Support::Valid => (h - ah, w - aw),
            Support::Same => (h - 1, w - 1),
        };
        for e in &entries {
            if e.offset[0] > lim_r || e.offset[1] > lim_c {
                return Err(Error::InvalidArgument(format!(
                    "offset {:?} outside the {support:?} support of {sample_shape:?}",
                    e.offset
                )));
            }
            if !e.coef.is_finite() {
                return Err(Error::NonFinite { index: e.atom });
            }
        }
        entries.sort_by(|a, b| (a.atom, a.offset).cmp(&(b.atom, b.offset)));
        if entries
            .windows(2)
            .any(|p| p[0].atom == p[1].atom && p[0].offset == p[1].offset)
        {
            return Err(Error::InvalidArgument("duplicate (atom, offset) entry".into()));
        }
        Ok(Self {
            sample_shape: sample_shape.to_vec(),
            atom_shape: atom_shape.to_vec(),
            support,
            entries,
        })
    }

    /// Vector code over `coefs.len()` atoms (zeros dropped).
    pub fn from_coefficients(shape: &[usize], coefs: &[f64]) -> Result<Self> {
        let entries = coefs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(atom, &coef)| CodeEntry {
                atom,
                offset: [0, 0],
                coef,
            })
            .collect();
        Self::new(shape, shape, Support::Valid, entries)
    }

    /// Code from dense sample-sized maps (one per atom) in the `Same` convention.
    pub fn from_dense_maps(sample_shape: &[usize], atom_shape: &[usize], maps: &[Vec<f64>]) -> Result<Self> {
        let (_, w) = dims2(sample_shape);
        let mut entries = Vec::new();
        for (atom, map) in maps.iter().enumerate() {
            for (i, &coef) in map.iter().enumerate() {
                if coef != 0.0 {
                    entries.push(CodeEntry {
                        atom,
                        offset: [i / w, i % w],
                        coef,
                    });
                }
            }
        }
        Self::new(sample_shape, atom_shape, Support::Same, entries)
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn atom_shape(&self) -> &[usize] {
        &self.atom_shape
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn entries(&self) -> &[CodeEntry] {
        &self.entries
    }

    pub fn l0(&self) -> usize {
        self.entries.len()
    }

    pub fn l1(&self) -> f64 {
        self.entries.iter().map(|e| e.coef.abs()).sum()
    }

    pub fn is_vector_code(&self) -> bool {
        self.support == Support::Valid && self.sample_shape == self.atom_shape
    }

    /// Dense coefficient vector (vector codes only).
    pub fn dense_coefficients(&self, n_atoms: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_atoms];
        for e in &self.entries {
            out[e.atom] += e.coef;
        }
        out
    }

    /// Dense sample-sized maps, one per atom, in this code's support convention
    /// (for `Valid`, the map is indexed by the atom's top-left corner).
    pub fn dense_maps(&self, n_atoms: usize) -> Vec<Vec<f64>> {
        let (h, w) = dims2(&self.sample_shape);
        let mut maps = vec![vec![0.0; h * w]; n_atoms];
        for e in &self.entries {
            maps[e.atom][e.offset[0] * w + e.offset[1]] = e.coef;
        }
        maps
    }

    /// `sum_entries coef * atom` placed per the support convention.
    pub fn reconstruct(&self, dict: &Dictionary) -> Result<Tensor> {
        if dict.atom_shape() != self.atom_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                left: dict.atom_shape().to_vec(),
                right: self.atom_shape.clone(),
            });
        }
        match self.support {
            Support::Valid => {
                let mut out = Tensor::zeros(&self.sample_shape)?;
                for e in &self.entries {
                    out.add_window(e.offset, dict.atom(e.atom), e.coef)?;
                }
                Ok(out)
            }
            Support::Same => {
                let maps = self.dense_maps(dict.len());
                let data = crate::conv::synthesize_direct(dict.atoms(), &maps, &self.sample_shape);
                Tensor::new(&self.sample_shape, data)
            }
        }
    }
}

/// Best single-atom explanation of a sample: atom `k*` at offset `t*` scaled
/// by `c*`. With unit-norm atoms, `residual_energy = ||y||^2 - c*^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomMatch {
    pub atom: usize,
    pub offset: Offset,
    pub coef: f64,
    pub residual_energy: f64,
}

impl AtomMatch {
    pub fn to_code(&self, sample_shape: &[usize], atom_shape: &[usize]) -> Result<SparseCode> {
        SparseCode::new(
            sample_shape,
            atom_shape,
            Support::Valid,
            vec![CodeEntry {
                atom: self.atom,
                offset: self.offset,
                coef: self.coef,
            }],
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        let e = CodeEntry {
            atom: 0,
            offset: [1, 1],
            coef: 1.0,
        };
        assert!(SparseCode::new(&[4, 4], &[2, 2], Support::Valid, vec![e, e]).is_err());
        let far = CodeEntry {
            offset: [3, 0],
            ..e
        };
        assert!(SparseCode::new(&[4, 4], &[2, 2], Support::Valid, vec![far]).is_err());
        assert!(SparseCode::new(&[4, 4], &[2, 2], Support::Same, vec![far]).is_ok());
    }

    #[test]
    fn entries_are_sorted() {
        let mk = |atom, r| CodeEntry {
            atom,
            offset: [r, 0],
            coef: 1.0,
        };
        let c = SparseCode::new(&[5], &[2], Support::Valid, vec![mk(1, 0), mk(0, 0)]).unwrap();
        assert_eq!(c.entries()[0].atom, 0);
    }
}
