//! Atom container and the learning-side updates: MOD, MOSA and the
//! convolutional (projected gradient) atom update.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;

use crate::conv::ConvOperator;
use crate::error::{Error, Result};
use crate::sparse_coding::{AtomMatch, SparseCode};
use crate::synth::random_unit_atom;
use crate::tensor::{dims2, read_tensors, write_tensors, Offset, Tensor};

/// Below this magnitude a MOSA coefficient is treated as zero.
pub const MOSA_EPS: f64 = 1e-12;

/// A set of equally shaped atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Vec<Tensor>,
    atom_shape: Vec<usize>,
    normalized: bool,
}

fn unit(t: &Tensor) -> bool {
    (t.l2_norm() - 1.0).abs() < 1e-10
}

impl Dictionary {
    /// Wraps `atoms` as given; the normalized flag is set when every atom is unit-norm.
    pub fn new(atoms: Vec<Tensor>) -> Result<Self> {
        let d = Self::centroids(atoms)?;
        if let Some(k) = d.atoms.iter().position(|a| a.l2_norm() == 0.0) {
            return Err(Error::InvalidArgument(format!("atom {k} is all zero")));
        }
        Ok(d)
    }

    /// Normalizes every atom to unit l2 norm.
    pub fn normalized(atoms: Vec<Tensor>) -> Result<Self> {
        let d = Self::new(atoms)?;
        let atoms = d.atoms.iter().map(|a| a.normalized().expect("nonzero")).collect();
        Ok(Self {
            atoms,
            atom_shape: d.atom_shape,
            normalized: true,
        })
    }

    /// Like [`Dictionary::new`] but tolerates zero atoms (k-means centroids).
    pub(crate) fn centroids(atoms: Vec<Tensor>) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| Error::InvalidArgument("dictionary needs at least one atom".into()))?;
        let atom_shape = first.shape().to_vec();
        if let Some(a) = atoms.iter().find(|a| a.shape() != atom_shape.as_slice()) {
            return Err(Error::ShapeMismatch {
                left: atom_shape,
                right: a.shape().to_vec(),
            });
        }
        let normalized = atoms.iter().all(unit);
        Ok(Self {
            atoms,
            atom_shape,
            normalized,
        })
    }

    /// `n` unit-norm Gaussian atoms.
    pub fn random_gaussian(n: usize, shape: &[usize], rng: &mut impl Rng) -> Result<Self> {
        Tensor::zeros(shape)?;
        Self::new((0..n).map(|_| random_unit_atom(shape, rng)).collect())
    }

    /// `n` distinct random samples, normalized. Zero samples are skipped.
    pub fn from_random_samples(samples: &[Tensor], n: usize, rng: &mut impl Rng) -> Result<Self> {
        let candidates: Vec<&Tensor> = samples.iter().filter(|s| s.l2_norm() > 0.0).collect();
        if candidates.len() < n || n == 0 {
            return Err(Error::InvalidArgument(format!(
                "need {n} nonzero samples, have {}",
                candidates.len()
            )));
        }
        let picks = sample_indices(rng, candidates.len(), n);
        Self::normalized(picks.iter().map(|i| candidates[i].clone()).collect())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atom(&self, k: usize) -> &Tensor {
        &self.atoms[k]
    }

    pub fn atoms(&self) -> &[Tensor] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<Tensor> {
        self.atoms
    }

    pub fn atom_shape(&self) -> &[usize] {
        &self.atom_shape
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        Ok(write_tensors(w, &self.atoms)?)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        Self::new(read_tensors(r)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Binary PGM with the atoms tiled in a grid of `cols` columns, each atom
    /// min-max scaled on its own and separated by a one-pixel mid-gray border.
    pub fn to_pgm(&self, cols: usize) -> Vec<u8> {
        let cols = cols.clamp(1, self.len());
        let rows = self.len().div_ceil(cols);
        let (ah, aw) = dims2(&self.atom_shape);
        let width = cols * (aw + 1) + 1;
        let height = rows * (ah + 1) + 1;
        let mut pix = vec![128u8; width * height];
        for (k, a) in self.atoms.iter().enumerate() {
            let lo = a.data().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = a.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = if hi > lo { hi - lo } else { 1.0 };
            let (gr, gc) = (k / cols, k % cols);
            for r in 0..ah {
                for c in 0..aw {
                    let v = ((a.get(r, c) - lo) / span * 255.0).round() as u8;
                    pix[(gr * (ah + 1) + 1 + r) * width + gc * (aw + 1) + 1 + c] = v;
                }
            }
        }
        let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
        out.extend_from_slice(&pix);
        out
    }

    pub fn write_pgm(&self, path: &Path, cols: usize) -> Result<()> {
        std::fs::write(path, self.to_pgm(cols))?;
        Ok(())
    }
}

/// Offset of the `shape`-sized window of `y` with the largest energy
/// (first in row-major order on ties).
pub(crate) fn max_energy_window(y: &Tensor, shape: &[usize]) -> Result<Offset> {
    let (h, w) = y.dims2();
    let (ph, pw) = dims2(shape);
    if ph > h || pw > w {
        return Err(Error::InvalidArgument(format!(
            "window {shape:?} larger than {:?}",
            y.shape()
        )));
    }
    // Summed-area table of squared values.
    let mut sat = vec![0.0; (h + 1) * (w + 1)];
    for r in 0..h {
        for c in 0..w {
            let v = y.get(r, c);
            sat[(r + 1) * (w + 1) + c + 1] =
                v * v + sat[r * (w + 1) + c + 1] + sat[(r + 1) * (w + 1) + c] - sat[r * (w + 1) + c];
        }
    }
    let tol = 1e-12 * sat[h * (w + 1) + w];
    let mut best = ([0, 0], -1.0);
    for r in 0..=h - ph {
        for c in 0..=w - pw {
            let e = sat[(r + ph) * (w + 1) + c + pw] - sat[r * (w + 1) + c + pw] - sat[(r + ph) * (w + 1) + c]
                + sat[r * (w + 1) + c];
            if e > best.1 + tol {
                best = ([r, c], e);
            }
        }
    }
    Ok(best.0)
}

/// Method of Optimal Directions for vector codes:
/// `A = Y X^T (X X^T + 1e-8 I)^-1`, then unit-norm atoms. Atoms that no code
/// uses are left as they were.
pub fn mod_update(samples: &[Tensor], codes: &[SparseCode], dict: &Dictionary) -> Result<Dictionary> {
    if samples.len() != codes.len() || samples.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} samples but {} codes",
            samples.len(),
            codes.len()
        )));
    }
    let k = dict.len();
    let d: usize = dict.atom_shape().iter().product();
    let n = samples.len();
    let mut x = DMatrix::<f64>::zeros(k, n);
    for (i, (s, c)) in samples.iter().zip(codes).enumerate() {
        if s.shape() != dict.atom_shape() || !c.is_vector_code() || c.sample_shape() != dict.atom_shape() {
            return Err(Error::InvalidArgument(format!(
                "sample {i}: MOD needs vector codes of shape {:?}",
                dict.atom_shape()
            )));
        }
        for e in c.entries() {
            if e.atom >= k {
                return Err(Error::InvalidArgument(format!("code uses atom {} of {k}", e.atom)));
            }
            x[(e.atom, i)] += e.coef;
        }
    }
    let y = DMatrix::from_fn(d, n, |r, c| samples[c].data()[r]);
    let gram = &x * x.transpose() + DMatrix::<f64>::identity(k, k) * 1e-8;
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("MOD Gram matrix is not positive definite".into()))?;
    // A^T = (X X^T + eps I)^-1 X Y^T
    let at = chol.solve(&(&x * y.transpose()));
    let mut atoms = Vec::with_capacity(k);
    for j in 0..k {
        let used = x.row(j).iter().any(|v| *v != 0.0);
        if !used {
            let old = dict.atom(j);
            atoms.push(old.normalized().unwrap_or_else(|| old.clone()));
            continue;
        }
        let col: Vec<f64> = at.row(j).iter().copied().collect();
        let t = Tensor::new(dict.atom_shape(), col)?;
        atoms.push(
            t.normalized()
                .ok_or_else(|| Error::Singular(format!("MOD produced a zero atom {j}")))?,
        );
    }
    Dictionary::centroids(atoms)
}

/// How MOSA combines per-sample atom estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MosaVariant {
    /// Uniform mean of the single-sample solutions `window / c`.
    #[default]
    Uniform,
    /// Pooled least squares `sum c w / sum c^2`.
    Weighted,
}

#[derive(Debug, Clone)]
pub struct MosaOutcome {
    pub dictionary: Dictionary,
    /// Samples ignored because `|c| <= MOSA_EPS`.
    pub skipped: usize,
    /// Atoms re-seeded because nothing usable was assigned to them.
    pub reseeded: Vec<usize>,
}

/// Method of Optimal Subdirections on Average: each sample's window at its
/// matched offset yields a one-sample least-squares atom `w / c`; an atom is
/// the normalized average of the estimates of the samples assigned to it.
///
/// Atoms left without samples are re-seeded from the highest-energy window
/// of the residual of the worst-fitted samples.
pub fn mosa_update(
    samples: &[Tensor],
    matches: &[AtomMatch],
    dict: &Dictionary,
    variant: MosaVariant,
) -> Result<MosaOutcome> {
    if samples.len() != matches.len() {
        return Err(Error::InvalidArgument(format!(
            "{} samples but {} matches",
            samples.len(),
            matches.len()
        )));
    }
    let k = dict.len();
    let shape = dict.atom_shape().to_vec();
    let dlen: usize = shape.iter().product();
    let mut sums = vec![vec![0.0; dlen]; k];
    let mut weights = vec![0.0; k];
    let mut skipped = 0;
    for (y, m) in samples.iter().zip(matches) {
        if m.atom >= k {
            return Err(Error::InvalidArgument(format!("match refers to atom {} of {k}", m.atom)));
        }
        if m.coef.abs() <= MOSA_EPS {
            skipped += 1;
            continue;
        }
        let w = y.window(m.offset, &shape)?;
        let (scale, weight) = match variant {
            MosaVariant::Uniform => (1.0 / m.coef, 1.0),
            MosaVariant::Weighted => (m.coef, m.coef * m.coef),
        };
        for (s, v) in sums[m.atom].iter_mut().zip(w.data()) {
            *s += scale * v;
        }
        weights[m.atom] += weight;
    }

    let mut atoms: Vec<Option<Tensor>> = sums
        .into_iter()
        .zip(&weights)
        .map(|(s, &wt)| {
            if wt == 0.0 {
                return None;
            }
            let t = Tensor::new(&shape, s.into_iter().map(|v| v / wt).collect()).ok()?;
            t.normalized()
        })
        .collect();

    let empty: Vec<usize> = (0..k).filter(|&j| atoms[j].is_none()).collect();
    if !empty.is_empty() {
        // Samples ordered by decreasing residual energy (index breaks ties).
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.sort_by(|&a, &b| {
            matches[b]
                .residual_energy
                .total_cmp(&matches[a].residual_energy)
                .then(a.cmp(&b))
        });
        let mut donors = order.into_iter();
        for &j in &empty {
            let mut seeded = None;
            for i in donors.by_ref() {
                let m = &matches[i];
                let mut residual = samples[i].clone();
                residual.add_window(m.offset, dict.atom(m.atom), -m.coef)?;
                let src = if residual.l2_norm() > 1e-12 * samples[i].l2_norm() {
                    residual
                } else {
                    samples[i].clone()
                };
                let off = max_energy_window(&src, &shape)?;
                if let Some(t) = src.window(off, &shape)?.normalized() {
                    seeded = Some(t);
                    break;
                }
            }
            atoms[j] = Some(match seeded {
                Some(t) => t,
                None => dict.atom(j).clone(),
            });
        }
    }
    Ok(MosaOutcome {
        dictionary: Dictionary::centroids(atoms.into_iter().map(Option::unwrap).collect())?,
        skipped,
        reseeded: empty,
    })
}

#[derive(Debug, Clone)]
pub struct CdlUpdate {
    pub dictionary: Dictionary,
    /// `sum_i ||y_i - sum_k a_k * x_ik||^2` at the start and after each accepted step.
    pub objective: Vec<f64>,
    pub iterations: usize,
}

const CHUNK: usize = 8;

/// `sum_i ||y_i - sum_k a_k * x_ik||^2` for dense "same"-size maps.
pub fn cdl_objective(samples: &[Tensor], maps: &[Vec<Vec<f64>>], dict: &Dictionary) -> Result<f64> {
    let op = operator(samples, maps, dict)?;
    Ok(objective_with(&op, samples, maps))
}

fn operator(samples: &[Tensor], maps: &[Vec<Vec<f64>>], dict: &Dictionary) -> Result<ConvOperator> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("no samples".into()))?;
    if samples.len() != maps.len() {
        return Err(Error::InvalidArgument(format!(
            "{} samples but {} codes",
            samples.len(),
            maps.len()
        )));
    }
    let n = first.len();
    for (i, (s, m)) in samples.iter().zip(maps).enumerate() {
        if s.shape() != first.shape() || m.len() != dict.len() || m.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidArgument(format!("sample {i}: code does not match the sample")));
        }
    }
    ConvOperator::new(dict.atoms(), first.shape())
}

fn residual(op: &ConvOperator, y: &Tensor, maps: &[Vec<f64>]) -> Vec<f64> {
    let s = op.synthesize(maps);
    y.data().iter().zip(&s).map(|(a, b)| a - b).collect()
}

fn objective_with(op: &ConvOperator, samples: &[Tensor], maps: &[Vec<Vec<f64>>]) -> f64 {
    let per: Vec<f64> = samples
        .par_iter()
        .zip(maps)
        .map(|(y, m)| residual(op, y, m).iter().map(|v| v * v).sum())
        .collect();
    per.iter().sum()
}

/// Gradient of [`cdl_objective`] with respect to each atom:
/// `-2 sum_i sum_t x_ik(t) r_i(t + m - c)`.
pub fn cdl_gradient(samples: &[Tensor], maps: &[Vec<Vec<f64>>], dict: &Dictionary) -> Result<Vec<Tensor>> {
    let op = operator(samples, maps, dict)?;
    gradient_with(&op, samples, maps)
        .into_iter()
        .map(|g| Tensor::new(dict.atom_shape(), g))
        .collect()
}

fn gradient_with(op: &ConvOperator, samples: &[Tensor], maps: &[Vec<Vec<f64>>]) -> Vec<Vec<f64>> {
    // Fixed chunks reduced in order keep the sum independent of scheduling.
    let idx: Vec<usize> = (0..samples.len()).collect();
    let partial: Vec<_> = idx
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = op.new_accumulator();
            for &i in chunk {
                let r = residual(op, &samples[i], &maps[i]);
                op.accumulate_atom_correlation(&r, &maps[i], &mut acc);
            }
            acc
        })
        .collect();
    let acc = partial
        .into_iter()
        .reduce(|a, b| a.merge(b))
        .unwrap_or_else(|| op.new_accumulator());
    op.finish(acc)
        .into_iter()
        .map(|g| g.into_iter().map(|v| -2.0 * v).collect())
        .collect()
}

/// Projected-gradient update of the atoms for fixed convolutional codes.
///
/// Each step moves along the negative gradient and projects every atom with
/// nonzero codes back to the unit sphere; a step is only taken if the
/// objective does not increase, halving the step size until it does.
pub fn cdl_dict_update(
    samples: &[Tensor],
    codes: &[SparseCode],
    dict: &Dictionary,
    max_iters: usize,
    tol: f64,
) -> Result<CdlUpdate> {
    let maps: Vec<Vec<Vec<f64>>> = codes.iter().map(|c| c.dense_maps(dict.len())).collect();
    cdl_dict_update_maps(samples, &maps, dict, max_iters, tol)
}

/// [`cdl_dict_update`] on dense coefficient maps.
pub fn cdl_dict_update_maps(
    samples: &[Tensor],
    maps: &[Vec<Vec<f64>>],
    dict: &Dictionary,
    max_iters: usize,
    tol: f64,
) -> Result<CdlUpdate> {
    let k = dict.len();
    let mut op = operator(samples, maps, dict)?;
    let mut current = dict.clone();
    let mut f = objective_with(&op, samples, maps);
    let mut trace = vec![f];

    let used: Vec<bool> = (0..k)
        .map(|j| maps.iter().any(|m| m[j].iter().any(|v| *v != 0.0)))
        .collect();
    // 1 / (2 sum_i sum_k ||x_ik||_1^2) bounds the inverse curvature.
    let curvature: f64 = maps
        .iter()
        .flat_map(|m| m.iter().map(|x| x.iter().map(|v| v.abs()).sum::<f64>().powi(2)))
        .sum();
    if curvature == 0.0 {
        return Ok(CdlUpdate {
            dictionary: current,
            objective: trace,
            iterations: 0,
        });
    }
    let mut eta = 1.0 / (2.0 * curvature);
    let mut iterations = 0;

    while iterations < max_iters {
        iterations += 1;
        let grad = gradient_with(&op, samples, maps);

        // Component of the gradient tangent to the sphere at each atom.
        let mut tangent = 0.0;
        let mut total = 0.0;
        for (j, g) in grad.iter().enumerate() {
            if !used[j] {
                continue;
            }
            let a = current.atom(j).data();
            let radial = crate::tensor::dot(a, g);
            for (gv, av) in g.iter().zip(a) {
                let t = gv - radial * av;
                tangent += t * t;
                total += gv * gv;
            }
        }
        if tangent <= 1e-24 * total.max(f64::MIN_POSITIVE) || f == 0.0 {
            break;
        }

        eta *= 2.0;
        let mut halvings = 0;
        let (next, next_op, next_f) = loop {
            let atoms: Vec<Tensor> = (0..k)
                .map(|j| {
                    let a = current.atom(j);
                    if !used[j] {
                        return Ok(a.clone());
                    }
                    let data: Vec<f64> = a.data().iter().zip(&grad[j]).map(|(x, g)| x - eta * g).collect();
                    let t = Tensor::new(a.shape(), data)?;
                    Ok(t.normalized().unwrap_or_else(|| a.clone()))
                })
                .collect::<Result<_>>()?;
            let cand = Dictionary::centroids(atoms)?;
            let cand_op = ConvOperator::new(cand.atoms(), samples[0].shape())?;
            let cand_f = objective_with(&cand_op, samples, maps);
            if cand_f <= f {
                break (cand, cand_op, cand_f);
            }
            eta *= 0.5;
            halvings += 1;
            if halvings > 60 {
                return Err(Error::StepUnderflow { iterations });
            }
        };
        let change = (f - next_f) / f;
        current = next;
        op = next_op;
        f = next_f;
        trace.push(f);
        if change < tol {
            break;
        }
    }
    Ok(CdlUpdate {
        dictionary: current,
        objective: trace,
        iterations,
    })
}
