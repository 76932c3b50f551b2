//! Unsupervised feature extractors: global dictionary (DL), patch dictionary
//! (PDL), convolutional dictionary (CDL), Gabor bank (GFE) and PCA.

use std::fmt;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;

use crate::conv::ConvOperator;
use crate::dictionary::{cdl_dict_update_maps, max_energy_window, mod_update, Dictionary};
use crate::error::{Error, Result};
use crate::sparse_coding::{conv_bpdn_batch, conv_bpdn_with, extract_patches, CbpdnParams, OmpCoder, SparseCode};
use crate::tensor::{dims2, dot, read_tensors, write_tensors, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FeatureKind {
    Dl,
    Pdl,
    Cdl,
    Gfe,
    Pca,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [FeatureKind::Dl, FeatureKind::Pdl, FeatureKind::Cdl, FeatureKind::Gfe, FeatureKind::Pca];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Dl => "DL",
            FeatureKind::Pdl => "PDL",
            FeatureKind::Cdl => "CDL",
            FeatureKind::Gfe => "GFE",
            FeatureKind::Pca => "PCA",
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature kind {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborParams {
    pub scales: usize,
    pub orientations: usize,
    pub size: usize,
    /// Wavelength of the finest scale; each scale multiplies it by sqrt(2).
    pub wavelength: f64,
    /// Gaussian width as a multiple of the wavelength.
    pub sigma_ratio: f64,
    /// Aspect ratio of the Gaussian envelope.
    pub gamma: f64,
}

impl Default for GaborParams {
    fn default() -> Self {
        Self {
            scales: 3,
            orientations: 5,
            size: 11,
            wavelength: 4.0,
            sigma_ratio: 0.56,
            gamma: 0.5,
        }
    }
}

/// Settings for every extractor kind; each kind reads only the fields it needs.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureParams {
    pub kind: FeatureKind,
    /// Dictionary size (DL, PDL, CDL).
    pub n_atoms: usize,
    /// OMP sparsity for DL/PDL codes.
    pub sparsity: usize,
    /// Alternating coding / dictionary-update rounds during fitting.
    pub dict_iters: usize,
    /// PDL patch shape, CDL atom shape.
    pub patch_shape: Vec<usize>,
    /// PDL patch stride.
    pub stride: usize,
    /// Upper bound on the patches (PDL) or samples (CDL) used for fitting.
    pub max_fit: usize,
    /// CDL coding settings, used both in fitting and in transform.
    pub coding: CbpdnParams,
    /// Projected-gradient steps per CDL dictionary update.
    pub update_iters: usize,
    /// Pooling cell (CDL max, GFE average).
    pub pool: Vec<usize>,
    pub gabor: GaborParams,
    pub pca_dims: usize,
}

impl FeatureParams {
    /// Defaults for 28×28 digit images.
    pub fn new(kind: FeatureKind) -> Self {
        Self {
            kind,
            n_atoms: if kind == FeatureKind::Cdl { 15 } else { 360 },
            sparsity: 5,
            dict_iters: 10,
            patch_shape: vec![11, 11],
            stride: 3,
            max_fit: if kind == FeatureKind::Cdl { 200 } else { 20000 },
            coding: CbpdnParams::default(),
            update_iters: 20,
            pool: vec![2, 2],
            gabor: GaborParams::default(),
            pca_dims: 100,
        }
    }
}

/// Gabor kernel before normalization, centred on the grid.
pub fn gabor_kernel(size: usize, theta: f64, wavelength: f64, sigma: f64, gamma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let (s, co) = theta.sin_cos();
    let mut out = Vec::with_capacity(size * size);
    for r in 0..size {
        for q in 0..size {
            let x = q as f64 - c;
            let y = r as f64 - c;
            let xp = x * co + y * s;
            let yp = -x * s + y * co;
            let env = (-(xp * xp + gamma * gamma * yp * yp) / (2.0 * sigma * sigma)).exp();
            out.push(env * (2.0 * std::f64::consts::PI * xp / wavelength).cos());
        }
    }
    out
}

/// Zero-mean, unit-norm real Gabor kernels, scale-major.
pub fn gabor_bank(params: &GaborParams) -> Result<Vec<Tensor>> {
    if params.size % 2 == 0 || params.scales == 0 || params.orientations == 0 {
        return Err(Error::InvalidArgument("Gabor bank needs an odd size and nonzero counts".into()));
    }
    let mut bank = Vec::with_capacity(params.scales * params.orientations);
    for s in 0..params.scales {
        let wavelength = params.wavelength * 2f64.powf(s as f64 / 2.0);
        let sigma = params.sigma_ratio * wavelength;
        for o in 0..params.orientations {
            let theta = o as f64 * std::f64::consts::PI / params.orientations as f64;
            let mut k = gabor_kernel(params.size, theta, wavelength, sigma, params.gamma);
            let mean = k.iter().sum::<f64>() / k.len() as f64;
            k.iter_mut().for_each(|v| *v -= mean);
            let t = Tensor::new(&[params.size, params.size], k)?
                .normalized()
                .ok_or_else(|| Error::InvalidArgument("degenerate Gabor kernel".into()))?;
            bank.push(t);
        }
    }
    Ok(bank)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Max,
    Mean,
}

/// Pools `|map|` over non-overlapping cells; edge cells may be partial.
pub fn pool_abs(map: &[f64], shape: &[usize], cell: &[usize], mode: Pooling) -> Vec<f64> {
    let (h, w) = dims2(shape);
    let (ch, cw) = dims2(cell);
    let (ph, pw) = (h.div_ceil(ch), w.div_ceil(cw));
    let mut out = Vec::with_capacity(ph * pw);
    for pr in 0..ph {
        for pc in 0..pw {
            let mut acc = 0.0;
            let mut n = 0;
            for r in pr * ch..((pr + 1) * ch).min(h) {
                for c in pc * cw..((pc + 1) * cw).min(w) {
                    let v = map[r * w + c].abs();
                    match mode {
                        Pooling::Max => acc = f64::max(acc, v),
                        Pooling::Mean => acc += v,
                    }
                    n += 1;
                }
            }
            out.push(if mode == Pooling::Mean { acc / n as f64 } else { acc });
        }
    }
    out
}

fn pooled_len(shape: &[usize], cell: &[usize]) -> usize {
    let (h, w) = dims2(shape);
    let (ch, cw) = dims2(cell);
    h.div_ceil(ch) * w.div_ceil(cw)
}

enum State {
    Dictionary(Dictionary),
    Conv { dict: Dictionary, op: ConvOperator },
    Gabor { op: ConvOperator },
    Pca { mean: Vec<f64>, axes: Vec<Vec<f64>>, variances: Vec<f64> },
}

/// A fitted extractor mapping samples of one shape to fixed-length vectors.
pub struct FeatureExtractor {
    params: FeatureParams,
    sample_shape: Vec<usize>,
    state: State,
    output_dim: usize,
}

impl fmt::Debug for FeatureExtractor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FeatureExtractor")
            .field("kind", &self.params.kind)
            .field("sample_shape", &self.sample_shape)
            .field("output_dim", &self.output_dim)
            .finish()
    }
}

fn check_samples(samples: &[Tensor]) -> Result<Vec<usize>> {
    let shape = samples
        .first()
        .ok_or_else(|| Error::InvalidArgument("no training samples".into()))?
        .shape()
        .to_vec();
    if let Some(s) = samples.iter().find(|s| s.shape() != shape.as_slice()) {
        return Err(Error::ShapeMismatch {
            left: s.shape().to_vec(),
            right: shape,
        });
    }
    Ok(shape)
}

fn omp_codes(coder: &OmpCoder, samples: &[Tensor], sparsity: usize) -> Result<Vec<SparseCode>> {
    samples.par_iter().map(|y| coder.encode(y, sparsity)).collect()
}

/// Alternating OMP coding and MOD updates, starting from random samples.
fn learn_vector_dictionary(samples: &[Tensor], params: &FeatureParams, rng: &mut impl Rng) -> Result<Dictionary> {
    let mut dict = Dictionary::from_random_samples(samples, params.n_atoms, rng)?;
    let sparsity = params.sparsity.min(params.n_atoms);
    for _ in 0..params.dict_iters {
        let codes = omp_codes(&OmpCoder::new(&dict)?, samples, sparsity)?;
        dict = mod_update(samples, &codes, &dict)?;
    }
    Ok(dict)
}

/// Alternating convolutional coding and projected-gradient atom updates.
fn learn_conv_dictionary(samples: &[Tensor], params: &FeatureParams, rng: &mut impl Rng) -> Result<Dictionary> {
    let shape = samples[0].shape().to_vec();
    let k = params.n_atoms;
    let candidates: Vec<&Tensor> = samples.iter().filter(|s| s.l2_norm() > 0.0).collect();
    if candidates.len() < k {
        return Err(Error::InvalidArgument(format!("need {k} nonzero samples, have {}", candidates.len())));
    }
    // Initial atoms: highest-energy windows of distinct random samples.
    let mut atoms = Vec::with_capacity(k);
    for i in sample_indices(rng, candidates.len(), k).iter() {
        let y = candidates[i];
        atoms.push(y.window(max_energy_window(y, &params.patch_shape)?, &params.patch_shape)?);
    }
    let mut dict = Dictionary::normalized(atoms)?;
    let mut maps: Option<Vec<Vec<Vec<f64>>>> = None;
    for _ in 0..params.dict_iters {
        let op = ConvOperator::new(dict.atoms(), &shape)?;
        let sols = conv_bpdn_batch(&op, samples, &params.coding, maps.as_deref())?;
        let m: Vec<Vec<Vec<f64>>> = sols.into_iter().map(|s| s.maps).collect();
        dict = cdl_dict_update_maps(samples, &m, &dict, params.update_iters, 1e-6)?.dictionary;
        maps = Some(m);
    }
    Ok(dict)
}

fn fit_pca(samples: &[Tensor], dims: usize) -> Result<State> {
    let n = samples.len();
    let d = samples[0].len();
    if n < dims || dims == 0 || dims > d {
        return Err(Error::InvalidArgument(format!(
            "PCA with {dims} dimensions needs at least as many samples ({n}) and features ({d})"
        )));
    }
    let mut mean = vec![0.0; d];
    for s in samples {
        mean.iter_mut().zip(s.data()).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| samples[i].data()[j] - mean[j]);
    let cov = centered.tr_mul(&centered) / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut axes = Vec::with_capacity(dims);
    let mut variances = Vec::with_capacity(dims);
    for &j in order.iter().take(dims) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(j).iter().copied().collect();
        // Sign convention: largest-magnitude component positive.
        let lead = axis.iter().copied().fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        if lead < 0.0 {
            axis.iter_mut().for_each(|v| *v = -*v);
        }
        axes.push(axis);
        variances.push(eig.eigenvalues[j].max(0.0));
    }
    Ok(State::Pca { mean, axes, variances })
}

impl FeatureExtractor {
    /// Fits an extractor of `params.kind` to training samples of one shape.
    pub fn fit(params: &FeatureParams, samples: &[Tensor], rng: &mut impl Rng) -> Result<Self> {
        let shape = check_samples(samples)?;
        let state = match params.kind {
            FeatureKind::Dl => State::Dictionary(learn_vector_dictionary(samples, params, rng)?),
            FeatureKind::Pdl => {
                let mut patches: Vec<Tensor> = Vec::new();
                for s in samples {
                    patches.extend(extract_patches(s, &params.patch_shape, params.stride)?);
                }
                patches.retain(|p| p.l2_norm() > 1e-12);
                if patches.len() > params.max_fit {
                    let keep = sample_indices(rng, patches.len(), params.max_fit).into_vec();
                    let mut keep = keep;
                    keep.sort_unstable();
                    patches = keep.into_iter().map(|i| patches[i].clone()).collect();
                }
                State::Dictionary(learn_vector_dictionary(&patches, params, rng)?)
            }
            FeatureKind::Cdl => {
                let subset: Vec<Tensor> = if samples.len() > params.max_fit {
                    let mut keep = sample_indices(rng, samples.len(), params.max_fit).into_vec();
                    keep.sort_unstable();
                    keep.into_iter().map(|i| samples[i].clone()).collect()
                } else {
                    samples.to_vec()
                };
                let dict = learn_conv_dictionary(&subset, params, rng)?;
                return Self::from_dictionary(params, &shape, dict);
            }
            FeatureKind::Gfe => {
                let bank = gabor_bank(&params.gabor)?;
                State::Gabor {
                    op: ConvOperator::new(&bank, &shape)?,
                }
            }
            FeatureKind::Pca => fit_pca(samples, params.pca_dims)?,
        };
        Self::assemble(params, &shape, state)
    }

    /// Extractor around a given dictionary (DL, PDL or CDL).
    pub fn from_dictionary(params: &FeatureParams, sample_shape: &[usize], dict: Dictionary) -> Result<Self> {
        let state = match params.kind {
            FeatureKind::Dl | FeatureKind::Pdl => State::Dictionary(dict),
            FeatureKind::Cdl => State::Conv {
                op: ConvOperator::new(dict.atoms(), sample_shape)?,
                dict,
            },
            k => return Err(Error::InvalidArgument(format!("{k} does not use a dictionary"))),
        };
        Self::assemble(params, sample_shape, state)
    }

    fn assemble(params: &FeatureParams, shape: &[usize], state: State) -> Result<Self> {
        let output_dim = match &state {
            State::Dictionary(d) => {
                let expected: &[usize] = if params.kind == FeatureKind::Dl { shape } else { &params.patch_shape };
                if d.atom_shape() != expected {
                    return Err(Error::ShapeMismatch {
                        left: d.atom_shape().to_vec(),
                        right: expected.to_vec(),
                    });
                }
                if params.kind == FeatureKind::Dl {
                    d.len()
                } else {
                    d.len() * crate::sparse_coding::patch_count(shape, &params.patch_shape, params.stride)?
                }
            }
            State::Conv { dict, .. } => dict.len() * pooled_len(shape, &params.pool),
            State::Gabor { op } => op.n_atoms() * pooled_len(shape, &params.pool),
            State::Pca { axes, .. } => axes.len(),
        };
        Ok(Self {
            params: params.clone(),
            sample_shape: shape.to_vec(),
            state,
            output_dim,
        })
    }

    pub fn kind(&self) -> FeatureKind {
        self.params.kind
    }

    pub fn params(&self) -> &FeatureParams {
        &self.params
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn sample_shape(&self) -> &[usize] {
        &self.sample_shape
    }

    pub fn dictionary(&self) -> Option<&Dictionary> {
        match &self.state {
            State::Dictionary(d) | State::Conv { dict: d, .. } => Some(d),
            _ => None,
        }
    }

    /// Principal axes and their variances (PCA only).
    pub fn principal_axes(&self) -> Option<(&[Vec<f64>], &[f64])> {
        match &self.state {
            State::Pca { axes, variances, .. } => Some((axes, variances)),
            _ => None,
        }
    }

    /// Feature vector of one sample.
    pub fn transform(&self, y: &Tensor) -> Result<Vec<f64>> {
        if y.shape() != self.sample_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                left: y.shape().to_vec(),
                right: self.sample_shape.clone(),
            });
        }
        let p = &self.params;
        let out = match &self.state {
            State::Dictionary(dict) => {
                let coder = OmpCoder::new(dict)?;
                let s = p.sparsity.min(dict.len());
                if p.kind == FeatureKind::Dl {
                    coder.encode_dense(y, s)?
                } else {
                    let mut v = Vec::with_capacity(self.output_dim);
                    for patch in extract_patches(y, &p.patch_shape, p.stride)? {
                        v.extend(coder.encode_dense(&patch, s)?);
                    }
                    v
                }
            }
            State::Conv { op, .. } => {
                let sol = conv_bpdn_with(op, y, &p.coding, None)?;
                sol.maps
                    .iter()
                    .flat_map(|m| pool_abs(m, &self.sample_shape, &p.pool, Pooling::Max))
                    .collect()
            }
            State::Gabor { op } => op
                .adjoint(y.data())
                .iter()
                .flat_map(|m| pool_abs(m, &self.sample_shape, &p.pool, Pooling::Mean))
                .collect(),
            State::Pca { mean, axes, .. } => {
                let c: Vec<f64> = y.data().iter().zip(mean).map(|(v, m)| v - m).collect();
                axes.iter().map(|a| dot(a, &c)).collect()
            }
        };
        debug_assert_eq!(out.len(), self.output_dim);
        Ok(out)
    }

    /// Feature vectors of many samples, computed in parallel, input order kept.
    pub fn transform_batch(&self, samples: &[Tensor]) -> Result<Vec<Vec<f64>>> {
        if let State::Dictionary(dict) = &self.state {
            // Share one Gram matrix across the batch.
            let coder = OmpCoder::new(dict)?;
            let p = &self.params;
            let s = p.sparsity.min(dict.len());
            return samples
                .par_iter()
                .map(|y| {
                    if y.shape() != self.sample_shape.as_slice() {
                        return Err(Error::ShapeMismatch {
                            left: y.shape().to_vec(),
                            right: self.sample_shape.clone(),
                        });
                    }
                    if p.kind == FeatureKind::Dl {
                        return coder.encode_dense(y, s);
                    }
                    let mut v = Vec::with_capacity(self.output_dim);
                    for patch in extract_patches(y, &p.patch_shape, p.stride)? {
                        v.extend(coder.encode_dense(&patch, s)?);
                    }
                    Ok(v)
                })
                .collect();
        }
        samples.par_iter().map(|y| self.transform(y)).collect()
    }
}

/// Feature matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl FeatureMatrix {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::InvalidArgument(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        if let Some(r) = rows.first() {
            if rows.iter().any(|x| x.len() != r.len()) {
                return Err(Error::InvalidArgument("rows differ in length".into()));
            }
        }
        Ok(Self { rows, labels })
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    /// Binary tensor stream: `[n, dim]` features then `[n]` labels.
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let n = self.rows.len();
        let feats = Tensor::new(&[n.max(1), self.dim().max(1)], {
            let mut d = self.rows.concat();
            d.resize(n.max(1) * self.dim().max(1), 0.0);
            d
        })?;
        let labels = Tensor::from_vec(if n == 0 { vec![0.0] } else { self.labels.iter().map(|&l| l as f64).collect() })?;
        let count = Tensor::from_vec(vec![n as f64])?;
        Ok(write_tensors(w, &[count, feats, labels])?)
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let t = read_tensors(r)?;
        if t.len() != 3 || t[1].rank() != 2 {
            return Err(Error::Data("malformed feature file".into()));
        }
        let n = t[0].data()[0] as usize;
        if n == 0 {
            return Ok(Self {
                rows: Vec::new(),
                labels: Vec::new(),
            });
        }
        let (rows, cols) = t[1].dims2();
        if rows != n || t[2].len() != n {
            return Err(Error::Data("feature file counts disagree".into()));
        }
        let data = t[1].data();
        Ok(Self {
            rows: (0..n).map(|i| data[i * cols..(i + 1) * cols].to_vec()).collect(),
            labels: t[2].data().iter().map(|&l| l as usize).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// CSV: one row per sample, label in the last column.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for (row, label) in self.rows.iter().zip(&self.labels) {
            for v in row {
                write!(w, "{v},")?;
            }
            writeln!(w, "{label}")?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        Ok(())
    }
}
