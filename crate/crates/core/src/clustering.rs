//! Classical k-means, shift-invariant k-means and clustering accuracy.

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;

use crate::dictionary::{max_energy_window, mosa_update, Dictionary, MosaVariant};
use crate::error::{Error, Result};
use crate::sparse_coding::{AtomMatch, Matcher};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    pub centroids: Dictionary,
    /// Objective after each assignment step.
    pub objective_trace: Vec<f64>,
    pub iterations_run: usize,
    /// Per-sample matches (shift-invariant k-means only).
    pub matches: Option<Vec<AtomMatch>>,
}

fn check_samples(samples: &[Tensor], k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    if samples.len() < k {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds the sample count {}",
            samples.len()
        )));
    }
    let shape = samples[0].shape();
    if let Some(s) = samples.iter().find(|s| s.shape() != shape) {
        return Err(Error::ShapeMismatch {
            left: shape.to_vec(),
            right: s.shape().to_vec(),
        });
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(y: &Tensor, centroids: &[Tensor]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(y.data(), c.data());
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// Lloyd's algorithm with Euclidean distance, initialized from `k` distinct
/// random samples. An empty cluster takes over the sample currently farthest
/// from its centroid. Stops when the assignment no longer changes.
pub fn kmeans(samples: &[Tensor], k: usize, max_iters: usize, rng: &mut impl Rng) -> Result<ClusteringResult> {
    check_samples(samples, k)?;
    let shape = samples[0].shape().to_vec();
    let mut centroids: Vec<Tensor> = sample_indices(rng, samples.len(), k)
        .iter()
        .map(|i| samples[i].clone())
        .collect();
    let mut assignments: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    while iterations < max_iters.max(1) {
        iterations += 1;
        let nearest_all: Vec<(usize, f64)> = samples.par_iter().map(|y| nearest(y, &centroids)).collect();
        let next: Vec<usize> = nearest_all.iter().map(|p| p.0).collect();
        trace.push(nearest_all.iter().map(|p| p.1).sum());
        let stable = next == assignments;
        assignments = next;
        if stable {
            break;
        }

        let mut sums = vec![vec![0.0; samples[0].len()]; k];
        let mut counts = vec![0usize; k];
        for (y, &a) in samples.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(y.data()) {
                *s += v;
            }
        }
        let mut far: Vec<usize> = (0..samples.len()).collect();
        far.sort_by(|&a, &b| nearest_all[b].1.total_cmp(&nearest_all[a].1).then(a.cmp(&b)));
        let mut donors = far.into_iter();
        for j in 0..k {
            if counts[j] > 0 {
                let n = counts[j] as f64;
                centroids[j] = Tensor::new(&shape, sums[j].iter().map(|s| s / n).collect())?;
            } else if let Some(i) = donors.next() {
                centroids[j] = samples[i].clone();
            }
        }
    }
    Ok(ClusteringResult {
        assignments,
        centroids: Dictionary::centroids(centroids)?,
        objective_trace: trace,
        iterations_run: iterations,
        matches: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftInvariantParams {
    /// Centroid (atom) shape; must fit in the samples.
    pub atom_shape: Vec<usize>,
    pub max_iters: usize,
    pub variant: MosaVariant,
}

impl Default for ShiftInvariantParams {
    fn default() -> Self {
        Self {
            atom_shape: vec![28, 28],
            max_iters: 50,
            variant: MosaVariant::Uniform,
        }
    }
}

/// Initial atoms: the highest-energy atom-sized window of `k` distinct
/// random nonzero samples, normalized.
fn init_atoms(samples: &[Tensor], k: usize, atom_shape: &[usize], rng: &mut impl Rng) -> Result<Dictionary> {
    let nonzero: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].l2_norm() > 0.0).collect();
    if nonzero.len() < k {
        return Err(Error::InvalidArgument(format!(
            "need {k} nonzero samples, have {}",
            nonzero.len()
        )));
    }
    let mut atoms = Vec::with_capacity(k);
    for i in sample_indices(rng, nonzero.len(), k).iter() {
        let y = &samples[nonzero[i]];
        let w = y.window(max_energy_window(y, atom_shape)?, atom_shape)?;
        atoms.push(w);
    }
    Dictionary::normalized(atoms)
}

/// Shift-invariant k-means: each centroid is a unit-norm atom matched at its
/// best offset and (signed) magnitude; centroids are updated with MOSA.
///
/// The objective is `sum_i ||y_i||^2 - c_i^2`. Alternation stops when the
/// assignment (atom and offset) repeats or after `max_iters` rounds; the
/// iterate with the lowest objective is returned.
pub fn kmeans_shift_invariant(
    samples: &[Tensor],
    k: usize,
    params: &ShiftInvariantParams,
    rng: &mut impl Rng,
) -> Result<ClusteringResult> {
    check_samples(samples, k)?;
    let sample_shape = samples[0].shape();
    let (h, w) = samples[0].dims2();
    let (ah, aw) = crate::tensor::dims2(&params.atom_shape);
    if params.atom_shape.len() != sample_shape.len() || ah > h || aw > w {
        return Err(Error::InvalidArgument(format!(
            "atom shape {:?} exceeds sample shape {sample_shape:?}",
            params.atom_shape
        )));
    }
    let mut dict = init_atoms(samples, k, &params.atom_shape, rng)?;
    let mut trace = Vec::new();
    let mut best: Option<(f64, Dictionary, Vec<AtomMatch>)> = None;
    let mut previous: Vec<(usize, [usize; 2])> = Vec::new();
    let mut iterations = 0;
    while iterations < params.max_iters.max(1) {
        iterations += 1;
        let matches = Matcher::new(&dict, sample_shape)?.best_many(samples)?;
        let objective: f64 = matches.iter().map(|m| m.residual_energy).sum();
        trace.push(objective);
        if best.as_ref().is_none_or(|b| objective < b.0) {
            best = Some((objective, dict.clone(), matches.clone()));
        }
        let current: Vec<(usize, [usize; 2])> = matches.iter().map(|m| (m.atom, m.offset)).collect();
        if current == previous {
            break;
        }
        previous = current;
        dict = mosa_update(samples, &matches, &dict, params.variant)?.dictionary;
    }
    let (_, centroids, matches) = best.expect("at least one iteration");
    Ok(ClusteringResult {
        assignments: matches.iter().map(|m| m.atom).collect(),
        centroids,
        objective_trace: trace,
        iterations_run: iterations,
        matches: Some(matches),
    })
}

/// Uniform random cluster labels (the chance baseline).
pub fn random_assignment(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..k.max(1))).collect()
}

/// Cluster-by-class contingency counts.
pub fn contingency(assignments: &[usize], labels: &[usize]) -> Result<Vec<Vec<u64>>> {
    if assignments.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} assignments but {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    let rows = assignments.iter().max().map_or(0, |m| m + 1);
    let cols = labels.iter().max().map_or(0, |m| m + 1);
    let mut table = vec![vec![0u64; cols]; rows];
    for (&a, &l) in assignments.iter().zip(labels) {
        table[a][l] += 1;
    }
    Ok(table)
}

/// Largest total count over one-to-one cluster/class pairings.
pub fn best_matching_mass(table: &[Vec<u64>]) -> u64 {
    let rows = table.len();
    let cols = table.iter().map(Vec::len).max().unwrap_or(0);
    let m = rows.max(cols);
    if m == 0 {
        return 0;
    }
    let mut weights = Matrix::new(m, m, 0i64);
    for (r, row) in table.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            weights[(r, c)] = v as i64;
        }
    }
    let (total, _) = kuhn_munkres(&weights);
    total as u64
}

/// Fraction of samples whose cluster maps to their class under the best
/// one-to-one matching of clusters to classes.
pub fn clustering_accuracy(assignments: &[usize], labels: &[usize]) -> Result<f64> {
    let table = contingency(assignments, labels)?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no samples to score".into()));
    }
    Ok(best_matching_mass(&table) as f64 / labels.len() as f64)
}
