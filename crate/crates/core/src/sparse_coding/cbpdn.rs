use rayon::prelude::*;

use crate::conv::ConvOperator;
use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::sparse_coding::SparseCode;
use crate::tensor::{dot, Tensor};

/// Regularization weight, either fixed or relative to the largest absolute
/// correlation of the sample with any shifted atom (the smallest weight that
/// still yields an all-zero code).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Absolute(f64),
    RelativeToMax(f64),
}

impl Default for Lambda {
    fn default() -> Self {
        Lambda::RelativeToMax(0.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CbpdnParams {
    pub lambda: Lambda,
    pub max_iters: usize,
    /// Stop once the relative objective change of an accepted step is below this.
    pub tol: f64,
}

impl Default for CbpdnParams {
    fn default() -> Self {
        Self {
            lambda: Lambda::default(),
            max_iters: 200,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CbpdnSolution {
    pub code: SparseCode,
    /// Dense sample-sized coefficient maps, one per atom.
    pub maps: Vec<Vec<f64>>,
    pub lambda: f64,
    /// Objective of the iterate after each iteration, starting with the initial point.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// `(1/2)||y - sum_k a_k * x_k||^2 + lambda sum_k ||x_k||_1`.
pub fn objective(op: &ConvOperator, y: &[f64], maps: &[Vec<f64>], lambda: f64) -> f64 {
    let s = op.synthesize(maps);
    objective_from_synthesis(y, &s, maps, lambda)
}

fn objective_from_synthesis(y: &[f64], s: &[f64], maps: &[Vec<f64>], lambda: f64) -> f64 {
    let fit: f64 = y.iter().zip(s).map(|(a, b)| (a - b) * (a - b)).sum();
    0.5 * fit + lambda * l1(maps)
}

fn l1(maps: &[Vec<f64>]) -> f64 {
    maps.iter().flatten().map(|v| v.abs()).sum()
}

fn soft(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

/// Largest `|x - S_{lambda/L}(x - grad/L)|` with `L` the operator's spectral
/// bound; zero exactly at a minimizer.
pub fn fixed_point_residual(op: &ConvOperator, y: &[f64], maps: &[Vec<f64>], lambda: f64) -> f64 {
    let l = op.lipschitz_bound();
    let s = op.synthesize(maps);
    let r: Vec<f64> = y.iter().zip(&s).map(|(a, b)| a - b).collect();
    let g = op.adjoint(&r);
    let mut worst: f64 = 0.0;
    for (x, gk) in maps.iter().zip(&g) {
        for (&xv, &gv) in x.iter().zip(gk) {
            // gradient of the fit term is -A^T r
            let step = soft(xv + gv / l, lambda / l);
            worst = worst.max((xv - step).abs());
        }
    }
    worst
}

/// l1-regularized convolutional coding of `y` ("same"-size maps).
pub fn conv_bpdn(y: &Tensor, dict: &Dictionary, params: &CbpdnParams) -> Result<CbpdnSolution> {
    let op = ConvOperator::new(dict.atoms(), y.shape())?;
    conv_bpdn_with(&op, y, params, None)
}

/// As [`conv_bpdn`] with a prebuilt operator and optional warm start.
///
/// Monotone FISTA: the extrapolated point is only a proposal, and the
/// iterate moves to it only if the objective does not increase.
pub fn conv_bpdn_with(
    op: &ConvOperator,
    y: &Tensor,
    params: &CbpdnParams,
    init: Option<&[Vec<f64>]>,
) -> Result<CbpdnSolution> {
    if y.shape() != op.sample_shape() {
        return Err(Error::ShapeMismatch {
            left: y.shape().to_vec(),
            right: op.sample_shape().to_vec(),
        });
    }
    let yd = y.data();
    let n = op.sample_len();
    let k = op.n_atoms();
    let lambda = match params.lambda {
        Lambda::Absolute(v) => v,
        Lambda::RelativeToMax(r) => {
            let g = op.adjoint(yd);
            r * g.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()))
        }
    };
    if !(lambda > 0.0) {
        if yd.iter().all(|v| *v == 0.0) && lambda == 0.0 {
            let maps = vec![vec![0.0; n]; k];
            return Ok(CbpdnSolution {
                code: SparseCode::from_dense_maps(y.shape(), op.atom_shape(), &maps)?,
                maps,
                lambda,
                objective: vec![0.0],
                iterations: 0,
                converged: true,
            });
        }
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }

    let mut x: Vec<Vec<f64>> = match init {
        Some(m) if m.len() == k && m.iter().all(|v| v.len() == n) => m.to_vec(),
        Some(_) => return Err(Error::InvalidArgument("warm start has the wrong shape".into())),
        None => vec![vec![0.0; n]; k],
    };
    let mut sx = op.synthesize(&x);
    let mut fx = objective_from_synthesis(yd, &sx, &x, lambda);
    let mut z = x.clone();
    let mut sz = sx.clone();
    let mut t = 1.0f64;
    let mut lip = op.lipschitz_bound().max(f64::MIN_POSITIVE);
    let mut trace = vec![fx];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < params.max_iters {
        iterations += 1;
        let rz: Vec<f64> = yd.iter().zip(&sz).map(|(a, b)| a - b).collect();
        let fz = 0.5 * dot(&rz, &rz);
        let gz = op.adjoint(&rz);

        // Backtracking on the quadratic upper bound of the smooth term.
        let mut doublings = 0;
        let (u, su) = loop {
            let thr = lambda / lip;
            let u: Vec<Vec<f64>> = z
                .iter()
                .zip(&gz)
                .map(|(zk, gk)| zk.iter().zip(gk).map(|(&a, &g)| soft(a + g / lip, thr)).collect())
                .collect();
            let su = op.synthesize(&u);
            let fu: f64 = yd.iter().zip(&su).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() * 0.5;
            let mut lin = 0.0;
            let mut quad = 0.0;
            for ((uk, zk), gk) in u.iter().zip(&z).zip(&gz) {
                for ((&a, &b), &g) in uk.iter().zip(zk).zip(gk) {
                    let d = a - b;
                    lin -= g * d;
                    quad += d * d;
                }
            }
            if fu <= fz + lin + 0.5 * lip * quad + 1e-12 * fz.abs().max(1.0) {
                break (u, su);
            }
            lip *= 2.0;
            doublings += 1;
            if doublings > 60 {
                return Err(Error::StepUnderflow { iterations });
            }
        };

        let fu = objective_from_synthesis(yd, &su, &u, lambda);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let accepted = fu <= fx;
        let (x_new, sx_new, fx_new) = if accepted {
            (u.clone(), su.clone(), fu)
        } else {
            (x.clone(), sx.clone(), fx)
        };
        // z = x_new + (t / t_next)(u - x_new) + ((t - 1) / t_next)(x_new - x)
        let a = t / t_next;
        let b = (t - 1.0) / t_next;
        let combine = |xn: &[f64], uu: &[f64], xo: &[f64]| -> Vec<f64> {
            xn.iter()
                .zip(uu)
                .zip(xo)
                .map(|((&p, &q), &r)| p + a * (q - p) + b * (p - r))
                .collect()
        };
        z = x_new
            .iter()
            .zip(&u)
            .zip(&x)
            .map(|((xn, uu), xo)| combine(xn, uu, xo))
            .collect();
        sz = combine(&sx_new, &su, &sx);
        t = t_next;

        let change = (fx - fx_new).abs() / fx.abs().max(f64::MIN_POSITIVE);
        x = x_new;
        sx = sx_new;
        fx = fx_new;
        trace.push(fx);
        if accepted && change < params.tol {
            converged = true;
            break;
        }
    }

    Ok(CbpdnSolution {
        code: SparseCode::from_dense_maps(y.shape(), op.atom_shape(), &x)?,
        maps: x,
        lambda,
        objective: trace,
        iterations,
        converged,
    })
}

/// Codes many samples in parallel (input order preserved).
pub fn conv_bpdn_batch(
    op: &ConvOperator,
    samples: &[Tensor],
    params: &CbpdnParams,
    init: Option<&[Vec<Vec<f64>>]>,
) -> Result<Vec<CbpdnSolution>> {
    samples
        .par_iter()
        .enumerate()
        .map(|(i, y)| conv_bpdn_with(op, y, params, init.map(|m| m[i].as_slice())))
        .collect()
}
