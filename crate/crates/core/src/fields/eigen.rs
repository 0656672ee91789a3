use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::linsolve::SpdFactor;
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// A matrix of the form `scale·G + diag(diag)` for the grid stiffness `G`.
#[derive(Clone, Debug)]
pub struct PencilSpec {
    pub scale: f64,
    pub diag: Vec<f64>,
}

impl PencilSpec {
    fn apply(&self, g: &CsrMatrix, x: &[f64], y: &mut [f64]) {
        g.apply(x, y);
        for ((y, d), x) in y.iter_mut().zip(&self.diag).zip(x) {
            *y = self.scale * *y + d * x;
        }
    }
}

/// Lowest eigenpairs, `M`-orthonormal, in ascending order.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub iterations: usize,
}

const MAX_ITERATIONS: usize = 400;

/// Lowest `count` eigenpairs of `K x = λ M x` restricted to `Dᵀx = 0`, where
/// the columns of `D` are `constraints`.
///
/// Shift-invert subspace iteration with Rayleigh–Ritz. `shift` must lie below
/// the constrained spectrum; when `K − shift·M` is not positive definite the
/// shift is lowered and the factorisation retried.
pub fn constrained_eigenpairs(
    g: &CsrMatrix,
    k: &PencilSpec,
    m: &PencilSpec,
    constraints: &[Vec<f64>],
    count: usize,
    mut shift: f64,
    tol: f64,
) -> Result<EigenPairs> {
    let n = g.dim();
    let nc = constraints.len();
    let block = count + (count / 2).max(8);
    if count == 0 || block + nc > n {
        return Err(Error::ModeCountExceedsGrid {
            requested: count,
            available: n.saturating_sub(nc + 8),
        });
    }

    let mut factor = None;
    for _ in 0..12 {
        let b = PencilSpec {
            scale: k.scale - shift * m.scale,
            diag: k.diag.iter().zip(&m.diag).map(|(a, b)| a - shift * b).collect(),
        };
        match SpdFactor::new(g, b.scale, &b.diag) {
            Ok(f) => {
                factor = Some(f);
                break;
            }
            Err(_) => shift -= shift.abs().max(1e-2),
        }
    }
    let factor = factor.ok_or_else(|| {
        Error::EigensolveFailure("no positive definite shift found".into())
    })?;

    // Z = B⁻¹D and the small matrix (DᵀZ)⁻¹ used to enforce Dᵀy = 0.
    let mut z: Vec<f64> = constraints.iter().flatten().copied().collect();
    if nc > 0 {
        factor.solve_many_in_place(&mut z, nc);
    }
    let dtz = DMatrix::from_fn(nc, nc, |i, j| dot(&constraints[i], &z[j * n..(j + 1) * n]));
    let dtz_inv = dtz
        .try_inverse()
        .ok_or_else(|| Error::EigensolveFailure("constraints are linearly dependent".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e16e);
    let mut x: Vec<f64> = (0..n * block).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut previous = vec![f64::INFINITY; count];
    let mut scratch = vec![0.0; n * block];

    for iteration in 1..=MAX_ITERATIONS {
        // y = B⁻¹ M x, then remove the constraint component.
        x.par_chunks(n)
            .zip(scratch.par_chunks_mut(n))
            .for_each(|(xc, yc)| m.apply(g, xc, yc));
        factor.solve_many_in_place(&mut scratch, block);
        if nc > 0 {
            scratch.par_chunks_mut(n).for_each(|yc| {
                let dty: Vec<f64> = constraints.iter().map(|d| dot(d, yc)).collect();
                let coef = &dtz_inv * nalgebra::DVector::from_vec(dty);
                for (j, c) in coef.iter().enumerate() {
                    for (y, zz) in yc.iter_mut().zip(&z[j * n..(j + 1) * n]) {
                        *y -= c * zz;
                    }
                }
            });
        }

        let (values, coeffs) = rayleigh_ritz(g, k, m, &scratch, n, block)?;
        combine(&scratch, &coeffs, n, block, &mut x);

        let converged = values[..count]
            .iter()
            .zip(&previous)
            .all(|(v, p)| (v - p).abs() <= tol * (v.abs() + (v - shift).abs()));
        previous.copy_from_slice(&values[..count]);
        if converged {
            let vectors = x.chunks(n).take(count).map(|c| c.to_vec()).collect();
            return Ok(EigenPairs {
                values: values[..count].to_vec(),
                vectors,
                iterations: iteration,
            });
        }
    }
    Err(Error::EigensolveFailure(format!(
        "subspace iteration did not converge in {MAX_ITERATIONS} iterations"
    )))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| a * b).sum()
}

fn gram(a: &[f64], b: &[f64], n: usize, block: usize) -> DMatrix<f64> {
    let entries: Vec<(usize, usize, f64)> = (0..block)
        .flat_map(|i| (i..block).map(move |j| (i, j)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(i, j)| (i, j, dot(&a[i * n..(i + 1) * n], &b[j * n..(j + 1) * n])))
        .collect();
    let mut out = DMatrix::zeros(block, block);
    for (i, j, v) in entries {
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    out
}

/// Ritz values (ascending) and coefficient matrix whose columns give
/// `M`-orthonormal Ritz vectors as combinations of the columns of `y`.
fn rayleigh_ritz(
    g: &CsrMatrix,
    k: &PencilSpec,
    m: &PencilSpec,
    y: &[f64],
    n: usize,
    block: usize,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let mut ky = vec![0.0; n * block];
    let mut my = vec![0.0; n * block];
    y.par_chunks(n).zip(ky.par_chunks_mut(n)).for_each(|(yc, out)| k.apply(g, yc, out));
    y.par_chunks(n).zip(my.par_chunks_mut(n)).for_each(|(yc, out)| m.apply(g, yc, out));
    let kr = gram(y, &ky, n, block);
    let mr = gram(y, &my, n, block);

    // Orthonormal basis of the block in the M inner product, dropping
    // directions that have collapsed numerically.
    let me = SymmetricEigen::new(mr);
    let top = me.eigenvalues.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) || !top.is_finite() {
        return Err(Error::EigensolveFailure("degenerate iteration block".into()));
    }
    let keep: Vec<usize> = (0..block).filter(|&i| me.eigenvalues[i] > 1e-13 * top).collect();
    let basis = DMatrix::from_fn(block, keep.len(), |r, c| {
        me.eigenvectors[(r, keep[c])] / me.eigenvalues[keep[c]].sqrt()
    });
    let reduced = basis.transpose() * kr * &basis;
    let reduced = (&reduced + reduced.transpose()) * 0.5;
    let ke = SymmetricEigen::new(reduced);
    let mut order: Vec<usize> = (0..keep.len()).collect();
    order.sort_by(|&a, &b| ke.eigenvalues[a].total_cmp(&ke.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| ke.eigenvalues[i]).collect();
    let mut coeffs = DMatrix::zeros(block, block);
    for (c, &i) in order.iter().enumerate() {
        let col = &basis * ke.eigenvectors.column(i);
        coeffs.set_column(c, &col);
    }
    // Collapsed directions are replaced by raw block columns.
    for c in order.len()..block {
        coeffs[(c, c)] = 1.0;
    }
    let mut values = values;
    values.resize(block, f64::INFINITY);
    Ok((values, coeffs))
}

/// `x = y · coeffs` for column-major `n × block` matrices.
fn combine(y: &[f64], coeffs: &DMatrix<f64>, n: usize, block: usize, x: &mut [f64]) {
    x.par_chunks_mut(n).enumerate().for_each(|(c, out)| {
        out.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..block {
            let a = coeffs[(r, c)];
            if a != 0.0 {
                for (o, yv) in out.iter_mut().zip(&y[r * n..(r + 1) * n]) {
                    *o += a * yv;
                }
            }
        }
    });
}
