//! Penalized least squares on accumulated normal equations, with GCV
//! selection of per-block smoothing parameters.
//!
//! Design matrices are never stored here; callers stream rows into
//! [`NormalEquations`], which keeps `X'X`, `X'y`, `y'y`, and the row count.
//! That is enough to fit coefficients, select smoothing parameters by GCV,
//! and report effective degrees of freedom, at a cost independent of the
//! number of observations.

use nalgebra::{Cholesky, DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("penalized normal equations are singular")]
    Singular,
    #[error("model has {cols} coefficients but only {rows} observations")]
    TooFewRows { rows: usize, cols: usize },
    #[error("penalty block at offset {offset} (size {size}) exceeds {cols} columns")]
    BlockOutOfRange { offset: usize, size: usize, cols: usize },
}

/// How a penalty block's smoothing parameter is determined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaChoice {
    Fixed(f64),
    Gcv,
}

/// A quadratic penalty acting on a contiguous column range.
#[derive(Debug, Clone)]
pub struct PenaltyBlock {
    pub offset: usize,
    pub matrix: DMatrix<f64>,
    pub lambda: LambdaChoice,
}

/// Accumulated sufficient statistics of a least-squares problem.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub xtx: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
    pub rows: usize,
}

impl NormalEquations {
    pub fn new(cols: usize) -> Self {
        Self { xtx: DMatrix::zeros(cols, cols), xty: DVector::zeros(cols), yty: 0.0, rows: 0 }
    }

    pub fn cols(&self) -> usize {
        self.xty.len()
    }

    /// Accumulate one dense design row.
    pub fn add_row(&mut self, row: &DVector<f64>, y: f64) {
        self.xtx.syger(1.0, row, row, 1.0);
        self.xty.axpy(y, row, 1.0);
        self.yty += y * y;
        self.rows += 1;
    }

    /// Accumulate a sparse design row given as (column, value) pairs.
    pub fn add_sparse_row(&mut self, entries: &[(usize, f64)], y: f64) {
        for &(i, vi) in entries {
            for &(j, vj) in entries {
                self.xtx[(i, j)] += vi * vj;
            }
            self.xty[i] += vi * y;
        }
        self.yty += y * y;
        self.rows += 1;
    }

    /// Accumulate a whole design block.
    pub fn add_matrix(&mut self, design: &DMatrix<f64>, y: &DVector<f64>) {
        self.xtx.gemm_tr(1.0, design, design, 1.0);
        self.xty.gemv_tr(1.0, design, y, 1.0);
        self.yty += y.dot(y);
        self.rows += design.nrows();
    }
}

/// Result of a penalized fit.
#[derive(Debug, Clone)]
pub struct PenalizedFit {
    pub coef: DVector<f64>,
    /// Resolved smoothing parameter per penalty block, in input order.
    pub lambdas: Vec<f64>,
    pub sse: f64,
    pub edf_total: f64,
    /// Effective degrees of freedom per penalty block.
    pub edf_blocks: Vec<f64>,
    pub gcv: f64,
    /// True when the symmetric solve had to fall back to a pseudo-inverse.
    pub used_pseudo_inverse: bool,
}

const LOG10_LAMBDA_RANGE: (f64, f64) = (-6.0, 8.0);
const GOLDEN_ITERS: usize = 30;
const GCV_SWEEPS: usize = 2;

struct Evaluation {
    coef: DVector<f64>,
    sse: f64,
    edf_total: f64,
    edf_blocks: Vec<f64>,
    gcv: f64,
    pseudo: bool,
}

fn penalized_matrix(ne: &NormalEquations, blocks: &[PenaltyBlock], lambdas: &[f64]) -> DMatrix<f64> {
    let mut a = ne.xtx.clone();
    for (block, &lambda) in blocks.iter().zip(lambdas) {
        let k = block.matrix.nrows();
        let off = block.offset;
        if lambda > 0.0 {
            for i in 0..k {
                for j in 0..k {
                    a[(off + i, off + j)] += lambda * block.matrix[(i, j)];
                }
            }
        }
    }
    a
}

/// Solve `A x = b` for each column of `b`, preferring Cholesky and falling
/// back to an eigenvalue pseudo-inverse when the matrix is not positive
/// definite.
fn solve_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<(DMatrix<f64>, bool)> {
    if let Some(chol) = Cholesky::new(a.clone()) {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            chol.solve_mut(&mut col);
        }
        return Some((x, false));
    }
    log::warn!("normal equations not positive definite; using pseudo-inverse");
    let eig = a.clone().symmetric_eigen();
    let max = eig.eigenvalues.amax();
    if !(max > 0.0) {
        return None;
    }
    let tol = max * 1e-12;
    let mut inv_vals = eig.eigenvalues.clone();
    for v in inv_vals.iter_mut() {
        *v = if *v > tol { 1.0 / *v } else { 0.0 };
    }
    let pinv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    Some((pinv * b, true))
}

fn evaluate(ne: &NormalEquations, blocks: &[PenaltyBlock], lambdas: &[f64]) -> Option<Evaluation> {
    let a = penalized_matrix(ne, blocks, lambdas);
    let rhs = DMatrix::from_column_slice(ne.cols(), 1, ne.xty.as_slice());
    let (coef_m, pseudo) = solve_columns(&a, &rhs)?;
    let coef = DVector::from_column_slice(coef_m.as_slice());
    let sse = (ne.yty - 2.0 * coef.dot(&ne.xty)
        + (coef.transpose() * &ne.xtx * &coef)[(0, 0)])
        .max(0.0);
    // Influence trace: edf = tr(A^{-1} X'X); the per-column diagonal gives
    // per-block effective degrees of freedom.
    let (ainv_xtx, _) = solve_columns(&a, &ne.xtx)?;
    let mut edf_blocks = vec![0.0; blocks.len()];
    let mut edf_total = 0.0;
    for i in 0..ne.cols() {
        edf_total += ainv_xtx[(i, i)];
    }
    for (bi, block) in blocks.iter().enumerate() {
        for i in block.offset..block.offset + block.matrix.nrows() {
            edf_blocks[bi] += ainv_xtx[(i, i)];
        }
    }
    let n = ne.rows as f64;
    let denom = n - edf_total;
    let gcv = if denom > 1.0 { n * sse / (denom * denom) } else { f64::INFINITY };
    Some(Evaluation { coef, sse, edf_total, edf_blocks, gcv, pseudo })
}

/// Fit a penalized least-squares problem; blocks marked [`LambdaChoice::Gcv`]
/// get their smoothing parameter from a coordinate-wise golden-section search
/// on `log10 lambda` over `[-6, 8]`, two sweeps. Deterministic given inputs.
pub fn fit_penalized(ne: &NormalEquations, blocks: &[PenaltyBlock]) -> Result<PenalizedFit, FitError> {
    let cols = ne.cols();
    if ne.rows <= cols {
        return Err(FitError::TooFewRows { rows: ne.rows, cols });
    }
    for b in blocks {
        if b.offset + b.matrix.nrows() > cols {
            return Err(FitError::BlockOutOfRange {
                offset: b.offset,
                size: b.matrix.nrows(),
                cols,
            });
        }
    }
    let mut lambdas: Vec<f64> = blocks
        .iter()
        .map(|b| match b.lambda {
            LambdaChoice::Fixed(v) => v,
            LambdaChoice::Gcv => 1.0,
        })
        .collect();
    let free: Vec<usize> = blocks
        .iter()
        .enumerate()
        .filter(|(_, b)| matches!(b.lambda, LambdaChoice::Gcv))
        .map(|(i, _)| i)
        .collect();

    if !free.is_empty() {
        for _ in 0..GCV_SWEEPS {
            for &bi in &free {
                let score = |log_lambda: f64, lambdas: &mut Vec<f64>| {
                    lambdas[bi] = 10f64.powf(log_lambda);
                    evaluate(ne, blocks, lambdas).map_or(f64::INFINITY, |e| e.gcv)
                };
                let (mut lo, mut hi) = LOG10_LAMBDA_RANGE;
                let phi = (5f64.sqrt() - 1.0) / 2.0;
                let mut x1 = hi - phi * (hi - lo);
                let mut x2 = lo + phi * (hi - lo);
                let mut f1 = score(x1, &mut lambdas);
                let mut f2 = score(x2, &mut lambdas);
                for _ in 0..GOLDEN_ITERS {
                    if f1 <= f2 {
                        hi = x2;
                        x2 = x1;
                        f2 = f1;
                        x1 = hi - phi * (hi - lo);
                        f1 = score(x1, &mut lambdas);
                    } else {
                        lo = x1;
                        x1 = x2;
                        f1 = f2;
                        x2 = lo + phi * (hi - lo);
                        f2 = score(x2, &mut lambdas);
                    }
                }
                let best = if f1 <= f2 { x1 } else { x2 };
                lambdas[bi] = 10f64.powf(best);
            }
        }
    }

    let eval = evaluate(ne, blocks, &lambdas).ok_or(FitError::Singular)?;
    Ok(PenalizedFit {
        coef: eval.coef,
        lambdas,
        sse: eval.sse,
        edf_total: eval.edf_total,
        edf_blocks: eval.edf_blocks,
        gcv: eval.gcv,
        used_pseudo_inverse: eval.pseudo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::{difference_penalty, BSplineBasis};
    use approx::assert_abs_diff_eq;

    #[test]
    fn unpenalized_intercept_recovers_mean() {
        let mut ne = NormalEquations::new(1);
        let ys = [1.0, 2.0, 3.0, 10.0];
        for &y in &ys {
            ne.add_row(&DVector::from_element(1, 1.0), y);
        }
        let fit = fit_penalized(&ne, &[]).unwrap();
        assert_abs_diff_eq!(fit.coef[0], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.edf_total, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn noiseless_linear_function_is_recovered_exactly() {
        // y = 2 z over [0, 10]: the 2nd-order penalty null space contains
        // linear functions, so the fit must be exact for any lambda.
        let basis = BSplineBasis::clamped(0.0, 10.0, 10).unwrap();
        let mut ne = NormalEquations::new(10);
        let zs: Vec<f64> = (0..200).map(|i| 10.0 * i as f64 / 199.0).collect();
        for &z in &zs {
            ne.add_row(&basis.eval_row(z).unwrap(), 2.0 * z);
        }
        let penalty = difference_penalty(10, 2).unwrap();
        let blocks = [PenaltyBlock { offset: 0, matrix: penalty.matrix, lambda: LambdaChoice::Gcv }];
        let fit = fit_penalized(&ne, &blocks).unwrap();
        for &z in &zs {
            let pred = basis.eval_row(z).unwrap().dot(&fit.coef);
            assert_abs_diff_eq!(pred, 2.0 * z, epsilon = 1e-3);
        }
    }

    #[test]
    fn huge_lambda_collapses_to_penalty_null_space() {
        // Wiggly data, enormous fixed lambda: fit approaches the best straight
        // line, so second differences of the coefficients vanish.
        let basis = BSplineBasis::clamped(0.0, 1.0, 8).unwrap();
        let mut ne = NormalEquations::new(8);
        for i in 0..100 {
            let x = i as f64 / 99.0;
            let y = (12.0 * x).sin();
            ne.add_row(&basis.eval_row(x).unwrap(), y);
        }
        let penalty = difference_penalty(8, 2).unwrap();
        let blocks = [PenaltyBlock {
            offset: 0,
            matrix: penalty.matrix.clone(),
            lambda: LambdaChoice::Fixed(1e12),
        }];
        let fit = fit_penalized(&ne, &blocks).unwrap();
        let p = PenaltyBlock { offset: 0, matrix: penalty.matrix, lambda: LambdaChoice::Fixed(0.0) };
        let bending = (fit.coef.transpose() * &p.matrix * &fit.coef)[(0, 0)];
        assert!(bending < 1e-8, "bending energy {bending} should vanish");
        // And edf drops to roughly the null space dimension.
        assert!(fit.edf_blocks[0] < 2.5);
    }

    #[test]
    fn too_few_rows_is_error() {
        let mut ne = NormalEquations::new(3);
        ne.add_row(&DVector::from_vec(vec![1.0, 0.0, 0.0]), 1.0);
        assert!(matches!(fit_penalized(&ne, &[]), Err(FitError::TooFewRows { .. })));
    }

    #[test]
    fn sparse_and_dense_accumulation_agree() {
        let mut dense = NormalEquations::new(4);
        let mut sparse = NormalEquations::new(4);
        let rows = [
            (vec![(0, 1.0), (2, 0.5)], 2.0),
            (vec![(1, -1.0), (3, 2.0)], -1.0),
            (vec![(0, 0.25), (1, 0.25), (2, 0.25), (3, 0.25)], 0.5),
        ];
        for (entries, y) in &rows {
            let mut row = DVector::zeros(4);
            for &(i, v) in entries {
                row[i] = v;
            }
            dense.add_row(&row, *y);
            sparse.add_sparse_row(entries, *y);
        }
        assert!((dense.xtx - sparse.xtx).amax() < 1e-14);
        assert!((dense.xty - sparse.xty).amax() < 1e-14);
        assert_abs_diff_eq!(dense.yty, sparse.yty, epsilon = 1e-14);
    }

    #[test]
    fn gcv_tracks_noisy_smooth_function() {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis = BSplineBasis::clamped(0.0, 1.0, 12).unwrap();
        let mut ne = NormalEquations::new(12);
        let truth = |x: f64| (2.0 * std::f64::consts::PI * x).sin();
        for i in 0..400 {
            let x = i as f64 / 399.0;
            let y = truth(x) + 0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal);
            ne.add_row(&basis.eval_row(x).unwrap(), y);
        }
        let penalty = difference_penalty(12, 2).unwrap();
        let blocks = [PenaltyBlock { offset: 0, matrix: penalty.matrix, lambda: LambdaChoice::Gcv }];
        let fit = fit_penalized(&ne, &blocks).unwrap();
        let mut max_err: f64 = 0.0;
        for i in 0..50 {
            let x = i as f64 / 49.0;
            let pred = basis.eval_row(x).unwrap().dot(&fit.coef);
            max_err = max_err.max((pred - truth(x)).abs());
        }
        assert!(max_err < 0.1, "max error {max_err}");
    }
}
