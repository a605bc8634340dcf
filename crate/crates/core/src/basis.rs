//! Cubic B-spline bases, difference penalties, tensor-product designs, and
//! sum-to-zero centering transforms.
//!
//! Every smooth term in the additive model is built from these blocks: a
//! basis (clamped for open domains, cyclic for the yearly direction), a
//! quadratic penalty on coefficient differences, and an optional centering
//! reparameterization that removes the vertical-shift ambiguity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Spline degree is fixed: cubic.
pub const DEGREE: usize = 3;

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("basis needs at least {min} functions, got {got}")]
    TooFewFunctions { min: usize, got: usize },
    #[error("invalid domain [{lo}, {hi}]")]
    InvalidDomain { lo: f64, hi: f64 },
    #[error("point {x} outside basis domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("penalty order {order} must satisfy 0 < order < {len}")]
    InvalidPenaltyOrder { order: usize, len: usize },
    #[error("coordinate vectors have different lengths: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("centering needs at least 2 columns, got {0}")]
    TooFewColumns(usize),
    #[error("centering constraint is numerically zero")]
    DegenerateConstraint,
}

/// Knot layout of a univariate basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnotLayout {
    /// Equally spaced interior knots, boundary knots replicated `DEGREE + 1`
    /// times. Functions vanish outside the domain.
    Clamped,
    /// Uniform knots wrapped around the domain so the fitted function and its
    /// first two derivatives match at the domain ends.
    Cyclic,
}

/// A cubic B-spline basis with `len` functions on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BSplineBasis {
    lo: f64,
    hi: f64,
    len: usize,
    layout: KnotLayout,
    /// Full knot vector for the clamped layout (`len + DEGREE + 1` entries).
    /// Empty for the cyclic layout, where knots are implicit and uniform.
    knots: Vec<f64>,
}

impl BSplineBasis {
    pub fn clamped(lo: f64, hi: f64, len: usize) -> Result<Self, BasisError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(BasisError::InvalidDomain { lo, hi });
        }
        if len < DEGREE + 1 {
            return Err(BasisError::TooFewFunctions { min: DEGREE + 1, got: len });
        }
        let spans = len - DEGREE;
        let h = (hi - lo) / spans as f64;
        let mut knots = Vec::with_capacity(len + DEGREE + 1);
        for _ in 0..=DEGREE {
            knots.push(lo);
        }
        for i in 1..spans {
            knots.push(lo + h * i as f64);
        }
        for _ in 0..=DEGREE {
            knots.push(hi);
        }
        Ok(Self { lo, hi, len, layout: KnotLayout::Clamped, knots })
    }

    pub fn cyclic(lo: f64, hi: f64, len: usize) -> Result<Self, BasisError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(BasisError::InvalidDomain { lo, hi });
        }
        if len < DEGREE + 1 {
            return Err(BasisError::TooFewFunctions { min: DEGREE + 1, got: len });
        }
        Ok(Self { lo, hi, len, layout: KnotLayout::Cyclic, knots: Vec::new() })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn layout(&self) -> KnotLayout {
        self.layout
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Clamp a point onto the domain (Phase-II evaluations outside the
    /// training range are pulled to the boundary by the caller).
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }

    /// Nonzero basis values at `x`: column index of the first active
    /// function (modulo `len` for cyclic bases) and the `DEGREE + 1` values.
    pub fn eval_local(&self, x: f64) -> Result<(usize, [f64; DEGREE + 1]), BasisError> {
        if !(x >= self.lo && x <= self.hi) {
            return Err(BasisError::OutOfDomain { x, lo: self.lo, hi: self.hi });
        }
        match self.layout {
            KnotLayout::Clamped => Ok(self.eval_clamped(x)),
            KnotLayout::Cyclic => Ok(self.eval_cyclic(x)),
        }
    }

    /// Cox-de Boor triangular scheme on the clamped knot vector.
    fn eval_clamped(&self, x: f64) -> (usize, [f64; DEGREE + 1]) {
        let t = &self.knots;
        // Knot span k with t[k] <= x < t[k+1]; x == hi falls in the last span.
        let last = self.len - 1;
        let mut k = last;
        if x < self.hi {
            k = match t[DEGREE..=last].binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
                Ok(i) => i + DEGREE,
                Err(i) => i + DEGREE - 1,
            };
            // Guard against repeated interior values from exact float ties.
            while t[k + 1] <= x && k < last {
                k += 1;
            }
        }
        let mut vals = [0.0; DEGREE + 1];
        vals[0] = 1.0;
        for d in 1..=DEGREE {
            let mut saved = 0.0;
            for r in 0..d {
                let left = t[k + 1 + r - d];
                let right = t[k + 1 + r];
                let denom = right - left;
                let term = if denom > 0.0 { vals[r] / denom } else { 0.0 };
                vals[r] = saved + (right - x) * term;
                saved = (x - left) * term;
            }
            vals[d] = saved;
        }
        (k - DEGREE, vals)
    }

    /// Uniform cubic pieces on the wrapped knot grid.
    fn eval_cyclic(&self, x: f64) -> (usize, [f64; DEGREE + 1]) {
        let width = self.hi - self.lo;
        let h = width / self.len as f64;
        let mut u = (x - self.lo) / h;
        if u >= self.len as f64 {
            u = self.len as f64; // x == hi
        }
        let mut cell = u.floor() as usize;
        if cell >= self.len {
            cell = self.len - 1;
        }
        let s = u - cell as f64;
        let oms = 1.0 - s;
        // Active functions on cell i are (i-3..=i) mod len, listed from the
        // lowest index: values are the standard uniform cubic pieces.
        let vals = [
            oms * oms * oms / 6.0,
            (3.0 * s * s * s - 6.0 * s * s + 4.0) / 6.0,
            (-3.0 * s * s * s + 3.0 * s * s + 3.0 * s + 1.0) / 6.0,
            s * s * s / 6.0,
        ];
        let first = (cell + self.len - DEGREE) % self.len;
        (first, vals)
    }

    /// Full design row (dense, length `len`).
    pub fn eval_row(&self, x: f64) -> Result<DVector<f64>, BasisError> {
        let (first, vals) = self.eval_local(x)?;
        let mut row = DVector::zeros(self.len);
        for (j, v) in vals.iter().enumerate() {
            row[(first + j) % self.len] += v;
        }
        Ok(row)
    }

    /// Design matrix (`x.len()` x `len`); errors if any point is outside the
    /// domain.
    pub fn eval_matrix(&self, x: &[f64]) -> Result<DMatrix<f64>, BasisError> {
        let mut out = DMatrix::zeros(x.len(), self.len);
        for (i, &xi) in x.iter().enumerate() {
            let (first, vals) = self.eval_local(xi)?;
            for (j, v) in vals.iter().enumerate() {
                out[(i, (first + j) % self.len)] += v;
            }
        }
        Ok(out)
    }

    /// Difference penalty matching the knot layout (wrapped differences for
    /// cyclic bases, whose null space is the constants only).
    pub fn penalty(&self, order: usize) -> Result<PenaltyMatrix, BasisError> {
        match self.layout {
            KnotLayout::Clamped => difference_penalty(self.len, order),
            KnotLayout::Cyclic => cyclic_difference_penalty(self.len, order),
        }
    }
}

/// Quadratic coefficient penalty `D' D` built from discrete differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyMatrix {
    pub order: usize,
    pub matrix: DMatrix<f64>,
}

impl PenaltyMatrix {
    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    /// The penalty value `coef' P coef`.
    pub fn quadratic_form(&self, coef: &DVector<f64>) -> f64 {
        (coef.transpose() * &self.matrix * coef)[(0, 0)]
    }
}

fn difference_coefficients(order: usize) -> Vec<f64> {
    // Row of the order-th difference operator: alternating binomials.
    let mut c = vec![1.0];
    for _ in 0..order {
        let mut next = vec![0.0; c.len() + 1];
        for (i, v) in c.iter().enumerate() {
            next[i] += v;
            next[i + 1] -= v;
        }
        c = next;
    }
    c
}

/// `P = D' D` for the order-th difference operator on `len` coefficients.
/// Null space dimension equals `order`.
pub fn difference_penalty(len: usize, order: usize) -> Result<PenaltyMatrix, BasisError> {
    if order == 0 || len <= order {
        return Err(BasisError::InvalidPenaltyOrder { order, len });
    }
    let coefs = difference_coefficients(order);
    let rows = len - order;
    let mut d: DMatrix<f64> = DMatrix::zeros(rows, len);
    for i in 0..rows {
        for (j, c) in coefs.iter().enumerate() {
            d[(i, i + j)] = *c;
        }
    }
    let matrix = d.transpose() * d;
    Ok(PenaltyMatrix { order, matrix })
}

/// Wrapped difference penalty for cyclic bases; every row wraps modulo `len`,
/// so the null space is the constant vector alone.
pub fn cyclic_difference_penalty(len: usize, order: usize) -> Result<PenaltyMatrix, BasisError> {
    if order == 0 || len <= order {
        return Err(BasisError::InvalidPenaltyOrder { order, len });
    }
    let coefs = difference_coefficients(order);
    let mut d: DMatrix<f64> = DMatrix::zeros(len, len);
    for i in 0..len {
        for (j, c) in coefs.iter().enumerate() {
            d[(i, (i + j) % len)] += *c;
        }
    }
    let matrix = d.transpose() * d;
    Ok(PenaltyMatrix { order, matrix })
}

/// Tensor product of two marginal bases; design rows are row-wise Kronecker
/// products (first basis is the slow index).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorBasis {
    pub basis1: BSplineBasis,
    pub basis2: BSplineBasis,
}

impl TensorBasis {
    pub fn new(basis1: BSplineBasis, basis2: BSplineBasis) -> Self {
        Self { basis1, basis2 }
    }

    pub fn len(&self) -> usize {
        self.basis1.len() * self.basis2.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eval_row(&self, x1: f64, x2: f64) -> Result<DVector<f64>, BasisError> {
        let l2 = self.basis2.len();
        let (f1, v1) = self.basis1.eval_local(x1)?;
        let (f2, v2) = self.basis2.eval_local(x2)?;
        let mut row = DVector::zeros(self.len());
        for (a, va) in v1.iter().enumerate() {
            let c1 = (f1 + a) % self.basis1.len();
            for (b, vb) in v2.iter().enumerate() {
                let c2 = (f2 + b) % l2;
                row[c1 * l2 + c2] += va * vb;
            }
        }
        Ok(row)
    }

    /// Design matrix over paired coordinates.
    pub fn eval_matrix(&self, x1: &[f64], x2: &[f64]) -> Result<DMatrix<f64>, BasisError> {
        if x1.len() != x2.len() {
            return Err(BasisError::LengthMismatch { left: x1.len(), right: x2.len() });
        }
        let mut out = DMatrix::zeros(x1.len(), self.len());
        for i in 0..x1.len() {
            let row = self.eval_row(x1[i], x2[i])?;
            out.row_mut(i).copy_from(&row.transpose());
        }
        Ok(out)
    }

    /// Isotropic tensor penalty `P1 (x) I + I (x) P2`, one smoothing
    /// parameter for the whole term.
    pub fn penalty(&self, order: usize) -> Result<PenaltyMatrix, BasisError> {
        let p1 = self.basis1.penalty(order)?;
        let p2 = self.basis2.penalty(order)?;
        let l1 = self.basis1.len();
        let l2 = self.basis2.len();
        let mut m = DMatrix::zeros(l1 * l2, l1 * l2);
        for a in 0..l1 {
            for b in 0..l1 {
                let v = p1.matrix[(a, b)];
                if v != 0.0 {
                    for k in 0..l2 {
                        m[(a * l2 + k, b * l2 + k)] += v;
                    }
                }
            }
        }
        for a in 0..l2 {
            for b in 0..l2 {
                let v = p2.matrix[(a, b)];
                if v != 0.0 {
                    for k in 0..l1 {
                        m[(k * l2 + a, k * l2 + b)] += v;
                    }
                }
            }
        }
        Ok(PenaltyMatrix { order, matrix: m })
    }
}

/// Sum-to-zero reparameterization: maps `k` unconstrained coefficients to
/// `k - 1` constrained ones so fitted values sum to zero over the rows the
/// transform was built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Centering {
    /// `k x (k-1)` orthonormal null-space basis of the column-sum constraint.
    pub z: DMatrix<f64>,
}

impl Centering {
    /// Expand constrained coefficients back to the full basis.
    pub fn expand(&self, constrained: &DVector<f64>) -> DVector<f64> {
        &self.z * constrained
    }

    /// Apply the transform to further design rows.
    pub fn apply(&self, design: &DMatrix<f64>) -> DMatrix<f64> {
        design * &self.z
    }

    pub fn apply_row(&self, row: &DVector<f64>) -> DVector<f64> {
        (row.transpose() * &self.z).transpose()
    }

    /// Transform a penalty into the constrained parameterization.
    pub fn transform_penalty(&self, penalty: &PenaltyMatrix) -> PenaltyMatrix {
        PenaltyMatrix {
            order: penalty.order,
            matrix: self.z.transpose() * &penalty.matrix * &self.z,
        }
    }
}

/// Build the centering transform from a training design and return the
/// constrained design together with the reusable transform.
///
/// The constraint is `1' X gamma = 0`; a Householder reflection sends the
/// column-sum vector onto the first coordinate axis and the remaining
/// reflected axes span the feasible coefficients.
pub fn centering_transform(design: &DMatrix<f64>) -> Result<(DMatrix<f64>, Centering), BasisError> {
    let k = design.ncols();
    if k < 2 {
        return Err(BasisError::TooFewColumns(k));
    }
    let mut c = DVector::zeros(k);
    for j in 0..k {
        c[j] = design.column(j).sum();
    }
    let norm = c.norm();
    let scale = design.nrows().max(1) as f64;
    if norm <= 1e-12 * scale {
        return Err(BasisError::DegenerateConstraint);
    }
    // Householder vector v = c + sign(c0) * |c| * e0.
    let mut v = c.clone();
    v[0] += norm * if c[0] >= 0.0 { 1.0 } else { -1.0 };
    let vtv = v.dot(&v);
    let mut z = DMatrix::zeros(k, k - 1);
    for col in 1..k {
        // Column `col` of H = I - 2 v v' / (v'v).
        let factor = 2.0 * v[col] / vtv;
        for row in 0..k {
            let e = if row == col { 1.0 } else { 0.0 };
            z[(row, col - 1)] = e - factor * v[row];
        }
    }
    let constrained = design * &z;
    Ok((constrained, Centering { z }))
}
