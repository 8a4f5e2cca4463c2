//! Domain types for partially observed matrices with biclustering structure,
//! plus the masked-norm primitives every other module builds on.
//!
//! Conventions fixed here:
//! - unobserved entries are stored as literal `0.0` next to a boolean mask,
//!   so masked sums never touch garbage;
//! - symmetric matrices are stored densely as full squares with a zero
//!   diagonal, and their masks have a `false` diagonal (diagonal cells never
//!   participate in masked sums);
//! - cluster labels are 0-based in memory and 1-based in serialized files.

use ndarray::Array2;

use crate::error::{Error, Result};

/// A data matrix together with its observation mask.
///
/// `mask[i][j] == true` means entry `(i, j)` was observed. Construction
/// normalizes the invariants: unobserved values are zeroed, and in the
/// symmetric case the diagonal is zeroed and excluded from the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMatrix {
    values: Array2<f64>,
    mask: Array2<bool>,
    symmetric: bool,
}

impl ObservedMatrix {
    pub fn new(mut values: Array2<f64>, mut mask: Array2<bool>, symmetric: bool) -> Result<Self> {
        if values.dim() != mask.dim() {
            return Err(Error::DimensionMismatch(format!(
                "values {:?} vs mask {:?}",
                values.dim(),
                mask.dim()
            )));
        }
        if symmetric {
            let (n1, n2) = values.dim();
            if n1 != n2 {
                return Err(Error::InvalidArgument(format!(
                    "symmetric matrix must be square, got {n1}x{n2}"
                )));
            }
            for i in 0..n1 {
                for j in (i + 1)..n1 {
                    if values[[i, j]] != values[[j, i]] {
                        return Err(Error::InvalidArgument(format!(
                            "values not symmetric at ({i},{j})"
                        )));
                    }
                    if mask[[i, j]] != mask[[j, i]] {
                        return Err(Error::InvalidArgument(format!(
                            "mask not symmetric at ({i},{j})"
                        )));
                    }
                }
                values[[i, i]] = 0.0;
                mask[[i, i]] = false;
            }
        }
        for (v, &m) in values.iter_mut().zip(mask.iter()) {
            if !m {
                *v = 0.0;
            }
        }
        Ok(Self { values, mask, symmetric })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn mask(&self) -> &Array2<bool> {
        &self.mask
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    /// (rows, columns)
    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Row and column cluster labels. Labels are 0-based and always below the
/// declared cluster counts; for symmetric models `z1` and `z2` are the same
/// vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiclusterAssignment {
    z1: Vec<usize>,
    z2: Vec<usize>,
    k1: usize,
    k2: usize,
}

impl BiclusterAssignment {
    pub fn asymmetric(z1: Vec<usize>, z2: Vec<usize>, k1: usize, k2: usize) -> Result<Self> {
        if k1 == 0 || k2 == 0 {
            return Err(Error::InvalidArgument("cluster counts must be >= 1".into()));
        }
        if let Some(&l) = z1.iter().find(|&&l| l >= k1) {
            return Err(Error::InvalidArgument(format!("row label {l} out of range 0..{k1}")));
        }
        if let Some(&l) = z2.iter().find(|&&l| l >= k2) {
            return Err(Error::InvalidArgument(format!("column label {l} out of range 0..{k2}")));
        }
        Ok(Self { z1, z2, k1, k2 })
    }

    pub fn symmetric(z: Vec<usize>, k: usize) -> Result<Self> {
        Self::asymmetric(z.clone(), z, k, k)
    }

    pub fn z1(&self) -> &[usize] {
        &self.z1
    }

    pub fn z2(&self) -> &[usize] {
        &self.z2
    }

    pub fn k1(&self) -> usize {
        self.k1
    }

    pub fn k2(&self) -> usize {
        self.k2
    }

    pub fn n1(&self) -> usize {
        self.z1.len()
    }

    pub fn n2(&self) -> usize {
        self.z2.len()
    }
}

/// The block-value matrix `Q` with its entry bound `M` (`|q[a][b]| <= M`).
#[derive(Debug, Clone, PartialEq)]
pub struct BlockValueMatrix {
    q: Array2<f64>,
    bound: f64,
}

impl BlockValueMatrix {
    pub fn new(q: Array2<f64>, bound: f64) -> Result<Self> {
        if bound < 0.0 || !bound.is_finite() {
            return Err(Error::InvalidArgument(format!("bound must be finite and >= 0, got {bound}")));
        }
        if let Some(v) = q.iter().find(|v| v.abs() > bound || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("block value {v} outside [-{bound}, {bound}]")));
        }
        Ok(Self { q, bound })
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// (k1, k2)
    pub fn dims(&self) -> (usize, usize) {
        self.q.dim()
    }
}

/// Which parameter space a fit runs over: rectangular, symmetric with zero
/// diagonal, or the nonnegative symmetric block-probability space used for
/// networks (block values in `[0, rho]`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelSpec {
    Asymmetric { n1: usize, n2: usize, k1: usize, k2: usize, bound: f64 },
    Symmetric { n: usize, k: usize, bound: f64 },
    Sbm { n: usize, k: usize, rho: f64 },
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let ((n1, n2), (k1, k2)) = (self.dims(), self.clusters());
        if k1 < 1 || k1 > n1 || k2 < 1 || k2 > n2 {
            return Err(Error::InvalidArgument(format!(
                "cluster counts ({k1}, {k2}) must satisfy 1 <= k <= n for dims ({n1}, {n2})"
            )));
        }
        match *self {
            ModelSpec::Asymmetric { bound, .. } | ModelSpec::Symmetric { bound, .. } => {
                if !(bound > 0.0) || !bound.is_finite() {
                    return Err(Error::InvalidArgument(format!("bound M must be > 0, got {bound}")));
                }
            }
            ModelSpec::Sbm { rho, .. } => {
                if !(rho > 0.0 && rho <= 1.0) {
                    return Err(Error::InvalidArgument(format!("rho must lie in (0, 1], got {rho}")));
                }
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> (usize, usize) {
        match *self {
            ModelSpec::Asymmetric { n1, n2, .. } => (n1, n2),
            ModelSpec::Symmetric { n, .. } | ModelSpec::Sbm { n, .. } => (n, n),
        }
    }

    pub fn clusters(&self) -> (usize, usize) {
        match *self {
            ModelSpec::Asymmetric { k1, k2, .. } => (k1, k2),
            ModelSpec::Symmetric { k, .. } | ModelSpec::Sbm { k, .. } => (k, k),
        }
    }

    /// The entry bound: `M` for the rectangular and symmetric spaces, `rho`
    /// for the block-probability space.
    pub fn bound(&self) -> f64 {
        match *self {
            ModelSpec::Asymmetric { bound, .. } | ModelSpec::Symmetric { bound, .. } => bound,
            ModelSpec::Sbm { rho, .. } => rho,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self, ModelSpec::Asymmetric { .. })
    }
}

/// Expands block values into the full mean matrix: `theta[i][j] =
/// q[z1(i)][z2(j)]`, with a zero diagonal in the symmetric case.
pub fn materialize_theta(
    assignment: &BiclusterAssignment,
    q: &BlockValueMatrix,
    spec: &ModelSpec,
) -> Result<Array2<f64>> {
    let (n1, n2) = spec.dims();
    let (k1, k2) = spec.clusters();
    if assignment.n1() != n1 || assignment.n2() != n2 {
        return Err(Error::DimensionMismatch(format!(
            "assignment dims ({}, {}) vs spec dims ({n1}, {n2})",
            assignment.n1(),
            assignment.n2()
        )));
    }
    if assignment.k1() != k1 || assignment.k2() != k2 || q.dims() != (k1, k2) {
        return Err(Error::DimensionMismatch(format!(
            "cluster counts: assignment ({}, {}), q {:?}, spec ({k1}, {k2})",
            assignment.k1(),
            assignment.k2(),
            q.dims()
        )));
    }
    let qv = q.q();
    if spec.is_symmetric() {
        let mut theta = Array2::zeros((n1, n1));
        for i in 0..n1 {
            for j in (i + 1)..n1 {
                let v = qv[[assignment.z1[i], assignment.z2[j]]];
                theta[[i, j]] = v;
                theta[[j, i]] = v;
            }
        }
        Ok(theta)
    } else {
        Ok(Array2::from_shape_fn((n1, n2), |(i, j)| {
            qv[[assignment.z1[i], assignment.z2[j]]]
        }))
    }
}

/// Sum of squared entries of `a` over the cells where `mask` is true.
pub fn restricted_sq_norm(a: &Array2<f64>, mask: &Array2<bool>) -> Result<f64> {
    if a.dim() != mask.dim() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.dim(), mask.dim())));
    }
    Ok(a.iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .map(|(v, _)| v * v)
        .sum())
}

/// Sum of elementwise products of `a` and `b` over the cells where `mask` is
/// true.
pub fn restricted_inner(a: &Array2<f64>, b: &Array2<f64>, mask: &Array2<bool>) -> Result<f64> {
    if a.dim() != b.dim() || a.dim() != mask.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?} vs {:?}",
            a.dim(),
            b.dim(),
            mask.dim()
        )));
    }
    Ok(a.iter()
        .zip(b.iter())
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .map(|((x, y), _)| x * y)
        .sum())
}
