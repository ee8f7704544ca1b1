//! Small dense linear algebra helpers on top of `nalgebra`.

use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::math;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Largest dimension handled by the allocation-free [`GaussianFactor`].
pub const MAX_DIM: usize = 3;

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Cholesky factorization with a single jitter retry of `1e-9 * trace / D`.
pub fn cholesky_jittered(cov: &Matrix, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite { context });
    }
    if let Some(c) = Cholesky::new(cov.clone()) {
        return Ok(c);
    }
    let d = cov.nrows();
    let jitter = 1e-9 * cov.trace() / d as f64;
    if jitter > 0.0 && jitter.is_finite() {
        let shifted = cov + Matrix::identity(d, d) * jitter;
        if let Some(c) = Cholesky::new(shifted) {
            return Ok(c);
        }
    }
    Err(Error::NotPositiveDefinite { context })
}

pub fn is_spd(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
        && (m - m.transpose()).amax() <= 1e-9 * (1.0 + m.amax())
        && Cholesky::new(symmetrize(m)).is_some()
}

pub fn spd_inverse(m: &Matrix, context: &'static str) -> Result<Matrix> {
    let c = cholesky_jittered(m, context)?;
    Ok(symmetrize(&c.inverse()))
}

pub fn log_det_spd(m: &Matrix, context: &'static str) -> Result<f64> {
    let c = cholesky_jittered(m, context)?;
    Ok(2.0 * c.l().diagonal().iter().map(|v| math::ln(*v)).sum::<f64>())
}

/// A Gaussian with a cached lower Cholesky factor, evaluated without allocation.
#[derive(Debug, Clone)]
pub struct GaussianFactor {
    dim: usize,
    mean: [f64; MAX_DIM],
    lower: [[f64; MAX_DIM]; MAX_DIM],
    log_norm: f64,
}

impl GaussianFactor {
    pub fn new(mean: &Vector, cov: &Matrix, context: &'static str) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::ShapeMismatch {
                context,
                expected: MAX_DIM,
                found: dim,
            });
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::ShapeMismatch {
                context,
                expected: dim,
                found: cov.nrows(),
            });
        }
        let chol = cholesky_jittered(cov, context)?;
        let l = chol.l();
        let mut lower = [[0.0; MAX_DIM]; MAX_DIM];
        let mut m = [0.0; MAX_DIM];
        let mut log_det_half = 0.0;
        for i in 0..dim {
            m[i] = mean[i];
            for j in 0..=i {
                lower[i][j] = l[(i, j)];
            }
            log_det_half += math::ln(l[(i, i)]);
        }
        Ok(Self {
            dim,
            mean: m,
            lower,
            log_norm: -0.5 * dim as f64 * math::LN_2PI - log_det_half,
        })
    }

    /// Log density at `x` (must have length `dim`).
    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        let mut y = [0.0; MAX_DIM];
        let mut quad = 0.0;
        for i in 0..self.dim {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= self.lower[i][j] * y[j];
            }
            y[i] = s / self.lower[i][i];
            quad += y[i] * y[i];
        }
        self.log_norm - 0.5 * quad
    }
}

/// Log density of `N(x | mean, var * I)`.
pub fn isotropic_log_pdf(x: &[f64], mean: &[f64], var: f64) -> f64 {
    let d = x.len() as f64;
    let sq: f64 = x.iter().zip(mean).map(|(a, b)| (a - b) * (a - b)).sum();
    -0.5 * d * (math::LN_2PI + math::ln(var)) - 0.5 * sq / var
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn mean_of<'a, I>(dim: usize, items: I) -> Option<Vector>
where
    I: IntoIterator<Item = &'a Vector>,
{
    let mut acc = Vector::zeros(dim);
    let mut n = 0usize;
    for v in items {
        acc += v;
        n += 1;
    }
    (n > 0).then(|| acc / n as f64)
}

/// Unbiased sample covariance (`1/(n-1)` normalization); `None` for fewer than two items.
pub fn sample_covariance(items: &[&Vector], mean: &Vector) -> Option<Matrix> {
    if items.len() < 2 {
        return None;
    }
    let d = mean.len();
    let mut acc = Matrix::zeros(d, d);
    for v in items {
        let r = *v - mean;
        acc += &r * r.transpose();
    }
    Some(acc / (items.len() - 1) as f64)
}

pub fn rotation_2d(angle: f64) -> Matrix {
    let (s, c) = (math::sin(angle), math::cos(angle));
    Matrix::from_row_slice(2, 2, &[c, -s, s, c])
}

/// Rodrigues rotation about a unit `axis`.
pub fn rotation_axis_angle(axis: [f64; 3], angle: f64) -> Matrix {
    let n = math::sqrt(axis.iter().map(|a| a * a).sum());
    if n == 0.0 || angle == 0.0 {
        return Matrix::identity(3, 3);
    }
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let k = Matrix::from_row_slice(3, 3, &[0.0, -z, y, z, 0.0, -x, -y, x, 0.0]);
    let (s, c) = (math::sin(angle), math::cos(angle));
    Matrix::identity(3, 3) + &k * s + (&k * &k) * (1.0 - c)
}

/// Geodesic angle of a rotation from the identity, in `[0, π]`.
pub fn rotation_angle(r: &Matrix) -> f64 {
    match r.nrows() {
        2 => math::atan2(r[(1, 0)], r[(0, 0)]).abs(),
        _ => math::acos((r.trace() - 1.0) / 2.0),
    }
}

pub fn is_rotation(r: &Matrix, tol: f64) -> bool {
    let d = r.nrows();
    if r.ncols() != d {
        return false;
    }
    let orth = (r.transpose() * r - Matrix::identity(d, d)).amax();
    orth <= tol && (r.determinant() - 1.0).abs() <= tol
}

/// Sample from `N(P^{-1} m, P^{-1})` given precision `P` and linear term `m`.
pub fn sample_from_precision(
    precision: &Matrix,
    linear: &Vector,
    standard_normals: &[f64],
    context: &'static str,
) -> Result<(Vector, Vector)> {
    let chol = cholesky_jittered(&symmetrize(precision), context)?;
    let mean = chol.solve(linear);
    let z = Vector::from_column_slice(standard_normals);
    // P = L Lᵀ, so L^{-T} z has covariance P^{-1}.
    let lt = chol.l().transpose();
    let offset = lt
        .solve_upper_triangular(&z)
        .ok_or(Error::NotPositiveDefinite { context })?;
    Ok((&mean + offset, mean))
}

pub fn to_vec(v: &Vector) -> Vec<f64> {
    v.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_factor_matches_closed_form_scalar() {
        let g = GaussianFactor::new(&Vector::from_vec(alloc::vec![0.0]), &Matrix::identity(1, 1), "t").unwrap();
        assert!((g.log_pdf(&[0.0]) + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn jitter_rescues_semidefinite() {
        let m = Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(cholesky_jittered(&m, "t").is_ok());
        let z = Matrix::zeros(2, 2);
        assert!(cholesky_jittered(&z, "t").is_err());
    }

    #[test]
    fn rotation_helpers() {
        let r = rotation_2d(0.3);
        assert!(is_rotation(&r, 1e-12));
        assert!((rotation_angle(&r) - 0.3).abs() < 1e-12);
        let r3 = rotation_axis_angle([1.0, 2.0, -0.5], 0.7);
        assert!(is_rotation(&r3, 1e-12));
        assert!((rotation_angle(&r3) - 0.7).abs() < 1e-12);
    }
}
